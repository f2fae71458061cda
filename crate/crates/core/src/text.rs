//! Shared tokenizer for the text grammars (polynomials, differential forms,
//! Lie elements).

use num_bigint::BigInt;

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(BigInt),
    Plus,
    Minus,
    Star,
    Caret,
    Slash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

/// Token stream with one-token lookahead and position-carrying errors.
pub(crate) struct Lexer {
    toks: Vec<Spanned>,
    pos: usize,
    end_line: usize,
    end_col: usize,
}

impl Lexer {
    pub fn new(input: &str) -> Result<Lexer> {
        let mut toks = Vec::new();
        let mut line = 1usize;
        let mut col = 1usize;
        let mut chars = input.chars().peekable();
        while let Some(&c) = chars.peek() {
            let (tline, tcol) = (line, col);
            let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
                let c = chars.next().unwrap();
                if c == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                c
            };
            if c.is_whitespace() {
                bump(&mut chars);
                continue;
            }
            let tok = match c {
                '+' => {
                    bump(&mut chars);
                    Tok::Plus
                }
                '-' => {
                    bump(&mut chars);
                    Tok::Minus
                }
                '*' => {
                    bump(&mut chars);
                    Tok::Star
                }
                '^' => {
                    bump(&mut chars);
                    Tok::Caret
                }
                '/' => {
                    bump(&mut chars);
                    Tok::Slash
                }
                '(' => {
                    bump(&mut chars);
                    Tok::LParen
                }
                ')' => {
                    bump(&mut chars);
                    Tok::RParen
                }
                '[' => {
                    bump(&mut chars);
                    Tok::LBracket
                }
                ']' => {
                    bump(&mut chars);
                    Tok::RBracket
                }
                ',' => {
                    bump(&mut chars);
                    Tok::Comma
                }
                c if c.is_ascii_digit() => {
                    let mut digits = String::new();
                    while matches!(chars.peek(), Some(d) if d.is_ascii_digit()) {
                        digits.push(bump(&mut chars));
                    }
                    Tok::Int(digits.parse::<BigInt>().expect("digit run"))
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut name = String::new();
                    while matches!(chars.peek(), Some(d) if d.is_ascii_alphanumeric() || *d == '_')
                    {
                        name.push(bump(&mut chars));
                    }
                    Tok::Ident(name)
                }
                other => return Err(Error::parse(tline, tcol, format!("unexpected `{other}`"))),
            };
            toks.push(Spanned { tok, line: tline, col: tcol });
        }
        Ok(Lexer { toks, pos: 0, end_line: line, end_col: col })
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    pub fn next(&mut self) -> Option<Spanned> {
        let s = self.toks.get(self.pos).cloned();
        if s.is_some() {
            self.pos += 1;
        }
        s
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    pub fn error(&self, msg: impl Into<String>) -> Error {
        let (line, col) = self.here();
        Error::parse(line, col, msg)
    }

    pub fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.toks.len()
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error("trailing input"))
        }
    }
}
