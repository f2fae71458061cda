//! Sectioned plain-text problem specs.
//!
//! A spec declares either an evolution equation or an explicit list of form
//! generators, plus bounds for the connection ansatz, the holonomy level,
//! and an optional matrix representation. The grammar is line based:
//!
//! ```text
//! # comment
//! [problem]
//! variable = u
//! rhs = u0*u1 + u2
//! parameters = eps, nu        # optional
//!
//! [ideal]                     # alternative to [problem]
//! base = x, t
//! jets = u:1
//! form = du0^dt - u1*dx^dt
//! form = du0^dx + u0*du0^dt + du1^dt
//!
//! [ansatz]
//! x_degree = 1
//! t_degree = 2
//!
//! [holonomy]
//! level = 0
//!
//! [rep]
//! dim = 2
//! matrices = burgers_rep.json # path relative to the spec file
//! lambda = symbolic           # or a rational value like -3/2
//! ```
//!
//! Unknown sections and keys are rejected; every diagnostic carries the
//! line and column of the offending token. `render` writes the canonical
//! form, and `parse(render(spec)) == spec` for every valid spec.

use std::fmt;
use std::path::PathBuf;

/// Parse failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, col {}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for SpecError {}

fn err<T>(line: usize, col: usize, message: impl Into<String>) -> Result<T, SpecError> {
    Err(SpecError { line, col, message: message.into() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemSection {
    pub variable: String,
    pub rhs: String,
    pub parameters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdealSection {
    pub base: Vec<String>,
    /// `(variable, highest jet order)` pairs.
    pub jets: Vec<(String, u32)>,
    pub parameters: Vec<String>,
    pub forms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnsatzSection {
    pub x_degree: u32,
    pub t_degree: u32,
}

impl Default for AnsatzSection {
    fn default() -> Self {
        AnsatzSection { x_degree: 1, t_degree: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HolonomySection {
    pub level: u32,
}

/// How the spectral parameter is treated when assembling the Lax pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LambdaPolicy {
    Symbolic,
    /// Rational value substituted before the curvature check.
    Value(String),
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaPolicy::Symbolic => f.write_str("symbolic"),
            LambdaPolicy::Value(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepSection {
    pub dim: usize,
    /// JSON file with named matrices, relative to the spec file.
    pub matrices: Option<PathBuf>,
    pub lambda: LambdaPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemSpec {
    pub problem: Option<ProblemSection>,
    pub ideal: Option<IdealSection>,
    pub ansatz: AnsatzSection,
    pub holonomy: HolonomySection,
    pub rep: Option<RepSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Problem,
    Ideal,
    Ansatz,
    Holonomy,
    Rep,
}

/// One `key = value` line with positions for diagnostics.
struct KeyLine {
    line: usize,
    key_col: usize,
    value_col: usize,
    key: String,
    value: String,
}

pub fn parse_spec(text: &str) -> Result<ProblemSpec, SpecError> {
    let mut current: Option<(Section, usize)> = None;
    let mut problem: Vec<KeyLine> = Vec::new();
    let mut ideal: Vec<KeyLine> = Vec::new();
    let mut ansatz: Vec<KeyLine> = Vec::new();
    let mut holonomy: Vec<KeyLine> = Vec::new();
    let mut rep: Vec<KeyLine> = Vec::new();
    let mut seen: Vec<Section> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col = stripped.find(|c: char| !c.is_whitespace()).unwrap_or(0) + 1;
        if let Some(name) = trimmed.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(line_no, col, "unterminated section header");
            };
            let section = match name {
                "problem" => Section::Problem,
                "ideal" => Section::Ideal,
                "ansatz" => Section::Ansatz,
                "holonomy" => Section::Holonomy,
                "rep" => Section::Rep,
                other => return err(line_no, col, format!("unknown section `[{other}]`")),
            };
            if seen.contains(&section) {
                return err(line_no, col, format!("duplicate section `[{name}]`"));
            }
            seen.push(section);
            current = Some((section, line_no));
            continue;
        }
        let Some(eq) = stripped.find('=') else {
            return err(line_no, col, "expected `key = value`");
        };
        let key = stripped[..eq].trim().to_string();
        let value = stripped[eq + 1..].trim().to_string();
        if key.is_empty() {
            return err(line_no, col, "missing key before `=`");
        }
        let value_col = eq + 2 + stripped[eq + 1..].len() - stripped[eq + 1..].trim_start().len();
        let entry = KeyLine { line: line_no, key_col: col, value_col, key, value };
        match current {
            None => return err(line_no, col, "key outside of any section"),
            Some((Section::Problem, _)) => problem.push(entry),
            Some((Section::Ideal, _)) => ideal.push(entry),
            Some((Section::Ansatz, _)) => ansatz.push(entry),
            Some((Section::Holonomy, _)) => holonomy.push(entry),
            Some((Section::Rep, _)) => rep.push(entry),
        }
    }

    let problem = parse_problem(&problem, seen.contains(&Section::Problem))?;
    let ideal = parse_ideal(&ideal, seen.contains(&Section::Ideal))?;
    if problem.is_none() && ideal.is_none() {
        return err(1, 1, "no PDE or generators declared");
    }
    if problem.is_some() && ideal.is_some() {
        return err(1, 1, "sections `[problem]` and `[ideal]` are mutually exclusive");
    }
    Ok(ProblemSpec {
        problem,
        ideal,
        ansatz: parse_ansatz(&ansatz)?,
        holonomy: parse_holonomy(&holonomy)?,
        rep: parse_rep(&rep, seen.contains(&Section::Rep))?,
    })
}

/// Rejects duplicates of `key` and returns its single value line.
fn take<'a>(
    lines: &'a [KeyLine],
    key: &str,
) -> Result<Option<&'a KeyLine>, SpecError> {
    let mut found: Option<&KeyLine> = None;
    for l in lines.iter().filter(|l| l.key == key) {
        if found.is_some() {
            return err(l.line, l.key_col, format!("duplicate key `{key}`"));
        }
        found = Some(l);
    }
    Ok(found)
}

fn reject_unknown(lines: &[KeyLine], known: &[&str], section: &str) -> Result<(), SpecError> {
    for l in lines {
        if !known.contains(&l.key.as_str()) {
            return err(
                l.line,
                l.key_col,
                format!("unknown key `{}` in section `[{section}]`", l.key),
            );
        }
    }
    Ok(())
}

fn comma_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_u32(l: &KeyLine) -> Result<u32, SpecError> {
    l.value
        .parse()
        .map_err(|_| SpecError {
            line: l.line,
            col: l.value_col,
            message: format!("`{}` is not a nonnegative integer", l.value),
        })
}

fn parse_problem(
    lines: &[KeyLine],
    present: bool,
) -> Result<Option<ProblemSection>, SpecError> {
    if !present {
        return Ok(None);
    }
    reject_unknown(lines, &["variable", "rhs", "parameters"], "problem")?;
    let variable = take(lines, "variable")?
        .map(|l| l.value.clone())
        .ok_or(SpecError { line: 1, col: 1, message: "missing key `variable` in `[problem]`".into() })?;
    let rhs = take(lines, "rhs")?
        .map(|l| l.value.clone())
        .ok_or(SpecError { line: 1, col: 1, message: "missing key `rhs` in `[problem]`".into() })?;
    let parameters = take(lines, "parameters")?.map(|l| comma_list(&l.value)).unwrap_or_default();
    Ok(Some(ProblemSection { variable, rhs, parameters }))
}

fn parse_ideal(lines: &[KeyLine], present: bool) -> Result<Option<IdealSection>, SpecError> {
    if !present {
        return Ok(None);
    }
    reject_unknown(lines, &["base", "jets", "parameters", "form"], "ideal")?;
    let base = take(lines, "base")?
        .map(|l| comma_list(&l.value))
        .ok_or(SpecError { line: 1, col: 1, message: "missing key `base` in `[ideal]`".into() })?;
    let mut jets = Vec::new();
    if let Some(l) = take(lines, "jets")? {
        for item in comma_list(&l.value) {
            let Some((var, order)) = item.split_once(':') else {
                return err(l.line, l.value_col, format!("jet declaration `{item}` needs the form `var:order`"));
            };
            let order = order.trim().parse().map_err(|_| SpecError {
                line: l.line,
                col: l.value_col,
                message: format!("jet order `{}` is not a nonnegative integer", order.trim()),
            })?;
            jets.push((var.trim().to_string(), order));
        }
    }
    let parameters = take(lines, "parameters")?.map(|l| comma_list(&l.value)).unwrap_or_default();
    let forms: Vec<String> =
        lines.iter().filter(|l| l.key == "form").map(|l| l.value.clone()).collect();
    if forms.is_empty() {
        return err(1, 1, "section `[ideal]` declares no `form`");
    }
    Ok(Some(IdealSection { base, jets, parameters, forms }))
}

fn parse_ansatz(lines: &[KeyLine]) -> Result<AnsatzSection, SpecError> {
    reject_unknown(lines, &["x_degree", "t_degree"], "ansatz")?;
    let mut out = AnsatzSection::default();
    if let Some(l) = take(lines, "x_degree")? {
        out.x_degree = parse_u32(l)?;
    }
    if let Some(l) = take(lines, "t_degree")? {
        out.t_degree = parse_u32(l)?;
    }
    Ok(out)
}

fn parse_holonomy(lines: &[KeyLine]) -> Result<HolonomySection, SpecError> {
    reject_unknown(lines, &["level"], "holonomy")?;
    let mut out = HolonomySection::default();
    if let Some(l) = take(lines, "level")? {
        out.level = parse_u32(l)?;
    }
    Ok(out)
}

fn parse_rep(lines: &[KeyLine], present: bool) -> Result<Option<RepSection>, SpecError> {
    if !present {
        return Ok(None);
    }
    reject_unknown(lines, &["dim", "matrices", "lambda"], "rep")?;
    let dim = match take(lines, "dim")? {
        Some(l) => {
            let n = parse_u32(l)? as usize;
            if n == 0 {
                return err(l.line, l.value_col, "representation dimension must be positive");
            }
            n
        }
        None => 2,
    };
    let matrices = take(lines, "matrices")?.map(|l| PathBuf::from(&l.value));
    let lambda = match take(lines, "lambda")? {
        Some(l) if l.value == "symbolic" => LambdaPolicy::Symbolic,
        Some(l) => LambdaPolicy::Value(l.value.clone()),
        None => LambdaPolicy::Symbolic,
    };
    Ok(Some(RepSection { dim, matrices, lambda }))
}

/// Canonical serialization; `parse_spec` inverts it exactly.
pub fn render_spec(spec: &ProblemSpec) -> String {
    let mut out = String::new();
    if let Some(p) = &spec.problem {
        out.push_str("[problem]\n");
        out.push_str(&format!("variable = {}\n", p.variable));
        out.push_str(&format!("rhs = {}\n", p.rhs));
        if !p.parameters.is_empty() {
            out.push_str(&format!("parameters = {}\n", p.parameters.join(", ")));
        }
        out.push('\n');
    }
    if let Some(i) = &spec.ideal {
        out.push_str("[ideal]\n");
        out.push_str(&format!("base = {}\n", i.base.join(", ")));
        if !i.jets.is_empty() {
            let jets: Vec<String> =
                i.jets.iter().map(|(v, o)| format!("{v}:{o}")).collect();
            out.push_str(&format!("jets = {}\n", jets.join(", ")));
        }
        if !i.parameters.is_empty() {
            out.push_str(&format!("parameters = {}\n", i.parameters.join(", ")));
        }
        for f in &i.forms {
            out.push_str(&format!("form = {f}\n"));
        }
        out.push('\n');
    }
    out.push_str("[ansatz]\n");
    out.push_str(&format!("x_degree = {}\n", spec.ansatz.x_degree));
    out.push_str(&format!("t_degree = {}\n\n", spec.ansatz.t_degree));
    out.push_str("[holonomy]\n");
    out.push_str(&format!("level = {}\n", spec.holonomy.level));
    if let Some(r) = &spec.rep {
        out.push('\n');
        out.push_str("[rep]\n");
        out.push_str(&format!("dim = {}\n", r.dim));
        if let Some(m) = &r.matrices {
            out.push_str(&format!("matrices = {}\n", m.display()));
        }
        out.push_str(&format!("lambda = {}\n", r.lambda));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BURGERS: &str = "\
# quadratic flow
[problem]
variable = u
rhs = u0*u1 + u2

[ansatz]
x_degree = 1
t_degree = 2

[holonomy]
level = 0

[rep]
dim = 2
matrices = burgers_rep.json
lambda = symbolic
";

    #[test]
    fn parses_a_full_problem_spec() {
        let spec = parse_spec(BURGERS).unwrap();
        let p = spec.problem.as_ref().unwrap();
        assert_eq!(p.variable, "u");
        assert_eq!(p.rhs, "u0*u1 + u2");
        assert!(p.parameters.is_empty());
        assert_eq!(spec.ansatz, AnsatzSection { x_degree: 1, t_degree: 2 });
        assert_eq!(spec.holonomy.level, 0);
        let r = spec.rep.as_ref().unwrap();
        assert_eq!(r.dim, 2);
        assert_eq!(r.matrices.as_deref(), Some(std::path::Path::new("burgers_rep.json")));
        assert_eq!(r.lambda, LambdaPolicy::Symbolic);
    }

    #[test]
    fn round_trips_through_render() {
        let spec = parse_spec(BURGERS).unwrap();
        assert_eq!(parse_spec(&render_spec(&spec)).unwrap(), spec);

        let explicit = "\
[ideal]
base = x, t
jets = u:0
form = u0*dx
";
        let spec = parse_spec(explicit).unwrap();
        assert_eq!(parse_spec(&render_spec(&spec)).unwrap(), spec);
    }

    #[test]
    fn empty_input_reports_nothing_declared() {
        let e = parse_spec("").unwrap_err();
        assert_eq!(e.message, "no PDE or generators declared");
        let e = parse_spec("# only a comment\n").unwrap_err();
        assert_eq!(e.message, "no PDE or generators declared");
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected_with_positions() {
        let e = parse_spec("[problem]\nvariable = u\nrhs = u1\nflux = 3\n").unwrap_err();
        assert_eq!((e.line, e.col), (4, 1));
        assert!(e.message.contains("unknown key `flux`"));

        let e = parse_spec("[conserved]\n").unwrap_err();
        assert_eq!((e.line, e.col), (1, 1));
        assert!(e.message.contains("unknown section"));

        let e = parse_spec("[problem]\nvariable = u\nrhs = u1\n  rhs = u2\n").unwrap_err();
        assert_eq!((e.line, e.col), (4, 3));
        assert!(e.message.contains("duplicate key `rhs`"));
    }

    #[test]
    fn bad_numbers_point_at_the_value() {
        let e = parse_spec("[problem]\nvariable = u\nrhs = u1\n\n[holonomy]\nlevel = moon\n")
            .unwrap_err();
        assert_eq!((e.line, e.col), (6, 9));
        assert!(e.message.contains("moon"));
    }

    #[test]
    fn problem_and_ideal_exclude_each_other() {
        let text = "[problem]\nvariable = u\nrhs = u1\n\n[ideal]\nbase = x, t\nform = u0*dx\n";
        let e = parse_spec(text).unwrap_err();
        assert!(e.message.contains("mutually exclusive"));
    }
}
