//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! A [`ScalarPoly`] is a map from monomials (sparse exponent vectors over a
//! [`Context`]) to nonzero `BigRational` coefficients. All ring operations
//! are exact; there is no floating point anywhere in the crate.
//!
//! Text grammar (both for [`fmt::Display`] and [`ScalarPoly::parse`]):
//!
//! ```text
//! poly     := ["-"] term { ("+" | "-") term }
//! term     := factor { "*" factor }
//! factor   := rational | coordinate ["^" integer] | "(" poly ")" ["^" integer]
//! rational := integer ["/" integer]
//! ```
//!
//! so `3/2*u0^2*u1 - x` denotes (3/2) u0^2 u1 - x.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};

use crate::context::{Context, CoordId};
use crate::error::Error;
use crate::text::{Lexer, Tok};
use crate::Result;

/// Exact rational coefficient.
pub type Rat = num_rational::BigRational;

/// Rational `n/d` from machine integers.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Integer rational.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Sparse exponent vector, sorted by coordinate with zero exponents removed.
///
/// Monomials are ordered by graded lexicographic order: total degree first,
/// ties broken lexicographically with earlier coordinates dominating. This is
/// a proper monomial order (compatible with multiplication), which the exact
/// division routine depends on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex(Vec<(CoordId, u32)>);

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match self.total_degree().cmp(&other.total_degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let mut a = self.0.iter();
        let mut b = other.0.iter();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(ca, ea)), Some(&(cb, eb))) => {
                    // A positive exponent on an earlier coordinate wins.
                    if ca != cb {
                        return if ca < cb { Ordering::Greater } else { Ordering::Less };
                    }
                    if ea != eb {
                        return ea.cmp(&eb);
                    }
                }
            }
        }
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl MultiIndex {
    pub fn unit() -> MultiIndex {
        MultiIndex(Vec::new())
    }

    pub fn of(coord: CoordId) -> MultiIndex {
        MultiIndex(vec![(coord, 1)])
    }

    pub fn from_pairs(pairs: &[(CoordId, u32)]) -> MultiIndex {
        let mut map = BTreeMap::new();
        for &(c, e) in pairs {
            if e > 0 {
                *map.entry(c).or_insert(0) += e;
            }
        }
        MultiIndex(map.into_iter().collect())
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponents(&self) -> &[(CoordId, u32)] {
        &self.0
    }

    pub fn degree_of(&self, coord: CoordId) -> u32 {
        self.0
            .iter()
            .find(|(c, _)| *c == coord)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn mul(&self, other: &MultiIndex) -> MultiIndex {
        let mut map: BTreeMap<CoordId, u32> = self.0.iter().copied().collect();
        for &(c, e) in &other.0 {
            *map.entry(c).or_insert(0) += e;
        }
        MultiIndex(map.into_iter().collect())
    }

    pub fn divides(&self, other: &MultiIndex) -> bool {
        self.0.iter().all(|&(c, e)| other.degree_of(c) >= e)
    }

    /// Quotient `other / self`; caller must check `divides` first.
    pub fn quotient_of(&self, other: &MultiIndex) -> MultiIndex {
        let mut out = Vec::new();
        for &(c, e) in &other.0 {
            let q = e - self.degree_of(c);
            if q > 0 {
                out.push((c, q));
            }
        }
        MultiIndex(out)
    }

    /// Splits into (part matching `pred`, rest).
    pub fn split<F: Fn(CoordId) -> bool>(&self, pred: F) -> (MultiIndex, MultiIndex) {
        let (a, b): (Vec<_>, Vec<_>) = self.0.iter().partition(|(c, _)| pred(*c));
        (MultiIndex(a), MultiIndex(b))
    }

    pub fn coords(&self) -> impl Iterator<Item = CoordId> + '_ {
        self.0.iter().map(|(c, _)| *c)
    }

    fn render(&self, ctx: &Context) -> String {
        self.0
            .iter()
            .map(|&(c, e)| {
                if e == 1 {
                    ctx.name(c).to_string()
                } else {
                    format!("{}^{}", ctx.name(c), e)
                }
            })
            .collect::<Vec<_>>()
            .join("*")
    }
}

/// Sparse polynomial over a coordinate [`Context`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalarPoly {
    ctx: Context,
    terms: BTreeMap<MultiIndex, Rat>,
}

impl ScalarPoly {
    pub fn zero(ctx: &Context) -> ScalarPoly {
        ScalarPoly { ctx: ctx.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(ctx: &Context, value: Rat) -> ScalarPoly {
        let mut terms = BTreeMap::new();
        if !value.is_zero() {
            terms.insert(MultiIndex::unit(), value);
        }
        ScalarPoly { ctx: ctx.clone(), terms }
    }

    pub fn one(ctx: &Context) -> ScalarPoly {
        ScalarPoly::constant(ctx, Rat::one())
    }

    pub fn coordinate(ctx: &Context, coord: CoordId) -> ScalarPoly {
        assert!(coord.index() < ctx.len(), "coordinate outside context");
        let mut terms = BTreeMap::new();
        terms.insert(MultiIndex::of(coord), Rat::one());
        ScalarPoly { ctx: ctx.clone(), terms }
    }

    /// Coordinate looked up by name.
    pub fn var(ctx: &Context, name: &str) -> Result<ScalarPoly> {
        Ok(ScalarPoly::coordinate(ctx, ctx.require(name)?))
    }

    pub fn monomial(ctx: &Context, index: MultiIndex, coeff: Rat) -> ScalarPoly {
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(index, coeff);
        }
        ScalarPoly { ctx: ctx.clone(), terms }
    }

    pub fn from_terms(ctx: &Context, terms: BTreeMap<MultiIndex, Rat>) -> ScalarPoly {
        let terms = terms.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        ScalarPoly { ctx: ctx.clone(), terms }
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Rat)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(MultiIndex::is_unit)
    }

    /// The value as a rational if the polynomial is constant.
    pub fn as_rational(&self) -> Option<Rat> {
        if self.terms.is_empty() {
            return Some(Rat::zero());
        }
        if self.terms.len() == 1 {
            if let Some(c) = self.terms.get(&MultiIndex::unit()) {
                return Some(c.clone());
            }
        }
        None
    }

    pub fn coefficient(&self, index: &MultiIndex) -> Rat {
        self.terms.get(index).cloned().unwrap_or_else(Rat::zero)
    }

    /// Highest term in the canonical monomial order.
    pub fn leading_term(&self) -> Option<(&MultiIndex, &Rat)> {
        self.terms.iter().next_back()
    }

    /// Maximum total degree over the terms (0 for the zero polynomial).
    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::total_degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, coord: CoordId) -> u32 {
        self.terms.keys().map(|m| m.degree_of(coord)).max().unwrap_or(0)
    }

    /// Coordinates that actually occur.
    pub fn support(&self) -> BTreeSet<CoordId> {
        self.terms.keys().flat_map(|m| m.coords()).collect()
    }

    fn unified(&self, other: &ScalarPoly) -> Result<Context> {
        self.ctx.unify(&other.ctx)
    }

    pub fn checked_add(&self, other: &ScalarPoly) -> Result<ScalarPoly> {
        let ctx = self.unified(other)?;
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let entry = terms.entry(m.clone()).or_insert_with(Rat::zero);
            *entry += c;
            if entry.is_zero() {
                terms.remove(m);
            }
        }
        Ok(ScalarPoly { ctx, terms })
    }

    pub fn checked_mul(&self, other: &ScalarPoly) -> Result<ScalarPoly> {
        let ctx = self.unified(other)?;
        let mut terms: BTreeMap<MultiIndex, Rat> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m = ma.mul(mb);
                let entry = terms.entry(m.clone()).or_insert_with(Rat::zero);
                *entry += ca * cb;
                if entry.is_zero() {
                    terms.remove(&m);
                }
            }
        }
        Ok(ScalarPoly { ctx, terms })
    }

    pub fn scale(&self, factor: &Rat) -> ScalarPoly {
        if factor.is_zero() {
            return ScalarPoly::zero(&self.ctx);
        }
        ScalarPoly {
            ctx: self.ctx.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * factor)).collect(),
        }
    }

    pub fn pow(&self, exp: u32) -> ScalarPoly {
        let mut acc = ScalarPoly::one(&self.ctx);
        for _ in 0..exp {
            acc = &acc * self;
        }
        acc
    }

    /// Partial derivative with respect to one coordinate.
    pub fn partial(&self, coord: CoordId) -> ScalarPoly {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = m.degree_of(coord);
            if e == 0 {
                continue;
            }
            let mut pairs: Vec<(CoordId, u32)> = m.exponents().to_vec();
            for p in pairs.iter_mut() {
                if p.0 == coord {
                    p.1 -= 1;
                }
            }
            let dm = MultiIndex::from_pairs(&pairs);
            let coeff = c * rat_int(e as i64);
            let entry = terms.entry(dm.clone()).or_insert_with(Rat::zero);
            *entry += coeff;
            if entry.is_zero() {
                terms.remove(&dm);
            }
        }
        ScalarPoly { ctx: self.ctx.clone(), terms }
    }

    pub fn partial_by_name(&self, name: &str) -> Result<ScalarPoly> {
        Ok(self.partial(self.ctx.require(name)?))
    }

    /// Simultaneous substitution of coordinates by polynomials.
    ///
    /// All bindings are applied in a single parallel pass; a coordinate on a
    /// right-hand side always refers to the original value. Bindings whose
    /// right-hand sides form a dependency cycle (other than the identity
    /// binding `c -> c`) are rejected, so the result never depends on
    /// application order.
    pub fn substitute(&self, bindings: &BTreeMap<CoordId, ScalarPoly>) -> Result<ScalarPoly> {
        let mut ctx = self.ctx.clone();
        for p in bindings.values() {
            ctx = ctx.unify(&p.ctx)?;
        }
        check_acyclic(&ctx, bindings)?;
        let mut acc = ScalarPoly::zero(&ctx);
        for (m, c) in &self.terms {
            let mut term = ScalarPoly::constant(&ctx, c.clone());
            for &(coord, e) in m.exponents() {
                let base = match bindings.get(&coord) {
                    Some(p) => p.clone(),
                    None => ScalarPoly::coordinate(&ctx, coord),
                };
                term = &term * &base.pow(e);
            }
            acc = &acc + &term;
        }
        Ok(acc)
    }

    /// Groups terms by the sub-monomial in the coordinates selected by
    /// `pred`; the values are polynomials in the remaining coordinates.
    pub fn split_by<F: Fn(CoordId) -> bool>(&self, pred: F) -> BTreeMap<MultiIndex, ScalarPoly> {
        let mut out: BTreeMap<MultiIndex, ScalarPoly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let (key, rest) = m.split(&pred);
            let slot = out.entry(key).or_insert_with(|| ScalarPoly::zero(&self.ctx));
            *slot = &*slot + &ScalarPoly::monomial(&self.ctx, rest, c.clone());
        }
        out
    }

    /// Decomposes as an affine function of `unknowns`: returns the
    /// coefficient of each unknown plus the unknown-free remainder, or `None`
    /// if any term has combined degree above 1 in the unknowns.
    pub fn as_linear(
        &self,
        unknowns: &BTreeSet<CoordId>,
    ) -> Option<(BTreeMap<CoordId, ScalarPoly>, ScalarPoly)> {
        let mut coeffs: BTreeMap<CoordId, ScalarPoly> = BTreeMap::new();
        let mut constant = ScalarPoly::zero(&self.ctx);
        for (m, c) in &self.terms {
            let (unk, rest) = m.split(|c| unknowns.contains(&c));
            let part = ScalarPoly::monomial(&self.ctx, rest, c.clone());
            match unk.exponents() {
                [] => constant = &constant + &part,
                [(coord, 1)] => {
                    let slot =
                        coeffs.entry(*coord).or_insert_with(|| ScalarPoly::zero(&self.ctx));
                    *slot = &*slot + &part;
                }
                _ => return None,
            }
        }
        Some((coeffs, constant))
    }

    /// Exact division; fails unless `divisor` divides `self` exactly.
    pub fn try_div_exact(&self, divisor: &ScalarPoly) -> Result<ScalarPoly> {
        if divisor.is_zero() {
            return Err(Error::InexactDivision);
        }
        let ctx = self.unified(divisor)?;
        let (dm, dc) = divisor.leading_term().expect("nonzero divisor");
        let (dm, dc) = (dm.clone(), dc.clone());
        let mut rem = self.clone();
        let mut quo = ScalarPoly::zero(&ctx);
        while !rem.is_zero() {
            let (lm, lc) = rem.leading_term().expect("nonzero remainder");
            if !dm.divides(lm) {
                return Err(Error::InexactDivision);
            }
            let qm = dm.quotient_of(lm);
            let qc = lc / &dc;
            let step = ScalarPoly::monomial(&ctx, qm, qc);
            rem = &rem - &(&step * divisor);
            quo = &quo + &step;
        }
        Ok(quo)
    }

    /// Rebuilds the polynomial over `target`, matching coordinates by name.
    pub fn transport(&self, target: &Context) -> Result<ScalarPoly> {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let pairs: Vec<(CoordId, u32)> = m
                .exponents()
                .iter()
                .map(|&(coord, e)| Ok((target.require(self.ctx.name(coord))?, e)))
                .collect::<Result<_>>()?;
            terms.insert(MultiIndex::from_pairs(&pairs), c.clone());
        }
        Ok(ScalarPoly { ctx: target.clone(), terms })
    }

    /// Divides by the rational content and flips signs so the leading
    /// coefficient is positive: the canonical representative of the
    /// polynomial up to scaling.
    pub fn monic_scaled(&self) -> ScalarPoly {
        match self.leading_term() {
            None => self.clone(),
            Some((_, lc)) => {
                let inv = lc.recip();
                self.scale(&inv)
            }
        }
    }

    /// Largest monomial dividing every term (1 for the zero polynomial).
    pub fn monomial_content(&self) -> MultiIndex {
        let mut iter = self.terms.keys();
        let first = match iter.next() {
            Some(m) => m.clone(),
            None => return MultiIndex::unit(),
        };
        iter.fold(first, |acc, m| {
            let pairs: Vec<(CoordId, u32)> = acc
                .exponents()
                .iter()
                .map(|&(c, e)| (c, e.min(m.degree_of(c))))
                .collect();
            MultiIndex::from_pairs(&pairs)
        })
    }

    /// Parses the polynomial grammar over the given context.
    pub fn parse(ctx: &Context, input: &str) -> Result<ScalarPoly> {
        let mut lx = Lexer::new(input)?;
        let p = parse_poly(ctx, &mut lx)?;
        lx.expect_end()?;
        Ok(p)
    }
}

fn check_acyclic(ctx: &Context, bindings: &BTreeMap<CoordId, ScalarPoly>) -> Result<()> {
    // Edges go from a bound coordinate to bound coordinates used on its
    // right-hand side; the identity binding is allowed.
    let mut edges: BTreeMap<CoordId, Vec<CoordId>> = BTreeMap::new();
    for (&c, p) in bindings {
        if let Some(v) = p.as_rational() {
            let _ = v;
            continue;
        }
        if p == &ScalarPoly::coordinate(p.context(), c) {
            continue;
        }
        let deps: Vec<CoordId> =
            p.support().into_iter().filter(|d| bindings.contains_key(d)).collect();
        edges.insert(c, deps);
    }
    // Depth-first search for a cycle.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<CoordId, Mark> = BTreeMap::new();
    fn visit(
        node: CoordId,
        edges: &BTreeMap<CoordId, Vec<CoordId>>,
        marks: &mut BTreeMap<CoordId, Mark>,
        ctx: &Context,
    ) -> Result<()> {
        match marks.get(&node) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Open) => {
                return Err(Error::CyclicSubstitution(ctx.name(node).to_string()))
            }
            None => {}
        }
        marks.insert(node, Mark::Open);
        if let Some(deps) = edges.get(&node) {
            for &d in deps {
                visit(d, edges, marks, ctx)?;
            }
        }
        marks.insert(node, Mark::Done);
        Ok(())
    }
    let nodes: Vec<CoordId> = edges.keys().copied().collect();
    for n in nodes {
        visit(n, &edges, &mut marks, ctx)?;
    }
    Ok(())
}

impl Add for &ScalarPoly {
    type Output = ScalarPoly;
    fn add(self, rhs: &ScalarPoly) -> ScalarPoly {
        self.checked_add(rhs).expect("context mismatch in +")
    }
}

impl Sub for &ScalarPoly {
    type Output = ScalarPoly;
    fn sub(self, rhs: &ScalarPoly) -> ScalarPoly {
        self.checked_add(&-rhs).expect("context mismatch in -")
    }
}

impl Mul for &ScalarPoly {
    type Output = ScalarPoly;
    fn mul(self, rhs: &ScalarPoly) -> ScalarPoly {
        self.checked_mul(rhs).expect("context mismatch in *")
    }
}

impl Neg for &ScalarPoly {
    type Output = ScalarPoly;
    fn neg(self) -> ScalarPoly {
        ScalarPoly {
            ctx: self.ctx.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl fmt::Display for ScalarPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        // Highest monomial first.
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let abs = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.is_unit() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                write!(f, "{}", m.render(&self.ctx))?;
            } else {
                write!(f, "{abs}*{}", m.render(&self.ctx))?;
            }
        }
        Ok(())
    }
}

impl Serialize for ScalarPoly {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

pub(crate) fn parse_rational(lx: &mut Lexer) -> Result<Rat> {
    match lx.next().map(|s| s.tok) {
        Some(Tok::Int(n)) => {
            if lx.eat(&Tok::Slash) {
                match lx.next().map(|s| s.tok) {
                    Some(Tok::Int(d)) if !d.is_zero() => Ok(Rat::new(n, d)),
                    _ => Err(lx.error("expected nonzero denominator")),
                }
            } else {
                Ok(Rat::from_integer(n))
            }
        }
        _ => Err(lx.error("expected integer")),
    }
}

fn parse_exponent(lx: &mut Lexer) -> Result<u32> {
    match lx.next().map(|s| s.tok) {
        Some(Tok::Int(e)) => u32::try_from(e).map_err(|_| lx.error("exponent too large")),
        _ => Err(lx.error("expected integer exponent")),
    }
}

fn parse_factor(ctx: &Context, lx: &mut Lexer) -> Result<ScalarPoly> {
    match lx.peek() {
        Some(Tok::Int(_)) => {
            let r = parse_rational(lx)?;
            Ok(ScalarPoly::constant(ctx, r))
        }
        Some(Tok::Ident(_)) => {
            let name = match lx.next().map(|s| s.tok) {
                Some(Tok::Ident(n)) => n,
                _ => unreachable!(),
            };
            let id = ctx.id(&name).ok_or_else(|| lx.error(format!("unknown coordinate `{name}`")))?;
            let base = ScalarPoly::coordinate(ctx, id);
            if lx.eat(&Tok::Caret) {
                let e = parse_exponent(lx)?;
                Ok(base.pow(e))
            } else {
                Ok(base)
            }
        }
        Some(Tok::LParen) => {
            lx.next();
            let inner = parse_poly(ctx, lx)?;
            lx.expect(Tok::RParen, "`)`")?;
            if lx.eat(&Tok::Caret) {
                let e = parse_exponent(lx)?;
                Ok(inner.pow(e))
            } else {
                Ok(inner)
            }
        }
        _ => Err(lx.error("expected a polynomial factor")),
    }
}

fn parse_term(ctx: &Context, lx: &mut Lexer) -> Result<ScalarPoly> {
    let mut acc = parse_factor(ctx, lx)?;
    while lx.eat(&Tok::Star) {
        acc = &acc * &parse_factor(ctx, lx)?;
    }
    Ok(acc)
}

pub(crate) fn parse_poly(ctx: &Context, lx: &mut Lexer) -> Result<ScalarPoly> {
    let mut acc = ScalarPoly::zero(ctx);
    let mut negate = lx.eat(&Tok::Minus);
    loop {
        let term = parse_term(ctx, lx)?;
        acc = if negate { &acc - &term } else { &acc + &term };
        if lx.eat(&Tok::Plus) {
            negate = false;
        } else if lx.eat(&Tok::Minus) {
            negate = true;
        } else {
            break;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet_ctx() -> Context {
        Context::builder()
            .base("x")
            .unwrap()
            .base("t")
            .unwrap()
            .jets("u", 2)
            .unwrap()
            .parameter("lambda")
            .unwrap()
            .build()
    }

    fn p(ctx: &Context, s: &str) -> ScalarPoly {
        ScalarPoly::parse(ctx, s).unwrap()
    }

    #[test]
    fn parse_and_display_round_trip() {
        let ctx = jet_ctx();
        for s in [
            "0",
            "1",
            "-1",
            "3/2*u0^2*u1 - x",
            "u0*u1 + u2",
            "lambda^2 - 2",
            "1/2*u0^2 + u1",
            "-u0 - 1",
        ] {
            let q = p(&ctx, s);
            assert_eq!(q.to_string(), s, "round trip for {s}");
            assert_eq!(ScalarPoly::parse(&ctx, &q.to_string()).unwrap(), q);
        }
        // Parenthesized input normalizes to the flat form.
        assert_eq!(p(&ctx, "(u0 + 1)^2").to_string(), "u0^2 + 2*u0 + 1");
        assert_eq!(p(&ctx, "u0*(u1 - x)"), p(&ctx, "u0*u1 - u0*x"));
    }

    #[test]
    fn parse_rejects_garbage() {
        let ctx = jet_ctx();
        assert!(ScalarPoly::parse(&ctx, "u9").is_err());
        assert!(ScalarPoly::parse(&ctx, "u0 +").is_err());
        assert!(ScalarPoly::parse(&ctx, "1/0").is_err());
        assert!(ScalarPoly::parse(&ctx, "u0 u1").is_err());
        assert!(ScalarPoly::parse(&ctx, "u0^-1").is_err());
    }

    #[test]
    fn ring_identities() {
        let ctx = jet_ctx();
        let a = p(&ctx, "u0*u1 + x");
        let b = p(&ctx, "u1 - 3/2");
        let c = p(&ctx, "t*u0^2 - 2*u1");
        assert_eq!(&(&a + &b) * &c, &(&a * &c) + &(&b * &c));
        assert_eq!(&a * &b, &b * &a);
        assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        assert_eq!(&a - &a, ScalarPoly::zero(&ctx));
    }

    #[test]
    fn partial_derivative_on_connection_coefficient() {
        // d/du1 of the t-component coefficient u1 + u0^2/2 is 1.
        let ctx = jet_ctx();
        let coeff = p(&ctx, "u1 + 1/2*u0^2");
        let u1 = ctx.require("u1").unwrap();
        assert_eq!(coeff.partial(u1), ScalarPoly::one(&ctx));
        let u0 = ctx.require("u0").unwrap();
        assert_eq!(coeff.partial(u0), p(&ctx, "u0"));
        // Leibniz spot check.
        let a = p(&ctx, "u0^2*u1");
        let b = p(&ctx, "x*u1 - 2");
        let lhs = (&a * &b).partial(u1);
        let rhs = &(&a.partial(u1) * &b) + &(&a * &b.partial(u1));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn substitution_eliminates_rhs() {
        // Substituting the evolution right-hand side for a stand-in
        // coordinate kills the defining combination.
        let ctx = Context::builder()
            .base("x")
            .unwrap()
            .base("t")
            .unwrap()
            .jets("u", 3)
            .unwrap()
            .build();
        // u3 stands in for u_t here.
        let expr = p(&ctx, "u3 - u0*u1 - u2");
        let mut bind = BTreeMap::new();
        bind.insert(ctx.require("u3").unwrap(), p(&ctx, "u0*u1 + u2"));
        assert!(expr.substitute(&bind).unwrap().is_zero());

        // Identity bindings leave the polynomial unchanged.
        let q = p(&ctx, "u0^2 - x*u1");
        let mut idb = BTreeMap::new();
        idb.insert(ctx.require("u0").unwrap(), p(&ctx, "u0"));
        assert_eq!(q.substitute(&idb).unwrap(), q);

        // lambda -> 0 in -lambda^2/2.
        let ctx2 = jet_ctx();
        let r = p(&ctx2, "-1/2*lambda^2");
        let mut zb = BTreeMap::new();
        zb.insert(ctx2.require("lambda").unwrap(), ScalarPoly::zero(&ctx2));
        assert!(r.substitute(&zb).unwrap().is_zero());
    }

    #[test]
    fn substitution_is_simultaneous_and_rejects_cycles() {
        let ctx = jet_ctx();
        let q = p(&ctx, "u0 + u1");
        // Swap is a cycle.
        let mut swap = BTreeMap::new();
        swap.insert(ctx.require("u0").unwrap(), p(&ctx, "u1"));
        swap.insert(ctx.require("u1").unwrap(), p(&ctx, "u0"));
        assert!(matches!(q.substitute(&swap), Err(Error::CyclicSubstitution(_))));

        // A chain is fine and applies in parallel: u0 -> u1 while u1 -> x.
        let mut chain = BTreeMap::new();
        chain.insert(ctx.require("u0").unwrap(), p(&ctx, "u1"));
        chain.insert(ctx.require("u1").unwrap(), p(&ctx, "x"));
        assert!(matches!(q.substitute(&chain), Err(Error::CyclicSubstitution(_))) == false);
        assert_eq!(q.substitute(&chain).unwrap(), p(&ctx, "u1 + x"));
    }

    #[test]
    fn split_and_linear_decomposition() {
        let ctx = jet_ctx();
        let q = p(&ctx, "u0^2*lambda + u0^2 + 2*u1*lambda - x");
        let jets: BTreeSet<CoordId> =
            [ctx.require("u0").unwrap(), ctx.require("u1").unwrap()].into_iter().collect();
        let by_jet = q.split_by(|c| jets.contains(&c));
        assert_eq!(by_jet.len(), 3);
        let u0sq = MultiIndex::from_pairs(&[(ctx.require("u0").unwrap(), 2)]);
        assert_eq!(by_jet[&u0sq], p(&ctx, "lambda + 1"));

        let unknowns: BTreeSet<CoordId> = [ctx.require("lambda").unwrap()].into_iter().collect();
        let (coeffs, constant) = q.as_linear(&unknowns).unwrap();
        assert_eq!(coeffs[&ctx.require("lambda").unwrap()], p(&ctx, "u0^2 + 2*u1"));
        assert_eq!(constant, p(&ctx, "u0^2 - x"));

        let quad = p(&ctx, "lambda^2");
        assert!(quad.as_linear(&unknowns).is_none());
    }

    #[test]
    fn exact_division() {
        let ctx = jet_ctx();
        let a = p(&ctx, "u0^2 - u1^2");
        let b = p(&ctx, "u0 - u1");
        assert_eq!(a.try_div_exact(&b).unwrap(), p(&ctx, "u0 + u1"));
        assert!(p(&ctx, "u0^2 + 1").try_div_exact(&b).is_err());
        assert!(a.try_div_exact(&ScalarPoly::zero(&ctx)).is_err());
    }

    #[test]
    fn transport_matches_names() {
        let src = jet_ctx();
        let dst = Context::builder()
            .base("x")
            .unwrap()
            .base("t")
            .unwrap()
            .jets("u", 4)
            .unwrap()
            .parameter("lambda")
            .unwrap()
            .build();
        let q = p(&src, "u0*u1 + lambda*x");
        let moved = q.transport(&dst).unwrap();
        assert_eq!(moved.to_string(), "x*lambda + u0*u1");
        assert_eq!(moved.to_string(), q.to_string());
        let narrow = Context::builder().base("x").unwrap().build();
        assert!(q.transport(&narrow).is_err());
    }

    #[test]
    fn content_and_monic() {
        let ctx = jet_ctx();
        let q = p(&ctx, "u0^2*u1 - 1/2*u0*u1^2");
        assert_eq!(
            q.monomial_content(),
            MultiIndex::from_pairs(&[
                (ctx.require("u0").unwrap(), 1),
                (ctx.require("u1").unwrap(), 1)
            ])
        );
        let r = p(&ctx, "-2*u1 - 4");
        assert_eq!(r.monic_scaled(), p(&ctx, "u1 + 2"));
    }
}
