//! Grassmann algebra of differential forms over a coordinate [`Context`].
//!
//! A [`WedgeMonomial`] is a strictly increasing list of coordinate
//! differentials in the canonical context order (base, jets ascending,
//! group); parameters are constants and have no differential. A [`DiffForm`]
//! of degree `p` maps degree-`p` wedge monomials to [`ScalarPoly`]
//! coefficients.
//!
//! [`FormIdeal::reduce`] decides membership in the algebraic ideal spanned by
//! the generators with form multipliers of complementary degree and
//! coefficient degree bounded by `D` (default: one plus the largest
//! generator coefficient degree). Every call returns a
//! [`MembershipCertificate`] that recombines exactly:
//! `sum(multiplier_i ^ generator_i) + remainder == input`, an identity the
//! routine itself re-checks before returning. Membership holds exactly when
//! the remainder is zero.
//!
//! Text grammar, extending the polynomial grammar with differentials:
//!
//! ```text
//! form  := ["-"] fterm { ("+" | "-") fterm }
//! fterm := { factor "*" } chain | term
//! chain := "d" coord { "^" "d" coord }
//! ```
//!
//! so `du0^dt - u1*dx^dt` is a 2-form. Scalar factors precede the wedge
//! chain; a term without differentials is a 0-form.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};

use crate::context::{Context, CoordId, CoordKind};
use crate::error::Error;
use crate::poly::{MultiIndex, Rat, ScalarPoly};
use crate::text::{Lexer, Tok};
use crate::Result;

/// Strictly increasing list of coordinate differentials.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct WedgeMonomial(Vec<CoordId>);

impl WedgeMonomial {
    /// The empty product (degree 0).
    pub fn scalar() -> WedgeMonomial {
        WedgeMonomial(Vec::new())
    }

    pub fn single(coord: CoordId) -> WedgeMonomial {
        WedgeMonomial(vec![coord])
    }

    /// Sorts the differentials into canonical order, tracking the sign of
    /// the permutation; `None` when a differential repeats.
    pub fn from_coords(coords: &[CoordId]) -> Option<(i8, WedgeMonomial)> {
        let mut v: Vec<CoordId> = coords.to_vec();
        // Insertion sort, counting swaps.
        let mut swaps = 0usize;
        for i in 1..v.len() {
            let mut j = i;
            while j > 0 && v[j - 1] > v[j] {
                v.swap(j - 1, j);
                swaps += 1;
                j -= 1;
            }
        }
        if v.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        Some((if swaps % 2 == 0 { 1 } else { -1 }, WedgeMonomial(v)))
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[CoordId] {
        &self.0
    }

    /// Wedge product with sign; `None` when a differential repeats.
    pub fn wedge(&self, other: &WedgeMonomial) -> Option<(i8, WedgeMonomial)> {
        let mut all = self.0.clone();
        all.extend_from_slice(&other.0);
        WedgeMonomial::from_coords(&all)
    }

    /// Text form in the differential grammar, e.g. `du0^dt`.
    pub fn render(&self, ctx: &Context) -> String {
        self.0
            .iter()
            .map(|&c| format!("d{}", ctx.name(c)))
            .collect::<Vec<_>>()
            .join("^")
    }
}

/// Differential form of a fixed degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffForm {
    ctx: Context,
    degree: usize,
    terms: BTreeMap<WedgeMonomial, ScalarPoly>,
}

impl DiffForm {
    pub fn zero(ctx: &Context, degree: usize) -> DiffForm {
        DiffForm { ctx: ctx.clone(), degree, terms: BTreeMap::new() }
    }

    /// Degree-0 form wrapping a polynomial.
    pub fn scalar(p: ScalarPoly) -> DiffForm {
        let ctx = p.context().clone();
        let mut terms = BTreeMap::new();
        if !p.is_zero() {
            terms.insert(WedgeMonomial::scalar(), p);
        }
        DiffForm { ctx, degree: 0, terms }
    }

    /// The 1-form `d(coord)`.
    pub fn d_coord(ctx: &Context, coord: CoordId) -> Result<DiffForm> {
        if matches!(ctx.kind(coord), CoordKind::Parameter) {
            return Err(Error::ParameterDifferential(ctx.name(coord).to_string()));
        }
        let mut terms = BTreeMap::new();
        terms.insert(WedgeMonomial::single(coord), ScalarPoly::one(ctx));
        Ok(DiffForm { ctx: ctx.clone(), degree: 1, terms })
    }

    /// Builds a form from monomial/coefficient pairs of one degree.
    pub fn from_terms(
        ctx: &Context,
        degree: usize,
        terms: BTreeMap<WedgeMonomial, ScalarPoly>,
    ) -> Result<DiffForm> {
        for (m, c) in &terms {
            if m.degree() != degree {
                return Err(Error::DegreeMismatch { expected: degree, found: m.degree() });
            }
            for &coord in m.coords() {
                if matches!(ctx.kind(coord), CoordKind::Parameter) {
                    return Err(Error::ParameterDifferential(ctx.name(coord).to_string()));
                }
            }
            let _ = c;
        }
        let terms = terms.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        Ok(DiffForm { ctx: ctx.clone(), degree, terms })
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&WedgeMonomial, &ScalarPoly)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &WedgeMonomial) -> ScalarPoly {
        self.terms.get(m).cloned().unwrap_or_else(|| ScalarPoly::zero(&self.ctx))
    }

    /// Largest total degree among the coefficients.
    pub fn coefficient_degree(&self) -> u32 {
        self.terms.values().map(ScalarPoly::total_degree).max().unwrap_or(0)
    }

    pub fn checked_add(&self, other: &DiffForm) -> Result<DiffForm> {
        let ctx = self.ctx.unify(&other.ctx)?;
        let degree = if self.is_zero() {
            other.degree
        } else if other.is_zero() {
            self.degree
        } else if self.degree == other.degree {
            self.degree
        } else {
            return Err(Error::DegreeMismatch { expected: self.degree, found: other.degree });
        };
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let entry = terms.entry(m.clone()).or_insert_with(|| ScalarPoly::zero(&ctx));
            *entry = &*entry + c;
            if entry.is_zero() {
                terms.remove(m);
            }
        }
        Ok(DiffForm { ctx, degree, terms })
    }

    pub fn scale(&self, p: &ScalarPoly) -> DiffForm {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let v = c * p;
            if !v.is_zero() {
                terms.insert(m.clone(), v);
            }
        }
        DiffForm { ctx: self.ctx.clone(), degree: self.degree, terms }
    }

    /// Wedge product; degrees add.
    pub fn wedge(&self, other: &DiffForm) -> Result<DiffForm> {
        let ctx = self.ctx.unify(&other.ctx)?;
        let degree = self.degree + other.degree;
        let mut terms: BTreeMap<WedgeMonomial, ScalarPoly> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let Some((sign, m)) = ma.wedge(mb) else { continue };
                let mut v = ca * cb;
                if sign < 0 {
                    v = -&v;
                }
                let entry = terms.entry(m.clone()).or_insert_with(|| ScalarPoly::zero(&ctx));
                *entry = &*entry + &v;
                if entry.is_zero() {
                    terms.remove(&m);
                }
            }
        }
        Ok(DiffForm { ctx, degree, terms })
    }

    /// Exterior derivative. Parameters are constants: no `d(lambda)` terms
    /// are produced.
    pub fn exterior_derivative(&self) -> DiffForm {
        let mut out = DiffForm::zero(&self.ctx, self.degree + 1);
        for (m, c) in &self.terms {
            for z in self.ctx.differential_ids() {
                let dc = c.partial(z);
                if dc.is_zero() {
                    continue;
                }
                let Some((sign, dm)) = WedgeMonomial::single(z).wedge(m) else { continue };
                let v = if sign < 0 { -&dc } else { dc };
                let entry =
                    out.terms.entry(dm.clone()).or_insert_with(|| ScalarPoly::zero(&self.ctx));
                *entry = &*entry + &v;
                if entry.is_zero() {
                    out.terms.remove(&dm);
                }
            }
        }
        out
    }

    /// Applies a coordinate substitution to every coefficient.
    pub fn substitute(&self, bindings: &BTreeMap<CoordId, ScalarPoly>) -> Result<DiffForm> {
        let mut terms = BTreeMap::new();
        let mut ctx = self.ctx.clone();
        for (m, c) in &self.terms {
            let v = c.substitute(bindings)?;
            ctx = ctx.unify(v.context())?;
            if !v.is_zero() {
                terms.insert(m.clone(), v);
            }
        }
        Ok(DiffForm { ctx, degree: self.degree, terms })
    }

    /// Rebuilds the form over `target`, matching coordinates by name and
    /// re-normalizing differential order.
    pub fn transport(&self, target: &Context) -> Result<DiffForm> {
        let mut out = DiffForm::zero(target, self.degree);
        for (m, c) in &self.terms {
            let coords: Vec<CoordId> = m
                .coords()
                .iter()
                .map(|&z| target.require(self.ctx.name(z)))
                .collect::<Result<_>>()?;
            let (sign, dm) = WedgeMonomial::from_coords(&coords)
                .expect("distinct differentials stay distinct under renaming");
            let mut v = c.transport(target)?;
            if sign < 0 {
                v = -&v;
            }
            let entry = out.terms.entry(dm.clone()).or_insert_with(|| ScalarPoly::zero(target));
            *entry = &*entry + &v;
            if entry.is_zero() {
                out.terms.remove(&dm);
            }
        }
        Ok(out)
    }

    /// Parses the form grammar over the given context.
    pub fn parse(ctx: &Context, input: &str) -> Result<DiffForm> {
        let mut lx = Lexer::new(input)?;
        let f = parse_form(ctx, &mut lx)?;
        lx.expect_end()?;
        Ok(f)
    }
}

impl Add for &DiffForm {
    type Output = DiffForm;
    fn add(self, rhs: &DiffForm) -> DiffForm {
        self.checked_add(rhs).expect("degree or context mismatch in +")
    }
}

impl Sub for &DiffForm {
    type Output = DiffForm;
    fn sub(self, rhs: &DiffForm) -> DiffForm {
        self.checked_add(&-rhs).expect("degree or context mismatch in -")
    }
}

impl Neg for &DiffForm {
    type Output = DiffForm;
    fn neg(self) -> DiffForm {
        DiffForm {
            ctx: self.ctx.clone(),
            degree: self.degree,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl fmt::Display for DiffForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if m.degree() == 0 {
                // Degree-0 form: delegate to the polynomial.
                if !first {
                    write!(f, " + ")?;
                }
                write!(f, "{c}")?;
                first = false;
                continue;
            }
            if c.term_count() > 1 {
                if first {
                    write!(f, "({c})*{}", m.render(&self.ctx))?;
                } else {
                    write!(f, " + ({c})*{}", m.render(&self.ctx))?;
                }
                first = false;
                continue;
            }
            let (mono, coeff) = c.terms().next().expect("nonzero single-term coefficient");
            let neg = coeff.is_negative();
            let abs = coeff.abs();
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
            let scalar_part = if mono.is_unit() {
                if abs.is_one() {
                    String::new()
                } else {
                    format!("{abs}*")
                }
            } else if abs.is_one() {
                format!("{}*", ScalarPoly::monomial(&self.ctx, mono.clone(), Rat::one()))
            } else {
                format!("{}*", ScalarPoly::monomial(&self.ctx, mono.clone(), abs.clone()))
            };
            write!(f, "{scalar_part}{}", m.render(&self.ctx))?;
        }
        Ok(())
    }
}

impl Serialize for DiffForm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

fn parse_form(ctx: &Context, lx: &mut Lexer) -> Result<DiffForm> {
    let mut acc: Option<DiffForm> = None;
    let mut negate = lx.eat(&Tok::Minus);
    loop {
        let term = parse_form_term(ctx, lx)?;
        let term = if negate { -&term } else { term };
        acc = Some(match acc {
            None => term,
            Some(a) => a.checked_add(&term)?,
        });
        if lx.eat(&Tok::Plus) {
            negate = false;
        } else if lx.eat(&Tok::Minus) {
            negate = true;
        } else {
            break;
        }
    }
    Ok(acc.expect("at least one term parsed"))
}

/// A source identifier is a differential when it has the shape `d<coord>`.
fn differential_of(ctx: &Context, name: &str) -> Option<CoordId> {
    name.strip_prefix('d').and_then(|rest| ctx.id(rest))
}

fn parse_form_term(ctx: &Context, lx: &mut Lexer) -> Result<DiffForm> {
    let mut scalar = ScalarPoly::one(ctx);
    loop {
        match lx.peek() {
            Some(Tok::Ident(name)) if differential_of(ctx, name).is_some() => {
                // Wedge chain terminates the term.
                let mut coords = Vec::new();
                loop {
                    let (line, col) = lx.here();
                    let name = match lx.next().map(|s| s.tok) {
                        Some(Tok::Ident(n)) => n,
                        _ => return Err(Error::parse(line, col, "expected differential")),
                    };
                    let Some(coord) = differential_of(ctx, &name) else {
                        return Err(Error::parse(line, col, format!("unknown differential `{name}`")));
                    };
                    if matches!(ctx.kind(coord), CoordKind::Parameter) {
                        return Err(Error::ParameterDifferential(ctx.name(coord).to_string()));
                    }
                    coords.push(coord);
                    if !lx.eat(&Tok::Caret) {
                        break;
                    }
                }
                let degree = coords.len();
                let mut form = DiffForm::zero(ctx, degree);
                if let Some((sign, m)) = WedgeMonomial::from_coords(&coords) {
                    let v = if sign < 0 { -&scalar } else { scalar };
                    if !v.is_zero() {
                        form.terms.insert(m, v);
                    }
                }
                return Ok(form);
            }
            _ => {
                // Scalar factor.
                let factor = parse_scalar_factor(ctx, lx)?;
                scalar = &scalar * &factor;
                if !lx.eat(&Tok::Star) {
                    // Term without differentials: a 0-form.
                    return Ok(DiffForm::scalar(scalar));
                }
            }
        }
    }
}

fn parse_scalar_factor(ctx: &Context, lx: &mut Lexer) -> Result<ScalarPoly> {
    match lx.peek() {
        Some(Tok::Int(_)) => {
            let r = crate::poly::parse_rational(lx)?;
            Ok(ScalarPoly::constant(ctx, r))
        }
        Some(Tok::Ident(name)) => {
            let name = name.clone();
            let Some(id) = ctx.id(&name) else {
                return Err(lx.error(format!("unknown coordinate `{name}`")));
            };
            lx.next();
            let base = ScalarPoly::coordinate(ctx, id);
            if lx.eat(&Tok::Caret) {
                match lx.next().map(|s| s.tok) {
                    Some(Tok::Int(e)) => {
                        let e = u32::try_from(e).map_err(|_| lx.error("exponent too large"))?;
                        Ok(base.pow(e))
                    }
                    _ => Err(lx.error("expected integer exponent")),
                }
            } else {
                Ok(base)
            }
        }
        Some(Tok::LParen) => {
            lx.next();
            let inner = crate::poly::parse_poly(ctx, lx)?;
            lx.expect(Tok::RParen, "`)`")?;
            if lx.eat(&Tok::Caret) {
                match lx.next().map(|s| s.tok) {
                    Some(Tok::Int(e)) => {
                        let e = u32::try_from(e).map_err(|_| lx.error("exponent too large"))?;
                        Ok(inner.pow(e))
                    }
                    _ => Err(lx.error("expected integer exponent")),
                }
            } else {
                Ok(inner)
            }
        }
        _ => Err(lx.error("expected a scalar factor or differential")),
    }
}

/// Exact membership certificate produced by [`FormIdeal::reduce`].
#[derive(Debug, Clone, Serialize)]
pub struct MembershipCertificate {
    /// One multiplier per ideal generator, in generator order.
    pub multipliers: Vec<DiffForm>,
    /// What is left of the input after subtracting the combination.
    pub remainder: DiffForm,
}

impl MembershipCertificate {
    pub fn is_member(&self) -> bool {
        self.remainder.is_zero()
    }

    /// Re-checks the defining identity against `target`.
    pub fn recombines(&self, ideal: &FormIdeal, target: &DiffForm) -> bool {
        let mut acc = self.remainder.clone();
        for (m, g) in self.multipliers.iter().zip(ideal.generators()) {
            if m.is_zero() {
                continue;
            }
            let Ok(prod) = m.wedge(g) else { return false };
            let Ok(sum) = acc.checked_add(&prod) else { return false };
            acc = sum;
        }
        acc == *target
    }
}

/// Per-generator closure evidence.
#[derive(Debug, Clone, Serialize)]
pub struct ClosureEntry {
    pub generator_index: usize,
    pub differential: DiffForm,
    pub certificate: MembershipCertificate,
}

/// Result of [`FormIdeal::is_closed`].
#[derive(Debug, Clone, Serialize)]
pub struct ClosureReport {
    pub closed: bool,
    pub entries: Vec<ClosureEntry>,
}

/// Finitely generated ideal in the Grassmann algebra.
#[derive(Debug, Clone)]
pub struct FormIdeal {
    ctx: Context,
    gens: Vec<DiffForm>,
}

impl FormIdeal {
    pub fn new(gens: Vec<DiffForm>) -> Result<FormIdeal> {
        let mut iter = gens.iter();
        let first = iter.next().expect("an ideal needs at least one generator");
        let mut ctx = first.context().clone();
        for g in iter {
            ctx = ctx.unify(g.context())?;
        }
        Ok(FormIdeal { ctx, gens })
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn generators(&self) -> &[DiffForm] {
        &self.gens
    }

    /// Default multiplier coefficient degree bound: one plus the largest
    /// generator coefficient degree.
    pub fn default_degree_bound(&self) -> u32 {
        1 + self.gens.iter().map(DiffForm::coefficient_degree).max().unwrap_or(0)
    }

    /// Expresses `target` as `sum(multiplier_i ^ gen_i) + remainder` with
    /// multiplier coefficients of total degree at most `bound`
    /// (default [`Self::default_degree_bound`]). The remainder is zero
    /// exactly when the target lies in the ideal within the bound; on
    /// failure the certificate degenerates to zero multipliers and the
    /// target itself as remainder.
    pub fn reduce(&self, target: &DiffForm, bound: Option<u32>) -> Result<MembershipCertificate> {
        let ctx = self.ctx.unify(target.context())?;
        let bound = bound.unwrap_or_else(|| self.default_degree_bound());

        // Unknown multiplier coefficients x_(gen, wedge, mono).
        let diff_coords: Vec<CoordId> = ctx.differential_ids().collect();
        let mut unknowns: Vec<(usize, WedgeMonomial, MultiIndex)> = Vec::new();
        for (gi, g) in self.gens.iter().enumerate() {
            if g.degree() > target.degree() || g.is_zero() {
                continue;
            }
            let mult_degree = target.degree() - g.degree();
            for w in wedge_monomials(&diff_coords, mult_degree) {
                for mono in bounded_monomials(&ctx, bound) {
                    unknowns.push((gi, w.clone(), mono));
                }
            }
        }

        // Linear system over the rationals: one equation per
        // (wedge monomial, scalar monomial) coefficient of the defect.
        let mut eq_index: BTreeMap<(WedgeMonomial, MultiIndex), usize> = BTreeMap::new();
        let mut rows: Vec<BTreeMap<usize, Rat>> = Vec::new();
        let mut rhs: Vec<Rat> = Vec::new();
        let mut eq_of = |key: (WedgeMonomial, MultiIndex),
                         rows: &mut Vec<BTreeMap<usize, Rat>>,
                         rhs: &mut Vec<Rat>| {
            *eq_index.entry(key).or_insert_with(|| {
                rows.push(BTreeMap::new());
                rhs.push(Rat::zero());
                rows.len() - 1
            })
        };

        for (m, c) in target.terms() {
            for (mono, r) in c.terms() {
                let e = eq_of((m.clone(), mono.clone()), &mut rows, &mut rhs);
                rhs[e] = r.clone();
            }
        }
        for (ui, (gi, w, mono)) in unknowns.iter().enumerate() {
            for (gm, gc) in self.gens[*gi].terms() {
                let Some((sign, pm)) = w.wedge(gm) else { continue };
                for (gmono, gr) in gc.terms() {
                    let key_mono = mono.mul(gmono);
                    let e = eq_of((pm.clone(), key_mono), &mut rows, &mut rhs);
                    let mut v = gr.clone();
                    if sign < 0 {
                        v = -v;
                    }
                    let entry = rows[e].entry(ui).or_insert_with(Rat::zero);
                    *entry += v;
                    if entry.is_zero() {
                        rows[e].remove(&ui);
                    }
                }
            }
        }

        let solution = solve_rational(rows, rhs, unknowns.len());
        let certificate = match solution {
            Some(x) => {
                let mut multipliers =
                    vec![DiffForm::zero(&ctx, 0); self.gens.len()];
                for (gi, g) in self.gens.iter().enumerate() {
                    if g.degree() <= target.degree() {
                        multipliers[gi] = DiffForm::zero(&ctx, target.degree() - g.degree());
                    }
                }
                for (ui, (gi, w, mono)) in unknowns.iter().enumerate() {
                    if x[ui].is_zero() {
                        continue;
                    }
                    let coeff = ScalarPoly::monomial(&ctx, mono.clone(), x[ui].clone());
                    let mut term = DiffForm::zero(&ctx, w.degree());
                    term.terms.insert(w.clone(), coeff);
                    multipliers[*gi] = &multipliers[*gi] + &term;
                }
                MembershipCertificate {
                    multipliers,
                    remainder: DiffForm::zero(&ctx, target.degree()),
                }
            }
            None => {
                let mut multipliers = Vec::new();
                for g in &self.gens {
                    let deg = target.degree().saturating_sub(g.degree());
                    multipliers.push(DiffForm::zero(&ctx, deg));
                }
                MembershipCertificate { multipliers, remainder: target.transport(&ctx)? }
            }
        };

        assert!(
            certificate.recombines(self, &target.transport(&ctx)?),
            "membership certificate failed to recombine"
        );
        Ok(certificate)
    }

    /// Checks that the differential of every generator reduces to zero
    /// remainder inside the ideal.
    pub fn is_closed(&self, bound: Option<u32>) -> Result<ClosureReport> {
        let mut entries = Vec::new();
        let mut closed = true;
        for (gi, g) in self.gens.iter().enumerate() {
            let dg = g.exterior_derivative();
            let certificate = self.reduce(&dg, bound)?;
            closed &= certificate.is_member();
            entries.push(ClosureEntry { generator_index: gi, differential: dg, certificate });
        }
        Ok(ClosureReport { closed, entries })
    }
}

/// All degree-`d` wedge monomials over the given coordinates, ascending.
fn wedge_monomials(coords: &[CoordId], d: usize) -> Vec<WedgeMonomial> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(
        coords: &[CoordId],
        start: usize,
        d: usize,
        current: &mut Vec<CoordId>,
        out: &mut Vec<WedgeMonomial>,
    ) {
        if current.len() == d {
            out.push(WedgeMonomial(current.clone()));
            return;
        }
        for i in start..coords.len() {
            current.push(coords[i]);
            rec(coords, i + 1, d, current, out);
            current.pop();
        }
    }
    rec(coords, 0, d, &mut current, &mut out);
    out
}

/// All monomials of total degree at most `bound`, ascending.
fn bounded_monomials(ctx: &Context, bound: u32) -> Vec<MultiIndex> {
    let coords: Vec<CoordId> = ctx.ids().collect();
    let mut out = Vec::new();
    let mut current: Vec<(CoordId, u32)> = Vec::new();
    fn rec(
        coords: &[CoordId],
        start: usize,
        left: u32,
        current: &mut Vec<(CoordId, u32)>,
        out: &mut Vec<MultiIndex>,
    ) {
        out.push(MultiIndex::from_pairs(current));
        if left == 0 {
            return;
        }
        for i in start..coords.len() {
            for e in 1..=left {
                current.push((coords[i], e));
                rec(coords, i + 1, left - e, current, out);
                current.pop();
            }
        }
    }
    rec(&coords, 0, bound, &mut current, &mut out);
    out.sort();
    out.dedup();
    out
}

/// Sparse Gauss-Jordan over the rationals; returns the particular solution
/// with free unknowns set to zero, or `None` when inconsistent.
fn solve_rational(
    mut rows: Vec<BTreeMap<usize, Rat>>,
    mut rhs: Vec<Rat>,
    n: usize,
) -> Option<Vec<Rat>> {
    let mut pivot_of_col: BTreeMap<usize, usize> = BTreeMap::new();
    let mut row_used = vec![false; rows.len()];
    for col in 0..n {
        let Some(pr) = (0..rows.len())
            .find(|&r| !row_used[r] && rows[r].get(&col).map_or(false, |v| !v.is_zero()))
        else {
            continue;
        };
        let scale = rows[pr][&col].clone().recip();
        let prow: BTreeMap<usize, Rat> =
            rows[pr].iter().map(|(k, v)| (*k, v * &scale)).collect();
        let prhs = &rhs[pr] * &scale;
        rows[pr] = prow.clone();
        rhs[pr] = prhs.clone();
        for r in 0..rows.len() {
            if r == pr {
                continue;
            }
            let Some(f) = rows[r].get(&col).cloned() else { continue };
            if f.is_zero() {
                continue;
            }
            for (k, v) in &prow {
                let entry = rows[r].entry(*k).or_insert_with(Rat::zero);
                *entry -= &f * v;
                if entry.is_zero() {
                    let k = *k;
                    rows[r].remove(&k);
                }
            }
            rhs[r] = &rhs[r] - &(&f * &prhs);
        }
        row_used[pr] = true;
        pivot_of_col.insert(col, pr);
    }
    for r in 0..rows.len() {
        if !row_used[r] && rows[r].is_empty() && !rhs[r].is_zero() {
            return None;
        }
        if !row_used[r] && !rows[r].is_empty() {
            // Cannot happen: every nonzero column was offered a pivot.
            unreachable!("unprocessed nonzero row after full elimination");
        }
    }
    let mut x = vec![Rat::zero(); n];
    for (col, pr) in pivot_of_col {
        x[col] = rhs[pr].clone();
    }
    Some(x)
}
