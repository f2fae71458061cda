//! Matrix representations and zero-curvature certificates.
//!
//! A connection solved by [`crate::prolong::solve_determining`] lives in a
//! free Lie algebra with relations. Once the holonomy closure expresses the
//! generators over a finite basis, any matrix representation of that basis
//! turns the connection into a concrete Lax pair `U dx + V dt`. This module
//! verifies candidate representations against a bracket table, searches for
//! upper triangular ones, assembles the pair, and checks the compatibility
//! condition by exact total-derivative arithmetic.

use std::collections::{BTreeMap, BTreeSet};

use crate::context::{Context, CoordId, CoordKind};
use crate::error::Error;
use crate::lie::{LieElement, LieMonomial, StructureConstants};
use crate::matrix::PolyMatrix;
use crate::poly::{rat_int, ScalarPoly};
use crate::prolong::{EvolutionPDE, HolonomyClosure, ProlongationSolution};
use crate::Result;

/// Named square matrices over a shared scalar context.
#[derive(Debug, Clone)]
pub struct MatrixRep {
    ctx: Context,
    dim: usize,
    mats: BTreeMap<String, PolyMatrix>,
}

impl MatrixRep {
    pub fn new(mats: BTreeMap<String, PolyMatrix>) -> Result<MatrixRep> {
        let first = mats.values().next().ok_or(Error::DimensionMismatch)?;
        let ctx = first.context().clone();
        let dim = first.rows();
        let mut out = BTreeMap::new();
        for (name, m) in &mats {
            if !m.is_square() || m.rows() != dim {
                return Err(Error::DimensionMismatch);
            }
            out.insert(name.clone(), m.transport(&ctx)?);
        }
        Ok(MatrixRep { ctx, dim, mats: out })
    }

    /// Parses entry strings, one matrix per named generator.
    pub fn from_entries(ctx: &Context, entries: &[(String, Vec<Vec<String>>)]) -> Result<MatrixRep> {
        let mut mats = BTreeMap::new();
        for (name, rows) in entries {
            mats.insert(name.clone(), PolyMatrix::parse_rows(ctx, rows)?);
        }
        MatrixRep::new(mats)
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.mats.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&PolyMatrix> {
        self.mats.get(name)
    }

    /// Image of a Lie element, with coefficients carried into `ctx`.
    pub fn apply_in(&self, ctx: &Context, e: &LieElement) -> Result<PolyMatrix> {
        apply_map(&self.mats, self.dim, ctx, e)
    }

    /// Substitutes scalar values for coordinates in every entry.
    pub fn substitute(&self, map: &BTreeMap<CoordId, ScalarPoly>) -> Result<MatrixRep> {
        let mut mats = BTreeMap::new();
        for (name, m) in &self.mats {
            mats.insert(name.clone(), m.substitute(map)?);
        }
        Ok(MatrixRep { ctx: self.ctx.clone(), dim: self.dim, mats })
    }
}

fn apply_map(
    mats: &BTreeMap<String, PolyMatrix>,
    dim: usize,
    ctx: &Context,
    e: &LieElement,
) -> Result<PolyMatrix> {
    fn mono_image(
        mats: &BTreeMap<String, PolyMatrix>,
        ctx: &Context,
        gens: &crate::lie::LieContext,
        m: &LieMonomial,
    ) -> Result<PolyMatrix> {
        match m {
            LieMonomial::Gen(g) => {
                let name = gens.name(*g);
                mats.get(name)
                    .ok_or_else(|| Error::UnknownGenerator(name.to_string()))?
                    .transport(ctx)
            }
            LieMonomial::Bracket(l, r) => {
                let lv = mono_image(mats, ctx, gens, l)?;
                let rv = mono_image(mats, ctx, gens, r)?;
                lv.commutator(&rv)
            }
        }
    }
    let mut out = PolyMatrix::zero(ctx, dim, dim);
    for (m, c) in e.terms() {
        let img = mono_image(mats, ctx, e.generators(), m)?;
        out = out.checked_add(&img.scale(&c.transport(ctx)?))?;
    }
    Ok(out)
}

/// Outcome of checking a representation against a bracket table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RepReport {
    pub verified: bool,
    /// Bracket pairs whose commutator misses the table, as `[a,b]` strings.
    pub failures: Vec<String>,
}

/// Checks `[rep(e_i), rep(e_k)] = sum_j c^j_{ik} rep(e_j)` exactly.
pub fn verify_table_rep(rep: &MatrixRep, table: &StructureConstants) -> Result<RepReport> {
    let names = table.names();
    let mut failures = Vec::new();
    for i in 0..names.len() {
        for k in (i + 1)..names.len() {
            let mi = rep.get(&names[i]).ok_or_else(|| Error::UnknownGenerator(names[i].clone()))?;
            let mk = rep.get(&names[k]).ok_or_else(|| Error::UnknownGenerator(names[k].clone()))?;
            let mut rhs = PolyMatrix::zero(&rep.ctx, rep.dim, rep.dim);
            for (j, name) in names.iter().enumerate() {
                let c = table.entry(j, i, k).transport(&rep.ctx)?;
                if !c.is_zero() {
                    let mj = rep.get(name).ok_or_else(|| Error::UnknownGenerator(name.clone()))?;
                    rhs = rhs.checked_add(&mj.scale(&c))?;
                }
            }
            let residual = &mi.commutator(mk)? - &rhs;
            if !residual.is_zero() {
                failures.push(format!("[{},{}]", names[i], names[k]));
            }
        }
    }
    Ok(RepReport { verified: failures.is_empty(), failures })
}

/// Checks a matrix family against the whole solved system: the closed bracket
/// table, the expansions of the generators outside the closed basis, and the
/// original free-algebra relations, all identically in the parameters.
///
/// Matrices for expanded generators are optional; when present they must
/// equal the matrix their expansion produces.
pub fn verify_solution_rep(
    sol: &ProlongationSolution,
    close: &HolonomyClosure,
    rep: &MatrixRep,
) -> Result<RepReport> {
    let missing: Vec<&str> = close
        .parameters
        .iter()
        .filter(|p| rep.ctx.id(p).is_none())
        .map(|p| p.as_str())
        .collect();
    let ctx = rep.ctx.with_parameters(&missing)?;

    let table_report = verify_table_rep(rep, &close.table)?;
    let mut failures = table_report.failures;

    let mut images: BTreeMap<String, PolyMatrix> = BTreeMap::new();
    for name in &close.basis {
        let m = rep.get(name).ok_or_else(|| Error::UnknownGenerator(name.clone()))?;
        images.insert(name.clone(), m.transport(&ctx)?);
    }
    for (name, expansion) in &close.expansions {
        let expected = rep.apply_in(&ctx, expansion)?;
        match rep.get(name) {
            Some(given) => {
                let given = given.transport(&ctx)?;
                if !(&given - &expected).is_zero() {
                    failures.push(format!("{name} != expansion"));
                }
                images.insert(name.clone(), given);
            }
            None => {
                images.insert(name.clone(), expected);
            }
        }
    }
    for rel in sol.relations() {
        let img = apply_map(&images, rep.dim, &ctx, rel)?;
        if !img.is_zero() {
            failures.push(format!("relation {rel}"));
        }
    }
    Ok(RepReport { verified: failures.is_empty(), failures })
}

/// One solution branch of the representation search.
#[derive(Debug, Clone)]
pub struct RepFamily {
    /// Solved template entries in chronological order.
    pub bindings: Vec<(String, ScalarPoly)>,
    /// Template entries that stayed free, kept as parameters.
    pub free: Vec<String>,
    pub rep: MatrixRep,
    /// True when some basis element maps to the zero matrix.
    pub degenerate: bool,
    /// Constraints the solver could not dispatch; empty on full solutions.
    pub unresolved: Vec<ScalarPoly>,
}

const SEARCH_DEPTH_CAP: usize = 8;
const SEARCH_FAMILY_CAP: usize = 64;

/// Searches for upper triangular representations of a bracket table.
///
/// Every basis element gets a template with one unknown per entry on or
/// above the diagonal. The commutator constraints are solved by eliminating
/// unknowns that occur linearly with rational coefficients; when only
/// products remain, the search branches on the factors of the monomial
/// content, so each returned family carries its own binding list.
pub fn search_table_rep(table: &StructureConstants, dim: usize) -> Result<Vec<RepFamily>> {
    if dim == 0 {
        return Err(Error::DimensionMismatch);
    }
    let names = table.names().to_vec();
    let params: Vec<String> = table
        .context()
        .ids()
        .filter(|c| table.context().kind(*c) == CoordKind::Parameter)
        .map(|c| table.context().name(c).to_string())
        .collect();
    let mut unknowns = Vec::new();
    for b in 0..names.len() {
        for r in 0..dim {
            for c in r..dim {
                unknowns.push(format!("m{b}{r}{c}"));
            }
        }
    }
    let mut builder = Context::builder();
    for p in &params {
        builder = builder.parameter(p)?;
    }
    for u in &unknowns {
        builder = builder.parameter(u)?;
    }
    let ctx = builder.build();
    let uids: Vec<CoordId> = unknowns.iter().map(|u| ctx.require(u)).collect::<Result<_>>()?;

    let mut templates = Vec::new();
    for b in 0..names.len() {
        let mut m = PolyMatrix::zero(&ctx, dim, dim);
        for r in 0..dim {
            for c in r..dim {
                m.set(r, c, ScalarPoly::var(&ctx, &format!("m{b}{r}{c}"))?);
            }
        }
        templates.push(m);
    }

    let mut eqs = Vec::new();
    for i in 0..names.len() {
        for k in (i + 1)..names.len() {
            let mut rhs = PolyMatrix::zero(&ctx, dim, dim);
            for (j, _) in names.iter().enumerate() {
                let c = table.entry(j, i, k).transport(&ctx)?;
                if !c.is_zero() {
                    rhs = rhs.checked_add(&templates[j].scale(&c))?;
                }
            }
            let residual = &templates[i].commutator(&templates[k])? - &rhs;
            for r in 0..dim {
                for c in 0..dim {
                    let e = residual.at(r, c);
                    if !e.is_zero() {
                        eqs.push(e.clone());
                    }
                }
            }
        }
    }

    let mut families = Vec::new();
    branch_solve(&ctx, &uids, eqs, Vec::new(), 0, &mut families)?;

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (bindings, unresolved) in families {
        let key = bindings
            .iter()
            .map(|(q, v)| format!("{}={v};", ctx.name(*q)))
            .collect::<String>();
        if !seen.insert(key) {
            continue;
        }
        let map: BTreeMap<CoordId, ScalarPoly> = bindings.iter().cloned().collect();
        let mut mats = BTreeMap::new();
        let mut degenerate = false;
        for (b, name) in names.iter().enumerate() {
            let m = templates[b].substitute(&map)?;
            if m.is_zero() {
                degenerate = true;
            }
            mats.insert(name.clone(), m);
        }
        let bound: BTreeSet<CoordId> = map.keys().copied().collect();
        let free = uids
            .iter()
            .filter(|q| !bound.contains(q))
            .map(|q| ctx.name(*q).to_string())
            .collect();
        let named = bindings
            .iter()
            .map(|(q, v)| (ctx.name(*q).to_string(), v.clone()))
            .collect();
        out.push(RepFamily {
            bindings: named,
            free,
            rep: MatrixRep { ctx: ctx.clone(), dim, mats },
            degenerate,
            unresolved,
        });
    }
    Ok(out)
}

/// Depth-first case split; records `(bindings, unresolved)` per branch.
fn branch_solve(
    ctx: &Context,
    unknowns: &[CoordId],
    mut eqs: Vec<ScalarPoly>,
    mut bindings: Vec<(CoordId, ScalarPoly)>,
    depth: usize,
    out: &mut Vec<(Vec<(CoordId, ScalarPoly)>, Vec<ScalarPoly>)>,
) -> Result<()> {
    if out.len() >= SEARCH_FAMILY_CAP {
        return Err(Error::RewriteBudget(SEARCH_FAMILY_CAP));
    }
    let bound: BTreeSet<CoordId> = bindings.iter().map(|(q, _)| *q).collect();
    let mut done: BTreeSet<CoordId> = bound;
    loop {
        let mut pick: Option<(CoordId, crate::poly::Rat, usize)> = None;
        'scan: for (ei, eq) in eqs.iter().enumerate() {
            if eq.is_zero() {
                continue;
            }
            for q in unknowns {
                if done.contains(q) || eq.degree_in(*q) != 1 {
                    continue;
                }
                if let Some(r) = eq.partial(*q).as_rational() {
                    pick = Some((*q, r, ei));
                    break 'scan;
                }
            }
        }
        let Some((q, r, ei)) = pick else { break };
        let mut at_zero = BTreeMap::new();
        at_zero.insert(q, ScalarPoly::zero(ctx));
        let value = eqs[ei].substitute(&at_zero)?.scale(&-r.recip());
        let mut bind = BTreeMap::new();
        bind.insert(q, value.clone());
        for e in eqs.iter_mut() {
            *e = e.substitute(&bind)?;
        }
        for (_, v) in bindings.iter_mut() {
            *v = v.substitute(&bind)?;
        }
        bindings.push((q, value));
        done.insert(q);
    }
    eqs.retain(|e| !e.is_zero());
    if eqs.iter().any(|e| e.is_constant()) {
        // A nonzero constant constraint: contradictory branch.
        return Ok(());
    }
    let Some(split) = eqs.iter().position(|e| !e.monomial_content().is_unit()) else {
        let unresolved = eqs.clone();
        out.push((bindings, unresolved));
        return Ok(());
    };
    if depth >= SEARCH_DEPTH_CAP {
        out.push((bindings, eqs));
        return Ok(());
    }
    let content = eqs[split].monomial_content();
    for v in content.coords() {
        let mut bind = BTreeMap::new();
        bind.insert(v, ScalarPoly::zero(ctx));
        let mut sub_eqs = Vec::new();
        for e in &eqs {
            sub_eqs.push(e.substitute(&bind)?);
        }
        let mut sub_bind = bindings.clone();
        for (_, val) in sub_bind.iter_mut() {
            *val = val.substitute(&bind)?;
        }
        sub_bind.push((v, ScalarPoly::zero(ctx)));
        branch_solve(ctx, unknowns, sub_eqs, sub_bind, depth + 1, out)?;
    }
    // Remaining branch: every content variable is nonzero, so the primitive
    // part must vanish instead.
    let divisor = ScalarPoly::monomial(ctx, content, rat_int(1));
    let primitive = eqs[split].try_div_exact(&divisor)?;
    let mut sub_eqs = eqs.clone();
    sub_eqs[split] = primitive;
    branch_solve(ctx, unknowns, sub_eqs, bindings, depth + 1, out)
}

/// Lax pair over an enlarged jet context, together with the matrix images
/// of every connection generator.
#[derive(Debug, Clone)]
pub struct LaxPair {
    pub ctx: Context,
    pub u: PolyMatrix,
    pub v: PolyMatrix,
    pub images: BTreeMap<String, PolyMatrix>,
}

/// Applies a verified basis representation to the solved connection.
///
/// The scalar context gains enough jet coordinates for the compatibility
/// check: the `t` derivative of `bx` needs prolonged flow derivatives up to
/// order `2k - 1` for a `k`-th order equation.
pub fn assemble_lax(
    sol: &ProlongationSolution,
    close: &HolonomyClosure,
    rep: &MatrixRep,
) -> Result<LaxPair> {
    if !close.verified {
        return Err(Error::UnverifiedRep);
    }
    if !verify_table_rep(rep, &close.table)?.verified {
        return Err(Error::UnverifiedRep);
    }
    let pde = sol.pde();
    let k = pde.order();
    let mut names: Vec<String> = pde.parameters();
    for p in &close.parameters {
        if !names.contains(p) {
            names.push(p.clone());
        }
    }
    for c in rep.ctx.ids() {
        if rep.ctx.kind(c) == CoordKind::Parameter {
            let n = rep.ctx.name(c).to_string();
            if !names.contains(&n) {
                names.push(n);
            }
        }
    }
    let mut builder = Context::builder()
        .base("x")?
        .base("t")?
        .jets(pde.variable(), 2 * k - 1)?;
    for n in &names {
        builder = builder.parameter(n)?;
    }
    let ctx = builder.build();

    let mut images: BTreeMap<String, PolyMatrix> = BTreeMap::new();
    for name in close.basis.iter() {
        let m = rep.get(name).ok_or_else(|| Error::UnknownGenerator(name.clone()))?;
        images.insert(name.clone(), m.transport(&ctx)?);
    }
    for (name, expansion) in &close.expansions {
        images.insert(name.clone(), rep.apply_in(&ctx, expansion)?);
    }
    // `U`, `V` drive the linear problem `psi_x = U psi`, `psi_t = V psi`
    // obtained from parallel transport `d(psi) + W psi = 0`, hence the sign.
    let u = -&apply_map(&images, rep.dim, &ctx, sol.bx())?;
    let v = -&apply_map(&images, rep.dim, &ctx, sol.bt())?;
    Ok(LaxPair { ctx, u, v, images })
}

/// Total `x` derivative: jets shift up by one.
fn total_x(ctx: &Context, var: &str, p: &ScalarPoly) -> Result<ScalarPoly> {
    let mut out = p.partial(ctx.require("x")?);
    let top = ctx.max_jet_order().unwrap_or(0);
    for i in 0..=top {
        let ui = ctx.require(&format!("{var}{i}"))?;
        let dp = p.partial(ui);
        if dp.is_zero() {
            continue;
        }
        if i == top {
            return Err(Error::UnknownCoordinate(format!("{var}{}", top + 1)));
        }
        let next = ScalarPoly::coordinate(ctx, ctx.require(&format!("{var}{}", i + 1))?);
        out = out.checked_add(&dp.checked_mul(&next)?)?;
    }
    Ok(out)
}

/// Total `t` derivative along the flow `u_t = F`: the `i`-th jet moves with
/// the `i`-th prolongation `D_x^i F`.
fn total_t(
    ctx: &Context,
    var: &str,
    flow: &[ScalarPoly],
    p: &ScalarPoly,
) -> Result<ScalarPoly> {
    let mut out = p.partial(ctx.require("t")?);
    for (i, fi) in flow.iter().enumerate() {
        let ui = ctx.require(&format!("{var}{i}"))?;
        let dp = p.partial(ui);
        if !dp.is_zero() {
            out = out.checked_add(&dp.checked_mul(fi)?)?;
        }
    }
    Ok(out)
}

/// Exact compatibility check for a Lax pair.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CurvatureReport {
    /// `D_t U - D_x V + [U, V]`, the compatibility expression for the linear
    /// problem `psi_x = U psi`, `psi_t = V psi`, pulled back to the flow jets.
    pub residual: PolyMatrix,
    pub flat: bool,
}

pub fn verify_zero_curvature(pde: &EvolutionPDE, pair: &LaxPair) -> Result<CurvatureReport> {
    let ctx = &pair.ctx;
    let var = pde.variable();
    let f = pde.rhs().transport(ctx)?;
    let top = ctx.max_jet_order().ok_or(Error::DimensionMismatch)?;

    // Highest jet the `t` derivative of `U` actually touches.
    let mut need = 0u32;
    for r in 0..pair.u.rows() {
        for c in 0..pair.u.cols() {
            for coord in pair.u.at(r, c).support() {
                if let CoordKind::Jet { order } = ctx.kind(coord) {
                    need = need.max(order);
                }
            }
        }
    }
    let mut flow = vec![f];
    for _ in 0..need {
        let prev = flow.last().expect("seeded with the right-hand side");
        flow.push(total_x(ctx, var, prev)?);
    }
    let _ = top;

    let dxv = pair.v.try_map(|p| total_x(ctx, var, p))?;
    let dtu = pair.u.try_map(|p| total_t(ctx, var, &flow, p))?;
    let residual = &(&dtu - &dxv) + &pair.u.commutator(&pair.v)?;
    let flat = residual.is_zero();
    Ok(CurvatureReport { residual, flat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prolong::{
        connection_ansatz, contact_ideal, derive_determining, holonomy_close,
        holonomy_filtration, solve_determining,
    };

    fn quadratic_flow() -> (ProlongationSolution, HolonomyClosure) {
        let pde = EvolutionPDE::parse("u", "u0*u1 + u2", &[]).unwrap();
        let ideal = contact_ideal(&pde).unwrap();
        let ansatz = connection_ansatz(&ideal, 1, 2).unwrap();
        let sys = derive_determining(&ideal, &ansatz).unwrap();
        let sol = solve_determining(&sys).unwrap();
        let filt = holonomy_filtration(&sol, 0).unwrap();
        let close = holonomy_close(&sol, &filt).unwrap();
        (sol, close)
    }

    fn diagonal_rep(ctx: &Context) -> MatrixRep {
        MatrixRep::from_entries(
            ctx,
            &[
                (
                    "A1".to_string(),
                    vec![
                        vec!["1/4".to_string(), "0".to_string()],
                        vec!["0".to_string(), "-1/4".to_string()],
                    ],
                ),
                (
                    "A3".to_string(),
                    vec![
                        vec!["0".to_string(), "1".to_string()],
                        vec!["0".to_string(), "0".to_string()],
                    ],
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn table_rep_verifies_exactly_and_flags_mismatches() {
        let (_, close) = quadratic_flow();
        let rep = diagonal_rep(close.table.context());
        let report = verify_table_rep(&rep, &close.table).unwrap();
        assert!(report.verified);
        assert!(report.failures.is_empty());

        let bad = MatrixRep::from_entries(
            close.table.context(),
            &[
                (
                    "A1".to_string(),
                    vec![
                        vec!["1/4".to_string(), "0".to_string()],
                        vec!["0".to_string(), "-1/4".to_string()],
                    ],
                ),
                (
                    "A3".to_string(),
                    vec![
                        vec!["0".to_string(), "1".to_string()],
                        vec!["1".to_string(), "0".to_string()],
                    ],
                ),
            ],
        )
        .unwrap();
        let report = verify_table_rep(&bad, &close.table).unwrap();
        assert!(!report.verified);
        assert_eq!(report.failures, vec!["[A1,A3]".to_string()]);
    }

    fn entries2(name: &str, rows: [[&str; 2]; 2]) -> (String, Vec<Vec<String>>) {
        (
            name.to_string(),
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        )
    }

    #[test]
    fn four_matrix_family_satisfies_table_expansions_and_relations() {
        let (sol, close) = quadratic_flow();
        let ctx = close.table.context();
        let rep = MatrixRep::from_entries(
            ctx,
            &[
                entries2("A0", [["1/4*lambda", "-2"], ["0", "-1/4*lambda"]]),
                entries2("A1", [["1/4", "0"], ["0", "-1/4"]]),
                entries2("A2", [["-1/8*lambda^2", "lambda"], ["0", "1/8*lambda^2"]]),
                entries2("A3", [["0", "1"], ["0", "0"]]),
            ],
        )
        .unwrap();
        let report = verify_solution_rep(&sol, &close, &rep).unwrap();
        assert!(report.verified, "failures: {:?}", report.failures);

        // The two-matrix family passes too: expansions fill in A0 and A2.
        let report = verify_solution_rep(&sol, &close, &diagonal_rep(ctx)).unwrap();
        assert!(report.verified, "failures: {:?}", report.failures);

        // Breaking one entry of A0 trips the expansion identity.
        let bad = MatrixRep::from_entries(
            ctx,
            &[
                entries2("A0", [["1/4*lambda", "2"], ["0", "-1/4*lambda"]]),
                entries2("A1", [["1/4", "0"], ["0", "-1/4"]]),
                entries2("A2", [["-1/8*lambda^2", "lambda"], ["0", "1/8*lambda^2"]]),
                entries2("A3", [["0", "1"], ["0", "0"]]),
            ],
        )
        .unwrap();
        let report = verify_solution_rep(&sol, &close, &bad).unwrap();
        assert!(!report.verified);
        assert!(report.failures.iter().any(|f| f.contains("A0")), "{:?}", report.failures);
    }

    #[test]
    fn search_splits_into_a_degenerate_and_a_shifted_diagonal_family() {
        let (_, close) = quadratic_flow();
        let families = search_table_rep(&close.table, 2).unwrap();
        assert_eq!(families.len(), 2);
        assert!(families[0].degenerate);
        assert!(!families[1].degenerate);
        assert!(families.iter().all(|f| f.unresolved.is_empty()));

        let fam = &families[1];
        let named: Vec<(String, String)> = fam
            .bindings
            .iter()
            .map(|(q, v)| (q.clone(), v.to_string()))
            .collect();
        assert_eq!(
            named,
            vec![
                ("m100".to_string(), "0".to_string()),
                ("m111".to_string(), "0".to_string()),
                ("m000".to_string(), "m011 + 1/2".to_string()),
            ]
        );
        assert_eq!(
            fam.free,
            vec!["m001".to_string(), "m011".to_string(), "m101".to_string()]
        );

        // Pinning the free entries recovers the shifted diagonal pair.
        let ctx = fam.rep.context().clone();
        let mut map = BTreeMap::new();
        map.insert(ctx.require("m001").unwrap(), ScalarPoly::zero(&ctx));
        map.insert(
            ctx.require("m011").unwrap(),
            ScalarPoly::constant(&ctx, crate::poly::rat(-1, 4)),
        );
        map.insert(
            ctx.require("m101").unwrap(),
            ScalarPoly::constant(&ctx, rat_int(1)),
        );
        let pinned = fam.rep.substitute(&map).unwrap();
        let m1 = pinned.get("A1").unwrap();
        assert_eq!(m1.at(0, 0).to_string(), "1/4");
        assert_eq!(m1.at(1, 1).to_string(), "-1/4");
        assert!(m1.at(0, 1).is_zero());
        let m3 = pinned.get("A3").unwrap();
        assert_eq!(m3.at(0, 1).to_string(), "1");
        assert!(m3.at(0, 0).is_zero() && m3.at(1, 1).is_zero() && m3.at(1, 0).is_zero());
    }

    #[test]
    fn assembled_pair_is_flat_for_its_own_flow() {
        let (sol, close) = quadratic_flow();
        let rep = diagonal_rep(close.table.context());
        let pair = assemble_lax(&sol, &close, &rep).unwrap();
        assert_eq!(pair.u.at(0, 0).to_string(), "-1/4*u0 - 1/4*lambda");
        assert_eq!(pair.u.at(0, 1).to_string(), "2");
        assert!(pair.u.at(1, 0).is_zero());
        assert_eq!(
            pair.v.at(0, 0).to_string(),
            "-1/8*u0^2 + 1/8*lambda^2 - 1/4*u1"
        );
        assert_eq!(pair.v.at(0, 1).to_string(), "u0 - lambda");

        let report = verify_zero_curvature(sol.pde(), &pair).unwrap();
        assert!(report.flat);
        assert!(report.residual.is_zero());
    }

    #[test]
    fn mismatched_flow_leaves_a_quadratic_obstruction() {
        let (sol, close) = quadratic_flow();
        let rep = diagonal_rep(close.table.context());
        let pair = assemble_lax(&sol, &close, &rep).unwrap();
        let heat = EvolutionPDE::parse("u", "u2", &[]).unwrap();
        let report = verify_zero_curvature(&heat, &pair).unwrap();
        assert!(!report.flat);
        assert_eq!(report.residual.at(0, 0).to_string(), "1/4*u0*u1");
        assert!(report.residual.at(0, 1).is_zero());
        assert_eq!(report.residual.at(1, 1).to_string(), "-1/4*u0*u1");
    }

    #[test]
    fn generator_images_annihilate_the_relations() {
        let (sol, close) = quadratic_flow();
        let rep = diagonal_rep(close.table.context());
        let pair = assemble_lax(&sol, &close, &rep).unwrap();
        for rel in sol.relations() {
            let img = apply_map(&pair.images, 2, &pair.ctx, rel).unwrap();
            assert!(img.is_zero(), "relation `{rel}` must map to zero");
        }
    }
}
