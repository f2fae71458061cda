//! Prolongation structures for scalar evolution equations.
//!
//! The pipeline in this module starts from a polynomial right-hand side
//! `u_t = F(u, u_x, ...)`, encodes the equation as a closed ideal of 2-forms
//! on a low-dimensional manifold, postulates a Lie-algebra-valued connection
//! with one free generator per jet monomial, and solves the resulting
//! matching conditions. The output is an explicit connection over a free
//! Lie algebra together with the relations its generators must satisfy,
//! plus the holonomy-style filtration spanned by the curvature multipliers
//! and their covariant derivatives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Zero};

use crate::context::{Context, CoordId, CoordKind};
use crate::error::Error;
use crate::forms::{ClosureReport, DiffForm, FormIdeal, WedgeMonomial};
use crate::lie::{
    combo_add, combo_to_element, rational_slices, subalgebra_span, Echelon, GenId, LieContext,
    LieElement, LieMonomial, RatCombo, RelationSet, SpanClosure, StructureConstants,
};
use crate::poly::{rat_int, MultiIndex, Rat, ScalarPoly};
use crate::Result;

/// Highest order of equation the 2-form recipe below can encode.
pub const MAX_ENCODED_ORDER: u32 = 2;

/// Jets available while parsing a right-hand side, before the order is known.
const PROBE_ORDER: u32 = 8;

/// Scalar evolution equation `u_t = F` with polynomial right-hand side.
///
/// Jets are written `u0, u1, u2, ...` for `u, u_x, u_xx, ...`; the order of
/// the equation is the highest jet mentioned by `F`.
#[derive(Debug, Clone)]
pub struct EvolutionPDE {
    var: String,
    order: u32,
    ctx: Context,
    rhs: ScalarPoly,
}

impl EvolutionPDE {
    /// Parses a right-hand side such as `u0*u1 + u2` and infers the order.
    ///
    /// The side may mention jets and the listed parameters only; base
    /// coordinates are rejected and a side without any derivative of the
    /// unknown is refused.
    pub fn parse(var: &str, rhs: &str, parameters: &[&str]) -> Result<EvolutionPDE> {
        let mut probe = Context::builder().base("x")?.base("t")?.jets(var, PROBE_ORDER)?;
        for p in parameters {
            probe = probe.parameter(p)?;
        }
        let probe = probe.build();
        let parsed = ScalarPoly::parse(&probe, rhs)?;
        let mut order = 0;
        for c in parsed.support() {
            match probe.kind(c) {
                CoordKind::Jet { order: k } => order = order.max(k),
                CoordKind::Parameter => {}
                _ => {
                    return Err(Error::MalformedRhs(format!(
                        "`{}` may not appear in the right-hand side",
                        probe.name(c)
                    )))
                }
            }
        }
        if order == 0 {
            return Err(Error::UnsupportedOrder(0));
        }
        let mut b = Context::builder().base("x")?.base("t")?.jets(var, order)?;
        for p in parameters {
            b = b.parameter(p)?;
        }
        let ctx = b.build();
        let rhs = parsed.transport(&ctx)?;
        Ok(EvolutionPDE { var: var.to_string(), order, ctx, rhs })
    }

    pub fn variable(&self) -> &str {
        &self.var
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Full jet context `x, t, u0..u{order}` plus parameters.
    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn rhs(&self) -> &ScalarPoly {
        &self.rhs
    }

    pub fn parameters(&self) -> Vec<String> {
        self.ctx
            .ids()
            .filter(|c| self.ctx.kind(*c) == CoordKind::Parameter)
            .map(|c| self.ctx.name(c).to_string())
            .collect()
    }
}

impl fmt::Display for EvolutionPDE {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_t = {}", self.var, self.rhs)
    }
}

/// A closed ideal of 2-forms whose integral manifolds with independent
/// `x, t` are exactly the solution graphs of the encoded equation.
#[derive(Debug, Clone)]
pub struct PDEIdeal {
    pde: EvolutionPDE,
    ctx: Context,
    ideal: FormIdeal,
    closure: ClosureReport,
}

impl PDEIdeal {
    pub fn pde(&self) -> &EvolutionPDE {
        &self.pde
    }

    /// Manifold context: `x, t` and jets strictly below the equation order.
    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn ideal(&self) -> &FormIdeal {
        &self.ideal
    }

    /// Certificates showing each generator differential lies in the ideal.
    pub fn closure(&self) -> &ClosureReport {
        &self.closure
    }
}

/// Encodes a first or second order equation as a pair (or single) of
/// 2-forms and certifies closure of the generated ideal.
pub fn contact_ideal(pde: &EvolutionPDE) -> Result<PDEIdeal> {
    if pde.order > MAX_ENCODED_ORDER {
        return Err(Error::UnsupportedOrder(pde.order));
    }
    let params = pde.parameters();
    let mut b = Context::builder()
        .base("x")?
        .base("t")?
        .jets(&pde.var, pde.order - 1)?;
    for p in &params {
        b = b.parameter(p)?;
    }
    let ctx = b.build();

    let dx = DiffForm::d_coord(&ctx, ctx.require("x")?)?;
    let dt = DiffForm::d_coord(&ctx, ctx.require("t")?)?;
    let du0 = DiffForm::d_coord(&ctx, ctx.require(&format!("{}0", pde.var))?)?;

    let gens = match pde.order {
        1 => {
            let u1 = pde.ctx.require(&format!("{}1", pde.var))?;
            if pde.rhs.degree_in(u1) > 1 {
                return Err(Error::MalformedRhs(pde.rhs.to_string()));
            }
            let g = pde.rhs.partial(u1).transport(&ctx)?;
            let u1p = ScalarPoly::coordinate(&pde.ctx, u1);
            let h = pde
                .rhs
                .checked_add(&u1p.checked_mul(&pde.rhs.partial(u1))?.scale(&rat_int(-1)))?
                .transport(&ctx)?;
            let alpha = du0
                .wedge(&dx)?
                .checked_add(&du0.wedge(&dt)?.scale(&g))?
                .checked_add(&dx.wedge(&dt)?.scale(&h))?;
            vec![alpha]
        }
        2 => {
            let u1 = pde.ctx.require(&format!("{}1", pde.var))?;
            let u2 = pde.ctx.require(&format!("{}2", pde.var))?;
            let lead = pde.rhs.partial(u2);
            if lead.as_rational() != Some(rat_int(1)) {
                return Err(Error::MalformedRhs(pde.rhs.to_string()));
            }
            let rest = pde
                .rhs
                .checked_add(&ScalarPoly::coordinate(&pde.ctx, u2).scale(&rat_int(-1)))?;
            let mut at_zero = BTreeMap::new();
            at_zero.insert(u1, ScalarPoly::zero(&pde.ctx));
            let h = rest.substitute(&at_zero)?;
            let g = rest
                .checked_add(&h.scale(&rat_int(-1)))?
                .try_div_exact(&ScalarPoly::coordinate(&pde.ctx, u1))?;
            let g = g.transport(&ctx)?;
            let h = h.transport(&ctx)?;
            let u1m = ScalarPoly::var(&ctx, &format!("{}1", pde.var))?;
            let du1 = DiffForm::d_coord(&ctx, ctx.require(&format!("{}1", pde.var))?)?;
            let alpha1 = du0
                .wedge(&dt)?
                .checked_add(&dx.wedge(&dt)?.scale(&u1m.scale(&rat_int(-1))))?;
            let alpha2 = du0
                .wedge(&dx)?
                .checked_add(&du0.wedge(&dt)?.scale(&g))?
                .checked_add(&dx.wedge(&dt)?.scale(&h))?
                .checked_add(&du1.wedge(&dt)?)?;
            vec![alpha1, alpha2]
        }
        _ => unreachable!("orders outside 1..=2 rejected above"),
    };

    let ideal = FormIdeal::new(gens)?;
    let closure = ideal.is_closed(None)?;
    if !closure.closed {
        let idx = closure
            .entries
            .iter()
            .position(|e| !e.certificate.is_member())
            .unwrap_or(0);
        return Err(Error::NotClosed(idx));
    }
    Ok(PDEIdeal { pde: pde.clone(), ctx, ideal, closure })
}

/// Connection `W = bx dx + bt dt` whose coefficients carry one free Lie
/// generator per jet monomial below the requested degree bounds.
#[derive(Debug, Clone)]
pub struct ConnectionAnsatz {
    gens: LieContext,
    ctx: Context,
    bx: LieElement,
    bt: LieElement,
    x_slots: Vec<(MultiIndex, GenId)>,
    t_slots: Vec<(MultiIndex, GenId)>,
}

impl ConnectionAnsatz {
    pub fn generators(&self) -> &LieContext {
        &self.gens
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn bx(&self) -> &LieElement {
        &self.bx
    }

    pub fn bt(&self) -> &LieElement {
        &self.bt
    }

    pub fn x_slots(&self) -> &[(MultiIndex, GenId)] {
        &self.x_slots
    }

    pub fn t_slots(&self) -> &[(MultiIndex, GenId)] {
        &self.t_slots
    }
}

/// All jet monomials of total degree at most `bound`, in ascending order.
fn jet_monomials(coords: &[CoordId], bound: u32) -> Vec<MultiIndex> {
    let mut all: BTreeSet<MultiIndex> = BTreeSet::new();
    all.insert(MultiIndex::unit());
    let mut frontier: Vec<MultiIndex> = vec![MultiIndex::unit()];
    for _ in 0..bound {
        let mut next = BTreeSet::new();
        for m in &frontier {
            for c in coords {
                next.insert(m.mul(&MultiIndex::of(*c)));
            }
        }
        frontier = next.iter().cloned().collect();
        all.extend(next);
    }
    all.into_iter().collect()
}

fn jet_coords(ctx: &Context) -> Vec<CoordId> {
    ctx.ids().filter(|c| matches!(ctx.kind(*c), CoordKind::Jet { .. })).collect()
}

/// Builds the ansatz with `bx` slots named `X0, X1, ..` and `bt` slots
/// `Y0, Y1, ..`, each slot paired with its jet monomial in ascending order.
pub fn connection_ansatz(
    ideal: &PDEIdeal,
    x_degree: u32,
    t_degree: u32,
) -> Result<ConnectionAnsatz> {
    let ctx = ideal.ctx.clone();
    let jets = jet_coords(&ctx);
    let x_monos = jet_monomials(&jets, x_degree);
    let t_monos = jet_monomials(&jets, t_degree);
    let mut names = Vec::new();
    for i in 0..x_monos.len() {
        names.push(format!("X{i}"));
    }
    for i in 0..t_monos.len() {
        names.push(format!("Y{i}"));
    }
    let gens = LieContext::new(&names)?;
    let mut x_slots = Vec::new();
    let mut t_slots = Vec::new();
    let mut bx_terms = BTreeMap::new();
    for (i, m) in x_monos.iter().enumerate() {
        let id = GenId(i as u32);
        x_slots.push((m.clone(), id));
        bx_terms.insert(
            LieMonomial::generator(id),
            ScalarPoly::monomial(&ctx, m.clone(), rat_int(1)),
        );
    }
    let mut bt_terms = BTreeMap::new();
    for (i, m) in t_monos.iter().enumerate() {
        let id = GenId((x_monos.len() + i) as u32);
        t_slots.push((m.clone(), id));
        bt_terms.insert(
            LieMonomial::generator(id),
            ScalarPoly::monomial(&ctx, m.clone(), rat_int(1)),
        );
    }
    let bx = LieElement::from_terms(&gens, &ctx, bx_terms);
    let bt = LieElement::from_terms(&gens, &ctx, bt_terms);
    Ok(ConnectionAnsatz { gens, ctx, bx, bt, x_slots, t_slots })
}

/// Wedge monomial a matching condition was read off from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ConditionKind {
    /// Coefficient of `du_i ^ dx`: a jet derivative of `bx`.
    XPartial(u32),
    /// Coefficient of `du_i ^ dt`: a jet derivative of `bt`.
    TPartial(u32),
    /// Coefficient of `dx ^ dt`: the `[bx, bt]` term.
    Curvature,
    /// Any other wedge monomial.
    Mixed,
}

/// One matching condition `element = 0`.
#[derive(Debug, Clone)]
pub struct Condition {
    pub kind: ConditionKind,
    pub wedge: WedgeMonomial,
    pub element: LieElement,
}

/// Matching conditions for `dW + W ^ W = sum_j G_j alpha_j`, before and
/// after the curvature multipliers `G_j` are eliminated.
#[derive(Debug, Clone)]
pub struct DeterminingSystem {
    gens: LieContext,
    ctx: Context,
    ideal: PDEIdeal,
    ansatz: ConnectionAnsatz,
    multipliers: Vec<GenId>,
    conditions: Vec<Condition>,
    eliminated: Vec<(GenId, LieElement)>,
    reduced: Vec<Condition>,
}

impl DeterminingSystem {
    pub fn generators(&self) -> &LieContext {
        &self.gens
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn ideal(&self) -> &PDEIdeal {
        &self.ideal
    }

    pub fn ansatz(&self) -> &ConnectionAnsatz {
        &self.ansatz
    }

    /// Raw conditions, one per wedge monomial, multipliers still present.
    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    /// Multiplier assignments in elimination order.
    pub fn eliminated(&self) -> &[(GenId, LieElement)] {
        &self.eliminated
    }

    /// Multiplier-free conditions that remain to be solved.
    pub fn reduced(&self) -> &[Condition] {
        &self.reduced
    }
}

fn mentions(m: &LieMonomial, id: GenId) -> bool {
    match m {
        LieMonomial::Gen(g) => *g == id,
        LieMonomial::Bracket(l, r) => mentions(l, id) || mentions(r, id),
    }
}

fn mentions_any(m: &LieMonomial, ids: &BTreeSet<GenId>) -> bool {
    match m {
        LieMonomial::Gen(g) => ids.contains(g),
        LieMonomial::Bracket(l, r) => mentions_any(l, ids) || mentions_any(r, ids),
    }
}

/// Wedge components of `d(bx dx + bt dt) + [bx, bt] dx ^ dt`, keyed by the
/// canonical wedge monomial.
fn two_form_components(
    bx: &LieElement,
    bt: &LieElement,
) -> Result<BTreeMap<WedgeMonomial, LieElement>> {
    let ctx = bx.context().clone();
    let gens = bx.generators().clone();
    let x = ctx.require("x")?;
    let t = ctx.require("t")?;
    let mut out: BTreeMap<WedgeMonomial, LieElement> = BTreeMap::new();
    let add = |out: &mut BTreeMap<WedgeMonomial, LieElement>,
                   coords: &[CoordId],
                   e: LieElement|
     -> Result<()> {
        if e.is_zero() {
            return Ok(());
        }
        let (sign, mono) = WedgeMonomial::from_coords(coords).expect("distinct coordinates");
        let e = e.scale_rat(&rat_int(sign as i64));
        let slot = out.entry(mono).or_insert_with(|| LieElement::zero(&gens, &ctx));
        *slot = slot.checked_add(&e)?;
        Ok(())
    };
    for c in jet_coords(&ctx) {
        add(&mut out, &[c, x], bx.partial(c))?;
        add(&mut out, &[c, t], bt.partial(c))?;
    }
    add(&mut out, &[x, t], bx.bracket(bt)?)?;
    out.retain(|_, e| !e.is_zero());
    Ok(out)
}

fn classify(ctx: &Context, wedge: &WedgeMonomial) -> ConditionKind {
    let coords = wedge.coords();
    if coords.len() != 2 {
        return ConditionKind::Mixed;
    }
    let kinds = (ctx.kind(coords[0]), ctx.kind(coords[1]));
    match kinds {
        (CoordKind::Base, CoordKind::Base) => ConditionKind::Curvature,
        (CoordKind::Base, CoordKind::Jet { order }) => {
            if ctx.name(coords[0]) == "x" {
                ConditionKind::XPartial(order)
            } else {
                ConditionKind::TPartial(order)
            }
        }
        _ => ConditionKind::Mixed,
    }
}

fn kind_rank(kind: ConditionKind) -> (u8, u32) {
    match kind {
        ConditionKind::XPartial(i) => (0, i),
        ConditionKind::TPartial(i) => (1, i),
        ConditionKind::Mixed => (2, 0),
        ConditionKind::Curvature => (3, 0),
    }
}

/// Expands the curvature of the ansatz, matches it against the ideal
/// generators with one fresh multiplier `G_j` per generator, and eliminates
/// every multiplier that occurs bare with a rational coefficient.
pub fn derive_determining(
    ideal: &PDEIdeal,
    ansatz: &ConnectionAnsatz,
) -> Result<DeterminingSystem> {
    let ctx = ansatz.ctx.clone();
    let g_names: Vec<String> =
        (1..=ideal.ideal.generators().len()).map(|j| format!("G{j}")).collect();
    let gens = ansatz.gens.with_generators(&g_names)?;
    let multipliers: Vec<GenId> =
        g_names.iter().map(|n| gens.require(n)).collect::<Result<_>>()?;

    let bx = ansatz.bx.transport(&gens, &ctx)?;
    let bt = ansatz.bt.transport(&gens, &ctx)?;
    let mut components = two_form_components(&bx, &bt)?;
    for (j, alpha) in ideal.ideal.generators().iter().enumerate() {
        for (w, p) in alpha.terms() {
            let term = LieElement::monomial(
                &gens,
                LieMonomial::generator(multipliers[j]),
                p.scale(&rat_int(-1)),
            );
            let slot = components
                .entry(w.clone())
                .or_insert_with(|| LieElement::zero(&gens, &ctx));
            *slot = slot.checked_add(&term)?;
        }
    }

    let mut conditions: Vec<Condition> = components
        .into_iter()
        .filter(|(_, e)| !e.is_zero())
        .map(|(wedge, element)| Condition { kind: classify(&ctx, &wedge), wedge, element })
        .collect();
    conditions.sort_by_key(|c| kind_rank(c.kind));

    let mset: BTreeSet<GenId> = multipliers.iter().copied().collect();
    let mut work = conditions.clone();
    let mut eliminated: Vec<(GenId, LieElement)> = Vec::new();
    let mut assigned: BTreeSet<GenId> = BTreeSet::new();
    loop {
        let mut pick: Option<(usize, GenId, Rat)> = None;
        for (i, cond) in work.iter().enumerate() {
            let mut bare: Vec<(GenId, Rat)> = Vec::new();
            let mut blocked = false;
            for (m, c) in cond.element.terms() {
                match m {
                    LieMonomial::Gen(g) if mset.contains(g) => match c.as_rational() {
                        Some(r) => bare.push((*g, r)),
                        None => blocked = true,
                    },
                    LieMonomial::Gen(_) => {}
                    bracket => {
                        if mentions_any(bracket, &mset) {
                            blocked = true;
                        }
                    }
                }
            }
            if !blocked && bare.len() == 1 {
                let (g, r) = bare.pop().expect("one bare multiplier");
                pick = Some((i, g, r));
                break;
            }
        }
        let Some((i, g, r)) = pick else { break };
        let gterm = LieElement::monomial(
            &gens,
            LieMonomial::generator(g),
            ScalarPoly::constant(&ctx, r.clone()),
        );
        let rest = work[i].element.checked_add(&gterm.scale_rat(&rat_int(-1)))?;
        let value = rest.scale_rat(&-r.recip());
        let mut bind = BTreeMap::new();
        bind.insert(g, value.clone());
        for c in work.iter_mut() {
            c.element = c.element.substitute_generators(&bind)?;
        }
        for (_, v) in eliminated.iter_mut() {
            *v = v.substitute_generators(&bind)?;
        }
        eliminated.push((g, value));
        assigned.insert(g);
    }
    for cond in &work {
        if let Some((m, _)) = cond.element.terms().find(|(m, _)| mentions_any(m, &mset)) {
            let name = gens
                .ids()
                .find(|g| mset.contains(g) && mentions(m, *g))
                .map(|g| gens.name(g).to_string())
                .unwrap_or_default();
            return Err(Error::MultiplierElimination(name));
        }
    }
    if eliminated.len() != multipliers.len() {
        let missing = multipliers
            .iter()
            .find(|g| !assigned.contains(g))
            .expect("unassigned multiplier exists");
        return Err(Error::MultiplierElimination(gens.name(*missing).to_string()));
    }
    let reduced: Vec<Condition> = work.into_iter().filter(|c| !c.element.is_zero()).collect();

    Ok(DeterminingSystem {
        gens,
        ctx,
        ideal: ideal.clone(),
        ansatz: ansatz.clone(),
        multipliers,
        conditions,
        eliminated,
        reduced,
    })
}

/// Solved prolongation: the connection over a freshly named free Lie
/// algebra `A0, A1, ..`, the curvature multipliers, and the relations the
/// generators satisfy.
#[derive(Debug, Clone)]
pub struct ProlongationSolution {
    gens: LieContext,
    ctx: Context,
    ideal: PDEIdeal,
    bx: LieElement,
    bt: LieElement,
    multipliers: Vec<LieElement>,
    relations: Vec<LieElement>,
    relation_set: RelationSet,
    assignments: Vec<(String, LieElement)>,
    renames: Vec<(String, String)>,
}

impl ProlongationSolution {
    pub fn generators(&self) -> &LieContext {
        &self.gens
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn ideal(&self) -> &PDEIdeal {
        &self.ideal
    }

    pub fn pde(&self) -> &EvolutionPDE {
        &self.ideal.pde
    }

    pub fn bx(&self) -> &LieElement {
        &self.bx
    }

    pub fn bt(&self) -> &LieElement {
        &self.bt
    }

    /// Curvature multipliers, one per ideal generator.
    pub fn multipliers(&self) -> &[LieElement] {
        &self.multipliers
    }

    /// Leftover determining equations, monic, in discovery order.
    pub fn relations(&self) -> &[LieElement] {
        &self.relations
    }

    pub fn relation_set(&self) -> &RelationSet {
        &self.relation_set
    }

    /// Solved slot assignments in chronological order, over slot names.
    pub fn assignments(&self) -> &[(String, LieElement)] {
        &self.assignments
    }

    /// Surviving slot renames as `(slot, generator)` pairs.
    pub fn renames(&self) -> &[(String, String)] {
        &self.renames
    }
}

fn occurs_outside_bare(eq: &LieElement, g: GenId) -> bool {
    let bare = LieMonomial::generator(g);
    eq.terms().any(|(m, _)| *m != bare && mentions(m, g))
}

/// Solves the reduced conditions slot by slot.
///
/// Each condition is sliced along jet monomials; a slice is solvable when
/// some slot occurs as a bare generator with a rational coefficient and
/// nowhere else in the slice. The latest such slot is eliminated and the
/// assignment substituted everywhere, until no slice is solvable. Leftover
/// slices become relations, surviving slots are renamed `A0, A1, ..`, and
/// the curvature is recombined from the solved data as a final check.
pub fn solve_determining(sys: &DeterminingSystem) -> Result<ProlongationSolution> {
    let gens = &sys.gens;
    let ctx = &sys.ctx;
    let slot_set: BTreeSet<GenId> = sys
        .ansatz
        .x_slots
        .iter()
        .chain(sys.ansatz.t_slots.iter())
        .map(|(_, id)| *id)
        .collect();

    let mut slices: Vec<LieElement> = Vec::new();
    for cond in &sys.reduced {
        let by_mono = cond.element.split_by(|c| matches!(ctx.kind(c), CoordKind::Jet { .. }));
        for (_, e) in by_mono {
            slices.push(e);
        }
    }

    let mut assigned: Vec<(GenId, LieElement)> = Vec::new();
    let mut done: BTreeSet<GenId> = BTreeSet::new();
    loop {
        let mut pick: Option<(usize, GenId, Rat)> = None;
        'scan: for (i, eq) in slices.iter().enumerate() {
            if eq.is_zero() {
                continue;
            }
            let mut best: Option<(GenId, Rat)> = None;
            for (m, c) in eq.terms() {
                let LieMonomial::Gen(g) = m else { continue };
                if !slot_set.contains(g) || done.contains(g) {
                    continue;
                }
                let Some(r) = c.as_rational() else { continue };
                if occurs_outside_bare(eq, *g) {
                    continue;
                }
                if best.as_ref().map_or(true, |(b, _)| g > b) {
                    best = Some((*g, r));
                }
            }
            if let Some((g, r)) = best {
                pick = Some((i, g, r));
                break 'scan;
            }
        }
        let Some((i, g, r)) = pick else { break };
        let gterm = LieElement::monomial(
            gens,
            LieMonomial::generator(g),
            ScalarPoly::constant(ctx, r.clone()),
        );
        let rest = slices[i].checked_add(&gterm.scale_rat(&rat_int(-1)))?;
        let value = rest.scale_rat(&-r.recip());
        let mut bind = BTreeMap::new();
        bind.insert(g, value.clone());
        for s in slices.iter_mut() {
            *s = s.substitute_generators(&bind)?;
        }
        for (_, v) in assigned.iter_mut() {
            *v = v.substitute_generators(&bind)?;
        }
        assigned.push((g, value));
        done.insert(g);
    }

    let survivors: Vec<GenId> =
        slot_set.iter().copied().filter(|g| !done.contains(g)).collect();
    let a_names: Vec<String> = (0..survivors.len()).map(|i| format!("A{i}")).collect();
    let a_gens = LieContext::new(&a_names)?;
    let mut survivor_map: BTreeMap<GenId, LieElement> = BTreeMap::new();
    for (i, s) in survivors.iter().enumerate() {
        survivor_map.insert(*s, LieElement::generator(&a_gens, ctx, GenId(i as u32)));
    }
    let mut final_map = survivor_map.clone();
    for (g, v) in &assigned {
        final_map.insert(*g, v.substitute_generators(&survivor_map)?);
    }

    let bx = sys.ansatz.bx.substitute_generators(&final_map)?;
    let bt = sys.ansatz.bt.substitute_generators(&final_map)?;
    let multipliers: Vec<LieElement> = sys
        .multipliers
        .iter()
        .map(|g| {
            let v = sys
                .eliminated
                .iter()
                .find(|(h, _)| h == g)
                .map(|(_, v)| v.clone())
                .expect("every multiplier eliminated");
            v.substitute_generators(&final_map)
        })
        .collect::<Result<_>>()?;
    let relations: Vec<LieElement> = slices
        .iter()
        .filter(|e| !e.is_zero())
        .map(|e| Ok(e.substitute_generators(&final_map)?.monic()))
        .collect::<Result<_>>()?;
    let relation_set = RelationSet::new(relations.clone())?;

    // The curvature of the solved connection must recombine into the ideal
    // generators modulo the relations.
    let omega = two_form_components(&bx, &bt)?;
    let mut target: BTreeMap<WedgeMonomial, LieElement> = BTreeMap::new();
    for (j, alpha) in sys.ideal.ideal.generators().iter().enumerate() {
        for (w, p) in alpha.terms() {
            let slot = target
                .entry(w.clone())
                .or_insert_with(|| LieElement::zero(&a_gens, ctx));
            *slot = slot.checked_add(&multipliers[j].scale(p))?;
        }
    }
    let wedges: BTreeSet<WedgeMonomial> =
        omega.keys().chain(target.keys()).cloned().collect();
    for w in wedges {
        let lhs = omega.get(&w).cloned().unwrap_or_else(|| LieElement::zero(&a_gens, ctx));
        let rhs = target.get(&w).cloned().unwrap_or_else(|| LieElement::zero(&a_gens, ctx));
        let residual = lhs.checked_add(&rhs.scale_rat(&rat_int(-1)))?;
        if !relation_set.normalize(&residual)?.is_zero() {
            return Err(Error::Recombination(w.render(ctx)));
        }
    }

    let assignments = assigned
        .iter()
        .map(|(g, v)| (gens.name(*g).to_string(), v.clone()))
        .collect();
    let renames = survivors
        .iter()
        .enumerate()
        .map(|(i, s)| (gens.name(*s).to_string(), a_names[i].clone()))
        .collect();

    Ok(ProlongationSolution {
        gens: a_gens,
        ctx: ctx.clone(),
        ideal: sys.ideal.clone(),
        bx,
        bt,
        multipliers,
        relations,
        relation_set,
        assignments,
        renames,
    })
}

/// Rational span of the curvature multipliers and their covariant
/// derivative words up to a given length, computed in the free algebra.
///
/// Level 0 slices the multipliers along jet monomials and keeps monic
/// representatives. Each later level brackets the previous basis with the
/// connection coefficients, sweeping the `x` direction before `t`; new
/// elements keep the sign they were computed with and are named `A{n}` with
/// the next unused index. `quotient_span` reports whether the level 0 seeds
/// close under brackets once the relations are imposed.
#[derive(Debug, Clone)]
pub struct HolonomyFiltration {
    pub level: u32,
    pub names: Vec<String>,
    pub elements: Vec<LieElement>,
    pub defining: Vec<String>,
    pub stable: bool,
    pub quotient_span: SpanClosure,
}

const QUOTIENT_SPAN_DEGREE_CAP: u32 = 4;

fn single_combo(e: &LieElement) -> Option<RatCombo> {
    let mut slices = rational_slices(e);
    debug_assert!(slices.len() <= 1, "sliced element has one scalar monomial");
    slices.pop()
}

fn numeric_suffix(name: &str) -> Option<usize> {
    let digits = name.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    if digits.is_empty() || digits.len() == name.len() {
        None
    } else {
        digits.parse().ok()
    }
}

fn coefficient_label(e: &LieElement) -> String {
    let mut terms = e.terms();
    if let Some((LieMonomial::Gen(g), c)) = terms.next() {
        if terms.next().is_none() && c.as_rational() == Some(rat_int(1)) {
            return e.generators().name(*g).to_string();
        }
    }
    format!("({e})")
}

pub fn holonomy_filtration(
    sol: &ProlongationSolution,
    level: u32,
) -> Result<HolonomyFiltration> {
    let gens = &sol.gens;
    let ctx = &sol.ctx;
    let mut ech = Echelon::new();
    let mut rows: Vec<(String, LieElement, String)> = Vec::new();
    let mut fresh = sol.gens.len();
    let mut seeds: Vec<LieElement> = Vec::new();

    for (j, g) in sol.multipliers.iter().enumerate() {
        for combo in rational_slices(g) {
            if !ech.insert(combo.clone()) {
                continue;
            }
            let elem = combo_to_element(gens, ctx, &combo).monic();
            let name = match elem.terms().next() {
                Some((LieMonomial::Gen(id), c))
                    if elem.term_count() == 1 && c.as_rational() == Some(rat_int(1)) =>
                {
                    gens.name(*id).to_string()
                }
                _ => {
                    let n = format!("A{fresh}");
                    fresh += 1;
                    n
                }
            };
            seeds.push(elem.clone());
            rows.push((name, elem, format!("g{}", j + 1)));
        }
    }
    sort_by_name_index(&mut rows);

    let directions = [sol.bx.clone(), sol.bt.clone()];
    for _ in 1..=level {
        let snapshot: Vec<(String, LieElement)> =
            rows.iter().map(|(n, e, _)| (n.clone(), e.clone())).collect();
        for gamma in &directions {
            let gamma_slices = gamma.split_by(|_| true);
            for (vname, v) in &snapshot {
                for coeff in gamma_slices.values() {
                    let w = v.bracket(coeff)?;
                    let Some(combo) = single_combo(&w) else { continue };
                    if ech.insert(combo) {
                        let name = format!("A{fresh}");
                        fresh += 1;
                        rows.push((
                            name,
                            w.clone(),
                            format!("[{},{}]", vname, coefficient_label(coeff)),
                        ));
                    }
                }
            }
        }
        sort_by_name_index(&mut rows);
    }

    // One extra sweep, without inserting, to see whether the span grew.
    let mut stable = true;
    'probe: for gamma in &directions {
        let gamma_slices = gamma.split_by(|_| true);
        for (_, v, _) in &rows {
            for coeff in gamma_slices.values() {
                let w = v.bracket(coeff)?;
                if let Some(combo) = single_combo(&w) {
                    if !ech.reduce(combo).is_empty() {
                        stable = false;
                        break 'probe;
                    }
                }
            }
        }
    }

    let quotient_span =
        subalgebra_span(&seeds, &sol.relation_set, QUOTIENT_SPAN_DEGREE_CAP)?.closure;

    let (names, elements, defining) = rows.into_iter().fold(
        (Vec::new(), Vec::new(), Vec::new()),
        |(mut ns, mut es, mut ds), (n, e, d)| {
            ns.push(n);
            es.push(e);
            ds.push(d);
            (ns, es, ds)
        },
    );
    Ok(HolonomyFiltration { level, names, elements, defining, stable, quotient_span })
}

fn sort_by_name_index(rows: &mut [(String, LieElement, String)]) {
    rows.sort_by_key(|(n, _, _)| (numeric_suffix(n), n.clone()));
}

/// Finite-dimensional closure of the level 0 filtration.
///
/// The level 0 elements become the basis of a closed algebra whose bracket
/// table is read off modulo the relations. Every other generator of the
/// solution is expanded over that basis with unknown rational coefficients;
/// the defining expressions of the basis and the relations then constrain
/// the unknowns, which are solved by substitution. Unconstrained unknowns
/// are renamed to fresh parameters `lambda, lambda2, ..`. For filtrations
/// above level 0 the extra named elements are not solved for; their images
/// in the closed algebra are reported instead.
#[derive(Debug, Clone)]
pub struct HolonomyClosure {
    pub basis: Vec<String>,
    pub table: StructureConstants,
    pub expansions: BTreeMap<String, LieElement>,
    pub parameters: Vec<String>,
    /// Which unknown each fresh parameter renamed, as `(unknown, parameter)`.
    pub parameter_sources: Vec<(String, String)>,
    pub solved: Vec<(String, ScalarPoly)>,
    pub unresolved: Vec<ScalarPoly>,
    pub images: BTreeMap<String, LieElement>,
    pub verified: bool,
}

/// Tracks basis rows together with their coordinates for membership tests.
struct AugSpan {
    rows: Vec<(RatCombo, Vec<Rat>)>,
    dim: usize,
}

impl AugSpan {
    fn new(basis: &[RatCombo]) -> AugSpan {
        let mut span = AugSpan { rows: Vec::new(), dim: basis.len() };
        for (i, b) in basis.iter().enumerate() {
            let mut aug = vec![Rat::zero(); basis.len()];
            aug[i] = Rat::one();
            let inserted = span.insert(b.clone(), aug);
            debug_assert!(inserted, "basis rows are independent");
        }
        span
    }

    fn reduce(&self, mut v: RatCombo, mut aug: Vec<Rat>) -> (RatCombo, Vec<Rat>) {
        loop {
            let Some(lead) = v.keys().next_back().cloned() else { return (v, aug) };
            let Some((row, raug)) =
                self.rows.iter().find(|(r, _)| r.keys().next_back() == Some(&lead))
            else {
                return (v, aug);
            };
            let c = v[&lead].clone();
            for (m, rc) in row {
                combo_add(&mut v, m.clone(), -(&c * rc));
            }
            for (a, ra) in aug.iter_mut().zip(raug) {
                *a -= &c * ra;
            }
        }
    }

    fn insert(&mut self, v: RatCombo, aug: Vec<Rat>) -> bool {
        let (v, aug) = self.reduce(v, aug);
        let Some(lead) = v.keys().next_back().cloned() else { return false };
        let scale = v[&lead].clone().recip();
        let row: RatCombo = v.iter().map(|(m, c)| (m.clone(), c * &scale)).collect();
        let aug: Vec<Rat> = aug.iter().map(|a| a * &scale).collect();
        self.rows.push((row, aug));
        true
    }

    /// Coordinates of `v` over the original basis, if it lies in the span.
    fn express(&self, v: RatCombo) -> Option<Vec<Rat>> {
        let (rest, aug) = self.reduce(v, vec![Rat::zero(); self.dim]);
        if rest.is_empty() {
            Some(aug.iter().map(|a| -a).collect())
        } else {
            None
        }
    }
}

fn eval_in_table(
    elem: &LieElement,
    vectors: &BTreeMap<GenId, Vec<ScalarPoly>>,
    table: &StructureConstants,
    ctx: &Context,
) -> Result<Vec<ScalarPoly>> {
    fn eval_mono(
        m: &LieMonomial,
        vectors: &BTreeMap<GenId, Vec<ScalarPoly>>,
        table: &StructureConstants,
    ) -> Result<Vec<ScalarPoly>> {
        match m {
            LieMonomial::Gen(g) => {
                vectors.get(g).cloned().ok_or(Error::GeneratorMismatch)
            }
            LieMonomial::Bracket(l, r) => {
                let lv = eval_mono(l, vectors, table)?;
                let rv = eval_mono(r, vectors, table)?;
                table.bracket_vector(&lv, &rv)
            }
        }
    }
    let dim = table.dim();
    let mut acc = vec![ScalarPoly::zero(ctx); dim];
    for (m, c) in elem.terms() {
        let v = eval_mono(m, vectors, table)?;
        let c = c.transport(ctx)?;
        for (a, vi) in acc.iter_mut().zip(&v) {
            *a = a.checked_add(&vi.checked_mul(&c)?)?;
        }
    }
    Ok(acc)
}

pub fn holonomy_close(
    sol: &ProlongationSolution,
    filt: &HolonomyFiltration,
) -> Result<HolonomyClosure> {
    let base;
    let base_filt = if filt.level == 0 {
        filt
    } else {
        base = holonomy_filtration(sol, 0)?;
        &base
    };
    let basis_names = base_filt.names.clone();
    let basis_elems = base_filt.elements.clone();
    let dim = basis_elems.len();

    // Bracket table of the basis, read off modulo the relations.
    let combos: Vec<RatCombo> = basis_elems
        .iter()
        .map(|e| single_combo(e).expect("basis elements are nonzero"))
        .collect();
    let span = AugSpan::new(&combos);
    let mut raw_entries: Vec<(usize, usize, Vec<Rat>)> = Vec::new();
    for i in 0..dim {
        for k in (i + 1)..dim {
            let b = basis_elems[i].bracket(&basis_elems[k])?;
            let b = sol.relation_set.normalize(&b)?;
            let combo = match single_combo(&b) {
                None => BTreeMap::new(),
                Some(c) => c,
            };
            let coords = span.express(combo).ok_or_else(|| {
                Error::HolonomyEscape(basis_names[i].clone(), basis_names[k].clone())
            })?;
            raw_entries.push((i, k, coords));
        }
    }

    // Unknown expansion coefficients for generators outside the basis.
    let exterior: Vec<GenId> = sol
        .gens
        .ids()
        .filter(|g| !basis_names.iter().any(|n| n == sol.gens.name(*g)))
        .collect();
    let params = sol.pde().parameters();
    let mut qnames: Vec<(GenId, usize, String)> = Vec::new();
    for g in &exterior {
        let gtag = numeric_suffix(sol.gens.name(*g))
            .map(|n| n.to_string())
            .unwrap_or_else(|| g.index().to_string());
        for (bi, bname) in basis_names.iter().enumerate() {
            let btag = numeric_suffix(bname)
                .map(|n| n.to_string())
                .unwrap_or_else(|| bi.to_string());
            qnames.push((*g, bi, format!("q{gtag}{btag}")));
        }
    }
    let mut b = Context::builder();
    for p in &params {
        b = b.parameter(p)?;
    }
    for (_, _, q) in &qnames {
        b = b.parameter(q)?;
    }
    let qctx = b.build();

    let table_entries = |ctx: &Context| -> Vec<(usize, usize, usize, ScalarPoly)> {
        raw_entries
            .iter()
            .flat_map(|(i, k, coords)| {
                coords.iter().enumerate().map(move |(j, c)| {
                    (*i, *k, j, ScalarPoly::constant(ctx, c.clone()))
                })
            })
            .collect()
    };
    let qtable = StructureConstants::new(&qctx, basis_names.clone(), table_entries(&qctx))?;

    let mut vectors: BTreeMap<GenId, Vec<ScalarPoly>> = BTreeMap::new();
    for (bi, bname) in basis_names.iter().enumerate() {
        if let Some(g) = sol.gens.id(bname) {
            let mut v = vec![ScalarPoly::zero(&qctx); dim];
            v[bi] = ScalarPoly::one(&qctx);
            vectors.insert(g, v);
        }
    }
    for g in &exterior {
        let v = (0..dim)
            .map(|bi| {
                let q = qnames
                    .iter()
                    .find(|(h, b, _)| h == g && *b == bi)
                    .map(|(_, _, q)| q.clone())
                    .expect("every exterior slot has an unknown");
                ScalarPoly::var(&qctx, &q)
            })
            .collect::<Result<Vec<_>>>()?;
        vectors.insert(*g, v);
    }

    // Constraints: basis elements must reproduce themselves, relations must
    // evaluate to zero.
    let mut eqs: Vec<ScalarPoly> = Vec::new();
    for (bi, e) in basis_elems.iter().enumerate() {
        if let Some((LieMonomial::Gen(_), _)) = e.terms().next() {
            if e.term_count() == 1 {
                continue;
            }
        }
        let img = eval_in_table(e, &vectors, &qtable, &qctx)?;
        for (j, c) in img.iter().enumerate() {
            let want = if j == bi { ScalarPoly::one(&qctx) } else { ScalarPoly::zero(&qctx) };
            let eq = c.checked_add(&want.scale(&rat_int(-1)))?;
            if !eq.is_zero() {
                eqs.push(eq);
            }
        }
    }
    for rel in &sol.relations {
        let img = eval_in_table(rel, &vectors, &qtable, &qctx)?;
        for c in img {
            if !c.is_zero() {
                eqs.push(c);
            }
        }
    }

    // Substitution solving: lowest unknown that occurs linearly with a
    // rational coefficient, first equation that offers one.
    let qids: Vec<CoordId> =
        qnames.iter().map(|(_, _, q)| qctx.require(q)).collect::<Result<_>>()?;
    let mut solved: Vec<(CoordId, ScalarPoly)> = Vec::new();
    let mut done: BTreeSet<CoordId> = BTreeSet::new();
    loop {
        let mut pick: Option<(CoordId, Rat, usize)> = None;
        'scan: for (ei, eq) in eqs.iter().enumerate() {
            if eq.is_zero() {
                continue;
            }
            for q in &qids {
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
        at_zero.insert(q, ScalarPoly::zero(&qctx));
        let value = eqs[ei].substitute(&at_zero)?.scale(&-r.recip());
        let mut bind = BTreeMap::new();
        bind.insert(q, value.clone());
        for e in eqs.iter_mut() {
            *e = e.substitute(&bind)?;
        }
        for (_, v) in solved.iter_mut() {
            *v = v.substitute(&bind)?;
        }
        solved.push((q, value));
        done.insert(q);
    }
    let unresolved: Vec<ScalarPoly> = eqs.iter().filter(|e| !e.is_zero()).cloned().collect();

    // Fresh parameter names for the unknowns that stayed free.
    let free: Vec<CoordId> = qids.iter().copied().filter(|q| !done.contains(q)).collect();
    let mut lambda_names: Vec<String> = Vec::new();
    let mut counter = 0usize;
    while lambda_names.len() < free.len() {
        counter += 1;
        let cand = if counter == 1 { "lambda".to_string() } else { format!("lambda{counter}") };
        if !params.contains(&cand) {
            lambda_names.push(cand);
        }
    }
    let mut b = qctx.to_builder();
    for l in &lambda_names {
        b = b.parameter(l)?;
    }
    let qctx2 = b.build();
    let mut rename: BTreeMap<CoordId, ScalarPoly> = BTreeMap::new();
    let mut parameter_sources = Vec::new();
    for (q, l) in free.iter().zip(&lambda_names) {
        rename.insert(*q, ScalarPoly::var(&qctx2, l)?);
        parameter_sources.push((qctx.name(*q).to_string(), l.clone()));
    }
    let mut bf = Context::builder();
    for p in &params {
        bf = bf.parameter(p)?;
    }
    for l in &lambda_names {
        bf = bf.parameter(l)?;
    }
    let final_ctx = bf.build();
    let finalize = |p: &ScalarPoly| -> Result<ScalarPoly> {
        p.transport(&qctx2)?.substitute(&rename)?.transport(&final_ctx)
    };

    let closed_gens = LieContext::new(&basis_names)?;
    let mut expansions = BTreeMap::new();
    let mut final_vectors: BTreeMap<GenId, Vec<ScalarPoly>> = BTreeMap::new();
    for (g, v) in &vectors {
        let mut out = Vec::new();
        for (bi, c) in v.iter().enumerate() {
            let mut c = c.clone();
            for (q, val) in &solved {
                let mut bind = BTreeMap::new();
                bind.insert(*q, val.clone());
                c = c.substitute(&bind)?;
            }
            let c = finalize(&c)?;
            out.push(c.clone());
            let _ = bi;
        }
        final_vectors.insert(*g, out);
    }
    for g in &exterior {
        let v = &final_vectors[g];
        let mut terms = BTreeMap::new();
        for (bi, c) in v.iter().enumerate() {
            if !c.is_zero() {
                terms.insert(LieMonomial::generator(GenId(bi as u32)), c.clone());
            }
        }
        expansions.insert(
            sol.gens.name(*g).to_string(),
            LieElement::from_terms(&closed_gens, &final_ctx, terms),
        );
    }

    let table =
        StructureConstants::new(&final_ctx, basis_names.clone(), table_entries(&final_ctx))?;

    // Re-check every constraint at the solved values.
    let mut verified = unresolved.is_empty();
    if verified {
        for (bi, e) in basis_elems.iter().enumerate() {
            let img = eval_in_table(e, &final_vectors, &table, &final_ctx)?;
            for (j, c) in img.iter().enumerate() {
                let want = if j == bi {
                    ScalarPoly::one(&final_ctx)
                } else {
                    ScalarPoly::zero(&final_ctx)
                };
                if c != &want {
                    verified = false;
                }
            }
        }
        for rel in &sol.relations {
            let img = eval_in_table(rel, &final_vectors, &table, &final_ctx)?;
            if img.iter().any(|c| !c.is_zero()) {
                verified = false;
            }
        }
    }

    // Images of named higher-level elements in the closed algebra.
    let mut images = BTreeMap::new();
    if filt.level > 0 {
        for (name, elem) in filt.names.iter().zip(&filt.elements) {
            if basis_names.contains(name) {
                continue;
            }
            let img = eval_in_table(elem, &final_vectors, &table, &final_ctx)?;
            let mut terms = BTreeMap::new();
            for (bi, c) in img.iter().enumerate() {
                if !c.is_zero() {
                    terms.insert(LieMonomial::generator(GenId(bi as u32)), c.clone());
                }
            }
            images.insert(
                name.clone(),
                LieElement::from_terms(&closed_gens, &final_ctx, terms),
            );
        }
    }

    let solved_named: Vec<(String, ScalarPoly)> = solved
        .iter()
        .map(|(q, v)| Ok((qctx.name(*q).to_string(), finalize(v)?)))
        .collect::<Result<_>>()?;
    let unresolved_named: Vec<ScalarPoly> =
        unresolved.iter().map(|e| finalize(e)).collect::<Result<_>>()?;

    Ok(HolonomyClosure {
        basis: basis_names,
        table,
        expansions,
        parameters: lambda_names,
        parameter_sources,
        solved: solved_named,
        unresolved: unresolved_named,
        images,
        verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn burgers() -> EvolutionPDE {
        EvolutionPDE::parse("u", "u0*u1 + u2", &[]).unwrap()
    }

    fn burgers_solution() -> ProlongationSolution {
        let ideal = contact_ideal(&burgers()).unwrap();
        let ansatz = connection_ansatz(&ideal, 1, 2).unwrap();
        let sys = derive_determining(&ideal, &ansatz).unwrap();
        solve_determining(&sys).unwrap()
    }

    #[test]
    fn parse_infers_order_and_validates_the_support() {
        let b = burgers();
        assert_eq!(b.order(), 2);
        assert_eq!(b.to_string(), "u_t = u0*u1 + u2");
        assert!(matches!(
            EvolutionPDE::parse("u", "u0", &[]),
            Err(Error::UnsupportedOrder(0))
        ));
        assert!(matches!(
            EvolutionPDE::parse("u", "x*u1", &[]),
            Err(Error::MalformedRhs(_))
        ));
        let p = EvolutionPDE::parse("u", "lambda*u1", &["lambda"]).unwrap();
        assert_eq!(p.order(), 1);
        assert_eq!(p.parameters(), vec!["lambda".to_string()]);
    }

    #[test]
    fn second_order_ideal_carries_the_expected_pair() {
        let ideal = contact_ideal(&burgers()).unwrap();
        let ctx = ideal.context().clone();
        assert!(ctx.require("u1").is_ok());
        assert!(ctx.require("u2").is_err());
        let gens = ideal.ideal().generators();
        assert_eq!(gens.len(), 2);
        // alpha1 = du0^dt - u1 dx^dt, stored over canonical wedge monomials.
        let x = ctx.require("x").unwrap();
        let t = ctx.require("t").unwrap();
        let u0 = ctx.require("u0").unwrap();
        let u1 = ctx.require("u1").unwrap();
        let w = |a, b| WedgeMonomial::from_coords(&[a, b]).unwrap().1;
        assert_eq!(gens[0].coefficient(&w(t, u0)), ScalarPoly::constant(&ctx, rat_int(-1)));
        assert_eq!(
            gens[0].coefficient(&w(x, t)),
            ScalarPoly::coordinate(&ctx, u1).scale(&rat_int(-1))
        );
        // alpha2 = du0^dx + u0 du0^dt + du1^dt for this right-hand side.
        assert_eq!(gens[1].coefficient(&w(x, u0)), ScalarPoly::constant(&ctx, rat_int(-1)));
        assert_eq!(
            gens[1].coefficient(&w(t, u0)),
            ScalarPoly::coordinate(&ctx, u0).scale(&rat_int(-1))
        );
        assert_eq!(gens[1].coefficient(&w(t, u1)), ScalarPoly::constant(&ctx, rat_int(-1)));
        assert!(gens[1].coefficient(&w(x, t)).is_zero());
        assert!(ideal.closure().closed);
    }

    #[test]
    fn first_order_ideal_needs_a_linear_derivative_term() {
        let p = EvolutionPDE::parse("u", "u1 + u0^2", &[]).unwrap();
        let ideal = contact_ideal(&p).unwrap();
        assert_eq!(ideal.ideal().generators().len(), 1);
        assert!(ideal.closure().closed);
        let quad = EvolutionPDE::parse("u", "u1^2", &[]).unwrap();
        assert!(matches!(contact_ideal(&quad), Err(Error::MalformedRhs(_))));
        let bad = EvolutionPDE::parse("u", "u0*u2 + u1", &[]).unwrap();
        assert!(matches!(contact_ideal(&bad), Err(Error::MalformedRhs(_))));
    }

    #[test]
    fn ansatz_slots_follow_the_jet_monomials() {
        let ideal = contact_ideal(&burgers()).unwrap();
        let ansatz = connection_ansatz(&ideal, 1, 2).unwrap();
        assert_eq!(ansatz.x_slots().len(), 3);
        assert_eq!(ansatz.t_slots().len(), 6);
        assert_eq!(ansatz.bx().to_string(), "u0*X2 + u1*X1 + X0");
        assert_eq!(
            ansatz.bt().to_string(),
            "u0^2*Y5 + u0*u1*Y4 + u1^2*Y3 + u0*Y2 + u1*Y1 + Y0"
        );
    }

    #[test]
    fn determining_conditions_match_and_eliminate_the_multipliers() {
        let ideal = contact_ideal(&burgers()).unwrap();
        let ansatz = connection_ansatz(&ideal, 1, 2).unwrap();
        let sys = derive_determining(&ideal, &ansatz).unwrap();
        let kinds: Vec<ConditionKind> = sys.conditions().iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ConditionKind::XPartial(0),
                ConditionKind::XPartial(1),
                ConditionKind::TPartial(0),
                ConditionKind::TPartial(1),
                ConditionKind::Curvature,
            ]
        );
        let named: Vec<(String, String)> = sys
            .eliminated()
            .iter()
            .map(|(g, v)| (sys.generators().name(*g).to_string(), v.to_string()))
            .collect();
        assert_eq!(named[0], ("G2".to_string(), "X2".to_string()));
        assert_eq!(
            named[1],
            ("G1".to_string(), "2*u0*Y5 + u1*Y4 + Y2 - u0*X2".to_string())
        );
        assert_eq!(sys.reduced().len(), 3);
    }

    #[test]
    fn solving_reproduces_the_quadratic_flow_connection() {
        let sol = burgers_solution();
        assert_eq!(sol.bx().to_string(), "u0*A1 + A0");
        assert_eq!(
            sol.bt().to_string(),
            "-u0*[A0,A1] + A2 + (1/2*u0^2 + u1)*A1"
        );
        let gs: Vec<String> = sol.multipliers().iter().map(|g| g.to_string()).collect();
        assert_eq!(gs, vec!["-[A0,A1]".to_string(), "A1".to_string()]);
        let rels: Vec<String> = sol.relations().iter().map(|r| r.to_string()).collect();
        assert_eq!(
            rels,
            vec![
                "[A0,A2]".to_string(),
                "[A0,[A0,A1]] - [A1,A2]".to_string(),
                "[A1,[A0,A1]] - 1/2*[A0,A1]".to_string(),
            ]
        );
        let trace: Vec<(String, String)> = sol
            .assignments()
            .iter()
            .map(|(s, v)| (s.clone(), v.to_string()))
            .collect();
        assert_eq!(
            trace,
            vec![
                ("X1".to_string(), "0".to_string()),
                ("Y1".to_string(), "X2".to_string()),
                ("Y3".to_string(), "0".to_string()),
                ("Y4".to_string(), "0".to_string()),
                ("Y2".to_string(), "-[X0,X2]".to_string()),
                ("Y5".to_string(), "1/2*X2".to_string()),
            ]
        );
        assert_eq!(
            sol.renames(),
            &[
                ("X0".to_string(), "A0".to_string()),
                ("X2".to_string(), "A1".to_string()),
                ("Y0".to_string(), "A2".to_string()),
            ]
        );
    }

    #[test]
    fn first_order_transport_solves_with_an_abelian_looking_pair() {
        let p = EvolutionPDE::parse("u", "u1", &[]).unwrap();
        let ideal = contact_ideal(&p).unwrap();
        let ansatz = connection_ansatz(&ideal, 1, 2).unwrap();
        let sys = derive_determining(&ideal, &ansatz).unwrap();
        let sol = solve_determining(&sys).unwrap();
        assert_eq!(sol.bx().to_string(), "u0*A1 + A0");
        assert_eq!(sol.bt().to_string(), "A2 + u0*A1");
        let rels: Vec<String> = sol.relations().iter().map(|r| r.to_string()).collect();
        assert_eq!(rels, vec!["[A0,A2]".to_string(), "[A1,A2] + [A0,A1]".to_string()]);
    }

    #[test]
    fn filtration_level_zero_spans_the_multiplier_slices() {
        let sol = burgers_solution();
        let filt = holonomy_filtration(&sol, 0).unwrap();
        assert_eq!(filt.names, vec!["A1".to_string(), "A3".to_string()]);
        let vals: Vec<String> = filt.elements.iter().map(|e| e.to_string()).collect();
        assert_eq!(vals, vec!["A1".to_string(), "[A0,A1]".to_string()]);
        assert_eq!(filt.defining, vec!["g2".to_string(), "g1".to_string()]);
        assert!(!filt.stable);
        assert_eq!(filt.quotient_span, SpanClosure::Closed);
    }

    #[test]
    fn filtration_level_one_adds_four_bracket_words() {
        let sol = burgers_solution();
        let filt = holonomy_filtration(&sol, 1).unwrap();
        assert_eq!(
            filt.names,
            vec!["A1", "A3", "A4", "A5", "A6", "A7"]
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>()
        );
        assert_eq!(
            filt.defining,
            vec!["g2", "g1", "[A3,A0]", "[A3,A1]", "[A1,A2]", "[A3,A2]"]
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>()
        );
        let vals: Vec<String> = filt.elements.iter().map(|e| e.to_string()).collect();
        assert_eq!(
            vals,
            vec![
                "A1".to_string(),
                "[A0,A1]".to_string(),
                "-[A0,[A0,A1]]".to_string(),
                "-[A1,[A0,A1]]".to_string(),
                "[A1,A2]".to_string(),
                "-[A2,[A0,A1]]".to_string(),
            ]
        );
        assert!(!filt.stable);
    }

    #[test]
    fn closure_solves_the_expansions_up_to_one_parameter() {
        let sol = burgers_solution();
        let filt = holonomy_filtration(&sol, 0).unwrap();
        let close = holonomy_close(&sol, &filt).unwrap();
        assert_eq!(close.basis, vec!["A1".to_string(), "A3".to_string()]);
        // [A1, A3] = 1/2 A3 is the whole table.
        let half = ScalarPoly::constant(close.table.context(), crate::poly::rat(1, 2));
        assert_eq!(close.table.entry(1, 0, 1), &half);
        assert!(close.table.entry(0, 0, 1).is_zero());
        assert_eq!(close.parameters, vec!["lambda".to_string()]);
        assert_eq!(
            close.parameter_sources,
            vec![("q23".to_string(), "lambda".to_string())]
        );
        assert_eq!(
            close.expansions.get("A0").unwrap().to_string(),
            "-2*A3 + lambda*A1"
        );
        assert_eq!(
            close.expansions.get("A2").unwrap().to_string(),
            "lambda*A3 - 1/2*lambda^2*A1"
        );
        let trace: Vec<(String, String)> = close
            .solved
            .iter()
            .map(|(q, v)| (q.clone(), v.to_string()))
            .collect();
        assert_eq!(
            trace,
            vec![
                ("q03".to_string(), "-2".to_string()),
                ("q21".to_string(), "-1/2*lambda^2".to_string()),
                ("q01".to_string(), "lambda".to_string()),
            ]
        );
        assert!(close.unresolved.is_empty());
        assert!(close.verified);
        assert!(close.images.is_empty());
    }

    #[test]
    fn closure_reports_images_for_higher_levels() {
        let sol = burgers_solution();
        let filt = holonomy_filtration(&sol, 1).unwrap();
        let close = holonomy_close(&sol, &filt).unwrap();
        assert!(close.verified);
        assert_eq!(close.images.len(), 4);
        assert_eq!(close.images.get("A5").unwrap().to_string(), "-1/2*A3");
        assert_eq!(close.images.get("A4").unwrap().to_string(), "-1/2*lambda*A3");
        assert_eq!(close.images.get("A7").unwrap().to_string(), "1/4*lambda^2*A3");
        assert_eq!(close.images.get("A6").unwrap().to_string(), "1/2*lambda*A3");
    }
}
