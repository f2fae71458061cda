//! Left-invariant one-form series for a structure constant table, and the
//! exact check of the closure equation
//! `d w^j + 1/2 c^j_{ik} w^i ^ w^k = 0`.
//!
//! For basis coordinates `a^1..a^r` of the algebra, the matrix
//! `A^j_k = c^j_{ki} a^i` drives the series
//!
//! ```text
//! W = sum_{n=1..N} A^(n-1) / n!
//! ```
//!
//! and the candidate forms are `w^j = W^j_k da^k`. When `A` is nilpotent and
//! the order reaches its nilpotency index, the series is the full sum and
//! the closure residual vanishes identically; otherwise each residual term
//! carries coordinate degree at least `N - 1`, so the residual measures
//! exactly the truncation error.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::context::{Context, CoordId, CoordKind};
use crate::error::Error;
use crate::forms::DiffForm;
use crate::lie::StructureConstants;
use crate::matrix::PolyMatrix;
use crate::poly::{rat_int, Rat, ScalarPoly};
use crate::Result;

/// Coordinate context for a table: group coordinates `a1..ar`, then any
/// parameters the constants themselves mention.
pub fn group_context(sc: &StructureConstants) -> Result<Context> {
    let mut b = Context::builder();
    for i in 1..=sc.dim() {
        b = b.group(&format!("a{i}"))?;
    }
    for id in sc.context().ids() {
        if matches!(sc.context().kind(id), CoordKind::Parameter) {
            b = b.parameter(sc.context().name(id))?;
        }
    }
    Ok(b.build())
}

fn group_coords(ctx: &Context) -> Vec<CoordId> {
    ctx.ids().filter(|&id| matches!(ctx.kind(id), CoordKind::Group)).collect()
}

/// The coefficient matrix `A^j_k = c^j_{ki} a^i` over `ctx`, whose group
/// coordinates stand for the algebra basis in table order.
pub fn a_matrix(sc: &StructureConstants, ctx: &Context) -> Result<PolyMatrix> {
    let coords = group_coords(ctx);
    let r = sc.dim();
    if coords.len() != r {
        return Err(Error::DimensionMismatch);
    }
    let mut a = PolyMatrix::zero(ctx, r, r);
    for j in 0..r {
        for k in 0..r {
            let mut acc = ScalarPoly::zero(ctx);
            for (i, &coord) in coords.iter().enumerate() {
                let c = sc.entry(j, k, i).transport(ctx)?;
                if !c.is_zero() {
                    acc = &acc + &(&c * &ScalarPoly::coordinate(ctx, coord));
                }
            }
            a.set(j, k, acc);
        }
    }
    Ok(a)
}

/// Truncated series `W = sum_{n=1..order} A^(n-1)/n!`.
pub fn w_matrix(a: &PolyMatrix, order: u32) -> Result<PolyMatrix> {
    if order == 0 {
        return Err(Error::ZeroSeriesOrder);
    }
    let ctx = a.context();
    let r = a.rows();
    let mut acc = PolyMatrix::zero(ctx, r, r);
    let mut power = PolyMatrix::identity(ctx, r);
    let mut factorial = Rat::from_integer(1.into());
    for n in 1..=order {
        factorial *= rat_int(n as i64);
        acc = acc.checked_add(&power.scale_rat(&factorial.recip()))?;
        if n < order {
            power = power.checked_mul(a)?;
        }
    }
    Ok(acc)
}

/// The series matrices and candidate one-forms for a table.
#[derive(Debug, Clone, Serialize)]
pub struct MCForm {
    pub series_order: u32,
    pub a: PolyMatrix,
    pub w: PolyMatrix,
    /// `w^j = W^j_k da^k`, one per basis element.
    pub forms: Vec<DiffForm>,
}

pub fn mc_form(sc: &StructureConstants, order: u32) -> Result<MCForm> {
    let ctx = group_context(sc)?;
    let a = a_matrix(sc, &ctx)?;
    let w = w_matrix(&a, order)?;
    let coords = group_coords(&ctx);
    let r = sc.dim();
    let mut forms = Vec::with_capacity(r);
    for j in 0..r {
        let mut form = DiffForm::zero(&ctx, 1);
        for (k, &coord) in coords.iter().enumerate() {
            let da = DiffForm::d_coord(&ctx, coord)?;
            form = form.checked_add(&da.scale(w.at(j, k)))?;
        }
        forms.push(form);
    }
    Ok(MCForm { series_order: order, a, w, forms })
}

/// Outcome of the closure-equation check at one series order.
#[derive(Debug, Clone, Serialize)]
pub struct MCReport {
    pub form: MCForm,
    /// `d w^j + 1/2 c^j_{ik} w^i ^ w^k`, one per basis element.
    pub residuals: Vec<DiffForm>,
    /// All residuals vanish identically.
    pub exact: bool,
    /// Every residual term has group-coordinate degree >= order - 1.
    pub truncation_ok: bool,
    /// `W` evaluates to the identity at the origin.
    pub basepoint_ok: bool,
    /// Least `m <= dim` with `A^m = 0`, when one exists.
    pub nilpotency_index: Option<u32>,
}

pub fn verify_mc_equation(sc: &StructureConstants, order: u32) -> Result<MCReport> {
    let form = mc_form(sc, order)?;
    let ctx = form.a.context().clone();
    let r = sc.dim();

    let mut residuals = Vec::with_capacity(r);
    for j in 0..r {
        let mut res = form.forms[j].exterior_derivative();
        for i in 0..r {
            for k in 0..r {
                let c = sc.entry(j, i, k).transport(&ctx)?;
                if c.is_zero() {
                    continue;
                }
                let half = c.scale(&Rat::new(1.into(), 2.into()));
                let wedge = form.forms[i].wedge(&form.forms[k])?;
                res = res.checked_add(&wedge.scale(&half))?;
            }
        }
        residuals.push(res);
    }
    let exact = residuals.iter().all(DiffForm::is_zero);

    let group: Vec<CoordId> = group_coords(&ctx);
    let group_degree = |p: &ScalarPoly| -> Option<u32> {
        p.terms()
            .map(|(m, _)| group.iter().map(|&c| m.degree_of(c)).sum::<u32>())
            .min()
    };
    let floor = order.saturating_sub(1);
    let truncation_ok = residuals.iter().all(|res| {
        res.terms().all(|(_, coeff)| group_degree(coeff).map_or(true, |d| d >= floor))
    });

    let mut zero_bindings: BTreeMap<CoordId, ScalarPoly> = BTreeMap::new();
    for &c in &group {
        zero_bindings.insert(c, ScalarPoly::zero(&ctx));
    }
    let at_origin = form.w.substitute(&zero_bindings)?;
    let basepoint_ok = at_origin == PolyMatrix::identity(&ctx, r);

    let mut nilpotency_index = None;
    let mut power = form.a.clone();
    for m in 1..=(r as u32) {
        if power.is_zero() {
            nilpotency_index = Some(m);
            break;
        }
        power = power.checked_mul(&form.a)?;
    }

    Ok(MCReport { form, residuals, exact, truncation_ok, basepoint_ok, nilpotency_index })
}
