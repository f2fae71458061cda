//! Exact linear solving over the polynomial ring.
//!
//! A [`LinearSystem`] collects equations that are affine in a designated set
//! of unknown coordinates; the coefficients may be polynomials in the other
//! coordinates. Solving performs fraction-free (Bareiss) Gaussian
//! elimination, so every intermediate entry stays a polynomial and every
//! division is exact. Pivots are chosen by lowest total degree of the
//! candidate entry, ties broken by unknown order and then by equation order,
//! which keeps the elimination deterministic and favors constant pivots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::context::{Context, CoordId};
use crate::error::Error;
use crate::poly::ScalarPoly;
use crate::Result;

/// System of affine equations in the designated unknowns.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    ctx: Context,
    unknowns: Vec<CoordId>,
    equations: Vec<ScalarPoly>,
}

/// Result of [`LinearSystem::solve`].
#[derive(Debug, Clone)]
pub enum LinearOutcome {
    /// Assignments for the pivot unknowns; right-hand sides may mention the
    /// free unknowns, which are listed separately.
    Solved { assignments: BTreeMap<CoordId, ScalarPoly>, free: Vec<CoordId> },
    /// The system is contradictory; the certificate is a nonzero polynomial
    /// (free of unknowns) that elimination proved equal to zero.
    Inconsistent { certificate: ScalarPoly },
    /// A pivot division left the polynomial ring; the solution exists only
    /// among rational functions.
    NonPolynomial { unknown: CoordId },
}

impl LinearOutcome {
    pub fn assignments(&self) -> Option<&BTreeMap<CoordId, ScalarPoly>> {
        match self {
            LinearOutcome::Solved { assignments, .. } => Some(assignments),
            _ => None,
        }
    }

    pub fn free(&self) -> &[CoordId] {
        match self {
            LinearOutcome::Solved { free, .. } => free,
            _ => &[],
        }
    }
}

struct Row {
    coeffs: Vec<ScalarPoly>,
    constant: ScalarPoly,
}

impl LinearSystem {
    /// New system over `ctx` with the given unknown coordinates.
    pub fn new(ctx: &Context, unknowns: Vec<CoordId>) -> LinearSystem {
        LinearSystem { ctx: ctx.clone(), unknowns, equations: Vec::new() }
    }

    pub fn unknowns(&self) -> &[CoordId] {
        &self.unknowns
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    /// Adds the equation `eq = 0`; `eq` must be affine in the unknowns.
    pub fn push(&mut self, eq: ScalarPoly) -> Result<()> {
        self.ctx = self.ctx.unify(eq.context())?;
        let set: BTreeSet<CoordId> = self.unknowns.iter().copied().collect();
        if eq.as_linear(&set).is_none() {
            let name = eq
                .support()
                .into_iter()
                .find(|c| set.contains(c))
                .map(|c| self.ctx.name(c).to_string())
                .unwrap_or_default();
            return Err(Error::NonlinearUnknown(name));
        }
        self.equations.push(eq);
        Ok(())
    }

    /// Fraction-free elimination followed by exact back-substitution.
    pub fn solve(&self) -> LinearOutcome {
        let set: BTreeSet<CoordId> = self.unknowns.iter().copied().collect();
        let n = self.unknowns.len();
        let col_of: BTreeMap<CoordId, usize> =
            self.unknowns.iter().enumerate().map(|(i, c)| (*c, i)).collect();

        let mut rows: Vec<Row> = Vec::new();
        for eq in &self.equations {
            let eq = eq.transport(&self.ctx).expect("equation context unified on push");
            let (coeff_map, constant) = eq.as_linear(&set).expect("linearity checked on push");
            let mut coeffs = vec![ScalarPoly::zero(&self.ctx); n];
            for (c, p) in coeff_map {
                coeffs[col_of[&c]] = p;
            }
            rows.push(Row { coeffs, constant });
        }

        let mut pivots: Vec<(usize, usize, ScalarPoly)> = Vec::new();
        let mut row_used = vec![false; rows.len()];
        let mut col_used = vec![false; n];
        let mut prev_pivot = ScalarPoly::one(&self.ctx);

        loop {
            // Lowest-degree nonzero entry among the remaining rows/columns.
            let mut best: Option<(u32, usize, usize)> = None;
            for (ri, row) in rows.iter().enumerate() {
                if row_used[ri] {
                    continue;
                }
                for ci in 0..n {
                    if col_used[ci] || row.coeffs[ci].is_zero() {
                        continue;
                    }
                    let deg = row.coeffs[ci].total_degree();
                    let cand = (deg, ci, ri);
                    if best.map_or(true, |b| cand < b) {
                        best = Some(cand);
                    }
                }
            }
            let Some((_, ci, ri)) = best else { break };

            let pivot_val = rows[ri].coeffs[ci].clone();
            let pivot_coeffs = rows[ri].coeffs.clone();
            let pivot_const = rows[ri].constant.clone();
            for (rj, row) in rows.iter_mut().enumerate() {
                if rj == ri || row_used[rj] {
                    continue;
                }
                let factor = row.coeffs[ci].clone();
                if factor.is_zero() {
                    continue;
                }
                // Bareiss step: (pivot * row - factor * pivot_row) / prev.
                for k in 0..n {
                    let num = &(&pivot_val * &row.coeffs[k]) - &(&factor * &pivot_coeffs[k]);
                    row.coeffs[k] = num
                        .try_div_exact(&prev_pivot)
                        .unwrap_or(num);
                }
                let num = &(&pivot_val * &row.constant) - &(&factor * &pivot_const);
                row.constant = num.try_div_exact(&prev_pivot).unwrap_or(num);
            }
            row_used[ri] = true;
            col_used[ci] = true;
            prev_pivot = pivot_val.clone();
            pivots.push((ri, ci, pivot_val));
        }

        // Rows with every coefficient eliminated must have zero constant.
        for (ri, row) in rows.iter().enumerate() {
            if row_used[ri] {
                continue;
            }
            if !row.constant.is_zero() {
                return LinearOutcome::Inconsistent { certificate: row.constant.clone() };
            }
        }

        let mut assignments: BTreeMap<CoordId, ScalarPoly> = BTreeMap::new();
        for &(ri, ci, ref pivot_val) in pivots.iter().rev() {
            let row = &rows[ri];
            // pivot * x = -(constant + sum of other columns).
            let mut rhs = -&row.constant;
            for k in 0..n {
                if k == ci || row.coeffs[k].is_zero() {
                    continue;
                }
                let unk = self.unknowns[k];
                let value = assignments
                    .get(&unk)
                    .cloned()
                    .unwrap_or_else(|| ScalarPoly::coordinate(&self.ctx, unk));
                rhs = &rhs - &(&row.coeffs[k] * &value);
            }
            match rhs.try_div_exact(pivot_val) {
                Ok(v) => {
                    assignments.insert(self.unknowns[ci], v);
                }
                Err(_) => return LinearOutcome::NonPolynomial { unknown: self.unknowns[ci] },
            }
        }

        let free: Vec<CoordId> = self
            .unknowns
            .iter()
            .copied()
            .filter(|u| !assignments.contains_key(u))
            .collect();
        LinearOutcome::Solved { assignments, free }
    }
}

impl fmt::Display for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for eq in &self.equations {
            writeln!(f, "{eq} = 0")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat_int;

    fn ctx() -> Context {
        Context::builder()
            .base("x")
            .unwrap()
            .jets("u", 1)
            .unwrap()
            .parameter("lambda")
            .unwrap()
            .parameter("q01")
            .unwrap()
            .parameter("q03")
            .unwrap()
            .parameter("q21")
            .unwrap()
            .parameter("q23")
            .unwrap()
            .build()
    }

    fn p(c: &Context, s: &str) -> ScalarPoly {
        ScalarPoly::parse(c, s).unwrap()
    }

    fn qs(c: &Context) -> Vec<CoordId> {
        ["q01", "q03", "q21", "q23"].iter().map(|n| c.require(n).unwrap()).collect()
    }

    #[test]
    fn single_constant_equation() {
        let c = ctx();
        let mut sys = LinearSystem::new(&c, qs(&c));
        sys.push(p(&c, "q03 + 2")).unwrap();
        match sys.solve() {
            LinearOutcome::Solved { assignments, free } => {
                assert_eq!(assignments[&c.require("q03").unwrap()], p(&c, "-2"));
                assert_eq!(free.len(), 3);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn dependent_unknowns_and_free_parameters() {
        let c = ctx();
        let mut sys = LinearSystem::new(&c, qs(&c));
        sys.push(p(&c, "q01 - q23")).unwrap();
        sys.push(p(&c, "q03 + 2")).unwrap();
        match sys.solve() {
            LinearOutcome::Solved { assignments, free } => {
                assert_eq!(assignments[&c.require("q01").unwrap()], p(&c, "q23"));
                assert_eq!(assignments[&c.require("q03").unwrap()], p(&c, "-2"));
                let names: Vec<&str> = free.iter().map(|&f| c.name(f)).collect();
                assert_eq!(names, vec!["q21", "q23"]);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn classic_three_by_three() {
        // 2x + y - z = 8, -3x - y + 2z = -11, -2x + y + 2z = -3
        // has the unique solution x = 2, y = 3, z = -1.
        let c = Context::builder()
            .parameter("qx")
            .unwrap()
            .parameter("qy")
            .unwrap()
            .parameter("qz")
            .unwrap()
            .build();
        let unknowns: Vec<CoordId> =
            ["qx", "qy", "qz"].iter().map(|n| c.require(n).unwrap()).collect();
        let mut sys = LinearSystem::new(&c, unknowns.clone());
        sys.push(p(&c, "2*qx + qy - qz - 8")).unwrap();
        sys.push(p(&c, "-3*qx - qy + 2*qz + 11")).unwrap();
        sys.push(p(&c, "-2*qx + qy + 2*qz + 3")).unwrap();
        match sys.solve() {
            LinearOutcome::Solved { assignments, free } => {
                assert!(free.is_empty());
                let vals: Vec<i64> = unknowns
                    .iter()
                    .map(|u| {
                        let r = assignments[u].as_rational().unwrap();
                        assert!(r.is_integer());
                        i64::try_from(r.to_integer()).unwrap()
                    })
                    .collect();
                assert_eq!(vals, vec![2, 3, -1]);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn inconsistency_certificate() {
        let c = ctx();
        let mut sys = LinearSystem::new(&c, qs(&c));
        sys.push(p(&c, "q01 - 1")).unwrap();
        sys.push(p(&c, "q01 - 2")).unwrap();
        match sys.solve() {
            LinearOutcome::Inconsistent { certificate } => {
                assert!(!certificate.is_zero());
                assert!(certificate.is_constant());
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn polynomial_coefficients_divide_exactly() {
        // u0 * q01 - u0 * lambda = 0 forces q01 = lambda.
        let c = ctx();
        let mut sys = LinearSystem::new(&c, qs(&c));
        sys.push(p(&c, "u0*q01 - u0*lambda")).unwrap();
        match sys.solve() {
            LinearOutcome::Solved { assignments, .. } => {
                assert_eq!(assignments[&c.require("q01").unwrap()], p(&c, "lambda"));
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn trivial_rows_are_dropped_and_nonlinear_rejected() {
        let c = ctx();
        let mut sys = LinearSystem::new(&c, qs(&c));
        sys.push(ScalarPoly::zero(&c)).unwrap();
        sys.push(p(&c, "q01*q23")).unwrap_err();
        sys.push(p(&c, "q01 - 5")).unwrap();
        match sys.solve() {
            LinearOutcome::Solved { assignments, .. } => {
                assert_eq!(assignments[&c.require("q01").unwrap()].as_rational(), Some(rat_int(5)));
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn back_substitution_identity_holds() {
        // Solved assignments substituted into every equation give zero.
        let c = ctx();
        let mut sys = LinearSystem::new(&c, qs(&c));
        sys.push(p(&c, "q01 + 2*q21 - lambda")).unwrap();
        sys.push(p(&c, "q21 - q23 + 1")).unwrap();
        sys.push(p(&c, "q03 + q01 - q23")).unwrap();
        let LinearOutcome::Solved { assignments, .. } = sys.solve() else {
            panic!("expected solution")
        };
        for eq in &sys.equations {
            assert!(eq.substitute(&assignments).unwrap().is_zero());
        }
    }
}
