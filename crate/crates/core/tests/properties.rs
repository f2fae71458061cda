//! Randomized algebraic identities, exercised with a fixed seed so every
//! run checks the same corpus. Each property runs at least 200 cases.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use laxkit::lie::subalgebra_span;
use laxkit::poly::{rat, rat_int, MultiIndex};
use laxkit::{
    assemble_lax, contact_ideal, verify_zero_curvature, Context, CoordId, DiffForm,
    EvolutionPDE, GenId, LaxPair, LieContext, LieElement, LinearOutcome, LinearSystem, Rat,
    ScalarPoly, WedgeMonomial,
};

const CASES: usize = 200;

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x1d2f_9a77 ^ tag)
}

fn jet_context() -> Context {
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

fn small_rat(r: &mut ChaCha8Rng) -> Rat {
    let num = r.gen_range(-9i64..=9);
    let den = r.gen_range(1i64..=4);
    rat(num, den)
}

fn random_poly(r: &mut ChaCha8Rng, ctx: &Context, terms: usize, degree: u32) -> ScalarPoly {
    let coords: Vec<CoordId> = ctx.ids().collect();
    let mut acc = ScalarPoly::zero(ctx);
    for _ in 0..r.gen_range(0..=terms) {
        let mut mono = MultiIndex::unit();
        for _ in 0..r.gen_range(0..=degree) {
            let c = coords[r.gen_range(0..coords.len())];
            mono = mono.mul(&MultiIndex::of(c));
        }
        let term = ScalarPoly::monomial(ctx, mono, small_rat(r));
        acc = acc.checked_add(&term).unwrap();
    }
    acc
}

fn random_form(r: &mut ChaCha8Rng, ctx: &Context, degree: usize) -> DiffForm {
    if degree == 0 {
        return DiffForm::scalar(random_poly(r, ctx, 3, 2));
    }
    let diffs: Vec<CoordId> = ctx.differential_ids().collect();
    let mut acc = DiffForm::zero(ctx, degree);
    for _ in 0..r.gen_range(0..=3usize) {
        let mut picked = Vec::new();
        while picked.len() < degree {
            let c = diffs[r.gen_range(0..diffs.len())];
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        let Some((sign, mono)) = WedgeMonomial::from_coords(&picked) else { continue };
        let coeff = random_poly(r, ctx, 2, 2).scale(&rat_int(sign as i64));
        let mut terms = BTreeMap::new();
        terms.insert(mono, coeff);
        acc = acc
            .checked_add(&DiffForm::from_terms(ctx, degree, terms).unwrap())
            .unwrap();
    }
    acc
}

fn random_lie(
    r: &mut ChaCha8Rng,
    gens: &LieContext,
    ctx: &Context,
    budget: usize,
) -> LieElement {
    let leaf = |r: &mut ChaCha8Rng| {
        let id = GenId(r.gen_range(0..gens.len()) as u32);
        LieElement::generator(gens, ctx, id)
    };
    if budget == 0 {
        return leaf(r);
    }
    match r.gen_range(0..4u32) {
        0 => {
            let a = random_lie(r, gens, ctx, budget - 1);
            let b = random_lie(r, gens, ctx, budget - 1);
            a.checked_add(&b).unwrap()
        }
        1 => {
            let a = random_lie(r, gens, ctx, budget - 1);
            let b = random_lie(r, gens, ctx, budget - 1);
            a.bracket(&b).unwrap()
        }
        2 => random_lie(r, gens, ctx, budget - 1).scale_rat(&small_rat(r)),
        _ => leaf(r),
    }
}

#[test]
fn polynomial_ring_identities_hold() {
    let ctx = jet_context();
    let mut r = rng(1);
    for _ in 0..CASES {
        let a = random_poly(&mut r, &ctx, 3, 2);
        let b = random_poly(&mut r, &ctx, 3, 2);
        let c = random_poly(&mut r, &ctx, 3, 2);
        let left = a.checked_add(&b).unwrap().checked_add(&c).unwrap();
        let right = a.checked_add(&b.checked_add(&c).unwrap()).unwrap();
        assert_eq!(left, right);
        assert_eq!(a.checked_mul(&b).unwrap(), b.checked_mul(&a).unwrap());
        let dist = a.checked_mul(&b.checked_add(&c).unwrap()).unwrap();
        let expanded = a
            .checked_mul(&b)
            .unwrap()
            .checked_add(&a.checked_mul(&c).unwrap())
            .unwrap();
        assert_eq!(dist, expanded);
    }
}

#[test]
fn exterior_derivative_squares_to_zero() {
    let ctx = jet_context();
    let mut r = rng(2);
    for _ in 0..CASES {
        let degree = r.gen_range(0..=2usize);
        let form = random_form(&mut r, &ctx, degree);
        let dd = form.exterior_derivative().exterior_derivative();
        assert!(dd.is_zero(), "d(d(form)) must vanish, got {dd}");
    }
}

#[test]
fn wedge_product_is_graded_anticommutative() {
    let ctx = jet_context();
    let mut r = rng(3);
    for _ in 0..CASES {
        let p = r.gen_range(0..=2usize);
        let q = r.gen_range(0..=2usize);
        let alpha = random_form(&mut r, &ctx, p);
        let beta = random_form(&mut r, &ctx, q);
        let left = alpha.wedge(&beta).unwrap();
        let mut right = beta.wedge(&alpha).unwrap();
        if (p * q) % 2 == 1 {
            right = right.scale(&ScalarPoly::constant(&ctx, rat_int(-1)));
        }
        let diff = left
            .checked_add(&right.scale(&ScalarPoly::constant(&ctx, rat_int(-1))))
            .unwrap();
        assert!(diff.is_zero());
    }
}

#[test]
fn exterior_derivative_satisfies_the_leibniz_rule() {
    let ctx = jet_context();
    let mut r = rng(4);
    for _ in 0..CASES {
        let p = r.gen_range(0..=2usize);
        let q = r.gen_range(0..=1usize);
        let alpha = random_form(&mut r, &ctx, p);
        let beta = random_form(&mut r, &ctx, q);
        let left = alpha.wedge(&beta).unwrap().exterior_derivative();
        let mut second = alpha.wedge(&beta.exterior_derivative()).unwrap();
        if p % 2 == 1 {
            second = second.scale(&ScalarPoly::constant(&ctx, rat_int(-1)));
        }
        let right = alpha
            .exterior_derivative()
            .wedge(&beta)
            .unwrap()
            .checked_add(&second)
            .unwrap();
        let diff = left
            .checked_add(&right.scale(&ScalarPoly::constant(&ctx, rat_int(-1))))
            .unwrap();
        assert!(diff.is_zero());
    }
}

#[test]
fn bracket_is_antisymmetric_and_satisfies_jacobi() {
    let gens = LieContext::new(&["P", "Q", "R"]).unwrap();
    let ctx = jet_context();
    let mut r = rng(5);
    for _ in 0..CASES {
        let x = random_lie(&mut r, &gens, &ctx, 2);
        let y = random_lie(&mut r, &gens, &ctx, 2);
        let z = random_lie(&mut r, &gens, &ctx, 1);
        let anti = x
            .bracket(&y)
            .unwrap()
            .checked_add(&y.bracket(&x).unwrap())
            .unwrap();
        assert!(anti.is_zero(), "[x,y] + [y,x] must vanish");
        let jacobi = x
            .bracket(&y)
            .unwrap()
            .bracket(&z)
            .unwrap()
            .checked_add(&y.bracket(&z).unwrap().bracket(&x).unwrap())
            .unwrap()
            .checked_add(&z.bracket(&x).unwrap().bracket(&y).unwrap())
            .unwrap();
        assert!(jacobi.is_zero(), "Jacobi sum must vanish, got {jacobi}");
    }
}

#[test]
fn ideal_membership_certificates_recombine() {
    let pde = EvolutionPDE::parse("u", "u0*u1 + u2", &[]).unwrap();
    let ideal = contact_ideal(&pde).unwrap();
    let ctx = ideal.context().clone();
    let mut r = rng(6);
    for _ in 0..CASES {
        let mut target = DiffForm::zero(&ctx, 3);
        for g in ideal.ideal().generators() {
            let theta = random_form(&mut r, &ctx, 1);
            target = target.checked_add(&theta.wedge(g).unwrap()).unwrap();
        }
        let cert = ideal.ideal().reduce(&target, Some(3)).unwrap();
        assert!(cert.is_member(), "constructed combination must be a member");
        assert!(cert.recombines(ideal.ideal(), &target));
    }
}

#[test]
fn relation_rewriting_is_confluent_under_rule_shuffles() {
    let pde = EvolutionPDE::parse("u", "u0*u1 + u2", &[]).unwrap();
    let ideal = contact_ideal(&pde).unwrap();
    let ansatz = laxkit::connection_ansatz(&ideal, 1, 2).unwrap();
    let sys = laxkit::derive_determining(&ideal, &ansatz).unwrap();
    let sol = laxkit::solve_determining(&sys).unwrap();
    let rels = sol.relation_set();
    let gens = sol.generators().clone();
    let ctx = sol.context().clone();
    let mut r = rng(7);
    for _ in 0..CASES {
        let e = random_lie(&mut r, &gens, &ctx, 2);
        let straight = rels.normalize(&e).unwrap();
        let mut order: Vec<usize> = (0..rels.rule_count()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, r.gen_range(0..=i));
        }
        let shuffled = rels.normalize_with_order(&e, &order).unwrap();
        let diff = shuffled
            .checked_add(&straight.scale_rat(&rat_int(-1)))
            .unwrap();
        assert!(diff.is_zero(), "normal forms differ for {e}");
    }
}

#[test]
fn span_closure_is_seed_order_invariant() {
    let pde = EvolutionPDE::parse("u", "u0*u1 + u2", &[]).unwrap();
    let ideal = contact_ideal(&pde).unwrap();
    let ansatz = laxkit::connection_ansatz(&ideal, 1, 2).unwrap();
    let sys = laxkit::derive_determining(&ideal, &ansatz).unwrap();
    let sol = laxkit::solve_determining(&sys).unwrap();
    let rels = sol.relation_set();
    let gens = sol.generators().clone();
    let ctx = sol.context().clone();
    let mut r = rng(8);
    for _ in 0..CASES {
        let mut seeds = Vec::new();
        for _ in 0..r.gen_range(1..=3usize) {
            let e = random_lie(&mut r, &gens, &ctx, 1);
            if !e.is_zero() {
                seeds.push(e);
            }
        }
        if seeds.is_empty() {
            continue;
        }
        let base = subalgebra_span(&seeds, rels, 3).unwrap();
        let mut shuffled = seeds.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, r.gen_range(0..=i));
        }
        let again = subalgebra_span(&shuffled, rels, 3).unwrap();
        assert_eq!(base.closure, again.closure);
        assert_eq!(base.basis.len(), again.basis.len());
    }
}

#[test]
fn linear_solutions_back_substitute_to_zero() {
    let ctx = Context::builder()
        .parameter("a")
        .unwrap()
        .parameter("z1")
        .unwrap()
        .parameter("z2")
        .unwrap()
        .parameter("z3")
        .unwrap()
        .build();
    let unknowns: Vec<CoordId> = ["z1", "z2", "z3"]
        .iter()
        .map(|n| ctx.require(n).unwrap())
        .collect();
    let mut r = rng(9);
    for case in 0..CASES {
        // A consistent system by construction: combinations of (z_i - v_i).
        let values: Vec<ScalarPoly> = (0..3)
            .map(|_| {
                let p = random_poly(&mut r, &ctx, 2, 1);
                // Values must not mention the unknowns themselves.
                let mut bind = BTreeMap::new();
                for u in &unknowns {
                    bind.insert(*u, ScalarPoly::zero(&ctx));
                }
                p.substitute(&bind).unwrap()
            })
            .collect();
        let mut sys = LinearSystem::new(&ctx, unknowns.clone());
        let mut pushed = Vec::new();
        for _ in 0..r.gen_range(1..=4usize) {
            let mut eq = ScalarPoly::zero(&ctx);
            for (u, v) in unknowns.iter().zip(&values) {
                let c = small_rat(&mut r);
                let zi = ScalarPoly::coordinate(&ctx, *u);
                let gap = zi.checked_add(&v.scale(&rat_int(-1))).unwrap();
                eq = eq.checked_add(&gap.scale(&c)).unwrap();
            }
            sys.push(eq.clone()).unwrap();
            pushed.push(eq);
        }
        if case % 10 == 0 {
            // Roughly a tenth of the corpus is made contradictory on purpose.
            let z1 = ScalarPoly::coordinate(&ctx, unknowns[0]);
            let v1 = &values[0];
            sys.push(z1.checked_add(&v1.scale(&rat_int(-1))).unwrap()).unwrap();
            let shifted = z1
                .checked_add(&v1.scale(&rat_int(-1)))
                .unwrap()
                .checked_add(&ScalarPoly::one(&ctx))
                .unwrap();
            sys.push(shifted).unwrap();
            match sys.solve() {
                LinearOutcome::Inconsistent { certificate } => {
                    assert!(!certificate.is_zero());
                }
                other => panic!("expected a contradiction, got {other:?}"),
            }
            continue;
        }
        match sys.solve() {
            LinearOutcome::Solved { assignments, .. } => {
                for eq in &pushed {
                    let settled = eq.substitute(&assignments).unwrap();
                    assert!(settled.is_zero(), "equation survives back-substitution");
                }
            }
            other => panic!("consistent system failed to solve: {other:?}"),
        }
    }
}

#[test]
fn specialized_spectral_values_keep_the_pair_flat() {
    let pde = EvolutionPDE::parse("u", "u0*u1 + u2", &[]).unwrap();
    let ideal = contact_ideal(&pde).unwrap();
    let ansatz = laxkit::connection_ansatz(&ideal, 1, 2).unwrap();
    let sys = laxkit::derive_determining(&ideal, &ansatz).unwrap();
    let sol = laxkit::solve_determining(&sys).unwrap();
    let filt = laxkit::holonomy_filtration(&sol, 0).unwrap();
    let close = laxkit::holonomy_close(&sol, &filt).unwrap();
    let rep = laxkit::MatrixRep::from_entries(
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
                    vec!["0".to_string(), "0".to_string()],
                ],
            ),
        ],
    )
    .unwrap();
    let pair = assemble_lax(&sol, &close, &rep).unwrap();
    let lambda = pair.ctx.require("lambda").unwrap();
    let mut r = rng(10);
    for _ in 0..CASES {
        let value = ScalarPoly::constant(&pair.ctx, small_rat(&mut r));
        let mut bind = BTreeMap::new();
        bind.insert(lambda, value);
        let special = LaxPair {
            ctx: pair.ctx.clone(),
            u: pair.u.substitute(&bind).unwrap(),
            v: pair.v.substitute(&bind).unwrap(),
            images: pair.images.clone(),
        };
        let report = verify_zero_curvature(&pde, &special).unwrap();
        assert!(report.flat, "specializing the spectral parameter broke flatness");
    }
}

#[test]
fn rep_verification_is_invariant_under_conjugation() {
    let pde = EvolutionPDE::parse("u", "u0*u1 + u2", &[]).unwrap();
    let ideal = contact_ideal(&pde).unwrap();
    let ansatz = laxkit::connection_ansatz(&ideal, 1, 2).unwrap();
    let sys = laxkit::derive_determining(&ideal, &ansatz).unwrap();
    let sol = laxkit::solve_determining(&sys).unwrap();
    let filt = laxkit::holonomy_filtration(&sol, 0).unwrap();
    let close = laxkit::holonomy_close(&sol, &filt).unwrap();
    let entries = |name: &str, rows: [[&str; 2]; 2]| {
        (
            name.to_string(),
            rows.iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        )
    };
    let base = laxkit::MatrixRep::from_entries(
        close.table.context(),
        &[
            entries("A0", [["1/4*lambda", "-2"], ["0", "-1/4*lambda"]]),
            entries("A1", [["1/4", "0"], ["0", "-1/4"]]),
            entries("A2", [["-1/8*lambda^2", "lambda"], ["0", "1/8*lambda^2"]]),
            entries("A3", [["0", "1"], ["0", "0"]]),
        ],
    )
    .unwrap();
    assert!(laxkit::verify_solution_rep(&sol, &close, &base).unwrap().verified);

    let ctx = base.context().clone();
    let constant = |v: &Rat| ScalarPoly::constant(&ctx, v.clone());
    let mut r = rng(11);
    let mut checked = 0usize;
    while checked < CASES {
        let a = small_rat(&mut r);
        let b = small_rat(&mut r);
        let c = small_rat(&mut r);
        let d = small_rat(&mut r);
        let det = &(&a * &d) - &(&b * &c);
        if det == rat_int(0) {
            continue;
        }
        let s = laxkit::PolyMatrix::from_rows(
            &ctx,
            vec![
                vec![constant(&a), constant(&b)],
                vec![constant(&c), constant(&d)],
            ],
        )
        .unwrap();
        let adj = laxkit::PolyMatrix::from_rows(
            &ctx,
            vec![
                vec![constant(&d), constant(&-b.clone())],
                vec![constant(&-c.clone()), constant(&a)],
            ],
        )
        .unwrap();
        let s_inv = adj.scale_rat(&(&rat_int(1) / &det));

        let mut mats = BTreeMap::new();
        for name in ["A0", "A1", "A2", "A3"] {
            let m = base.get(name).unwrap();
            let conj = s.checked_mul(m).unwrap().checked_mul(&s_inv).unwrap();
            mats.insert(name.to_string(), conj);
        }
        let conj = laxkit::MatrixRep::new(mats.clone()).unwrap();
        let report = laxkit::verify_solution_rep(&sol, &close, &conj).unwrap();
        assert!(report.verified, "conjugation broke verification: {:?}", report.failures);

        if checked % 8 == 0 {
            // Adding a trace to one image must trip the bracket table.
            let mut broken = mats.clone();
            let m3 = broken.get_mut("A3").unwrap();
            let bumped = m3.at(0, 0).checked_add(&ScalarPoly::constant(&ctx, rat_int(1))).unwrap();
            m3.set(0, 0, bumped);
            let bad = laxkit::MatrixRep::new(broken).unwrap();
            assert!(!laxkit::verify_solution_rep(&sol, &close, &bad).unwrap().verified);
        }
        checked += 1;
    }
}
