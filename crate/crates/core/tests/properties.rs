//! Invariants of the quadrature, the condition-(C) evaluator, the operator
//! and the measure extension, checked on seeded and proptest-generated
//! instances.

use approx::assert_relative_eq;
use hardy_core::condition_c::{certify, phi, phi_tail_form, phi_unit_form};
use hardy_core::grid::log_grid;
use hardy_core::measures::{continuous_minorant, extend_apply, minorant_distance, Atom, WeightedMeasure};
use hardy_core::operator::{apply_adjoint, apply_adjoint_eval, apply_u, bound_check, AdjointForm};
use hardy_core::quadrature::{integrate_tail, integrate_unit, QuadOptions};
use hardy_core::suites::{
    random_decreasing_instance, random_jump_psi, random_probe, random_psi, random_source, seeded_rng,
};
use hardy_core::weakcompact::{default_g_suite, default_s_sequence, weak_star_limit_check};
use hardy_core::{ProblemInstance, PsiProfile, Term, TestFunction, Weight};
use proptest::prelude::*;
use rand::Rng;

fn quick() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

/// Random instances mixing decreasing, increasing and exponential weights,
/// each with a finite `Phi` at every `s`.
fn seeded_instances(seed: u64, n: usize) -> Vec<ProblemInstance> {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|i| match i % 3 {
            0 => random_decreasing_instance(&mut rng),
            1 => {
                let alpha = rng.gen_range(1.0..3.0);
                let beta = rng.gen_range(0.0..0.9);
                ProblemInstance::new(
                    PsiProfile::power(alpha).unwrap(),
                    Weight::polynomial(beta).unwrap(),
                    Weight::polynomial(beta).unwrap(),
                )
            }
            _ => {
                let w = Weight::parametric(0.0, rng.gen_range(-1.0..1.0), -rng.gen_range(0.2..2.0), 0.0).unwrap();
                ProblemInstance::new(random_psi(&mut rng), w.clone(), w)
            }
        })
        .collect()
}

#[test]
fn unit_and_tail_forms_of_phi_agree() {
    for (k, inst) in seeded_instances(11, 20).iter().enumerate() {
        for s in [1e-4, 0.03, 1.0, 7.0, 300.0] {
            let a = phi_unit_form(inst, s).unwrap();
            let b = phi_tail_form(inst, s).unwrap();
            assert!(!a.result.diverged && !b.result.diverged, "instance {k}, s = {s}");
            let (va, vb) = (a.value(), b.value());
            let allowed = a.abs_error() + b.abs_error() + 1e-10 * va.abs().max(vb.abs());
            assert!((va - vb).abs() <= allowed, "instance {k}, s = {s}: {va} vs {vb}");
        }
    }
}

#[test]
fn unit_and_tail_forms_of_adjoint_agree() {
    let mut rng = seeded_rng(12);
    for (k, inst) in seeded_instances(13, 20).iter().enumerate() {
        let h = random_probe(&mut rng, &inst.omega2);
        let opts = QuadOptions::with_tol(inst.quad_tol);
        for x in [1e-3, 0.2, 2.0, 40.0] {
            let a = apply_adjoint_eval(inst, &h, x, AdjointForm::Unit, &opts).unwrap();
            let b = apply_adjoint_eval(inst, &h, x, AdjointForm::Tail, &opts).unwrap();
            let allowed = a.abs_error + b.abs_error + 1e-10 * a.value.abs().max(b.value.abs()) + 1e-300;
            assert!((a.value - b.value).abs() <= allowed, "instance {k}, x = {x}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn adjoint_of_omega2_is_phi() {
    let inst = ProblemInstance::new(
        PsiProfile::power(2.0).unwrap(),
        Weight::parametric(0.0, -1.0, -1.0, 0.0).unwrap(),
        Weight::parametric(0.0, 0.0, -1.0, 0.0).unwrap(),
    );
    let h = TestFunction::from_weight(&inst.omega2).unwrap();
    for x in log_grid(1e-3, 1e2, 20) {
        assert_relative_eq!(apply_adjoint(&inst, &h, x).unwrap(), phi(&inst, x).unwrap(), max_relative = 1e-7);
    }
}

#[test]
fn adjoint_preserves_support_exactly() {
    let mut rng = seeded_rng(14);
    for inst in seeded_instances(15, 6) {
        let b = rng.gen_range(0.5..5.0);
        let h = TestFunction::closed_form(vec![Term::new(1.5).exp_linear(-0.3).cutoff(b)]).unwrap();
        for x in [b * 1.0001, 2.0 * b, 1e3 * b] {
            assert_eq!(apply_adjoint_eval(&inst, &h, x, AdjointForm::Tail, &QuadOptions::default()).unwrap().value, 0.0);
            assert_eq!(apply_adjoint(&inst, &h, x).unwrap(), 0.0);
        }
    }
}

#[test]
fn decreasing_weights_have_ratio_below_moment() {
    let mut rng = seeded_rng(16);
    for k in 0..10 {
        let inst = random_decreasing_instance(&mut rng);
        let m = inst.moment().unwrap();
        let v = certify(&inst).unwrap();
        assert!(v.is_bounded(), "instance {k}: {:?}", v.status);
        let worst = v.grid.ratio_values.iter().copied().fold(0.0, f64::max);
        assert!(worst <= m * (1.0 + 1e-6), "instance {k}: {worst} > {m}");
    }
}

#[test]
fn increasing_omega2_dominates_moment_times_weight() {
    let mut rng = seeded_rng(17);
    for _ in 0..10 {
        let alpha = rng.gen_range(1.0..3.0);
        let beta = rng.gen_range(0.1..0.9);
        let inst = ProblemInstance::new(
            PsiProfile::power(alpha).unwrap(),
            Weight::polynomial(beta).unwrap(),
            Weight::polynomial(beta).unwrap(),
        );
        let m = inst.moment().unwrap();
        for s in log_grid(1e-3, 1e3, 13) {
            let w = inst.omega2.eval(s).unwrap().value;
            assert!(phi(&inst, s).unwrap() >= m * w * (1.0 - 1e-9));
        }
        let v = certify(&inst).unwrap();
        let c = v.norm_estimate.unwrap();
        for (s, _) in v.grid.s_values.iter().zip(&v.grid.ratio_values) {
            let w2 = inst.omega2.eval(*s).unwrap().value;
            let w1 = inst.omega1.eval(*s).unwrap().value;
            assert!(w2 <= c / m * w1 * (1.0 + 1e-9));
        }
    }
}

#[test]
fn plateau_gives_lower_bound_for_increasing_weights() {
    let mut rng = seeded_rng(18);
    for _ in 0..8 {
        let k = rng.gen_range(0.5..3.0);
        let a = rng.gen_range(0.1..0.9);
        let w = Weight::polynomial(rng.gen_range(0.05..1.0)).unwrap();
        let inst = ProblemInstance::new(PsiProfile::plateau(k, a).unwrap(), w.clone(), w);
        for s in log_grid(1e-4, 1e4, 17) {
            let floor = k * (1.0 - a) * inst.omega1.eval(s).unwrap().value;
            assert!(phi(&inst, s).unwrap() >= floor * (1.0 - 1e-6));
        }
    }
}

#[test]
fn minorant_distance_decreases_for_plateau() {
    let inst = ProblemInstance::new(PsiProfile::plateau(2.0, 0.5).unwrap(), Weight::unit(), Weight::unit());
    let grid = log_grid(1e-3, 1e3, 13);
    let mut last = f64::INFINITY;
    let mut eps = 0.1;
    for _ in 0..6 {
        let m = continuous_minorant(&inst.psi, eps).unwrap();
        let d = minorant_distance(&inst, &m.difference, &grid).unwrap();
        assert!(d < last, "eps = {eps}: {d} !< {last}");
        assert!(m.moment_gap <= eps);
        last = d;
        eps /= 2.0;
    }
    assert!(last <= 0.1 / 32.0 * (1.0 + 1e-6));
}

#[test]
fn minorant_distance_decreases_on_seeded_profiles() {
    let mut rng = seeded_rng(19);
    let grid = log_grid(1e-2, 1e2, 9);
    for k in 0..20 {
        let psi = random_jump_psi(&mut rng);
        let w = Weight::parametric(0.0, -rng.gen_range(0.0..1.0), 0.0, 0.0).unwrap();
        let inst = ProblemInstance::new(psi.clone(), w.clone(), w);
        let mut last = f64::INFINITY;
        let mut eps = 0.05;
        for _ in 0..4 {
            let m = continuous_minorant(&psi, eps).unwrap();
            let d = minorant_distance(&inst, &m.difference, &grid).unwrap();
            assert!(d <= last, "profile {k}, eps = {eps}");
            assert!(m.moment_gap <= eps * (1.0 + 1e-9));
            for t in [0.05, 0.3, 0.5, 0.77, 0.99] {
                assert!(m.profile.eval(t).unwrap() <= psi.eval(t).unwrap() + 1e-12);
            }
            last = d;
            eps /= 2.0;
        }
    }
}

#[test]
fn extension_is_linear_in_the_measure() {
    let inst = ProblemInstance::new(
        PsiProfile::power(1.5).unwrap(),
        Weight::polynomial(-1.0).unwrap(),
        Weight::polynomial(-1.0).unwrap(),
    );
    let mu = WeightedMeasure::new(
        vec![Atom { s: 0.0, c: 1.0 }, Atom { s: 0.5, c: 2.0 }],
        Some(TestFunction::exponential(-1.0).unwrap()),
    )
    .unwrap();
    let nu = WeightedMeasure::new(vec![Atom { s: 0.5, c: -1.0 }, Atom { s: 3.0, c: 4.0 }], None).unwrap();
    let (a, b) = (0.7, -1.3);
    let combo = extend_apply(&inst, &WeightedMeasure::combine(a, &mu, b, &nu).unwrap()).unwrap();
    let rm = extend_apply(&inst, &mu).unwrap();
    let rn = extend_apply(&inst, &nu).unwrap();
    assert_relative_eq!(
        combo.delta0_coefficient,
        a * rm.delta0_coefficient + b * rn.delta0_coefficient,
        max_relative = 1e-12
    );
    for x in log_grid(1e-2, 1e2, 15) {
        let want = a * rm.l1_value(&inst.psi, x) + b * rn.l1_value(&inst.psi, x);
        assert!((combo.l1_value(&inst.psi, x) - want).abs() <= 1e-9 * (1.0 + want.abs()), "x = {x}");
    }
}

#[test]
fn density_extension_matches_operator() {
    let inst = ProblemInstance::new(
        PsiProfile::power(1.0).unwrap(),
        Weight::polynomial(-1.0).unwrap(),
        Weight::polynomial(-1.0).unwrap(),
    );
    let f = TestFunction::closed_form(vec![Term::new(1.0).power(0.5).exp_linear(-2.0)]).unwrap();
    let r = extend_apply(&inst, &WeightedMeasure::density(f.clone())).unwrap();
    for x in log_grid(1e-6, 1e6, 400) {
        let want = apply_u(&inst, &f, x).unwrap();
        assert!((r.l1_value(&inst.psi, x) - want).abs() <= 10.0 * inst.quad_tol, "x = {x}");
    }
}

#[test]
fn norm_inequality_holds_on_bounded_instances() {
    let insts = [
        ProblemInstance::new(
            PsiProfile::power(1.0).unwrap(),
            Weight::polynomial(-1.0).unwrap(),
            Weight::polynomial(-1.0).unwrap(),
        ),
        ProblemInstance::new(
            PsiProfile::power(2.0).unwrap(),
            Weight::parametric(0.0, -1.0, -1.0, 0.0).unwrap(),
            Weight::parametric(0.0, 0.0, -1.0, 0.0).unwrap(),
        ),
    ];
    let mut rng = seeded_rng(20);
    for inst in &insts {
        for _ in 0..3 {
            let f = random_source(&mut rng);
            let b = bound_check(inst, &f).unwrap();
            assert!(b.ok, "{b:?}");
        }
    }
}

#[test]
fn weak_star_escape_on_unit_weights() {
    let inst = ProblemInstance::new(PsiProfile::power(1.0).unwrap(), Weight::unit(), Weight::unit());
    let s = default_s_sequence();
    let r = weak_star_limit_check(&inst, &default_g_suite(&inst.omega2).unwrap(), &s).unwrap();
    let c_hat = certify(&inst).unwrap().norm_estimate.unwrap();
    assert!(r.rho_norms.iter().all(|n| *n <= c_hat * (1.0 + 1e-6)));
    for g in &r.series {
        let last = *g.gaps.last().unwrap();
        assert!(last <= 1e-3 * (1.0 + g.limit_target.abs()), "{}: {last}", g.name);
        let tail = &g.gaps[g.gaps.len() / 2..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0]), "{}", g.name);
    }
    for (k, eps) in r.epsilons.iter().enumerate() {
        let series: Vec<f64> = s
            .iter()
            .zip(&r.concentration[k])
            .filter(|(s, _)| **s < eps / 10.0)
            .map(|(_, c)| *c)
            .collect();
        assert!(series.windows(2).all(|w| w[1] >= w[0]), "eps = {eps}");
    }
}

#[test]
fn quadrature_divergence_is_monotone() {
    // 1/t diverges, so does anything above it
    assert!(integrate_unit(|t| 1.0 / t, 1e-8).unwrap().diverged);
    assert!(integrate_unit(|t| 2.0 / t + 1.0, 1e-8).unwrap().diverged);
    assert!(integrate_tail(|x| 1.0 / x, 1.0, 1e-8).unwrap().diverged);
    assert!(integrate_tail(|x| 1.0 / x + (-x).exp(), 1.0, 1e-8).unwrap().diverged);
}

proptest! {
    #![proptest_config(quick())]

    #[test]
    fn quadrature_is_linear(c in -10.0f64..10.0, alpha in 0.3f64..3.0) {
        let base = integrate_unit(|t| t.powf(alpha - 1.0), 1e-10).unwrap().value;
        let scaled = integrate_unit(|t| c * t.powf(alpha - 1.0), 1e-10).unwrap().value;
        prop_assert!((scaled - c * base).abs() <= 1e-8 * (1.0 + (c * base).abs()));
        prop_assert!((base - 1.0 / alpha).abs() <= 1e-8 / alpha);
    }

    #[test]
    fn tail_quadrature_is_linear(c in -10.0f64..10.0, q in 0.1f64..3.0, s in 0.01f64..10.0) {
        let base = integrate_tail(|x| (-q * x).exp(), s, 1e-10).unwrap().value;
        let scaled = integrate_tail(|x| c * (-q * x).exp(), s, 1e-10).unwrap().value;
        prop_assert!((scaled - c * base).abs() <= 1e-8 * (1.0 + (c * base).abs()));
        prop_assert!((base - (-q * s).exp() / q).abs() <= 1e-8 * base);
    }

    #[test]
    fn operator_is_linear(
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        lx in -5.0f64..5.0,
        seed in 0u64..1000,
    ) {
        let mut rng = seeded_rng(seed);
        let inst = random_decreasing_instance(&mut rng);
        let f = random_source(&mut rng);
        let g = random_source(&mut rng);
        let x = 10f64.powf(lx);
        let combo = TestFunction::combine(a, &f, b, &g).unwrap();
        let lhs = apply_u(&inst, &combo, x).unwrap();
        let rhs = a * apply_u(&inst, &f, x).unwrap() + b * apply_u(&inst, &g, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 10.0 * inst.quad_tol * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn phi_scales_with_psi(k in 0usize..3, ls in -4.0f64..4.0, seed in 0u64..1000) {
        let c = [0.5, 2.0, 10.0][k];
        let mut rng = seeded_rng(seed);
        let inst = random_decreasing_instance(&mut rng);
        let scaled = ProblemInstance { psi: inst.psi.scaled(c).unwrap(), ..inst.clone() };
        let s = 10f64.powf(ls);
        let base = phi(&inst, s).unwrap();
        prop_assert!((phi(&scaled, s).unwrap() - c * base).abs() <= 1e-7 * c * base);
    }

    #[test]
    fn phi_is_monotone_in_psi(extra in 0.0f64..2.0, ls in -4.0f64..4.0, seed in 0u64..1000) {
        let mut rng = seeded_rng(seed);
        let inst = random_decreasing_instance(&mut rng);
        let bigger = PsiProfile::scaled_sum(vec![
            (1.0, inst.psi.clone()),
            (extra, PsiProfile::power(1.0).unwrap()),
        ]).unwrap();
        let big = ProblemInstance { psi: bigger, ..inst.clone() };
        let s = 10f64.powf(ls);
        prop_assert!(phi(&inst, s).unwrap() <= phi(&big, s).unwrap() * (1.0 + 1e-9) + 2.0 * inst.quad_tol);
    }

    #[test]
    fn duality_gap_is_small(seed in 0u64..1000) {
        let mut rng = seeded_rng(seed);
        let inst = random_decreasing_instance(&mut rng);
        let f = random_source(&mut rng);
        let h = random_probe(&mut rng, &inst.omega2);
        let d = hardy_core::operator::duality(&inst, &f, &h, 1e-8).unwrap();
        prop_assert!(d.gap <= 1e-6, "{d:?}");
    }
}
