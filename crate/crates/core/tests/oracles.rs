//! Library values checked against independent computations: brute-force sums
//! evaluated here, and reference values frozen from a 30-digit evaluation.

use approx::assert_relative_eq;
use hardy_core::condition_c::phi;
use hardy_core::measures::{extend_apply, Atom, WeightedMeasure};
use hardy_core::operator::{apply_u, duality};
use hardy_core::reproduce::{exponential_instance, gaussian_instance};
use hardy_core::{ProblemInstance, PsiProfile, TestFunction, Weight};

fn unit_power(alpha: f64) -> ProblemInstance {
    ProblemInstance::new(PsiProfile::power(alpha).unwrap(), Weight::unit(), Weight::unit())
}

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    h * (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>()
}

#[test]
fn gauss_moment_matches_trapezoid_oracle() {
    // int_0^1 e^{-1/t^2}/t dt = int_0^inf exp(-e^{2u}) du with t = e^{-u}
    let oracle = trapezoid(|u| (-(2.0 * u).exp()).exp(), 0.0, 6.0, 600_000);
    let m = PsiProfile::gauss_essential().moment(1e-10).unwrap();
    assert_relative_eq!(m, oracle, max_relative = 1e-6);
    // E1(1)/2
    assert_relative_eq!(m, 0.109_691_967_197_760_14, max_relative = 1e-9);
}

#[test]
fn indicator_image_matches_riemann_oracle() {
    let inst = unit_power(1.0);
    let f = TestFunction::indicator(1.0).unwrap();
    for x in [0.5, 1.0, 2.0, 5.0] {
        let got = apply_u(&inst, &f, x).unwrap();
        let riemann = midpoint(|t| if t * x <= 1.0 { t } else { 0.0 }, 0.0, 1.0, 1_000_000);
        let closed = x.min(1.0).powi(2) / (2.0 * x * x);
        assert_relative_eq!(got, closed, max_relative = 1e-10);
        assert!((got - riemann).abs() <= 1e-5, "x = {x}: {got} vs {riemann}");
    }
}

#[test]
fn indicator_duality_common_value_is_one() {
    // int_0^inf min(x,1)^2/(2x^2) dx, by a Riemann sum over [0,1] plus the
    // exact tail 1/2
    let head = midpoint(|x: f64| x.min(1.0).powi(2) / (2.0 * x * x), 0.0, 1.0, 100_000);
    assert_relative_eq!(head + 0.5, 1.0, max_relative = 1e-12);
    let d = duality(
        &unit_power(1.0),
        &TestFunction::indicator(1.0).unwrap(),
        &TestFunction::constant(1.0).unwrap(),
        1e-8,
    )
    .unwrap();
    assert_relative_eq!(d.image_pairing, 1.0, max_relative = 1e-6);
    assert_relative_eq!(d.adjoint_pairing, 1.0, max_relative = 1e-6);
    assert!(d.gap <= 1e-6);
}

/// Spreads each atom uniformly over `n` sub-atoms of width `w` and sums the
/// point-mass images `c psi(s/x)/x` directly.
fn smeared_atoms(atoms: &[(f64, f64)], psi: impl Fn(f64) -> f64, x: f64, w: f64, n: usize) -> f64 {
    atoms
        .iter()
        .map(|&(s, c)| {
            midpoint(
                |y| if y <= x { c / w * psi(y / x) / x } else { 0.0 },
                s - w / 2.0,
                s + w / 2.0,
                n,
            )
        })
        .sum()
}

#[test]
fn mixed_atoms_match_discretized_measure() {
    let inst = unit_power(1.0);
    let mu = WeightedMeasure::new(vec![Atom { s: 1.0, c: 2.0 }, Atom { s: 2.0, c: -3.0 }], None).unwrap();
    let r = extend_apply(&inst, &mu).unwrap();
    assert_eq!(r.delta0_coefficient, 0.0);
    for x in [2.5, 4.0, 7.0, 30.0] {
        let oracle = smeared_atoms(&[(1.0, 2.0), (2.0, -3.0)], |t| t, x, 1e-3, 1000);
        assert!((r.l1_value(&inst.psi, x) - oracle).abs() <= 1e-6, "x = {x}");
    }
    assert!((r.l1_value(&inst.psi, 4.0) + 0.25).abs() <= 1e-15);

    // The same measure smeared into a narrow density and pushed through U.
    let h = 1e-3;
    let bump = |s: f64, c: f64| {
        TestFunction::combine(
            c / h,
            &TestFunction::indicator(s + h / 2.0).unwrap(),
            -c / h,
            &TestFunction::indicator(s - h / 2.0).unwrap(),
        )
        .unwrap()
    };
    let density = TestFunction::combine(1.0, &bump(1.0, 2.0), 1.0, &bump(2.0, -3.0)).unwrap();
    let via_u = apply_u(&inst, &density, 4.0).unwrap();
    assert!((via_u + 0.25).abs() <= 1e-6, "{via_u}");
}

// Reference values of int_1^inf e^{s y - y^2}/y dy from a 30-digit
// evaluation.
const GAUSSIAN_PHI: [(f64, f64); 5] = [
    (2.0, 1.644_923_811_388_892),
    (3.0, 7.750_374_553_459_194),
    (4.0, 46.081_479_818_133_86),
    (6.0, 5_074.136_619_640_339),
    (8.0, 4_074_303.323_092_297),
];

#[test]
fn gaussian_phi_matches_reference() {
    let inst = gaussian_instance().unwrap();
    for (s, want) in GAUSSIAN_PHI {
        assert_relative_eq!(phi(&inst, s).unwrap(), want, max_relative = 1e-7);
    }
}

// int_s^inf e^{-x}/x (s/x)^alpha dx
const EXPONENTIAL_PHI: [(f64, f64, f64); 4] = [
    (1.0, 1.0, 0.148_495_506_775_922_05),
    (1.0, 10.0, 3.830_240_465_631_609e-6),
    (2.0, 1.0, 0.109_691_967_197_760_14),
    (2.0, 10.0, 3.548_762_553_084_382e-6),
];

#[test]
fn exponential_phi_matches_reference() {
    for (alpha, s, want) in EXPONENTIAL_PHI {
        let inst = exponential_instance(alpha).unwrap();
        assert_relative_eq!(phi(&inst, s).unwrap(), want, max_relative = 1e-7);
    }
}

#[test]
fn gaussian_ratio_approaches_its_limit() {
    // Phi(s) s e^{-s^2/4} = int e^{-u^2} s/(s/2 + u) du over u > 1 - s/2,
    // which is 2 sqrt(pi) (1 + 2/s^2 + O(s^-4)).
    let inst = gaussian_instance().unwrap();
    for s in [20.0f64, 40.0] {
        let ratio = phi(&inst, s).unwrap() * s * (-s * s / 4.0).exp();
        let expected = 2.0 * std::f64::consts::PI.sqrt() * (1.0 + 2.0 / (s * s));
        assert_relative_eq!(ratio, expected, max_relative = 5e-4);
    }
}
