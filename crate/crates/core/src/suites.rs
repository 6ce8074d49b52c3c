//! Seeded random instances and test functions, and the randomized duality
//! suite built on them. Every generator draws from a ChaCha stream so a seed
//! reproduces the same sequence on every platform.

use crate::error::Result;
use crate::float_serde::{csv_float, ext};
use crate::function::{Term, TestFunction};
use crate::operator::duality;
use crate::weights::{Monotonicity, ProblemInstance, PsiProfile, Weight, WeightKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const DEFAULT_SEED: u64 = 42;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `x^a (1+x)^b e^{c x}` with non-positive exponents, so decreasing.
pub fn random_decreasing_weight(rng: &mut impl Rng) -> Weight {
    let a = rng.gen_range(-0.5..=0.0);
    let b = rng.gen_range(-2.0..=0.0);
    let c = if rng.gen_bool(0.5) { rng.gen_range(-1.0..=0.0) } else { 0.0 };
    Weight::parametric_tagged(a, b, c, 0.0, Monotonicity::Decreasing).expect("finite exponents")
}

/// A power, plateau or piecewise-linear profile with finite moment.
pub fn random_psi(rng: &mut impl Rng) -> PsiProfile {
    match rng.gen_range(0..3) {
        0 => PsiProfile::power(rng.gen_range(0.5..3.0)).expect("positive exponent"),
        1 => PsiProfile::plateau(rng.gen_range(0.5..2.0), rng.gen_range(0.05..0.95)).expect("valid plateau"),
        _ => {
            let a = rng.gen_range(0.1..0.4);
            let b = rng.gen_range(0.5..0.9);
            let values = vec![0.0, rng.gen_range(0.5..2.0), rng.gen_range(0.1..2.0), rng.gen_range(0.0..1.0)];
            PsiProfile::piecewise_linear(vec![0.0, a, b, 1.0], values).expect("valid nodes")
        }
    }
}

/// A profile with at least one jump, for minorant experiments.
pub fn random_jump_psi(rng: &mut impl Rng) -> PsiProfile {
    if rng.gen_bool(0.5) {
        return PsiProfile::plateau(rng.gen_range(0.5..2.0), rng.gen_range(0.1..0.9)).expect("valid plateau");
    }
    let a = rng.gen_range(0.1..0.45);
    let b = rng.gen_range(0.55..0.9);
    let lo = rng.gen_range(0.0..1.0);
    let hi = lo + rng.gen_range(0.2..1.5);
    PsiProfile::piecewise_linear(vec![0.0, a, a, b, b, 1.0], vec![0.0, lo, hi, hi, lo, lo]).expect("valid nodes")
}

/// `psi` from [`random_psi`] with `omega1 = omega2` random and decreasing.
pub fn random_decreasing_instance(rng: &mut impl Rng) -> ProblemInstance {
    let psi = random_psi(rng);
    let w = random_decreasing_weight(rng);
    ProblemInstance::new(psi, w.clone(), w)
}

/// `c x^p e^{-q x - d x^2}`: in `L1(omega)` for every parametric weight with
/// quadratic coefficient below `1/2` and `x^a` exponent above `-1`.
pub fn random_source(rng: &mut impl Rng) -> TestFunction {
    let t = Term::new(rng.gen_range(0.5..2.0))
        .power(rng.gen_range(0.0..2.0))
        .exp_linear(-rng.gen_range(0.0..2.0))
        .exp_quadratic(-rng.gen_range(0.5..1.5));
    TestFunction::closed_form(vec![t]).expect("finite term")
}

/// `omega2(x) g(x)` with `g = c (1+x)^-r e^{-q x}`, optionally cut off at
/// `b`. Bounded against `omega2`, so the pairing with `U f` is finite.
pub fn random_probe(rng: &mut impl Rng, omega2: &Weight) -> TestFunction {
    let mut g = Term::new(rng.gen_range(-1.0..1.0))
        .shifted_power(-rng.gen_range(0.0..2.0))
        .exp_linear(-rng.gen_range(0.0..1.0));
    if rng.gen_bool(0.3) {
        g = g.cutoff(rng.gen_range(0.5..5.0));
    }
    let term = match omega2.kind() {
        WeightKind::Parametric { a, b, c, d } => g.times(&Term {
            c: 1.0,
            p: *a,
            r: *b,
            q: *c,
            d: *d,
            b: None,
        }),
        WeightKind::Tabulated { .. } => g,
    };
    TestFunction::closed_form(vec![term]).expect("finite term")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    pub index: usize,
    pub f: TestFunction,
    pub h: TestFunction,
    #[serde(with = "ext")]
    pub image_pairing: f64,
    #[serde(with = "ext")]
    pub adjoint_pairing: f64,
    #[serde(with = "ext")]
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualitySuite {
    pub seed: u64,
    #[serde(with = "ext")]
    pub tol: f64,
    pub rows: Vec<DualityRow>,
    #[serde(with = "ext")]
    pub max_gap: f64,
}

impl DualitySuite {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Columns `index, image_pairing, adjoint_pairing, gap`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "image_pairing", "adjoint_pairing", "gap"])?;
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                csv_float(r.image_pairing),
                csv_float(r.adjoint_pairing),
                csv_float(r.gap),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` seeded `(f, h)` pairs and their duality gaps at tolerance `tol`.
pub fn duality_suite(inst: &ProblemInstance, seed: u64, count: usize, tol: f64) -> Result<DualitySuite> {
    let mut rng = seeded_rng(seed);
    let pairs: Vec<_> = (0..count)
        .map(|_| (random_source(&mut rng), random_probe(&mut rng, &inst.omega2)))
        .collect();
    let rows = pairs
        .into_iter()
        .enumerate()
        .map(|(index, (f, h))| {
            let d = duality(inst, &f, &h, tol)?;
            Ok(DualityRow {
                index,
                f,
                h,
                image_pairing: d.image_pairing,
                adjoint_pairing: d.adjoint_pairing,
                gap: d.gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    Ok(DualitySuite {
        seed,
        tol,
        rows,
        max_gap,
    })
}
