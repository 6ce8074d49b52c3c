//! The extension of `U_psi` to finite measures: atoms plus an integrable
//! density. An atom at `s > 0` maps to the kernel `x -> psi(s/x)/x` on
//! `[s, inf)`, the atom at `0` maps to `m delta_0` with `m` the moment of
//! `psi`, and densities map through `U_psi` itself.

use crate::condition_c::{log_gap, phi_tail_form, phi_unit_form};
use crate::error::{Error, Result};
use crate::float_serde::{csv_float, ext};
use crate::function::TestFunction;
use crate::operator::{sample_apply_u, weighted_norm, SAMPLE_GRID};
use crate::weights::{ProblemInstance, PsiKind, PsiProfile};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// A point mass `c delta_s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub s: f64,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedMeasure {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<TestFunction>,
}

impl WeightedMeasure {
    pub fn new(atoms: Vec<Atom>, density: Option<TestFunction>) -> Result<Self> {
        let mut locations: Vec<f64> = Vec::with_capacity(atoms.len());
        for a in &atoms {
            if !(a.s.is_finite() && a.s >= 0.0) {
                return Err(Error::invalid("measure", format!("atom location must be >= 0, got {}", a.s)));
            }
            if !a.c.is_finite() {
                return Err(Error::invalid("measure", "atom masses must be finite"));
            }
            locations.push(a.s);
        }
        locations.sort_by(f64::total_cmp);
        if locations.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::invalid("measure", "atom locations must be distinct"));
        }
        Ok(WeightedMeasure { atoms, density })
    }

    pub fn atom(s: f64, c: f64) -> Result<Self> {
        Self::new(vec![Atom { s, c }], None)
    }

    pub fn density(f: TestFunction) -> Self {
        WeightedMeasure {
            atoms: Vec::new(),
            density: Some(f),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: WeightedMeasure = serde_json::from_str(text)?;
        Self::new(m.atoms, m.density)
    }

    /// `mu({0})`.
    pub fn mass_at_zero(&self) -> f64 {
        self.atoms.iter().filter(|a| a.s == 0.0).map(|a| a.c).sum()
    }

    /// Checks that the total variation is finite in `L1(omega1)`.
    pub fn validate(&self, inst: &ProblemInstance) -> Result<()> {
        Self::new(self.atoms.clone(), self.density.clone())?;
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.s > 0.0)
            .map(|a| a.c.abs() * inst.omega1.ln_eval(a.s).exp())
            .sum();
        if !atoms.is_finite() {
            return Err(Error::invalid("measure", "weighted mass of the atoms is not finite"));
        }
        if let Some(f) = &self.density {
            let n = weighted_norm(f, &inst.omega1, inst.quad_tol)?;
            if n.diverged || !n.value.is_finite() {
                return Err(Error::invalid("measure", "density is not integrable against omega1"));
            }
        }
        Ok(())
    }

    /// `a mu + b nu`.
    pub fn combine(a: f64, mu: &WeightedMeasure, b: f64, nu: &WeightedMeasure) -> Result<WeightedMeasure> {
        let mut atoms: Vec<Atom> = Vec::new();
        for (k, m) in [(a, mu), (b, nu)] {
            for at in &m.atoms {
                match atoms.iter_mut().find(|x| x.s == at.s) {
                    Some(x) => x.c += k * at.c,
                    None => atoms.push(Atom { s: at.s, c: k * at.c }),
                }
            }
        }
        let density = match (&mu.density, &nu.density) {
            (None, None) => None,
            (Some(f), None) => Some(TestFunction::combine(a, f, 0.0, &TestFunction::zero())?),
            (None, Some(g)) => Some(TestFunction::combine(0.0, &TestFunction::zero(), b, g)?),
            (Some(f), Some(g)) => Some(TestFunction::combine(a, f, b, g)?),
        };
        Self::new(atoms, density)
    }
}

fn check_positive(what: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            requirement: "> 0",
            value: v,
        })
    }
}

/// Image of `delta_s` at `x`: `psi(s/x)/x` for `x >= s`, else `0`.
pub fn delta_kernel(inst: &ProblemInstance, s: f64, x: f64) -> Result<f64> {
    check_positive("s", s)?;
    check_positive("x", x)?;
    Ok(kernel(&inst.psi, s, x))
}

fn kernel(psi: &PsiProfile, s: f64, x: f64) -> f64 {
    if x < s {
        0.0
    } else {
        psi.value(s / x) / x
    }
}

/// `c psi(s/x)/x 1_{x >= s}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    pub s: f64,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionResult {
    /// Coefficient of `delta_0` in the image.
    #[serde(with = "ext")]
    pub delta0_coefficient: f64,
    /// Images of the atoms at positive locations.
    pub kernel_terms: Vec<KernelTerm>,
    /// `U_psi` applied to the density, tabulated.
    pub density_image: Option<TestFunction>,
    /// The whole absolutely continuous part, tabulated.
    pub l1_part: TestFunction,
}

impl ExtensionResult {
    /// The absolutely continuous part at `x`: atom images exactly, the
    /// density image interpolated.
    pub fn l1_value(&self, psi: &PsiProfile, x: f64) -> f64 {
        let atoms: f64 = self.kernel_terms.iter().map(|k| k.c * kernel(psi, k.s, x)).sum();
        atoms + self.density_image.as_ref().map_or(0.0, |f| f.eval(x))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the tabulated `l1_part` as `x,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.l1_part.write_csv(out)
    }
}

/// The image of `mu` under the extended operator, with the absolutely
/// continuous part tabulated on [`SAMPLE_GRID`].
pub fn extend_apply(inst: &ProblemInstance, mu: &WeightedMeasure) -> Result<ExtensionResult> {
    let mass0 = mu.mass_at_zero();
    let delta0_coefficient = if mass0 == 0.0 {
        0.0
    } else {
        let m = inst.moment()?;
        if m == f64::INFINITY {
            return Err(Error::UndefinedExtension { mass: mass0 });
        }
        m * mass0
    };
    let kernel_terms: Vec<KernelTerm> = mu
        .atoms
        .iter()
        .filter(|a| a.s > 0.0 && a.c != 0.0)
        .map(|a| KernelTerm { s: a.s, c: a.c })
        .collect();
    let (lo, hi, n) = SAMPLE_GRID;
    let density_image = match &mu.density {
        Some(f) if !f.is_zero() => Some(sample_apply_u(inst, f, lo, hi, n)?),
        _ => None,
    };
    let xs = crate::grid::log_grid(lo, hi, n);
    let values: Vec<f64> = xs
        .par_iter()
        .map(|&x| {
            let atoms: f64 = kernel_terms.iter().map(|k| k.c * kernel(&inst.psi, k.s, x)).sum();
            atoms + density_image.as_ref().map_or(0.0, |f| f.eval(x))
        })
        .collect();
    let l1_part = TestFunction::sampled(xs, values)?;
    Ok(ExtensionResult {
        delta0_coefficient,
        kernel_terms,
        density_image,
        l1_part,
    })
}

/// `||U delta_s||` in `L1(omega2)` against `Phi(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelNormIdentity {
    #[serde(with = "ext")]
    pub s: f64,
    #[serde(with = "ext")]
    pub kernel_norm: f64,
    #[serde(with = "ext")]
    pub phi_value: f64,
    #[serde(with = "ext")]
    pub rel_gap: f64,
}

/// Compares `int_s^inf omega2(x) psi(s/x)/x dx` with `Phi(s)`.
pub fn kernel_norm_identity(inst: &ProblemInstance, s: f64) -> Result<KernelNormIdentity> {
    let tail = phi_tail_form(inst, s)?;
    let unit = phi_unit_form(inst, s)?;
    Ok(KernelNormIdentity {
        s,
        kernel_norm: tail.value(),
        phi_value: unit.value(),
        rel_gap: log_gap(&tail, &unit),
    })
}

/// A continuous minorant of a profile and what it gives up.
#[derive(Clone, Debug, PartialEq)]
pub struct Minorant {
    pub profile: PsiProfile,
    /// `psi - minorant`, itself a non-negative profile.
    pub difference: PsiProfile,
    /// Smallest ramp width used; `0` when nothing was changed.
    pub delta: f64,
    /// `int_0^1 (psi - minorant)(t)/t dt`.
    pub moment_gap: f64,
}

/// A jump of a piecewise-linear profile at `at` from `left` to `right`.
#[derive(Clone, Copy, Debug)]
struct Jump {
    at: f64,
    left: f64,
    right: f64,
    /// Room for a ramp on the side that gets modified.
    room: f64,
}

fn pl_form(kind: &PsiKind) -> Option<(Vec<f64>, Vec<f64>)> {
    match kind {
        PsiKind::Plateau { k, a } if *a > 0.0 => Some((vec![0.0, *a, *a, 1.0], vec![0.0, 0.0, *k, *k])),
        PsiKind::Plateau { k, .. } => Some((vec![0.0, 1.0], vec![*k, *k])),
        PsiKind::PiecewiseLinear { nodes, values } => Some((nodes.clone(), values.clone())),
        _ => None,
    }
}

fn jumps(nodes: &[f64], values: &[f64]) -> Vec<Jump> {
    let n = nodes.len();
    (0..n - 1)
        .filter(|&i| nodes[i] == nodes[i + 1] && values[i] != values[i + 1])
        .map(|i| {
            let (at, left, right) = (nodes[i], values[i], values[i + 1]);
            let room = if right > left {
                nodes.get(i + 2).map_or(0.0, |next| next - at)
            } else {
                at - nodes[i - 1]
            };
            Jump { at, left, right, room }
        })
        .collect()
}

fn interp(t0: f64, v0: f64, t1: f64, v1: f64, t: f64) -> f64 {
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// `int (ramp deficit)/t dt` for one smoothed jump of height `h`.
fn ramp_gap(j: &Jump, delta: f64) -> f64 {
    let h = (j.right - j.left).abs();
    if j.at == 0.0 || (j.at == 1.0 && j.right > j.left) {
        return 0.0;
    }
    if j.right > j.left {
        // deficit h (t0 + delta - t)/delta on [t0, t0 + delta]
        let x = delta / j.at;
        h * ((1.0 / x + 1.0) * x.ln_1p() - 1.0)
    } else {
        // deficit h (t - t0 + delta)/delta on [t0 - delta, t0]
        let x = delta / j.at;
        h * (1.0 + (1.0 / x - 1.0) * (-x).ln_1p())
    }
}

/// Builds the minorant and the deficit profile for one piecewise-linear
/// profile with the given ramp width.
fn smooth(nodes: &[f64], values: &[f64], delta: f64) -> Result<(PsiProfile, PsiProfile)> {
    let mut out_t = Vec::new();
    let mut out_v = Vec::new();
    let mut diff: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let n = nodes.len();
    let mut i = 0;
    while i < n {
        let jump = i + 1 < n && nodes[i] == nodes[i + 1];
        if !jump {
            out_t.push(nodes[i]);
            out_v.push(values[i]);
            i += 1;
            continue;
        }
        let (t0, l, r) = (nodes[i], values[i], values[i + 1]);
        if t0 == 0.0 || l == r {
            out_t.push(t0);
            out_v.push(r);
        } else if r > l && t0 == 1.0 {
            out_t.push(t0);
            out_v.push(l);
        } else if r > l {
            let t1 = t0 + delta;
            out_t.extend([t0, t1]);
            out_v.extend([l, interp(t0, r, nodes[i + 2], values[i + 2], t1)]);
            diff.extend([(t0, 0.0), (t0, r - l), (t1, 0.0)]);
        } else {
            let t1 = t0 - delta;
            out_t.extend([t1, t0]);
            out_v.extend([interp(nodes[i - 1], values[i - 1], t0, l, t1), r]);
            diff.extend([(t1, 0.0), (t0, l - r), (t0, 0.0)]);
        }
        i += 2;
    }
    if diff.last().is_some_and(|(t, _)| *t < 1.0) {
        diff.push((1.0, 0.0));
    }
    let (dt, dv): (Vec<f64>, Vec<f64>) = diff.into_iter().unzip();
    let (dt, dv) = dedupe(&dt, &dv);
    let minorant = PsiProfile::piecewise_linear(out_t, out_v)?;
    let difference = PsiProfile::piecewise_linear(dt, dv)?;
    Ok((minorant, difference))
}

/// Drops exact repeats of a node, left where two ramps touch.
fn dedupe(t: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut ot: Vec<f64> = Vec::new();
    let mut ov: Vec<f64> = Vec::new();
    for (&a, &b) in t.iter().zip(v) {
        if let (Some(&pt), Some(&pv)) = (ot.last(), ov.last()) {
            if pt == a && pv == b {
                continue;
            }
        }
        ot.push(a);
        ov.push(b);
    }
    (ot, ov)
}

/// A continuous piecewise-linear `psi' <= psi` whose moment is within `eps`
/// of that of `psi`. Each jump is replaced by a linear ramp on the side where
/// the profile is larger; the ramp width starts at half the room available
/// and is halved until the moment gap is at most `eps`. Continuous profiles
/// are returned unchanged.
pub fn continuous_minorant(psi: &PsiProfile, eps: f64) -> Result<Minorant> {
    check_positive("eps", eps)?;
    let m = psi.moment(crate::weights::DEFAULT_QUAD_TOL)?;
    if m == f64::INFINITY {
        return Err(Error::Precondition(
            "a continuous minorant needs a profile with finite moment".into(),
        ));
    }
    minorant_of(psi, eps)
}

fn minorant_of(psi: &PsiProfile, eps: f64) -> Result<Minorant> {
    let unchanged = || Minorant {
        profile: psi.clone(),
        difference: PsiProfile::zero(),
        delta: 0.0,
        moment_gap: 0.0,
    };
    if let PsiKind::ScaledSum { terms } = psi.kind() {
        let active = terms.iter().filter(|(c, _)| *c > 0.0).count().max(1) as f64;
        let mut profiles = Vec::new();
        let mut diffs = Vec::new();
        let mut delta = f64::INFINITY;
        let mut gap = 0.0;
        for (c, p) in terms {
            if *c == 0.0 {
                profiles.push((*c, p.clone()));
                continue;
            }
            let part = minorant_of(p, eps / (active * c))?;
            profiles.push((*c, part.profile));
            diffs.push((*c, part.difference));
            if part.delta > 0.0 {
                delta = delta.min(part.delta);
            }
            gap += c * part.moment_gap;
        }
        return Ok(Minorant {
            profile: PsiProfile::scaled_sum(profiles)?,
            difference: PsiProfile::scaled_sum(diffs)?,
            delta: if delta.is_finite() { delta } else { 0.0 },
            moment_gap: gap,
        });
    }
    let Some((nodes, values)) = pl_form(psi.kind()) else {
        return Ok(unchanged());
    };
    let js: Vec<Jump> = jumps(&nodes, &values)
        .into_iter()
        .filter(|j| j.at > 0.0 && !(j.at == 1.0 && j.right > j.left))
        .collect();
    if js.is_empty() {
        return Ok(unchanged());
    }
    let mut delta = 0.5 * js.iter().map(|j| j.room).fold(f64::INFINITY, f64::min);
    let mut gap = f64::INFINITY;
    for _ in 0..200 {
        gap = js.iter().map(|j| ramp_gap(j, delta)).sum();
        if gap <= eps {
            break;
        }
        delta *= 0.5;
    }
    let (profile, difference) = smooth(&nodes, &values, delta)?;
    Ok(Minorant {
        profile,
        difference,
        delta,
        moment_gap: gap,
    })
}

/// `sup_s int_0^1 omega2(s/t) d(t)/t dt / omega1(s)` over `s_values`, with
/// `d` a deficit profile from [`continuous_minorant`].
pub fn minorant_distance(inst: &ProblemInstance, difference: &PsiProfile, s_values: &[f64]) -> Result<f64> {
    let sub = ProblemInstance {
        psi: difference.clone(),
        ..inst.clone()
    };
    let vals = s_values
        .par_iter()
        .map(|&s| {
            let r = phi_unit_form(&sub, s)?;
            Ok((r.ln_value() - inst.omega1.ln_eval(s)).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Writes `s,kernel_norm,phi,rel_gap` rows.
pub fn write_identity_csv<W: Write>(rows: &[KernelNormIdentity], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "kernel_norm", "phi", "rel_gap"])?;
    for r in rows {
        w.write_record([
            csv_float(r.s),
            csv_float(r.kernel_norm),
            csv_float(r.phi_value),
            csv_float(r.rel_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}
