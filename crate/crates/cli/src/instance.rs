use anyhow::{bail, Context, Result};
use hardy_core::measures::WeightedMeasure;
use hardy_core::{ProblemInstance, PsiProfile, TestFunction, Weight};
use serde::Deserialize;
use std::path::Path;

/// An instance file: the operator plus optional inputs for individual
/// commands.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    psi: PsiProfile,
    omega1: Weight,
    omega2: Weight,
    #[serde(default)]
    quad_tol: Option<f64>,
    /// Source function for `apply` and `duality`.
    #[serde(default)]
    pub f: Option<TestFunction>,
    /// Probe function for `adjoint`.
    #[serde(default)]
    pub h: Option<TestFunction>,
    #[serde(default)]
    pub measure: Option<WeightedMeasure>,
    #[serde(default)]
    pub delta_s: Option<f64>,
}

pub struct Loaded {
    pub instance: ProblemInstance,
    pub extras: InstanceFile,
}

pub fn load(path: &Path, tol: Option<f64>) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let file: InstanceFile =
        serde_json::from_str(&text).with_context(|| format!("malformed instance {}", path.display()))?;
    let mut instance = ProblemInstance::new(file.psi.clone(), file.omega1.clone(), file.omega2.clone());
    if let Some(t) = tol.or(file.quad_tol) {
        instance = instance.with_tol(t)?;
    }
    if let Some(mu) = &file.measure {
        mu.validate(&instance)?;
    }
    if let Some(s) = file.delta_s {
        if !(s.is_finite() && s > 0.0) {
            bail!("delta_s must be positive, got {s}");
        }
    }
    Ok(Loaded { instance, extras: file })
}
