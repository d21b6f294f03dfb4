//! Experiment configuration: a single JSON document describing the instance,
//! the observable, the protocol parameters, and the repetition count.
//!
//! Unknown keys are rejected everywhere: a silently ignored field would
//! invalidate the statistical claims an experiment is meant to support.

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::Deserialize;
use shadows_core::pipeline::ConstantsProfile;
use shadows_core::rng::Stream;
use shadows_core::states::{planted_instance, Observable, SpectralState};
use shadows_core::{CMatrix, CVector};
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; the --seed flag overrides it.
    pub seed: Option<u64>,
    pub instance: InstanceSpec,
    /// Defaults to the projector onto the instance's principal eigenvector.
    pub observable: Option<ObservableSpec>,
    /// Needed by `pipeline`; ignored by `moments` and `sample`.
    pub protocol: Option<ProtocolSpec>,
    /// Number of pipeline runs or raw measurement draws. Default 1.
    pub repetitions: Option<u64>,
    /// Joint-measurement width for `moments` and `sample`. Default 2.
    pub width: Option<usize>,
    /// Big-O constants profile; defaults to the unit profile.
    pub constants: Option<ConstantsProfile>,
    /// Purifier copy accounting: "deterministic" (default) or "stochastic".
    pub consumption: Option<ConsumptionSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumptionSpec {
    Deterministic,
    Stochastic,
}

impl ConsumptionSpec {
    pub fn mode(self) -> shadows_core::pipeline::ConsumptionMode {
        match self {
            ConsumptionSpec::Deterministic => {
                shadows_core::pipeline::ConsumptionMode::Deterministic
            }
            ConsumptionSpec::Stochastic => shadows_core::pipeline::ConsumptionMode::Stochastic,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub d: usize,
    /// Principal deviation; must lie in [0, 1/2).
    pub eta: f64,
    /// Tail spectrum (length d-1, sums to 1). Default: uniform.
    pub tail: Option<Vec<f64>>,
    /// Principal eigenvector as [re, im] pairs. Default: first basis vector.
    pub principal: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// Projector onto the principal eigenvector (fidelity observable, B = 1).
    Principal,
    /// Random observable with ||O||_inf <= 1 and Tr(O^2) = target_b.
    Random { target_b: f64 },
    /// Explicit Hermitian matrix as rows of [re, im] pairs.
    Matrix { matrix: Vec<Vec<[f64; 2]>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolSpec {
    /// Fixed (k, n, b).
    Explicit { k: u64, n: u64, b: u64 },
    /// Plan from (B, eps) after estimating the deviation with r target
    /// failures (trial cutoff optional).
    Auto {
        eps: f64,
        #[serde(default = "default_r")]
        r: u64,
        cutoff: Option<u64>,
    },
}

fn default_r() -> u64 {
    50
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_slice(&bytes)
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok((config, bytes))
    }

    pub fn constants(&self) -> ConstantsProfile {
        self.constants.clone().unwrap_or_default()
    }

    pub fn build_instance(&self, rng: &mut Stream) -> Result<SpectralState> {
        let spec = &self.instance;
        if spec.d < 2 {
            bail!("instance.d must be >= 2, got {}", spec.d);
        }
        let principal = match &spec.principal {
            Some(entries) => {
                if entries.len() != spec.d {
                    bail!(
                        "instance.principal has {} entries, expected d = {}",
                        entries.len(),
                        spec.d
                    );
                }
                let v = CVector::from_iterator(
                    spec.d,
                    entries.iter().map(|&[re, im]| Complex64::new(re, im)),
                );
                let norm = v.norm();
                if norm < 1e-12 {
                    bail!("instance.principal must be nonzero");
                }
                v / Complex64::new(norm, 0.0)
            }
            None => {
                let mut v = CVector::zeros(spec.d);
                v[0] = Complex64::new(1.0, 0.0);
                v
            }
        };
        let tail = match &spec.tail {
            Some(t) => t.clone(),
            None => vec![1.0 / (spec.d - 1) as f64; spec.d - 1],
        };
        planted_instance(spec.d, spec.eta, &principal, &tail, rng)
            .context("invalid instance spec")
    }

    pub fn build_observable(
        &self,
        instance: &SpectralState,
        rng: &mut Stream,
    ) -> Result<Observable> {
        let spec = self.observable.clone().unwrap_or(ObservableSpec::Principal);
        match spec {
            ObservableSpec::Principal => {
                Observable::new(instance.principal_projector()).context("invalid observable")
            }
            ObservableSpec::Random { target_b } => {
                shadows_core::states::random_observable(instance.d(), target_b, rng)
                    .context("invalid observable spec")
            }
            ObservableSpec::Matrix { matrix } => {
                let d = matrix.len();
                if d != instance.d() || matrix.iter().any(|row| row.len() != d) {
                    bail!("observable.matrix must be {0}x{0} to match the instance", instance.d());
                }
                let m = CMatrix::from_fn(d, d, |r, c| {
                    let [re, im] = matrix[r][c];
                    Complex64::new(re, im)
                });
                Observable::new(m).context("invalid observable matrix")
            }
        }
    }
}

/// FNV-1a hash of the raw config bytes; stamped into every output so results
/// can be tied back to the exact configuration that produced them.
pub fn config_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
