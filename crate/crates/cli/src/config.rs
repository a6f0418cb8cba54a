//! Run configuration: one JSON document with strict field checking. Omitted
//! blocks take their defaults, and the resolved document lists every value.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hymlab::linalg::{c, CMat};
use hymlab::verify::Fault;
use hymlab::{AscentConfig, BundleDescriptor, BundleSpec, SystemConfig, TorusDomain, VerifyConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lattice {
    /// `Λ = i·Id`.
    Square,
    /// `Λ = τ·Id` with `Im τ > 0`.
    Tau([f64; 2]),
    /// Explicit `Λ` as rows of `[re, im]` pairs.
    Periods(Vec<Vec<[f64; 2]>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KappaNormalization {
    /// `∫ (2π)^{-n} ω₀ⁿ = deg(det E)ⁿ`.
    DetDegree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub n: usize,
    pub lattice: Lattice,
    pub resolution: usize,
    pub normalization: KappaNormalization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InitialKind {
    /// Solution of the cushioned `t = 0` problem.
    Cushioned,
    Reference,
    /// `H₀`-relative `exp(u)` for a seeded smooth Hermitian `u`.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialMetric {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub modes: usize,
    pub max_frequency: i64,
}

impl Default for InitialMetric {
    fn default() -> Self {
        Self { kind: InitialKind::Cushioned, amplitude: 0.15, modes: 3, max_frequency: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    /// Coarse grid of the convergence comparison; the fine grid is the domain resolution.
    pub coarse_resolution: usize,
    pub samples: usize,
    pub fault: Option<Fault>,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        let v = VerifyConfig::default();
        Self { coarse_resolution: v.coarse_resolution, samples: v.samples, fault: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DensityChoice {
    /// All factors share one density.
    Equal,
    /// Independent densities per factor.
    Distinct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitBlock {
    pub densities: DensityChoice,
    /// Amplitude of `log f` before normalization.
    pub amplitude: f64,
}

impl Default for SplitBlock {
    fn default() -> Self {
        Self { densities: DensityChoice::Equal, amplitude: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShrinkBlock {
    pub concentrations: Vec<f64>,
}

impl Default for ShrinkBlock {
    fn default() -> Self {
        Self { concentrations: vec![1.0, 2.0, 4.0, 8.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub initial: InitialMetric,
    /// Write a checkpoint after every this many accepted steps (0 disables).
    pub checkpoint_every: usize,
    pub verify: VerifyBlock,
    pub ascent: AscentConfig,
    pub split: SplitBlock,
    pub shrink: ShrinkBlock,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            initial: InitialMetric::default(),
            checkpoint_every: 1,
            verify: VerifyBlock::default(),
            ascent: AscentConfig::default(),
            split: SplitBlock::default(),
            shrink: ShrinkBlock::default(),
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainBlock,
    pub bundle: BundleDescriptor,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// The fields that determine numerical output; the output directory is left out.
#[derive(Serialize)]
struct Hashed<'a> {
    domain: &'a DomainBlock,
    bundle: &'a BundleDescriptor,
    system: &'a SystemConfig,
    experiment: &'a ExperimentBlock,
    seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.spec()?;
        self.system.validate()?;
        let e = &self.experiment;
        if !(e.initial.amplitude >= 0.0 && e.initial.amplitude.is_finite()) {
            return Err(CliError::Config("experiment.initial.amplitude must be finite and >= 0".into()));
        }
        if e.initial.kind == InitialKind::Random && (e.initial.modes == 0 || e.initial.max_frequency < 1) {
            return Err(CliError::Config("random initial metric needs modes >= 1 and max_frequency >= 1".into()));
        }
        let a = &e.ascent;
        if a.max_iterations == 0 || !(a.min_step > 0.0 && a.initial_step >= a.min_step && a.margin_floor > 0.0) {
            return Err(CliError::Config("experiment.ascent needs positive iterations, 0 < min_step <= initial_step, margin_floor > 0".into()));
        }
        if e.shrink.concentrations.is_empty() || e.shrink.concentrations.iter().any(|s| !(*s >= 1.0)) {
            return Err(CliError::Config("experiment.shrink.concentrations must be non-empty and >= 1".into()));
        }
        if !(e.split.amplitude >= 0.0 && e.split.amplitude.is_finite()) {
            return Err(CliError::Config("experiment.split.amplitude must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> CliResult<TorusDomain> {
        let d = &self.domain;
        let n = d.n;
        let periods = match &d.lattice {
            Lattice::Square => CMat::identity(n, n) * c(0.0, 1.0),
            Lattice::Tau(t) => CMat::identity(n, n) * c(t[0], t[1]),
            Lattice::Periods(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(CliError::Config("domain.lattice.periods must be n x n".into()));
                }
                CMat::from_fn(n, n, |i, j| c(rows[i][j][0], rows[i][j][1]))
            }
        };
        let total = self.bundle.rank as u32 * self.bundle.degree;
        Ok(TorusDomain::new(n, periods, d.resolution, total)?)
    }

    pub fn spec(&self) -> CliResult<Arc<BundleSpec>> {
        Ok(Arc::new(self.bundle.build(self.domain()?)?))
    }

    pub fn verify_config(&self) -> VerifyConfig {
        let v = &self.experiment.verify;
        VerifyConfig {
            resolution: self.domain.resolution,
            coarse_resolution: v.coarse_resolution,
            samples: v.samples,
            seed: self.seed,
            fault: v.fault,
        }
    }

    pub fn hash(&self) -> CliResult<String> {
        let h = Hashed {
            domain: &self.domain,
            bundle: &self.bundle,
            system: &self.system,
            experiment: &self.experiment,
            seed: self.seed,
        };
        Ok(hymlab::io::content_hash(&h)?)
    }

    pub fn resolved_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
