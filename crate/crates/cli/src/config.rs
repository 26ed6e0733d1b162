//! Run configuration: one JSON document with a section per subcommand.
//! Missing sections take the defaults below; unknown keys are rejected.

use resfluor::correlator::uniform_grid;
use resfluor::scenarios::{log_grid, HeraldingConfig, MollowConfig, PolaritonStudyConfig, SearchSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed of every stochastic run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub spectrum: SpectrumJob,
    #[serde(default)]
    pub lines: LinesJob,
    #[serde(default)]
    pub g2: G2Job,
    #[serde(default = "default_mc")]
    pub mc: HeraldingConfig,
    #[serde(default)]
    pub map: MapJob,
    #[serde(default)]
    pub optimal: OptimalJob,
    #[serde(default = "default_polariton")]
    pub polariton: PolaritonStudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            spectrum: SpectrumJob::default(),
            lines: LinesJob::default(),
            g2: G2Job::default(),
            mc: default_mc(),
            map: MapJob::default(),
            optimal: OptimalJob::default(),
            polariton: default_polariton(),
        }
    }
}

/// Closed interval sampled with `n` points, linearly or logarithmically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub log: bool,
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>, String> {
        if self.n == 0 || !self.lo.is_finite() || !self.hi.is_finite() || self.hi < self.lo {
            return Err(format!("invalid grid {self:?}"));
        }
        if self.log {
            if !(self.lo > 0.0) {
                return Err(format!("log grid needs a positive lower bound, got {}", self.lo));
            }
            return Ok(log_grid(self.lo, self.hi, self.n));
        }
        Ok(uniform_grid(self.lo, self.hi, self.n))
    }
}

/// Emission spectrum of the bare emitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumJob {
    pub omega_drive: f64,
    pub delta: f64,
    pub gamma_sigma: f64,
    pub frequencies: Grid,
}

impl Default for SpectrumJob {
    fn default() -> Self {
        Self { omega_drive: 4.0, delta: 12.5, gamma_sigma: 1.0, frequencies: Grid { lo: -40.0, hi: 40.0, n: 801, log: false } }
    }
}

/// Transition energies of the bare emitter as a function of the drive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinesJob {
    pub delta: f64,
    pub gamma_sigma: f64,
    pub omegas: Grid,
    /// Keep only lines whose spectral weight exceeds this; all lines when absent.
    pub weight_threshold: Option<f64>,
}

impl Default for LinesJob {
    fn default() -> Self {
        Self { delta: 12.5, gamma_sigma: 1.0, omegas: Grid { lo: 0.0, hi: 8.0, n: 81, log: false }, weight_threshold: None }
    }
}

/// Cross-correlation between the upper (first) and lower (second) detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Job {
    pub system: MollowConfig,
    pub taus: Grid,
}

impl Default for G2Job {
    fn default() -> Self {
        Self { system: MollowConfig::new(1.0, 0.0, 1.0), taus: Grid { lo: -10.0, hi: 10.0, n: 401, log: false } }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    /// Ω × Δ at fixed Γ.
    Detuning,
    /// Ω × Γ at the optimal detuning of each point.
    Optimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapJob {
    pub kind: MapKind,
    /// Fixed parameters; the swept ones are overridden per point.
    pub system: MollowConfig,
    pub omegas: Grid,
    /// Used by `detuning` maps.
    pub deltas: Grid,
    /// Used by `optimal` maps.
    pub gammas: Grid,
    /// Detector truncation of the detuning search; `system.truncation` when absent.
    pub search_truncation: Option<usize>,
}

impl Default for MapJob {
    fn default() -> Self {
        let log = Grid { lo: 0.1, hi: 10.0, n: 21, log: true };
        Self {
            kind: MapKind::Optimal,
            system: MollowConfig::new(1.0, 0.0, 1.0),
            omegas: log,
            deltas: Grid { lo: 0.0, hi: 40.0, n: 41, log: false },
            gammas: log,
            search_truncation: Some(3),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimalTarget {
    Detuning,
    Drive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimalJob {
    pub target: OptimalTarget,
    pub system: MollowConfig,
    /// Defaults: `[0, 4Ω + 5]` for the detuning, `[0, 2|Δ|]` for the drive.
    pub search: Option<SearchSpec>,
}

impl Default for OptimalJob {
    fn default() -> Self {
        Self { target: OptimalTarget::Detuning, system: MollowConfig::new(10.0, 0.0, 0.1), search: None }
    }
}

impl OptimalJob {
    pub fn resolved_search(&self) -> SearchSpec {
        self.search.unwrap_or_else(|| match self.target {
            OptimalTarget::Detuning => SearchSpec::detuning_for(self.system.omega_drive),
            OptimalTarget::Drive => SearchSpec { lo: 0.0, hi: 2.0 * self.system.delta.abs(), coarse: 41, tol: 1e-3 },
        })
    }
}

pub fn default_mc() -> HeraldingConfig {
    HeraldingConfig {
        omega_drive: 1.0,
        delta: 1.85,
        detector_linewidth: 1.0,
        truncation: 3,
        trajectories: 200_000,
        duration: 200.0,
        burn_in: resfluor::trajec::DEFAULT_BURN_IN,
        windows: (1..=40).map(|k| 0.25 * k as f64).collect(),
        histogram_half_range: 10.0,
        histogram_bins: 40,
        herald: resfluor::scenarios::LOWER_DETECTOR.into(),
        kappa: 0.5,
    }
}

pub fn default_polariton() -> PolaritonStudyConfig {
    PolaritonStudyConfig {
        omega_drive: 4.9,
        delta: 8.92,
        gamma_sigma: 1.0,
        gamma_a: 10.0,
        gamma_b: None,
        g: 300.0,
        omega_a: None,
        omega_b: None,
        truncation: 4,
        lambda: 0.5,
    }
}
