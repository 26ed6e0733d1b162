//! Experiments on the driven emitter: two sideband detectors, parameter maps,
//! detuning and drive optimization, heralding statistics and the polariton
//! target.
//!
//! Detector `a1` sits on the upper sideband `ω₊` and `a2` on the lower one
//! `ω₋`. All rates and frequencies are in units of the emitter decay rate.

use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::correlator::{uniform_grid, Direction, StationaryProcess};
use crate::entglmeas::{
    bell_report_from_detection, concurrence, csi_r, detection_matrix, log_negativity, Bell, BellReport,
    DetectionBasis, DetectionMatrix,
};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::liouville::{liouvillian_matrix, steady_state};
use crate::modelkit::{
    blended_label, build_driven_2ls, cascade, detector_hamiltonian, polariton_hamiltonian, CascadeSpec, LindbladModel,
    PolaritonSpec, TargetSpec, EXCITON_SLOT, PHOTON_SLOT, SOURCE_SLOT,
};
use crate::opalg::{mode_operator, partial_trace, DensityMatrix, SpaceLayout, StateVector};
use crate::trajec::{
    heralding_ratio, run_ensemble, ClickStats, DelayBin, DelayHistogram, McwfEngine, PhotonCount, RatioCurve,
};

pub const UPPER_DETECTOR: &str = "a1";
pub const LOWER_DETECTOR: &str = "a2";
/// Largest tolerated population of the top Fock level of a truncated mode.
pub const TRUNCATION_TOL: f64 = 1e-4;

/// `(ω₊ − ω_L, ω₋ − ω_L) = ±√(4Ω² + Δ²)`.
pub fn sideband_frequencies(delta: f64, omega_drive: f64) -> (f64, f64) {
    let r = (4.0 * omega_drive * omega_drive + delta * delta).sqrt();
    (r, -r)
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_truncation() -> usize {
    4
}

/// Driven emitter cascaded into two sideband detectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollowConfig {
    /// Ω
    pub omega_drive: f64,
    /// Δ = ω_σ − ω_L
    pub delta: f64,
    #[serde(default = "one")]
    pub gamma_sigma: f64,
    /// Γ, shared by both detectors.
    pub detector_linewidth: f64,
    /// `(ω₁ − ω_L, ω₂ − ω_L)`; the sidebands when absent.
    #[serde(default)]
    pub detector_detunings: Option<(f64, f64)>,
    /// Fock levels per detector.
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    /// Fraction of the emission routed to each detector.
    #[serde(default = "half")]
    pub lambda: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "one")]
    pub efficiency: f64,
}

impl MollowConfig {
    pub fn new(omega_drive: f64, delta: f64, detector_linewidth: f64) -> Self {
        Self {
            omega_drive,
            delta,
            gamma_sigma: 1.0,
            detector_linewidth,
            detector_detunings: None,
            truncation: default_truncation(),
            lambda: 0.5,
            kappa: 0.0,
            efficiency: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_drive >= 0.0 && self.omega_drive.is_finite()) {
            return Err(Error::InvalidParameter(format!("Ω = {} must be non-negative", self.omega_drive)));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter("Δ must be finite".into()));
        }
        if !(self.detector_linewidth > 0.0 && self.detector_linewidth.is_finite()) {
            return Err(Error::InvalidParameter(format!("Γ = {} must be positive", self.detector_linewidth)));
        }
        if self.truncation < 2 {
            return Err(Error::InvalidDimension(self.truncation));
        }
        Ok(())
    }

    pub fn detunings(&self) -> (f64, f64) {
        self.detector_detunings.unwrap_or_else(|| sideband_frequencies(self.delta, self.omega_drive))
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }

    pub fn with_omega(&self, omega_drive: f64) -> Self {
        Self { omega_drive, ..self.clone() }
    }

    pub fn cascade_spec(&self) -> CascadeSpec {
        let (w1, w2) = self.detunings();
        let target = |slot: &str, detuning: f64| TargetSpec {
            slot: slot.into(),
            decay: self.detector_linewidth,
            lambda: self.lambda,
            kappa: self.kappa,
            efficiency: self.efficiency,
            detuning,
        };
        CascadeSpec {
            gamma_sigma: self.gamma_sigma,
            source_slot: SOURCE_SLOT.into(),
            targets: vec![target(UPPER_DETECTOR, w1), target(LOWER_DETECTOR, w2)],
        }
    }
}

/// Compiled model for a [`MollowConfig`].
pub fn build_system(cfg: &MollowConfig) -> Result<LindbladModel> {
    cfg.validate()?;
    let layout = SpaceLayout::new([(SOURCE_SLOT, 2), (UPPER_DETECTOR, cfg.truncation), (LOWER_DETECTOR, cfg.truncation)])?;
    let (w1, w2) = cfg.detunings();
    let hd = detector_hamiltonian(&layout, &[(UPPER_DETECTOR, w1), (LOWER_DETECTOR, w2)])?;
    let source = build_driven_2ls(cfg.delta, cfg.omega_drive, cfg.gamma_sigma)?;
    cascade(&source, &cfg.cascade_spec(), &hd)
}

/// Population of the highest retained Fock level of `slot`.
pub fn top_fock_population(rho: &DensityMatrix, slot: &str) -> Result<f64> {
    let layout = rho.layout();
    let k = layout.index_of(slot)?;
    let top = layout.slot_dim(slot)? - 1;
    let m = rho.matrix();
    Ok((0..layout.dim()).filter(|&i| layout.digit(i, k) == top).map(|i| m[(i, i)].re).sum())
}

/// Fails with [`Error::Truncation`] if any listed mode has more than `tol`
/// population in its top level.
pub fn check_truncation(rho: &DensityMatrix, slots: &[&str], tol: f64) -> Result<()> {
    for &slot in slots {
        let p = top_fock_population(rho, slot)?;
        if p > tol {
            return Err(Error::Truncation {
                slot: slot.into(),
                population: p,
                suggested: rho.layout().slot_dim(slot)? + 1,
            });
        }
    }
    Ok(())
}

/// One point of a parameter map.
#[derive(Clone, Debug, Serialize)]
pub struct SweepResultRow {
    pub omega_drive: f64,
    pub delta: f64,
    pub gamma: f64,
    pub negativity: f64,
    pub r: f64,
    pub g2_cross_zero: f64,
    /// Γ/ω₊ with ω₊ measured from the laser.
    pub gamma_ratio: f64,
    /// Emission rate of the upper detector, `Γ⟨a₁†a₁⟩`.
    pub intensity: f64,
    pub bell_weight: f64,
    pub bell_fidelity: f64,
    pub bell_purity: f64,
    pub flags: Vec<String>,
}

pub const SWEEP_CSV_HEADER: &str =
    "Omega,Delta,Gamma,negativity,R,g2_cross0,gamma_over_omegaplus,intensity,bell_weight,bell_fidelity,bell_purity,flags";

/// `nan` for undefined values, shortest round-trip form otherwise.
pub fn csv_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

impl SweepResultRow {
    fn failed(cfg: &MollowConfig, err: &Error) -> Self {
        Self {
            omega_drive: cfg.omega_drive,
            delta: cfg.delta,
            gamma: cfg.detector_linewidth,
            negativity: f64::NAN,
            r: f64::NAN,
            g2_cross_zero: f64::NAN,
            gamma_ratio: cfg.detector_linewidth / sideband_frequencies(cfg.delta, cfg.omega_drive).0,
            intensity: f64::NAN,
            bell_weight: f64::NAN,
            bell_fidelity: f64::NAN,
            bell_purity: f64::NAN,
            flags: vec![format!("failed:{}", error_tag(err))],
        }
    }

    pub fn csv_line(&self) -> String {
        let cells = [
            self.omega_drive,
            self.delta,
            self.gamma,
            self.negativity,
            self.r,
            self.g2_cross_zero,
            self.gamma_ratio,
            self.intensity,
            self.bell_weight,
            self.bell_fidelity,
            self.bell_purity,
        ];
        let mut line = cells.iter().map(|&x| csv_float(x)).collect::<Vec<_>>().join(",");
        line.push(',');
        line.push_str(&self.flags.join(";"));
        line
    }
}

pub fn sweep_csv(rows: &[SweepResultRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

fn error_tag(err: &Error) -> &'static str {
    match err {
        Error::DegenerateSteadyState(_) => "degenerate_steady_state",
        Error::Numerical(_) => "numerical",
        Error::Truncation { .. } => "truncation",
        Error::InvalidParameter(_) | Error::InvalidDimension(_) => "invalid_parameter",
        _ => "other",
    }
}

/// Steady state of the detector pair with the emitter traced out.
pub fn detector_state(cfg: &MollowConfig) -> Result<(DensityMatrix, DensityMatrix)> {
    let model = build_system(cfg)?;
    let rho = steady_state(&liouvillian_matrix(&model))?;
    let reduced = partial_trace(&rho, &[UPPER_DETECTOR, LOWER_DETECTOR])?;
    Ok((rho, reduced))
}

/// Logarithmic negativity of the detector pair.
pub fn negativity_at(cfg: &MollowConfig) -> Result<f64> {
    let (_, reduced) = detector_state(cfg)?;
    log_negativity(&reduced, LOWER_DETECTOR)
}

/// Every measure of a single point. Solver failures are returned; undefined
/// measures become `NaN` with a flag.
pub fn analyze_point(cfg: &MollowConfig) -> Result<SweepResultRow> {
    let (rho, reduced) = detector_state(cfg)?;
    let mut flags = Vec::new();
    for slot in [UPPER_DETECTOR, LOWER_DETECTOR] {
        let p = top_fock_population(&rho, slot)?;
        if p > TRUNCATION_TOL {
            warn!("top Fock population {p:.2e} of `{slot}` at Ω={}, Δ={}", cfg.omega_drive, cfg.delta);
            flags.push(format!("truncation_{slot}"));
        }
    }
    let layout = reduced.layout().clone();
    let a1 = mode_operator(&layout, UPPER_DETECTOR)?;
    let a2 = mode_operator(&layout, LOWER_DETECTOR)?;
    let negativity = log_negativity(&reduced, LOWER_DETECTOR)?;
    let r = match csi_r(&reduced, &a1, &a2) {
        Ok(r) => {
            if r <= 1.0 {
                flags.push("classical".into());
            }
            r
        }
        Err(_) => {
            flags.push("R_undefined".into());
            f64::NAN
        }
    };
    let pop = |op: &crate::opalg::Operator| -> f64 {
        let c = op.matrix();
        crate::opalg::trace_product(reduced.matrix(), &(crate::linalg::adjoint(c) * c)).re
    };
    let (n1, n2) = (pop(&a1), pop(&a2));
    let g2 = {
        let c1 = a1.matrix();
        let c2 = a2.matrix();
        let g = crate::opalg::trace_product(
            reduced.matrix(),
            &(crate::linalg::adjoint(c1) * crate::linalg::adjoint(c2) * c2 * c1),
        )
        .re;
        if n1 * n2 > 0.0 {
            g / (n1 * n2)
        } else {
            flags.push("g2_undefined".into());
            f64::NAN
        }
    };
    let (bell_weight, bell_fidelity, bell_purity) =
        match detection_matrix(&reduced, (UPPER_DETECTOR, LOWER_DETECTOR), &DetectionBasis::Bare)
            .and_then(|t| bell_report_from_detection(&t, Bell::PhiMinus))
        {
            Ok(b) => (b.bell_weight, b.fidelity_to_model, b.bell_purity),
            Err(_) => {
                flags.push("bell_undefined".into());
                (f64::NAN, f64::NAN, f64::NAN)
            }
        };
    Ok(SweepResultRow {
        omega_drive: cfg.omega_drive,
        delta: cfg.delta,
        gamma: cfg.detector_linewidth,
        negativity,
        r,
        g2_cross_zero: g2,
        gamma_ratio: cfg.detector_linewidth / sideband_frequencies(cfg.delta, cfg.omega_drive).0,
        intensity: cfg.detector_linewidth * n1,
        bell_weight,
        bell_fidelity,
        bell_purity,
        flags,
    })
}

fn analyze_or_flag(cfg: &MollowConfig) -> SweepResultRow {
    analyze_point(cfg).unwrap_or_else(|e| {
        warn!("point Ω={}, Δ={}, Γ={} failed: {e}", cfg.omega_drive, cfg.delta, cfg.detector_linewidth);
        SweepResultRow::failed(cfg, &e)
    })
}

/// Rows over `omegas × deltas` at the linewidth of `base`, row-major with Ω
/// as the outer index.
pub fn entanglement_map(base: &MollowConfig, omegas: &[f64], deltas: &[f64], par: Parallelism) -> Result<Vec<SweepResultRow>> {
    if omegas.is_empty() || deltas.is_empty() {
        return Err(Error::InvalidParameter("map grid is empty".into()));
    }
    base.validate()?;
    let nd = deltas.len();
    Ok(par.map(omegas.len() * nd, |k| {
        analyze_or_flag(&MollowConfig { omega_drive: omegas[k / nd], delta: deltas[k % nd], ..base.clone() })
    }))
}

/// Result of a 1-D maximization of the negativity.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Optimum {
    /// Maximizing argument; `None` if the negativity vanishes on the whole range.
    pub argmax: Option<f64>,
    pub negativity: f64,
}

/// Search settings for [`optimal_detuning`] and [`optimal_drive`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub lo: f64,
    pub hi: f64,
    /// Points in the coarse scan.
    pub coarse: usize,
    /// Absolute tolerance of the golden-section refinement.
    pub tol: f64,
}

impl SearchSpec {
    /// Detuning range `[0, 4Ω + 5]`.
    pub fn detuning_for(omega_drive: f64) -> Self {
        Self { lo: 0.0, hi: 4.0 * omega_drive + 5.0, coarse: 31, tol: 1e-3 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.hi > self.lo && self.lo.is_finite() && self.hi.is_finite()) || self.coarse < 3 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("search range {self:?}")));
        }
        Ok(())
    }
}

/// Coarse scan plus golden-section refinement around the best coarse point.
/// Ties go to the smaller argument; failed evaluations count as `−∞`.
fn maximize(f: impl Fn(f64) -> f64 + Sync + Send, search: &SearchSpec, par: Parallelism) -> Result<Optimum> {
    search.validate()?;
    let grid = uniform_grid(search.lo, search.hi, search.coarse);
    let values = par.map(grid.len(), |k| f(grid[k]));
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    if !(values[best] > 0.0) {
        return Ok(Optimum { argmax: None, negativity: 0.0 });
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let x = crate::entglmeas::golden_max(&f, lo, hi, search.tol);
    let fx = f(x);
    Ok(if fx > values[best] {
        Optimum { argmax: Some(x), negativity: fx }
    } else {
        Optimum { argmax: Some(grid[best]), negativity: values[best] }
    })
}

fn negativity_or_floor(cfg: &MollowConfig) -> f64 {
    negativity_at(cfg).unwrap_or(f64::NEG_INFINITY)
}

/// Detuning `Δ ≥ 0` that maximizes the negativity at fixed `(Ω, Γ)`.
pub fn optimal_detuning(base: &MollowConfig, search: &SearchSpec, par: Parallelism) -> Result<Optimum> {
    base.validate()?;
    if search.lo < 0.0 {
        return Err(Error::InvalidParameter("detuning search is restricted to Δ ≥ 0".into()));
    }
    maximize(|d| negativity_or_floor(&base.with_delta(d)), search, par)
}

/// Drive `Ω ≥ 0` that maximizes the negativity at fixed `(Δ, Γ)`.
pub fn optimal_drive(base: &MollowConfig, search: &SearchSpec, par: Parallelism) -> Result<Optimum> {
    base.validate()?;
    if search.lo < 0.0 {
        return Err(Error::InvalidParameter("drive search is restricted to Ω ≥ 0".into()));
    }
    maximize(|w| negativity_or_floor(&base.with_omega(w)), search, par)
}

/// Rows over `omegas × gammas` evaluated at the optimal detuning of each
/// point, row-major with Ω as the outer index. Points without entanglement
/// are evaluated at `Δ = 0` and flagged `no_entanglement`.
///
/// `search_truncation` lets the detuning search run on smaller detector
/// spaces than the final evaluation, which uses `base.truncation`.
pub fn optimal_map(
    base: &MollowConfig,
    omegas: &[f64],
    gammas: &[f64],
    search: impl Fn(f64) -> SearchSpec + Sync + Send,
    search_truncation: Option<usize>,
    par: Parallelism,
) -> Result<Vec<SweepResultRow>> {
    if omegas.is_empty() || gammas.is_empty() {
        return Err(Error::InvalidParameter("map grid is empty".into()));
    }
    base.validate()?;
    let ng = gammas.len();
    Ok(par.map(omegas.len() * ng, |k| {
        let cfg = MollowConfig { omega_drive: omegas[k / ng], detector_linewidth: gammas[k % ng], ..base.clone() };
        let coarse = MollowConfig { truncation: search_truncation.unwrap_or(cfg.truncation), ..cfg.clone() };
        let opt = optimal_detuning(&coarse, &search(cfg.omega_drive), Parallelism::Sequential);
        match opt {
            Ok(Optimum { argmax: Some(d), .. }) => analyze_or_flag(&cfg.with_delta(d)),
            Ok(Optimum { argmax: None, .. }) => {
                let mut row = analyze_or_flag(&cfg.with_delta(0.0));
                row.flags.push("no_entanglement".into());
                row
            }
            Err(e) => SweepResultRow::failed(&cfg, &e),
        }
    }))
}

/// `n` logarithmically spaced points over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    uniform_grid(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

/// Emitter cascaded into a photon–exciton pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolaritonStudyConfig {
    pub omega_drive: f64,
    pub delta: f64,
    #[serde(default = "one")]
    pub gamma_sigma: f64,
    pub gamma_a: f64,
    /// Defaults to `Γ_a/100`.
    #[serde(default)]
    pub gamma_b: Option<f64>,
    pub g: f64,
    /// Photon detuning from the laser; the upper sideband when absent.
    #[serde(default)]
    pub omega_a: Option<f64>,
    /// Exciton detuning from the laser; the lower sideband when absent.
    #[serde(default)]
    pub omega_b: Option<f64>,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default = "half")]
    pub lambda: f64,
}

impl PolaritonStudyConfig {
    pub fn polariton_spec(&self) -> PolaritonSpec {
        let (up, down) = sideband_frequencies(self.delta, self.omega_drive);
        PolaritonSpec {
            omega_a: self.omega_a.unwrap_or(up),
            omega_b: self.omega_b.unwrap_or(down),
            g: self.g,
            gamma_a: self.gamma_a,
            gamma_b: self.gamma_b.unwrap_or(self.gamma_a / 100.0),
            truncation_a: self.truncation,
            truncation_b: self.truncation,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PolaritonReport {
    #[serde(skip)]
    pub theta: DetectionMatrix,
    #[serde(skip)]
    pub theta_postselected: DetectionMatrix,
    pub concurrence: f64,
    pub concurrence_postselected: f64,
    /// Vacuum + `|Ψ⁻⟩` fit of the detection matrix.
    pub bell: BellReport,
    /// Same fit after the vacuum is projected out.
    pub bell_postselected: BellReport,
    pub top_fock_population: (f64, f64),
}

pub fn polariton_model(cfg: &PolaritonStudyConfig) -> Result<LindbladModel> {
    let spec = cfg.polariton_spec();
    spec.validate()?;
    if !(cfg.omega_drive >= 0.0) || !cfg.delta.is_finite() {
        return Err(Error::InvalidParameter("drive parameters".into()));
    }
    let layout = SpaceLayout::new([(SOURCE_SLOT, 2), (PHOTON_SLOT, cfg.truncation), (EXCITON_SLOT, cfg.truncation)])?;
    let hp = polariton_hamiltonian(&spec, &layout)?;
    let target = |slot: &str, decay: f64, detuning: f64| TargetSpec {
        slot: slot.into(),
        decay,
        lambda: cfg.lambda,
        kappa: 0.0,
        efficiency: 1.0,
        detuning,
    };
    let cs = CascadeSpec {
        gamma_sigma: cfg.gamma_sigma,
        source_slot: SOURCE_SLOT.into(),
        targets: vec![target(PHOTON_SLOT, spec.gamma_a, spec.omega_a), target(EXCITON_SLOT, spec.gamma_b, spec.omega_b)],
    };
    let source = build_driven_2ls(cfg.delta, cfg.omega_drive, cfg.gamma_sigma)?;
    cascade(&source, &cs, &hp)
}

/// Steady state of the polariton target, its detection matrix in the branch
/// basis, and the vacuum + `|Ψ⁻⟩` fits.
pub fn polariton_study(cfg: &PolaritonStudyConfig) -> Result<PolaritonReport> {
    let model = polariton_model(cfg)?;
    let rho = steady_state(&liouvillian_matrix(&model))?;
    check_truncation(&rho, &[PHOTON_SLOT, EXCITON_SLOT], TRUNCATION_TOL)?;
    let top = (top_fock_population(&rho, PHOTON_SLOT)?, top_fock_population(&rho, EXCITON_SLOT)?);
    let theta = detection_matrix(&rho, (PHOTON_SLOT, EXCITON_SLOT), &DetectionBasis::Polariton(cfg.polariton_spec()))?;
    let post = theta.remove_vacuum()?;
    Ok(PolaritonReport {
        concurrence: concurrence(&theta)?,
        concurrence_postselected: concurrence(&post)?,
        bell: bell_report_from_detection(&theta, Bell::PsiMinus)?,
        bell_postselected: bell_report_from_detection(&post, Bell::PsiMinus)?,
        theta,
        theta_postselected: post,
        top_fock_population: top,
    })
}

fn default_burn_in() -> f64 {
    crate::trajec::DEFAULT_BURN_IN
}

/// Monte Carlo heralding experiment: detuned versus resonant driving.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeraldingConfig {
    pub omega_drive: f64,
    /// Detuning of the heralded run; the reference run is resonant.
    pub delta: f64,
    pub detector_linewidth: f64,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    pub trajectories: usize,
    pub duration: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    /// Herald windows `τ`.
    pub windows: Vec<f64>,
    /// Delay histogram covers `[−half_range, half_range]`.
    pub histogram_half_range: f64,
    pub histogram_bins: usize,
    /// Herald detector; the other one is the signal.
    #[serde(default = "default_herald")]
    pub herald: String,
    /// Share κ of each detector's decay emitted through its own channel,
    /// which then carries the clicks. With κ = 0 the clicks are jumps of the
    /// blended channels `O_n`.
    #[serde(default = "half")]
    pub kappa: f64,
}

fn default_herald() -> String {
    LOWER_DETECTOR.into()
}

impl HeraldingConfig {
    pub fn signal(&self) -> Result<&'static str> {
        match self.herald.as_str() {
            LOWER_DETECTOR => Ok(UPPER_DETECTOR),
            UPPER_DETECTOR => Ok(LOWER_DETECTOR),
            other => Err(Error::UnknownLabel(other.into())),
        }
    }

    pub fn mollow(&self, delta: f64) -> MollowConfig {
        MollowConfig {
            truncation: self.truncation,
            kappa: self.kappa,
            ..MollowConfig::new(self.omega_drive, delta, self.detector_linewidth)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::InvalidParameter("trajectories must be positive".into()));
        }
        if !(self.duration > self.burn_in && self.burn_in >= 0.0) {
            return Err(Error::InvalidParameter("duration must exceed the burn-in".into()));
        }
        self.signal()?;
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::InvalidParameter(format!("κ = {} outside [0, 1]", self.kappa)));
        }
        self.mollow(self.delta).validate()
    }

    /// Channel labels of the herald and signal clicks.
    pub fn click_labels(&self) -> Result<(String, String)> {
        let signal = self.signal()?;
        Ok(if self.kappa > 0.0 {
            (self.herald.clone(), signal.into())
        } else {
            (blended_label(&self.herald), blended_label(signal))
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HeraldingReport {
    pub r1: RatioCurve,
    pub r2plus: RatioCurve,
    pub detuned_heralds: u64,
    pub resonant_heralds: u64,
    /// Detuned run: signal delay relative to the herald.
    pub histogram: Vec<DelayBin>,
    /// Stationary `g²` averaged over each histogram bin.
    pub regression: Vec<f64>,
    /// Detuned run: exact signal click rate used for normalization.
    pub signal_rate: f64,
}

impl HeraldingReport {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("delay_lo,delay_hi,g2_mc,stderr,counts,g2_regression\n");
        for (b, r) in self.histogram.iter().zip(&self.regression) {
            let _ = writeln!(out, "{},{},{},{},{},{}", b.lo, b.hi, csv_float(b.g2), csv_float(b.stderr), b.count, csv_float(*r));
        }
        out
    }
}

/// Sample points per histogram bin for the regression average.
const BIN_SAMPLES: usize = 9;

/// Runs both ensembles from the ground state with the same master seed.
pub fn heralding_study(cfg: &HeraldingConfig, seed: u64, par: Parallelism) -> Result<HeraldingReport> {
    cfg.validate()?;
    let (herald, signal) = cfg.click_labels()?;
    let run = |delta: f64, with_hist: bool| -> Result<(ClickStats, Option<DelayHistogram>, LindbladModel)> {
        let model = build_system(&cfg.mollow(delta))?;
        let engine = McwfEngine::new(&model)?;
        let psi0 = StateVector::basis(model.layout(), 0)?;
        let stats = ClickStats::new(engine.labels(), &herald, &signal, &cfg.windows, cfg.burn_in)?;
        if with_hist {
            let hist = DelayHistogram::new(
                engine.labels(),
                &herald,
                &signal,
                cfg.histogram_half_range,
                cfg.histogram_bins,
                cfg.burn_in,
            )?;
            let (s, h) = run_ensemble(&engine, &psi0, cfg.duration, seed, cfg.trajectories, par, &(stats, hist))?;
            Ok((s, Some(h), model))
        } else {
            let s = run_ensemble(&engine, &psi0, cfg.duration, seed, cfg.trajectories, par, &stats)?;
            Ok((s, None, model))
        }
    };
    let (detuned, hist, model) = run(cfg.delta, true)?;
    let (resonant, _, _) = run(0.0, false)?;
    let hist = hist.expect("histogram requested");

    let process = StationaryProcess::new(&model)?;
    // Click operators with their rates folded in: `√rate · c`.
    let click_op = |label: &str| model.channel(label).map(|ch| ch.collapse.scale_real(ch.rate.sqrt()));
    let herald_op = click_op(&herald)?;
    let signal_op = click_op(&signal)?;
    let signal_rate = process.population(&signal_op)?;
    let histogram = hist.normalized(signal_rate)?;
    let w = hist.width();
    let mut taus = Vec::with_capacity(histogram.len() * BIN_SAMPLES);
    for b in &histogram {
        taus.extend((0..BIN_SAMPLES).map(|k| b.lo + w * (k as f64 + 0.5) / BIN_SAMPLES as f64));
    }
    let curve = process.g2_cross(&herald_op, &signal_op, &taus, Direction::Forward)?;
    let regression = curve
        .points
        .chunks(BIN_SAMPLES)
        .map(|c| c.iter().map(|p| p.1).sum::<f64>() / BIN_SAMPLES as f64)
        .collect();
    Ok(HeraldingReport {
        r1: heralding_ratio(&detuned, &resonant, PhotonCount::One)?,
        r2plus: heralding_ratio(&detuned, &resonant, PhotonCount::TwoPlus)?,
        detuned_heralds: detuned.heralds,
        resonant_heralds: resonant.heralds,
        histogram,
        regression,
        signal_rate,
    })
}
