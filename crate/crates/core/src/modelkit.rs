//! Lindblad models: the driven two-level emitter, unidirectional cascades into
//! bosonic targets, and the target Hamiltonians (detectors, polaritons).
//!
//! Dissipator convention: a channel `(rate, c)` contributes
//! `rate/2 · (2 c ρ c† − ρ c†c − c†c ρ)` to `∂ρ/∂t`.

use std::sync::Arc;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::opalg::{annihilation, embed, mode_operator, number_operator, Operator, SpaceLayout, ALGEBRA_TOL};

/// Label of the emitter subsystem in every layout built by this crate.
pub const SOURCE_SLOT: &str = "sigma";

#[derive(Clone, Debug)]
pub struct Channel {
    pub rate: f64,
    pub collapse: Operator,
    pub label: String,
}

/// Hermitian Hamiltonian plus rated collapse channels.
#[derive(Clone, Debug)]
pub struct LindbladModel {
    layout: Arc<SpaceLayout>,
    hamiltonian: Operator,
    channels: Vec<Channel>,
}

impl LindbladModel {
    pub fn new(hamiltonian: Operator, channels: Vec<Channel>) -> Result<Self> {
        let herm = hamiltonian.hermiticity_error();
        if herm > ALGEBRA_TOL {
            return Err(Error::NonHermitian(herm));
        }
        let layout = hamiltonian.layout().clone();
        for (k, ch) in channels.iter().enumerate() {
            if !(ch.rate >= 0.0 && ch.rate.is_finite()) {
                return Err(Error::InvalidParameter(format!("channel `{}` has rate {}", ch.label, ch.rate)));
            }
            if ch.collapse.layout() != &layout {
                return Err(Error::LayoutMismatch);
            }
            if channels[..k].iter().any(|o| o.label == ch.label) {
                return Err(Error::DuplicateLabel(ch.label.clone()));
            }
        }
        Ok(Self { layout, hamiltonian, channels })
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, label: &str) -> Result<&Channel> {
        self.channels
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn channel_labels(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|c| c.label.as_str())
    }

    /// `H − (i/2) Σ rate c†c`
    pub fn effective_hamiltonian(&self) -> Operator {
        let mut decay = Operator::zeros(&self.layout);
        for ch in &self.channels {
            let cc = &ch.collapse.dagger() * &ch.collapse;
            decay = &decay + &cc.scale_real(ch.rate);
        }
        &self.hamiltonian + &decay.scale(c64::new(0.0, -0.5))
    }
}

/// Laser-driven two-level system: `H = Δ σ†σ + Ω (σ† + σ)`, decay `(γ, σ)`.
pub fn build_driven_2ls(delta: f64, omega_drive: f64, gamma: f64) -> Result<LindbladModel> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("emitter decay rate must be positive, got {gamma}")));
    }
    if !(delta.is_finite() && omega_drive.is_finite()) {
        return Err(Error::InvalidParameter("non-finite drive parameters".into()));
    }
    let layout = SpaceLayout::single(SOURCE_SLOT, 2)?;
    let sigma = mode_operator(&layout, SOURCE_SLOT)?;
    let sd = sigma.dagger();
    let h = &(&sd * &sigma).scale_real(delta) + &(&sd + &sigma).scale_real(omega_drive);
    LindbladModel::new(h, vec![Channel { rate: gamma, collapse: sigma, label: SOURCE_SLOT.into() }])
}

/// One target of a cascade.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub slot: String,
    /// Target decay rate Γ_n.
    pub decay: f64,
    /// Fraction λ_n of the emitter decay routed through the shared jump operator.
    pub lambda: f64,
    /// Fraction κ_n of the target decay emitted through its own channel.
    pub kappa: f64,
    /// Detection efficiency ε_n ∈ (0, 1]; scales λ_n.
    pub efficiency: f64,
    /// Target frequency minus laser frequency.
    pub detuning: f64,
}

impl TargetSpec {
    pub fn effective_lambda(&self) -> f64 {
        self.efficiency * self.lambda
    }

    /// α_n = ε λ_n (1 − κ_n): strength of the unidirectional coupling.
    pub fn alpha(&self) -> f64 {
        self.effective_lambda() * (1.0 - self.kappa)
    }

    fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::InvalidParameter(format!("target `{}` decay {}", self.slot, self.decay)));
        }
        if !unit(self.lambda) || !unit(self.kappa) {
            return Err(Error::InvalidParameter(format!(
                "target `{}` needs λ, κ in [0, 1] (λ = {}, κ = {})",
                self.slot, self.lambda, self.kappa
            )));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target `{}` efficiency {} outside (0, 1]",
                self.slot, self.efficiency
            )));
        }
        if !self.detuning.is_finite() {
            return Err(Error::InvalidParameter(format!("target `{}` detuning", self.slot)));
        }
        Ok(())
    }
}

/// Source → targets unidirectional coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSpec {
    pub gamma_sigma: f64,
    pub source_slot: String,
    pub targets: Vec<TargetSpec>,
}

impl CascadeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_sigma > 0.0 && self.gamma_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("γ_σ = {}", self.gamma_sigma)));
        }
        for t in &self.targets {
            t.validate()?;
        }
        let total: f64 = self.targets.iter().map(|t| t.lambda).sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::CascadeOverflow(total));
        }
        Ok(())
    }

    /// Rate left on the bare emitter channel, `(1 − Σ ε λ_n) γ_σ`.
    pub fn residual_source_rate(&self) -> f64 {
        let used: f64 = self.targets.iter().map(TargetSpec::effective_lambda).sum();
        ((1.0 - used) * self.gamma_sigma).max(0.0)
    }
}

/// Label of the blended jump operator `O_n` for target slot `slot`.
pub fn blended_label(slot: &str) -> String {
    format!("O_{slot}")
}

/// Label of the residual emitter channel in a compiled cascade.
pub const RESIDUAL_SOURCE_LABEL: &str = "sigma_res";

/// Compiles a source model and its targets into one explicit Lindblad model.
///
/// Channels: `O_n = √(ελ_nγ) σ + √((1−κ_n)Γ_n) a_n` at rate 1, the residual
/// emitter decay `((1 − Σελ_n)γ, σ)` when positive, and `(κ_nΓ_n, a_n)` when
/// `κ_n > 0`. The Hamiltonian gains `Σ (i/2)√(α_nγΓ_n)(σ†a_n − a_n†σ)`,
/// which together with the `O_n` channels cancels any back-action of the
/// targets on the source.
///
/// `source` must live on a single-subsystem layout whose dimension matches
/// `spec.source_slot` in the joint layout carried by `target_hamiltonian`.
/// Its first channel is the emitted field, with rate `spec.gamma_sigma`.
pub fn cascade(source: &LindbladModel, spec: &CascadeSpec, target_hamiltonian: &Operator) -> Result<LindbladModel> {
    spec.validate()?;
    let herm = target_hamiltonian.hermiticity_error();
    if herm > ALGEBRA_TOL {
        return Err(Error::NonHermitian(herm));
    }
    let joint = target_hamiltonian.layout().clone();
    let (sigma, source_h, other_source) = embed_source(source, spec, &joint)?;
    let sigma_dag = sigma.dagger();
    let gamma = spec.gamma_sigma;

    let mut hamiltonian = &source_h + target_hamiltonian;
    let mut channels = other_source;
    for t in &spec.targets {
        if t.slot == spec.source_slot {
            return Err(Error::InvalidParameter(format!("target slot `{}` is the source slot", t.slot)));
        }
        let a = mode_operator(&joint, &t.slot)?;
        let lam = t.effective_lambda();
        let o = &sigma.scale_real((lam * gamma).sqrt()) + &a.scale_real(((1.0 - t.kappa) * t.decay).sqrt());
        if linalg::max_abs(o.matrix()) > 0.0 {
            channels.push(Channel { rate: 1.0, collapse: o, label: blended_label(&t.slot) });
        }
        if t.kappa > 0.0 {
            channels.push(Channel { rate: t.kappa * t.decay, collapse: a.clone(), label: t.slot.clone() });
        }
        let coupling = 0.5 * (t.alpha() * gamma * t.decay).sqrt();
        if coupling > 0.0 {
            let k = &(&sigma_dag * &a) - &(&a.dagger() * &sigma);
            hamiltonian = &hamiltonian + &k.scale(c64::new(0.0, coupling));
        }
    }
    let residual = spec.residual_source_rate();
    if residual > 0.0 {
        channels.push(Channel { rate: residual, collapse: sigma, label: RESIDUAL_SOURCE_LABEL.into() });
    }
    // The coupling term is Hermitian by construction; symmetrize away rounding.
    let hamiltonian = Operator::new(joint, linalg::hermitize(hamiltonian.matrix()))?;
    LindbladModel::new(hamiltonian, channels)
}

/// Embeds the source model into the joint layout. Returns the emitter
/// operator, the embedded source Hamiltonian, and any extra source channels.
pub(crate) fn embed_source(
    source: &LindbladModel,
    spec: &CascadeSpec,
    joint: &Arc<SpaceLayout>,
) -> Result<(Operator, Operator, Vec<Channel>)> {
    if source.layout().subsystems().len() != 1 {
        return Err(Error::InvalidParameter("cascade source must be a single-subsystem model".into()));
    }
    let emitted = source
        .channels()
        .first()
        .ok_or_else(|| Error::InvalidParameter("cascade source has no emission channel".into()))?;
    if (emitted.rate - spec.gamma_sigma).abs() > 1e-12 * spec.gamma_sigma.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "source emission rate {} differs from γ_σ = {}",
            emitted.rate, spec.gamma_sigma
        )));
    }
    let lift = |op: &Operator| -> Result<Operator> {
        let local = Operator::new(SpaceLayout::single("mode", op.dim())?, op.matrix().clone())?;
        embed(&local, joint, &spec.source_slot)
    };
    let sigma = lift(&emitted.collapse)?;
    let h = lift(source.hamiltonian())?;
    let extra = source.channels()[1..]
        .iter()
        .map(|c| Ok(Channel { rate: c.rate, collapse: lift(&c.collapse)?, label: c.label.clone() }))
        .collect::<Result<Vec<_>>>()?;
    Ok((sigma, h, extra))
}

/// `Σ (ω_n − ω_L) a_n†a_n` for the listed `(slot, detuning)` pairs.
pub fn detector_hamiltonian(layout: &Arc<SpaceLayout>, detectors: &[(&str, f64)]) -> Result<Operator> {
    let mut h = Operator::zeros(layout);
    for &(slot, detuning) in detectors {
        h = &h + &number_operator(layout, slot)?.scale_real(detuning);
    }
    Ok(h)
}

/// Photon (`a`) and exciton (`b`) modes coupled with strength `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolaritonSpec {
    /// Photon frequency minus laser frequency.
    pub omega_a: f64,
    /// Exciton frequency minus laser frequency.
    pub omega_b: f64,
    pub g: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub truncation_a: usize,
    pub truncation_b: usize,
}

pub const PHOTON_SLOT: &str = "a";
pub const EXCITON_SLOT: &str = "b";

impl PolaritonSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter(format!("polariton coupling g = {}", self.g)));
        }
        if self.truncation_a < 2 || self.truncation_b < 2 {
            return Err(Error::InvalidDimension(self.truncation_a.min(self.truncation_b)));
        }
        if !(self.gamma_a > 0.0 && self.gamma_b > 0.0) {
            return Err(Error::InvalidParameter("polariton decay rates must be positive".into()));
        }
        Ok(())
    }

    /// δ = ω_b − ω_a
    pub fn detuning(&self) -> f64 {
        self.omega_b - self.omega_a
    }

    /// Lower and upper branch frequencies (relative to the laser),
    /// `(ω_a + ω_b ∓ √(δ² + 4g²)) / 2`.
    pub fn branch_frequencies(&self) -> (f64, f64) {
        let r = (self.detuning().powi(2) + 4.0 * self.g * self.g).sqrt();
        let s = self.omega_a + self.omega_b;
        (0.5 * (s - r), 0.5 * (s + r))
    }

    /// Mixing amplitudes `(c₊, c₋)` with `l = c₊a − c₋b` and `u = c₋a + c₊b`.
    pub fn mixing(&self) -> (f64, f64) {
        let d = self.detuning();
        let r = (d * d + 4.0 * self.g * self.g).sqrt();
        let x = if r > 0.0 { d / r } else { 1.0 };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        (h * (1.0 + x).max(0.0).sqrt(), h * (1.0 - x).max(0.0).sqrt())
    }
}

/// `(ω_a − ω_L)a†a + (ω_b − ω_L)b†b + g(a†b + b†a)` on slots `a` and `b`.
pub fn polariton_hamiltonian(spec: &PolaritonSpec, layout: &Arc<SpaceLayout>) -> Result<Operator> {
    spec.validate()?;
    for (slot, want) in [(PHOTON_SLOT, spec.truncation_a), (EXCITON_SLOT, spec.truncation_b)] {
        let have = layout.slot_dim(slot)?;
        if have != want {
            return Err(Error::DimensionMismatch { expected: want, found: have });
        }
    }
    let a = mode_operator(layout, PHOTON_SLOT)?;
    let b = mode_operator(layout, EXCITON_SLOT)?;
    let free = detector_hamiltonian(layout, &[(PHOTON_SLOT, spec.omega_a), (EXCITON_SLOT, spec.omega_b)])?;
    let hop = &(&a.dagger() * &b) + &(&b.dagger() * &a);
    Ok(&free + &hop.scale_real(spec.g))
}

/// Pseudo-spin lowering operator on its own layout.
pub fn sigma_local() -> Operator {
    annihilation(2).expect("dim 2 is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;

    fn two_detector_layout(trunc: usize) -> Arc<SpaceLayout> {
        SpaceLayout::new([(SOURCE_SLOT, 2), ("a1", trunc), ("a2", trunc)]).unwrap()
    }

    fn target(slot: &str, lambda: f64, kappa: f64) -> TargetSpec {
        TargetSpec { slot: slot.into(), decay: 1.0, lambda, kappa, efficiency: 1.0, detuning: 0.0 }
    }

    #[test]
    fn driven_2ls_hamiltonian() {
        let m = build_driven_2ls(2.0, 1.0, 1.0).unwrap();
        let h = m.hamiltonian();
        assert_eq!(h.get(1, 1), c64::new(2.0, 0.0));
        assert_eq!(h.get(0, 1), c64::new(1.0, 0.0));
        assert_eq!(h.get(0, 0), ZERO);
        assert_eq!(m.channels().len(), 1);
        assert!(build_driven_2ls(0.0, 1.0, 0.0).is_err());
        assert!(build_driven_2ls(0.0, 1.0, -1.0).is_err());
        let undriven = build_driven_2ls(0.0, 0.0, 1.0).unwrap();
        assert_eq!(linalg::max_abs(undriven.hamiltonian().matrix()), 0.0);
    }

    #[test]
    fn cascade_channel_structure() {
        let layout = two_detector_layout(3);
        let src = build_driven_2ls(0.0, 1.0, 1.0).unwrap();
        let hd = detector_hamiltonian(&layout, &[("a1", 2.0), ("a2", -2.0)]).unwrap();
        let spec = CascadeSpec {
            gamma_sigma: 1.0,
            source_slot: SOURCE_SLOT.into(),
            targets: vec![target("a1", 0.5, 0.0), target("a2", 0.5, 0.0)],
        };
        let m = cascade(&src, &spec, &hd).unwrap();
        let labels: Vec<&str> = m.channel_labels().collect();
        assert_eq!(labels, ["O_a1", "O_a2"]);
        assert!(m.hamiltonian().is_hermitian(1e-12));

        let spec_k = CascadeSpec { targets: vec![target("a1", 0.3, 0.5), target("a2", 0.2, 0.0)], ..spec.clone() };
        let m = cascade(&src, &spec_k, &hd).unwrap();
        let labels: Vec<&str> = m.channel_labels().collect();
        assert_eq!(labels, ["O_a1", "a1", "O_a2", "sigma_res"]);
        assert!((m.channel("sigma_res").unwrap().rate - 0.5).abs() < 1e-15);
        assert!((m.channel("a1").unwrap().rate - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cascade_rejects_overflow_and_non_hermitian_targets() {
        let layout = two_detector_layout(2);
        let src = build_driven_2ls(0.0, 1.0, 1.0).unwrap();
        let hd = detector_hamiltonian(&layout, &[("a1", 0.0), ("a2", 0.0)]).unwrap();
        let spec = CascadeSpec {
            gamma_sigma: 1.0,
            source_slot: SOURCE_SLOT.into(),
            targets: vec![target("a1", 0.7, 0.0), target("a2", 0.6, 0.0)],
        };
        assert!(matches!(cascade(&src, &spec, &hd), Err(Error::CascadeOverflow(_))));
        let a1 = mode_operator(&layout, "a1").unwrap();
        let spec_ok = CascadeSpec { targets: vec![target("a1", 0.5, 0.0)], ..spec };
        assert!(matches!(cascade(&src, &spec_ok, &a1), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn detector_hamiltonian_diagonal() {
        let layout = SpaceLayout::new([(SOURCE_SLOT, 2), ("a1", 3), ("a2", 3)]).unwrap();
        let zero = detector_hamiltonian(&layout, &[("a1", 0.0), ("a2", 0.0)]).unwrap();
        assert_eq!(linalg::max_abs(zero.matrix()), 0.0);
        let h = detector_hamiltonian(&layout, &[("a1", 5.0)]).unwrap();
        assert_eq!(h.hermiticity_error(), 0.0);
        for idx in 0..layout.dim() {
            let n1 = layout.digit(idx, 1) as f64;
            assert_eq!(h.get(idx, idx), c64::new(5.0 * n1, 0.0));
        }
        assert!(detector_hamiltonian(&layout, &[("a3", 1.0)]).is_err());
    }

    fn single_excitation_block(spec: &PolaritonSpec) -> [f64; 2] {
        let layout = SpaceLayout::new([(PHOTON_SLOT, spec.truncation_a), (EXCITON_SLOT, spec.truncation_b)]).unwrap();
        let h = polariton_hamiltonian(spec, &layout).unwrap();
        let i10 = layout.compose_index(&[1, 0]).unwrap();
        let i01 = layout.compose_index(&[0, 1]).unwrap();
        let block = faer::Mat::from_fn(2, 2, |r, c| {
            let idx = [i10, i01];
            h.get(idx[r], idx[c])
        });
        let ev = linalg::hermitian_eigenvalues(&block).unwrap();
        [ev[0], ev[1]]
    }

    #[test]
    fn polariton_branches() {
        let mut spec = PolaritonSpec {
            omega_a: 1.5,
            omega_b: 1.5,
            g: 0.7,
            gamma_a: 1.0,
            gamma_b: 0.01,
            truncation_a: 3,
            truncation_b: 3,
        };
        let ev = single_excitation_block(&spec);
        assert!((ev[0] - 0.8).abs() < 1e-12 && (ev[1] - 2.2).abs() < 1e-12);

        spec.g = 0.0;
        let layout = SpaceLayout::new([(PHOTON_SLOT, 3), (EXCITON_SLOT, 3)]).unwrap();
        let h = polariton_hamiltonian(&spec, &layout).unwrap();
        assert_eq!(linalg::max_abs_diff(h.matrix(), &linalg::hermitize(h.matrix())), 0.0);
        assert!((0..9).all(|i| (0..9).all(|j| i == j || h.get(i, j) == ZERO)));

        // δ = 2g: compare against the closed-form branch energies
        spec.g = 0.9;
        spec.omega_a = -0.4;
        spec.omega_b = spec.omega_a + 2.0 * spec.g;
        let ev = single_excitation_block(&spec);
        let (wl, wu) = spec.branch_frequencies();
        assert!((ev[0] - wl).abs() < 1e-12 && (ev[1] - wu).abs() < 1e-12);
    }

    #[test]
    fn polariton_mixing_diagonalizes_single_excitation_block() {
        let spec = PolaritonSpec {
            omega_a: 0.3,
            omega_b: -1.1,
            g: 0.8,
            gamma_a: 1.0,
            gamma_b: 1.0,
            truncation_a: 2,
            truncation_b: 2,
        };
        let (cp, cm) = spec.mixing();
        assert!((cp * cp + cm * cm - 1.0).abs() < 1e-14);
        // l = c+ a − c− b is the lower eigenvector of [[ω_a, g], [g, ω_b]]
        let (wl, _) = spec.branch_frequencies();
        let r0 = spec.omega_a * cp + spec.g * (-cm);
        let r1 = spec.g * cp + spec.omega_b * (-cm);
        assert!((r0 - wl * cp).abs() < 1e-12 && (r1 + wl * cm).abs() < 1e-12);
    }
}
