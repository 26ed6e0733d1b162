//! Entanglement and nonclassicality measures: logarithmic negativity, the
//! Cauchy–Schwarz coefficient, detection-matrix concurrence, fidelity and
//! vacuum post-selection.
//!
//! Fidelity is the squared Uhlmann form `F = (Tr √(√ρ σ √ρ))²`.

use std::sync::Arc;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ONE, ZERO};
use crate::modelkit::PolaritonSpec;
use crate::opalg::{mode_operator, partial_trace, trace_product, DensityMatrix, Operator, SpaceLayout};

/// Negative partial-transpose eigenvalues above `−NEGATIVITY_CLIP` are noise.
pub const NEGATIVITY_CLIP: f64 = 1e-8;
/// Eigenvalue clipping for the concurrence.
pub const MEASURE_CLIP: f64 = 1e-10;
/// Projected blocks lighter than this cannot be normalized.
pub const MIN_BLOCK_NORM: f64 = 1e-14;
/// Auto-correlators at or below this make `R` undefined.
pub const MIN_AUTO_CORRELATOR: f64 = 1e-30;

/// Transposes the indices of subsystem `slot`.
pub fn partial_transpose(rho: &DensityMatrix, slot: &str) -> Result<Operator> {
    partial_transpose_op(rho.as_operator(), slot)
}

pub fn partial_transpose_op(op: &Operator, slot: &str) -> Result<Operator> {
    let layout = op.layout();
    let k = layout.index_of(slot)?;
    let stride = layout.stride(k);
    let m = op.matrix();
    let d = layout.dim();
    let out = Mat::from_fn(d, d, |i, j| {
        let (di, dj) = (layout.digit(i, k), layout.digit(j, k));
        let i2 = i - di * stride + dj * stride;
        let j2 = j - dj * stride + di * stride;
        m[(i2, j2)]
    });
    Operator::new(layout.clone(), out)
}

/// `log₂ ‖ρ^{T_slot}‖₁`.
pub fn log_negativity(rho: &DensityMatrix, slot: &str) -> Result<f64> {
    let pt = partial_transpose(rho, slot)?;
    let ev = linalg::hermitian_eigenvalues(pt.matrix())?;
    // ‖X‖₁ = Tr X + 2 Σ|negative eigenvalues|, and the partial transpose
    // keeps the unit trace.
    let negative: f64 = ev.iter().filter(|&&v| v <= -NEGATIVITY_CLIP).map(|v| -v).sum();
    Ok((1.0 + 2.0 * negative).log2())
}

/// `R = (G²_{a,b})² / (G²_{a,a} G²_{b,b})` with `G²_{c,d} = ⟨c†d†dc⟩`.
pub fn csi_r(rho: &DensityMatrix, op_a: &Operator, op_b: &Operator) -> Result<f64> {
    for op in [op_a, op_b] {
        if op.layout() != rho.layout() {
            return Err(Error::LayoutMismatch);
        }
    }
    let g = |c: &Operator, d: &Operator| -> f64 {
        let (c, d) = (c.matrix(), d.matrix());
        let op = linalg::adjoint(c) * linalg::adjoint(d) * d * c;
        trace_product(rho.matrix(), &op).re
    };
    let gaa = g(op_a, op_a);
    let gbb = g(op_b, op_b);
    if gaa <= MIN_AUTO_CORRELATOR || gbb <= MIN_AUTO_CORRELATOR {
        return Err(Error::UndefinedR(format!("auto-correlators {gaa:.3e}, {gbb:.3e}")));
    }
    let gab = g(op_a, op_b);
    Ok(gab * gab / (gaa * gbb))
}

/// Which single-particle basis the detection matrix is expressed in.
#[derive(Clone, Debug, PartialEq)]
pub enum DetectionBasis {
    Bare,
    /// Lower/upper branches `l = c₊a − c₋b`, `u = c₋a + c₊b`, where `a` and
    /// `b` are the first and second slot of the pair.
    Polariton(PolaritonSpec),
}

/// Normalized restriction of a two-mode state to `{0,1}⊗{0,1}`, on the
/// ordered basis `|0,0⟩, |1,0⟩, |0,1⟩, |1,1⟩` (first label: first mode).
#[derive(Clone, Debug)]
pub struct DetectionMatrix {
    pub theta: Mat<c64>,
    /// Trace of the block before normalization.
    pub norm: f64,
}

pub const DETECTION_BASIS_LABELS: [&str; 4] = ["|0,0>", "|1,0>", "|0,1>", "|1,1>"];

#[derive(Serialize)]
struct DetectionJson<'a> {
    basis: [&'a str; 4],
    norm: f64,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl DetectionMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(theta: Mat<c64>, norm: f64) -> Result<Self> {
        if theta.nrows() != 4 || theta.ncols() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, found: theta.nrows() });
        }
        let herm = linalg::hermiticity_error(&theta);
        if herm > 1e-10 {
            return Err(Error::NonHermitian(herm));
        }
        let theta = linalg::hermitize(&theta);
        if (linalg::trace(&theta) - ONE).norm() > 1e-10 {
            return Err(Error::InvalidState("detection matrix trace differs from 1".into()));
        }
        let min = linalg::hermitian_eigenvalues(&theta)?[0];
        if min < -1e-8 {
            return Err(Error::InvalidState(format!("detection matrix eigenvalue {min:.3e}")));
        }
        Ok(Self { theta, norm })
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.theta[(i, j)]
    }

    /// The block with `|0,0⟩` projected out, renormalized.
    pub fn remove_vacuum(&self) -> Result<Self> {
        // Summed directly: 1 − θ₀₀ cancels catastrophically for tiny weights.
        let rest: f64 = (1..4).map(|i| self.theta[(i, i)].re).sum();
        if rest <= MIN_BLOCK_NORM {
            return Err(Error::AllVacuum);
        }
        let theta = Mat::from_fn(4, 4, |i, j| if i == 0 || j == 0 { ZERO } else { self.theta[(i, j)] / rest });
        Self::new(theta, self.norm * rest)
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.theta, &self.theta).re
    }

    pub fn to_json(&self) -> String {
        let re = (0..4).map(|i| (0..4).map(|j| self.theta[(i, j)].re).collect()).collect();
        let im = (0..4).map(|i| (0..4).map(|j| self.theta[(i, j)].im).collect()).collect();
        serde_json::to_string_pretty(&DetectionJson { basis: DETECTION_BASIS_LABELS, norm: self.norm, re, im })
            .expect("detection matrix serializes")
    }
}

/// Detection matrix of the pair `(first, second)`; other subsystems are
/// traced out.
pub fn detection_matrix(
    rho: &DensityMatrix,
    pair: (&str, &str),
    basis: &DetectionBasis,
) -> Result<DetectionMatrix> {
    let layout = rho.layout();
    let (i1, i2) = (layout.index_of(pair.0)?, layout.index_of(pair.1)?);
    if i1 == i2 {
        return Err(Error::DuplicateLabel(pair.0.into()));
    }
    let reduced = partial_trace(rho, &[pair.0, pair.1])?;
    let two = reduced.layout().clone();
    let a = mode_operator(&two, pair.0)?;
    let b = mode_operator(&two, pair.1)?;
    let (c1, c2) = match basis {
        DetectionBasis::Bare => (a.dagger(), b.dagger()),
        DetectionBasis::Polariton(spec) => {
            spec.validate()?;
            let (cp, cm) = spec.mixing();
            let l = &a.scale_real(cp) - &b.scale_real(cm);
            let u = &a.scale_real(cm) + &b.scale_real(cp);
            (l.dagger(), u.dagger())
        }
    };
    let vacuum = basis_vector(&two, 0);
    let states = [
        vacuum.clone(),
        normalized(apply(c1.matrix(), &vacuum))?,
        normalized(apply(c2.matrix(), &vacuum))?,
        normalized(apply(c1.matrix(), &apply(c2.matrix(), &vacuum)))?,
    ];
    let m = reduced.matrix();
    let theta = Mat::from_fn(4, 4, |i, j| {
        let right = apply(m, &states[j]);
        states[i].iter().zip(&right).map(|(x, y)| x.conj() * y).sum::<c64>()
    });
    let norm = linalg::trace(&theta).re;
    if !(norm > MIN_BLOCK_NORM) {
        return Err(Error::VanishingNorm(norm));
    }
    DetectionMatrix::new(&theta * faer::Scale(linalg::real(1.0 / norm)), norm)
}

fn basis_vector(layout: &Arc<SpaceLayout>, index: usize) -> Vec<c64> {
    let mut v = vec![ZERO; layout.dim()];
    v[index] = ONE;
    v
}

fn apply(m: &Mat<c64>, v: &[c64]) -> Vec<c64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

fn normalized(mut v: Vec<c64>) -> Result<Vec<c64>> {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(Error::InvalidDimension(1));
    }
    for z in &mut v {
        *z /= n;
    }
    Ok(v)
}

/// Wootters concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)`. The `λᵢ` are square
/// roots of the eigenvalues of `√θ θ̃ √θ`, which share the spectrum of `θ θ̃`
/// but form a Hermitian problem.
pub fn concurrence(theta: &DetectionMatrix) -> Result<f64> {
    concurrence_of(&theta.theta)
}

pub(crate) fn concurrence_of(theta: &Mat<c64>) -> Result<f64> {
    // σ_y ⊗ σ_y is invariant under exchanging the two qubits, so the basis
    // order of the detection matrix needs no permutation.
    let mut yy = Mat::<c64>::zeros(4, 4);
    for (i, j, s) in [(0, 3, -1.0), (1, 2, 1.0), (2, 1, 1.0), (3, 0, -1.0)] {
        yy[(i, j)] = linalg::real(s);
    }
    let tilde = &yy * theta.conjugate() * &yy;
    let root = linalg::psd_sqrt(theta)?;
    let r = &root * tilde * &root;
    let mut lambdas: Vec<f64> = linalg::hermitian_eigenvalues(&r)?
        .iter()
        .map(|&v| if v < MEASURE_CLIP { 0.0 } else { v.sqrt() })
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0))
}

/// Squared Uhlmann fidelity between density matrices on the same layout.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.layout() != sigma.layout() {
        return Err(Error::LayoutMismatch);
    }
    fidelity_of(rho.matrix(), sigma.matrix())
}

pub(crate) fn fidelity_of(rho: &Mat<c64>, sigma: &Mat<c64>) -> Result<f64> {
    let root = linalg::psd_sqrt(rho)?;
    let m = &root * sigma * &root;
    // Small positive eigenvalues carry weight √v, so only negative noise is clipped.
    let s: f64 = linalg::hermitian_eigenvalues(&m)?.iter().map(|&v| v.max(0.0).sqrt()).sum();
    Ok((s * s).clamp(0.0, 1.0))
}

/// Projects out the all-vacuum basis state (index 0) and renormalizes.
pub fn postselect_remove_vacuum(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let m = rho.matrix();
    let rest: f64 = (1..m.nrows()).map(|i| m[(i, i)].re).sum();
    if rest <= MIN_BLOCK_NORM {
        return Err(Error::AllVacuum);
    }
    let d = m.nrows();
    let out = Mat::from_fn(d, d, |i, j| if i == 0 || j == 0 { ZERO } else { m[(i, j)] / rest });
    DensityMatrix::from_noisy(Operator::new(rho.layout().clone(), out)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bell {
    /// `(|0,0⟩ − |1,1⟩)/√2`
    PhiMinus,
    /// `(|0,1⟩ − |1,0⟩)/√2`
    PsiMinus,
}

impl Bell {
    /// Amplitudes on the detection basis `|0,0⟩, |1,0⟩, |0,1⟩, |1,1⟩`.
    pub fn amplitudes(self) -> [f64; 4] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Bell::PhiMinus => [h, 0.0, 0.0, -h],
            Bell::PsiMinus => [0.0, -h, h, 0.0],
        }
    }

    pub fn projector(self) -> Mat<c64> {
        let a = self.amplitudes();
        Mat::from_fn(4, 4, |i, j| linalg::real(a[i] * a[j]))
    }
}

/// `(1 − w)|0,0⟩⟨0,0| + w|B⟩⟨B|`
pub fn vacuum_bell_model(bell: Bell, w: f64) -> Mat<c64> {
    let mut m = bell.projector() * faer::Scale(linalg::real(w));
    m[(0, 0)] += linalg::real(1.0 - w);
    m
}

/// Best fit of a detection matrix by a vacuum + Bell mixture.
#[derive(Clone, Debug, Serialize)]
pub struct BellReport {
    /// Fitted Bell weight `w`.
    pub bell_weight: f64,
    /// `1 − w`
    pub vacuum_weight: f64,
    /// Fidelity between the normalized detection block and the model state.
    pub fidelity_to_model: f64,
    /// Same fidelity against the full state (block fidelity times block norm).
    pub fidelity_full_state: f64,
    /// Best fidelity to a pure superposition `α|0,0⟩ + β|B⟩`.
    pub superposition_fidelity: f64,
    /// Purity of the normalized `{0,1}⊗{0,1}` block, i.e. of the state
    /// conditioned on at most one excitation per mode.
    pub bell_purity: f64,
    /// Purity after the vacuum is also projected out.
    pub vacuum_removed_purity: f64,
    /// Trace of the `{0,1}⊗{0,1}` block before normalization.
    pub block_norm: f64,
}

/// Fits `w` by golden-section maximization of the fidelity between `θ` and
/// [`vacuum_bell_model`].
pub fn bell_report_from_detection(theta: &DetectionMatrix, bell: Bell) -> Result<BellReport> {
    let post = theta.remove_vacuum()?;
    let f = |w: f64| fidelity_of(&theta.theta, &vacuum_bell_model(bell, w)).unwrap_or(0.0);
    let w = golden_max(f, 0.0, 1.0, 1e-12);
    let fid = f(w);
    Ok(BellReport {
        bell_weight: w,
        vacuum_weight: 1.0 - w,
        fidelity_to_model: fid,
        fidelity_full_state: fid * theta.norm,
        superposition_fidelity: superposition_fidelity(&theta.theta, bell)?,
        bell_purity: theta.purity(),
        vacuum_removed_purity: post.purity(),
        block_norm: theta.norm,
    })
}

/// Largest `⟨ψ|θ|ψ⟩` over unit vectors in span{|0,0⟩, |B⟩}: the top
/// eigenvalue of the compression of `θ` to that plane.
fn superposition_fidelity(theta: &Mat<c64>, bell: Bell) -> Result<f64> {
    let b = bell.amplitudes();
    // Orthonormal basis of the plane: |0,0⟩ and the part of |B⟩ orthogonal to it.
    let rest = (1.0 - b[0] * b[0]).sqrt();
    let e1 = [1.0, 0.0, 0.0, 0.0];
    let e2 = [0.0, b[1] / rest, b[2] / rest, b[3] / rest];
    let elem = |u: &[f64; 4], v: &[f64; 4]| -> c64 {
        let mut z = ZERO;
        for i in 0..4 {
            for j in 0..4 {
                z += theta[(i, j)] * (u[i] * v[j]);
            }
        }
        z
    };
    let m = Mat::from_fn(2, 2, |i, j| {
        let (u, v) = ([&e1, &e2][i], [&e1, &e2][j]);
        elem(u, v)
    });
    let ev = linalg::hermitian_eigenvalues(&linalg::hermitize(&m))?;
    Ok(ev[1].clamp(0.0, 1.0))
}

/// [`bell_report_from_detection`] on the bare detection matrix of a two-mode
/// state (first and second subsystem in layout order).
pub fn bell_report(rho_detectors: &DensityMatrix, bell: Bell) -> Result<BellReport> {
    let labels: Vec<String> = rho_detectors.layout().labels().map(String::from).collect();
    if labels.len() != 2 {
        return Err(Error::InvalidParameter(format!("bell report needs a two-mode state, got {}", labels.len())));
    }
    let theta = detection_matrix(rho_detectors, (&labels[0], &labels[1]), &DetectionBasis::Bare)?;
    bell_report_from_detection(&theta, bell)
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The endpoints are admissible too.
    [(mid, f(mid)), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .fold((mid, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
        .0
}
