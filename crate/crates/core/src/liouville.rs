//! Liouville-space generators, steady states, eigen-structure and emission
//! spectra.
//!
//! Vectorization is column stacking: `vec(ρ)[i + j·d] = ρ[i, j]`, so that
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`. The stored generator satisfies
//! `∂ₜ vec(ρ) = L · vec(ρ)`.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, ONE, ZERO};
use crate::modelkit::{embed_source, CascadeSpec, LindbladModel};
use crate::opalg::{mode_operator, trace_product, DensityMatrix, Operator, SpaceLayout};

/// Eigenvalues with modulus below this (relative to the generator scale) are
/// treated as stationary.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-8;
/// Bordered-solve condition estimate beyond which the null space is found by
/// full eigendecomposition instead.
pub const MAX_CONDITION: f64 = 1e12;
/// Transition energies closer than this are merged.
pub const LINE_MERGE_TOL: f64 = 1e-6;

/// Matrix of `∂ₜ vec(ρ)` on a layout.
#[derive(Clone)]
pub struct Superoperator {
    layout: Arc<SpaceLayout>,
    matrix: Mat<c64>,
}

impl std::fmt::Debug for Superoperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Superoperator").field("layout", &self.layout.to_string()).finish_non_exhaustive()
    }
}

impl Superoperator {
    pub fn from_matrix(layout: Arc<SpaceLayout>, matrix: Mat<c64>) -> Result<Self> {
        let n = layout.dim() * layout.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(Self { layout, matrix })
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    /// Hilbert-space dimension `d` (the matrix is `d² × d²`).
    pub fn hilbert_dim(&self) -> usize {
        self.layout.dim()
    }

    /// `L · vec(ρ)`, reshaped back to a `d × d` matrix.
    pub fn apply(&self, rho: &Mat<c64>) -> Mat<c64> {
        unvectorize(&(&self.matrix * vectorize(rho)), self.hilbert_dim())
    }

    /// `max_k |Σ_i L[(i,i), k]|`: how far `Tr(L ρ)` is from vanishing.
    pub fn trace_row_error(&self) -> f64 {
        let d = self.hilbert_dim();
        (0..self.matrix.ncols())
            .map(|k| (0..d).map(|i| self.matrix[(i + i * d, k)]).sum::<c64>().norm())
            .fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Result<Vec<c64>> {
        self.matrix
            .eigenvalues()
            .map_err(|e| Error::Numerical(format!("Liouvillian eigenvalues: {e:?}")))
    }

    fn scale(&self) -> f64 {
        linalg::max_abs(&self.matrix).max(1.0)
    }
}

/// Column-stacked `vec(ρ)` as a column matrix.
pub fn vectorize(rho: &Mat<c64>) -> Mat<c64> {
    let d = rho.nrows();
    Mat::from_fn(d * d, 1, |k, _| rho[(k % d, k / d)])
}

pub fn unvectorize(v: &Mat<c64>, d: usize) -> Mat<c64> {
    Mat::from_fn(d, d, |i, j| v[(i + j * d, 0)])
}

/// Adds `rate/2 · (2 c ρ c† − c†c ρ − ρ c†c)` to the generator.
fn add_dissipator(l: &mut Mat<c64>, rate: f64, c: &Mat<c64>) {
    let d = c.nrows();
    let id = Mat::<c64>::identity(d, d);
    let cc = linalg::adjoint(c) * c;
    let conj_c = c.conjugate().to_owned();
    linalg::add_kron(l, linalg::real(rate), &conj_c, c);
    linalg::add_kron(l, linalg::real(-0.5 * rate), &id, &cc);
    linalg::add_kron(l, linalg::real(-0.5 * rate), &cc.transpose().to_owned(), &id);
}

/// Adds `−i[H, ρ]` to the generator.
fn add_hamiltonian(l: &mut Mat<c64>, h: &Mat<c64>) {
    let d = h.nrows();
    let id = Mat::<c64>::identity(d, d);
    linalg::add_kron(l, c64::new(0.0, -1.0), &id, h);
    linalg::add_kron(l, c64::new(0.0, 1.0), &h.transpose().to_owned(), &id);
}

pub fn liouvillian_matrix(model: &LindbladModel) -> Superoperator {
    let d = model.layout().dim();
    let mut l = Mat::<c64>::zeros(d * d, d * d);
    add_hamiltonian(&mut l, model.hamiltonian().matrix());
    for ch in model.channels() {
        if ch.rate > 0.0 {
            add_dissipator(&mut l, ch.rate, ch.collapse.matrix());
        }
    }
    Superoperator { layout: model.layout().clone(), matrix: l }
}

/// Generator of a cascade written directly in the mixed form
/// `−i[H, ρ] + (γ/2)L_σ + Σ (Γ_n/2)L_{a_n} + Σ √(α_nγΓ_n)([σρ, a_n†] + [a_n, ρσ†])`,
/// without passing through a Lindblad model. Used to cross-check [`crate::modelkit::cascade`].
pub fn cascade_generator_direct(
    source: &LindbladModel,
    spec: &CascadeSpec,
    target_hamiltonian: &Operator,
) -> Result<Superoperator> {
    spec.validate()?;
    let joint = target_hamiltonian.layout().clone();
    let (sigma, source_h, extra) = embed_source(source, spec, &joint)?;
    let d = joint.dim();
    let id = Mat::<c64>::identity(d, d);
    let mut l = Mat::<c64>::zeros(d * d, d * d);
    add_hamiltonian(&mut l, &(source_h.matrix() + target_hamiltonian.matrix()));
    add_dissipator(&mut l, spec.gamma_sigma, sigma.matrix());
    for ch in &extra {
        add_dissipator(&mut l, ch.rate, ch.collapse.matrix());
    }
    let s = sigma.matrix();
    let s_dag = linalg::adjoint(s);
    for t in &spec.targets {
        let a = mode_operator(&joint, &t.slot)?;
        let a = a.matrix();
        let a_dag = linalg::adjoint(a);
        add_dissipator(&mut l, t.decay, a);
        let k = linalg::real((t.alpha() * spec.gamma_sigma * t.decay).sqrt());
        // [σρ, a†] = σρa† − a†σρ ;  [a, ρσ†] = aρσ† − ρσ†a
        linalg::add_kron(&mut l, k, &a_dag.transpose().to_owned(), s);
        linalg::add_kron(&mut l, -k, &id, &(&a_dag * s));
        linalg::add_kron(&mut l, k, &s_dag.transpose().to_owned(), a);
        linalg::add_kron(&mut l, -k, &(&s_dag * a).transpose().to_owned(), &id);
    }
    Superoperator::from_matrix(joint, l)
}

/// Stationary state of `L`.
///
/// Solves `L x = 0` with the first row replaced by the trace constraint. A
/// cheap condition estimate guards the solve; above [`MAX_CONDITION`] the
/// null space is taken from a full eigendecomposition, which also detects a
/// degenerate stationary manifold.
pub fn steady_state(l: &Superoperator) -> Result<DensityMatrix> {
    let d = l.hilbert_dim();
    let n = d * d;
    let mut bordered = l.matrix.clone();
    for k in 0..n {
        bordered[(0, k)] = ZERO;
    }
    for i in 0..d {
        bordered[(0, i + i * d)] = ONE;
    }
    // Column 0: the actual right-hand side. Column 1: a fixed pseudo-random
    // probe whose solution norm lower-bounds ‖B⁻¹‖.
    let mut rhs = Mat::<c64>::zeros(n, 2);
    rhs[(0, 0)] = ONE;
    let mut s = 0x2545F4914F6CDD1Du64;
    for k in 0..n {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        rhs[(k, 1)] = linalg::real(if s & 1 == 0 { 1.0 } else { -1.0 });
    }
    let sol = bordered.partial_piv_lu().solve(&rhs);
    let probe_gain = (0..n).map(|k| sol[(k, 1)].norm()).fold(0.0, f64::max);
    let condition = probe_gain * one_norm(&bordered);
    let x = Mat::from_fn(n, 1, |k, _| sol[(k, 0)]);
    let residual = linalg::max_abs(&(&l.matrix * &x));
    let finite = (0..n).all(|k| sol[(k, 0)].re.is_finite() && sol[(k, 0)].im.is_finite());
    if finite && condition.is_finite() && condition < MAX_CONDITION && residual < 1e-9 * l.scale() {
        return finish_steady_state(l, &x);
    }
    log::debug!("bordered steady-state solve rejected (condition ≈ {condition:.2e}, residual {residual:.2e})");
    steady_state_by_eigen(l)
}

fn steady_state_by_eigen(l: &Superoperator) -> Result<DensityMatrix> {
    let evd = l
        .matrix
        .eigen()
        .map_err(|e| Error::Numerical(format!("Liouvillian eigendecomposition: {e:?}")))?;
    let values = evd.S().column_vector();
    let tol = ZERO_EIGENVALUE_TOL * l.scale();
    let zeros: Vec<usize> = (0..values.nrows()).filter(|&k| values[k].norm() < tol).collect();
    match zeros.len() {
        1 => {
            let u = evd.U();
            let x = Mat::from_fn(u.nrows(), 1, |k, _| u[(k, zeros[0])]);
            finish_steady_state(l, &x)
        }
        0 => Err(Error::Numerical("Liouvillian has no stationary eigenvalue".into())),
        m => Err(Error::DegenerateSteadyState(m)),
    }
}

fn finish_steady_state(l: &Superoperator, x: &Mat<c64>) -> Result<DensityMatrix> {
    let rho = unvectorize(x, l.hilbert_dim());
    DensityMatrix::from_noisy(Operator::new(l.layout.clone(), rho)?)
}

fn one_norm(a: &Mat<c64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Right eigenvectors `R`, their inverse `R⁻¹` (rows are left eigenvectors)
/// and eigenvalues `λ_k` of a generator: `L = R diag(λ) R⁻¹`.
#[derive(Clone)]
pub struct LiouvillianEigen {
    pub values: Vec<c64>,
    pub right: Mat<c64>,
    pub left: Mat<c64>,
    /// `‖R‖_F ‖R⁻¹‖_F`
    pub condition: f64,
}

/// Eigenbases worse conditioned than this are not used for propagation.
pub const MAX_EIGENBASIS_CONDITION: f64 = 1e10;

impl LiouvillianEigen {
    /// Returns `None` when the generator is defective or too ill-conditioned
    /// for the eigenbasis to be trusted.
    pub fn new(l: &Superoperator) -> Result<Option<Self>> {
        let evd = l
            .matrix
            .eigen()
            .map_err(|e| Error::Numerical(format!("Liouvillian eigendecomposition: {e:?}")))?;
        let n = l.matrix.nrows();
        let values: Vec<c64> = {
            let s = evd.S().column_vector();
            (0..n).map(|k| s[k]).collect()
        };
        let right = evd.U().to_owned();
        let left = linalg::inverse(&right);
        let condition = linalg::frobenius(&right) * linalg::frobenius(&left);
        if !condition.is_finite() || condition > MAX_EIGENBASIS_CONDITION {
            log::debug!("Liouvillian eigenbasis rejected (condition ≈ {condition:.2e})");
            return Ok(None);
        }
        let id_err = linalg::max_abs_diff(&(&left * &right), &Mat::identity(n, n));
        if id_err > 1e-8 {
            log::debug!("Liouvillian eigenbasis rejected (‖R⁻¹R − I‖ = {id_err:.2e})");
            return Ok(None);
        }
        Ok(Some(Self { values, right, left, condition }))
    }

    /// Index of the eigenvalue closest to zero.
    pub fn stationary_index(&self) -> usize {
        (0..self.values.len())
            .min_by(|&a, &b| self.values[a].norm().total_cmp(&self.values[b].norm()))
            .unwrap_or(0)
    }

    /// Mode amplitudes `R⁻¹ x` of a vectorized operator.
    pub fn modal(&self, x: &Mat<c64>) -> Mat<c64> {
        &self.left * x
    }

    /// `w · R_k` for every mode, for a row functional `w`.
    pub fn observed(&self, w: &Mat<c64>) -> Mat<c64> {
        w * &self.right
    }
}

/// Distinct imaginary parts of the eigenvalues of `M = −L`, ascending, merged
/// within [`LINE_MERGE_TOL`]. No amplitude filtering is applied.
pub fn transition_energies(l: &Superoperator) -> Result<Vec<f64>> {
    let mut lines: Vec<f64> = l.eigenvalues()?.iter().map(|z| -z.im).collect();
    Ok(merge_lines(&mut lines))
}

fn merge_lines(lines: &mut [f64]) -> Vec<f64> {
    lines.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for &x in lines.iter() {
        match out.last() {
            Some(&last) if (x - last).abs() <= LINE_MERGE_TOL => {}
            _ => out.push(x),
        }
    }
    for v in &mut out {
        if v.abs() <= LINE_MERGE_TOL {
            *v = 0.0;
        }
    }
    out
}

/// Transition energies carrying weight above `threshold` in the emission
/// spectrum of `emitter_op` at steady state.
pub fn weighted_transition_energies(model: &LindbladModel, emitter_op: &Operator, threshold: f64) -> Result<Vec<f64>> {
    let l = liouvillian_matrix(model);
    let eig = LiouvillianEigen::new(&l)?
        .ok_or_else(|| Error::Numerical("Liouvillian eigenbasis is ill-conditioned".into()))?;
    let rho = steady_state(&l)?;
    let weights = spectral_weights(&eig, rho.matrix(), emitter_op.matrix());
    let k0 = eig.stationary_index();
    let mut lines: Vec<f64> = (0..eig.values.len())
        .filter(|&k| k != k0 && weights[k].norm() > threshold)
        .map(|k| -eig.values[k].im)
        .collect();
    Ok(merge_lines(&mut lines))
}

/// `w_k = Tr[c R_k] · (R⁻¹ vec(ρ c†))_k`, so that
/// `⟨c†(0) c(τ)⟩ = Σ_k w_k e^{λ_k τ}`.
fn spectral_weights(eig: &LiouvillianEigen, rho: &Mat<c64>, c: &Mat<c64>) -> Vec<c64> {
    let d = rho.nrows();
    let seed = rho * linalg::adjoint(c);
    let modal = eig.modal(&vectorize(&seed));
    // Row functional vec ↦ Tr[c X]: Tr[c X] = Σ_{i,j} c[j,i] X[i,j].
    let w = Mat::from_fn(1, d * d, |_, k| c[(k / d, k % d)]);
    let obs = eig.observed(&w);
    (0..eig.values.len()).map(|k| obs[(0, k)] * modal[(k, 0)]).collect()
}

/// Emission spectrum on a frequency grid (offsets from the laser).
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumTable {
    pub points: Vec<(f64, f64)>,
    /// `|⟨c⟩|² / ⟨c†c⟩`: the elastically scattered fraction, which is a delta
    /// peak at the laser frequency and is not included in `points`.
    pub coherent_fraction: f64,
}

impl SpectrumTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega_over_gamma,spectral_density\n");
        for (w, s) in &self.points {
            out.push_str(&format!("{w},{s}\n"));
        }
        out
    }
}

/// Incoherent emission spectrum `S(ω) ∝ Re ∫₀^∞ e^{iωτ} ⟨c†(0) c(τ)⟩_c dτ`
/// from the Liouvillian eigenmodes, normalized to unit trapezoidal integral.
pub fn emission_spectrum(model: &LindbladModel, emitter_op: &Operator, omega_grid: &[f64]) -> Result<SpectrumTable> {
    if omega_grid.len() < 2 {
        return Err(Error::InvalidParameter("spectrum grid needs at least two points".into()));
    }
    if emitter_op.layout() != model.layout() {
        return Err(Error::LayoutMismatch);
    }
    let l = liouvillian_matrix(model);
    let rho = steady_state(&l)?;
    let c = emitter_op.matrix();
    let population = trace_product(rho.matrix(), &(linalg::adjoint(c) * c)).re;
    if population <= 1e-300 {
        return Err(Error::UndefinedCorrelation("emitter has no steady-state population".into()));
    }
    let mean = trace_product(rho.matrix(), c);
    let coherent_fraction = (mean.norm_sqr() / population).min(1.0);
    let eig = LiouvillianEigen::new(&l)?
        .ok_or_else(|| Error::Numerical("Liouvillian eigenbasis is ill-conditioned".into()))?;
    let weights = spectral_weights(&eig, rho.matrix(), c);
    let k0 = eig.stationary_index();
    let mut points: Vec<(f64, f64)> = omega_grid
        .iter()
        .map(|&w| {
            let s: f64 = (0..eig.values.len())
                .filter(|&k| k != k0)
                .map(|k| (weights[k] / (-eig.values[k] - c64::new(0.0, w))).re)
                .sum();
            (w, s.max(0.0))
        })
        .collect();
    let area: f64 = points.windows(2).map(|p| 0.5 * (p[1].0 - p[0].0) * (p[1].1 + p[0].1)).sum();
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::Numerical(format!("spectrum integrates to {area} on the grid")));
    }
    for p in &mut points {
        p.1 /= area;
    }
    Ok(SpectrumTable { points, coherent_fraction })
}
