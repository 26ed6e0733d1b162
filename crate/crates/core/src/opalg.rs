//! Tensor-product layouts and dense operators.
//!
//! Basis ordering: subsystem 0 is the slowest-varying index, so the composite
//! index of digits `(k_0, k_1, ..., k_{n-1})` is `Σ k_i · stride_i` with
//! `stride_{n-1} = 1`. Every operator in the crate uses this convention, and
//! the Liouville-space vectorization (column stacking) is built on top of it.
//!
//! All rates and frequencies are in units of the emitter decay rate, and all
//! Hamiltonians are written in the frame rotating at the laser frequency.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::linalg::{self, ONE, ZERO};

/// Tolerance for algebraic identities (Hermiticity, trace).
pub const ALGEBRA_TOL: f64 = 1e-10;
/// Negative-eigenvalue slack accepted in a density matrix.
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
}

/// Ordered list of labelled subsystems.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceLayout {
    subsystems: Vec<Subsystem>,
    strides: Vec<usize>,
    dim: usize,
}

impl SpaceLayout {
    pub fn new<S: Into<String>>(subsystems: impl IntoIterator<Item = (S, usize)>) -> Result<Arc<Self>> {
        let subsystems: Vec<Subsystem> = subsystems
            .into_iter()
            .map(|(label, dim)| Subsystem { label: label.into(), dim })
            .collect();
        if subsystems.is_empty() {
            return Err(Error::InvalidParameter("layout needs at least one subsystem".into()));
        }
        for (k, s) in subsystems.iter().enumerate() {
            if s.dim < 2 {
                return Err(Error::InvalidDimension(s.dim));
            }
            if subsystems[..k].iter().any(|o| o.label == s.label) {
                return Err(Error::DuplicateLabel(s.label.clone()));
            }
        }
        let mut strides = vec![1; subsystems.len()];
        for k in (0..subsystems.len() - 1).rev() {
            strides[k] = strides[k + 1] * subsystems[k + 1].dim;
        }
        let dim = subsystems.iter().map(|s| s.dim).product();
        Ok(Arc::new(Self { subsystems, strides, dim }))
    }

    pub fn single(label: &str, dim: usize) -> Result<Arc<Self>> {
        Self::new([(label, dim)])
    }

    /// Total Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.subsystems.iter().map(|s| s.label.as_str())
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn slot_dim(&self, label: &str) -> Result<usize> {
        Ok(self.subsystems[self.index_of(label)?].dim)
    }

    pub fn stride(&self, slot: usize) -> usize {
        self.strides[slot]
    }

    /// Digit of subsystem `slot` in composite index `index`.
    pub fn digit(&self, index: usize, slot: usize) -> usize {
        (index / self.strides[slot]) % self.subsystems[slot].dim
    }

    /// Composite index of a digit tuple.
    pub fn compose_index(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.subsystems.len() {
            return Err(Error::DimensionMismatch { expected: self.subsystems.len(), found: digits.len() });
        }
        let mut idx = 0;
        for (k, (&d, s)) in digits.iter().zip(&self.subsystems).enumerate() {
            if d >= s.dim {
                return Err(Error::DimensionMismatch { expected: s.dim, found: d + 1 });
            }
            idx += d * self.strides[k];
        }
        Ok(idx)
    }

    /// Layout made of the listed subsystems, in this layout's order.
    pub fn restrict(&self, keep: &[usize]) -> Result<Arc<Self>> {
        Self::new(keep.iter().map(|&k| (self.subsystems[k].label.clone(), self.subsystems[k].dim)))
    }
}

impl fmt::Display for SpaceLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.subsystems.iter().map(|s| format!("{}:{}", s.label, s.dim)).collect();
        write!(f, "[{}]", parts.join(" ⊗ "))
    }
}

fn same_layout(a: &Arc<SpaceLayout>, b: &Arc<SpaceLayout>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Dense operator on a layout.
#[derive(Clone)]
pub struct Operator {
    layout: Arc<SpaceLayout>,
    matrix: Mat<c64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator").field("layout", &self.layout.to_string()).finish_non_exhaustive()
    }
}

impl Operator {
    pub fn new(layout: Arc<SpaceLayout>, matrix: Mat<c64>) -> Result<Self> {
        let d = layout.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(Self { layout, matrix })
    }

    pub fn zeros(layout: &Arc<SpaceLayout>) -> Self {
        let d = layout.dim();
        Self { layout: layout.clone(), matrix: Mat::zeros(d, d) }
    }

    pub fn identity(layout: &Arc<SpaceLayout>) -> Self {
        let d = layout.dim();
        Self { layout: layout.clone(), matrix: Mat::identity(d, d) }
    }

    /// Diagonal operator from real entries.
    pub fn diagonal(layout: &Arc<SpaceLayout>, diag: &[f64]) -> Result<Self> {
        let d = layout.dim();
        if diag.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: diag.len() });
        }
        let matrix = Mat::from_fn(d, d, |i, j| if i == j { linalg::real(diag[i]) } else { ZERO });
        Ok(Self { layout: layout.clone(), matrix })
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> c64 {
        self.matrix[(row, col)]
    }

    pub fn dagger(&self) -> Self {
        Self { layout: self.layout.clone(), matrix: linalg::adjoint(&self.matrix) }
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if same_layout(&self.layout, &other.layout) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch)
        }
    }

    /// `self · other`, checked.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_layout(other)?;
        Ok(Self { layout: self.layout.clone(), matrix: &self.matrix * &other.matrix })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_layout(other)?;
        Ok(Self { layout: self.layout.clone(), matrix: &self.matrix + &other.matrix })
    }

    pub fn scale(&self, factor: c64) -> Self {
        Self { layout: self.layout.clone(), matrix: &self.matrix * faer::Scale(factor) }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(linalg::real(factor))
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_layout(other)?;
        let m = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        Ok(Self { layout: self.layout.clone(), matrix: m })
    }

    pub fn trace(&self) -> c64 {
        linalg::trace(&self.matrix)
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::hermiticity_error(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        linalg::max_abs_diff(&self.matrix, &other.matrix)
    }

    /// Tensor product; the layouts are concatenated (labels must stay unique).
    pub fn kron(&self, other: &Self) -> Result<Self> {
        let layout = SpaceLayout::new(
            self.layout
                .subsystems()
                .iter()
                .chain(other.layout.subsystems())
                .map(|s| (s.label.clone(), s.dim)),
        )?;
        Ok(Self { layout, matrix: linalg::kron(&self.matrix, &other.matrix) })
    }

    /// Re-labels the operator onto an equal-shaped layout.
    pub fn with_layout(&self, layout: &Arc<SpaceLayout>) -> Result<Self> {
        Self::new(layout.clone(), self.matrix.clone())
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operator sum on mismatched layouts")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.check_layout(rhs).expect("operator difference on mismatched layouts");
        Operator { layout: self.layout.clone(), matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.compose(rhs).expect("operator product on mismatched layouts")
    }
}

/// Bosonic annihilation operator truncated to `dim` Fock levels, on a
/// single-mode layout labelled `mode`. For `dim = 2` this is the pseudo-spin
/// lowering operator.
pub fn annihilation(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let layout = SpaceLayout::single("mode", dim)?;
    let mut m = Mat::<c64>::zeros(dim, dim);
    for k in 1..dim {
        m[(k - 1, k)] = linalg::real((k as f64).sqrt());
    }
    Operator::new(layout, m)
}

/// Places a single-subsystem operator into `layout` at `slot`, with
/// identities elsewhere.
pub fn embed(op: &Operator, layout: &Arc<SpaceLayout>, slot: &str) -> Result<Operator> {
    let k = layout.index_of(slot)?;
    let d = layout.subsystems()[k].dim;
    if op.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: op.dim() });
    }
    let right = layout.stride(k);
    let left = layout.dim() / (d * right);
    let total = layout.dim();
    let mut m = Mat::<c64>::zeros(total, total);
    for b in 0..d {
        for a in 0..d {
            let v = op.matrix[(a, b)];
            if v == ZERO {
                continue;
            }
            for p in 0..left {
                let base = p * d * right;
                for r in 0..right {
                    m[(base + a * right + r, base + b * right + r)] = v;
                }
            }
        }
    }
    Operator::new(layout.clone(), m)
}

/// `annihilation(dim)` embedded at `slot`, with `dim` read from the layout.
pub fn mode_operator(layout: &Arc<SpaceLayout>, slot: &str) -> Result<Operator> {
    embed(&annihilation(layout.slot_dim(slot)?)?, layout, slot)
}

/// `a†a` at `slot`, built directly on the diagonal so Fock numbers are exact.
pub fn number_operator(layout: &Arc<SpaceLayout>, slot: &str) -> Result<Operator> {
    let k = layout.index_of(slot)?;
    let diag: Vec<f64> = (0..layout.dim()).map(|i| layout.digit(i, k) as f64).collect();
    Operator::diagonal(layout, &diag)
}

/// Density matrix: Hermitian, unit trace, positive semidefinite within
/// [`POSITIVITY_TOL`].
#[derive(Clone, Debug)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        let herm = op.hermiticity_error();
        if herm > ALGEBRA_TOL {
            return Err(Error::NonHermitian(herm));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > ALGEBRA_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = linalg::hermitian_eigenvalues(op.matrix())?.first().copied().unwrap_or(0.0);
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("minimum eigenvalue {min:.3e}")));
        }
        Ok(Self(op))
    }

    /// Symmetrizes and renormalizes a nearly valid state before validating it.
    pub fn from_noisy(op: Operator) -> Result<Self> {
        let h = linalg::hermitize(op.matrix());
        let tr = linalg::trace(&h).re;
        if !(tr.is_finite() && tr.abs() > 1e-300) {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        Self::new(Operator::new(op.layout.clone(), &h * faer::Scale(linalg::real(1.0 / tr)))?)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let d = psi.amps.len();
        let norm = psi.norm_sqr();
        let m = Mat::from_fn(d, d, |i, j| psi.amps[i] * psi.amps[j].conj() / norm);
        Self(Operator { layout: psi.layout.clone(), matrix: m })
    }

    /// Basis projector `|k⟩⟨k|`.
    pub fn basis(layout: &Arc<SpaceLayout>, index: usize) -> Result<Self> {
        Ok(Self::from_pure(&StateVector::basis(layout, index)?))
    }

    /// Convex mixture `Σ w_i ρ_i`; weights must sum to one.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let mut acc = Operator::zeros(first.1.layout());
        for (w, rho) in parts {
            if *w < 0.0 {
                return Err(Error::InvalidParameter(format!("negative mixture weight {w}")));
            }
            acc = acc.try_add(&rho.0.scale_real(*w))?;
        }
        Self::new(acc)
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        Ok(Self(self.0.kron(&other.0)?))
    }

    pub fn as_operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        self.0.layout()
    }

    pub fn matrix(&self) -> &Mat<c64> {
        self.0.matrix()
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigenvalues(self.matrix())
    }

    /// `Tr ρ²`
    pub fn purity(&self) -> f64 {
        let m = self.matrix();
        let mut acc = 0.0;
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                acc += m[(i, j)].norm_sqr();
            }
        }
        acc
    }

    /// Trace distance `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        let diff = self.0.try_add(&other.0.scale_real(-1.0))?;
        Ok(0.5 * linalg::hermitian_eigenvalues(diff.matrix())?.iter().map(|v| v.abs()).sum::<f64>())
    }
}

/// Pure state amplitudes on a layout.
#[derive(Clone, Debug)]
pub struct StateVector {
    layout: Arc<SpaceLayout>,
    amps: Vec<c64>,
}

impl StateVector {
    /// Validates unit norm within [`ALGEBRA_TOL`].
    pub fn new(layout: Arc<SpaceLayout>, amps: Vec<c64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), found: amps.len() });
        }
        let s = Self { layout, amps };
        let n = s.norm_sqr();
        if (n - 1.0).abs() > ALGEBRA_TOL {
            return Err(Error::InvalidState(format!("state norm² {n}")));
        }
        Ok(s)
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(layout: Arc<SpaceLayout>, mut amps: Vec<c64>) -> Result<Self> {
        let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        for a in &mut amps {
            *a /= n;
        }
        Self::new(layout, amps)
    }

    pub fn basis(layout: &Arc<SpaceLayout>, index: usize) -> Result<Self> {
        if index >= layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), found: index + 1 });
        }
        let mut amps = vec![ZERO; layout.dim()];
        amps[index] = ONE;
        Ok(Self { layout: layout.clone(), amps })
    }

    /// Product basis state from per-subsystem levels.
    pub fn from_digits(layout: &Arc<SpaceLayout>, digits: &[usize]) -> Result<Self> {
        Self::basis(layout, layout.compose_index(digits)?)
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[c64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Reduced state on the `keep` subsystems (kept in layout order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::EmptyKeepSet);
    }
    let layout = rho.layout();
    let mut kept: Vec<usize> = keep.iter().map(|l| layout.index_of(l)).collect::<Result<_>>()?;
    kept.sort_unstable();
    kept.dedup();
    let traced: Vec<usize> = (0..layout.subsystems().len()).filter(|k| !kept.contains(k)).collect();
    let reduced = layout.restrict(&kept)?;
    if traced.is_empty() {
        return Ok(DensityMatrix(Operator { layout: reduced, matrix: rho.matrix().clone() }));
    }
    let dk = reduced.dim();
    let dt: usize = traced.iter().map(|&k| layout.subsystems()[k].dim).product();
    // full[k][t]: composite index of (kept digits of k, traced digits of t)
    let mut full = vec![0usize; dk * dt];
    for idx in 0..layout.dim() {
        let mut ki = 0;
        for &k in &kept {
            ki = ki * layout.subsystems()[k].dim + layout.digit(idx, k);
        }
        let mut ti = 0;
        for &t in &traced {
            ti = ti * layout.subsystems()[t].dim + layout.digit(idx, t);
        }
        full[ki * dt + ti] = idx;
    }
    let m = rho.matrix();
    let out = Mat::from_fn(dk, dk, |i, j| {
        let mut acc = ZERO;
        for t in 0..dt {
            acc += m[(full[i * dt + t], full[j * dt + t])];
        }
        acc
    });
    Ok(DensityMatrix(Operator { layout: reduced, matrix: out }))
}

/// `Tr(ρ · op)`
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<c64> {
    if !same_layout(rho.layout(), op.layout()) {
        return Err(Error::LayoutMismatch);
    }
    Ok(trace_product(rho.matrix(), op.matrix()))
}

/// `Tr(a · b)` without forming the product.
pub(crate) fn trace_product(a: &Mat<c64>, b: &Mat<c64>) -> c64 {
    let mut acc = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
