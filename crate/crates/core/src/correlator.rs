//! Time evolution and two-time correlations via the quantum regression
//! theorem.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};
use crate::liouville::{liouvillian_matrix, steady_state, unvectorize, vectorize, LiouvillianEigen, Superoperator};
use crate::modelkit::LindbladModel;
use crate::opalg::{trace_product, DensityMatrix, Operator};

/// Populations below this make a normalized correlator undefined.
pub const MIN_POPULATION: f64 = 1e-14;
/// Allowed drift of `Tr ρ(t)` from one.
pub const TRACE_DRIFT_TOL: f64 = 1e-9;

/// `e^{Lt}` acting on vectorized operators, through the eigenbasis when it is
/// well conditioned and through Padé exponentials otherwise.
pub struct Propagator {
    l: Superoperator,
    eig: Option<LiouvillianEigen>,
}

impl Propagator {
    pub fn new(model: &LindbladModel) -> Result<Self> {
        Self::from_superoperator(liouvillian_matrix(model))
    }

    pub fn from_superoperator(l: Superoperator) -> Result<Self> {
        let eig = LiouvillianEigen::new(&l)?;
        if eig.is_none() {
            log::info!("Liouvillian eigenbasis unusable; propagating with matrix exponentials");
        }
        Ok(Self { l, eig })
    }

    /// Forces the matrix-exponential path.
    pub fn without_eigenbasis(l: Superoperator) -> Self {
        Self { l, eig: None }
    }

    pub fn superoperator(&self) -> &Superoperator {
        &self.l
    }

    pub fn uses_eigenbasis(&self) -> bool {
        self.eig.is_some()
    }

    /// `e^{Lt} X` for an arbitrary operator `X`.
    pub fn propagate(&self, x: &Mat<c64>, t: f64) -> Result<Mat<c64>> {
        check_time(t)?;
        let d = self.l.hilbert_dim();
        let v = vectorize(x);
        let out = match &self.eig {
            Some(eig) => {
                let modal = eig.modal(&v);
                let scaled = Mat::from_fn(modal.nrows(), 1, |k, _| modal[(k, 0)] * (eig.values[k] * t).exp());
                &eig.right * scaled
            }
            None => linalg::expm(&(self.l.matrix() * faer::Scale(linalg::real(t))))? * v,
        };
        Ok(unvectorize(&out, d))
    }

    /// `w(e^{Lτ} X)` for a linear functional `w` (a `1 × d²` row) at every
    /// `τ ≥ 0` of `taus`, in the order given.
    pub fn functional_series(&self, w: &Mat<c64>, x: &Mat<c64>, taus: &[f64]) -> Result<Vec<c64>> {
        for &t in taus {
            check_time(t)?;
        }
        let v = vectorize(x);
        match &self.eig {
            Some(eig) => {
                let modal = eig.modal(&v);
                let obs = eig.observed(w);
                let amp: Vec<c64> = (0..eig.values.len()).map(|k| obs[(0, k)] * modal[(k, 0)]).collect();
                Ok(taus
                    .iter()
                    .map(|&t| amp.iter().zip(&eig.values).map(|(a, l)| a * (l * t).exp()).sum())
                    .collect())
            }
            None => self.functional_series_stepping(w, &v, taus),
        }
    }

    fn functional_series_stepping(&self, w: &Mat<c64>, v: &Mat<c64>, taus: &[f64]) -> Result<Vec<c64>> {
        let mut order: Vec<usize> = (0..taus.len()).collect();
        order.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));
        let mut out = vec![ZERO; taus.len()];
        let mut state = v.clone();
        let mut now = 0.0;
        let mut cached: Option<(f64, Mat<c64>)> = None;
        for idx in order {
            let dt = taus[idx] - now;
            if dt > 0.0 {
                let reuse = matches!(&cached, Some((h, _)) if (h - dt).abs() <= 1e-12 * dt.max(1.0));
                if !reuse {
                    let step = linalg::expm(&(self.l.matrix() * faer::Scale(linalg::real(dt))))?;
                    cached = Some((dt, step));
                }
                state = &cached.as_ref().expect("step cached").1 * &state;
                now = taus[idx];
            }
            out[idx] = (w * &state)[(0, 0)];
        }
        Ok(out)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidParameter(format!("propagation time must be finite and non-negative, got {t}")));
    }
    Ok(())
}

/// Row functional `vec(X) ↦ Tr[A X]`.
pub(crate) fn trace_functional(a: &Mat<c64>) -> Mat<c64> {
    let d = a.nrows();
    Mat::from_fn(1, d * d, |_, k| a[(k / d, k % d)])
}

/// `ρ(t) = e^{Lt} ρ₀`.
pub fn evolve(model: &LindbladModel, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    evolve_with(&Propagator::new(model)?, rho0, t)
}

pub fn evolve_with(prop: &Propagator, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if rho0.layout() != prop.l.layout() {
        return Err(Error::LayoutMismatch);
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let out = prop.propagate(rho0.matrix(), t)?;
    let drift = (linalg::trace(&out) - linalg::real(1.0)).norm();
    if drift > TRACE_DRIFT_TOL {
        return Err(Error::Numerical(format!("trace drifted by {drift:.2e} during propagation")));
    }
    DensityMatrix::from_noisy(Operator::new(rho0.layout().clone(), out)?)
}

/// Which operator is detected first at positive delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `τ > 0`: `op2` detected `τ` after `op1`.
    Forward,
    /// `τ > 0`: `op1` detected `τ` after `op2`.
    Backward,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationCurve {
    pub points: Vec<(f64, f64)>,
    pub labels: (String, String),
    /// Steady-state `⟨op1†op1⟩`, `⟨op2†op2⟩` used for normalization.
    pub populations: (f64, f64),
}

impl CorrelationCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_gamma,g2\n");
        for (t, g) in &self.points {
            out.push_str(&format!("{t},{g}\n"));
        }
        out
    }

    pub fn value_at(&self, tau: f64) -> Option<f64> {
        self.points.iter().find(|p| p.0 == tau).map(|p| p.1)
    }
}

/// Steady state, propagator and populations shared by correlators on one model.
pub struct StationaryProcess {
    pub propagator: Propagator,
    pub rho: DensityMatrix,
}

impl StationaryProcess {
    pub fn new(model: &LindbladModel) -> Result<Self> {
        let l = liouvillian_matrix(model);
        let rho = steady_state(&l)?;
        Ok(Self { propagator: Propagator::from_superoperator(l)?, rho })
    }

    pub fn population(&self, op: &Operator) -> Result<f64> {
        if op.layout() != self.rho.layout() {
            return Err(Error::LayoutMismatch);
        }
        let c = op.matrix();
        Ok(trace_product(self.rho.matrix(), &(linalg::adjoint(c) * c)).re)
    }

    /// Unnormalized `G(τ) = Tr[b†b e^{Lτ}(a ρ a†)]` for `τ ≥ 0`.
    pub fn ordered_correlation(&self, first: &Operator, second: &Operator, taus: &[f64]) -> Result<Vec<f64>> {
        let a = first.matrix();
        let b = second.matrix();
        let seed = a * self.rho.matrix() * linalg::adjoint(a);
        let w = trace_functional(&(linalg::adjoint(b) * b));
        Ok(self.propagator.functional_series(&w, &seed, taus)?.iter().map(|z| z.re).collect())
    }

    /// Normalized `g²(τ)` over a grid of either sign; negative delays use the
    /// exchanged operator order.
    pub fn g2_cross(&self, op1: &Operator, op2: &Operator, tau_grid: &[f64], direction: Direction) -> Result<CorrelationCurve> {
        let n1 = self.population(op1)?;
        let n2 = self.population(op2)?;
        for (n, label) in [(n1, "first"), (n2, "second")] {
            if !(n > MIN_POPULATION) {
                return Err(Error::UndefinedCorrelation(format!("{label} operator has steady-state population {n:.3e}")));
            }
        }
        let (early, late) = match direction {
            Direction::Forward => (op1, op2),
            Direction::Backward => (op2, op1),
        };
        let pos: Vec<f64> = tau_grid.iter().map(|t| t.abs()).collect();
        let fwd = self.ordered_correlation(early, late, &pos)?;
        let bwd = if tau_grid.iter().any(|&t| t < 0.0) {
            self.ordered_correlation(late, early, &pos)?
        } else {
            vec![0.0; pos.len()]
        };
        let norm = n1 * n2;
        let points = tau_grid
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, if t < 0.0 { bwd[i] } else { fwd[i] } / norm))
            .collect();
        Ok(CorrelationCurve { points, labels: (label_of(op1), label_of(op2)), populations: (n1, n2) })
    }
}

fn label_of(op: &Operator) -> String {
    op.layout().to_string()
}

/// Stationary `g²₁₂(τ)`; see [`StationaryProcess::g2_cross`].
pub fn g2_cross(
    model: &LindbladModel,
    op1: &Operator,
    op2: &Operator,
    tau_grid: &[f64],
    direction: Direction,
) -> Result<CorrelationCurve> {
    StationaryProcess::new(model)?.g2_cross(op1, op2, tau_grid, direction)
}

/// `⟨c†c†cc⟩ / ⟨c†c⟩²` in a given state.
pub fn g2_auto_zero_in(rho: &DensityMatrix, op: &Operator) -> Result<f64> {
    if op.layout() != rho.layout() {
        return Err(Error::LayoutMismatch);
    }
    let c = op.matrix();
    let cd = linalg::adjoint(c);
    let n = trace_product(rho.matrix(), &(&cd * c)).re;
    if !(n > MIN_POPULATION) {
        return Err(Error::UndefinedCorrelation(format!("population {n:.3e}")));
    }
    let g = trace_product(rho.matrix(), &(&cd * &cd * c * c)).re;
    Ok(g / (n * n))
}

/// Equal-time autocorrelation at steady state.
pub fn g2_auto_zero(model: &LindbladModel, op: &Operator) -> Result<f64> {
    g2_auto_zero_in(&steady_state(&liouvillian_matrix(model))?, op)
}

/// Uniform grid of `n` points over `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}
