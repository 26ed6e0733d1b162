//! Monte Carlo wavefunction unraveling with exact waiting times, per-channel
//! click records and conditional counting statistics.
//!
//! Between jumps the state follows `i ∂ₜψ = H_eff ψ` with
//! `H_eff = H − (i/2) Σ rate_k c_k†c_k`. A jump fires when `‖ψ‖²` falls to a
//! uniform threshold drawn right after the previous jump; the crossing time is
//! located by safeguarded Newton iteration on the closed-form norm in the
//! eigenbasis of `H_eff`, so waiting times do not depend on a step size.

use std::sync::Arc;

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::linalg::{self, ZERO};
use crate::modelkit::LindbladModel;
use crate::opalg::{SpaceLayout, StateVector};

/// `H_eff` eigenbases worse conditioned than this fall back to exponential stepping.
pub const MAX_HEFF_CONDITION: f64 = 1e8;
/// Default transient discarded before counting.
pub const DEFAULT_BURN_IN: f64 = 10.0;
/// Trajectories per deterministic work unit.
pub const CHUNK: usize = 128;

const MAX_ROOT_ITERATIONS: usize = 200;
/// Relative accuracy of jump times.
const JUMP_TIME_RTOL: f64 = 1e-11;

/// Per-trajectory seed: splitmix64 of `master + (index + 1)·φ`, where φ is
/// the 64-bit golden-ratio increment.
pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Click {
    pub t: f64,
    /// Index into the model's channel list.
    pub channel: u16,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub duration: f64,
    pub clicks: Vec<Click>,
    labels: Arc<Vec<String>>,
}

#[derive(Serialize)]
struct ClickLine<'a> {
    t: f64,
    channel: &'a str,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    seed: u64,
    clicks: Vec<ClickLine<'a>>,
}

impl TrajectoryRecord {
    pub fn label(&self, click: &Click) -> &str {
        &self.labels[click.channel as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn channel_index(&self, label: &str) -> Result<u16> {
        channel_index(&self.labels, label)
    }

    /// Click times on one channel, ascending.
    pub fn times(&self, channel: u16) -> Vec<f64> {
        self.clicks.iter().filter(|c| c.channel == channel).map(|c| c.t).collect()
    }

    /// `{"seed":…,"clicks":[{"t":…,"channel":"…"}]}` on one line.
    pub fn to_json_line(&self) -> String {
        let line = RecordLine {
            seed: self.seed,
            clicks: self.clicks.iter().map(|c| ClickLine { t: c.t, channel: self.label(c) }).collect(),
        };
        serde_json::to_string(&line).expect("record serializes")
    }
}

fn channel_index(labels: &[String], label: &str) -> Result<u16> {
    labels
        .iter()
        .position(|l| l == label)
        .map(|i| i as u16)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))
}

/// Nonzero entries `(row, col, value)` of a collapse operator.
struct SparseOp(Vec<(usize, usize, c64)>);

impl SparseOp {
    fn new(m: &Mat<c64>) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != ZERO {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self(entries)
    }

    fn apply(&self, v: &[c64]) -> Vec<c64> {
        let mut out = vec![ZERO; v.len()];
        for &(i, j, x) in &self.0 {
            out[i] += x * v[j];
        }
        out
    }
}

/// Dense square matrix in column-major order.
struct Dense {
    dim: usize,
    data: Vec<c64>,
}

impl Dense {
    fn new(m: &Mat<c64>) -> Self {
        let dim = m.nrows();
        Self { dim, data: (0..dim * dim).map(|k| m[(k % dim, k / dim)]).collect() }
    }

    fn apply(&self, v: &[c64]) -> Vec<c64> {
        let mut out = vec![ZERO; self.dim];
        for (col, &x) in self.data.chunks_exact(self.dim).zip(v) {
            if x == ZERO {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(col) {
                *o += m * x;
            }
        }
        out
    }
}

struct HeffEigen {
    mu: Vec<c64>,
    v: Dense,
    v_inv: Dense,
    /// `(V†V, V†ΓV)` elementwise in column-major order, with
    /// `Γ = Σ rate_k c_k†c_k`.
    grams: Vec<(c64, c64)>,
}

/// Pre-processed model for repeated trajectories.
pub struct McwfEngine {
    layout: Arc<SpaceLayout>,
    labels: Arc<Vec<String>>,
    /// `(channel index, √rate · c)` for channels with positive rate.
    jumps: Vec<(u16, SparseOp)>,
    heff: Mat<c64>,
    eig: Option<HeffEigen>,
    step: f64,
    step_map: Mat<c64>,
}

enum Segment {
    Jump { s: f64, psi: Vec<c64> },
    End { psi: Vec<c64> },
}

impl McwfEngine {
    pub fn new(model: &LindbladModel) -> Result<Self> {
        if model.channels().is_empty() {
            return Err(Error::InvalidParameter("trajectories need at least one channel".into()));
        }
        if model.channels().len() > u16::MAX as usize {
            return Err(Error::InvalidParameter("too many channels".into()));
        }
        let d = model.layout().dim();
        let labels: Arc<Vec<String>> = Arc::new(model.channel_labels().map(String::from).collect());
        let mut jumps = Vec::new();
        let mut decay = Mat::<c64>::zeros(d, d);
        for (k, ch) in model.channels().iter().enumerate() {
            if ch.rate > 0.0 {
                let j = ch.collapse.matrix() * faer::Scale(linalg::real(ch.rate.sqrt()));
                decay = decay + linalg::adjoint(&j) * &j;
                jumps.push((k as u16, SparseOp::new(&j)));
            }
        }
        let heff = model.hamiltonian().matrix() - &decay * faer::Scale(c64::new(0.0, 0.5));
        let eig = heff_eigen(&heff, &decay)?;
        if eig.is_none() {
            log::info!("H_eff eigenbasis ill-conditioned; trajectories use exponential stepping");
        }
        let scale = heff
            .col_iter()
            .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
            .max(1e-3);
        let step = (0.5 / scale).min(0.5);
        let step_map = propagator(&heff, step)?;
        Ok(Self { layout: model.layout().clone(), labels, jumps, heff, eig, step, step_map })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn channel_index(&self, label: &str) -> Result<u16> {
        channel_index(&self.labels, label)
    }

    pub fn uses_eigenbasis(&self) -> bool {
        self.eig.is_some()
    }

    /// `‖e^{−iH_eff s} ψ‖²`.
    pub fn norm_after(&self, psi: &StateVector, s: f64) -> Result<f64> {
        let e = propagator(&self.heff, s)?;
        let v = apply(&e, psi.amplitudes());
        Ok(norm_sqr(&v))
    }

    /// One trajectory; also returns the normalized final state.
    pub fn run_with_state(&self, psi0: &StateVector, duration: f64, seed: u64) -> Result<(TrajectoryRecord, StateVector)> {
        if psi0.layout() != &self.layout {
            return Err(Error::LayoutMismatch);
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("trajectory duration {duration}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut psi = psi0.amplitudes().to_vec();
        normalize(&mut psi, 0.0)?;
        let mut t = 0.0;
        let mut clicks = Vec::new();
        loop {
            let u = open_unit(&mut rng);
            match self.segment(&psi, u, duration - t, t)? {
                Segment::End { psi: mut end } => {
                    normalize(&mut end, duration)?;
                    psi = end;
                    break;
                }
                Segment::Jump { s, psi: pre } => {
                    let when = t + s;
                    if clicks.last().is_some_and(|c: &Click| when <= c.t) || !(s > 0.0) {
                        return Err(Error::StepUnderflow { time: when, reason: "jump times failed to advance".into() });
                    }
                    t = when;
                    let (channel, mut post) = self.jump(&pre, &mut rng, t)?;
                    normalize(&mut post, t)?;
                    psi = post;
                    clicks.push(Click { t, channel });
                }
            }
        }
        let record = TrajectoryRecord { seed, duration, clicks, labels: self.labels.clone() };
        Ok((record, StateVector::new(self.layout.clone(), psi)?))
    }

    pub fn run(&self, psi0: &StateVector, duration: f64, seed: u64) -> Result<TrajectoryRecord> {
        Ok(self.run_with_state(psi0, duration, seed)?.0)
    }

    fn jump(&self, psi: &[c64], rng: &mut ChaCha8Rng, t: f64) -> Result<(u16, Vec<c64>)> {
        let candidates: Vec<(u16, Vec<c64>, f64)> = self
            .jumps
            .iter()
            .map(|(k, j)| {
                let out = j.apply(psi);
                let w = norm_sqr(&out);
                (*k, out, w)
            })
            .collect();
        let total: f64 = candidates.iter().map(|c| c.2).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::StepUnderflow { time: t, reason: "no channel can fire at the jump time".into() });
        }
        let mut x = rng.random::<f64>() * total;
        let last = candidates.iter().rposition(|c| c.2 > 0.0).expect("total > 0");
        for (i, (k, out, w)) in candidates.into_iter().enumerate() {
            if x < w || i == last {
                return Ok((k, out));
            }
            x -= w;
        }
        unreachable!("channel selection always returns")
    }

    fn segment(&self, psi: &[c64], u: f64, remaining: f64, t0: f64) -> Result<Segment> {
        match &self.eig {
            Some(e) => {
                // N'(0) = −Σ_k ‖J_k ψ‖²
                let rate: f64 = self.jumps.iter().map(|(_, j)| norm_sqr(&j.apply(psi))).sum();
                segment_eigen(e, psi, -rate, u, remaining, t0)
            }
            None => self.segment_stepping(psi, u, remaining, t0),
        }
    }

    fn segment_stepping(&self, psi: &[c64], u: f64, remaining: f64, t0: f64) -> Result<Segment> {
        let mut s = 0.0;
        let mut cur = psi.to_vec();
        loop {
            let h = self.step.min(remaining - s);
            if h <= 0.0 {
                return Ok(Segment::End { psi: cur });
            }
            let next = if h == self.step { apply(&self.step_map, &cur) } else { apply(&propagator(&self.heff, h)?, &cur) };
            if norm_sqr(&next) > u {
                s += h;
                cur = next;
                continue;
            }
            // Bisection for the crossing inside this step.
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..MAX_ROOT_ITERATIONS {
                let mid = 0.5 * (lo + hi);
                let trial = apply(&propagator(&self.heff, mid)?, &cur);
                if norm_sqr(&trial) > u {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-13 * (s + hi).max(1.0) {
                    let psi = apply(&propagator(&self.heff, hi)?, &cur);
                    return Ok(Segment::Jump { s: s + hi, psi });
                }
            }
            return Err(Error::StepUnderflow { time: t0 + s, reason: "bisection for the jump time did not converge".into() });
        }
    }
}

fn heff_eigen(heff: &Mat<c64>, decay: &Mat<c64>) -> Result<Option<HeffEigen>> {
    let evd = heff.eigen().map_err(|e| Error::Numerical(format!("H_eff eigendecomposition: {e:?}")))?;
    let d = heff.nrows();
    let s = evd.S().column_vector();
    let mu: Vec<c64> = (0..d).map(|k| s[k]).collect();
    let v = evd.U().to_owned();
    let v_inv = linalg::inverse(&v);
    let condition = linalg::frobenius(&v) * linalg::frobenius(&v_inv);
    if !condition.is_finite() || condition > MAX_HEFF_CONDITION {
        return Ok(None);
    }
    let diag = Mat::from_fn(d, d, |i, j| if i == j { mu[i] } else { ZERO });
    let rebuilt = &v * diag * &v_inv;
    let scale = linalg::max_abs(heff).max(1.0);
    if linalg::max_abs_diff(&rebuilt, heff) > 1e-10 * scale {
        return Ok(None);
    }
    let vd = linalg::adjoint(&v);
    let gram = &vd * &v;
    let decay_gram = &vd * decay * &v;
    let grams = (0..d * d).map(|k| (gram[(k % d, k / d)], decay_gram[(k % d, k / d)])).collect();
    Ok(Some(HeffEigen { mu, v: Dense::new(&v), v_inv: Dense::new(&v_inv), grams }))
}

/// `(‖ψ(s)‖², d‖ψ(s)‖²/ds)` for `ψ(s) = V diag(e^{−iμs}) f`.
fn norm_and_slope(e: &HeffEigen, f: &[c64], s: f64, g: &mut [c64]) -> (f64, f64) {
    for k in 0..f.len() {
        g[k] = f[k] * (e.mu[k] * c64::new(0.0, -s)).exp();
    }
    // Both Gram matrices are Hermitian: diagonal plus twice the real part of
    // the strict upper triangle.
    let (mut n, mut dn) = (0.0, 0.0);
    let d = f.len();
    for (j, col) in e.grams.chunks_exact(d).enumerate() {
        let mut gn = ZERO;
        let mut gd = ZERO;
        for (&(gij, dij), gi) in col[..j].iter().zip(g.iter()) {
            let c = gi.conj();
            gn += gij * c;
            gd += dij * c;
        }
        let gj = g[j];
        let (gjj, djj) = col[j];
        n += gjj.re * gj.norm_sqr() + 2.0 * (gn * gj).re;
        dn += djj.re * gj.norm_sqr() + 2.0 * (gd * gj).re;
    }
    (n, -dn)
}

fn segment_eigen(e: &HeffEigen, psi: &[c64], slope0: f64, u: f64, remaining: f64, t0: f64) -> Result<Segment> {
    let f = e.v_inv.apply(psi);
    let mut g = vec![ZERO; f.len()];
    let (n_end, _) = norm_and_slope(e, &f, remaining, &mut g);
    if n_end > u {
        return Ok(Segment::End { psi: e.v.apply(&g) });
    }
    // Root of N(s) − u on [0, remaining]; N is non-increasing. Newton runs
    // on ln N, which is close to linear when one decay rate dominates.
    let n0 = norm_sqr(psi);
    let (mut lo, mut hi) = (0.0, remaining);
    let mut s = if slope0 < 0.0 { ((n0 / u).ln() * n0 / -slope0).min(remaining) } else { 0.5 * remaining };
    if !(s > 0.0) {
        s = 0.5 * remaining;
    }
    // Newton steps must at least halve the step before last, else bisect.
    let (mut dx, mut dx_old) = (remaining, remaining);
    for _ in 0..MAX_ROOT_ITERATIONS {
        let (n, dn) = norm_and_slope(e, &f, s, &mut g);
        let fval = n - u;
        if fval > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let tol = JUMP_TIME_RTOL * s.max(1.0);
        if fval.abs() <= 1e-15 || hi - lo <= tol {
            return Ok(Segment::Jump { s, psi: e.v.apply(&g) });
        }
        let newton = if dn < 0.0 && n > 0.0 { s - (n / u).ln() * n / dn } else { f64::NAN };
        let accept = newton > lo && newton < hi && (newton - s).abs() <= 0.5 * dx_old.abs();
        let next = if accept { newton } else { 0.5 * (lo + hi) };
        dx_old = dx;
        dx = next - s;
        if (next - s).abs() <= tol {
            let (_, _) = norm_and_slope(e, &f, next, &mut g);
            return Ok(Segment::Jump { s: next, psi: e.v.apply(&g) });
        }
        s = next;
    }
    Err(Error::StepUnderflow { time: t0 + s, reason: "Newton search for the jump time did not converge".into() })
}

fn propagator(heff: &Mat<c64>, s: f64) -> Result<Mat<c64>> {
    linalg::expm(&(heff * faer::Scale(c64::new(0.0, -s))))
}

fn apply(m: &Mat<c64>, v: &[c64]) -> Vec<c64> {
    let n = m.nrows();
    let mut out = vec![ZERO; n];
    for (j, &x) in v.iter().enumerate() {
        if x == ZERO {
            continue;
        }
        let col = m.col(j);
        for i in 0..n {
            out[i] += col[i] * x;
        }
    }
    out
}

fn norm_sqr(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn normalize(v: &mut [c64], t: f64) -> Result<()> {
    let n = norm_sqr(v).sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::StepUnderflow { time: t, reason: format!("state norm {n}") });
    }
    for z in v.iter_mut() {
        *z /= n;
    }
    Ok(())
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            return x;
        }
    }
}

/// Streaming consumer of trajectory records. Merging must be associative so
/// chunked parallel runs reduce to the same value as a sequential pass.
pub trait TrajectorySink: Clone + Send + Sync {
    fn observe(&mut self, record: &TrajectoryRecord) -> Result<()>;
    fn merge(&mut self, other: Self);
}

impl TrajectorySink for Vec<TrajectoryRecord> {
    fn observe(&mut self, record: &TrajectoryRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
    fn merge(&mut self, other: Self) {
        self.extend(other);
    }
}

impl<A: TrajectorySink, B: TrajectorySink> TrajectorySink for (A, B) {
    fn observe(&mut self, record: &TrajectoryRecord) -> Result<()> {
        self.0.observe(record)?;
        self.1.observe(record)
    }
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

/// Runs `count` trajectories with seeds derived from `master_seed` and folds
/// them into a copy of `proto`. Work is split into fixed chunks of [`CHUNK`]
/// trajectories and reduced in index order, so the result does not depend on
/// the parallelism mode.
pub fn run_ensemble<S: TrajectorySink>(
    engine: &McwfEngine,
    psi0: &StateVector,
    duration: f64,
    master_seed: u64,
    count: usize,
    par: Parallelism,
    proto: &S,
) -> Result<S> {
    if count == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one trajectory".into()));
    }
    let chunks = count.div_ceil(CHUNK);
    let parts = par.map(chunks, |c| -> Result<S> {
        let mut sink = proto.clone();
        for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
            let rec = engine.run(psi0, duration, trajectory_seed(master_seed, i as u64))?;
            sink.observe(&rec)?;
        }
        Ok(sink)
    });
    let mut acc = proto.clone();
    for part in parts {
        acc.merge(part?);
    }
    Ok(acc)
}

/// Elementwise mean of `|ψ(t)⟩⟨ψ(t)|` over `count` trajectories and its
/// standard error (real and imaginary parts separately).
pub fn ensemble_density(
    engine: &McwfEngine,
    psi0: &StateVector,
    t: f64,
    master_seed: u64,
    count: usize,
    par: Parallelism,
) -> Result<(Mat<c64>, Mat<c64>)> {
    if count < 2 {
        return Err(Error::InvalidParameter("need at least two trajectories for an error estimate".into()));
    }
    let d = psi0.layout().dim();
    let chunks = count.div_ceil(CHUNK);
    let parts = par.map(chunks, |c| -> Result<(Mat<c64>, Mat<c64>)> {
        let mut sum = Mat::<c64>::zeros(d, d);
        let mut sq = Mat::<c64>::zeros(d, d);
        for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
            let (_, psi) = engine.run_with_state(psi0, t, trajectory_seed(master_seed, i as u64))?;
            let a = psi.amplitudes();
            for j in 0..d {
                for k in 0..d {
                    let z = a[j] * a[k].conj();
                    sum[(j, k)] += z;
                    sq[(j, k)] += c64::new(z.re * z.re, z.im * z.im);
                }
            }
        }
        Ok((sum, sq))
    });
    let mut sum = Mat::<c64>::zeros(d, d);
    let mut sq = Mat::<c64>::zeros(d, d);
    for p in parts {
        let (s, q) = p?;
        sum = sum + s;
        sq = sq + q;
    }
    let n = count as f64;
    let mean = &sum * faer::Scale(linalg::real(1.0 / n));
    let se = Mat::from_fn(d, d, |j, k| {
        let m = mean[(j, k)];
        let var_re = (sq[(j, k)].re / n - m.re * m.re).max(0.0) * n / (n - 1.0);
        let var_im = (sq[(j, k)].im / n - m.im * m.im).max(0.0) * n / (n - 1.0);
        c64::new((var_re / n).sqrt(), (var_im / n).sqrt())
    });
    Ok((mean, se))
}

/// Number of signal clicks seen in a window after a herald.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PhotonCount {
    Zero,
    One,
    TwoPlus,
}

impl PhotonCount {
    fn index(self) -> usize {
        self as usize
    }
}

/// Conditional counting statistics `p(n, τ)`: for each herald click after
/// the burn-in whose longest window fits inside the trajectory, the number of
/// signal clicks in `(t, t + τ]`.
#[derive(Clone, Debug)]
pub struct ClickStats {
    pub herald: String,
    pub signal: String,
    pub taus: Vec<f64>,
    pub burn_in: f64,
    /// `counts[τ index][0 | 1 | 2+]`
    pub counts: Vec<[u64; 3]>,
    pub heralds: u64,
    herald_idx: u16,
    signal_idx: u16,
}

impl ClickStats {
    pub fn new(labels: &[String], herald: &str, signal: &str, taus: &[f64], burn_in: f64) -> Result<Self> {
        if taus.is_empty() || taus.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidParameter("window grid must be non-empty and non-negative".into()));
        }
        Ok(Self {
            herald: herald.into(),
            signal: signal.into(),
            taus: taus.to_vec(),
            burn_in,
            counts: vec![[0; 3]; taus.len()],
            heralds: 0,
            herald_idx: channel_index(labels, herald)?,
            signal_idx: channel_index(labels, signal)?,
        })
    }

    pub fn probability(&self, n: PhotonCount, tau_index: usize) -> f64 {
        self.counts[tau_index][n.index()] as f64 / self.heralds as f64
    }

    /// Errors when no herald was counted.
    pub fn ensure_heralds(&self) -> Result<()> {
        if self.heralds == 0 {
            return Err(Error::InsufficientStatistics(format!("no `{}` heralds after burn-in", self.herald)));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_gamma,p0,p1,p2plus,heralds\n");
        for (i, t) in self.taus.iter().enumerate() {
            out.push_str(&format!(
                "{t},{},{},{},{}\n",
                self.probability(PhotonCount::Zero, i),
                self.probability(PhotonCount::One, i),
                self.probability(PhotonCount::TwoPlus, i),
                self.heralds
            ));
        }
        out
    }
}

impl TrajectorySink for ClickStats {
    fn observe(&mut self, rec: &TrajectoryRecord) -> Result<()> {
        let signal = rec.times(self.signal_idx);
        let longest = self.taus.iter().cloned().fold(0.0, f64::max);
        for c in rec.clicks.iter().filter(|c| c.channel == self.herald_idx) {
            if c.t < self.burn_in || c.t + longest > rec.duration {
                continue;
            }
            self.heralds += 1;
            let start = signal.partition_point(|&s| s <= c.t);
            for (i, &tau) in self.taus.iter().enumerate() {
                let end = signal.partition_point(|&s| s <= c.t + tau);
                self.counts[i][(end - start).min(2)] += 1;
            }
        }
        Ok(())
    }

    fn merge(&mut self, other: Self) {
        self.heralds += other.heralds;
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }
}

/// [`ClickStats`] over stored records; fails when no herald survives the burn-in.
pub fn click_statistics(
    records: &[TrajectoryRecord],
    herald: &str,
    signal: &str,
    tau_grid: &[f64],
    burn_in: f64,
) -> Result<ClickStats> {
    let first = records.first().ok_or_else(|| Error::InsufficientStatistics("no trajectories".into()))?;
    let mut stats = ClickStats::new(first.labels(), herald, signal, tau_grid, burn_in)?;
    for r in records {
        stats.observe(r)?;
    }
    stats.ensure_heralds()?;
    Ok(stats)
}

/// Ratio `p(n, τ, Δ) / p(n, τ, 0)`; bins where the denominator vanishes are
/// reported as NaN and flagged.
#[derive(Clone, Debug, Serialize)]
pub struct RatioCurve {
    pub taus: Vec<f64>,
    pub ratio: Vec<f64>,
    /// One-sigma error from binomial counting noise on both probabilities.
    pub stderr: Vec<f64>,
    pub undefined: Vec<bool>,
}

impl RatioCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_gamma,r,stderr,flags\n");
        for i in 0..self.taus.len() {
            let flag = if self.undefined[i] { "undefined" } else { "" };
            out.push_str(&format!("{},{},{},{flag}\n", self.taus[i], self.ratio[i], self.stderr[i]));
        }
        out
    }
}

pub fn heralding_ratio(detuned: &ClickStats, resonant: &ClickStats, n: PhotonCount) -> Result<RatioCurve> {
    if detuned.taus != resonant.taus {
        return Err(Error::InvalidParameter("ratio needs identical window grids".into()));
    }
    detuned.ensure_heralds()?;
    resonant.ensure_heralds()?;
    let mut out = RatioCurve { taus: detuned.taus.clone(), ratio: vec![], stderr: vec![], undefined: vec![] };
    for i in 0..detuned.taus.len() {
        let p1 = detuned.probability(n, i);
        let p0 = resonant.probability(n, i);
        if p0 == 0.0 {
            out.ratio.push(f64::NAN);
            out.stderr.push(f64::NAN);
            out.undefined.push(true);
            continue;
        }
        let r = p1 / p0;
        let rel1 = if p1 > 0.0 { (1.0 - p1) / (p1 * detuned.heralds as f64) } else { 0.0 };
        let rel0 = (1.0 - p0) / (p0 * resonant.heralds as f64);
        out.ratio.push(r);
        out.stderr.push(r * (rel1 + rel0).sqrt());
        out.undefined.push(false);
    }
    Ok(out)
}

/// Histogram of signal-minus-herald delays in `[−T, T)`, for heralds whose
/// whole window lies after the burn-in and inside the trajectory.
#[derive(Clone, Debug)]
pub struct DelayHistogram {
    pub half_range: f64,
    pub bins: usize,
    pub counts: Vec<u64>,
    pub heralds: u64,
    pub burn_in: f64,
    herald_idx: u16,
    signal_idx: u16,
}

/// One histogram bin normalized as a `g²` estimate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DelayBin {
    pub lo: f64,
    pub hi: f64,
    pub g2: f64,
    pub stderr: f64,
    pub count: u64,
}

impl DelayHistogram {
    pub fn new(labels: &[String], herald: &str, signal: &str, half_range: f64, bins: usize, burn_in: f64) -> Result<Self> {
        if !(half_range > 0.0) || bins == 0 {
            return Err(Error::InvalidParameter("delay histogram needs a positive range and bins".into()));
        }
        Ok(Self {
            half_range,
            bins,
            counts: vec![0; bins],
            heralds: 0,
            burn_in,
            herald_idx: channel_index(labels, herald)?,
            signal_idx: channel_index(labels, signal)?,
        })
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_range / self.bins as f64
    }

    /// `g²` per bin given the stationary signal click rate; Poisson errors.
    pub fn normalized(&self, signal_rate: f64) -> Result<Vec<DelayBin>> {
        if self.heralds == 0 {
            return Err(Error::InsufficientStatistics("no heralds in delay histogram".into()));
        }
        let w = self.width();
        let norm = self.heralds as f64 * signal_rate * w;
        Ok(self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let lo = -self.half_range + i as f64 * w;
                DelayBin { lo, hi: lo + w, g2: c as f64 / norm, stderr: (c as f64).sqrt().max(1.0) / norm, count: c }
            })
            .collect())
    }
}

impl TrajectorySink for DelayHistogram {
    fn observe(&mut self, rec: &TrajectoryRecord) -> Result<()> {
        let signal = rec.times(self.signal_idx);
        let w = self.width();
        for c in rec.clicks.iter().filter(|c| c.channel == self.herald_idx) {
            if c.t - self.half_range < self.burn_in || c.t + self.half_range > rec.duration {
                continue;
            }
            self.heralds += 1;
            let start = signal.partition_point(|&s| s < c.t - self.half_range);
            for &s in &signal[start..] {
                let delay = s - c.t;
                if delay >= self.half_range {
                    break;
                }
                if self.herald_idx == self.signal_idx && s == c.t {
                    continue;
                }
                let bin = (((delay + self.half_range) / w) as usize).min(self.bins - 1);
                self.counts[bin] += 1;
            }
        }
        Ok(())
    }

    fn merge(&mut self, other: Self) {
        self.heralds += other.heralds;
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }
}

/// Click counts per channel after the burn-in, with per-trajectory spread.
#[derive(Clone, Debug)]
pub struct ChannelCounts {
    pub burn_in: f64,
    pub sums: Vec<u64>,
    pub squares: Vec<u64>,
    pub trajectories: u64,
    pub observed_time: f64,
}

impl ChannelCounts {
    pub fn new(channels: usize, burn_in: f64) -> Self {
        Self { burn_in, sums: vec![0; channels], squares: vec![0; channels], trajectories: 0, observed_time: 0.0 }
    }

    /// `(rate, standard error)` of channel `k`.
    pub fn rate(&self, k: usize) -> (f64, f64) {
        let n = self.trajectories as f64;
        let per_traj = self.observed_time / n;
        let mean = self.sums[k] as f64 / n;
        let var = (self.squares[k] as f64 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        (mean / per_traj, (var / n).sqrt() / per_traj)
    }
}

impl TrajectorySink for ChannelCounts {
    fn observe(&mut self, rec: &TrajectoryRecord) -> Result<()> {
        let mut local = vec![0u64; self.sums.len()];
        for c in rec.clicks.iter().filter(|c| c.t >= self.burn_in) {
            local[c.channel as usize] += 1;
        }
        for (k, n) in local.into_iter().enumerate() {
            self.sums[k] += n;
            self.squares[k] += n * n;
        }
        self.trajectories += 1;
        self.observed_time += (rec.duration - self.burn_in).max(0.0);
        Ok(())
    }

    fn merge(&mut self, other: Self) {
        for k in 0..self.sums.len() {
            self.sums[k] += other.sums[k];
            self.squares[k] += other.squares[k];
        }
        self.trajectories += other.trajectories;
        self.observed_time += other.observed_time;
    }
}
