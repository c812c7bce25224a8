//! Synchronization estimators: timing detection, CFO search, MAP phase-noise
//! estimation, beamformed-channel least squares, noise variance and the
//! channel-estimate Cramér-Rao bound.
//!
//! Only the `N_tr·K` useful samples of a frame (cyclic prefixes dropped) enter
//! the post-detection stages. Stacking them per RF chain gives
//!
//! ```text
//! y_i = P_θ · C(Δf) · g_i + v_i,     C = X[n0]·(I ⊗ E·F*)·S·(1 ⊗ F₁)
//! ```
//!
//! where `C[(t,n), d] = φ_t·e^{j2πΔf·n}·x_t[(n − d) mod K]` and `x_t` is the
//! useful part of the `t`-th OFDM training symbol.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{dim, invalid, Error, Result};
use crate::impairments::{pn_covariance_at, ridged_cholesky, PhaseNoiseModel};
use crate::linalg::{expj, CMat, CVec, RMat};
use crate::training::{FramePlan, PREAMBLE_LEN};

/// Sample layout of a training frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGeometry {
    pub k: usize,
    pub l_c: usize,
    pub n_tr: usize,
    pub preamble_len: usize,
}

impl FrameGeometry {
    pub fn new(k: usize, l_c: usize, n_tr: usize) -> Self {
        Self { k, l_c, n_tr, preamble_len: PREAMBLE_LEN }
    }

    pub fn useful_len(&self) -> usize {
        self.n_tr * self.k
    }

    pub fn frame_len(&self) -> usize {
        self.preamble_len + self.n_tr * (self.k + self.l_c)
    }

    /// Frame-relative index of useful sample `n` of symbol `t`.
    pub fn useful_index(&self, t: usize, n: usize) -> usize {
        self.preamble_len + self.l_c + t * (self.k + self.l_c) + n
    }

    /// Useful-sample positions relative to the first one.
    pub fn useful_positions(&self) -> Vec<usize> {
        (0..self.n_tr).flat_map(|t| (0..self.k).map(move |n| t * (self.k + self.l_c) + n)).collect()
    }
}

/// Pilot-side quantities of one frame needed by the estimators.
#[derive(Debug, Clone)]
pub struct FrameTraining {
    pub geometry: FrameGeometry,
    pub pilots: Vec<Vec<Complex64>>,
    pub time_symbols: Vec<Vec<Complex64>>,
    pub symbol_energy: f64,
}

impl FrameTraining {
    pub fn new(geometry: FrameGeometry, frame: &FramePlan) -> Result<Self> {
        if frame.pilots.len() != geometry.n_tr || frame.pilots.iter().any(|s| s.len() != geometry.k) {
            return Err(dim("pilot grid does not match the frame geometry"));
        }
        Ok(Self {
            geometry,
            pilots: frame.pilots.clone(),
            time_symbols: frame.time_symbols(),
            symbol_energy: frame.symbol_energy(),
        })
    }
}

/// Stacked useful samples per chain, starting at timing offset `n0`.
pub fn extract_useful(samples: &CMat, geometry: &FrameGeometry, n0: usize) -> Result<Vec<CVec>> {
    if geometry.n_tr == 0 {
        return Ok(vec![CVec::zeros(0); samples.nrows()]);
    }
    let last = n0 + geometry.useful_index(geometry.n_tr - 1, geometry.k - 1);
    if last >= samples.ncols() {
        return Err(dim(format!("frame has {} samples, index {} needed", samples.ncols(), last)));
    }
    Ok((0..samples.nrows())
        .map(|i| {
            CVec::from_iterator(
                geometry.useful_len(),
                (0..geometry.n_tr)
                    .flat_map(|t| (0..geometry.k).map(move |n| (t, n)))
                    .map(|(t, n)| samples[(i, n0 + geometry.useful_index(t, n))]),
            )
        })
        .collect())
}

/// Timing metric used by [`detect_timing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimingMetric {
    /// `Σ_i |Σ_n r_i[n0+n]·s*[n]|²`.
    #[default]
    MatchedFilter,
    /// `Σ_i Σ_n |r_i[n0+n]·s*[n]|²`, lag-invariant for unit-modulus preambles.
    PerSample,
}

/// Argmax of the preamble correlation metric over `window` (inclusive).
pub fn detect_timing(
    samples: &CMat,
    preamble: &[Complex64],
    window: (usize, usize),
    metric: TimingMetric,
) -> Result<usize> {
    let (lo, hi) = window;
    if lo > hi || hi + preamble.len() > samples.ncols() {
        return Err(invalid("timing search window exceeds the frame"));
    }
    let mut best = (lo, f64::NEG_INFINITY);
    for n0 in lo..=hi {
        let mut m = 0.0;
        for i in 0..samples.nrows() {
            match metric {
                TimingMetric::MatchedFilter => {
                    let c: Complex64 = preamble.iter().enumerate().map(|(n, s)| samples[(i, n0 + n)] * s.conj()).sum();
                    m += c.norm_sqr();
                }
                TimingMetric::PerSample => {
                    m += preamble.iter().enumerate().map(|(n, s)| (samples[(i, n0 + n)] * s.conj()).norm_sqr()).sum::<f64>();
                }
            }
        }
        if m > best.1 {
            best = (n0, m);
        }
    }
    Ok(best.0)
}

/// The structured transfer matrix and its diagonal constituents.
#[derive(Debug, Clone)]
pub struct StructuredTransfer {
    pub geometry: FrameGeometry,
    pub taps: usize,
    pub n0: usize,
    pub cfo: f64,
    /// `φ_t = e^{j2πΔf·(n0 + P + L_c + t(K+L_c))}`, the preamble length `P`
    /// included because the training symbols follow the preamble.
    pub symbol_phasors: Vec<Complex64>,
    /// `e^{jθ}` over the stacked useful samples.
    pub pn_phasors: Vec<Complex64>,
    /// `e^{j2πΔf·n}`, n = 0..K−1.
    pub cfo_phasors: Vec<Complex64>,
    /// Stacked pilot diagonal.
    pub pilots: Vec<Complex64>,
    pub matrix: CMat,
}

impl StructuredTransfer {
    /// `B = AᴴA`.
    pub fn gram(&self) -> CMat {
        self.matrix.adjoint() * &self.matrix
    }
}

pub fn build_transfer(training: &FrameTraining, taps: usize, n0: usize, cfo: f64, pn: &[f64]) -> Result<StructuredTransfer> {
    let g = training.geometry;
    if pn.len() != g.useful_len() {
        return Err(dim(format!("PN vector has length {}, expected {}", pn.len(), g.useful_len())));
    }
    if taps == 0 || taps > g.k {
        return Err(invalid("tap count must lie in 1..=K"));
    }
    let symbol_phasors: Vec<Complex64> =
        (0..g.n_tr).map(|t| expj(2.0 * PI * cfo * (n0 + g.useful_index(t, 0)) as f64)).collect();
    let cfo_phasors: Vec<Complex64> = (0..g.k).map(|n| expj(2.0 * PI * cfo * n as f64)).collect();
    let pn_phasors: Vec<Complex64> = pn.iter().map(|&p| expj(p)).collect();
    let pilots = training.pilots.iter().flatten().copied().collect();
    let k = g.k;
    let matrix = CMat::from_fn(g.useful_len(), taps, |row, d| {
        let (t, n) = (row / k, row % k);
        symbol_phasors[t] * pn_phasors[row] * cfo_phasors[n] * training.time_symbols[t][(n + k - d) % k]
    });
    Ok(StructuredTransfer { geometry: g, taps, n0, cfo, symbol_phasors, pn_phasors, cfo_phasors, pilots, matrix })
}

/// Scaled-adjoint least squares `ĝ_i = Aᴴ·y_i / (N_tr·E_s)` for every chain,
/// returned as a `D × L_r` matrix.
pub fn estimate_g(y: &[CVec], transfer: &StructuredTransfer, symbol_energy: f64) -> Result<CMat> {
    let scale = 1.0 / (transfer.geometry.n_tr as f64 * symbol_energy);
    let mut out = CMat::zeros(transfer.taps, y.len());
    for (i, yi) in y.iter().enumerate() {
        if yi.len() != transfer.matrix.nrows() {
            return Err(dim("received vector does not match the transfer matrix"));
        }
        out.set_column(i, &(transfer.matrix.ad_mul(yi) * Complex64::new(scale, 0.0)));
    }
    Ok(out)
}

/// `K × L_r` frequency response of a `D × L_r` tap matrix.
pub fn taps_to_freq(taps: &CMat, k: usize) -> CMat {
    let f = dft_rows(k, taps.nrows());
    f * taps
}

/// `F_D[k, d] = e^{−j2πkd/K}`.
fn dft_rows(k: usize, d: usize) -> CMat {
    CMat::from_fn(k, d, |kk, dd| expj(-2.0 * PI * ((kk * dd) % k) as f64 / k as f64))
}

/// Residual noise-variance estimate
/// `Σ_i ‖(I − A(AᴴA)⁻¹Aᴴ)·y_i‖² / (L_r·(N_tr·K − D))`.
pub fn estimate_noise_variance(y: &[CVec], a: &CMat) -> Result<f64> {
    let (rows, d) = a.shape();
    if rows <= d {
        return Err(invalid("need more stacked samples than taps"));
    }
    let chol = (a.adjoint() * a).cholesky().ok_or(Error::Singular("transfer matrix is rank deficient"))?;
    let mut acc = 0.0;
    for yi in y {
        let coef = chol.solve(&a.ad_mul(yi));
        acc += (yi - a * coef).norm_squared();
    }
    Ok(acc / (y.len() as f64 * (rows - d) as f64))
}

/// Covariance bound on the `K`-point frequency response `ǧ_i[k] = Σ_d g_i[d]·e^{−j2πkd/K}`
/// of every chain: `σ²·F_D·B⁻¹·F_Dᴴ` per chain, block-diagonal over chains.
#[derive(Debug, Clone)]
pub struct CrlbBound {
    pub per_chain: CMat,
    pub chains: usize,
}

impl CrlbBound {
    pub fn diagonal(&self) -> Vec<f64> {
        self.per_chain.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn dense(&self) -> CMat {
        crate::linalg::kron(&CMat::identity(self.chains, self.chains), &self.per_chain)
    }

    /// Average per-entry variance over subcarriers.
    pub fn mean_variance(&self) -> f64 {
        let d = self.diagonal();
        d.iter().sum::<f64>() / d.len() as f64
    }
}

pub fn crlb_beamformed(b: &CMat, sigma2: f64, k: usize, l_r: usize) -> Result<CrlbBound> {
    let binv = b.clone().cholesky().ok_or(Error::Singular("Gram matrix is singular"))?.inverse();
    let f = dft_rows(k, b.nrows());
    let per_chain = (&f * binv * f.adjoint()) * Complex64::new(sigma2, 0.0);
    Ok(CrlbBound { per_chain, chains: l_r })
}

/// Algebraic form of the linearized MAP phase-noise system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PnForm {
    /// Gauss-Newton step of the profiled posterior:
    /// `(Re{Σ_i Y_iᴴ(N_tr·E_s·I − CCᴴ)Y_i} + (σ²N_trE_s/2)·C_θ⁻¹)·θ = −Im{Z}·1`.
    #[default]
    Residual,
    /// `(Re{Z} + 2σ²N_trE_s·C_θ⁻¹)·θ = Im{Z}·1`.
    Literal,
}

/// Phase-noise prior over the useful samples of a frame, factorized once.
#[derive(Debug, Clone)]
pub struct PnPrior {
    pub covariance: RMat,
    chol: RMat,
    inverse: Option<RMat>,
}

impl PnPrior {
    /// `dense_limit`: dimension up to which the inverse is cached for direct solves.
    pub fn new(covariance: RMat, dense_limit: usize) -> Result<Self> {
        let chol = ridged_cholesky(&covariance)?.ok_or(Error::Singular("phase-noise prior is zero"))?;
        let inverse = if covariance.nrows() <= dense_limit {
            let mut m = covariance.clone();
            let r0 = covariance.diagonal().max();
            for i in 0..m.nrows() {
                m[(i, i)] += crate::impairments::COVARIANCE_RIDGE * r0;
            }
            Some(m.cholesky().ok_or(Error::NotPositiveDefinite("phase-noise prior"))?.inverse())
        } else {
            None
        };
        Ok(Self { covariance, chol, inverse })
    }

    pub fn for_frame(model: &PhaseNoiseModel, geometry: &FrameGeometry, ts: f64, dense_limit: usize) -> Result<Self> {
        Self::new(pn_covariance_at(model, &geometry.useful_positions(), ts).matrix, dense_limit)
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }
}

/// Default size above which the PN system is solved iteratively.
pub const DENSE_PN_LIMIT: usize = 1024;

/// Linearized MAP estimate of the phase noise over the stacked useful samples.
///
/// `c` is the PN-free transfer matrix for the current CFO estimate.
pub fn estimate_pn(
    y: &[CVec],
    c: &CMat,
    prior: &PnPrior,
    sigma2: f64,
    symbol_energy: f64,
    n_tr: usize,
    form: PnForm,
) -> Result<DVector<f64>> {
    let (n, d) = c.shape();
    if prior.dim() != n || y.iter().any(|yi| yi.len() != n) {
        return Err(dim("PN prior, transfer and samples disagree in length"));
    }
    let ne = n_tr as f64 * symbol_energy;
    // Q = [Y_iᴴ·C]_i split into real and imaginary parts, Re{QQᴴ} = R·Rᵀ
    let cols = d * y.len();
    let mut r = RMat::zeros(n, 2 * cols);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut power = DVector::<f64>::zeros(n);
    for (i, yi) in y.iter().enumerate() {
        let proj = c * c.ad_mul(yi);
        for row in 0..n {
            let yc = yi[row].conj();
            power[row] += yi[row].norm_sqr();
            rhs[row] += (yc * proj[row]).im;
            for col in 0..d {
                let q = yc * c[(row, col)];
                r[(row, i * d + col)] = q.re;
                r[(row, cols + i * d + col)] = q.im;
            }
        }
    }
    let (lambda, diag_scale, sign, rhs) = match form {
        PnForm::Residual => (sigma2 * ne / 2.0, ne, -1.0, -rhs),
        PnForm::Literal => (2.0 * sigma2 * ne, 0.0, 1.0, rhs),
    };
    let diag = power * diag_scale;
    match &prior.inverse {
        Some(cinv) => {
            let mut m = &r * r.transpose() * sign + cinv * lambda;
            for i in 0..n {
                m[(i, i)] += diag[i];
            }
            let chol = m.cholesky().ok_or(Error::Singular("phase-noise system is not positive definite"))?;
            Ok(chol.solve(&rhs))
        }
        None => solve_whitened_cg(&prior.chol, &r, sign, &diag, lambda, &rhs),
    }
}

/// Solve `(H + λ·C⁻¹)·θ = b` with `C = L·Lᵀ`, `H = diag + sign·R·Rᵀ`, by conjugate
/// gradients on `(Lᵀ·H·L + λ·I)·η = Lᵀ·b`, `θ = L·η`.
fn solve_whitened_cg(l: &RMat, r: &RMat, sign: f64, diag: &DVector<f64>, lambda: f64, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = b.len();
    let apply = |eta: &DVector<f64>| -> DVector<f64> {
        let u = l * eta;
        let mut h = diag.component_mul(&u);
        h += r * (r.tr_mul(&u)) * sign;
        l.tr_mul(&h) + eta * lambda
    };
    let rhs = l.tr_mul(b);
    let bnorm = rhs.norm();
    if bnorm == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let mut x = DVector::zeros(n);
    let mut res = rhs.clone();
    let mut p = res.clone();
    let mut rr = res.norm_squared();
    for _ in 0..n.max(10) {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::Singular("phase-noise system is not positive definite"));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        res.axpy(-alpha, &ap, 1.0);
        let rr_new = res.norm_squared();
        if rr_new.sqrt() <= 1e-10 * bnorm {
            break;
        }
        p = &res + &p * (rr_new / rr);
        rr = rr_new;
    }
    Ok(l * x)
}

/// CFO search settings: a symmetric grid of `points` over `±max_cfo` followed
/// by golden-section refinement to `tolerance` around the best grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfoSearch {
    pub max_cfo: f64,
    pub points: usize,
    pub tolerance: f64,
    pub refine: bool,
}

impl CfoSearch {
    pub fn new(max_cfo: f64) -> Self {
        Self { max_cfo, points: 129, tolerance: 1e-7, refine: true }
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.max_cfo == 0.0 || self.points <= 1 {
            return vec![0.0];
        }
        let m = (self.points - 1) as f64;
        (0..self.points).map(|i| -self.max_cfo + 2.0 * self.max_cfo * i as f64 / m).collect()
    }
}

/// Evaluates the CFO objective `Σ_i ‖C(Δf)ᴴ·(e^{−jθ̂} ⊙ y_i)‖²`.
pub struct CfoObjective<'a> {
    training: &'a FrameTraining,
    taps: usize,
    n0: usize,
    derotated: Vec<CVec>,
    conj_symbols: Vec<Vec<Complex64>>,
}

impl<'a> CfoObjective<'a> {
    pub fn new(y: &[CVec], training: &'a FrameTraining, taps: usize, n0: usize, pn: &[f64]) -> Result<Self> {
        let n = training.geometry.useful_len();
        if pn.len() != n || y.iter().any(|yi| yi.len() != n) {
            return Err(dim("samples or PN estimate do not match the frame"));
        }
        let derotated = y
            .iter()
            .map(|yi| CVec::from_fn(n, |row, _| yi[row] * expj(-pn[row])))
            .collect();
        let conj_symbols = training.time_symbols.iter().map(|s| s.iter().map(|z| z.conj()).collect()).collect();
        Ok(Self { training, taps, n0, derotated, conj_symbols })
    }

    pub fn eval(&self, cfo: f64) -> f64 {
        let g = self.training.geometry;
        let k = g.k;
        // e^{−j2πΔf(n0 + idx(t, n))} factored into a per-symbol and a per-sample phasor
        let within: Vec<Complex64> = (0..k).map(|n| expj(-2.0 * PI * cfo * n as f64)).collect();
        let start: Vec<Complex64> =
            (0..g.n_tr).map(|t| expj(-2.0 * PI * cfo * (self.n0 + g.useful_index(t, 0)) as f64)).collect();
        let mut total = 0.0;
        let mut w = vec![Complex64::new(0.0, 0.0); k];
        for yi in &self.derotated {
            let mut acc = vec![Complex64::new(0.0, 0.0); self.taps];
            for t in 0..g.n_tr {
                for n in 0..k {
                    w[n] = yi[t * k + n] * within[n] * start[t];
                }
                let xs = &self.conj_symbols[t];
                for (d, a) in acc.iter_mut().enumerate() {
                    // circular correlation split at the wrap point
                    let head: Complex64 = xs[k - d..].iter().zip(&w[..d]).map(|(x, v)| x * v).sum();
                    let tail: Complex64 = xs[..k - d].iter().zip(&w[d..]).map(|(x, v)| x * v).sum();
                    *a += head + tail;
                }
            }
            total += acc.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        total
    }
}

/// Maximize the CFO objective over `grid` (plus optional refinement).
pub fn estimate_cfo(objective: &CfoObjective, grid: &[f64], refine: Option<f64>) -> Result<f64> {
    if grid.is_empty() {
        return Err(invalid("empty CFO grid"));
    }
    let vals: Vec<f64> = grid.iter().map(|&f| objective.eval(f)).collect();
    let (bi, bv) = vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let best = grid[bi];
    let Some(tol) = refine else { return Ok(best) };
    if grid.len() < 2 {
        return Ok(best);
    }
    let lo = if bi > 0 { grid[bi - 1] } else { best - (grid[1] - grid[0]).abs() };
    let hi = if bi + 1 < grid.len() { grid[bi + 1] } else { best + (grid[1] - grid[0]).abs() };
    let x = golden_max(|f| objective.eval(f), lo, hi, tol);
    Ok(if objective.eval(x) > bv { x } else { best })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Settings of the per-frame synchronization pipeline.
#[derive(Debug, Clone)]
pub struct SyncConfig {
    pub geometry: FrameGeometry,
    pub taps: usize,
    pub n0_window: (usize, usize),
    pub cfo: CfoSearch,
    pub n_alt: usize,
    /// `None` disables phase-noise estimation (θ̂ ≡ 0).
    pub pn_prior: Option<Arc<PnPrior>>,
    pub pn_form: PnForm,
    pub timing_metric: TimingMetric,
    /// Use this noise variance instead of the residual estimate inside the PN solve.
    pub genie_sigma2: Option<f64>,
    /// Skip detection and use this timing offset.
    pub known_n0: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SyncEstimate {
    pub n0_hat: usize,
    pub cfo_hat: f64,
    pub pn_hat: DVector<f64>,
    /// `D × L_r`.
    pub g_hat_taps: CMat,
    /// `K × L_r`.
    pub g_hat_freq: CMat,
    pub sigma2_hat: f64,
    pub iterations: usize,
    /// `AᴴA` of the final transfer.
    pub gram: CMat,
}

/// Floor on the noise variance inside the PN solve, relative to the received
/// power; keeps the common-phase direction of the system regularized.
const SIGMA2_FLOOR: f64 = 1e-6;

/// Timing detection, alternating CFO / PN estimation, then channel least
/// squares and noise variance.
pub fn joint_sync(samples: &CMat, training: &FrameTraining, preamble: &[Complex64], cfg: &SyncConfig) -> Result<SyncEstimate> {
    let g = cfg.geometry;
    let n0 = match cfg.known_n0 {
        Some(n0) => n0,
        None => detect_timing(samples, preamble, cfg.n0_window, cfg.timing_metric)?,
    };
    let y = extract_useful(samples, &g, n0)?;
    let n = g.useful_len();
    let mut pn = DVector::<f64>::zeros(n);
    let mut cfo = 0.0;
    let zeros = vec![0.0; n];
    let refine = cfg.cfo.refine.then_some(cfg.cfo.tolerance);
    let grid = cfg.cfo.grid();
    let mean_power = y.iter().map(|v| v.norm_squared()).sum::<f64>() / (y.len() * n).max(1) as f64;
    let rounds = if cfg.pn_prior.is_some() { cfg.n_alt.max(1) } else { 1 };
    for _ in 0..rounds {
        let obj = CfoObjective::new(&y, training, cfg.taps, n0, pn.as_slice())?;
        cfo = estimate_cfo(&obj, &grid, refine)?;
        if let Some(prior) = &cfg.pn_prior {
            let c = build_transfer(training, cfg.taps, n0, cfo, &zeros)?.matrix;
            let s2 = match cfg.genie_sigma2 {
                Some(s) => s,
                None => {
                    let a = build_transfer(training, cfg.taps, n0, cfo, pn.as_slice())?;
                    estimate_noise_variance(&y, &a.matrix)?
                }
            };
            let s2 = s2.max(SIGMA2_FLOOR * mean_power);
            pn = estimate_pn(&y, &c, prior, s2, training.symbol_energy, g.n_tr, cfg.pn_form)?;
        }
    }
    let a = build_transfer(training, cfg.taps, n0, cfo, pn.as_slice())?;
    let g_hat_taps = estimate_g(&y, &a, training.symbol_energy)?;
    let sigma2_hat = estimate_noise_variance(&y, &a.matrix)?;
    Ok(SyncEstimate {
        n0_hat: n0,
        cfo_hat: cfo,
        pn_hat: pn,
        g_hat_freq: taps_to_freq(&g_hat_taps, g.k),
        g_hat_taps,
        sigma2_hat,
        iterations: rounds,
        gram: a.gram(),
    })
}
