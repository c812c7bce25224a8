//! Timing offset, carrier frequency offset and oscillator phase noise.
//!
//! Phase noise is a zero-mean Gaussian process with PSD
//! `G·(1 + (f/fz)²)/(1 + (f/fp)²)` and autocorrelation
//!
//! ```text
//! R(τ) = G·[ (fp²/fz²)·δ[τ] + π·fp·(1 − fp²/fz²)·exp(−2π·fp·|τ|) ]
//! ```
//!
//! where `δ` is a Kronecker delta on the sampling lattice (a white floor).

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::linalg::RMat;
use crate::rng::{normal, stream};

/// Relative diagonal ridge applied before factorizing PN covariances.
pub const COVARIANCE_RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseNoiseModel {
    g_theta_dbc: f64,
    f_z: f64,
    f_p: f64,
}

impl PhaseNoiseModel {
    pub fn new(g_theta_dbc: f64, f_z: f64, f_p: f64) -> Result<Self> {
        if !(f_z > f_p && f_p > 0.0) {
            return Err(invalid("phase-noise model needs f_z > f_p > 0"));
        }
        Ok(Self { g_theta_dbc, f_z, f_p })
    }

    /// −85 dBc/Hz, 100 MHz zero, 1 MHz pole.
    pub fn reference() -> Self {
        Self { g_theta_dbc: -85.0, f_z: 100e6, f_p: 1e6 }
    }

    pub fn with_level(&self, g_theta_dbc: f64) -> Self {
        Self { g_theta_dbc, ..*self }
    }

    pub fn g_theta_dbc(&self) -> f64 {
        self.g_theta_dbc
    }

    pub fn f_z(&self) -> f64 {
        self.f_z
    }

    pub fn f_p(&self) -> f64 {
        self.f_p
    }

    pub fn g_linear(&self) -> f64 {
        10f64.powf(self.g_theta_dbc / 10.0)
    }

    pub fn psd(&self, f: f64) -> f64 {
        self.g_linear() * (1.0 + (f / self.f_z).powi(2)) / (1.0 + (f / self.f_p).powi(2))
    }

    pub fn autocorrelation(&self, tau: f64) -> f64 {
        let r = (self.f_p / self.f_z).powi(2);
        let floor = if tau == 0.0 { r } else { 0.0 };
        self.g_linear() * (floor + PI * self.f_p * (1.0 - r) * (-2.0 * PI * self.f_p * tau.abs()).exp())
    }

    /// Autocorrelation at integer lag `k` for sampling interval `ts`.
    pub fn autocorrelation_lag(&self, k: usize, ts: f64) -> f64 {
        self.autocorrelation(k as f64 * ts)
    }
}

pub fn pn_psd(model: &PhaseNoiseModel, f: f64) -> f64 {
    model.psd(f)
}

pub fn pn_autocorrelation(model: &PhaseNoiseModel, tau: f64) -> f64 {
    model.autocorrelation(tau)
}

/// Toeplitz PN covariance, radians².
#[derive(Debug, Clone, PartialEq)]
pub struct PnCovariance {
    pub matrix: RMat,
    pub sampling_interval: f64,
}

impl PnCovariance {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn pn_covariance(model: &PhaseNoiseModel, n: usize, ts: f64) -> PnCovariance {
    let r: Vec<f64> = (0..n).map(|k| model.autocorrelation_lag(k, ts)).collect();
    PnCovariance { matrix: DMatrix::from_fn(n, n, |i, j| r[i.abs_diff(j)]), sampling_interval: ts }
}

/// Covariance of the PN samples at arbitrary lattice positions.
pub fn pn_covariance_at(model: &PhaseNoiseModel, positions: &[usize], ts: f64) -> PnCovariance {
    let n = positions.len();
    let max = positions.iter().copied().max().unwrap_or(0) + 1;
    let r: Vec<f64> = (0..max).map(|k| model.autocorrelation_lag(k, ts)).collect();
    PnCovariance {
        matrix: DMatrix::from_fn(n, n, |i, j| r[positions[i].abs_diff(positions[j])]),
        sampling_interval: ts,
    }
}

/// Lower Cholesky factor of `cov + ridge·R(0)·I`. `None` for an all-zero
/// covariance.
pub(crate) fn ridged_cholesky(cov: &RMat) -> Result<Option<RMat>> {
    let r0 = cov.diagonal().max();
    if cov.iter().all(|&x| x == 0.0) {
        return Ok(None);
    }
    let mut m = cov.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += COVARIANCE_RIDGE * r0;
    }
    m.cholesky()
        .map(|c| Some(c.l()))
        .ok_or(Error::NotPositiveDefinite("phase-noise covariance"))
}

/// Gaussian sampler holding a factorized covariance; draws are `L·z`.
#[derive(Debug, Clone)]
pub struct PhaseNoiseSampler {
    dim: usize,
    factor: Option<RMat>,
}

impl PhaseNoiseSampler {
    pub fn new(cov: &PnCovariance) -> Result<Self> {
        Ok(Self { dim: cov.dim(), factor: ridged_cholesky(&cov.matrix)? })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match &self.factor {
            None => DVector::zeros(self.dim),
            Some(l) => {
                let z = DVector::from_fn(self.dim, |_, _| normal(rng));
                l * z
            }
        }
    }
}

pub fn sample_phase_noise(cov: &PnCovariance, seed: u64) -> Result<DVector<f64>> {
    let sampler = PhaseNoiseSampler::new(cov)?;
    Ok(sampler.sample(&mut stream(seed, &[])))
}

/// Two independent stationary traces with autocorrelation `acf[0..n]` by
/// circulant embedding. Fails if the embedding is not nonnegative definite.
pub fn sample_stationary_pair<R: Rng + ?Sized>(acf: &[f64], rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = acf.len();
    if n < 2 {
        return Err(invalid("circulant embedding needs at least two lags"));
    }
    let m = 2 * (n - 1);
    let mut c: Vec<num_complex::Complex64> = (0..m)
        .map(|i| num_complex::Complex64::new(if i < n { acf[i] } else { acf[m - i] }, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut c);
    let tol = 1e-10 * c[0].re.abs().max(1e-300);
    if c.iter().any(|l| l.re < -tol) {
        return Err(Error::NotPositiveDefinite("circulant embedding"));
    }
    let mut w: Vec<num_complex::Complex64> = c
        .iter()
        .map(|l| {
            let s = (l.re.max(0.0) / m as f64).sqrt();
            num_complex::Complex64::new(s * normal(rng), s * normal(rng))
        })
        .collect();
    planner.plan_fft_forward(m).process(&mut w);
    Ok((w[..n].iter().map(|z| z.re).collect(), w[..n].iter().map(|z| z.im).collect()))
}

/// Configuration of the per-frame impairment draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpairmentConfig {
    pub sample_rate: f64,
    /// Maximum CFO magnitude in Hz.
    pub max_cfo_hz: f64,
    /// Inclusive timing-offset range in samples.
    pub n0_min: usize,
    pub n0_max: usize,
    pub phase_noise: Option<PhaseNoiseModel>,
}

impl ImpairmentConfig {
    pub fn max_cfo(&self) -> f64 {
        self.max_cfo_hz / self.sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(invalid("sample rate must be positive"));
        }
        if !(self.max_cfo_hz >= 0.0 && self.max_cfo_hz < self.sample_rate / 2.0) {
            return Err(invalid("CFO bound must be below half the sampling rate"));
        }
        if self.n0_min > self.n0_max {
            return Err(invalid("empty timing-offset range"));
        }
        Ok(())
    }
}

/// One frame's timing offset, normalized CFO and PN trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpairmentRealization {
    pub n0: usize,
    pub cfo: f64,
    pub pn: DVector<f64>,
}

/// Draws impairment realizations for frames of a fixed length, caching the
/// PN covariance factor.
#[derive(Debug, Clone)]
pub struct ImpairmentSource {
    config: ImpairmentConfig,
    frame_len: usize,
    sampler: Option<PhaseNoiseSampler>,
}

impl ImpairmentSource {
    pub fn new(config: ImpairmentConfig, frame_len: usize) -> Result<Self> {
        config.validate()?;
        let sampler = match &config.phase_noise {
            Some(m) => Some(PhaseNoiseSampler::new(&pn_covariance(m, frame_len, 1.0 / config.sample_rate))?),
            None => None,
        };
        Ok(Self { config, frame_len, sampler })
    }

    pub fn config(&self) -> &ImpairmentConfig {
        &self.config
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ImpairmentRealization {
        let n0 = rng.random_range(self.config.n0_min..=self.config.n0_max);
        let fd = self.config.max_cfo();
        let cfo = if fd > 0.0 { (2.0 * rng.random::<f64>() - 1.0) * fd } else { 0.0 };
        let pn = match &self.sampler {
            Some(s) => s.sample(rng),
            None => DVector::zeros(self.frame_len),
        };
        ImpairmentRealization { n0, cfo, pn }
    }
}

pub fn draw_impairments(config: &ImpairmentConfig, frame_len: usize, seed: u64) -> Result<ImpairmentRealization> {
    let source = ImpairmentSource::new(config.clone(), frame_len)?;
    Ok(source.draw(&mut stream(seed, &[])))
}

/// Two-column CSV `f_hz,psd` of the PN spectrum.
pub fn write_psd_csv<W: Write>(model: &PhaseNoiseModel, freqs: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "f_hz,psd")?;
    for &f in freqs {
        writeln!(out, "{},{}", f, model.psd(f))?;
    }
    Ok(())
}

/// Two-column CSV `tau_s,autocorrelation` at integer lags.
pub fn write_autocorrelation_csv<W: Write>(model: &PhaseNoiseModel, lags: usize, ts: f64, mut out: W) -> Result<()> {
    writeln!(out, "tau_s,autocorrelation")?;
    for k in 0..lags {
        writeln!(out, "{},{}", k as f64 * ts, model.autocorrelation_lag(k, ts))?;
    }
    Ok(())
}

/// Sampling rate implied by 81920 samples spanning 42 µs.
pub const REFERENCE_SAMPLE_RATE: f64 = 81920.0 / 42e-6;
