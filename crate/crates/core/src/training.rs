//! Training design: Zadoff-Chu analog precoders, antenna-selection
//! combiners, QPSK spatial modulation, Golay preamble and OFDM pilot frames.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::linalg::{expj, CMat, CVec, RMat};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct ZcSequence {
    pub length: usize,
    pub root: i64,
    pub values: Vec<Complex64>,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `exp(−jπ·u·n(n+1)/N)` for odd `N`, `exp(−jπ·u·n²/N)` for even `N`.
pub fn zadoff_chu(n: usize, u: i64) -> Result<ZcSequence> {
    if n == 0 || gcd(n as u64, u.unsigned_abs()) != 1 {
        return Err(Error::NotCoprime(n, u));
    }
    let odd = n % 2 == 1;
    let values = (0..n as i64)
        .map(|i| {
            // reduce the exponent modulo 2N exactly in integers
            let e = if odd { u * i * (i + 1) } else { u * i * i };
            let e = e.rem_euclid(2 * n as i64);
            expj(-PI * e as f64 / n as f64)
        })
        .collect();
    Ok(ZcSequence { length: n, root: u, values })
}

/// Complementary Golay pair of length 64 with the transmit power boost.
#[derive(Debug, Clone, PartialEq)]
pub struct GolayPreamble {
    pub ga: Vec<f64>,
    pub gb: Vec<f64>,
    pub power_boost: f64,
}

impl GolayPreamble {
    pub fn len(&self) -> usize {
        self.ga.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ga.is_empty()
    }

    /// Ga64 as complex samples scaled to the given per-sample power.
    pub fn samples(&self, power: f64) -> Vec<Complex64> {
        let a = power.sqrt();
        self.ga.iter().map(|&x| Complex64::new(a * x, 0.0)).collect()
    }
}

/// 6 dB preamble boost.
pub const PREAMBLE_BOOST_DB: f64 = 6.0;

fn golay_pair(delays: &[usize], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![1.0];
    let mut b = vec![1.0];
    for (&d, &w) in delays.iter().zip(weights) {
        let n = a.len() + d;
        let (mut na, mut nb) = (vec![0.0; n], vec![0.0; n]);
        for i in 0..a.len() {
            na[i] += w * a[i];
            nb[i] += w * a[i];
        }
        for i in 0..b.len() {
            na[i + d] += b[i];
            nb[i + d] -= b[i];
        }
        a = na;
        b = nb;
    }
    (a, b)
}

/// Ga64/Gb64 built by the standard delay/weight recursion.
pub fn golay_preamble() -> GolayPreamble {
    let (ga, gb) = golay_pair(&[2, 1, 4, 8, 16, 32], &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0]);
    GolayPreamble { ga, gb, power_boost: 10f64.powf(PREAMBLE_BOOST_DB / 10.0) }
}

/// `P` with `(P·x)[i] = x[(i − shift) mod L]`.
pub fn permutation_matrix(l: usize, shift: i64) -> RMat {
    let s = shift.rem_euclid(l.max(1) as i64) as usize;
    RMat::from_fn(l, l, |i, j| if (i + l - s) % l == j { 1.0 } else { 0.0 })
}

fn cyclic_shift(x: &[Complex64], shift: usize) -> Vec<Complex64> {
    let l = x.len();
    (0..l).map(|i| x[(i + l - shift % l) % l]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub l_t: usize,
    pub l_r: usize,
    pub k: usize,
    pub l_c: usize,
    pub n_tr: usize,
    pub zc_root: i64,
    pub preamble_boost: f64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_t == 0 || self.l_r == 0 || self.n_t % self.l_t != 0 || self.n_r % self.l_r != 0 {
            return Err(invalid("antenna counts must be divisible by RF-chain counts"));
        }
        if self.k == 0 || self.l_c > self.k {
            return Err(invalid("need K ≥ 1 and cyclic prefix no longer than K"));
        }
        Ok(())
    }

    pub fn tx_subarray(&self) -> usize {
        self.n_t / self.l_t
    }

    pub fn rx_subarray(&self) -> usize {
        self.n_r / self.l_r
    }

    pub fn symbol_len(&self) -> usize {
        self.k + self.l_c
    }

    pub fn frame_len(&self) -> usize {
        PREAMBLE_LEN + self.n_tr * self.symbol_len()
    }
}

pub const PREAMBLE_LEN: usize = 64;

/// Energy-normalized QPSK symbol for index 0..3.
pub fn qpsk(index: u8, scale: f64) -> Complex64 {
    let re = if index & 1 == 0 { 1.0 } else { -1.0 };
    let im = if index & 2 == 0 { 1.0 } else { -1.0 };
    Complex64::new(re, im) * (FRAC_1_SQRT_2 * scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub f_rf: CMat,
    pub q: CVec,
    pub q_index: Vec<u8>,
    pub active: usize,
}

impl Precoder {
    /// Effective transmit vector `F_RF·q`.
    pub fn vector(&self) -> CVec {
        &self.f_rf * &self.q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Combiner {
    pub w_rf: CMat,
    pub selected: Vec<usize>,
}

fn precoder_from(m: usize, cfg: &TrainingConfig, q_index: Vec<u8>) -> Result<Precoder> {
    let kt = cfg.tx_subarray();
    let zc = zadoff_chu(kt, cfg.zc_root)?;
    let active = active_subarray(m, cfg.l_t);
    let f = cyclic_shift(&zc.values, m % cfg.l_t);
    let mut f_rf = CMat::zeros(cfg.n_t, cfg.l_t);
    for (i, v) in f.into_iter().enumerate() {
        f_rf[(active * kt + i, active)] = v;
    }
    let scale = 1.0 / (cfg.l_t as f64).sqrt();
    let q = CVec::from_iterator(cfg.l_t, q_index.iter().map(|&i| qpsk(i, scale)));
    Ok(Precoder { f_rf, q, q_index, active })
}

/// Transmit subarray sounded in frame `m`: `⌊m/L_t⌋ mod L_t`.
///
/// Each subarray stays active for `L_t` consecutive frames while the ZC shift
/// `m mod L_t` cycles, so every subarray is sounded with `L_t` mutually
/// orthogonal shifted sequences.
pub fn active_subarray(m: usize, l_t: usize) -> usize {
    (m / l_t) % l_t
}

/// Precoder for frame `m`: the ZC sequence cyclically shifted by `m mod L_t`
/// on subarray [`active_subarray`], other subarrays off; QPSK `q` drawn from
/// `seed`.
pub fn design_precoder(m: usize, cfg: &TrainingConfig, seed: u64) -> Result<Precoder> {
    cfg.validate()?;
    let mut rng = stream(seed, &[0x71, m as u64]);
    let q_index = (0..cfg.l_t).map(|_| rng.random_range(0..4u8)).collect();
    precoder_from(m, cfg, q_index)
}

fn combiner_from(cfg: &TrainingConfig, selected: Vec<usize>) -> Combiner {
    let kr = cfg.rx_subarray();
    let mut w_rf = CMat::zeros(cfg.n_r, cfg.l_r);
    for (i, &p) in selected.iter().enumerate() {
        w_rf[(i * kr + p, i)] = Complex64::new(1.0, 0.0);
    }
    Combiner { w_rf, selected }
}

/// One-hot antenna selection per receive subarray, uniform per frame.
pub fn design_combiner(m: usize, cfg: &TrainingConfig, seed: u64) -> Result<Combiner> {
    cfg.validate()?;
    let mut rng = stream(seed, &[0x77, m as u64]);
    let kr = cfg.rx_subarray();
    let selected = (0..cfg.l_r).map(|_| rng.random_range(0..kr)).collect();
    Ok(combiner_from(cfg, selected))
}

/// Time-domain OFDM symbol: `x[n] = (1/K)·Σ_k s[k]·e^{j2πkn/K}` with the
/// trailing `L_c` samples prepended as cyclic prefix.
pub fn ofdm_modulate(pilots: &[Complex64], l_c: usize) -> Vec<Complex64> {
    let useful = idft_scaled(pilots);
    let k = useful.len();
    let mut out = Vec::with_capacity(k + l_c);
    out.extend_from_slice(&useful[k - l_c..]);
    out.extend_from_slice(&useful);
    out
}

pub(crate) fn idft_scaled(x: &[Complex64]) -> Vec<Complex64> {
    let k = x.len();
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_inverse(k).process(&mut buf);
    let s = 1.0 / k as f64;
    buf.iter_mut().for_each(|z| *z *= s);
    buf
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub index: usize,
    pub precoder: Precoder,
    pub combiner: Combiner,
    /// `pilots[t][k]`, unit modulus.
    pub pilots: Vec<Vec<Complex64>>,
}

impl FramePlan {
    pub fn symbol_energy(&self) -> f64 {
        self.pilots.first().and_then(|s| s.first()).map_or(1.0, |z| z.norm_sqr())
    }

    /// Useful (cyclic-prefix free) time-domain part of each training symbol.
    pub fn time_symbols(&self) -> Vec<Vec<Complex64>> {
        self.pilots.iter().map(|s| idft_scaled(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPlan {
    pub config: TrainingConfig,
    pub seed: u64,
    pub pilot_seed: u64,
    pub preamble: GolayPreamble,
    pub frames: Vec<FramePlan>,
}

fn pilots_for(cfg: &TrainingConfig, pilot_seed: u64, m: usize) -> Vec<Vec<Complex64>> {
    let mut rng = stream(pilot_seed, &[0x70, m as u64]);
    (0..cfg.n_tr).map(|_| (0..cfg.k).map(|_| qpsk(rng.random_range(0..4u8), 1.0)).collect()).collect()
}

impl TrainingPlan {
    pub fn new(config: TrainingConfig, num_frames: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let pilot_seed = crate::rng::derive_seed(seed, &[0x50]);
        let frames = (0..num_frames)
            .map(|m| {
                Ok(FramePlan {
                    index: m,
                    precoder: design_precoder(m, &config, seed)?,
                    combiner: design_combiner(m, &config, seed)?,
                    pilots: pilots_for(&config, pilot_seed, m),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut preamble = golay_preamble();
        preamble.power_boost = config.preamble_boost;
        Ok(Self { config, seed, pilot_seed, preamble, frames })
    }

    /// Rebuild a plan from its stored per-frame choices.
    pub fn from_parts(
        config: TrainingConfig,
        seed: u64,
        pilot_seed: u64,
        parts: Vec<(Vec<u8>, Vec<usize>)>,
    ) -> Result<Self> {
        config.validate()?;
        let frames = parts
            .into_iter()
            .enumerate()
            .map(|(m, (q_index, selected))| {
                if q_index.len() != config.l_t || selected.len() != config.l_r {
                    return Err(crate::error::dim("stored frame does not match the configuration"));
                }
                if selected.iter().any(|&p| p >= config.rx_subarray()) || q_index.iter().any(|&q| q > 3) {
                    return Err(invalid("stored frame index out of range"));
                }
                Ok(FramePlan {
                    index: m,
                    precoder: precoder_from(m, &config, q_index)?,
                    combiner: combiner_from(&config, selected),
                    pilots: pilots_for(&config, pilot_seed, m),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut preamble = golay_preamble();
        preamble.power_boost = config.preamble_boost;
        Ok(Self { config, seed, pilot_seed, preamble, frames })
    }
}

/// `[boosted Golay preamble | N_tr cyclic-prefixed OFDM symbols]`.
///
/// The preamble power is `boost` times the average OFDM sample power `E_s/K`.
pub fn assemble_frame(plan: &TrainingPlan, m: usize) -> Vec<Complex64> {
    let cfg = &plan.config;
    let frame = &plan.frames[m];
    let es = frame.symbol_energy();
    let mut out = plan.preamble.samples(plan.preamble.power_boost * es / cfg.k as f64);
    for s in &frame.pilots {
        out.extend(ofdm_modulate(s, cfg.l_c));
    }
    out
}
