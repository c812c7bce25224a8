//! Compressive recovery of the full channel from per-frame beamformed
//! estimates.
//!
//! Frame `m` observes `ǧ_m[k] = (vᵀ ⊗ U)·vec(H[k]) + noise` with `v = F_RF·q`
//! and `U = D_w^{-H}·W_RFᴴ`. Stacking frames gives `ǧ[k] = Φ·vec(H[k])`, and on
//! the angular grids `vec(H[k]) ≈ (Ã_T^* ⊗ Ã_R)·vec(G[k])` with a sparse `G[k]`
//! whose support is shared across subcarriers. SW-OMP recovers that support
//! greedily.

use num_complex::Complex64;

use crate::channel::AngularDictionary;
use crate::error::{dim, invalid, Error, Result};
use crate::linalg::{adjoint_mul_split, frobenius_sq, kron, split, CMat, CVec};

/// One frame's sensing vectors and its channel estimate.
#[derive(Debug, Clone)]
pub struct FrameMeasurement {
    /// `F_RF·q`, length `N_t`.
    pub tx: CVec,
    /// `D_w^{-H}·W_RFᴴ`, `L_r × N_r`.
    pub rx: CMat,
    /// `L_r × K` frequency-domain estimate.
    pub g_freq: CMat,
    /// Per-entry variance of `g_freq`.
    pub noise_var: f64,
}

#[derive(Debug, Clone)]
pub struct MeasurementModel {
    pub frames: Vec<FrameMeasurement>,
    /// `(M·L_r) × K` stacked estimates.
    pub estimates: CMat,
    pub n_t: usize,
    pub n_r: usize,
    pub k: usize,
}

pub fn build_measurement(frames: Vec<FrameMeasurement>) -> Result<MeasurementModel> {
    let first = frames.first().ok_or_else(|| dim("no frames"))?;
    let (n_t, n_r, k) = (first.tx.len(), first.rx.ncols(), first.g_freq.ncols());
    let mut rows = 0;
    for f in &frames {
        if f.tx.len() != n_t || f.rx.ncols() != n_r || f.g_freq.ncols() != k || f.g_freq.nrows() != f.rx.nrows() {
            return Err(dim("frame measurements have inconsistent shapes"));
        }
        rows += f.rx.nrows();
    }
    let mut estimates = CMat::zeros(rows, k);
    let mut r0 = 0;
    for f in &frames {
        estimates.rows_mut(r0, f.g_freq.nrows()).copy_from(&f.g_freq);
        r0 += f.g_freq.nrows();
    }
    Ok(MeasurementModel { frames, estimates, n_t, n_r, k })
}

impl MeasurementModel {
    pub fn rows(&self) -> usize {
        self.estimates.nrows()
    }

    /// Dense `Φ`, rows ordered frame by frame.
    pub fn phi(&self) -> CMat {
        let mut phi = CMat::zeros(self.rows(), self.n_t * self.n_r);
        let mut r0 = 0;
        for f in &self.frames {
            let block = kron(&CMat::from_row_slice(1, f.tx.len(), f.tx.as_slice()), &f.rx);
            phi.rows_mut(r0, block.nrows()).copy_from(&block);
            r0 += block.nrows();
        }
        phi
    }

    /// `Υ = Φ·(Ã_T^* ⊗ Ã_R)`; column `t·G_r + r` pairs transmit atom `t`
    /// with receive atom `r`.
    pub fn sensing_dictionary(&self, dict: &AngularDictionary) -> CMat {
        let (gt, gr) = (dict.transmit.size(), dict.receive.size());
        let mut ups = CMat::zeros(self.rows(), gt * gr);
        let mut r0 = 0;
        for f in &self.frames {
            let a = f.tx.transpose() * dict.transmit.matrix.map(|z| z.conj());
            let b = &f.rx * &dict.receive.matrix;
            for t in 0..gt {
                for r in 0..gr {
                    for i in 0..b.nrows() {
                        ups[(r0 + i, t * gr + r)] = a[(0, t)] * b[(i, r)];
                    }
                }
            }
            r0 += b.nrows();
        }
        ups
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwompConfig {
    pub max_iters: usize,
    /// Stop once the mean whitened residual power is at most this factor.
    pub threshold: f64,
}

impl Default for SwompConfig {
    fn default() -> Self {
        Self { max_iters: 16, threshold: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SparseChannelEstimate {
    /// `(receive atom, transmit atom)` pairs in selection order.
    pub support: Vec<(usize, usize)>,
    /// `|support| × K`.
    pub gains: CMat,
    pub h_hat: Vec<CMat>,
    /// Mean whitened residual power before the first and after every iteration.
    pub residual_power: Vec<f64>,
}

/// Least squares `Y ≈ A·X` through a thin QR; fails on a (numerically)
/// rank-deficient `A`.
pub(crate) fn qr_least_squares(a: &CMat, y: &CMat) -> Result<CMat> {
    let qr = a.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let scale = r.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if r.diagonal().iter().any(|z| z.norm() <= 1e-10 * scale) || scale == 0.0 {
        return Err(Error::Singular("restricted dictionary is rank deficient"));
    }
    let qy = q.adjoint() * y;
    r.solve_upper_triangular(&qy).ok_or(Error::Singular("restricted dictionary is rank deficient"))
}

/// Simultaneous weighted OMP with a support shared across subcarriers.
pub fn swomp(model: &MeasurementModel, dict: &AngularDictionary, cfg: &SwompConfig) -> Result<SparseChannelEstimate> {
    if dict.transmit.matrix.nrows() != model.n_t || dict.receive.matrix.nrows() != model.n_r {
        return Err(dim("dictionaries do not match the array sizes"));
    }
    if model.frames.iter().any(|f| !(f.noise_var > 0.0)) {
        return Err(invalid("noise variance must be positive"));
    }
    let (gt, gr, k) = (dict.transmit.size(), dict.receive.size(), model.k);
    // Υ[(m,i),(t,r)] = a_m[t]·b_m[i,r]; the frame whitening 1/σ_m is folded into a_m
    let mut a = CMat::zeros(model.frames.len(), gt);
    let mut b = Vec::with_capacity(model.frames.len());
    let mut y = model.estimates.clone();
    let mut r0 = 0;
    for (m, f) in model.frames.iter().enumerate() {
        let w = 1.0 / f.noise_var.sqrt();
        let row = f.tx.transpose() * dict.transmit.matrix.map(|z| z.conj()) * Complex64::new(w, 0.0);
        a.set_row(m, &row);
        b.push(&f.rx * &dict.receive.matrix);
        y.rows_mut(r0, f.rx.nrows()).scale_mut(w);
        r0 += f.rx.nrows();
    }
    let atom = |j: usize| -> CVec {
        let (t, r) = (j / gr, j % gr);
        let mut col = CVec::zeros(y.nrows());
        let mut r0 = 0;
        for (m, bm) in b.iter().enumerate() {
            for i in 0..bm.nrows() {
                col[r0 + i] = a[(m, t)] * bm[(i, r)];
            }
            r0 += bm.nrows();
        }
        col
    };
    // column norms, used to normalise scores: atoms are not equal-energy after
    // sensing and whitening, and the transmit sounding is rank deficient
    let b_norms: Vec<Vec<f64>> =
        b.iter().map(|bm| bm.column_iter().map(|c| c.norm_squared()).collect()).collect();
    let inv_norm: Vec<f64> = (0..gt * gr)
        .map(|j| {
            let (t, r) = (j / gr, j % gr);
            let e: f64 = (0..b.len()).map(|m| a[(m, t)].norm_sqr() * b_norms[m][r]).sum();
            1.0 / e.sqrt().max(f64::MIN_POSITIVE)
        })
        .collect();
    let (ar, ai) = split(&a);
    let entries = (y.nrows() * y.ncols()) as f64;
    let mut support: Vec<usize> = Vec::new();
    let mut columns: Vec<CVec> = Vec::new();
    let mut gains = CMat::zeros(0, k);
    let mut residual = y.clone();
    let mut history = vec![frobenius_sq(&residual) / entries];
    while support.len() < cfg.max_iters && support.len() < y.nrows() && *history.last().unwrap() > cfg.threshold {
        // receive side per frame: Z[m, (r,k)] = Σ_i conj(b_m[i,r])·res[(m,i),k]
        let mut z = CMat::zeros(b.len(), gr * k);
        let mut r0 = 0;
        for (m, bm) in b.iter().enumerate() {
            let zm = bm.ad_mul(&residual.rows(r0, bm.nrows()));
            for r in 0..gr {
                for kk in 0..k {
                    z[(m, r * k + kk)] = zm[(r, kk)];
                }
            }
            r0 += bm.nrows();
        }
        // transmit side across frames
        let (zr, zi) = split(&z);
        let corr = adjoint_mul_split(&ar, &ai, &zr, &zi);
        let score = |j: usize| {
            let (t, r) = (j / gr, j % gr);
            corr.row(t).columns(r * k, k).iter().map(|c| c.norm()).sum::<f64>() * inv_norm[j]
        };
        let next = (0..gt * gr)
            .filter(|j| !support.contains(j))
            .map(|j| (j, score(j)))
            .fold(None, |acc: Option<(usize, f64)>, (j, s)| match acc {
                Some((_, best)) if best >= s => acc,
                _ => Some((j, s)),
            });
        let Some((j, _)) = next else { break };
        support.push(j);
        columns.push(atom(j));
        let sub = CMat::from_columns(&columns);
        gains = qr_least_squares(&sub, &y)?;
        residual = &y - &sub * &gains;
        history.push(frobenius_sq(&residual) / entries);
    }
    let pairs: Vec<(usize, usize)> = support.iter().map(|&j| (j % gr, j / gr)).collect();
    let h_hat = reconstruct(&pairs, &gains, dict, model.k)?;
    Ok(SparseChannelEstimate { support: pairs, gains, h_hat, residual_power: history })
}

/// `Ĥ[k] = Σ_s gains[s,k]·ã_R(r_s)·ã_T(t_s)ᴴ`.
pub fn reconstruct(support: &[(usize, usize)], gains: &CMat, dict: &AngularDictionary, k: usize) -> Result<Vec<CMat>> {
    let (nr, nt) = (dict.receive.matrix.nrows(), dict.transmit.matrix.nrows());
    if gains.nrows() != support.len() || (!support.is_empty() && gains.ncols() != k) {
        return Err(dim("gain matrix does not match the support"));
    }
    let mut out = vec![CMat::zeros(nr, nt); k];
    for (s, &(r, t)) in support.iter().enumerate() {
        if r >= dict.receive.size() || t >= dict.transmit.size() {
            return Err(invalid(format!("atom ({r}, {t}) outside the grid")));
        }
        let outer = dict.receive.column(r) * dict.transmit.column(t).adjoint();
        for (kk, h) in out.iter_mut().enumerate() {
            *h += &outer * gains[(s, kk)];
        }
    }
    Ok(out)
}

/// Per-entry variance of a frame's frequency-domain estimate from the bound.
pub fn frame_noise_variance(bound: &crate::sync::CrlbBound) -> f64 {
    bound.mean_variance()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{frequency_response, generate_channel, on_grid_params, ArrayGeometry, PulseShape};
    use crate::link::whitening_from_combiner;
    use crate::rng::stream;
    use crate::training::{TrainingConfig, TrainingPlan};

    struct Desk {
        plan: TrainingPlan,
        dict: AngularDictionary,
        h: Vec<CMat>,
        truth: Vec<(usize, usize)>,
    }

    fn desk(paths: usize, k: usize, seed: u64) -> Desk {
        let cfg = TrainingConfig { n_t: 32, n_r: 16, l_t: 4, l_r: 4, k, l_c: 4, n_tr: 2, zc_root: 1, preamble_boost: 1.0 };
        let plan = TrainingPlan::new(cfg, 16, seed).unwrap();
        let (tx, rx) = (ArrayGeometry::ula(32).unwrap(), ArrayGeometry::ula(16).unwrap());
        let dict = AngularDictionary::new(&tx, 64, &rx, 32).unwrap();
        let pulse = PulseShape::new(0.25, 4, 1.0).unwrap();
        let params = on_grid_params(paths, &dict.transmit, &dict.receive, 4, 1.0, &mut stream(seed, &[7]));
        let chan = generate_channel(&params, &tx, &rx, &pulse, 4).unwrap();
        let h = frequency_response(&chan, k).unwrap();
        let sines = |grid: &crate::channel::DictionaryGrid, a: f64| {
            grid.sines.iter().position(|s| (s - a.sin()).abs() < 1e-9).unwrap()
        };
        let truth = params.aoa.iter().zip(&params.aod).map(|(&r, &t)| (sines(&dict.receive, r), sines(&dict.transmit, t))).collect();
        Desk { plan, dict, h, truth }
    }

    fn measure(d: &Desk, noise_var: f64) -> MeasurementModel {
        let frames = d
            .plan
            .frames
            .iter()
            .map(|f| {
                let rx = whitening_from_combiner(&f.combiner.w_rf).unwrap().inverse_adjoint().unwrap() * f.combiner.w_rf.adjoint();
                let tx = f.precoder.vector();
                let g_freq = CMat::from_fn(rx.nrows(), d.h.len(), |i, k| (rx.row(i) * &d.h[k] * &tx)[(0, 0)]);
                FrameMeasurement { tx, rx, g_freq, noise_var }
            })
            .collect();
        build_measurement(frames).unwrap()
    }

    fn nmse(a: &[CMat], b: &[CMat]) -> f64 {
        let e: f64 = a.iter().zip(b).map(|(x, y)| frobenius_sq(&(x - y))).sum();
        e / b.iter().map(frobenius_sq).sum::<f64>()
    }

    #[test]
    fn single_frame_row_is_kronecker_pattern() {
        let d = desk(1, 8, 1);
        let model = measure(&d, 1.0);
        let f = &model.frames[0];
        let phi = model.phi();
        assert_eq!(phi.nrows(), 16 * 4);
        // one-hot combiner: each row picks antenna p of the receive array with weight tx[n]
        let p = d.plan.frames[0].combiner.selected[0];
        for n in 0..32 {
            for r in 0..16 {
                let expected = if r == p { f.tx[n] * f.rx[(0, p)] } else { Complex64::new(0.0, 0.0) };
                assert!((phi[(0, n * 16 + r)] - expected).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn loopback_measurement_equals_phi_times_channel() {
        let d = desk(2, 8, 2);
        let model = measure(&d, 1.0);
        let phi = model.phi();
        for (k, h) in d.h.iter().enumerate() {
            let v = CVec::from_column_slice(h.as_slice());
            assert!((&phi * v - model.estimates.column(k)).norm() < 1e-10 * model.estimates.column(k).norm());
        }
        let ups = model.sensing_dictionary(&d.dict);
        assert_eq!(ups.shape(), (64, 64 * 32));
    }

    #[test]
    fn measurement_rejects_mismatched_frames() {
        assert!(build_measurement(Vec::new()).is_err());
        let d = desk(1, 8, 3);
        let mut frames = measure(&d, 1.0).frames;
        frames[1].g_freq = CMat::zeros(4, 3);
        assert!(build_measurement(frames).is_err());
    }

    #[test]
    fn one_sparse_noiseless_recovery() {
        for seed in 0..4 {
            let d = desk(1, 8, 10 + seed);
            let model = measure(&d, 1e-20);
            let est = swomp(&model, &d.dict, &SwompConfig::default()).unwrap();
            assert_eq!(est.support, d.truth);
            assert!(10.0 * nmse(&est.h_hat, &d.h).log10() <= -80.0);
        }
    }

    #[test]
    fn three_paths_match_oracle_least_squares() {
        let d = desk(3, 16, 5);
        let model = measure(&d, 1e-20);
        let est = swomp(&model, &d.dict, &SwompConfig::default()).unwrap();
        let mut got = est.support.clone();
        let mut want = d.truth.clone();
        got.sort();
        want.sort();
        assert_eq!(got, want);
        // oracle: dense pseudo-inverse on the true support
        let ups = model.sensing_dictionary(&d.dict);
        let cols: Vec<usize> = est.support.iter().map(|&(r, t)| t * 32 + r).collect();
        let sub = ups.select_columns(&cols);
        let oracle = (sub.adjoint() * &sub).try_inverse().unwrap() * sub.adjoint() * &model.estimates;
        assert!((&est.gains - &oracle).norm() <= 1e-8 * oracle.norm());
        for w in est.residual_power.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn zero_measurements_give_empty_support() {
        let d = desk(1, 8, 4);
        let mut model = measure(&d, 1.0);
        model.estimates.fill(Complex64::new(0.0, 0.0));
        let est = swomp(&model, &d.dict, &SwompConfig::default()).unwrap();
        assert!(est.support.is_empty());
        assert!(est.h_hat.iter().all(|h| frobenius_sq(h) == 0.0));
    }

    #[test]
    fn noisy_recovery_respects_limits() {
        let d = desk(3, 8, 6);
        let mut model = measure(&d, 1e-2);
        let mut rng = stream(1, &[]);
        for z in model.estimates.iter_mut() {
            *z += crate::rng::complex_normal(&mut rng, 1e-2);
        }
        let cfg = SwompConfig { max_iters: 5, threshold: 1.0 };
        let est = swomp(&model, &d.dict, &cfg).unwrap();
        assert!(est.support.len() <= 5);
        let mut unique = est.support.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), est.support.len());
        for w in est.residual_power.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn invalid_noise_variance_is_rejected() {
        let d = desk(1, 8, 7);
        let model = measure(&d, 0.0);
        assert!(swomp(&model, &d.dict, &SwompConfig::default()).is_err());
    }

    #[test]
    fn reconstruct_edge_cases() {
        let d = desk(1, 8, 8);
        let empty = reconstruct(&[], &CMat::zeros(0, 4), &d.dict, 4).unwrap();
        assert_eq!(empty.len(), 4);
        assert!(empty.iter().all(|h| frobenius_sq(h) == 0.0));
        let one = reconstruct(&[(3, 5)], &CMat::from_element(1, 2, Complex64::new(1.0, 0.0)), &d.dict, 2).unwrap();
        let outer = d.dict.receive.column(3) * d.dict.transmit.column(5).adjoint();
        assert!(frobenius_sq(&(&one[1] - outer)) < 1e-20);
        assert!(reconstruct(&[(32, 0)], &CMat::zeros(1, 2), &d.dict, 2).is_err());
    }
}
