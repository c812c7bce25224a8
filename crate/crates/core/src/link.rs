//! Link simulation: beamformed channels, noise whitening and the received
//! post-combining samples
//!
//! ```text
//! r[n] = e^{j(2πΔf·n + θ[n])} · Σ_d g[d]·s[n − d − n0] + v[n]
//! ```

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{dim, Error, Result};
use crate::impairments::ImpairmentRealization;
use crate::linalg::{expj, CMat, CVec};
use crate::rng::complex_normal;

/// Upper-triangular `D_w` with `W_RFᴴ·W_RF = D_wᴴ·D_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningFilter {
    pub factor: CMat,
}

impl WhiteningFilter {
    /// `D_w^{-H}`.
    pub fn inverse_adjoint(&self) -> Result<CMat> {
        self.factor.adjoint().try_inverse().ok_or(Error::Singular("whitening factor"))
    }
}

pub fn whitening_from_combiner(w_rf: &CMat) -> Result<WhiteningFilter> {
    let cw = w_rf.adjoint() * w_rf;
    let chol = cw.cholesky().ok_or(Error::Singular("combiner is rank deficient"))?;
    let factor = chol.l().adjoint();
    let scale = factor.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if factor.diagonal().iter().any(|z| z.norm() <= 1e-12 * scale) {
        return Err(Error::Singular("combiner is rank deficient"));
    }
    Ok(WhiteningFilter { factor })
}

/// Per-chain beamformed channel: `taps[d]` (length `L_r`) and its `K`-point
/// frequency response `freq` (`L_r × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformedChannel {
    pub taps: Vec<CVec>,
    pub freq: CMat,
}

impl BeamformedChannel {
    pub fn from_taps(taps: Vec<CVec>, k: usize) -> Self {
        let l_r = taps.first().map_or(0, |t| t.len());
        let freq = CMat::from_fn(l_r, k, |i, kk| {
            taps.iter()
                .enumerate()
                .map(|(d, t)| t[i] * expj(-2.0 * PI * ((kk * d) % k) as f64 / k as f64))
                .sum()
        });
        Self { taps, freq }
    }

    pub fn num_chains(&self) -> usize {
        self.freq.nrows()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_squared()).sum()
    }
}

/// `g[d] = D_w^{-H}·W_RFᴴ·H[d]·F_RF·q`.
pub fn beamformed_taps(
    taps: &[CMat],
    f_rf: &CMat,
    q: &CVec,
    w_rf: &CMat,
    whitener: &WhiteningFilter,
    k: usize,
) -> Result<BeamformedChannel> {
    let (nr, nt) = taps.first().map(|t| t.shape()).ok_or_else(|| dim("channel has no taps"))?;
    if f_rf.nrows() != nt || q.len() != f_rf.ncols() || w_rf.nrows() != nr || whitener.factor.nrows() != w_rf.ncols() {
        return Err(dim("precoder/combiner do not match the channel"));
    }
    let tx = f_rf * q;
    let rx = whitener.inverse_adjoint()? * w_rf.adjoint();
    let g = taps.iter().map(|h| &rx * (h * &tx)).collect();
    Ok(BeamformedChannel::from_taps(g, k))
}

/// Post-combining received frame with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub samples: CMat,
    pub truth: ImpairmentRealization,
    pub snr_db: f64,
}

/// Simulate `rx_len` received samples per chain.
pub fn simulate_rx<R: Rng + ?Sized>(
    tx: &[Complex64],
    g: &[CVec],
    imp: &ImpairmentRealization,
    sigma2: f64,
    rx_len: usize,
    rng: &mut R,
) -> Result<CMat> {
    let l_r = g.first().map(|t| t.len()).ok_or_else(|| dim("beamformed channel has no taps"))?;
    if imp.pn.len() < rx_len {
        return Err(dim(format!("PN covers {} samples, {} needed", imp.pn.len(), rx_len)));
    }
    let mut out = CMat::zeros(l_r, rx_len);
    for n in 0..rx_len {
        let rot = expj(2.0 * PI * imp.cfo * n as f64 + imp.pn[n]);
        for (d, gd) in g.iter().enumerate() {
            let Some(idx) = n.checked_sub(d + imp.n0) else { break };
            if idx >= tx.len() {
                continue;
            }
            let s = tx[idx] * rot;
            for i in 0..l_r {
                out[(i, n)] += gd[i] * s;
            }
        }
    }
    if sigma2 > 0.0 {
        for z in out.iter_mut() {
            *z += complex_normal(rng, sigma2);
        }
    }
    Ok(out)
}

/// `10·log10((Σ_d ‖g[d]‖² / L_r)·E_s / σ²)`.
pub fn snr_db(g: &[CVec], sigma2: f64, symbol_energy: f64) -> f64 {
    let l_r = g.first().map_or(1, |t| t.len()) as f64;
    let e: f64 = g.iter().map(|t| t.norm_squared()).sum();
    10.0 * (e / l_r * symbol_energy / sigma2).log10()
}

/// Noise variance producing the target SNR.
pub fn noise_variance_for_snr(g: &[CVec], snr_db: f64, symbol_energy: f64) -> f64 {
    let l_r = g.first().map_or(1, |t| t.len()) as f64;
    let e: f64 = g.iter().map(|t| t.norm_squared()).sum();
    e / l_r * symbol_energy / 10f64.powf(snr_db / 10.0)
}

/// Zero impairments over `len` samples.
pub fn no_impairments(len: usize) -> ImpairmentRealization {
    ImpairmentRealization { n0: 0, cfo: 0.0, pn: DVector::zeros(len) }
}

#[cfg(test)]
mod test {
    use super::*;
    use crate::rng::stream;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn whitening_examples() {
        let mut w = CMat::zeros(6, 2);
        w[(1, 0)] = c(1.0, 0.0);
        w[(4, 1)] = c(1.0, 0.0);
        assert!((whitening_from_combiner(&w).unwrap().factor - CMat::identity(2, 2)).norm() < 1e-15);
        let w2 = &w * c(2.0, 0.0);
        assert!((whitening_from_combiner(&w2).unwrap().factor - CMat::identity(2, 2) * c(2.0, 0.0)).norm() < 1e-14);
        let mut rng = stream(4, &[]);
        let w = CMat::from_fn(5, 3, |_, _| complex_normal(&mut rng, 1.0));
        let d = whitening_from_combiner(&w).unwrap().factor;
        assert!((d.adjoint() * &d - w.adjoint() * &w).norm() < 1e-12);
        assert!(d[(1, 0)].norm() == 0.0 && d[(2, 0)].norm() == 0.0 && d[(2, 1)].norm() == 0.0);
        let rank1 = CMat::from_fn(4, 2, |i, _| c(i as f64, 0.0));
        assert!(whitening_from_combiner(&rank1).is_err());
    }

    #[test]
    fn tone_and_passthrough() {
        let tx = vec![c(1.0, 0.0); 32];
        let g = vec![CVec::from_element(1, c(1.0, 0.0))];
        let mut imp = no_impairments(32);
        imp.cfo = 0.01;
        let r = simulate_rx(&tx, &g, &imp, 0.0, 32, &mut stream(0, &[])).unwrap();
        for n in 0..32 {
            assert!((r[(0, n)] - expj(2.0 * PI * 0.01 * n as f64)).norm() < 1e-12);
        }
        let g2 = vec![CVec::from_vec(vec![c(0.5, 1.0), c(-2.0, 0.0)])];
        let tx2: Vec<_> = (0..8).map(|i| c(i as f64, 1.0)).collect();
        let r = simulate_rx(&tx2, &g2, &no_impairments(8), 0.0, 8, &mut stream(0, &[])).unwrap();
        for n in 0..8 {
            assert!((r[(0, n)] - g2[0][0] * tx2[n]).norm() < 1e-12);
            assert!((r[(1, n)] - g2[0][1] * tx2[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn snr_definition() {
        let g = vec![CVec::from_element(1, c(1.0, 0.0))];
        assert!(snr_db(&g, 1.0, 1.0).abs() < 1e-12);
        assert!((snr_db(&g, 0.5, 1.0) - 3.0103).abs() < 1e-4);
        let g = vec![CVec::from_vec(vec![c(1.0, 2.0), c(0.0, 1.0)]), CVec::from_vec(vec![c(3.0, 0.0), c(0.0, 0.0)])];
        let want = 10.0 * ((5.0 + 1.0 + 9.0) / 2.0 * 2.0 / 0.3f64).log10();
        assert!((snr_db(&g, 0.3, 2.0) - want).abs() < 1e-12);
        let s2 = noise_variance_for_snr(&g, 7.0, 2.0);
        assert!((snr_db(&g, s2, 2.0) - 7.0).abs() < 1e-12);
    }
}
