//! Clustered frequency-selective MIMO channels.
//!
//! Delay taps follow the clustered model
//!
//! ```text
//! H[d] = sqrt(Nr·Nt / (ρ·Σ_c R_c)) · Σ_{c,r} α_{c,r} · p(d·Ts − τ_{c,r}) · a_R(φ_{c,r}) · a_T(θ_{c,r})ᴴ
//! ```
//!
//! with a raised-cosine pulse `p` and uniform-linear-array steering vectors.
//! [`ClusterGenerator`] draws the ray parameters synthetically.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{dim, invalid, Result};
use crate::linalg::{expj, CMat, CVec};
use crate::rng::complex_normal;

/// Uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    num_antennas: usize,
    element_spacing: f64,
}

impl ArrayGeometry {
    pub fn new(num_antennas: usize, element_spacing: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(invalid("array needs at least one antenna"));
        }
        if !(element_spacing > 0.0 && element_spacing.is_finite()) {
            return Err(invalid("element spacing must be positive"));
        }
        Ok(Self { num_antennas, element_spacing })
    }

    /// Half-wavelength ULA.
    pub fn ula(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, 0.5)
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn element_spacing(&self) -> f64 {
        self.element_spacing
    }
}

/// Steering vector with unit-modulus entries `exp(j2π·spacing·n·sin(angle))`.
pub fn steering_vector(geometry: &ArrayGeometry, angle: f64) -> CVec {
    steering_vector_sine(geometry, angle.sin())
}

/// Steering vector parameterized by the spatial frequency `sin(angle)`.
pub fn steering_vector_sine(geometry: &ArrayGeometry, sine: f64) -> CVec {
    let w = 2.0 * PI * geometry.element_spacing * sine;
    CVec::from_fn(geometry.num_antennas, |n, _| expj(w * n as f64))
}

/// Raised-cosine pulse truncated to `±span` sampling intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    rolloff: f64,
    span: usize,
    sampling_interval: f64,
}

impl PulseShape {
    pub fn new(rolloff: f64, span: usize, sampling_interval: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rolloff) {
            return Err(invalid("rolloff must lie in [0, 1]"));
        }
        if !(sampling_interval > 0.0) {
            return Err(invalid("sampling interval must be positive"));
        }
        Ok(Self { rolloff, span, sampling_interval })
    }

    pub fn rolloff(&self) -> f64 {
        self.rolloff
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn sampling_interval(&self) -> f64 {
        self.sampling_interval
    }

    pub fn eval(&self, tau: f64) -> f64 {
        let x = tau / self.sampling_interval;
        if x.abs() > self.span as f64 {
            return 0.0;
        }
        let b = self.rolloff;
        if b > 0.0 && ((2.0 * b * x).abs() - 1.0).abs() < 1e-9 {
            // removable singularity at |τ| = Ts/(2β)
            return PI / 4.0 * sinc(1.0 / (2.0 * b));
        }
        sinc(x) * (PI * b * x).cos() / (1.0 - (2.0 * b * x).powi(2))
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

pub fn pulse_eval(pulse: &PulseShape, tau: f64) -> f64 {
    pulse.eval(tau)
}

/// Ray parameters of a clustered channel, stored as parallel flat lists
/// ordered cluster by cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub rays_per_cluster: Vec<usize>,
    pub gains: Vec<Complex64>,
    pub delays: Vec<f64>,
    pub aoa: Vec<f64>,
    pub aod: Vec<f64>,
    pub pathloss: f64,
}

impl ClusterParams {
    pub fn num_clusters(&self) -> usize {
        self.rays_per_cluster.len()
    }

    pub fn num_rays(&self) -> usize {
        self.gains.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rays_per_cluster.iter().sum::<usize>();
        if self.gains.len() != n || self.delays.len() != n || self.aoa.len() != n || self.aod.len() != n {
            return Err(dim(format!(
                "{} rays declared but lists have lengths gains={} delays={} aoa={} aod={}",
                n,
                self.gains.len(),
                self.delays.len(),
                self.aoa.len(),
                self.aod.len()
            )));
        }
        if !(self.pathloss > 0.0 && self.pathloss.is_finite()) {
            return Err(invalid("pathloss must be positive"));
        }
        if self.gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(invalid("ray gains must be finite"));
        }
        Ok(())
    }

    /// Concatenate two ray sets (pathloss of `self` is kept).
    pub fn union(&self, other: &ClusterParams) -> ClusterParams {
        let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
        ClusterParams {
            rays_per_cluster: self.rays_per_cluster.iter().chain(&other.rays_per_cluster).copied().collect(),
            gains: self.gains.iter().chain(&other.gains).copied().collect(),
            delays: cat(&self.delays, &other.delays),
            aoa: cat(&self.aoa, &other.aoa),
            aod: cat(&self.aod, &other.aod),
            pathloss: self.pathloss,
        }
    }
}

/// Delay-tap channel matrices plus the rays that produced them.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub taps: Vec<CMat>,
    pub params: ClusterParams,
    pub sampling_interval: f64,
}

impl ChannelRealization {
    pub fn num_taps(&self) -> usize {
        self.taps.len()
    }

    pub fn num_rx(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn num_tx(&self) -> usize {
        self.taps[0].ncols()
    }
}

/// Evaluate the clustered tap model, normalized by the total ray count of
/// `params`.
pub fn generate_channel(
    params: &ClusterParams,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    pulse: &PulseShape,
    num_taps: usize,
) -> Result<ChannelRealization> {
    params.validate()?;
    if num_taps == 0 {
        return Err(invalid("channel needs at least one tap"));
    }
    let ts = pulse.sampling_interval();
    if params.delays.iter().any(|&t| !(t >= 0.0 && t < num_taps as f64 * ts)) {
        return Err(invalid("ray delays must lie in [0, D·Ts)"));
    }
    let (nr, nt) = (rx.num_antennas(), tx.num_antennas());
    let total = params.num_rays().max(1) as f64;
    let scale = ((nr * nt) as f64 / (params.pathloss * total)).sqrt();
    let mut taps = vec![CMat::zeros(nr, nt); num_taps];
    for r in 0..params.num_rays() {
        let ar = steering_vector(rx, params.aoa[r]);
        let at = steering_vector(tx, params.aod[r]);
        let outer = &ar * at.adjoint();
        for (d, tap) in taps.iter_mut().enumerate() {
            let p = pulse.eval(d as f64 * ts - params.delays[r]);
            if p != 0.0 {
                *tap += &outer * (params.gains[r] * scale * p);
            }
        }
    }
    Ok(ChannelRealization { taps, params: params.clone(), sampling_interval: ts })
}

/// `H[k] = Σ_d H[d]·exp(−j2πkd/K)` for k = 0..K−1.
pub fn frequency_response(chan: &ChannelRealization, k: usize) -> Result<Vec<CMat>> {
    taps_to_frequency(&chan.taps, k)
}

pub fn taps_to_frequency(taps: &[CMat], k: usize) -> Result<Vec<CMat>> {
    let d = taps.len();
    if d == 0 || k < d {
        return Err(invalid(format!("need K ≥ D ≥ 1 (K={k}, D={d})")));
    }
    let (nr, nt) = (taps[0].nrows(), taps[0].ncols());
    Ok((0..k)
        .map(|kk| {
            let mut h = CMat::zeros(nr, nt);
            for (dd, tap) in taps.iter().enumerate() {
                h += tap * expj(-2.0 * PI * ((kk * dd) % k) as f64 / k as f64);
            }
            h
        })
        .collect())
}

/// Angular grid uniform in the sine domain over [−1, 1).
#[derive(Debug, Clone)]
pub struct DictionaryGrid {
    pub matrix: CMat,
    pub sines: Vec<f64>,
}

impl DictionaryGrid {
    pub fn size(&self) -> usize {
        self.sines.len()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.sines.iter().map(|s| s.asin()).collect()
    }

    pub fn column(&self, i: usize) -> CVec {
        self.matrix.column(i).into_owned()
    }
}

pub fn build_dictionary(geometry: &ArrayGeometry, g: usize) -> Result<DictionaryGrid> {
    let n = geometry.num_antennas();
    if g < n {
        return Err(invalid(format!("grid size {g} smaller than array size {n}")));
    }
    let sines: Vec<f64> = (0..g).map(|i| -1.0 + 2.0 * i as f64 / g as f64).collect();
    let mut matrix = CMat::zeros(n, g);
    for (i, &s) in sines.iter().enumerate() {
        matrix.set_column(i, &steering_vector_sine(geometry, s));
    }
    Ok(DictionaryGrid { matrix, sines })
}

/// Transmit and receive dictionaries used by the sparse recovery stage.
#[derive(Debug, Clone)]
pub struct AngularDictionary {
    pub transmit: DictionaryGrid,
    pub receive: DictionaryGrid,
}

impl AngularDictionary {
    pub fn new(tx: &ArrayGeometry, g_t: usize, rx: &ArrayGeometry, g_r: usize) -> Result<Self> {
        Ok(Self { transmit: build_dictionary(tx, g_t)?, receive: build_dictionary(rx, g_r)? })
    }
}

/// Synthetic clustered-channel generator.
///
/// Cluster 0 is a single specular line-of-sight ray at zero delay carrying a
/// fraction `K/(1+K)` of the power for Rician factor `K` (deterministic
/// magnitude, uniform phase). The `num_clusters − 1` scattered clusters start
/// at least one sampling interval later, follow an exponential power-delay
/// profile and carry complex-normal ray gains with Laplacian angular spread.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGenerator {
    /// Total cluster count including the line-of-sight cluster.
    pub num_clusters: usize,
    /// Rays per scattered cluster.
    pub rays_per_cluster: usize,
    /// Laplacian intra-cluster angular spread, radians.
    pub angle_spread: f64,
    /// Mean excess delay of scattered clusters beyond the first tap, in
    /// sampling intervals.
    pub cluster_delay_mean: f64,
    /// Mean intra-cluster ray delay offset in sampling intervals.
    pub ray_delay_mean: f64,
    pub rician_factor_db: f64,
    pub pathloss: f64,
}

impl Default for ClusterGenerator {
    fn default() -> Self {
        Self {
            num_clusters: 12,
            rays_per_cluster: 20,
            angle_spread: 5f64.to_radians(),
            cluster_delay_mean: 4.0,
            ray_delay_mean: 0.25,
            rician_factor_db: 0.0,
            pathloss: 1.0,
        }
    }
}

impl ClusterGenerator {
    pub fn draw<R: Rng + ?Sized>(&self, num_taps: usize, ts: f64, rng: &mut R) -> Result<ClusterParams> {
        if self.num_clusters == 0 || self.rays_per_cluster == 0 {
            return Err(invalid("generator needs at least one cluster and one ray"));
        }
        let max_delay = (num_taps as f64 - 1.0).max(0.0);
        let exp_draw = |rng: &mut R, mean: f64| -> f64 { -mean * (1.0 - rng.random::<f64>()).ln() };
        let k = 10f64.powf(self.rician_factor_db / 10.0);
        let scattered = self.num_clusters - 1;
        let total_rays = 1 + scattered * self.rays_per_cluster;
        let los_power = if scattered == 0 { 1.0 } else { k / (1.0 + k) };

        let cluster_delay: Vec<f64> =
            (0..scattered).map(|_| (1.0 + exp_draw(rng, self.cluster_delay_mean)).min(max_delay)).collect();
        let weights: Vec<f64> =
            cluster_delay.iter().map(|t| (-t / self.cluster_delay_mean.max(1e-12)).exp()).collect();
        let weight_sum: f64 = weights.iter().sum();

        let b = self.angle_spread / 2f64.sqrt();
        let laplace = |rng: &mut R| -> f64 {
            let u: f64 = rng.random::<f64>() - 0.5;
            -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
        };
        let wrap = |a: f64| a.rem_euclid(2.0 * PI);
        let mut p = ClusterParams {
            rays_per_cluster: std::iter::once(1).chain(std::iter::repeat_n(self.rays_per_cluster, scattered)).collect(),
            gains: Vec::with_capacity(total_rays),
            delays: Vec::with_capacity(total_rays),
            aoa: Vec::with_capacity(total_rays),
            aod: Vec::with_capacity(total_rays),
            pathloss: self.pathloss,
        };
        // powers are scaled so that Σ E|α|² equals the ray count
        p.gains.push(expj(rng.random::<f64>() * 2.0 * PI) * (los_power * total_rays as f64).sqrt());
        p.delays.push(0.0);
        p.aoa.push(rng.random::<f64>() * 2.0 * PI);
        p.aod.push(rng.random::<f64>() * 2.0 * PI);
        for c in 0..scattered {
            let aoa_c = rng.random::<f64>() * 2.0 * PI;
            let aod_c = rng.random::<f64>() * 2.0 * PI;
            let power = (1.0 - los_power) * weights[c] / weight_sum;
            let ray_var = power * total_rays as f64 / self.rays_per_cluster as f64;
            for _ in 0..self.rays_per_cluster {
                p.gains.push(complex_normal(rng, ray_var));
                let t = cluster_delay[c] + exp_draw(rng, self.ray_delay_mean);
                p.delays.push(t.min(max_delay) * ts);
                p.aoa.push(wrap(aoa_c + laplace(rng)));
                p.aod.push(wrap(aod_c + laplace(rng)));
            }
        }
        Ok(p)
    }
}

/// Rays placed exactly on dictionary grid angles at integer tap delays. The
/// first path arrives at zero delay and is the strongest, so the frame timing
/// is unambiguous.
pub fn on_grid_params<R: Rng + ?Sized>(
    num_paths: usize,
    grid_t: &DictionaryGrid,
    grid_r: &DictionaryGrid,
    num_taps: usize,
    ts: f64,
    rng: &mut R,
) -> ClusterParams {
    let mut used = Vec::new();
    let mut p = ClusterParams {
        rays_per_cluster: vec![1; num_paths],
        gains: Vec::new(),
        delays: Vec::new(),
        aoa: Vec::new(),
        aod: Vec::new(),
        pathloss: 1.0,
    };
    while p.gains.len() < num_paths {
        let it = rng.random_range(0..grid_t.size());
        let ir = rng.random_range(0..grid_r.size());
        if used.contains(&(ir, it)) {
            continue;
        }
        used.push((ir, it));
        p.aod.push(grid_t.sines[it].asin().rem_euclid(2.0 * PI));
        p.aoa.push(grid_r.sines[ir].asin().rem_euclid(2.0 * PI));
        let first = p.gains.is_empty();
        let delay = if first { 0 } else { rng.random_range(0..num_taps) };
        p.delays.push(delay as f64 * ts);
        let magnitude = if first { 1.5 } else { 0.5 + 0.5 * rng.random::<f64>() };
        p.gains.push(expj(rng.random::<f64>() * 2.0 * PI) * magnitude);
    }
    p
}

#[cfg(test)]
mod test {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn steering_examples() {
        let g = ArrayGeometry::ula(4).unwrap();
        assert!(steering_vector(&g, 0.0).iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let v = steering_vector(&ArrayGeometry::ula(2).unwrap(), PI / 2.0);
        assert!((v[1] + Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let a = steering_vector(&g, 0.0);
        let b = steering_vector(&g, 0.5f64.asin());
        assert!(a.dotc(&b).norm() < 1e-12);
    }

    #[test]
    fn pulse_values() {
        let ts = 1e-9;
        let p = PulseShape::new(0.25, 4, ts).unwrap();
        assert_eq!(p.eval(0.0), 1.0);
        let z = PulseShape::new(0.0, 4, ts).unwrap();
        assert!(z.eval(ts).abs() < 1e-15);
        assert!(z.eval(-3.0 * ts).abs() < 1e-15);
        // closed form at Ts/2
        let expect = (PI * 0.5).sin() / (PI * 0.5) * (PI * 0.125).cos() / (1.0 - 0.0625);
        assert!((p.eval(ts / 2.0) - expect).abs() < 1e-14);
        // singularity limit is continuous
        let s = ts / 0.5;
        assert!((p.eval(s) - p.eval(s * (1.0 + 1e-7))).abs() < 1e-6);
        assert_eq!(p.eval(0.3 * ts), p.eval(-0.3 * ts));
    }

    #[test]
    fn single_ray_and_cancellation() {
        let ts = 1.0;
        let pulse = PulseShape::new(0.25, 4, ts).unwrap();
        let (tx, rx) = (ArrayGeometry::ula(4).unwrap(), ArrayGeometry::ula(2).unwrap());
        let one = ClusterParams {
            rays_per_cluster: vec![1],
            gains: vec![Complex64::new(1.0, 0.0)],
            delays: vec![0.0],
            aoa: vec![0.0],
            aod: vec![0.0],
            pathloss: 1.0,
        };
        let ch = generate_channel(&one, &tx, &rx, &pulse, 3).unwrap();
        let s = 8f64.sqrt();
        for d in 0..3 {
            let want = s * pulse.eval(d as f64);
            assert!(ch.taps[d].iter().all(|z| (z.re - want).abs() < 1e-12 && z.im.abs() < 1e-12));
        }
        let mut two = one.union(&one);
        two.gains[1] = -two.gains[1];
        let ch = generate_channel(&two, &tx, &rx, &pulse, 3).unwrap();
        assert!(ch.taps.iter().all(|t| t.iter().all(|z| z.norm() < 1e-12)));
    }

    #[test]
    fn mismatched_lists_rejected() {
        let bad = ClusterParams {
            rays_per_cluster: vec![2],
            gains: vec![Complex64::new(1.0, 0.0)],
            delays: vec![0.0],
            aoa: vec![0.0],
            aod: vec![0.0],
            pathloss: 1.0,
        };
        let g = ArrayGeometry::ula(2).unwrap();
        let p = PulseShape::new(0.25, 4, 1.0).unwrap();
        assert!(generate_channel(&bad, &g, &g, &p, 2).is_err());
    }

    #[test]
    fn frequency_response_cases() {
        let m = CMat::from_fn(2, 3, |i, j| Complex64::new(i as f64, j as f64 + 1.0));
        let taps = vec![CMat::zeros(2, 3), m.clone()];
        let h = taps_to_frequency(&taps, 8).unwrap();
        for (k, hk) in h.iter().enumerate() {
            let want = &m * expj(-2.0 * PI * k as f64 / 8.0);
            assert!((hk - want).norm() < 1e-12);
        }
        let flat = taps_to_frequency(&[m.clone()], 4).unwrap();
        assert!(flat.iter().all(|x| (x - &m).norm() == 0.0));
        assert!(taps_to_frequency(&taps, 1).is_err());
    }

    #[test]
    fn dictionary_properties() {
        let g = ArrayGeometry::ula(8).unwrap();
        let d = build_dictionary(&g, 8).unwrap();
        let gram = d.matrix.adjoint() * &d.matrix;
        assert!((gram - CMat::identity(8, 8) * Complex64::new(8.0, 0.0)).norm() < 1e-10);
        let d2 = build_dictionary(&g, 16).unwrap();
        let c = d2.column(3).dotc(&d2.column(4)).norm() / 8.0;
        // Dirichlet kernel at half a bin: |sin(Nx/2)/(N sin(x/2))| with x = π/N
        let x = PI / 8.0;
        let want = ((8.0 * x / 2.0).sin() / (8.0 * (x / 2.0).sin())).abs();
        assert!((c - want).abs() < 1e-12);
        assert!(d2.matrix.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!(build_dictionary(&g, 7).is_err());
    }

    #[test]
    fn generator_respects_delay_bound() {
        let mut rng = stream(3, &[1]);
        let gen = ClusterGenerator::default();
        for _ in 0..50 {
            let p = gen.draw(8, 1.0, &mut rng).unwrap();
            p.validate().unwrap();
            assert!(p.delays.iter().all(|&t| (0.0..8.0).contains(&t)));
            assert!(p.aoa.iter().chain(&p.aod).all(|&a| (0.0..2.0 * PI).contains(&a)));
        }
    }
}
