//! Monte-Carlo harness: metrics, scenario description and sweeps.
//!
//! Every trial draws its channel, training plan, impairments and noise from
//! streams addressed by `(seed, trial, purpose, frame)`, independent of the
//! grid point. Grid points therefore share channels and noise shapes (common
//! random numbers), and results are identical for any thread count.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::channel::{
    frequency_response, generate_channel, on_grid_params, AngularDictionary, ArrayGeometry, ChannelRealization,
    ClusterGenerator, PulseShape,
};
use crate::error::{invalid, Result};
use crate::impairments::{pn_covariance, ImpairmentRealization, PhaseNoiseModel, PhaseNoiseSampler};
use crate::linalg::{frobenius_sq, CMat};
use crate::link::{beamformed_taps, simulate_rx, whitening_from_combiner, BeamformedChannel};
use crate::rng::{derive_seed, stream};
use crate::sparse::{build_measurement, swomp, FrameMeasurement, SwompConfig};
use crate::sync::{
    crlb_beamformed, detect_timing, joint_sync, CfoSearch, FrameGeometry, FrameTraining, PnForm, PnPrior,
    SyncConfig, SyncEstimate, TimingMetric, DENSE_PN_LIMIT,
};
use crate::training::{assemble_frame, TrainingConfig, TrainingPlan};

/// Reported value of an exact (zero-error) NMSE.
pub const NMSE_FLOOR_DB: f64 = -120.0;

fn to_db(x: f64) -> f64 {
    if x <= 0.0 {
        NMSE_FLOOR_DB
    } else {
        (10.0 * x.log10()).max(NMSE_FLOOR_DB)
    }
}

/// `‖x̂ − x‖² / ‖x‖²` as a linear ratio over paired slices.
pub fn nmse_ratio<'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a CMat, &'a CMat)>,
{
    let (mut num, mut den) = (0.0, 0.0);
    for (est, truth) in pairs {
        if est.shape() != truth.shape() {
            return Err(crate::error::dim("estimate and truth shapes differ"));
        }
        num += frobenius_sq(&(est - truth));
        den += frobenius_sq(truth);
    }
    if den == 0.0 {
        return Err(invalid("truth has zero norm"));
    }
    Ok(num / den)
}

/// NMSE in dB, floored at [`NMSE_FLOOR_DB`].
pub fn nmse(estimate: &[CMat], truth: &[CMat]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(crate::error::dim("estimate and truth lengths differ"));
    }
    Ok(to_db(nmse_ratio(estimate.iter().zip(truth))?))
}

/// Fraction of `(estimate, truth)` timing pairs that match exactly.
pub fn detection_probability(trials: &[(usize, usize)]) -> f64 {
    if trials.is_empty() {
        return f64::NAN;
    }
    trials.iter().filter(|(a, b)| a == b).count() as f64 / trials.len() as f64
}

/// Average over subcarriers of `log2 det(I + (snr/N_s)·HeffᴴHeff)`, where
/// `Heff = Wᴴ·H[k]·F` and `W`, `F` are the top-`N_s` singular vectors of `Ĥ[k]`.
pub fn spectral_efficiency(h_hat: &[CMat], h_true: &[CMat], snr: f64, n_s: usize) -> Result<f64> {
    if h_hat.len() != h_true.len() || h_hat.is_empty() {
        return Err(crate::error::dim("channel lists differ or are empty"));
    }
    let (nr, nt) = h_true[0].shape();
    if n_s == 0 || n_s > nr.min(nt) {
        return Err(invalid("stream count must lie in 1..=min(N_t, N_r)"));
    }
    let mut total = 0.0;
    for (hh, h) in h_hat.iter().zip(h_true) {
        let svd = hh.clone().svd(true, true);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u = svd.u.as_ref().unwrap();
        let vt = svd.v_t.as_ref().unwrap();
        let w = u.select_columns(&order[..n_s]);
        let f = vt.select_rows(&order[..n_s]).adjoint();
        let heff = w.adjoint() * h * f;
        let m = CMat::identity(n_s, n_s) + heff.adjoint() * &heff * num_complex::Complex64::new(snr / n_s as f64, 0.0);
        let chol = m.cholesky().ok_or(crate::error::Error::Singular("rate matrix"))?;
        total += chol.l().diagonal().iter().map(|z| 2.0 * z.re.log2()).sum::<f64>();
    }
    Ok(total / h_hat.len() as f64)
}

/// `1 − T_train/T_coh`.
pub fn overhead_factor(training_samples: usize, sample_rate: f64, coherence_time: f64) -> Result<f64> {
    let t = training_samples as f64 / sample_rate;
    if !(coherence_time > t) {
        return Err(invalid("coherence time must exceed the training duration"));
    }
    Ok(1.0 - t / coherence_time)
}

/// Overhead factor quoted for the reference setup.
pub const PAPER_OVERHEAD: f64 = 0.97;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelMode {
    Clustered(ClusterGenerator),
    /// Paths exactly on the dictionary grids at integer delays.
    OnGrid { paths: usize },
}

/// Everything except the swept coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_t: usize,
    pub n_r: usize,
    pub l_t: usize,
    pub k: usize,
    pub l_c: usize,
    pub n_tr: usize,
    pub frames: usize,
    pub taps: usize,
    pub sample_rate: f64,
    pub max_cfo_hz: f64,
    pub n0_max: usize,
    pub n0_fixed: Option<usize>,
    pub pn_enabled: bool,
    pub f_z: f64,
    pub f_p: f64,
    pub zc_root: i64,
    pub preamble_boost_db: f64,
    pub rolloff: f64,
    pub pulse_span: usize,
    pub channel: ChannelMode,
    pub grid_factor_t: usize,
    pub grid_factor_r: usize,
    pub n_alt: usize,
    pub cfo_points: usize,
    pub cfo_tolerance: f64,
    pub cfo_refine: bool,
    pub pn_correction: bool,
    pub pn_form: PnForm,
    pub timing_metric: TimingMetric,
    pub genie_sigma2: bool,
    pub known_n0: bool,
    pub swomp: SwompConfig,
    pub n_s: Vec<usize>,
    pub coherence_time: f64,
    pub paper_overhead: bool,
    pub data_snr_db: Option<f64>,
}

impl Scenario {
    /// Reduced dimensions that keep a sweep within minutes.
    pub fn desk() -> Self {
        Self {
            n_t: 32,
            n_r: 16,
            l_t: 4,
            k: 64,
            l_c: 16,
            n_tr: 4,
            frames: 16,
            taps: 8,
            sample_rate: crate::impairments::REFERENCE_SAMPLE_RATE,
            max_cfo_hz: 400e3,
            n0_max: 15,
            n0_fixed: None,
            pn_enabled: true,
            f_z: 100e6,
            f_p: 1e6,
            zc_root: 1,
            preamble_boost_db: 6.0,
            rolloff: 0.25,
            pulse_span: 4,
            channel: ChannelMode::Clustered(ClusterGenerator::default()),
            grid_factor_t: 2,
            grid_factor_r: 2,
            n_alt: 2,
            cfo_points: 129,
            cfo_tolerance: 1e-7,
            cfo_refine: true,
            pn_correction: true,
            pn_form: PnForm::Residual,
            timing_metric: TimingMetric::MatchedFilter,
            genie_sigma2: false,
            known_n0: false,
            swomp: SwompConfig::default(),
            n_s: vec![1, 2],
            coherence_time: 2.5e-3,
            paper_overhead: false,
            data_snr_db: None,
        }
    }

    /// Reference dimensions.
    pub fn paper() -> Self {
        Self { n_t: 128, n_r: 64, l_t: 8, k: 256, l_c: 64, n_tr: 8, frames: 32, taps: 16, n0_max: 63, ..Self::desk() }
    }

    pub fn geometry(&self) -> FrameGeometry {
        FrameGeometry::new(self.k, self.l_c, self.n_tr)
    }

    pub fn frame_len(&self) -> usize {
        self.geometry().frame_len()
    }

    /// Received samples per frame: TO slack plus channel tail.
    pub fn rx_len(&self) -> usize {
        self.n0_max + self.frame_len() + self.taps - 1
    }

    pub fn training_config(&self, l_r: usize) -> TrainingConfig {
        TrainingConfig {
            n_t: self.n_t,
            n_r: self.n_r,
            l_t: self.l_t,
            l_r,
            k: self.k,
            l_c: self.l_c,
            n_tr: self.n_tr,
            zc_root: self.zc_root,
            preamble_boost: 10f64.powf(self.preamble_boost_db / 10.0),
        }
    }

    pub fn overhead(&self) -> Result<f64> {
        if self.paper_overhead {
            return Ok(PAPER_OVERHEAD);
        }
        overhead_factor((self.k + self.l_c) * self.n_tr * self.frames, self.sample_rate, self.coherence_time)
    }

    pub fn validate(&self, l_r: usize) -> Result<()> {
        self.training_config(l_r).validate()?;
        if self.taps == 0 || self.taps > self.l_c.max(1) || self.taps > self.k {
            return Err(invalid("tap count must be at most the cyclic prefix and K"));
        }
        if self.frames == 0 {
            return Err(invalid("need at least one frame"));
        }
        if let Some(n0) = self.n0_fixed {
            if n0 > self.n0_max {
                return Err(invalid("fixed timing offset outside the search window"));
            }
        }
        if !(self.max_cfo_hz >= 0.0 && self.max_cfo_hz < self.sample_rate / 2.0) {
            return Err(invalid("CFO bound must be below half the sampling rate"));
        }
        PhaseNoiseModel::new(0.0, self.f_z, self.f_p)?;
        Ok(())
    }
}

/// One point of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub snr_db: f64,
    pub g_theta_dbc: f64,
    pub l_r: usize,
}

/// Read-only state shared by all trials of a grid point.
pub struct PointContext {
    pub scenario: Scenario,
    pub point: GridPoint,
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
    pub pulse: PulseShape,
    pub dictionary: AngularDictionary,
    /// Unit-level (0 dBc/Hz) PN sampler over a received frame; draws are
    /// scaled to the point's level.
    pub pn_sampler: Option<Arc<PhaseNoiseSampler>>,
    pub pn_scale: f64,
    pub sync: SyncConfig,
}

impl PointContext {
    pub fn new(scenario: &Scenario, point: GridPoint) -> Result<Self> {
        Self::with_sampler(scenario, point, None)
    }

    /// Reuse a unit-level sampler built for the same scenario.
    pub fn with_sampler(scenario: &Scenario, point: GridPoint, sampler: Option<Arc<PhaseNoiseSampler>>) -> Result<Self> {
        scenario.validate(point.l_r)?;
        let ts = 1.0 / scenario.sample_rate;
        let tx = ArrayGeometry::ula(scenario.n_t)?;
        let rx = ArrayGeometry::ula(scenario.n_r)?;
        let pulse = PulseShape::new(scenario.rolloff, scenario.pulse_span, ts)?;
        let dictionary = AngularDictionary::new(
            &tx,
            scenario.grid_factor_t * scenario.n_t,
            &rx,
            scenario.grid_factor_r * scenario.n_r,
        )?;
        let geometry = scenario.geometry();
        let model = PhaseNoiseModel::new(point.g_theta_dbc, scenario.f_z, scenario.f_p)?;
        let pn_sampler = match (scenario.pn_enabled, sampler) {
            (false, _) => None,
            (true, Some(s)) => Some(s),
            (true, None) => Some(Arc::new(unit_sampler(scenario)?)),
        };
        let pn_prior = if scenario.pn_enabled && scenario.pn_correction {
            Some(Arc::new(PnPrior::for_frame(&model, &geometry, ts, DENSE_PN_LIMIT)?))
        } else {
            None
        };
        let sync = SyncConfig {
            geometry,
            taps: scenario.taps,
            n0_window: (0, scenario.n0_max),
            cfo: CfoSearch {
                max_cfo: scenario.max_cfo_hz / scenario.sample_rate,
                points: scenario.cfo_points,
                tolerance: scenario.cfo_tolerance,
                refine: scenario.cfo_refine,
            },
            n_alt: scenario.n_alt,
            pn_prior,
            pn_form: scenario.pn_form,
            timing_metric: scenario.timing_metric,
            genie_sigma2: None,
            known_n0: None,
        };
        Ok(Self {
            scenario: scenario.clone(),
            point,
            tx,
            rx,
            pulse,
            dictionary,
            pn_sampler,
            pn_scale: 10f64.powf(point.g_theta_dbc / 20.0),
            sync,
        })
    }
}

/// PN sampler at 0 dBc/Hz over a received frame of the scenario.
pub fn unit_sampler(scenario: &Scenario) -> Result<PhaseNoiseSampler> {
    let model = PhaseNoiseModel::new(0.0, scenario.f_z, scenario.f_p)?;
    PhaseNoiseSampler::new(&pn_covariance(&model, scenario.rx_len(), 1.0 / scenario.sample_rate))
}

mod purpose {
    pub const CHANNEL: u64 = 1;
    pub const PLAN: u64 = 2;
    pub const IMPAIRMENT: u64 = 3;
    pub const NOISE: u64 = 4;
}

/// One simulated training frame.
pub struct SimulatedFrame {
    pub beamformed: BeamformedChannel,
    pub impairments: ImpairmentRealization,
    pub samples: CMat,
}

/// A trial's channel, plan, noise level and frames.
pub struct SimulatedTrial {
    pub channel: ChannelRealization,
    pub plan: TrainingPlan,
    pub sigma2: f64,
    pub frames: Vec<SimulatedFrame>,
}

/// Draw the channel and simulate the first `num_frames` training frames.
pub fn simulate_trial(ctx: &PointContext, trial: u64, seed: u64, num_frames: usize) -> Result<SimulatedTrial> {
    let sc = &ctx.scenario;
    let ts = 1.0 / sc.sample_rate;
    let mut rng = stream(seed, &[trial, purpose::CHANNEL]);
    let params = match &sc.channel {
        ChannelMode::Clustered(gen) => gen.draw(sc.taps, ts, &mut rng)?,
        ChannelMode::OnGrid { paths } => {
            on_grid_params(*paths, &ctx.dictionary.transmit, &ctx.dictionary.receive, sc.taps, ts, &mut rng)
        }
    };
    let channel = generate_channel(&params, &ctx.tx, &ctx.rx, &ctx.pulse, sc.taps)?;
    let plan = TrainingPlan::new(sc.training_config(ctx.point.l_r), sc.frames, derive_seed(seed, &[trial, purpose::PLAN]))?;
    let num_frames = num_frames.min(sc.frames);
    let mut beamformed = Vec::with_capacity(num_frames);
    for f in &plan.frames[..num_frames] {
        let w = whitening_from_combiner(&f.combiner.w_rf)?;
        beamformed.push(beamformed_taps(&channel.taps, &f.precoder.f_rf, &f.precoder.q, &f.combiner.w_rf, &w, sc.k)?);
    }
    // per-sample transmit energy of the OFDM part is E_s/K
    let sample_energy = plan.frames[0].symbol_energy() / sc.k as f64;
    let signal = beamformed.iter().map(|b| b.energy() / ctx.point.l_r as f64).sum::<f64>() / num_frames as f64;
    let sigma2 = if ctx.point.snr_db.is_infinite() && ctx.point.snr_db > 0.0 {
        0.0
    } else {
        signal * sample_energy / 10f64.powf(ctx.point.snr_db / 10.0)
    };
    let rx_len = sc.rx_len();
    let max_cfo = sc.max_cfo_hz / sc.sample_rate;
    let mut frames = Vec::with_capacity(num_frames);
    for (m, bf) in beamformed.into_iter().enumerate() {
        let mut irng = stream(seed, &[trial, purpose::IMPAIRMENT, m as u64]);
        let n0 = match sc.n0_fixed {
            Some(n0) => n0,
            None => rand::Rng::random_range(&mut irng, 0..=sc.n0_max),
        };
        let cfo = if max_cfo > 0.0 { (2.0 * rand::Rng::random::<f64>(&mut irng) - 1.0) * max_cfo } else { 0.0 };
        let pn = match &ctx.pn_sampler {
            Some(s) => s.sample(&mut irng) * ctx.pn_scale,
            None => DVector::zeros(rx_len),
        };
        let impairments = ImpairmentRealization { n0, cfo, pn };
        let tx = assemble_frame(&plan, m);
        let mut nrng = stream(seed, &[trial, purpose::NOISE, m as u64]);
        let samples = simulate_rx(&tx, &bf.taps, &impairments, sigma2, rx_len, &mut nrng)?;
        frames.push(SimulatedFrame { beamformed: bf, impairments, samples });
    }
    Ok(SimulatedTrial { channel, plan, sigma2, frames })
}

/// Per-frame synchronization record.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub n0: usize,
    pub n0_hat: usize,
    pub cfo: f64,
    pub cfo_hat: f64,
    pub pn_err: f64,
    pub pn_energy: f64,
    pub g_err: f64,
    pub g_energy: f64,
    pub sigma2: f64,
    pub sigma2_hat: f64,
}

fn frame_sync(ctx: &PointContext, trial: &SimulatedTrial, m: usize) -> Result<(SyncEstimate, FrameRecord)> {
    let sc = &ctx.scenario;
    let frame = &trial.frames[m];
    let training = FrameTraining::new(ctx.sync.geometry, &trial.plan.frames[m])?;
    let mut cfg = ctx.sync.clone();
    if sc.genie_sigma2 {
        cfg.genie_sigma2 = Some(trial.sigma2);
    }
    if sc.known_n0 {
        cfg.known_n0 = Some(frame.impairments.n0);
    }
    let preamble = preamble_reference(&trial.plan);
    let est = joint_sync(&frame.samples, &training, &preamble, &cfg)?;
    let truth_taps = CMat::from_fn(sc.taps, ctx.point.l_r, |d, i| frame.beamformed.taps[d][i]);
    let g = ctx.sync.geometry;
    let n0 = frame.impairments.n0;
    let (mut pn_err, mut pn_energy) = (0.0, 0.0);
    for (row, pos) in g.useful_positions().into_iter().enumerate() {
        let t = frame.impairments.pn[n0 + g.preamble_len + g.l_c + pos];
        pn_err += (est.pn_hat[row] - t).powi(2);
        pn_energy += t * t;
    }
    let rec = FrameRecord {
        n0,
        n0_hat: est.n0_hat,
        cfo: frame.impairments.cfo,
        cfo_hat: est.cfo_hat,
        pn_err,
        pn_energy,
        g_err: frobenius_sq(&(&est.g_hat_taps - &truth_taps)),
        g_energy: frobenius_sq(&truth_taps),
        sigma2: trial.sigma2,
        sigma2_hat: est.sigma2_hat,
    };
    Ok((est, rec))
}

/// Unit-amplitude Ga64 reference for correlation.
pub fn preamble_reference(plan: &TrainingPlan) -> Vec<num_complex::Complex64> {
    plan.preamble.samples(1.0)
}

/// Per-trial metrics.
#[derive(Debug, Clone, Default)]
pub struct TrialOutcome {
    pub failed: bool,
    pub frames: Vec<FrameRecord>,
    pub nmse_h: f64,
    /// Spectral efficiency per configured `N_s`.
    pub se: Vec<f64>,
}

impl TrialOutcome {
    pub fn detections(&self) -> usize {
        self.frames.iter().filter(|f| f.n0 == f.n0_hat).count()
    }

    pub fn nmse_g(&self) -> f64 {
        self.frames.iter().map(|f| f.g_err).sum::<f64>() / self.frames.iter().map(|f| f.g_energy).sum::<f64>()
    }

    pub fn nmse_cfo(&self) -> f64 {
        self.frames.iter().map(|f| (f.cfo_hat - f.cfo).powi(2)).sum::<f64>()
            / self.frames.iter().map(|f| f.cfo * f.cfo).sum::<f64>()
    }
}

/// Relative floor on per-frame estimate variance handed to SW-OMP.
const MEASUREMENT_VAR_FLOOR: f64 = 1e-13;

/// Full pipeline for one trial.
pub fn run_trial(ctx: &PointContext, trial: u64, seed: u64) -> Result<TrialOutcome> {
    let sc = &ctx.scenario;
    let sim = simulate_trial(ctx, trial, seed, sc.frames)?;
    let mut records = Vec::with_capacity(sc.frames);
    let mut meas = Vec::with_capacity(sc.frames);
    for m in 0..sc.frames {
        let (est, rec) = frame_sync(ctx, &sim, m)?;
        let bound = crlb_beamformed(&est.gram, est.sigma2_hat, sc.k, ctx.point.l_r)?;
        let g_freq = est.g_hat_freq.transpose();
        let power = frobenius_sq(&g_freq) / (g_freq.nrows() * g_freq.ncols()) as f64;
        let noise_var = bound.mean_variance().max(MEASUREMENT_VAR_FLOOR * power).max(f64::MIN_POSITIVE);
        let f = &sim.plan.frames[m];
        let w = whitening_from_combiner(&f.combiner.w_rf)?;
        meas.push(FrameMeasurement {
            tx: f.precoder.vector(),
            rx: w.inverse_adjoint()? * f.combiner.w_rf.adjoint(),
            g_freq,
            noise_var,
        });
        records.push(rec);
    }
    let model = build_measurement(meas)?;
    let est = swomp(&model, &ctx.dictionary, &sc.swomp)?;
    let h = frequency_response(&sim.channel, sc.k)?;
    let nmse_h = nmse_ratio(est.h_hat.iter().zip(&h))?;
    let rate_snr = sc.data_snr_db.unwrap_or(ctx.point.snr_db);
    let se = if rate_snr.is_finite() {
        // unit average entry power for the rate evaluation
        let norm = (h.iter().map(frobenius_sq).sum::<f64>() / (h.len() * sc.n_t * sc.n_r) as f64).sqrt();
        let hn: Vec<CMat> = h.iter().map(|x| x / num_complex::Complex64::new(norm, 0.0)).collect();
        sc.n_s
            .iter()
            .map(|&ns| spectral_efficiency(&est.h_hat, &hn, 10f64.powf(rate_snr / 10.0), ns))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![f64::NAN; sc.n_s.len()]
    };
    Ok(TrialOutcome { failed: false, frames: records, nmse_h, se })
}

/// Aggregated metrics of one grid point and stream count.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub snr_db: f64,
    pub g_theta_dbc: f64,
    pub l_r: usize,
    pub n_s: usize,
    pub trials: usize,
    pub failures: usize,
    pub p_detect: f64,
    pub nmse_g_db: f64,
    pub nmse_h_db: f64,
    pub nmse_h_ci_db: f64,
    pub nmse_cfo_db: f64,
    pub se: f64,
    pub se_ci: f64,
    pub se_with_overhead: f64,
}

pub const METRIC_SCHEMA: &str = "# mmwave-sync metrics v1";
pub const METRIC_HEADER: &str =
    "snr_db,g_theta_dbc,l_r,n_s,trials,failures,p_detect,nmse_g_db,nmse_h_db,nmse_h_ci_db,nmse_cfo_db,se,se_ci,se_with_overhead";

impl MetricRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.snr_db,
            self.g_theta_dbc,
            self.l_r,
            self.n_s,
            self.trials,
            self.failures,
            self.p_detect,
            self.nmse_g_db,
            self.nmse_h_db,
            self.nmse_h_ci_db,
            self.nmse_cfo_db,
            self.se,
            self.se_ci,
            self.se_with_overhead
        )
    }
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, 1.96 * (var / n).sqrt())
}

/// Aggregate trial outcomes into one row per stream count.
pub fn aggregate(scenario: &Scenario, point: GridPoint, outcomes: &[TrialOutcome]) -> Result<Vec<MetricRow>> {
    let ok: Vec<&TrialOutcome> = outcomes.iter().filter(|o| !o.failed).collect();
    let failures = outcomes.len() - ok.len();
    let frames: usize = ok.iter().map(|o| o.frames.len()).sum();
    let p_detect = if frames == 0 { f64::NAN } else { ok.iter().map(|o| o.detections()).sum::<usize>() as f64 / frames as f64 };
    let mean = |f: &dyn Fn(&TrialOutcome) -> f64| -> f64 {
        let v: Vec<f64> = ok.iter().map(|o| f(o)).filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let nmse_g_db = to_db_nan(mean(&|o| o.nmse_g()));
    let nmse_cfo_db = to_db_nan(mean(&|o| o.nmse_cfo()));
    let (h_mean, h_ci) = mean_ci(&ok.iter().map(|o| o.nmse_h).collect::<Vec<_>>());
    let nmse_h_db = to_db_nan(h_mean);
    let nmse_h_ci_db = if h_mean > 0.0 { 10.0 / std::f64::consts::LN_10 * h_ci / h_mean } else { 0.0 };
    let overhead = scenario.overhead()?;
    Ok(scenario
        .n_s
        .iter()
        .enumerate()
        .map(|(j, &n_s)| {
            let (se, se_ci) = mean_ci(&ok.iter().map(|o| o.se[j]).collect::<Vec<_>>());
            MetricRow {
                snr_db: point.snr_db,
                g_theta_dbc: point.g_theta_dbc,
                l_r: point.l_r,
                n_s,
                trials: outcomes.len(),
                failures,
                p_detect,
                nmse_g_db,
                nmse_h_db,
                nmse_h_ci_db,
                nmse_cfo_db,
                se,
                se_ci,
                se_with_overhead: overhead * se,
            }
        })
        .collect())
}

fn to_db_nan(x: f64) -> f64 {
    if x.is_nan() {
        f64::NAN
    } else {
        to_db(x)
    }
}

/// Sweep description.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub snr_db: Vec<f64>,
    pub g_theta_dbc: Vec<f64>,
    pub l_r: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn desk() -> Self {
        Self {
            scenario: Scenario::desk(),
            snr_db: vec![-10.0, -5.0, 0.0, 5.0],
            g_theta_dbc: vec![-85.0],
            l_r: vec![4],
            trials: 100,
            seed: 1,
        }
    }

    pub fn paper() -> Self {
        Self { scenario: Scenario::paper(), ..Self::desk() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            _ => Err(invalid(format!("unknown preset '{name}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.snr_db.is_empty() || self.g_theta_dbc.is_empty() || self.l_r.is_empty() {
            return Err(invalid("sweep lists must be non-empty"));
        }
        for &l_r in &self.l_r {
            self.scenario.validate(l_r)?;
        }
        Ok(())
    }

    /// Grid in output order: SNR, then G_θ, then L_r.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &snr_db in &self.snr_db {
            for &g_theta_dbc in &self.g_theta_dbc {
                for &l_r in &self.l_r {
                    out.push(GridPoint { snr_db, g_theta_dbc, l_r });
                }
            }
        }
        out
    }
}

fn trial_outcome(ctx: &PointContext, trial: u64, seed: u64) -> TrialOutcome {
    run_trial(ctx, trial, seed).unwrap_or_else(|_| TrialOutcome { failed: true, ..Default::default() })
}

/// Run the sweep, handing rows to `sink` as grid points complete.
pub fn run_sweep(cfg: &SweepConfig, mut sink: impl FnMut(&MetricRow) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let sampler = if cfg.scenario.pn_enabled { Some(Arc::new(unit_sampler(&cfg.scenario)?)) } else { None };
    for point in cfg.points() {
        let ctx = PointContext::with_sampler(&cfg.scenario, point, sampler.clone())?;
        let outcomes: Vec<TrialOutcome> =
            (0..cfg.trials as u64).into_par_iter().map(|t| trial_outcome(&ctx, t, cfg.seed)).collect();
        for row in aggregate(&cfg.scenario, point, &outcomes)? {
            sink(&row)?;
        }
    }
    Ok(())
}

/// Run the sweep and collect all rows.
pub fn sweep_rows(cfg: &SweepConfig) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    run_sweep(cfg, |r| {
        rows.push(r.clone());
        Ok(())
    })?;
    Ok(rows)
}

/// Sweep as CSV text (schema line, header, rows).
pub fn sweep_csv(cfg: &SweepConfig) -> Result<String> {
    let mut out = format!("{METRIC_SCHEMA}\n{METRIC_HEADER}\n");
    run_sweep(cfg, |r| {
        out.push_str(&r.csv());
        out.push('\n');
        Ok(())
    })?;
    Ok(out)
}

pub const SYNC_SCHEMA: &str = "# mmwave-sync sync-estimates v1";
pub const SYNC_HEADER: &str =
    "trial,frame,snr_db,g_theta_dbc,l_r,n0,n0_hat,cfo,cfo_hat,pn_nmse_db,g_nmse_db,sigma2,sigma2_hat";

/// Synchronization-only sweep: one CSV row per frame.
pub fn run_sync_only(cfg: &SweepConfig, mut sink: impl FnMut(&str) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let sampler = if cfg.scenario.pn_enabled { Some(Arc::new(unit_sampler(&cfg.scenario)?)) } else { None };
    for point in cfg.points() {
        let ctx = PointContext::with_sampler(&cfg.scenario, point, sampler.clone())?;
        let rows: Vec<Vec<String>> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| sync_rows(&ctx, t, cfg.seed))
            .collect();
        for r in rows.iter().flatten() {
            sink(r)?;
        }
    }
    Ok(())
}

fn sync_rows(ctx: &PointContext, trial: u64, seed: u64) -> Vec<String> {
    let p = ctx.point;
    let sim = match simulate_trial(ctx, trial, seed, ctx.scenario.frames) {
        Ok(s) => s,
        Err(_) => return vec![format!("{trial},-1,{},{},{},failed", p.snr_db, p.g_theta_dbc, p.l_r)],
    };
    (0..sim.frames.len())
        .map(|m| match frame_sync(ctx, &sim, m) {
            Ok((_, r)) => format!(
                "{trial},{m},{},{},{},{},{},{},{},{},{},{},{}",
                p.snr_db,
                p.g_theta_dbc,
                p.l_r,
                r.n0,
                r.n0_hat,
                r.cfo,
                r.cfo_hat,
                to_db_nan(if r.pn_energy > 0.0 { r.pn_err / r.pn_energy } else { f64::NAN }),
                to_db_nan(r.g_err / r.g_energy),
                r.sigma2,
                r.sigma2_hat
            ),
            Err(_) => format!("{trial},{m},{},{},{},failed", p.snr_db, p.g_theta_dbc, p.l_r),
        })
        .collect()
}

/// Per-frame synchronization records of one trial (full joint pipeline).
pub fn sync_trial(ctx: &PointContext, trial: u64, seed: u64, frames: usize) -> Result<Vec<(SyncEstimate, FrameRecord)>> {
    let sim = simulate_trial(ctx, trial, seed, frames)?;
    (0..sim.frames.len()).map(|m| frame_sync(ctx, &sim, m)).collect()
}

/// Timing detection only, first frame of each trial; returns `(n0_hat, n0)`.
pub fn detection_trials(ctx: &PointContext, trials: u64, seed: u64) -> Result<Vec<(usize, usize)>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let sim = simulate_trial(ctx, t, seed, 1)?;
            let f = &sim.frames[0];
            let est = detect_timing(&f.samples, &preamble_reference(&sim.plan), ctx.sync.n0_window, ctx.sync.timing_metric)?;
            Ok((est, f.impairments.n0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_mat(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = stream(seed, &[]);
        CMat::from_fn(rows, cols, |_, _| crate::rng::complex_normal(&mut rng, 1.0))
    }

    #[test]
    fn nmse_examples() {
        let truth = vec![random_mat(3, 2, 1), random_mat(3, 2, 2)];
        assert_eq!(nmse(&truth, &truth).unwrap(), NMSE_FLOOR_DB);
        let zeros: Vec<CMat> = truth.iter().map(|_| CMat::zeros(3, 2)).collect();
        assert!(nmse(&zeros, &truth).unwrap().abs() < 1e-12);
        let scaled: Vec<CMat> = truth.iter().map(|t| t * c(1.1, 0.0)).collect();
        assert!((nmse(&scaled, &truth).unwrap() + 20.0).abs() < 1e-9);
        assert!(nmse(&truth, &zeros).is_err());
        assert!(nmse(&truth[..1], &truth).is_err());
    }

    #[test]
    fn detection_probability_examples() {
        assert_eq!(detection_probability(&[(3, 3), (5, 5)]), 1.0);
        assert_eq!(detection_probability(&[(3, 4), (5, 6)]), 0.0);
        assert_eq!(detection_probability(&[(1, 1), (2, 2), (3, 3), (4, 0)]), 0.75);
    }

    #[test]
    fn matched_rank_one_rate() {
        let u = random_mat(4, 1, 3).normalize();
        let v = random_mat(6, 1, 4).normalize();
        let s = 2.5;
        let h = vec![&u * v.adjoint() * c(s, 0.0)];
        let snr = 10f64.powf(0.3);
        let se = spectral_efficiency(&h, &h, snr, 1).unwrap();
        assert!((se - (1.0 + snr * s * s).log2()).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_estimate_gives_no_rate() {
        let mut h = CMat::zeros(4, 4);
        h[(0, 0)] = c(3.0, 0.0);
        let mut h_hat = CMat::zeros(4, 4);
        h_hat[(1, 1)] = c(1.0, 0.0);
        let se = spectral_efficiency(&[h_hat], &[h], 100.0, 1).unwrap();
        assert!(se.abs() < 1e-12);
    }

    #[test]
    fn rate_matches_brute_force() {
        let h_hat = random_mat(4, 4, 5);
        let h = &h_hat + random_mat(4, 4, 6) * c(0.3, 0.0);
        let snr = 4.0;
        let svd = h_hat.clone().svd(true, true);
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u = svd.u.unwrap();
        let v = svd.v_t.unwrap().adjoint();
        let g = |i: usize, j: usize| (u.column(order[i]).adjoint() * &h * v.column(order[j]))[(0, 0)];
        // N_s = 1: scalar link
        let one = (1.0 + snr * g(0, 0).norm_sqr()).log2();
        assert!((spectral_efficiency(&[h_hat.clone()], &[h.clone()], snr, 1).unwrap() - one).abs() < 1e-10);
        // N_s = 2: explicit 2×2 determinant
        let a = snr / 2.0;
        let heff = [[g(0, 0), g(0, 1)], [g(1, 0), g(1, 1)]];
        let gram = |i: usize, j: usize| heff[0][i].conj() * heff[0][j] + heff[1][i].conj() * heff[1][j];
        let det = (c(1.0, 0.0) + gram(0, 0) * a) * (c(1.0, 0.0) + gram(1, 1) * a) - gram(0, 1) * gram(1, 0) * a * a;
        let two = det.re.log2();
        assert!((spectral_efficiency(&[h_hat], &[h], snr, 2).unwrap() - two).abs() < 1e-10);
    }

    #[test]
    fn rate_rejects_bad_stream_count() {
        let h = vec![random_mat(2, 3, 7)];
        assert!(spectral_efficiency(&h, &h, 1.0, 0).is_err());
        assert!(spectral_efficiency(&h, &h, 1.0, 3).is_err());
        assert!(spectral_efficiency(&[], &[], 1.0, 1).is_err());
    }

    #[test]
    fn overhead_examples() {
        // 42 μs of training in a 2.5 ms block
        assert!((overhead_factor(42, 1e6, 2.5e-3).unwrap() - 0.9832).abs() < 1e-12);
        assert_eq!(overhead_factor(0, 1e6, 2.5e-3).unwrap(), 1.0);
        assert!((overhead_factor(1250, 1e6, 2.5e-3).unwrap() - 0.5).abs() < 1e-12);
        assert!(overhead_factor(2500, 1e6, 2.5e-3).is_err());
        let mut sc = Scenario::desk();
        sc.paper_overhead = true;
        assert_eq!(sc.overhead().unwrap(), PAPER_OVERHEAD);
    }

    #[test]
    fn sweep_config_validation() {
        let mut cfg = SweepConfig::desk();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.points().len(), 4);
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::desk();
        cfg.l_r = vec![3];
        assert!(cfg.validate().is_err());
        assert!(SweepConfig::preset("nope").is_err());
        assert_eq!(SweepConfig::preset("paper").unwrap().scenario.n_t, 128);
    }

    fn small_sweep() -> SweepConfig {
        let mut cfg = SweepConfig::desk();
        cfg.scenario.k = 16;
        cfg.scenario.l_c = 8;
        cfg.scenario.taps = 4;
        cfg.scenario.n_tr = 2;
        cfg.scenario.frames = 16;
        cfg.snr_db = vec![10.0];
        cfg.trials = 2;
        cfg
    }

    #[test]
    fn sweep_is_deterministic() {
        let cfg = small_sweep();
        let a = sweep_csv(&cfg).unwrap();
        let b = sweep_csv(&cfg).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines[0], METRIC_SCHEMA);
        assert_eq!(lines[1], METRIC_HEADER);
        assert_eq!(lines.len(), 2 + cfg.scenario.n_s.len());
    }

    #[test]
    fn rows_apply_overhead_exactly() {
        let cfg = small_sweep();
        let factor = cfg.scenario.overhead().unwrap();
        for row in sweep_rows(&cfg).unwrap() {
            assert_eq!(row.se_with_overhead, factor * row.se);
            assert!((0.0..=1.0).contains(&row.p_detect));
            assert!(row.se >= 0.0);
            assert_eq!(row.failures, 0);
        }
    }
}
