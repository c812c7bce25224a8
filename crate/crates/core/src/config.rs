//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! A `preset = desk|paper` line selects the starting values; every other key
//! overrides one field. See the README for the full key list.

use crate::channel::ClusterGenerator;
use crate::error::{Error, Result};
use crate::experiments::{ChannelMode, SweepConfig};
use crate::sync::{PnForm, TimingMetric};

fn bad(key: &str, value: &str) -> Error {
    Error::Format(format!("invalid value '{value}' for key '{key}'"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn float(key: &str, value: &str) -> Result<f64> {
    match value {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => num(key, value),
    }
}

fn list<T>(key: &str, value: &str, f: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(|v| f(key, v.trim())).collect()
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

fn optional<T>(key: &str, value: &str, f: impl Fn(&str, &str) -> Result<T>) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        f(key, value).map(Some)
    }
}

fn generator(cfg: &mut SweepConfig) -> &mut ClusterGenerator {
    if !matches!(cfg.scenario.channel, ChannelMode::Clustered(_)) {
        cfg.scenario.channel = ChannelMode::Clustered(ClusterGenerator::default());
    }
    match &mut cfg.scenario.channel {
        ChannelMode::Clustered(g) => g,
        ChannelMode::OnGrid { .. } => unreachable!(),
    }
}

/// Apply one key to a configuration.
pub fn apply(cfg: &mut SweepConfig, key: &str, value: &str) -> Result<()> {
    let s = &mut cfg.scenario;
    match key {
        "snr_db" => cfg.snr_db = list(key, value, float)?,
        "g_theta_dbc" => cfg.g_theta_dbc = list(key, value, float)?,
        "l_r" => cfg.l_r = list(key, value, num)?,
        "trials" => cfg.trials = num(key, value)?,
        "seed" => cfg.seed = num(key, value)?,
        "n_t" => s.n_t = num(key, value)?,
        "n_r" => s.n_r = num(key, value)?,
        "l_t" => s.l_t = num(key, value)?,
        "k" => s.k = num(key, value)?,
        "l_c" => s.l_c = num(key, value)?,
        "n_tr" => s.n_tr = num(key, value)?,
        "frames" => s.frames = num(key, value)?,
        "taps" => s.taps = num(key, value)?,
        "sample_rate" => s.sample_rate = float(key, value)?,
        "max_cfo_hz" => s.max_cfo_hz = float(key, value)?,
        "n0_max" => s.n0_max = num(key, value)?,
        "n0_fixed" => s.n0_fixed = optional(key, value, num)?,
        "pn_enabled" => s.pn_enabled = flag(key, value)?,
        "f_z" => s.f_z = float(key, value)?,
        "f_p" => s.f_p = float(key, value)?,
        "zc_root" => s.zc_root = num(key, value)?,
        "preamble_boost_db" => s.preamble_boost_db = float(key, value)?,
        "rolloff" => s.rolloff = float(key, value)?,
        "pulse_span" => s.pulse_span = num(key, value)?,
        "channel" => {
            s.channel = match value {
                "clustered" => ChannelMode::Clustered(ClusterGenerator::default()),
                "on_grid" => ChannelMode::OnGrid { paths: 1 },
                _ => return Err(bad(key, value)),
            }
        }
        "on_grid_paths" => s.channel = ChannelMode::OnGrid { paths: num(key, value)? },
        "clusters" => generator(cfg).num_clusters = num(key, value)?,
        "rays_per_cluster" => generator(cfg).rays_per_cluster = num(key, value)?,
        "angle_spread_deg" => generator(cfg).angle_spread = float(key, value)?.to_radians(),
        "cluster_delay_mean" => generator(cfg).cluster_delay_mean = float(key, value)?,
        "ray_delay_mean" => generator(cfg).ray_delay_mean = float(key, value)?,
        "rician_db" => generator(cfg).rician_factor_db = float(key, value)?,
        "pathloss" => generator(cfg).pathloss = float(key, value)?,
        "grid_factor_t" => s.grid_factor_t = num(key, value)?,
        "grid_factor_r" => s.grid_factor_r = num(key, value)?,
        "n_alt" => s.n_alt = num(key, value)?,
        "cfo_points" => s.cfo_points = num(key, value)?,
        "cfo_tolerance" => s.cfo_tolerance = float(key, value)?,
        "cfo_refine" => s.cfo_refine = flag(key, value)?,
        "pn_correction" => s.pn_correction = flag(key, value)?,
        "pn_form" => {
            s.pn_form = match value {
                "residual" => PnForm::Residual,
                "literal" => PnForm::Literal,
                _ => return Err(bad(key, value)),
            }
        }
        "timing_metric" => {
            s.timing_metric = match value {
                "matched" => TimingMetric::MatchedFilter,
                "per_sample" => TimingMetric::PerSample,
                _ => return Err(bad(key, value)),
            }
        }
        "genie_sigma2" => s.genie_sigma2 = flag(key, value)?,
        "known_n0" => s.known_n0 = flag(key, value)?,
        "swomp_max_iters" => s.swomp.max_iters = num(key, value)?,
        "swomp_threshold" => s.swomp.threshold = float(key, value)?,
        "n_s" => s.n_s = list(key, value, num)?,
        "coherence_time" => s.coherence_time = float(key, value)?,
        "overhead" => {
            s.paper_overhead = match value {
                "computed" => false,
                "paper" => true,
                _ => return Err(bad(key, value)),
            }
        }
        "data_snr_db" => s.data_snr_db = optional(key, value, float)?,
        _ => return Err(Error::Format(format!("unknown key '{key}'"))),
    }
    Ok(())
}

fn entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parse a configuration, starting from `default_preset` unless the text
/// names its own preset.
pub fn parse(text: &str, default_preset: &str) -> Result<SweepConfig> {
    let kv = entries(text)?;
    let preset = kv.iter().rev().find(|(k, _)| k == "preset").map_or(default_preset, |(_, v)| v.as_str());
    let mut cfg = SweepConfig::preset(preset)?;
    for (k, v) in kv.iter().filter(|(k, _)| k != "preset") {
        apply(&mut cfg, k, v)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod test {
    use super::*;

    #[test]
    fn parses_overrides() {
        let cfg = parse("# demo\npreset = desk\nsnr_db = -10, 0, inf\nl_r = 1,2\ntrials = 3 # few\npn_form = literal\n", "paper").unwrap();
        assert_eq!(cfg.snr_db, vec![-10.0, 0.0, f64::INFINITY]);
        assert_eq!(cfg.l_r, vec![1, 2]);
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.scenario.k, 64);
        assert_eq!(cfg.scenario.pn_form, PnForm::Literal);
    }

    #[test]
    fn rejects_unknown() {
        assert!(parse("bogus = 1", "desk").is_err());
        assert!(parse("trials = many", "desk").is_err());
        assert!(parse("no equals sign", "desk").is_err());
    }
}
