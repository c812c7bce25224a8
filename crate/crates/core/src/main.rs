use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmwave_sync::config;
use mmwave_sync::experiments::{
    preamble_reference, run_sweep, run_sync_only, simulate_trial, PointContext, SweepConfig, METRIC_HEADER,
    METRIC_SCHEMA, SYNC_HEADER, SYNC_SCHEMA,
};
use mmwave_sync::io;
use mmwave_sync::link::ReceivedFrame;
use mmwave_sync::sync::{joint_sync, FrameTraining};
use mmwave_sync::{Error, Result};

#[derive(Parser)]
#[command(name = "mmwave-sync", about = "Hybrid MIMO-OFDM synchronization and channel estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (stdout when omitted, where applicable)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Root seed, overrides the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Starting preset: desk or paper
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Worker threads (results do not depend on this)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline sweep, one CSV row per grid point and stream count
    Sweep(Common),
    /// Synchronization only, one CSV row per frame
    SyncOnly(Common),
    /// Write the first trial's channel taps (and optionally its frequency response)
    ChannelGen {
        #[command(flatten)]
        common: Common,
        /// Also write the K-point frequency response to this file
        #[arg(long)]
        freq: Option<PathBuf>,
    },
    /// Write or verify a golden received-frame fixture directory
    GoldenCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fixture: PathBuf,
        /// Create the fixture instead of checking it
        #[arg(long)]
        write: bool,
    },
}

fn load(common: &Common) -> Result<SweepConfig> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = config::parse(&text, &common.preset)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn sweep(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let mut out = sink(&common.output)?;
    writeln!(out, "{METRIC_SCHEMA}\n{METRIC_HEADER}")?;
    run_sweep(&cfg, |row| {
        writeln!(out, "{}", row.csv())?;
        out.flush()?;
        Ok(())
    })
}

fn sync_only(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let mut out = sink(&common.output)?;
    writeln!(out, "{SYNC_SCHEMA}\n{SYNC_HEADER}")?;
    run_sync_only(&cfg, |row| {
        writeln!(out, "{row}")?;
        Ok(())
    })
}

fn first_point(cfg: &SweepConfig) -> Result<PointContext> {
    let point = cfg.points().into_iter().next().ok_or(Error::Format("empty sweep grid".into()))?;
    PointContext::new(&cfg.scenario, point)
}

fn channel_gen(common: &Common, freq: &Option<PathBuf>) -> Result<()> {
    let cfg = load(common)?;
    let ctx = first_point(&cfg)?;
    let sim = simulate_trial(&ctx, 0, cfg.seed, 1)?;
    let path = common.output.clone().unwrap_or_else(|| PathBuf::from("channel.bin"));
    io::write_channel(BufWriter::new(File::create(&path)?), &sim.channel.taps, sim.channel.sampling_interval)?;
    if let Some(f) = freq {
        let h = mmwave_sync::channel::frequency_response(&sim.channel, cfg.scenario.k)?;
        io::write_channel(BufWriter::new(File::create(f)?), &h, sim.channel.sampling_interval)?;
    }
    Ok(())
}

fn golden(common: &Common, dir: &Path, write: bool) -> Result<bool> {
    let cfg_path = dir.join("config.txt");
    let text = if write {
        let t = match &common.config {
            Some(p) => fs::read_to_string(p)?,
            None => format!("preset = {}\n", common.preset),
        };
        fs::create_dir_all(dir)?;
        fs::write(&cfg_path, &t)?;
        t
    } else {
        fs::read_to_string(&cfg_path)?
    };
    let mut cfg = config::parse(&text, &common.preset)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let ctx = first_point(&cfg)?;
    let (plan, frame) = if write {
        let sim = simulate_trial(&ctx, 0, cfg.seed, 1)?;
        let f = &sim.frames[0];
        let frame = ReceivedFrame { samples: f.samples.clone(), truth: f.impairments.clone(), snr_db: ctx.point.snr_db };
        io::write_plan(BufWriter::new(File::create(dir.join("plan.txt"))?), &sim.plan)?;
        io::write_received(BufWriter::new(File::create(dir.join("frame.txt"))?), &frame)?;
        (sim.plan, frame)
    } else {
        (
            io::read_plan(BufReader::new(File::open(dir.join("plan.txt"))?))?,
            io::read_received(BufReader::new(File::open(dir.join("frame.txt"))?))?,
        )
    };
    let training = FrameTraining::new(ctx.sync.geometry, &plan.frames[0])?;
    let est = joint_sync(&frame.samples, &training, &preamble_reference(&plan), &ctx.sync)?;
    let mut values = vec![est.n0_hat as f64, est.cfo_hat, est.sigma2_hat];
    values.extend(est.g_hat_taps.iter().flat_map(|z| [z.re, z.im]));
    let path = dir.join("expected.txt");
    if write {
        let body: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        fs::write(&path, body.join("\n") + "\n")?;
        println!("wrote fixture to {}", dir.display());
        return Ok(true);
    }
    let expected: Vec<f64> = fs::read_to_string(&path)?
        .lines()
        .map(|l| l.trim().parse::<f64>().map_err(|_| Error::Format("bad expected value".into())))
        .collect::<Result<_>>()?;
    if expected.len() != values.len() {
        println!("FAIL: expected {} values, got {}", expected.len(), values.len());
        return Ok(false);
    }
    let scale = expected.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let worst = expected.iter().zip(&values).map(|(a, b)| (a - b).abs() / scale).fold(0.0, f64::max);
    let ok = worst <= 1e-9 && expected[0] == values[0];
    println!("{}: max relative deviation {worst:e}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    let threads = match &cli.command {
        Command::Sweep(c) | Command::SyncOnly(c) => c.threads,
        Command::ChannelGen { common, .. } | Command::GoldenCheck { common, .. } => common.threads,
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    match &cli.command {
        Command::Sweep(c) => sweep(c).map(|_| true),
        Command::SyncOnly(c) => sync_only(c).map(|_| true),
        Command::ChannelGen { common, freq } => channel_gen(common, freq).map(|_| true),
        Command::GoldenCheck { common, fixture, write } => golden(common, fixture, *write),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
