//! File formats.
//!
//! * Channel files (binary, little endian): magic `MMWCH001`, `u64` N_t, `u64`
//!   N_r, `u64` matrix count, `f64` sampling interval, then every matrix in
//!   row-major order as interleaved `f64` real/imaginary pairs. Used for both
//!   delay-tap truths and reconstructed per-subcarrier estimates.
//! * Training plans (text): `key=value` header lines followed by one
//!   `frame <m> active=<j> p=<list> q=<list>` line per frame.
//! * Received frames (text): header lines, a `pn=` line and one
//!   `sample <chain> <n> <re> <im>` line per sample. Floats are written in
//!   shortest round-trip form, so reloading is bit exact.

use std::io::{BufRead, Read, Write};

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::impairments::ImpairmentRealization;
use crate::linalg::CMat;
use crate::link::ReceivedFrame;
use crate::training::{TrainingConfig, TrainingPlan};

const CHANNEL_MAGIC: &[u8; 8] = b"MMWCH001";

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_channel<W: Write>(mut w: W, matrices: &[CMat], sampling_interval: f64) -> Result<()> {
    let (nr, nt) = matrices.first().map_or((0, 0), |m| m.shape());
    if matrices.iter().any(|m| m.shape() != (nr, nt)) {
        return Err(crate::error::dim("matrices must share one shape"));
    }
    w.write_all(CHANNEL_MAGIC)?;
    for v in [nt as u64, nr as u64, matrices.len() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&sampling_interval.to_le_bytes())?;
    for m in matrices {
        for r in 0..nr {
            for c in 0..nt {
                w.write_all(&m[(r, c)].re.to_le_bytes())?;
                w.write_all(&m[(r, c)].im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_channel<R: Read>(mut r: R) -> Result<(Vec<CMat>, f64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHANNEL_MAGIC {
        return Err(fmt_err("not a channel file"));
    }
    let mut b = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let nt = next_u64(&mut r)? as usize;
    let nr = next_u64(&mut r)? as usize;
    let count = next_u64(&mut r)? as usize;
    let mut f = [0u8; 8];
    let mut next_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut f)?;
        Ok(f64::from_le_bytes(f))
    };
    let ts = next_f64(&mut r)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut m = CMat::zeros(nr, nt);
        for row in 0..nr {
            for col in 0..nt {
                let re = next_f64(&mut r)?;
                let im = next_f64(&mut r)?;
                m[(row, col)] = Complex64::new(re, im);
            }
        }
        out.push(m);
    }
    Ok((out, ts))
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| fmt_err(format!("bad list entry '{x}'")))).collect()
}

pub fn write_plan<W: Write>(mut w: W, plan: &TrainingPlan) -> Result<()> {
    let c = &plan.config;
    writeln!(w, "# mmwave-sync training plan v1")?;
    for (k, v) in [
        ("n_t", c.n_t.to_string()),
        ("n_r", c.n_r.to_string()),
        ("l_t", c.l_t.to_string()),
        ("l_r", c.l_r.to_string()),
        ("k", c.k.to_string()),
        ("l_c", c.l_c.to_string()),
        ("n_tr", c.n_tr.to_string()),
        ("zc_root", c.zc_root.to_string()),
        ("preamble_boost", c.preamble_boost.to_string()),
        ("seed", plan.seed.to_string()),
        ("pilot_seed", plan.pilot_seed.to_string()),
        ("frames", plan.frames.len().to_string()),
    ] {
        writeln!(w, "{k}={v}")?;
    }
    for f in &plan.frames {
        writeln!(
            w,
            "frame {} active={} p={} q={}",
            f.index,
            f.precoder.active,
            join(&f.combiner.selected),
            join(&f.precoder.q_index)
        )?;
    }
    Ok(())
}

fn header_map(lines: &[String]) -> std::collections::HashMap<String, String> {
    lines
        .iter()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .filter(|(k, _)| !k.contains(' '))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn get<T: std::str::FromStr>(h: &std::collections::HashMap<String, String>, key: &str) -> Result<T> {
    h.get(key)
        .ok_or_else(|| fmt_err(format!("missing key '{key}'")))?
        .parse()
        .map_err(|_| fmt_err(format!("bad value for '{key}'")))
}

pub fn read_plan<R: BufRead>(r: R) -> Result<TrainingPlan> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let h = header_map(&lines);
    let config = TrainingConfig {
        n_t: get(&h, "n_t")?,
        n_r: get(&h, "n_r")?,
        l_t: get(&h, "l_t")?,
        l_r: get(&h, "l_r")?,
        k: get(&h, "k")?,
        l_c: get(&h, "l_c")?,
        n_tr: get(&h, "n_tr")?,
        zc_root: get(&h, "zc_root")?,
        preamble_boost: get(&h, "preamble_boost")?,
    };
    let frames: usize = get(&h, "frames")?;
    let mut parts = Vec::with_capacity(frames);
    for l in lines.iter().filter(|l| l.starts_with("frame ")) {
        let mut p = Vec::new();
        let mut q = Vec::new();
        let mut active = None;
        for tok in l.split_whitespace().skip(2) {
            match tok.split_once('=') {
                Some(("active", v)) => active = v.parse::<usize>().ok(),
                Some(("p", v)) => p = parse_list(v)?,
                Some(("q", v)) => q = parse_list(v)?,
                _ => return Err(fmt_err(format!("bad frame token '{tok}'"))),
            }
        }
        if active != Some(crate::training::active_subarray(parts.len(), config.l_t)) {
            return Err(fmt_err("frame schedule does not match the round-robin subarray order"));
        }
        parts.push((q, p));
    }
    if parts.len() != frames {
        return Err(fmt_err("frame count mismatch"));
    }
    TrainingPlan::from_parts(config, get(&h, "seed")?, get(&h, "pilot_seed")?, parts)
}

pub fn write_received<W: Write>(mut w: W, frame: &ReceivedFrame) -> Result<()> {
    writeln!(w, "# mmwave-sync received frame v1")?;
    writeln!(w, "chains={}", frame.samples.nrows())?;
    writeln!(w, "len={}", frame.samples.ncols())?;
    writeln!(w, "n0={}", frame.truth.n0)?;
    writeln!(w, "cfo={}", frame.truth.cfo)?;
    writeln!(w, "snr_db={}", frame.snr_db)?;
    writeln!(w, "pn={}", join(frame.truth.pn.iter()))?;
    for i in 0..frame.samples.nrows() {
        for n in 0..frame.samples.ncols() {
            let z = frame.samples[(i, n)];
            writeln!(w, "sample {i} {n} {} {}", z.re, z.im)?;
        }
    }
    Ok(())
}

pub fn read_received<R: BufRead>(r: R) -> Result<ReceivedFrame> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let h = header_map(&lines);
    let chains: usize = get(&h, "chains")?;
    let len: usize = get(&h, "len")?;
    let pn: Vec<f64> = parse_list(h.get("pn").map_or("", |s| s.as_str()))?;
    let mut samples = CMat::zeros(chains, len);
    let mut seen = 0;
    for l in lines.iter().filter(|l| l.starts_with("sample ")) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 5 {
            return Err(fmt_err("bad sample line"));
        }
        let p = |s: &str| s.parse::<f64>().map_err(|_| fmt_err("bad sample value"));
        let (i, n): (usize, usize) = (
            t[1].parse().map_err(|_| fmt_err("bad chain index"))?,
            t[2].parse().map_err(|_| fmt_err("bad sample index"))?,
        );
        if i >= chains || n >= len {
            return Err(fmt_err("sample index out of range"));
        }
        samples[(i, n)] = Complex64::new(p(t[3])?, p(t[4])?);
        seen += 1;
    }
    if seen != chains * len {
        return Err(fmt_err("missing samples"));
    }
    Ok(ReceivedFrame {
        samples,
        truth: ImpairmentRealization { n0: get(&h, "n0")?, cfo: get(&h, "cfo")?, pn: DVector::from_vec(pn) },
        snr_db: get(&h, "snr_db")?,
    })
}

#[cfg(test)]
mod test {
    use super::*;
    use crate::rng::{complex_normal, stream};

    #[test]
    fn channel_round_trip() {
        let mut rng = stream(2, &[]);
        let taps: Vec<CMat> = (0..3).map(|_| CMat::from_fn(2, 5, |_, _| complex_normal(&mut rng, 1.0))).collect();
        let mut buf = Vec::new();
        write_channel(&mut buf, &taps, 5e-10).unwrap();
        assert_eq!(buf.len(), 8 + 32 + 3 * 2 * 5 * 16);
        let (back, ts) = read_channel(buf.as_slice()).unwrap();
        assert_eq!(back, taps);
        assert_eq!(ts, 5e-10);
        assert!(read_channel(&b"garbage!"[..]).is_err());
    }

    #[test]
    fn plan_round_trip() {
        let cfg = TrainingConfig { n_t: 32, n_r: 16, l_t: 4, l_r: 4, k: 64, l_c: 16, n_tr: 4, zc_root: 1, preamble_boost: 10f64.powf(0.6) };
        let plan = TrainingPlan::new(cfg, 6, 77).unwrap();
        let mut buf = Vec::new();
        write_plan(&mut buf, &plan).unwrap();
        let back = read_plan(buf.as_slice()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn received_round_trip() {
        let mut rng = stream(5, &[]);
        let frame = ReceivedFrame {
            samples: CMat::from_fn(2, 7, |_, _| complex_normal(&mut rng, 1.0)),
            truth: ImpairmentRealization { n0: 3, cfo: 1.234e-5, pn: DVector::from_fn(7, |i, _| i as f64 * 0.01) },
            snr_db: -3.5,
        };
        let mut buf = Vec::new();
        write_received(&mut buf, &frame).unwrap();
        assert_eq!(read_received(buf.as_slice()).unwrap(), frame);
    }
}
