//! Scaling sweeps: wall time and per-role traffic as the column count grows.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use anyhow::Result;
use fedsvd::protocol::{ProtocolMessage, SessionConfig};
use fedsvd::transport::PartyId;

use crate::data::{even_widths, split_columns, synth_powerlaw};
use crate::run::{run_session, RunOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub m: usize,
    pub sizes: Vec<usize>,
    pub users: usize,
    pub block_size: usize,
    pub alpha: f64,
    pub seed: u64,
    pub opts: RunOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPoint {
    pub n: usize,
    pub wall_secs: f64,
    /// Bytes sent by every role, framing included.
    pub bytes_sent: BTreeMap<PartyId, u64>,
    pub widths: Vec<usize>,
    /// Encoded size of the seed message for `P`.
    pub seed_message_bytes: usize,
}

/// One session per size on `synth_powerlaw(m, n)` split evenly between
/// users. Only the session itself is timed.
pub fn bench_sweep(cfg: &BenchConfig) -> Result<Vec<BenchPoint>> {
    let mut out = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let x = synth_powerlaw(cfg.m, n, cfg.alpha, cfg.seed)?;
        let widths = even_widths(n, cfg.users);
        let parts = split_columns(&x, &widths)?;
        let mut session = SessionConfig::new(cfg.m, widths.clone(), cfg.block_size);
        session.master_seed = cfg.seed;
        let start = Instant::now();
        let outcome = run_session(&session, &parts, None, &cfg.opts)?;
        let wall_secs = start.elapsed().as_secs_f64();
        let mut bytes_sent = BTreeMap::new();
        bytes_sent.insert(PartyId::Ta, outcome.ta.stats.bytes_sent());
        bytes_sent.insert(PartyId::Csp, outcome.csp.stats.bytes_sent());
        for u in &outcome.users {
            bytes_sent.insert(PartyId::User(u.index as u32), u.stats.bytes_sent());
        }
        let seed_message_bytes = ProtocolMessage::SeedP {
            seed: cfg.seed,
            m: cfg.m as u64,
            block_size: cfg.block_size as u64,
        }
        .encode()
        .len();
        log::info!("n={n}: {wall_secs:.3}s");
        out.push(BenchPoint {
            n,
            wall_secs,
            bytes_sent,
            widths,
            seed_message_bytes,
        });
    }
    Ok(out)
}

/// Coefficient of determination of the least-squares line through the points.
pub fn linear_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

/// CSV with one row per size: `n,wall_secs,ta,csp,user0,…`.
pub fn write_bench_csv(points: &[BenchPoint], w: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let roles: Vec<PartyId> = points.first().map(|p| p.bytes_sent.keys().copied().collect()).unwrap_or_default();
    let mut header = vec!["n".to_string(), "wall_secs".to_string()];
    header.extend(roles.iter().map(|r| format!("bytes_sent_{r}")));
    csv.write_record(&header)?;
    for p in points {
        let mut row = vec![p.n.to_string(), format!("{:.6}", p.wall_secs)];
        row.extend(roles.iter().map(|r| p.bytes_sent.get(r).copied().unwrap_or(0).to_string()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_of_exact_and_noisy_lines() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((linear_r2(&xs, &[3.0, 5.0, 7.0, 9.0]) - 1.0).abs() < 1e-12);
        assert!(linear_r2(&xs, &[1.0, 4.0, 9.0, 16.0]) < 1.0);
        assert!(linear_r2(&xs, &[1.0, -1.0, 1.0, -1.0]) < 0.3);
    }
}
