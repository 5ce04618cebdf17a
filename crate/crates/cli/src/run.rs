//! Session orchestration and per-role output directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use fedsvd::linalg::DenseMatrix;
use fedsvd::protocol::{
    run_fedsvd_on, tcp_loopback_network, CspOutput, FedSvdResult, SessionConfig, SessionOutcome, TaOutput,
    TranscriptEntry,
};
use fedsvd::storage::{write_matrix, Layout};
use fedsvd::transport::{memory_network, Endpoint, PartyId, ShaperConfig, TrafficStats};

use crate::metrics::Factors;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportMode {
    Mem,
    Tcp,
}

impl std::str::FromStr for TransportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mem" => Ok(Self::Mem),
            "tcp" => Ok(Self::Tcp),
            _ => Err(format!("transport must be mem or tcp, got {s:?}")),
        }
    }
}

impl std::fmt::Display for TransportMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mem => "mem",
            Self::Tcp => "tcp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub transport: TransportMode,
    pub shaper: Option<ShaperConfig>,
    pub timeout: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            transport: TransportMode::Mem,
            shaper: None,
            timeout: Duration::from_secs(600),
        }
    }
}

pub fn session_parties(k: usize) -> Vec<PartyId> {
    let mut p = vec![PartyId::Ta, PartyId::Csp];
    p.extend((0..k as u32).map(PartyId::User));
    p
}

/// Runs every role in this process over the chosen transport.
pub fn run_session(
    cfg: &SessionConfig,
    data: &[DenseMatrix],
    label: Option<&[f64]>,
    opts: &RunOptions,
) -> Result<SessionOutcome> {
    let endpoints: BTreeMap<PartyId, Endpoint> = match opts.transport {
        TransportMode::Mem => memory_network(&session_parties(cfg.k())),
        TransportMode::Tcp => tcp_loopback_network(cfg.k(), opts.timeout)?,
    };
    let endpoints = match opts.shaper {
        Some(s) => endpoints.into_iter().map(|(p, e)| (p, e.shape(s))).collect(),
        None => endpoints,
    };
    Ok(run_fedsvd_on(cfg, data, label, endpoints)?)
}

/// Stacks the users' `Vᵢᵀ` blocks into one factorization.
pub fn collect_factors(users: &[FedSvdResult]) -> Option<Factors> {
    let first = users.first()?;
    let blocks: Vec<&DenseMatrix> = users.iter().map(|u| u.vt.as_ref()).collect::<Option<_>>()?;
    Some(Factors {
        u: first.u.clone()?,
        sigma: first.sigma.clone(),
        vt: DenseMatrix::hstack(&blocks).ok()?,
    })
}

fn transcript_text(entries: &[TranscriptEntry]) -> String {
    entries.iter().map(|e| format!("{e}\n")).collect()
}

fn stats_text(stats: &TrafficStats) -> String {
    let mut out = String::new();
    for (dir, map) in [("sent", &stats.sent), ("received", &stats.received)] {
        for (peer, (frames, bytes)) in map {
            let _ = writeln!(out, "{dir} {peer} frames={frames} bytes={bytes}");
        }
    }
    let _ = writeln!(out, "total_sent={}\ntotal_received={}", stats.bytes_sent(), stats.bytes_received());
    out
}

/// Shortest round-trip decimal, one value per line.
fn values_text(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}\n")).collect()
}

fn write(path: PathBuf, text: String) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_ta_output(dir: &Path, ta: &TaOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir.join("transcript.log"), transcript_text(&ta.transcript))?;
    write(dir.join("stats.txt"), stats_text(&ta.stats))
}

/// The server's directory holds only its log, traffic counters and the
/// spectrum it computed.
pub fn write_csp_output(dir: &Path, csp: &CspOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir.join("transcript.log"), transcript_text(&csp.transcript))?;
    write(dir.join("stats.txt"), stats_text(&csp.stats))?;
    write(
        dir.join("summary.txt"),
        format!("aggregation_peak_bytes={}\n", csp.aggregation_peak_bytes),
    )?;
    write(dir.join("sigma.txt"), values_text(&csp.sigma))
}

pub fn write_user_output(dir: &Path, user: &FedSvdResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(u) = &user.u {
        write_matrix(dir.join("u.fsvm"), u, Layout::RowMajor)?;
    }
    if let Some(vt) = &user.vt {
        write_matrix(dir.join("vt.fsvm"), vt, Layout::RowMajor)?;
    }
    if !user.sigma.is_empty() {
        write(dir.join("sigma.txt"), values_text(&user.sigma))?;
    }
    if let Some(w) = &user.weights {
        write(dir.join("weights.txt"), values_text(w))?;
    }
    write(dir.join("transcript.log"), transcript_text(&user.transcript))?;
    write(dir.join("stats.txt"), stats_text(&user.stats))
}

pub fn role_dir(out: &Path, role: PartyId) -> PathBuf {
    out.join(role.to_string())
}

/// One directory per role plus the merged transcript.
pub fn write_outcome(out: &Path, outcome: &SessionOutcome) -> Result<()> {
    write_ta_output(&role_dir(out, PartyId::Ta), &outcome.ta)?;
    write_csp_output(&role_dir(out, PartyId::Csp), &outcome.csp)?;
    for u in &outcome.users {
        write_user_output(&role_dir(out, PartyId::User(u.index as u32)), u)?;
    }
    write(out.join("transcript.log"), outcome.transcript_log())
}
