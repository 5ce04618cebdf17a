//! Record of one CLI run, enough to replay it.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::run::TransportMode;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("referenced path {0} does not exist")]
    MissingPath(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    /// Named seeds, e.g. `master_seed`.
    pub seeds: Vec<(String, u64)>,
    pub datasets: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub transport: TransportMode,
    pub bandwidth_bytes_per_sec: Option<f64>,
    pub rtt_ms: Option<f64>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("command = {}\n", self.command);
        if let Some(c) = &self.config {
            out.push_str(&format!("config = {}\n", c.display()));
        }
        for (name, seed) in &self.seeds {
            out.push_str(&format!("seed.{name} = {seed}\n"));
        }
        for d in &self.datasets {
            out.push_str(&format!("dataset = {}\n", d.display()));
        }
        out.push_str(&format!("out_dir = {}\ntransport = {}\n", self.out_dir.display(), self.transport));
        if let Some(b) = self.bandwidth_bytes_per_sec {
            out.push_str(&format!("bandwidth = {b:?}\n"));
        }
        if let Some(r) = self.rtt_ms {
            out.push_str(&format!("rtt_ms = {r:?}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let mut m = RunManifest {
            command: String::new(),
            config: None,
            seeds: Vec::new(),
            datasets: Vec::new(),
            out_dir: PathBuf::new(),
            transport: TransportMode::Mem,
            bandwidth_bytes_per_sec: None,
            rtt_ms: None,
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let err = |msg: String| ManifestError::Syntax { line, msg };
            let (key, value) = body
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected key = value, got {body:?}")))?;
            let number = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: bad number {v:?}")));
            match key {
                "command" => m.command = value.to_string(),
                "config" => m.config = Some(value.into()),
                "dataset" => m.datasets.push(value.into()),
                "out_dir" => m.out_dir = value.into(),
                "transport" => m.transport = value.parse().map_err(err)?,
                "bandwidth" => m.bandwidth_bytes_per_sec = Some(number(value)?),
                "rtt_ms" => m.rtt_ms = Some(number(value)?),
                k => match k.strip_prefix("seed.") {
                    Some(name) => {
                        let seed = value.parse().map_err(|_| err(format!("bad seed {value:?}")))?;
                        m.seeds.push((name.to_string(), seed));
                    }
                    None => return Err(err(format!("unknown key {k:?}"))),
                },
            }
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Checks that the config and every dataset exist.
    pub fn validate(&self) -> Result<(), ManifestError> {
        for p in self.config.iter().chain(&self.datasets) {
            if !p.exists() {
                return Err(ManifestError::MissingPath(p.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("x.fsvm");
        std::fs::write(&data, b"").unwrap();
        let m = RunManifest {
            command: "run".into(),
            config: None,
            seeds: vec![("master_seed".into(), 42), ("user_seed".into(), 7)],
            datasets: vec![data],
            out_dir: dir.path().join("out"),
            transport: TransportMode::Tcp,
            bandwidth_bytes_per_sec: Some(1.25e8),
            rtt_ms: Some(0.5),
        };
        let back = RunManifest::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        back.validate().unwrap();
        let mut missing = m.clone();
        missing.config = Some(dir.path().join("nope.cfg"));
        assert!(matches!(missing.validate(), Err(ManifestError::MissingPath(_))));
        assert!(RunManifest::parse("transport = udp\n").is_err());
    }
}
