//! Flat `key = value` session files. Every key names a session field;
//! `#` starts a comment.

use std::path::Path;

use fedsvd::protocol::{SessionConfig, Task};
use fedsvd::secagg::{Codec, FixedPointCodec, DEFAULT_FRAC_BITS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing key {0}")]
    Missing(&'static str),
    #[error("invalid session: {0}")]
    Invalid(String),
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Syntax {
        line,
        msg: format!("{key}: cannot parse {v:?}"),
    })
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Syntax {
            line,
            msg: format!("{key}: expected true or false, got {v:?}"),
        }),
    }
}

pub fn parse_config(text: &str) -> Result<SessionConfig, ConfigError> {
    let mut cfg = SessionConfig::new(0, Vec::new(), 0);
    let (mut m, mut widths, mut block) = (None, None, None);
    let mut frac_bits = DEFAULT_FRAC_BITS;
    let mut float_codec = false;
    let mut task = "svd".to_string();
    let mut label_holder = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            msg: format!("expected key = value, got {body:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "session_id" => cfg.session_id = parse_num(line, key, value)?,
            "m" => m = Some(parse_num(line, key, value)?),
            "widths" => {
                widths = Some(
                    value
                        .split(',')
                        .map(|w| parse_num(line, key, w.trim()))
                        .collect::<Result<Vec<usize>, _>>()?,
                )
            }
            "block_size" => block = Some(parse_num(line, key, value)?),
            "master_seed" => cfg.master_seed = parse_num(line, key, value)?,
            "user_seed" => cfg.user_seed = parse_num(line, key, value)?,
            "codec" => {
                float_codec = match value {
                    "fixed" => false,
                    "float" => true,
                    _ => {
                        return Err(ConfigError::Syntax {
                            line,
                            msg: format!("codec must be fixed or float, got {value:?}"),
                        })
                    }
                }
            }
            "frac_bits" => frac_bits = parse_num(line, key, value)?,
            "truncation" => {
                cfg.truncation = match value {
                    "none" | "" => None,
                    v => Some(parse_num(line, key, v)?),
                }
            }
            "recover_u" => cfg.recover_u = parse_bool(line, key, value)?,
            "recover_v" => cfg.recover_v = parse_bool(line, key, value)?,
            "batch_budget" => cfg.batch_budget = parse_num(line, key, value)?,
            "task" => task = value.to_string(),
            "label_holder" => label_holder = Some(parse_num(line, key, value)?),
            _ => {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("unknown key {key:?}"),
                })
            }
        }
    }
    cfg.m = m.ok_or(ConfigError::Missing("m"))?;
    cfg.widths = widths.ok_or(ConfigError::Missing("widths"))?;
    cfg.block_size = block.ok_or(ConfigError::Missing("block_size"))?;
    cfg.codec = if float_codec {
        Codec::Float
    } else {
        Codec::FixedPoint(FixedPointCodec::new(frac_bits).map_err(|e| ConfigError::Invalid(e.to_string()))?)
    };
    cfg.task = match task.as_str() {
        "svd" => Task::Svd,
        "pca" => Task::Pca,
        "lr" => Task::LinReg {
            label_holder: label_holder.ok_or(ConfigError::Missing("label_holder"))?,
        },
        t => return Err(ConfigError::Invalid(format!("unknown task {t:?}"))),
    };
    cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SessionConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Inverse of [`parse_config`].
pub fn config_to_text(cfg: &SessionConfig) -> String {
    let widths: Vec<String> = cfg.widths.iter().map(|w| w.to_string()).collect();
    let mut out = format!(
        "session_id = {}\nm = {}\nwidths = {}\nblock_size = {}\nmaster_seed = {}\nuser_seed = {}\n",
        cfg.session_id,
        cfg.m,
        widths.join(","),
        cfg.block_size,
        cfg.master_seed,
        cfg.user_seed
    );
    match cfg.codec {
        Codec::Float => out.push_str("codec = float\n"),
        Codec::FixedPoint(c) => out.push_str(&format!("codec = fixed\nfrac_bits = {}\n", c.frac_bits())),
    }
    match cfg.truncation {
        Some(r) => out.push_str(&format!("truncation = {r}\n")),
        None => out.push_str("truncation = none\n"),
    }
    out.push_str(&format!(
        "recover_u = {}\nrecover_v = {}\nbatch_budget = {}\n",
        cfg.recover_u, cfg.recover_v, cfg.batch_budget
    ));
    match cfg.task {
        Task::Svd => out.push_str("task = svd\n"),
        Task::Pca => out.push_str("task = pca\n"),
        Task::LinReg { label_holder } => out.push_str(&format!("task = lr\nlabel_holder = {label_holder}\n")),
    }
    out
}
