//! Loading external tables into dense matrices.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use fedsvd::linalg::DenseMatrix;
use thiserror::Error;

use crate::data::{ratings_to_dense, Rating};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },
    #[error("row {row}, column {col}: cannot parse {value:?} as a number")]
    ParseError { row: usize, col: usize, value: String },
    #[error("no data rows")]
    Empty,
}

/// Reads a rectangular numeric CSV. Row and column numbers in errors are
/// 1-based and count data rows only.
pub fn ingest_csv(path: impl AsRef<Path>, has_header: bool) -> Result<DenseMatrix, IngestError> {
    ingest_csv_from(File::open(path)?, has_header)
}

pub fn ingest_csv_from(input: impl Read, has_header: bool) -> Result<DenseMatrix, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(IngestError::RaggedRows {
                row: i + 1,
                expected,
                got: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| IngestError::ParseError {
                row: i + 1,
                col: j + 1,
                value: field.to_string(),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = width.ok_or(IngestError::Empty)?;
    Ok(DenseMatrix::new(rows, cols, data).expect("rectangular by construction"))
}

/// Reads whitespace-separated `user item rating [timestamp]` lines with
/// 1-based ids into an items×users matrix; missing ratings are zero.
pub fn ingest_ratings(path: impl AsRef<Path>, dims: Option<(usize, usize)>) -> Result<DenseMatrix, IngestError> {
    let reader = BufReader::new(File::open(path)?);
    let mut ratings = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(IngestError::RaggedRows {
                row: i + 1,
                expected: 3,
                got: fields.len(),
            });
        }
        let parse_id = |col: usize| -> Result<u32, IngestError> {
            match fields[col].parse::<u32>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(IngestError::ParseError {
                    row: i + 1,
                    col: col + 1,
                    value: fields[col].to_string(),
                }),
            }
        };
        let user = parse_id(0)?;
        let item = parse_id(1)?;
        let rating = fields[2].parse::<f64>().map_err(|_| IngestError::ParseError {
            row: i + 1,
            col: 3,
            value: fields[2].to_string(),
        })?;
        ratings.push(Rating { user, item, rating });
    }
    if ratings.is_empty() {
        return Err(IngestError::Empty);
    }
    if let Some((items, users)) = dims {
        if let Some(r) = ratings.iter().find(|r| r.item as usize > items || r.user as usize > users) {
            return Err(IngestError::ParseError {
                row: 0,
                col: 0,
                value: format!("user {} item {} outside {items}×{users}", r.user, r.item),
            });
        }
    }
    Ok(ratings_to_dense(&ratings, dims))
}
