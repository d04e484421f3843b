//! Dataset CSV ingestion.
//!
//! Input format: header `id,smiles,efficiency,cell_line`, one molecule per
//! line. Efficiency is log2-transformed upstream and may be blank in
//! predict-only mode. SMILES in the supported grammar never contain commas
//! or quotes, so no quoting rules apply.

use crate::smiles::{parse, SmilesError};
use serde::Serialize;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("line {line}: expected header id,smiles,efficiency,cell_line")]
    BadHeader { line: usize },
    #[error("line {line}: expected 4 comma-separated fields, got {got}")]
    BadFieldCount { line: usize, got: usize },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: bad number {value:?} in efficiency column")]
    BadNumber { line: usize, value: String },
    #[error("line {line}: missing efficiency for id {id}")]
    MissingEfficiency { line: usize, id: String },
    #[error("line {line}: id {id}: {source}")]
    UnparseableSmiles {
        line: usize,
        id: String,
        source: SmilesError,
    },
    #[error("dataset has no rows")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetRecord {
    pub id: String,
    pub smiles: String,
    /// log2 transfection efficiency; absent in predict-only inputs.
    pub efficiency: Option<f64>,
    pub cell_line: String,
}

/// Whether the efficiency column must be populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestMode {
    RequireEfficiency,
    AllowMissingEfficiency,
}

pub fn ingest_str(content: &str, mode: IngestMode) -> Result<Vec<DatasetRecord>, IngestError> {
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or(IngestError::Empty)?;
    let header_fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if header_fields != ["id", "smiles", "efficiency", "cell_line"] {
        return Err(IngestError::BadHeader { line: 1 });
    }

    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(IngestError::BadFieldCount {
                line,
                got: fields.len(),
            });
        }
        let id = fields[0].to_string();
        if id.is_empty() {
            return Err(IngestError::BadFieldCount { line, got: 0 });
        }
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateId { line, id });
        }
        let smiles = fields[1].to_string();
        parse(&smiles).map_err(|source| IngestError::UnparseableSmiles {
            line,
            id: id.clone(),
            source,
        })?;
        let efficiency = if fields[2].is_empty() {
            if mode == IngestMode::RequireEfficiency {
                return Err(IngestError::MissingEfficiency { line, id });
            }
            None
        } else {
            let v: f64 = fields[2].parse().map_err(|_| IngestError::BadNumber {
                line,
                value: fields[2].to_string(),
            })?;
            if !v.is_finite() {
                return Err(IngestError::BadNumber {
                    line,
                    value: fields[2].to_string(),
                });
            }
            Some(v)
        };
        records.push(DatasetRecord {
            id,
            smiles,
            efficiency,
            cell_line: fields[3].to_string(),
        });
    }
    if records.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(records)
}

pub fn ingest_path(
    path: &std::path::Path,
    mode: IngestMode,
) -> Result<Vec<DatasetRecord>, crate::pipeline::PipelineError> {
    let content = std::fs::read_to_string(path).map_err(|e| {
        crate::pipeline::PipelineError::Io(format!("{}: {e}", path.display()))
    })?;
    Ok(ingest_str(&content, mode)?)
}
