//! Strict CSV ingestion: header row required, every referenced cell must
//! parse as a finite number, errors carry row and column positions.

use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum IngestError {
    Io(std::io::Error),
    MissingHeader,
    MissingColumn(String),
    EmptyColumn(String),
    Parse {
        row: usize,
        column: String,
        cell: String,
    },
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::Io(e) => write!(f, "io error: {e}"),
            IngestError::MissingHeader => write!(f, "input file has no header row"),
            IngestError::MissingColumn(c) => write!(f, "column '{c}' not found in header"),
            IngestError::EmptyColumn(c) => write!(f, "column '{c}' has no data rows"),
            IngestError::Parse { row, column, cell } => write!(
                f,
                "row {row}, column '{column}': cannot parse '{cell}' as a finite number"
            ),
            IngestError::RaggedRow { row, expected, got } => {
                write!(f, "row {row}: expected {expected} cells, got {got}")
            }
        }
    }
}

impl std::error::Error for IngestError {}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e)
    }
}

fn split_row(line: &str) -> Vec<String> {
    line.split(',').map(|c| c.trim().to_string()).collect()
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64, IngestError> {
    let v: f64 = cell.parse().map_err(|_| IngestError::Parse {
        row,
        column: column.to_string(),
        cell: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(IngestError::Parse {
            row,
            column: column.to_string(),
            cell: cell.to_string(),
        });
    }
    Ok(v)
}

/// One numeric column by name, values in file order.
pub fn ingest_column(path: &Path, column: &str) -> Result<Vec<f64>, IngestError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(IngestError::MissingHeader)?;
    let headers = split_row(header);
    let col = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| IngestError::MissingColumn(column.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells = split_row(line);
        if cells.len() != headers.len() {
            return Err(IngestError::RaggedRow {
                row: i + 1,
                expected: headers.len(),
                got: cells.len(),
            });
        }
        out.push(parse_cell(&cells[col], i + 1, column)?);
    }
    if out.is_empty() {
        return Err(IngestError::EmptyColumn(column.to_string()));
    }
    Ok(out)
}

/// The paired layout `id,pre,post`.
pub fn ingest_paired(path: &Path) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>), IngestError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(IngestError::MissingHeader)?;
    let headers = split_row(header);
    let find = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (ci, cp, cq) = (find("id")?, find("pre")?, find("post")?);
    let mut ids = Vec::new();
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells = split_row(line);
        if cells.len() != headers.len() {
            return Err(IngestError::RaggedRow {
                row: i + 1,
                expected: headers.len(),
                got: cells.len(),
            });
        }
        let id = cells[ci].parse::<usize>().map_err(|_| IngestError::Parse {
            row: i + 1,
            column: "id".to_string(),
            cell: cells[ci].clone(),
        })?;
        ids.push(id);
        pre.push(parse_cell(&cells[cp], i + 1, "pre")?);
        post.push(parse_cell(&cells[cq], i + 1, "post")?);
    }
    if ids.is_empty() {
        return Err(IngestError::EmptyColumn("id".to_string()));
    }
    Ok((ids, pre, post))
}
