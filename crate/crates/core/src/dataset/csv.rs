//! Numeric CSV tables with a header row.

use std::path::Path;

use super::{LabeledDataset, Role};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Loads a rectangular numeric table. When `label_column` is given that
/// column is parsed as a non-negative integer label and removed from the
/// features.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<LabeledDataset> {
    let (features, labels) = load_table(path.as_ref(), label_column, "a non-negative integer label", parse_label)?;
    LabeledDataset::new(features, labels)
}

/// Loads a table whose `role_column` holds `test_normal` / `test_anomaly`
/// (or `normal` / `anomaly`, or `0` / `1`) and whose other columns are features.
pub fn load_csv_with_roles(path: impl AsRef<Path>, role_column: &str) -> Result<(Matrix, Vec<Role>)> {
    let (features, roles) = load_table(path.as_ref(), Some(role_column), "a test role", parse_role)?;
    Ok((features, roles.unwrap_or_default()))
}

fn parse_role(cell: &str) -> Option<Role> {
    match cell {
        "normal" | "0" => Some(Role::TestNormal),
        "anomaly" | "1" => Some(Role::TestAnomaly),
        other => Role::parse(other).filter(|r| *r != Role::TrainNormal),
    }
}

fn load_table<T>(
    path: &Path,
    special: Option<&str>,
    what: &str,
    parse_special: impl Fn(&str) -> Option<T>,
) -> Result<(Matrix, Option<Vec<T>>)> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();

    let special_idx = match special {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::param(format!("no column named `{name}`")))?,
        ),
        None => None,
    };
    let dim = headers.len() - usize::from(special_idx.is_some());

    let mut values = Vec::new();
    let mut extra = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = r + 1;
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == special_idx {
                extra.push(parse_special(cell).ok_or_else(|| Error::Parse {
                    row,
                    col: c + 1,
                    msg: format!("`{cell}` is not {what}"),
                })?);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    col: c + 1,
                    msg: format!("`{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        col: c + 1,
                        msg: "non-finite value".into(),
                    });
                }
                values.push(v);
            }
        }
        rows += 1;
    }

    Ok((Matrix::new(rows, dim, values)?, special_idx.map(|_| extra)))
}

fn parse_label(cell: &str) -> Option<usize> {
    if let Ok(v) = cell.parse::<usize>() {
        return Some(v);
    }
    let v: f64 = cell.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64).then_some(v as usize)
}

fn csv_error(e: ::csv::Error) -> Error {
    match e.into_kind() {
        ::csv::ErrorKind::Io(io) => Error::Io(io),
        ::csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Error::Format(format!(
            "ragged row {}: {len} fields, expected {expected_len}",
            pos.map_or(0, |p| p.line())
        )),
        other => Error::Format(format!("{other:?}")),
    }
}
