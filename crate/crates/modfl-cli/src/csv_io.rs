//! CSV dataset ingestion: rectangular numeric CSV with a header row, one
//! named target column, every other column a feature.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use modfl::model::Dataset;

use crate::Failure;

pub fn load_csv(path: &Path, target: &str) -> Result<Dataset, Failure> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Failure::data(format!("cannot open dataset {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Failure::data(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let target_idx = headers.iter().position(|h| h == target).ok_or_else(|| {
        Failure::data(format!(
            "target column '{target}' not found in {}; available columns: {}",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let dim = headers.len().saturating_sub(1);
    if dim == 0 {
        return Err(Failure::data(format!("{} has no feature columns besides '{target}'", path.display())));
    }

    let mut features: Vec<f64> = Vec::new();
    let mut responses: Vec<f64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row_number = row_idx + 1; // 1-based data row, excluding the header
        let record =
            record.map_err(|e| Failure::data(format!("cannot read row {row_number} of {}: {e}", path.display())))?;
        if record.len() != headers.len() {
            return Err(Failure::data(format!(
                "row {row_number} of {} has {} cells, expected {}",
                path.display(),
                record.len(),
                headers.len()
            )));
        }
        for (col_idx, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                Failure::data(format!(
                    "non-numeric cell at row {row_number}, column '{}' of {}: '{cell}'",
                    &headers[col_idx],
                    path.display()
                ))
            })?;
            if col_idx == target_idx {
                responses.push(value);
            } else {
                features.push(value);
            }
        }
    }
    if responses.is_empty() {
        return Err(Failure::data(format!("{} contains no data rows", path.display())));
    }

    let k = responses.len();
    let x = DMatrix::from_row_slice(k, dim, &features);
    let y = DVector::from_vec(responses);
    Dataset::new(x, y).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}
