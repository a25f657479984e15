//! Results-file and plot-data emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use modfl::report::Record;
use modfl::simulator::{Method, SweepResult};

use crate::Failure;

/// Line-delimited JSON writer for one run's results file.
pub struct ResultsWriter {
    path: PathBuf,
    lines: Vec<String>,
}

impl ResultsWriter {
    pub fn new(out_dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(out_dir)
            .map_err(|e| Failure::data(format!("cannot create output directory {}: {e}", out_dir.display())))?;
        Ok(Self { path: out_dir.join("results.ndjson"), lines: Vec::new() })
    }

    pub fn push<T: Serialize>(&mut self, record_type: &'static str, payload: T) -> Result<(), Failure> {
        let line = Record::new(record_type, payload)
            .to_json_line()
            .map_err(|e| Failure::other(format!("cannot serialize {record_type} record: {e}")))?;
        self.lines.push(line);
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf, Failure> {
        let mut file = fs::File::create(&self.path)
            .map_err(|e| Failure::data(format!("cannot write {}: {e}", self.path.display())))?;
        for line in &self.lines {
            writeln!(file, "{line}").map_err(|e| Failure::data(format!("cannot write {}: {e}", self.path.display())))?;
        }
        Ok(self.path)
    }
}

/// One plot-data CSV per method: epsilon, mean R^2 over seeds, sample
/// standard deviation, method name.
pub fn write_plot_data(out_dir: &Path, result: &SweepResult) -> Result<Vec<PathBuf>, Failure> {
    let methods: Vec<Method> = {
        let mut seen = Vec::new();
        for row in &result.rows {
            if !seen.contains(&row.method) {
                seen.push(row.method);
            }
        }
        seen
    };

    let mut written = Vec::new();
    for method in methods {
        let mut eps_values: Vec<f64> = result.rows.iter().filter(|r| r.method == method).map(|r| r.eps).collect();
        eps_values.sort_by(f64::total_cmp);
        eps_values.dedup();

        let path = out_dir.join(format!("plot_{}.csv", method.name()));
        let mut body = String::from("epsilon,mean_r2,sd_r2,method\n");
        for eps in eps_values {
            let values: Vec<f64> = result
                .rows
                .iter()
                .filter(|r| r.method == method && r.eps == eps)
                .map(|r| r.r2)
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            body.push_str(&format!("{eps},{mean},{sd},{}\n", method.name()));
        }
        fs::write(&path, body).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
