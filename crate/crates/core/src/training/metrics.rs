use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const METRICS_HEADER: &str = "epoch,step,split,loss,accuracy";

/// One line of the metrics file.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub step: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

impl MetricRow {
    pub fn to_csv_line(&self) -> String {
        format!("{},{},{},{:.10},{:.6}", self.epoch, self.step, self.split, self.loss, self.accuracy)
    }
}

/// Receives metrics and end-of-epoch weights while a model trains.
pub trait TrainObserver {
    fn metric(&mut self, row: &MetricRow) -> Result<()>;

    /// Called after every epoch with the current parameter tensors.
    fn epoch_end(&mut self, _epoch: usize, _weights: &[Tensor]) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NoObserver;

impl TrainObserver for NoObserver {
    fn metric(&mut self, _row: &MetricRow) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for Vec<MetricRow> {
    fn metric(&mut self, row: &MetricRow) -> Result<()> {
        self.push(row.clone());
        Ok(())
    }
}

/// Append-only CSV with columns `epoch,step,split,loss,accuracy`.
pub struct CsvMetrics {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvMetrics {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{METRICS_HEADER}").map_err(|e| Error::io(path, e))?;
        Ok(CsvMetrics {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl TrainObserver for CsvMetrics {
    fn metric(&mut self, row: &MetricRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_csv_line()).map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Renders rows (with header) exactly as [`CsvMetrics`] writes them.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}
