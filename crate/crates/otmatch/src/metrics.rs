//! Per-step metrics and wall-clock timing as CSV.
//!
//! Timing lives in its own file so that `metrics.csv` depends only on the
//! config and seed.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use otmatch_core::engine::StepReport;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub lr: f64,
    pub l_sup: f64,
    pub l_un1: f64,
    pub l_un2: f64,
    pub l_un3: f64,
    pub l_total: f64,
    pub mask_rate: f64,
    pub tau_global: f64,
    pub train_acc: f64,
    /// Teacher test accuracy, present on evaluation steps only.
    pub eval_acc: Option<f64>,
}

impl MetricsRow {
    pub fn from_report(r: &StepReport, eval_acc: Option<f64>) -> Self {
        Self {
            step: r.step,
            lr: r.lr,
            l_sup: r.l_sup,
            l_un1: r.l_un1,
            l_un2: r.l_un2,
            l_un3: r.l_un3,
            l_total: r.l_total,
            mask_rate: r.mask_rate,
            tau_global: r.tau_global,
            train_acc: r.train_acc,
            eval_acc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub step: u64,
    pub seconds: f64,
}

/// Buffered CSV sink; rows reach disk on [`CsvSink::flush`] or drop.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl CsvSink<File> {
    /// Creates the file, or appends without a header when `append` is set.
    pub fn open(path: &Path, append: bool) -> Result<Self> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(io_err(path))?;
        let writer = csv::WriterBuilder::new().has_headers(!append).from_writer(file);
        Ok(Self { writer })
    }
}

impl<W: Write> CsvSink<W> {
    pub fn from_writer(w: W) -> Self {
        Self {
            writer: csv::Writer::from_writer(w),
        }
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        Ok(self.writer.serialize(row)?)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(io_err("csv sink"))
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| crate::error::RunError::Io {
                path: "csv sink".into(),
                source: e.into_error(),
            })
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn read_timing(path: &Path) -> Result<Vec<TimingRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_empty_eval() {
        let mut sink = CsvSink::from_writer(Vec::new());
        let row = MetricsRow {
            step: 1,
            lr: 0.03,
            l_sup: 0.5,
            l_un1: 0.0,
            l_un2: -0.69,
            l_un3: 0.1,
            l_total: 0.55,
            mask_rate: 0.25,
            tau_global: 0.5,
            train_acc: 1.0,
            eval_acc: None,
        };
        sink.write(&row).unwrap();
        let text = String::from_utf8(sink.into_inner().unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,lr,l_sup,l_un1,l_un2,l_un3,l_total,mask_rate,tau_global,train_acc,eval_acc"
        );
        assert_eq!(lines.next().unwrap(), "1,0.03,0.5,0.0,-0.69,0.1,0.55,0.25,0.5,1.0,");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let row = TimingRow { step: 3, seconds: 0.125 };
        {
            let mut sink = CsvSink::open(&path, false).unwrap();
            sink.write(&row).unwrap();
        }
        {
            let mut sink = CsvSink::open(&path, true).unwrap();
            sink.write(&TimingRow { step: 4, ..row }).unwrap();
        }
        let rows = read_timing(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].step, 4);
    }
}
