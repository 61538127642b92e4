//! Per-episode/per-epoch training metrics and their CSV encoding.
//!
//! Schema: `step,epsilon,mean_reward,train_loss,test_accuracy` with empty
//! strings for fields a method does not produce.

use std::path::Path;

use crate::error::{io_err, Error, Result};

/// Which method produced a metrics series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dqn,
    Supervised,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Dqn => "dqn",
            Method::Supervised => "supervised",
        }
    }
}

/// One row per episode (DQN) or epoch (supervised).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    /// 1-based episode or epoch index; strictly increasing within a series.
    pub step: u32,
    pub epsilon: Option<f64>,
    pub mean_reward: Option<f64>,
    pub train_loss: Option<f64>,
    pub test_accuracy: f64,
}

/// A full training series for one method.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub method: Method,
    pub rows: Vec<MetricsRow>,
}

impl RunMetrics {
    pub fn new(method: Method) -> Self {
        RunMetrics {
            method,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: MetricsRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.step > last.step, "step indices must strictly increase");
        }
        self.rows.push(row);
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.test_accuracy).collect()
    }

    /// Last `window` test accuracies; errors if the series is shorter.
    pub fn last_window_accuracies(&self, window: usize) -> Result<Vec<f64>> {
        if self.rows.len() < window {
            return Err(Error::Config(format!(
                "window {window} exceeds series length {}",
                self.rows.len()
            )));
        }
        Ok(self.rows[self.rows.len() - window..]
            .iter()
            .map(|r| r.test_accuracy)
            .collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("step,epsilon,mean_reward,train_loss,test_accuracy\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                opt(r.epsilon),
                opt(r.mean_reward),
                opt(r.train_loss),
                r.test_accuracy
            ));
        }
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn read_csv(path: &Path, method: Method) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "step,epsilon,mean_reward,train_loss,test_accuracy" {
            return Err(Error::Data(format!(
                "{}: unexpected metrics header `{header}`",
                path.display()
            )));
        }
        let mut run = RunMetrics::new(method);
        for (ln, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Data(format!(
                    "{}: line {}: expected 5 fields, got {}",
                    path.display(),
                    ln + 2,
                    fields.len()
                )));
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| {
                    Error::Data(format!(
                        "{}: line {}: bad number `{s}`",
                        path.display(),
                        ln + 2
                    ))
                })
            };
            let parse_opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_f(s).map(Some)
                }
            };
            run.push(MetricsRow {
                step: fields[0].parse().map_err(|_| {
                    Error::Data(format!(
                        "{}: line {}: bad step `{}`",
                        path.display(),
                        ln + 2,
                        fields[0]
                    ))
                })?,
                epsilon: parse_opt(fields[1])?,
                mean_reward: parse_opt(fields[2])?,
                train_loss: parse_opt(fields[3])?,
                test_accuracy: parse_f(fields[4])?,
            });
        }
        Ok(run)
    }
}

/// Consumer of metrics rows during training.
pub trait MetricsSink {
    fn record(&mut self, row: MetricsRow);
}

impl MetricsSink for RunMetrics {
    fn record(&mut self, row: MetricsRow) {
        self.push(row);
    }
}

/// Sink that drops everything; handy for oracle-only runs.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _row: MetricsRow) {}
}
