//! CSV writers and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use noma_core::oups::{SlotRecord, SlotSink, Summary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{AllocatorKind, ScenarioFile};
use crate::gap::GapTrial;
use crate::{HarnessError, Result};

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads back any CSV written by this module.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

pub fn write_gap_csv(path: &Path, trials: &[GapTrial]) -> Result<()> {
    write_rows(path, trials)
}

/// One row of `oups_trial_<n>.csv`: a user's running average at a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub variant: AllocatorKind,
    pub t: u64,
    pub user: usize,
    pub rate_avg: f64,
    pub lambda: f64,
    pub wsr_avg: f64,
}

pub fn trajectory_rows(variant: AllocatorKind, summary: &Summary) -> Vec<TrajectoryRow> {
    summary
        .checkpoints
        .iter()
        .flat_map(|c| {
            (0..c.avg_rates.len()).map(move |user| TrajectoryRow {
                variant,
                t: c.slot,
                user,
                rate_avg: c.avg_rates[user],
                lambda: c.lambda[user],
                wsr_avg: c.avg_wsr,
            })
        })
        .collect()
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    write_rows(path, rows)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: AllocatorKind,
    pub trial: u32,
    pub user: usize,
    pub rate_avg: f64,
    pub rbar: f64,
    pub slack: f64,
    pub wsr_avg: f64,
    pub lambda_final: f64,
}

pub fn summary_rows(variant: AllocatorKind, trial: u32, requirements: &[f64], summary: &Summary) -> Vec<SummaryRow> {
    (0..summary.avg_rates.len())
        .map(|user| SummaryRow {
            variant,
            trial,
            user,
            rate_avg: summary.avg_rates[user],
            rbar: requirements[user],
            slack: summary.qos_slack[user],
            wsr_avg: summary.avg_wsr,
            lambda_final: summary.final_lambda[user],
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_rows(path, rows)
}

/// One row of `timing.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub variant: AllocatorKind,
    pub trial: u32,
    pub n_users: usize,
    pub median_alloc_ns: u64,
}

pub fn write_timing_csv(path: &Path, rows: &[TimingRow]) -> Result<()> {
    write_rows(path, rows)
}

fn join(values: impl IntoIterator<Item = impl ToString>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Streams every slot to a CSV file. Vector columns are `;`-separated.
pub struct CsvSlotLog {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSlotLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut writer = csv_writer(path)?;
        writer.write_record(["trial", "slot", "selected", "powers", "rates", "lambda", "wsr"])?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(io_err(&self.path))
    }
}

impl SlotSink for CsvSlotLog {
    fn record(&mut self, r: &SlotRecord) -> noma_core::Result<()> {
        self.writer
            .write_record([
                r.trial.to_string(),
                r.slot.to_string(),
                join(&r.selected),
                join(&r.powers),
                join(&r.rates),
                join(&r.lambda),
                r.wsr.to_string(),
            ])
            .map_err(|e| noma_core::Error::InvalidInput(format!("slot log {}: {e}", self.path.display())))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

/// `manifest.json`: enough to reproduce a run and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub seed: u64,
    pub config_sha256: String,
    pub config: String,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    /// Hashes every file in `outputs` (names relative to `dir`).
    pub fn build(command: Vec<String>, config: &ScenarioFile, dir: &Path, outputs: &[String]) -> Result<Self> {
        let outputs = outputs
            .iter()
            .map(|name| {
                Ok(OutputFile {
                    name: name.clone(),
                    sha256: sha256_file(&dir.join(name))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            seed: config.seed,
            config_sha256: config.digest(),
            config: config.to_toml(),
            outputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n").map_err(io_err(path))?;
        file.flush().map_err(io_err(path))
    }
}
