//! Long-run study: the dual scheduler driven by each allocator over the same
//! fading trace.
//!
//! Every (allocator, trial) pair is an independent job. Channel draws depend
//! only on the seed and trial index, so all allocators in a trial see
//! identical channels.

use std::path::Path;

use noma_core::oracle::MAX_ORACLE_USERS;
use noma_core::oups::{run, Summary};
use rayon::prelude::*;

use crate::config::{AllocatorKind, ScenarioConfig};
use crate::output::{
    summary_rows, trajectory_rows, write_summary_csv, write_timing_csv, write_trajectory_csv, CsvSlotLog,
    TimingRow,
};
use crate::{worker_pool, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub variants: Vec<AllocatorKind>,
    pub trials: u32,
    pub record_timing: bool,
    /// Write `slots_<variant>_trial_<n>.csv` into this directory.
    pub slot_log_dir: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobResult {
    pub variant: AllocatorKind,
    pub trial: u32,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub jobs: Vec<JobResult>,
    pub requirements: Vec<f64>,
    /// Variants dropped because the instance is too large for them.
    pub skipped: Vec<AllocatorKind>,
    pub record_timing: bool,
}

impl StudyReport {
    pub fn job(&self, variant: AllocatorKind, trial: u32) -> Option<&JobResult> {
        self.jobs.iter().find(|j| j.variant == variant && j.trial == trial)
    }

    pub fn trials(&self) -> Vec<u32> {
        let mut t: Vec<u32> = self.jobs.iter().map(|j| j.trial).collect();
        t.sort_unstable();
        t.dedup();
        t
    }
}

fn run_job(cfg: &ScenarioConfig, variant: AllocatorKind, trial: u32, opts: &StudyOptions) -> Result<JobResult> {
    let scenario = cfg.scenario(trial);
    let allocator = variant.build(cfg.grid);
    let summary = match &opts.slot_log_dir {
        Some(dir) => {
            let mut log = CsvSlotLog::create(&dir.join(format!("slots_{variant}_trial_{trial}.csv")))?;
            let summary = run(&scenario, allocator.as_ref(), &mut log)?;
            log.finish()?;
            summary
        }
        None => run(&scenario, allocator.as_ref(), &mut ())?,
    };
    Ok(JobResult { variant, trial, summary })
}

pub fn run_oups_study(cfg: &ScenarioConfig, opts: &StudyOptions) -> Result<StudyReport> {
    let (variants, skipped): (Vec<_>, Vec<_>) = opts
        .variants
        .iter()
        .partition(|&&v| v != AllocatorKind::Oracle || cfg.users.len() <= MAX_ORACLE_USERS);
    let jobs: Vec<(AllocatorKind, u32)> = (0..opts.trials)
        .flat_map(|t| variants.iter().map(move |&v| (v, t)))
        .collect();
    let pool = worker_pool()?;
    let jobs = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, t)| run_job(cfg, v, t, opts))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(StudyReport {
        jobs,
        requirements: cfg.users.iter().map(|u| u.min_avg_rate).collect(),
        skipped,
        record_timing: opts.record_timing,
    })
}

/// Writes `oups_trial_<n>.csv`, `summary.csv` and `timing.csv` into `dir` and
/// returns the file names.
pub fn write_study(report: &StudyReport, dir: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for trial in report.trials() {
        let rows: Vec<_> = report
            .jobs
            .iter()
            .filter(|j| j.trial == trial)
            .flat_map(|j| trajectory_rows(j.variant, &j.summary))
            .collect();
        let name = format!("oups_trial_{trial}.csv");
        write_trajectory_csv(&dir.join(&name), &rows)?;
        files.push(name);
    }
    let summary: Vec<_> = report
        .jobs
        .iter()
        .flat_map(|j| summary_rows(j.variant, j.trial, &report.requirements, &j.summary))
        .collect();
    write_summary_csv(&dir.join("summary.csv"), &summary)?;
    files.push("summary.csv".into());
    let timing: Vec<_> = report
        .jobs
        .iter()
        .map(|j| TimingRow {
            variant: j.variant,
            trial: j.trial,
            n_users: report.requirements.len(),
            median_alloc_ns: if report.record_timing { j.summary.median_alloc_ns } else { 0 },
        })
        .collect();
    write_timing_csv(&dir.join("timing.csv"), &timing)?;
    files.push("timing.csv".into());
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioFile;

    fn opts(variants: Vec<AllocatorKind>, trials: u32) -> StudyOptions {
        StudyOptions {
            variants,
            trials,
            record_timing: false,
            slot_log_dir: None,
        }
    }

    #[test]
    fn single_slot_gives_single_checkpoint() {
        let cfg = ScenarioFile::parse("slots = 1").unwrap().resolve().unwrap();
        let report = run_oups_study(&cfg, &opts(vec![AllocatorKind::Uspa], 1)).unwrap();
        let s = &report.jobs[0].summary;
        assert_eq!(s.checkpoints.len(), 1);
        assert_eq!(s.checkpoints[0].slot, 1);
    }

    #[test]
    fn variants_share_the_channel_trace() {
        let cfg = ScenarioFile::parse("slots = 50").unwrap().resolve().unwrap();
        let report = run_oups_study(&cfg, &opts(vec![AllocatorKind::Uspa, AllocatorKind::Oma], 2)).unwrap();
        assert_eq!(report.jobs.len(), 4);
        assert_eq!(report.trials(), vec![0, 1]);
        for t in 0..2 {
            let uspa = report.job(AllocatorKind::Uspa, t).unwrap();
            let oma = report.job(AllocatorKind::Oma, t).unwrap();
            assert_eq!(uspa.summary.slots, oma.summary.slots);
        }
    }

    #[test]
    fn oracle_skipped_for_large_instances() {
        let users: String = (0..7)
            .map(|i| format!("[[users]]\ndistance_m = {}\n", 50.0 + 50.0 * i as f64))
            .collect();
        let cfg = ScenarioFile::parse(&format!("slots = 3\n{users}")).unwrap().resolve().unwrap();
        let report = run_oups_study(&cfg, &opts(vec![AllocatorKind::Oracle, AllocatorKind::Uspa], 1)).unwrap();
        assert_eq!(report.skipped, vec![AllocatorKind::Oracle]);
        assert_eq!(report.jobs.len(), 1);
    }
}
