//! Per-run CSV rows and atomic CSV writing.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::engine::RunReport;
use crate::harness::config::ScenarioConfig;
use crate::harness::stats;

pub const RUN_COLUMNS: [&str; 24] = [
    "run_id",
    "seed",
    "lps",
    "ses",
    "steps",
    "heuristic",
    "mf",
    "mt",
    "gaia",
    "speed",
    "range",
    "pi",
    "interaction_size",
    "migration_size",
    "lcr",
    "mr",
    "migrations",
    "lcc",
    "rcc",
    "mig_bytes",
    "heu_time_s",
    "mig_cpu_time_s",
    "barrier_wait_s",
    "wct_s",
];

/// Companion file with one line per configuration.
pub const SUMMARY_COLUMNS: [&str; 20] = [
    "seed",
    "lps",
    "ses",
    "steps",
    "heuristic",
    "mf",
    "mt",
    "gaia",
    "speed",
    "range",
    "pi",
    "interaction_size",
    "migration_size",
    "runs",
    "lcr_mean",
    "lcr_hw90",
    "mr_mean",
    "mr_hw90",
    "wct_s_mean",
    "wct_s_hw90",
];

/// One run's results in CSV column order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: String,
    pub seed: u64,
    pub lps: usize,
    pub ses: usize,
    pub steps: u64,
    pub heuristic: u8,
    pub mf: f64,
    pub mt: u64,
    pub gaia: bool,
    pub speed: f64,
    pub range: f64,
    pub pi: f64,
    pub interaction_size: usize,
    pub migration_size: usize,
    pub lcr: f64,
    pub mr: f64,
    pub migrations: f64,
    pub lcc: f64,
    pub rcc: f64,
    pub mig_bytes: f64,
    pub heu_time_s: f64,
    pub mig_cpu_time_s: f64,
    pub barrier_wait_s: f64,
    pub wct_s: f64,
}

impl RunRow {
    pub fn from_report(
        run_id: String,
        seed: u64,
        cfg: &ScenarioConfig,
        report: &RunReport,
    ) -> RunRow {
        let l = report.ledger();
        RunRow {
            run_id,
            seed,
            lps: cfg.lps,
            ses: cfg.ses,
            steps: cfg.steps,
            heuristic: cfg.heuristic.kind.code(),
            mf: cfg.heuristic.mf,
            mt: cfg.heuristic.mt,
            gaia: cfg.gaia,
            speed: cfg.speed,
            range: cfg.range,
            pi: cfg.pi,
            interaction_size: cfg.interaction_size,
            migration_size: cfg.migration_size,
            lcr: report.lcr(),
            mr: report.migration_ratio(),
            migrations: report.migrations() as f64,
            lcc: l.lcc_count as f64,
            rcc: l.rcc_count as f64,
            mig_bytes: l.mig_bytes as f64,
            heu_time_s: l.heu_time.as_secs_f64(),
            mig_cpu_time_s: l.mig_cpu_time.as_secs_f64(),
            barrier_wait_s: l.barrier_wait.as_secs_f64(),
            wct_s: report.wct.as_secs_f64(),
        }
    }

    /// The row of means over `rows`, labelled `summary`.
    pub fn mean_of(rows: &[RunRow]) -> RunRow {
        let avg = |f: fn(&RunRow) -> f64| stats::mean(&rows.iter().map(f).collect::<Vec<_>>());
        RunRow {
            run_id: "summary".into(),
            lcr: avg(|r| r.lcr),
            mr: avg(|r| r.mr),
            migrations: avg(|r| r.migrations),
            lcc: avg(|r| r.lcc),
            rcc: avg(|r| r.rcc),
            mig_bytes: avg(|r| r.mig_bytes),
            heu_time_s: avg(|r| r.heu_time_s),
            mig_cpu_time_s: avg(|r| r.mig_cpu_time_s),
            barrier_wait_s: avg(|r| r.barrier_wait_s),
            wct_s: avg(|r| r.wct_s),
            ..rows[0].clone()
        }
    }

    pub fn record(&self) -> Vec<String> {
        let on_off = |b: bool| if b { "on" } else { "off" }.to_string();
        vec![
            self.run_id.clone(),
            self.seed.to_string(),
            self.lps.to_string(),
            self.ses.to_string(),
            self.steps.to_string(),
            self.heuristic.to_string(),
            self.mf.to_string(),
            self.mt.to_string(),
            on_off(self.gaia),
            self.speed.to_string(),
            self.range.to_string(),
            self.pi.to_string(),
            self.interaction_size.to_string(),
            self.migration_size.to_string(),
            self.lcr.to_string(),
            self.mr.to_string(),
            self.migrations.to_string(),
            self.lcc.to_string(),
            self.rcc.to_string(),
            self.mig_bytes.to_string(),
            self.heu_time_s.to_string(),
            self.mig_cpu_time_s.to_string(),
            self.barrier_wait_s.to_string(),
            self.wct_s.to_string(),
        ]
    }
}

/// Mean and 90% half-width of the headline metrics of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSummary {
    pub lcr: stats::Summary,
    pub mr: stats::Summary,
    pub wct_s: stats::Summary,
}

impl ConfigSummary {
    pub fn of(rows: &[RunRow]) -> ConfigSummary {
        let col = |f: fn(&RunRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        ConfigSummary {
            lcr: stats::summarize(&col(|r| r.lcr)),
            mr: stats::summarize(&col(|r| r.mr)),
            wct_s: stats::summarize(&col(|r| r.wct_s)),
        }
    }
}

/// Writes a CSV next to its final location and renames it into place, so
/// an aborted run never leaves a partial file behind.
pub fn write_csv_atomic(path: &Path, header: &[&str], records: &[Vec<String>]) -> io::Result<()> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(header)?;
        for r in records {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok::<(), csv::Error>(())
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io::Error::other(e));
    }
    fs::rename(&tmp, path)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// `runs.csv` becomes `runs.summary.csv`.
pub fn companion_path(path: &Path, tag: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{tag}.csv"))
}

/// CSV records for one configuration: its runs followed by the summary row.
pub fn run_records(rows: &[RunRow]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = rows.iter().map(RunRow::record).collect();
    if !rows.is_empty() {
        out.push(RunRow::mean_of(rows).record());
    }
    out
}

pub fn summary_record(cfg: &ScenarioConfig, rows: &[RunRow]) -> Vec<String> {
    let s = ConfigSummary::of(rows);
    let first = &rows[0];
    let mut rec: Vec<String> = first.record()[1..14].to_vec();
    rec.push(rows.len().to_string());
    rec.extend(
        [
            s.lcr.mean,
            s.lcr.half_width,
            s.mr.mean,
            s.mr.half_width,
            s.wct_s.mean,
            s.wct_s.half_width,
        ]
        .iter()
        .map(f64::to_string),
    );
    rec[0] = cfg.seed.to_string();
    rec
}
