//! Human-readable summary and plot-data tables for an experiment directory.

use crate::artifacts::{
    read_aggregate, read_ce_table, read_failure_count, read_fits, read_transcript, AggregateRow,
    ArtifactError, FitRow, AGGREGATE, CE_TABLE, FAILURES, FITS, TRANSCRIPT,
};
use crate::cpt::CptParams;
use crate::experiment::find_prospect;
use crate::personality::Trait;
use crate::stats::{linear_fit, LinearFitResult};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SUMMARY: &str = "report.txt";
pub const PLOT_CE_VS_EV: &str = "plot_ce_vs_ev.csv";
pub const PLOT_LEVEL_SERIES: &str = "plot_level_series.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing inputs in {dir}: {missing:?}")]
    MissingInputs { dir: PathBuf, missing: Vec<String> },
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("unknown prospect id {0:?}")]
    UnknownProspect(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub level: Option<u8>,
    pub run: usize,
    pub prospect_id: String,
    pub expected_value: f64,
    pub ce: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub sweep_trait: Option<Trait>,
    pub aggregates: Vec<AggregateRow>,
    pub fits: Vec<FitRow>,
    pub failed_fits: usize,
    pub scatter: Vec<ScatterPoint>,
    /// Least-squares line of CE on EV with an intercept. `None` when the
    /// EVs are all equal or fewer than three points exist.
    pub ce_on_ev: Option<LinearFitResult>,
    /// Records excluded after exhausting parse retries or transport errors.
    pub excluded_records: usize,
    /// Replies that failed to parse but were recovered by a retry.
    pub recovered_parse_failures: usize,
    pub sign_mismatches: usize,
    pub warning_counts: BTreeMap<String, usize>,
}

impl Report {
    pub fn median(&self, level: Option<u8>, parameter: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.level == level && a.parameter == parameter)
            .map(|a| a.median)
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        if let Some(t) = self.sweep_trait {
            let _ = writeln!(s, "Intervention sweep on {t}");
        }
        let _ = writeln!(
            s,
            "Fitted runs: {} ({} failed)",
            self.fits.len(),
            self.failed_fits
        );
        let _ = writeln!(s, "\nMedian parameters with 95% bootstrap intervals");
        let _ = writeln!(
            s,
            "{:<6} {:<12} {:>12} {:>12} {:>12}",
            "level", "parameter", "median", "lower_95", "upper_95"
        );
        for a in &self.aggregates {
            let level = a.level.map(|l| l.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<6} {:<12} {:>12.4} {:>12.4} {:>12.4}",
                level, a.parameter, a.median, a.lower_95, a.upper_95
            );
        }
        let _ = writeln!(s, "\nCE versus EV over {} points", self.scatter.len());
        match &self.ce_on_ev {
            Some(f) => {
                let _ = writeln!(s, "slope {} intercept {}", f.omega, f.intercept);
            }
            None => {
                let _ = writeln!(s, "slope undefined");
            }
        }
        let _ = writeln!(s, "\nExcluded records: {}", self.excluded_records);
        let _ = writeln!(
            s,
            "Recovered parse failures: {}",
            self.recovered_parse_failures
        );
        let _ = writeln!(s, "Sign mismatches: {}", self.sign_mismatches);
        if !self.warning_counts.is_empty() {
            let _ = writeln!(s, "\nFit warnings");
            for (w, n) in &self.warning_counts {
                let _ = writeln!(s, "{n:>4}  {w}");
            }
        }
        s
    }
}

/// Load the CE table, fits and aggregate from `dir` and derive the report.
/// The transcript and failure list are optional.
pub fn build_report(dir: &Path) -> Result<Report, ReportError> {
    let missing: Vec<String> = [CE_TABLE, FITS, AGGREGATE]
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ReportError::MissingInputs {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let (sweep_trait, rows) = read_ce_table(&dir.join(CE_TABLE))?;
    let (fits, failed_fits) = read_fits(&dir.join(FITS))?;
    let aggregates = read_aggregate(&dir.join(AGGREGATE))?;

    let mut scatter = Vec::with_capacity(rows.len());
    for row in rows {
        let p = find_prospect(&row.prospect_id)
            .ok_or_else(|| ReportError::UnknownProspect(row.prospect_id.clone()))?;
        scatter.push(ScatterPoint {
            level: row.level,
            run: row.run,
            prospect_id: row.prospect_id,
            expected_value: p.expected_value(),
            ce: row.ce,
        });
    }
    let ev: Vec<f64> = scatter.iter().map(|p| p.expected_value).collect();
    let ce: Vec<f64> = scatter.iter().map(|p| p.ce).collect();
    let ce_on_ev = linear_fit(&ev, &ce, false).ok();

    let excluded_records = if dir.join(FAILURES).is_file() {
        read_failure_count(&dir.join(FAILURES))?
    } else {
        0
    };
    let (recovered_parse_failures, sign_mismatches) = if dir.join(TRANSCRIPT).is_file() {
        let t = read_transcript(&dir.join(TRANSCRIPT))?;
        (
            t.iter().map(|r| r.failed_responses.len()).sum(),
            t.iter().filter(|r| r.sign_mismatch).count(),
        )
    } else {
        (0, 0)
    };

    let mut warning_counts = BTreeMap::new();
    for w in fits.iter().flat_map(|f| &f.warnings) {
        *warning_counts.entry(w.clone()).or_insert(0) += 1;
    }

    Ok(Report {
        sweep_trait,
        aggregates,
        fits,
        failed_fits,
        scatter,
        ce_on_ev,
        excluded_records,
        recovered_parse_failures,
        sign_mismatches,
        warning_counts,
    })
}

/// Write `report.txt` and the plot-data CSVs into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<(), ReportError> {
    let text_path = dir.join(SUMMARY);
    std::fs::write(&text_path, report.summary_text()).map_err(|source| ArtifactError::Io {
        path: text_path.clone(),
        source,
    })?;

    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ArtifactError::Csv { path, source }
    };
    let path = dir.join(PLOT_CE_VS_EV);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["level", "run", "prospect_id", "expected_value", "ce"])
        .map_err(csv_err(&path))?;
    for p in &report.scatter {
        w.write_record([
            p.level.map(|l| l.to_string()).unwrap_or_default(),
            p.run.to_string(),
            p.prospect_id.clone(),
            p.expected_value.to_string(),
            p.ce.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|source| ArtifactError::Io {
        path: path.clone(),
        source,
    })?;

    let path = dir.join(PLOT_LEVEL_SERIES);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["parameter", "level", "median", "lower_95", "upper_95"])
        .map_err(csv_err(&path))?;
    for name in CptParams::NAMES {
        for a in report.aggregates.iter().filter(|a| a.parameter == name) {
            w.write_record([
                a.parameter.clone(),
                a.level.map(|l| l.to_string()).unwrap_or_default(),
                a.median.to_string(),
                a.lower_95.to_string(),
                a.upper_95.to_string(),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush()
        .map_err(|source| ArtifactError::Io { path, source })?;
    Ok(())
}
