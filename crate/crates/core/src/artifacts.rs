//! On-disk experiment outputs.
//!
//! | file | header |
//! |------|--------|
//! | `transcript.jsonl` | one [`CeRecord`] per line |
//! | `ce.csv` | `run,prospect_id,ce` or `trait,level,run,prospect_id,ce` |
//! | `failures.csv` | `trait,level,run,prospect_id,error` |
//! | `fits.csv` | `trait,level,run,n,alpha,beta,lambda,gamma_plus,gamma_minus,loss,iterations,converged,warnings,error` |
//! | `aggregate.csv` | `trait,level,parameter,median,lower_95,upper_95,runs,resamples,seed` |
//! | `correlations.csv` | `trait,alpha,beta,lambda` (starred rho) |
//! | `correlations_detail.csv` | `trait,parameter,rho,t_stat,n,p_value,stars,error` |
//! | `linear_fits.csv` | `label,alpha,beta,lambda` (starred through-origin omega) |
//! | `linear_fits_detail.csv` | `trait,parameter,model,omega,intercept,t_stat,p_value,significant,error` |
//! | `config.txt` | flat `key=value` lines |
//!
//! Floats are written with Rust's shortest round-trip formatting, so rerunning
//! a deterministic experiment reproduces these files byte for byte.

use crate::agents::CeRecord;
use crate::cpt::CptParams;
use crate::experiment::{CeRow, ElicitFailure, ElicitationOutput, FitSummary, SweepAnalysis};
use crate::personality::Trait;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TRANSCRIPT: &str = "transcript.jsonl";
pub const CE_TABLE: &str = "ce.csv";
pub const FAILURES: &str = "failures.csv";
pub const FITS: &str = "fits.csv";
pub const AGGREGATE: &str = "aggregate.csv";
pub const CORRELATIONS: &str = "correlations.csv";
pub const CORRELATIONS_DETAIL: &str = "correlations_detail.csv";
pub const LINEAR_FITS: &str = "linear_fits.csv";
pub const LINEAR_FITS_DETAIL: &str = "linear_fits_detail.csv";
pub const CONFIG: &str = "config.txt";

/// Parameters shown in the wide correlation and slope tables.
pub const TABLE_PARAMETERS: [&str; 3] = ["alpha", "beta", "lambda"];

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, message: impl Into<String>) -> ArtifactError {
    ArtifactError::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, ArtifactError> {
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), ArtifactError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn trait_name(t: Option<Trait>) -> String {
    t.map(|t| t.name().to_string()).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> Result<(), ArtifactError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_transcript(path: &Path, records: &[CeRecord]) -> Result<(), ArtifactError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(rec).map_err(|source| ArtifactError::Json {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_transcript(path: &Path) -> Result<Vec<CeRecord>, ArtifactError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| ArtifactError::Json {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn write_ce_table(
    path: &Path,
    sweep_trait: Option<Trait>,
    rows: &[CeRow],
) -> Result<(), ArtifactError> {
    let sweep = sweep_trait.is_some() || rows.iter().any(|r| r.level.is_some());
    let header: &[&str] = if sweep {
        &["trait", "level", "run", "prospect_id", "ce"]
    } else {
        &["run", "prospect_id", "ce"]
    };
    let body = rows
        .iter()
        .map(|r| {
            let mut v = Vec::with_capacity(5);
            if sweep {
                v.push(trait_name(sweep_trait));
                v.push(opt(r.level));
            }
            v.extend([r.run.to_string(), r.prospect_id.clone(), r.ce.to_string()]);
            v
        })
        .collect();
    write_rows(path, header, body)
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn required(path: &Path, headers: &csv::StringRecord, name: &str) -> Result<usize, ArtifactError> {
    column(headers, name).ok_or_else(|| malformed(path, format!("missing column {name:?}")))
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    name: &str,
    raw: &str,
) -> Result<T, ArtifactError> {
    raw.trim()
        .parse()
        .map_err(|_| malformed(path, format!("line {line}: bad {name} {raw:?}")))
}

fn parse_optional<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    name: &str,
    raw: Option<&str>,
) -> Result<Option<T>, ArtifactError> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => parse_field(path, line, name, s).map(Some),
    }
}

/// Read a CE table in either the plain or the sweep layout.
pub fn read_ce_table(path: &Path) -> Result<(Option<Trait>, Vec<CeRow>), ArtifactError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    let run_col = required(path, &headers, "run")?;
    let id_col = required(path, &headers, "prospect_id")?;
    let ce_col = required(path, &headers, "ce")?;
    let level_col = column(&headers, "level");
    let trait_col = column(&headers, "trait");
    let mut sweep_trait = None;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = i as u64 + 2;
        if let Some(t) = trait_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            let t: Trait = t
                .parse()
                .map_err(|_| malformed(path, format!("line {line}: unknown trait {t:?}")))?;
            match sweep_trait {
                Some(prev) if prev != t => {
                    return Err(malformed(path, "mixed traits in one table"))
                }
                _ => sweep_trait = Some(t),
            }
        }
        rows.push(CeRow {
            level: parse_optional(path, line, "level", level_col.and_then(|c| rec.get(c)))?,
            run: parse_field(path, line, "run", &rec[run_col])?,
            prospect_id: rec[id_col].trim().to_string(),
            ce: parse_field(path, line, "ce", &rec[ce_col])?,
        });
    }
    Ok((sweep_trait, rows))
}

pub fn write_failures(
    path: &Path,
    sweep_trait: Option<Trait>,
    failures: &[ElicitFailure],
) -> Result<(), ArtifactError> {
    let body = failures
        .iter()
        .map(|f| {
            vec![
                trait_name(sweep_trait),
                opt(f.level),
                f.run.to_string(),
                f.prospect_id.clone(),
                f.error.clone(),
            ]
        })
        .collect();
    write_rows(
        path,
        &["trait", "level", "run", "prospect_id", "error"],
        body,
    )
}

pub fn read_failure_count(path: &Path) -> Result<usize, ArtifactError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut n = 0;
    for rec in r.records() {
        rec.map_err(csv_err(path))?;
        n += 1;
    }
    Ok(n)
}

/// Write the transcript, CE table and failure list of an elicitation.
pub fn write_elicitation(dir: &Path, out: &ElicitationOutput) -> Result<(), ArtifactError> {
    ensure_dir(dir)?;
    write_transcript(&dir.join(TRANSCRIPT), &out.records)?;
    write_ce_table(&dir.join(CE_TABLE), out.sweep_trait, &out.ce_rows())?;
    write_failures(&dir.join(FAILURES), out.sweep_trait, &out.failures)
}

const FIT_HEADER: [&str; 14] = [
    "trait",
    "level",
    "run",
    "n",
    "alpha",
    "beta",
    "lambda",
    "gamma_plus",
    "gamma_minus",
    "loss",
    "iterations",
    "converged",
    "warnings",
    "error",
];

pub fn write_fits(
    path: &Path,
    sweep_trait: Option<Trait>,
    summary: &FitSummary,
) -> Result<(), ArtifactError> {
    let body = summary
        .per_run
        .iter()
        .map(|rf| {
            let mut v = vec![
                trait_name(sweep_trait),
                opt(rf.level),
                rf.run.to_string(),
                rf.n_observations.to_string(),
            ];
            match &rf.fit {
                Ok(f) => {
                    v.extend(f.params.to_array().iter().map(f64::to_string));
                    v.extend([
                        f.final_loss.to_string(),
                        f.iterations.to_string(),
                        f.converged.to_string(),
                        f.warnings.join("; "),
                        String::new(),
                    ]);
                }
                Err(e) => {
                    v.extend(std::iter::repeat_n(String::new(), 9));
                    v.push(e.to_string());
                }
            }
            v
        })
        .collect();
    write_rows(path, &FIT_HEADER, body)
}

/// A successful per-run fit as read back from `fits.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub level: Option<u8>,
    pub run: usize,
    pub n: usize,
    pub params: CptParams,
    pub loss: f64,
    pub warnings: Vec<String>,
}

/// Read the successful rows of `fits.csv`, plus the number of failed fits.
pub fn read_fits(path: &Path) -> Result<(Vec<FitRow>, usize), ArtifactError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    let cols: Vec<usize> = FIT_HEADER
        .iter()
        .map(|h| required(path, &headers, h))
        .collect::<Result<_, _>>()?;
    let mut fits = Vec::new();
    let mut failed = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = i as u64 + 2;
        let get = |k: usize| rec.get(cols[k]).unwrap_or("");
        if !get(13).is_empty() {
            failed += 1;
            continue;
        }
        let mut theta = [0.0; 5];
        for (k, slot) in theta.iter_mut().enumerate() {
            *slot = parse_field(path, line, FIT_HEADER[4 + k], get(4 + k))?;
        }
        fits.push(FitRow {
            level: parse_optional(path, line, "level", Some(get(1)))?,
            run: parse_field(path, line, "run", get(2))?,
            n: parse_field(path, line, "n", get(3))?,
            params: CptParams::from_array(theta),
            loss: parse_field(path, line, "loss", get(9))?,
            warnings: get(12)
                .split("; ")
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok((fits, failed))
}

pub fn write_aggregate(
    path: &Path,
    sweep_trait: Option<Trait>,
    summary: &FitSummary,
) -> Result<(), ArtifactError> {
    let mut body = Vec::new();
    for agg in &summary.aggregates {
        for (name, ci) in CptParams::NAMES.iter().zip(&agg.per_parameter) {
            body.push(vec![
                trait_name(sweep_trait),
                opt(agg.level),
                name.to_string(),
                ci.median.to_string(),
                ci.lower_95.to_string(),
                ci.upper_95.to_string(),
                agg.runs.to_string(),
                ci.resamples.to_string(),
                ci.seed.to_string(),
            ]);
        }
    }
    write_rows(
        path,
        &[
            "trait",
            "level",
            "parameter",
            "median",
            "lower_95",
            "upper_95",
            "runs",
            "resamples",
            "seed",
        ],
        body,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub level: Option<u8>,
    pub parameter: String,
    pub median: f64,
    pub lower_95: f64,
    pub upper_95: f64,
    pub runs: usize,
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, ArtifactError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    let names = [
        "level",
        "parameter",
        "median",
        "lower_95",
        "upper_95",
        "runs",
    ];
    let cols: Vec<usize> = names
        .iter()
        .map(|h| required(path, &headers, h))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = i as u64 + 2;
        let get = |k: usize| rec.get(cols[k]).unwrap_or("");
        out.push(AggregateRow {
            level: parse_optional(path, line, "level", Some(get(0)))?,
            parameter: get(1).to_string(),
            median: parse_field(path, line, "median", get(2))?,
            lower_95: parse_field(path, line, "lower_95", get(3))?,
            upper_95: parse_field(path, line, "upper_95", get(4))?,
            runs: parse_field(path, line, "runs", get(5))?,
        });
    }
    Ok(out)
}

fn starred(value: f64, stars: &str) -> String {
    format!("{value:.2}{stars}")
}

/// Write the wide and detailed correlation and slope tables of a sweep.
/// `label` names the row of the slope table (usually the agent).
pub fn write_sweep_analysis(
    dir: &Path,
    analysis: &SweepAnalysis,
    label: &str,
) -> Result<(), ArtifactError> {
    let trait_cell = analysis.big_five_trait.name().to_string();

    let mut wide = vec![trait_cell.clone()];
    let mut slopes = vec![label.to_string()];
    for name in TABLE_PARAMETERS {
        let pa = analysis.get(name).expect("table parameter");
        wide.push(match &pa.correlation {
            Ok(c) => starred(c.rho, c.significance_stars.as_str()),
            Err(_) => String::new(),
        });
        slopes.push(match &pa.through_origin {
            Ok(f) => format!(
                "{:.3}{}",
                f.omega,
                if f.significant_at_005 { "*" } else { "" }
            ),
            Err(_) => String::new(),
        });
    }
    let mut header = vec!["trait"];
    header.extend(TABLE_PARAMETERS);
    write_rows(&dir.join(CORRELATIONS), &header, vec![wide])?;
    header[0] = "label";
    write_rows(&dir.join(LINEAR_FITS), &header, vec![slopes])?;

    let mut corr = Vec::new();
    let mut lines = Vec::new();
    for pa in &analysis.parameters {
        corr.push(match &pa.correlation {
            Ok(c) => vec![
                trait_cell.clone(),
                pa.parameter.to_string(),
                c.rho.to_string(),
                c.t_stat.to_string(),
                c.n.to_string(),
                c.p_value.to_string(),
                c.significance_stars.as_str().to_string(),
                String::new(),
            ],
            Err(e) => {
                let mut v = vec![trait_cell.clone(), pa.parameter.to_string()];
                v.extend(std::iter::repeat_n(String::new(), 5));
                v.push(e.to_string());
                v
            }
        });
        for (model, fit) in [
            ("through_origin", &pa.through_origin),
            ("with_intercept", &pa.with_intercept),
        ] {
            lines.push(match fit {
                Ok(f) => vec![
                    trait_cell.clone(),
                    pa.parameter.to_string(),
                    model.to_string(),
                    f.omega.to_string(),
                    f.intercept.to_string(),
                    f.t_stat.to_string(),
                    f.p_value.to_string(),
                    f.significant_at_005.to_string(),
                    String::new(),
                ],
                Err(e) => {
                    let mut v = vec![
                        trait_cell.clone(),
                        pa.parameter.to_string(),
                        model.to_string(),
                    ];
                    v.extend(std::iter::repeat_n(String::new(), 5));
                    v.push(e.to_string());
                    v
                }
            });
        }
    }
    write_rows(
        &dir.join(CORRELATIONS_DETAIL),
        &[
            "trait",
            "parameter",
            "rho",
            "t_stat",
            "n",
            "p_value",
            "stars",
            "error",
        ],
        corr,
    )?;
    write_rows(
        &dir.join(LINEAR_FITS_DETAIL),
        &[
            "trait",
            "parameter",
            "model",
            "omega",
            "intercept",
            "t_stat",
            "p_value",
            "significant",
            "error",
        ],
        lines,
    )
}

/// Write per-run fits and the cross-run aggregate.
pub fn write_fit_outputs(
    dir: &Path,
    sweep_trait: Option<Trait>,
    summary: &FitSummary,
) -> Result<(), ArtifactError> {
    ensure_dir(dir)?;
    write_fits(&dir.join(FITS), sweep_trait, summary)?;
    write_aggregate(&dir.join(AGGREGATE), sweep_trait, summary)
}

pub fn write_config(path: &Path, pairs: &[(&str, String)]) -> Result<(), ArtifactError> {
    let mut text = String::new();
    for (k, v) in pairs {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// Parse flat `key=value` text. Blank lines and `#` comments are skipped.
pub fn parse_config(path: &Path, text: &str) -> Result<Vec<(String, String)>, ArtifactError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| malformed(path, format!("line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(path, &text)
}
