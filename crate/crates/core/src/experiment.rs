//! Elicitation runs, per-run fitting with cross-run aggregation, and
//! persona-level sweeps.
//!
//! Run `r` uses seed `base_seed + r`. Elicitation is the only stage that
//! runs concurrently; results are re-ordered by (level, run, prospect id)
//! before anything downstream sees them.

use crate::agents::{AgentError, CeRecord, Elicitor};
use crate::cpt::{CptParams, Prospect, ProspectKind};
use crate::datasets::{load_dataset, DatasetName};
use crate::optimizer::{fit_cpt, FitOptions, FitResult, OptimizeError};
use crate::personality::{render_intervention, Intervention, PersonalityError, Trait};
use crate::stats::{
    bootstrap_median_ci, linear_fit, pearson, BootstrapCi, CorrelationResult, LinearFitResult,
    StatsError,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Personality(#[from] PersonalityError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("no run could be fitted: {0}")]
    NoSuccessfulRun(String),
    #[error("unknown prospect id {0:?}")]
    UnknownProspect(String),
}

/// Which prospects of a dataset to present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ProspectFilter {
    #[default]
    All,
    GainsOnly,
    LossesOnly,
    Mixed,
}

impl ProspectFilter {
    pub fn keep(self, p: &Prospect) -> bool {
        match self {
            ProspectFilter::All => true,
            ProspectFilter::GainsOnly => p.kind() == ProspectKind::GainsOnly,
            ProspectFilter::LossesOnly => p.kind() == ProspectKind::LossesOnly,
            ProspectFilter::Mixed => p.kind() == ProspectKind::Mixed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProspectFilter::All => "all",
            ProspectFilter::GainsOnly => "gains",
            ProspectFilter::LossesOnly => "losses",
            ProspectFilter::Mixed => "mixed",
        }
    }
}

impl FromStr for ProspectFilter {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Self::All),
            "gains" => Ok(Self::GainsOnly),
            "losses" => Ok(Self::LossesOnly),
            "mixed" => Ok(Self::Mixed),
            other => Err(ExperimentError::Config(format!("unknown subset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(rename = "trait")]
    pub big_five_trait: Trait,
    pub levels: Vec<u8>,
}

impl SweepSpec {
    pub const DEFAULT_LEVELS: [u8; 5] = [1, 3, 5, 7, 9];

    pub fn new(big_five_trait: Trait, levels: Vec<u8>) -> Result<Self, ExperimentError> {
        if levels.is_empty() {
            return Err(ExperimentError::Config(
                "sweep needs at least one level".into(),
            ));
        }
        if let Some(bad) = levels.iter().find(|l| !(1..=9).contains(*l)) {
            return Err(PersonalityError::LevelOutOfRange(*bad as i64).into());
        }
        Ok(Self {
            big_five_trait,
            levels,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub fit: FitOptions,
    /// When false, all runs of a level are pooled into a single fit.
    pub per_run: bool,
    pub resamples: usize,
    pub bootstrap_seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            per_run: true,
            resamples: crate::stats::DEFAULT_RESAMPLES,
            bootstrap_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElicitationPlan {
    pub dataset: DatasetName,
    pub subset: ProspectFilter,
    pub runs: usize,
    pub base_seed: u64,
    pub sweep: Option<SweepSpec>,
    pub parallelism: usize,
}

impl ElicitationPlan {
    pub const DEFAULT_RUNS: usize = 15;
    pub const DEFAULT_SWEEP_RUNS: usize = 10;

    pub fn new(dataset: DatasetName, runs: usize, base_seed: u64) -> Self {
        Self {
            dataset,
            subset: ProspectFilter::All,
            runs,
            base_seed,
            sweep: None,
            parallelism: 4,
        }
    }

    pub fn with_sweep(mut self, sweep: SweepSpec) -> Self {
        self.sweep = Some(sweep);
        self
    }

    pub fn with_subset(mut self, subset: ProspectFilter) -> Self {
        self.subset = subset;
        self
    }

    pub fn seed_for_run(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }

    pub fn prospects(&self) -> Vec<Prospect> {
        load_dataset(self.dataset)
            .prospects()
            .into_iter()
            .filter(|p| self.subset.keep(p))
            .collect()
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.runs == 0 {
            return Err(ExperimentError::Config("runs must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(ExperimentError::Config(
                "parallelism must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One row of a certainty-equivalent table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeRow {
    pub level: Option<u8>,
    pub run: usize,
    pub prospect_id: String,
    pub ce: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElicitFailure {
    pub level: Option<u8>,
    pub run: usize,
    pub prospect_id: String,
    pub error: String,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElicitationOutput {
    pub sweep_trait: Option<Trait>,
    pub records: Vec<CeRecord>,
    pub failures: Vec<ElicitFailure>,
}

impl ElicitationOutput {
    pub fn ce_rows(&self) -> Vec<CeRow> {
        self.records
            .iter()
            .map(|r| CeRow {
                level: r.intervention.map(|i| i.level),
                run: r.run_index,
                prospect_id: r.prospect_id.clone(),
                ce: r.certainty_equivalent,
            })
            .collect()
    }

    pub fn sign_mismatches(&self) -> usize {
        self.records.iter().filter(|r| r.sign_mismatch).count()
    }
}

/// Elicit every prospect in every run (and every sweep level).
///
/// A failing record is logged and reported in `failures`; it never aborts
/// the remaining work.
pub fn run_elicitation(
    elicitor: &Elicitor,
    plan: &ElicitationPlan,
) -> Result<ElicitationOutput, ExperimentError> {
    plan.validate()?;
    let prospects = plan.prospects();
    let interventions: Vec<Option<Intervention>> = match &plan.sweep {
        Some(s) => s
            .levels
            .iter()
            .map(|l| render_intervention(s.big_five_trait, *l as i64).map(Some))
            .collect::<Result<_, _>>()?,
        None => vec![None],
    };

    let n_prospects = prospects.len();
    let jobs: Vec<(usize, usize, usize)> = (0..interventions.len())
        .flat_map(|i| (0..plan.runs).flat_map(move |r| (0..n_prospects).map(move |p| (i, r, p))))
        .collect();

    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = plan.parallelism.min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, r, p)) = jobs.get(k) else { break };
                let out = elicitor.elicit(
                    &prospects[p],
                    r,
                    plan.seed_for_run(r),
                    interventions[i].as_ref(),
                );
                results.lock().expect("results lock").push((k, out));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(k, _)| *k);

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (k, out) in results {
        let (i, r, p) = jobs[k];
        match out {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("elicitation failed for {} run {r}: {e}", prospects[p].id);
                let responses = match &e {
                    AgentError::ParseFailure { responses, .. } => responses.clone(),
                    _ => Vec::new(),
                };
                failures.push(ElicitFailure {
                    level: interventions[i].as_ref().map(|iv| iv.level),
                    run: r,
                    prospect_id: prospects[p].id.clone(),
                    error: e.to_string(),
                    responses,
                });
            }
        }
    }
    let key = |level: Option<u8>, run: usize, id: &str| (level, run, id.to_string());
    records.sort_by_key(|rec| {
        key(
            rec.intervention.map(|i| i.level),
            rec.run_index,
            &rec.prospect_id,
        )
    });
    failures.sort_by_key(|f| key(f.level, f.run, &f.prospect_id));

    Ok(ElicitationOutput {
        sweep_trait: plan.sweep.as_ref().map(|s| s.big_five_trait),
        records,
        failures,
    })
}

/// Look up a prospect by id in either embedded dataset.
pub fn find_prospect(id: &str) -> Option<Prospect> {
    [DatasetName::A, DatasetName::B]
        .into_iter()
        .find_map(|d| load_dataset(d).get(id).map(|r| r.prospect.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFit {
    pub level: Option<u8>,
    pub run: usize,
    pub n_observations: usize,
    pub fit: Result<FitResult, OptimizeError>,
}

/// Bootstrap summary of each parameter across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub level: Option<u8>,
    pub runs: usize,
    pub per_parameter: [BootstrapCi; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub per_run: Vec<RunFit>,
    pub aggregates: Vec<Aggregate>,
}

impl FitSummary {
    pub fn successful(&self) -> impl Iterator<Item = (&RunFit, &FitResult)> {
        self.per_run
            .iter()
            .filter_map(|rf| rf.fit.as_ref().ok().map(|f| (rf, f)))
    }
}

type Groups = BTreeMap<(Option<u8>, usize), Vec<(Prospect, f64)>>;

fn group_rows(rows: &[CeRow], per_run: bool) -> Result<Groups, ExperimentError> {
    let mut cache: BTreeMap<String, Prospect> = BTreeMap::new();
    let mut groups = Groups::new();
    for row in rows {
        let prospect = match cache.get(&row.prospect_id) {
            Some(p) => p.clone(),
            None => {
                let p = find_prospect(&row.prospect_id)
                    .ok_or_else(|| ExperimentError::UnknownProspect(row.prospect_id.clone()))?;
                cache.insert(row.prospect_id.clone(), p.clone());
                p
            }
        };
        let run = if per_run { row.run } else { 0 };
        groups
            .entry((row.level, run))
            .or_default()
            .push((prospect, row.ce));
    }
    Ok(groups)
}

/// Fit each (level, run) independently, then aggregate every parameter
/// across runs with a bootstrap median interval.
pub fn run_fit(rows: &[CeRow], config: &AnalysisConfig) -> Result<FitSummary, ExperimentError> {
    let groups = group_rows(rows, config.per_run)?;
    if groups.is_empty() {
        return Err(ExperimentError::NoSuccessfulRun("empty table".into()));
    }
    let per_run: Vec<RunFit> = groups
        .into_iter()
        .map(|((level, run), obs)| RunFit {
            level,
            run,
            n_observations: obs.len(),
            fit: fit_cpt(&obs, &config.fit),
        })
        .collect();

    let levels: BTreeSet<Option<u8>> = per_run.iter().map(|r| r.level).collect();
    let mut aggregates = Vec::new();
    for level in levels {
        let fits: Vec<&FitResult> = per_run
            .iter()
            .filter(|r| r.level == level)
            .filter_map(|r| r.fit.as_ref().ok())
            .collect();
        if fits.is_empty() {
            let reason = per_run
                .iter()
                .filter(|r| r.level == level)
                .find_map(|r| r.fit.as_ref().err().map(|e| e.to_string()))
                .unwrap_or_default();
            return Err(ExperimentError::NoSuccessfulRun(reason));
        }
        let mut cis = Vec::with_capacity(5);
        for k in 0..5 {
            let values: Vec<f64> = fits.iter().map(|f| f.params.to_array()[k]).collect();
            cis.push(bootstrap_median_ci(
                &values,
                config.resamples,
                config.bootstrap_seed,
            )?);
        }
        aggregates.push(Aggregate {
            level,
            runs: fits.len(),
            per_parameter: cis.try_into().expect("five parameters"),
        });
    }
    Ok(FitSummary {
        per_run,
        aggregates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterAnalysis {
    pub parameter: &'static str,
    pub correlation: Result<CorrelationResult, StatsError>,
    pub through_origin: Result<LinearFitResult, StatsError>,
    pub with_intercept: Result<LinearFitResult, StatsError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAnalysis {
    pub big_five_trait: Trait,
    pub parameters: Vec<ParameterAnalysis>,
}

impl SweepAnalysis {
    pub fn get(&self, parameter: &str) -> Option<&ParameterAnalysis> {
        self.parameters.iter().find(|p| p.parameter == parameter)
    }
}

/// Correlate persona level with each fitted parameter, pooling all
/// (level, run) fits, and fit `param = omega * level` lines.
pub fn analyze_sweep(big_five_trait: Trait, summary: &FitSummary) -> SweepAnalysis {
    let pairs: Vec<(f64, CptParams)> = summary
        .successful()
        .filter_map(|(rf, f)| rf.level.map(|l| (f64::from(l), f.params)))
        .collect();
    let levels: Vec<f64> = pairs.iter().map(|(l, _)| *l).collect();
    let parameters = CptParams::NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let values: Vec<f64> = pairs.iter().map(|(_, p)| p.to_array()[k]).collect();
            ParameterAnalysis {
                parameter: name,
                correlation: pearson(&levels, &values),
                through_origin: linear_fit(&levels, &values, true),
                with_intercept: linear_fit(&levels, &values, false),
            }
        })
        .collect();
    SweepAnalysis {
        big_five_trait,
        parameters,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub elicitation: ElicitationOutput,
    pub fits: FitSummary,
    pub analysis: SweepAnalysis,
}

pub fn run_intervention_sweep(
    elicitor: &Elicitor,
    plan: &ElicitationPlan,
    config: &AnalysisConfig,
) -> Result<SweepOutput, ExperimentError> {
    let sweep = plan
        .sweep
        .as_ref()
        .ok_or_else(|| ExperimentError::Config("sweep needs a trait and levels".into()))?;
    let elicitation = run_elicitation(elicitor, plan)?;
    let fits = run_fit(&elicitation.ce_rows(), config)?;
    let analysis = analyze_sweep(sweep.big_five_trait, &fits);
    Ok(SweepOutput {
        elicitation,
        fits,
        analysis,
    })
}
