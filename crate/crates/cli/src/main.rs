use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use riskcpt::agents::{AgentSpec, Elicitor};
use riskcpt::artifacts::{
    self, read_ce_table, read_config, write_config, write_elicitation, write_fit_outputs,
};
use riskcpt::datasets::{load_dataset, summarize, DatasetName};
use riskcpt::experiment::{
    analyze_sweep, run_elicitation, run_fit, AnalysisConfig, ElicitationOutput, ElicitationPlan,
    ProspectFilter, SweepSpec,
};
use riskcpt::llm::{Cassette, ChatBackend, HttpChatClient, Recorder};
use riskcpt::optimizer::FitOptions;
use riskcpt::personality::{read_responses, score_inventory, InventorySpec, Trait};
use riskcpt::report::{build_report, write_report};
use riskcpt::stats::DEFAULT_RESAMPLES;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "riskcpt",
    version,
    about = "Estimate CPT risk parameters from elicited certainty equivalents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export or summarize an embedded prospect dataset.
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
    /// Elicit certainty equivalents and write transcript.jsonl, ce.csv and failures.csv.
    Elicit(ElicitArgs),
    /// Fit CPT parameters per run and aggregate across runs.
    Fit(FitArgs),
    /// Elicit over persona levels of one trait, fit, and correlate level with parameters.
    Sweep {
        #[command(flatten)]
        elicit: ElicitArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Score a personality inventory.
    ScoreInventory {
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        responses: PathBuf,
    },
    /// Summarize an experiment directory and write plot data.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum DatasetAction {
    Export {
        #[arg(long)]
        dataset: DatasetName,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Summarize {
        #[arg(long)]
        dataset: DatasetName,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Every option may also come from a flat `key=value` file given with
/// `--config`; flags win over the file.
#[derive(Args, Clone, Default)]
struct ElicitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// rational | cpt:a,b,l,g+,g- | noisy:a,b,l,g+,g-,sd | persona:<base x5>,<slope x5>,sd | llm:<model>
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    /// all | gains | losses | mixed
    #[arg(long)]
    subset: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long = "trait")]
    big_five_trait: Option<String>,
    /// Comma-separated levels in 1..=9.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Replay LLM replies from a JSON-lines cassette instead of calling the API.
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Append live LLM replies to this cassette.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long)]
    parse_retries: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct AnalysisArgs {
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    restart_seed: Option<u64>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    bootstrap_seed: Option<u64>,
    /// Fit all runs of a level together instead of one fit per run.
    #[arg(long)]
    pooled: bool,
    /// Row label for the slope table.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory; defaults to the directory holding the CE table.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    analysis: AnalysisArgs,
}

struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => read_config(p)?.into_iter().collect(),
            None => BTreeMap::new(),
        };
        Ok(Self { file })
    }

    fn pick<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}: {e}")),
            None => Ok(None),
        }
    }
}

struct Resolved {
    agent: AgentSpec,
    plan: ElicitationPlan,
    cassette: Option<PathBuf>,
    record: Option<PathBuf>,
    parse_retries: usize,
    out: PathBuf,
}

fn parse_levels(s: &str) -> Result<Vec<u8>> {
    s.split(',')
        .map(|l| {
            l.trim()
                .parse::<u8>()
                .with_context(|| format!("bad level {l:?}"))
        })
        .collect()
}

fn resolve(args: &ElicitArgs) -> Result<Resolved> {
    let s = Settings::load(args.config.as_deref())?;
    let agent: String = s
        .pick(args.agent.clone(), "agent")?
        .context("--agent is required")?;
    let agent: AgentSpec = agent.parse()?;
    let dataset: String = s
        .pick(args.dataset.clone(), "dataset")?
        .context("--dataset is required")?;
    let dataset: DatasetName = dataset.parse()?;
    let sweep = match s.pick(args.big_five_trait.clone(), "trait")? {
        Some(t) => {
            let t: Trait = t.parse()?;
            let levels = match s.pick(args.levels.clone(), "levels")? {
                Some(l) => parse_levels(&l)?,
                None => SweepSpec::DEFAULT_LEVELS.to_vec(),
            };
            Some(SweepSpec::new(t, levels)?)
        }
        None => {
            if s.pick(args.levels.clone(), "levels")?.is_some() {
                bail!("--levels needs --trait");
            }
            None
        }
    };
    let default_runs = if sweep.is_some() {
        ElicitationPlan::DEFAULT_SWEEP_RUNS
    } else {
        ElicitationPlan::DEFAULT_RUNS
    };
    let runs = s.pick(args.runs, "runs")?.unwrap_or(default_runs);
    let base_seed = s.pick(args.base_seed, "base_seed")?.unwrap_or(0);
    let mut plan = ElicitationPlan::new(dataset, runs, base_seed);
    if let Some(sub) = s.pick(args.subset.clone(), "subset")? {
        plan = plan.with_subset(sub.parse::<ProspectFilter>()?);
    }
    if let Some(sw) = sweep {
        plan = plan.with_sweep(sw);
    }
    if let Some(k) = s.pick(args.parallelism, "parallelism")? {
        plan.parallelism = k;
    }
    Ok(Resolved {
        agent,
        plan,
        cassette: s.pick(args.cassette.clone(), "cassette")?,
        record: s.pick(args.record.clone(), "record")?,
        parse_retries: s.pick(args.parse_retries, "parse_retries")?.unwrap_or(1),
        out: s
            .pick(args.out.clone(), "out")?
            .context("--out is required")?,
    })
}

fn elicitor(r: &Resolved) -> Result<Elicitor> {
    let mut e = if r.agent.is_llm() {
        let backend: Arc<dyn ChatBackend> = match (&r.cassette, &r.record) {
            (Some(_), Some(_)) => bail!("--cassette and --record are mutually exclusive"),
            (Some(path), None) => Arc::new(
                Cassette::load(path).with_context(|| format!("loading {}", path.display()))?,
            ),
            (None, Some(path)) => Arc::new(Recorder::new(HttpChatClient::from_env()?, path)?),
            (None, None) => Arc::new(HttpChatClient::from_env()?),
        };
        Elicitor::with_backend(r.agent.clone(), backend)?
    } else {
        Elicitor::new(r.agent.clone())?
    };
    e.parse_retries = r.parse_retries;
    Ok(e)
}

fn analysis_config(a: &AnalysisArgs) -> AnalysisConfig {
    let defaults = FitOptions::default();
    AnalysisConfig {
        fit: FitOptions {
            restarts: a.restarts.unwrap_or(defaults.restarts),
            restart_seed: a.restart_seed.unwrap_or(defaults.restart_seed),
            ..defaults
        },
        per_run: !a.pooled,
        resamples: a.resamples.unwrap_or(DEFAULT_RESAMPLES),
        bootstrap_seed: a.bootstrap_seed.unwrap_or(0),
    }
}

fn config_pairs(r: &Resolved) -> Vec<(&'static str, String)> {
    let mut pairs = vec![
        ("agent", r.agent.to_string()),
        ("dataset", r.plan.dataset.to_string()),
        ("subset", r.plan.subset.as_str().to_string()),
        ("runs", r.plan.runs.to_string()),
        ("base_seed", r.plan.base_seed.to_string()),
        ("parallelism", r.plan.parallelism.to_string()),
        ("parse_retries", r.parse_retries.to_string()),
    ];
    if let Some(sw) = &r.plan.sweep {
        pairs.push(("trait", sw.big_five_trait.name().to_string()));
        let levels: Vec<String> = sw.levels.iter().map(u8::to_string).collect();
        pairs.push(("levels", levels.join(",")));
    }
    if let Some(c) = &r.cassette {
        pairs.push(("cassette", c.display().to_string()));
    }
    pairs
}

fn elicit(args: &ElicitArgs) -> Result<(Resolved, ElicitationOutput)> {
    let r = resolve(args)?;
    let e = elicitor(&r)?;
    let out = run_elicitation(&e, &r.plan)?;
    write_elicitation(&r.out, &out)?;
    write_config(&r.out.join(artifacts::CONFIG), &config_pairs(&r))?;
    eprintln!(
        "{} records, {} failures, {} sign mismatches -> {}",
        out.records.len(),
        out.failures.len(),
        out.sign_mismatches(),
        r.out.display()
    );
    Ok((r, out))
}

fn fit_and_write(
    dir: &Path,
    sweep_trait: Option<Trait>,
    rows: &[riskcpt::experiment::CeRow],
    a: &AnalysisArgs,
    default_label: &str,
) -> Result<()> {
    let summary = run_fit(rows, &analysis_config(a))?;
    write_fit_outputs(dir, sweep_trait, &summary)?;
    let failed = summary.per_run.iter().filter(|r| r.fit.is_err()).count();
    eprintln!(
        "{} fits ({failed} failed) -> {}",
        summary.per_run.len(),
        dir.display()
    );
    if let Some(t) = sweep_trait {
        let analysis = analyze_sweep(t, &summary);
        let label = a.label.clone().unwrap_or_else(|| default_label.to_string());
        artifacts::write_sweep_analysis(dir, &analysis, &label)?;
        for pa in &analysis.parameters {
            match &pa.correlation {
                Ok(c) => eprintln!(
                    "{t} vs {}: rho {:.3}{} (p {:.3e})",
                    pa.parameter,
                    c.rho,
                    c.significance_stars.as_str(),
                    c.p_value
                ),
                Err(e) => eprintln!("{t} vs {}: {e}", pa.parameter),
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset { action } => match action {
            DatasetAction::Export { dataset, out } => {
                let ds = load_dataset(dataset);
                match out {
                    Some(p) => {
                        ds.write_csv(File::create(&p).with_context(|| p.display().to_string())?)?
                    }
                    None => ds.write_csv(std::io::stdout().lock())?,
                }
            }
            DatasetAction::Summarize { dataset, out } => {
                let summary = summarize(&load_dataset(dataset));
                eprintln!(
                    "{}: {} prospects, {} mixed, {} gains-only, {} losses-only",
                    dataset,
                    summary.count,
                    summary.mixed_count,
                    summary.gains_only_count,
                    summary.losses_only_count
                );
                match out {
                    Some(p) => summary
                        .write_csv(File::create(&p).with_context(|| p.display().to_string())?)?,
                    None => summary.write_csv(std::io::stdout().lock())?,
                }
            }
        },
        Command::Elicit(args) => {
            elicit(&args)?;
        }
        Command::Fit(args) => {
            let (sweep_trait, rows) = read_ce_table(&args.input)?;
            let dir = match args.out {
                Some(d) => d,
                None => args
                    .input
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from(".")),
            };
            fit_and_write(&dir, sweep_trait, &rows, &args.analysis, "model")?;
        }
        Command::Sweep {
            elicit: args,
            analysis,
        } => {
            let (r, out) = elicit(&args)?;
            let Some(sw) = &r.plan.sweep else {
                bail!("sweep needs --trait");
            };
            fit_and_write(
                &r.out,
                Some(sw.big_five_trait),
                &out.ce_rows(),
                &analysis,
                &r.agent.to_string(),
            )?;
        }
        Command::ScoreInventory {
            inventory,
            responses,
        } => {
            let spec = InventorySpec::from_csv(
                File::open(&inventory).with_context(|| inventory.display().to_string())?,
            )?;
            let resp = read_responses(
                File::open(&responses).with_context(|| responses.display().to_string())?,
            )?;
            let scores = score_inventory(&resp, &spec)?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "trait,score")?;
            for (t, score) in scores {
                writeln!(stdout, "{},{score}", t.name())?;
            }
        }
        Command::Report { input } => {
            let report = build_report(&input)?;
            write_report(&input, &report)?;
            print!("{}", report.summary_text());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
