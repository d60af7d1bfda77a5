//! Estimation of cumulative prospect theory risk parameters from reported
//! certainty equivalents, with persona interventions and the statistics used
//! to relate persona level to risk attitude.

pub mod agents;
pub mod artifacts;
pub mod cpt;
pub mod datasets;
pub mod experiment;
pub mod llm;
pub mod optimizer;
pub mod personality;
pub mod report;
pub mod rng;
pub mod stats;

pub use agents::{AgentSpec, CeRecord, Elicitor};
pub use cpt::{
    inverse_value, model_ce, utility, value, weight, CptParams, Prospect, ProspectKind, Utility,
};
pub use datasets::{load_dataset, Dataset, DatasetName};
pub use experiment::{
    run_elicitation, run_fit, run_intervention_sweep, AnalysisConfig, ElicitationPlan, SweepSpec,
};
pub use optimizer::{fit_cpt, nelder_mead, FitOptions, FitResult, NmConfig};
pub use personality::{render_intervention, Intervention, Trait};
