use proptest::prelude::*;
use riskcpt::agents::{build_prospect_prompts, AgentSpec, Elicitor};
use riskcpt::artifacts::{
    write_elicitation, write_fit_outputs, AGGREGATE, CE_TABLE, FAILURES, FITS,
};
use riskcpt::experiment::{run_elicitation, run_fit, AnalysisConfig, ElicitationPlan};
use riskcpt::llm::{Cassette, ChatRequest};
use riskcpt::{fit_cpt, load_dataset, model_ce, CptParams, DatasetName, FitOptions};
use std::path::Path;
use std::sync::Arc;

const MODEL: &str = "stub-model";

fn analysis() -> AnalysisConfig {
    AnalysisConfig {
        resamples: 1000,
        bootstrap_seed: 3,
        ..AnalysisConfig::default()
    }
}

/// A cassette answering every D_B prospect for `runs` runs with the CPT
/// certainty equivalent under `params`, except for `broken` (run, id) pairs.
fn cassette(params: &CptParams, runs: usize, base_seed: u64, broken: &[(usize, &str)]) -> Cassette {
    let mut c = Cassette::default();
    for run in 0..runs {
        for row in &load_dataset(DatasetName::B).rows {
            let p = &row.prospect;
            let (system, user) = build_prospect_prompts(p, None);
            let req = ChatRequest::new(MODEL, system, user, base_seed + run as u64);
            if broken.contains(&(run, p.id.as_str())) {
                c.insert(&req, "reason: I would rather not say");
            } else {
                c.insert(
                    &req,
                    format!("reason: weighed it up\nanswer: ${:.4}", model_ce(p, params)),
                );
            }
        }
    }
    c
}

fn llm_elicitor(c: Cassette) -> Elicitor {
    Elicitor::with_backend(
        AgentSpec::Llm {
            model_name: MODEL.into(),
        },
        Arc::new(c),
    )
    .unwrap()
}

fn write_all(dir: &Path, e: &Elicitor, plan: &ElicitationPlan) {
    let out = run_elicitation(e, plan).unwrap();
    let summary = run_fit(&out.ce_rows(), &analysis()).unwrap();
    write_elicitation(dir, &out).unwrap();
    write_fit_outputs(dir, None, &summary).unwrap();
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn cassette_replay_reproduces_csv_bytes() {
    let params = CptParams::new(0.8, 0.9, 1.7, 0.65, 0.75);
    let plan = ElicitationPlan::new(DatasetName::B, 3, 100);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_all(
        a.path(),
        &llm_elicitor(cassette(&params, 3, 100, &[])),
        &plan,
    );
    write_all(
        b.path(),
        &llm_elicitor(cassette(&params, 3, 100, &[])),
        &plan,
    );
    for f in [CE_TABLE, FAILURES, FITS, AGGREGATE] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn one_parse_failure_only_touches_its_run() {
    let params = CptParams::new(0.8, 0.9, 1.7, 0.65, 0.75);
    let plan = ElicitationPlan::new(DatasetName::B, 3, 100);
    let clean = run_elicitation(&llm_elicitor(cassette(&params, 3, 100, &[])), &plan).unwrap();
    let dirty = run_elicitation(
        &llm_elicitor(cassette(&params, 3, 100, &[(1, "B17")])),
        &plan,
    )
    .unwrap();

    assert_eq!(dirty.failures.len(), 1);
    assert_eq!(
        (
            dirty.failures[0].run,
            dirty.failures[0].prospect_id.as_str()
        ),
        (1, "B17")
    );
    assert_eq!(dirty.failures[0].responses.len(), 2);
    let mut expected = clean.ce_rows();
    expected.retain(|r| !(r.run == 1 && r.prospect_id == "B17"));
    assert_eq!(dirty.ce_rows(), expected);

    let cfg = analysis();
    let clean_fits = run_fit(&clean.ce_rows(), &cfg).unwrap();
    let dirty_fits = run_fit(&dirty.ce_rows(), &cfg).unwrap();
    for (c, d) in clean_fits.per_run.iter().zip(&dirty_fits.per_run) {
        if c.run == 1 {
            assert_eq!(d.n_observations, c.n_observations - 1);
        } else {
            assert_eq!(c, d);
        }
    }
}

#[test]
fn oracle_reruns_reproduce_csv_bytes() {
    let agent = AgentSpec::NoisyCptOracle {
        params: CptParams::tk_median(),
        noise_sd: 2.0,
    };
    let mut plan = ElicitationPlan::new(DatasetName::B, 4, 77);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    plan.parallelism = 1;
    write_all(a.path(), &Elicitor::new(agent.clone()).unwrap(), &plan);
    plan.parallelism = 6;
    write_all(b.path(), &Elicitor::new(agent).unwrap(), &plan);
    for f in [CE_TABLE, FAILURES, FITS, AGGREGATE] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

fn theta() -> impl Strategy<Value = CptParams> {
    (
        0.5..1.5f64,
        0.5..1.5f64,
        1.0..3.0f64,
        0.5..1.5f64,
        0.5..1.5f64,
    )
        .prop_map(|(a, b, l, gp, gm)| CptParams::new(a, b, l, gp, gm))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noiseless_dataset_b_recovers_parameters(truth in theta()) {
        let obs: Vec<_> = load_dataset(DatasetName::B)
            .prospects()
            .into_iter()
            .map(|p| {
                let ce = model_ce(&p, &truth);
                (p, ce)
            })
            .collect();
        let options = FitOptions {
            restarts: 3,
            ..FitOptions::default()
        };
        let fit = fit_cpt(&obs, &options).unwrap();
        for (got, want) in fit.params.to_array().iter().zip(truth.to_array()) {
            prop_assert!((got - want).abs() <= 0.05, "{} vs {}", fit.params, truth);
        }
        prop_assert!(fit.warnings.is_empty());
    }
}
