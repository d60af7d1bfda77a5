//! Nelder-Mead simplex minimisation and the least-squares CPT regression
//! built on top of it.

use crate::cpt::{model_ce, CptParams, Prospect};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("objective returned a non-finite value at {point:?}")]
    NonFiniteObjective { point: Vec<f64> },
    #[error("no observations to fit")]
    EmptyObservations,
    #[error("observation for prospect {0} is not finite")]
    NonFiniteObservation(String),
    #[error("starting point must be non-empty and finite")]
    InvalidStart,
}

pub const WARN_LAMBDA: &str = "lambda unidentified: no mixed prospects";
pub const WARN_GAMMA_MINUS: &str = "gamma_minus unidentified: no risky loss outcome";
pub const WARN_GAMMA_PLUS: &str = "gamma_plus unidentified: no risky gain outcome";
pub const WARN_SMALL_GAMMA: &str =
    "probability weighting exponent below 0.3: weighting is not monotone";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmConfig {
    pub max_iterations: usize,
    pub f_tolerance: f64,
    pub x_tolerance: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            f_tolerance: 1e-10,
            x_tolerance: 1e-8,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

impl NmConfig {
    pub fn is_valid(&self) -> bool {
        self.reflection > 0.0
            && self.expansion > 1.0
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.f_tolerance >= 0.0
            && self.x_tolerance >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<F> {
    objective: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64, OptimizeError> {
        self.evaluations += 1;
        let f = (self.objective)(x);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(OptimizeError::NonFiniteObjective { point: x.to_vec() })
        }
    }
}

fn initial_simplex(x0: &[f64]) -> Vec<Vec<f64>> {
    let mut simplex = Vec::with_capacity(x0.len() + 1);
    simplex.push(x0.to_vec());
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += if x0[i] == 0.0 { 0.05 } else { 0.05 * x0[i] };
        simplex.push(v);
    }
    simplex
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect()
}

/// Minimise `objective` from `x0` with the classic Nelder-Mead simplex.
///
/// Convergence requires both the spread of function values over the simplex
/// to fall below `f_tolerance` and the largest vertex distance (max-norm)
/// from the best vertex to fall below `x_tolerance`.
pub fn nelder_mead<F>(
    objective: F,
    x0: &[f64],
    config: &NmConfig,
) -> Result<NmOutcome, OptimizeError>
where
    F: FnMut(&[f64]) -> f64,
{
    if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
        return Err(OptimizeError::InvalidStart);
    }
    let n = x0.len();
    let mut obj = Counted {
        objective,
        evaluations: 0,
    };
    let mut simplex = initial_simplex(x0);
    let mut values = simplex
        .iter()
        .map(|v| obj.eval(v))
        .collect::<Result<Vec<_>, _>>()?;

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // stable sort keeps ties in insertion order, so x0 stays best on flat objectives
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let f_spread = values[n] - values[0];
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread <= config.f_tolerance && x_spread <= config.x_tolerance {
            converged = true;
            break;
        }
        if iterations >= config.max_iterations {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();

        let reflected = affine(&centroid, &worst, -config.reflection);
        let f_r = obj.eval(&reflected)?;
        if f_r < values[0] {
            let expanded = affine(&centroid, &worst, -config.reflection * config.expansion);
            let f_e = obj.eval(&expanded)?;
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        // contraction: outside if the reflected point beat the worst, inside otherwise
        let (candidate, f_c) = if f_r < values[n] {
            let c = affine(&centroid, &reflected, config.contraction);
            let f = obj.eval(&c)?;
            (c, f)
        } else {
            let c = affine(&centroid, &worst, config.contraction);
            let f = obj.eval(&c)?;
            (c, f)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = candidate;
            values[n] = f_c;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = affine(&best, &simplex[i], config.shrink);
            values[i] = obj.eval(&simplex[i])?;
        }
    }

    Ok(NmOutcome {
        x: simplex[0].clone(),
        f: values[0],
        iterations,
        evaluations: obj.evaluations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: CptParams,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    pub init: CptParams,
    pub config: NmConfig,
    /// Extra starts from jittered initial points; the lowest loss wins.
    pub restarts: usize,
    pub restart_seed: u64,
}

/// Mean squared error between observed and model certainty equivalents.
pub fn cpt_loss(observations: &[(Prospect, f64)], params: &CptParams) -> f64 {
    let sum: f64 = observations
        .iter()
        .map(|(p, ce)| {
            let r = ce - model_ce(p, params);
            r * r
        })
        .sum();
    sum / observations.len() as f64
}

fn to_log(params: &CptParams) -> Vec<f64> {
    params.to_array().iter().map(|v| v.ln()).collect()
}

fn from_log(x: &[f64]) -> CptParams {
    CptParams::from_array([x[0].exp(), x[1].exp(), x[2].exp(), x[3].exp(), x[4].exp()])
}

pub fn identifiability_warnings(observations: &[(Prospect, f64)]) -> Vec<String> {
    let mut warnings = Vec::new();
    if !observations.iter().any(|(p, _)| p.is_mixed()) {
        warnings.push(WARN_LAMBDA.to_string());
    }
    if !observations.iter().any(|(p, _)| p.has_risky_outcome(true)) {
        warnings.push(WARN_GAMMA_MINUS.to_string());
    }
    if !observations.iter().any(|(p, _)| p.has_risky_outcome(false)) {
        warnings.push(WARN_GAMMA_PLUS.to_string());
    }
    warnings
}

/// Least-squares fit of CPT parameters to observed certainty equivalents.
///
/// The search runs over log-parameters so every fitted component is strictly
/// positive.
pub fn fit_cpt(
    observations: &[(Prospect, f64)],
    options: &FitOptions,
) -> Result<FitResult, OptimizeError> {
    if observations.is_empty() {
        return Err(OptimizeError::EmptyObservations);
    }
    if let Some((p, _)) = observations.iter().find(|(_, ce)| !ce.is_finite()) {
        return Err(OptimizeError::NonFiniteObservation(p.id.clone()));
    }
    if !options.init.is_valid() {
        return Err(OptimizeError::InvalidStart);
    }

    let objective = |x: &[f64]| cpt_loss(observations, &from_log(x));
    let mut best = nelder_mead(objective, &to_log(&options.init), &options.config)?;

    if options.restarts > 0 {
        use rand::{Rng, SeedableRng};
        let mut rng = crate::rng::SplitMix64::seed_from_u64(options.restart_seed);
        for _ in 0..options.restarts {
            let start: Vec<f64> = to_log(&options.init)
                .iter()
                .map(|v| v + rng.random_range(-0.3..0.3))
                .collect();
            let candidate = nelder_mead(objective, &start, &options.config)?;
            if candidate.f < best.f {
                best = candidate;
            }
        }
    }

    let params = from_log(&best.x);
    let mut warnings = identifiability_warnings(observations);
    if params.gamma_plus < 0.3 || params.gamma_minus < 0.3 {
        warnings.push(WARN_SMALL_GAMMA.to_string());
    }
    Ok(FitResult {
        params,
        final_loss: best.f,
        iterations: best.iterations,
        converged: best.converged,
        warnings,
    })
}
