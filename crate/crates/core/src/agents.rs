//! Certainty-equivalent providers: synthetic oracles and the chat-model
//! agent, together with the prompt templates and the reply parser.

use crate::cpt::{model_ce, CptParams, Prospect};
use crate::llm::{ChatBackend, ChatRequest, LlmError};
use crate::personality::{Intervention, Trait};
use crate::rng::{derive_seed, SplitMix64};
use chrono::{DateTime, Utc};
use rand_distr::{Distribution, Normal};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("reply has no `answer:` line")]
    NoAnswerLine,
    #[error("could not read an amount from {0:?}")]
    UnparsableAmount(String),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("parse failure after {attempts} attempt(s): {source}")]
    ParseFailure {
        attempts: usize,
        source: ParseError,
        responses: Vec<String>,
    },
    #[error(transparent)]
    Transport(#[from] LlmError),
    #[error("invalid agent: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpectedSign {
    NonNegative,
    NonPositive,
    Any,
}

impl ExpectedSign {
    pub fn for_prospect(prospect: &Prospect) -> Self {
        if prospect.expected_value() >= 0.0 {
            ExpectedSign::NonNegative
        } else {
            ExpectedSign::NonPositive
        }
    }

    pub fn admits(self, amount: f64) -> bool {
        match self {
            ExpectedSign::NonNegative => amount >= 0.0,
            ExpectedSign::NonPositive => amount <= 0.0,
            ExpectedSign::Any => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsedCe {
    pub amount: f64,
    pub sign_mismatch: bool,
}

fn amount_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)
            (?P<open>\()?\s*
            (?P<sign>[-\u{2212}\u{2013}])?\s*
            (?:US\$|USD|\$|£|€)?\s*
            (?P<sign2>[-\u{2212}\u{2013}])?\s*
            (?P<num>\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)
            \s*(?:USD|dollars?)?\s*
            (?P<close>\))?",
        )
        .expect("amount regex")
    })
}

/// Extract the certainty equivalent from a model reply.
///
/// The amount is read after the last `answer:` (any case). Currency symbols,
/// thousands separators and trailing words are ignored; a leading minus or
/// accounting parentheses make the amount negative.
pub fn parse_ce(raw: &str, expected: ExpectedSign) -> Result<ParsedCe, ParseError> {
    static KEY: OnceLock<Regex> = OnceLock::new();
    let key = KEY.get_or_init(|| Regex::new(r"(?i)answer\s*:").expect("answer regex"));
    let (line, m) = raw
        .lines()
        .rev()
        .find_map(|l| key.find_iter(l).last().map(|m| (l, m)))
        .ok_or(ParseError::NoAnswerLine)?;
    parse_amount(&line[m.end()..], expected)
}

fn parse_amount(text: &str, expected: ExpectedSign) -> Result<ParsedCe, ParseError> {
    let caps = amount_pattern()
        .captures(text)
        .ok_or_else(|| ParseError::UnparsableAmount(text.trim().to_string()))?;
    let magnitude: f64 = caps["num"]
        .replace(',', "")
        .parse()
        .map_err(|_| ParseError::UnparsableAmount(text.trim().to_string()))?;
    let negative = caps.name("sign").is_some()
        || caps.name("sign2").is_some()
        || (caps.name("open").is_some() && caps.name("close").is_some());
    let amount = if negative && magnitude != 0.0 {
        -magnitude
    } else {
        magnitude
    };
    Ok(ParsedCe {
        amount,
        sign_mismatch: !expected.admits(amount),
    })
}

/// Render a dollar amount as the prompts show it: integers without a
/// fractional part, otherwise the shortest exact decimal.
pub fn format_amount(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        x.to_string()
    }
}

/// Render a probability as a percentage with at most two decimals.
pub fn format_percent(p: f64) -> String {
    let pct = (p * 10_000.0).round() / 100.0;
    let s = format!("{pct:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn system_prompt(prospect: &Prospect) -> String {
    let ask = if prospect.expected_value() >= 0.0 {
        "least positive"
    } else {
        "most negative"
    };
    format!(
        "You will be given a gamble.\n\n\
         What is the {ask} amount of money that you would accept instead of taking the gamble?\n\n\
         Give your answer in the following format\n\n\
         reason: reason for your choice\n\
         answer: amount"
    )
}

pub fn user_prompt(prospect: &Prospect) -> String {
    let p = format_percent(prospect.p_high);
    let q = format_percent(1.0 - prospect.p_high);
    format!(
        "{} dollars with {q}% probability and {} dollars with {p}% probability.\nLets think about this step by step",
        format_amount(prospect.outcome_low),
        format_amount(prospect.outcome_high),
    )
}

/// System and user prompts for one prospect, with the persona prefix (if
/// any) placed before the system prompt.
pub fn build_prospect_prompts(
    prospect: &Prospect,
    intervention: Option<&Intervention>,
) -> (String, String) {
    let system = match intervention {
        Some(i) => format!("{}\n\n{}", i.rendered_prefix, system_prompt(prospect)),
        None => system_prompt(prospect),
    };
    (system, user_prompt(prospect))
}

/// A level-dependent oracle: parameters are `base + slope * level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonaScript {
    pub base: CptParams,
    pub slope: [f64; 5],
    pub noise_sd: f64,
}

impl PersonaScript {
    pub fn params_at(&self, level: Option<u8>) -> CptParams {
        let level = level.map(f64::from).unwrap_or(0.0);
        let base = self.base.to_array();
        CptParams::from_array(std::array::from_fn(|i| base[i] + self.slope[i] * level))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSpec {
    Rational,
    CptOracle { params: CptParams },
    NoisyCptOracle { params: CptParams, noise_sd: f64 },
    PersonaOracle { script: PersonaScript },
    Llm { model_name: String },
}

impl AgentSpec {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        match self {
            AgentSpec::Rational => Ok(()),
            AgentSpec::CptOracle { params } if !params.is_valid() => {
                bad(format!("parameters must be positive: {params}"))
            }
            AgentSpec::NoisyCptOracle { params, noise_sd } => {
                if !params.is_valid() {
                    bad(format!("parameters must be positive: {params}"))
                } else if noise_sd.is_nan() || *noise_sd < 0.0 {
                    bad(format!("noise sd {noise_sd} must be >= 0"))
                } else {
                    Ok(())
                }
            }
            AgentSpec::PersonaOracle { script } => {
                if script.noise_sd.is_nan() || script.noise_sd < 0.0 {
                    return bad(format!("noise sd {} must be >= 0", script.noise_sd));
                }
                for level in 1..=9 {
                    if !script.params_at(Some(level)).is_valid() {
                        return bad(format!(
                            "scripted parameters at level {level} are not positive"
                        ));
                    }
                }
                Ok(())
            }
            AgentSpec::Llm { model_name } if model_name.trim().is_empty() => {
                bad("model name is empty".into())
            }
            _ => Ok(()),
        }
    }

    pub fn is_llm(&self) -> bool {
        matches!(self, AgentSpec::Llm { .. })
    }
}

fn parse_numbers(s: &str) -> Result<Vec<f64>, AgentError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| AgentError::Config(format!("bad number {t:?}: {e}")))
        })
        .collect()
}

impl FromStr for AgentSpec {
    type Err = AgentError;

    /// `rational`, `cpt:a,b,l,g+,g-`, `noisy:a,b,l,g+,g-,sd`, `llm:<model>`,
    /// or `persona:<5 base values>,<5 slopes>,sd`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let params5 = |v: &[f64]| CptParams::from_array([v[0], v[1], v[2], v[3], v[4]]);
        let spec = match kind.trim() {
            "rational" => AgentSpec::Rational,
            "cpt" => {
                let v = parse_numbers(rest)?;
                if v.len() != 5 {
                    return Err(AgentError::Config("cpt agent needs 5 parameters".into()));
                }
                AgentSpec::CptOracle {
                    params: params5(&v),
                }
            }
            "noisy" => {
                let v = parse_numbers(rest)?;
                if v.len() != 6 {
                    return Err(AgentError::Config(
                        "noisy agent needs 5 parameters and a noise sd".into(),
                    ));
                }
                AgentSpec::NoisyCptOracle {
                    params: params5(&v),
                    noise_sd: v[5],
                }
            }
            "persona" => {
                let v = parse_numbers(rest)?;
                if v.len() != 11 {
                    return Err(AgentError::Config(
                        "persona agent needs 5 base values, 5 slopes and a noise sd".into(),
                    ));
                }
                AgentSpec::PersonaOracle {
                    script: PersonaScript {
                        base: params5(&v),
                        slope: [v[5], v[6], v[7], v[8], v[9]],
                        noise_sd: v[10],
                    },
                }
            }
            "llm" => AgentSpec::Llm {
                model_name: rest.trim().to_string(),
            },
            other => return Err(AgentError::Config(format!("unknown agent kind {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            AgentSpec::Rational => write!(f, "rational"),
            AgentSpec::CptOracle { params } => write!(f, "cpt:{}", join(&params.to_array())),
            AgentSpec::NoisyCptOracle { params, noise_sd } => {
                write!(f, "noisy:{},{noise_sd}", join(&params.to_array()))
            }
            AgentSpec::PersonaOracle { script } => write!(
                f,
                "persona:{},{},{}",
                join(&script.base.to_array()),
                join(&script.slope),
                script.noise_sd
            ),
            AgentSpec::Llm { model_name } => write!(f, "llm:{model_name}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionTag {
    #[serde(rename = "trait")]
    pub big_five_trait: Trait,
    pub level: u8,
}

impl From<&Intervention> for InterventionTag {
    fn from(i: &Intervention) -> Self {
        Self {
            big_five_trait: i.big_five_trait,
            level: i.level,
        }
    }
}

/// One elicited certainty equivalent with its full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeRecord {
    pub prospect_id: String,
    pub run_index: usize,
    pub seed: u64,
    pub intervention: Option<InterventionTag>,
    pub system_prompt: String,
    pub user_prompt: String,
    pub raw_response: String,
    pub certainty_equivalent: f64,
    pub timestamp: DateTime<Utc>,
    pub sign_mismatch: bool,
    /// Replies that failed to parse before `raw_response` succeeded.
    pub failed_responses: Vec<String>,
    pub system_fingerprint: Option<String>,
}

/// Gaussian noise stream for one record. The intervention is part of the
/// key, so different persona levels see independent noise.
fn noise(seed: u64, prospect_id: &str, intervention: Option<&Intervention>, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let key = match intervention {
        Some(i) => format!("{prospect_id}|{}|{}", i.big_five_trait, i.level),
        None => prospect_id.to_string(),
    };
    let mut rng = SplitMix64::new(derive_seed(seed, &key));
    Normal::new(0.0, sd).expect("finite sd").sample(&mut rng)
}

/// Elicits certainty equivalents from an agent.
#[derive(Clone)]
pub struct Elicitor {
    pub agent: AgentSpec,
    backend: Option<Arc<dyn ChatBackend>>,
    /// Parse retries after the first attempt.
    pub parse_retries: usize,
}

impl fmt::Debug for Elicitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Elicitor")
            .field("agent", &self.agent)
            .field("has_backend", &self.backend.is_some())
            .finish()
    }
}

impl Elicitor {
    pub fn new(agent: AgentSpec) -> Result<Self, AgentError> {
        agent.validate()?;
        if agent.is_llm() {
            return Err(AgentError::Config("llm agent needs a chat backend".into()));
        }
        Ok(Self {
            agent,
            backend: None,
            parse_retries: 1,
        })
    }

    pub fn with_backend(
        agent: AgentSpec,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self, AgentError> {
        agent.validate()?;
        Ok(Self {
            agent,
            backend: Some(backend),
            parse_retries: 1,
        })
    }

    pub fn elicit(
        &self,
        prospect: &Prospect,
        run_index: usize,
        seed: u64,
        intervention: Option<&Intervention>,
    ) -> Result<CeRecord, AgentError> {
        let (system_prompt, user_prompt) = build_prospect_prompts(prospect, intervention);
        let mut record = CeRecord {
            prospect_id: prospect.id.clone(),
            run_index,
            seed,
            intervention: intervention.map(InterventionTag::from),
            system_prompt,
            user_prompt,
            raw_response: String::new(),
            certainty_equivalent: 0.0,
            timestamp: Utc::now(),
            sign_mismatch: false,
            failed_responses: Vec::new(),
            system_fingerprint: None,
        };
        let oracle = |params: &CptParams, sd: f64| {
            model_ce(prospect, params) + noise(seed, &prospect.id, intervention, sd)
        };
        record.certainty_equivalent = match &self.agent {
            AgentSpec::Rational => prospect.expected_value(),
            AgentSpec::CptOracle { params } => model_ce(prospect, params),
            AgentSpec::NoisyCptOracle { params, noise_sd } => oracle(params, *noise_sd),
            AgentSpec::PersonaOracle { script } => oracle(
                &script.params_at(intervention.map(|i| i.level)),
                script.noise_sd,
            ),
            AgentSpec::Llm { model_name } => {
                let backend = self
                    .backend
                    .as_ref()
                    .ok_or_else(|| AgentError::Config("llm agent needs a chat backend".into()))?;
                let request =
                    ChatRequest::new(model_name, &record.system_prompt, &record.user_prompt, seed);
                let expected = ExpectedSign::for_prospect(prospect);
                let mut last_err = None;
                for _ in 0..=self.parse_retries {
                    let completion = backend.complete(&request)?;
                    match parse_ce(&completion.text, expected) {
                        Ok(parsed) => {
                            record.raw_response = completion.text;
                            record.system_fingerprint = completion.system_fingerprint;
                            record.sign_mismatch = parsed.sign_mismatch;
                            last_err = None;
                            record.certainty_equivalent = parsed.amount;
                            break;
                        }
                        Err(e) => {
                            record.failed_responses.push(completion.text);
                            last_err = Some(e);
                        }
                    }
                }
                if let Some(source) = last_err {
                    return Err(AgentError::ParseFailure {
                        attempts: record.failed_responses.len(),
                        source,
                        responses: record.failed_responses,
                    });
                }
                record.certainty_equivalent
            }
        };
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::personality::render_intervention;

    #[test]
    fn parse_examples() {
        let p = |s| parse_ce(s, ExpectedSign::Any).unwrap().amount;
        assert_eq!(p("reason: safe choice\nanswer: 45"), 45.0);
        assert_eq!(p("answer: -$1,250.50"), -1250.50);
        assert_eq!(p("I would accept answer: (75) dollars"), -75.0);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_ce("I refuse", ExpectedSign::Any),
            Err(ParseError::NoAnswerLine)
        );
        assert!(matches!(
            parse_ce("answer: amount", ExpectedSign::Any),
            Err(ParseError::UnparsableAmount(_))
        ));
    }

    #[test]
    fn sign_mismatch_is_flagged_not_fixed() {
        let r = parse_ce("answer: 30", ExpectedSign::NonPositive).unwrap();
        assert_eq!(r.amount, 30.0);
        assert!(r.sign_mismatch);
        assert!(
            !parse_ce("answer: -30", ExpectedSign::NonPositive)
                .unwrap()
                .sign_mismatch
        );
    }

    #[test]
    fn percent_rendering() {
        assert_eq!(format_percent(0.05), "5");
        assert_eq!(format_percent(0.95), "95");
        assert_eq!(format_percent(1.0 - 0.99), "1");
        assert_eq!(format_percent(0.005), "0.5");
        assert_eq!(format_percent(0.1234), "12.34");
        assert_eq!(format_percent(0.0), "0");
    }

    #[test]
    fn prompt_examples() {
        let (_, user) = build_prospect_prompts(&Prospect::new("x", 0.0, 100.0, 0.95), None);
        assert_eq!(
            user,
            "0 dollars with 5% probability and 100 dollars with 95% probability.\nLets think about this step by step"
        );
        let (sys, _) = build_prospect_prompts(&Prospect::new("x", 0.0, -200.0, 0.99), None);
        assert!(sys.contains("most negative"));
        let (sys, _) = build_prospect_prompts(&Prospect::new("x", 29.0, 37.0, 0.05), None);
        assert!(sys.contains("least positive"));
    }

    #[test]
    fn intervention_prefix() {
        let i = render_intervention(Trait::Openness, 9).unwrap();
        let (sys, _) = build_prospect_prompts(&Prospect::new("x", 0.0, 10.0, 0.5), Some(&i));
        assert!(sys.starts_with(&i.rendered_prefix));
        assert!(sys.contains("\"\n\nYou will be given a gamble."));
    }

    #[test]
    fn agent_spec_strings() {
        assert_eq!(
            "rational".parse::<AgentSpec>().unwrap(),
            AgentSpec::Rational
        );
        let s: AgentSpec = "cpt:0.88,0.88,2.25,0.61,0.69".parse().unwrap();
        assert_eq!(
            s,
            AgentSpec::CptOracle {
                params: CptParams::tk_median()
            }
        );
        assert_eq!(s.to_string().parse::<AgentSpec>().unwrap(), s);
        let n: AgentSpec = "noisy:1,1,1,1,1,0.5".parse().unwrap();
        assert_eq!(n.to_string().parse::<AgentSpec>().unwrap(), n);
        let p: AgentSpec = "persona:0.7,1,1,1,1,0.03,0,0,0,0,0.5".parse().unwrap();
        assert_eq!(p.to_string().parse::<AgentSpec>().unwrap(), p);
        assert_eq!(
            "llm:gpt-4o".parse::<AgentSpec>().unwrap(),
            AgentSpec::Llm {
                model_name: "gpt-4o".into()
            }
        );
        assert!("cpt:1,1,1".parse::<AgentSpec>().is_err());
        assert!("cpt:1,1,-1,1,1".parse::<AgentSpec>().is_err());
        assert!("noisy:1,1,1,1,1,-2".parse::<AgentSpec>().is_err());
        assert!("llm:".parse::<AgentSpec>().is_err());
        assert!("oracle".parse::<AgentSpec>().is_err());
    }

    #[test]
    fn oracle_elicitation() {
        let p = Prospect::new("x", 0.0, -200.0, 0.5);
        let r = Elicitor::new(AgentSpec::Rational)
            .unwrap()
            .elicit(&p, 0, 7, None)
            .unwrap();
        assert_eq!(r.certainty_equivalent, -100.0);
        assert!(r.raw_response.is_empty());

        let p = Prospect::new("y", 0.0, 100.0, 0.5);
        let tk = CptParams::tk_median();
        let r = Elicitor::new(AgentSpec::CptOracle { params: tk })
            .unwrap()
            .elicit(&p, 0, 7, None)
            .unwrap();
        assert_eq!(r.certainty_equivalent, model_ce(&p, &tk));

        let noisy = Elicitor::new(AgentSpec::NoisyCptOracle {
            params: tk,
            noise_sd: 2.0,
        })
        .unwrap();
        let a = noisy.elicit(&p, 0, 11, None).unwrap().certainty_equivalent;
        let b = noisy.elicit(&p, 0, 11, None).unwrap().certainty_equivalent;
        let c = noisy.elicit(&p, 0, 12, None).unwrap().certainty_equivalent;
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, model_ce(&p, &tk));
    }

    #[test]
    fn noise_is_roughly_gaussian() {
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|i| noise(i as u64, "p", None, 3.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.1, "{mean}");
        assert!((var.sqrt() - 3.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn persona_script_levels() {
        let script = PersonaScript {
            base: CptParams::new(0.7, 1.0, 1.0, 1.0, 1.0),
            slope: [0.03, 0.0, 0.0, 0.0, 0.0],
            noise_sd: 0.0,
        };
        assert!((script.params_at(Some(5)).alpha - 0.85).abs() < 1e-12);
        assert_eq!(script.params_at(None).alpha, 0.7);
    }

    #[test]
    fn llm_requires_backend() {
        assert!(Elicitor::new(AgentSpec::Llm {
            model_name: "m".into()
        })
        .is_err());
    }
}
