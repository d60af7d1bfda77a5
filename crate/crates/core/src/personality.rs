//! Big Five persona prompts and inventory scoring.
//!
//! Persona prompts combine the bipolar adjective markers of each trait with a
//! nine-point intensity qualifier. Inventories are supplied by the caller as
//! CSV; no item text is bundled.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PersonalityError {
    #[error("level {0} is outside 1..=9")]
    LevelOutOfRange(i64),
    #[error("unknown trait {0:?}")]
    UnknownTrait(String),
    #[error("facet {facet:?} does not belong to {big_five_trait}")]
    FacetMismatch {
        facet: String,
        big_five_trait: Trait,
    },
    #[error("response {response} for item {item} is outside {min}..={max}")]
    OutOfScaleResponse {
        item: String,
        response: i64,
        min: i64,
        max: i64,
    },
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("missing responses for items {0:?}")]
    MissingItems(Vec<String>),
    #[error("invalid inventory file: {0}")]
    InvalidFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Trait {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Trait::Openness,
        Trait::Conscientiousness,
        Trait::Extraversion,
        Trait::Agreeableness,
        Trait::Neuroticism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Trait::Openness => "Openness",
            Trait::Conscientiousness => "Conscientiousness",
            Trait::Extraversion => "Extraversion",
            Trait::Agreeableness => "Agreeableness",
            Trait::Neuroticism => "Neuroticism",
        }
    }

    /// (low, high) markers, in table order.
    pub fn markers(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Trait::Conscientiousness => &[
                ("unsure", "self-efficacious"),
                ("messy", "orderly"),
                ("irresponsible", "responsible"),
                ("lazy", "hardworking"),
                ("undisciplined", "self-disciplined"),
                ("impractical", "practical"),
                ("extravagant", "thrifty"),
                ("disorganised", "organized"),
                ("negligent", "conscientious"),
                ("careless", "thorough"),
            ],
            Trait::Extraversion => &[
                ("unfriendly", "friendly"),
                ("introverted", "extraverted"),
                ("silent", "talkative"),
                ("timid", "bold"),
                ("unassertive", "assertive"),
                ("inactive", "active"),
                ("unenergetic", "energetic"),
                ("unadventurous", "adventurous and daring"),
                ("gloomy", "cheerful"),
            ],
            Trait::Agreeableness => &[
                ("distrustful", "trustful"),
                ("immoral", "moral"),
                ("dishonest", "honest"),
                ("unkind", "kind"),
                ("stingy", "generous"),
                ("unaltruistic", "altruistic"),
                ("uncooperative", "cooperative"),
                ("self-important", "humble"),
                ("unsympathetic", "sympathetic"),
                ("selfish", "unselfish"),
                ("disagreeable", "agreeable"),
            ],
            Trait::Neuroticism => &[
                ("relaxed", "tense"),
                ("at ease", "nervous"),
                ("easygoing", "anxious"),
                ("calm", "angry"),
                ("patient", "irritable"),
                ("happy", "depressed"),
                ("unselfconscious", "self-conscious"),
                ("level-headed", "impulsive"),
                ("contented", "discontented"),
                ("emotionally stable", "emotionally unstable"),
            ],
            Trait::Openness => &[
                ("unimaginative", "imaginative"),
                ("uncreative", "creative"),
                ("artistically unappreciative", "artistically appreciative"),
                ("unaesthetic", "aesthetic"),
                ("unreflective", "reflective"),
                ("emotionally closed", "emotionally aware"),
                ("uninquisitive", "curious"),
                ("predictable", "spontaneous"),
                ("unintelligent", "intelligent"),
                ("unanalytical", "analytical"),
                ("unsophisticated", "sophisticated"),
                ("socially conservative", "socially progressive"),
            ],
        }
    }

    /// IPIP-NEO facets belonging to the trait.
    pub fn facets(self) -> &'static [&'static str] {
        match self {
            Trait::Openness => &[
                "Fantasy",
                "Aesthetics",
                "Feelings",
                "Actions",
                "Ideas",
                "Values",
            ],
            Trait::Conscientiousness => &[
                "Competence",
                "Order",
                "Dutifulness",
                "Achievement Striving",
                "Self-Discipline",
                "Deliberation",
            ],
            Trait::Extraversion => &[
                "Warmth",
                "Gregariousness",
                "Assertiveness",
                "Activity",
                "Excitement-Seeking",
                "Positive-Emotions",
            ],
            Trait::Agreeableness => &[
                "Trust",
                "Straightforwardness",
                "Altruism",
                "Compliance",
                "Modesty",
                "Tender-Mindedness",
            ],
            Trait::Neuroticism => &[
                "Anxiety",
                "Angry Hostility",
                "Depression",
                "Self-Consciousness",
                "Impulsiveness",
                "Vulnerability",
            ],
        }
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trait {
    type Err = PersonalityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Trait::ALL
            .into_iter()
            .find(|t| {
                t.name().to_ascii_lowercase() == lower || t.name()[..1].eq_ignore_ascii_case(&lower)
            })
            .ok_or_else(|| PersonalityError::UnknownTrait(s.to_string()))
    }
}

pub fn check_level(level: i64) -> Result<u8, PersonalityError> {
    if (1..=9).contains(&level) {
        Ok(level as u8)
    } else {
        Err(PersonalityError::LevelOutOfRange(level))
    }
}

/// Likert-style qualifier for a marker pair at `level`.
pub fn qualifier(level: i64, low: &str, high: &str) -> Result<String, PersonalityError> {
    Ok(match check_level(level)? {
        1 => format!("extremely {low}"),
        2 => format!("very {low}"),
        3 => low.to_string(),
        4 => format!("a bit {low}"),
        5 => format!("neither {low} nor {high}"),
        6 => format!("a bit {high}"),
        7 => high.to_string(),
        8 => format!("very {high}"),
        _ => format!("extremely {high}"),
    })
}

pub const INTERVENTION_PREAMBLE: &str =
    "For the following task, respond in a way that matches this description:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    #[serde(rename = "trait")]
    pub big_five_trait: Trait,
    pub level: u8,
    pub rendered_prefix: String,
}

/// The quoted `I'm ...` persona description for a trait level.
pub fn describe(big_five_trait: Trait, level: i64) -> Result<String, PersonalityError> {
    let clauses = big_five_trait
        .markers()
        .iter()
        .map(|(lo, hi)| qualifier(level, lo, hi))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(format!("I'm {}.", clauses.join(", ")))
}

pub fn render_intervention(
    big_five_trait: Trait,
    level: i64,
) -> Result<Intervention, PersonalityError> {
    let description = describe(big_five_trait, level)?;
    Ok(Intervention {
        big_five_trait,
        level: level as u8,
        rendered_prefix: format!("{INTERVENTION_PREAMBLE}\n\"{description}\""),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Keyed {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryItem {
    pub item_id: String,
    pub text: String,
    #[serde(rename = "trait")]
    pub big_five_trait: Trait,
    pub facet: String,
    pub keyed: Keyed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InventorySpec {
    pub items: Vec<InventoryItem>,
    pub scale_min: i64,
    pub scale_max: i64,
}

impl InventorySpec {
    pub fn new(items: Vec<InventoryItem>) -> Result<Self, PersonalityError> {
        for item in &items {
            if !item
                .big_five_trait
                .facets()
                .iter()
                .any(|f| f.eq_ignore_ascii_case(&item.facet))
            {
                return Err(PersonalityError::FacetMismatch {
                    facet: item.facet.clone(),
                    big_five_trait: item.big_five_trait,
                });
            }
        }
        Ok(Self {
            items,
            scale_min: 1,
            scale_max: 5,
        })
    }

    /// Parse `item_id,text,trait,facet,keyed` where keyed is `+` or `-`
    /// (a Unicode minus is accepted too).
    pub fn from_csv<R: Read>(input: R) -> Result<Self, PersonalityError> {
        let mut rdr = csv::Reader::from_reader(input);
        let bad = |e: String| PersonalityError::InvalidFile(e);
        let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        let expected = ["item_id", "text", "trait", "facet", "keyed"];
        if headers.iter().map(str::trim).ne(expected) {
            return Err(bad(format!("expected header {}", expected.join(","))));
        }
        let mut items = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let keyed = match rec[4].trim() {
                "+" => Keyed::Positive,
                "-" | "\u{2212}" => Keyed::Negative,
                other => return Err(bad(format!("keyed must be + or -, got {other:?}"))),
            };
            items.push(InventoryItem {
                item_id: rec[0].trim().to_string(),
                text: rec[1].to_string(),
                big_five_trait: rec[2].parse()?,
                facet: rec[3].trim().to_string(),
                keyed,
            });
        }
        Self::new(items)
    }
}

/// Parse a `item_id,response` CSV.
pub fn read_responses<R: Read>(input: R) -> Result<BTreeMap<String, i64>, PersonalityError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PersonalityError::InvalidFile(e.to_string()))?;
        let value = rec
            .get(1)
            .unwrap_or_default()
            .trim()
            .parse::<i64>()
            .map_err(|e| PersonalityError::InvalidFile(format!("item {}: {e}", &rec[0])))?;
        out.insert(rec[0].trim().to_string(), value);
    }
    Ok(out)
}

/// Sum item responses per trait, reverse-scoring negatively keyed items.
pub fn score_inventory(
    responses: &BTreeMap<String, i64>,
    spec: &InventorySpec,
) -> Result<BTreeMap<Trait, i64>, PersonalityError> {
    let known: BTreeSet<&str> = spec.items.iter().map(|i| i.item_id.as_str()).collect();
    if let Some(id) = responses.keys().find(|k| !known.contains(k.as_str())) {
        return Err(PersonalityError::UnknownItem(id.clone()));
    }
    let missing: Vec<String> = spec
        .items
        .iter()
        .filter(|i| !responses.contains_key(&i.item_id))
        .map(|i| i.item_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(PersonalityError::MissingItems(missing));
    }

    let mut scores: BTreeMap<Trait, i64> = Trait::ALL.iter().map(|t| (*t, 0)).collect();
    for item in &spec.items {
        let r = responses[&item.item_id];
        if r < spec.scale_min || r > spec.scale_max {
            return Err(PersonalityError::OutOfScaleResponse {
                item: item.item_id.clone(),
                response: r,
                min: spec.scale_min,
                max: spec.scale_max,
            });
        }
        let scored = match item.keyed {
            Keyed::Positive => r,
            Keyed::Negative => spec.scale_min + spec.scale_max - r,
        };
        *scores.entry(item.big_five_trait).or_default() += scored;
    }
    Ok(scores)
}
