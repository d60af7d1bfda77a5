//! Fixtures shared by the focused tests and the acceptance gate.
#![allow(dead_code)]

use std::path::PathBuf;

/// Reply strings and the amount each must parse to.
pub const CORPUS: &[(&str, f64)] = &[
    ("reason: fair\nanswer: 25", 25.0),
    ("reason: fair\nanswer: $25", 25.0),
    ("answer: $25.50", 25.5),
    ("answer: 1,000", 1000.0),
    ("answer: $1,234,567.89", 1234567.89),
    ("answer: -40", -40.0),
    ("answer: -$40", -40.0),
    ("answer: $-40", -40.0),
    ("answer: ($40)", -40.0),
    ("answer: (1,250.75)", -1250.75),
    ("answer: \u{2212}12", -12.0),
    ("answer: \u{2013}7.5", -7.5),
    ("answer: 30 dollars", 30.0),
    ("answer: 30 USD", 30.0),
    ("answer: USD 30", 30.0),
    ("answer: US$ 18", 18.0),
    ("answer: £45", 45.0),
    ("answer: €12.5", 12.5),
    ("answer: .75", 0.75),
    ("answer: 0", 0.0),
    ("answer: -0", 0.0),
    ("Answer: 15", 15.0),
    ("ANSWER : 16", 16.0),
    ("answer:17", 17.0),
    ("  answer:   $  18  ", 18.0),
    (
        "reason: The gamble has\nan expected value of 50.\nanswer: 42",
        42.0,
    ),
    ("reason: I compare 100 and 0.\n\nanswer: 35\n", 35.0),
    (
        "reason: first guess\nanswer: 10\nreason: on reflection\nanswer: 12",
        12.0,
    ),
    ("**reason:** risk averse\n**answer:** $22", 22.0),
    (
        "reason: losses hurt\nanswer: I would pay -$60 to avoid it",
        -60.0,
    ),
    ("reason: x\r\nanswer: 9\r\n", 9.0),
    ("answer: approximately 48.25 dollars.", 48.25),
    ("answer: 2,500 dollars", 2500.0),
];

/// (golden file stem, outcome 1, outcome 2, probability of outcome 2)
pub const PROMPT_CASES: [(&str, f64, f64, f64); 6] = [
    ("01_gains_low_p", 0.0, 50.0, 0.1),
    ("02_losses", -50.0, 0.0, 0.5),
    ("03_mixed_negative_ev", -14.0, 37.0, 0.1),
    ("04_mixed_positive_ev", -5.0, 61.0, 0.5),
    ("05_one_percent", 0.0, 400.0, 0.01),
    ("06_fractional_percent", -150.0, -50.0, 0.333),
];

pub fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
