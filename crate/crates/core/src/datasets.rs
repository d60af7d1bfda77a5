//! Embedded prospect datasets.
//!
//! Dataset A holds the 56 two-outcome prospects of Tversky & Kahneman (1992)
//! with the median certainty equivalents of their 25 participants. Dataset B
//! holds 56 prospects sampled from choices13k, including mixed gambles, which
//! are needed to identify loss aversion.

use crate::cpt::{Prospect, ProspectKind};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown dataset {0:?} (expected A or B)")]
    UnknownDataset(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetName {
    A,
    B,
}

impl FromStr for DatasetName {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" | "D_A" => Ok(Self::A),
            "B" | "b" | "D_B" => Ok(Self::B),
            other => Err(DatasetError::UnknownDataset(other.to_string())),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "A",
            Self::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub prospect: Prospect,
    /// Expected value as printed in the source table.
    pub printed_ev: f64,
    /// Median human certainty equivalent; dataset A only.
    pub human_ce: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: DatasetName,
    pub rows: Vec<DatasetRow>,
}

// (outcome 1, outcome 2, p, E[x], CE)
const TABLE_A: [(f64, f64, f64, f64, f64); 56] = [
    (0.0, 50.0, 0.10, 5.0, 9.0),
    (0.0, 50.0, 0.50, 25.0, 21.0),
    (0.0, 50.0, 0.90, 45.0, 37.0),
    (0.0, -50.0, 0.10, -5.0, -8.0),
    (0.0, -50.0, 0.50, -25.0, -21.0),
    (0.0, -50.0, 0.90, -45.0, -39.0),
    (0.0, 100.0, 0.05, 5.0, 14.0),
    (0.0, 100.0, 0.25, 25.0, 25.0),
    (0.0, 100.0, 0.50, 50.0, 36.0),
    (0.0, 100.0, 0.75, 75.0, 52.0),
    (0.0, 100.0, 0.95, 95.0, 78.0),
    (0.0, -100.0, 0.05, -5.0, -8.0),
    (0.0, -100.0, 0.25, -25.0, -23.5),
    (0.0, -100.0, 0.50, -50.0, -42.0),
    (0.0, -100.0, 0.75, -75.0, -63.0),
    (0.0, -100.0, 0.95, -95.0, -84.0),
    (0.0, 200.0, 0.01, 2.0, 10.0),
    (0.0, 200.0, 0.10, 20.0, 20.0),
    (0.0, 200.0, 0.50, 100.0, 76.0),
    (0.0, 200.0, 0.90, 180.0, 131.0),
    (0.0, 200.0, 0.99, 198.0, 188.0),
    (0.0, -200.0, 0.01, -2.0, -3.0),
    (0.0, -200.0, 0.10, -20.0, -23.0),
    (0.0, -200.0, 0.50, -100.0, -89.0),
    (0.0, -200.0, 0.90, -180.0, -155.0),
    (0.0, -200.0, 0.99, -198.0, -190.0),
    (0.0, 400.0, 0.01, 4.0, 12.0),
    (0.0, 400.0, 0.99, 396.0, 377.0),
    (0.0, -400.0, 0.01, -4.0, -14.0),
    (0.0, -400.0, 0.99, -396.0, -380.0),
    (50.0, 100.0, 0.10, 55.0, 59.0),
    (50.0, 100.0, 0.50, 75.0, 71.0),
    (50.0, 100.0, 0.90, 95.0, 83.0),
    (-50.0, -100.0, 0.10, -55.0, -59.0),
    (-50.0, -100.0, 0.50, -75.0, -71.0),
    (-50.0, -100.0, 0.90, -95.0, -85.0),
    (50.0, 150.0, 0.05, 55.0, 64.0),
    (50.0, 150.0, 0.25, 75.0, 72.5),
    (50.0, 150.0, 0.50, 100.0, 86.0),
    (50.0, 150.0, 0.75, 125.0, 102.0),
    (50.0, 150.0, 0.95, 145.0, 128.0),
    (-50.0, -150.0, 0.05, -55.0, -60.0),
    (-50.0, -150.0, 0.25, -75.0, -71.0),
    (-50.0, -150.0, 0.50, -100.0, -92.0),
    (-50.0, -150.0, 0.75, -125.0, -113.0),
    (-50.0, -150.0, 0.95, -145.0, -132.0),
    (100.0, 200.0, 0.05, 105.0, 118.0),
    (100.0, 200.0, 0.25, 125.0, 130.0),
    (100.0, 200.0, 0.50, 150.0, 141.0),
    (100.0, 200.0, 0.75, 175.0, 162.0),
    (100.0, 200.0, 0.95, 195.0, 178.0),
    (-100.0, -200.0, 0.05, -105.0, -112.0),
    (-100.0, -200.0, 0.25, -125.0, -121.0),
    (-100.0, -200.0, 0.50, -150.0, -142.0),
    (-100.0, -200.0, 0.75, -175.0, -158.0),
    (-100.0, -200.0, 0.95, -195.0, -179.0),
];

// (outcome 1, outcome 2, p, E[x])
const TABLE_B: [(f64, f64, f64, f64); 56] = [
    (29.0, 37.0, 0.05, 29.4),
    (16.0, 47.0, 0.50, 31.5),
    (-34.0, 107.0, 0.40, 22.4),
    (24.0, 34.0, 0.10, 25.0),
    (27.0, 72.0, 0.01, 27.45),
    (16.0, 48.0, 0.10, 19.2),
    (-14.0, 37.0, 0.10, -8.9),
    (-19.0, 0.0, 0.95, -0.95),
    (-16.0, 16.0, 0.80, 9.6),
    (2.0, 90.0, 0.01, 2.88),
    (-14.0, -3.0, 0.05, -13.45),
    (-28.0, 38.0, 0.60, 11.6),
    (3.0, 26.0, 0.25, 8.75),
    (-2.0, 3.0, 0.25, -0.75),
    (-46.0, 70.0, 0.60, 23.6),
    (18.0, 20.0, 0.10, 18.2),
    (-23.0, 24.0, 0.99, 23.53),
    (-7.0, 10.0, 0.80, 6.6),
    (-5.0, -5.0, 0.01, -5.0),
    (-31.0, 100.0, 0.40, 21.4),
    (-21.0, 36.0, 0.25, -6.75),
    (1.0, 86.0, 0.10, 9.5),
    (0.0, 17.0, 0.80, 13.6),
    (5.0, 32.0, 0.75, 25.25),
    (-12.0, 58.0, 0.60, 30.0),
    (-9.0, 15.0, 0.50, 3.0),
    (-7.0, 35.0, 0.50, 14.0),
    (-28.0, 35.0, 0.40, -2.8),
    (-16.0, 3.0, 0.90, 1.1),
    (-2.0, 90.0, 0.25, 21.0),
    (-13.0, 15.0, 0.01, -12.72),
    (-10.0, 53.0, 0.20, 2.6),
    (-10.0, 29.0, 0.99, 28.61),
    (-37.0, -8.0, 0.90, -10.9),
    (22.0, 78.0, 0.01, 22.56),
    (18.0, 24.0, 0.10, 18.6),
    (-23.0, 82.0, 0.40, 19.0),
    (-29.0, 5.0, 0.50, -12.0),
    (-9.0, 25.0, 0.25, -0.5),
    (-14.0, 45.0, 0.20, -2.2),
    (0.0, 68.0, 0.40, 27.2),
    (9.0, 11.0, 0.10, 9.2),
    (11.0, 14.0, 0.90, 13.7),
    (-15.0, -4.0, 0.75, -6.75),
    (-14.0, 53.0, 0.25, 2.75),
    (-9.0, 9.0, 0.90, 7.2),
    (22.0, 30.0, 0.10, 22.8),
    (-16.0, 11.0, 0.20, -10.6),
    (-24.0, 28.0, 0.40, -3.2),
    (-3.0, 21.0, 0.40, 6.6),
    (-44.0, 2.0, 0.75, -9.5),
    (-17.0, 12.0, 0.80, 6.2),
    (21.0, 26.0, 0.05, 21.25),
    (9.0, 35.0, 0.50, 22.0),
    (-9.0, 70.0, 0.50, 30.5),
    (-16.0, 77.0, 0.01, -15.07),
];

pub fn load_dataset(name: DatasetName) -> Dataset {
    let rows = match name {
        DatasetName::A => TABLE_A
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi, p, ev, ce))| DatasetRow {
                prospect: Prospect::new(format!("A{:02}", i + 1), lo, hi, p),
                printed_ev: ev,
                human_ce: Some(ce),
            })
            .collect(),
        DatasetName::B => TABLE_B
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi, p, ev))| DatasetRow {
                prospect: Prospect::new(format!("B{:02}", i + 1), lo, hi, p),
                printed_ev: ev,
                human_ce: None,
            })
            .collect(),
    };
    Dataset { name, rows }
}

/// Convenience wrapper accepting a textual dataset name.
pub fn load_dataset_by_name(name: &str) -> Result<Dataset, DatasetError> {
    Ok(load_dataset(name.parse()?))
}

impl Dataset {
    pub fn prospects(&self) -> Vec<Prospect> {
        self.rows.iter().map(|r| r.prospect.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetRow> {
        self.rows.iter().find(|r| r.prospect.id == id)
    }

    /// Observations pairing each prospect with its human median CE.
    pub fn human_observations(&self) -> Vec<(Prospect, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.human_ce.map(|ce| (r.prospect.clone(), ce)))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        let with_human = self.rows.iter().any(|r| r.human_ce.is_some());
        if with_human {
            w.write_record(["id", "outcome_low", "outcome_high", "p_high", "human_ce"])?;
        } else {
            w.write_record(["id", "outcome_low", "outcome_high", "p_high"])?;
        }
        for r in &self.rows {
            let p = &r.prospect;
            let mut rec = vec![
                p.id.clone(),
                p.outcome_low.to_string(),
                p.outcome_high.to_string(),
                p.p_high.to_string(),
            ];
            if with_human {
                rec.push(r.human_ce.map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Read prospects back from the export format. The printed expected value
    /// is not part of the export and is recomputed.
    pub fn read_csv<R: Read>(name: DatasetName, input: R) -> Result<Self, DatasetError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64, DatasetError> {
                rec.get(k)
                    .ok_or_else(|| DatasetError::InvalidRow {
                        row: i + 1,
                        reason: format!("missing column {k}"),
                    })?
                    .parse::<f64>()
                    .map_err(|e| DatasetError::InvalidRow {
                        row: i + 1,
                        reason: e.to_string(),
                    })
            };
            let prospect = Prospect::new(rec.get(0).unwrap_or_default(), num(1)?, num(2)?, num(3)?);
            if !prospect.is_valid() {
                return Err(DatasetError::InvalidRow {
                    row: i + 1,
                    reason: "outcomes must be finite and p_high in [0, 1]".into(),
                });
            }
            let human_ce = match rec.get(4) {
                Some(s) if !s.is_empty() => Some(num(4)?),
                _ => None,
            };
            rows.push(DatasetRow {
                printed_ev: prospect.expected_value(),
                prospect,
                human_ce,
            });
        }
        Ok(Self { name, rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub dataset: DatasetName,
    pub count: usize,
    pub mixed_count: usize,
    pub gains_only_count: usize,
    pub losses_only_count: usize,
    pub p_high_bins: Vec<HistogramBin>,
    pub expected_value_bins: Vec<HistogramBin>,
}

fn histogram(values: &[f64], lower: f64, width: f64, bins: usize) -> Vec<HistogramBin> {
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: lower + width * i as f64,
            upper: lower + width * (i + 1) as f64,
            count: 0,
        })
        .collect();
    for &v in values {
        let idx = (((v - lower) / width).floor().max(0.0) as usize).min(bins - 1);
        out[idx].count += 1;
    }
    out
}

/// Counts and plot-ready histograms: ten equal-width bins over [0, 1] for
/// the probability of the second outcome, and bins of width 50 spanning the
/// expected values.
pub fn summarize(dataset: &Dataset) -> DatasetSummary {
    let kinds: Vec<_> = dataset.rows.iter().map(|r| r.prospect.kind()).collect();
    let ps: Vec<f64> = dataset.rows.iter().map(|r| r.prospect.p_high).collect();
    let evs: Vec<f64> = dataset
        .rows
        .iter()
        .map(|r| r.prospect.expected_value())
        .collect();

    let width = 50.0;
    let lo = (evs.iter().cloned().fold(f64::INFINITY, f64::min) / width).floor() * width;
    let hi =
        (evs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / width).floor() * width + width;
    let ev_bins = if evs.is_empty() {
        Vec::new()
    } else {
        histogram(&evs, lo, width, ((hi - lo) / width).round() as usize)
    };

    DatasetSummary {
        dataset: dataset.name,
        count: dataset.len(),
        mixed_count: kinds.iter().filter(|k| **k == ProspectKind::Mixed).count(),
        gains_only_count: kinds
            .iter()
            .filter(|k| **k == ProspectKind::GainsOnly)
            .count(),
        losses_only_count: kinds
            .iter()
            .filter(|k| **k == ProspectKind::LossesOnly)
            .count(),
        p_high_bins: histogram(&ps, 0.0, 0.1, 10),
        expected_value_bins: ev_bins,
    }
}

impl DatasetSummary {
    /// One row per histogram bin: `dataset,variable,lower,upper,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dataset", "variable", "lower", "upper", "count"])?;
        for (var, bins) in [
            ("p_high", &self.p_high_bins),
            ("expected_value", &self.expected_value_bins),
        ] {
            for b in bins.iter() {
                w.write_record([
                    self.dataset.to_string(),
                    var.to_string(),
                    b.lower.to_string(),
                    b.upper.to_string(),
                    b.count.to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_rows() {
        let a = load_dataset(DatasetName::A);
        let r = &a.rows[0];
        assert_eq!(
            (
                r.prospect.outcome_low,
                r.prospect.outcome_high,
                r.prospect.p_high
            ),
            (0.0, 50.0, 0.10)
        );
        assert_eq!(r.human_ce, Some(9.0));

        let b = load_dataset(DatasetName::B);
        let r = &b.rows[0];
        assert_eq!(
            (
                r.prospect.outcome_low,
                r.prospect.outcome_high,
                r.prospect.p_high
            ),
            (29.0, 37.0, 0.05)
        );
        assert!((r.prospect.expected_value() - 29.40).abs() < 1e-9);
    }

    #[test]
    fn printed_expectations_match() {
        for name in [DatasetName::A, DatasetName::B] {
            for r in load_dataset(name).rows {
                assert!(
                    (r.prospect.expected_value() - r.printed_ev).abs() < 1e-9,
                    "{} {:?}",
                    r.prospect.id,
                    r.prospect
                );
            }
        }
    }

    #[test]
    fn counts() {
        let a = summarize(&load_dataset(DatasetName::A));
        assert_eq!(a.count, 56);
        assert_eq!(a.mixed_count, 0);
        assert_eq!(a.gains_only_count + a.losses_only_count, 56);
        assert_eq!(a.p_high_bins.iter().map(|b| b.count).sum::<usize>(), 56);
        assert_eq!(
            a.expected_value_bins.iter().map(|b| b.count).sum::<usize>(),
            56
        );

        // brute-force count over the sign pairs of the source table
        let b = summarize(&load_dataset(DatasetName::B));
        assert_eq!(b.count, 56);
        assert_eq!(b.mixed_count, 32);
    }

    #[test]
    fn degenerate_row_kept() {
        let b = load_dataset(DatasetName::B);
        assert!(b.rows.iter().any(|r| r.prospect.outcome_low == -5.0
            && r.prospect.outcome_high == -5.0
            && r.prospect.p_high == 0.01));
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(
            load_dataset_by_name("C"),
            Err(DatasetError::UnknownDataset(_))
        ));
        assert_eq!(load_dataset_by_name("b").unwrap().name, DatasetName::B);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        for name in [DatasetName::A, DatasetName::B] {
            let ds = load_dataset(name);
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            let back = Dataset::read_csv(name, buf.as_slice()).unwrap();
            assert_eq!(back.len(), ds.len());
            for (x, y) in ds.rows.iter().zip(&back.rows) {
                assert_eq!(x.prospect, y.prospect);
                assert_eq!(x.human_ce.map(f64::to_bits), y.human_ce.map(f64::to_bits));
            }
        }
    }

    #[test]
    fn header_shape() {
        let mut buf = Vec::new();
        load_dataset(DatasetName::B).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,outcome_low,outcome_high,p_high\nB01,29,37,0.05\n"));
        let mut buf = Vec::new();
        load_dataset(DatasetName::A).write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("id,outcome_low,outcome_high,p_high,human_ce\nA01,0,50,0.1,9\n"));
    }
}
