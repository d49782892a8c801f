//! Classifier metrics, performance drops and the divergence/drop
//! correlation matrix.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metadata::LesionClass;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("both labels must be present")]
    SingleClass,
    #[error("zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub score: f64,
    pub label: u8,
}

/// Scored binary predictions (`label` 1 = positive).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub entries: Vec<Prediction>,
}

impl PredictionSet {
    pub fn from_pairs(scores: &[f64], labels: &[u8]) -> Self {
        PredictionSet {
            entries: scores
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (&score, &label))| Prediction {
                    id: i.to_string(),
                    score,
                    label,
                })
                .collect(),
        }
    }

    pub fn counts(&self) -> (usize, usize) {
        let pos = self.entries.iter().filter(|e| e.label == 1).count();
        (pos, self.entries.len() - pos)
    }

    /// Reads an `id,score,label` CSV.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, MetricsError> {
        let mut reader = csv::Reader::from_reader(bytes);
        let headers = reader
            .headers()
            .map_err(|e| MetricsError::Csv { line: 1, reason: e.to_string() })?
            .clone();
        let expected = ["id", "score", "label"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(MetricsError::Csv {
                line: 1,
                reason: format!("header must be id,score,label, got {:?}", headers.iter().collect::<Vec<_>>()),
            });
        }
        let mut entries = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| MetricsError::Csv {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |what: &str| MetricsError::Csv { line, reason: what.to_string() };
            let score: f64 = row[1].trim().parse().map_err(|_| bad("unparseable score"))?;
            if !score.is_finite() {
                return Err(bad("non-finite score"));
            }
            let label = match row[2].trim() {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad("label must be 0 or 1")),
            };
            entries.push(Prediction {
                id: row[0].trim().to_string(),
                score,
                label,
            });
        }
        Ok(PredictionSet { entries })
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "score", "label"]).expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.id.clone(), format!("{}", e.score), e.label.to_string()])
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Mann-Whitney AUROC; tied positive/negative pairs count one half.
///
/// Computed from exact integer pair counts, so the result equals
/// `(wins + ties / 2) / (P * N)` up to one final rounding.
pub fn auroc(preds: &PredictionSet) -> Result<f64, MetricsError> {
    let (p, n) = preds.counts();
    if p == 0 || n == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut sorted: Vec<(f64, u8)> = preds.entries.iter().map(|e| (e.score, e.label)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice_u = sum over positives of 2 * (negatives below) + (negatives tied)
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut pos_g, mut neg_g) = (0u128, 0u128);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 == 1 {
                pos_g += 1;
            } else {
                neg_g += 1;
            }
            j += 1;
        }
        twice_u += pos_g * (2 * neg_below + neg_g);
        neg_below += neg_g;
        i = j;
    }
    Ok(twice_u as f64 / (2 * p as u128 * n as u128) as f64)
}

/// Mean of sensitivity and specificity with `score >= threshold` as positive.
pub fn balanced_accuracy(preds: &PredictionSet, threshold: f64) -> Result<f64, MetricsError> {
    let (p, n) = preds.counts();
    if p == 0 || n == 0 {
        return Err(MetricsError::SingleClass);
    }
    let tp = preds.entries.iter().filter(|e| e.label == 1 && e.score >= threshold).count();
    let tn = preds.entries.iter().filter(|e| e.label == 0 && e.score < threshold).count();
    Ok((tp as f64 / p as f64 + tn as f64 / n as f64) / 2.0)
}

pub fn performance_drop(reference: f64, shifted: f64) -> f64 {
    reference - shifted
}

/// Sample Pearson correlation coefficient.
///
/// `r = sum(dx * dy) / sqrt(sum(dx^2) * sum(dy^2))`; the `n - 1`
/// normalizations of covariance and variances cancel.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricsError::TooFew { need: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-dataset quantities for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub dataset: String,
    pub class: LesionClass,
    pub jsd_mean: Option<f64>,
    pub cosine_mean: Option<f64>,
    pub auroc: Option<f64>,
    pub auroc_drop: Option<f64>,
    pub balanced_accuracy_drop: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTable {
    pub rows: Vec<PerformanceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Jsd,
    Cosine,
    AurocDrop,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Jsd, Quantity::Cosine, Quantity::AurocDrop];

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Jsd => "jsd",
            Quantity::Cosine => "cosine",
            Quantity::AurocDrop => "auroc_drop",
        }
    }

    fn of(&self, row: &PerformanceRow) -> Option<f64> {
        match self {
            Quantity::Jsd => row.jsd_mean,
            Quantity::Cosine => row.cosine_mean,
            Quantity::AurocDrop => row.auroc_drop,
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 3x3 Pearson matrix over JSD, cosine and AUROC drop (in that order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub class: LesionClass,
    pub labels: [Quantity; 3],
    pub values: [[f64; 3]; 3],
    pub datasets: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: Quantity, b: Quantity) -> f64 {
        let ia = self.labels.iter().position(|&l| l == a).expect("known quantity");
        let ib = self.labels.iter().position(|&l| l == b).expect("known quantity");
        self.values[ia][ib]
    }
}

/// Correlates the rows of `class` that have all three quantities.
pub fn correlation_matrix(table: &PerformanceTable, class: LesionClass) -> Result<CorrelationMatrix, MetricsError> {
    let rows: Vec<&PerformanceRow> = table
        .rows
        .iter()
        .filter(|r| r.class == class && Quantity::ALL.iter().all(|q| q.of(r).is_some()))
        .collect();
    if rows.len() < 2 {
        return Err(MetricsError::TooFew { need: 2, got: rows.len() });
    }
    let series: Vec<Vec<f64>> = Quantity::ALL
        .iter()
        .map(|q| rows.iter().map(|r| q.of(r).expect("filtered")).collect())
        .collect();
    let mut values = [[1.0; 3]; 3];
    for i in 0..3 {
        for j in (i + 1)..3 {
            let r = pearson(&series[i], &series[j])?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        class,
        labels: Quantity::ALL,
        values,
        datasets: rows.iter().map(|r| r.dataset.clone()).collect(),
    })
}
