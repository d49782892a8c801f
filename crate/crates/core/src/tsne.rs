//! Exact t-SNE.
//!
//! Input affinities are Gaussian conditionals calibrated per point to a
//! target perplexity, symmetrized as `P = (P_{j|i} + P_{i|j}) / 2n`. Output
//! affinities use a Student-t kernel with one degree of freedom. The
//! embedding is optimized by gradient descent with momentum and per-
//! coordinate gains, with early exaggeration of `P`.

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::rng::stream;

/// Perplexity is considered calibrated within this relative error.
pub const PERPLEXITY_TOLERANCE: f64 = 1e-3;
pub const MAX_SEARCH_STEPS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum TsneError {
    #[error("all distances are zero")]
    DegenerateDistances,
    #[error("perplexity {perplexity} infeasible for {n} points")]
    InfeasiblePerplexity { perplexity: f64, n: usize },
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite value at iteration {0}")]
    NonFiniteValue(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches and exaggeration stops.
    pub switch_iteration: usize,
    pub early_exaggeration: f64,
    pub min_gain: f64,
    pub init_sigma: f64,
    /// Larger inputs are subsampled (seeded) to this many points.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            switch_iteration: 250,
            early_exaggeration: 12.0,
            min_gain: 0.01,
            init_sigma: 1e-4,
            max_points: 5000,
            seed: 0,
        }
    }
}

/// Calibrated bandwidth of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSearch {
    pub sigma: f64,
    /// Precision `1 / (2 sigma^2)`.
    pub beta: f64,
    pub perplexity: f64,
    pub steps: usize,
    pub converged: bool,
    /// Conditional distribution `P_{j|i}` over the given distances.
    pub row: Vec<f64>,
}

/// Conditional row and its perplexity for precision `beta`.
fn conditional_row(sq: &[f64], beta: f64, d_min: f64) -> (Vec<f64>, f64) {
    let mut row: Vec<f64> = sq.iter().map(|&d| (-(d - d_min) * beta).exp()).collect();
    let z: f64 = row.iter().sum();
    let mut weighted = 0.0;
    for (p, &d) in row.iter_mut().zip(sq) {
        *p /= z;
        weighted += *p * (d - d_min);
    }
    // Entropy in nats: ln Z + beta * E[d - d_min].
    let h = z.ln() + beta * weighted;
    (row, h.exp())
}

/// Binary search on the Gaussian precision so that the conditional
/// distribution over `sq_distances` has the target perplexity.
///
/// Searches to near machine precision within [`MAX_SEARCH_STEPS`]; the
/// result is flagged `converged` when within [`PERPLEXITY_TOLERANCE`].
pub fn perplexity_search(sq_distances: &[f64], target: f64) -> Result<SigmaSearch, TsneError> {
    let n = sq_distances.len() + 1;
    if !(target > 1.0) || target >= n as f64 {
        return Err(TsneError::InfeasiblePerplexity { perplexity: target, n });
    }
    let d_max = sq_distances.iter().copied().fold(0.0, f64::max);
    if d_max <= 0.0 {
        return Err(TsneError::DegenerateDistances);
    }
    let d_min = sq_distances.iter().copied().fold(f64::INFINITY, f64::min);

    let mut beta = 1.0 / sq_distances.iter().sum::<f64>() * sq_distances.len() as f64;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut best: Option<(f64, f64, Vec<f64>, f64)> = None;
    let mut steps = 0;
    while steps < MAX_SEARCH_STEPS {
        steps += 1;
        let (row, perp) = conditional_row(sq_distances, beta, d_min);
        let err = (perp - target).abs() / target;
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, beta, row, perp));
        }
        if err < 1e-12 {
            break;
        }
        if perp > target {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    let (err, beta, row, perplexity) = best.expect("at least one step");
    Ok(SigmaSearch {
        sigma: (1.0 / (2.0 * beta)).sqrt(),
        beta,
        perplexity,
        steps,
        converged: err <= PERPLEXITY_TOLERANCE,
        row,
    })
}

/// Squared Euclidean distances, `n x n` row-major.
pub fn squared_distances(emb: &EmbeddingMatrix) -> Vec<f64> {
    let n = emb.len();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = emb.row(i);
            (0..n).map(move |j| {
                a.iter()
                    .zip(emb.row(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
        })
        .collect()
}

/// Symmetric joint input affinities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointProbabilities {
    pub n: usize,
    pub values: Vec<f64>,
    /// Conditional rows `P_{j|i}` (diagonal zero), kept for inspection.
    pub conditional: Vec<f64>,
    pub unconverged_rows: usize,
}

impl JointProbabilities {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

pub fn joint_probabilities(emb: &EmbeddingMatrix, perplexity: f64) -> Result<JointProbabilities, TsneError> {
    let n = emb.len();
    let d = squared_distances(emb);
    let rows: Result<Vec<SigmaSearch>, TsneError> = (0..n)
        .into_par_iter()
        .map(|i| {
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[i * n + j]).collect();
            perplexity_search(&others, perplexity)
        })
        .collect();
    let rows = rows?;
    let mut conditional = vec![0.0; n * n];
    let mut unconverged_rows = 0;
    for (i, s) in rows.iter().enumerate() {
        if !s.converged {
            unconverged_rows += 1;
        }
        let mut k = 0;
        for j in 0..n {
            if j != i {
                conditional[i * n + j] = s.row[k];
                k += 1;
            }
        }
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) * scale;
        }
    }
    Ok(JointProbabilities {
        n,
        values,
        conditional,
        unconverged_rows,
    })
}

/// KL(P || Q) and its gradient with respect to `y` (`n x 2` row-major).
pub fn kl_and_gradient(p: &JointProbabilities, y: &[f64]) -> (f64, Vec<f64>) {
    kl_and_gradient_scaled(p, y, 1.0)
}

/// Same as [`kl_and_gradient`] with `P` multiplied by `exaggeration`.
pub fn kl_and_gradient_scaled(p: &JointProbabilities, y: &[f64], exaggeration: f64) -> (f64, Vec<f64>) {
    let n = p.n;
    let kernel = |i: usize, j: usize| {
        let dx = y[2 * i] - y[2 * j];
        let dy = y[2 * i + 1] - y[2 * j + 1];
        1.0 / (1.0 + dx * dx + dy * dy)
    };
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| j != i).map(|j| kernel(i, j)).sum())
        .collect();
    let z: f64 = row_sums.iter().sum();

    let per_row: Vec<(f64, [f64; 2])> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut kl, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = kernel(i, j);
                let q = w / z;
                let pij = exaggeration * p.get(i, j);
                if pij > 0.0 {
                    kl += pij * (pij / q).ln();
                }
                let f = 4.0 * (pij - q) * w;
                gx += f * (y[2 * i] - y[2 * j]);
                gy += f * (y[2 * i + 1] - y[2 * j + 1]);
            }
            (kl, [gx, gy])
        })
        .collect();
    let mut kl = 0.0;
    let mut grad = Vec::with_capacity(2 * n);
    for (k, g) in per_row {
        kl += k;
        grad.extend_from_slice(&g);
    }
    (kl, grad)
}

/// Seeded Gaussian start, `n x 2` row-major.
pub fn initial_embedding(n: usize, seed: u64, sigma: f64) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    (0..2 * n).map(|_| normal.sample(&mut rng)).collect()
}

/// Gain update: grow when gradient and previous step disagree in sign.
pub fn update_gain(gain: f64, grad: f64, step: f64, min_gain: f64) -> f64 {
    let g = if (grad > 0.0) != (step > 0.0) { gain + 0.2 } else { gain * 0.8 };
    g.max(min_gain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub ids: Vec<String>,
    /// `[x, y]` per id.
    pub coords: Vec<[f64; 2]>,
    pub final_kl: f64,
    pub init_sigma: f64,
    pub subsampled: bool,
    pub unconverged_rows: usize,
}

pub fn tsne(emb: &EmbeddingMatrix, cfg: &TsneConfig) -> Result<Projection, TsneError> {
    if cfg.iterations < 1 {
        return Err(TsneError::InvalidConfig("iterations must be >= 1".into()));
    }
    let (emb, subsampled) = if emb.len() > cfg.max_points {
        let mut rng = stream(cfg.seed, u64::MAX);
        let mut keep = index::sample(&mut rng, emb.len(), cfg.max_points).into_vec();
        keep.sort_unstable();
        let ids: Vec<String> = keep.iter().map(|&i| emb.ids()[i].clone()).collect();
        (emb.select(&ids), true)
    } else {
        (emb.clone(), false)
    };
    let n = emb.len();
    if n < 4 {
        return Err(TsneError::TooFewPoints(n));
    }
    if cfg.perplexity >= n as f64 {
        return Err(TsneError::InfeasiblePerplexity {
            perplexity: cfg.perplexity,
            n,
        });
    }
    let p = joint_probabilities(&emb, cfg.perplexity)?;
    if p.unconverged_rows > 0 {
        log::warn!("{} of {n} perplexity searches did not converge", p.unconverged_rows);
    }

    let mut y = initial_embedding(n, cfg.seed, cfg.init_sigma);
    let mut step = vec![0.0; 2 * n];
    let mut gains = vec![1.0; 2 * n];
    for it in 0..cfg.iterations {
        let early = it < cfg.switch_iteration;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early { cfg.initial_momentum } else { cfg.final_momentum };
        let (_, grad) = kl_and_gradient_scaled(&p, &y, exaggeration);
        for k in 0..2 * n {
            gains[k] = update_gain(gains[k], grad[k], step[k], cfg.min_gain);
            step[k] = momentum * step[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += step[k];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(TsneError::NonFiniteValue(it));
        }
    }
    let (final_kl, _) = kl_and_gradient(&p, &y);
    Ok(Projection {
        ids: emb.ids().to_vec(),
        coords: y.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        final_kl,
        init_sigma: cfg.init_sigma,
        subsampled,
        unconverged_rows: p.unconverged_rows,
    })
}

/// Mean silhouette coefficient of a labelled 2-D point set.
pub fn silhouette_score(coords: &[[f64; 2]], labels: &[usize]) -> f64 {
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for (i, &ci) in labels.iter().enumerate() {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (j, &cj) in labels.iter().enumerate() {
            if i != j {
                sums[cj] += dist(coords[i], coords[j]);
                counts[cj] += 1;
            }
        }
        if counts[ci] == 0 {
            continue;
        }
        let a = sums[ci] / counts[ci] as f64;
        let b = (0..k)
            .filter(|&c| c != ci && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    total / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_distances_are_exact() {
        let s = perplexity_search(&[4.0; 30], 30.0).unwrap();
        assert!(s.converged);
        assert!((s.perplexity - 30.0).abs() < 1e-9);
        assert_eq!(s.steps, 1);
        for p in &s.row {
            assert!((p - 1.0 / 30.0).abs() < 1e-15);
        }
    }

    #[test]
    fn infeasible_and_degenerate() {
        assert!(matches!(
            perplexity_search(&[1.0, 2.0, 3.0], 4.0),
            Err(TsneError::InfeasiblePerplexity { .. })
        ));
        assert!(matches!(
            perplexity_search(&[1.0, 2.0, 3.0], 1.0),
            Err(TsneError::InfeasiblePerplexity { .. })
        ));
        assert_eq!(perplexity_search(&[0.0; 5], 2.0), Err(TsneError::DegenerateDistances));
    }

    #[test]
    fn gain_rule() {
        assert_eq!(update_gain(1.0, 0.3, 0.0, 0.01), 1.2);
        assert_eq!(update_gain(1.0, -0.3, 0.0, 0.01), 0.8);
        assert_eq!(update_gain(0.011, 0.3, 1.0, 0.01), 0.01);
    }

    #[test]
    fn small_inputs_rejected() {
        let m = EmbeddingMatrix::from_rows(
            (0..3).map(|i| i.to_string()).collect(),
            &[vec![0.0], vec![1.0], vec![2.0]],
        )
        .unwrap();
        assert_eq!(tsne(&m, &TsneConfig::default()), Err(TsneError::TooFewPoints(3)));
        let m = EmbeddingMatrix::from_rows(
            (0..5).map(|i| i.to_string()).collect(),
            &[vec![0.0], vec![1.0], vec![2.0], vec![4.0], vec![8.0]],
        )
        .unwrap();
        assert!(matches!(
            tsne(&m, &TsneConfig::default()),
            Err(TsneError::InfeasiblePerplexity { .. })
        ));
    }

    #[test]
    fn silhouette_of_separated_clusters() {
        let coords = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let s = silhouette_score(&coords, &[0, 0, 1, 1]);
        assert!(s > 0.9);
        let s = silhouette_score(&coords, &[0, 1, 0, 1]);
        assert!(s < 0.0);
    }
}
