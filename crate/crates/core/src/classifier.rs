//! Binary linear SVM with an unregularized bias.
//!
//! Training solves the dual of
//!
//! ```text
//! min_{w,b} 1/2 |w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))
//! ```
//!
//! by sequential minimal optimization with second-order working-set
//! selection over a precomputed Gram matrix. The bias is then the exact
//! minimizer of the primal for the final `w`. Spoof is the positive class.
//!
//! The problem is solved in a canonical label orientation (first label
//! positive), so flipping every label negates the model exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{DescriptorKind, FeatureVector};
use crate::rng;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// `10^-5 ..= 10^5`, one value per decade.
pub fn default_c_grid() -> Vec<f64> {
    (-5..=5).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data needs both classes with at least {min} samples each (live {live}, spoof {spoof})")]
    TooFewPerClass { live: usize, spoof: usize, min: usize },
    #[error("labels must be +1 (spoof) or -1 (live), found {0} at row {1}")]
    BadLabel(i8, usize),
    #[error("row {row} has a non-finite value")]
    NonFinite { row: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("model expects {expected:?} features, got {actual:?}")]
    KindMismatch {
        expected: DescriptorKind,
        actual: DescriptorKind,
    },
    #[error("C must be positive and finite, got {0}")]
    BadC(f64),
    #[error("empty C grid")]
    EmptyGrid,
    #[error("cannot stratify: {0}")]
    Stratification(String),
    #[error("fusion needs at least one score")]
    EmptyFusion,
    #[error("non-finite score in fusion input")]
    NonFiniteScore,
    #[error("model file {path}: {detail}")]
    BadModelFile { path: String, detail: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    /// Maximal KKT violation accepted as optimal.
    pub kkt_tolerance: f64,
    /// Stop when the dual objective improves by less than this fraction over
    /// one pass of `n` updates.
    pub relative_tolerance: f64,
    /// Update budget is `max_passes * n`.
    pub max_passes: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-6,
            relative_tolerance: 1e-8,
            max_passes: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub format_version: u32,
    pub feature_kind: DescriptorKind,
    pub dim: usize,
    #[serde(rename = "C")]
    pub c: f64,
    pub seed: u64,
    pub bias: f64,
    pub weights: Vec<f64>,
    /// Mean and standard deviation of the decision scores on the training
    /// rows, used to standardize scores before fusion.
    pub train_score_mean: f64,
    pub train_score_std: f64,
    pub converged: bool,
    pub objective_value: f64,
    pub iterations: u64,
}

impl LinearSvmModel {
    pub fn score_values(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        if x.len() != self.dim {
            return Err(ClassifierError::DimMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// `(score - train mean) / train std`.
    pub fn standardize(&self, score: f64) -> f64 {
        (score - self.train_score_mean) / self.train_score_std
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        fs::write(path, self.to_json()).map_err(|source| ClassifierError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let name = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ClassifierError::Io {
            path: name.clone(),
            source,
        })?;
        let m: Self = serde_json::from_str(&text).map_err(|e| ClassifierError::BadModelFile {
            path: name.clone(),
            detail: e.to_string(),
        })?;
        if m.format_version != MODEL_FORMAT_VERSION || m.weights.len() != m.dim {
            return Err(ClassifierError::BadModelFile {
                path: name,
                detail: format!(
                    "format version {} with {} weights for dim {}",
                    m.format_version,
                    m.weights.len(),
                    m.dim
                ),
            });
        }
        Ok(m)
    }
}

/// `w . x + b`; positive means spoof.
pub fn decision_score(m: &LinearSvmModel, x: &FeatureVector) -> Result<f64, ClassifierError> {
    if x.kind != m.feature_kind {
        return Err(ClassifierError::KindMismatch {
            expected: m.feature_kind,
            actual: x.kind,
        });
    }
    m.score_values(&x.values)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(rows: &[Vec<f64>], labels: &[i8], min_per_class: usize) -> Result<usize, ClassifierError> {
    if rows.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let dim = rows.first().map_or(0, Vec::len);
    let (mut live, mut spoof) = (0, 0);
    for (i, (r, &y)) in rows.iter().zip(labels).enumerate() {
        match y {
            1 => spoof += 1,
            -1 => live += 1,
            other => return Err(ClassifierError::BadLabel(other, i)),
        }
        if r.len() != dim {
            return Err(ClassifierError::DimMismatch {
                expected: dim,
                actual: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite { row: i });
        }
    }
    if live < min_per_class || spoof < min_per_class {
        return Err(ClassifierError::TooFewPerClass {
            live,
            spoof,
            min: min_per_class,
        });
    }
    Ok(dim)
}

/// Symmetric Gram matrix of `rows`, row-major.
pub(crate) fn gram(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let idx: Vec<usize> = (0..n).collect();
    let upper = crate::par_map(&idx, |&i| (i..n).map(|j| dot(&rows[i], &rows[j])).collect::<Vec<_>>());
    let mut k = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

struct DualSolution {
    alpha: Vec<f64>,
    iterations: u64,
    converged: bool,
}

/// SMO on `min 1/2 a'Qa - e'a, y'a = 0, 0 <= a <= C` with `Q_ij = y_i y_j K_ij`.
/// `k` is indexed through `sel` so folds can share one Gram matrix.
fn smo(k: &[f64], stride: usize, sel: &[usize], y: &[f64], c: f64, p: &SolverParams) -> DualSolution {
    let n = sel.len();
    let kk = |a: usize, b: usize| k[sel[a] * stride + sel[b]];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|t| kk(t, t)).collect();
    let budget = (p.max_passes.max(1) as u64) * n as u64;
    let mut iterations = 0u64;
    let mut last_obj = 0.0;
    let objective = |alpha: &[f64], grad: &[f64]| -> f64 {
        0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
    };
    loop {
        // first index: maximal violation in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        // second index: largest second-order decrease in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if !low {
                continue;
            }
            let v = y[t] * grad[t];
            gmax2 = gmax2.max(v);
            if i == usize::MAX {
                continue;
            }
            let diff = gmax + v;
            if diff > 0.0 {
                let quad = (diag[i] + diag[t] - 2.0 * kk(i, t)).max(1e-12);
                let dec = -diff * diff / quad;
                if dec <= best {
                    best = dec;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < p.kkt_tolerance || i == usize::MAX || j == usize::MAX {
            return DualSolution {
                alpha,
                iterations,
                converged: true,
            };
        }
        if iterations >= budget {
            return DualSolution {
                alpha,
                iterations,
                converged: false,
            };
        }
        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * kk(i, j);
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] + 2.0 * qij).max(1e-12);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            let (mut ni, mut nj) = (ai + delta, aj + delta);
            if diff > 0.0 {
                if nj < 0.0 {
                    nj = 0.0;
                    ni = diff;
                }
            } else if ni < 0.0 {
                ni = 0.0;
                nj = -diff;
            }
            if diff > 0.0 {
                if ni > c {
                    ni = c;
                    nj = c - diff;
                }
            } else if nj > c {
                nj = c;
                ni = c + diff;
            }
            alpha[i] = ni;
            alpha[j] = nj;
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * qij).max(1e-12);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            let (mut ni, mut nj) = (ai - delta, aj + delta);
            if sum > c {
                if ni > c {
                    ni = c;
                    nj = sum - c;
                }
            } else if nj < 0.0 {
                nj = 0.0;
                ni = sum;
            }
            if sum > c {
                if nj > c {
                    nj = c;
                    ni = sum - c;
                }
            } else if ni < 0.0 {
                ni = 0.0;
                nj = sum;
            }
            alpha[i] = ni;
            alpha[j] = nj;
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kk(t, i) * di + y[j] * kk(t, j) * dj);
        }
        iterations += 1;
        if iterations % n as u64 == 0 {
            let obj = objective(&alpha, &grad);
            let decrease = last_obj - obj;
            if iterations > n as u64 && decrease.abs() <= p.relative_tolerance * obj.abs().max(1e-300) {
                return DualSolution {
                    alpha,
                    iterations,
                    converged: true,
                };
            }
            last_obj = obj;
        }
    }
}

/// Exact minimizer over `b` of `sum_i max(0, 1 - y_i (s_i + b))` for fixed
/// scores `s`. The objective is piecewise linear with one kink per sample at
/// `y_i - s_i`, each raising the slope by one; the slope is zero between the
/// `n_pos`-th and `(n_pos + 1)`-th kink, and the midpoint is returned.
pub fn optimal_bias(scores: &[f64], y: &[f64]) -> f64 {
    let mut kinks: Vec<f64> = scores.iter().zip(y).map(|(s, y)| y - s).collect();
    kinks.sort_by(f64::total_cmp);
    let npos = y.iter().filter(|&&v| v > 0.0).count();
    0.5 * (kinks[npos - 1] + kinks[npos])
}

/// Primal objective `1/2 |w|^2 + C * sum hinge`.
pub fn primal_objective(w: &[f64], b: f64, rows: &[Vec<f64>], labels: &[i8], c: f64) -> f64 {
    let hinge: f64 = rows
        .iter()
        .zip(labels)
        .map(|(x, &y)| (1.0 - y as f64 * (dot(w, x) + b)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * hinge
}

fn train_indexed(
    k: &[f64],
    stride: usize,
    rows: &[Vec<f64>],
    labels: &[i8],
    sel: &[usize],
    c: f64,
    seed: u64,
    kind: DescriptorKind,
    params: &SolverParams,
) -> LinearSvmModel {
    let dim = rows[sel[0]].len();
    let sign = labels[sel[0]] as f64;
    let y: Vec<f64> = sel.iter().map(|&i| labels[i] as f64 * sign).collect();
    let sol = smo(k, stride, sel, &y, c, params);
    let mut w = vec![0.0; dim];
    for (t, &i) in sel.iter().enumerate() {
        let coef = sol.alpha[t] * y[t];
        if coef != 0.0 {
            for (wv, xv) in w.iter_mut().zip(&rows[i]) {
                *wv += coef * xv;
            }
        }
    }
    let scores: Vec<f64> = sel.iter().map(|&i| dot(&w, &rows[i])).collect();
    let b = optimal_bias(&scores, &y);
    // back to the caller's orientation
    for v in &mut w {
        *v *= sign;
    }
    let b = b * sign;
    let train_scores: Vec<f64> = scores.iter().map(|s| s * sign + b).collect();
    let n = train_scores.len() as f64;
    let mean = train_scores.iter().sum::<f64>() / n;
    let var = train_scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let sub_rows: Vec<Vec<f64>> = sel.iter().map(|&i| rows[i].clone()).collect();
    let sub_labels: Vec<i8> = sel.iter().map(|&i| labels[i]).collect();
    LinearSvmModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_kind: kind,
        dim,
        c,
        seed,
        bias: b,
        objective_value: primal_objective(&w, b, &sub_rows, &sub_labels, c),
        weights: w,
        train_score_mean: mean,
        train_score_std: std,
        converged: sol.converged,
        iterations: sol.iterations,
    }
}

/// Trains on `rows` with labels `+1` (spoof) / `-1` (live). A model that hit
/// the update budget is returned with `converged == false`.
pub fn train_svm(
    rows: &[Vec<f64>],
    labels: &[i8],
    c: f64,
    seed: u64,
    kind: DescriptorKind,
    params: &SolverParams,
) -> Result<LinearSvmModel, ClassifierError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(ClassifierError::BadC(c));
    }
    check_inputs(rows, labels, 2)?;
    let k = gram(rows);
    let sel: Vec<usize> = (0..rows.len()).collect();
    Ok(train_indexed(&k, rows.len(), rows, labels, &sel, c, seed, kind, params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSelection {
    pub best_c: f64,
    pub folds: usize,
    /// Per grid value, the validation accuracy of each fold.
    pub fold_accuracies: Vec<(f64, Vec<f64>)>,
}

impl CSelection {
    pub fn mean_accuracy(&self, c: f64) -> Option<f64> {
        self.fold_accuracies
            .iter()
            .find(|(v, _)| *v == c)
            .map(|(_, a)| a.iter().sum::<f64>() / a.len() as f64)
    }
}

/// Stratified k-fold choice of `C` maximizing mean validation accuracy, ties
/// toward smaller `C`. Fold membership and training order come from a keyed
/// hash of each sample id, so the result does not depend on input order.
/// If a class has fewer samples than `folds`, the fold count drops to the
/// size of the smaller class.
pub fn select_c(
    rows: &[Vec<f64>],
    labels: &[i8],
    ids: &[String],
    grid: &[f64],
    folds: usize,
    seed: u64,
    kind: DescriptorKind,
    params: &SolverParams,
) -> Result<CSelection, ClassifierError> {
    if grid.is_empty() {
        return Err(ClassifierError::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(ClassifierError::BadC(bad));
    }
    if ids.len() != rows.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: rows.len(),
            labels: ids.len(),
        });
    }
    check_inputs(rows, labels, 1)?;
    if grid.len() == 1 {
        return Ok(CSelection {
            best_c: grid[0],
            folds: 0,
            fold_accuracies: vec![(grid[0], Vec::new())],
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        (rng::keyed_hash(seed, "cv", &ids[a]), &ids[a]).cmp(&(rng::keyed_hash(seed, "cv", &ids[b]), &ids[b]))
    });
    let smallest = [1i8, -1]
        .iter()
        .map(|&cls| labels.iter().filter(|&&l| l == cls).count())
        .min()
        .unwrap_or(0);
    let k = folds.min(smallest);
    if k < 2 {
        return Err(ClassifierError::Stratification(format!(
            "{folds}-fold split needs at least 2 samples of each class, smallest class has {smallest}"
        )));
    }
    let mut fold_of = vec![0usize; rows.len()];
    for cls in [1i8, -1] {
        for (rank, &i) in order.iter().filter(|&&i| labels[i] == cls).enumerate() {
            fold_of[i] = rank % k;
        }
    }
    let ordered_rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let ordered_labels: Vec<i8> = order.iter().map(|&i| labels[i]).collect();
    let ordered_fold: Vec<usize> = order.iter().map(|&i| fold_of[i]).collect();
    let gm = gram(&ordered_rows);
    let n = ordered_rows.len();
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    let accs = crate::par_map(&jobs, |&(g, f)| {
        let train: Vec<usize> = (0..n).filter(|&i| ordered_fold[i] != f).collect();
        let model = train_indexed(&gm, n, &ordered_rows, &ordered_labels, &train, grid[g], seed, kind, params);
        let val: Vec<usize> = (0..n).filter(|&i| ordered_fold[i] == f).collect();
        let correct = val
            .iter()
            .filter(|&&i| {
                let s = dot(&model.weights, &ordered_rows[i]) + model.bias;
                (s > 0.0) == (ordered_labels[i] > 0)
            })
            .count();
        correct as f64 / val.len() as f64
    });
    let fold_accuracies: Vec<(f64, Vec<f64>)> = grid
        .iter()
        .enumerate()
        .map(|(g, &c)| (c, accs[g * k..(g + 1) * k].to_vec()))
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for (c, a) in &fold_accuracies {
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        best = match best {
            Some((bc, bm)) if mean < bm || (mean == bm && bc < *c) => Some((bc, bm)),
            _ => Some((*c, mean)),
        };
    }
    Ok(CSelection {
        best_c: best.expect("non-empty grid").0,
        folds: k,
        fold_accuracies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Mean,
    Max,
}

/// Mean or maximum of already standardized scores.
pub fn fuse_scores(scores: &[f64], method: FusionMethod) -> Result<f64, ClassifierError> {
    if scores.is_empty() {
        return Err(ClassifierError::EmptyFusion);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ClassifierError::NonFiniteScore);
    }
    Ok(match method {
        FusionMethod::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
        FusionMethod::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
