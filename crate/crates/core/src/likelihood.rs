//! Estimators of the target label distribution: the maximum likelihood
//! estimator computed by EM over the simplex (from density evaluations or
//! from a source-trained predictor), an exhaustive lattice oracle, and the
//! confusion-matrix (BBSE) and plug-in baselines.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{dot, validate_eval_matrix, EvalMatrix};
use crate::parallel::{map_indexed, Execution};
use crate::simplex::{simplex_project, SimplexVector};

/// Weights below this are set to zero on output.
pub const WEIGHT_FLOOR: f64 = 1e-12;
/// Tolerance on predictor rows being probability vectors.
pub const PREDICTOR_ROW_TOLERANCE: f64 = 1e-6;
/// Largest label count accepted by the lattice oracle.
pub const GRID_ORACLE_MAX_K: usize = 4;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmInit {
    #[default]
    Uniform,
    Custom(SimplexVector),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Absolute log-likelihood improvement below which EM stops, once the
    /// step has also fallen below `1e-11` in every coordinate.
    pub tolerance: f64,
    pub init: EmInit,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iterations: 10_000,
            tolerance: 1e-10,
            init: EmInit::Uniform,
        }
    }
}

impl EmConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if let EmInit::Custom(init) = &self.init {
            if init.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: init.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationFlags {
    /// The objective is constant over the search region.
    pub flat: bool,
    /// Some weight fell below [`WEIGHT_FLOOR`] and was set to zero.
    pub floored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub beta_hat: SimplexVector,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub certificate: Option<f64>,
    pub flags: EstimationFlags,
}

/// Maximum likelihood weights for the evaluation matrix `L`.
pub fn estimate_mle(l: &EvalMatrix, cfg: &EmConfig) -> Result<EstimationResult> {
    let rows: Vec<&[f64]> = l.rows().collect();
    em(&rows, None, cfg)
}

/// EM on rows with nonnegative multiplicities, maximizing `Σ_i w_i log(Σ_j β_j L_ij)`.
///
/// Useful when many samples share the same evaluations, and for population
/// objectives where the weights are probabilities.
pub fn estimate_mle_weighted(
    rows: &[Vec<f64>],
    weights: &[f64],
    cfg: &EmConfig,
) -> Result<EstimationResult> {
    if rows.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid(
            "row weights must be nonnegative with a positive sum",
        ));
    }
    // Zero-weight rows may vanish; the others go through the usual validation.
    let kept: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(r, &w)| (r.clone(), w))
        .collect();
    let l = validate_eval_matrix(&kept.iter().map(|(r, _)| r.clone()).collect::<Vec<_>>())?;
    let w: Vec<f64> = kept.iter().map(|(_, w)| *w).collect();
    let refs: Vec<&[f64]> = l.rows().collect();
    em(&refs, Some(&w), cfg)
}

fn log_likelihood(rows: &[&[f64]], weights: Option<&[f64]>, beta: &[f64]) -> f64 {
    match weights {
        None => rows.iter().map(|r| dot(r, beta).ln()).sum(),
        Some(w) => rows
            .iter()
            .zip(w)
            .map(|(r, wi)| wi * dot(r, beta).ln())
            .sum(),
    }
}

/// Log-likelihood stopping also waits until no coordinate moves by this much,
/// so slow boundary convergence cannot stop far from the fixed point.
const STEP_TOLERANCE: f64 = 1e-11;

fn max_step(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// When EM stops.
#[derive(Clone, Copy)]
pub(crate) enum Stop {
    /// Log-likelihood improvement below the tolerance.
    LogLikelihood(f64),
    /// Largest coordinate change below the tolerance.
    Parameter(f64),
}

fn em(rows: &[&[f64]], weights: Option<&[f64]>, cfg: &EmConfig) -> Result<EstimationResult> {
    let k = rows.first().map_or(0, |r| r.len());
    cfg.validate(k)?;
    em_until(rows, weights, cfg, Stop::LogLikelihood(cfg.tolerance))
}

pub(crate) fn em_until(
    rows: &[&[f64]],
    weights: Option<&[f64]>,
    cfg: &EmConfig,
    stop: Stop,
) -> Result<EstimationResult> {
    let k = rows.first().map_or(0, |r| r.len());
    let total_weight = weights.map_or(rows.len() as f64, |w| w.iter().sum());
    let mut beta = match &cfg.init {
        EmInit::Uniform => vec![1.0 / k as f64; k],
        EmInit::Custom(init) => init.as_slice().to_vec(),
    };

    let mut ll = log_likelihood(rows, weights, &beta);
    if !ll.is_finite() {
        return Err(Error::invalid(
            "initial weights give zero likelihood to some sample",
        ));
    }
    let mut iterations = 0;
    let mut converged = false;
    let mut next = vec![0.0; k];
    while iterations < cfg.max_iterations {
        iterations += 1;
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in rows.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            let den = dot(row, &beta);
            let scale = w / den;
            for ((nj, lj), bj) in next.iter_mut().zip(row.iter()).zip(&beta) {
                *nj += scale * bj * lj;
            }
        }
        for v in next.iter_mut() {
            *v /= total_weight;
        }
        let norm: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= norm);
        let ll_next = log_likelihood(rows, weights, &next);
        if ll_next < ll - 1e-10 * ll.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "EM log-likelihood decreased from {ll} to {ll_next} at iteration {iterations}"
            )));
        }
        let done = match stop {
            Stop::LogLikelihood(tol) => {
                ll_next - ll < tol && max_step(&next, &beta) < STEP_TOLERANCE
            }
            Stop::Parameter(tol) => max_step(&next, &beta) < tol,
        };
        std::mem::swap(&mut beta, &mut next);
        ll = ll_next;
        if done {
            converged = true;
            break;
        }
    }

    let mut flags = EstimationFlags::default();
    if beta.iter().any(|&b| b > 0.0 && b < WEIGHT_FLOOR) {
        let floored: Vec<f64> = beta
            .iter()
            .map(|&b| if b < WEIGHT_FLOOR { 0.0 } else { b })
            .collect();
        let sum: f64 = floored.iter().sum();
        let floored: Vec<f64> = floored.into_iter().map(|b| b / sum).collect();
        let ll_floored = log_likelihood(rows, weights, &floored);
        if ll_floored.is_finite() {
            beta = floored;
            ll = ll_floored;
            flags.floored = true;
        }
    }
    Ok(EstimationResult {
        beta_hat: SimplexVector::normalize(beta)?,
        log_likelihood: ll,
        iterations,
        converged,
        certificate: None,
        flags,
    })
}

/// Builds `L[i][j] = F[i][j] / α_j` from predictor outputs.
pub fn predictor_eval_matrix(f: &[Vec<f64>], alpha: &SimplexVector) -> Result<EvalMatrix> {
    let k = alpha.len();
    if let Some(j) = alpha.iter().position(|&a| a <= 0.0) {
        return Err(Error::invalid(format!(
            "source prior must be strictly positive (entry {j} is zero)"
        )));
    }
    let mut rows = Vec::with_capacity(f.len());
    for (i, row) in f.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: row.len(),
            });
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|v| !v.is_finite() || *v < 0.0)
            || (sum - 1.0).abs() > PREDICTOR_ROW_TOLERANCE
        {
            return Err(Error::invalid(format!(
                "predictor row {i} is not a probability vector"
            )));
        }
        rows.push(
            row.iter()
                .zip(alpha.iter())
                .map(|(fj, aj)| fj / aj)
                .collect(),
        );
    }
    validate_eval_matrix(&rows)
}

/// Maximum likelihood label shift from predictor outputs and the source prior.
pub fn estimate_mle_predictor(
    f: &[Vec<f64>],
    alpha: &SimplexVector,
    cfg: &EmConfig,
) -> Result<EstimationResult> {
    estimate_mle(&predictor_eval_matrix(f, alpha)?, cfg)
}

/// Exhaustive search of the log-likelihood over the simplex lattice with the
/// given step. Ties go to the lexicographically smallest lattice point.
pub fn estimate_grid_oracle(l: &EvalMatrix, resolution: f64) -> Result<EstimationResult> {
    estimate_grid_oracle_with(l, resolution, Execution::default())
}

pub fn estimate_grid_oracle_with(
    l: &EvalMatrix,
    resolution: f64,
    exec: Execution,
) -> Result<EstimationResult> {
    let k = l.k();
    if k > GRID_ORACLE_MAX_K {
        return Err(Error::UnsupportedSize(format!(
            "lattice oracle supports k <= {GRID_ORACLE_MAX_K}, got {k}"
        )));
    }
    let steps = lattice_steps(resolution)?;

    // Identical rows contribute identical terms; evaluate each once.
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut unique: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for row in l.rows() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let idx = *index.entry(key).or_insert_with(|| {
            unique.push(row.to_vec());
            counts.push(0.0);
            unique.len() - 1
        });
        counts[idx] += 1.0;
    }
    let grid = LatticeSearch {
        unique: &unique,
        counts: &counts,
        steps,
        k,
    };

    let chunks = map_indexed(exec, if k == 1 { 1 } else { steps + 1 }, |first| {
        grid.search_from(first)
    });
    let mut best: Option<Extremes> = None;
    for chunk in chunks {
        best = Some(match best {
            None => chunk,
            Some(acc) => acc.merge(chunk),
        });
    }
    let best = best.expect("lattice is never empty");
    let flat = best.max - best.min <= 1e-9 * best.max.abs().max(1.0);
    let counts_at = if flat {
        first_lattice_point(k, steps)
    } else {
        best.argmax
    };
    let beta: Vec<f64> = counts_at.iter().map(|&c| c as f64 / steps as f64).collect();
    let rows: Vec<&[f64]> = l.rows().collect();
    let ll = log_likelihood(&rows, None, &beta);
    Ok(EstimationResult {
        beta_hat: SimplexVector::normalize(beta)?,
        log_likelihood: ll,
        iterations: best.evaluated,
        converged: true,
        certificate: None,
        flags: EstimationFlags {
            flat,
            floored: false,
        },
    })
}

fn lattice_steps(resolution: f64) -> Result<usize> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::invalid("lattice resolution must lie in (0, 1]"));
    }
    let steps = (1.0 / resolution).round();
    if (steps * resolution - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "lattice resolution {resolution} does not divide 1"
        )));
    }
    Ok(steps as usize)
}

fn first_lattice_point(k: usize, steps: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    c[k - 1] = steps;
    c
}

struct Extremes {
    max: f64,
    min: f64,
    argmax: Vec<usize>,
    evaluated: usize,
}

impl Extremes {
    /// `self` precedes `other` in lexicographic order.
    fn merge(self, other: Extremes) -> Extremes {
        let (max, argmax) = if other.max > self.max {
            (other.max, other.argmax)
        } else {
            (self.max, self.argmax)
        };
        Extremes {
            max,
            min: self.min.min(other.min),
            argmax,
            evaluated: self.evaluated + other.evaluated,
        }
    }
}

struct LatticeSearch<'a> {
    unique: &'a [Vec<f64>],
    counts: &'a [f64],
    steps: usize,
    k: usize,
}

impl LatticeSearch<'_> {
    /// Scans every lattice point whose first count is `first`, in lexicographic order.
    fn search_from(&self, first: usize) -> Extremes {
        let mut out = Extremes {
            max: f64::NEG_INFINITY,
            min: f64::INFINITY,
            argmax: Vec::new(),
            evaluated: 0,
        };
        let mut counts = vec![0usize; self.k];
        match self.k {
            1 => {
                counts[0] = self.steps;
                let value = self
                    .unique
                    .iter()
                    .zip(self.counts)
                    .map(|(r, c)| c * r[0].ln())
                    .sum();
                out.record(value, &counts);
            }
            2 => {
                let line = vec![0.0; self.unique.len()];
                counts[0] = first;
                self.scan_line(0, self.steps, first..=first, &mut counts, &line, &mut out);
            }
            _ => {
                let scale = 1.0 / self.steps as f64;
                let partial: Vec<f64> = self
                    .unique
                    .iter()
                    .map(|row| first as f64 * scale * row[0])
                    .collect();
                counts[0] = first;
                self.recurse(1, self.steps - first, &mut counts, &partial, &mut out);
            }
        }
        out
    }

    fn recurse(
        &self,
        pos: usize,
        remaining: usize,
        counts: &mut Vec<usize>,
        partial: &[f64],
        out: &mut Extremes,
    ) {
        if pos + 2 == self.k {
            self.scan_line(pos, remaining, 0..=remaining, counts, partial, out);
            return;
        }
        let scale = 1.0 / self.steps as f64;
        let mut next = vec![0.0; partial.len()];
        for c in 0..=remaining {
            counts[pos] = c;
            for ((nx, p), row) in next.iter_mut().zip(partial).zip(self.unique) {
                *nx = p + c as f64 * scale * row[pos];
            }
            self.recurse(pos + 1, remaining - c, counts, &next, out);
        }
    }

    /// The last two coordinates take `(c, remaining − c)` for `c` in `range`.
    fn scan_line(
        &self,
        pos: usize,
        remaining: usize,
        range: std::ops::RangeInclusive<usize>,
        counts: &mut [usize],
        partial: &[f64],
        out: &mut Extremes,
    ) {
        let scale = 1.0 / self.steps as f64;
        for c in range {
            let (a, b) = (c as f64 * scale, (remaining - c) as f64 * scale);
            let value: f64 = partial
                .iter()
                .zip(self.unique)
                .zip(self.counts)
                .map(|((p, row), n)| n * (p + a * row[pos] + b * row[pos + 1]).ln())
                .sum();
            if value > out.max || out.argmax.is_empty() {
                counts[pos] = c;
                counts[pos + 1] = remaining - c;
                out.record(value, counts);
            } else {
                out.min = out.min.min(value);
                out.evaluated += 1;
            }
        }
    }
}

impl Extremes {
    fn record(&mut self, value: f64, counts: &[usize]) {
        self.evaluated += 1;
        self.min = self.min.min(value);
        if value > self.max || self.argmax.is_empty() {
            self.max = value;
            self.argmax.clear();
            self.argmax.extend_from_slice(counts);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BbseEstimate {
    pub beta: SimplexVector,
    /// Solution of `M β = μ̂` before projection onto the simplex.
    pub unprojected: Vec<f64>,
    pub condition_number: f64,
}

/// Black box shift estimation: solve `M β = μ̂` with `μ̂` the mean predictor
/// output and project the solution onto the simplex.
pub fn estimate_bbse(f: &[Vec<f64>], confusion: &[Vec<f64>]) -> Result<BbseEstimate> {
    let k = confusion.len();
    if k == 0 || confusion.iter().any(|r| r.len() != k) {
        return Err(Error::invalid(
            "confusion matrix must be square and nonempty",
        ));
    }
    if f.is_empty() {
        return Err(Error::invalid("no predictor outputs"));
    }
    let mean = estimate_plugin(f)?;
    if mean.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: mean.len(),
        });
    }
    let m = DMatrix::from_fn(k, k, |i, j| confusion[i][j]);
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let det = m.clone().lu().determinant();
    if scale == 0.0 || det.abs() < 1e-12 * scale.powi(k as i32) {
        return Err(Error::SingularMatrix(format!(
            "confusion matrix determinant {det:e} is below 1e-12 of scale"
        )));
    }
    let sv = m.clone().singular_values();
    let condition_number = sv.max() / sv.min();
    let rhs = DVector::from_column_slice(mean.as_slice());
    let solution = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularMatrix("LU solve failed".into()))?;
    let unprojected: Vec<f64> = solution.iter().copied().collect();
    Ok(BbseEstimate {
        beta: simplex_project(&unprojected)?,
        unprojected,
        condition_number,
    })
}

/// Mean predictor output, the naive plug-in estimate of the target prior.
pub fn estimate_plugin(f: &[Vec<f64>]) -> Result<SimplexVector> {
    let k = f.first().map_or(0, Vec::len);
    if k == 0 {
        return Err(Error::invalid("no predictor outputs"));
    }
    let mut mean = vec![0.0; k];
    for (i, row) in f.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: row.len(),
            });
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|v| !v.is_finite() || *v < 0.0)
            || (sum - 1.0).abs() > PREDICTOR_ROW_TOLERANCE
        {
            return Err(Error::invalid(format!(
                "predictor row {i} is not a probability vector"
            )));
        }
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    SimplexVector::normalize(mean.into_iter().map(|v| v / f.len() as f64).collect())
}
