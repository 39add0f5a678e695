//! ρ-estimation machinery for fixed-component mixtures: the bounded test
//! statistic `T`, the criterion `Υ(x, q) = sup_{q'} T(x, q, q')` and the
//! certificate `Υ < 11.36` which validates a candidate as a ρ-estimator.
//!
//! The certificate can only validate. A large `Υ` is inconclusive, never a
//! rejection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{dot, EvalMatrix};
use crate::simplex::{project_raw, SimplexVector};

/// Default threshold below which `Υ` certifies a ρ-estimator.
pub const CERTIFICATE_THRESHOLD: f64 = 11.36;

/// `ψ(x) = (x − 1)/(x + 1)` on `[0, +∞]`, with `ψ(+∞) = 1`.
pub fn psi(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::invalid(format!(
            "psi is defined on [0, +inf], got {x}"
        )));
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok((x - 1.0) / (x + 1.0))
}

/// One summand `ψ(√(num/den))` with `0/0 = 1` and `a/0 = +∞`.
#[inline]
fn term(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        smooth_term(num / den)
    }
}

/// `ψ(√r) = 1 − 2/(1 + √r)`, concave and nondecreasing in `r`.
#[inline]
fn smooth_term(r: f64) -> f64 {
    1.0 - 2.0 / (1.0 + r.sqrt())
}

/// Derivative of [`smooth_term`], finite once `r` is floored away from zero.
#[inline]
fn smooth_term_slope(r: f64) -> f64 {
    let s = r.max(RATIO_FLOOR).sqrt();
    1.0 / (s * (1.0 + s) * (1.0 + s))
}

const RATIO_FLOOR: f64 = 1e-16;

fn check_dims(l: &EvalMatrix, beta: &SimplexVector) -> Result<()> {
    if beta.len() != l.k() {
        return Err(Error::DimensionMismatch {
            expected: l.k(),
            found: beta.len(),
        });
    }
    Ok(())
}

/// `T(L, β, β') = Σ_i ψ(√(Σ_j β'_j L_ij / Σ_j β_j L_ij))`.
pub fn t_statistic(l: &EvalMatrix, beta: &SimplexVector, beta2: &SimplexVector) -> Result<f64> {
    check_dims(l, beta)?;
    check_dims(l, beta2)?;
    Ok(l.rows()
        .map(|row| term(dot(row, beta2.as_slice()), dot(row, beta.as_slice())))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AscentConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            max_iterations: 10_000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateReport {
    pub upsilon: f64,
    pub maximizer_beta: SimplexVector,
    pub is_certified: bool,
    pub verdict: Verdict,
    pub threshold: f64,
    pub iterations: usize,
    /// False when the ascent hit its iteration cap.
    pub converged: bool,
}

/// `Υ(L, β)` by projected gradient ascent over the simplex.
pub fn upsilon(l: &EvalMatrix, beta: &SimplexVector) -> Result<CertificateReport> {
    upsilon_with(l, beta, &AscentConfig::default(), CERTIFICATE_THRESHOLD)
}

pub fn certify(l: &EvalMatrix, beta: &SimplexVector) -> Result<CertificateReport> {
    certify_with_threshold(l, beta, CERTIFICATE_THRESHOLD)
}

pub fn certify_with_threshold(
    l: &EvalMatrix,
    beta: &SimplexVector,
    threshold: f64,
) -> Result<CertificateReport> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::invalid(
            "certificate threshold must be positive and finite",
        ));
    }
    upsilon_with(l, beta, &AscentConfig::default(), threshold)
}

pub fn upsilon_with(
    l: &EvalMatrix,
    beta: &SimplexVector,
    cfg: &AscentConfig,
    threshold: f64,
) -> Result<CertificateReport> {
    check_dims(l, beta)?;
    if cfg.max_iterations == 0 || !(cfg.tolerance > 0.0) {
        return Err(Error::Config(
            "ascent needs max_iterations >= 1 and tolerance > 0".into(),
        ));
    }

    // Rows with a vanishing denominator contribute 1 for every competitor with
    // mass on one of their nonzero columns; the supremum approaches that from
    // the interior of the simplex, so they add a constant.
    let mut constant = 0.0;
    let mut rows: Vec<(&[f64], f64)> = Vec::with_capacity(l.n());
    for row in l.rows() {
        let den = dot(row, beta.as_slice());
        if den == 0.0 {
            constant += 1.0;
        } else {
            rows.push((row, den));
        }
    }
    let objective = |x: &[f64]| -> f64 {
        rows.iter()
            .map(|(row, den)| smooth_term(dot(row, x) / den))
            .sum()
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (row, den) in &rows {
            let w = smooth_term_slope(dot(row, x) / den) / den;
            for (gj, lj) in g.iter_mut().zip(row.iter()) {
                *gj += w * lj;
            }
        }
        g
    };

    let k = l.k();
    let mut x = vec![1.0 / k as f64; k];
    let mut fx = objective(&x);
    let mut iterations = 0;
    let mut converged = k == 1;
    let mut step = 1.0 / (rows.len().max(1) as f64);
    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let g = gradient(&x);
        // Backtracking on the projected step: accept once the concave
        // objective clears its quadratic lower model.
        let mut accepted = None;
        for _ in 0..200 {
            let candidate = project_raw(
                &x.iter()
                    .zip(&g)
                    .map(|(xi, gi)| xi + step * gi)
                    .collect::<Vec<_>>(),
            );
            let fc = objective(&candidate);
            let diff: Vec<f64> = candidate.iter().zip(&x).map(|(a, b)| a - b).collect();
            let linear = dot(&g, &diff);
            let sq = dot(&diff, &diff);
            if fc >= fx + linear - sq / (2.0 * step) - 1e-15 * fx.abs().max(1.0) {
                accepted = Some((candidate, fc, sq));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, fc, sq)) = accepted else {
            converged = true;
            break;
        };
        let improvement = fc - fx;
        if improvement > 0.0 {
            x = candidate;
            fx = fc;
        }
        if improvement < cfg.tolerance || sq == 0.0 {
            converged = true;
        }
        step *= 2.0;
    }

    // T(β, β) = 0, so the supremum is never below zero.
    let at_beta = objective(beta.as_slice());
    let (value, maximizer) = if at_beta > fx {
        (at_beta, beta.as_slice().to_vec())
    } else {
        (fx, x)
    };
    let upsilon = (constant + value).max(0.0);
    let is_certified = upsilon < threshold;
    Ok(CertificateReport {
        upsilon,
        maximizer_beta: SimplexVector::normalize(maximizer)?,
        is_certified,
        verdict: if is_certified {
            Verdict::Certified
        } else {
            Verdict::Inconclusive
        },
        threshold,
        iterations,
        converged,
    })
}
