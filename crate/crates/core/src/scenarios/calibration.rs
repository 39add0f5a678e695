use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distribution::{AlignedComponents, Atom, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::likelihood::{em_until, EmConfig, Stop};
use crate::simplex::SimplexVector;

use super::predictor::PredictorTable;
use super::RANK_TOLERANCE;

/// A predictor is calibrated when its largest gap is at most this.
pub const CALIBRATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// `f_i(X) = P(Y = i | f(X))`.
    Canonical,
    /// `f_i(X) = P(Y = i | f_i(X))`.
    Marginal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub mode: CalibrationMode,
    pub max_gap: f64,
    pub calibrated: bool,
    /// Level sets visited, summed over coordinates in marginal mode.
    pub groups: usize,
}

/// Source joint `α_i Q_i(a)` per atom of the component universe, restricted
/// to atoms charged by `P_α`, paired with the predictor row there.
struct SourceJoint<'a> {
    cells: Vec<(&'a [f64], Vec<f64>)>,
}

impl<'a> SourceJoint<'a> {
    fn new(
        predictor: &'a PredictorTable,
        components: &[DiscreteDistribution],
        alpha: &SimplexVector,
    ) -> Result<Self> {
        let k = predictor.k();
        if components.len() != k || alpha.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: components.len().min(alpha.len()),
            });
        }
        if alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::invalid(
                "source prior alpha must be strictly positive",
            ));
        }
        let aligned = AlignedComponents::new(components)?;
        let mut cells = Vec::new();
        for (idx, &atom) in aligned.universe.iter().enumerate() {
            let joint: Vec<f64> = alpha
                .iter()
                .zip(&aligned.densities)
                .map(|(al, d)| al * d[idx])
                .collect();
            if joint.iter().all(|&v| v == 0.0) {
                continue;
            }
            let row = predictor.row(atom).ok_or_else(|| {
                Error::invalid(format!(
                    "predictor is undefined at atom {atom} charged by P_alpha"
                ))
            })?;
            cells.push((row, joint));
        }
        Ok(SourceJoint { cells })
    }
}

fn key(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

/// Largest gap between predictions and conditional label frequencies under
/// the source joint, grouping atoms with bitwise equal predictions.
pub fn check_calibration(
    predictor: &PredictorTable,
    components: &[DiscreteDistribution],
    alpha: &SimplexVector,
    mode: CalibrationMode,
) -> Result<CalibrationReport> {
    let joint = SourceJoint::new(predictor, components, alpha)?;
    let k = predictor.k();
    let mut max_gap: f64 = 0.0;
    let mut groups = 0;
    match mode {
        CalibrationMode::Canonical => {
            let mut levels: BTreeMap<Vec<u64>, (&[f64], Vec<f64>)> = BTreeMap::new();
            for (row, cell) in &joint.cells {
                let entry = levels
                    .entry(key(row))
                    .or_insert_with(|| (row, vec![0.0; k]));
                entry.1.iter_mut().zip(cell).for_each(|(acc, v)| *acc += v);
            }
            groups = levels.len();
            for (row, mass_by_label) in levels.values() {
                let mass: f64 = mass_by_label.iter().sum();
                for (fi, mi) in row.iter().zip(mass_by_label) {
                    max_gap = max_gap.max((fi - mi / mass).abs());
                }
            }
        }
        CalibrationMode::Marginal => {
            for i in 0..k {
                let mut levels: BTreeMap<u64, (f64, f64, f64)> = BTreeMap::new();
                for (row, cell) in &joint.cells {
                    let entry = levels.entry(row[i].to_bits()).or_insert((row[i], 0.0, 0.0));
                    entry.1 += cell.iter().sum::<f64>();
                    entry.2 += cell[i];
                }
                groups += levels.len();
                for (fi, mass, label_mass) in levels.values() {
                    max_gap = max_gap.max((fi - label_mass / mass).abs());
                }
            }
        }
    }
    Ok(CalibrationReport {
        mode,
        max_gap,
        calibrated: max_gap <= CALIBRATION_TOLERANCE,
        groups,
    })
}

/// Replaces the Bayes predictor on `merged` by the label distribution of the
/// merged cell. The result stays canonically calibrated.
pub fn coarsened_bayes_predictor(
    components: &[DiscreteDistribution],
    alpha: &SimplexVector,
    merged: &[Atom],
) -> Result<PredictorTable> {
    let bayes = super::bayes_predictor(components, alpha)?;
    let mut cell = vec![0.0; alpha.len()];
    for &a in merged {
        for ((c, al), q) in cell.iter_mut().zip(alpha.iter()).zip(components) {
            *c += al * q.prob(a);
        }
    }
    let mass: f64 = cell.iter().sum();
    if mass == 0.0 {
        return Err(Error::invalid("merged atoms carry no source mass"));
    }
    let merged_row: Vec<f64> = cell.iter().map(|c| c / mass).collect();
    let rows = bayes
        .atoms()
        .iter()
        .zip(bayes.rows())
        .map(|(a, r)| {
            if merged.contains(a) {
                Some(merged_row.clone())
            } else {
                r.clone()
            }
        })
        .collect();
    PredictorTable::new(bayes.k(), bayes.atoms().to_vec(), rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopulationArgmax {
    pub beta: SimplexVector,
    /// `E_{P*}[log Σ_j β_j f_j(X) / α_j]` at `beta`.
    pub objective: f64,
    /// The functions `f_j / α_j` are linearly independent on the support of `P*`.
    pub identifiable: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes the exact population MLLS objective under `P* = Σ β*_j Q*_j`.
pub fn population_mlls_argmax(
    predictor: &PredictorTable,
    components: &[DiscreteDistribution],
    alpha: &SimplexVector,
    beta_star: &SimplexVector,
) -> Result<PopulationArgmax> {
    let report = check_calibration(predictor, components, alpha, CalibrationMode::Canonical)?;
    if !report.calibrated {
        return Err(Error::Precondition(format!(
            "predictor is not canonically calibrated (check_calibration gap {:e})",
            report.max_gap
        )));
    }
    let k = predictor.k();
    if beta_star.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: beta_star.len(),
        });
    }
    let aligned = AlignedComponents::new(components)?;
    let target = aligned.mix(beta_star.as_slice());
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    for (idx, &atom) in aligned.universe.iter().enumerate() {
        if target[idx] == 0.0 {
            continue;
        }
        let f = predictor
            .row(atom)
            .ok_or_else(|| Error::invalid(format!("predictor is undefined at atom {atom}")))?;
        rows.push(
            f.iter()
                .zip(alpha.iter())
                .map(|(fi, ai)| fi / ai)
                .collect::<Vec<f64>>(),
        );
        weights.push(target[idx]);
    }

    let design = nalgebra::DMatrix::from_fn(rows.len(), k, |r, j| weights[r].sqrt() * rows[r][j]);
    let sv = design.singular_values();
    let top = sv.max();
    let identifiable =
        rows.len() >= k && sv.iter().filter(|&&s| s > RANK_TOLERANCE * top).count() == k;

    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let cfg = EmConfig {
        max_iterations: 1_000_000,
        ..EmConfig::default()
    };
    let fit = em_until(&refs, Some(&weights), &cfg, Stop::Parameter(1e-15))?;
    Ok(PopulationArgmax {
        beta: fit.beta_hat,
        objective: fit.log_likelihood,
        identifiable,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// `(E_{P*}[φ(f(X))], E_{R_{β*}}[φ(f(X))])` with `R_β = Σ β_i α_i^{-1} f_i · P_α`.
pub fn change_of_measure_pair<F>(
    predictor: &PredictorTable,
    components: &[DiscreteDistribution],
    alpha: &SimplexVector,
    beta_star: &SimplexVector,
    phi: F,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let joint = SourceJoint::new(predictor, components, alpha)?;
    if beta_star.len() != predictor.k() {
        return Err(Error::DimensionMismatch {
            expected: predictor.k(),
            found: beta_star.len(),
        });
    }
    let mut under_target = 0.0;
    let mut under_reweighted = 0.0;
    for (row, cell) in &joint.cells {
        let value = phi(row);
        // α_i Q_i(a) / α_i recovers Q_i(a).
        let target: f64 = cell
            .iter()
            .zip(alpha.iter())
            .zip(beta_star.iter())
            .map(|((c, a), b)| b * c / a)
            .sum();
        let p_alpha: f64 = cell.iter().sum();
        let density: f64 = row
            .iter()
            .zip(alpha.iter())
            .zip(beta_star.iter())
            .map(|((f, a), b)| b * f / a)
            .sum();
        under_target += target * value;
        under_reweighted += p_alpha * density * value;
    }
    Ok((under_target, under_reweighted))
}
