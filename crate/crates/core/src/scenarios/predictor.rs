use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distribution::{AlignedComponents, Atom, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::simplex::{l1_distance, SimplexVector, SIMPLEX_TOLERANCE};

/// Column sums of a confusion matrix must be within this of 1.
const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// A predictor on a finite atom space: one probability vector per atom, or
/// `None` where it is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct PredictorTable {
    atoms: Vec<Atom>,
    rows: Vec<Option<Vec<f64>>>,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    atoms: Vec<Atom>,
    rows: Vec<Option<Vec<f64>>>,
    k: usize,
}

impl TryFrom<RawTable> for PredictorTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        PredictorTable::new(raw.k, raw.atoms, raw.rows)
    }
}

impl From<PredictorTable> for RawTable {
    fn from(t: PredictorTable) -> Self {
        RawTable {
            atoms: t.atoms,
            rows: t.rows,
            k: t.k,
        }
    }
}

impl PredictorTable {
    /// Atoms are sorted together with their rows; defined rows must be
    /// probability vectors of length `k`.
    pub fn new(k: usize, atoms: Vec<Atom>, rows: Vec<Option<Vec<f64>>>) -> Result<Self> {
        if atoms.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                found: rows.len(),
            });
        }
        if k == 0 {
            return Err(Error::invalid("predictor needs at least one label"));
        }
        let mut pairs: Vec<(Atom, Option<Vec<f64>>)> = atoms.into_iter().zip(rows).collect();
        pairs.sort_by_key(|(a, _)| *a);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("predictor table lists an atom twice"));
        }
        for (a, row) in &pairs {
            if let Some(r) = row {
                if r.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        found: r.len(),
                    });
                }
                SimplexVector::with_tolerance(r.clone(), SIMPLEX_TOLERANCE).map_err(|_| {
                    Error::invalid(format!(
                        "predictor row at atom {a} is not a probability vector"
                    ))
                })?;
            }
        }
        let (atoms, rows) = pairs.into_iter().unzip();
        Ok(PredictorTable { atoms, rows, k })
    }

    /// The predictor `x ↦ α` on the given atoms.
    pub fn constant(atoms: Vec<Atom>, alpha: &SimplexVector) -> Result<Self> {
        let rows = atoms
            .iter()
            .map(|_| Some(alpha.as_slice().to_vec()))
            .collect();
        PredictorTable::new(alpha.len(), atoms, rows)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn rows(&self) -> &[Option<Vec<f64>>] {
        &self.rows
    }

    /// The prediction at `atom`, `None` if undefined or not listed.
    pub fn row(&self, atom: Atom) -> Option<&[f64]> {
        let i = self.atoms.binary_search(&atom).ok()?;
        self.rows[i].as_deref()
    }
}

fn check_alpha(alpha: &SimplexVector, k: usize) -> Result<()> {
    if alpha.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: alpha.len(),
        });
    }
    if alpha.iter().any(|&a| a <= 0.0) {
        return Err(Error::invalid(
            "source prior alpha must be strictly positive",
        ));
    }
    Ok(())
}

/// `f^α_i(x) = α_i q_i(x) / Σ_j α_j q_j(x)` on the union of the component
/// atoms, undefined where the denominator vanishes.
pub fn bayes_predictor(
    components: &[DiscreteDistribution],
    alpha: &SimplexVector,
) -> Result<PredictorTable> {
    check_alpha(alpha, components.len())?;
    let aligned = AlignedComponents::new(components)?;
    let rows = (0..aligned.m())
        .map(|a| {
            let weighted: Vec<f64> = alpha
                .iter()
                .zip(&aligned.densities)
                .map(|(al, d)| al * d[a])
                .collect();
            let den: f64 = weighted.iter().sum();
            (den > 0.0).then(|| weighted.into_iter().map(|w| w / den).collect())
        })
        .collect();
    PredictorTable::new(components.len(), aligned.universe, rows)
}

/// `P_α = Σ α_i Q*_i`.
pub fn source_marginal(
    components: &[DiscreteDistribution],
    alpha: &SimplexVector,
) -> Result<DiscreteDistribution> {
    check_alpha(alpha, components.len())?;
    let refs: Vec<&DiscreteDistribution> = components.iter().collect();
    DiscreteDistribution::mixture(alpha.as_slice(), &refs)
}

/// Recovers `Q_i(x) = f_i(x) P_α(x) / α_i` on the atoms of the table.
pub fn reconstruct_components(
    predictor: &PredictorTable,
    p_alpha: &DiscreteDistribution,
    alpha: &SimplexVector,
) -> Result<Vec<DiscreteDistribution>> {
    check_alpha(alpha, predictor.k())?;
    if let Some(a) = p_alpha.support().find(|&a| predictor.row(a).is_none()) {
        return Err(Error::invalid(format!(
            "predictor is undefined at atom {a} charged by P_alpha"
        )));
    }
    (0..predictor.k())
        .map(|i| {
            let probs = predictor
                .atoms()
                .iter()
                .map(|&a| {
                    predictor
                        .row(a)
                        .map_or(0.0, |r| r[i] * p_alpha.prob(a) / alpha[i])
                })
                .collect();
            DiscreteDistribution::new(predictor.atoms().to_vec(), probs)
        })
        .collect()
}

/// `M[i][j] = Σ_x f_i(x) Q_j(x)`; every column sums to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    values: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let k = values.len();
        if k == 0 || values.iter().any(|r| r.len() != k) {
            return Err(Error::invalid(
                "confusion matrix must be square and nonempty",
            ));
        }
        if values
            .iter()
            .flatten()
            .any(|&v| !(-1e-12..=1.0 + 1e-12).contains(&v))
        {
            return Err(Error::invalid(
                "confusion matrix entries must lie in [0, 1]",
            ));
        }
        let m = ConfusionMatrix { values };
        if let Some(j) = m
            .column_sums()
            .iter()
            .position(|s| (s - 1.0).abs() > STOCHASTIC_TOLERANCE)
        {
            return Err(Error::invalid(format!(
                "confusion matrix column {j} does not sum to 1"
            )));
        }
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.k())
            .map(|j| self.values.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// `M v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.values
            .iter()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub fn confusion_matrix(
    predictor: &PredictorTable,
    components: &[DiscreteDistribution],
) -> Result<ConfusionMatrix> {
    let k = predictor.k();
    if components.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: components.len(),
        });
    }
    let mut values = vec![vec![0.0; k]; k];
    for (j, q) in components.iter().enumerate() {
        for (&a, &p) in q.atoms().iter().zip(q.probs()) {
            if p == 0.0 {
                continue;
            }
            let row = predictor.row(a).ok_or_else(|| {
                Error::invalid(format!(
                    "predictor is undefined at atom {a} charged by component {j}"
                ))
            })?;
            for (i, fi) in row.iter().enumerate() {
                values[i][j] += fi * p;
            }
        }
    }
    ConfusionMatrix::new(values)
}

/// Solution of `M γ = α` and its distance to `α`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaReport {
    pub gamma: Option<Vec<f64>>,
    /// `γ` exists and lies in the simplex.
    pub feasible: bool,
    pub alpha_gamma_l1: Option<f64>,
}

pub fn solve_gamma(confusion: &ConfusionMatrix, alpha: &SimplexVector) -> Result<GammaReport> {
    let k = confusion.k();
    if alpha.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: alpha.len(),
        });
    }
    let m = DMatrix::from_fn(k, k, |i, j| confusion.get(i, j));
    let gamma = m
        .lu()
        .solve(&DVector::from_column_slice(alpha.as_slice()))
        .map(|g| g.iter().copied().collect::<Vec<f64>>())
        .filter(|g| g.iter().all(|v| v.is_finite()));
    let feasible = gamma
        .as_ref()
        .is_some_and(|g| g.iter().all(|&v| v >= -1e-12));
    let alpha_gamma_l1 = gamma.as_ref().map(|g| l1_distance(g, alpha.as_slice()));
    Ok(GammaReport {
        gamma,
        feasible,
        alpha_gamma_l1,
    })
}
