//! Ground-truth generators on finite atom spaces: target samples under
//! contamination, outliers and component misspecification, the Bayes
//! predictor and its confusion matrix, calibration checks and exact
//! population quantities.

mod calibration;
mod predictor;

pub use calibration::{
    change_of_measure_pair, check_calibration, coarsened_bayes_predictor, population_mlls_argmax,
    CalibrationMode, CalibrationReport, PopulationArgmax, CALIBRATION_TOLERANCE,
};
pub use predictor::{
    bayes_predictor, confusion_matrix, reconstruct_components, solve_gamma, source_marginal,
    ConfusionMatrix, GammaReport, PredictorTable,
};

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distances::hellinger;
use crate::distribution::{AlignedComponents, Atom, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::simplex::SimplexVector;

/// Relative singular value cutoff for the well-posedness rank check.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// RNG stream reserved for the component perturbation; replication `r`
/// samples from stream `r + 1`.
const PERTURBATION_STREAM: u64 = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub k: usize,
    /// Model components live on the atoms `0..m`.
    pub m: usize,
    pub components: Vec<DiscreteDistribution>,
    pub beta_star: SimplexVector,
    pub alpha: SimplexVector,
    #[serde(default)]
    pub contamination_rate: f64,
    #[serde(default)]
    pub contaminant: Option<DiscreteDistribution>,
    #[serde(default)]
    pub outlier_indices: Vec<usize>,
    #[serde(default)]
    pub outlier_distribution: Option<DiscreteDistribution>,
    #[serde(default)]
    pub component_perturbation: f64,
    pub n: usize,
    pub seed: u64,
    /// Require linearly independent components.
    #[serde(default)]
    pub well_posed: bool,
}

impl ScenarioSpec {
    /// Uncontaminated, well-specified scenario.
    pub fn new(
        components: Vec<DiscreteDistribution>,
        beta_star: SimplexVector,
        alpha: SimplexVector,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        let m = components
            .iter()
            .flat_map(|c| c.atoms().iter().copied())
            .max()
            .map_or(0, |a| a + 1);
        let spec = ScenarioSpec {
            k: components.len(),
            m,
            components,
            beta_star,
            alpha,
            contamination_rate: 0.0,
            contaminant: None,
            outlier_indices: Vec::new(),
            outlier_distribution: None,
            component_perturbation: 0.0,
            n,
            seed,
            well_posed: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 {
            return Err(Error::invalid("scenario needs at least one component"));
        }
        for (what, len) in [
            ("components", self.components.len()),
            ("beta_star", self.beta_star.len()),
            ("alpha", self.alpha.len()),
        ] {
            if len != k {
                return Err(Error::invalid(format!(
                    "{what} has length {len}, expected k = {k}"
                )));
            }
        }
        if self.alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::invalid(
                "source prior alpha must be strictly positive",
            ));
        }
        if self.m == 0 {
            return Err(Error::invalid("scenario needs at least one atom"));
        }
        for (i, c) in self.components.iter().enumerate() {
            if let Some(a) = c.atoms().iter().find(|&&a| a >= self.m) {
                return Err(Error::invalid(format!(
                    "component {i} uses atom {a} outside 0..{}",
                    self.m
                )));
            }
        }
        if !(0.0..1.0).contains(&self.contamination_rate) {
            return Err(Error::invalid("contamination_rate must lie in [0, 1)"));
        }
        if self.contamination_rate > 0.0 && self.contaminant.is_none() {
            return Err(Error::invalid(
                "contamination_rate > 0 requires a contaminant",
            ));
        }
        if !self.outlier_indices.is_empty() && self.outlier_distribution.is_none() {
            return Err(Error::invalid(
                "outlier_indices require an outlier_distribution",
            ));
        }
        let mut sorted = self.outlier_indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("outlier_indices contain duplicates"));
        }
        if sorted.last().is_some_and(|&i| i >= self.n) {
            return Err(Error::invalid("outlier index out of range"));
        }
        if !(0.0..=1.0).contains(&self.component_perturbation) {
            return Err(Error::invalid("component_perturbation must lie in [0, 1]"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if self.well_posed
            && !self
                .true_components()?
                .is_linearly_independent(RANK_TOLERANCE)
        {
            return Err(Error::invalid(
                "components are linearly dependent in a scenario tagged well_posed",
            ));
        }
        Ok(())
    }

    /// True components laid out on `0..m`.
    pub fn true_components(&self) -> Result<AlignedComponents> {
        let refs: Vec<&DiscreteDistribution> = self.components.iter().collect();
        AlignedComponents::on_universe(&refs, (0..self.m).collect())
    }

    /// The uncontaminated target distribution `Σ β*_i Q*_i`.
    pub fn target_distribution(&self) -> Result<DiscreteDistribution> {
        let aligned = self.true_components()?;
        DiscreteDistribution::new(
            aligned.universe.clone(),
            aligned.mix(self.beta_star.as_slice()),
        )
    }

    /// The components handed to the estimators, perturbed by `ε` if set.
    pub fn model(&self) -> Result<ScenarioModel> {
        self.validate()?;
        let components = if self.component_perturbation == 0.0 {
            self.components.clone()
        } else {
            let eps = self.component_perturbation;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(PERTURBATION_STREAM);
            let truth = self.true_components()?;
            truth
                .densities
                .iter()
                .map(|q| {
                    let r = random_distribution(&mut rng, self.m);
                    let mixed: Vec<f64> = q
                        .iter()
                        .zip(&r)
                        .map(|(qa, ra)| (1.0 - eps) * qa + eps * ra)
                        .collect();
                    DiscreteDistribution::new(truth.universe.clone(), mixed)
                })
                .collect::<Result<Vec<_>>>()?
        };
        let misspecification_h2 = self
            .components
            .iter()
            .zip(&components)
            .map(|(a, b)| hellinger(a, b).powi(2))
            .fold(0.0, f64::max);
        let refs: Vec<&DiscreteDistribution> = components.iter().collect();
        let aligned = AlignedComponents::on_universe(&refs, (0..self.m).collect())?;
        let predictor = bayes_predictor(&components, &self.alpha)?;
        Ok(ScenarioModel {
            components,
            aligned,
            predictor,
            misspecification_h2,
        })
    }

    /// Draws the `n` target samples of replication 0.
    pub fn sample_target(&self) -> Result<Vec<Atom>> {
        self.validate()?;
        self.sample_replication(0)
    }

    /// Draws the target samples of replication `r` from its own RNG stream.
    pub fn sample_replication(&self, replication: u64) -> Result<Vec<Atom>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication + 1);
        let target = self.target_distribution()?;
        let clean = Sampler::new(&target)?;
        let contaminant = self.contaminant.as_ref().map(Sampler::new).transpose()?;
        let lambda = self.contamination_rate;
        let mut samples: Vec<Atom> = (0..self.n)
            .map(|_| {
                // Always consume the same draws so that runs differing only
                // in the contamination rate share their randomness.
                let u: f64 = rng.gen();
                match &contaminant {
                    Some(c) if u < lambda => c.draw(&mut rng),
                    _ => clean.draw(&mut rng),
                }
            })
            .collect();
        if let Some(dist) = &self.outlier_distribution {
            let outliers = Sampler::new(dist)?;
            let mut idx = self.outlier_indices.clone();
            idx.sort_unstable();
            for i in idx {
                samples[i] = outliers.draw(&mut rng);
            }
        }
        Ok(samples)
    }

    /// Samples plus everything the estimators consume, for replication 0.
    pub fn generate(&self) -> Result<ScenarioData> {
        let model = self.model()?;
        let samples = self.sample_target()?;
        Ok(model.data_for(samples))
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    // Normalized exponential draws give a uniform point on the simplex.
    let raw: Vec<f64> = (0..m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

struct Sampler<'a> {
    atoms: &'a [Atom],
    index: WeightedIndex<f64>,
}

impl<'a> Sampler<'a> {
    fn new(dist: &'a DiscreteDistribution) -> Result<Self> {
        let index = WeightedIndex::new(dist.probs())
            .map_err(|e| Error::invalid(format!("cannot sample: {e}")))?;
        Ok(Sampler {
            atoms: dist.atoms(),
            index,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Atom {
        self.atoms[self.index.sample(rng)]
    }
}

/// The estimator-side view of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioModel {
    pub components: Vec<DiscreteDistribution>,
    /// `components` on the atoms `0..m`.
    pub aligned: AlignedComponents,
    /// Bayes predictor of the model components under the source prior.
    pub predictor: PredictorTable,
    /// `max_i h²(Q_i, Q*_i)` between model and true components.
    pub misspecification_h2: f64,
}

impl ScenarioModel {
    /// `(Q_1(x), …, Q_k(x))`; zero off the model atoms.
    pub fn eval_row(&self, atom: Atom) -> Vec<f64> {
        match self.aligned.index_of(atom) {
            Some(a) => self.aligned.densities.iter().map(|d| d[a]).collect(),
            None => vec![0.0; self.aligned.k()],
        }
    }

    pub fn evals(&self, samples: &[Atom]) -> Vec<Vec<f64>> {
        samples.iter().map(|&x| self.eval_row(x)).collect()
    }

    /// Predictor outputs, or `None` if some sample hits an undefined row.
    pub fn predictor_outputs(&self, samples: &[Atom]) -> Option<Vec<Vec<f64>>> {
        samples
            .iter()
            .map(|&x| self.predictor.row(x).map(<[f64]>::to_vec))
            .collect()
    }

    pub fn confusion(&self) -> Result<ConfusionMatrix> {
        confusion_matrix(&self.predictor, &self.components)
    }

    pub fn data_for(&self, samples: Vec<Atom>) -> ScenarioData {
        ScenarioData {
            evals: self.evals(&samples),
            predictor_outputs: self.predictor_outputs(&samples),
            samples,
            model_components: self.components.clone(),
            misspecification_h2: self.misspecification_h2,
        }
    }
}

/// Distinct atoms of a sample with their multiplicities, ascending by atom.
pub fn atom_counts(samples: &[Atom]) -> Vec<(Atom, usize)> {
    let mut counts: BTreeMap<Atom, usize> = BTreeMap::new();
    for &x in samples {
        *counts.entry(x).or_default() += 1;
    }
    counts.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioData {
    pub samples: Vec<Atom>,
    /// `L[i][j] = Q_j(x_i)` under the model components; unvalidated.
    pub evals: Vec<Vec<f64>>,
    pub predictor_outputs: Option<Vec<Vec<f64>>>,
    pub model_components: Vec<DiscreteDistribution>,
    pub misspecification_h2: f64,
}
