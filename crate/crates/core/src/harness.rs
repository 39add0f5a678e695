//! Monte Carlo studies: sweep one scenario knob, rerun the estimators over
//! seeded replications and compare the measured ℓ1 errors with the
//! theoretical envelopes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distances::{delta_star_aligned, SeparationMethod};
use crate::error::{Error, Result};
use crate::eval::validate_eval_matrix;
use crate::likelihood::{
    estimate_bbse, estimate_grid_oracle_with, estimate_mle_weighted, estimate_plugin, EmConfig,
    GRID_ORACLE_MAX_K,
};
use crate::parallel::{map_indexed, Execution};
use crate::scenarios::{atom_counts, ConfusionMatrix, ScenarioModel, ScenarioSpec};
use crate::simplex::SimplexVector;

pub const SCHEMA_VERSION: &str = "1";

/// Absolute constants of the finite-sample risk bound.
pub const C1: f64 = 150.0;
pub const C2: f64 = 2e6;
pub const C3: f64 = 5014.0;

/// `−ln 0.1`: envelopes then hold with probability 0.9.
pub fn default_xi() -> f64 {
    -(0.1f64).ln()
}

fn default_confidence() -> f64 {
    0.9
}

fn default_grid_resolution() -> f64 {
    1e-3
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    N,
    ContaminationRate,
    OutlierFraction,
    PerturbationEps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mle,
    Bbse,
    GridOracle,
    /// Mean predictor output, ignoring the model.
    Plugin,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mle => "mle",
            EstimatorKind::Bbse => "bbse",
            EstimatorKind::GridOracle => "grid_oracle",
            EstimatorKind::Plugin => "plugin",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub base_scenario: ScenarioSpec,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub replications: usize,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: f64,
    #[serde(default)]
    pub em: EmConfig,
}

impl StudySpec {
    pub fn new(
        base_scenario: ScenarioSpec,
        sweep_variable: SweepVariable,
        sweep_values: Vec<f64>,
        replications: usize,
        estimators: Vec<EstimatorKind>,
    ) -> Self {
        StudySpec {
            base_scenario,
            sweep_variable,
            sweep_values,
            replications,
            estimators,
            confidence: default_confidence(),
            xi: default_xi(),
            grid_resolution: default_grid_resolution(),
            em: EmConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base_scenario.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values is empty".into()));
        }
        if self.sweep_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "sweep_values must be strictly increasing".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        let mut sorted = self.estimators.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.estimators.len() {
            return Err(Error::Config("estimators are listed twice".into()));
        }
        if self.estimators.contains(&EstimatorKind::GridOracle)
            && self.base_scenario.k > GRID_ORACLE_MAX_K
        {
            return Err(Error::Config(format!(
                "grid_oracle needs k <= {GRID_ORACLE_MAX_K}"
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config("confidence must lie in (0, 1)".into()));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::Config("xi must be positive".into()));
        }
        self.em.validate(self.base_scenario.k)?;
        for &v in &self.sweep_values {
            configure(&self.base_scenario, self.sweep_variable, v)?;
        }
        Ok(())
    }
}

/// The base scenario with the swept knob set to `value`.
pub fn configure(base: &ScenarioSpec, variable: SweepVariable, value: f64) -> Result<ScenarioSpec> {
    let mut s = base.clone();
    match variable {
        SweepVariable::N => {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                return Err(Error::Config(format!(
                    "n sweep value {value} is not a positive integer"
                )));
            }
            s.n = value as usize;
        }
        SweepVariable::ContaminationRate => s.contamination_rate = value,
        SweepVariable::OutlierFraction => {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config("outlier fraction must lie in [0, 1]".into()));
            }
            if s.outlier_distribution.is_none() {
                return Err(Error::Config(
                    "an outlier sweep needs outlier_distribution".into(),
                ));
            }
            // Guard against products like 0.29·100 rounding just below an integer.
            let count = ((value * s.n as f64) + 1e-9).floor() as usize;
            s.outlier_indices = (0..count.min(s.n)).collect();
        }
        SweepVariable::PerturbationEps => s.component_perturbation = value,
    }
    s.validate()
        .map_err(|e| Error::Config(format!("sweep value {value}: {e}")))?;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `log(median ℓ1)` against `log n`.
    LogLog,
    /// Median squared ℓ1 error against the sweep value.
    LinearSquared,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepFit {
    pub estimator: EstimatorKind,
    pub kind: FitKind,
    pub fit: LineFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyPoint {
    pub sweep_value: f64,
    pub n: usize,
    pub estimator: EstimatorKind,
    pub median_l1: f64,
    /// Quantile at `1 − confidence`.
    pub lower_l1: f64,
    /// Quantile at `confidence`.
    pub upper_l1: f64,
    pub mean_l1: f64,
    pub median_sq_l1: f64,
    /// Realized `max_i h²(Q_i, Q*_i)` between model and true components.
    pub misspecification_h2: f64,
    /// `λ0 + |I|/n + max_i h²(Q_i, Q*_i)`, the deviation term fed to the envelopes.
    pub misspecification_bound: f64,
    pub delta_star: Option<f64>,
    /// `(Δ*/(2√2))²`.
    pub c: Option<f64>,
    pub envelope_l1: Option<f64>,
    /// `2(1 + c1)·dev + 2(c2·k·ln n + c3·ξ)/n`, a bound on `C·ℓ1²`.
    pub constant_envelope_sq: Option<f64>,
    /// `C` times the `(1 − e^{−ξ})`-quantile of the squared errors.
    pub scaled_sq_quantile: Option<f64>,
    pub envelope_holds: Option<bool>,
    pub l1_errors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub sweep_value: f64,
    pub estimator: EstimatorKind,
    pub median_l1: f64,
    pub mle_median_l1: f64,
    pub mle_better: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyReport {
    pub schema_version: String,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub replications: usize,
    pub estimators: Vec<EstimatorKind>,
    pub seed: u64,
    pub confidence: f64,
    pub xi: f64,
    pub beta_star: SimplexVector,
    pub constants: Constants,
    pub points: Vec<StudyPoint>,
    pub fits: Vec<SweepFit>,
    pub comparisons: Vec<Comparison>,
    pub notes: Vec<String>,
}

impl StudyReport {
    pub fn points_for(&self, estimator: EstimatorKind) -> impl Iterator<Item = &StudyPoint> {
        self.points.iter().filter(move |p| p.estimator == estimator)
    }

    pub fn fit_for(&self, estimator: EstimatorKind) -> Option<&LineFit> {
        self.fits
            .iter()
            .find(|f| f.estimator == estimator)
            .map(|f| &f.fit)
    }

    /// One row per replication: `sweep_value,estimator,replication,l1_error`.
    pub fn write_records_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["sweep_value", "estimator", "replication", "l1_error"])?;
        for p in &self.points {
            for (r, e) in p.l1_errors.iter().enumerate() {
                wtr.write_record([
                    format!("{:?}", p.sweep_value),
                    p.estimator.name().into(),
                    r.to_string(),
                    format!("{e:?}"),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Median and quantile band per sweep value: `x,y,y_lo,y_hi`.
    pub fn write_plot_data<W: Write>(&self, estimator: EstimatorKind, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["x", "y", "y_lo", "y_hi"])?;
        for p in self.points_for(estimator) {
            wtr.write_record(
                [p.sweep_value, p.median_l1, p.lower_l1, p.upper_l1].map(|v| format!("{v:?}")),
            )?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `sqrt((dev + (k ln n + ξ)/n)/C)`.
pub fn theoretical_envelope(k: usize, n: f64, xi: f64, c: f64, misspec: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::invalid("C must be positive"));
    }
    if k == 0 || !(n >= 1.0) || !(xi > 0.0) || !(misspec >= 0.0) {
        return Err(Error::invalid(
            "envelope needs k >= 1, n >= 1, xi > 0 and misspec >= 0",
        ));
    }
    Ok(((misspec + (k as f64 * n.ln() + xi) / n) / c).sqrt())
}

/// Bound on `C·ℓ1²` with the absolute constants applied.
pub fn constant_weighted_envelope(k: usize, n: f64, xi: f64, misspec: f64) -> f64 {
    2.0 * (1.0 + C1) * misspec + 2.0 * (C2 * k as f64 * n.ln() + C3 * xi) / n
}

/// Ordinary least squares of `y` on `x`.
pub fn least_squares(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::invalid("least squares needs at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("least squares needs two distinct abscissae"));
    }
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// Log-log least squares of error against `n`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 3 {
        return Err(Error::invalid("rate fit needs at least three points"));
    }
    if points.iter().any(|&(n, e)| !(n > 0.0) || !(e > 0.0)) {
        return Err(Error::invalid("rate fit needs positive n and errors"));
    }
    least_squares(
        &points
            .iter()
            .map(|&(n, e)| (n.ln(), e.ln()))
            .collect::<Vec<_>>(),
    )
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn run_study(spec: &StudySpec) -> Result<StudyReport> {
    run_study_with(spec, Execution::default())
}

pub fn run_study_with(spec: &StudySpec, exec: Execution) -> Result<StudyReport> {
    spec.validate()?;
    let base = &spec.base_scenario;
    let k = base.k;
    let mut points = Vec::new();
    for &value in &spec.sweep_values {
        let scenario = configure(base, spec.sweep_variable, value)?;
        let model = scenario.model()?;
        let confusion = if spec.estimators.contains(&EstimatorKind::Bbse) {
            Some(model.confusion()?)
        } else {
            None
        };
        let delta = if k >= 2 {
            Some(
                delta_star_aligned(
                    &model.aligned,
                    SeparationMethod::Exact,
                    Execution::Sequential,
                )?
                .delta_star,
            )
        } else {
            None
        };

        let per_replication = map_indexed(exec, spec.replications, |r| {
            replicate(spec, &scenario, &model, confusion.as_ref(), r as u64)
        });
        let mut errors = vec![Vec::with_capacity(spec.replications); spec.estimators.len()];
        for rep in per_replication {
            for (acc, e) in errors.iter_mut().zip(rep?) {
                acc.push(e);
            }
        }

        let n = scenario.n;
        let misspec = scenario.contamination_rate
            + scenario.outlier_indices.len() as f64 / n as f64
            + model.misspecification_h2;
        let c = delta
            .map(|d| (d / (2.0 * std::f64::consts::SQRT_2)).powi(2))
            .filter(|c| *c > 0.0);
        let coverage = 1.0 - (-spec.xi).exp();
        for (&estimator, errs) in spec.estimators.iter().zip(errors) {
            let s = sorted(&errs);
            let sq = sorted(&errs.iter().map(|e| e * e).collect::<Vec<_>>());
            let envelope_l1 = c
                .map(|c| theoretical_envelope(k, n as f64, spec.xi, c, misspec))
                .transpose()?;
            let constant_envelope_sq =
                c.map(|_| constant_weighted_envelope(k, n as f64, spec.xi, misspec));
            let scaled_sq_quantile = c.map(|c| c * quantile(&sq, coverage));
            points.push(StudyPoint {
                sweep_value: value,
                n,
                estimator,
                median_l1: quantile(&s, 0.5),
                lower_l1: quantile(&s, 1.0 - spec.confidence),
                upper_l1: quantile(&s, spec.confidence),
                mean_l1: errs.iter().sum::<f64>() / errs.len() as f64,
                median_sq_l1: quantile(&sq, 0.5),
                misspecification_h2: model.misspecification_h2,
                misspecification_bound: misspec,
                delta_star: delta,
                c,
                envelope_l1,
                constant_envelope_sq,
                scaled_sq_quantile,
                envelope_holds: scaled_sq_quantile
                    .zip(constant_envelope_sq)
                    .map(|(q, env)| q <= env),
                l1_errors: errs,
            });
        }
    }

    let mut fits = Vec::new();
    for &estimator in &spec.estimators {
        let pts: Vec<&StudyPoint> = points.iter().filter(|p| p.estimator == estimator).collect();
        let fit = match spec.sweep_variable {
            SweepVariable::N if pts.len() >= 3 && pts.iter().all(|p| p.median_l1 > 0.0) => Some((
                FitKind::LogLog,
                rate_fit(
                    &pts.iter()
                        .map(|p| (p.n as f64, p.median_l1))
                        .collect::<Vec<_>>(),
                )?,
            )),
            SweepVariable::N => None,
            _ if pts.len() >= 2 => Some((
                FitKind::LinearSquared,
                least_squares(
                    &pts.iter()
                        .map(|p| (p.sweep_value, p.median_sq_l1))
                        .collect::<Vec<_>>(),
                )?,
            )),
            _ => None,
        };
        if let Some((kind, fit)) = fit {
            fits.push(SweepFit {
                estimator,
                kind,
                fit,
            });
        }
    }

    let mut comparisons = Vec::new();
    if spec.estimators.contains(&EstimatorKind::Mle) {
        for p in points.iter().filter(|p| p.estimator != EstimatorKind::Mle) {
            let mle = points
                .iter()
                .find(|q| q.estimator == EstimatorKind::Mle && q.sweep_value == p.sweep_value)
                .expect("every sweep value has an MLE point");
            comparisons.push(Comparison {
                sweep_value: p.sweep_value,
                estimator: p.estimator,
                median_l1: p.median_l1,
                mle_median_l1: mle.median_l1,
                mle_better: mle.median_l1 < p.median_l1,
            });
        }
    }

    Ok(StudyReport {
        schema_version: SCHEMA_VERSION.into(),
        sweep_variable: spec.sweep_variable,
        sweep_values: spec.sweep_values.clone(),
        replications: spec.replications,
        estimators: spec.estimators.clone(),
        seed: base.seed,
        confidence: spec.confidence,
        xi: spec.xi,
        beta_star: base.beta_star.clone(),
        constants: Constants {
            c1: C1,
            c2: C2,
            c3: C3,
        },
        points,
        fits,
        comparisons,
        notes: vec![
            "l1 errors are measured against beta_star of the base scenario".into(),
            "envelopes with the absolute constants c1, c2, c3 are loose at these sample sizes"
                .into(),
        ],
    })
}

/// ℓ1 errors of every estimator on one replication, in `spec.estimators` order.
fn replicate(
    spec: &StudySpec,
    scenario: &ScenarioSpec,
    model: &ScenarioModel,
    confusion: Option<&ConfusionMatrix>,
    replication: u64,
) -> Result<Vec<f64>> {
    let samples = scenario.sample_replication(replication)?;
    let counts = atom_counts(&samples);
    let beta_star = &spec.base_scenario.beta_star;
    let predictor_outputs = || {
        model.predictor_outputs(&samples).ok_or_else(|| {
            Error::Config(
                "a sample falls where the predictor is undefined; bbse and plugin cannot run"
                    .into(),
            )
        })
    };
    spec.estimators
        .iter()
        .map(|estimator| {
            let beta = match estimator {
                EstimatorKind::Mle => {
                    let rows: Vec<Vec<f64>> =
                        counts.iter().map(|&(a, _)| model.eval_row(a)).collect();
                    let weights: Vec<f64> = counts.iter().map(|&(_, c)| c as f64).collect();
                    estimate_mle_weighted(&rows, &weights, &spec.em)?.beta_hat
                }
                EstimatorKind::GridOracle => {
                    let l = validate_eval_matrix(&model.evals(&samples))?;
                    estimate_grid_oracle_with(&l, spec.grid_resolution, Execution::Sequential)?
                        .beta_hat
                }
                EstimatorKind::Bbse => {
                    let m = confusion
                        .ok_or_else(|| Error::Config("bbse needs a confusion matrix".into()))?;
                    estimate_bbse(&predictor_outputs()?, m.values())?.beta
                }
                EstimatorKind::Plugin => estimate_plugin(&predictor_outputs()?)?,
            };
            Ok(beta.l1_distance(beta_star))
        })
        .collect()
}
