//! Probability vectors over a finite label set and Euclidean projection onto
//! the probability simplex.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A point of the probability simplex over `k >= 1` labels.
///
/// Construction validates nonnegativity and the unit sum (within
/// [`SIMPLEX_TOLERANCE`]) and then renormalizes, so downstream code can rely
/// on the sum being one up to rounding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values, SIMPLEX_TOLERANCE)?;
        let sum: f64 = values.iter().sum();
        Ok(SimplexVector(values.into_iter().map(|v| v / sum).collect()))
    }

    /// Validates against a caller-chosen tolerance, then renormalizes.
    pub fn with_tolerance(values: Vec<f64>, tolerance: f64) -> Result<Self> {
        check_simplex(&values, tolerance)?;
        let sum: f64 = values.iter().sum();
        Ok(SimplexVector(values.into_iter().map(|v| v / sum).collect()))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "simplex dimension must be at least 1");
        SimplexVector(vec![1.0 / k as f64; k])
    }

    pub fn vertex(k: usize, i: usize) -> Self {
        assert!(i < k, "vertex index out of range");
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        SimplexVector(v)
    }

    /// Normalizes a nonnegative vector with positive sum.
    pub fn normalize(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "cannot normalize: entries must be finite and nonnegative",
            ));
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("cannot normalize a zero vector"));
        }
        Ok(SimplexVector(values.into_iter().map(|v| v / sum).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn l1_distance(&self, other: &SimplexVector) -> f64 {
        l1_distance(&self.0, &other.0)
    }

    /// True when every entry is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }
}

impl Index<usize> for SimplexVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        SimplexVector::new(values)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(s: SimplexVector) -> Vec<f64> {
        s.0
    }
}

impl AsRef<[f64]> for SimplexVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for SimplexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

fn check_simplex(values: &[f64], tolerance: f64) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(
            "simplex vector must have at least one entry",
        ));
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::invalid(format!("entry {i} is not finite")));
        }
        if v < 0.0 {
            return Err(Error::invalid(format!("entry {i} is negative ({v})")));
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > tolerance {
        return Err(Error::invalid(format!("entries sum to {sum}, not 1")));
    }
    Ok(())
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Euclidean projection onto the probability simplex.
///
/// Inputs that already are valid probability vectors are returned unchanged,
/// which makes the projection exactly idempotent.
pub fn simplex_project(v: &[f64]) -> Result<SimplexVector> {
    if v.is_empty() {
        return Err(Error::invalid("cannot project an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(
            "cannot project a vector with non-finite entries",
        ));
    }
    if check_simplex(v, SIMPLEX_TOLERANCE).is_ok() {
        return Ok(SimplexVector(v.to_vec()));
    }
    Ok(SimplexVector(project_raw(v)))
}

/// Sort-based projection without the on-simplex shortcut.
pub(crate) fn project_raw(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // The threshold keeps at least the largest entry, so the sum is positive.
    let sum: f64 = out.iter().sum();
    for x in &mut out {
        *x /= sum;
    }
    out
}
