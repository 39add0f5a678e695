use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::SimplexVector;

/// Opaque atom identifier of a finite covariate space.
pub type Atom = usize;

/// A finitely supported probability distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
    probs: SimplexVector,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    atoms: Vec<Atom>,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        DiscreteDistribution::new(raw.atoms, raw.probs)
    }
}

impl From<DiscreteDistribution> for RawDistribution {
    fn from(d: DiscreteDistribution) -> Self {
        RawDistribution {
            atoms: d.atoms,
            probs: d.probs.into_inner(),
        }
    }
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Atom>, probs: Vec<f64>) -> Result<Self> {
        if atoms.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                found: probs.len(),
            });
        }
        let mut seen = HashSet::with_capacity(atoms.len());
        for &a in &atoms {
            if !seen.insert(a) {
                return Err(Error::invalid(format!("atom {a} appears twice")));
            }
        }
        let probs = SimplexVector::new(probs)?;
        Ok(DiscreteDistribution { atoms, probs })
    }

    /// Distribution on the atoms `0..probs.len()`.
    pub fn on_range(probs: Vec<f64>) -> Result<Self> {
        let atoms = (0..probs.len()).collect();
        DiscreteDistribution::new(atoms, probs)
    }

    pub fn point_mass(atom: Atom) -> Self {
        DiscreteDistribution {
            atoms: vec![atom],
            probs: SimplexVector::uniform(1),
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        self.probs.as_slice()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn prob(&self, atom: Atom) -> f64 {
        self.atoms
            .iter()
            .position(|&a| a == atom)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Atoms with positive mass.
    pub fn support(&self) -> impl Iterator<Item = Atom> + '_ {
        self.atoms
            .iter()
            .zip(self.probs.iter())
            .filter(|(_, &p)| p > 0.0)
            .map(|(&a, _)| a)
    }

    /// Probabilities laid out on `universe`, zero-filled; errors if the
    /// distribution charges an atom outside it.
    pub fn densities_on(&self, universe: &[Atom]) -> Result<Vec<f64>> {
        let index: BTreeMap<Atom, usize> =
            universe.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let mut out = vec![0.0; universe.len()];
        for (&a, &p) in self.atoms.iter().zip(self.probs.iter()) {
            match index.get(&a) {
                Some(&i) => out[i] = p,
                None if p == 0.0 => {}
                None => return Err(Error::invalid(format!("atom {a} is outside the universe"))),
            }
        }
        Ok(out)
    }

    /// Finite mixture `Σ w_i D_i` on the union of the atom sets.
    pub fn mixture(weights: &[f64], dists: &[&DiscreteDistribution]) -> Result<Self> {
        if weights.len() != dists.len() {
            return Err(Error::DimensionMismatch {
                expected: dists.len(),
                found: weights.len(),
            });
        }
        let aligned = AlignedComponents::from_refs(dists)?;
        let probs = aligned.mix(weights);
        DiscreteDistribution::new(aligned.universe, probs)
    }
}

/// Several distributions laid out densely on the union of their atoms.
///
/// `densities[j][a]` is the mass component `j` puts on `universe[a]`; the
/// universe is sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedComponents {
    pub universe: Vec<Atom>,
    pub densities: Vec<Vec<f64>>,
}

impl AlignedComponents {
    pub fn new(dists: &[DiscreteDistribution]) -> Result<Self> {
        let refs: Vec<&DiscreteDistribution> = dists.iter().collect();
        Self::from_refs(&refs)
    }

    pub fn from_refs(dists: &[&DiscreteDistribution]) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::invalid("at least one distribution is required"));
        }
        let mut universe: Vec<Atom> = dists.iter().flat_map(|d| d.atoms.iter().copied()).collect();
        universe.sort_unstable();
        universe.dedup();
        Self::on_universe(dists, universe)
    }

    pub fn on_universe(dists: &[&DiscreteDistribution], universe: Vec<Atom>) -> Result<Self> {
        let densities = dists
            .iter()
            .map(|d| d.densities_on(&universe))
            .collect::<Result<Vec<_>>>()?;
        Ok(AlignedComponents {
            universe,
            densities,
        })
    }

    pub fn k(&self) -> usize {
        self.densities.len()
    }

    pub fn m(&self) -> usize {
        self.universe.len()
    }

    pub fn mix(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for (w, dens) in weights.iter().zip(&self.densities) {
            for (o, d) in out.iter_mut().zip(dens) {
                *o += w * d;
            }
        }
        out
    }

    pub fn index_of(&self, atom: Atom) -> Option<usize> {
        self.universe.binary_search(&atom).ok()
    }

    /// Rank of the m×k density matrix, via singular values relative to the largest.
    pub fn rank(&self, tolerance: f64) -> usize {
        let m = self.m();
        let k = self.k();
        let mat = nalgebra::DMatrix::from_fn(m, k, |a, j| self.densities[j][a]);
        let sv = mat.singular_values();
        let top = sv.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > tolerance * top).count()
    }

    pub fn is_linearly_independent(&self, tolerance: f64) -> bool {
        self.rank(tolerance) == self.k()
    }
}
