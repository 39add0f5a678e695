//! Exact distribution geometry on finite spaces: Hellinger and total
//! variation distances, the separation constant Δ* between convex hulls of
//! complementary component subsets, and the mixture sandwich check
//!
//! ```text
//! Δ*/(2√2) · ||β − β'||_1  ≤  h(P_β, P_β')  ≤  h(β, β') + max_i h(F_i, F'_i)
//! ```

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::distribution::{AlignedComponents, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::simplex::{project_raw, SimplexVector};

/// Largest number of components accepted by [`delta_star`].
pub const MAX_SEPARATION_COMPONENTS: usize = 12;
/// Lattice step of the grid cross-check in exact mode.
pub const GRID_RESOLUTION: f64 = 1e-3;
/// Grid cross-checks are skipped for subsets whose lattice exceeds this many points.
pub const GRID_POINT_BUDGET: usize = 20_000;
/// Disagreement between the LP value and the grid value that gets flagged.
pub const GRID_DISAGREEMENT: f64 = 1e-3;

/// Hellinger distance between two distributions, laid out on the union of
/// their supports.
pub fn hellinger(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let al = AlignedComponents::from_refs(&[p, q])
        .expect("union universe always contains both supports");
    hellinger_dense(&al.densities[0], &al.densities[1])
}

/// Hellinger distance between two probability vectors on the same universe.
pub fn hellinger_vectors(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(hellinger_dense(p, q))
}

pub fn total_variation(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let al = AlignedComponents::from_refs(&[p, q])
        .expect("union universe always contains both supports");
    tv_dense(&al.densities[0], &al.densities[1])
}

pub fn total_variation_vectors(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(tv_dense(p, q))
}

/// Hellinger distance between weight vectors seen as distributions on `[k]`.
pub fn hellinger_weights(w: &SimplexVector, w2: &SimplexVector) -> Result<f64> {
    hellinger_vectors(w.as_slice(), w2.as_slice())
}

pub(crate) fn hellinger_dense(p: &[f64], q: &[f64]) -> f64 {
    let sq: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    (0.5 * sq).sqrt().min(1.0)
}

pub(crate) fn tv_dense(p: &[f64], q: &[f64]) -> f64 {
    (0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()).min(1.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationMethod {
    #[default]
    Exact,
    QpLowerBound,
}

/// Minimizer of the separation problem over subset splits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationResult {
    pub delta_star: f64,
    pub method: SeparationMethod,
    /// The subset `I`, zero-based and ascending.
    pub argmin_subset: Vec<usize>,
    pub argmin_gamma: SimplexVector,
    pub argmin_lambda: SimplexVector,
    /// `min ||Σ γ_i f_i − Σ λ_i f_i||²_2 / (2M)` with `M` the largest density value.
    pub lower_bound_l2: f64,
    /// Whether at least one subset was cross-checked against the lattice.
    pub grid_checked: bool,
    /// Set when the LP and the lattice disagree by more than [`GRID_DISAGREEMENT`].
    pub grid_disagreement: bool,
}

/// Δ*(F_1, …, F_k) by exhaustive enumeration of subset splits.
pub fn delta_star(
    components: &[DiscreteDistribution],
    method: SeparationMethod,
) -> Result<SeparationResult> {
    delta_star_with(components, method, Execution::default())
}

pub fn delta_star_with(
    components: &[DiscreteDistribution],
    method: SeparationMethod,
    exec: Execution,
) -> Result<SeparationResult> {
    let k = components.len();
    if !(2..=MAX_SEPARATION_COMPONENTS).contains(&k) {
        return Err(Error::UnsupportedSize(format!(
            "separation needs between 2 and {MAX_SEPARATION_COMPONENTS} components, got {k}"
        )));
    }
    let aligned = AlignedComponents::new(components)?;
    delta_star_aligned(&aligned, method, exec)
}

pub(crate) fn delta_star_aligned(
    aligned: &AlignedComponents,
    method: SeparationMethod,
    exec: Execution,
) -> Result<SeparationResult> {
    let k = aligned.k();
    if !(2..=MAX_SEPARATION_COMPONENTS).contains(&k) {
        return Err(Error::UnsupportedSize(format!(
            "separation needs 2..={MAX_SEPARATION_COMPONENTS} components"
        )));
    }
    let max_density = aligned
        .densities
        .iter()
        .flatten()
        .cloned()
        .fold(0.0, f64::max);

    // TV and the L2 objective are symmetric in (I, I^c); masks without the top
    // bit cover every unordered split and are the smaller mask of each pair.
    let half = 1usize << (k - 1);
    let splits = map_indexed(exec, half - 1, |idx| {
        let mask = idx + 1;
        let split = Split::new(aligned, mask);
        let exact = match method {
            SeparationMethod::Exact => Some(split.solve_tv()),
            SeparationMethod::QpLowerBound => None,
        };
        let qp = split.solve_l2();
        (mask, exact, qp)
    });

    let mut best: Option<(usize, f64, Vec<f64>, Vec<f64>)> = None;
    let mut best_l2 = f64::INFINITY;
    let mut grid_checked = false;
    let mut grid_disagreement = false;
    for (mask, exact, qp) in splits {
        let (qp_value, qp_gamma, qp_lambda) = qp;
        best_l2 = best_l2.min(qp_value);
        let candidate = match exact {
            Some(solved) => {
                let solved = solved?;
                grid_checked |= solved.grid_checked;
                grid_disagreement |= solved.disagreement;
                (solved.value, solved.gamma, solved.lambda)
            }
            None => (qp_value / (2.0 * max_density), qp_gamma, qp_lambda),
        };
        if best.as_ref().is_none_or(|b| candidate.0 < b.1) {
            best = Some((mask, candidate.0, candidate.1, candidate.2));
        }
    }
    let (mask, value, gamma, lambda) = best.expect("k >= 2 yields at least one split");
    Ok(SeparationResult {
        delta_star: value.clamp(0.0, 1.0),
        method,
        argmin_subset: (0..k).filter(|i| mask >> i & 1 == 1).collect(),
        argmin_gamma: SimplexVector::normalize(gamma)?,
        argmin_lambda: SimplexVector::normalize(lambda)?,
        lower_bound_l2: (best_l2 / (2.0 * max_density)).max(0.0),
        grid_checked,
        grid_disagreement,
    })
}

struct Split<'a> {
    inside: Vec<&'a [f64]>,
    outside: Vec<&'a [f64]>,
    m: usize,
}

struct TvSolution {
    value: f64,
    gamma: Vec<f64>,
    lambda: Vec<f64>,
    grid_checked: bool,
    disagreement: bool,
}

impl<'a> Split<'a> {
    fn new(aligned: &'a AlignedComponents, mask: usize) -> Self {
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for (j, dens) in aligned.densities.iter().enumerate() {
            if mask >> j & 1 == 1 {
                inside.push(dens.as_slice());
            } else {
                outside.push(dens.as_slice());
            }
        }
        Split {
            inside,
            outside,
            m: aligned.m(),
        }
    }

    fn difference(&self, gamma: &[f64], lambda: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.m];
        for (w, d) in gamma.iter().zip(&self.inside) {
            for (ga, da) in g.iter_mut().zip(d.iter()) {
                *ga += w * da;
            }
        }
        for (w, d) in lambda.iter().zip(&self.outside) {
            for (ga, da) in g.iter_mut().zip(d.iter()) {
                *ga -= w * da;
            }
        }
        g
    }

    fn tv(&self, gamma: &[f64], lambda: &[f64]) -> f64 {
        0.5 * self
            .difference(gamma, lambda)
            .iter()
            .map(|x| x.abs())
            .sum::<f64>()
    }

    /// The inner problem is a linear program in (γ, λ, t) with `t_a ≥ |g_a|`.
    fn solve_tv(&self) -> Result<TvSolution> {
        let lp = self.solve_tv_lp();
        let grid_size = lattice_size(self.inside.len(), GRID_RESOLUTION)
            .saturating_mul(lattice_size(self.outside.len(), GRID_RESOLUTION));
        let grid = (grid_size <= GRID_POINT_BUDGET || lp.is_none())
            .then(|| self.solve_tv_grid(GRID_RESOLUTION));
        match (lp, grid) {
            (Some(lp), None) => Ok(TvSolution {
                value: lp.0,
                gamma: lp.1,
                lambda: lp.2,
                grid_checked: false,
                disagreement: false,
            }),
            (Some(lp), Some(grid)) => {
                let disagreement = (lp.0 - grid.0).abs() > GRID_DISAGREEMENT;
                let (value, gamma, lambda) = if grid.0 < lp.0 { grid } else { lp };
                Ok(TvSolution {
                    value,
                    gamma,
                    lambda,
                    grid_checked: true,
                    disagreement,
                })
            }
            (None, Some(grid)) => Ok(TvSolution {
                value: grid.0,
                gamma: grid.1,
                lambda: grid.2,
                grid_checked: true,
                disagreement: true,
            }),
            (None, None) => Err(Error::Numerical(format!(
                "separation LP failed and the lattice ({grid_size} points) is too large to search"
            ))),
        }
    }

    fn solve_tv_lp(&self) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let gamma: Vec<_> = self
            .inside
            .iter()
            .map(|_| problem.add_var(0.0, (0.0, 1.0)))
            .collect();
        let lambda: Vec<_> = self
            .outside
            .iter()
            .map(|_| problem.add_var(0.0, (0.0, 1.0)))
            .collect();
        let slack: Vec<_> = (0..self.m)
            .map(|_| problem.add_var(0.5, (0.0, f64::INFINITY)))
            .collect();
        problem.add_constraint(gamma.iter().map(|&v| (v, 1.0)), ComparisonOp::Eq, 1.0);
        problem.add_constraint(lambda.iter().map(|&v| (v, 1.0)), ComparisonOp::Eq, 1.0);
        for a in 0..self.m {
            let terms = |sign: f64| {
                let mut t = vec![(slack[a], 1.0)];
                t.extend(
                    gamma
                        .iter()
                        .zip(&self.inside)
                        .map(|(&v, d)| (v, -sign * d[a])),
                );
                t.extend(
                    lambda
                        .iter()
                        .zip(&self.outside)
                        .map(|(&v, d)| (v, sign * d[a])),
                );
                t
            };
            problem.add_constraint(terms(1.0), ComparisonOp::Ge, 0.0);
            problem.add_constraint(terms(-1.0), ComparisonOp::Ge, 0.0);
        }
        let solution = problem.solve().ok()?;
        let g = project_raw(&gamma.iter().map(|&v| solution[v]).collect::<Vec<_>>());
        let l = project_raw(&lambda.iter().map(|&v| solution[v]).collect::<Vec<_>>());
        // Re-evaluate at the feasible point rather than trusting the solver's objective.
        Some((self.tv(&g, &l), g, l))
    }

    fn solve_tv_grid(&self, resolution: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let inner = lattice_points(self.inside.len(), resolution);
        let outer = lattice_points(self.outside.len(), resolution);
        let mut best = (f64::INFINITY, Vec::new(), Vec::new());
        for g in &inner {
            for l in &outer {
                let v = self.tv(g, l);
                if v < best.0 {
                    best = (v, g.clone(), l.clone());
                }
            }
        }
        best
    }

    /// Minimizes `||Σ γ_i f_i − Σ λ_i f_i||²_2` by accelerated projected
    /// gradient with adaptive restart; returns (value, γ, λ).
    fn solve_l2(&self) -> (f64, Vec<f64>, Vec<f64>) {
        let p = self.inside.len();
        let q = self.outside.len();
        let columns: Vec<&[f64]> = self.inside.iter().chain(&self.outside).copied().collect();
        let signs: Vec<f64> = (0..p + q).map(|j| if j < p { 1.0 } else { -1.0 }).collect();
        // Lipschitz constant of the gradient: 2·||G||², bounded by the Frobenius norm.
        let lipschitz = 2.0
            * columns
                .iter()
                .flat_map(|c| c.iter())
                .map(|v| v * v)
                .sum::<f64>();
        if lipschitz == 0.0 {
            return (0.0, vec![1.0 / p as f64; p], vec![1.0 / q as f64; q]);
        }
        let objective = |x: &[f64]| -> (f64, Vec<f64>) {
            let mut g = vec![0.0; self.m];
            for ((c, s), xv) in columns.iter().zip(&signs).zip(x) {
                for (ga, ca) in g.iter_mut().zip(c.iter()) {
                    *ga += s * xv * ca;
                }
            }
            let value = g.iter().map(|v| v * v).sum();
            let grad = columns
                .iter()
                .zip(&signs)
                .map(|(c, s)| 2.0 * s * c.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            (value, grad)
        };
        let project = |x: &[f64]| -> Vec<f64> {
            let mut out = project_raw(&x[..p]);
            out.extend(project_raw(&x[p..]));
            out
        };

        let mut x: Vec<f64> = std::iter::repeat_n(1.0 / p as f64, p)
            .chain(std::iter::repeat_n(1.0 / q as f64, q))
            .collect();
        let mut y = x.clone();
        let mut t = 1.0f64;
        let (mut fx, _) = objective(&x);
        for _ in 0..50_000 {
            let (_, grad) = objective(&y);
            let step: Vec<f64> = y
                .iter()
                .zip(&grad)
                .map(|(yi, gi)| yi - gi / lipschitz)
                .collect();
            let x_next = project(&step);
            let (f_next, _) = objective(&x_next);
            if f_next > fx {
                // Restart momentum from the current iterate.
                y = x.clone();
                t = 1.0;
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = x_next
                .iter()
                .zip(&x)
                .map(|(a, b)| a + beta * (a - b))
                .collect();
            let improvement = fx - f_next;
            x = x_next;
            fx = f_next;
            t = t_next;
            if improvement <= 1e-22 {
                break;
            }
        }
        let lambda = x.split_off(p);
        (fx, x, lambda)
    }
}

/// Number of points of the simplex lattice with `dim` coordinates and the given step.
pub(crate) fn lattice_size(dim: usize, resolution: f64) -> usize {
    let steps = (1.0 / resolution).round() as usize;
    // C(steps + dim - 1, dim - 1)
    let mut acc: u128 = 1;
    for i in 1..dim {
        acc = acc * (steps + i) as u128 / i as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

pub(crate) fn lattice_points(dim: usize, resolution: f64) -> Vec<Vec<f64>> {
    let steps = (1.0 / resolution).round() as usize;
    let mut out = Vec::new();
    let mut counts = vec![0usize; dim];
    fn recurse(
        pos: usize,
        remaining: usize,
        steps: usize,
        counts: &mut Vec<usize>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if pos + 1 == counts.len() {
            counts[pos] = remaining;
            out.push(counts.iter().map(|&c| c as f64 / steps as f64).collect());
            return;
        }
        for c in 0..=remaining {
            counts[pos] = c;
            recurse(pos + 1, remaining - c, steps, counts, out);
        }
    }
    recurse(0, steps, steps, &mut counts, &mut out);
    out
}

/// Values of the two-sided mixture bound for one pair of weight vectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichReport {
    pub hellinger: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub delta_star: f64,
    pub holds: bool,
}

/// Slack allowed for rounding when comparing the bounds.
const SANDWICH_SLACK: f64 = 1e-12;

pub fn check_mixture_sandwich(
    components: &[DiscreteDistribution],
    beta: &SimplexVector,
    beta2: &SimplexVector,
) -> Result<SandwichReport> {
    let aligned = AlignedComponents::new(components)?;
    let separation = delta_star_aligned(&aligned, SeparationMethod::Exact, Execution::Sequential)?;
    sandwich_with_separation(&aligned, separation.delta_star, beta, beta2)
}

pub(crate) fn sandwich_with_separation(
    aligned: &AlignedComponents,
    delta: f64,
    beta: &SimplexVector,
    beta2: &SimplexVector,
) -> Result<SandwichReport> {
    let k = aligned.k();
    for b in [beta, beta2] {
        if b.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: b.len(),
            });
        }
    }
    let p = aligned.mix(beta.as_slice());
    let q = aligned.mix(beta2.as_slice());
    let h = hellinger_dense(&p, &q);
    // Components are shared, so the max_i h(F_i, F'_i) term vanishes.
    let upper = hellinger_dense(beta.as_slice(), beta2.as_slice());
    let lower = delta / (2.0 * std::f64::consts::SQRT_2) * beta.l1_distance(beta2);
    Ok(SandwichReport {
        hellinger: h,
        upper_bound: upper,
        lower_bound: lower,
        delta_star: delta,
        holds: lower <= h + SANDWICH_SLACK && h <= upper + SANDWICH_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::on_range(p.to_vec()).unwrap()
    }

    fn random_dist(rng: &mut impl Rng, m: usize) -> DiscreteDistribution {
        let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        dist(&raw.iter().map(|v| v / s).collect::<Vec<_>>())
    }

    /// Independent evaluation of h² as 1 − Σ √(p q) (the Bhattacharyya form).
    fn hellinger_oracle(p: &[f64], q: &[f64]) -> f64 {
        (1.0 - p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum::<f64>())
            .max(0.0)
            .sqrt()
    }

    #[test]
    fn hellinger_examples() {
        let p = dist(&[0.3, 0.7]);
        assert_eq!(hellinger(&p, &p), 0.0);
        let a = DiscreteDistribution::new(vec![0], vec![1.0]).unwrap();
        let b = DiscreteDistribution::new(vec![1], vec![1.0]).unwrap();
        assert!((hellinger(&a, &b) - 1.0).abs() < 1e-15);
        let expected = (1.0 - 0.5f64.sqrt()).sqrt();
        let h = hellinger(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5]));
        assert!((h - 0.541196).abs() < 1e-6);
        assert!((h - expected).abs() < 1e-15);
        assert!((h - hellinger_oracle(&[1.0, 0.0], &[0.5, 0.5])).abs() < 1e-15);
    }

    #[test]
    fn tv_examples() {
        let p = dist(&[0.7, 0.3]);
        assert_eq!(total_variation(&p, &p), 0.0);
        assert!((total_variation(&p, &dist(&[0.3, 0.7])) - 0.4).abs() < 1e-15);
        let a = DiscreteDistribution::new(vec![0], vec![1.0]).unwrap();
        let b = DiscreteDistribution::new(vec![5], vec![1.0]).unwrap();
        assert_eq!(total_variation(&a, &b), 1.0);
        assert!(total_variation_vectors(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn weight_distance_examples() {
        let w = SimplexVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(hellinger_weights(&w, &w).unwrap(), 0.0);
        let e1 = SimplexVector::vertex(2, 0);
        let e2 = SimplexVector::vertex(2, 1);
        assert!((hellinger_weights(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        assert!((hellinger_weights(&w, &e1).unwrap() - (1.0 - 0.5f64.sqrt()).sqrt()).abs() < 1e-15);
        assert!(hellinger_weights(&w, &SimplexVector::uniform(3)).is_err());
    }

    #[test]
    fn separation_of_disjoint_and_identical_pairs() {
        let a = DiscreteDistribution::new(vec![0], vec![1.0]).unwrap();
        let b = DiscreteDistribution::new(vec![1], vec![1.0]).unwrap();
        let r = delta_star(&[a.clone(), b], SeparationMethod::Exact).unwrap();
        assert!((r.delta_star - 1.0).abs() < 1e-12);
        assert_eq!(r.argmin_subset, vec![0]);
        let r = delta_star(&[a.clone(), a.clone()], SeparationMethod::Exact).unwrap();
        assert!(r.delta_star.abs() < 1e-12);
        let r = delta_star(&[a.clone(), a], SeparationMethod::QpLowerBound).unwrap();
        assert!(r.delta_star.abs() < 1e-12);
    }

    #[test]
    fn separation_size_limits() {
        let a = dist(&[1.0]);
        assert!(matches!(
            delta_star(std::slice::from_ref(&a), SeparationMethod::Exact),
            Err(Error::UnsupportedSize(_))
        ));
        let many = vec![a; 13];
        assert!(matches!(
            delta_star(&many, SeparationMethod::Exact),
            Err(Error::UnsupportedSize(_))
        ));
    }

    /// Exhaustive search over every subset split and a 1e-3 lattice of (γ, λ).
    fn separation_grid_oracle(components: &[Vec<f64>]) -> f64 {
        let k = components.len();
        let m = components[0].len();
        let mut best = f64::INFINITY;
        for mask in 1..(1usize << k) - 1 {
            let inside: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).collect();
            let outside: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 0).collect();
            for g in lattice_points(inside.len(), 1e-3) {
                for l in lattice_points(outside.len(), 1e-3) {
                    let mut tv = 0.0;
                    for a in 0..m {
                        let x: f64 = inside
                            .iter()
                            .zip(&g)
                            .map(|(&j, w)| w * components[j][a])
                            .sum();
                        let y: f64 = outside
                            .iter()
                            .zip(&l)
                            .map(|(&j, w)| w * components[j][a])
                            .sum();
                        tv += (x - y).abs();
                    }
                    best = best.min(0.5 * tv);
                }
            }
        }
        best
    }

    #[test]
    fn separation_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let comps: Vec<DiscreteDistribution> = (0..3).map(|_| random_dist(&mut rng, 5)).collect();
        let dense: Vec<Vec<f64>> = comps.iter().map(|d| d.probs().to_vec()).collect();
        let oracle = separation_grid_oracle(&dense);
        let r = delta_star(&comps, SeparationMethod::Exact).unwrap();
        assert!(
            (r.delta_star - oracle).abs() <= 2e-3,
            "{} vs {}",
            r.delta_star,
            oracle
        );
        assert!(r.delta_star <= oracle + 1e-12);
        assert!(r.grid_checked && !r.grid_disagreement);
        let qp = delta_star(&comps, SeparationMethod::QpLowerBound).unwrap();
        assert!(qp.delta_star <= r.delta_star + 1e-12);
        assert!((qp.delta_star - r.lower_bound_l2).abs() < 1e-15);
    }

    #[test]
    fn dependent_components_have_zero_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_dist(&mut rng, 6);
            let b = random_dist(&mut rng, 6);
            let w: f64 = rng.gen();
            let c = DiscreteDistribution::mixture(&[w, 1.0 - w], &[&a, &b]).unwrap();
            let comps = [a, b, c];
            let r = delta_star(&comps, SeparationMethod::Exact).unwrap();
            assert!(r.delta_star < 1e-8, "{}", r.delta_star);
            assert!(!AlignedComponents::new(&comps)
                .unwrap()
                .is_linearly_independent(1e-8));
        }
    }

    #[test]
    fn sandwich_examples() {
        let a = DiscreteDistribution::new(vec![0], vec![1.0]).unwrap();
        let b = DiscreteDistribution::new(vec![1], vec![1.0]).unwrap();
        let comps = [a, b];
        let beta = SimplexVector::vertex(2, 0);
        let r = check_mixture_sandwich(&comps, &beta, &beta).unwrap();
        assert_eq!((r.hellinger, r.lower_bound, r.upper_bound), (0.0, 0.0, 0.0));
        assert!(r.holds);
        let r = check_mixture_sandwich(&comps, &beta, &SimplexVector::vertex(2, 1)).unwrap();
        assert!((r.hellinger - 1.0).abs() < 1e-12);
        assert!((r.lower_bound - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((r.upper_bound - 1.0).abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn sandwich_holds_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let k = rng.gen_range(2..=4);
            let comps: Vec<_> = (0..k).map(|_| random_dist(&mut rng, 6)).collect();
            let w1 = random_dist(&mut rng, k).probs().to_vec();
            let w2 = random_dist(&mut rng, k).probs().to_vec();
            let r = check_mixture_sandwich(
                &comps,
                &SimplexVector::new(w1).unwrap(),
                &SimplexVector::new(w2).unwrap(),
            )
            .unwrap();
            assert!(r.holds, "{r:?}");
        }
    }

    proptest! {
        #[test]
        fn metric_properties(raw_p in prop::collection::vec(0.0f64..1.0, 6), raw_q in prop::collection::vec(0.0f64..1.0, 6)) {
            prop_assume!(raw_p.iter().sum::<f64>() > 1e-3 && raw_q.iter().sum::<f64>() > 1e-3);
            let p = SimplexVector::normalize(raw_p).unwrap();
            let q = SimplexVector::normalize(raw_q).unwrap();
            let h = hellinger_vectors(p.as_slice(), q.as_slice()).unwrap();
            let tv = total_variation_vectors(p.as_slice(), q.as_slice()).unwrap();
            prop_assert!((0.0..=1.0).contains(&h) && (0.0..=1.0).contains(&tv));
            prop_assert_eq!(h, hellinger_vectors(q.as_slice(), p.as_slice()).unwrap());
            prop_assert_eq!(tv, total_variation_vectors(q.as_slice(), p.as_slice()).unwrap());
            prop_assert!(2f64.sqrt() * h >= tv - 1e-12);
            prop_assert!((h - hellinger_oracle(p.as_slice(), q.as_slice())).abs() < 1e-7);
        }

        #[test]
        fn exact_separation_dominates_qp(seed in 0u64..10_000, k in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let comps: Vec<_> = (0..k).map(|_| random_dist(&mut rng, 6)).collect();
            let exact = delta_star(&comps, SeparationMethod::Exact).unwrap();
            let qp = delta_star(&comps, SeparationMethod::QpLowerBound).unwrap();
            prop_assert!(exact.delta_star + 1e-12 >= qp.delta_star);
            let independent = AlignedComponents::new(&comps).unwrap().is_linearly_independent(1e-8);
            prop_assert_eq!(exact.delta_star > 1e-8, independent);
        }
    }
}
