//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. Numeric arguments restrict the run
//! to those criteria, e.g. `cargo test --test acceptance -- 3 9`.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use labelshift::distances::{
    check_mixture_sandwich, hellinger, hellinger_vectors, total_variation,
};
use labelshift::harness::{run_study, EstimatorKind, StudyReport, StudySpec, SweepVariable};
use labelshift::likelihood::{estimate_grid_oracle, estimate_mle};
use labelshift::rho::t_statistic;
use labelshift::scenarios::{
    bayes_predictor, change_of_measure_pair, check_calibration, coarsened_bayes_predictor,
    confusion_matrix, population_mlls_argmax, reconstruct_components, source_marginal,
    CalibrationMode, PredictorTable, ScenarioSpec,
};
use labelshift::{
    certify, AlignedComponents, DiscreteDistribution, EmConfig, EvalMatrix, SimplexVector,
    CERTIFICATE_THRESHOLD,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{benchmark_components, random_components, random_simplex, sv};

type Outcome = Result<String, String>;
type CliRun = (Vec<u8>, Vec<(String, Vec<u8>)>);
type Criterion = (usize, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario_evals(
    components: Vec<DiscreteDistribution>,
    beta: SimplexVector,
    n: usize,
    seed: u64,
) -> EvalMatrix {
    let k = components.len();
    let spec = ScenarioSpec::new(components, beta, SimplexVector::uniform(k), n, seed).unwrap();
    EvalMatrix::from_rows(&spec.generate().unwrap().evals).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for instance in 0..50u64 {
        let k = if instance % 2 == 0 { 2 } else { 3 };
        let m = if k == 2 { rng.gen_range(2..=5) } else { 4 };
        let n = rng.gen_range(20..=200);
        let components = random_components(&mut rng, k, m, 0.0);
        let beta = random_simplex(&mut rng, k);
        let l = scenario_evals(components, beta, n, 1000 + instance);
        let em = estimate_mle(&l, &EmConfig::default()).map_err(|e| e.to_string())?;
        let grid = estimate_grid_oracle(&l, 1e-4).map_err(|e| e.to_string())?;
        let gap = em.beta_hat.l1_distance(&grid.beta_hat);
        worst = worst.max(gap / (k as f64 * 1e-4 + 1e-6));
        ensure(gap <= k as f64 * 1e-4 + 1e-6, || {
            format!(
                "instance {instance} (k={k}, n={n}): EM {:?} vs grid {:?}, l1 {gap:e}",
                em.beta_hat, grid.beta_hat
            )
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}, limit 60 s")
    })?;
    Ok(format!(
        "50 instances, worst gap {worst:.3} of tolerance, {elapsed:.1?}"
    ))
}

/// Lattice points of the simplex at resolution `1/steps`.
fn lattice(k: usize, steps: usize) -> Vec<Vec<f64>> {
    match k {
        2 => (0..=steps)
            .map(|i| vec![i as f64 / steps as f64, (steps - i) as f64 / steps as f64])
            .collect(),
        3 => {
            let mut out = Vec::new();
            for i in 0..=steps {
                for j in 0..=steps - i {
                    out.push(vec![
                        i as f64 / steps as f64,
                        j as f64 / steps as f64,
                        (steps - i - j) as f64 / steps as f64,
                    ]);
                }
            }
            out
        }
        _ => unreachable!("grid search covers k <= 3"),
    }
}

fn t_at(l: &EvalMatrix, beta: &SimplexVector, point: &[f64]) -> f64 {
    let b2 = SimplexVector::with_tolerance(point.to_vec(), 1e-9).unwrap();
    t_statistic(l, beta, &b2).unwrap()
}

/// `sup_β' T(L, β, β')` by lattice search; k = 3 refines a coarse optimum.
fn upsilon_grid(l: &EvalMatrix, beta: &SimplexVector) -> f64 {
    let k = l.k();
    let coarse = if k == 2 { 10_000 } else { 1_000 };
    let (mut best, mut best_pt) = (f64::NEG_INFINITY, Vec::new());
    for p in lattice(k, coarse) {
        let v = t_at(l, beta, &p);
        if v > best {
            best = v;
            best_pt = p;
        }
    }
    if k == 3 {
        let (h, half) = (1e-5, 200i64);
        let centre = best_pt.clone();
        for di in -half..=half {
            for dj in -half..=half {
                let a = centre[0] + di as f64 * h;
                let b = centre[1] + dj as f64 * h;
                let c = 1.0 - a - b;
                if a < 0.0 || b < 0.0 || c < -1e-12 {
                    continue;
                }
                let v = t_at(l, beta, &[a, b, c.max(0.0)]);
                best = best.max(v);
            }
        }
    }
    best
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_upsilon: f64 = f64::NEG_INFINITY;
    let mut max_gap: f64 = 0.0;
    let mut compared = 0;
    for instance in 0..100u64 {
        let k = 2 + (instance % 3) as usize;
        let m = rng.gen_range(k..=k + 3);
        let n = rng.gen_range(20..=200);
        let components = random_components(&mut rng, k, m, 0.0);
        let beta_star = random_simplex(&mut rng, k);
        let other = random_simplex(&mut rng, k);
        let l = scenario_evals(components, beta_star, n, 2000 + instance);
        let mle = estimate_mle(&l, &EmConfig::default()).map_err(|e| e.to_string())?;
        let report = certify(&l, &mle.beta_hat).map_err(|e| e.to_string())?;
        max_upsilon = max_upsilon.max(report.upsilon);
        ensure(report.upsilon < CERTIFICATE_THRESHOLD, || {
            format!(
                "instance {instance} (k={k}, n={n}): Υ = {} at the MLE",
                report.upsilon
            )
        })?;
        if k <= 3 && n <= 100 {
            for beta in [&mle.beta_hat, &other] {
                let ascent = certify(&l, beta).map_err(|e| e.to_string())?.upsilon;
                let grid = upsilon_grid(&l, beta);
                let gap = (ascent - grid).abs();
                max_gap = max_gap.max(gap);
                compared += 1;
                ensure(gap <= 1e-3, || {
                    format!("instance {instance} (k={k}, n={n}) at {beta:?}: ascent {ascent} vs grid {grid}")
                })?;
            }
        }
    }
    Ok(format!("max Υ at the MLE {max_upsilon:.4} < {CERTIFICATE_THRESHOLD}; {compared} ascent/grid pairs, max gap {max_gap:.2e}"))
}

fn benchmark_scenario(n: usize, seed: u64) -> ScenarioSpec {
    ScenarioSpec::new(
        benchmark_components(),
        sv(&[0.6, 0.3, 0.1]),
        SimplexVector::uniform(3),
        n,
        seed,
    )
    .unwrap()
}

fn study(spec: StudySpec) -> Result<StudyReport, String> {
    run_study(&spec).map_err(|e| e.to_string())
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let spec = StudySpec::new(
        benchmark_scenario(100, 3),
        SweepVariable::N,
        vec![100.0, 316.0, 1000.0, 3162.0, 10000.0],
        200,
        vec![EstimatorKind::Mle],
    );
    let report = study(spec)?;
    let fit = report.fit_for(EstimatorKind::Mle).ok_or("no rate fit")?;
    let elapsed = start.elapsed();
    let medians: Vec<String> = report
        .points
        .iter()
        .map(|p| format!("{:.4}", p.median_l1))
        .collect();
    ensure((-0.65..=-0.35).contains(&fit.slope), || {
        format!("slope {:.4} outside [-0.65, -0.35]", fit.slope)
    })?;
    ensure(elapsed < Duration::from_secs(600), || {
        format!("took {elapsed:?}, limit 10 min")
    })?;
    Ok(format!(
        "slope {:.4}, medians [{}], {elapsed:.1?}",
        fit.slope,
        medians.join(", ")
    ))
}

fn criterion_4() -> Outcome {
    let mut base = benchmark_scenario(5000, 4);
    base.contaminant = Some(DiscreteDistribution::point_mass(3));
    let spec = StudySpec::new(
        base,
        SweepVariable::ContaminationRate,
        vec![0.0, 0.01, 0.05, 0.1],
        200,
        vec![EstimatorKind::Mle, EstimatorKind::Plugin],
    );
    let report = study(spec)?;
    let mle: Vec<_> = report.points_for(EstimatorKind::Mle).collect();
    let sq: Vec<f64> = mle.iter().map(|p| p.median_sq_l1).collect();
    ensure(sq.windows(2).all(|w| w[0] <= w[1]), || {
        format!("median squared errors not nondecreasing: {sq:?}")
    })?;

    // Tightest line a·λ0 + b through the first point lying above every point.
    let b = sq[0];
    let a = mle
        .iter()
        .skip(1)
        .map(|p| (p.median_sq_l1 - b) / p.sweep_value)
        .fold(0.0, f64::max);
    ensure(a.is_finite(), || "envelope slope is not finite".into())?;
    ensure(
        mle.iter()
            .all(|p| p.median_sq_l1 <= a * p.sweep_value + b + 1e-15),
        || "envelope misses a point".into(),
    )?;
    let ols = report.fit_for(EstimatorKind::Mle).ok_or("no linear fit")?;

    let plugin = report
        .points_for(EstimatorKind::Plugin)
        .find(|p| p.sweep_value == 0.1)
        .ok_or("no plug-in point")?;
    let at_top = mle.last().unwrap();
    ensure(at_top.median_l1 < plugin.median_l1, || {
        format!(
            "MLE median {} not below plug-in {} at λ0 = 0.1",
            at_top.median_l1, plugin.median_l1
        )
    })?;
    let at_001 = mle[1].median_sq_l1;
    let within3 = at_001 <= 3.0 * (a * 0.01 + b);
    Ok(format!(
        "median sq {sq:.5?}; envelope a = {a:.4}, b = {b:.2e}; OLS slope {:.4}; MLE {:.4} < plug-in {:.4} at 0.1; \
         λ0 = 0.01 within 3x of envelope: {within3}",
        ols.slope, at_top.median_l1, plugin.median_l1
    ))
}

fn criterion_5() -> Outcome {
    let base = benchmark_scenario(5000, 5);
    let mut worst: Option<(usize, f64, f64, f64)> = None;
    for atom in 0..base.m {
        let mut s = base.clone();
        s.outlier_distribution = Some(DiscreteDistribution::point_mass(atom));
        let spec = StudySpec::new(
            s,
            SweepVariable::OutlierFraction,
            vec![0.0, 0.05],
            200,
            vec![EstimatorKind::Mle],
        );
        let report = study(spec)?;
        let pts: Vec<_> = report.points_for(EstimatorKind::Mle).collect();
        let shift = (pts[1].median_l1 - pts[0].median_l1).abs();
        let c = pts[0].c.ok_or("no separation constant")?;
        let envelope = (0.05 / c).sqrt();
        ensure(shift <= envelope, || {
            format!("outliers at atom {atom} shift the median by {shift}, envelope {envelope}")
        })?;
        if worst.is_none_or(|w| shift > w.1) {
            worst = Some((atom, shift, envelope, pts[0].delta_star.unwrap_or(f64::NAN)));
        }
    }
    let (atom, shift, envelope, delta) = worst.unwrap();
    Ok(format!("worst atom {atom}: median shift {shift:.4} <= sqrt(0.05/C) = {envelope:.4} (Δ* = {delta:.4})"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut tightest_lower: f64 = f64::INFINITY;
    for instance in 0..1000 {
        let k = rng.gen_range(2..=4);
        let m = rng.gen_range(2..=6);
        let components = random_components(&mut rng, k, m, 0.3);
        let beta = random_simplex(&mut rng, k);
        let beta2 = random_simplex(&mut rng, k);
        let r = check_mixture_sandwich(&components, &beta, &beta2).map_err(|e| e.to_string())?;
        ensure(r.holds, || {
            format!("instance {instance}: sandwich violated {r:?}")
        })?;
        if r.lower_bound > 0.0 {
            tightest_lower = tightest_lower.min(r.hellinger - r.lower_bound);
        }

        // Upper bound with perturbed components.
        let perturbed = random_components(&mut rng, k, m, 0.3);
        let eps: f64 = rng.gen();
        let shifted: Vec<DiscreteDistribution> = components
            .iter()
            .zip(&perturbed)
            .map(|(f, g)| DiscreteDistribution::mixture(&[1.0 - eps, eps], &[f, g]).unwrap())
            .collect();
        let all: Vec<&DiscreteDistribution> = components.iter().chain(&shifted).collect();
        let aligned = AlignedComponents::from_refs(&all).unwrap();
        let p = mix_of(&aligned, &beta, 0);
        let q = mix_of(&aligned, &beta2, k);
        let h = hellinger_vectors(&p, &q).unwrap();
        let drift = components
            .iter()
            .zip(&shifted)
            .map(|(f, g)| hellinger(f, g))
            .fold(0.0, f64::max);
        let bound = hellinger_vectors(beta.as_slice(), beta2.as_slice()).unwrap() + drift;
        ensure(h <= bound + 1e-12, || {
            format!("instance {instance}: perturbed upper bound violated, {h} > {bound}")
        })?;

        for (a, b) in [
            (&components[0], &components[k - 1]),
            (&shifted[0], &components[0]),
        ] {
            let (h, tv) = (hellinger(a, b), total_variation(a, b));
            ensure(std::f64::consts::SQRT_2 * h >= tv - 1e-12, || {
                format!(
                    "instance {instance}: √2·h = {} < TV = {tv}",
                    std::f64::consts::SQRT_2 * h
                )
            })?;
        }
        let (hm, tvm) = (
            hellinger_vectors(&p, &q).unwrap(),
            labelshift::distances::total_variation_vectors(&p, &q).unwrap(),
        );
        ensure(std::f64::consts::SQRT_2 * hm >= tvm - 1e-12, || {
            format!("instance {instance}: √2·h < TV on mixtures")
        })?;
    }
    Ok(format!(
        "1000 instances, zero violations; smallest lower-bound slack {tightest_lower:.2e}"
    ))
}

/// Mixture with `beta` over the aligned components `offset..offset + k`.
fn mix_of(aligned: &AlignedComponents, beta: &SimplexVector, offset: usize) -> Vec<f64> {
    let mut w = vec![0.0; aligned.k()];
    w[offset..offset + beta.len()].copy_from_slice(beta.as_slice());
    aligned.mix(&w)
}

fn random_phi(rng: &mut ChaCha8Rng, k: usize) -> impl Fn(&[f64]) -> f64 {
    let coef: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.5..8.0),
                rng.gen_range(0.0..6.3),
            )
        })
        .collect();
    let quad: f64 = rng.gen_range(-1.0..1.0);
    move |f: &[f64]| {
        coef.iter()
            .zip(f)
            .map(|((a, w, s), x)| a * (w * x + s).sin())
            .sum::<f64>()
            + quad * f[0] * f[f.len() - 1]
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut track = |v: f64, what: &str, instance: usize| -> Result<(), String> {
        worst = worst.max(v);
        ensure(v <= 1e-9, || {
            format!("instance {instance}: {what} off by {v:e}")
        })
    };
    for instance in 0..50 {
        let k = rng.gen_range(2..=4);
        let m = rng.gen_range(k..=k + 4);
        let components = random_components(&mut rng, k, m, 0.2);
        let alpha = random_simplex(&mut rng, k);
        let bayes = bayes_predictor(&components, &alpha).map_err(|e| e.to_string())?;

        let p_alpha = source_marginal(&components, &alpha).map_err(|e| e.to_string())?;
        let rebuilt =
            reconstruct_components(&bayes, &p_alpha, &alpha).map_err(|e| e.to_string())?;
        for (q, r) in components.iter().zip(&rebuilt) {
            let err = q
                .atoms()
                .iter()
                .chain(r.atoms())
                .map(|&a| (q.prob(a) - r.prob(a)).abs())
                .fold(0.0, f64::max);
            track(err, "component round trip", instance)?;
        }

        let random_rows: Vec<Option<Vec<f64>>> = bayes
            .atoms()
            .iter()
            .map(|_| Some(random_simplex(&mut rng, k).into_inner()))
            .collect();
        let arbitrary = PredictorTable::new(k, bayes.atoms().to_vec(), random_rows)
            .map_err(|e| e.to_string())?;
        let constant =
            PredictorTable::constant(bayes.atoms().to_vec(), &alpha).map_err(|e| e.to_string())?;
        for table in [&bayes, &arbitrary, &constant] {
            let m = confusion_matrix(table, &components).map_err(|e| e.to_string())?;
            let err = m
                .column_sums()
                .iter()
                .map(|s| (s - 1.0).abs())
                .fold(0.0, f64::max);
            track(err, "confusion column sum", instance)?;
        }

        let m = confusion_matrix(&bayes, &components).map_err(|e| e.to_string())?;
        let err = m
            .apply(alpha.as_slice())
            .iter()
            .zip(alpha.iter())
            .map(|(x, a)| (x - a).abs())
            .fold(0.0, f64::max);
        track(err, "α = Mα", instance)?;

        for table in [&bayes, &constant] {
            for mode in [CalibrationMode::Canonical, CalibrationMode::Marginal] {
                let r = check_calibration(table, &components, &alpha, mode)
                    .map_err(|e| e.to_string())?;
                track(r.max_gap, "calibration gap", instance)?;
            }
        }

        let beta_star = random_simplex(&mut rng, k);
        for _ in 0..20 {
            let phi = random_phi(&mut rng, k);
            let (lhs, rhs) = change_of_measure_pair(&bayes, &components, &alpha, &beta_star, &phi)
                .map_err(|e| e.to_string())?;
            track((lhs - rhs).abs(), "change of measure", instance)?;
        }
    }
    Ok(format!("50 instances, largest deviation {worst:.2e}"))
}

/// `E_{P*}[log Σ_j β_j f_j / α_j]`, evaluated directly.
fn population_objective(
    table: &PredictorTable,
    components: &[DiscreteDistribution],
    alpha: &SimplexVector,
    beta_star: &[f64],
    beta: &[f64],
) -> f64 {
    table
        .atoms()
        .iter()
        .map(|&a| {
            let p: f64 = components
                .iter()
                .zip(beta_star)
                .map(|(q, b)| b * q.prob(a))
                .sum();
            if p == 0.0 {
                return 0.0;
            }
            let f = table.row(a).unwrap();
            p * f
                .iter()
                .zip(alpha.iter())
                .zip(beta)
                .map(|((fi, al), b)| b * fi / al)
                .sum::<f64>()
                .ln()
        })
        .sum()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for instance in 0..40 {
        let k = rng.gen_range(2..=4);
        let m = k + 3;
        let components = random_components(&mut rng, k, m, 0.0);
        let alpha = random_simplex(&mut rng, k);
        let beta_star = random_simplex(&mut rng, k);
        let bayes = bayes_predictor(&components, &alpha).map_err(|e| e.to_string())?;
        let coarse =
            coarsened_bayes_predictor(&components, &alpha, &[0, 1]).map_err(|e| e.to_string())?;
        ensure(
            coarse.row(0) != bayes.row(0) || coarse.row(1) != bayes.row(1),
            || "coarsening left the Bayes predictor unchanged".into(),
        )?;
        for (name, table) in [("bayes", &bayes), ("coarsened", &coarse)] {
            let r = population_mlls_argmax(table, &components, &alpha, &beta_star)
                .map_err(|e| e.to_string())?;
            ensure(r.identifiable, || {
                format!("instance {instance}: {name} predictor not identifiable")
            })?;
            let err = r.beta.l1_distance(&beta_star);
            worst = worst.max(err);
            ensure(err <= 1e-8, || {
                format!(
                    "instance {instance}: {name} argmax {:?} vs β* {beta_star:?}, l1 {err:e}",
                    r.beta
                )
            })?;
            checked += 1;

            if k == 2 {
                // Independent check: no lattice point beats β* on the objective.
                let at_star = population_objective(
                    table,
                    &components,
                    &alpha,
                    beta_star.as_slice(),
                    beta_star.as_slice(),
                );
                for p in lattice(2, 10_000) {
                    let v =
                        population_objective(table, &components, &alpha, beta_star.as_slice(), &p);
                    ensure(v <= at_star + 1e-12, || {
                        format!("instance {instance}: lattice point {p:?} beats β*")
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "{checked} argmax runs (Bayes and coarsened), worst l1 {worst:.2e}"
    ))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_labelshift")
}

/// Runs the CLI in `dir`; returns stdout and every file under `out`, sorted.
fn run_cli(dir: &Path, args: &[&str]) -> Result<CliRun, String> {
    let output = Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(output.status.success(), || {
        format!(
            "{args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        )
    })?;
    let mut files = Vec::new();
    let out = dir.join("out");
    if out.is_dir() {
        for entry in std::fs::read_dir(&out).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            files.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).map_err(|e| e.to_string())?,
            ));
        }
    }
    files.sort();
    Ok((output.stdout, files))
}

fn criterion_9() -> Outcome {
    let mut scenario = benchmark_scenario(300, 9);
    scenario.contamination_rate = 0.05;
    scenario.contaminant = Some(DiscreteDistribution::point_mass(2));
    let study_spec = StudySpec::new(
        benchmark_scenario(200, 9),
        SweepVariable::N,
        vec![100.0, 200.0, 400.0],
        20,
        vec![
            EstimatorKind::Mle,
            EstimatorKind::Bbse,
            EstimatorKind::GridOracle,
            EstimatorKind::Plugin,
        ],
    );
    let components = benchmark_components();
    let distances =
        serde_json::json!({ "p": components[0], "q": components[1], "components": components });

    let inputs: Vec<(&str, String)> = vec![
        (
            "scenario.json",
            serde_json::to_string_pretty(&scenario).unwrap(),
        ),
        (
            "study.json",
            serde_json::to_string_pretty(&study_spec).unwrap(),
        ),
        (
            "distances.json",
            serde_json::to_string_pretty(&distances).unwrap(),
        ),
        ("p.json", serde_json::to_string(&components[0]).unwrap()),
        ("q.json", serde_json::to_string(&components[2]).unwrap()),
    ];
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "simulate",
            "--spec",
            "scenario.json",
            "--out",
            "out",
            "--seed",
            "17",
        ],
        vec![
            "estimate",
            "--mode",
            "evals",
            "--input",
            "fixture/evals.csv",
            "--certify",
        ],
        vec![
            "estimate",
            "--mode",
            "predictor",
            "--input",
            "fixture/predictor.csv",
            "--alpha",
            "0.3333333333333333,0.3333333333333333,0.3333333333333334",
        ],
        vec![
            "certify",
            "--evals",
            "fixture/evals.csv",
            "--beta",
            "0.5,0.3,0.2",
        ],
        vec!["distances", "--spec", "distances.json"],
        vec!["distances", "p.json", "q.json"],
        vec![
            "study",
            "--spec",
            "study.json",
            "--out",
            "out",
            "--seed",
            "5",
        ],
        vec![
            "study",
            "--spec",
            "study.json",
            "--out",
            "out",
            "--threads",
            "1",
        ],
    ];

    let mut names = Vec::new();
    for cmd in &commands {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            for (name, body) in &inputs {
                std::fs::write(dir.path().join(name), body).map_err(|e| e.to_string())?;
            }
            let fixture = dir.path().join("fixture");
            std::fs::create_dir(&fixture).map_err(|e| e.to_string())?;
            let data = scenario.generate().map_err(|e| e.to_string())?;
            labelshift::eval::write_table(
                std::fs::File::create(fixture.join("evals.csv")).unwrap(),
                data.evals.iter().map(Vec::as_slice),
            )
            .map_err(|e| e.to_string())?;
            let f = data.predictor_outputs.ok_or("predictor undefined")?;
            labelshift::eval::write_table(
                std::fs::File::create(fixture.join("predictor.csv")).unwrap(),
                f.iter().map(Vec::as_slice),
            )
            .map_err(|e| e.to_string())?;
            runs.push(run_cli(dir.path(), cmd)?);
        }
        ensure(runs[0] == runs[1], || {
            format!("{cmd:?} is not reproducible")
        })?;
        ensure(!runs[0].0.is_empty(), || format!("{cmd:?} printed nothing"))?;
        names.push(format!("{}({} files)", cmd[0], runs[0].1.len()));
    }
    Ok(format!("byte-identical reruns: {}", names.join(", ")))
}

fn main() {
    let filters: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [Criterion; 9] = [
        (1, "EM matches the grid oracle", criterion_1),
        (2, "certificate of the MLE", criterion_2),
        (3, "convergence rate", criterion_3),
        (4, "contamination robustness", criterion_4),
        (5, "outlier robustness", criterion_5),
        (6, "inequality suites", criterion_6),
        (7, "finite-space identities", criterion_7),
        (8, "population argmax", criterion_8),
        (9, "CLI determinism", criterion_9),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {id} PASS: {name}: {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} FAIL: {name}: {detail} [{elapsed:.1?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
