use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use labelshift::distances::{delta_star, hellinger, total_variation, SeparationMethod};
use labelshift::eval::{read_table, write_table};
use labelshift::harness::{run_study_with, StudySpec, SCHEMA_VERSION};
use labelshift::likelihood::{estimate_mle, predictor_eval_matrix, EmConfig};
use labelshift::rho::certify_with_threshold;
use labelshift::scenarios::ScenarioSpec;
use labelshift::{
    DiscreteDistribution, Error, EvalMatrix, Execution, Result, SimplexVector,
    CERTIFICATE_THRESHOLD,
};

#[derive(Parser)]
#[command(
    name = "labelshift",
    version,
    about = "Label shift quantification on fixed-component mixtures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Rows are component density evaluations.
    Evals,
    /// Rows are predictor outputs; needs --alpha.
    Predictor,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the target label distribution from a headerless CSV.
    Estimate {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        input: PathBuf,
        /// Source prior, comma separated.
        #[arg(long)]
        alpha: Option<String>,
        /// Also compute the ρ-certificate of the estimate.
        #[arg(long)]
        certify: bool,
        #[arg(long, default_value_t = CERTIFICATE_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Compute Υ for a candidate weight vector.
    Certify {
        #[arg(long)]
        evals: PathBuf,
        /// Candidate weights, comma separated.
        #[arg(long)]
        beta: String,
        #[arg(long, default_value_t = CERTIFICATE_THRESHOLD)]
        threshold: f64,
    },
    /// Draw a scenario and write samples.csv, evals.csv, predictor.csv and truth.json.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hellinger, total variation and Δ* for distributions given as JSON.
    Distances {
        /// JSON object with `p`, `q` and/or `components`.
        #[arg(long, conflicts_with = "files")]
        spec: Option<PathBuf>,
        /// One distribution per file; two files also give h and TV.
        files: Vec<PathBuf>,
    },
    /// Run a Monte Carlo study and write report.json, records.csv and plot data.
    Study {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 1 runs sequentially.
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DistancesSpec {
    p: Option<DiscreteDistribution>,
    q: Option<DiscreteDistribution>,
    components: Option<Vec<DiscreteDistribution>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(report) => {
            let mut out = io::stdout().lock();
            let _ = writeln!(out, "{report}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let code = if err.is_numerical() { 3 } else { 2 };
            let body = json!({ "schema_version": SCHEMA_VERSION, "error": err.to_string(), "exit_code": code });
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&body).unwrap_or_else(|_| err.to_string())
            );
            ExitCode::from(code)
        }
    }
}

fn parse_vector(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("cannot parse '{t}' as a number")))
        })
        .collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::Estimate {
            mode,
            input,
            alpha,
            certify,
            threshold,
            max_iterations,
            tolerance,
        } => {
            let mut cfg = EmConfig::default();
            if let Some(m) = max_iterations {
                cfg.max_iterations = m;
            }
            if let Some(t) = tolerance {
                cfg.tolerance = t;
            }
            let table = read_table(File::open(&input)?)?;
            let (l, mode_name) = match mode {
                Mode::Evals => {
                    if alpha.is_some() {
                        return Err(Error::InvalidInput(
                            "--alpha only applies to --mode predictor".into(),
                        ));
                    }
                    (EvalMatrix::from_rows(&table)?, "evals")
                }
                Mode::Predictor => {
                    let alpha = alpha.ok_or_else(|| {
                        Error::InvalidInput("--mode predictor needs --alpha".into())
                    })?;
                    let alpha = SimplexVector::new(parse_vector(&alpha)?)?;
                    (predictor_eval_matrix(&table, &alpha)?, "predictor")
                }
            };
            let mut result = estimate_mle(&l, &cfg)?;
            let certificate = if certify {
                let report = certify_with_threshold(&l, &result.beta_hat, threshold)?;
                result.certificate = Some(report.upsilon);
                Some(report)
            } else {
                None
            };
            pretty(&json!({
                "schema_version": SCHEMA_VERSION,
                "command": "estimate",
                "mode": mode_name,
                "n": l.n(),
                "k": l.k(),
                "result": result,
                "certificate": certificate,
            }))
        }
        Command::Certify {
            evals,
            beta,
            threshold,
        } => {
            let l = EvalMatrix::read_csv(File::open(&evals)?)?;
            let beta = SimplexVector::new(parse_vector(&beta)?)?;
            let report = certify_with_threshold(&l, &beta, threshold)?;
            pretty(
                &json!({ "schema_version": SCHEMA_VERSION, "command": "certify", "report": report }),
            )
        }
        Command::Simulate { spec, out, seed } => {
            let mut scenario: ScenarioSpec = read_json(&spec)?;
            if let Some(s) = seed {
                scenario.seed = s;
            }
            let data = scenario.generate()?;
            fs::create_dir_all(&out)?;
            let samples: Vec<Vec<f64>> = data.samples.iter().map(|&a| vec![a as f64]).collect();
            let mut wtr = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(out.join("samples.csv"))?;
            for s in &data.samples {
                wtr.write_record([s.to_string()])?;
            }
            wtr.flush()?;
            write_table(
                File::create(out.join("evals.csv"))?,
                data.evals.iter().map(Vec::as_slice),
            )?;
            let mut files = vec!["samples.csv", "evals.csv"];
            if let Some(f) = &data.predictor_outputs {
                write_table(
                    File::create(out.join("predictor.csv"))?,
                    f.iter().map(Vec::as_slice),
                )?;
                files.push("predictor.csv");
            }
            let truth = json!({
                "schema_version": SCHEMA_VERSION,
                "spec": scenario,
                "model_components": data.model_components,
                "misspecification_h2": data.misspecification_h2,
                "predictor_defined": data.predictor_outputs.is_some(),
            });
            fs::write(out.join("truth.json"), pretty(&truth)? + "\n")?;
            files.push("truth.json");
            pretty(&json!({
                "schema_version": SCHEMA_VERSION,
                "command": "simulate",
                "n": samples.len(),
                "seed": scenario.seed,
                "files": files,
            }))
        }
        Command::Distances { spec, files } => {
            let (pair, components) = match spec {
                Some(path) => {
                    let s: DistancesSpec = read_json(&path)?;
                    let pair = match (s.p, s.q) {
                        (Some(p), Some(q)) => Some((p, q)),
                        (None, None) => None,
                        _ => {
                            return Err(Error::InvalidInput("give both p and q, or neither".into()))
                        }
                    };
                    let components = s
                        .components
                        .or_else(|| pair.as_ref().map(|(p, q)| vec![p.clone(), q.clone()]));
                    (pair, components)
                }
                None => {
                    let dists = files
                        .iter()
                        .map(|f| read_json(f))
                        .collect::<Result<Vec<DiscreteDistribution>>>()?;
                    let pair = (dists.len() == 2).then(|| (dists[0].clone(), dists[1].clone()));
                    (pair, Some(dists))
                }
            };
            let components =
                components.ok_or_else(|| Error::InvalidInput("no distributions given".into()))?;
            let exact = delta_star(&components, SeparationMethod::Exact)?;
            let qp = delta_star(&components, SeparationMethod::QpLowerBound)?;
            pretty(&json!({
                "schema_version": SCHEMA_VERSION,
                "command": "distances",
                "hellinger": pair.as_ref().map(|(p, q)| hellinger(p, q)),
                "tv": pair.as_ref().map(|(p, q)| total_variation(p, q)),
                "delta_star": exact.delta_star,
                "qp_lower_bound": qp.delta_star,
                "argmin_subset": exact.argmin_subset,
                "grid_disagreement": exact.grid_disagreement,
            }))
        }
        Command::Study {
            spec,
            out,
            seed,
            threads,
        } => {
            let mut study: StudySpec = read_json(&spec)?;
            if let Some(s) = seed {
                study.base_scenario.seed = s;
            }
            let exec = configure_threads(threads)?;
            let report = run_study_with(&study, exec)?;
            fs::create_dir_all(&out)?;
            let body = pretty(&report)?;
            fs::write(out.join("report.json"), body.clone() + "\n")?;
            report.write_records_csv(File::create(out.join("records.csv"))?)?;
            for &estimator in &report.estimators {
                report.write_plot_data(
                    estimator,
                    File::create(out.join(format!("plot_{}.csv", estimator.name())))?,
                )?;
            }
            Ok(body)
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<Execution> {
    match threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::default()),
    }
}
