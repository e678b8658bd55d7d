//! Command-line driver: dataset generation, target training, the three
//! reconstruction attacks, fidelity evaluation, the theorem-scale
//! experiments, and full ensemble runs from a JSON config.
//!
//! Exit codes: 0 on success, 1 on configuration/usage errors, 2 on runtime
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use cfrecon::attack::{baseline_attack, cca_attack, polytope_attack, HalfspaceModel};
use cfrecon::cf::{CfConfig, CostKind};
use cfrecon::data::{balance_classes, load_csv, make_sphere_quadrant, make_two_moons, CsvSpec, Dataset};
use cfrecon::error::Error;
use cfrecon::experiment::{read_results_csv, run_experiment, summarize_rows, ExperimentConfig};
use cfrecon::metrics::{fidelity, prediction_histogram, uniform_reference, ReferenceKind};
use cfrecon::nn::{train, BinaryClassifier, DenseNetwork, NetworkArchitecture, TrainingConfig};
use cfrecon::oracle::{CfGenerator, Target, TargetOracle};
use cfrecon::theory::{
    clamp_bound_diagnostic, reconstruction_success_probability, sample_boundary_points,
    theorem1_convergence, GridSpec,
};

#[derive(Parser)]
#[command(
    name = "cfrecon",
    version,
    about = "Reconstruct binary classifiers from one-sided counterfactual explanations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataKind {
    TwoMoons,
    SphereQuadrant,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AttackName {
    Baseline,
    Cca,
    Polytope,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CfMethodName {
    MccfL2,
    MccfL1,
    OneNn,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset (or ingest+normalize a CSV) and write it as CSV.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        /// Sample count for synthetic kinds.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Gaussian noise level for two-moons.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Dimension for the sphere-quadrant kind.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Input CSV for `--kind csv`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "y")]
        label_column: String,
        #[arg(long, value_delimiter = ',')]
        categorical_columns: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        feature_columns: Vec<String>,
        /// Subsample the majority class to balance labels.
        #[arg(long)]
        balance: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a target network on a CSV dataset and save it as JSON.
    TrainTarget {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "y")]
        label_column: String,
        /// Hidden layer widths, e.g. `20,10`.
        #[arg(long, value_delimiter = ',', default_values_t = vec![20, 10])]
        arch: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.001)]
        l2_coefficient: f64,
        #[arg(long, default_value_t = 0.001)]
        learning_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one reconstruction attack against a saved target model.
    Attack {
        #[arg(long, value_enum)]
        kind: AttackName,
        #[arg(long)]
        target: PathBuf,
        /// CSV pool the attack queries are sampled from.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "y")]
        label_column: String,
        #[arg(long, default_value_t = 200)]
        n_queries: usize,
        /// Clamp threshold for the cca kind.
        #[arg(long, default_value_t = 0.5)]
        k: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![20, 10])]
        surrogate_arch: Vec<usize>,
        #[arg(long, value_enum, default_value_t = CfMethodName::MccfL2)]
        cf_method: CfMethodName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fidelity (and optional histogram) of a surrogate against a target.
    Eval {
        #[arg(long)]
        target: PathBuf,
        /// Surrogate network JSON; mutually exclusive with --polytope.
        #[arg(long, conflicts_with = "polytope")]
        surrogate: Option<PathBuf>,
        /// Halfspace-model JSON.
        #[arg(long)]
        polytope: Option<PathBuf>,
        /// CSV of on-manifold reference points.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "y")]
        label_column: String,
        #[arg(long, default_value_t = 10_000)]
        uniform_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write 50-bin prediction histograms of both networks as CSV.
        #[arg(long)]
        histogram_out: Option<PathBuf>,
    },
    /// Polytope convergence-rate experiment on the spherical target.
    Theorem1 {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4])]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![25, 50, 100, 200, 400])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 100_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Grid-coverage reconstruction-probability experiment.
    Theorem2 {
        #[arg(long, default_value_t = 0.25)]
        epsilon: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10, 50, 200])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Monte-Carlo samples for the inverse-region volume estimates.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Network model JSON; the built-in 2D linear target otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Flat CSV rows (n, epsilon, k_eps, v_star, bound, empirical_success).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full coverage reports, including per-cell volume estimates.
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Clamp-bound diagnostic for a target/surrogate pair.
    ClampDiag {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_queries: usize,
        #[arg(long, default_value_t = 500)]
        boundary_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral-norm Lipschitz upper bound of a saved model.
    Lipschitz {
        #[arg(long)]
        model: PathBuf,
    },
    /// Aggregate a results.csv into per-configuration mean/std rows.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full ensemble experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        ensemble_size: Option<usize>,
        /// Override seed_base (the CFX_SEED env var wins over both).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::GenData {
            kind,
            n,
            noise,
            dim,
            seed,
            input,
            label_column,
            categorical_columns,
            feature_columns,
            balance,
            out,
        } => {
            let ds = match kind {
                DataKind::TwoMoons => make_two_moons(n, noise, seed)?,
                DataKind::SphereQuadrant => make_sphere_quadrant(n, dim, seed)?,
                DataKind::Csv => {
                    let path = input.ok_or_else(|| {
                        Error::config("input", "required for --kind csv")
                    })?;
                    let spec = CsvSpec {
                        path,
                        label_column,
                        categorical_columns,
                        feature_columns: if feature_columns.is_empty() {
                            None
                        } else {
                            Some(feature_columns)
                        },
                    };
                    let load = load_csv(&spec)?;
                    for issue in &load.skipped_rows {
                        eprintln!("line {}: {}", issue.line, issue.message);
                    }
                    for warning in &load.warnings {
                        eprintln!("warning: {warning}");
                    }
                    load.dataset
                }
            };
            let ds = if balance { balance_classes(&ds, seed)? } else { ds };
            write_dataset_csv(&ds, &out)?;
            println!(
                "wrote {} rows x {} features to {}",
                ds.len(),
                ds.dim(),
                out.display()
            );
            Ok(())
        }

        Command::TrainTarget {
            data,
            label_column,
            arch,
            seed,
            epochs,
            batch_size,
            l2_coefficient,
            learning_rate,
            out,
        } => {
            let ds = read_dataset(&data, &label_column)?;
            let arch = NetworkArchitecture::new(ds.dim(), arch, seed)?;
            let cfg = TrainingConfig {
                epochs,
                batch_size,
                l2_coefficient,
                learning_rate,
                shuffle_seed: seed,
                ..TrainingConfig::default()
            };
            let points: Vec<_> = ds
                .features
                .iter()
                .zip(&ds.labels)
                .map(|(x, &y)| cfrecon::LabeledPoint::new(x.clone(), y as f64))
                .collect();
            let net = train(&DenseNetwork::init(&arch), &points, &cfg, cfrecon::loss::LossKind::BceBaseline)?;
            std::fs::write(&out, net.serialize())?;
            println!(
                "trained target {} on {} rows; saved to {}",
                arch_string(arch.hidden_sizes.as_slice()),
                ds.len(),
                out.display()
            );
            Ok(())
        }

        Command::Attack {
            kind,
            target,
            data,
            label_column,
            n_queries,
            k,
            surrogate_arch,
            cf_method,
            seed,
            epochs,
            out,
        } => {
            let net = read_model(&target)?;
            let ds = read_dataset(&data, &label_column)?;
            if ds.dim() != net.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: net.input_dim(),
                    actual: ds.dim(),
                });
            }
            if ds.len() < n_queries {
                return Err(Error::InvalidInput(format!(
                    "dataset has {} rows; cannot sample {n_queries} queries",
                    ds.len()
                )));
            }
            let queries = sample_queries(&ds, n_queries, seed);
            let generator = build_generator(cf_method, &net, &ds)?;
            let mut oracle = TargetOracle::new(Target::network(net.clone()), generator)
                .with_budget(n_queries as u64);
            let cfg = TrainingConfig {
                epochs,
                shuffle_seed: seed,
                ..TrainingConfig::default()
            };
            match kind {
                AttackName::Polytope => {
                    let outcome = polytope_attack(&mut oracle, &queries)?;
                    if outcome.degenerate_pairs > 0 {
                        eprintln!(
                            "warning: skipped {} degenerate query/counterfactual pairs",
                            outcome.degenerate_pairs
                        );
                    }
                    std::fs::write(&out, outcome.model.serialize())?;
                    println!(
                        "polytope surrogate with {} halfspaces saved to {}",
                        outcome.model.halfspaces.len(),
                        out.display()
                    );
                }
                AttackName::Baseline | AttackName::Cca => {
                    let arch = NetworkArchitecture::new(net.input_dim(), surrogate_arch, seed)?;
                    let surrogate = match kind {
                        AttackName::Baseline => {
                            baseline_attack(&mut oracle, &queries, &arch, &cfg)?
                        }
                        AttackName::Cca => cca_attack(&mut oracle, &queries, &arch, &cfg, k)?,
                        AttackName::Polytope => unreachable!(),
                    };
                    std::fs::write(&out, surrogate.serialize())?;
                    println!(
                        "{} surrogate {} saved to {}",
                        match kind {
                            AttackName::Baseline => "baseline",
                            _ => "cca",
                        },
                        arch_string(arch.hidden_sizes.as_slice()),
                        out.display()
                    );
                }
            }
            Ok(())
        }

        Command::Eval {
            target,
            surrogate,
            polytope,
            data,
            label_column,
            uniform_size,
            seed,
            histogram_out,
        } => {
            let target_net = read_model(&target)?;
            let uniform = uniform_reference(target_net.input_dim(), uniform_size, seed);

            enum Surrogate {
                Net(DenseNetwork),
                Poly(HalfspaceModel),
            }
            let surrogate = match (surrogate, polytope) {
                (Some(path), None) => Surrogate::Net(read_model(&path)?),
                (None, Some(path)) => {
                    let bytes = std::fs::read(&path)?;
                    Surrogate::Poly(HalfspaceModel::deserialize(&bytes)?)
                }
                _ => {
                    return Err(Error::config(
                        "surrogate",
                        "provide exactly one of --surrogate or --polytope",
                    ))
                }
            };

            let report = |name: &str, points: &[Vec<f64>], kind| -> Result<(), Error> {
                let f = match &surrogate {
                    Surrogate::Net(net) => fidelity(&target_net, net, points, kind)?,
                    Surrogate::Poly(model) => fidelity(&target_net, model, points, kind)?,
                };
                println!("fidelity_{name} = {:.4} over {} points", f.fidelity, f.reference_size);
                Ok(())
            };
            report("uniform", &uniform, ReferenceKind::Uniform)?;
            if let Some(path) = data {
                let ds = read_dataset(&path, &label_column)?;
                report("test", &ds.features, ReferenceKind::Test)?;
            }

            if let Some(path) = histogram_out {
                let Surrogate::Net(surrogate_net) = &surrogate else {
                    return Err(Error::InvalidInput(
                        "histograms need a network surrogate".into(),
                    ));
                };
                let target_hist = prediction_histogram(&target_net, &uniform, 50)?;
                let surrogate_hist = prediction_histogram(surrogate_net, &uniform, 50)?;
                let mut writer = csv::Writer::from_path(&path)?;
                writer.write_record(["bin_low", "bin_high", "target_count", "surrogate_count"])?;
                for i in 0..50 {
                    writer.write_record([
                        format!("{}", i as f64 / 50.0),
                        format!("{}", (i + 1) as f64 / 50.0),
                        target_hist[i].to_string(),
                        surrogate_hist[i].to_string(),
                    ])?;
                }
                writer.flush()?;
                println!("histograms written to {}", path.display());
            }
            Ok(())
        }

        Command::Theorem1 {
            dims,
            n,
            trials,
            mc_samples,
            seed,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            println!("dim  theoretical  fitted");
            for &d in &dims {
                let study = theorem1_convergence(d, &n, trials, mc_samples, seed)?;
                let fitted = study
                    .fitted_slope
                    .map(|s| format!("{s:.3}"))
                    .unwrap_or_else(|| "undefined (exact recovery)".into());
                println!("{d:<4} {:<12.3} {fitted}", study.theoretical_slope);
                let path = out_dir.join(format!("theorem1_d{d}.csv"));
                let mut writer = csv::Writer::from_path(&path)?;
                for row in study.rows() {
                    writer.serialize(row)?;
                }
                writer.flush()?;
                std::fs::write(
                    out_dir.join(format!("theorem1_d{d}.json")),
                    serde_json::to_vec_pretty(&study).expect("serializable"),
                )?;
            }
            Ok(())
        }

        Command::Theorem2 {
            epsilon,
            n,
            trials,
            samples,
            model,
            seed,
            out,
            out_json,
        } => {
            let target = match model {
                Some(path) => Target::network(read_model(&path)?),
                None => Target::linear(vec![1.0, 0.0], -0.5),
            };
            let generator = match &target {
                Target::Network(_) => CfGenerator::Mccf(CfConfig::default()),
                _ => CfGenerator::AnalyticClosest { nudge: 0.0 },
            };
            let grid = GridSpec::new(epsilon, target.dim())?;
            let mut rows = Vec::new();
            let mut reports = Vec::new();
            println!("n     k_eps  v_star   bound    empirical");
            for &queries in &n {
                let report = reconstruction_success_probability(
                    &target, &generator, &grid, queries, trials, samples, seed,
                )?;
                let row = report.to_row()?;
                println!(
                    "{:<5} {:<6} {:<8.4} {:<8.4} {:<8.4}",
                    row.n, row.k_eps, row.v_star, row.bound, row.empirical_success
                );
                rows.push(row);
                reports.push(report);
            }
            if let Some(path) = out {
                let mut writer = csv::Writer::from_path(&path)?;
                for row in &rows {
                    writer.serialize(row)?;
                }
                writer.flush()?;
            }
            if let Some(path) = out_json {
                std::fs::write(&path, serde_json::to_vec_pretty(&reports).expect("serializable"))?;
            }
            Ok(())
        }

        Command::ClampDiag {
            target,
            surrogate,
            n_queries,
            boundary_samples,
            seed,
            out,
        } => {
            let target_net = read_model(&target)?;
            let surrogate_net = read_model(&surrogate)?;
            let queries = uniform_reference(target_net.input_dim(), n_queries, seed);
            let mut oracle = TargetOracle::new(
                Target::network(target_net.clone()),
                CfGenerator::Mccf(CfConfig::default()),
            );
            let mut cf_points = Vec::new();
            for q in &queries {
                let response = oracle.query(q)?;
                if let Some(w) = response.counterfactual {
                    cf_points.push(w);
                }
            }
            if cf_points.is_empty() {
                return Err(Error::InvalidInput(
                    "no counterfactuals generated; target may accept everything".into(),
                ));
            }
            let boundary = sample_boundary_points(&target_net, boundary_samples, seed + 1)?;
            let diag = clamp_bound_diagnostic(&target_net, &surrogate_net, &cf_points, &boundary)?;
            println!(
                "delta = {:.4}, mu = {:.4}, gamma = {:.4}",
                diag.delta, diag.mu, diag.gamma
            );
            println!(
                "max deviation {:.4} <= bound {:.4}: {}",
                diag.max_deviation, diag.bound, diag.holds
            );
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_vec_pretty(&diag).expect("serializable"))?;
            }
            Ok(())
        }

        Command::Lipschitz { model } => {
            let net = read_model(&model)?;
            println!("{}", net.lipschitz_upper_bound());
            Ok(())
        }

        Command::Report { results, out } => {
            let rows = read_results_csv(&results)?;
            let summaries = summarize_rows(&rows)?;
            println!("dataset,attack,surrogate_arch,n_queries,trials,mean_test,std_test,mean_uniform,std_uniform");
            for s in &summaries {
                println!(
                    "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
                    s.dataset,
                    s.attack,
                    s.surrogate_arch,
                    s.n_queries,
                    s.trials,
                    s.mean_fidelity_test,
                    s.std_fidelity_test,
                    s.mean_fidelity_uniform,
                    s.std_fidelity_uniform
                );
            }
            if let Some(path) = out {
                let mut writer = csv::Writer::from_path(&path)?;
                for s in &summaries {
                    writer.serialize(s)?;
                }
                writer.flush()?;
            }
            Ok(())
        }

        Command::Run {
            config,
            output_dir,
            ensemble_size,
            seed,
            k,
        } => {
            let mut cfg = ExperimentConfig::from_json_file(&config)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if let Some(s) = ensemble_size {
                cfg.ensemble_size = s;
            }
            if let Some(s) = seed {
                cfg.seed_base = s;
            }
            if let Some(value) = k {
                cfg.k = value;
            }
            if let Ok(env_seed) = std::env::var("CFX_SEED") {
                cfg.seed_base = env_seed.parse().map_err(|_| {
                    Error::config("CFX_SEED", "must be an unsigned integer")
                })?;
            }
            cfg.validate()?;
            let report = run_experiment(&cfg)?;
            for failure in &report.failures {
                eprintln!("warning: {failure}");
            }
            println!(
                "{} result rows ({} failures) written under {}",
                report.rows.len(),
                report.failures.len(),
                cfg.output_dir.display()
            );
            for s in &report.summaries {
                println!(
                    "{} {} n={}: test {:.3}±{:.3}, uniform {:.3}±{:.3}",
                    s.attack,
                    s.surrogate_arch,
                    s.n_queries,
                    s.mean_fidelity_test,
                    s.std_fidelity_test,
                    s.mean_fidelity_uniform,
                    s.std_fidelity_uniform
                );
            }
            Ok(())
        }
    }
}

fn arch_string(hidden: &[usize]) -> String {
    hidden
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn read_model(path: &Path) -> Result<DenseNetwork, Error> {
    let bytes = std::fs::read(path)?;
    DenseNetwork::deserialize(&bytes)
}

fn read_dataset(path: &Path, label_column: &str) -> Result<Dataset, Error> {
    let spec = CsvSpec {
        path: path.to_path_buf(),
        label_column: label_column.to_owned(),
        categorical_columns: vec![],
        feature_columns: None,
    };
    let load = load_csv(&spec)?;
    for issue in &load.skipped_rows {
        eprintln!("line {}: {}", issue.line, issue.message);
    }
    Ok(load.dataset)
}

fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<(), Error> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ds.feature_names.clone();
    header.push("y".into());
    writer.write_record(&header)?;
    for (row, &label) in ds.features.iter().zip(&ds.labels) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        record.push(label.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

fn sample_queries(ds: &Dataset, n: usize, seed: u64) -> Vec<Vec<f64>> {
    cfrecon::exec::sample_indices(ds.len(), n, seed)
        .into_iter()
        .map(|i| ds.features[i].clone())
        .collect()
}

fn build_generator(
    method: CfMethodName,
    net: &DenseNetwork,
    ds: &Dataset,
) -> Result<CfGenerator, Error> {
    match method {
        CfMethodName::MccfL2 => Ok(CfGenerator::Mccf(CfConfig::default())),
        CfMethodName::MccfL1 => Ok(CfGenerator::Mccf(CfConfig {
            cost: CostKind::L1,
            ..CfConfig::default()
        })),
        CfMethodName::OneNn => {
            let mut pool = Vec::new();
            for x in &ds.features {
                if net.predict_class(x)? == 1 {
                    pool.push(x.clone());
                }
            }
            if pool.is_empty() {
                return Err(Error::InvalidInput(
                    "target accepts no dataset row; cannot build 1-NN pool".into(),
                ));
            }
            Ok(CfGenerator::OneNearestNeighbor { pool })
        }
    }
}
