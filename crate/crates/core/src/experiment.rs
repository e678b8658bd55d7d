//! Experiment orchestration: seeded ensembles of target training, query
//! sweeps, attacks, and fidelity measurement, with CSV/JSON report
//! emission. The whole pipeline is a pure function of the configuration,
//! so reruns produce byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{baseline_attack, cca_attack, polytope_attack};
use crate::cf::{CfConfig, CostKind};
use crate::data::{self, CsvSpec, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::exec;
use crate::loss::LossKind;
use crate::metrics::{ensemble_summary, fidelity, uniform_reference, ReferenceKind};
use crate::nn::{
    train, BinaryClassifier, DenseNetwork, LabeledPoint, NetworkArchitecture, TrainingConfig,
};
use crate::oracle::{CfGenerator, Target, TargetOracle};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    TwoMoons { n: usize, noise: f64 },
    SphereQuadrant { n: usize, d: usize },
    Csv(CsvSpec),
}

impl DatasetSpec {
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::TwoMoons { .. } => "two_moons".into(),
            DatasetSpec::SphereQuadrant { .. } => "sphere_quadrant".into(),
            DatasetSpec::Csv(spec) => spec
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Baseline,
    Cca,
    Polytope,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Baseline => "baseline",
            AttackKind::Cca => "cca",
            AttackKind::Polytope => "polytope",
        }
    }
}

/// Counterfactual generation method used by the simulated service.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfMethod {
    MccfL2,
    MccfL1,
    /// Nearest favorable training instance (realistic counterfactuals).
    OneNearestNeighbor,
}

/// Query sweep: step t of `steps` issues `per_step · t` queries.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Schedule {
    pub steps: usize,
    pub per_step: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Balance classes by subsampling the majority before splitting.
    #[serde(default)]
    pub balance_dataset: bool,
    /// Hidden layer widths of the target network.
    pub target_hidden: Vec<usize>,
    /// Hidden layer widths of each surrogate to evaluate.
    pub surrogate_hidden: Vec<Vec<usize>>,
    pub attacks: Vec<AttackKind>,
    pub schedule: Schedule,
    /// Ensemble size S.
    pub ensemble_size: usize,
    pub seed_base: u64,
    /// Clamp threshold for the CCA attack.
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub cf: CfConfig,
    #[serde(default = "default_cf_method")]
    pub cf_method: CfMethod,
    #[serde(default = "default_split")]
    pub split: SplitFractions,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default = "default_uniform_size")]
    pub uniform_reference_size: usize,
    pub output_dir: PathBuf,
}

fn default_k() -> f64 {
    0.5
}

fn default_cf_method() -> CfMethod {
    CfMethod::MccfL2
}

fn default_uniform_size() -> usize {
    10_000
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub test: f64,
    pub attack: f64,
    #[serde(default)]
    pub attack_class_balance: Option<(f64, f64)>,
}

fn default_split() -> SplitFractions {
    SplitFractions {
        train: 0.5,
        test: 0.25,
        attack: 0.25,
        attack_class_balance: None,
    }
}

impl ExperimentConfig {
    /// Parses a JSON config, reporting the offending field path on error.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::Config {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_json(&bytes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.steps == 0 {
            return Err(Error::config("schedule.steps", "must be >= 1"));
        }
        if self.schedule.per_step == 0 {
            return Err(Error::config("schedule.per_step", "must be >= 1"));
        }
        if self.ensemble_size == 0 {
            return Err(Error::config("ensemble_size", "must be >= 1"));
        }
        if !(self.k > 0.0 && self.k <= 1.0) {
            return Err(Error::config("k", "must lie in (0, 1]"));
        }
        if self.target_hidden.is_empty() || self.target_hidden.contains(&0) {
            return Err(Error::config(
                "target_hidden",
                "needs at least one positive layer width",
            ));
        }
        if self.surrogate_hidden.is_empty() {
            return Err(Error::config("surrogate_hidden", "needs at least one entry"));
        }
        for (i, arch) in self.surrogate_hidden.iter().enumerate() {
            if arch.is_empty() || arch.contains(&0) {
                return Err(Error::config(
                    format!("surrogate_hidden[{i}]"),
                    "needs at least one positive layer width",
                ));
            }
        }
        if self.attacks.is_empty() {
            return Err(Error::config("attacks", "needs at least one attack"));
        }
        if self.training.epochs == 0 {
            return Err(Error::config("training.epochs", "must be >= 1"));
        }
        if self.training.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be >= 1"));
        }
        if self.uniform_reference_size == 0 {
            return Err(Error::config("uniform_reference_size", "must be >= 1"));
        }
        let f = &self.split;
        if (f.train + f.test + f.attack - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", "fractions must sum to 1"));
        }
        self.cf
            .validate()
            .map_err(|e| Error::config("cf", e.to_string()))?;
        match &self.dataset {
            DatasetSpec::TwoMoons { n, .. } if *n < 2 => {
                Err(Error::config("dataset.n", "needs at least two samples"))
            }
            DatasetSpec::SphereQuadrant { d, .. } if *d < 2 => {
                Err(Error::config("dataset.d", "dimension must be >= 2"))
            }
            _ => Ok(()),
        }
    }
}

/// One line of results.csv.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub attack: String,
    pub surrogate_arch: String,
    pub n_queries: usize,
    pub trial: usize,
    pub fidelity_test: f64,
    pub fidelity_uniform: f64,
}

/// Mean/std of fidelities across the ensemble for one configuration cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub attack: String,
    pub surrogate_arch: String,
    pub n_queries: usize,
    pub trials: usize,
    pub mean_fidelity_test: f64,
    pub std_fidelity_test: f64,
    pub mean_fidelity_uniform: f64,
    pub std_fidelity_uniform: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<SummaryRow>,
    /// Per-trial failures (trial index and message); the run continues
    /// without those rows.
    pub failures: Vec<String>,
}

fn arch_label(hidden: &[usize]) -> String {
    hidden
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("-")
}

struct MemberOutput {
    rows: Vec<ResultRow>,
    target_model: Vec<u8>,
    surrogate_models: Vec<(String, Vec<u8>)>,
}

// Tags for seed derivation; each (member, purpose) pair gets its own
// stream.
const SEED_DATA: u64 = 0;
const SEED_SPLIT: u64 = 1;
const SEED_TARGET_INIT: u64 = 2;
const SEED_TARGET_SHUFFLE: u64 = 3;
const SEED_QUERIES: u64 = 4;
const SEED_SURROGATE_INIT: u64 = 5;
const SEED_SURROGATE_SHUFFLE: u64 = 6;
const SEED_UNIFORM: u64 = 7;
const SEED_BALANCE: u64 = 8;

fn member_seed(cfg: &ExperimentConfig, member: usize, purpose: u64, extra: u64) -> u64 {
    exec::derive_seed(cfg.seed_base, &[member as u64, purpose, extra])
}

fn labeled_points(ds: &Dataset) -> Vec<LabeledPoint> {
    ds.features
        .iter()
        .zip(&ds.labels)
        .map(|(x, &y)| LabeledPoint::new(x.clone(), y as f64))
        .collect()
}

fn build_generator(
    cfg: &ExperimentConfig,
    target: &DenseNetwork,
    train_split: &Dataset,
) -> Result<CfGenerator> {
    match cfg.cf_method {
        CfMethod::MccfL2 => Ok(CfGenerator::Mccf(CfConfig {
            cost: CostKind::L2,
            ..cfg.cf.clone()
        })),
        CfMethod::MccfL1 => Ok(CfGenerator::Mccf(CfConfig {
            cost: CostKind::L1,
            ..cfg.cf.clone()
        })),
        CfMethod::OneNearestNeighbor => {
            // The service returns its nearest favorable training instance.
            let mut pool = Vec::new();
            for x in &train_split.features {
                if target.predict_class(x)? == 1 {
                    pool.push(x.clone());
                }
            }
            if pool.is_empty() {
                return Err(Error::InvalidInput(
                    "target accepts no training instance; cannot build 1-NN pool".into(),
                ));
            }
            Ok(CfGenerator::OneNearestNeighbor { pool })
        }
    }
}

fn run_member(
    cfg: &ExperimentConfig,
    base: Option<&Dataset>,
    member: usize,
) -> Result<MemberOutput> {
    let dataset_label = cfg.dataset.label();

    let ds = match (&cfg.dataset, base) {
        (DatasetSpec::TwoMoons { n, noise }, _) => {
            data::make_two_moons(*n, *noise, member_seed(cfg, member, SEED_DATA, 0))?
        }
        (DatasetSpec::SphereQuadrant { n, d }, _) => {
            data::make_sphere_quadrant(*n, *d, member_seed(cfg, member, SEED_DATA, 0))?
        }
        (DatasetSpec::Csv(_), Some(ds)) => ds.clone(),
        (DatasetSpec::Csv(_), None) => unreachable!("csv dataset preloaded"),
    };

    let split_spec = SplitSpec {
        train_fraction: cfg.split.train,
        test_fraction: cfg.split.test,
        attack_fraction: cfg.split.attack,
        seed: member_seed(cfg, member, SEED_SPLIT, 0),
        attack_class_balance: cfg.split.attack_class_balance,
    };
    let (train_split, test_split, attack_split) = data::split(&ds, &split_spec)?;
    if train_split.is_empty() || test_split.is_empty() {
        return Err(Error::InvalidInput(
            "train and test splits must be nonempty".into(),
        ));
    }
    let max_queries = cfg.schedule.per_step * cfg.schedule.steps;
    if attack_split.len() < max_queries {
        return Err(Error::InvalidInput(format!(
            "attack split has {} rows but the schedule needs {max_queries}",
            attack_split.len()
        )));
    }

    let dim = ds.dim();
    let target_arch = NetworkArchitecture::new(
        dim,
        cfg.target_hidden.clone(),
        member_seed(cfg, member, SEED_TARGET_INIT, 0),
    )?;
    let target_cfg = TrainingConfig {
        shuffle_seed: member_seed(cfg, member, SEED_TARGET_SHUFFLE, 0),
        ..cfg.training.clone()
    };
    let target = train(
        &DenseNetwork::init(&target_arch),
        &labeled_points(&train_split),
        &target_cfg,
        LossKind::BceBaseline,
    )?;

    let generator = build_generator(cfg, &target, &train_split)?;
    let uniform = uniform_reference(
        dim,
        cfg.uniform_reference_size,
        member_seed(cfg, member, SEED_UNIFORM, 0),
    );

    let mut rows = Vec::new();
    let mut surrogate_models = Vec::new();
    for t in 1..=cfg.schedule.steps {
        let n_queries = cfg.schedule.per_step * t;
        let queries: Vec<Vec<f64>> = exec::sample_indices(
            attack_split.len(),
            n_queries,
            member_seed(cfg, member, SEED_QUERIES, t as u64),
        )
        .into_iter()
        .map(|i| attack_split.features[i].clone())
        .collect();

        for attack in &cfg.attacks {
            match attack {
                AttackKind::Polytope => {
                    let mut oracle =
                        TargetOracle::new(Target::network(target.clone()), generator.clone())
                            .with_budget(n_queries as u64);
                    let outcome = polytope_attack(&mut oracle, &queries)?;
                    let f_test = fidelity(
                        &target,
                        &outcome.model,
                        &test_split.features,
                        ReferenceKind::Test,
                    )?;
                    let f_uni =
                        fidelity(&target, &outcome.model, &uniform, ReferenceKind::Uniform)?;
                    rows.push(ResultRow {
                        dataset: dataset_label.clone(),
                        attack: attack.name().into(),
                        surrogate_arch: "polytope".into(),
                        n_queries,
                        trial: member,
                        fidelity_test: f_test.fidelity,
                        fidelity_uniform: f_uni.fidelity,
                    });
                    if t == cfg.schedule.steps {
                        surrogate_models.push((
                            format!("surrogate_trial{member}_polytope_n{n_queries}.json"),
                            outcome.model.serialize(),
                        ));
                    }
                }
                AttackKind::Baseline | AttackKind::Cca => {
                    for (arch_idx, hidden) in cfg.surrogate_hidden.iter().enumerate() {
                        let surrogate_arch = NetworkArchitecture::new(
                            dim,
                            hidden.clone(),
                            member_seed(cfg, member, SEED_SURROGATE_INIT, arch_idx as u64),
                        )?;
                        // Shared seeds across attack kinds: the k = 1 CCA
                        // run must reproduce the baseline bit for bit.
                        let surrogate_cfg = TrainingConfig {
                            shuffle_seed: member_seed(
                                cfg,
                                member,
                                SEED_SURROGATE_SHUFFLE,
                                (arch_idx * cfg.schedule.steps + t) as u64,
                            ),
                            ..cfg.training.clone()
                        };
                        let mut oracle = TargetOracle::new(
                            Target::network(target.clone()),
                            generator.clone(),
                        )
                        .with_budget(n_queries as u64);
                        let surrogate = match attack {
                            AttackKind::Baseline => baseline_attack(
                                &mut oracle,
                                &queries,
                                &surrogate_arch,
                                &surrogate_cfg,
                            )?,
                            AttackKind::Cca => cca_attack(
                                &mut oracle,
                                &queries,
                                &surrogate_arch,
                                &surrogate_cfg,
                                cfg.k,
                            )?,
                            AttackKind::Polytope => unreachable!(),
                        };
                        let f_test = fidelity(
                            &target,
                            &surrogate,
                            &test_split.features,
                            ReferenceKind::Test,
                        )?;
                        let f_uni =
                            fidelity(&target, &surrogate, &uniform, ReferenceKind::Uniform)?;
                        rows.push(ResultRow {
                            dataset: dataset_label.clone(),
                            attack: attack.name().into(),
                            surrogate_arch: arch_label(hidden),
                            n_queries,
                            trial: member,
                            fidelity_test: f_test.fidelity,
                            fidelity_uniform: f_uni.fidelity,
                        });
                        if t == cfg.schedule.steps {
                            surrogate_models.push((
                                format!(
                                    "surrogate_trial{member}_{}_{}_n{n_queries}.json",
                                    attack.name(),
                                    arch_label(hidden)
                                ),
                                surrogate.serialize(),
                            ));
                        }
                    }
                }
            }
        }
    }

    Ok(MemberOutput {
        rows,
        target_model: target.serialize(),
        surrogate_models,
    })
}

/// Groups rows by (attack, architecture, query count) and summarizes the
/// fidelities across trials.
pub fn summarize_rows(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    let mut keys: Vec<(String, String, String, usize)> = Vec::new();
    for row in rows {
        let key = (
            row.dataset.clone(),
            row.attack.clone(),
            row.surrogate_arch.clone(),
            row.n_queries,
        );
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut summaries = Vec::with_capacity(keys.len());
    for (dataset, attack, arch, n_queries) in keys {
        let test: Vec<f64> = rows
            .iter()
            .filter(|r| {
                r.dataset == dataset
                    && r.attack == attack
                    && r.surrogate_arch == arch
                    && r.n_queries == n_queries
            })
            .map(|r| r.fidelity_test)
            .collect();
        let uni: Vec<f64> = rows
            .iter()
            .filter(|r| {
                r.dataset == dataset
                    && r.attack == attack
                    && r.surrogate_arch == arch
                    && r.n_queries == n_queries
            })
            .map(|r| r.fidelity_uniform)
            .collect();
        let s_test = ensemble_summary(&test)?;
        let s_uni = ensemble_summary(&uni)?;
        summaries.push(SummaryRow {
            dataset,
            attack,
            surrogate_arch: arch,
            n_queries,
            trials: s_test.count,
            mean_fidelity_test: s_test.mean,
            std_fidelity_test: s_test.std,
            mean_fidelity_uniform: s_uni.mean,
            std_fidelity_uniform: s_uni.std,
        });
    }
    Ok(summaries)
}

/// Runs the full ensemble protocol and writes `results.csv`,
/// `summary.json`, and the trained models under `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;

    let base = match &cfg.dataset {
        DatasetSpec::Csv(spec) => {
            let loaded = data::load_csv(spec)?;
            let ds = if cfg.balance_dataset {
                data::balance_classes(
                    &loaded.dataset,
                    exec::derive_seed(cfg.seed_base, &[SEED_BALANCE]),
                )?
            } else {
                loaded.dataset
            };
            Some(ds)
        }
        _ => None,
    };

    let outputs = exec::map_indices(cfg.ensemble_size, |member| {
        run_member(cfg, base.as_ref(), member)
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut models: Vec<(String, Vec<u8>)> = Vec::new();
    for (member, outcome) in outputs.into_iter().enumerate() {
        match outcome {
            Ok(output) => {
                rows.extend(output.rows);
                models.push((format!("target_trial{member}.json"), output.target_model));
                models.extend(output.surrogate_models);
            }
            Err(Error::Config { path, message }) => {
                // Configuration problems affect every member identically.
                return Err(Error::Config { path, message });
            }
            Err(e) => failures.push(format!("trial {member}: {e}")),
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "every trial failed; first failure: {}",
            failures.first().map(String::as_str).unwrap_or("none")
        )));
    }

    let summaries = summarize_rows(&rows)?;
    let report = ExperimentReport {
        rows,
        summaries,
        failures,
    };
    write_report(cfg, &report, &models)?;
    Ok(report)
}

fn write_report(
    cfg: &ExperimentConfig,
    report: &ExperimentReport,
    models: &[(String, Vec<u8>)],
) -> Result<()> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir.join("models"))?;

    let mut writer = csv::Writer::from_path(dir.join("results.csv"))?;
    for row in &report.rows {
        writer.serialize(row)?;
    }
    writer.flush()?;

    #[derive(Serialize)]
    struct SummaryFile<'a> {
        config: &'a ExperimentConfig,
        summaries: &'a [SummaryRow],
        failures: &'a [String],
    }
    let summary = serde_json::to_vec_pretty(&SummaryFile {
        config: cfg,
        summaries: &report.summaries,
        failures: &report.failures,
    })
    .expect("summary serialization cannot fail");
    fs::write(dir.join("summary.json"), summary)?;

    for (name, bytes) in models {
        fs::write(dir.join("models").join(name), bytes)?;
    }
    Ok(())
}

/// Reads a results.csv produced by [`run_experiment`].
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}
