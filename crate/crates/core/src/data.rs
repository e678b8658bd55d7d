//! Synthetic dataset generators, CSV ingestion with min-max normalization,
//! class balancing, and train/test/attack splitting.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labeled tabular dataset with features normalized to the unit cube.
/// `normalization` records the original (min, max) per feature so points
/// can be mapped back.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    pub normalization: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Maps a normalized point back to the original feature scale.
    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.normalization)
            .map(|(v, (min, max))| v * (max - min) + min)
            .collect()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        (self.labels.len() - ones, ones)
    }

    /// Rows with the given label.
    pub fn points_of_class(&self, class: u8) -> Vec<Vec<f64>> {
        self.features
            .iter()
            .zip(&self.labels)
            .filter(|(_, &y)| y == class)
            .map(|(x, _)| x.clone())
            .collect()
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            normalization: self.normalization.clone(),
        }
    }
}

/// Min-max normalizes columns in place and returns the recorded ranges.
/// Constant columns map to 0.
fn normalize_features(rows: &mut [Vec<f64>]) -> (Vec<(f64, f64)>, Vec<usize>) {
    let d = rows.first().map_or(0, |r| r.len());
    let mut ranges = Vec::with_capacity(d);
    let mut constant_columns = Vec::new();
    for j in 0..d {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for row in rows.iter() {
            min = min.min(row[j]);
            max = max.max(row[j]);
        }
        if max > min {
            for row in rows.iter_mut() {
                row[j] = (row[j] - min) / (max - min);
            }
        } else {
            constant_columns.push(j);
            for row in rows.iter_mut() {
                row[j] = 0.0;
            }
        }
        ranges.push((min, max));
    }
    (ranges, constant_columns)
}

/// Two interleaving half-circle classes with isotropic Gaussian noise,
/// min-max normalized to the unit square. Classes alternate by index, so
/// counts differ by at most one.
pub fn make_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::InvalidInput("noise must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = if noise > 0.0 {
        Some(Normal::new(0.0, noise).expect("validated std dev"))
    } else {
        None
    };
    let n_upper = n.div_ceil(2);
    let n_lower = n / 2;
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as u8;
        let j = i / 2;
        let (mut x, mut y) = if class == 0 {
            let t = std::f64::consts::PI * j as f64 / (n_upper.max(2) - 1) as f64;
            (t.cos(), t.sin())
        } else {
            let t = std::f64::consts::PI * j as f64 / (n_lower.max(2) - 1) as f64;
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        if let Some(g) = &gauss {
            x += g.sample(&mut rng);
            y += g.sample(&mut rng);
        }
        features.push(vec![x, y]);
        labels.push(class);
    }
    let (normalization, _) = normalize_features(&mut features);
    Ok(Dataset {
        features,
        labels,
        feature_names: vec!["x1".into(), "x2".into()],
        normalization,
    })
}

/// Uniform points over the unit cube, labeled 1 inside the unit sphere
/// centered at (1, …, 1). Features are already normalized.
pub fn make_sphere_quadrant(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if d < 2 {
        return Err(Error::InvalidInput("dimension must be >= 2".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let dist_sq: f64 = x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum();
        labels.push(u8::from(dist_sq <= 1.0));
        features.push(x);
    }
    Ok(Dataset {
        features,
        labels,
        feature_names: (1..=d).map(|i| format!("x{i}")).collect(),
        normalization: vec![(0.0, 1.0); d],
    })
}

/// Where and how to read a CSV dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CsvSpec {
    pub path: PathBuf,
    /// Name of the binary label column.
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Columns to integer-encode by first appearance.
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    /// Optional subset of feature columns; all non-label columns otherwise.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
}

fn default_label_column() -> String {
    "y".into()
}

/// A row skipped during ingestion, with its 1-based line number.
#[derive(Clone, Debug)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

/// Ingestion result: the dataset plus per-row errors and warnings.
#[derive(Clone, Debug)]
pub struct CsvLoad {
    pub dataset: Dataset,
    pub skipped_rows: Vec<RowIssue>,
    pub warnings: Vec<String>,
}

/// Reads a header-ful CSV file, integer-encodes the configured categorical
/// columns in first-appearance order, min-max normalizes every feature,
/// and records the normalization for inversion. Unparseable rows are
/// collected rather than fatal; constant features normalize to 0 with a
/// warning.
pub fn load_csv(spec: &CsvSpec) -> Result<CsvLoad> {
    load_csv_from_path(&spec.path, spec)
}

fn load_csv_from_path(path: &Path, spec: &CsvSpec) -> Result<CsvLoad> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();

    let label_idx = headers
        .iter()
        .position(|h| h == &spec.label_column)
        .ok_or_else(|| {
            Error::Format(format!(
                "label column `{}` not found in header",
                spec.label_column
            ))
        })?;

    let feature_indices: Vec<usize> = match &spec.feature_columns {
        Some(wanted) => wanted
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Format(format!("feature column `{name}` not found")))
            })
            .collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| i != label_idx).collect(),
    };
    if feature_indices.is_empty() {
        return Err(Error::Format("no feature columns selected".into()));
    }
    let categorical: Vec<bool> = feature_indices
        .iter()
        .map(|&i| spec.categorical_columns.contains(&headers[i]))
        .collect();

    let mut encoders: Vec<HashMap<String, f64>> = vec![HashMap::new(); feature_indices.len()];
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = Vec::new();

    for (record_no, record) in reader.records().enumerate() {
        let line = record_no as u64 + 2; // 1-based, after the header
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                skipped.push(RowIssue {
                    line,
                    message: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let label_field = record.get(label_idx).unwrap_or("");
        let label = match label_field.trim().parse::<f64>() {
            Ok(v) if v == 0.0 || v == 1.0 => v as u8,
            Ok(v) => {
                skipped.push(RowIssue {
                    line,
                    message: format!("label must be 0 or 1, got {v}"),
                });
                continue;
            }
            Err(_) => {
                skipped.push(RowIssue {
                    line,
                    message: format!("unparseable label `{label_field}`"),
                });
                continue;
            }
        };
        let mut row = Vec::with_capacity(feature_indices.len());
        let mut row_error = None;
        for (slot, &col) in feature_indices.iter().enumerate() {
            let field = record.get(col).unwrap_or("").trim();
            let value = if categorical[slot] {
                let next = encoders[slot].len() as f64;
                *encoders[slot].entry(field.to_owned()).or_insert(next)
            } else {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        row_error = Some(format!(
                            "unparseable value `{field}` in column `{}`",
                            headers[col]
                        ));
                        break;
                    }
                }
            };
            row.push(value);
        }
        match row_error {
            Some(message) => skipped.push(RowIssue { line, message }),
            None => {
                features.push(row);
                labels.push(label);
            }
        }
    }

    if features.is_empty() {
        return Err(Error::InvalidInput(
            "no valid rows after ingestion".into(),
        ));
    }
    let (normalization, constant_columns) = normalize_features(&mut features);
    let feature_names: Vec<String> = feature_indices
        .iter()
        .map(|&i| headers[i].clone())
        .collect();
    let warnings = constant_columns
        .iter()
        .map(|&j| format!("feature `{}` is constant; normalized to 0", feature_names[j]))
        .collect();

    Ok(CsvLoad {
        dataset: Dataset {
            features,
            labels,
            feature_names,
            normalization,
        },
        skipped_rows: skipped,
        warnings,
    })
}

/// Subsamples the majority class down to the minority count, uniformly
/// without replacement, preserving row order.
pub fn balance_classes(ds: &Dataset, seed: u64) -> Result<Dataset> {
    let (n0, n1) = ds.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::InvalidInput(
            "both classes must be present to balance".into(),
        ));
    }
    if n0 == n1 {
        return Ok(ds.clone());
    }
    let (majority, keep) = if n0 > n1 { (0u8, n1) } else { (1u8, n0) };
    let majority_rows: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.labels[i] == majority)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, majority_rows.len(), keep)
        .into_iter()
        .map(|k| majority_rows[k])
        .collect();
    chosen.extend((0..ds.len()).filter(|&i| ds.labels[i] != majority));
    chosen.sort_unstable();
    Ok(ds.subset(&chosen))
}

/// How to partition a dataset into train/test/attack subsets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub attack_fraction: f64,
    pub seed: u64,
    /// Optional (class-0, class-1) proportions for the attack subset. When
    /// set, the attack partition is subsampled to match, so the three
    /// splits may not cover every row.
    #[serde(default)]
    pub attack_class_balance: Option<(f64, f64)>,
}

impl SplitSpec {
    pub fn new(train: f64, test: f64, attack: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction: train,
            test_fraction: test,
            attack_fraction: attack,
            seed,
            attack_class_balance: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let fractions = [
            self.train_fraction,
            self.test_fraction,
            self.attack_fraction,
        ];
        if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidInput(
                "split fractions must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split fractions must sum to 1, got {total}"
            )));
        }
        if let Some((p0, p1)) = self.attack_class_balance {
            if p0 < 0.0 || p1 < 0.0 || (p0 + p1 - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(
                    "attack class proportions must be nonnegative and sum to 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Seeded disjoint partition into (train, test, attack). Without an attack
/// class balance the three parts cover the dataset exactly; with one, the
/// attack part is the largest subset of its partition matching the
/// requested proportions within one row.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let n = ds.len();
    if n == 0 {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let n_train = (spec.train_fraction * n as f64).floor() as usize;
    let n_test = (spec.test_fraction * n as f64).floor() as usize;
    let train_idx = &order[..n_train];
    let test_idx = &order[n_train..n_train + n_test];
    let pool = &order[n_train + n_test..];

    let attack_idx: Vec<usize> = match spec.attack_class_balance {
        None => pool.to_vec(),
        Some((p0, p1)) => {
            let count0 = pool.iter().filter(|&&i| ds.labels[i] == 0).count();
            let count1 = pool.len() - count0;
            let mut k = pool.len();
            if p0 > 0.0 {
                if count0 == 0 {
                    return Err(Error::InvalidInput(
                        "attack balance requests class 0 but the pool has none".into(),
                    ));
                }
                k = k.min((count0 as f64 / p0).floor() as usize);
            }
            if p1 > 0.0 {
                if count1 == 0 {
                    return Err(Error::InvalidInput(
                        "attack balance requests class 1 but the pool has none".into(),
                    ));
                }
                k = k.min((count1 as f64 / p1).floor() as usize);
            }
            if k == 0 {
                return Err(Error::InvalidInput(
                    "attack pool too small for the requested balance".into(),
                ));
            }
            let mut need0 = ((p0 * k as f64).round() as usize).min(count0);
            let mut need1 = k - need0;
            if need1 > count1 {
                need1 = count1;
                need0 = k - need1;
            }
            let mut taken = Vec::with_capacity(k);
            let (mut got0, mut got1) = (0, 0);
            for &i in pool {
                let class = ds.labels[i];
                if class == 0 && got0 < need0 {
                    got0 += 1;
                    taken.push(i);
                } else if class == 1 && got1 < need1 {
                    got1 += 1;
                    taken.push(i);
                }
            }
            taken
        }
    };

    Ok((
        ds.subset(train_idx),
        ds.subset(test_idx),
        ds.subset(&attack_idx),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn two_moons_structure() {
        let ds = make_two_moons(1000, 0.0, 1).unwrap();
        assert_eq!(ds.len(), 1000);
        let (n0, n1) = ds.class_counts();
        assert!(n0.abs_diff(n1) <= 1);
        assert!(ds
            .features
            .iter()
            .all(|p| p.iter().all(|v| (0.0..=1.0).contains(v))));
        // Noise-free arcs are separable: denormalized class-0 points sit on
        // the upper arc (y >= 0), class-1 on the lower (y <= 0.5).
        for (x, &y) in ds.features.iter().zip(&ds.labels) {
            let raw = ds.denormalize(x);
            if y == 0 {
                assert!(raw[1] >= -1e-9);
            } else {
                assert!(raw[1] <= 0.5 + 1e-9);
            }
        }
        assert_eq!(ds, make_two_moons(1000, 0.0, 1).unwrap());
        assert_ne!(
            make_two_moons(1000, 0.1, 1).unwrap(),
            make_two_moons(1000, 0.1, 2).unwrap()
        );
    }

    #[test]
    fn sphere_quadrant_volume_fraction() {
        let ds = make_sphere_quadrant(10_000, 2, 3).unwrap();
        let (_, n1) = ds.class_counts();
        let fraction = n1 as f64 / ds.len() as f64;
        assert!(
            (fraction - std::f64::consts::FRAC_PI_4).abs() < 0.02,
            "got {fraction}"
        );
    }

    #[test]
    fn sphere_quadrant_corner_labels() {
        let ds = make_sphere_quadrant(10, 3, 0).unwrap();
        // (1,…,1) is the center: distance 0, label 1; the origin has
        // distance √3 > 1, label 0.
        let center = [1.0, 1.0, 1.0];
        let dist_sq: f64 = center.iter().map(|v| (v - 1.0) * (v - 1.0)).sum();
        assert!(dist_sq <= 1.0);
        let origin_dist: f64 = 3f64.sqrt();
        assert!(origin_dist > 1.0);
        assert!(ds.features.iter().all(|p| p.len() == 3));
    }

    fn write_temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn csv_minmax_and_categoricals() {
        let f = write_temp_csv("a,b,y\n3,a,0\n7,b,1\n5,a,1\n");
        let spec = CsvSpec {
            path: f.path().to_path_buf(),
            label_column: "y".into(),
            categorical_columns: vec!["b".into()],
            feature_columns: None,
        };
        let load = load_csv(&spec).unwrap();
        let ds = load.dataset;
        assert_eq!(ds.features[0][0], 0.0);
        assert_eq!(ds.features[1][0], 1.0);
        assert_eq!(ds.features[2][0], 0.5);
        // First-appearance coding: a -> 0, b -> 1; then min-max to {0, 1}.
        assert_eq!(ds.features[0][1], 0.0);
        assert_eq!(ds.features[1][1], 1.0);
        assert_eq!(ds.features[2][1], 0.0);
        assert_eq!(ds.labels, vec![0, 1, 1]);
        // Round trip back to the raw scale.
        let raw = ds.denormalize(&ds.features[2]);
        assert!((raw[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn csv_row_errors_and_missing_label() {
        let f = write_temp_csv("a,y\n1,0\nnot_a_number,1\n3,1\n4,2\n");
        let spec = CsvSpec {
            path: f.path().to_path_buf(),
            label_column: "y".into(),
            categorical_columns: vec![],
            feature_columns: None,
        };
        let load = load_csv(&spec).unwrap();
        assert_eq!(load.dataset.len(), 2);
        assert_eq!(load.skipped_rows.len(), 2);
        assert_eq!(load.skipped_rows[0].line, 3);

        let missing = CsvSpec {
            path: f.path().to_path_buf(),
            label_column: "label".into(),
            categorical_columns: vec![],
            feature_columns: None,
        };
        assert!(matches!(load_csv(&missing), Err(Error::Format(_))));
    }

    #[test]
    fn csv_constant_feature_warns() {
        let f = write_temp_csv("a,b,y\n2,1,0\n2,3,1\n");
        let spec = CsvSpec {
            path: f.path().to_path_buf(),
            label_column: "y".into(),
            categorical_columns: vec![],
            feature_columns: None,
        };
        let load = load_csv(&spec).unwrap();
        assert_eq!(load.warnings.len(), 1);
        assert!(load.dataset.features.iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn balancing_subsamples_majority() {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..300 {
            features.push(vec![i as f64 / 300.0]);
            labels.push(u8::from(i < 90));
        }
        let ds = Dataset {
            features,
            labels,
            feature_names: vec!["x".into()],
            normalization: vec![(0.0, 1.0)],
        };
        let balanced = balance_classes(&ds, 5).unwrap();
        assert_eq!(balanced.class_counts(), (90, 90));
        assert_eq!(balanced, balance_classes(&ds, 5).unwrap());

        let already = balance_classes(&balanced, 9).unwrap();
        assert_eq!(already, balanced);

        let single = Dataset {
            features: vec![vec![0.0]],
            labels: vec![1],
            feature_names: vec!["x".into()],
            normalization: vec![(0.0, 1.0)],
        };
        assert!(balance_classes(&single, 0).is_err());
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let ds = make_two_moons(100, 0.05, 11).unwrap();
        let spec = SplitSpec::new(0.6, 0.2, 0.2, 42);
        let (train, test, attack) = split(&ds, &spec).unwrap();
        assert_eq!((train.len(), test.len(), attack.len()), (60, 20, 20));

        // Partition: every original row appears in exactly one split.
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for part in [&train, &test, &attack] {
            for row in &part.features {
                assert!(!seen.contains(row), "row appears twice");
                seen.push(row.clone());
            }
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn split_attack_balance() {
        let ds = make_two_moons(1000, 0.05, 1).unwrap();
        let spec = SplitSpec {
            attack_class_balance: Some((0.8, 0.2)),
            ..SplitSpec::new(0.4, 0.2, 0.4, 7)
        };
        let (_, _, attack) = split(&ds, &spec).unwrap();
        let (n0, _) = attack.class_counts();
        let want = 0.8 * attack.len() as f64;
        assert!(
            (n0 as f64 - want).abs() <= 1.0,
            "class-0 count {n0} vs target {want}"
        );

        let infeasible = SplitSpec {
            attack_class_balance: Some((1.0, 0.0)),
            ..SplitSpec::new(0.98, 0.01, 0.01, 7)
        };
        // A tiny pool may contain only class-1 rows; the call must either
        // succeed with all-class-0 rows or report infeasibility, never
        // silently break the proportions.
        match split(&ds, &infeasible) {
            Ok((_, _, attack)) => {
                assert!(attack.labels.iter().all(|&y| y == 0));
            }
            Err(Error::InvalidInput(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn split_requires_valid_fractions() {
        let ds = make_two_moons(10, 0.0, 0).unwrap();
        assert!(split(&ds, &SplitSpec::new(0.5, 0.2, 0.2, 0)).is_err());
        assert!(split(&ds, &SplitSpec::new(-0.1, 0.6, 0.5, 0)).is_err());
    }
}
