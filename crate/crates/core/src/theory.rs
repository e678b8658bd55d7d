//! Desk-scale empirical verification of the query-complexity results:
//! polytope convergence-rate fitting on the spherical target, ε-grid
//! boundary-cell coverage with brute-force inverse-region volume
//! estimation, the closed-form linear reconstruction probability, and the
//! Lipschitz clamp-bound diagnostic.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::polytope_attack;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::euclidean;
use crate::nn::{BinaryClassifier, DenseNetwork};
use crate::oracle::{generate_counterfactual, CfGenerator, Target, TargetOracle};

/// Corner-lattice evaluation is kept exhaustive only while it stays cheap.
const MAX_EXHAUSTIVE_CORNERS: usize = 4_000_000;
/// Exhaustive boundary-cell detection is restricted to low dimension.
const MAX_EXHAUSTIVE_DIM: usize = 3;
/// Distance (in cell units, relative to ε) at which a counterfactual is
/// treated as sitting on a shared cell face.
const FACE_TOL: f64 = 1e-9;

/// A uniform grid over the unit cube with integral 1/ε cells per axis.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub epsilon: f64,
    pub dim: usize,
}

impl GridSpec {
    pub fn new(epsilon: f64, dim: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidInput(
                "epsilon must lie in (0, 1)".into(),
            ));
        }
        let per_axis = 1.0 / epsilon;
        if (per_axis - per_axis.round()).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "1/epsilon must be integral so the grid tiles the cube; got {per_axis}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        let m = per_axis.round() as usize;
        let corners = (m + 1).checked_pow(dim as u32);
        if corners.is_none_or(|c| c > MAX_EXHAUSTIVE_CORNERS) {
            return Err(Error::Resource(format!(
                "grid with {m}^{dim} cells exceeds the evaluation budget"
            )));
        }
        Ok(GridSpec { epsilon, dim })
    }

    pub fn cells_per_axis(&self) -> usize {
        (1.0 / self.epsilon).round() as usize
    }

    pub fn total_cells(&self) -> usize {
        self.cells_per_axis().pow(self.dim as u32)
    }

    /// Flat index of the cell containing `x` (axis 0 least significant);
    /// points on the upper faces fall into the last cell of that axis.
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let m = self.cells_per_axis();
        let mut flat = 0;
        for &xi in x.iter().rev() {
            let idx = ((xi * m as f64) as usize).min(m - 1);
            flat = flat * m + idx;
        }
        flat
    }

    /// All cells whose closure contains `x`: a point within [`FACE_TOL`]
    /// of a shared face belongs to the cells on both sides. Returned in
    /// ascending flat order.
    fn cells_containing(&self, x: &[f64]) -> Vec<usize> {
        let m = self.cells_per_axis();
        let mut per_axis: Vec<Vec<usize>> = Vec::with_capacity(x.len());
        for &xi in x {
            let scaled = xi * m as f64;
            let nearest = scaled.round();
            let mut axis = Vec::with_capacity(2);
            if (scaled - nearest).abs() <= FACE_TOL * m as f64 {
                let k = nearest as isize;
                if k > 0 {
                    axis.push((k - 1) as usize);
                }
                if (k as usize) < m {
                    axis.push(k as usize);
                }
            } else {
                axis.push((scaled as usize).min(m - 1));
            }
            per_axis.push(axis);
        }
        let mut flats = vec![0usize];
        for axis in per_axis.iter().rev() {
            let mut next = Vec::with_capacity(flats.len() * axis.len());
            for &f in &flats {
                for &idx in axis {
                    next.push(f * m + idx);
                }
            }
            flats = next;
        }
        flats.sort_unstable();
        flats
    }
}

/// Cells whose 2^d corner predictions disagree — the sign-change proxy for
/// "contains a piece of the decision boundary". Exhaustive; restricted to
/// d ≤ 3. The proxy misses cells the boundary crosses without separating
/// any pair of corners.
pub fn find_boundary_cells<M>(model: &M, grid: &GridSpec) -> Result<Vec<usize>>
where
    M: BinaryClassifier + ?Sized,
{
    if grid.dim > MAX_EXHAUSTIVE_DIM {
        return Err(Error::Resource(format!(
            "exhaustive boundary scan supports d <= {MAX_EXHAUSTIVE_DIM}; \
             use find_boundary_cells_sampled for d = {}",
            grid.dim
        )));
    }
    let m = grid.cells_per_axis();
    let corners_per_axis = m + 1;
    let corner_total = corners_per_axis.pow(grid.dim as u32);

    let mut corner_class = vec![0u8; corner_total];
    let mut point = vec![0.0; grid.dim];
    for (flat, class) in corner_class.iter_mut().enumerate() {
        let mut rest = flat;
        for coordinate in point.iter_mut() {
            *coordinate = (rest % corners_per_axis) as f64 * grid.epsilon;
            rest /= corners_per_axis;
        }
        *class = model.predict_class(&point)?;
    }

    let corner_flat = |cell: &[usize], offset: usize| -> usize {
        let mut flat = 0;
        for axis in (0..cell.len()).rev() {
            let bump = (offset >> axis) & 1;
            flat = flat * corners_per_axis + cell[axis] + bump;
        }
        flat
    };

    let mut boundary = Vec::new();
    let mut cell = vec![0usize; grid.dim];
    for flat in 0..grid.total_cells() {
        let mut rest = flat;
        for c in cell.iter_mut() {
            *c = rest % m;
            rest /= m;
        }
        let first = corner_class[corner_flat(&cell, 0)];
        let mixed = (1..1usize << grid.dim)
            .any(|offset| corner_class[corner_flat(&cell, offset)] != first);
        if mixed {
            boundary.push(flat);
        }
    }
    Ok(boundary)
}

/// Boundary-cell scan for higher dimensions: probes `samples` randomly
/// chosen cells and returns the boundary cells among them. A lower bound
/// on the true set — callers must flag results as sampled.
pub fn find_boundary_cells_sampled<M>(
    model: &M,
    grid: &GridSpec,
    samples: usize,
    seed: u64,
) -> Result<Vec<usize>>
where
    M: BinaryClassifier + ?Sized,
{
    let m = grid.cells_per_axis();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = Vec::new();
    let mut point = vec![0.0; grid.dim];
    for _ in 0..samples {
        let cell: Vec<usize> = (0..grid.dim).map(|_| rng.random_range(0..m)).collect();
        let mut first = None;
        let mut mixed = false;
        for offset in 0..1usize << grid.dim {
            for (axis, coordinate) in point.iter_mut().enumerate() {
                *coordinate = (cell[axis] + ((offset >> axis) & 1)) as f64 * grid.epsilon;
            }
            let class = model.predict_class(&point)?;
            match first {
                None => first = Some(class),
                Some(f) if f != class => {
                    mixed = true;
                    break;
                }
                _ => {}
            }
        }
        if mixed {
            let flat = cell
                .iter()
                .rev()
                .fold(0usize, |acc, &idx| acc * m + idx);
            found.push(flat);
        }
    }
    found.sort_unstable();
    found.dedup();
    Ok(found)
}

/// Coverage analysis of one (target, generator, grid) configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageReport {
    pub epsilon: f64,
    pub dim: usize,
    /// Number of boundary cells k(ε).
    pub k_eps: usize,
    /// Flat indices of the boundary cells, ascending.
    pub boundary_cells: Vec<usize>,
    /// Monte-Carlo estimates of the inverse-counterfactual-region volume
    /// v_i(ε), aligned with `boundary_cells`.
    pub v_estimates: Vec<f64>,
    /// min_i v_i(ε).
    pub v_star: f64,
    /// Fraction of volume-estimation samples that were rejected.
    pub rejected_fraction: f64,
    /// Fraction of generated counterfactuals that landed outside every
    /// boundary cell (a symptom of the corner-sign proxy missing cells).
    pub unassigned_cf_fraction: f64,
    /// No rejected samples were seen; the volume estimates are vacuous.
    pub degenerate: bool,
    /// Query count for the success experiment, when one was run.
    pub n: Option<usize>,
    pub trials: Option<usize>,
    /// Fraction of trials in which every boundary cell received at least
    /// one counterfactual.
    pub empirical_success: Option<f64>,
    /// The lower bound 1 − k(ε)·(1 − v*)^n; may be negative (vacuous).
    pub bound: Option<f64>,
}

fn assign_to_boundary(
    grid: &GridSpec,
    boundary_sorted: &[usize],
    w: &[f64],
) -> Option<usize> {
    grid.cells_containing(w)
        .into_iter()
        .find_map(|cell| boundary_sorted.binary_search(&cell).ok())
}

/// Brute-force Monte-Carlo estimate of the inverse-region volumes: draw
/// uniform points, generate a counterfactual for each rejected one, and
/// credit the boundary cell the counterfactual lands in.
pub fn estimate_inverse_region_volumes(
    target: &Target,
    generator: &CfGenerator,
    grid: &GridSpec,
    samples: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let boundary = find_boundary_cells(target, grid)?;
    let k = boundary.len();

    struct BatchCounts {
        per_cell: Vec<u64>,
        rejected: u64,
        unassigned: u64,
        error: Option<Error>,
    }

    let ranges = exec::batch_ranges(samples, 2048);
    let batches = exec::map_indices(ranges.len(), |batch_idx| {
        let (_, len) = ranges[batch_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(batch_idx as u64);
        let mut counts = BatchCounts {
            per_cell: vec![0; k],
            rejected: 0,
            unassigned: 0,
            error: None,
        };
        let mut x = vec![0.0; grid.dim];
        for _ in 0..len {
            for coordinate in x.iter_mut() {
                *coordinate = rng.random::<f64>();
            }
            match step_sample(target, generator, grid, &boundary, &x) {
                Ok(Some(Some(position))) => {
                    counts.rejected += 1;
                    counts.per_cell[position] += 1;
                }
                Ok(Some(None)) => {
                    counts.rejected += 1;
                    counts.unassigned += 1;
                }
                Ok(None) => {}
                Err(e) => {
                    counts.error = Some(e);
                    break;
                }
            }
        }
        counts
    });

    let mut per_cell = vec![0u64; k];
    let mut rejected = 0u64;
    let mut unassigned = 0u64;
    for batch in batches {
        if let Some(e) = batch.error {
            return Err(e);
        }
        for (total, add) in per_cell.iter_mut().zip(&batch.per_cell) {
            *total += add;
        }
        rejected += batch.rejected;
        unassigned += batch.unassigned;
    }

    let v_estimates: Vec<f64> = per_cell
        .iter()
        .map(|&c| c as f64 / samples as f64)
        .collect();
    let v_star = v_estimates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CoverageReport {
        epsilon: grid.epsilon,
        dim: grid.dim,
        k_eps: k,
        boundary_cells: boundary,
        v_star: if k == 0 { 0.0 } else { v_star },
        v_estimates,
        rejected_fraction: rejected as f64 / samples as f64,
        unassigned_cf_fraction: if rejected == 0 {
            0.0
        } else {
            unassigned as f64 / rejected as f64
        },
        degenerate: rejected == 0,
        n: None,
        trials: None,
        empirical_success: None,
        bound: None,
    })
}

/// For a rejected sample, returns the boundary-cell position its
/// counterfactual falls in (None when unassignable); for favorable
/// samples returns Ok(None).
#[allow(clippy::type_complexity)]
fn step_sample(
    target: &Target,
    generator: &CfGenerator,
    grid: &GridSpec,
    boundary: &[usize],
    x: &[f64],
) -> Result<Option<Option<usize>>> {
    if target.predict_class(x)? == 1 {
        return Ok(None);
    }
    let cf = generate_counterfactual(target, generator, x)?;
    if !cf.converged {
        return Ok(Some(None));
    }
    Ok(Some(assign_to_boundary(grid, boundary, &cf.w)))
}

/// Runs `trials` independent experiments of `n` uniform queries each and
/// reports the fraction in which every boundary cell received a
/// counterfactual, together with the bound 1 − k(ε)·(1−v*)^n computed
/// from freshly estimated volumes.
pub fn reconstruction_success_probability(
    target: &Target,
    generator: &CfGenerator,
    grid: &GridSpec,
    n: usize,
    trials: usize,
    volume_samples: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let mut report = estimate_inverse_region_volumes(
        target,
        generator,
        grid,
        volume_samples,
        exec::derive_seed(seed, &[0]),
    )?;
    let boundary = report.boundary_cells.clone();
    let k = boundary.len();

    let outcomes = exec::map_indices(trials, |trial| -> Result<bool> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(exec::derive_seed(seed, &[1, trial as u64]));
        let mut hit = vec![false; k];
        let mut remaining = k;
        let mut x = vec![0.0; grid.dim];
        for _ in 0..n {
            if remaining == 0 {
                break;
            }
            for coordinate in x.iter_mut() {
                *coordinate = rng.random::<f64>();
            }
            if let Some(position) = step_sample(target, generator, grid, &boundary, &x)?
                .flatten()
            {
                if !hit[position] {
                    hit[position] = true;
                    remaining -= 1;
                }
            }
        }
        Ok(remaining == 0)
    });

    let mut successes = 0usize;
    for outcome in outcomes {
        if outcome? {
            successes += 1;
        }
    }
    report.n = Some(n);
    report.trials = Some(trials);
    report.empirical_success = Some(successes as f64 / trials as f64);
    report.bound = Some(1.0 - k as f64 * (1.0 - report.v_star).powi(n as i32));
    Ok(report)
}

/// Closed-form reconstruction probability for a linear model under
/// one-sided counterfactuals: 1 − (1 − v)^n, where `v` is the volume of
/// the unfavorable region.
pub fn linear_one_sided_probability(v: f64, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidInput(format!(
            "volume must lie in [0, 1], got {v}"
        )));
    }
    Ok(1.0 - (1.0 - v).powi(n as i32))
}

/// Companion empirical frequency: the fraction of `trials` batches of `n`
/// uniform queries that contain at least one rejected query. For a linear
/// target a single rejected query pins the boundary exactly, so this is
/// the empirical reconstruction rate.
pub fn empirical_one_sided_reconstruction(
    target: &Target,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let dim = target.dim();
    let outcomes = exec::map_indices(trials, |trial| -> Result<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(exec::derive_seed(seed, &[trial as u64]));
        let mut x = vec![0.0; dim];
        for _ in 0..n {
            for coordinate in x.iter_mut() {
                *coordinate = rng.random::<f64>();
            }
            if target.predict_class(&x)? == 0 {
                return Ok(true);
            }
        }
        Ok(false)
    });
    let mut hits = 0usize;
    for outcome in outcomes {
        if outcome? {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub mean_error: f64,
}

/// Result of the spherical-boundary convergence experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub dim: usize,
    pub trials: usize,
    pub mc_samples: usize,
    pub points: Vec<ConvergencePoint>,
    /// Least-squares slope of log error against log n over the points with
    /// positive error; `None` when fewer than two such points exist.
    pub fitted_slope: Option<f64>,
    /// −2/(d−1).
    pub theoretical_slope: f64,
    /// Query counts whose mean error was exactly zero (exact recovery).
    pub zero_error_ns: Vec<usize>,
}

/// Approximates the unit sphere centered at (1, …, 1) with tangent
/// polytopes of `n` supporting hyperplanes, estimates the disagreement
/// probability by Monte Carlo, and fits the log-log convergence rate
/// across `n_grid`.
///
/// Each hyperplane comes from one rejected query drawn along an inward
/// ray whose direction is uniform over the spherical patch, so the
/// tangent contact points are i.i.d. with positive density on the
/// boundary — the sampling model of the convergence theorem. (Queries
/// uniform over the cube instead starve the patch edges of tangents:
/// the uncovered corner slivers then shrink only like 1/n in 2D, hiding
/// the n^(−2/(d−1)) interior rate.)
pub fn theorem1_convergence(
    dim: usize,
    n_grid: &[usize],
    trials: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<ConvergenceStudy> {
    if dim < 2 {
        return Err(Error::InvalidInput("dimension must be >= 2".into()));
    }
    if n_grid.is_empty() || trials == 0 || mc_samples == 0 {
        return Err(Error::InvalidInput(
            "n_grid, trials and mc_samples must be nonzero".into(),
        ));
    }
    let jobs = n_grid.len() * trials;
    let errors = exec::map_indices(jobs, |job| -> Result<f64> {
        let n = n_grid[job / trials];
        let trial = (job % trials) as u64;
        let target = Target::sphere(vec![1.0; dim], 1.0);

        let mut query_rng = ChaCha8Rng::seed_from_u64(exec::derive_seed(
            seed,
            &[dim as u64, n as u64, trial, 0],
        ));
        let queries: Vec<Vec<f64>> = (0..n)
            .map(|_| sample_rejected_ray_query(dim, &mut query_rng))
            .collect();
        let mut oracle = TargetOracle::new(
            target.clone(),
            CfGenerator::AnalyticClosest { nudge: 0.0 },
        );
        let outcome = polytope_attack(&mut oracle, &queries)?;

        let mc_seed = exec::derive_seed(seed, &[dim as u64, n as u64, trial, 1]);
        let mut mc_rng = ChaCha8Rng::seed_from_u64(mc_seed);
        let mut disagreements = 0u64;
        let mut x = vec![0.0; dim];
        for _ in 0..mc_samples {
            for coordinate in x.iter_mut() {
                *coordinate = mc_rng.random::<f64>();
            }
            if outcome.model.predict(&x) != target.predict_class(&x)? {
                disagreements += 1;
            }
        }
        Ok(disagreements as f64 / mc_samples as f64)
    });

    let mut per_job = Vec::with_capacity(jobs);
    for e in errors {
        per_job.push(e?);
    }
    let mut points = Vec::with_capacity(n_grid.len());
    let mut zero_error_ns = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let slice = &per_job[i * trials..(i + 1) * trials];
        let mean = slice.iter().sum::<f64>() / trials as f64;
        if mean == 0.0 {
            zero_error_ns.push(n);
        }
        points.push(ConvergencePoint {
            n,
            mean_error: mean,
        });
    }
    let fit_input: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mean_error > 0.0)
        .map(|p| ((p.n as f64).ln(), p.mean_error.ln()))
        .collect();
    Ok(ConvergenceStudy {
        dim,
        trials,
        mc_samples,
        points,
        fitted_slope: fit_loglog_slope(&fit_input),
        theoretical_slope: -2.0 / (dim as f64 - 1.0),
        zero_error_ns,
    })
}

/// Draws a rejected query whose exact closest counterfactual is uniform
/// over the sphere patch: direction `u` uniform on the positive-orthant
/// unit sphere (folded Gaussian), query at radius ρ ∈ (1, wall) along the
/// inward ray from the center (1, …, 1).
fn sample_rejected_ray_query(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let folded: Vec<f64> = (0..dim)
            .map(|_| {
                let g: f64 = rng.sample(rand_distr::StandardNormal);
                g.abs()
            })
            .collect();
        let norm = crate::linalg::norm2(&folded);
        if norm < 1e-12 {
            continue;
        }
        let direction: Vec<f64> = folded.iter().map(|v| v / norm).collect();
        let max_component = direction.iter().cloned().fold(0.0f64, f64::max);
        let wall = 1.0 / max_component;
        if wall <= 1.0 + 1e-9 {
            // Ray grazes a cube face; no rejected segment to sample from.
            continue;
        }
        let rho = 1.0 + (wall - 1.0) * rng.random::<f64>();
        return direction.iter().map(|u| 1.0 - rho * u).collect();
    }
}

/// Least-squares slope through (x, y) pairs; `None` below two points.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = points
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Outcome of the clamp-bound check: with Γ a global Lipschitz bound on
/// both output probabilities, `max|m̃ − m| ≤ Γ·δ + μ` over the boundary is
/// a triangle inequality, so `holds` failing indicates a real bug.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClampDiagnostic {
    /// Cover radius: max distance from a boundary sample to its nearest
    /// counterfactual.
    pub delta: f64,
    /// Max |m̃(w) − m(w)| over the counterfactuals.
    pub mu: f64,
    /// Sum of the two models' probability Lipschitz bounds: spectral-norm
    /// products scaled by the sigmoid slope bound 1/4.
    pub gamma: f64,
    /// Max |m̃(x) − m(x)| over the boundary samples.
    pub max_deviation: f64,
    /// Γ·δ + μ.
    pub bound: f64,
    pub holds: bool,
}

/// Evaluates the clamp bound for a target/surrogate pair against the
/// counterfactuals used in training and a set of target boundary samples.
pub fn clamp_bound_diagnostic(
    target: &DenseNetwork,
    surrogate: &DenseNetwork,
    cf_points: &[Vec<f64>],
    boundary_samples: &[Vec<f64>],
) -> Result<ClampDiagnostic> {
    if cf_points.is_empty() {
        return Err(Error::InvalidInput("no counterfactual points".into()));
    }
    if boundary_samples.is_empty() {
        return Err(Error::InvalidInput("no boundary samples".into()));
    }
    let mut mu = 0.0f64;
    for w in cf_points {
        mu = mu.max((surrogate.forward(w)? - target.forward(w)?).abs());
    }
    let mut delta = 0.0f64;
    let mut max_deviation = 0.0f64;
    for x in boundary_samples {
        let nearest = cf_points
            .iter()
            .map(|w| euclidean(x, w))
            .fold(f64::INFINITY, f64::min);
        delta = delta.max(nearest);
        max_deviation = max_deviation.max((surrogate.forward(x)? - target.forward(x)?).abs());
    }
    let gamma = 0.25 * (target.lipschitz_upper_bound() + surrogate.lipschitz_upper_bound());
    let bound = gamma * delta + mu;
    Ok(ClampDiagnostic {
        delta,
        mu,
        gamma,
        max_deviation,
        bound,
        holds: max_deviation <= bound + 1e-12,
    })
}

/// Locates `count` points on the model's decision boundary by bisecting
/// between random pairs with opposite predictions.
pub fn sample_boundary_points<M>(model: &M, count: usize, seed: u64) -> Result<Vec<Vec<f64>>>
where
    M: BinaryClassifier + ?Sized,
{
    let dim = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let budget = count.saturating_mul(2000).max(10_000);
    while points.len() < count {
        let a: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        attempts += 1;
        if attempts > budget {
            return Err(Error::InvalidInput(
                "could not locate the decision boundary; model may be constant".into(),
            ));
        }
        let class_a = model.predict_class(&a)?;
        if class_a == model.predict_class(&b)? {
            continue;
        }
        // Invariant: lo and hi predict differently.
        let (mut lo, mut hi) = (a, b);
        for _ in 0..80 {
            let mid: Vec<f64> = lo.iter().zip(&hi).map(|(x, y)| 0.5 * (x + y)).collect();
            if model.predict_class(&mid)? == class_a {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        points.push(hi);
    }
    Ok(points)
}

/// Flat CSV row for coverage reports.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CoverageRow {
    pub n: usize,
    pub epsilon: f64,
    pub k_eps: usize,
    pub v_star: f64,
    pub bound: f64,
    pub empirical_success: f64,
}

impl CoverageReport {
    /// CSV row form; requires the success experiment to have run.
    pub fn to_row(&self) -> Result<CoverageRow> {
        match (self.n, self.empirical_success, self.bound) {
            (Some(n), Some(empirical_success), Some(bound)) => Ok(CoverageRow {
                n,
                epsilon: self.epsilon,
                k_eps: self.k_eps,
                v_star: self.v_star,
                bound,
                empirical_success,
            }),
            _ => Err(Error::InvalidInput(
                "coverage report carries no success experiment".into(),
            )),
        }
    }
}

/// Flat CSV row for convergence studies.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub error: f64,
    pub log_n: f64,
    pub log_error: f64,
}

impl ConvergenceStudy {
    pub fn rows(&self) -> Vec<ConvergenceRow> {
        self.points
            .iter()
            .map(|p| ConvergenceRow {
                n: p.n,
                error: p.mean_error,
                log_n: (p.n as f64).ln(),
                log_error: p.mean_error.ln(),
            })
            .collect()
    }
}
