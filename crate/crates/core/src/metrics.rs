//! Pareto-front extraction, exact hypervolume, and the rank statistics used
//! to compare optimization runs (Mann-Whitney U and the Vargha-Delaney A12
//! effect size). All objectives are minimized; hypervolume is reported so
//! that higher is better.

use itertools::Itertools;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// A set of pairwise nondominated objective vectors (minimization). Built
/// via [`pareto_front`], which establishes the invariant.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct ParetoFront {
    points: Vec<Vec<f64>>,
}

impl ParetoFront {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// True when `a` is at least as good as `b` everywhere and better
/// somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Extracts the maximal nondominated subset, collapsing duplicates. Points
/// are returned in lexicographic order, so the result is independent of
/// input order.
pub fn pareto_front(points: &[Vec<f64>]) -> ParetoFront {
    if let Some(first) = points.first() {
        assert!(
            points.iter().all(|p| p.len() == first.len()),
            "objective vectors must have equal lengths"
        );
    }
    let mut sorted: Vec<Vec<f64>> = points.to_vec();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    sorted.dedup();
    let kept: Vec<Vec<f64>> = sorted
        .iter()
        .filter(|p| !sorted.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect();
    ParetoFront { points: kept }
}

/// Normalization and reference settings for hypervolume.
///
/// Objective values are mapped to [0,1] per included dimension using the
/// min/max of `reference_front` (the union front of everything being
/// compared), then measured against `reference_point` (one coordinate per
/// included dimension, conventionally 1.1).
#[derive(Clone, PartialEq, Debug)]
pub struct HvConfig {
    pub reference_front: ParetoFront,
    pub reference_point: Vec<f64>,
    pub dimensions: Vec<usize>,
}

impl HvConfig {
    /// Standard configuration: the given dimensions, reference point 1.1
    /// in each.
    pub fn over_dimensions(reference_front: ParetoFront, dimensions: Vec<usize>) -> Self {
        HvConfig {
            reference_front,
            reference_point: vec![1.1; dimensions.len()],
            dimensions,
        }
    }
}

/// Hypervolume value plus the dimensions that were dropped because the
/// normalization bounds were degenerate (max = min).
#[derive(Clone, PartialEq, Debug)]
pub struct HvReport {
    pub value: f64,
    pub dropped_dimensions: Vec<usize>,
}

/// Normalized hypervolume; see [`hypervolume_report`] for the degenerate
/// dimension report.
pub fn hypervolume(front: &ParetoFront, cfg: &HvConfig) -> f64 {
    hypervolume_report(front, cfg).value
}

pub fn hypervolume_report(front: &ParetoFront, cfg: &HvConfig) -> HvReport {
    assert_eq!(
        cfg.reference_point.len(),
        cfg.dimensions.len(),
        "one reference coordinate per included dimension"
    );
    // Per included dimension: bounds from the reference front, or dropped.
    let mut bounds = Vec::new();
    let mut reference = Vec::new();
    let mut dropped = Vec::new();
    for (k, &dim) in cfg.dimensions.iter().enumerate() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in cfg.reference_front.points() {
            lo = lo.min(p[dim]);
            hi = hi.max(p[dim]);
        }
        if hi > lo {
            bounds.push((dim, lo, hi));
            reference.push(cfg.reference_point[k]);
        } else {
            dropped.push(dim);
        }
    }
    if bounds.is_empty() || front.is_empty() {
        return HvReport {
            value: 0.0,
            dropped_dimensions: dropped,
        };
    }
    let normalized: Vec<Vec<f64>> = front
        .points()
        .iter()
        .map(|p| {
            bounds
                .iter()
                .map(|&(dim, lo, hi)| ((p[dim] - lo) / (hi - lo)).clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    HvReport {
        value: hypervolume_exact(&normalized, &reference),
        dropped_dimensions: dropped,
    }
}

/// Exact dominated hypervolume of `points` w.r.t. `reference`
/// (minimization; no normalization). Computed by recursive slicing along
/// the last dimension: between consecutive coordinate values, the dominated
/// cross-section is the hypervolume of the accumulated projections one
/// dimension down.
pub fn hypervolume_exact(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let inside: Vec<Vec<f64>> = pareto_front(points)
        .points()
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x < r))
        .cloned()
        .collect();
    slice_volume(inside, reference)
}

fn slice_volume(mut points: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let d = reference.len();
    if d == 1 {
        let best = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        return reference[0] - best;
    }
    let last = d - 1;
    points.sort_by(|a, b| a[last].total_cmp(&b[last]));
    let mut total = 0.0;
    for i in 0..points.len() {
        let depth = if i + 1 < points.len() {
            points[i + 1][last] - points[i][last]
        } else {
            reference[last] - points[i][last]
        };
        if depth <= 0.0 {
            continue;
        }
        let slab: Vec<Vec<f64>> = points[..=i].iter().map(|p| p[..last].to_vec()).collect();
        let cross_section = pareto_front(&slab).points().to_vec();
        total += depth * slice_volume(cross_section, &reference[..last]);
    }
    total
}

/// Direction of the one-sided Mann-Whitney U alternative hypothesis.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Alternative {
    /// H1: values in the first sample tend to be smaller.
    Less,
    /// H1: values in the first sample tend to be greater.
    Greater,
}

/// Midranks of the pooled sample, in pooled-sort order, alongside the
/// permutation that sorts the pool.
fn midranks(pool: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&i, &j| pool[i].total_cmp(&pool[j]));
    let mut ranks = vec![0.0; pool.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pool[order[j + 1]] == pool[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// U statistic of the first sample: rank-sum minus its minimum, counting
/// ties as half. Equals `#{a_i > b_j} + 0.5·#{a_i = b_j}`.
pub fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let pool: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pool);
    let rank_sum: f64 = ranks[..a.len()].iter().sum();
    rank_sum - (a.len() * (a.len() + 1)) as f64 / 2.0
}

/// One-sided Mann-Whitney U test with midrank tie handling. Exact
/// enumeration over all rank splits for pooled sizes ≤ 16; tie-corrected
/// normal approximation with continuity correction otherwise. A pooled
/// sample with no variation yields p = 1.0 (no evidence either way).
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "both samples must be drawn");
    let (n, m) = (a.len(), b.len());
    let pool: Vec<f64> = a.iter().chain(b).copied().collect();
    if pool.iter().all(|&x| x == pool[0]) {
        return 1.0;
    }
    let ranks = midranks(&pool);
    let observed = ranks[..n].iter().sum::<f64>() - (n * (n + 1)) as f64 / 2.0;

    if n + m <= 16 {
        // Distribution of U under H0: every choice of which pooled ranks
        // belong to the first sample is equally likely.
        let mut extreme = 0usize;
        let mut total = 0usize;
        for split in (0..n + m).combinations(n) {
            let u = split.iter().map(|&i| ranks[i]).sum::<f64>()
                - (n * (n + 1)) as f64 / 2.0;
            let hit = match alternative {
                Alternative::Less => u <= observed,
                Alternative::Greater => u >= observed,
            };
            extreme += usize::from(hit);
            total += 1;
        }
        return extreme as f64 / total as f64;
    }

    let nm = (n * m) as f64;
    let total = (n + m) as f64;
    let mean = nm / 2.0;
    // Tie correction over the pooled rank groups.
    let mut tie_term = 0.0;
    let mut sorted = pool.clone();
    sorted.sort_by(|x, y| x.total_cmp(y));
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let variance = nm / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let sd = variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    match alternative {
        Alternative::Less => normal.cdf((observed - mean + 0.5) / sd),
        Alternative::Greater => 1.0 - normal.cdf((observed - mean - 0.5) / sd),
    }
}

/// Vargha-Delaney effect size: probability that a draw from `a` exceeds a
/// draw from `b`, counting ties as half.
pub fn a12(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "both samples must be drawn");
    let mut score = 0.0;
    for x in a {
        for y in b {
            score += match x.total_cmp(y) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    score / (a.len() * b.len()) as f64
}

/// One run's checkpoint series, aligned by evaluation count.
#[derive(Clone, PartialEq, Debug)]
pub struct RunSeries {
    pub nfe: Vec<u64>,
    pub hv: Vec<f64>,
    pub time_s: Vec<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SummarizeError {
    #[error("no runs to summarize")]
    Empty,
    #[error("runs disagree on the evaluation grid or series lengths")]
    MisalignedGrids,
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Sample standard deviation (n−1 denominator); 0.0 for a single value.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Aggregates per-run checkpoint series into a plot-ready CSV with one row
/// per evaluation count: median and sample SD of hypervolume and time.
pub fn summarize_runs(runs: &[RunSeries]) -> Result<String, SummarizeError> {
    let first = runs.first().ok_or(SummarizeError::Empty)?;
    for run in runs {
        if run.nfe != first.nfe
            || run.hv.len() != run.nfe.len()
            || run.time_s.len() != run.nfe.len()
        {
            return Err(SummarizeError::MisalignedGrids);
        }
    }
    let mut out = String::from("NFE,HV Median,Time Median (s),HV SD,Time SD\n");
    for (row, &nfe) in first.nfe.iter().enumerate() {
        let hv: Vec<f64> = runs.iter().map(|r| r.hv[row]).collect();
        let time: Vec<f64> = runs.iter().map(|r| r.time_s[row]).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            nfe,
            median(&hv),
            median(&time),
            sample_sd(&hv),
            sample_sd(&time),
        ));
    }
    Ok(out)
}

/// Convenience for tests and reports: the set of dimensions (0..d).
pub fn all_dimensions(d: usize) -> Vec<usize> {
    (0..d).collect()
}
