//! Experiment execution: seeded optimization runs fanned out over a worker
//! pool, per-run checkpoint CSVs with a union-normalized hypervolume
//! column, and the statistical comparison of two experiment directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use cpco_core::fad::build_fad;
use cpco_core::fm;
use cpco_core::metrics::{
    a12, hypervolume, mann_whitney_u, median, pareto_front, sample_sd, summarize_runs,
    Alternative, HvConfig, ParetoFront, RunSeries,
};
use cpco_core::sat::classify_features;
use cpco_core::{
    CpcoSuite, RuleGenerator, RunResult, SearchMode, SearchParams, Searcher,
};

use crate::config::{render_manifest, ExperimentConfig};

/// Objective dimensions carried into hypervolume: the three quality
/// objectives; the helper objective is excluded by construction because
/// checkpoint fronts only store three coordinates.
const FRONT_DIMENSIONS: usize = 3;

struct CompletedRun {
    mode: SearchMode,
    index: usize,
    result: RunResult,
}

/// Executes every configured run, writes CSVs, fronts, summaries, and the
/// manifest. Returns whether suite generation was truncated by its time
/// budget (the caller maps that to the warning exit status).
pub fn run_optimize(
    config: &ExperimentConfig,
    suite_path: Option<&Path>,
    jobs: usize,
) -> Result<bool> {
    let text = fs::read_to_string(&config.model_path)
        .with_context(|| format!("reading {}", config.model_path.display()))?;
    let fm = fm::parse(&text)
        .with_context(|| format!("parsing {}", config.model_path.display()))?;
    let cls = classify_features(&fm).context("classifying features")?;
    let attrs = cpco_core::generate_attributes(&fm, config.attribute_seed);

    let needs_suite = config.modes.contains(&SearchMode::Cpco);
    let mut suite_source = "none".to_string();
    let suite: Option<CpcoSuite> = if let Some(path) = suite_path {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        suite_source = path.display().to_string();
        Some(CpcoSuite::from_json(&text, &fm)?)
    } else if needs_suite {
        let fad = build_fad(&fm, &cls);
        suite_source = "generated".to_string();
        Some(RuleGenerator::new(&fm, &cls, &fad).generate_suite(
            config.variant_limit,
            config.base_seed,
            std::time::Duration::from_secs(config.time_budget_s),
        ))
    } else {
        None
    };
    if needs_suite && suite.as_ref().is_none_or(|s| s.variant_count() == 0) {
        bail!("cpco mode requires a non-empty operation suite");
    }
    let truncated = suite.as_ref().is_some_and(|s| s.truncated);

    let descriptors: Vec<(SearchMode, usize)> = config
        .modes
        .iter()
        .flat_map(|&mode| (0..config.runs).map(move |i| (mode, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building worker pool")?;
    let runs: Vec<CompletedRun> = pool.install(|| {
        descriptors
            .par_iter()
            .map(|&(mode, index)| {
                let params = SearchParams {
                    population: config.population,
                    evaluations: config.evaluations,
                    kappa: config.kappa,
                    crossover_rate: config.crossover_rate,
                    seed: config.base_seed + index as u64,
                    mode,
                };
                let searcher = Searcher::new(&fm, &cls, &attrs, suite.as_ref(), params)?;
                Ok(CompletedRun {
                    mode,
                    index,
                    result: searcher.run(),
                })
            })
            .collect::<Result<_>>()
    })?;

    // Hypervolume is normalized against the union of every front this
    // invocation produced, so values are comparable across modes and runs.
    let union: Vec<Vec<f64>> = runs
        .iter()
        .flat_map(|r| &r.result.checkpoints)
        .flat_map(|c| c.front.points())
        .cloned()
        .collect();
    let cfg = HvConfig::over_dimensions(pareto_front(&union), (0..FRONT_DIMENSIONS).collect());

    for &mode in &config.modes {
        fs::create_dir_all(config.output_dir.join(mode.to_string()))?;
    }
    let mut series_by_mode: Vec<(SearchMode, Vec<RunSeries>)> =
        config.modes.iter().map(|&m| (m, Vec::new())).collect();
    for run in &runs {
        let dir = config.output_dir.join(run.mode.to_string());
        let series = write_run_files(&dir, run, &cfg)?;
        series_by_mode
            .iter_mut()
            .find(|(m, _)| *m == run.mode)
            .expect("mode is configured")
            .1
            .push(series);
    }
    for (mode, series) in &series_by_mode {
        let summary = summarize_runs(series).context("aggregating run series")?;
        fs::write(
            config.output_dir.join(mode.to_string()).join("summary.csv"),
            summary,
        )?;
        let finals: Vec<f64> = series.iter().map(|s| *s.hv.last().unwrap()).collect();
        println!(
            "{mode}: {} runs, median final hv={}",
            series.len(),
            median(&finals)
        );
    }

    let mut extras = vec![
        ("jobs", jobs.to_string()),
        ("suite_source", suite_source),
    ];
    if let Some(suite) = &suite {
        let missing = suite.log.iter().filter(|e| e.millis.is_none()).count();
        extras.push(("suite_rules", suite.rule_count().to_string()));
        extras.push(("suite_variants", suite.variant_count().to_string()));
        extras.push(("suite_truncated", suite.truncated.to_string()));
        extras.push(("suite_missing", missing.to_string()));
    }
    let manifest_path = config.output_dir.join("manifest.txt");
    fs::write(&manifest_path, render_manifest(config, &extras))?;
    println!("wrote {}", manifest_path.display());
    Ok(truncated)
}

/// Writes `run<i>.csv` (checkpoints) and `run<i>.front.csv` (final front
/// points) and returns the run's series for aggregation.
fn write_run_files(dir: &Path, run: &CompletedRun, cfg: &HvConfig) -> Result<RunSeries> {
    let mut series = RunSeries {
        nfe: Vec::new(),
        hv: Vec::new(),
        time_s: Vec::new(),
    };
    let csv_path = dir.join(format!("run{}.csv", run.index));
    let mut writer = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    writer.write_record(["NFE", "HV", "TimeSeconds", "ValidRatio"])?;
    for checkpoint in &run.result.checkpoints {
        let hv = hypervolume(&checkpoint.front, cfg);
        writer.write_record([
            checkpoint.nfe.to_string(),
            hv.to_string(),
            checkpoint.elapsed_s.to_string(),
            checkpoint.valid_ratio.to_string(),
        ])?;
        series.nfe.push(checkpoint.nfe);
        series.hv.push(hv);
        series.time_s.push(checkpoint.elapsed_s);
    }
    writer.flush()?;

    let front_path = dir.join(format!("run{}.front.csv", run.index));
    let mut writer = csv::Writer::from_path(&front_path)
        .with_context(|| format!("creating {}", front_path.display()))?;
    let last = run.result.checkpoints.last().expect("at least one checkpoint");
    for point in last.front.points() {
        writer.write_record(point.iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(series)
}

struct Side {
    label: String,
    fronts: Vec<ParetoFront>,
    grid: Vec<u64>,
}

fn load_side(dir: &Path) -> Result<Side> {
    let mut indices = Vec::new();
    for entry in
        fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?
    {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(index) = name
            .strip_prefix("run")
            .and_then(|rest| rest.strip_suffix(".front.csv"))
            .and_then(|digits| digits.parse::<usize>().ok())
        {
            indices.push(index);
        }
    }
    indices.sort_unstable();
    if indices.is_empty() {
        bail!("no run outputs (run<i>.front.csv) found in {}", dir.display());
    }

    let mut fronts = Vec::new();
    let mut grid: Option<Vec<u64>> = None;
    for &index in &indices {
        let front_path = dir.join(format!("run{index}.front.csv"));
        let points = read_points(&front_path)?;
        fronts.push(pareto_front(&points));

        let csv_path = dir.join(format!("run{index}.csv"));
        let mut reader = csv::Reader::from_path(&csv_path)
            .with_context(|| format!("reading {}", csv_path.display()))?;
        let mut nfe = Vec::new();
        for record in reader.records() {
            let record = record?;
            let field = record.get(0).context("empty checkpoint row")?;
            nfe.push(
                field
                    .parse::<u64>()
                    .with_context(|| format!("bad NFE `{field}` in {}", csv_path.display()))?,
            );
        }
        match &grid {
            None => grid = Some(nfe),
            Some(existing) if *existing == nfe => {}
            Some(_) => bail!(
                "mismatched NFE grids within {} (run {index})",
                dir.display()
            ),
        }
    }
    Ok(Side {
        label: dir.display().to_string(),
        fronts,
        grid: grid.expect("at least one run"),
    })
}

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let point: Vec<f64> = record
            .iter()
            .map(|field| {
                field
                    .trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad coordinate `{field}` in {}", path.display()))
            })
            .collect::<Result<_>>()?;
        points.push(point);
    }
    Ok(points)
}

/// Recomputes final hypervolume per run against the union reference front
/// of both sides, then reports medians, SDs, both one-sided p-values, and
/// the A12 effect size.
pub fn run_compare(dir_a: &Path, dir_b: &Path, out: Option<&Path>) -> Result<()> {
    let a = load_side(dir_a)?;
    let b = load_side(dir_b)?;
    if a.grid != b.grid {
        bail!(
            "mismatched NFE grids between {} and {}",
            dir_a.display(),
            dir_b.display()
        );
    }

    let union: Vec<Vec<f64>> = a
        .fronts
        .iter()
        .chain(&b.fronts)
        .flat_map(|front| front.points())
        .cloned()
        .collect();
    let width = union.first().map_or(FRONT_DIMENSIONS, |p| p.len());
    let cfg = HvConfig::over_dimensions(pareto_front(&union), (0..width).collect());
    let hv_of = |side: &Side| -> Vec<f64> {
        side.fronts.iter().map(|f| hypervolume(f, &cfg)).collect()
    };
    let hv_a = hv_of(&a);
    let hv_b = hv_of(&b);

    let p_less = mann_whitney_u(&hv_a, &hv_b, Alternative::Less);
    let p_greater = mann_whitney_u(&hv_a, &hv_b, Alternative::Greater);
    let effect = a12(&hv_a, &hv_b);

    let label_width = a.label.len().max(b.label.len()).max("side".len());
    println!("   {:<label_width$}  runs  hv-median  hv-sd", "side");
    for (tag, side, hv) in [("A", &a, &hv_a), ("B", &b, &hv_b)] {
        println!(
            "{tag}: {:<label_width$} {:>5}  {:>9.6}  {:.6}",
            side.label,
            hv.len(),
            median(hv),
            sample_sd(hv),
        );
    }
    println!("p(A<B)={p_less:.6}  p(A>B)={p_greater:.6}  A12(A,B)={effect:.6}");

    if let Some(path) = out {
        let mut writer = csv::Writer::from_path(path)
            .with_context(|| format!("creating {}", path.display()))?;
        writer.write_record([
            "SideA", "SideB", "RunsA", "RunsB", "HVMedianA", "HVMedianB", "HVSDA", "HVSDB",
            "PALessB", "PAGreaterB", "A12",
        ])?;
        writer.write_record([
            a.label.clone(),
            b.label.clone(),
            hv_a.len().to_string(),
            hv_b.len().to_string(),
            median(&hv_a).to_string(),
            median(&hv_b).to_string(),
            sample_sd(&hv_a).to_string(),
            sample_sd(&hv_b).to_string(),
            p_less.to_string(),
            p_greater.to_string(),
            effect.to_string(),
        ])?;
        writer.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Reads a headerless CSV of objective vectors.
pub fn read_front_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    read_points(path)
}

/// A destination for command output: a file or standard output.
pub fn write_output(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{content}"),
    }
    Ok(())
}
