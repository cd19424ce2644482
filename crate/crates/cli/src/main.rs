//! `cpco` — analyze feature models, generate consistency-preserving
//! configuration operations, run optimization experiments, and compare
//! their results.
//!
//! Exit codes: 0 success, 1 user or input error, 2 completed with a
//! budget-truncation warning.

mod config;
mod experiment;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cpco_core::cpco::{parse_decision_label, rule_name};
use cpco_core::fad::{build_fad, to_dot, FeatureDecision};
use cpco_core::fm::{self, FeatureModel};
use cpco_core::metrics::{hypervolume_exact, hypervolume_report, pareto_front, HvConfig};
use cpco_core::sat::{classify_features, cnf_from_model, to_dimacs, FeatureClassification};
use cpco_core::RuleGenerator;

use config::ConfigBuilder;

#[derive(Parser)]
#[command(
    name = "cpco",
    version,
    about = "Consistency-preserving configuration operations for feature models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print model statistics: feature, group, core, and constraint
    /// counts, the number of valid configurations, and operation capacity.
    Analyze {
        /// Feature-model file.
        model: PathBuf,
        /// Stop counting configurations beyond this many.
        #[arg(long, default_value_t = 10_000_000)]
        config_cap: u64,
    },
    /// Generate the full operation suite and write it with a timing log.
    Gen {
        /// Feature-model file.
        model: PathBuf,
        /// Suite output path; the log is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Maximum number of flattened variants per rule.
        #[arg(long, default_value_t = 1)]
        limit: usize,
        /// Sampling seed for rules with more variants than the limit.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generation time budget in seconds.
        #[arg(long, default_value_t = 600)]
        budget_s: u64,
    },
    /// Flatten one decision's rule into concrete operation variants.
    Flatten {
        /// Feature-model file.
        model: PathBuf,
        /// Decision label like `Screen3-` or rule name like `De_Screen3`.
        decision: String,
        /// Maximum number of variants to produce.
        #[arg(long, default_value_t = 16)]
        limit: usize,
        /// Sampling seed used when the variant space exceeds the limit.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run seeded optimization experiments and write per-run CSVs.
    Optimize(OptimizeArgs),
    /// Compare two experiment directories (final hypervolume statistics).
    Compare {
        /// First experiment directory (one mode's output).
        dir_a: PathBuf,
        /// Second experiment directory.
        dir_b: PathBuf,
        /// Also write the statistics as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the hypervolume of a front CSV.
    Hv {
        /// Headerless CSV, one objective vector per line.
        front: PathBuf,
        /// Reference point coordinates, comma-separated.
        #[arg(long)]
        reference: Option<String>,
        /// Normalize against this reference front CSV first.
        #[arg(long)]
        normalize: Option<PathBuf>,
    },
    /// Export the model's CNF in DIMACS format.
    ExportDimacs {
        /// Feature-model file.
        model: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the activation diagram in Graphviz DOT format.
    ExportDot {
        /// Feature-model file.
        model: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct OptimizeArgs {
    /// key=value experiment file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature-model file to optimize.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Directory for per-mode run CSVs, fronts, summaries, and the manifest.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Seed for the synthetic quality attributes.
    #[arg(long)]
    attribute_seed: Option<u64>,
    /// Run r uses seed base_seed + r.
    #[arg(long)]
    base_seed: Option<u64>,
    /// Independent runs per mode.
    #[arg(long)]
    runs: Option<usize>,
    /// Population size (also the checkpoint interval).
    #[arg(long)]
    population: Option<usize>,
    /// Total evaluation budget per run.
    #[arg(long)]
    evaluations: Option<usize>,
    /// Maximum operation variants sampled per rule.
    #[arg(long)]
    variant_limit: Option<usize>,
    /// Suite generation budget in seconds.
    #[arg(long)]
    time_budget_s: Option<u64>,
    /// Fitness scaling factor of the indicator-based selector.
    #[arg(long)]
    kappa: Option<f64>,
    /// Probability of recombining each mating pair.
    #[arg(long)]
    crossover_rate: Option<f64>,
    /// Comma-separated subset of {cpco, repair-baseline}.
    #[arg(long)]
    modes: Option<String>,
    /// Load a pre-generated suite instead of generating one.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze { model, config_cap } => cmd_analyze(&model, config_cap),
        Command::Gen {
            model,
            out,
            limit,
            seed,
            budget_s,
        } => cmd_gen(&model, &out, limit, seed, budget_s),
        Command::Flatten {
            model,
            decision,
            limit,
            seed,
        } => cmd_flatten(&model, &decision, limit, seed),
        Command::Optimize(args) => cmd_optimize(args),
        Command::Compare { dir_a, dir_b, out } => {
            experiment::run_compare(&dir_a, &dir_b, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Hv {
            front,
            reference,
            normalize,
        } => cmd_hv(&front, reference.as_deref(), normalize.as_deref()),
        Command::ExportDimacs { model, out } => {
            let (fm, _) = load_model(&model)?;
            let content = to_dimacs(&cnf_from_model(&fm), &fm);
            experiment::write_output(out.as_ref(), &content)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportDot { model, out } => {
            let (fm, cls) = load_model(&model)?;
            let content = to_dot(&build_fad(&fm, &cls));
            experiment::write_output(out.as_ref(), &content)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_model(path: &PathBuf) -> Result<(FeatureModel, FeatureClassification)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let fm = fm::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    let cls = classify_features(&fm)
        .with_context(|| format!("classifying {}", path.display()))?;
    Ok((fm, cls))
}

fn cmd_analyze(model: &PathBuf, config_cap: u64) -> Result<ExitCode> {
    let text =
        fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
    let fm = fm::parse(&text).with_context(|| format!("parsing {}", model.display()))?;
    let started = Instant::now();
    let cls = classify_features(&fm)
        .with_context(|| format!("classifying {}", model.display()))?;
    let classify_ms = started.elapsed().as_millis();
    let configs = fm.count_valid_configurations(Some(config_cap));
    println!(
        "features={} groups={} core={} ctcs={} configs={} cpco-capacity={}",
        fm.feature_count(),
        fm.groups().len(),
        cls.core_count(),
        fm.constraints().len(),
        configs,
        2 * cls.real_optional().len(),
    );
    println!("classification: {classify_ms} ms");
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(
    model: &PathBuf,
    out: &PathBuf,
    limit: usize,
    seed: u64,
    budget_s: u64,
) -> Result<ExitCode> {
    let (fm, cls) = load_model(model)?;
    let fad = build_fad(&fm, &cls);
    let started = Instant::now();
    let suite = RuleGenerator::new(&fm, &cls, &fad).generate_suite(
        limit,
        seed,
        Duration::from_secs(budget_s),
    );
    let wall = started.elapsed().as_secs_f64();
    fs::write(out, suite.to_json(&fm)).with_context(|| format!("writing {}", out.display()))?;
    let log_path = out.with_extension("log");
    fs::write(&log_path, suite.render_log())
        .with_context(|| format!("writing {}", log_path.display()))?;
    println!(
        "rules={} variants={} truncated={} wall={wall:.2}s",
        suite.rule_count(),
        suite.variant_count(),
        suite.truncated,
    );
    println!("suite: {}", out.display());
    println!("log: {}", log_path.display());
    if suite.truncated {
        let missing = suite.log.iter().filter(|e| e.millis.is_none()).count();
        println!("missing={missing} (time budget exhausted)");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_flatten(model: &PathBuf, decision: &str, limit: usize, seed: u64) -> Result<ExitCode> {
    let (fm, cls) = load_model(model)?;
    let d = parse_decision(&fm, decision)?;
    if !cls.is_real_optional(d.feature) {
        bail!(
            "feature {} cannot be toggled (core or dead), so no operation exists",
            fm.name_of(d.feature)
        );
    }
    let fad = build_fad(&fm, &cls);
    let generator = RuleGenerator::new(&fm, &cls, &fad);
    let rule = generator.generate_vb_rule(d);
    let variants = generator.flatten(&rule, limit, seed);
    println!(
        "{}: satisfiable={} variants={}",
        rule.name,
        rule.satisfiable,
        variants.len()
    );
    for (i, variant) in variants.iter().enumerate() {
        let labels: Vec<String> = variant.decisions.iter().map(|d| d.label(&fm)).collect();
        println!("{i}: {}", labels.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}

/// Accepts `Screen3-` / `Screen3+` labels as well as `De_Screen3` /
/// `Act_Screen3` rule names.
fn parse_decision(fm: &FeatureModel, text: &str) -> Result<FeatureDecision> {
    if let Ok(d) = parse_decision_label(fm, text) {
        return Ok(d);
    }
    let (activate, name) = if let Some(rest) = text.strip_prefix("Act_") {
        (true, rest)
    } else if let Some(rest) = text.strip_prefix("De_") {
        (false, rest)
    } else {
        bail!("`{text}` is neither a decision label (Name+/-) nor a rule name (Act_/De_Name)");
    };
    let feature = fm
        .id_of(name)
        .with_context(|| format!("unknown feature `{name}`"))?;
    let d = FeatureDecision::new(feature, activate);
    debug_assert_eq!(rule_name(fm, d), text);
    Ok(d)
}

fn cmd_optimize(args: OptimizeArgs) -> Result<ExitCode> {
    let mut builder = ConfigBuilder::default();
    if let Some(path) = &args.config {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        builder
            .load_file(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
    }
    if let Some(v) = args.model {
        builder.model_path = Some(v);
    }
    if let Some(v) = args.output_dir {
        builder.output_dir = Some(v);
    }
    if let Some(v) = args.attribute_seed {
        builder.attribute_seed = Some(v);
    }
    if let Some(v) = args.base_seed {
        builder.base_seed = Some(v);
    }
    if let Some(v) = args.runs {
        builder.runs = Some(v);
    }
    if let Some(v) = args.population {
        builder.population = Some(v);
    }
    if let Some(v) = args.evaluations {
        builder.evaluations = Some(v);
    }
    if let Some(v) = args.variant_limit {
        builder.variant_limit = Some(v);
    }
    if let Some(v) = args.time_budget_s {
        builder.time_budget_s = Some(v);
    }
    if let Some(v) = args.kappa {
        builder.kappa = Some(v);
    }
    if let Some(v) = args.crossover_rate {
        builder.crossover_rate = Some(v);
    }
    if let Some(v) = &args.modes {
        builder.modes = Some(config::parse_modes(v)?);
    }
    let config = builder.finish()?;
    let truncated = experiment::run_optimize(&config, args.suite.as_deref(), args.jobs)?;
    Ok(if truncated {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_hv(
    front: &std::path::Path,
    reference: Option<&str>,
    normalize: Option<&std::path::Path>,
) -> Result<ExitCode> {
    let points = experiment::read_front_file(front)?;
    let width = points
        .first()
        .map(|p| p.len())
        .context("front file is empty")?;
    let reference = reference
        .map(|text| -> Result<Vec<f64>> {
            text.split(',')
                .map(|part| {
                    part.trim()
                        .parse::<f64>()
                        .with_context(|| format!("bad reference coordinate `{part}`"))
                })
                .collect()
        })
        .transpose()?;
    if let Some(r) = &reference {
        if r.len() != width {
            bail!(
                "reference has {} coordinates but the front has {width}",
                r.len()
            );
        }
    }
    match normalize {
        Some(path) => {
            let union = experiment::read_front_file(path)?;
            let mut cfg = HvConfig::over_dimensions(pareto_front(&union), (0..width).collect());
            if let Some(r) = reference {
                cfg.reference_point = r;
            }
            let report = hypervolume_report(&pareto_front(&points), &cfg);
            println!("hv={}", report.value);
            if !report.dropped_dimensions.is_empty() {
                let dims: Vec<String> = report
                    .dropped_dimensions
                    .iter()
                    .map(|d| d.to_string())
                    .collect();
                println!("dropped-dimensions={}", dims.join(","));
            }
        }
        None => {
            let reference =
                reference.context("--reference is required without --normalize")?;
            println!("hv={}", hypervolume_exact(&points, &reference));
        }
    }
    Ok(ExitCode::SUCCESS)
}
