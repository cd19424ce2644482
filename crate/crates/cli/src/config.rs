//! Experiment configuration: a flat `key=value` file mirrored by command
//! line flags, with flags taking precedence.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use cpco_core::SearchMode;

/// Fully resolved experiment settings.
#[derive(Clone, PartialEq, Debug)]
pub struct ExperimentConfig {
    pub model_path: PathBuf,
    pub output_dir: PathBuf,
    pub attribute_seed: u64,
    pub base_seed: u64,
    pub runs: usize,
    pub population: usize,
    pub evaluations: usize,
    pub variant_limit: usize,
    pub time_budget_s: u64,
    pub kappa: f64,
    pub crossover_rate: f64,
    pub modes: Vec<SearchMode>,
}

/// Settings gathered so far; later sources override earlier ones.
#[derive(Clone, Default, Debug)]
pub struct ConfigBuilder {
    pub model_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub attribute_seed: Option<u64>,
    pub base_seed: Option<u64>,
    pub runs: Option<usize>,
    pub population: Option<usize>,
    pub evaluations: Option<usize>,
    pub variant_limit: Option<usize>,
    pub time_budget_s: Option<u64>,
    pub kappa: Option<f64>,
    pub crossover_rate: Option<f64>,
    pub modes: Option<Vec<SearchMode>>,
}

pub fn parse_modes(text: &str) -> Result<Vec<SearchMode>> {
    let mut modes = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let mode = SearchMode::from_str(part).map_err(|e| anyhow::anyhow!(e))?;
        if !modes.contains(&mode) {
            modes.push(mode);
        }
    }
    if modes.is_empty() {
        bail!("no search modes selected");
    }
    Ok(modes)
}

impl ConfigBuilder {
    /// Reads a `key=value` file. Blank lines and `#` comments are ignored;
    /// unknown keys are errors.
    pub fn load_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let context = || format!("line {}: invalid value for `{key}`", lineno + 1);
            match key {
                "model_path" => self.model_path = Some(PathBuf::from(value)),
                "output_dir" => self.output_dir = Some(PathBuf::from(value)),
                "attribute_seed" => self.attribute_seed = Some(value.parse().with_context(context)?),
                "base_seed" => self.base_seed = Some(value.parse().with_context(context)?),
                "runs" => self.runs = Some(value.parse().with_context(context)?),
                "population" => self.population = Some(value.parse().with_context(context)?),
                "evaluations" => self.evaluations = Some(value.parse().with_context(context)?),
                "variant_limit" => self.variant_limit = Some(value.parse().with_context(context)?),
                "time_budget_s" => self.time_budget_s = Some(value.parse().with_context(context)?),
                "kappa" => self.kappa = Some(value.parse().with_context(context)?),
                "crossover_rate" => self.crossover_rate = Some(value.parse().with_context(context)?),
                "modes" => self.modes = Some(parse_modes(value)?),
                other => bail!("line {}: unknown configuration key `{other}`", lineno + 1),
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<ExperimentConfig> {
        let config = ExperimentConfig {
            model_path: self
                .model_path
                .context("missing model path (config `model_path` or --model)")?,
            output_dir: self
                .output_dir
                .context("missing output directory (config `output_dir` or --output-dir)")?,
            attribute_seed: self.attribute_seed.unwrap_or(0),
            base_seed: self.base_seed.unwrap_or(0),
            runs: self.runs.unwrap_or(30),
            population: self.population.unwrap_or(100),
            evaluations: self.evaluations.unwrap_or(5000),
            variant_limit: self.variant_limit.unwrap_or(1),
            time_budget_s: self.time_budget_s.unwrap_or(600),
            kappa: self.kappa.unwrap_or(0.05),
            crossover_rate: self.crossover_rate.unwrap_or(0.8),
            modes: self
                .modes
                .unwrap_or_else(|| vec![SearchMode::Cpco, SearchMode::RepairBaseline]),
        };
        if config.runs == 0 {
            bail!("runs must be at least 1");
        }
        if !config.model_path.exists() {
            bail!("model file {} does not exist", config.model_path.display());
        }
        Ok(config)
    }
}

/// The manifest records every effective parameter of an invocation.
pub fn render_manifest(config: &ExperimentConfig, extras: &[(&str, String)]) -> String {
    let modes: Vec<String> = config.modes.iter().map(|m| m.to_string()).collect();
    let mut out = String::new();
    let mut push = |key: &str, value: String| {
        out.push_str(key);
        out.push('=');
        out.push_str(&value);
        out.push('\n');
    };
    push("model_path", config.model_path.display().to_string());
    push("output_dir", config.output_dir.display().to_string());
    push("attribute_seed", config.attribute_seed.to_string());
    push("base_seed", config.base_seed.to_string());
    push("runs", config.runs.to_string());
    push("population", config.population.to_string());
    push("evaluations", config.evaluations.to_string());
    push("variant_limit", config.variant_limit.to_string());
    push("time_budget_s", config.time_budget_s.to_string());
    push("kappa", config.kappa.to_string());
    push("crossover_rate", config.crossover_rate.to_string());
    push("modes", modes.join(","));
    for (key, value) in extras {
        push(key, value.clone());
    }
    out
}
