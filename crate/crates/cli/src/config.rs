//! Pipeline configuration: one TOML document holding the input paths and
//! analysis thresholds, with every value overridable by a command-line
//! flag. Relative paths in the file are resolved against the file's own
//! directory, so a corpus directory stays relocatable; relative paths given
//! as flags are resolved against the working directory as typed.
//!
//! Validation runs in full before any stage: threshold ranges are checked
//! against their owning modules' bounds and every referenced input must
//! already exist, each error naming the configuration key it came from.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fpscope_core::ingest::DEFAULT_MIN_AUDIENCE;
use fpscope_core::sdkmatch::{DEFAULT_CLASS_SIMILARITY, DEFAULT_SUPPORT};
use fpscope_core::stats::DEFAULT_TOP_K;
use fpscope_core::taint::{Scope, TaintOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Which artifact encodings `run` emits for the tabular statistics.
/// Structural artifacts (bundles, findings, verdicts, matches) are always
/// JSON; the binary index is always binary.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

impl OutputFormat {
    pub fn wants_json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }

    pub fn wants_csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
}

fn parse_scope(value: &str) -> Result<Scope, String> {
    match value {
        "MAIN_ONLY" => Ok(Scope::MainOnly),
        "WHOLE_BUNDLE" => Ok(Scope::WholeBundle),
        other => Err(format!("expected MAIN_ONLY or WHOLE_BUNDLE, got {other:?}")),
    }
}

/// Flag overrides; every configuration value has one. All are optional and
/// win over the file when present.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Dependency manifest directory
    #[arg(long, value_name = "DIR")]
    pub manifests: Option<PathBuf>,
    /// SDK IR corpus directory
    #[arg(long, value_name = "DIR")]
    pub sdk_ir: Option<PathBuf>,
    /// App IR directory
    #[arg(long, value_name = "DIR")]
    pub app_ir: Option<PathBuf>,
    /// App metadata file (JSON lines)
    #[arg(long, value_name = "FILE")]
    pub app_metadata: Option<PathBuf>,
    /// Taint source/sink/propagator configuration (JSON)
    #[arg(long, value_name = "FILE")]
    pub taint_config: Option<PathBuf>,
    /// Convergence rule file (JSON)
    #[arg(long, value_name = "FILE")]
    pub rules: Option<PathBuf>,
    /// SDK label file (CSV)
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Signal-class map (CSV)
    #[arg(long, value_name = "FILE")]
    pub signal_map: Option<PathBuf>,
    /// Rating matrix for the agreement statistic (CSV)
    #[arg(long, value_name = "FILE")]
    pub ratings: Option<PathBuf>,
    /// Where source APIs generate taint: MAIN_ONLY or WHOLE_BUNDLE
    #[arg(long, value_name = "SCOPE", value_parser = parse_scope)]
    pub scope: Option<Scope>,
    /// Call-site context depth k (0-2)
    #[arg(long, value_name = "K")]
    pub context_depth: Option<u8>,
    /// Treat unknown external APIs as taint propagators
    #[arg(long, value_name = "BOOL")]
    pub taint_unknown_apis: Option<bool>,
    /// Class cosine-similarity floor, in (0, 1]
    #[arg(long, value_name = "ETA")]
    pub class_similarity: Option<f64>,
    /// SDK support floor (matched class share), in (0, 1]
    #[arg(long, value_name = "GAMMA")]
    pub support: Option<f64>,
    /// Keep apps with audience strictly above this floor
    #[arg(long, value_name = "N")]
    pub min_audience: Option<u64>,
    /// Top-K apps by audience entering co-occurrence
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    /// Distinct-signal count at which an SDK is flagged; defaults to the
    /// smallest threshold carried by the convergence rules
    #[arg(long, value_name = "N")]
    pub threshold: Option<usize>,
    /// Worker threads for per-SDK and per-app work
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineToml {
    paths: PathsToml,
    #[serde(default)]
    taint: TaintToml,
    #[serde(default)]
    matching: MatchingToml,
    #[serde(default)]
    corpus: CorpusToml,
    #[serde(default)]
    stats: StatsToml,
    #[serde(default)]
    classify: ClassifyToml,
    #[serde(default)]
    output: OutputToml,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsToml {
    manifests: PathBuf,
    sdk_ir: PathBuf,
    app_ir: PathBuf,
    app_metadata: PathBuf,
    taint_config: PathBuf,
    rules: PathBuf,
    labels: PathBuf,
    signal_map: PathBuf,
    ratings: PathBuf,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaintToml {
    scope: Option<Scope>,
    context_depth: Option<u8>,
    taint_unknown_apis: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchingToml {
    class_similarity: Option<f64>,
    support: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusToml {
    min_audience: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsToml {
    top_k: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyToml {
    threshold: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputToml {
    dir: Option<PathBuf>,
    format: Option<OutputFormat>,
}

/// The fully resolved configuration a command runs with: file values,
/// flag overrides, and defaults merged; all paths resolved.
#[derive(Clone, Debug)]
pub struct Effective {
    pub config_path: PathBuf,
    pub manifests: PathBuf,
    pub sdk_ir: PathBuf,
    pub app_ir: PathBuf,
    pub app_metadata: PathBuf,
    pub taint_config: PathBuf,
    pub rules: PathBuf,
    pub labels: PathBuf,
    pub signal_map: PathBuf,
    pub ratings: PathBuf,
    pub scope: Scope,
    pub taint_options: TaintOptions,
    pub class_similarity: f64,
    pub support: f64,
    pub min_audience: u64,
    pub top_k: usize,
    /// Explicit classification threshold; `None` derives it from the rules.
    pub threshold: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub jobs: usize,
}

/// Reads, merges, and validates the configuration. Every failure here is a
/// configuration error (exit 2); nothing has run yet.
pub fn load(config_path: &Path, overrides: &Overrides) -> Result<Effective, CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|err| CliError::config(format!("{}: {err}", config_path.display())))?;
    let parsed: PipelineToml = toml::from_str(&text)
        .map_err(|err| CliError::config(format!("{}: {err}", config_path.display())))?;
    let base = match config_path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let under = |file_value: PathBuf| -> PathBuf {
        if file_value.is_absolute() {
            file_value
        } else {
            base.join(file_value)
        }
    };
    // A path given as a flag is taken as typed; one from the file is
    // anchored at the file's directory.
    let pick = |flag: &Option<PathBuf>, file_value: PathBuf| -> PathBuf {
        match flag {
            Some(p) => p.clone(),
            None => under(file_value),
        }
    };

    let effective = Effective {
        config_path: config_path.to_path_buf(),
        manifests: pick(&overrides.manifests, parsed.paths.manifests),
        sdk_ir: pick(&overrides.sdk_ir, parsed.paths.sdk_ir),
        app_ir: pick(&overrides.app_ir, parsed.paths.app_ir),
        app_metadata: pick(&overrides.app_metadata, parsed.paths.app_metadata),
        taint_config: pick(&overrides.taint_config, parsed.paths.taint_config),
        rules: pick(&overrides.rules, parsed.paths.rules),
        labels: pick(&overrides.labels, parsed.paths.labels),
        signal_map: pick(&overrides.signal_map, parsed.paths.signal_map),
        ratings: pick(&overrides.ratings, parsed.paths.ratings),
        scope: overrides.scope.or(parsed.taint.scope).unwrap_or(Scope::MainOnly),
        taint_options: TaintOptions {
            context_depth: overrides
                .context_depth
                .or(parsed.taint.context_depth)
                .unwrap_or(TaintOptions::default().context_depth),
            taint_unknown_apis: overrides
                .taint_unknown_apis
                .or(parsed.taint.taint_unknown_apis)
                .unwrap_or(TaintOptions::default().taint_unknown_apis),
        },
        class_similarity: overrides
            .class_similarity
            .or(parsed.matching.class_similarity)
            .unwrap_or(DEFAULT_CLASS_SIMILARITY),
        support: overrides.support.or(parsed.matching.support).unwrap_or(DEFAULT_SUPPORT),
        min_audience: overrides
            .min_audience
            .or(parsed.corpus.min_audience)
            .unwrap_or(DEFAULT_MIN_AUDIENCE),
        top_k: overrides.top_k.or(parsed.stats.top_k).unwrap_or(DEFAULT_TOP_K),
        threshold: overrides.threshold.or(parsed.classify.threshold),
        out_dir: parsed.output.dir.map(under),
        format: parsed.output.format,
        jobs: overrides.jobs.unwrap_or_else(default_jobs),
    };
    effective.validate()?;
    Ok(effective)
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl Effective {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.class_similarity > 0.0 && self.class_similarity <= 1.0) {
            return Err(CliError::config(format!(
                "matching.class_similarity must be in (0, 1], got {}",
                self.class_similarity
            )));
        }
        if !(self.support > 0.0 && self.support <= 1.0) {
            return Err(CliError::config(format!(
                "matching.support must be in (0, 1], got {}",
                self.support
            )));
        }
        if self.taint_options.context_depth > 2 {
            return Err(CliError::config(format!(
                "taint.context_depth must be 0-2, got {}",
                self.taint_options.context_depth
            )));
        }
        if self.top_k == 0 {
            return Err(CliError::config("stats.top_k must be at least 1".to_string()));
        }
        if self.threshold == Some(0) {
            return Err(CliError::config("classify.threshold must be at least 1".to_string()));
        }
        if self.jobs == 0 {
            return Err(CliError::config("jobs must be at least 1".to_string()));
        }
        for (key, path, want_dir) in [
            ("paths.manifests", &self.manifests, true),
            ("paths.sdk_ir", &self.sdk_ir, true),
            ("paths.app_ir", &self.app_ir, true),
            ("paths.app_metadata", &self.app_metadata, false),
            ("paths.taint_config", &self.taint_config, false),
            ("paths.rules", &self.rules, false),
            ("paths.labels", &self.labels, false),
            ("paths.signal_map", &self.signal_map, false),
            ("paths.ratings", &self.ratings, false),
        ] {
            let kind = if want_dir { "directory" } else { "file" };
            if !path.exists() {
                return Err(CliError::config(format!(
                    "{key}: no such {kind}: {}",
                    path.display()
                )));
            }
            if path.is_dir() != want_dir {
                return Err(CliError::config(format!(
                    "{key}: expected a {kind}: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Input paths as recorded in the run manifest.
    pub fn inputs_report(&self) -> InputsReport {
        InputsReport {
            config: self.config_path.display().to_string(),
            manifests: self.manifests.display().to_string(),
            sdk_ir: self.sdk_ir.display().to_string(),
            app_ir: self.app_ir.display().to_string(),
            app_metadata: self.app_metadata.display().to_string(),
            taint_config: self.taint_config.display().to_string(),
            rules: self.rules.display().to_string(),
            labels: self.labels.display().to_string(),
            signal_map: self.signal_map.display().to_string(),
            ratings: self.ratings.display().to_string(),
        }
    }

    /// Effective settings as recorded in the run manifest;
    /// `resolved_threshold` is the classification threshold actually used.
    pub fn settings_report(&self, resolved_threshold: usize, format: OutputFormat) -> SettingsReport {
        SettingsReport {
            scope: self.scope,
            context_depth: self.taint_options.context_depth,
            taint_unknown_apis: self.taint_options.taint_unknown_apis,
            class_similarity: self.class_similarity,
            support: self.support,
            min_audience: self.min_audience,
            top_k: self.top_k,
            threshold: resolved_threshold,
            format,
            jobs: self.jobs,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InputsReport {
    pub config: String,
    pub manifests: String,
    pub sdk_ir: String,
    pub app_ir: String,
    pub app_metadata: String,
    pub taint_config: String,
    pub rules: String,
    pub labels: String,
    pub signal_map: String,
    pub ratings: String,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SettingsReport {
    pub scope: Scope,
    pub context_depth: u8,
    pub taint_unknown_apis: bool,
    pub class_similarity: f64,
    pub support: f64,
    pub min_audience: u64,
    pub top_k: usize,
    pub threshold: usize,
    pub format: OutputFormat,
    pub jobs: usize,
}
