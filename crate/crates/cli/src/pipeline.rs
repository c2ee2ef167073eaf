//! The analysis stages and the `run` orchestration. Each stage is a pure
//! function over the loaded inputs, shared verbatim between the single-stage
//! subcommands and the full pipeline, so the two agree byte-for-byte on
//! their artifacts.
//!
//! Stages run sequentially. Within the taint and match stages, per-SDK and
//! per-app work fans out across up to `jobs` threads; results are collected
//! back in input order, so neither the outputs nor the choice of reported
//! error depends on scheduling. All artifact writing is serialized and
//! atomic.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use fpscope_core::coflow::{
    classify, detect_all, CoFlowFinding, CoFlowRule, FingerprintVerdict,
    DEFAULT_CLASSIFY_THRESHOLD,
};
use fpscope_core::depgraph::{build_graph, resolve, ResolvedBundle};
use fpscope_core::ingest::SdkLabel;
use fpscope_core::ir::{SdkCoordinate, SdkIR};
use fpscope_core::sdkmatch::{build_index, match_app, write_index, MatchOutcome, SdkIndex};
use fpscope_core::stats::{
    cooccurrence, export_onehot_embeddings, krippendorff_alpha, prevalence,
    sensitive_signal_shares, CooccurrenceMatrix, EmbeddingMatrix, PrevalenceRow, PrevalenceTable,
    SignalShares,
};
use fpscope_core::taint::{analyze, FlowFinding, TaintAnalysis};
use serde::Serialize;

use crate::config::{Effective, InputsReport, OutputFormat, SettingsReport};
use crate::error::CliError;
use crate::inputs::{load_inputs, LoadedInputs};
use crate::output::{to_json, write_atomic};

/// Applies `f` to every item on up to `jobs` threads, returning results in
/// input order regardless of scheduling.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<Result<R, CliError>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, CliError> + Sync,
{
    let jobs = jobs.min(items.len()).max(1);
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R, CliError>>>> =
        Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(index) else { break };
                let result = f(item);
                slots.lock().expect("result slots poisoned")[index] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|slot| slot.expect("every index visited"))
        .collect()
}

/// Zips keys with per-item results into a map, surfacing the first error in
/// input order.
fn collect_keyed<K: Ord, V>(
    keys: impl IntoIterator<Item = K>,
    results: Vec<Result<V, CliError>>,
) -> Result<BTreeMap<K, V>, CliError> {
    keys.into_iter()
        .zip(results)
        .map(|(key, result)| result.map(|value| (key, value)))
        .collect()
}

/// Resolves a dependency bundle for each corpus SDK (or just `only`).
pub fn stage_resolve(
    inputs: &LoadedInputs,
    only: Option<&SdkCoordinate>,
) -> Result<BTreeMap<SdkCoordinate, ResolvedBundle>, CliError> {
    let graph = build_graph(&inputs.manifests).map_err(|err| CliError::input("resolve", err))?;
    inputs
        .sdks
        .keys()
        .filter(|coordinate| only.is_none_or(|main| main == *coordinate))
        .map(|coordinate| {
            resolve(&graph, coordinate)
                .map(|bundle| (coordinate.clone(), bundle))
                .map_err(|err| CliError::analysis("resolve", format!("{coordinate}: {err}")))
        })
        .collect()
}

/// Runs the taint analysis for every bundle, in parallel up to `jobs`.
/// Each bundle sees only the IR of its own kept coordinates; a kept
/// dependency without IR degrades to unresolved-callee diagnostics.
pub fn stage_taint(
    cfg: &Effective,
    inputs: &LoadedInputs,
    bundles: &BTreeMap<SdkCoordinate, ResolvedBundle>,
) -> Result<BTreeMap<SdkCoordinate, TaintAnalysis>, CliError> {
    let work: Vec<(&SdkCoordinate, &ResolvedBundle)> = bundles.iter().collect();
    let results = parallel_map(&work, cfg.jobs, |(coordinate, bundle)| {
        let code: BTreeMap<SdkCoordinate, SdkIR> = bundle
            .coordinates()
            .into_iter()
            .filter_map(|kept| inputs.sdks.get(&kept).cloned().map(|ir| (kept, ir)))
            .collect();
        analyze(bundle, &code, &inputs.taint_config, cfg.scope, &cfg.taint_options)
            .map_err(|err| CliError::analysis("taint", format!("{coordinate}: {err}")))
    });
    collect_keyed(work.iter().map(|(coordinate, _)| (*coordinate).clone()), results)
}

/// Runs convergence detection over every SDK's taint result.
pub fn stage_coflow(
    inputs: &LoadedInputs,
    analyses: &BTreeMap<SdkCoordinate, TaintAnalysis>,
) -> Result<BTreeMap<SdkCoordinate, Vec<CoFlowFinding>>, CliError> {
    analyses
        .iter()
        .map(|(coordinate, analysis)| {
            detect_all(&analysis.graph, &analysis.findings, &inputs.rules)
                .map(|findings| (coordinate.clone(), findings))
                .map_err(|err| CliError::analysis("coflow", format!("{coordinate}: {err}")))
        })
        .collect()
}

/// The classification threshold: an explicit setting wins; otherwise the
/// smallest threshold carried by the convergence rules; with no rules at
/// all, the library default.
pub fn classify_threshold(cfg: &Effective, rules: &[CoFlowRule]) -> usize {
    cfg.threshold.unwrap_or_else(|| {
        rules
            .iter()
            .map(|rule| rule.min_distinct_sources)
            .min()
            .unwrap_or(DEFAULT_CLASSIFY_THRESHOLD)
    })
}

/// Classifies every SDK from its convergence findings.
pub fn stage_classify(
    coflows: &BTreeMap<SdkCoordinate, Vec<CoFlowFinding>>,
    threshold: usize,
) -> Result<BTreeMap<SdkCoordinate, FingerprintVerdict>, CliError> {
    coflows
        .iter()
        .map(|(coordinate, findings)| {
            classify(coordinate, findings.clone(), threshold)
                .map(|verdict| (coordinate.clone(), verdict))
                .map_err(|err| CliError::analysis("classify", format!("{coordinate}: {err}")))
        })
        .collect()
}

/// Builds the class-vector index over the filtered corpus.
pub fn stage_index(inputs: &LoadedInputs) -> Result<SdkIndex, CliError> {
    let corpus: Vec<SdkIR> = inputs.sdks.values().cloned().collect();
    build_index(&corpus).map_err(|err| CliError::analysis("index", err))
}

/// Matches every analyzable app (surviving metadata plus IR) against the
/// index, in parallel up to `jobs`.
pub fn stage_match(
    cfg: &Effective,
    inputs: &LoadedInputs,
    index: &SdkIndex,
    only: Option<&str>,
) -> Result<BTreeMap<String, MatchOutcome>, CliError> {
    let kept: BTreeSet<&str> = inputs.apps.iter().map(|app| app.app_id.as_str()).collect();
    let work: Vec<(&String, &SdkIR)> = inputs
        .app_irs
        .iter()
        .filter(|(app_id, _)| kept.contains(app_id.as_str()))
        .filter(|(app_id, _)| only.is_none_or(|wanted| wanted == app_id.as_str()))
        .collect();
    let results = parallel_map(&work, cfg.jobs, |(app_id, ir)| {
        match_app(ir, index, cfg.class_similarity, cfg.support)
            .map_err(|err| CliError::analysis("match", format!("{app_id}: {err}")))
    });
    collect_keyed(work.iter().map(|(app_id, _)| (*app_id).clone()), results)
}

/// Detected SDK coordinates per app, the join key between matching and the
/// corpus statistics.
pub fn app_sdk_sets(
    matches: &BTreeMap<String, MatchOutcome>,
) -> BTreeMap<String, BTreeSet<SdkCoordinate>> {
    matches
        .iter()
        .map(|(app_id, outcome)| {
            let detected = outcome.matches.iter().map(|m| m.coordinate.clone()).collect();
            (app_id.clone(), detected)
        })
        .collect()
}

/// Runs the resolve → taint → coflow → classify chain and returns the
/// verdicts along with the threshold that produced them.
pub fn compute_verdicts(
    cfg: &Effective,
    inputs: &LoadedInputs,
) -> Result<(BTreeMap<SdkCoordinate, FingerprintVerdict>, usize), CliError> {
    let bundles = stage_resolve(inputs, None)?;
    let analyses = stage_taint(cfg, inputs, &bundles)?;
    let coflows = stage_coflow(inputs, &analyses)?;
    let threshold = classify_threshold(cfg, &inputs.rules);
    let verdicts = stage_classify(&coflows, threshold)?;
    Ok((verdicts, threshold))
}

/// Runs the index → match chain and returns detected SDKs per app.
pub fn compute_app_sdks(
    cfg: &Effective,
    inputs: &LoadedInputs,
) -> Result<BTreeMap<String, BTreeSet<SdkCoordinate>>, CliError> {
    let index = stage_index(inputs)?;
    let matches = stage_match(cfg, inputs, &index, None)?;
    Ok(app_sdk_sets(&matches))
}

/// The serializable per-SDK taint artifact (the flow graph itself stays
/// in memory; findings and diagnostics are what downstream tools consume).
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TaintReport<'a> {
    pub findings: &'a [FlowFinding],
    pub diagnostics: &'a [String],
}

/// Shapes taint analyses into their artifact form.
pub fn taint_artifact(
    analyses: &BTreeMap<SdkCoordinate, TaintAnalysis>,
) -> BTreeMap<&SdkCoordinate, TaintReport<'_>> {
    analyses
        .iter()
        .map(|(coordinate, analysis)| {
            let report = TaintReport {
                findings: &analysis.findings,
                diagnostics: &analysis.diagnostics,
            };
            (coordinate, report)
        })
        .collect()
}

/// The prevalence artifact: the table rows plus the data-quality
/// diagnostics (flagged SDKs missing a label).
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PrevalenceArtifact<'a> {
    pub rows: &'a BTreeMap<String, PrevalenceRow>,
    pub diagnostics: &'a [String],
}

impl<'a> PrevalenceArtifact<'a> {
    pub fn new(table: &'a PrevalenceTable) -> Self {
        PrevalenceArtifact { rows: &table.rows, diagnostics: &table.diagnostics }
    }
}

/// The agreement artifact: the statistic plus the matrix dimensions it was
/// computed over.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AlphaReport {
    pub alpha: f64,
    pub raters: usize,
    pub items: usize,
}

/// Computes the inter-rater agreement artifact.
pub fn alpha_report(inputs: &LoadedInputs) -> Result<AlphaReport, CliError> {
    let alpha = krippendorff_alpha(&inputs.ratings)
        .map_err(|err| CliError::analysis("stats", err))?;
    Ok(AlphaReport {
        alpha,
        raters: inputs.ratings.raters.len(),
        items: inputs.ratings.items.len(),
    })
}

/// Every corpus statistic the pipeline reports.
pub struct StatsBundle {
    pub prevalence: PrevalenceTable,
    pub cooccurrence: CooccurrenceMatrix,
    pub signal_shares: SignalShares,
    pub alpha: AlphaReport,
    pub embeddings: EmbeddingMatrix,
}

/// Computes all corpus statistics from verdicts and per-app SDK sets.
pub fn stage_stats(
    cfg: &Effective,
    inputs: &LoadedInputs,
    verdicts: &BTreeMap<SdkCoordinate, FingerprintVerdict>,
    app_sdks: &BTreeMap<String, BTreeSet<SdkCoordinate>>,
) -> Result<StatsBundle, CliError> {
    let labels: BTreeMap<SdkCoordinate, SdkLabel> = inputs
        .labels
        .iter()
        .map(|(coordinate, labeling)| (coordinate.clone(), labeling.label))
        .collect();
    let prevalence = prevalence(&inputs.apps, app_sdks, verdicts, &labels)
        .map_err(|err| CliError::analysis("stats", format!("prevalence: {err}")))?;
    let cooccurrence = cooccurrence(&inputs.apps, app_sdks, verdicts, cfg.top_k)
        .map_err(|err| CliError::analysis("stats", format!("co-occurrence: {err}")))?;
    let signal_shares = sensitive_signal_shares(verdicts, &inputs.signal_map);
    let alpha = alpha_report(inputs)?;
    let embeddings = export_onehot_embeddings(verdicts)
        .map_err(|err| CliError::analysis("stats", format!("embeddings: {err}")))?;
    Ok(StatsBundle { prevalence, cooccurrence, signal_shares, alpha, embeddings })
}

/// Collects the artifacts written under the report root, for the manifest.
struct ArtifactWriter {
    root: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    fn new(root: PathBuf) -> ArtifactWriter {
        ArtifactWriter { root, written: Vec::new() }
    }

    fn bytes(&mut self, rel: &str, bytes: &[u8], stage: &'static str) -> Result<(), CliError> {
        write_atomic(&self.root.join(rel), bytes, stage)?;
        self.written.push(rel.to_string());
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(
        &mut self,
        rel: &str,
        value: &T,
        stage: &'static str,
    ) -> Result<(), CliError> {
        let bytes = to_json(value, stage)?;
        self.bytes(rel, &bytes, stage)
    }

    /// The binary index writes itself; route it through a temp path so it
    /// lands atomically like every other artifact.
    fn index(&mut self, rel: &str, index: &SdkIndex) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|err| {
                CliError::analysis("index", format!("writing {}: {err}", path.display()))
            })?;
        }
        let mut tmp = path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        write_index(index, &tmp).map_err(|err| CliError::analysis("index", err))?;
        fs::rename(&tmp, &path).map_err(|err| {
            CliError::analysis("index", format!("writing {}: {err}", path.display()))
        })?;
        self.written.push(rel.to_string());
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct StageTiming {
    stage: &'static str,
    millis: u64,
}

fn timed<T>(
    timings: &mut Vec<StageTiming>,
    stage: &'static str,
    f: impl FnOnce() -> Result<T, CliError>,
) -> Result<T, CliError> {
    let start = Instant::now();
    let value = f()?;
    timings.push(StageTiming { stage, millis: start.elapsed().as_millis() as u64 });
    Ok(value)
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct ToolInfo {
    name: &'static str,
    version: &'static str,
    core_version: &'static str,
    report_format: u32,
}

/// The machine-readable record of one pipeline run. It carries timings, so
/// it lives next to the report directory rather than inside it: reports are
/// byte-identical across runs, the manifest is not.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RunManifest<'a> {
    tool: ToolInfo,
    inputs: InputsReport,
    settings: SettingsReport,
    stages: &'a [StageTiming],
    artifacts: &'a [String],
}

/// What `run` prints and where it wrote.
pub struct RunSummary {
    pub reports_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub artifact_count: usize,
    pub lines: Vec<String>,
}

/// Executes every stage in order, writing per-stage artifacts under
/// `<out_dir>/reports` and the run manifest at `<out_dir>/run_manifest.json`.
pub fn run_pipeline(
    cfg: &Effective,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<RunSummary, CliError> {
    let reports = out_dir.join("reports");
    let mut writer = ArtifactWriter::new(reports.clone());
    let mut timings: Vec<StageTiming> = Vec::new();
    let mut lines: Vec<String> = Vec::new();

    let inputs = timed(&mut timings, "ingest", || load_inputs(cfg))?;
    writer.json("ingest.json", &inputs.report(), "ingest")?;
    lines.push(format!(
        "ingest: {} SDKs ({} excluded), {} apps ({} dropped)",
        inputs.sdks.len(),
        inputs.excluded_sdks.len(),
        inputs.apps.len(),
        inputs.dropped_apps.len()
    ));

    let bundles = timed(&mut timings, "resolve", || stage_resolve(&inputs, None))?;
    writer.json("bundles.json", &bundles, "resolve")?;
    lines.push(format!("resolve: {} bundles", bundles.len()));

    let analyses = timed(&mut timings, "taint", || stage_taint(cfg, &inputs, &bundles))?;
    writer.json("taint.json", &taint_artifact(&analyses), "taint")?;
    let flows: usize = analyses.values().map(|a| a.findings.len()).sum();
    let diagnostics: usize = analyses.values().map(|a| a.diagnostics.len()).sum();
    lines.push(format!("taint: {flows} flows, {diagnostics} diagnostics"));

    let coflows = timed(&mut timings, "coflow", || stage_coflow(&inputs, &analyses))?;
    writer.json("coflow.json", &coflows, "coflow")?;
    let convergences: usize = coflows.values().map(Vec::len).sum();
    lines.push(format!("coflow: {convergences} findings"));

    let threshold = classify_threshold(cfg, &inputs.rules);
    let verdicts = timed(&mut timings, "classify", || stage_classify(&coflows, threshold))?;
    writer.json("verdicts.json", &verdicts, "classify")?;
    let flagged = verdicts.values().filter(|v| v.flagged).count();
    lines.push(format!(
        "classify: {flagged} of {} SDKs flagged at threshold {threshold}",
        verdicts.len()
    ));

    let index = timed(&mut timings, "index", || stage_index(&inputs))?;
    writer.index("index.fpsi", &index)?;
    let indexed_classes: usize = index.entries.iter().map(|e| e.classes.len()).sum();
    lines.push(format!("index: {} SDKs, {indexed_classes} classes", index.entries.len()));

    let matches = timed(&mut timings, "match", || stage_match(cfg, &inputs, &index, None))?;
    writer.json("matches.json", &matches, "match")?;
    let app_sdks = app_sdk_sets(&matches);
    writer.json("app_sdks.json", &app_sdks, "match")?;
    let detections: usize = matches.values().map(|o| o.matches.len()).sum();
    lines.push(format!("match: {} apps, {detections} detections", matches.len()));

    let stats = timed(&mut timings, "stats", || stage_stats(cfg, &inputs, &verdicts, &app_sdks))?;
    write_stats(&mut writer, &stats, format)?;
    lines.push(format!("stats: alpha {}", stats.alpha.alpha));

    let manifest = RunManifest {
        tool: ToolInfo {
            name: "fpscope",
            version: env!("CARGO_PKG_VERSION"),
            core_version: fpscope_core::VERSION,
            report_format: 1,
        },
        inputs: cfg.inputs_report(),
        settings: cfg.settings_report(threshold, format),
        stages: &timings,
        artifacts: &writer.written,
    };
    let manifest_path = out_dir.join("run_manifest.json");
    let bytes = to_json(&manifest, "manifest")?;
    write_atomic(&manifest_path, &bytes, "manifest")?;

    Ok(RunSummary {
        reports_dir: reports,
        manifest_path,
        artifact_count: writer.written.len(),
        lines,
    })
}

fn write_stats(
    writer: &mut ArtifactWriter,
    stats: &StatsBundle,
    format: OutputFormat,
) -> Result<(), CliError> {
    const STAGE: &str = "stats";
    if format.wants_json() {
        writer.json("stats/prevalence.json", &PrevalenceArtifact::new(&stats.prevalence), STAGE)?;
        writer.json("stats/cooccurrence.json", &stats.cooccurrence, STAGE)?;
        writer.json("stats/signal_shares.json", &stats.signal_shares, STAGE)?;
        writer.json("stats/embeddings.json", &stats.embeddings, STAGE)?;
    }
    if format.wants_csv() {
        writer.bytes("stats/prevalence.csv", stats.prevalence.to_csv().as_bytes(), STAGE)?;
        writer.bytes("stats/cooccurrence.csv", stats.cooccurrence.to_csv().as_bytes(), STAGE)?;
        writer.bytes("stats/signal_shares.csv", stats.signal_shares.to_csv().as_bytes(), STAGE)?;
        writer.bytes("stats/embeddings.csv", stats.embeddings.to_csv().as_bytes(), STAGE)?;
    }
    // The agreement statistic is a scalar; it has no CSV form.
    writer.json("stats/alpha.json", &stats.alpha, STAGE)
}
