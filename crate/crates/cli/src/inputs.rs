//! The ingest stage: reads every configured input, applies the corpus
//! filters (pre-release SDK versions out, low-audience apps out), and hands
//! later stages fully parsed data. Any file that exists but fails to parse
//! or validate is an input error (exit 3) attributed to this stage.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use fpscope_core::coflow::{read_rules, CoFlowRule};
use fpscope_core::depgraph::{read_manifest_dir, Manifest};
use fpscope_core::ingest::{
    filter_apps, filter_sdk_versions, market_reach, read_app_metadata, read_labels,
    read_signal_map, AppRecord, SdkLabeling, SignalClassMap,
};
use fpscope_core::ir::{parse_sdk_ir, SdkCoordinate, SdkIR};
use fpscope_core::stats::{read_ratings, RatingMatrix};
use fpscope_core::taint::{read_taint_config, TaintConfig};
use serde::Serialize;

use crate::config::Effective;
use crate::error::CliError;

const STAGE: &str = "ingest";

/// Everything the analysis stages consume, already filtered.
#[derive(Clone, Debug)]
pub struct LoadedInputs {
    /// SDK corpus after the version filter, keyed by coordinate.
    pub sdks: BTreeMap<SdkCoordinate, SdkIR>,
    /// Coordinates dropped by the version filter, sorted.
    pub excluded_sdks: Vec<SdkCoordinate>,
    /// App metadata after the audience filter, in file order.
    pub apps: Vec<AppRecord>,
    /// App ids dropped by the audience filter, in file order.
    pub dropped_apps: Vec<String>,
    /// App IR keyed by app id (the coordinate's artifact part).
    pub app_irs: BTreeMap<String, SdkIR>,
    /// Declared manifests plus an implicit empty manifest for every corpus
    /// SDK that has none, so each SDK resolves as its own bundle root.
    pub manifests: Vec<Manifest>,
    pub taint_config: TaintConfig,
    pub rules: Vec<CoFlowRule>,
    pub labels: BTreeMap<SdkCoordinate, SdkLabeling>,
    pub signal_map: SignalClassMap,
    pub ratings: RatingMatrix,
}

/// The ingest artifact: what survived the filters and what was dropped.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    pub sdks: Vec<String>,
    pub excluded_sdk_versions: Vec<String>,
    pub apps: Vec<String>,
    pub dropped_apps: Vec<String>,
    /// App IR files whose app id has no surviving metadata record; they are
    /// not matched or counted.
    pub skipped_app_irs: Vec<String>,
    /// Total audience across the surviving apps.
    pub market_reach: u64,
}

impl LoadedInputs {
    pub fn report(&self) -> IngestReport {
        let kept_ids: BTreeSet<&str> = self.apps.iter().map(|a| a.app_id.as_str()).collect();
        IngestReport {
            sdks: self.sdks.keys().map(|c| c.to_string()).collect(),
            excluded_sdk_versions: self.excluded_sdks.iter().map(|c| c.to_string()).collect(),
            apps: self.apps.iter().map(|a| a.app_id.clone()).collect(),
            dropped_apps: self.dropped_apps.clone(),
            skipped_app_irs: self
                .app_irs
                .keys()
                .filter(|id| !kept_ids.contains(id.as_str()))
                .cloned()
                .collect(),
            market_reach: market_reach(&self.apps),
        }
    }
}

/// Reads every `*.ir` file under `dir`, sorted by file name.
fn read_ir_dir(dir: &Path) -> Result<Vec<(PathBuf, SdkIR)>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|err| CliError::input(STAGE, format!("{}: {err}", dir.display())))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry =
            entry.map_err(|err| CliError::input(STAGE, format!("{}: {err}", dir.display())))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|ext| ext == "ir") {
            files.push(path);
        }
    }
    files.sort();
    files
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path)
                .map_err(|err| CliError::input(STAGE, format!("{}: {err}", path.display())))?;
            let doc = parse_sdk_ir(&text)
                .map_err(|err| CliError::input(STAGE, format!("{}: {err}", path.display())))?;
            Ok((path, doc))
        })
        .collect()
}

/// Runs the full ingest stage for the given configuration.
pub fn load_inputs(cfg: &Effective) -> Result<LoadedInputs, CliError> {
    let sdk_docs = read_ir_dir(&cfg.sdk_ir)?;
    let app_docs = read_ir_dir(&cfg.app_ir)?;

    let all_coordinates: Vec<SdkCoordinate> =
        sdk_docs.iter().map(|(_, doc)| doc.coordinate.clone()).collect();
    let kept: BTreeSet<SdkCoordinate> = filter_sdk_versions(&all_coordinates).into_iter().collect();
    let mut sdks: BTreeMap<SdkCoordinate, SdkIR> = BTreeMap::new();
    let mut excluded_sdks: Vec<SdkCoordinate> = Vec::new();
    for (path, doc) in sdk_docs {
        if !kept.contains(&doc.coordinate) {
            excluded_sdks.push(doc.coordinate);
            continue;
        }
        let coordinate = doc.coordinate.clone();
        if sdks.insert(coordinate.clone(), doc).is_some() {
            return Err(CliError::input(
                STAGE,
                format!("{}: duplicate SDK coordinate {coordinate}", path.display()),
            ));
        }
    }
    excluded_sdks.sort();

    let mut app_irs: BTreeMap<String, SdkIR> = BTreeMap::new();
    for (path, doc) in app_docs {
        let app_id = doc.coordinate.artifact().to_string();
        if app_irs.insert(app_id.clone(), doc).is_some() {
            return Err(CliError::input(
                STAGE,
                format!("{}: duplicate app id {app_id}", path.display()),
            ));
        }
    }

    let records = read_app_metadata(&cfg.app_metadata).map_err(|err| {
        CliError::input(STAGE, format!("{}: {err}", cfg.app_metadata.display()))
    })?;
    let apps = filter_apps(&records, cfg.min_audience);
    let kept_ids: BTreeSet<&str> = apps.iter().map(|a| a.app_id.as_str()).collect();
    let dropped_apps: Vec<String> = records
        .iter()
        .filter(|a| !kept_ids.contains(a.app_id.as_str()))
        .map(|a| a.app_id.clone())
        .collect();

    let mut manifests = read_manifest_dir(&cfg.manifests)
        .map_err(|err| CliError::input(STAGE, format!("{}: {err}", cfg.manifests.display())))?;
    let declared: BTreeSet<SdkCoordinate> =
        manifests.iter().map(|m| m.coordinate.clone()).collect();
    manifests.extend(
        sdks.keys()
            .filter(|coordinate| !declared.contains(coordinate))
            .map(|coordinate| Manifest { coordinate: coordinate.clone(), dependencies: vec![] }),
    );

    let taint_config = read_taint_config(&cfg.taint_config).map_err(|err| {
        CliError::input(STAGE, format!("{}: {err}", cfg.taint_config.display()))
    })?;
    let rules = read_rules(&cfg.rules)
        .map_err(|err| CliError::input(STAGE, format!("{}: {err}", cfg.rules.display())))?;
    let labels = read_labels(&cfg.labels)
        .map_err(|err| CliError::input(STAGE, format!("{}: {err}", cfg.labels.display())))?;
    let signal_map = read_signal_map(&cfg.signal_map)
        .map_err(|err| CliError::input(STAGE, format!("{}: {err}", cfg.signal_map.display())))?;
    let ratings = read_ratings(&cfg.ratings)
        .map_err(|err| CliError::input(STAGE, format!("{}: {err}", cfg.ratings.display())))?;

    Ok(LoadedInputs {
        sdks,
        excluded_sdks,
        apps,
        dropped_apps,
        app_irs,
        manifests,
        taint_config,
        rules,
        labels,
        signal_map,
        ratings,
    })
}
