//! Corpus statistics over classification verdicts: per-category prevalence,
//! cross-category co-occurrence, sensitive-signal shares, inter-rater
//! agreement, and the one-hot embedding export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coflow::FingerprintVerdict;
use crate::ingest::{AppRecord, SdkLabel, SignalClass, SignalClassMap};
use crate::ir::SdkCoordinate;

/// Errors raised by statistics computations and their readers.
#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("agreement is undefined: only one label occurs, expected disagreement is zero")]
    AlphaUndefined,
    #[error("no flagged SDKs: nothing to export")]
    NoFlaggedSdks,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
}

fn flagged_coordinates(
    verdicts: &BTreeMap<SdkCoordinate, FingerprintVerdict>,
) -> BTreeSet<&SdkCoordinate> {
    verdicts.iter().filter(|(_, v)| v.flagged).map(|(c, _)| c).collect()
}

fn check_app_ids(
    apps: &[AppRecord],
    app_sdks: &BTreeMap<String, BTreeSet<SdkCoordinate>>,
) -> Result<(), StatsError> {
    let known: BTreeSet<&str> = apps.iter().map(|a| a.app_id.as_str()).collect();
    for app_id in app_sdks.keys() {
        if !known.contains(app_id.as_str()) {
            return Err(StatsError::Invalid(format!(
                "app {app_id} has SDK data but no metadata record"
            )));
        }
    }
    Ok(())
}

// ---- prevalence -------------------------------------------------------------

/// Prevalence fractions for one app category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrevalenceRow {
    /// Fraction of the category's apps containing ≥ 1 flagged SDK.
    pub any: f64,
    /// Fraction containing ≥ 1 flagged SDK with the given purpose label.
    pub by_label: BTreeMap<SdkLabel, f64>,
}

/// Per-category prevalence of flagged SDKs. Categories with no apps in the
/// input do not appear.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrevalenceTable {
    pub rows: BTreeMap<String, PrevalenceRow>,
    /// Non-fatal notes (flagged SDKs without labels). Not serialized.
    #[serde(skip)]
    pub diagnostics: Vec<String>,
}

impl PrevalenceTable {
    /// CSV with one row per category: `category,any,<label columns>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,any");
        for label in SdkLabel::ALL {
            let _ = write!(out, ",{label}");
        }
        out.push('\n');
        for (category, row) in &self.rows {
            let _ = write!(out, "{category},{}", row.any);
            for label in SdkLabel::ALL {
                let _ = write!(out, ",{}", row.by_label[&label]);
            }
            out.push('\n');
        }
        out
    }
}

/// Computes prevalence: per category, the fraction of apps containing at
/// least one flagged SDK, with a per-purpose-label breakdown. A flagged SDK
/// missing from `labels` counts as UNCLEAR_UNFOUND with a diagnostic.
pub fn prevalence(
    apps: &[AppRecord],
    app_sdks: &BTreeMap<String, BTreeSet<SdkCoordinate>>,
    verdicts: &BTreeMap<SdkCoordinate, FingerprintVerdict>,
    labels: &BTreeMap<SdkCoordinate, SdkLabel>,
) -> Result<PrevalenceTable, StatsError> {
    check_app_ids(apps, app_sdks)?;
    let flagged = flagged_coordinates(verdicts);
    let mut diagnostics: BTreeSet<String> = BTreeSet::new();
    let label_of = |coordinate: &SdkCoordinate| -> SdkLabel {
        labels.get(coordinate).copied().unwrap_or(SdkLabel::UnclearUnfound)
    };

    let mut app_count: BTreeMap<&str, usize> = BTreeMap::new();
    let mut any_count: BTreeMap<&str, usize> = BTreeMap::new();
    let mut label_count: BTreeMap<&str, BTreeMap<SdkLabel, usize>> = BTreeMap::new();
    for app in apps {
        *app_count.entry(&app.category).or_default() += 1;
        let Some(sdks) = app_sdks.get(&app.app_id) else { continue };
        let mut seen_labels: BTreeSet<SdkLabel> = BTreeSet::new();
        for sdk in sdks {
            if !flagged.contains(sdk) {
                continue;
            }
            if !labels.contains_key(sdk) {
                diagnostics.insert(format!(
                    "flagged SDK {sdk} has no purpose label; counted as UNCLEAR_UNFOUND"
                ));
            }
            seen_labels.insert(label_of(sdk));
        }
        if !seen_labels.is_empty() {
            *any_count.entry(&app.category).or_default() += 1;
            let per_label = label_count.entry(&app.category).or_default();
            for label in seen_labels {
                *per_label.entry(label).or_default() += 1;
            }
        }
    }

    let mut rows = BTreeMap::new();
    for (category, total) in &app_count {
        let total_f = *total as f64;
        let any = any_count.get(category).copied().unwrap_or(0) as f64 / total_f;
        let by_label = SdkLabel::ALL
            .into_iter()
            .map(|label| {
                let count = label_count
                    .get(category)
                    .and_then(|m| m.get(&label))
                    .copied()
                    .unwrap_or(0);
                (label, count as f64 / total_f)
            })
            .collect();
        rows.insert(category.to_string(), PrevalenceRow { any, by_label });
    }
    Ok(PrevalenceTable { rows, diagnostics: diagnostics.into_iter().collect() })
}

// ---- co-occurrence ----------------------------------------------------------

/// Symmetric matrix over the categories present in the input. A diagonal
/// cell of a category with fewer than two apps is undefined (`None`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CooccurrenceMatrix {
    pub categories: Vec<String>,
    pub cells: BTreeMap<String, BTreeMap<String, Option<f64>>>,
}

impl CooccurrenceMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.cells.get(a).and_then(|row| row.get(b)).copied().flatten()
    }

    /// CSV with a header column: `category,<c1>,<c2>,…`; undefined cells
    /// are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category");
        for category in &self.categories {
            let _ = write!(out, ",{category}");
        }
        out.push('\n');
        for a in &self.categories {
            out.push_str(a);
            for b in &self.categories {
                match self.cells[a][b] {
                    Some(value) => {
                        let _ = write!(out, ",{value}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Estimates, for each pair of categories, the probability that two
/// distinct apps drawn from their top-K (by audience, ties by app id) share
/// at least one flagged SDK. Exhaustive pair enumeration; exact.
pub fn cooccurrence(
    apps: &[AppRecord],
    app_sdks: &BTreeMap<String, BTreeSet<SdkCoordinate>>,
    verdicts: &BTreeMap<SdkCoordinate, FingerprintVerdict>,
    top_k: usize,
) -> Result<CooccurrenceMatrix, StatsError> {
    if top_k == 0 {
        return Err(StatsError::Invalid("topK must be at least 1".into()));
    }
    check_app_ids(apps, app_sdks)?;
    let flagged = flagged_coordinates(verdicts);

    // Top-K apps per category with their flagged-SDK sets.
    let mut per_category: BTreeMap<&str, Vec<&AppRecord>> = BTreeMap::new();
    for app in apps {
        per_category.entry(&app.category).or_default().push(app);
    }
    let mut tops: BTreeMap<&str, Vec<(&str, BTreeSet<&SdkCoordinate>)>> = BTreeMap::new();
    for (category, mut members) in per_category {
        members.sort_by(|a, b| {
            b.audience_size.cmp(&a.audience_size).then_with(|| a.app_id.cmp(&b.app_id))
        });
        members.truncate(top_k);
        let selected = members
            .into_iter()
            .map(|app| {
                let sdks: BTreeSet<&SdkCoordinate> = app_sdks
                    .get(&app.app_id)
                    .map(|s| s.iter().filter(|c| flagged.contains(*c)).collect())
                    .unwrap_or_default();
                (app.app_id.as_str(), sdks)
            })
            .collect();
        tops.insert(category, selected);
    }

    let categories: Vec<String> = tops.keys().map(|c| c.to_string()).collect();
    let shares = |a: &(&str, BTreeSet<&SdkCoordinate>), b: &(&str, BTreeSet<&SdkCoordinate>)| {
        a.1.intersection(&b.1).next().is_some()
    };
    let mut cells: BTreeMap<String, BTreeMap<String, Option<f64>>> = BTreeMap::new();
    for (i, a) in categories.iter().enumerate() {
        for b in &categories[i..] {
            let top_a = &tops[a.as_str()];
            let top_b = &tops[b.as_str()];
            let cell = if a == b {
                let n = top_a.len();
                if n < 2 {
                    None
                } else {
                    let mut hits = 0usize;
                    for (i, x) in top_a.iter().enumerate() {
                        for (j, y) in top_a.iter().enumerate() {
                            if i != j && shares(x, y) {
                                hits += 1;
                            }
                        }
                    }
                    Some(hits as f64 / (n * (n - 1)) as f64)
                }
            } else {
                // Distinct categories hold distinct apps, so a ≠ b always.
                let mut hits = 0usize;
                for x in top_a {
                    for y in top_b {
                        if shares(x, y) {
                            hits += 1;
                        }
                    }
                }
                Some(hits as f64 / (top_a.len() * top_b.len()) as f64)
            };
            cells.entry(a.clone()).or_default().insert(b.clone(), cell);
            cells.entry(b.clone()).or_default().insert(a.clone(), cell);
        }
    }
    Ok(CooccurrenceMatrix { categories, cells })
}

/// Default top-K selection size for co-occurrence.
pub const DEFAULT_TOP_K: usize = 1000;

// ---- sensitive-signal shares ------------------------------------------------

/// Shares of flagged SDKs exfiltrating each sensitivity class, plus the
/// union share for coarse-or-fine location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignalShares {
    pub flagged_count: usize,
    pub shares: BTreeMap<SignalClass, f64>,
    pub location_union: f64,
}

impl SignalShares {
    /// CSV rows `class,share`, with the location union last.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,share\n");
        for class in SignalClass::ALL {
            let _ = writeln!(out, "{class},{}", self.shares[&class]);
        }
        let _ = writeln!(out, "LOCATION_UNION,{}", self.location_union);
        out
    }
}

/// For each sensitivity class, the fraction of flagged SDKs whose
/// exfiltrated signals include at least one API of that class. Signal
/// labels are the API identifiers; labels missing from the map belong to
/// no class. With no flagged SDKs every share is zero.
pub fn sensitive_signal_shares(
    verdicts: &BTreeMap<SdkCoordinate, FingerprintVerdict>,
    signal_map: &SignalClassMap,
) -> SignalShares {
    let mut flagged_count = 0usize;
    let mut counts: BTreeMap<SignalClass, usize> = BTreeMap::new();
    let mut union_count = 0usize;
    for verdict in verdicts.values() {
        if !verdict.flagged {
            continue;
        }
        flagged_count += 1;
        let classes: BTreeSet<SignalClass> = verdict
            .signal_labels()
            .into_iter()
            .filter_map(|label| signal_map.get(label).copied())
            .collect();
        for class in &classes {
            *counts.entry(*class).or_default() += 1;
        }
        if classes.contains(&SignalClass::LocationCoarse)
            || classes.contains(&SignalClass::LocationFine)
        {
            union_count += 1;
        }
    }
    let share = |count: usize| {
        if flagged_count == 0 { 0.0 } else { count as f64 / flagged_count as f64 }
    };
    SignalShares {
        flagged_count,
        shares: SignalClass::ALL
            .into_iter()
            .map(|class| (class, share(counts.get(&class).copied().unwrap_or(0))))
            .collect(),
        location_union: share(union_count),
    }
}

// ---- inter-rater agreement --------------------------------------------------

/// Nominal ratings of items by several raters; `None` marks a missing
/// rating.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RatingMatrix {
    pub raters: Vec<String>,
    pub items: Vec<RatingItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RatingItem {
    pub id: String,
    pub values: Vec<Option<String>>,
}

impl RatingMatrix {
    pub fn validate(&self) -> Result<(), StatsError> {
        if self.raters.len() < 2 {
            return Err(StatsError::Invalid("agreement needs at least 2 raters".into()));
        }
        for item in &self.items {
            if item.values.len() != self.raters.len() {
                return Err(StatsError::Invalid(format!(
                    "item {} has {} ratings for {} raters",
                    item.id,
                    item.values.len(),
                    self.raters.len()
                )));
            }
        }
        let pairable = self
            .items
            .iter()
            .any(|item| item.values.iter().flatten().count() >= 2);
        if !pairable {
            return Err(StatsError::Invalid(
                "agreement needs at least one item rated by 2+ raters".into(),
            ));
        }
        Ok(())
    }
}

/// Reads a rating CSV: header `item,<rater>,<rater>,…`, one row per item,
/// empty cells for missing ratings.
pub fn read_ratings(path: &Path) -> Result<RatingMatrix, StatsError> {
    let file = fs::File::open(path).map_err(|source| StatsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|source| StatsError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    let header: Vec<String> = headers.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("item") || header.len() < 3 {
        return Err(StatsError::Invalid(format!(
            "{}: expected header item,<rater>,<rater>,…, got {header:?}",
            path.display()
        )));
    }
    let raters = header[1..].to_vec();
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| StatsError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let record_error = |message: String| StatsError::Record {
            path: path.display().to_string(),
            line: i + 2,
            message,
        };
        if record.len() != raters.len() + 1 {
            return Err(record_error(format!(
                "expected {} fields, got {}",
                raters.len() + 1,
                record.len()
            )));
        }
        let id = record[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(record_error(format!("duplicate item {id}")));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|cell| if cell.is_empty() { None } else { Some(cell.to_string()) })
            .collect();
        items.push(RatingItem { id, values });
    }
    let matrix = RatingMatrix { raters, items };
    matrix.validate()?;
    Ok(matrix)
}

/// Krippendorff's alpha for nominal labels.
///
/// Coincidences: every ordered pair of ratings within an item of `m`
/// ratings contributes weight `1/(m−1)`; items with fewer than two ratings
/// are excluded. With `n_c` the label totals and `n` their sum,
/// `alpha = 1 − (n−1)·Σ_{c≠k} o_ck / (n² − Σ_c n_c²)`. When only one label
/// occurs the expected disagreement is zero and alpha is undefined.
pub fn krippendorff_alpha(ratings: &RatingMatrix) -> Result<f64, StatsError> {
    ratings.validate()?;
    let mut coincidence: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for item in &ratings.items {
        let present: Vec<&str> = item.values.iter().flatten().map(String::as_str).collect();
        let m = present.len();
        if m < 2 {
            continue;
        }
        let weight = 1.0 / (m as f64 - 1.0);
        for (i, c) in present.iter().enumerate() {
            for (j, k) in present.iter().enumerate() {
                if i != j {
                    *coincidence.entry((c, k)).or_default() += weight;
                    *totals.entry(c).or_default() += weight;
                }
            }
        }
    }
    let n: f64 = totals.values().sum();
    let sum_squares: f64 = totals.values().map(|t| t * t).sum();
    let expected_scale = n * n - sum_squares;
    if expected_scale == 0.0 {
        return Err(StatsError::AlphaUndefined);
    }
    let observed_off: f64 =
        coincidence.iter().filter(|((c, k), _)| c != k).map(|(_, v)| *v).sum();
    Ok(1.0 - (n - 1.0) * observed_off / expected_scale)
}

// ---- one-hot embedding export -----------------------------------------------

/// One-hot matrix of flagged SDKs × distinct exfiltrated signal APIs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EmbeddingMatrix {
    /// Sorted distinct signal APIs observed across flagged SDKs.
    pub columns: Vec<String>,
    pub rows: Vec<EmbeddingRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EmbeddingRow {
    pub sdk: SdkCoordinate,
    pub bits: Vec<u8>,
}

impl EmbeddingMatrix {
    /// CSV with header `coordinate,<api>,…` and one 0/1 row per SDK.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coordinate");
        for column in &self.columns {
            let _ = write!(out, ",{column}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{}", row.sdk);
            for bit in &row.bits {
                let _ = write!(out, ",{bit}");
            }
            out.push('\n');
        }
        out
    }
}

/// Exports the one-hot embedding of flagged SDKs over the union of their
/// exfiltrated signal APIs (rows sorted by coordinate, columns sorted).
pub fn export_onehot_embeddings(
    verdicts: &BTreeMap<SdkCoordinate, FingerprintVerdict>,
) -> Result<EmbeddingMatrix, StatsError> {
    let flagged: Vec<&FingerprintVerdict> =
        verdicts.values().filter(|v| v.flagged).collect();
    if flagged.is_empty() {
        return Err(StatsError::NoFlaggedSdks);
    }
    let columns: Vec<String> = flagged
        .iter()
        .flat_map(|v| v.signal_labels())
        .map(str::to_string)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rows = flagged
        .iter()
        .map(|verdict| {
            let labels = verdict.signal_labels();
            EmbeddingRow {
                sdk: verdict.sdk.clone(),
                bits: columns
                    .iter()
                    .map(|c| u8::from(labels.contains(c.as_str())))
                    .collect(),
            }
        })
        .collect();
    Ok(EmbeddingMatrix { columns, rows })
}
