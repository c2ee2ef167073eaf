//! Corpus and app-metadata ingestion: dataset filters, the closed app
//! category vocabulary, SDK purpose labels with their sub-label codebook,
//! and the sensitive-signal class map.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::SdkCoordinate;

/// Errors raised while reading or validating corpus inputs.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error("cannot parse {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// The closed list of 33 app store categories.
pub const APP_CATEGORIES: [&str; 33] = [
    "Art and Design",
    "Auto and Vehicles",
    "Beauty",
    "Books and Reference",
    "Business",
    "Comics",
    "Communication",
    "Dating",
    "Education",
    "Entertainment",
    "Events",
    "Finance",
    "Food and Drink",
    "Game",
    "Health and Fitness",
    "House and Home",
    "Libraries and Demo",
    "Lifestyle",
    "Maps and Navigation",
    "Medical",
    "Music and Audio",
    "News and Magazines",
    "Parenting",
    "Personalization",
    "Photography",
    "Productivity",
    "Shopping",
    "Social",
    "Sports",
    "Tools",
    "Travel and Local",
    "Video Players",
    "Weather",
];

/// Whether `category` belongs to the closed vocabulary.
pub fn is_app_category(category: &str) -> bool {
    APP_CATEGORIES.binary_search(&category).is_ok()
}

/// One store listing: the app, its category, its active-device audience
/// over a 30-day window, and — when ground truth is available — the SDKs it
/// declares.
#[derive(Clone, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AppRecord {
    pub app_id: String,
    pub category: String,
    pub audience_size: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub declared_sdks: Vec<SdkCoordinate>,
}

impl AppRecord {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.app_id.is_empty() || self.app_id.chars().any(char::is_whitespace) {
            return Err(IngestError::Invalid(format!(
                "app id must be a non-empty token, got {:?}",
                self.app_id
            )));
        }
        if !is_app_category(&self.category) {
            return Err(IngestError::Invalid(format!(
                "{:?} is not one of the {} app categories",
                self.category,
                APP_CATEGORIES.len()
            )));
        }
        Ok(())
    }
}

/// The five SDK purpose labels of the labeling codebook.
#[derive(Clone, Copy, Debug, Eq, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SdkLabel {
    Ads,
    Analytics,
    SecurityAndAuthentication,
    ToolsOther,
    UnclearUnfound,
}

impl SdkLabel {
    pub const ALL: [SdkLabel; 5] = [
        SdkLabel::Ads,
        SdkLabel::Analytics,
        SdkLabel::SecurityAndAuthentication,
        SdkLabel::ToolsOther,
        SdkLabel::UnclearUnfound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SdkLabel::Ads => "ADS",
            SdkLabel::Analytics => "ANALYTICS",
            SdkLabel::SecurityAndAuthentication => "SECURITY_AND_AUTHENTICATION",
            SdkLabel::ToolsOther => "TOOLS_OTHER",
            SdkLabel::UnclearUnfound => "UNCLEAR_UNFOUND",
        }
    }
}

impl fmt::Display for SdkLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SdkLabel {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SdkLabel::ALL
            .into_iter()
            .find(|label| label.name() == s)
            .ok_or_else(|| IngestError::Invalid(format!("unknown SDK label {s:?}")))
    }
}

/// The codebook's sub-labels; each belongs to exactly one parent label.
#[derive(Clone, Copy, Debug, Eq, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubLabel {
    AnalyticsAppHealth,
    AnalyticsUserBehavior,
    SecurityAntiFraud,
    SecurityPayments,
    SecurityAuthentication,
    SecurityAntiMalware,
    SecurityOther,
    Location,
    LocationPerson,
    LocationObject,
    LocationMaps,
    LocationOther,
    Social,
    Other,
}

impl SubLabel {
    pub const ALL: [SubLabel; 14] = [
        SubLabel::AnalyticsAppHealth,
        SubLabel::AnalyticsUserBehavior,
        SubLabel::SecurityAntiFraud,
        SubLabel::SecurityPayments,
        SubLabel::SecurityAuthentication,
        SubLabel::SecurityAntiMalware,
        SubLabel::SecurityOther,
        SubLabel::Location,
        SubLabel::LocationPerson,
        SubLabel::LocationObject,
        SubLabel::LocationMaps,
        SubLabel::LocationOther,
        SubLabel::Social,
        SubLabel::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SubLabel::AnalyticsAppHealth => "ANALYTICS_APP_HEALTH",
            SubLabel::AnalyticsUserBehavior => "ANALYTICS_USER_BEHAVIOR",
            SubLabel::SecurityAntiFraud => "SECURITY_ANTI_FRAUD",
            SubLabel::SecurityPayments => "SECURITY_PAYMENTS",
            SubLabel::SecurityAuthentication => "SECURITY_AUTHENTICATION",
            SubLabel::SecurityAntiMalware => "SECURITY_ANTI_MALWARE",
            SubLabel::SecurityOther => "SECURITY_OTHER",
            SubLabel::Location => "LOCATION",
            SubLabel::LocationPerson => "LOCATION_PERSON",
            SubLabel::LocationObject => "LOCATION_OBJECT",
            SubLabel::LocationMaps => "LOCATION_MAPS",
            SubLabel::LocationOther => "LOCATION_OTHER",
            SubLabel::Social => "SOCIAL",
            SubLabel::Other => "OTHER",
        }
    }

    /// The parent label this sub-label refines.
    pub fn parent(self) -> SdkLabel {
        match self {
            SubLabel::AnalyticsAppHealth | SubLabel::AnalyticsUserBehavior => SdkLabel::Analytics,
            SubLabel::SecurityAntiFraud
            | SubLabel::SecurityPayments
            | SubLabel::SecurityAuthentication
            | SubLabel::SecurityAntiMalware
            | SubLabel::SecurityOther => SdkLabel::SecurityAndAuthentication,
            SubLabel::Location
            | SubLabel::LocationPerson
            | SubLabel::LocationObject
            | SubLabel::LocationMaps
            | SubLabel::LocationOther
            | SubLabel::Social
            | SubLabel::Other => SdkLabel::ToolsOther,
        }
    }
}

impl fmt::Display for SubLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubLabel {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubLabel::ALL
            .into_iter()
            .find(|label| label.name() == s)
            .ok_or_else(|| IngestError::Invalid(format!("unknown sub-label {s:?}")))
    }
}

/// One labeled SDK.
#[derive(Clone, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SdkLabeling {
    pub coordinate: SdkCoordinate,
    pub label: SdkLabel,
    pub sub_label: Option<SubLabel>,
}

impl SdkLabeling {
    pub fn validate(&self) -> Result<(), IngestError> {
        if let Some(sub) = self.sub_label {
            if sub.parent() != self.label {
                return Err(IngestError::Invalid(format!(
                    "sub-label {sub} belongs to {}, not {} ({})",
                    sub.parent(),
                    self.label,
                    self.coordinate
                )));
            }
        }
        Ok(())
    }
}

/// Sensitivity classes for framework signal APIs.
#[derive(Clone, Copy, Debug, Eq, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignalClass {
    LocationCoarse,
    LocationFine,
    AppUsage,
    AccountList,
    Other,
}

impl SignalClass {
    pub const ALL: [SignalClass; 5] = [
        SignalClass::LocationCoarse,
        SignalClass::LocationFine,
        SignalClass::AppUsage,
        SignalClass::AccountList,
        SignalClass::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SignalClass::LocationCoarse => "LOCATION_COARSE",
            SignalClass::LocationFine => "LOCATION_FINE",
            SignalClass::AppUsage => "APP_USAGE",
            SignalClass::AccountList => "ACCOUNT_LIST",
            SignalClass::Other => "OTHER",
        }
    }
}

impl fmt::Display for SignalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalClass {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SignalClass::ALL
            .into_iter()
            .find(|class| class.name() == s)
            .ok_or_else(|| IngestError::Invalid(format!("unknown signal class {s:?}")))
    }
}

/// Maps each framework API identifier to its sensitivity class.
pub type SignalClassMap = BTreeMap<String, SignalClass>;

/// Version words that mark pre-release or internal builds.
pub const EXCLUDED_VERSION_WORDS: [&str; 6] = ["alpha", "beta", "test", "dev", "debug", "qa"];

/// Keeps coordinates whose version contains none of the excluded words
/// (case-insensitive substring match on the version only). Order-preserving
/// and idempotent.
pub fn filter_sdk_versions(coordinates: &[SdkCoordinate]) -> Vec<SdkCoordinate> {
    coordinates
        .iter()
        .filter(|c| {
            let version = c.version().to_ascii_lowercase();
            !EXCLUDED_VERSION_WORDS.iter().any(|word| version.contains(word))
        })
        .cloned()
        .collect()
}

/// Keeps apps with audience strictly above `min_audience` (default floor
/// 10,000 — "over", not "at least"). Order-preserving and idempotent.
pub fn filter_apps(apps: &[AppRecord], min_audience: u64) -> Vec<AppRecord> {
    apps.iter().filter(|a| a.audience_size > min_audience).cloned().collect()
}

/// Default audience floor for [`filter_apps`].
pub const DEFAULT_MIN_AUDIENCE: u64 = 10_000;

/// Total audience over the apps. The sum may double-count devices holding
/// several of the apps; it is an upper bound on distinct devices.
pub fn market_reach(apps: &[AppRecord]) -> u64 {
    apps.iter().map(|a| a.audience_size).sum()
}

/// Reads JSON-lines app metadata; every record is validated and app ids
/// must be unique.
pub fn read_app_metadata(path: &Path) -> Result<Vec<AppRecord>, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut apps = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record_error = |message: String| IngestError::Record {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let app: AppRecord =
            serde_json::from_str(line).map_err(|e| record_error(e.to_string()))?;
        app.validate().map_err(|e| record_error(e.to_string()))?;
        if !ids.insert(app.app_id.clone()) {
            return Err(record_error(format!("duplicate app id {}", app.app_id)));
        }
        apps.push(app);
    }
    Ok(apps)
}

fn check_csv_header(
    path: &Path,
    reader: &mut csv::Reader<fs::File>,
    expected: &[&str],
) -> Result<(), IngestError> {
    let headers = reader.headers().map_err(|source| IngestError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(IngestError::Invalid(format!(
            "{}: expected header {expected:?}, got {got:?}",
            path.display()
        )));
    }
    Ok(())
}

/// Reads the `coordinate,label,subLabel` CSV. An empty subLabel cell means
/// no sub-label; coordinates must be unique and sub-labels must match
/// their parent.
pub fn read_labels(path: &Path) -> Result<BTreeMap<SdkCoordinate, SdkLabeling>, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    check_csv_header(path, &mut reader, &["coordinate", "label", "subLabel"])?;
    let mut labels = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let record_error = |message: String| IngestError::Record {
            path: path.display().to_string(),
            line: i + 2,
            message,
        };
        if record.len() != 3 {
            return Err(record_error(format!("expected 3 fields, got {}", record.len())));
        }
        let coordinate: SdkCoordinate =
            record[0].parse().map_err(|e: crate::ir::IrError| record_error(e.to_string()))?;
        let label: SdkLabel = record[1].parse().map_err(|e: IngestError| record_error(e.to_string()))?;
        let sub_label = if record[2].is_empty() {
            None
        } else {
            Some(record[2].parse::<SubLabel>().map_err(|e| record_error(e.to_string()))?)
        };
        let labeling = SdkLabeling { coordinate: coordinate.clone(), label, sub_label };
        labeling.validate().map_err(|e| record_error(e.to_string()))?;
        if labels.insert(coordinate.clone(), labeling).is_some() {
            return Err(record_error(format!("duplicate label for {coordinate}")));
        }
    }
    Ok(labels)
}

/// Reads the `api,class` CSV mapping framework APIs to sensitivity
/// classes; each API maps to exactly one class.
pub fn read_signal_map(path: &Path) -> Result<SignalClassMap, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    check_csv_header(path, &mut reader, &["api", "class"])?;
    let mut map = SignalClassMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let record_error = |message: String| IngestError::Record {
            path: path.display().to_string(),
            line: i + 2,
            message,
        };
        if record.len() != 2 {
            return Err(record_error(format!("expected 2 fields, got {}", record.len())));
        }
        let api = record[0].to_string();
        if api.is_empty() {
            return Err(record_error("empty API identifier".into()));
        }
        let class: SignalClass =
            record[1].parse().map_err(|e: IngestError| record_error(e.to_string()))?;
        if map.insert(api.clone(), class).is_some() {
            return Err(record_error(format!("API {api} mapped twice")));
        }
    }
    Ok(map)
}
