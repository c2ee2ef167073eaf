//! Nested-loop recount oracle for the corpus statistics, plus a random
//! fixture generator.
//!
//! Every recount walks the raw inputs directly — one pass per question,
//! no shared accumulators — and produces the same output types for exact
//! comparison. Divisions use the same count/total arithmetic as the
//! library, so equality is exact, not approximate.

use std::collections::{BTreeMap, BTreeSet};

use fpscope_core::coflow::{CoFlowFinding, FingerprintVerdict, SourceRef};
use fpscope_core::ingest::{AppRecord, SdkLabel, SignalClass, SignalClassMap};
use fpscope_core::ir::SdkCoordinate;
use fpscope_core::stats::{
    CooccurrenceMatrix, EmbeddingMatrix, EmbeddingRow, PrevalenceRow, SignalShares,
};
use fpscope_core::taint::{SinkGroup, Site};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// One generated statistics workload.
pub struct StatsFixture {
    pub apps: Vec<AppRecord>,
    pub app_sdks: BTreeMap<String, BTreeSet<SdkCoordinate>>,
    pub verdicts: BTreeMap<SdkCoordinate, FingerprintVerdict>,
    pub labels: BTreeMap<SdkCoordinate, SdkLabel>,
    pub signal_map: SignalClassMap,
}

const APIS: [&str; 7] = ["api.a", "api.b", "api.c", "api.d", "api.e", "api.f", "api.g"];

pub fn random_fixture(rng: &mut ChaCha8Rng) -> StatsFixture {
    let category_count = rng.gen_range(3..=6);
    let categories: Vec<String> = (0..category_count).map(|c| format!("cat{c}")).collect();

    let sdk_count = rng.gen_range(5..=12);
    let mut verdicts = BTreeMap::new();
    let mut labels = BTreeMap::new();
    let mut coordinates = Vec::new();
    for j in 0..sdk_count {
        let coordinate = SdkCoordinate::new("g", &format!("sdk{j}"), "1").unwrap();
        let flagged = rng.gen_bool(0.5);
        let mut findings = Vec::new();
        if flagged {
            let mut pool = APIS.to_vec();
            pool.shuffle(rng);
            let sources = pool[..rng.gen_range(1..=4)]
                .iter()
                .enumerate()
                .map(|(i, api)| SourceRef {
                    label: api.to_string(),
                    site: Site::new(&format!("C{j}.run"), i),
                })
                .collect::<Vec<_>>();
            findings.push(CoFlowFinding {
                rule: "aggregation".to_string(),
                sink_site: Site::new(&format!("C{j}.run"), 40),
                sink_group: SinkGroup::Network,
                sources,
            });
        }
        let distinct: BTreeSet<&str> =
            findings.iter().flat_map(|f| f.sources.iter().map(|s| s.label.as_str())).collect();
        verdicts.insert(
            coordinate.clone(),
            FingerprintVerdict {
                sdk: coordinate.clone(),
                flagged,
                distinct_signals: distinct.len(),
                findings,
            },
        );
        if rng.gen_bool(0.8) {
            let label = SdkLabel::ALL[rng.gen_range(0..SdkLabel::ALL.len())];
            labels.insert(coordinate.clone(), label);
        }
        coordinates.push(coordinate);
    }

    let app_count = rng.gen_range(6..=24);
    let mut apps = Vec::new();
    let mut app_sdks = BTreeMap::new();
    for i in 0..app_count {
        let app_id = format!("app{i}");
        apps.push(AppRecord {
            app_id: app_id.clone(),
            category: categories[rng.gen_range(0..categories.len())].clone(),
            audience_size: rng.gen_range(1_000..=1_000_000),
            declared_sdks: Vec::new(),
        });
        let members: BTreeSet<SdkCoordinate> =
            coordinates.iter().filter(|_| rng.gen_bool(0.35)).cloned().collect();
        app_sdks.insert(app_id, members);
    }

    let mut signal_map = SignalClassMap::new();
    for api in APIS {
        if rng.gen_bool(0.8) {
            let class = SignalClass::ALL[rng.gen_range(0..SignalClass::ALL.len())];
            signal_map.insert(api.to_string(), class);
        }
    }

    StatsFixture { apps, app_sdks, verdicts, labels, signal_map }
}

fn flagged_set(fixture: &StatsFixture) -> BTreeSet<&SdkCoordinate> {
    fixture.verdicts.values().filter(|v| v.flagged).map(|v| &v.sdk).collect()
}

fn app_flagged_labels(fixture: &StatsFixture, app_id: &str) -> BTreeSet<SdkLabel> {
    let flagged = flagged_set(fixture);
    let mut out = BTreeSet::new();
    if let Some(sdks) = fixture.app_sdks.get(app_id) {
        for sdk in sdks {
            if flagged.contains(sdk) {
                out.insert(
                    fixture.labels.get(sdk).copied().unwrap_or(SdkLabel::UnclearUnfound),
                );
            }
        }
    }
    out
}

/// Prevalence rows recounted one category and one label at a time.
pub fn recount_prevalence(fixture: &StatsFixture) -> BTreeMap<String, PrevalenceRow> {
    let categories: BTreeSet<&str> =
        fixture.apps.iter().map(|a| a.category.as_str()).collect();
    let mut rows = BTreeMap::new();
    for category in categories {
        let members: Vec<&AppRecord> =
            fixture.apps.iter().filter(|a| a.category == category).collect();
        let total = members.len();
        let mut any = 0usize;
        for app in &members {
            if !app_flagged_labels(fixture, &app.app_id).is_empty() {
                any += 1;
            }
        }
        let mut by_label = BTreeMap::new();
        for label in SdkLabel::ALL {
            let mut count = 0usize;
            for app in &members {
                if app_flagged_labels(fixture, &app.app_id).contains(&label) {
                    count += 1;
                }
            }
            by_label.insert(label, count as f64 / total as f64);
        }
        rows.insert(
            category.to_string(),
            PrevalenceRow { any: any as f64 / total as f64, by_label },
        );
    }
    rows
}

/// Top-K apps of a category by repeated maximum extraction (largest
/// audience first, ties by smaller app id).
fn top_k_apps<'a>(fixture: &'a StatsFixture, category: &str, k: usize) -> Vec<&'a AppRecord> {
    let mut pool: Vec<&AppRecord> =
        fixture.apps.iter().filter(|a| a.category == category).collect();
    let mut out = Vec::new();
    while out.len() < k && !pool.is_empty() {
        let mut best = 0usize;
        for i in 1..pool.len() {
            let better = pool[i].audience_size > pool[best].audience_size
                || (pool[i].audience_size == pool[best].audience_size
                    && pool[i].app_id < pool[best].app_id);
            if better {
                best = i;
            }
        }
        out.push(pool.remove(best));
    }
    out
}

fn apps_share_flagged(fixture: &StatsFixture, a: &str, b: &str) -> bool {
    let flagged = flagged_set(fixture);
    let empty = BTreeSet::new();
    let sa = fixture.app_sdks.get(a).unwrap_or(&empty);
    let sb = fixture.app_sdks.get(b).unwrap_or(&empty);
    sa.iter().any(|s| flagged.contains(s) && sb.contains(s))
}

/// Full co-occurrence matrix recounted cell by cell, every ordered pair
/// walked explicitly.
pub fn recount_cooccurrence(fixture: &StatsFixture, top_k: usize) -> CooccurrenceMatrix {
    let categories: Vec<String> = fixture
        .apps
        .iter()
        .map(|a| a.category.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut cells: BTreeMap<String, BTreeMap<String, Option<f64>>> = BTreeMap::new();
    for a in &categories {
        for b in &categories {
            let top_a = top_k_apps(fixture, a, top_k);
            let top_b = top_k_apps(fixture, b, top_k);
            let cell = if a == b {
                let n = top_a.len();
                if n < 2 {
                    None
                } else {
                    let mut hits = 0usize;
                    for x in &top_a {
                        for y in &top_a {
                            if x.app_id != y.app_id
                                && apps_share_flagged(fixture, &x.app_id, &y.app_id)
                            {
                                hits += 1;
                            }
                        }
                    }
                    Some(hits as f64 / (n * (n - 1)) as f64)
                }
            } else {
                let mut hits = 0usize;
                for x in &top_a {
                    for y in &top_b {
                        if apps_share_flagged(fixture, &x.app_id, &y.app_id) {
                            hits += 1;
                        }
                    }
                }
                Some(hits as f64 / (top_a.len() * top_b.len()) as f64)
            };
            cells.entry(a.clone()).or_default().insert(b.clone(), cell);
        }
    }
    CooccurrenceMatrix { categories, cells }
}

fn verdict_classes(verdict: &FingerprintVerdict, map: &SignalClassMap) -> BTreeSet<SignalClass> {
    verdict
        .findings
        .iter()
        .flat_map(|f| f.sources.iter())
        .filter_map(|s| map.get(s.label.as_str()).copied())
        .collect()
}

/// Signal shares recounted one class at a time.
pub fn recount_shares(fixture: &StatsFixture) -> SignalShares {
    let flagged: Vec<&FingerprintVerdict> =
        fixture.verdicts.values().filter(|v| v.flagged).collect();
    let flagged_count = flagged.len();
    let fraction = |count: usize| {
        if flagged_count == 0 { 0.0 } else { count as f64 / flagged_count as f64 }
    };
    let mut shares = BTreeMap::new();
    for class in SignalClass::ALL {
        let count = flagged
            .iter()
            .filter(|v| verdict_classes(v, &fixture.signal_map).contains(&class))
            .count();
        shares.insert(class, fraction(count));
    }
    let union = flagged
        .iter()
        .filter(|v| {
            let classes = verdict_classes(v, &fixture.signal_map);
            classes.contains(&SignalClass::LocationCoarse)
                || classes.contains(&SignalClass::LocationFine)
        })
        .count();
    SignalShares { flagged_count, shares, location_union: fraction(union) }
}

/// One-hot embedding recounted with explicit column scans.
pub fn recount_embeddings(fixture: &StatsFixture) -> Option<EmbeddingMatrix> {
    let flagged: Vec<&FingerprintVerdict> =
        fixture.verdicts.values().filter(|v| v.flagged).collect();
    if flagged.is_empty() {
        return None;
    }
    let mut columns: Vec<String> = Vec::new();
    for verdict in &flagged {
        for finding in &verdict.findings {
            for source in &finding.sources {
                if !columns.contains(&source.label) {
                    columns.push(source.label.clone());
                }
            }
        }
    }
    columns.sort();
    let rows = flagged
        .iter()
        .map(|verdict| {
            let labels: BTreeSet<&str> = verdict
                .findings
                .iter()
                .flat_map(|f| f.sources.iter().map(|s| s.label.as_str()))
                .collect();
            EmbeddingRow {
                sdk: verdict.sdk.clone(),
                bits: columns.iter().map(|c| u8::from(labels.contains(c.as_str()))).collect(),
            }
        })
        .collect();
    Some(EmbeddingMatrix { columns, rows })
}
