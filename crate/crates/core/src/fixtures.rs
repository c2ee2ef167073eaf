//! A small, fully deterministic demo corpus: four SDKs (one with a version
//! conflict between two of them), four apps embedding renamed copies of
//! their classes, and every side input the pipeline consumes (taint
//! configuration, convergence rules, labels, signal classes, app metadata,
//! ratings). The same programs back the unit and acceptance tests.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::coflow::CoFlowRule;
use crate::depgraph::{build_graph, resolve, Manifest, ResolvedBundle};
use crate::ir::{parse_sdk_ir, SdkCoordinate, SdkIR};
use crate::taint::{SinkGroup, TaintConfig};

/// Analytics SDK under study: gathers three device signals, ships them over
/// the network, and hashes one of them through the `hashkit` dependency.
const METRICS_IR: &str = r#"sdk demo:metrics:2.1.0
class Collector
method Collector.gather public sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig1
  invoke_static r1 api:fp.sig2
  invoke_static r2 api:fp.sig3
  invoke_static r3 api:util.concat r0,r1
  invoke_static r4 api:util.concat r3,r2
  invoke_static r5 api:net.send r4
  invoke_static r6 callee:Digest.hash r2
  return r6
method Collector.tag nonpublic sig="()->java.lang.String" params=
  const_string r0 "metrics/2.1"
  return r0
"#;

/// Hashing dependency. `Digest.hash` sinks its argument into an encryption
/// API; `Digest.selfcheck` reads two device signals of its own; `Probe.scan`
/// reads a third but is unreachable from `metrics`.
const HASHKIT_V1_IR: &str = r#"sdk demo:hashkit:1.0.0
class Digest
method Digest.hash public sig="(java.lang.String)->java.lang.String" params=r0
  invoke_static r1 api:crypto.digest r0
  return r1
method Digest.selfcheck public sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig4
  invoke_static r1 api:fp.sig5
  invoke_static r2 api:util.concat r0,r1
  invoke_static r3 api:crypto.digest r2
  return r3
class Probe
method Probe.scan nonpublic sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig6
  invoke_static r1 api:net.send r0
  return r1
"#;

/// Newer `hashkit`: same shape with a version marker mixed into the digest.
/// Pulled in transitively by `netkit` but losing the version conflict under
/// `metrics`.
const HASHKIT_V2_IR: &str = r#"sdk demo:hashkit:2.0.0
class Digest
method Digest.hash public sig="(java.lang.String)->java.lang.String" params=r0
  const_string r1 "v2"
  invoke_static r2 api:util.concat r0,r1
  invoke_static r3 api:crypto.digest r2
  return r3
method Digest.selfcheck public sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig4
  invoke_static r1 api:fp.sig5
  invoke_static r2 api:util.concat r0,r1
  invoke_static r3 api:crypto.digest r2
  return r3
class Probe
method Probe.scan nonpublic sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig6
  invoke_static r1 api:net.send r0
  return r1
"#;

/// Harmless networking SDK: no device signals at all.
const NETKIT_IR: &str = r#"sdk demo:netkit:1.2.0
class Beacon
method Beacon.ping public sig="()->java.lang.String" params=
  const_string r0 "pong"
  invoke_static r1 api:net.send r0
  return r1
"#;

/// Pre-release SDK; the version filter drops it before analysis.
const OLDKIT_IR: &str = r#"sdk demo:oldkit:0.9-beta
class Relic
method Relic.touch public sig="()->int" params=
  const r0
  return r0
"#;

/// App embedding `metrics` and `hashkit` under renamed class and method
/// identifiers, plus one class of its own.
const ARCADE_IR: &str = r#"sdk app:com.demo.arcade:0
class Aa
method Aa.m1 public sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig1
  invoke_static r1 api:fp.sig2
  invoke_static r2 api:fp.sig3
  invoke_static r3 api:util.concat r0,r1
  invoke_static r4 api:util.concat r3,r2
  invoke_static r5 api:net.send r4
  invoke_static r6 callee:Bb.n1 r2
  return r6
method Aa.m2 nonpublic sig="()->java.lang.String" params=
  const_string r0 "metrics/2.1"
  return r0
class Bb
method Bb.n1 public sig="(java.lang.String)->java.lang.String" params=r0
  invoke_static r1 api:crypto.digest r0
  return r1
method Bb.n2 public sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig4
  invoke_static r1 api:fp.sig5
  invoke_static r2 api:util.concat r0,r1
  invoke_static r3 api:crypto.digest r2
  return r3
class Cc
method Cc.p1 nonpublic sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig6
  invoke_static r1 api:net.send r0
  return r1
class ArcadeShell
method ArcadeShell.boot public sig="()->void" params=
  const r0
  return_void
"#;

/// App embedding only the `metrics` collector (its hash callee is absent).
const PUZZLES_IR: &str = r#"sdk app:com.demo.puzzles:0
class Px
method Px.m1 public sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig1
  invoke_static r1 api:fp.sig2
  invoke_static r2 api:fp.sig3
  invoke_static r3 api:util.concat r0,r1
  invoke_static r4 api:util.concat r3,r2
  invoke_static r5 api:net.send r4
  invoke_static r6 callee:Qz.n1 r2
  return r6
method Px.m2 nonpublic sig="()->java.lang.String" params=
  const_string r0 "metrics/2.1"
  return r0
class PuzzleShell
method PuzzleShell.boot public sig="()->void" params=
  const_string r0 "puzzles"
  return_void
"#;

/// App embedding only `hashkit`.
const GLOW_IR: &str = r#"sdk app:com.demo.glow:0
class Gd
method Gd.h public sig="(java.lang.String)->java.lang.String" params=r0
  invoke_static r1 api:crypto.digest r0
  return r1
method Gd.s public sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig4
  invoke_static r1 api:fp.sig5
  invoke_static r2 api:util.concat r0,r1
  invoke_static r3 api:crypto.digest r2
  return r3
class Gp
method Gp.s1 nonpublic sig="()->java.lang.String" params=
  invoke_static r0 api:fp.sig6
  invoke_static r1 api:net.send r0
  return r1
class GlowShell
method GlowShell.boot public sig="()->void" params=
  const_string r0 "glow"
  return_void
"#;

/// App embedding only the harmless `netkit`.
const LEDGER_IR: &str = r#"sdk app:com.demo.ledger:0
class Lb
method Lb.ping public sig="()->java.lang.String" params=
  const_string r0 "pong"
  invoke_static r1 api:net.send r0
  return r1
class LedgerShell
method LedgerShell.boot public sig="()->void" params=
  const r0
  return_void
"#;

const SDK_IRS: [(&str, &str); 5] = [
    ("demo-metrics-2.1.0.ir", METRICS_IR),
    ("demo-hashkit-1.0.0.ir", HASHKIT_V1_IR),
    ("demo-hashkit-2.0.0.ir", HASHKIT_V2_IR),
    ("demo-netkit-1.2.0.ir", NETKIT_IR),
    ("demo-oldkit-0.9-beta.ir", OLDKIT_IR),
];

const APP_IRS: [(&str, &str); 4] = [
    ("com.demo.arcade.ir", ARCADE_IR),
    ("com.demo.glow.ir", GLOW_IR),
    ("com.demo.ledger.ir", LEDGER_IR),
    ("com.demo.puzzles.ir", PUZZLES_IR),
];

/// `metrics` depends on `netkit` and `hashkit:1.0.0`; `netkit` asks for
/// `hashkit:2.0.0`, which loses the version conflict to the nearer 1.0.0.
const MANIFESTS: [(&str, &str); 4] = [
    (
        "demo-metrics-2.1.0.json",
        r#"{"coordinate":"demo:metrics:2.1.0","dependencies":["demo:netkit:1.2.0","demo:hashkit:1.0.0"]}"#,
    ),
    (
        "demo-netkit-1.2.0.json",
        r#"{"coordinate":"demo:netkit:1.2.0","dependencies":["demo:hashkit:2.0.0"]}"#,
    ),
    ("demo-hashkit-1.0.0.json", r#"{"coordinate":"demo:hashkit:1.0.0","dependencies":[]}"#),
    ("demo-hashkit-2.0.0.json", r#"{"coordinate":"demo:hashkit:2.0.0","dependencies":[]}"#),
];

/// Sources labeled by their own API identifier, so downstream statistics
/// join directly against the signal-class map.
const TAINT_CONFIG_JSON: &str = r#"{
  "sources": {
    "fp.sig1": "fp.sig1",
    "fp.sig2": "fp.sig2",
    "fp.sig3": "fp.sig3",
    "fp.sig4": "fp.sig4",
    "fp.sig5": "fp.sig5",
    "fp.sig6": "fp.sig6"
  },
  "sinks": {
    "net.send": "NETWORK",
    "crypto.digest": "ENCRYPTION"
  },
  "propagators": ["util.concat"]
}
"#;

const RULES_JSON: &str = r#"[
  {
    "name": "signal-aggregation",
    "sourceGroups": [["fp.sig1", "fp.sig2", "fp.sig3", "fp.sig4", "fp.sig5", "fp.sig6"]],
    "sinkGroups": ["NETWORK", "ENCRYPTION"],
    "minDistinctSources": 2
  }
]
"#;

/// `hashkit:2.0.0` is deliberately unlabeled to exercise the
/// UNCLEAR_UNFOUND fallback in the prevalence report.
const LABELS_CSV: &str = "coordinate,label,subLabel
demo:hashkit:1.0.0,SECURITY_AND_AUTHENTICATION,SECURITY_ANTI_FRAUD
demo:metrics:2.1.0,ANALYTICS,ANALYTICS_USER_BEHAVIOR
demo:netkit:1.2.0,TOOLS_OTHER,OTHER
";

const SIGNALS_CSV: &str = "api,class
fp.sig1,OTHER
fp.sig2,APP_USAGE
fp.sig3,ACCOUNT_LIST
fp.sig4,LOCATION_COARSE
fp.sig5,LOCATION_FINE
fp.sig6,ACCOUNT_LIST
";

/// `com.demo.micro` sits below the audience threshold and is filtered out.
const APPS_JSONL: &str = r#"{"appId":"com.demo.arcade","category":"Game","audienceSize":150000,"declaredSdks":["demo:metrics:2.1.0"]}
{"appId":"com.demo.glow","category":"Beauty","audienceSize":45000}
{"appId":"com.demo.ledger","category":"Finance","audienceSize":30000}
{"appId":"com.demo.micro","category":"Game","audienceSize":500}
{"appId":"com.demo.puzzles","category":"Game","audienceSize":90000}
"#;

const RATINGS_CSV: &str = "item,rater1,rater2
demo:metrics:2.1.0,ANALYTICS,ANALYTICS
demo:hashkit:1.0.0,ANALYTICS,TOOLS_OTHER
demo:netkit:1.2.0,TOOLS_OTHER,TOOLS_OTHER
demo:oldkit:1.0.0,TOOLS_OTHER,TOOLS_OTHER
";

/// The tiny demo classes overlap on common instruction mixes, so the demo
/// raises the class-similarity floor well above the large-corpus default.
const PIPELINE_TOML: &str = r#"[paths]
manifests = "manifests"
sdk_ir = "ir"
app_ir = "apps"
app_metadata = "apps.jsonl"
taint_config = "taint.json"
rules = "rules.json"
labels = "labels.csv"
signal_map = "signals.csv"
ratings = "ratings.csv"

[taint]
scope = "MAIN_ONLY"
context_depth = 1
taint_unknown_apis = false

[matching]
class_similarity = 0.6
support = 0.55

[corpus]
min_audience = 10000

[stats]
top_k = 10
"#;

/// Locations of everything `write_demo` produced.
#[derive(Clone, Debug)]
pub struct DemoPaths {
    pub root: PathBuf,
    pub pipeline: PathBuf,
    pub manifest_dir: PathBuf,
    pub sdk_ir_dir: PathBuf,
    pub app_ir_dir: PathBuf,
    pub app_metadata: PathBuf,
    pub taint_config: PathBuf,
    pub rules: PathBuf,
    pub labels: PathBuf,
    pub signal_map: PathBuf,
    pub ratings: PathBuf,
}

/// Writes the complete demo corpus under `dir` and returns its layout.
pub fn write_demo(dir: &Path) -> io::Result<DemoPaths> {
    let paths = DemoPaths {
        root: dir.to_path_buf(),
        pipeline: dir.join("pipeline.toml"),
        manifest_dir: dir.join("manifests"),
        sdk_ir_dir: dir.join("ir"),
        app_ir_dir: dir.join("apps"),
        app_metadata: dir.join("apps.jsonl"),
        taint_config: dir.join("taint.json"),
        rules: dir.join("rules.json"),
        labels: dir.join("labels.csv"),
        signal_map: dir.join("signals.csv"),
        ratings: dir.join("ratings.csv"),
    };
    fs::create_dir_all(&paths.manifest_dir)?;
    fs::create_dir_all(&paths.sdk_ir_dir)?;
    fs::create_dir_all(&paths.app_ir_dir)?;
    for (name, text) in SDK_IRS {
        fs::write(paths.sdk_ir_dir.join(name), text)?;
    }
    for (name, text) in APP_IRS {
        fs::write(paths.app_ir_dir.join(name), text)?;
    }
    for (name, text) in MANIFESTS {
        fs::write(paths.manifest_dir.join(name), text)?;
    }
    fs::write(&paths.pipeline, PIPELINE_TOML)?;
    fs::write(&paths.app_metadata, APPS_JSONL)?;
    fs::write(&paths.taint_config, TAINT_CONFIG_JSON)?;
    fs::write(&paths.rules, RULES_JSON)?;
    fs::write(&paths.labels, LABELS_CSV)?;
    fs::write(&paths.signal_map, SIGNALS_CSV)?;
    fs::write(&paths.ratings, RATINGS_CSV)?;
    Ok(paths)
}

/// The two-SDK convergence fixture, ready for analysis.
#[derive(Clone, Debug)]
pub struct CoFlowFixture {
    pub bundle: ResolvedBundle,
    pub code: BTreeMap<SdkCoordinate, SdkIR>,
    pub config: TaintConfig,
    pub rule: CoFlowRule,
}

/// A main SDK whose public entry point reads signals `1`–`3`, sends them
/// over the network, and hands signal `3` to a dependency that digests it;
/// the dependency privately reads signals `4`–`6`, which stay silent when
/// sources are restricted to the main SDK.
pub fn coflow_pair() -> CoFlowFixture {
    let main = parse_sdk_ir(METRICS_IR).expect("fixture parses");
    let dep = parse_sdk_ir(HASHKIT_V1_IR).expect("fixture parses");
    let manifests = vec![Manifest {
        coordinate: main.coordinate.clone(),
        dependencies: vec![dep.coordinate.clone()],
    }];
    let graph = build_graph(&manifests).expect("fixture graph builds");
    let bundle = resolve(&graph, &main.coordinate).expect("fixture bundle resolves");
    let code = BTreeMap::from([
        (main.coordinate.clone(), main),
        (dep.coordinate.clone(), dep),
    ]);
    let config = TaintConfig {
        sources: (1..=6).map(|i| (format!("fp.sig{i}"), i.to_string())).collect(),
        sinks: BTreeMap::from([
            ("net.send".to_string(), SinkGroup::Network),
            ("crypto.digest".to_string(), SinkGroup::Encryption),
        ]),
        propagators: ["util.concat".to_string()].into(),
    };
    let rule = CoFlowRule {
        name: "signal-aggregation".to_string(),
        source_groups: vec![(1..=6).map(|i| i.to_string()).collect()],
        sink_groups: [SinkGroup::Network, SinkGroup::Encryption].into(),
        min_distinct_sources: 2,
    };
    CoFlowFixture { bundle, code, config, rule }
}
