//! SDK manifests and nearest-wins dependency resolution.
//!
//! Each SDK ships a manifest naming its coordinate and direct dependencies.
//! [`build_graph`] assembles manifests into a dependency graph; coordinates
//! that are referenced but have no manifest become *external* leaf nodes.
//!
//! [`resolve`] walks the graph breadth-first from a main SDK and keeps one
//! version per `group:artifact`: the version with the smallest shortest-path
//! depth wins, and among versions first reachable at the same depth the
//! lexicographically greatest version string wins. Edges out of a discarded
//! version are not traversed, so dependencies reachable only through a
//! losing version are dropped.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::SdkCoordinate;

#[derive(Debug, Error)]
pub enum DepError {
    #[error("duplicate manifest for coordinate {0}")]
    DuplicateManifest(SdkCoordinate),
    #[error("manifest {coordinate}: {msg}")]
    InvalidManifest { coordinate: SdkCoordinate, msg: String },
    #[error("main SDK {0} is not in the graph")]
    MainNotFound(SdkCoordinate),
    #[error("reading manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing manifest {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// One SDK's declared identity and direct dependencies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Manifest {
    pub coordinate: SdkCoordinate,
    pub dependencies: Vec<SdkCoordinate>,
}

impl Manifest {
    /// Validates the no-self-dependency and no-duplicate-dependency rules.
    pub fn validate(&self) -> Result<(), DepError> {
        let mut seen = BTreeSet::new();
        for dep in &self.dependencies {
            if *dep == self.coordinate {
                return Err(DepError::InvalidManifest {
                    coordinate: self.coordinate.clone(),
                    msg: "manifest depends on itself".to_string(),
                });
            }
            if !seen.insert(dep) {
                return Err(DepError::InvalidManifest {
                    coordinate: self.coordinate.clone(),
                    msg: format!("duplicate dependency {dep}"),
                });
            }
        }
        Ok(())
    }
}

/// Dependency graph over exact coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DependencyGraph {
    /// Every known coordinate; `true` means external (referenced by some
    /// manifest but carrying none itself, so it has no out-edges).
    nodes: BTreeMap<SdkCoordinate, bool>,
    /// Out-edges per coordinate, in manifest declaration order.
    edges: BTreeMap<SdkCoordinate, Vec<SdkCoordinate>>,
}

impl DependencyGraph {
    pub fn contains(&self, coordinate: &SdkCoordinate) -> bool {
        self.nodes.contains_key(coordinate)
    }

    pub fn is_external(&self, coordinate: &SdkCoordinate) -> Option<bool> {
        self.nodes.get(coordinate).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&SdkCoordinate, bool)> {
        self.nodes.iter().map(|(c, ext)| (c, *ext))
    }

    pub fn dependencies_of(&self, coordinate: &SdkCoordinate) -> &[SdkCoordinate] {
        self.edges.get(coordinate).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// The kept coordinate set for one main SDK.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResolvedBundle {
    pub main: SdkCoordinate,
    /// Winning version per `group:artifact` key (rendered `group:artifact`).
    pub resolved: BTreeMap<String, String>,
    /// BFS depth of each kept coordinate; the main SDK is at depth 0.
    pub depth_of: BTreeMap<SdkCoordinate, u32>,
    /// Human-readable warning diagnostics (e.g. dependency cycles).
    pub warnings: Vec<String>,
}

impl ResolvedBundle {
    /// Kept coordinates in ascending (depth, coordinate) order.
    pub fn coordinates(&self) -> Vec<SdkCoordinate> {
        let mut coords: Vec<_> = self.depth_of.keys().cloned().collect();
        coords.sort_by_key(|c| (self.depth_of[c], c.clone()));
        coords
    }
}

/// Assembles manifests into a [`DependencyGraph`].
///
/// Every manifest contributes a non-external node and its out-edges; every
/// referenced coordinate without a manifest becomes an external leaf.
pub fn build_graph(manifests: &[Manifest]) -> Result<DependencyGraph, DepError> {
    let mut nodes: BTreeMap<SdkCoordinate, bool> = BTreeMap::new();
    let mut edges: BTreeMap<SdkCoordinate, Vec<SdkCoordinate>> = BTreeMap::new();
    for manifest in manifests {
        manifest.validate()?;
        match nodes.insert(manifest.coordinate.clone(), false) {
            Some(false) => return Err(DepError::DuplicateManifest(manifest.coordinate.clone())),
            _ => {}
        }
        edges.insert(manifest.coordinate.clone(), manifest.dependencies.clone());
    }
    for manifest in manifests {
        for dep in &manifest.dependencies {
            nodes.entry(dep.clone()).or_insert(true);
        }
    }
    Ok(DependencyGraph { nodes, edges })
}

/// Resolves the bundle for `main` by pruned breadth-first traversal.
///
/// Level-synchronized BFS: all coordinates discovered at a depth are
/// collected before winners are chosen, so the same-depth version tie-break
/// (lexicographically greatest version string) sees every candidate. Losing
/// versions are never traversed. Cycles terminate because each
/// `group:artifact` is decided exactly once; a back-edge onto the main SDK
/// is reported as a warning.
pub fn resolve(graph: &DependencyGraph, main: &SdkCoordinate) -> Result<ResolvedBundle, DepError> {
    if !graph.contains(main) {
        return Err(DepError::MainNotFound(main.clone()));
    }

    let mut resolved: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut depth_of: BTreeMap<SdkCoordinate, u32> = BTreeMap::new();
    let mut warnings: Vec<String> = Vec::new();

    resolved.insert(main.artifact_key(), main.version().to_string());
    depth_of.insert(main.clone(), 0);

    let mut frontier: VecDeque<SdkCoordinate> = VecDeque::new();
    frontier.push_back(main.clone());
    let mut depth = 0u32;
    let mut cycle_reported = false;

    while !frontier.is_empty() {
        depth += 1;
        // Versions of not-yet-decided artifacts first seen at this depth.
        let mut discovered: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
        for node in &frontier {
            for dep in graph.dependencies_of(node) {
                if dep == main && !cycle_reported {
                    warnings.push(format!(
                        "dependency cycle: {node} depends back on the main SDK {main}"
                    ));
                    cycle_reported = true;
                }
                if resolved.contains_key(&dep.artifact_key()) {
                    // The artifact was decided at a shallower depth (or is
                    // already on this bundle); the edge is not traversed.
                    continue;
                }
                discovered
                    .entry(dep.artifact_key())
                    .or_default()
                    .insert(dep.version().to_string());
            }
        }
        let mut next: VecDeque<SdkCoordinate> = VecDeque::new();
        for ((group, artifact), versions) in discovered {
            let winner = versions.last().expect("non-empty version set").clone();
            let coordinate = SdkCoordinate::new(&group, &artifact, &winner)
                .expect("coordinates in the graph are well-formed");
            resolved.insert((group, artifact), winner);
            depth_of.insert(coordinate.clone(), depth);
            next.push_back(coordinate);
        }
        frontier = next;
    }

    let resolved = resolved
        .into_iter()
        .map(|((g, a), v)| (format!("{g}:{a}"), v))
        .collect();
    Ok(ResolvedBundle { main: main.clone(), resolved, depth_of, warnings })
}

/// Reads every `*.json` manifest in a directory (sorted by file name).
pub fn read_manifest_dir(dir: &Path) -> Result<Vec<Manifest>, DepError> {
    let io_err = |source| DepError::Io { path: dir.display().to_string(), source };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut manifests = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path)
            .map_err(|source| DepError::Io { path: path.display().to_string(), source })?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|source| DepError::Json { path: path.display().to_string(), source })?;
        manifests.push(manifest);
    }
    Ok(manifests)
}
