//! The class-vector index, its binary file format, and the two-stage
//! matcher that identifies indexed SDKs inside an app.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{class_vector, compute_weights, MatchError};
use crate::ir::{SdkCoordinate, SdkIR};
use crate::{FeatureVector, WeightTable};

/// Default class-similarity floor (stage one cosine threshold).
pub const DEFAULT_CLASS_SIMILARITY: f64 = 0.2;
/// Default support floor (stage two matched-class fraction).
pub const DEFAULT_SUPPORT: f64 = 0.55;

const MAGIC: &[u8; 4] = b"FPSI";
const VERSION: u32 = 1;

/// One indexed class: its id and weighted vector.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexedClass {
    pub id: String,
    pub vector: FeatureVector,
}

/// One indexed SDK with its matchable (non-empty) classes, sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct SdkIndexEntry {
    pub coordinate: SdkCoordinate,
    pub classes: Vec<IndexedClass>,
}

/// The full index: the weight table vectors were built with, entries sorted
/// by coordinate, and an inverted dimension→class map used to skip pairs
/// with no shared dimension (their cosine is exactly zero, below any
/// positive similarity floor, so pruning never changes results).
#[derive(Clone, Debug)]
pub struct SdkIndex {
    pub weights: WeightTable,
    pub entries: Vec<SdkIndexEntry>,
    inverted: BTreeMap<u64, Vec<(u32, u32)>>,
}

impl SdkIndex {
    fn assemble(weights: WeightTable, entries: Vec<SdkIndexEntry>) -> Self {
        let mut inverted: BTreeMap<u64, Vec<(u32, u32)>> = BTreeMap::new();
        for (s, entry) in entries.iter().enumerate() {
            for (c, class) in entry.classes.iter().enumerate() {
                for dim in class.vector.dims() {
                    inverted.entry(dim).or_default().push((s as u32, c as u32));
                }
            }
        }
        SdkIndex { weights, entries, inverted }
    }

    /// Classes sharing at least one dimension with the vector.
    fn candidates(&self, vector: &FeatureVector) -> BTreeSet<(u32, u32)> {
        let mut out = BTreeSet::new();
        for dim in vector.dims() {
            if let Some(postings) = self.inverted.get(&dim) {
                out.extend(postings.iter().copied());
            }
        }
        out
    }

    pub fn sdk_count(&self) -> usize {
        self.entries.len()
    }

    /// Matchable classes across all entries.
    pub fn total_class_count(&self) -> usize {
        self.entries.iter().map(|e| e.classes.len()).sum()
    }
}

/// Builds an index over a reference corpus: rarity weights from the corpus,
/// then one weighted vector per non-empty class. Classes without methods
/// are not matchable and are left out; an SDK whose classes are all empty
/// gets no entry.
pub fn build_index(corpus: &[SdkIR]) -> Result<SdkIndex, MatchError> {
    let mut seen: BTreeSet<&SdkCoordinate> = BTreeSet::new();
    for sdk in corpus {
        sdk.validate().map_err(|source| MatchError::InvalidIr {
            coordinate: sdk.coordinate.clone(),
            source,
        })?;
        if !seen.insert(&sdk.coordinate) {
            return Err(MatchError::DuplicateSdk(sdk.coordinate.clone()));
        }
    }
    let weights: WeightTable = compute_weights(corpus);
    let mut sorted: Vec<&SdkIR> = corpus.iter().collect();
    sorted.sort_by(|a, b| a.coordinate.cmp(&b.coordinate));
    let mut entries = Vec::new();
    for sdk in sorted {
        let mut classes = Vec::new();
        let mut class_refs: Vec<_> = sdk.classes.iter().collect();
        class_refs.sort_by(|a, b| a.id.cmp(&b.id));
        for class in class_refs {
            if class.methods.is_empty() {
                continue;
            }
            let vector = class_vector(&sdk.coordinate, &class.id, &class.methods, &weights)?;
            classes.push(IndexedClass { id: class.id.clone(), vector });
        }
        if !classes.is_empty() {
            entries.push(SdkIndexEntry { coordinate: sdk.coordinate.clone(), classes });
        }
    }
    Ok(SdkIndex::assemble(weights, entries))
}

/// One detected SDK.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SdkMatch {
    pub coordinate: SdkCoordinate,
    /// Fraction of the SDK's indexed classes matched by some app class.
    pub support: f64,
    pub matched_class_count: usize,
    pub total_class_count: usize,
}

/// The matcher's output: detected SDKs (best support first) and, for every
/// non-empty app class, the detected SDKs it still matches after
/// low-support candidates were removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchOutcome {
    pub matches: Vec<SdkMatch>,
    pub class_matches: BTreeMap<String, BTreeSet<SdkCoordinate>>,
}

/// Two-stage matching of one app against the index.
///
/// Stage one marks every (app class, indexed class) pair with cosine at
/// least `class_similarity` as a candidate. Stage two computes each SDK's
/// support — the fraction of its indexed classes matched by at least one
/// app class — keeps SDKs with support at least `support`, and removes the
/// rest from every class's candidate set.
pub fn match_app(
    app: &SdkIR,
    index: &SdkIndex,
    class_similarity: f64,
    support: f64,
) -> Result<MatchOutcome, MatchError> {
    if !(class_similarity > 0.0 && class_similarity <= 1.0) {
        return Err(MatchError::Config(format!(
            "class similarity floor must be in (0, 1], got {class_similarity}"
        )));
    }
    if !(support > 0.0 && support <= 1.0) {
        return Err(MatchError::Config(format!(
            "support floor must be in (0, 1], got {support}"
        )));
    }
    app.validate().map_err(|source| MatchError::InvalidIr {
        coordinate: app.coordinate.clone(),
        source,
    })?;

    // App class vectors under the index's weights, sorted by class id.
    let mut app_classes: Vec<(String, FeatureVector)> = Vec::new();
    for class in &app.classes {
        if class.methods.is_empty() {
            continue;
        }
        let vector = class_vector(&app.coordinate, &class.id, &class.methods, &index.weights)?;
        app_classes.push((class.id.clone(), vector));
    }
    app_classes.sort_by(|a, b| a.0.cmp(&b.0));

    // Stage one: candidate (sdk, class) pairs per app class.
    let mut candidate_sets: Vec<BTreeSet<(u32, u32)>> = Vec::with_capacity(app_classes.len());
    let mut matched: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for (_, vector) in &app_classes {
        let mut kept = BTreeSet::new();
        for (s, c) in index.candidates(vector) {
            let indexed = &index.entries[s as usize].classes[c as usize];
            let Ok(similarity) = vector.cosine(&indexed.vector) else { continue };
            if similarity >= class_similarity {
                kept.insert((s, c));
                matched.entry(s).or_default().insert(c);
            }
        }
        candidate_sets.push(kept);
    }

    // Stage two: support per SDK; drop SDKs below the floor everywhere.
    let mut detected: BTreeSet<u32> = BTreeSet::new();
    let mut matches = Vec::new();
    for (s, classes) in &matched {
        let entry = &index.entries[*s as usize];
        let total = entry.classes.len();
        let share = classes.len() as f64 / total as f64;
        if share >= support {
            detected.insert(*s);
            matches.push(SdkMatch {
                coordinate: entry.coordinate.clone(),
                support: share,
                matched_class_count: classes.len(),
                total_class_count: total,
            });
        }
    }
    for set in &mut candidate_sets {
        set.retain(|(s, _)| detected.contains(s));
    }
    matches.sort_by(|a, b| {
        b.support
            .total_cmp(&a.support)
            .then_with(|| a.coordinate.cmp(&b.coordinate))
    });

    let class_matches = app_classes
        .iter()
        .zip(&candidate_sets)
        .map(|((id, _), set)| {
            let coords: BTreeSet<SdkCoordinate> = set
                .iter()
                .map(|(s, _)| index.entries[*s as usize].coordinate.clone())
                .collect();
            (id.clone(), coords)
        })
        .collect();
    Ok(MatchOutcome { matches, class_matches })
}

// ---- binary file format ----------------------------------------------------

fn encode_index(index: &SdkIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&index.weights.fingerprint().to_le_bytes());
    out.extend_from_slice(&(index.weights.len() as u64).to_le_bytes());
    for (dim, weight) in index.weights.iter() {
        out.extend_from_slice(&dim.to_le_bytes());
        out.extend_from_slice(&weight.to_le_bytes());
    }
    out.extend_from_slice(&(index.entries.len() as u64).to_le_bytes());
    for entry in &index.entries {
        let coord = entry.coordinate.to_string();
        out.extend_from_slice(&(coord.len() as u64).to_le_bytes());
        out.extend_from_slice(coord.as_bytes());
        out.extend_from_slice(&(entry.classes.len() as u64).to_le_bytes());
        for class in &entry.classes {
            out.extend_from_slice(&(class.id.len() as u64).to_le_bytes());
            out.extend_from_slice(class.id.as_bytes());
            out.extend_from_slice(&(class.vector.len() as u64).to_le_bytes());
            for (dim, value) in class.vector.iter() {
                out.extend_from_slice(&dim.to_le_bytes());
                out.extend_from_slice(&value.to_le_bytes());
            }
        }
    }
    out
}

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> MatchError {
        MatchError::Corrupt { path: self.path.display().to_string(), reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MatchError> {
        if self.data.len() - self.pos < n {
            return Err(self.corrupt("unexpected end of file"));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, MatchError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, MatchError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, MatchError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A length-prefixed count of fixed-size records, guarded against
    /// lengths the remaining input cannot possibly hold.
    fn count(&mut self, record_size: usize) -> Result<usize, MatchError> {
        let n = self.u64()?;
        let remaining = (self.data.len() - self.pos) as u64;
        if n > remaining / record_size as u64 {
            return Err(self.corrupt(format!("count {n} exceeds file size")));
        }
        Ok(n as usize)
    }

    fn string(&mut self) -> Result<String, MatchError> {
        let len = self.count(1)?;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.corrupt("invalid UTF-8 string"))
    }
}

fn decode_index(data: &[u8], path: &Path) -> Result<SdkIndex, MatchError> {
    let mut r = ByteReader { data, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.corrupt(format!("unsupported version {version}")));
    }
    let stated_fingerprint = r.u64()?;
    let weight_count = r.count(16)?;
    let mut weight_entries = Vec::with_capacity(weight_count);
    for _ in 0..weight_count {
        weight_entries.push((r.u64()?, r.f64()?));
    }
    if weight_entries.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(r.corrupt("weight dimensions not strictly ascending"));
    }
    let weights = WeightTable::from_entries(weight_entries);
    if weights.fingerprint() != stated_fingerprint {
        return Err(r.corrupt("weight fingerprint mismatch"));
    }

    let sdk_count = r.count(16)?;
    let mut entries = Vec::with_capacity(sdk_count);
    for _ in 0..sdk_count {
        let coord = r.string()?;
        let coordinate: SdkCoordinate = coord
            .parse()
            .map_err(|e| r.corrupt(format!("bad coordinate {coord:?}: {e}")))?;
        let class_count = r.count(16)?;
        let mut classes = Vec::with_capacity(class_count);
        for _ in 0..class_count {
            let id = r.string()?;
            let entry_count = r.count(16)?;
            let mut vector_entries = Vec::with_capacity(entry_count);
            for _ in 0..entry_count {
                vector_entries.push((r.u64()?, r.f64()?));
            }
            if vector_entries.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(r.corrupt("vector dimensions not strictly ascending"));
            }
            classes.push(IndexedClass { id, vector: FeatureVector::from_entries(vector_entries) });
        }
        entries.push(SdkIndexEntry { coordinate, classes });
    }
    if entries.windows(2).any(|w| w[0].coordinate >= w[1].coordinate) {
        return Err(r.corrupt("SDK entries not sorted by coordinate"));
    }
    if r.pos != data.len() {
        return Err(r.corrupt("trailing bytes"));
    }
    Ok(SdkIndex::assemble(weights, entries))
}

/// Writes the index in its binary format.
pub fn write_index(index: &SdkIndex, path: &Path) -> Result<(), MatchError> {
    fs::write(path, encode_index(index)).map_err(|source| MatchError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads an index back, verifying structure and the weight fingerprint.
pub fn read_index(path: &Path) -> Result<SdkIndex, MatchError> {
    let data = fs::read(path).map_err(|source| MatchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_index(&data, path)
}
