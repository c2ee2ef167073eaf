//! SDK feature extraction, hashed vector construction, and rarity weights.
//!
//! Every method is summarized by named features — its anonymized signature,
//! the framework APIs it calls, its string constants, and its normalized
//! opcode mix. Feature names are hashed to 64-bit dimensions (FNV-1a) and
//! accumulated into sparse vectors; colliding names simply sum. Dimension
//! weights grow with rarity across a reference corpus, so ubiquitous
//! features contribute little to similarity.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Float;
use thiserror::Error;

use crate::ir::{kind_histogram, InstructionKind, IrError, MethodIR, SdkCoordinate, SdkIR};
use crate::vecmath::SparseVec;

mod index;
pub use index::{
    build_index, match_app, read_index, write_index, IndexedClass, MatchOutcome, SdkIndex,
    SdkIndexEntry, SdkMatch, DEFAULT_CLASS_SIMILARITY, DEFAULT_SUPPORT,
};

/// Errors raised while building vectors, indexing, or matching.
#[derive(Debug, Error)]
pub enum MatchError {
    #[error("invalid matcher configuration: {0}")]
    Config(String),
    #[error("class {class} in {coordinate} has no methods")]
    EmptyClass { coordinate: SdkCoordinate, class: String },
    #[error("duplicate SDK {0} in corpus")]
    DuplicateSdk(SdkCoordinate),
    #[error("invalid IR for {coordinate}: {source}")]
    InvalidIr {
        coordinate: SdkCoordinate,
        #[source]
        source: IrError,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed index file {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET_BASIS: u64 = 14695981039346656037;
    const PRIME: u64 = 1099511628211;
    let mut hash = OFFSET_BASIS;
    for byte in bytes {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Hashes a feature name to its vector dimension.
pub fn feature_dim(name: &str) -> u64 {
    fnv1a64(name.as_bytes())
}

/// Named features of one method with their magnitudes:
///
/// * `sig:<signature>` — 1, the anonymized signature;
/// * `api:<api>` — the number of calls to that framework API;
/// * `str:<literal>` — 1 per distinct string constant;
/// * `op:<KIND>` — occurrences of the instruction kind over body length.
pub fn method_features<S: Float>(method: &MethodIR) -> BTreeMap<String, S> {
    let mut features: BTreeMap<String, S> = BTreeMap::new();
    features.insert(format!("sig:{}", method.signature), S::one());

    let mut api_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut strings: BTreeSet<&str> = BTreeSet::new();
    for instr in &method.body {
        if let Some(api) = &instr.api {
            *api_counts.entry(api).or_default() += 1;
        }
        if instr.kind == InstructionKind::ConstString {
            if let Some(literal) = &instr.literal {
                strings.insert(literal);
            }
        }
    }
    for (api, count) in api_counts {
        features.insert(format!("api:{api}"), S::from(count).unwrap());
    }
    for literal in strings {
        features.insert(format!("str:{literal}"), S::one());
    }

    let histogram = kind_histogram(method);
    let body_len = method.body.len();
    if body_len > 0 {
        let len = S::from(body_len).unwrap();
        for (kind, count) in InstructionKind::ALL.iter().zip(histogram) {
            if count > 0 {
                features.insert(
                    format!("op:{}", kind.name()),
                    S::from(count).unwrap() / len,
                );
            }
        }
    }
    features
}

/// Rarity weights per hashed dimension. Dimensions absent from the table
/// weigh 1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightTableOf<S> {
    weights: BTreeMap<u64, S>,
}

impl<S: Float> WeightTableOf<S> {
    pub fn get(&self, dim: u64) -> S {
        self.weights.get(&dim).copied().unwrap_or_else(S::one)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Entries in ascending dimension order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, S)> + '_ {
        self.weights.iter().map(|(d, w)| (*d, *w))
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (u64, S)>) -> Self {
        Self { weights: entries.into_iter().collect() }
    }
}

impl WeightTableOf<f64> {
    /// FNV-1a over the table's entries in ascending dimension order, each
    /// as little-endian dimension then little-endian weight bits. Two runs
    /// computed the same corpus exactly when the fingerprints agree.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET_BASIS: u64 = 14695981039346656037;
        const PRIME: u64 = 1099511628211;
        let mut hash = OFFSET_BASIS;
        let mut eat = |bytes: &[u8]| {
            for byte in bytes {
                hash ^= u64::from(*byte);
                hash = hash.wrapping_mul(PRIME);
            }
        };
        for (dim, weight) in &self.weights {
            eat(&dim.to_le_bytes());
            eat(&weight.to_le_bytes());
        }
        hash
    }
}

/// For every dimension, the number of corpus SDKs containing it.
pub fn document_frequencies(corpus: &[SdkIR]) -> BTreeMap<u64, usize> {
    let mut df: BTreeMap<u64, usize> = BTreeMap::new();
    for sdk in corpus {
        let mut dims: BTreeSet<u64> = BTreeSet::new();
        for class in &sdk.classes {
            for method in &class.methods {
                for name in method_features::<f64>(method).keys() {
                    dims.insert(feature_dim(name));
                }
            }
        }
        for dim in dims {
            *df.entry(dim).or_default() += 1;
        }
    }
    df
}

/// Weighs each dimension `ln(1 + N/df)` for a corpus of `N` SDKs.
pub fn compute_weights<S: Float>(corpus: &[SdkIR]) -> WeightTableOf<S> {
    let n = S::from(corpus.len()).unwrap();
    let weights = document_frequencies(corpus)
        .into_iter()
        .map(|(dim, df)| {
            let df = S::from(df).unwrap();
            (dim, (S::one() + n / df).ln())
        })
        .collect();
    WeightTableOf { weights }
}

/// The weighted hashed vector of one method.
pub fn method_vector<S: Float>(method: &MethodIR, weights: &WeightTableOf<S>) -> SparseVec<S> {
    SparseVec::from_entries(method_features::<S>(method).into_iter().map(|(name, magnitude)| {
        let dim = feature_dim(&name);
        (dim, magnitude * weights.get(dim))
    }))
}

/// The vector of a class: the sum of its methods' vectors. A class with no
/// methods has no signal to match on and is rejected.
pub fn class_vector<S: Float>(
    coordinate: &SdkCoordinate,
    class_id: &str,
    methods: &[MethodIR],
    weights: &WeightTableOf<S>,
) -> Result<SparseVec<S>, MatchError> {
    if methods.is_empty() {
        return Err(MatchError::EmptyClass {
            coordinate: coordinate.clone(),
            class: class_id.to_string(),
        });
    }
    let mut sum = SparseVec::new();
    for method in methods {
        sum.add_assign(&method_vector(method, weights));
    }
    Ok(sum)
}
