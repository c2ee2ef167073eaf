//! Hand-computed agreement oracle in the normalized disagreement form.
//!
//! The library computes alpha with the closed-form denominator
//! `n² − Σ n_c²`; this oracle instead normalizes the coincidence matrix
//! into observed and expected disagreement (D_o, D_e) and returns
//! `1 − D_o / D_e`, which must agree to floating-point accuracy.

use std::collections::BTreeMap;

use fpscope_core::stats::{RatingItem, RatingMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Alpha via normalized disagreements, `None` when expected disagreement
/// is zero (fewer than two distinct labels ever paired).
pub fn alpha_by_disagreement(ratings: &RatingMatrix) -> Option<f64> {
    let mut coincidence: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut n = 0.0f64;
    for item in &ratings.items {
        let values: Vec<&String> = item.values.iter().flatten().collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        let weight = 1.0 / (m as f64 - 1.0);
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                if i == j {
                    continue;
                }
                *coincidence.entry(((*a).clone(), (*b).clone())).or_default() += weight;
                n += weight;
            }
        }
    }

    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for ((a, _), count) in &coincidence {
        *totals.entry(a).or_default() += count;
    }

    let observed_off: f64 =
        coincidence.iter().filter(|((a, b), _)| a != b).map(|(_, count)| count).sum();
    let mut expected_off = 0.0f64;
    for (a, na) in &totals {
        for (b, nb) in &totals {
            if a != b {
                expected_off += na * nb;
            }
        }
    }

    let d_o = observed_off / n;
    let d_e = expected_off / (n * (n - 1.0));
    if d_e == 0.0 {
        return None;
    }
    Some(1.0 - d_o / d_e)
}

/// A random small rating matrix that is valid and alpha-defined: 2–5
/// raters, 3–12 items, labels `{a, b, c}`, roughly 15% missing cells.
pub fn random_ratings(rng: &mut ChaCha8Rng) -> RatingMatrix {
    const LABELS: [&str; 3] = ["a", "b", "c"];
    loop {
        let rater_count = rng.gen_range(2..=5);
        let item_count = rng.gen_range(3..=12);
        let matrix = RatingMatrix {
            raters: (0..rater_count).map(|r| format!("rater{r}")).collect(),
            items: (0..item_count)
                .map(|i| RatingItem {
                    id: format!("item{i}"),
                    values: (0..rater_count)
                        .map(|_| {
                            if rng.gen_bool(0.15) {
                                None
                            } else {
                                Some(LABELS[rng.gen_range(0..LABELS.len())].to_string())
                            }
                        })
                        .collect(),
                })
                .collect(),
        };
        if matrix.validate().is_ok() && alpha_by_disagreement(&matrix).is_some() {
            return matrix;
        }
    }
}

/// A two-rater matrix of `n` items with labels drawn uniformly from
/// `{x, y}`: its alpha concentrates around zero as `n` grows.
pub fn random_two_label(rng: &mut ChaCha8Rng, n: usize) -> RatingMatrix {
    RatingMatrix {
        raters: vec!["first".to_string(), "second".to_string()],
        items: (0..n)
            .map(|i| RatingItem {
                id: format!("item{i}"),
                values: (0..2)
                    .map(|_| Some(if rng.gen_bool(0.5) { "x" } else { "y" }.to_string()))
                    .collect(),
            })
            .collect(),
    }
}
