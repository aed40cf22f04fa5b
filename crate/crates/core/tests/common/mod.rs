//! Shared by the integration suites and the CLI acceptance target.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

pub mod invariants;
pub mod oracle;

use ckbias_core::datastore::ScoreMatrixSet;
use ckbias_core::templates::{ProfessionList, Verb};
use ndarray::Array2;

/// Score matrix set over professions `p0..p{n-1}` and steps `1000, 2000, ...`.
pub fn mset_from_rows(
    p_he: &[Vec<f64>],
    p_she: &[Vec<f64>],
    prior_he: &[f64],
    prior_she: &[f64],
) -> ScoreMatrixSet {
    let b = p_he.len();
    let p = p_he[0].len();
    let to_array = |rows: &[Vec<f64>]| Array2::from_shape_fn((b, p), |(m, t)| rows[m][t]);
    ScoreMatrixSet::from_probabilities(
        "m",
        0,
        Verb::Is,
        (1..=b as u64).map(|m| m * 1000).collect(),
        ProfessionList::from_names((0..p).map(|t| format!("p{t}"))).unwrap(),
        to_array(p_he),
        to_array(p_she),
        prior_he.to_vec(),
        prior_she.to_vec(),
    )
    .unwrap()
}
