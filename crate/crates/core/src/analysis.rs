//! The five fluctuation analyses:
//!
//! 1. extrema and distribution of the CV vector;
//! 2. correlation of CV with mean certainty;
//! 3. correlation of CV with corpus frequency;
//! 4. correlations between checkpoint rows of one run;
//! 5. correlations between the averaged ratio vectors of seed runs.

use std::collections::BTreeMap;

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::ScoreMatrixSet;
use crate::frequency::{FrequencyError, FrequencyTable};
use crate::metrics::{self, FluctuationSummary, MetricsError, RatioSource};

pub const DEFAULT_HISTOGRAM_BINS: usize = 30;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{analysis}: {source}")]
    Metrics {
        analysis: &'static str,
        #[source]
        source: MetricsError,
    },
    #[error("profession axes differ: {0}")]
    AxisMismatch(String),
    #[error("{analysis} needs at least {needed} {what}, got {got}")]
    TooFew {
        analysis: &'static str,
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("ratio row for step {step} has zero variance; checkpoint correlation undefined")]
    ZeroVarianceRow { step: u64 },
    #[error("ratio vector for seed {seed} has zero variance; seed correlation undefined")]
    ZeroVarianceSeed { seed: i32 },
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

fn in_analysis(analysis: &'static str) -> impl Fn(MetricsError) -> AnalysisError {
    move |source| AnalysisError::Metrics { analysis, source }
}

/// Uniform-bin histogram over `[lo, hi]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn uniform(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 {
            return Err(AnalysisError::NoBins);
        }
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &x in values {
            let idx = if width > 0.0 {
                (((x - lo) / width).floor().max(0.0) as usize).min(bins - 1)
            } else {
                0
            };
            counts[idx] += 1;
        }
        Ok(Self { lo, hi, counts })
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq1Stats {
    pub min: f64,
    pub max: f64,
    pub argmin: String,
    pub argmax: String,
    pub histogram: Histogram,
}

/// Extrema of `v` and its histogram over `[0, max(v)]`.
pub fn rq1_stats(summary: &FluctuationSummary, bins: usize) -> Result<Rq1Stats> {
    if summary.is_empty() {
        return Err(AnalysisError::TooFew {
            analysis: "rq1",
            what: "professions",
            needed: 1,
            got: 0,
        });
    }
    let (mut imin, mut imax) = (0, 0);
    for (i, &x) in summary.v.iter().enumerate() {
        if x < summary.v[imin] {
            imin = i;
        }
        if x > summary.v[imax] {
            imax = i;
        }
    }
    let max = summary.v[imax];
    Ok(Rq1Stats {
        min: summary.v[imin],
        max,
        argmin: summary.professions[imin].clone(),
        argmax: summary.professions[imax].clone(),
        histogram: Histogram::uniform(&summary.v, bins, 0.0, max)?,
    })
}

/// Pearson correlation between CV and mean certainty.
pub fn rq2_certainty_correlation(summary: &FluctuationSummary) -> Result<f64> {
    metrics::pearson_with_context(&summary.v, &summary.mean_certainty, " (CV vs certainty)")
        .map_err(in_analysis("rq2"))
}

/// Pearson correlation between CV and corpus frequency, matched by
/// profession name.
pub fn rq3_frequency_correlation(
    summary: &FluctuationSummary,
    freq: &FrequencyTable,
) -> Result<f64> {
    if freq.professions.len() != summary.professions.len() {
        return Err(AnalysisError::AxisMismatch(format!(
            "{} professions in the summary, {} in the frequency table",
            summary.professions.len(),
            freq.professions.len()
        )));
    }
    let f = freq
        .aligned_to(&summary.professions)
        .map_err(|e| AnalysisError::AxisMismatch(e.to_string()))?;
    metrics::pearson_with_context(&summary.v, &f, " (CV vs frequency)").map_err(in_analysis("rq3"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationKind {
    CheckpointPair,
    SeedPair,
}

/// Symmetric Pearson matrix with an exact unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub kind: CorrelationKind,
    /// Checkpoint steps or seed indices.
    pub labels: Vec<i64>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Off-diagonal entries `(i, j, value)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.len())
            .flat_map(move |i| (i + 1..self.len()).map(move |j| (i, j, self.values[i][j])))
    }

    /// Fills the upper triangle from `f(i, j)` and mirrors it.
    fn build(
        kind: CorrelationKind,
        labels: Vec<i64>,
        f: impl Fn(usize, usize) -> Result<f64> + Sync,
    ) -> Result<Self> {
        let n = labels.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| f(i, j)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let mut values = vec![vec![0.0; n]; n];
        for i in 0..n {
            values[i][i] = 1.0;
            for (offset, &r) in upper[i].iter().enumerate() {
                let j = i + 1 + offset;
                values[i][j] = r;
                values[j][i] = r;
            }
        }
        Ok(Self {
            kind,
            labels,
            values,
        })
    }
}

/// Pairwise correlations between the ratio rows of all checkpoints in one run.
pub fn rq4_checkpoint_correlations(
    mset: &ScoreMatrixSet,
    source: RatioSource,
) -> Result<CorrelationMatrix> {
    let b = mset.num_steps();
    if b < 2 {
        return Err(AnalysisError::TooFew {
            analysis: "rq4",
            what: "checkpoints",
            needed: 2,
            got: b,
        });
    }
    let matrix = match source {
        RatioSource::Normalized => &mset.normalized,
        RatioSource::Unnormalized => &mset.ratio,
    };
    let rows: Vec<Vec<f64>> = matrix.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    for (m, row) in rows.iter().enumerate() {
        if row.iter().all(|&x| x == row[0]) {
            return Err(AnalysisError::ZeroVarianceRow {
                step: mset.steps[m],
            });
        }
    }
    let labels = mset.steps.iter().map(|&s| s as i64).collect();
    CorrelationMatrix::build(CorrelationKind::CheckpointPair, labels, |i, j| {
        metrics::pearson(&rows[i], &rows[j]).map_err(in_analysis("rq4"))
    })
}

/// Pairwise correlations between seeds' averaged ratio vectors (n̄ for the
/// normalized source, r̄ otherwise).
pub fn rq5_seed_correlations(
    summaries: &BTreeMap<i32, FluctuationSummary>,
    source: RatioSource,
) -> Result<CorrelationMatrix> {
    if summaries.len() < 2 {
        return Err(AnalysisError::TooFew {
            analysis: "rq5",
            what: "seeds",
            needed: 2,
            got: summaries.len(),
        });
    }
    let seeds: Vec<i32> = summaries.keys().copied().collect();
    let first = &summaries[&seeds[0]];
    let mut vectors = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let s = &summaries[&seed];
        if s.professions != first.professions {
            return Err(AnalysisError::AxisMismatch(format!(
                "seed {seed} and seed {} use different profession lists",
                seeds[0]
            )));
        }
        let v = match source {
            RatioSource::Normalized => s.mean_normalized.clone(),
            RatioSource::Unnormalized => s.mean_unnormalized.clone(),
        };
        if v.len() < 2 || v.iter().all(|&x| x == v[0]) {
            return Err(AnalysisError::ZeroVarianceSeed { seed });
        }
        vectors.push(v);
    }
    let labels = seeds.iter().map(|&s| s as i64).collect();
    CorrelationMatrix::build(CorrelationKind::SeedPair, labels, |i, j| {
        metrics::pearson(&vectors[i], &vectors[j]).map_err(in_analysis("rq5"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates::{ProfessionList, Verb};
    use ndarray::{array, Array2};

    fn summary(v: Vec<f64>, c: Vec<f64>) -> FluctuationSummary {
        let p = v.len();
        FluctuationSummary {
            source: RatioSource::Unnormalized,
            k: 0,
            mean_normalized: c.iter().map(|x| x * 2.0 + 1.0).collect(),
            mean_unnormalized: c.iter().map(|x| x * 3.0 + 1.0).collect(),
            mean_certainty: c,
            v,
            professions: (0..p).map(|i| format!("p{i}")).collect(),
        }
    }

    fn mset(ratio: Array2<f64>) -> ScoreMatrixSet {
        let (b, p) = ratio.dim();
        let p_she = Array2::from_elem((b, p), 0.1);
        let p_he = &ratio * 0.1;
        ScoreMatrixSet::from_probabilities(
            "m",
            0,
            Verb::Is,
            (0..b as u64).map(|s| (s + 1) * 1000).collect(),
            ProfessionList::from_names((0..p).map(|i| format!("p{i}"))).unwrap(),
            p_he,
            p_she,
            vec![0.2; b],
            vec![0.4; b],
        )
        .unwrap()
    }

    #[test]
    fn rq1_extrema_and_histogram() {
        let s = summary(vec![0.3, 0.9, 0.1, 0.5], vec![1.0, 2.0, 3.0, 4.0]);
        let stats = rq1_stats(&s, 4).unwrap();
        assert_eq!((stats.min, stats.max), (0.1, 0.9));
        assert_eq!((stats.argmin.as_str(), stats.argmax.as_str()), ("p2", "p1"));
        assert_eq!(stats.histogram.counts, vec![1, 1, 1, 1]);
        assert_eq!(stats.histogram.total(), 4);

        let flat = summary(vec![0.0; 3], vec![1.0, 2.0, 3.0]);
        let stats = rq1_stats(&flat, DEFAULT_HISTOGRAM_BINS).unwrap();
        assert_eq!((stats.min, stats.max), (0.0, 0.0));
        assert_eq!(stats.histogram.counts[0], 3);
        assert!(rq1_stats(&flat, 0).is_err());
    }

    #[test]
    fn rq2_examples() {
        let s = summary(vec![0.1, 0.2, 0.4], vec![0.1, 0.2, 0.4]);
        assert!((rq2_certainty_correlation(&s).unwrap() - 1.0).abs() < 1e-15);
        let s = summary(vec![0.2, 0.2, 0.2], vec![0.1, 0.2, 0.4]);
        assert!(matches!(
            rq2_certainty_correlation(&s),
            Err(AnalysisError::Metrics {
                analysis: "rq2",
                ..
            })
        ));
    }

    #[test]
    fn rq3_aligns_by_name() {
        let s = summary(vec![0.1, 0.2, 0.4], vec![1.0, 1.0, 2.0]);
        let freq = FrequencyTable {
            professions: vec!["p2".into(), "p0".into(), "p1".into()],
            f: vec![0.4, 0.1, 0.2],
            case_mode: crate::frequency::CaseMode::Lowercase,
        };
        assert!((rq3_frequency_correlation(&s, &freq).unwrap() - 1.0).abs() < 1e-15);
        let short = FrequencyTable {
            professions: vec!["p0".into()],
            f: vec![1.0],
            case_mode: crate::frequency::CaseMode::Lowercase,
        };
        assert!(matches!(
            rq3_frequency_correlation(&s, &short),
            Err(AnalysisError::AxisMismatch(_))
        ));
    }

    #[test]
    fn rq4_duplicated_rows() {
        let m = mset(array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [3.0, 2.0, 1.0]]);
        let cm = rq4_checkpoint_correlations(&m, RatioSource::Unnormalized).unwrap();
        assert_eq!(cm.labels, vec![1000, 2000, 3000]);
        assert_eq!(cm.get(0, 1), 1.0);
        assert_eq!(cm.get(0, 2), -1.0);
        assert_eq!(cm.get(2, 2), 1.0);
        assert_eq!(cm.pairs().count(), 3);
    }

    #[test]
    fn rq4_zero_variance_row_names_step() {
        let m = mset(array![[1.0, 2.0], [2.0, 2.0]]);
        assert!(matches!(
            rq4_checkpoint_correlations(&m, RatioSource::Normalized),
            Err(AnalysisError::ZeroVarianceRow { step: 2000 })
        ));
        let one = mset(array![[1.0, 2.0]]);
        assert!(rq4_checkpoint_correlations(&one, RatioSource::Normalized).is_err());
    }

    #[test]
    fn rq5_identical_seeds() {
        let mut map = BTreeMap::new();
        map.insert(0, summary(vec![0.1, 0.2, 0.3], vec![1.0, 2.0, 5.0]));
        map.insert(3, summary(vec![0.4, 0.2, 0.3], vec![1.0, 2.0, 5.0]));
        let cm = rq5_seed_correlations(&map, RatioSource::Normalized).unwrap();
        assert_eq!(cm.kind, CorrelationKind::SeedPair);
        assert_eq!(cm.labels, vec![0, 3]);
        assert!((cm.get(0, 1) - 1.0).abs() < 1e-15);

        let mut single = BTreeMap::new();
        single.insert(0, summary(vec![0.1, 0.2], vec![1.0, 2.0]));
        assert!(rq5_seed_correlations(&single, RatioSource::Normalized).is_err());

        let mut other = summary(vec![0.1, 0.2, 0.3], vec![1.0, 2.0, 5.0]);
        other.professions[0] = "zz".into();
        map.insert(4, other);
        assert!(matches!(
            rq5_seed_correlations(&map, RatioSource::Unnormalized),
            Err(AnalysisError::AxisMismatch(_))
        ));
    }
}
