//! Bias ratios, prior normalization, certainty, plateau slicing, coefficient
//! of variation and Pearson correlation.
//!
//! Conventions that the source definitions leave open are fixed here and
//! surfaced in every exported report through [`Conventions`]:
//!
//! * the standard deviation is the population SD (divide by `n`);
//! * Pearson correlation of a zero-variance input is an error, never 0 or NaN;
//! * ratios are computed in linear space.

use ndarray::{ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::ScoreMatrixSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("P(she) is zero at {context}; bias ratio undefined")]
    ZeroDenominator { context: String },
    #[error("prior probability is zero for the prior template at {context}")]
    ZeroPrior { context: String },
    #[error("P(he) and P(she) are both zero at {context}; template unusable")]
    ZeroCertainty { context: String },
    #[error("probability {value} outside [0, 1] at {context}")]
    ProbabilityOutOfRange { value: f64, context: String },
    #[error("coefficient of variation undefined: arithmetic mean is zero{context}")]
    ZeroMean { context: String },
    #[error("need at least 2 values, got {len}{context}")]
    TooShort { len: usize, context: String },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero variance in {which} input; Pearson correlation undefined{context}")]
    ZeroVariance {
        which: &'static str,
        context: String,
    },
    #[error("plateau start k = {k} is not within 0..{rows}")]
    InvalidPlateau { k: usize, rows: usize },
    #[error("plateau config expects {expected} rows but the matrix set has {actual}")]
    RowCountMismatch { expected: usize, actual: usize },
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Which ratio matrix a fluctuation statistic is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioSource {
    /// Prior-normalized ratios `N`.
    Normalized,
    /// Raw ratios `R`.
    Unnormalized,
}

impl RatioSource {
    pub const ALL: [RatioSource; 2] = [RatioSource::Normalized, RatioSource::Unnormalized];

    pub fn as_str(self) -> &'static str {
        match self {
            RatioSource::Normalized => "normalized",
            RatioSource::Unnormalized => "unnormalized",
        }
    }
}

impl std::fmt::Display for RatioSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RatioSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "normalized" => Ok(RatioSource::Normalized),
            "unnormalized" => Ok(RatioSource::Unnormalized),
            other => Err(format!(
                "unknown ratio source '{other}' (expected normalized or unnormalized)"
            )),
        }
    }
}

/// Numeric conventions recorded in report metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conventions {
    pub standard_deviation: String,
    pub pearson_zero_variance: String,
    pub ratio_space: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            standard_deviation: "population (divide by n)".to_owned(),
            pearson_zero_variance: "error".to_owned(),
            ratio_space: "linear".to_owned(),
        }
    }
}

fn check_probability(value: f64, context: &str) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MetricsError::ProbabilityOutOfRange {
            value,
            context: context.to_owned(),
        })
    }
}

/// `P(he) / P(she)`; 1 means the checkpoint is fair on the template.
pub fn bias_ratio(p_he: f64, p_she: f64) -> Result<f64> {
    bias_ratio_at(p_he, p_she, "unspecified cell")
}

/// [`bias_ratio`] with a location string carried into errors.
pub fn bias_ratio_at(p_he: f64, p_she: f64, context: &str) -> Result<f64> {
    check_probability(p_he, context)?;
    check_probability(p_she, context)?;
    if p_she == 0.0 {
        return Err(MetricsError::ZeroDenominator {
            context: context.to_owned(),
        });
    }
    Ok(p_he / p_she)
}

/// Rescales a bias ratio by the prior pronoun ratio `P(she|t_p) / P(he|t_p)`.
pub fn normalized_ratio(ratio: f64, prior_he: f64, prior_she: f64) -> Result<f64> {
    normalized_ratio_at(ratio, prior_he, prior_she, "prior template")
}

pub fn normalized_ratio_at(
    ratio: f64,
    prior_he: f64,
    prior_she: f64,
    context: &str,
) -> Result<f64> {
    if prior_he <= 0.0 || prior_she <= 0.0 {
        return Err(MetricsError::ZeroPrior {
            context: context.to_owned(),
        });
    }
    Ok(ratio * (prior_she / prior_he))
}

/// `P(he) + P(she)`, in `(0, 2]`.
pub fn certainty(p_he: f64, p_she: f64) -> Result<f64> {
    certainty_at(p_he, p_she, "unspecified cell")
}

pub fn certainty_at(p_he: f64, p_she: f64, context: &str) -> Result<f64> {
    check_probability(p_he, context)?;
    check_probability(p_she, context)?;
    if p_he == 0.0 && p_she == 0.0 {
        return Err(MetricsError::ZeroCertainty {
            context: context.to_owned(),
        });
    }
    Ok(p_he + p_she)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn population_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / values.len() as f64).sqrt()
}

/// Population SD divided by the arithmetic mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    cv_with_context(values, "")
}

fn cv_with_context(values: &[f64], context: &str) -> Result<f64> {
    if values.len() < 2 {
        return Err(MetricsError::TooShort {
            len: values.len(),
            context: context.to_owned(),
        });
    }
    let m = mean(values);
    if m == 0.0 {
        return Err(MetricsError::ZeroMean {
            context: context.to_owned(),
        });
    }
    // Constant sequences give exactly zero regardless of rounding in the mean.
    if values.iter().all(|&x| x == values[0]) {
        return Ok(0.0);
    }
    Ok(population_sd(values) / m.abs())
}

/// Product-moment correlation, computed on mean-centred data.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson_with_context(x, y, "")
}

pub(crate) fn pearson_with_context(x: &[f64], y: &[f64], context: &str) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricsError::TooShort {
            len: x.len(),
            context: context.to_owned(),
        });
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || x.iter().all(|&v| v == x[0]) {
        return Err(MetricsError::ZeroVariance {
            which: "first",
            context: context.to_owned(),
        });
    }
    if syy == 0.0 || y.iter().all(|&v| v == y[0]) {
        return Err(MetricsError::ZeroVariance {
            which: "second",
            context: context.to_owned(),
        });
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.clamp(-1.0, 1.0))
}

/// Start of the plateau (`k`) and the total number of checkpoint rows (`b`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateauConfig {
    k: usize,
    b: usize,
}

impl PlateauConfig {
    pub fn new(k: usize, b: usize) -> Result<Self> {
        if k >= b {
            return Err(MetricsError::InvalidPlateau { k, rows: b });
        }
        Ok(Self { k, b })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.k..self.b
    }
}

/// Per-profession fluctuation statistics over the plateau rows `k..b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSummary {
    pub source: RatioSource,
    pub k: usize,
    /// CV of each column of the source matrix.
    pub v: Vec<f64>,
    pub mean_certainty: Vec<f64>,
    pub mean_normalized: Vec<f64>,
    pub mean_unnormalized: Vec<f64>,
    pub professions: Vec<String>,
}

impl FluctuationSummary {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// The averaged ratio vector matching `source` (n̄ or r̄).
    pub fn mean_ratio(&self) -> &[f64] {
        match self.source {
            RatioSource::Normalized => &self.mean_normalized,
            RatioSource::Unnormalized => &self.mean_unnormalized,
        }
    }
}

fn column_tail(col: ArrayView1<'_, f64>, rows: std::ops::Range<usize>) -> Vec<f64> {
    col.slice(ndarray::s![rows]).to_vec()
}

/// Columnwise CV and means of the plateau slice. Columns are independent and
/// evaluated in parallel; the output order follows the profession order.
pub fn fluctuation_summary(
    mset: &ScoreMatrixSet,
    cfg: PlateauConfig,
    source: RatioSource,
) -> Result<FluctuationSummary> {
    if cfg.b() != mset.num_steps() {
        return Err(MetricsError::RowCountMismatch {
            expected: cfg.b(),
            actual: mset.num_steps(),
        });
    }
    let target = match source {
        RatioSource::Normalized => &mset.normalized,
        RatioSource::Unnormalized => &mset.ratio,
    };
    let names: Vec<String> = mset.professions.names().map(str::to_owned).collect();

    let columns: Vec<(f64, f64, f64, f64)> = (0..mset.num_professions())
        .into_par_iter()
        .map(|t| {
            let tail = column_tail(target.index_axis(Axis(1), t), cfg.rows());
            let context = format!(" for profession '{}' (column {t})", names[t]);
            let v = cv_with_context(&tail, &context)?;
            let c = mean(&column_tail(
                mset.certainty.index_axis(Axis(1), t),
                cfg.rows(),
            ));
            let n = mean(&column_tail(
                mset.normalized.index_axis(Axis(1), t),
                cfg.rows(),
            ));
            let r = mean(&column_tail(mset.ratio.index_axis(Axis(1), t), cfg.rows()));
            Ok((v, c, n, r))
        })
        .collect::<Result<_>>()?;

    let mut summary = FluctuationSummary {
        source,
        k: cfg.k(),
        v: Vec::with_capacity(columns.len()),
        mean_certainty: Vec::with_capacity(columns.len()),
        mean_normalized: Vec::with_capacity(columns.len()),
        mean_unnormalized: Vec::with_capacity(columns.len()),
        professions: names,
    };
    for (v, c, n, r) in columns {
        summary.v.push(v);
        summary.mean_certainty.push(c);
        summary.mean_normalized.push(n);
        summary.mean_unnormalized.push(r);
    }
    Ok(summary)
}

/// Certainty and CV of the prior template itself over the plateau, using the
/// unnormalized prior ratio `P(he|t_p) / P(she|t_p)`.
///
/// Normalizing the prior by itself is identically 1, so this point is only
/// meaningful for the unnormalized view.
pub fn prior_point(mset: &ScoreMatrixSet, cfg: PlateauConfig) -> Result<(f64, f64)> {
    if cfg.b() != mset.num_steps() {
        return Err(MetricsError::RowCountMismatch {
            expected: cfg.b(),
            actual: mset.num_steps(),
        });
    }
    let rows = cfg.rows();
    let mut ratios = Vec::with_capacity(rows.len());
    let mut certainties = Vec::with_capacity(rows.len());
    for m in rows {
        let context = format!("prior template, step {}", mset.steps[m]);
        ratios.push(bias_ratio_at(
            mset.prior_he[m],
            mset.prior_she[m],
            &context,
        )?);
        certainties.push(certainty_at(mset.prior_he[m], mset.prior_she[m], &context)?);
    }
    let cv = cv_with_context(&ratios, " for the prior template")?;
    Ok((mean(&certainties), cv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bias_ratio_examples() {
        assert_eq!(bias_ratio(0.5, 0.5).unwrap(), 1.0);
        assert_abs_diff_eq!(bias_ratio(0.6, 0.3).unwrap(), 2.0, epsilon = 1e-15);
        assert!(matches!(
            bias_ratio(0.42, 0.0),
            Err(MetricsError::ZeroDenominator { .. })
        ));
    }

    #[test]
    fn bias_ratio_error_carries_context() {
        let err = bias_ratio_at(0.1, 0.0, "step 20000, profession 'nurse'").unwrap_err();
        assert!(err.to_string().contains("nurse"));
        assert!(bias_ratio(1.2, 0.5).is_err());
    }

    #[test]
    fn normalized_ratio_examples() {
        assert_eq!(normalized_ratio(2.0, 0.5, 0.25).unwrap(), 1.0);
        assert_eq!(normalized_ratio(1.7, 0.3, 0.3).unwrap(), 1.7);
        assert_abs_diff_eq!(
            normalized_ratio(1.0, 0.2, 0.6).unwrap(),
            3.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            normalized_ratio(1.0, 0.0, 0.6),
            Err(MetricsError::ZeroPrior { .. })
        ));
        assert!(normalized_ratio(1.0, 0.2, 0.0).is_err());
    }

    #[test]
    fn certainty_examples() {
        assert_abs_diff_eq!(certainty(0.6, 0.3).unwrap(), 0.9, epsilon = 1e-15);
        assert_eq!(certainty(1.0, 1.0).unwrap(), 2.0);
        assert!(matches!(
            certainty(0.0, 0.0),
            Err(MetricsError::ZeroCertainty { .. })
        ));
    }

    #[test]
    fn cv_examples() {
        assert_eq!(
            coefficient_of_variation(&[3.0, 3.0, 3.0, 3.0]).unwrap(),
            0.0
        );
        // population SD 1, mean 2
        assert_abs_diff_eq!(
            coefficient_of_variation(&[1.0, 3.0]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        // population SD 2, mean 5
        assert_abs_diff_eq!(
            coefficient_of_variation(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap(),
            0.4,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cv_errors() {
        assert!(matches!(
            coefficient_of_variation(&[1.0]),
            Err(MetricsError::TooShort { len: 1, .. })
        ));
        assert!(matches!(
            coefficient_of_variation(&[-1.0, 1.0]),
            Err(MetricsError::ZeroMean { .. })
        ));
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // Σxy-form oracle: n=4, Σx=10, Σy=15, Σxy=41, Σx²=30, Σy²=61
        // r = (164-150) / sqrt((120-100)(244-225)) = 14/sqrt(380)
        let expected = 14.0 / 380f64.sqrt();
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 5.0, 4.0]).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pearson_rejects_degenerate_input() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(MetricsError::ZeroVariance { which: "first", .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(MetricsError::ZeroVariance {
                which: "second",
                ..
            })
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn plateau_bounds() {
        assert!(PlateauConfig::new(36, 62).is_ok());
        assert!(PlateauConfig::new(0, 1).is_ok());
        assert!(PlateauConfig::new(62, 62).is_err());
    }

    #[test]
    fn ratio_source_parses() {
        assert_eq!(
            "normalized".parse::<RatioSource>().unwrap(),
            RatioSource::Normalized
        );
        assert!("log".parse::<RatioSource>().is_err());
    }
}
