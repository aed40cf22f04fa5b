//! Property checks driven through proptest's `TestRunner` so that both the
//! test harness and the acceptance report can run them by name.

use std::collections::BTreeMap;

use ckbias_core::analysis::{self, CorrelationMatrix, Histogram};
use ckbias_core::metrics::{self, FluctuationSummary, PlateauConfig, RatioSource};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub const MIN_CASES: u32 = 1000;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// (P(he), P(she)) pairs with both in (0, 1) and sum below 1.
fn prob_pair() -> impl Strategy<Value = (f64, f64)> {
    (0.02f64..0.98, 0.02f64..0.98).prop_map(|(c, share)| (c * share, c * (1.0 - share)))
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub p_he: Vec<Vec<f64>>,
    pub p_she: Vec<Vec<f64>>,
    pub prior_he: Vec<f64>,
    pub prior_she: Vec<f64>,
}

pub fn grid(
    rows: std::ops::RangeInclusive<usize>,
    cols: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Grid> {
    (rows, cols).prop_flat_map(|(b, p)| {
        (vec(vec(prob_pair(), p), b), vec(prob_pair(), b)).prop_map(|(cells, priors)| Grid {
            p_he: cells
                .iter()
                .map(|r| r.iter().map(|c| c.0).collect())
                .collect(),
            p_she: cells
                .iter()
                .map(|r| r.iter().map(|c| c.1).collect())
                .collect(),
            prior_he: priors.iter().map(|c| c.0).collect(),
            prior_she: priors.iter().map(|c| c.1).collect(),
        })
    })
}

fn check_matrix(cm: &CorrelationMatrix) -> Result<(), TestCaseError> {
    let n = cm.len();
    for i in 0..n {
        prop_assert_eq!(
            cm.values[i][i].to_bits(),
            1.0f64.to_bits(),
            "diagonal {} not exactly 1",
            i
        );
        for j in 0..n {
            prop_assert_eq!(
                cm.values[i][j].to_bits(),
                cm.values[j][i].to_bits(),
                "asymmetric at ({}, {})",
                i,
                j
            );
            prop_assert!((-1.0..=1.0).contains(&cm.values[i][j]));
        }
    }
    Ok(())
}

/// CV(c·x) = CV(x) for c > 0.
pub fn cv_scale_invariance(cases: u32) -> Result<(), String> {
    run(
        cases,
        (vec(0.01f64..100.0, 2..20), 1e-3f64..1e3),
        |(x, c)| {
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let a = ok(metrics::coefficient_of_variation(&x))?;
            let b = ok(metrics::coefficient_of_variation(&scaled))?;
            prop_assert!(close(a, b, 1e-9), "cv {} vs scaled {}", a, b);
            Ok(())
        },
    )
}

/// ρ(x, y) = ρ(y, x) exactly, and ρ(a·x+b, c·y+d) = sign(a·c)·ρ(x, y).
pub fn pearson_symmetry_and_affine_invariance(cases: u32) -> Result<(), String> {
    let pairs = (2usize..20).prop_flat_map(|n| (vec(-50.0f64..50.0, n), vec(-50.0f64..50.0, n)));
    let affine = (prop_oneof![0.1f64..10.0, -10.0f64..-0.1], -100.0f64..100.0);
    run(
        cases,
        (pairs, affine.clone(), affine),
        |((x, y), (a, b), (c, d))| {
            let spread = |v: &[f64]| {
                v.iter().cloned().fold(f64::MIN, f64::max)
                    - v.iter().cloned().fold(f64::MAX, f64::min)
            };
            prop_assume!(spread(&x) > 1e-3 && spread(&y) > 1e-3);
            let r = ok(metrics::pearson(&x, &y))?;
            prop_assert_eq!(r.to_bits(), ok(metrics::pearson(&y, &x))?.to_bits());
            prop_assert_eq!(ok(metrics::pearson(&x, &x))?, 1.0);
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let yt: Vec<f64> = y.iter().map(|v| c * v + d).collect();
            let rt = ok(metrics::pearson(&xt, &yt))?;
            let expected = (a * c).signum() * r;
            prop_assert!(
                (rt - expected).abs() < 1e-9,
                "affine {} vs {}",
                rt,
                expected
            );
            Ok(())
        },
    )
}

/// Checkpoint- and seed-pair matrices are exactly symmetric with a unit
/// diagonal.
pub fn correlation_matrices_symmetric_unit_diagonal(cases: u32) -> Result<(), String> {
    run(cases, grid(2..=8, 3..=12), |g| {
        let mset = super::mset_from_rows(&g.p_he, &g.p_she, &g.prior_he, &g.prior_she);
        let mut summaries = BTreeMap::new();
        for source in RatioSource::ALL {
            check_matrix(&ok(analysis::rq4_checkpoint_correlations(&mset, source))?)?;
        }
        // seed-pair matrix over per-row vectors treated as seeds
        for (seed, row) in g.p_he.iter().enumerate() {
            let ratio: Vec<f64> = row.iter().zip(&g.p_she[seed]).map(|(h, s)| h / s).collect();
            summaries.insert(
                seed as i32,
                FluctuationSummary {
                    source: RatioSource::Unnormalized,
                    k: 0,
                    v: vec![0.0; ratio.len()],
                    mean_certainty: vec![0.0; ratio.len()],
                    mean_normalized: ratio.clone(),
                    mean_unnormalized: ratio,
                    professions: (0..row.len()).map(|t| format!("p{t}")).collect(),
                },
            );
        }
        if summaries.len() >= 2 {
            for source in RatioSource::ALL {
                check_matrix(&ok(analysis::rq5_seed_correlations(&summaries, source))?)?;
            }
        }
        Ok(())
    })
}

/// With P_prior(he) = P_prior(she) at every step, N = R and both sources give
/// the same fluctuation vector.
pub fn normalized_equals_unnormalized_under_equal_priors(cases: u32) -> Result<(), String> {
    run(
        cases,
        (grid(2..=8, 1..=10), vec(0.01f64..0.5, 8)),
        |(g, q)| {
            let b = g.p_he.len();
            let prior = &q[..b];
            let mset = super::mset_from_rows(&g.p_he, &g.p_she, prior, prior);
            prop_assert_eq!(&mset.normalized, &mset.ratio);
            let cfg = ok(PlateauConfig::new(0, b))?;
            let n = ok(metrics::fluctuation_summary(
                &mset,
                cfg,
                RatioSource::Normalized,
            ))?;
            let r = ok(metrics::fluctuation_summary(
                &mset,
                cfg,
                RatioSource::Unnormalized,
            ))?;
            prop_assert_eq!(n.v, r.v);
            Ok(())
        },
    )
}

/// A column that is constant over the plateau has v = 0 under both sources.
pub fn constant_columns_have_zero_fluctuation(cases: u32) -> Result<(), String> {
    let case =
        (grid(3..=10, 2..=10), prob_pair(), prob_pair()).prop_flat_map(|(g, cell, prior)| {
            let b = g.p_he.len();
            let p = g.p_he[0].len();
            (Just(g), Just(cell), Just(prior), 0..b - 1, 0..p)
        });
    run(cases, case, |(mut g, cell, prior, k, col)| {
        let b = g.p_he.len();
        for m in k..b {
            g.p_he[m][col] = cell.0;
            g.p_she[m][col] = cell.1;
            g.prior_he[m] = prior.0;
            g.prior_she[m] = prior.1;
        }
        let mset = super::mset_from_rows(&g.p_he, &g.p_she, &g.prior_he, &g.prior_she);
        let cfg = ok(PlateauConfig::new(k, b))?;
        for source in RatioSource::ALL {
            let s = ok(metrics::fluctuation_summary(&mset, cfg, source))?;
            prop_assert_eq!(s.v[col], 0.0, "{} column {} k={}", source, col, k);
        }
        Ok(())
    })
}

/// Every value lands in exactly one bin.
pub fn histogram_conserves_mass(cases: u32) -> Result<(), String> {
    let case = (
        vec(0.0f64..5.0, 0..200),
        1usize..60,
        prop_oneof![Just(None), (0.0f64..5.0).prop_map(Some)],
    );
    run(cases, case, |(values, bins, hi)| {
        let hi = hi.unwrap_or_else(|| values.iter().cloned().fold(0.0, f64::max));
        let clipped: Vec<f64> = values.iter().map(|v| v.min(hi)).collect();
        let h = ok(Histogram::uniform(&clipped, bins, 0.0, hi))?;
        prop_assert_eq!(h.counts.len(), bins);
        prop_assert_eq!(h.total(), values.len());
        if !values.is_empty() {
            let summary = FluctuationSummary {
                source: RatioSource::Normalized,
                k: 0,
                v: values.clone(),
                mean_certainty: values.clone(),
                mean_normalized: values.clone(),
                mean_unnormalized: values.clone(),
                professions: (0..values.len()).map(|i| i.to_string()).collect(),
            };
            let stats = ok(analysis::rq1_stats(&summary, bins))?;
            prop_assert_eq!(stats.histogram.total(), values.len());
        }
        Ok(())
    })
}

pub type Check = fn(u32) -> Result<(), String>;

/// The invariant suite, by name.
pub const SUITE: [(&str, Check); 6] = [
    ("cv scale invariance", cv_scale_invariance),
    (
        "pearson symmetry and affine invariance",
        pearson_symmetry_and_affine_invariance,
    ),
    (
        "correlation matrices symmetric with unit diagonal",
        correlation_matrices_symmetric_unit_diagonal,
    ),
    (
        "normalized equals unnormalized under equal priors",
        normalized_equals_unnormalized_under_equal_priors,
    ),
    (
        "constant columns have zero fluctuation",
        constant_columns_have_zero_fluctuation,
    ),
    ("histogram conserves mass", histogram_conserves_mass),
];
