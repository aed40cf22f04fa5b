//! Brute-force reference implementations, written from the definitions
//! without sharing code with the library.

use ckbias_core::frequency::{self, CaseMode, CorpusSizes, YearlySeries, FIRST_YEAR, NUM_YEARS};
use ckbias_core::metrics::{self, PlateauConfig, RatioSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cv(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut total = 0.0;
    for v in x {
        total += v;
    }
    let mu = total / n;
    let mut ss = 0.0;
    for v in x {
        ss += (v - mu) * (v - mu);
    }
    (ss / n).sqrt() / mu
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx).powi(2);
        vy += (y[i] - my).powi(2);
    }
    (cov / n) / ((vx / n).sqrt() * (vy / n).sqrt())
}

pub fn inner_product(sizes: &[f64], series: &[f64]) -> f64 {
    let mut f = 0.0;
    for i in 0..sizes.len() {
        f += sizes[i] * series[i];
    }
    f
}

/// CV of every column of the (normalized or raw) ratio matrix over rows `k..`,
/// computed straight from the probabilities.
pub fn fluctuation(
    p_he: &[Vec<f64>],
    p_she: &[Vec<f64>],
    prior_he: &[f64],
    prior_she: &[f64],
    k: usize,
    normalized: bool,
) -> Vec<f64> {
    let p = p_he[0].len();
    (0..p)
        .map(|t| {
            let col: Vec<f64> = (k..p_he.len())
                .map(|m| {
                    let r = p_he[m][t] / p_she[m][t];
                    if normalized {
                        r / (prior_he[m] / prior_she[m])
                    } else {
                        r
                    }
                })
                .collect();
            cv(&col)
        })
        .collect()
}

pub struct Instance {
    pub p_he: Vec<Vec<f64>>,
    pub p_she: Vec<Vec<f64>>,
    pub prior_he: Vec<f64>,
    pub prior_she: Vec<f64>,
    pub k: usize,
}

/// Random instance with `b` in 3..=10 rows and `p` in 2..=20 columns.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let b = rng.gen_range(3..=10);
    let p = rng.gen_range(2..=20);
    let cell = |rng: &mut ChaCha8Rng| {
        let c: f64 = rng.gen_range(0.05..0.95);
        let share: f64 = rng.gen_range(0.05..0.95);
        (c * share, c * (1.0 - share))
    };
    let mut p_he = vec![vec![0.0; p]; b];
    let mut p_she = vec![vec![0.0; p]; b];
    for m in 0..b {
        for t in 0..p {
            (p_he[m][t], p_she[m][t]) = cell(rng);
        }
    }
    let (prior_he, prior_she) = (0..b).map(|_| cell(rng)).unzip();
    Instance {
        p_he,
        p_she,
        prior_he,
        prior_she,
        k: rng.gen_range(0..b - 1),
    }
}

fn check(
    what: &str,
    i: usize,
    got: f64,
    want: f64,
    tol: f64,
    worst: &mut f64,
) -> Result<(), String> {
    let d = (got - want).abs();
    *worst = worst.max(d);
    if !(d <= tol) {
        return Err(format!(
            "instance {i}: {what} = {got}, oracle {want}, |diff| {d:e} > {tol:e}"
        ));
    }
    Ok(())
}

/// Compares CV, Pearson, the frequency inner product and per-column
/// fluctuation vectors against the oracles on `instances` random cases.
/// Returns the largest absolute difference seen.
pub fn equivalence(instances: usize, seed: u64, tol: f64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let inst = random_instance(&mut rng);
        let mset = super::mset_from_rows(&inst.p_he, &inst.p_she, &inst.prior_he, &inst.prior_she);
        let b = inst.p_he.len();
        let cfg = PlateauConfig::new(inst.k, b).map_err(|e| e.to_string())?;
        for (source, normalized) in [
            (RatioSource::Normalized, true),
            (RatioSource::Unnormalized, false),
        ] {
            let got =
                metrics::fluctuation_summary(&mset, cfg, source).map_err(|e| e.to_string())?;
            let want = fluctuation(
                &inst.p_he,
                &inst.p_she,
                &inst.prior_he,
                &inst.prior_she,
                inst.k,
                normalized,
            );
            for (g, w) in got.v.iter().zip(&want) {
                check("fluctuation", i, *g, *w, tol, &mut worst)?;
            }
        }

        let x: Vec<f64> = inst.p_he[0]
            .iter()
            .zip(&inst.p_she[0])
            .map(|(h, s)| h / s)
            .collect();
        check(
            "cv",
            i,
            metrics::coefficient_of_variation(&x).map_err(|e| e.to_string())?,
            cv(&x),
            tol,
            &mut worst,
        )?;
        let y: Vec<f64> = inst.p_he[b - 1]
            .iter()
            .zip(&inst.p_she[b - 1])
            .map(|(h, s)| h + s)
            .collect();
        check(
            "pearson",
            i,
            metrics::pearson(&x, &y).map_err(|e| e.to_string())?,
            pearson(&x, &y),
            tol,
            &mut worst,
        )?;

        let sizes: Vec<f64> = (0..NUM_YEARS).map(|_| rng.gen_range(0.0..1e3)).collect();
        let series: Vec<f64> = (0..NUM_YEARS).map(|_| rng.gen_range(0.0..1e-3)).collect();
        let got = frequency::total_frequency(
            &YearlySeries {
                term: "t".into(),
                case_mode: CaseMode::AsIs,
                first_year: FIRST_YEAR,
                values: series.clone(),
            },
            &CorpusSizes {
                first_year: FIRST_YEAR,
                sizes: sizes.clone(),
            },
        )
        .map_err(|e| e.to_string())?;
        check(
            "inner product",
            i,
            got,
            inner_product(&sizes, &series),
            tol,
            &mut worst,
        )?;
    }
    Ok(worst)
}
