#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
}

pub fn fixture_config() -> PathBuf {
    fixtures().join("fixture.toml")
}

pub fn ckbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ckbias"))
        .args(args)
        .env_remove("CKBIAS_NGRAM_CACHE")
        .env("RUST_LOG", "error")
        .output()
        .expect("running ckbias")
}

/// Runs `templates`, `freq` and `analyze` on the bundled fixture into `out`.
pub fn run_fixture_pipeline(out: &Path) -> Result<(), String> {
    let config = fixture_config();
    for cmd in ["templates", "freq", "analyze"] {
        let o = ckbias(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            cmd,
        ]);
        if !o.status.success() {
            return Err(format!(
                "{cmd} failed: {}",
                String::from_utf8_lossy(&o.stderr)
            ));
        }
    }
    Ok(())
}

/// Every file under `dir`, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    if dir.exists() {
        walk(dir, dir, &mut out);
    }
    out
}

/// The report bundle: `report/` and `figures/`.
pub fn bundle(out: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut b = BTreeMap::new();
    for sub in ["report", "figures"] {
        for (k, v) in tree(&out.join(sub)) {
            b.insert(format!("{sub}/{k}"), v);
        }
    }
    b
}

fn key(p: &Value) -> String {
    format!(
        "{}|{}|{}|{}|{}",
        p["model"].as_str().unwrap(),
        p["seed"],
        p["verb"].as_str().unwrap(),
        p["source"].as_str().unwrap_or(""),
        p["k"]
    )
}

fn compare(what: &str, got: &Value, want: &Value, tol: f64, worst: &mut f64) -> Result<(), String> {
    match (got, want) {
        (Value::Array(a), Value::Array(b)) => {
            if a.len() != b.len() {
                return Err(format!("{what}: length {} vs golden {}", a.len(), b.len()));
            }
            for (x, y) in a.iter().zip(b) {
                compare(what, x, y, tol, worst)?;
            }
            Ok(())
        }
        (Value::Number(_), Value::Number(_)) => {
            let d = (got.as_f64().unwrap() - want.as_f64().unwrap()).abs();
            *worst = worst.max(d);
            if d > tol {
                return Err(format!("{what}: {got} vs golden {want}"));
            }
            Ok(())
        }
        _ => Err(format!("{what}: {got} vs golden {want}")),
    }
}

/// Compares `report.json` against the numpy-computed golden values.
/// Returns the largest absolute difference.
pub fn check_against_golden(out: &Path, tol: f64) -> Result<f64, String> {
    let read = |p: PathBuf| -> Value {
        serde_json::from_str(
            &std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display())),
        )
        .unwrap()
    };
    let report = read(out.join("report").join("report.json"));
    let golden = read(fixtures().join("golden.json"));
    let mut by_kind: BTreeMap<String, BTreeMap<String, &Value>> = BTreeMap::new();
    for e in report["analyses"].as_array().unwrap() {
        if let Some(p) = e.get("params") {
            by_kind
                .entry(e["analysis"].as_str().unwrap().to_owned())
                .or_default()
                .insert(key(p), e);
        }
    }
    let get = |kind: &str, k: &str| -> Result<&Value, String> {
        by_kind
            .get(kind)
            .and_then(|m| m.get(k))
            .copied()
            .ok_or_else(|| format!("report has no {kind} entry for {k}"))
    };
    let mut worst = 0.0f64;
    for run in golden["runs"].as_array().unwrap() {
        let k = key(run);
        let fl = get("fluctuation", &k)?;
        compare(&format!("v {k}"), &fl["v"], &run["v"], tol, &mut worst)?;
        compare(
            &format!("certainty {k}"),
            &fl["mean_certainty"],
            &run["mean_certainty"],
            tol,
            &mut worst,
        )?;
        if let Some(pp) = run.get("prior_point") {
            compare(
                &format!("prior point {k}"),
                &fl["prior_point"],
                pp,
                tol,
                &mut worst,
            )?;
        }
        let rq1 = get("rq1", &k)?;
        compare(
            &format!("min v {k}"),
            &rq1["min"],
            &run["v_min"],
            tol,
            &mut worst,
        )?;
        compare(
            &format!("max v {k}"),
            &rq1["max"],
            &run["v_max"],
            tol,
            &mut worst,
        )?;
        compare(
            &format!("rq2 {k}"),
            &get("rq2", &k)?["pearson"],
            &run["rq2"],
            tol,
            &mut worst,
        )?;
        compare(
            &format!("rq3 {k}"),
            &get("rq3", &k)?["pearson"],
            &run["rq3"],
            tol,
            &mut worst,
        )?;
    }
    for m in golden["rq4"].as_array().unwrap() {
        let mut p = m.clone();
        p["k"] = Value::Null;
        let k = key(&p);
        compare(
            &format!("rq4 {k}"),
            &get("rq4", &k)?["matrix"]["values"],
            &m["values"],
            tol,
            &mut worst,
        )?;
    }
    for m in golden["rq5"].as_array().unwrap() {
        let mut p = m.clone();
        p["seed"] = Value::Null;
        let k = key(&p);
        compare(
            &format!("rq5 {k}"),
            &get("rq5", &k)?["matrix"]["values"],
            &m["values"],
            tol,
            &mut worst,
        )?;
    }
    for (mode, freqs) in golden["frequency"].as_object().unwrap() {
        let path = out.join("freq").join(format!("frequency_{mode}.csv"));
        let text =
            std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        for line in text.lines().skip(1) {
            let (name, value) = line.rsplit_once(',').unwrap();
            let name = name.trim_matches('"');
            let got: f64 = value.parse().unwrap();
            let want = freqs[name]
                .as_f64()
                .ok_or_else(|| format!("golden has no frequency for {name}"))?;
            let d = (got - want).abs() / want.abs().max(1.0);
            worst = worst.max(d);
            if d > tol {
                return Err(format!(
                    "{mode} frequency of {name}: {got} vs golden {want}"
                ));
            }
        }
    }
    Ok(worst)
}

/// Template manifests must equal the golden files byte for byte.
pub fn check_manifests(out: &Path) -> Result<usize, String> {
    let mut n = 0;
    for model in ["bert-base-uncased", "roberta-base"] {
        let got = std::fs::read(out.join("templates").join(format!("{model}.csv")))
            .map_err(|e| e.to_string())?;
        let want = std::fs::read(
            fixtures()
                .join("golden")
                .join(format!("templates_{model}.csv")),
        )
        .unwrap();
        if got != want {
            return Err(format!("{model} manifest differs from golden"));
        }
        n += 1;
    }
    Ok(n)
}
