//! Report bundles: a JSON document of every analysis result, CSV tables, and
//! figures rendered from the JSON.
//!
//! Layout under the output directory:
//!
//! ```text
//! report/report.json
//! report/tables/*.csv
//! figures/<model>/<seed>/<verb>/<name>.svg (+ .png)
//! ```
//!
//! Output is byte-deterministic for identical inputs: no timestamps, stable
//! ordering, shortest round-trip float formatting.

pub mod figures;
pub mod plot;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{CorrelationMatrix, Rq1Stats};
use crate::frequency::CaseMode;
use crate::metrics::{Conventions, RatioSource};
use crate::templates::Verb;

pub use figures::{FigureKind, FigureSpec, FigureStyle, TrajectorySeries, HEATMAP_FLOOR};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report contains no analysis results")]
    Empty,
    #[error("nothing selected to plot")]
    EmptySelection,
    #[error("series '{0}' is all zero and cannot be normalized by its maximum")]
    ZeroSeries(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("image encoding: {0}")]
    Image(String),
    #[error("analysis: {0}")]
    Analysis(String),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ReportError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    }
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

/// Writes via a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(ReportError::io(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(ReportError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(ReportError::io(path))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: "ckbias".to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }
}

/// Conventions a reader needs to interpret the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: ToolInfo,
    #[serde(flatten)]
    pub numeric: Conventions,
    pub histogram_bins: usize,
    pub heatmap_floor: f64,
    /// Ngram corpus id used for frequency estimates, if any.
    pub ngram_corpus: Option<String>,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        Self {
            tool: ToolInfo::default(),
            numeric: Conventions::default(),
            histogram_bins: crate::analysis::DEFAULT_HISTOGRAM_BINS,
            heatmap_floor: HEATMAP_FLOOR,
            ngram_corpus: None,
        }
    }
}

/// Parameters identifying one analysis run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunParams {
    pub model: String,
    /// `None` for cross-seed analyses.
    pub seed: Option<i32>,
    pub verb: Verb,
    pub source: Option<RatioSource>,
    /// Plateau start; `None` where the analysis uses all rows.
    pub k: Option<usize>,
}

impl RunParams {
    fn seed_dir(&self) -> String {
        self.seed
            .map_or_else(|| "all".to_owned(), |s| s.to_string())
    }

    fn stem(&self, analysis: &str) -> String {
        let mut s = format!(
            "{analysis}__{}__seed{}__{}",
            self.model,
            self.seed_dir(),
            self.verb.slug()
        );
        if let Some(src) = self.source {
            s.push_str("__");
            s.push_str(src.as_str());
        }
        if let Some(k) = self.k {
            s.push_str(&format!("__k{k}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "snake_case")]
pub enum AnalysisEntry {
    Fluctuation {
        params: RunParams,
        /// Rows in the run (`b`).
        steps: usize,
        professions: Vec<String>,
        v: Vec<f64>,
        mean_certainty: Vec<f64>,
        mean_normalized: Vec<f64>,
        mean_unnormalized: Vec<f64>,
        /// (mean certainty, CV) of the prior template; unnormalized only.
        prior_point: Option<(f64, f64)>,
    },
    Rq1 {
        params: RunParams,
        #[serde(flatten)]
        stats: Rq1Stats,
    },
    Rq2 {
        params: RunParams,
        pearson: f64,
    },
    Rq3 {
        params: RunParams,
        case_mode: CaseMode,
        pearson: f64,
    },
    Rq4 {
        params: RunParams,
        matrix: CorrelationMatrix,
    },
    Rq5 {
        params: RunParams,
        matrix: CorrelationMatrix,
    },
    Trajectory {
        params: RunParams,
        steps: Vec<u64>,
        series: Vec<TrajectorySeries>,
    },
    FrequencyRank {
        case_mode: CaseMode,
        professions: Vec<String>,
        frequencies: Vec<f64>,
    },
}

impl AnalysisEntry {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisEntry::Fluctuation { .. } => "fluctuation",
            AnalysisEntry::Rq1 { .. } => "rq1",
            AnalysisEntry::Rq2 { .. } => "rq2",
            AnalysisEntry::Rq3 { .. } => "rq3",
            AnalysisEntry::Rq4 { .. } => "rq4",
            AnalysisEntry::Rq5 { .. } => "rq5",
            AnalysisEntry::Trajectory { .. } => "trajectory",
            AnalysisEntry::FrequencyRank { .. } => "frequency_rank",
        }
    }

    pub fn params(&self) -> Option<&RunParams> {
        match self {
            AnalysisEntry::Fluctuation { params, .. }
            | AnalysisEntry::Rq1 { params, .. }
            | AnalysisEntry::Rq2 { params, .. }
            | AnalysisEntry::Rq3 { params, .. }
            | AnalysisEntry::Rq4 { params, .. }
            | AnalysisEntry::Rq5 { params, .. }
            | AnalysisEntry::Trajectory { params, .. } => Some(params),
            AnalysisEntry::FrequencyRank { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: ReportMetadata,
    pub analyses: Vec<AnalysisEntry>,
}

impl Report {
    pub fn new(metadata: ReportMetadata) -> Self {
        Self {
            metadata,
            analyses: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: AnalysisEntry) {
        self.analyses.push(entry);
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(ReportError::io(path))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Entries of one analysis kind.
    pub fn entries<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a AnalysisEntry> + 'a {
        self.analyses.iter().filter(move |e| e.name() == name)
    }
}

fn fmt_f64(x: f64) -> String {
    x.to_string()
}

fn matrix_csv(cm: &CorrelationMatrix) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["label".to_owned()];
    header.extend(cm.labels.iter().map(|l| l.to_string()));
    w.write_record(&header)?;
    for (l, row) in cm.labels.iter().zip(&cm.values) {
        let mut rec = vec![l.to_string()];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| ReportError::Analysis(e.to_string()))
}

/// Writes `report/report.json` and `report/tables/*.csv`; returns the paths
/// written, in order.
pub fn export_report(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.analyses.is_empty() {
        return Err(ReportError::Empty);
    }
    let report_dir = out_dir.join("report");
    let tables = report_dir.join("tables");
    let mut written = Vec::new();

    let json_path = report_dir.join("report.json");
    atomic_write(&json_path, report.to_json()?.as_bytes())?;
    written.push(json_path);

    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record([
        "analysis", "model", "seed", "verb", "source", "k", "metric", "value",
    ])?;
    let mut summary_row = |p: &RunParams, analysis: &str, metric: &str, value: String| {
        summary.write_record([
            analysis.to_owned(),
            p.model.clone(),
            p.seed_dir(),
            p.verb.to_string(),
            p.source.map(|s| s.to_string()).unwrap_or_default(),
            p.k.map(|k| k.to_string()).unwrap_or_default(),
            metric.to_owned(),
            value,
        ])
    };

    for entry in &report.analyses {
        match entry {
            AnalysisEntry::Fluctuation {
                params,
                professions,
                v,
                mean_certainty,
                mean_normalized,
                mean_unnormalized,
                ..
            } => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record([
                    "profession",
                    "cv",
                    "mean_certainty",
                    "mean_normalized",
                    "mean_unnormalized",
                ])?;
                for i in 0..professions.len() {
                    w.write_record([
                        professions[i].clone(),
                        fmt_f64(v[i]),
                        fmt_f64(mean_certainty[i]),
                        fmt_f64(mean_normalized[i]),
                        fmt_f64(mean_unnormalized[i]),
                    ])?;
                }
                let bytes = w
                    .into_inner()
                    .map_err(|e| ReportError::Analysis(e.to_string()))?;
                let path = tables.join(format!("{}.csv", params.stem("fluctuation")));
                atomic_write(&path, &bytes)?;
                written.push(path);
            }
            AnalysisEntry::Rq1 { params, stats } => {
                summary_row(params, "rq1", "min", fmt_f64(stats.min))?;
                summary_row(params, "rq1", "max", fmt_f64(stats.max))?;
                summary_row(params, "rq1", "argmin", stats.argmin.clone())?;
                summary_row(params, "rq1", "argmax", stats.argmax.clone())?;
            }
            AnalysisEntry::Rq2 { params, pearson } => {
                summary_row(params, "rq2", "pearson", fmt_f64(*pearson))?;
            }
            AnalysisEntry::Rq3 {
                params,
                case_mode,
                pearson,
            } => {
                summary_row(
                    params,
                    "rq3",
                    &format!("pearson_{case_mode}"),
                    fmt_f64(*pearson),
                )?;
            }
            AnalysisEntry::Rq4 { params, matrix } | AnalysisEntry::Rq5 { params, matrix } => {
                let path = tables.join(format!("{}.csv", params.stem(entry.name())));
                atomic_write(&path, &matrix_csv(matrix)?)?;
                written.push(path);
            }
            AnalysisEntry::Trajectory { .. } => {}
            AnalysisEntry::FrequencyRank {
                case_mode,
                professions,
                frequencies,
            } => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["profession", "frequency"])?;
                for (p, f) in professions.iter().zip(frequencies) {
                    w.write_record([p.clone(), fmt_f64(*f)])?;
                }
                let bytes = w
                    .into_inner()
                    .map_err(|e| ReportError::Analysis(e.to_string()))?;
                let path = tables.join(format!("frequency__{case_mode}.csv"));
                atomic_write(&path, &bytes)?;
                written.push(path);
            }
        }
    }
    let bytes = summary
        .into_inner()
        .map_err(|e| ReportError::Analysis(e.to_string()))?;
    let path = tables.join("summary.csv");
    atomic_write(&path, &bytes)?;
    written.push(path);
    Ok(written)
}

/// Renders every figure derivable from the report into `out_dir/figures`.
pub fn render_figures(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.analyses.is_empty() {
        return Err(ReportError::Empty);
    }
    let floor = report.metadata.heatmap_floor;
    let bins = report.metadata.histogram_bins;
    let mut written = Vec::new();
    let spec = |kind, params: &RunParams, name: String, style: FigureStyle| FigureSpec {
        kind,
        model: params.model.clone(),
        seed: params.seed_dir(),
        verb_slug: params.verb.slug().to_owned(),
        name,
        style,
    };

    for entry in &report.analyses {
        match entry {
            AnalysisEntry::Fluctuation {
                params,
                v,
                mean_certainty,
                prior_point,
                ..
            } => {
                let source = params.source.map(|s| s.as_str()).unwrap_or("unnormalized");
                let k = params.k.unwrap_or(0);
                let style = FigureStyle {
                    title: format!(
                        "{} seed {} ({}, {source}, k={k})",
                        params.model,
                        params.seed_dir(),
                        params.verb
                    ),
                    x_label: "mean certainty".into(),
                    y_label: "coefficient of variation".into(),
                    bins,
                    ..FigureStyle::default()
                };
                let s = spec(
                    FigureKind::ScatterWithMarginals,
                    params,
                    format!("scatter_{source}_k{k}"),
                    style,
                );
                let fig = figures::render_scatter_with_marginals(
                    mean_certainty,
                    v,
                    *prior_point,
                    &s.style,
                )?;
                written.extend(figures::write_figure(&fig.scene, &s.output_stem(out_dir))?);
            }
            AnalysisEntry::Rq4 { params, matrix } | AnalysisEntry::Rq5 { params, matrix } => {
                let source = params.source.map(|s| s.as_str()).unwrap_or("normalized");
                let (name, x_label) = match entry {
                    AnalysisEntry::Rq4 { .. } => {
                        (format!("heatmap_checkpoints_{source}"), "checkpoint step")
                    }
                    _ => (
                        format!("heatmap_seeds_{source}_k{}", params.k.unwrap_or(0)),
                        "seed index",
                    ),
                };
                let style = FigureStyle {
                    title: format!("{} ({}, {source})", params.model, params.verb),
                    x_label: x_label.into(),
                    floor: Some(floor),
                    ..FigureStyle::default()
                };
                let s = spec(FigureKind::Heatmap, params, name, style);
                let fig = figures::render_heatmap(matrix, floor, &s.style);
                written.extend(figures::write_figure(&fig.scene, &s.output_stem(out_dir))?);
            }
            AnalysisEntry::Trajectory {
                params,
                steps,
                series,
            } => {
                let style = FigureStyle {
                    title: format!(
                        "{} seed {} ({})",
                        params.model,
                        params.seed_dir(),
                        params.verb
                    ),
                    x_label: "pre-training step".into(),
                    y_label: "probability / max".into(),
                    normalize: true,
                    ..FigureStyle::default()
                };
                let s = spec(FigureKind::Trajectory, params, "trajectory".into(), style);
                let fig = figures::render_trajectory(steps, series, &s.style)?;
                written.extend(figures::write_figure(&fig.scene, &s.output_stem(out_dir))?);
            }
            AnalysisEntry::FrequencyRank {
                case_mode,
                frequencies,
                ..
            } => {
                let style = FigureStyle {
                    title: format!("profession frequencies ({case_mode})"),
                    x_label: "rank".into(),
                    y_label: "log10 estimated count".into(),
                    ..FigureStyle::default()
                };
                let scene = figures::render_frequency_rank(frequencies, &style);
                let stem = out_dir
                    .join("figures")
                    .join("frequency")
                    .join(format!("rank_{case_mode}"));
                written.extend(figures::write_figure(&scene, &stem)?);
            }
            AnalysisEntry::Rq1 { .. } | AnalysisEntry::Rq2 { .. } | AnalysisEntry::Rq3 { .. } => {}
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{CorrelationKind, Histogram};

    fn params() -> RunParams {
        RunParams {
            model: "m".into(),
            seed: Some(0),
            verb: Verb::WorksAs,
            source: Some(RatioSource::Unnormalized),
            k: Some(3),
        }
    }

    fn sample() -> Report {
        let mut r = Report::new(ReportMetadata::default());
        r.push(AnalysisEntry::Rq1 {
            params: params(),
            stats: Rq1Stats {
                min: 0.1,
                max: 0.9,
                argmin: "a".into(),
                argmax: "b".into(),
                histogram: Histogram {
                    lo: 0.0,
                    hi: 0.9,
                    counts: vec![1, 1],
                },
            },
        });
        r.push(AnalysisEntry::Rq4 {
            params: RunParams {
                k: None,
                ..params()
            },
            matrix: CorrelationMatrix {
                kind: CorrelationKind::CheckpointPair,
                labels: vec![10, 20],
                values: vec![vec![1.0, 0.3], vec![0.3, 1.0]],
            },
        });
        r
    }

    #[test]
    fn empty_report_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = Report::new(ReportMetadata::default());
        assert!(matches!(
            export_report(&r, dir.path()),
            Err(ReportError::Empty)
        ));
        assert!(matches!(
            render_figures(&r, dir.path()),
            Err(ReportError::Empty)
        ));
    }

    #[test]
    fn export_layout_and_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let written = export_report(&sample(), dir.path()).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.strip_prefix(dir.path()).unwrap().display().to_string())
            .collect();
        assert_eq!(
            names,
            [
                "report/report.json",
                "report/tables/rq4__m__seed0__works_as__unnormalized.csv",
                "report/tables/summary.csv"
            ]
        );
        let back = Report::load(&dir.path().join("report/report.json")).unwrap();
        assert_eq!(back, sample());
        let json = std::fs::read_to_string(dir.path().join("report/report.json")).unwrap();
        assert!(json.contains("\"analysis\": \"rq1\""));
        assert!(json.contains("\"standard_deviation\": \"population (divide by n)\""));
        let summary =
            std::fs::read_to_string(dir.path().join("report/tables/summary.csv")).unwrap();
        assert!(summary.contains("rq1,m,0,works as,unnormalized,3,min,0.1"));
    }

    #[test]
    fn figures_follow_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let written = render_figures(&sample(), dir.path()).unwrap();
        assert!(written
            .iter()
            .any(|p| p.ends_with("figures/m/0/works_as/heatmap_checkpoints_unnormalized.svg")));
        assert!(written.iter().any(|p| p.extension().unwrap() == "png"));
    }

    #[test]
    fn exported_matrix_is_untruncated() {
        let dir = tempfile::tempdir().unwrap();
        export_report(&sample(), dir.path()).unwrap();
        let csv = std::fs::read_to_string(
            dir.path()
                .join("report/tables/rq4__m__seed0__works_as__unnormalized.csv"),
        )
        .unwrap();
        assert!(csv.contains("10,1,0.3"));
    }
}
