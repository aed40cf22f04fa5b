//! Figure renderers. Each returns the drawn [`Scene`] together with the data
//! it plotted, so callers and tests can inspect what was drawn.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot::{axes, extent, Anchor, Color, LinearScale, Scene, Shape, PALETTE};
use super::ReportError;
use crate::analysis::{CorrelationKind, CorrelationMatrix, Histogram};
use crate::datastore::ScoreMatrixSet;

pub const HEATMAP_FLOOR: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    Trajectory,
    ScatterWithMarginals,
    Heatmap,
    FrequencyRank,
}

/// Axis labels and rendering options for one figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Heatmap colour floor; values below are drawn at the floor colour.
    pub floor: Option<f64>,
    /// Divide each trajectory by its own maximum.
    pub normalize: bool,
    pub bins: usize,
}

impl Default for FigureStyle {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            floor: None,
            normalize: false,
            bins: crate::analysis::DEFAULT_HISTOGRAM_BINS,
        }
    }
}

/// What to draw and where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub model: String,
    /// Seed directory name: the seed index, or `all` for cross-seed figures.
    pub seed: String,
    pub verb_slug: String,
    pub name: String,
    pub style: FigureStyle,
}

impl FigureSpec {
    /// `figures/<model>/<seed>/<verb>/<name>` (no extension).
    pub fn output_stem(&self, out_dir: &Path) -> PathBuf {
        out_dir
            .join("figures")
            .join(&self.model)
            .join(&self.seed)
            .join(&self.verb_slug)
            .join(&self.name)
    }
}

/// Writes `<stem>.svg` and the `<stem>.png` raster fallback.
pub fn write_figure(scene: &Scene, stem: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if let Some(parent) = stem.parent() {
        std::fs::create_dir_all(parent).map_err(ReportError::io(parent))?;
    }
    let svg = stem.with_extension("svg");
    super::atomic_write(&svg, scene.to_svg().as_bytes())?;
    let png = stem.with_extension("png");
    let mut bytes = Vec::new();
    scene
        .to_raster()
        .write_to(
            &mut std::io::Cursor::new(&mut bytes),
            image::ImageFormat::Png,
        )
        .map_err(|e| ReportError::Image(e.to_string()))?;
    super::atomic_write(&png, &bytes)?;
    Ok(vec![svg, png])
}

/// One line of a trajectory plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeries {
    pub label: String,
    pub values: Vec<f64>,
}

/// A template to trace over checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectorySelection {
    Prior,
    Profession(usize),
}

/// `P(he)` and `P(she)` over steps for each selected template.
pub fn trajectory_series(
    mset: &ScoreMatrixSet,
    selection: &[TrajectorySelection],
    he: &str,
    she: &str,
) -> Result<Vec<TrajectorySeries>, ReportError> {
    if selection.is_empty() {
        return Err(ReportError::EmptySelection);
    }
    let mut out = Vec::with_capacity(selection.len() * 2);
    for sel in selection {
        let (label, he_vals, she_vals) = match *sel {
            TrajectorySelection::Prior => (
                "prior".to_owned(),
                mset.prior_he.clone(),
                mset.prior_she.clone(),
            ),
            TrajectorySelection::Profession(t) => {
                let name = mset
                    .professions
                    .get(t)
                    .ok_or(ReportError::EmptySelection)?
                    .name
                    .clone();
                (
                    name,
                    mset.p_he.column(t).to_vec(),
                    mset.p_she.column(t).to_vec(),
                )
            }
        };
        out.push(TrajectorySeries {
            label: format!("{label}: {he}"),
            values: he_vals,
        });
        out.push(TrajectorySeries {
            label: format!("{label}: {she}"),
            values: she_vals,
        });
    }
    Ok(out)
}

/// Divides a series by its maximum so the peak is exactly 1.
pub fn normalize_by_max(series: &TrajectorySeries) -> Result<TrajectorySeries, ReportError> {
    let max = series
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(ReportError::ZeroSeries(series.label.clone()));
    }
    Ok(TrajectorySeries {
        label: series.label.clone(),
        values: series.values.iter().map(|v| v / max).collect(),
    })
}

pub struct TrajectoryFigure {
    pub scene: Scene,
    /// The series as drawn (normalized if requested).
    pub plotted: Vec<TrajectorySeries>,
}

/// Probability against checkpoint step, one line per series. Series come in
/// (he, she) pairs; `she` lines are dashed.
pub fn render_trajectory(
    steps: &[u64],
    series: &[TrajectorySeries],
    style: &FigureStyle,
) -> Result<TrajectoryFigure, ReportError> {
    if series.is_empty() {
        return Err(ReportError::EmptySelection);
    }
    let plotted = if style.normalize {
        series
            .iter()
            .map(normalize_by_max)
            .collect::<Result<Vec<_>, _>>()?
    } else {
        series.to_vec()
    };
    for s in &plotted {
        if s.values.len() != steps.len() {
            return Err(ReportError::LengthMismatch {
                left: steps.len(),
                right: s.values.len(),
            });
        }
    }

    let (w, h) = (720u32, 420u32);
    let area = (70.0, 40.0, 540.0, 360.0);
    let mut scene = Scene::new(w, h);
    let (x0, x1) = extent(steps.iter().map(|&s| s as f64)).unwrap_or((0.0, 1.0));
    let (y0, y1) =
        extent(plotted.iter().flat_map(|s| s.values.iter().copied())).unwrap_or((0.0, 1.0));
    let xs = LinearScale::new((x0, x1), (area.0, area.2));
    let ys = LinearScale::new((y0.min(0.0), y1), (area.3, area.1));
    axes(
        &mut scene,
        area,
        &xs,
        &ys,
        &style.x_label,
        &style.y_label,
        5,
    );
    scene.text((area.0, 24.0), style.title.clone(), 14.0, Anchor::Start);

    for (i, s) in plotted.iter().enumerate() {
        let color = PALETTE[(i / 2) % PALETTE.len()];
        let points = steps
            .iter()
            .zip(&s.values)
            .map(|(&x, &y)| (xs.map(x as f64), ys.map(y)))
            .collect();
        scene.push(Shape::Polyline {
            points,
            color,
            width: 1.5,
            dashed: i % 2 == 1,
        });
        let ly = area.1 + 14.0 + 16.0 * i as f64;
        scene.push(Shape::Line {
            from: (area.2 + 12.0, ly - 4.0),
            to: (area.2 + 36.0, ly - 4.0),
            color,
            width: 1.5,
            dashed: i % 2 == 1,
        });
        scene.text((area.2 + 42.0, ly), s.label.clone(), 10.0, Anchor::Start);
    }
    Ok(TrajectoryFigure { scene, plotted })
}

pub struct ScatterFigure {
    pub scene: Scene,
    pub x_histogram: Histogram,
    pub y_histogram: Histogram,
}

/// Scatter of `(x, y)` pairs with marginal histograms; `prior` is drawn as a
/// `×` marker.
pub fn render_scatter_with_marginals(
    x: &[f64],
    y: &[f64],
    prior: Option<(f64, f64)>,
    style: &FigureStyle,
) -> Result<ScatterFigure, ReportError> {
    if x.len() != y.len() {
        return Err(ReportError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let bins = style.bins.max(1);
    let extra = prior.into_iter();
    let (x0, x1) =
        extent(x.iter().copied().chain(extra.clone().map(|p| p.0))).unwrap_or((0.0, 1.0));
    let (y0, y1) = extent(y.iter().copied().chain(extra.map(|p| p.1))).unwrap_or((0.0, 1.0));
    let xs = LinearScale::new((x0, x1), (70.0, 450.0));
    let ys = LinearScale::new((y0, y1), (470.0, 130.0));
    let (dx0, dx1) = xs.domain();
    let (dy0, dy1) = ys.domain();
    let x_histogram = crate::analysis::Histogram::uniform(x, bins, dx0, dx1)
        .map_err(|e| ReportError::Analysis(e.to_string()))?;
    let y_histogram = crate::analysis::Histogram::uniform(y, bins, dy0, dy1)
        .map_err(|e| ReportError::Analysis(e.to_string()))?;

    let mut scene = Scene::new(600, 540);
    scene.text((70.0, 20.0), style.title.clone(), 14.0, Anchor::Start);
    axes(
        &mut scene,
        (70.0, 130.0, 450.0, 470.0),
        &xs,
        &ys,
        &style.x_label,
        &style.y_label,
        4,
    );

    // Top marginal: x histogram.
    let top_max = x_histogram.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    for (i, &c) in x_histogram.counts.iter().enumerate() {
        let (a, b) = x_histogram.bin_edges(i);
        let hgt = 80.0 * c as f64 / top_max;
        scene.push(Shape::Rect {
            x: xs.map(a),
            y: 120.0 - hgt,
            w: xs.map(b) - xs.map(a),
            h: hgt,
            fill: Some(Color::GREY),
            stroke: Some(Color::WHITE),
        });
    }
    // Right marginal: y histogram.
    let right_max = y_histogram.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    for (i, &c) in y_histogram.counts.iter().enumerate() {
        let (a, b) = y_histogram.bin_edges(i);
        let wdt = 80.0 * c as f64 / right_max;
        scene.push(Shape::Rect {
            x: 460.0,
            y: ys.map(b),
            w: wdt,
            h: ys.map(a) - ys.map(b),
            fill: Some(Color::GREY),
            stroke: Some(Color::WHITE),
        });
    }
    for (&a, &b) in x.iter().zip(y) {
        scene.push(Shape::Circle {
            center: (xs.map(a), ys.map(b)),
            r: 2.5,
            fill: Color::BLUE,
        });
    }
    if let Some((px, py)) = prior {
        scene.push(Shape::Cross {
            center: (xs.map(px), ys.map(py)),
            size: 12.0,
            color: Color::RED,
            width: 2.5,
        });
    }
    Ok(ScatterFigure {
        scene,
        x_histogram,
        y_histogram,
    })
}

/// Colour for a correlation value: white at the floor, dark red at 1.
/// Values below the floor are clamped to it (colour only).
pub fn heat_color(value: f64, floor: f64) -> Color {
    let span = (1.0 - floor).max(f64::EPSILON);
    let t = ((value.max(floor) - floor) / span).clamp(0.0, 1.0);
    if t < 0.5 {
        Color::lerp(Color(255, 255, 255), Color(252, 141, 89), t * 2.0)
    } else {
        Color::lerp(Color(252, 141, 89), Color(127, 0, 0), (t - 0.5) * 2.0)
    }
}

pub struct HeatmapFigure {
    pub scene: Scene,
    /// Fill colour per cell, row-major.
    pub cell_colors: Vec<Vec<Color>>,
}

pub fn render_heatmap(cm: &CorrelationMatrix, floor: f64, style: &FigureStyle) -> HeatmapFigure {
    let n = cm.len().max(1);
    let side = 440.0;
    let cell = side / n as f64;
    let (left, top) = (80.0, 50.0);
    let mut scene = Scene::new(640, 580);
    scene.text((left, 30.0), style.title.clone(), 14.0, Anchor::Start);
    let mut cell_colors = Vec::with_capacity(cm.len());
    for i in 0..cm.len() {
        let mut row = Vec::with_capacity(cm.len());
        for j in 0..cm.len() {
            let c = heat_color(cm.get(i, j), floor);
            row.push(c);
            scene.push(Shape::Rect {
                x: left + j as f64 * cell,
                y: top + i as f64 * cell,
                w: cell,
                h: cell,
                fill: Some(c),
                stroke: None,
            });
        }
        cell_colors.push(row);
    }
    scene.push(Shape::Rect {
        x: left,
        y: top,
        w: side,
        h: side,
        fill: None,
        stroke: Some(Color::BLACK),
    });
    let every = (cm.len() / 10).max(1);
    let fmt_label = |l: i64| match cm.kind {
        CorrelationKind::CheckpointPair if l >= 1000 => format!("{}K", l / 1000),
        _ => l.to_string(),
    };
    for (i, &l) in cm.labels.iter().enumerate().step_by(every) {
        let mid = i as f64 * cell + cell / 2.0;
        scene.text(
            (left - 6.0, top + mid + 3.0),
            fmt_label(l),
            9.0,
            Anchor::End,
        );
        scene.text(
            (left + mid, top + side + 14.0),
            fmt_label(l),
            9.0,
            Anchor::Middle,
        );
    }
    scene.text(
        (left + side / 2.0, top + side + 34.0),
        style.x_label.clone(),
        12.0,
        Anchor::Middle,
    );
    // Colour bar.
    let (bx, by, bh) = (left + side + 30.0, top, side);
    for k in 0..100 {
        let v = 1.0 - (1.0 - floor) * k as f64 / 100.0;
        scene.push(Shape::Rect {
            x: bx,
            y: by + bh * k as f64 / 100.0,
            w: 18.0,
            h: bh / 100.0 + 0.5,
            fill: Some(heat_color(v, floor)),
            stroke: None,
        });
    }
    scene.text((bx + 22.0, by + 8.0), "1", 10.0, Anchor::Start);
    scene.text(
        (bx + 22.0, by + bh),
        format!("≤{}", super::plot::tick_label(floor)),
        10.0,
        Anchor::Start,
    );
    HeatmapFigure { scene, cell_colors }
}

/// Frequencies sorted in descending order on a log10 axis; zeros are drawn
/// at the axis floor.
pub fn render_frequency_rank(frequencies: &[f64], style: &FigureStyle) -> Scene {
    let mut sorted = frequencies.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let logs: Vec<f64> = sorted
        .iter()
        .map(|&f| if f > 0.0 { f.log10() } else { f64::NAN })
        .collect();
    let (lo, hi) = extent(logs.iter().copied()).unwrap_or((0.0, 1.0));
    let lo = lo.floor();
    let mut scene = Scene::new(640, 420);
    let area = (80.0, 40.0, 600.0, 360.0);
    let xs = LinearScale::new(
        (0.0, sorted.len().saturating_sub(1) as f64),
        (area.0, area.2),
    );
    let ys = LinearScale::new((lo, hi.ceil().max(lo + 1.0)), (area.3, area.1));
    axes(
        &mut scene,
        area,
        &xs,
        &ys,
        &style.x_label,
        &style.y_label,
        5,
    );
    scene.text((area.0, 24.0), style.title.clone(), 14.0, Anchor::Start);
    let points = logs
        .iter()
        .enumerate()
        .map(|(i, &l)| (xs.map(i as f64), ys.map(if l.is_nan() { lo } else { l })))
        .collect();
    scene.push(Shape::Polyline {
        points,
        color: Color::BLUE,
        width: 1.5,
        dashed: false,
    });
    scene
}
