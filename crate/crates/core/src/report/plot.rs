//! Minimal retained-mode drawing: a [`Scene`] of primitives rendered either
//! to SVG or to an RGB raster. Text is only drawn in SVG.

use std::fmt::Write as _;

use image::{Rgb, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Color(pub u8, pub u8, pub u8);

impl Color {
    pub const BLACK: Color = Color(0, 0, 0);
    pub const WHITE: Color = Color(255, 255, 255);
    pub const GREY: Color = Color(160, 160, 160);
    pub const LIGHT_GREY: Color = Color(225, 225, 225);
    pub const BLUE: Color = Color(31, 119, 180);
    pub const ORANGE: Color = Color(255, 127, 14);
    pub const RED: Color = Color(214, 39, 40);
    pub const GREEN: Color = Color(44, 160, 44);
    pub const PURPLE: Color = Color(148, 103, 189);

    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    pub fn lerp(a: Color, b: Color, t: f64) -> Color {
        let t = t.clamp(0.0, 1.0);
        let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
        Color(mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
    }
}

/// Series colours, cycled.
pub const PALETTE: [Color; 5] = [
    Color::BLUE,
    Color::ORANGE,
    Color::GREEN,
    Color::RED,
    Color::PURPLE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Start,
    Middle,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Rect {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        fill: Option<Color>,
        stroke: Option<Color>,
    },
    Line {
        from: (f64, f64),
        to: (f64, f64),
        color: Color,
        width: f64,
        dashed: bool,
    },
    Polyline {
        points: Vec<(f64, f64)>,
        color: Color,
        width: f64,
        dashed: bool,
    },
    Circle {
        center: (f64, f64),
        r: f64,
        fill: Color,
    },
    /// `×` marker.
    Cross {
        center: (f64, f64),
        size: f64,
        color: Color,
        width: f64,
    },
    Text {
        at: (f64, f64),
        text: String,
        size: f64,
        anchor: Anchor,
        rotate: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub shapes: Vec<Shape>,
}

impl Scene {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            shapes: vec![Shape::Rect {
                x: 0.0,
                y: 0.0,
                w: width as f64,
                h: height as f64,
                fill: Some(Color::WHITE),
                stroke: None,
            }],
        }
    }

    pub fn push(&mut self, shape: Shape) {
        self.shapes.push(shape);
    }

    pub fn text(&mut self, at: (f64, f64), text: impl Into<String>, size: f64, anchor: Anchor) {
        self.push(Shape::Text {
            at,
            text: text.into(),
            size,
            anchor,
            rotate: false,
        });
    }

    pub fn line(&mut self, from: (f64, f64), to: (f64, f64), color: Color) {
        self.push(Shape::Line {
            from,
            to,
            color,
            width: 1.0,
            dashed: false,
        });
    }

    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
            w = self.width,
            h = self.height
        );
        for shape in &self.shapes {
            svg_shape(&mut s, shape);
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn to_raster(&self) -> RgbImage {
        let mut img = RgbImage::from_pixel(self.width, self.height, Rgb([255, 255, 255]));
        for shape in &self.shapes {
            raster_shape(&mut img, shape);
        }
        img
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.2}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn stroke_attrs(color: Color, width: f64, dashed: bool) -> String {
    let dash = if dashed {
        r#" stroke-dasharray="5,3""#
    } else {
        ""
    };
    format!(
        r#"stroke="{}" stroke-width="{}"{dash}"#,
        color.hex(),
        fmt(width)
    )
}

fn svg_shape(s: &mut String, shape: &Shape) {
    match shape {
        Shape::Rect {
            x,
            y,
            w,
            h,
            fill,
            stroke,
        } => {
            let fill = fill.map(Color::hex).unwrap_or_else(|| "none".to_owned());
            let stroke = stroke
                .map(|c| format!(r#" stroke="{}" stroke-width="1""#, c.hex()))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"{stroke}/>"#,
                fmt(*x),
                fmt(*y),
                fmt(*w),
                fmt(*h)
            );
        }
        Shape::Line {
            from,
            to,
            color,
            width,
            dashed,
        } => {
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" {}/>"#,
                fmt(from.0),
                fmt(from.1),
                fmt(to.0),
                fmt(to.1),
                stroke_attrs(*color, *width, *dashed)
            );
        }
        Shape::Polyline {
            points,
            color,
            width,
            dashed,
        } => {
            let pts: Vec<String> = points
                .iter()
                .map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" {}/>"#,
                pts.join(" "),
                stroke_attrs(*color, *width, *dashed)
            );
        }
        Shape::Circle { center, r, fill } => {
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="{}" fill="{}" fill-opacity="0.6"/>"#,
                fmt(center.0),
                fmt(center.1),
                fmt(*r),
                fill.hex()
            );
        }
        Shape::Cross {
            center,
            size,
            color,
            width,
        } => {
            let (x, y, d) = (center.0, center.1, size / 2.0);
            let attrs = stroke_attrs(*color, *width, false);
            let _ = writeln!(
                s,
                r#"<path d="M{} {} L{} {} M{} {} L{} {}" {attrs}/>"#,
                fmt(x - d),
                fmt(y - d),
                fmt(x + d),
                fmt(y + d),
                fmt(x - d),
                fmt(y + d),
                fmt(x + d),
                fmt(y - d)
            );
        }
        Shape::Text {
            at,
            text,
            size,
            anchor,
            rotate,
        } => {
            let anchor = match anchor {
                Anchor::Start => "start",
                Anchor::Middle => "middle",
                Anchor::End => "end",
            };
            let transform = if *rotate {
                format!(r#" transform="rotate(-90 {} {})""#, fmt(at.0), fmt(at.1))
            } else {
                String::new()
            };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="{}" text-anchor="{anchor}"{transform}>{}</text>"#,
                fmt(at.0),
                fmt(at.1),
                fmt(*size),
                escape(text)
            );
        }
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Color) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb([c.0, c.1, c.2]));
    }
}

fn fill_rect(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, c: Color) {
    let (xa, xb) = (x0.min(x1).round() as i64, x0.max(x1).round() as i64);
    let (ya, yb) = (y0.min(y1).round() as i64, y0.max(y1).round() as i64);
    for y in ya..yb.max(ya + 1) {
        for x in xa..xb.max(xa + 1) {
            put(img, x, y, c);
        }
    }
}

fn draw_segment(
    img: &mut RgbImage,
    a: (f64, f64),
    b: (f64, f64),
    c: Color,
    width: f64,
    dashed: bool,
) {
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let steps = (len.ceil() as usize).max(1);
    let half = ((width - 1.0) / 2.0).max(0.0).round() as i64;
    for i in 0..=steps {
        if dashed && (i % 8) >= 5 {
            continue;
        }
        let t = i as f64 / steps as f64;
        let x = (a.0 + (b.0 - a.0) * t).round() as i64;
        let y = (a.1 + (b.1 - a.1) * t).round() as i64;
        for dy in -half..=half {
            for dx in -half..=half {
                put(img, x + dx, y + dy, c);
            }
        }
    }
}

fn raster_shape(img: &mut RgbImage, shape: &Shape) {
    match shape {
        Shape::Rect {
            x,
            y,
            w,
            h,
            fill,
            stroke,
        } => {
            if let Some(c) = fill {
                fill_rect(img, *x, *y, x + w, y + h, *c);
            }
            if let Some(c) = stroke {
                let corners = [(*x, *y), (x + w, *y), (x + w, y + h), (*x, y + h), (*x, *y)];
                for pair in corners.windows(2) {
                    draw_segment(img, pair[0], pair[1], *c, 1.0, false);
                }
            }
        }
        Shape::Line {
            from,
            to,
            color,
            width,
            dashed,
        } => draw_segment(img, *from, *to, *color, *width, *dashed),
        Shape::Polyline {
            points,
            color,
            width,
            dashed,
        } => {
            for pair in points.windows(2) {
                draw_segment(img, pair[0], pair[1], *color, *width, *dashed);
            }
        }
        Shape::Circle { center, r, fill } => {
            let ri = r.ceil() as i64;
            let (cx, cy) = (center.0.round() as i64, center.1.round() as i64);
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    if ((dx * dx + dy * dy) as f64) <= r * r {
                        put(img, cx + dx, cy + dy, *fill);
                    }
                }
            }
        }
        Shape::Cross {
            center,
            size,
            color,
            width,
        } => {
            let d = size / 2.0;
            let (x, y) = *center;
            draw_segment(img, (x - d, y - d), (x + d, y + d), *color, *width, false);
            draw_segment(img, (x - d, y + d), (x + d, y - d), *color, *width, false);
        }
        Shape::Text { .. } => {}
    }
}

/// Linear map from a data interval onto a pixel interval. A degenerate data
/// interval is widened so that every value maps to the middle.
#[derive(Debug, Clone, Copy)]
pub struct LinearScale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl LinearScale {
    pub fn new(domain: (f64, f64), range: (f64, f64)) -> Self {
        let (mut d0, mut d1) = domain;
        if !(d1 - d0).is_normal() {
            let pad = if d0 == 0.0 { 1.0 } else { d0.abs() * 0.5 };
            d0 -= pad;
            d1 += pad;
        }
        Self {
            d0,
            d1,
            p0: range.0,
            p1: range.1,
        }
    }

    pub fn map(&self, x: f64) -> f64 {
        self.p0 + (x - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.d0, self.d1)
    }
}

/// Smallest and largest finite values.
pub fn extent(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

/// Short tick label.
pub fn tick_label(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{x:.1e}")
    } else {
        let s = format!("{x:.2}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".to_owned()
        } else {
            s.to_owned()
        }
    }
}

/// Draws a framed plot area with `ticks` labelled ticks on both axes.
pub fn axes(
    scene: &mut Scene,
    area: (f64, f64, f64, f64),
    xs: &LinearScale,
    ys: &LinearScale,
    x_label: &str,
    y_label: &str,
    ticks: usize,
) {
    let (left, top, right, bottom) = area;
    scene.push(Shape::Rect {
        x: left,
        y: top,
        w: right - left,
        h: bottom - top,
        fill: None,
        stroke: Some(Color::BLACK),
    });
    let ticks = ticks.max(1);
    for i in 0..=ticks {
        let t = i as f64 / ticks as f64;
        let (x0, x1) = xs.domain();
        let xv = x0 + (x1 - x0) * t;
        let px = xs.map(xv);
        scene.line((px, bottom), (px, bottom + 4.0), Color::BLACK);
        scene.text((px, bottom + 16.0), tick_label(xv), 10.0, Anchor::Middle);
        let (y0, y1) = ys.domain();
        let yv = y0 + (y1 - y0) * t;
        let py = ys.map(yv);
        scene.line((left - 4.0, py), (left, py), Color::BLACK);
        scene.text((left - 6.0, py + 3.0), tick_label(yv), 10.0, Anchor::End);
    }
    scene.text(
        ((left + right) / 2.0, bottom + 34.0),
        x_label,
        12.0,
        Anchor::Middle,
    );
    scene.push(Shape::Text {
        at: (left - 44.0, (top + bottom) / 2.0),
        text: y_label.to_owned(),
        size: 12.0,
        anchor: Anchor::Middle,
        rotate: true,
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_deterministic_and_escaped() {
        let mut scene = Scene::new(100, 50);
        scene.text((10.0, 10.0), "a < b & c", 10.0, Anchor::Start);
        scene.push(Shape::Cross {
            center: (20.0, 20.0),
            size: 6.0,
            color: Color::RED,
            width: 2.0,
        });
        let a = scene.to_svg();
        assert_eq!(a, scene.clone().to_svg());
        assert!(a.contains("a &lt; b &amp; c"));
        assert!(a.starts_with("<svg"));
    }

    #[test]
    fn raster_draws_shapes() {
        let mut scene = Scene::new(20, 20);
        scene.push(Shape::Rect {
            x: 0.0,
            y: 0.0,
            w: 10.0,
            h: 10.0,
            fill: Some(Color::RED),
            stroke: None,
        });
        let img = scene.to_raster();
        assert_eq!(img.get_pixel(5, 5).0, [214, 39, 40]);
        assert_eq!(img.get_pixel(15, 15).0, [255, 255, 255]);
    }

    #[test]
    fn scale_handles_degenerate_domain() {
        let s = LinearScale::new((1.0, 1.0), (0.0, 100.0));
        assert!((s.map(1.0) - 50.0).abs() < 1e-9);
        let s = LinearScale::new((0.0, 2.0), (0.0, 100.0));
        assert_eq!(s.map(1.0), 50.0);
    }

    #[test]
    fn tick_labels() {
        assert_eq!(tick_label(0.5), "0.5");
        assert_eq!(tick_label(2.0), "2");
        assert_eq!(tick_label(0.0), "0");
        assert_eq!(tick_label(1.5e6), "1.5e6");
    }
}
