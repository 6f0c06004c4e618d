use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::report::render::escape;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line plot of one or more series (e.g. SD against outlier fraction) with a
/// legend. Coordinates are written with three decimals.
pub fn curves_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let all = || series.iter().flat_map(|s| s.points.iter());
    if all().next().is_none() {
        return Err(Error::invalid("nothing to plot"));
    }
    if all().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("plot points must be finite"));
    }
    let (x0, x1) = bounds(all().map(|p| p.0));
    let (_, y1) = bounds(all().map(|p| p.1));
    let y0 = bounds(all().map(|p| p.1)).0.min(0.0);
    let (left, top, w, h) = (60.0, 30.0, 400.0, 260.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * w;
    let py = |y: f64| top + h - (y - y0) / (y1 - y0) * h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="600" height="340" viewBox="0 0 600 340">"#);
    let _ = writeln!(s, r#"<rect width="600" height="340" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-family="sans-serif" font-size="13">{}</text>"#, escape(title));
    let _ = writeln!(s, r#"<path d="M{left} {top} V{:.3} H{:.3}" fill="none" stroke="black"/>"#, top + h, left + w);
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="10" text-anchor="middle">{xv:.3}</text>"#,
            px(xv),
            top + h + 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="10" text-anchor="end">{yv:.3}</text>"#,
            left - 4.0,
            py(yv) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="332" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
        left + w / 2.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.3}" font-family="sans-serif" font-size="11" transform="rotate(-90 14 {:.3})" text-anchor="middle">{}</text>"#,
        top + h / 2.0,
        top + h / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y))).collect();
        let _ =
            writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        for &(x, y) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = top + 12.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="475" y1="{ly:.3}" x2="495" y2="{ly:.3}" stroke="{color}" stroke-width="2"/><text x="500" y="{:.3}" font-family="sans-serif" font-size="11">{}</text>"#,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_curves_svg(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    fs::write(path, curves_svg(title, x_label, y_label, series)?).map_err(|e| Error::io(path, e))
}
