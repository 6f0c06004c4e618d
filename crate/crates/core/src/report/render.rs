use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::insar::Map2;

/// Color used for invalid pixels. No palette produces it.
pub const INVALID_COLOR: [u8; 3] = [255, 0, 255];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    Gray,
    /// Blue, white, red.
    Diverging,
    #[default]
    Viridis,
}

const VIRIDIS: [[u8; 3]; 5] = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];
const DIVERGING: [[u8; 3]; 3] = [[33, 102, 172], [247, 247, 247], [178, 24, 43]];

impl Palette {
    /// Color for `t` in `[0, 1]` (clamped), piecewise linear between anchors
    /// and rounded to the nearest integer.
    pub fn color(self, t: f64) -> [u8; 3] {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let anchors: &[[u8; 3]] = match self {
            Palette::Gray => &[[0, 0, 0], [255, 255, 255]],
            Palette::Diverging => &DIVERGING,
            Palette::Viridis => &VIRIDIS,
        };
        let pos = t * (anchors.len() - 1) as f64;
        let i = (pos.floor() as usize).min(anchors.len() - 2);
        let f = pos - i as f64;
        let (a, b) = (anchors[i], anchors[i + 1]);
        std::array::from_fn(|k| (a[k] as f64 + f * (b[k] as f64 - a[k] as f64)).round() as u8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub palette: Palette,
    /// Fixed color range; the finite valid min/max of the map when unset.
    pub range: Option<[f64; 2]>,
    /// Each map pixel becomes a `block × block` square.
    pub block: usize,
    pub label: String,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { palette: Palette::default(), range: None, block: 1, label: String::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedMap {
    pub image: PathBuf,
    pub colorbar: PathBuf,
    pub range: [f64; 2],
}

fn value_range(map: &Map2, valid: Option<&[bool]>) -> [f64; 2] {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, &v) in map.data.iter().enumerate() {
        if valid.is_none_or(|m| m[i]) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        [0.0, 1.0]
    } else {
        [lo, hi]
    }
}

/// Binary PPM (P6) bytes for `map`.
pub fn map_to_ppm(map: &Map2, valid: Option<&[bool]>, opts: &RenderOptions) -> Result<(Vec<u8>, [f64; 2])> {
    if opts.block == 0 {
        return Err(Error::invalid("render block size must be >= 1"));
    }
    if map.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot render a map with non-finite values"));
    }
    if let Some(m) = valid {
        if m.len() != map.data.len() {
            return Err(Error::invalid("valid mask length does not match map"));
        }
    }
    let range = match opts.range {
        Some(r) if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] => r,
        Some(r) => return Err(Error::invalid(format!("bad render range {r:?}"))),
        None => value_range(map, valid),
    };
    let span = range[1] - range[0];
    let b = opts.block;
    let (w, h) = (map.cols * b, map.rows * b);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for r in 0..map.rows {
        let line: Vec<u8> = (0..map.cols)
            .flat_map(|c| {
                let idx = r * map.cols + c;
                let rgb = if valid.is_some_and(|m| !m[idx]) {
                    INVALID_COLOR
                } else if span > 0.0 {
                    opts.palette.color((map.data[idx] - range[0]) / span)
                } else {
                    opts.palette.color(0.5)
                };
                std::iter::repeat_n(rgb, b).flatten()
            })
            .collect();
        for _ in 0..b {
            out.extend_from_slice(&line);
        }
    }
    Ok((out, range))
}

/// Vertical SVG color bar with five labelled ticks.
pub fn colorbar_svg(palette: Palette, range: [f64; 2], label: &str) -> String {
    const STEPS: usize = 64;
    let (bar_h, bar_w) = (256.0, 24.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="140" height="300" viewBox="0 0 140 300">"#);
    let _ = writeln!(s, r#"<text x="10" y="16" font-family="sans-serif" font-size="12">{}</text>"#, escape(label));
    let cell = bar_h / STEPS as f64;
    for i in 0..STEPS {
        let t = 1.0 - (i as f64 + 0.5) / STEPS as f64;
        let [r, g, b] = palette.color(t);
        let _ = writeln!(
            s,
            r#"<rect x="10" y="{:.3}" width="{bar_w}" height="{:.3}" fill="rgb({r},{g},{b})"/>"#,
            28.0 + i as f64 * cell,
            cell + 0.05
        );
    }
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let y = 28.0 + bar_h * (1.0 - t);
        let v = range[0] + t * (range[1] - range[0]);
        let _ = writeln!(s, r#"<text x="40" y="{:.3}" font-family="sans-serif" font-size="11">{v:.3}</text>"#, y + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

pub(crate) fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `out_path` (PPM) and a color bar next to it with the extension
/// replaced by `colorbar.svg`.
pub fn render_map(map: &Map2, valid: Option<&[bool]>, opts: &RenderOptions, out_path: &Path) -> Result<RenderedMap> {
    let (ppm, range) = map_to_ppm(map, valid, opts)?;
    fs::write(out_path, ppm).map_err(|e| Error::io(out_path, e))?;
    let colorbar = out_path.with_extension("colorbar.svg");
    fs::write(&colorbar, colorbar_svg(opts.palette, range, &opts.label)).map_err(|e| Error::io(&colorbar, e))?;
    Ok(RenderedMap { image: out_path.to_path_buf(), colorbar, range })
}
