use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{decompose_lr, decompose_tvlr, Decomposition, SolverConfig, SolverReport};
use crate::tensor::ComplexTensor3;

pub const MIN_PATCH: usize = 8;

/// Spatial rectangle `[row0, row0 + rows) × [col0, col0 + cols)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchRect {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.row0..self.row0 + self.rows).contains(&r) && (self.col0..self.col0 + self.cols).contains(&c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub rows: usize,
    pub cols: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub overlap: usize,
    /// Row-major over the tiling.
    pub patches: Vec<PatchRect>,
}

impl PatchLayout {
    /// Tiles per direction, `(down, across)`.
    pub fn grid_shape(&self) -> (usize, usize) {
        let down = self.patches.iter().filter(|p| p.col0 == 0).count();
        (down, self.patches.len() / down.max(1))
    }
}

/// Window starts along one axis: stride `patch - overlap`, last window clipped at `n`.
fn starts(n: usize, patch: usize, overlap: usize) -> Vec<(usize, usize)> {
    let stride = patch - overlap;
    let mut out = Vec::new();
    let mut s = 0;
    loop {
        let len = patch.min(n - s);
        out.push((s, len));
        if s + patch >= n {
            break;
        }
        s += stride;
    }
    out
}

/// Sliding-window tiling of a `rows × cols` grid. Patches larger than the
/// grid are clipped, so an oversized patch yields a single tile.
pub fn plan_patches(dims: (usize, usize), patch_h: usize, patch_w: usize, overlap: usize) -> Result<PatchLayout> {
    let (rows, cols) = dims;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!("cannot tile an empty {rows}x{cols} grid")));
    }
    if patch_h < MIN_PATCH || patch_w < MIN_PATCH {
        return Err(Error::invalid(format!(
            "patch {patch_h}x{patch_w} is smaller than the minimum {MIN_PATCH}x{MIN_PATCH}"
        )));
    }
    if overlap >= patch_h.min(patch_w) {
        return Err(Error::invalid(format!(
            "overlap {overlap} must be smaller than the patch sides {patch_h}x{patch_w}"
        )));
    }
    let rs = starts(rows, patch_h, overlap);
    let cs = starts(cols, patch_w, overlap);
    let patches = rs
        .iter()
        .flat_map(|&(row0, h)| cs.iter().map(move |&(col0, w)| PatchRect { row0, col0, rows: h, cols: w }))
        .collect();
    Ok(PatchLayout { rows, cols, patch_h, patch_w, overlap, patches })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Tvlr,
    Lr,
    /// Pass-through: `X = G`, `E = 0`.
    None,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tvlr => "tvlr",
            Method::Lr => "lr",
            Method::None => "none",
        }
    }

    pub fn solve(self, g: &ComplexTensor3, cfg: &SolverConfig) -> Result<Option<Decomposition>> {
        match self {
            Method::Tvlr => decompose_tvlr(g, cfg).map(Some),
            Method::Lr => decompose_lr(g, cfg).map(Some),
            Method::None => Ok(None),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tvlr" => Ok(Method::Tvlr),
            "lr" => Ok(Method::Lr),
            "none" => Ok(Method::None),
            other => Err(Error::Config(format!("unknown method {other:?} (expected tvlr, lr or none)"))),
        }
    }
}

/// Per-patch result recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchOutcome {
    pub rect: PatchRect,
    /// `None` for [`Method::None`] and for failed patches.
    pub report: Option<SolverReport>,
    /// Set when the solve failed and the patch fell back to `X = G`, `E = 0`.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TiledDecomposition {
    pub x_hat: ComplexTensor3,
    pub e_hat: ComplexTensor3,
    pub patches: Vec<PatchOutcome>,
}

impl TiledDecomposition {
    pub fn failed_patches(&self) -> usize {
        self.patches.iter().filter(|p| p.failure.is_some()).count()
    }
}

pub fn extract_patch(t: &ComplexTensor3, rect: &PatchRect) -> ComplexTensor3 {
    let k = t.dims()[2];
    ComplexTensor3::from_fn([rect.rows, rect.cols, k], |i, j, l| t[(rect.row0 + i, rect.col0 + j, l)])
}

/// Decomposes each patch independently and stitches the results, averaging
/// overlapped entries with uniform weights. Patches are solved on a pool of
/// `workers` threads (`0` = rayon default) and accumulated in layout order, so
/// the output does not depend on scheduling.
pub fn decompose_tiled(
    stack: &ComplexTensor3,
    layout: &PatchLayout,
    cfg: &SolverConfig,
    method: Method,
    workers: usize,
) -> Result<TiledDecomposition> {
    let dims = stack.dims();
    if (layout.rows, layout.cols) != (dims[0], dims[1]) {
        return Err(Error::invalid(format!("layout {}x{} does not match stack {:?}", layout.rows, layout.cols, dims)));
    }
    cfg.validate()?;
    stack.ensure_finite()?;

    let solve = |rect: &PatchRect| -> (ComplexTensor3, ComplexTensor3, PatchOutcome) {
        let g = extract_patch(stack, rect);
        match method.solve(&g, cfg) {
            Ok(Some(d)) => {
                let outcome = PatchOutcome { rect: *rect, report: Some(d.report), failure: None };
                (d.x_hat, d.e_hat, outcome)
            }
            Ok(None) => {
                let e = ComplexTensor3::zeros(g.dims());
                (g, e, PatchOutcome { rect: *rect, report: None, failure: None })
            }
            Err(err) => {
                log::warn!("patch at ({}, {}) failed, passing it through: {err}", rect.row0, rect.col0);
                let e = ComplexTensor3::zeros(g.dims());
                let outcome = PatchOutcome { rect: *rect, report: None, failure: Some(err.to_string()) };
                (g, e, outcome)
            }
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let solved: Vec<_> = pool.install(|| layout.patches.par_iter().map(solve).collect());

    let mut x_sum = ComplexTensor3::zeros(dims);
    let mut e_sum = ComplexTensor3::zeros(dims);
    let mut count = vec![0u32; dims[0] * dims[1]];
    let mut outcomes = Vec::with_capacity(solved.len());
    for (x, e, outcome) in solved {
        let rect = outcome.rect;
        for l in 0..dims[2] {
            for j in 0..rect.cols {
                for i in 0..rect.rows {
                    let at = (rect.row0 + i, rect.col0 + j, l);
                    x_sum[at] += x[(i, j, l)];
                    e_sum[at] += e[(i, j, l)];
                }
            }
        }
        for i in 0..rect.rows {
            for j in 0..rect.cols {
                count[(rect.row0 + i) * dims[1] + rect.col0 + j] += 1;
            }
        }
        outcomes.push(outcome);
    }
    if let Some(idx) = count.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("layout leaves pixel ({}, {}) uncovered", idx / dims[1], idx % dims[1])));
    }
    for l in 0..dims[2] {
        for r in 0..dims[0] {
            for c in 0..dims[1] {
                let n = count[r * dims[1] + c];
                if n > 1 {
                    let w = 1.0 / n as f64;
                    x_sum[(r, c, l)] *= w;
                    e_sum[(r, c, l)] *= w;
                }
            }
        }
    }
    Ok(TiledDecomposition { x_hat: x_sum, e_hat: e_sum, patches: outcomes })
}
