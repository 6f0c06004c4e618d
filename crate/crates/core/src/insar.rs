//! Multipass InSAR forward model and the simulation protocol.
//!
//! A stack entry is
//! `A · exp(−j[(4π/(λr))·S·b_k + (4π/λ)·P·τ_k])`
//! with elevation `S` in meters and deformation `P` in millimeters (per year
//! for the linear model, amplitude for the seasonal model). The mm → m
//! conversion happens only in [`InSARGeometry::deformation_factor`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor3;

pub const MM_TO_M: f64 = 1e-3;

/// Sub-seed streams derived from a master seed with [`sub_seed`].
pub mod streams {
    pub const NOISE: u64 = 1;
    pub const OUTLIERS: u64 = 2;
    pub const TRUTH: u64 = 3;
    pub const BASELINES: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for `stream` from `master` (two rounds of splitmix64).
pub fn sub_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionModel {
    /// `τ = t`
    Linear,
    /// `τ = sin(2π(t − t0))`
    Seasonal { t0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InSARGeometry {
    /// Radar wavelength in meters.
    pub wavelength: f64,
    /// Slant range in meters.
    pub range: f64,
    /// Perpendicular baselines in meters, one per image.
    pub spatial_baselines: Vec<f64>,
    /// Temporal baselines in years, one per image.
    pub temporal_baselines: Vec<f64>,
    pub motion_model: MotionModel,
}

impl InSARGeometry {
    pub fn new(
        wavelength: f64,
        range: f64,
        spatial_baselines: Vec<f64>,
        temporal_baselines: Vec<f64>,
        motion_model: MotionModel,
    ) -> Result<Self> {
        let g = Self { wavelength, range, spatial_baselines, temporal_baselines, motion_model };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::invalid(format!("wavelength must be > 0, got {}", self.wavelength)));
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::invalid(format!("range must be > 0, got {}", self.range)));
        }
        if self.spatial_baselines.is_empty() || self.spatial_baselines.len() != self.temporal_baselines.len() {
            return Err(Error::invalid(format!(
                "need equal, nonzero numbers of spatial ({}) and temporal ({}) baselines",
                self.spatial_baselines.len(),
                self.temporal_baselines.len()
            )));
        }
        if self.spatial_baselines.iter().chain(&self.temporal_baselines).any(|v| !v.is_finite()) {
            return Err(Error::invalid("baselines must be finite"));
        }
        Ok(())
    }

    pub fn num_images(&self) -> usize {
        self.spatial_baselines.len()
    }

    /// Warped time variable `τ`.
    pub fn warped_time(&self) -> Vec<f64> {
        match self.motion_model {
            MotionModel::Linear => self.temporal_baselines.clone(),
            MotionModel::Seasonal { t0 } => {
                self.temporal_baselines.iter().map(|t| (2.0 * PI * (t - t0)).sin()).collect()
            }
        }
    }

    /// Phase per meter of elevation per meter of baseline, `4π/(λr)`.
    pub fn elevation_factor(&self) -> f64 {
        4.0 * PI / (self.wavelength * self.range)
    }

    /// Phase per millimeter of deformation per unit of `τ`, `(4π/λ)·10⁻³`.
    pub fn deformation_factor(&self) -> f64 {
        4.0 * PI / self.wavelength * MM_TO_M
    }

    /// Per-image phase coefficients `(a_k, c_k)` such that the modeled phase of
    /// image `k` is `a_k·s + c_k·p` (elevation `s` in m, deformation `p` in mm).
    pub fn phase_coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let ef = self.elevation_factor();
        let df = self.deformation_factor();
        (
            self.spatial_baselines.iter().map(|b| ef * b).collect(),
            self.warped_time().into_iter().map(|t| df * t).collect(),
        )
    }
}

/// Spans used to draw a baseline set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub num_images: usize,
    pub wavelength: f64,
    pub range: f64,
    /// Spatial baselines are drawn uniformly in `[-spatial_half_span, spatial_half_span]` m.
    pub spatial_half_span: f64,
    /// Total time span in years, centered on the (excluded) master acquisition.
    pub temporal_span_years: f64,
    /// Acquisitions fall on multiples of this repeat interval.
    pub repeat_days: f64,
    pub motion_model: MotionModel,
}

impl Default for BaselineSpec {
    /// X-band values representative of TerraSAR-X (not a reproduction of any real stack).
    fn default() -> Self {
        Self {
            num_images: 15,
            wavelength: 0.031,
            range: 700e3,
            spatial_half_span: 250.0,
            temporal_span_years: 2.0,
            repeat_days: 11.0,
            motion_model: MotionModel::Linear,
        }
    }
}

impl BaselineSpec {
    /// Draws a geometry. Temporal baselines are distinct repeat slots sampled
    /// without replacement (master slot excluded), sorted in time; spatial
    /// baselines are i.i.d. uniform.
    pub fn generate(&self, seed: u64) -> Result<InSARGeometry> {
        let half_slots = ((self.temporal_span_years * 365.25 / 2.0) / self.repeat_days).floor() as usize;
        let available = 2 * half_slots;
        if self.num_images == 0 || self.num_images > available {
            return Err(Error::invalid(format!("cannot place {} images on {available} repeat slots", self.num_images)));
        }
        if self.spatial_half_span.is_nan() || self.spatial_half_span < 0.0 {
            return Err(Error::invalid("spatial_half_span must be >= 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut slots: Vec<i64> = sample(&mut rng, available, self.num_images)
            .into_iter()
            .map(|i| {
                let i = i as i64 - half_slots as i64;
                // skip the master slot 0
                if i >= 0 {
                    i + 1
                } else {
                    i
                }
            })
            .collect();
        slots.sort_unstable();
        let temporal = slots.iter().map(|&s| s as f64 * self.repeat_days / 365.25).collect();
        let spatial = (0..self.num_images)
            .map(|_| {
                if self.spatial_half_span == 0.0 {
                    0.0
                } else {
                    rng.random_range(-self.spatial_half_span..=self.spatial_half_span)
                }
            })
            .collect();
        InSARGeometry::new(self.wavelength, self.range, spatial, temporal, self.motion_model)
    }
}

/// A real-valued `rows × cols` grid stored row-major (`i1` is the row).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Map2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Map2 {
    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!("map data length {} does not match {rows}x{cols}", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Elevation (m) and deformation (mm/year or mm) over the spatial grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterMaps {
    pub elevation: Map2,
    pub deformation: Map2,
}

impl ParameterMaps {
    pub fn new(elevation: Map2, deformation: Map2) -> Result<Self> {
        if elevation.shape() != deformation.shape() {
            return Err(Error::invalid(format!(
                "elevation {:?} and deformation {:?} shapes differ",
                elevation.shape(),
                deformation.shape()
            )));
        }
        if elevation.data.iter().chain(&deformation.data).any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameter maps must be finite"));
        }
        Ok(Self { elevation, deformation })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { elevation: Map2::filled(rows, cols, 0.0), deformation: Map2::filled(rows, cols, 0.0) }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.elevation.shape()
    }
}

/// Amplitude tensor `𝒜` of the forward model.
#[derive(Clone, Debug, PartialEq)]
pub enum Amplitude {
    Uniform(f64),
    /// One value per stack entry, in tensor storage order.
    PerEntry(Vec<f64>),
}

impl Default for Amplitude {
    fn default() -> Self {
        Amplitude::Uniform(1.0)
    }
}

/// Evaluates the forward model for every pixel and image.
pub fn forward(maps: &ParameterMaps, geom: &InSARGeometry, amplitude: &Amplitude) -> Result<ComplexTensor3> {
    geom.validate()?;
    let (rows, cols) = maps.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("parameter maps must be non-empty"));
    }
    let dims = [rows, cols, geom.num_images()];
    let n = dims.iter().product::<usize>();
    if let Amplitude::PerEntry(a) = amplitude {
        if a.len() != n {
            return Err(Error::invalid(format!("amplitude has {} entries, stack {dims:?} needs {n}", a.len())));
        }
    }
    let (a_coef, c_coef) = geom.phase_coefficients();
    let mut t = ComplexTensor3::from_fn(dims, |i1, i2, k| {
        let s = maps.elevation.get(i1, i2);
        let p = maps.deformation.get(i1, i2);
        Complex64::from_polar(1.0, -(a_coef[k] * s + c_coef[k] * p))
    });
    match amplitude {
        Amplitude::Uniform(a) => {
            if *a != 1.0 {
                for z in t.as_mut_slice() {
                    *z *= a;
                }
            }
        }
        Amplitude::PerEntry(a) => {
            for (z, a) in t.as_mut_slice().iter_mut().zip(a) {
                *z *= a;
            }
        }
    }
    Ok(t)
}

/// Adds i.i.d. circular complex Gaussian noise with variance `mean(|g|²)/10^(snr_db/10)`.
/// An infinite SNR returns the input unchanged.
pub fn add_noise(g: &ComplexTensor3, snr_db: f64, seed: u64) -> Result<ComplexTensor3> {
    if snr_db.is_nan() {
        return Err(Error::invalid("snr_db must not be NaN"));
    }
    if snr_db == f64::INFINITY {
        return Ok(g.clone());
    }
    let power = g.frobenius_norm_sqr() / g.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = g.clone();
    for z in out.as_mut_slice() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex64::new(sigma * re, sigma * im);
    }
    Ok(out)
}

/// Replaces `⌊fraction·N⌋` entries, chosen uniformly without replacement, by
/// `|g|·exp(jθ)` with `θ ~ U[0, 2π)`. Returns the stack and the replacement
/// mask in storage order.
pub fn inject_outliers(g: &ComplexTensor3, fraction: f64, seed: u64) -> Result<(ComplexTensor3, Vec<bool>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("outlier fraction must be in [0, 1), got {fraction}")));
    }
    let n = g.len();
    let count = (fraction * n as f64).floor() as usize;
    let mut out = g.clone();
    let mut mask = vec![false; n];
    if count == 0 {
        return Ok((out, mask));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();
    let data = out.as_mut_slice();
    for idx in picked {
        let theta = rng.random_range(0.0..2.0 * PI);
        data[idx] = Complex64::from_polar(data[idx].norm(), theta);
        mask[idx] = true;
    }
    Ok((out, mask))
}

/// Full simulation description.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSpec {
    pub geometry: InSARGeometry,
    pub truth: ParameterMaps,
    pub amplitude: Amplitude,
    pub snr_db: f64,
    pub outlier_fraction: f64,
    pub rng_seed: u64,
}

impl SimSpec {
    pub fn dims(&self) -> [usize; 3] {
        let (r, c) = self.truth.shape();
        [r, c, self.geometry.num_images()]
    }

    /// Builds a spec with generated truth maps and baselines, all seeded from `seed`.
    pub fn generated(
        rows: usize,
        cols: usize,
        baselines: &BaselineSpec,
        truth: &TruthSpec,
        snr_db: f64,
        outlier_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            geometry: baselines.generate(sub_seed(seed, streams::BASELINES))?,
            truth: truth.generate(rows, cols, sub_seed(seed, streams::TRUTH))?,
            amplitude: Amplitude::Uniform(1.0),
            snr_db,
            outlier_fraction,
            rng_seed: seed,
        })
    }

    /// 60×75×15 stack, 0 dB SNR, 20% outliers.
    pub fn desk_scale(seed: u64) -> Result<Self> {
        Self::generated(60, 75, &BaselineSpec::default(), &TruthSpec::default(), 0.0, 0.2, seed)
    }

    /// 200×250×29 stack, 0 dB SNR, 20% outliers.
    pub fn paper_scale(seed: u64) -> Result<Self> {
        let baselines = BaselineSpec { num_images: 29, ..BaselineSpec::default() };
        Self::generated(200, 250, &baselines, &TruthSpec::default(), 0.0, 0.2, seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub stack: ComplexTensor3,
    pub truth: ParameterMaps,
    pub mask: Vec<bool>,
}

/// `forward → add_noise → inject_outliers`, with the noise and outlier streams
/// seeded by `sub_seed(rng_seed, streams::NOISE)` and `sub_seed(rng_seed, streams::OUTLIERS)`.
pub fn simulate(spec: &SimSpec) -> Result<Simulation> {
    let clean = forward(&spec.truth, &spec.geometry, &spec.amplitude)?;
    let noisy = add_noise(&clean, spec.snr_db, sub_seed(spec.rng_seed, streams::NOISE))?;
    let (stack, mask) = inject_outliers(&noisy, spec.outlier_fraction, sub_seed(spec.rng_seed, streams::OUTLIERS))?;
    stack.ensure_finite()?;
    Ok(Simulation { stack, truth: spec.truth.clone(), mask })
}

/// Generator for truth maps: flat elevation background with rectangular
/// blocks at distinct heights, and a deformation ramp increasing from the
/// top-left to the bottom-right corner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthSpec {
    pub background_elevation: f64,
    /// Block heights are evenly spaced over this interval.
    pub elevation_range: [f64; 2],
    pub deformation_range: [f64; 2],
    pub num_blocks: usize,
    /// Block side lengths as fractions of the grid side.
    pub block_size_fraction: [f64; 2],
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            background_elevation: 0.0,
            elevation_range: [-100.0, 100.0],
            deformation_range: [-15.0, 15.0],
            num_blocks: 4,
            block_size_fraction: [0.15, 0.3],
        }
    }
}

impl TruthSpec {
    pub fn block_levels(&self) -> Vec<f64> {
        let [lo, hi] = self.elevation_range;
        match self.num_blocks {
            0 => vec![],
            1 => vec![hi],
            n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    }

    pub fn generate(&self, rows: usize, cols: usize, seed: u64) -> Result<ParameterMaps> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("truth grid must be non-empty"));
        }
        let [fmin, fmax] = self.block_size_fraction;
        if !(0.0 < fmin && fmin <= fmax && fmax <= 1.0) {
            return Err(Error::invalid(format!("bad block_size_fraction {:?}", self.block_size_fraction)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut elevation = Map2::filled(rows, cols, self.background_elevation);
        let mut placed: Vec<[usize; 4]> = Vec::new();
        let mut levels = self.block_levels();
        // shuffle levels so position and height are independent
        for i in (1..levels.len()).rev() {
            let j = rng.random_range(0..=i);
            levels.swap(i, j);
        }
        for level in levels {
            for _attempt in 0..200 {
                let h = ((rng.random_range(fmin..=fmax) * rows as f64).round() as usize).clamp(1, rows);
                let w = ((rng.random_range(fmin..=fmax) * cols as f64).round() as usize).clamp(1, cols);
                let r0 = rng.random_range(0..=rows - h);
                let c0 = rng.random_range(0..=cols - w);
                let rect = [r0, c0, h, w];
                // keep a one-pixel gap between blocks
                let clash = placed
                    .iter()
                    .any(|p| r0 < p[0] + p[2] + 1 && p[0] < r0 + h + 1 && c0 < p[1] + p[3] + 1 && p[1] < c0 + w + 1);
                if !clash {
                    for r in r0..r0 + h {
                        for c in c0..c0 + w {
                            elevation.set(r, c, level);
                        }
                    }
                    placed.push(rect);
                    break;
                }
            }
        }
        let [dlo, dhi] = self.deformation_range;
        let deformation = Map2::from_fn(rows, cols, |r, c| {
            let fr = if rows > 1 { r as f64 / (rows - 1) as f64 } else { 0.0 };
            let fc = if cols > 1 { c as f64 / (cols - 1) as f64 } else { 0.0 };
            dlo + (dhi - dlo) * 0.5 * (fr + fc)
        });
        ParameterMaps::new(elevation, deformation)
    }
}
