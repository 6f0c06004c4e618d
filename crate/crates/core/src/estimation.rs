//! Periodogram (PSI-style) estimation of elevation and deformation, and
//! temporal coherence.
//!
//! For a pixel with samples `g_k`, the periodogram is
//! `ξ(s, p) = |(1/K) Σ_k u_k · exp(+j(a_k·s + c_k·p))|` with `u_k = g_k/|g_k|`
//! and `(a_k, c_k)` from [`InSARGeometry::phase_coefficients`]. Zero-modulus
//! samples are skipped and `K` counts only the remaining ones. Temporal
//! coherence is the same statistic evaluated at given maps.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::insar::{InSARGeometry, Map2, ParameterMaps};
use crate::tensor::ComplexTensor3;

/// Search grid over elevation (m) and deformation (mm/year or mm).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchGrid {
    pub s_min: f64,
    pub s_max: f64,
    pub s_step: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub p_step: f64,
    /// A second pass over `±1` coarse step around the coarse argmax, with steps
    /// divided by this factor. `None` disables refinement.
    pub refine: Option<usize>,
    /// Use `g_k` weighted by amplitude instead of unit phasors.
    pub amplitude_weighted: bool,
    /// Upper bound on coarse grid nodes.
    pub max_nodes: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self::for_deformation_range(-15.0, 15.0)
    }
}

impl SearchGrid {
    /// Elevation in `[-120, 120]` m at 1 m, deformation over 1.5× the given
    /// range at 0.5 mm, one refinement pass at 10× finer steps.
    pub fn for_deformation_range(lo: f64, hi: f64) -> Self {
        let center = 0.5 * (lo + hi);
        let half = 0.75 * (hi - lo).abs();
        Self {
            s_min: -120.0,
            s_max: 120.0,
            s_step: 1.0,
            p_min: center - half,
            p_max: center + half,
            p_step: 0.5,
            refine: Some(10),
            amplitude_weighted: false,
            max_nodes: 4_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lo, hi, step) in
            [("s", self.s_min, self.s_max, self.s_step), ("p", self.p_min, self.p_max, self.p_step)]
        {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("{name} grid needs min < max, got [{lo}, {hi}]")));
            }
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::invalid(format!("{name} grid step must be > 0, got {step}")));
            }
        }
        if self.refine == Some(0) {
            return Err(Error::invalid("refinement factor must be >= 1"));
        }
        let nodes = self.s_nodes().len().saturating_mul(self.p_nodes().len());
        if nodes > self.max_nodes {
            return Err(Error::invalid(format!("grid has {nodes} nodes, above the cap of {}", self.max_nodes)));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    pub fn s_nodes(&self) -> Vec<f64> {
        Self::axis(self.s_min, self.s_max, self.s_step)
    }

    pub fn p_nodes(&self) -> Vec<f64> {
        Self::axis(self.p_min, self.p_max, self.p_step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelEstimate {
    pub elevation: f64,
    pub deformation: f64,
    pub coherence: f64,
    /// False when the pixel had no nonzero samples.
    pub valid: bool,
}

impl PixelEstimate {
    const INVALID: Self = Self { elevation: 0.0, deformation: 0.0, coherence: 0.0, valid: false };
}

/// Per-pixel temporal coherence, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceMap(pub Map2);

impl CoherenceMap {
    pub fn values(&self) -> &[f64] {
        &self.0.data
    }

    pub fn mean(&self) -> f64 {
        let v = self.values();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapEstimate {
    pub maps: ParameterMaps,
    pub coherence: CoherenceMap,
    /// Row-major validity flags.
    pub valid: Vec<bool>,
}

/// Normalized samples and their count; `None` when every sample is zero.
fn normalize(samples: &[Complex64], weighted: bool) -> Option<(Vec<Complex64>, f64)> {
    let mut out = Vec::with_capacity(samples.len());
    let mut norm = 0.0;
    for z in samples {
        let r = z.norm();
        if r > 0.0 && r.is_finite() {
            if weighted {
                out.push(*z);
                norm += r;
            } else {
                out.push(z / r);
                norm += 1.0;
            }
        } else {
            out.push(Complex64::new(0.0, 0.0));
        }
    }
    (norm > 0.0).then_some((out, norm))
}

/// Ordering used for ties: smaller `|s|`, then smaller `|p|`; earlier nodes win remaining ties.
fn beats(xi: f64, s: f64, p: f64, best: &(f64, f64, f64)) -> bool {
    if xi != best.0 {
        return xi > best.0;
    }
    (s.abs(), p.abs()) < (best.1.abs(), best.2.abs())
}

/// Precomputed steering phasors for one geometry and grid.
pub struct Periodogram<'a> {
    geom: &'a InSARGeometry,
    grid: &'a SearchGrid,
    a: Vec<f64>,
    c: Vec<f64>,
    s_nodes: Vec<f64>,
    p_nodes: Vec<f64>,
    /// `exp(j a_k s_i)`, indexed `[i * K + k]`.
    steer_s: Vec<Complex64>,
    /// `exp(j c_k p_j)`, indexed `[j * K + k]`.
    steer_p: Vec<Complex64>,
}

impl<'a> Periodogram<'a> {
    pub fn new(geom: &'a InSARGeometry, grid: &'a SearchGrid) -> Result<Self> {
        geom.validate()?;
        grid.validate()?;
        if geom.num_images() < 2 {
            return Err(Error::invalid("periodogram needs at least 2 images"));
        }
        let (a, c) = geom.phase_coefficients();
        let s_nodes = grid.s_nodes();
        let p_nodes = grid.p_nodes();
        let steer = |nodes: &[f64], coef: &[f64]| -> Vec<Complex64> {
            nodes.iter().flat_map(|&x| coef.iter().map(move |&k| Complex64::from_polar(1.0, k * x))).collect()
        };
        Ok(Self { steer_s: steer(&s_nodes, &a), steer_p: steer(&p_nodes, &c), geom, grid, a, c, s_nodes, p_nodes })
    }

    pub fn geometry(&self) -> &InSARGeometry {
        self.geom
    }

    pub fn estimate(&self, samples: &[Complex64]) -> Result<PixelEstimate> {
        let k = self.a.len();
        if samples.len() != k {
            return Err(Error::invalid(format!("pixel has {} samples, geometry has {k} images", samples.len())));
        }
        let Some((u, norm)) = normalize(samples, self.grid.amplitude_weighted) else {
            return Ok(PixelEstimate::INVALID);
        };

        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let mut w = vec![Complex64::new(0.0, 0.0); k];
        for (i, &s) in self.s_nodes.iter().enumerate() {
            let es = &self.steer_s[i * k..(i + 1) * k];
            for ((wv, uv), e) in w.iter_mut().zip(&u).zip(es) {
                *wv = uv * e;
            }
            for (j, &p) in self.p_nodes.iter().enumerate() {
                let ep = &self.steer_p[j * k..(j + 1) * k];
                let mut acc = Complex64::new(0.0, 0.0);
                for (wv, e) in w.iter().zip(ep) {
                    acc += wv * e;
                }
                let xi = acc.norm() / norm;
                if beats(xi, s, p, &best) {
                    best = (xi, s, p);
                }
            }
        }

        if let Some(f) = self.grid.refine {
            if f > 1 {
                let (_, s0, p0) = best;
                let ds = self.grid.s_step / f as f64;
                let dp = self.grid.p_step / f as f64;
                let half = f as i64;
                for di in -half..=half {
                    let s = s0 + di as f64 * ds;
                    for dj in -half..=half {
                        let p = p0 + dj as f64 * dp;
                        let xi = self.xi_at(&u, norm, s, p);
                        if beats(xi, s, p, &best) {
                            best = (xi, s, p);
                        }
                    }
                }
            }
        }

        Ok(PixelEstimate { elevation: best.1, deformation: best.2, coherence: best.0.clamp(0.0, 1.0), valid: true })
    }

    fn xi_at(&self, u: &[Complex64], norm: f64, s: f64, p: f64) -> f64 {
        model_fit(u, &self.a, &self.c, s, p) / norm
    }
}

fn model_fit(u: &[Complex64], a: &[f64], c: &[f64], s: f64, p: f64) -> f64 {
    u.iter()
        .zip(a.iter().zip(c))
        .map(|(uv, (ak, ck))| uv * Complex64::from_polar(1.0, ak * s + ck * p))
        .sum::<Complex64>()
        .norm()
}

/// Grid-search estimate for one pixel's time series.
pub fn periodogram_pixel(samples: &[Complex64], geom: &InSARGeometry, grid: &SearchGrid) -> Result<PixelEstimate> {
    Periodogram::new(geom, grid)?.estimate(samples)
}

fn check_stack(stack: &ComplexTensor3, geom: &InSARGeometry) -> Result<()> {
    if stack.dims()[2] != geom.num_images() {
        return Err(Error::invalid(format!(
            "stack has {} images, geometry has {}",
            stack.dims()[2],
            geom.num_images()
        )));
    }
    Ok(())
}

/// Runs [`periodogram_pixel`] on every spatial pixel (in parallel, output in row-major order).
pub fn estimate_maps(stack: &ComplexTensor3, geom: &InSARGeometry, grid: &SearchGrid) -> Result<MapEstimate> {
    check_stack(stack, geom)?;
    let pg = Periodogram::new(geom, grid)?;
    let [rows, cols, _] = stack.dims();
    let estimates: Vec<PixelEstimate> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / cols, idx % cols);
            pg.estimate(&stack.fiber3(r, c))
        })
        .collect::<Result<_>>()?;
    let elevation = Map2::from_vec(rows, cols, estimates.iter().map(|e| e.elevation).collect())?;
    let deformation = Map2::from_vec(rows, cols, estimates.iter().map(|e| e.deformation).collect())?;
    let coherence = Map2::from_vec(rows, cols, estimates.iter().map(|e| e.coherence).collect())?;
    Ok(MapEstimate {
        maps: ParameterMaps::new(elevation, deformation)?,
        coherence: CoherenceMap(coherence),
        valid: estimates.iter().map(|e| e.valid).collect(),
    })
}

/// Coherence of the stack with the model evaluated at `maps`, pixel by pixel.
/// Pixels with no nonzero samples get coherence 0.
pub fn temporal_coherence(stack: &ComplexTensor3, maps: &ParameterMaps, geom: &InSARGeometry) -> Result<CoherenceMap> {
    geom.validate()?;
    check_stack(stack, geom)?;
    let [rows, cols, _] = stack.dims();
    if maps.shape() != (rows, cols) {
        return Err(Error::invalid(format!(
            "maps {:?} do not match stack spatial dims {:?}",
            maps.shape(),
            (rows, cols)
        )));
    }
    let (a, c) = geom.phase_coefficients();
    let values: Vec<f64> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let (r, col) = (idx / cols, idx % cols);
            match normalize(&stack.fiber3(r, col), false) {
                None => 0.0,
                Some((u, norm)) => {
                    let s = maps.elevation.get(r, col);
                    let p = maps.deformation.get(r, col);
                    (model_fit(&u, &a, &c, s, p) / norm).clamp(0.0, 1.0)
                }
            }
        })
        .collect();
    Ok(CoherenceMap(Map2::from_vec(rows, cols, values)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::insar::{forward, Amplitude, BaselineSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pixel(geom: &InSARGeometry, s: f64, p: f64) -> Vec<Complex64> {
        let maps = ParameterMaps::new(Map2::filled(1, 1, s), Map2::filled(1, 1, p)).unwrap();
        forward(&maps, geom, &Amplitude::default()).unwrap().into_vec()
    }

    #[test]
    fn recovers_on_grid_truth() {
        let geom = BaselineSpec::default().generate(21).unwrap();
        let grid = SearchGrid::default();
        let est = periodogram_pixel(&pixel(&geom, 30.0, 5.0), &geom, &grid).unwrap();
        assert!(est.valid);
        assert_eq!(est.elevation, 30.0);
        assert_eq!(est.deformation, 5.0);
        assert!((est.coherence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_pixel_gives_zero_parameters() {
        let geom = BaselineSpec::default().generate(22).unwrap();
        let samples = vec![Complex64::from_polar(2.0, 0.4); 15];
        let est = periodogram_pixel(&samples, &geom, &SearchGrid::default()).unwrap();
        assert_eq!((est.elevation, est.deformation), (0.0, 0.0));
        assert!((est.coherence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_pixel_is_invalid() {
        let geom = BaselineSpec::default().generate(22).unwrap();
        let est = periodogram_pixel(&[Complex64::new(0.0, 0.0); 15], &geom, &SearchGrid::default()).unwrap();
        assert!(!est.valid);
        assert_eq!(est.coherence, 0.0);
    }

    #[test]
    fn invariances() {
        let geom = BaselineSpec::default().generate(23).unwrap();
        let grid = SearchGrid { refine: None, ..SearchGrid::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut base = pixel(&geom, -42.0, 3.5);
        for z in base.iter_mut() {
            *z *= Complex64::from_polar(1.0, rng.random_range(-0.6..0.6));
        }
        let est = periodogram_pixel(&base, &geom, &grid).unwrap();
        let rotated: Vec<_> = base.iter().map(|z| z * Complex64::from_polar(1.0, 1.234)).collect();
        let scaled: Vec<_> = base.iter().map(|z| z * rng.random_range(0.1..5.0)).collect();
        for other in [rotated, scaled] {
            let e = periodogram_pixel(&other, &geom, &grid).unwrap();
            assert_eq!((e.elevation, e.deformation), (est.elevation, est.deformation));
            assert!((e.coherence - est.coherence).abs() < 1e-12);
        }
    }

    #[test]
    fn finer_grid_never_lowers_maximum() {
        let geom = BaselineSpec::default().generate(24).unwrap();
        let coarse = SearchGrid { refine: None, s_step: 2.0, p_step: 1.0, ..SearchGrid::default() };
        let fine = SearchGrid { s_step: 1.0, p_step: 0.5, ..coarse.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let samples: Vec<_> = (0..15).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..6.3))).collect();
            let a = periodogram_pixel(&samples, &geom, &coarse).unwrap();
            let b = periodogram_pixel(&samples, &geom, &fine).unwrap();
            assert!(b.coherence >= a.coherence - 1e-12);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(SearchGrid::default().validate().is_ok());
        assert!(SearchGrid { s_step: 0.0, ..SearchGrid::default() }.validate().is_err());
        assert!(SearchGrid { p_min: 5.0, p_max: 5.0, ..SearchGrid::default() }.validate().is_err());
        assert!(SearchGrid { max_nodes: 10, ..SearchGrid::default() }.validate().is_err());
        let g = SearchGrid::default();
        assert_eq!(g.s_nodes().len(), 241);
        assert_eq!(g.p_nodes().len(), 91);
        assert_eq!(g.p_nodes()[0], -22.5);
    }

    #[test]
    fn needs_two_images() {
        let geom = InSARGeometry::new(0.031, 7e5, vec![1.0], vec![0.1], crate::insar::MotionModel::Linear).unwrap();
        assert!(periodogram_pixel(&[Complex64::new(1.0, 0.0)], &geom, &SearchGrid::default()).is_err());
    }

    #[test]
    fn maps_round_trip_and_coherence() {
        let geom = BaselineSpec::default().generate(25).unwrap();
        let truth = ParameterMaps::new(
            Map2::from_fn(3, 4, |r, c| -20.0 + 10.0 * r as f64 + c as f64),
            Map2::from_fn(3, 4, |r, c| -4.0 + 0.5 * (r * 4 + c) as f64),
        )
        .unwrap();
        let stack = forward(&truth, &geom, &Amplitude::default()).unwrap();
        let est = estimate_maps(&stack, &geom, &SearchGrid::default()).unwrap();
        assert_eq!(est.maps, truth);
        assert!(est.valid.iter().all(|&v| v));
        let coh = temporal_coherence(&stack, &truth, &geom).unwrap();
        assert!(coh.values().iter().all(|&c| (c - 1.0).abs() < 1e-12));

        let zero = ComplexTensor3::zeros([2, 2, 15]);
        let est = estimate_maps(&zero, &geom, &SearchGrid::default()).unwrap();
        assert!(est.valid.iter().all(|&v| !v));
    }

    #[test]
    fn coherence_at_argmax_dominates_grid_nodes() {
        let geom = BaselineSpec::default().generate(26).unwrap();
        let grid = SearchGrid { refine: None, ..SearchGrid::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<_> = (0..15).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..6.3))).collect();
        let stack = ComplexTensor3::from_vec([1, 1, 15], samples).unwrap();
        let est = estimate_maps(&stack, &geom, &grid).unwrap();
        let at_est = temporal_coherence(&stack, &est.maps, &geom).unwrap().values()[0];
        for s in [-100.0, -7.0, 0.0, 55.0] {
            for p in [-20.0, 0.0, 12.5] {
                let m = ParameterMaps::new(Map2::filled(1, 1, s), Map2::filled(1, 1, p)).unwrap();
                assert!(temporal_coherence(&stack, &m, &geom).unwrap().values()[0] <= at_est + 1e-12);
            }
        }
    }
}
