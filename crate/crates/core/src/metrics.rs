//! Residual statistics against ground truth and coherence histograms.
//!
//! SDs use the population convention (divide by `n`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::CoherenceMap;
use crate::insar::{Map2, ParameterMaps};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges spanning `[0, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts normalized to a density over `[0, 1]`.
    pub fn pdf(&self) -> Vec<f64> {
        let total = self.total() as f64;
        if total == 0.0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().zip(self.edges.windows(2)).map(|(&c, e)| c as f64 / total / (e[1] - e[0])).collect()
    }
}

/// Median and median absolute deviation of a residual set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobustStats {
    pub median: f64,
    pub mad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub sd_deformation: f64,
    pub bias_deformation: f64,
    pub sd_elevation: f64,
    pub bias_elevation: f64,
    pub n_valid_pixels: usize,
    pub robust_deformation: RobustStats,
    pub robust_elevation: RobustStats,
    pub coherence_histogram: Option<Histogram>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn robust(values: &[f64]) -> RobustStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let med = median(&v);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    RobustStats { median: med, mad: median(&dev) }
}

fn residuals(est: &Map2, truth: &Map2, valid: &[bool]) -> Vec<f64> {
    est.data.iter().zip(&truth.data).zip(valid).filter_map(|((e, t), &ok)| ok.then_some(e - t)).collect()
}

/// Bias and SD of `est − truth` over pixels where `valid` is set (row-major).
pub fn residual_stats(est: &ParameterMaps, truth: &ParameterMaps, valid: &[bool]) -> Result<EvalSummary> {
    if est.shape() != truth.shape() {
        return Err(Error::invalid(format!(
            "estimate {:?} and reference {:?} shapes differ",
            est.shape(),
            truth.shape()
        )));
    }
    if valid.len() != est.elevation.data.len() {
        return Err(Error::invalid("valid mask length does not match maps"));
    }
    let n = valid.iter().filter(|&&v| v).count();
    if n == 0 {
        return Err(Error::invalid("valid mask is empty"));
    }
    let rd = residuals(&est.deformation, &truth.deformation, valid);
    let re = residuals(&est.elevation, &truth.elevation, valid);
    let (bias_deformation, sd_deformation) = mean_sd(&rd);
    let (bias_elevation, sd_elevation) = mean_sd(&re);
    Ok(EvalSummary {
        sd_deformation,
        bias_deformation,
        sd_elevation,
        bias_elevation,
        n_valid_pixels: n,
        robust_deformation: robust(&rd),
        robust_elevation: robust(&re),
        coherence_histogram: None,
    })
}

impl EvalSummary {
    /// Attaches a histogram of `coherence` over the same valid pixels.
    pub fn with_coherence(mut self, coherence: &CoherenceMap, valid: &[bool], bins: usize) -> Result<Self> {
        let values: Vec<f64> = coherence.values().iter().zip(valid).filter_map(|(&c, &ok)| ok.then_some(c)).collect();
        self.coherence_histogram = Some(histogram(&values, bins)?);
        Ok(self)
    }
}

fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {bins}")));
    }
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let idx = ((v.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Equal-width histogram over `[0, 1]`; a value of exactly 1 falls in the last bin.
pub fn coherence_histogram(c: &CoherenceMap, bins: usize) -> Result<Histogram> {
    histogram(c.values(), bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn maps(rows: usize, cols: usize, seed: u64) -> ParameterMaps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ParameterMaps::new(
            Map2::from_fn(rows, cols, |_, _| rng.random_range(-100.0..100.0)),
            Map2::from_fn(rows, cols, |_, _| rng.random_range(-15.0..15.0)),
        )
        .unwrap()
    }

    #[test]
    fn identical_maps() {
        let m = maps(4, 5, 1);
        let s = residual_stats(&m, &m, &[true; 20]).unwrap();
        assert_eq!((s.sd_deformation, s.bias_deformation, s.sd_elevation, s.bias_elevation), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(s.n_valid_pixels, 20);
    }

    #[test]
    fn constant_offset() {
        let m = maps(4, 5, 2);
        let shifted = ParameterMaps::new(
            Map2::from_fn(4, 5, |r, c| m.elevation.get(r, c) + 2.0),
            Map2::from_fn(4, 5, |r, c| m.deformation.get(r, c) + 2.0),
        )
        .unwrap();
        let s = residual_stats(&shifted, &m, &[true; 20]).unwrap();
        assert!((s.bias_elevation - 2.0).abs() < 1e-12 && s.sd_elevation < 1e-12);
        assert!((s.bias_deformation - 2.0).abs() < 1e-12 && s.sd_deformation < 1e-12);
    }

    #[test]
    fn translation_consistency() {
        let est = maps(6, 6, 3);
        let truth = maps(6, 6, 4);
        let mut valid = vec![true; 36];
        valid[5] = false;
        let base = residual_stats(&est, &truth, &valid).unwrap();
        let c = 3.25;
        let moved = ParameterMaps::new(
            Map2::from_fn(6, 6, |r, k| est.elevation.get(r, k) + c),
            Map2::from_fn(6, 6, |r, k| est.deformation.get(r, k) + c),
        )
        .unwrap();
        let s = residual_stats(&moved, &truth, &valid).unwrap();
        assert!((s.bias_elevation - base.bias_elevation - c).abs() < 1e-9);
        assert!((s.sd_elevation - base.sd_elevation).abs() < 1e-9);
        assert!((s.bias_deformation - base.bias_deformation - c).abs() < 1e-9);
        assert!((s.sd_deformation - base.sd_deformation).abs() < 1e-9);
        assert_eq!(s.n_valid_pixels, 35);
    }

    #[test]
    fn population_sd() {
        let truth = ParameterMaps::zeros(1, 4);
        let est = ParameterMaps::new(Map2::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap(), Map2::filled(1, 4, 0.0))
            .unwrap();
        let s = residual_stats(&est, &truth, &[true; 4]).unwrap();
        assert!((s.sd_elevation - 1.25f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.robust_elevation.median, 2.5);
        assert_eq!(s.robust_elevation.mad, 1.0);
    }

    #[test]
    fn errors() {
        let m = maps(2, 2, 5);
        assert!(residual_stats(&m, &m, &[false; 4]).is_err());
        assert!(residual_stats(&m, &maps(2, 3, 5), &[true; 4]).is_err());
        assert!(residual_stats(&m, &m, &[true; 3]).is_err());
    }

    #[test]
    fn histogram_of_constant_one() {
        let c = CoherenceMap(Map2::filled(3, 3, 1.0));
        let h = coherence_histogram(&c, 10).unwrap();
        assert_eq!(h.counts[9], 9);
        assert_eq!(h.total(), 9);
        assert!(coherence_histogram(&c, 1).is_err());
        let pdf = h.pdf();
        assert!((pdf.iter().sum::<f64>() / 10.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_values_give_flat_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = CoherenceMap(Map2::from_fn(100, 100, |_, _| rng.random_range(0.0..1.0)));
        let bins = 10;
        let h = coherence_histogram(&c, bins).unwrap();
        let expected = 10_000.0 / bins as f64;
        let chi2: f64 = h.counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 9 degrees of freedom
        assert!(chi2 < 27.88, "chi2 {chi2}");
    }

    #[test]
    fn histogram_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
        let a = coherence_histogram(&CoherenceMap(Map2::from_vec(5, 10, v.clone()).unwrap()), 7).unwrap();
        v.reverse();
        v.swap(3, 17);
        let b = coherence_histogram(&CoherenceMap(Map2::from_vec(5, 10, v).unwrap()), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_counts_match_valid_pixels() {
        let m = maps(3, 3, 8);
        let mut valid = vec![true; 9];
        valid[0] = false;
        valid[4] = false;
        let c = CoherenceMap(Map2::filled(3, 3, 0.5));
        let s = residual_stats(&m, &m, &valid).unwrap().with_coherence(&c, &valid, 5).unwrap();
        assert_eq!(s.coherence_histogram.unwrap().total() as usize, s.n_valid_pixels);
    }
}
