mod common;

use common::{random_tensor, rng};
use num_complex::Complex64;
use tvlr_core::pipeline::{decompose_tiled, extract_patch, plan_patches, Method, PatchRect};
use tvlr_core::solver::{decompose_lr, decompose_tvlr, SolverConfig};
use tvlr_core::ComplexTensor3;

/// Low-rank phase stack plus sparse spikes.
fn stack(dims: [usize; 3], seed: u64) -> ComplexTensor3 {
    let mut r = rng(seed);
    let noise = random_tensor(&mut r, dims);
    ComplexTensor3::from_fn(dims, |i, j, k| {
        let phase = 0.2 * i as f64 - 0.15 * j as f64 + 0.7 * k as f64;
        let spike = if (i * 7 + j * 3 + k) % 11 == 0 { noise[(i, j, k)] * 3.0 } else { Complex64::new(0.0, 0.0) };
        Complex64::from_polar(1.0, phase) + spike
    })
}

fn cfg() -> SolverConfig {
    SolverConfig { max_iter: 120, ..SolverConfig::default() }
}

#[test]
fn single_patch_equals_untiled() {
    let g = stack([14, 12, 5], 1);
    let layout = plan_patches((14, 12), 100, 100, 0).unwrap();
    for method in [Method::Tvlr, Method::Lr] {
        let tiled = decompose_tiled(&g, &layout, &cfg(), method, 1).unwrap();
        let direct = match method {
            Method::Tvlr => decompose_tvlr(&g, &cfg()).unwrap(),
            _ => decompose_lr(&g, &cfg()).unwrap(),
        };
        assert_eq!(tiled.x_hat, direct.x_hat);
        assert_eq!(tiled.e_hat, direct.e_hat);
        assert_eq!(tiled.patches[0].report.as_ref(), Some(&direct.report));
    }
}

#[test]
fn none_method_passes_stack_through() {
    let g = stack([10, 9, 3], 2);
    let layout = plan_patches((10, 9), 8, 8, 2).unwrap();
    let tiled = decompose_tiled(&g, &layout, &cfg(), Method::None, 1).unwrap();
    for (a, b) in tiled.x_hat.as_slice().iter().zip(g.as_slice()) {
        assert!((a - b).norm() <= 1e-15 * b.norm());
    }
    assert_eq!(tiled.e_hat.frobenius_norm(), 0.0);
    assert!(tiled.patches.iter().all(|p| p.report.is_none() && p.failure.is_none()));
}

#[test]
fn disjoint_patches_are_independent() {
    let g = stack([16, 20, 4], 3);
    let layout = plan_patches((16, 20), 16, 10, 0).unwrap();
    assert_eq!(layout.patches.len(), 2);
    let tiled = decompose_tiled(&g, &layout, &cfg(), Method::Tvlr, 1).unwrap();
    for rect in &layout.patches {
        let solo = decompose_tvlr(&extract_patch(&g, rect), &cfg()).unwrap();
        assert_eq!(extract_patch(&tiled.x_hat, rect), solo.x_hat);
        assert_eq!(extract_patch(&tiled.e_hat, rect), solo.e_hat);
    }
}

#[test]
fn overlap_is_averaged() {
    let g = stack([12, 24, 4], 4);
    let layout = plan_patches((12, 24), 12, 16, 8).unwrap();
    assert_eq!(
        layout.patches,
        vec![PatchRect { row0: 0, col0: 0, rows: 12, cols: 16 }, PatchRect { row0: 0, col0: 8, rows: 12, cols: 16 },]
    );
    let tiled = decompose_tiled(&g, &layout, &cfg(), Method::Tvlr, 1).unwrap();
    let left = decompose_tvlr(&extract_patch(&g, &layout.patches[0]), &cfg()).unwrap();
    let right = decompose_tvlr(&extract_patch(&g, &layout.patches[1]), &cfg()).unwrap();
    for k in 0..4 {
        for i in 0..12 {
            for j in 0..24 {
                let got = tiled.x_hat[(i, j, k)];
                let want = match j {
                    0..8 => left.x_hat[(i, j, k)],
                    8..16 => (left.x_hat[(i, j, k)] + right.x_hat[(i, j - 8, k)]) * 0.5,
                    _ => right.x_hat[(i, j - 8, k)],
                };
                assert!((got - want).norm() <= 1e-14 * (1.0 + want.norm()), "({i}, {j}, {k})");
            }
        }
    }
    assert!(tiled.x_hat.is_finite() && tiled.e_hat.is_finite());
}

#[test]
fn worker_count_does_not_change_output() {
    let g = stack([20, 18, 3], 5);
    let layout = plan_patches((20, 18), 8, 8, 3).unwrap();
    let one = decompose_tiled(&g, &layout, &cfg(), Method::Tvlr, 1).unwrap();
    let four = decompose_tiled(&g, &layout, &cfg(), Method::Tvlr, 4).unwrap();
    assert_eq!(one, four);
}

#[test]
fn per_patch_gamma_follows_patch_size() {
    let g = stack([20, 16, 3], 6);
    let layout = plan_patches((20, 16), 10, 16, 0).unwrap();
    let tiled = decompose_tiled(&g, &layout, &cfg(), Method::Tvlr, 1).unwrap();
    for p in &tiled.patches {
        let gamma = p.report.as_ref().unwrap().gamma;
        assert_eq!(gamma, 100.0 / ((p.rect.rows * p.rect.cols) as f64).sqrt());
    }
    let fixed = SolverConfig { gamma: Some(0.5), ..cfg() };
    let tiled = decompose_tiled(&g, &layout, &fixed, Method::Tvlr, 1).unwrap();
    assert!(tiled.patches.iter().all(|p| p.report.as_ref().unwrap().gamma == 0.5));
}

#[test]
fn failed_patch_falls_back_to_identity() {
    let mut g = stack([8, 16, 3], 7);
    // the right half's squared magnitudes overflow
    for k in 0..3 {
        for i in 0..8 {
            for j in 8..16 {
                g[(i, j, k)] *= 1e300;
            }
        }
    }
    let layout = plan_patches((8, 16), 8, 8, 0).unwrap();
    let tiled = decompose_tiled(&g, &layout, &cfg(), Method::Tvlr, 1).unwrap();
    assert_eq!(tiled.failed_patches(), 1);
    let bad = &tiled.patches[1];
    assert!(bad.failure.is_some() && bad.report.is_none());
    assert_eq!(extract_patch(&tiled.x_hat, &bad.rect), extract_patch(&g, &bad.rect));
    assert_eq!(extract_patch(&tiled.e_hat, &bad.rect).frobenius_norm(), 0.0);
    assert!(tiled.patches[0].failure.is_none());
}

#[test]
fn layout_must_match_stack() {
    let g = stack([8, 8, 2], 8);
    let layout = plan_patches((9, 8), 8, 8, 0).unwrap();
    assert!(decompose_tiled(&g, &layout, &cfg(), Method::Tvlr, 1).is_err());
}
