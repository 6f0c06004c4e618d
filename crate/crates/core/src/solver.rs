//! ADMM solvers for robust low-rank tensor decomposition `G = X + E`.
//!
//! [`decompose_tvlr`] minimizes `α·TV(X) + β·Σ_n ‖X_(n)‖_* + γ·‖E‖_1` using the
//! splitting `X = Z`, `D(Z) = F`. [`decompose_lr`] is the same problem without
//! the TV term (`α = 0`), solved with the `Z`/`F` blocks removed.
//!
//! See `docs/solver.md` for the subproblem derivations and the thresholds used
//! in the mode-averaged SVT step.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    diff, diff_adjoint, nuclear_norm, soft_threshold_in_place, solve_z, svt, total_variation, DiffStack, FreqKernel,
};
use crate::tensor::ComplexTensor3;

/// Tensor order used in the `βN/μ` SVT threshold.
const ORDER: f64 = 3.0;

/// `γ = 100 / sqrt(I1·I2)`.
pub fn default_gamma(dims: [usize; 3]) -> f64 {
    100.0 / ((dims[0] * dims[1]) as f64).sqrt()
}

/// Solver parameters.
///
/// `alpha` is usually chosen in `[0, 0.2]` and `beta` in `[0, 10]`; the defaults
/// (`alpha = 0.1`, `beta = 2`) sit inside those ranges. `gamma` is `None` when it
/// should follow [`default_gamma`] for the tensor being solved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Option<f64>,
    pub mu0: f64,
    pub eta: f64,
    pub mu_max: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub mode_weights: [f64; 3],
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 2.0,
            gamma: None,
            mu0: 1e-2,
            eta: 1.1,
            mu_max: 1e10,
            max_iter: 200,
            tol: 1e-6,
            mode_weights: [1.0 / 3.0; 3],
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be finite and > 0, got {g}"));
            }
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return bad(format!("mu0 must be finite and > 0, got {}", self.mu0));
        }
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and > 1, got {}", self.eta));
        }
        if !(self.mu_max >= self.mu0 && self.mu_max.is_finite()) {
            return bad(format!("mu_max must be finite and >= mu0, got {}", self.mu_max));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be finite and > 0, got {}", self.tol));
        }
        let w = self.mode_weights;
        if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("mode_weights must be nonnegative and sum to 1, got {w:?}"));
        }
        Ok(())
    }

    /// `gamma`, or the dimension rule when unset.
    pub fn gamma_for(&self, dims: [usize; 3]) -> f64 {
        self.gamma.unwrap_or_else(|| default_gamma(dims))
    }
}

/// Objective terms evaluated at a solution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// `TV(X)`, anisotropic 3D total variation on complex moduli.
    pub tv: f64,
    /// `Σ_n ‖X_(n)‖_*`.
    pub nuclear: f64,
    /// `‖E‖_1`.
    pub l1: f64,
}

impl ObjectiveTerms {
    pub fn evaluate(x: &ComplexTensor3, e: &ComplexTensor3) -> Result<Self> {
        let mut nuclear = 0.0;
        for mode in 1..=3 {
            nuclear += nuclear_norm(&x.unfold(mode)?)?;
        }
        Ok(Self { tv: total_variation(x), nuclear, l1: e.l1_norm() })
    }

    pub fn weighted(&self, alpha: f64, beta: f64, gamma: f64) -> f64 {
        alpha * self.tv + beta * self.nuclear + gamma * self.l1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// `‖G − X − E‖_F / ‖G‖_F` after each iteration.
    pub primal_residuals: Vec<f64>,
    /// `‖X − Z‖_F / ‖X‖_F` after each iteration (zero for the low-rank-only solver).
    pub coupling_residuals: Vec<f64>,
    pub objective: ObjectiveTerms,
    pub gamma: f64,
    pub converged: bool,
}

impl SolverReport {
    pub fn final_primal_residual(&self) -> f64 {
        self.primal_residuals.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    /// Recovered outlier-free stack.
    pub x_hat: ComplexTensor3,
    /// Sparse outlier component.
    pub e_hat: ComplexTensor3,
    pub report: SolverReport,
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn check_finite(t: &ComplexTensor3, iteration: usize, stage: &'static str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical { iteration, stage, detail: "non-finite values produced".into() })
    }
}

/// Mode-averaged singular value thresholding:
/// `Σ_n w_n · fold_n(SVT_τ(unfold_n(a)))`.
pub fn mode_averaged_svt(a: &ComplexTensor3, tau: f64, weights: [f64; 3]) -> Result<ComplexTensor3> {
    let dims = a.dims();
    let mut out = ComplexTensor3::zeros(dims);
    for (mode, &w) in (1..=3).zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let folded = ComplexTensor3::fold(&svt(&a.unfold(mode)?, tau)?, mode, dims)?;
        for (o, v) in out.as_mut_slice().iter_mut().zip(folded.as_slice()) {
            *o += w * v;
        }
    }
    Ok(out)
}

fn input_norm(g: &ComplexTensor3) -> Result<f64> {
    let n = g.frobenius_norm();
    if n.is_finite() {
        Ok(n)
    } else {
        Err(Error::Numerical { iteration: 0, stage: "input", detail: "frobenius norm of the input overflows".into() })
    }
}

fn svt_stage(err: Error, iteration: usize) -> Error {
    match err {
        Error::SvdFailure { .. } => Error::Numerical { iteration, stage: "X update (svt)", detail: err.to_string() },
        other => other,
    }
}

/// TV-regularized robust low-rank decomposition.
///
/// Each iteration performs, with all working tensors starting at zero:
///
/// 1. `X ← Σ_n w_n fold_n(SVT_{βN/μ}(unfold_n(½(G − E + Z + (T1 − T2)/μ))))`
/// 2. `Z ← (μI + μD*D)⁻¹ (T2 − D*(T3) + μX + μD*(F))`
/// 3. `F ← R_{α/μ}(D(Z) + T3/μ)`
/// 4. `E ← R_{γ/μ}(G + T1/μ − X)`
/// 5. `T1 += μ(G − X − E)`, `T2 += μ(X − Z)`, `T3 += μ(D(Z) − F)`
/// 6. `μ ← min(ημ, μ_max)`
///
/// and stops once `‖G − X − E‖_F/‖G‖_F ≤ tol` or after `max_iter` iterations.
pub fn decompose_tvlr(g: &ComplexTensor3, cfg: &SolverConfig) -> Result<Decomposition> {
    cfg.validate()?;
    g.ensure_finite()?;
    let dims = g.dims();
    let gamma = cfg.gamma_for(dims);
    let kernel = FreqKernel::new(dims);
    let g_norm = input_norm(g)?;

    let mut x = ComplexTensor3::zeros(dims);
    let mut e = ComplexTensor3::zeros(dims);
    let mut z = ComplexTensor3::zeros(dims);
    let mut f = DiffStack::zeros(dims);
    let mut t1 = ComplexTensor3::zeros(dims);
    let mut t2 = ComplexTensor3::zeros(dims);
    let mut t3 = DiffStack::zeros(dims);
    let mut mu = cfg.mu0;

    let mut primal = Vec::with_capacity(cfg.max_iter);
    let mut coupling = Vec::with_capacity(cfg.max_iter);
    let mut converged = false;

    for it in 1..=cfg.max_iter {
        let inv_mu = 1.0 / mu;

        // X update
        let mut arg = ComplexTensor3::zeros(dims);
        for ((((a, gv), ev), zv), (p, q)) in arg
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(e.as_slice())
            .zip(z.as_slice())
            .zip(t1.as_slice().iter().zip(t2.as_slice()))
        {
            *a = 0.5 * (gv - ev + zv + (p - q) * inv_mu);
        }
        x = mode_averaged_svt(&arg, cfg.beta * ORDER * inv_mu, cfg.mode_weights).map_err(|err| svt_stage(err, it))?;
        check_finite(&x, it, "X update (svt)")?;

        // Z update: H = T2 + μX + D*(μF − T3)
        let mut lifted = f.clone();
        for (lc, tc) in lifted.components.iter_mut().zip(&t3.components) {
            for (l, t) in lc.as_mut_slice().iter_mut().zip(tc.as_slice()) {
                *l = mu * *l - t;
            }
        }
        let mut h = diff_adjoint(&lifted);
        for ((hv, tv), xv) in h.as_mut_slice().iter_mut().zip(t2.as_slice()).zip(x.as_slice()) {
            *hv += tv + mu * xv;
        }
        z = solve_z(&h, mu, &kernel)?;
        check_finite(&z, it, "Z update (fft solve)")?;

        // F update
        let dz = diff(&z);
        for ((fc, dc), tc) in f.components.iter_mut().zip(&dz.components).zip(&t3.components) {
            for ((fv, dv), tv) in fc.as_mut_slice().iter_mut().zip(dc.as_slice()).zip(tc.as_slice()) {
                *fv = dv + tv * inv_mu;
            }
            soft_threshold_in_place(fc.as_mut_slice(), cfg.alpha * inv_mu);
        }

        // E update
        for (((ev, gv), tv), xv) in e.as_mut_slice().iter_mut().zip(g.as_slice()).zip(t1.as_slice()).zip(x.as_slice()) {
            *ev = gv + tv * inv_mu - xv;
        }
        soft_threshold_in_place(e.as_mut_slice(), gamma * inv_mu);
        check_finite(&e, it, "E update (soft threshold)")?;

        // multipliers
        let mut res_sq = 0.0;
        for (((tv, gv), xv), ev) in t1.as_mut_slice().iter_mut().zip(g.as_slice()).zip(x.as_slice()).zip(e.as_slice()) {
            let r = gv - xv - ev;
            res_sq += r.norm_sqr();
            *tv += mu * r;
        }
        let mut cpl_sq = 0.0;
        for ((tv, xv), zv) in t2.as_mut_slice().iter_mut().zip(x.as_slice()).zip(z.as_slice()) {
            let r = xv - zv;
            cpl_sq += r.norm_sqr();
            *tv += mu * r;
        }
        for ((tc, dc), fc) in t3.components.iter_mut().zip(&dz.components).zip(&f.components) {
            for ((tv, dv), fv) in tc.as_mut_slice().iter_mut().zip(dc.as_slice()).zip(fc.as_slice()) {
                *tv += mu * (dv - fv);
            }
        }
        check_finite(&t1, it, "multiplier update")?;

        let r1 = relative(res_sq.sqrt(), g_norm);
        primal.push(r1);
        coupling.push(relative(cpl_sq.sqrt(), x.frobenius_norm()));
        log::trace!("tvlr iter {it}: mu={mu:.3e} primal={r1:.3e}");

        mu = (cfg.eta * mu).min(cfg.mu_max);
        if r1 <= cfg.tol {
            converged = true;
            break;
        }
    }

    let objective = ObjectiveTerms::evaluate(&x, &e)?;
    Ok(Decomposition {
        x_hat: x,
        e_hat: e,
        report: SolverReport {
            iterations: primal.len(),
            primal_residuals: primal,
            coupling_residuals: coupling,
            objective,
            gamma,
            converged,
        },
    })
}

/// Robust low-rank decomposition without the TV term.
///
/// `X ← Σ_n w_n fold_n(SVT_{βN/μ}(unfold_n(G − E + T1/μ)))`, then the same
/// `E`, `T1` and `μ` updates as [`decompose_tvlr`]. `cfg.alpha` is ignored.
pub fn decompose_lr(g: &ComplexTensor3, cfg: &SolverConfig) -> Result<Decomposition> {
    cfg.validate()?;
    g.ensure_finite()?;
    let dims = g.dims();
    let gamma = cfg.gamma_for(dims);
    let g_norm = input_norm(g)?;

    let mut x = ComplexTensor3::zeros(dims);
    let mut e = ComplexTensor3::zeros(dims);
    let mut t1 = ComplexTensor3::zeros(dims);
    let mut mu = cfg.mu0;

    let mut primal = Vec::with_capacity(cfg.max_iter);
    let mut converged = false;

    for it in 1..=cfg.max_iter {
        let inv_mu = 1.0 / mu;
        let arg = ComplexTensor3::from_vec(
            dims,
            g.as_slice()
                .iter()
                .zip(e.as_slice())
                .zip(t1.as_slice())
                .map(|((gv, ev), tv)| gv - ev + tv * inv_mu)
                .collect(),
        )?;
        x = mode_averaged_svt(&arg, cfg.beta * ORDER * inv_mu, cfg.mode_weights).map_err(|err| svt_stage(err, it))?;
        check_finite(&x, it, "X update (svt)")?;

        for (((ev, gv), tv), xv) in e.as_mut_slice().iter_mut().zip(g.as_slice()).zip(t1.as_slice()).zip(x.as_slice()) {
            *ev = gv + tv * inv_mu - xv;
        }
        soft_threshold_in_place(e.as_mut_slice(), gamma * inv_mu);
        check_finite(&e, it, "E update (soft threshold)")?;

        let mut res_sq = 0.0;
        for (((tv, gv), xv), ev) in t1.as_mut_slice().iter_mut().zip(g.as_slice()).zip(x.as_slice()).zip(e.as_slice()) {
            let r: Complex64 = gv - xv - ev;
            res_sq += r.norm_sqr();
            *tv += mu * r;
        }
        check_finite(&t1, it, "multiplier update")?;

        let r1 = relative(res_sq.sqrt(), g_norm);
        primal.push(r1);
        log::trace!("lr iter {it}: mu={mu:.3e} primal={r1:.3e}");

        mu = (cfg.eta * mu).min(cfg.mu_max);
        if r1 <= cfg.tol {
            converged = true;
            break;
        }
    }

    let objective = ObjectiveTerms::evaluate(&x, &e)?;
    let iterations = primal.len();
    Ok(Decomposition {
        x_hat: x,
        e_hat: e,
        report: SolverReport {
            iterations,
            primal_residuals: primal,
            coupling_residuals: vec![0.0; iterations],
            objective,
            gamma,
            converged,
        },
    })
}
