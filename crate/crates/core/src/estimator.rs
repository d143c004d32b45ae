//! The outer iteration: coordinate-wise median start, Step-1 ℓp minimization,
//! Step-2 thresholded weighted mean, and the shrinking `c₂` radius. Also hosts
//! the baselines the benchmark compares against.

use serde::{Deserialize, Serialize};

use crate::datagen::LabeledSample;
use crate::error::{Error, Result};
use crate::linalg::{centered_dot, power_iteration, OutlierIndicator, PointSet, SpectralOptions};
use crate::solver::{reweight_lp, solve_step1_with, SolverOptions, StepProblem, StepSolution};
use crate::theory;

/// Upper limit on reweighted-ℓ1 rounds per Step 1.
pub const MAX_RW_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    /// Exponent of the ℓp objective, `0 < p ≤ 1`.
    pub p: f64,
    /// Step-2 threshold: points with `h_i > tau` are excluded from the mean.
    pub tau: f64,
    pub c1: f64,
    pub sigma: f64,
    /// Upper bound on the corruption level; defaults to `f(tau) − 1e-3`.
    pub eps_check: Option<f64>,
    /// Threshold re-applied to the last `h` for the returned estimate.
    pub final_threshold: Option<f64>,
    /// Initial radius `c₂⁽⁰⁾`; defaults to `3√d + 2c₁`.
    pub c2_init: Option<f64>,
    /// Accept `eps_check ≥ f(tau)` with a warning instead of an error.
    pub allow_breakdown_violation: bool,
    pub solver: SolverOptions,
    pub rw_delta: f64,
    /// Weighted-ℓ1 solves per Step 1 when `p < 1`, the first one unweighted.
    pub rw_rounds: usize,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            tau: 0.6,
            c1: 1.1,
            sigma: 1.0,
            eps_check: None,
            final_threshold: None,
            c2_init: None,
            allow_breakdown_violation: false,
            solver: SolverOptions::default(),
            rw_delta: 1e-2,
            rw_rounds: 5,
        }
    }
}

/// Resolved schedule constants for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eps_check: f64,
    pub gamma: f64,
    pub beta: f64,
    pub c2_0: f64,
    /// Iteration budget `T`.
    pub max_t: usize,
}

impl AlgoConfig {
    /// Checks ranges and resolves the schedule for dimension `d`. Returns any
    /// warnings raised by an opted-in breakdown violation.
    pub fn schedule(&self, d: usize) -> Result<(Schedule, Vec<String>)> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::parameter(format!(
                "p must lie in (0, 1], got {}",
                self.p
            )));
        }
        if !(self.c1 >= 1.0) || !self.c1.is_finite() {
            return Err(Error::parameter(format!(
                "c1 must be >= 1, got {}",
                self.c1
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::parameter(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if let Some(thr) = self.final_threshold {
            if !(thr > 0.0 && thr <= 1.0) {
                return Err(Error::parameter(format!(
                    "final threshold must lie in (0, 1], got {thr}"
                )));
            }
        }
        if !(self.rw_delta > 0.0) {
            return Err(Error::parameter(format!(
                "rw_delta must be > 0, got {}",
                self.rw_delta
            )));
        }
        if self.rw_rounds == 0 || self.rw_rounds > MAX_RW_ROUNDS {
            return Err(Error::parameter(format!(
                "rw_rounds must lie in 1..={MAX_RW_ROUNDS}, got {}",
                self.rw_rounds
            )));
        }
        self.solver.validate()?;
        let breakdown = theory::f_tau(self.tau)?;
        let eps_check = self.eps_check.unwrap_or(breakdown - 1e-3);
        let c2_0 = self
            .c2_init
            .unwrap_or(3.0 * (d as f64).sqrt() + 2.0 * self.c1);
        if !(c2_0 > 0.0) || !c2_0.is_finite() {
            return Err(Error::parameter(format!("c2_init must be > 0, got {c2_0}")));
        }
        let mut warnings = Vec::new();
        let gamma = theory::gamma(eps_check, self.tau)?;
        let beta = theory::beta(eps_check, self.tau, self.c1)?;
        let max_t = if eps_check < breakdown {
            theory::schedule_t(c2_0, eps_check, self.tau, self.c1)?
        } else if self.allow_breakdown_violation {
            warnings.push(format!(
                "eps_check={eps_check} is not below the breakdown point f({})={breakdown:.6}; \
                 the radius cannot shrink, running a single iteration",
                self.tau
            ));
            1
        } else {
            return Err(Error::parameter(format!(
                "eps_check={eps_check} must be below the breakdown point f({})={breakdown:.6}",
                self.tau
            )));
        };
        Ok((
            Schedule {
                eps_check,
                gamma,
                beta,
                c2_0,
                max_t,
            },
            warnings,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxT,
    C2NonDecrease,
    SolverFailure,
    EmptySupport,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::MaxT => "max_T",
            Termination::C2NonDecrease => "c2_non_decrease",
            Termination::SolverFailure => "solver_failure",
            Termination::EmptySupport => "empty_support",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One Step-1 solve at iterate `x⁽ᵗ⁾` with radius `c₂⁽ᵗ⁾`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub c2: f64,
    /// `‖h⁽ᵗ⁾‖₁`.
    pub step1_l1: f64,
    pub residual: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoTrace {
    pub iterates: Vec<IterRecord>,
    pub final_x: Vec<f64>,
    pub final_h: OutlierIndicator,
    pub terminated_by: Termination,
    pub schedule: Schedule,
    pub warnings: Vec<String>,
    /// Operator applications spent in power iteration over the whole run.
    pub power_iters: usize,
}

impl AlgoTrace {
    pub fn c2_trace(&self) -> Vec<f64> {
        self.iterates.iter().map(|r| r.c2).collect()
    }
}

/// Per-coordinate median; even counts average the two middle order statistics.
pub fn coordinate_wise_median(points: &PointSet) -> Vec<f64> {
    let n = points.n();
    let mut col = vec![0.0; n];
    (0..points.d())
        .map(|j| {
            for (c, row) in col.iter_mut().zip(points.rows()) {
                *c = row[j];
            }
            let mid = n / 2;
            let (left, upper, _) = col.select_nth_unstable_by(mid, f64::total_cmp);
            let upper = *upper;
            if n % 2 == 1 {
                upper
            } else {
                let lower = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                0.5 * (lower + upper)
            }
        })
        .collect()
}

pub fn sample_mean(points: &PointSet) -> Vec<f64> {
    let mut mean = vec![0.0; points.d()];
    for row in points.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let n = points.n() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// `Σ (1 − h_i) 1{h_i ≤ τ} y_i / Σ (1 − h_i) 1{h_i ≤ τ}`, or `None` when the
/// thresholded support carries no weight.
pub fn step2_update(points: &PointSet, h: &OutlierIndicator, tau: f64) -> Result<Option<Vec<f64>>> {
    if h.len() != points.n() {
        return Err(Error::contract(format!(
            "indicator has length {}, expected {}",
            h.len(),
            points.n()
        )));
    }
    let mut acc = vec![0.0; points.d()];
    let mut total = 0.0;
    for (row, &hi) in points.rows().zip(h.as_slice()) {
        if hi > tau {
            continue;
        }
        let w = 1.0 - hi;
        if w == 0.0 {
            continue;
        }
        total += w;
        for (a, x) in acc.iter_mut().zip(row) {
            *a += w * x;
        }
    }
    if total <= 0.0 {
        return Ok(None);
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(Some(acc))
}

fn solve_step(
    points: &PointSet,
    center: &[f64],
    bound: f64,
    cfg: &AlgoConfig,
    power_iters: &mut usize,
) -> Result<StepSolution> {
    let mut sol = solve_step1_with(&StepProblem::l1(points, center, bound)?, &cfg.solver)?;
    *power_iters += sol.power_iters;
    if cfg.p < 1.0 {
        for _ in 1..cfg.rw_rounds {
            if !sol.feasible {
                break;
            }
            let u = reweight_lp(&sol.h, cfg.p, cfg.rw_delta)?;
            let next = solve_step1_with(&StepProblem::new(points, center, bound, u)?, &cfg.solver)?;
            *power_iters += next.power_iters;
            sol = next;
        }
    }
    Ok(sol)
}

/// Runs the full estimator on `points`.
pub fn run_algorithm1(points: &PointSet, cfg: &AlgoConfig) -> Result<AlgoTrace> {
    let (schedule, warnings) = cfg.schedule(points.d())?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let n = points.n() as f64;
    let sigma2 = cfg.sigma * cfg.sigma;
    let mut power_iters = 0;

    let mut x = coordinate_wise_median(points);
    let mut c2 = schedule.c2_0;
    let mut t = 0;
    let mut iterates = Vec::new();
    let mut last_h;
    let terminated_by = loop {
        let bound = (cfg.c1 * cfg.c1 + c2 * c2) * sigma2 * n;
        let sol = solve_step(points, &x, bound, cfg, &mut power_iters)?;
        log::debug!(
            "t={t} c2={c2:.4} |h|_1={:.3} residual={:.2e} sweeps={}",
            sol.h.l1(),
            sol.residual,
            sol.sweeps
        );
        iterates.push(IterRecord {
            t,
            x: x.clone(),
            c2,
            step1_l1: sol.h.l1(),
            residual: sol.residual,
            sweeps: sol.sweeps,
        });
        let feasible = sol.feasible;
        last_h = sol.h;
        if !feasible {
            break Termination::SolverFailure;
        }
        match step2_update(points, &last_h, cfg.tau)? {
            Some(next) => x = next,
            None => break Termination::EmptySupport,
        }
        let c2_next = schedule.gamma * c2 + schedule.beta;
        t += 1;
        if t >= schedule.max_t {
            break Termination::MaxT;
        }
        if !(c2_next < c2) {
            break Termination::C2NonDecrease;
        }
        c2 = c2_next;
    };

    let mut final_x = x;
    if let (Some(thr), Termination::MaxT | Termination::C2NonDecrease) =
        (cfg.final_threshold, terminated_by)
    {
        if let Some(xt) = step2_update(points, &last_h, thr)? {
            final_x = xt;
        }
    }
    Ok(AlgoTrace {
        iterates,
        final_x,
        final_h: last_h,
        terminated_by,
        schedule,
        warnings,
        power_iters,
    })
}

/// Illustrative spectral filter: while the top eigenvalue of the scatter
/// matrix around the survivors' mean exceeds `c²σ²·(survivor count)`, drop
/// the survivor with the largest squared projection on the top eigenvector.
pub fn simple_filter_baseline(
    points: &PointSet,
    sigma: f64,
    c: f64,
    max_rounds: usize,
) -> Result<Vec<f64>> {
    if !(c > 1.0) {
        return Err(Error::parameter(format!(
            "filter constant c must be > 1, got {c}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::parameter(format!("sigma must be > 0, got {sigma}")));
    }
    let n = points.n();
    let mut w = vec![1.0; n];
    let mut active = n;
    let mut warm: Option<Vec<f64>> = None;
    let opts = SpectralOptions::default();
    let mean_of = |w: &[f64]| {
        let mut m = vec![0.0; points.d()];
        for (row, _) in points.rows().zip(w).filter(|(_, &wi)| wi > 0.0) {
            for (a, x) in m.iter_mut().zip(row) {
                *a += x;
            }
        }
        m
    };
    for _ in 0..max_rounds {
        let mut mean = mean_of(&w);
        mean.iter_mut().for_each(|m| *m /= active as f64);
        let top = power_iteration(points, &w, &mean, opts, warm.as_deref());
        if top.value <= c * c * sigma * sigma * active as f64 {
            break;
        }
        let worst = points
            .rows()
            .zip(&w)
            .enumerate()
            .filter(|(_, (_, &wi))| wi > 0.0)
            .map(|(i, (row, _))| {
                let p = centered_dot(row, &mean, &top.vector);
                (i, p * p)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i);
        match worst {
            Some(i) => {
                w[i] = 0.0;
                active -= 1;
            }
            None => break,
        }
        if active == 0 {
            return Ok(coordinate_wise_median(points));
        }
        warm = Some(top.vector);
    }
    let mut mean = mean_of(&w);
    mean.iter_mut().for_each(|m| *m /= active as f64);
    Ok(mean)
}

/// `‖estimate − oracle_mean‖₂`.
pub fn recovery_error(estimate: &[f64], sample: &LabeledSample) -> Result<f64> {
    if estimate.len() != sample.oracle_mean.len() {
        return Err(Error::contract(format!(
            "estimate has length {}, expected {}",
            estimate.len(),
            sample.oracle_mean.len()
        )));
    }
    Ok(estimate
        .iter()
        .zip(&sample.oracle_mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}
