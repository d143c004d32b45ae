//! Step-1 solver: minimize `Σ u_i h_i` over `h ∈ [0, 1]ⁿ` subject to
//! `λ_max(Σ (1 − h_i)(y_i − x)(y_i − x)ᵀ) ≤ bound`.
//!
//! In terms of `w = 1 − h` this is the packing SDP `max uᵀw` with
//! `w_i ≥ 0`, `Σ w_i e_i e_iᵀ ⪯ I` and `Σ w_i a_i a_iᵀ ⪯ bound·I`. The solver
//! is a soft spectral down-weighting scheme: starting from `w = 1`, every sweep
//! takes the top eigenvector `v` of the weighted covariance and shrinks
//! `w_i ← w_i (1 − η s_i / max_j s_j)` with scores `s_i = w_i ⟨a_i, v⟩² / u_i`.
//! Weights only ever decrease, so `λ_max` is non-increasing across sweeps.
//! The sweep that crosses the bound is shortened by bisection on `η` so the
//! returned point sits on the constraint instead of overshooting it.
//!
//! Down-weighting spreads the cut over every point in proportion to its share
//! of `λ_max`, while the optimum cuts the points with the largest
//! `⟨a_i, v⟩² / u_i` first. A polish phase closes that gap: it solves the
//! problem restricted to the current top direction exactly (a fractional
//! knapsack) and moves toward that point as far as the full constraint
//! allows. `λ_max` is convex in `w`, so the feasible part of the segment is an
//! interval and the objective never gets worse. Polishing is off by default:
//! near-optimal 0/1 indicators keep whole outliers at `h = 0`, while the
//! spread-out soft solution pushes all of them past the threshold in Step 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    apply_into, centered_dot, dot, norm2, power_iteration, OutlierIndicator, PointSet,
    SpectralOptions, SpectralResult,
};

#[derive(Debug, Clone)]
pub struct StepProblem<'a> {
    pub points: &'a PointSet,
    pub center: &'a [f64],
    /// Right-hand side of the spectral constraint, `(c₁² + c₂²)σ²n` in the
    /// outer algorithm.
    pub bound: f64,
    /// Positive per-point objective weights; all ones for plain ℓ1.
    pub u: Vec<f64>,
}

impl<'a> StepProblem<'a> {
    pub fn new(points: &'a PointSet, center: &'a [f64], bound: f64, u: Vec<f64>) -> Result<Self> {
        let prob = Self {
            points,
            center,
            bound,
            u,
        };
        prob.validate()?;
        Ok(prob)
    }

    /// Plain ℓ1 objective.
    pub fn l1(points: &'a PointSet, center: &'a [f64], bound: f64) -> Result<Self> {
        Self::new(points, center, bound, vec![1.0; points.n()])
    }

    fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(Error::parameter(format!(
                "bound must be finite and > 0, got {}",
                self.bound
            )));
        }
        if self.u.len() != self.points.n() {
            return Err(Error::contract(format!(
                "objective weights have length {}, expected {}",
                self.u.len(),
                self.points.n()
            )));
        }
        if let Some(x) = self.u.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
            return Err(Error::parameter(format!(
                "objective weights must be > 0, found {x}"
            )));
        }
        if self.center.len() != self.points.d() {
            return Err(Error::contract(format!(
                "center has length {}, expected {}",
                self.center.len(),
                self.points.d()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSolution {
    pub h: OutlierIndicator,
    /// `Σ u_i h_i`.
    pub weighted_l1: f64,
    /// `λ_max / bound − 1` at the returned `h`.
    pub residual: f64,
    pub sweeps: usize,
    pub feasible: bool,
    /// `λ_max` observed at the start of every down-weighting sweep, then at
    /// the end of that phase. Polish rounds are not recorded.
    pub lambda_trace: Vec<f64>,
    /// Polish rounds that improved the objective.
    pub polish_rounds: usize,
    /// Total operator applications spent in power iteration.
    pub power_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub max_sweeps: usize,
    /// Largest fractional cut applied to the top-scoring point in one sweep.
    pub eta: f64,
    /// Upper limit on polish rounds after feasibility; 0 disables polishing.
    pub polish_rounds: usize,
    pub spectral: SpectralOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-3,
            max_sweeps: 200,
            eta: 0.5,
            polish_rounds: 0,
            spectral: SpectralOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_feas > 0.0) {
            return Err(Error::parameter(format!(
                "tol_feas must be > 0, got {}",
                self.tol_feas
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::parameter(format!(
                "eta must lie in (0, 1), got {}",
                self.eta
            )));
        }
        if !(self.spectral.tol > 0.0) || self.spectral.max_iters == 0 {
            return Err(Error::parameter(
                "spectral tol must be > 0 and max_iters >= 1",
            ));
        }
        Ok(())
    }
}

struct Evaluator<'p, 'a> {
    prob: &'p StepProblem<'a>,
    spectral: SpectralOptions,
    power_iters: usize,
}

impl Evaluator<'_, '_> {
    /// After a cut along `v` the previous top vector sits close to a lower
    /// eigenvector, where a warm-started power iteration can stall and pass
    /// its convergence test. The deterministic cold start runs as well and the
    /// larger Rayleigh quotient wins, since power iteration never overshoots.
    fn eval(&mut self, w: &[f64], warm: Option<&[f64]>) -> SpectralResult {
        self.eval_with(w, warm, self.spectral)
    }

    /// Same with a tighter tolerance, for polish acceptance.
    fn eval_strict(&mut self, w: &[f64], warm: &[f64]) -> SpectralResult {
        let opts = SpectralOptions {
            tol: self.spectral.tol * 1e-3,
            max_iters: self.spectral.max_iters.max(1000) * 4,
        };
        self.eval_with(w, Some(warm), opts)
    }

    fn eval_with(
        &mut self,
        w: &[f64],
        warm: Option<&[f64]>,
        opts: SpectralOptions,
    ) -> SpectralResult {
        let cold = power_iteration(self.prob.points, w, self.prob.center, opts, None);
        self.power_iters += cold.iterations + 1;
        let Some(warm) = warm else {
            return cold;
        };
        let hot = power_iteration(self.prob.points, w, self.prob.center, opts, Some(warm));
        self.power_iters += hot.iterations + 1;
        if hot.value >= cold.value {
            hot
        } else {
            cold
        }
    }
}

fn shrink(w: &[f64], scores: &[f64], smax: f64, eta: f64, out: &mut [f64]) {
    for ((o, &wi), &si) in out.iter_mut().zip(w).zip(scores) {
        *o = wi * (1.0 - eta * si / smax);
    }
}

/// Runs the down-weighting scheme from `w = 1`.
pub fn solve_step1(
    prob: &StepProblem<'_>,
    tol_feas: f64,
    max_sweeps: usize,
) -> Result<StepSolution> {
    solve_step1_with(
        prob,
        &SolverOptions {
            tol_feas,
            max_sweeps,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_step1_with(prob: &StepProblem<'_>, opts: &SolverOptions) -> Result<StepSolution> {
    prob.validate()?;
    opts.validate()?;
    let n = prob.points.n();
    let bound = prob.bound;
    let mut ev = Evaluator {
        prob,
        spectral: opts.spectral,
        power_iters: 0,
    };

    let mut w = vec![1.0; n];
    let mut trial = vec![0.0; n];
    let mut scores = vec![0.0; n];
    let mut current = ev.eval(&w, None);
    let mut lambda_trace = vec![current.value];
    let mut sweeps = 0;

    while current.value > bound && sweeps < opts.max_sweeps {
        sweeps += 1;
        for (((s, y), &wi), &ui) in scores
            .iter_mut()
            .zip(prob.points.rows())
            .zip(&w)
            .zip(&prob.u)
        {
            let p = centered_dot(y, prob.center, &current.vector);
            *s = wi * p * p / ui;
        }
        let smax = scores.iter().copied().fold(0.0, f64::max);
        if smax <= 0.0 {
            // Top direction carries no weighted mass; nothing left to cut.
            break;
        }

        shrink(&w, &scores, smax, opts.eta, &mut trial);
        let full = ev.eval(&trial, Some(&current.vector));
        if full.value > bound {
            std::mem::swap(&mut w, &mut trial);
            current = full;
            lambda_trace.push(current.value);
            continue;
        }

        // The full step crosses the bound: bisect for the shortest feasible one.
        let (mut lo, mut hi) = (0.0, opts.eta);
        let mut best_w = trial.clone();
        let mut best = full;
        let floor = bound * (1.0 - opts.tol_feas);
        for _ in 0..60 {
            if best.value >= floor || hi - lo <= 1e-12 * opts.eta {
                break;
            }
            let mid = 0.5 * (lo + hi);
            shrink(&w, &scores, smax, mid, &mut trial);
            let r = ev.eval(&trial, Some(&best.vector));
            if r.value <= bound {
                hi = mid;
                best_w.copy_from_slice(&trial);
                best = r;
            } else {
                lo = mid;
            }
        }
        w = best_w;
        current = best;
        lambda_trace.push(current.value);
    }

    let mut polish_rounds = 0;
    if current.value <= bound {
        for _ in 0..opts.polish_rounds {
            match polish(&mut ev, &w, &current) {
                Some((nw, r)) => {
                    w = nw;
                    current = r;
                    polish_rounds += 1;
                }
                None => break,
            }
        }
    }

    let h: Vec<f64> = w.iter().map(|wi| (1.0 - wi).clamp(0.0, 1.0)).collect();
    let weighted_l1 = h.iter().zip(&prob.u).map(|(hi, ui)| hi * ui).sum();
    let residual = current.value / bound - 1.0;
    Ok(StepSolution {
        h: OutlierIndicator::new(h)?,
        weighted_l1,
        residual,
        sweeps,
        feasible: residual <= opts.tol_feas,
        lambda_trace,
        polish_rounds,
        power_iters: ev.power_iters,
    })
}

/// Exact minimizer of `Σ u_i (1 − w_i)` subject to `Σ w_i c_i ≤ bound`:
/// points are cut in decreasing order of `c_i / u_i`.
fn knapsack(c: &[f64], u: &[f64], bound: f64) -> Vec<f64> {
    let mut w = vec![1.0; c.len()];
    let mut load: f64 = c.iter().sum();
    if load <= bound {
        return w;
    }
    let mut order: Vec<usize> = (0..c.len()).filter(|&i| c[i] > 0.0).collect();
    order.sort_by(|&i, &j| (c[j] / u[j]).total_cmp(&(c[i] / u[i])));
    for i in order {
        let excess = load - bound;
        if excess <= 0.0 {
            break;
        }
        if c[i] <= excess {
            w[i] = 0.0;
            load -= c[i];
        } else {
            w[i] = 1.0 - excess / c[i];
            load = bound;
        }
    }
    w
}

/// Second eigenpair of the weighted covariance, by power iteration on the
/// complement of `v1`.
fn second_pair(ev: &mut Evaluator<'_, '_>, w: &[f64], v1: &[f64]) -> Option<(f64, Vec<f64>)> {
    let prob = ev.prob;
    let d = prob.points.d();
    if d < 2 {
        return None;
    }
    let deflate = |x: &mut [f64]| {
        let a = dot(x, v1);
        x.iter_mut().zip(v1).for_each(|(xi, vi)| *xi -= a * vi);
    };
    // Start from the axis least aligned with `v1`.
    let j = (0..d).min_by(|&a, &b| v1[a].abs().total_cmp(&v1[b].abs()))?;
    let mut x = vec![0.0; d];
    x[j] = 1.0;
    deflate(&mut x);
    let nrm = norm2(&x);
    if nrm == 0.0 {
        return None;
    }
    x.iter_mut().for_each(|xi| *xi /= nrm);
    let mut y = vec![0.0; d];
    let mut value = 0.0;
    for _ in 0..ev.spectral.max_iters {
        apply_into(prob.points, w, prob.center, &x, &mut y);
        ev.power_iters += 1;
        deflate(&mut y);
        let next = dot(&x, &y);
        let nrm = norm2(&y);
        if nrm == 0.0 {
            return Some((0.0, x));
        }
        y.iter()
            .zip(x.iter_mut())
            .for_each(|(yi, xi)| *xi = yi / nrm);
        let done = (next - value).abs() <= ev.spectral.tol * next.abs();
        value = next;
        if done {
            break;
        }
    }
    Some((value, x))
}

/// Furthest feasible point on the segment from `w` to `target`.
fn line_search(
    ev: &mut Evaluator<'_, '_>,
    w: &[f64],
    target: &[f64],
    warm: &[f64],
) -> Option<(Vec<f64>, SpectralResult)> {
    let bound = ev.prob.bound;
    let blend =
        |t: f64| -> Vec<f64> { w.iter().zip(target).map(|(a, b)| a + t * (b - a)).collect() };
    let full = blend(1.0);
    let r = ev.eval_strict(&full, warm);
    if r.value <= bound {
        return Some((full, r));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = None;
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        let cand = blend(mid);
        let r = ev.eval_strict(&cand, warm);
        if r.value <= bound {
            lo = mid;
            best = Some((cand, r));
        } else {
            hi = mid;
        }
    }
    best
}

/// Knapsack target for the largest budget `s·bound`, `s ∈ (0, 1]`, that is
/// feasible for the full constraint. Smaller budgets cut more, so `λ_max` of
/// the target is monotone in `s`.
fn budget_search(
    ev: &mut Evaluator<'_, '_>,
    c: &[f64],
    warm: &[f64],
) -> Option<(Vec<f64>, SpectralResult)> {
    let prob = ev.prob;
    let bound = prob.bound;
    let target = knapsack(c, &prob.u, bound);
    let r = ev.eval_strict(&target, warm);
    if r.value <= bound {
        return Some((target, r));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = None;
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        let t = knapsack(c, &prob.u, mid * bound);
        let r = ev.eval_strict(&t, warm);
        if r.value <= bound {
            lo = mid;
            best = Some((t, r));
        } else {
            hi = mid;
        }
    }
    best
}

/// One polish round from a feasible `w`. Returns the improved point, or
/// `None` when no move toward a direction-restricted optimum helps.
fn polish(
    ev: &mut Evaluator<'_, '_>,
    w: &[f64],
    current: &SpectralResult,
) -> Option<(Vec<f64>, SpectralResult)> {
    let prob = ev.prob;
    let bound = prob.bound;
    let cost = |w: &[f64]| -> f64 { w.iter().zip(&prob.u).map(|(wi, ui)| ui * (1.0 - wi)).sum() };
    let now = cost(w);
    let slack = 1e-9 * prob.u.iter().sum::<f64>();
    let p1: Vec<f64> = prob
        .points
        .rows()
        .map(|y| centered_dot(y, prob.center, &current.vector))
        .collect();

    let mut scores = vec![p1.iter().map(|p| p * p).collect::<Vec<_>>()];
    // Near a tie of the top two eigenvalues a single direction cannot certify
    // progress; mix in the best trace-one matrix on the top two directions.
    if let Some((l2, v2)) = second_pair(ev, w, &current.vector) {
        if l2 >= 0.5 * current.value {
            let p2: Vec<f64> = prob
                .points
                .rows()
                .map(|y| centered_dot(y, prob.center, &v2))
                .collect();
            let mut best: Option<(f64, Vec<f64>)> = None;
            for ai in 0..=10 {
                let a = ai as f64 / 10.0;
                let r = (a * (1.0 - a)).sqrt();
                for b in [-r, -0.5 * r, 0.0, 0.5 * r, r] {
                    let c: Vec<f64> = p1
                        .iter()
                        .zip(&p2)
                        .map(|(x, y)| (a * x * x + 2.0 * b * x * y + (1.0 - a) * y * y).max(0.0))
                        .collect();
                    let lower = cost(&knapsack(&c, &prob.u, bound));
                    if best.as_ref().is_none_or(|(l, _)| lower > *l) {
                        best = Some((lower, c));
                    }
                }
            }
            if let Some((_, c)) = best {
                scores.push(c);
            }
        }
    }

    let mut out: Option<(f64, Vec<f64>, SpectralResult)> = None;
    let mut consider = |found: Option<(Vec<f64>, SpectralResult)>| {
        if let Some((cand, r)) = found {
            let c = cost(&cand);
            if c < now - slack && out.as_ref().is_none_or(|(b, _, _)| c < *b) {
                out = Some((c, cand, r));
            }
        }
    };
    for c in &scores {
        let target = knapsack(c, &prob.u, bound);
        if cost(&target) >= now - slack {
            continue;
        }
        consider(line_search(ev, w, &target, &current.vector));
        consider(budget_search(ev, c, &current.vector));
    }
    out.map(|(_, w, r)| (w, r))
}

/// Closed-form top eigenvalue of a symmetric 2×2 matrix `[[a, b], [b, c]]`.
fn eig2_max(a: f64, b: f64, c: f64) -> f64 {
    let m = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    m + r
}

/// Exhaustive grid search over `h ∈ {0, 1/g, …, 1}ⁿ` for tiny instances.
///
/// The spectral constraint is evaluated in closed form, independently of the
/// power-iteration kernel. For each prefix `(h_1, …, h_{n−1})` only the
/// smallest feasible `h_n` is a candidate minimizer (`λ_max` is monotone in
/// every `h_i` and `u_n > 0`), which keeps the search exact while skipping
/// dominated grid points.
pub fn brute_force_step1(prob: &StepProblem<'_>, grid_steps: usize) -> Result<StepSolution> {
    prob.validate()?;
    let n = prob.points.n();
    let d = prob.points.d();
    if n > 6 || d > 2 || grid_steps == 0 || grid_steps > 100 {
        return Err(Error::contract(format!(
            "brute force needs n <= 6, d <= 2, 1 <= grid_steps <= 100; got n={n}, d={d}, grid_steps={grid_steps}"
        )));
    }
    // Per-point outer products (a11, a12, a22) of y_i − center.
    let outer: Vec<[f64; 3]> = prob
        .points
        .rows()
        .map(|y| {
            let a0 = y[0] - prob.center[0];
            let a1 = if d == 2 { y[1] - prob.center[1] } else { 0.0 };
            [a0 * a0, a0 * a1, a1 * a1]
        })
        .collect();
    let lam = |idx: &[usize]| -> f64 {
        let mut m = [0.0; 3];
        for (o, &k) in outer.iter().zip(idx) {
            let wi = (grid_steps - k) as f64 / grid_steps as f64;
            for j in 0..3 {
                m[j] += wi * o[j];
            }
        }
        eig2_max(m[0], m[1], m[2]).max(0.0)
    };

    let g = grid_steps;
    // Grid weights are exact multiples of 1/g; allow rounding on the boundary.
    let limit = prob.bound * (1.0 + 1e-12);
    let mut idx = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluated = 0usize;
    loop {
        // Smallest feasible last coordinate for this prefix (monotone scan by bisection).
        let prefix_obj: f64 = idx[..n - 1]
            .iter()
            .zip(&prob.u)
            .map(|(&k, &ui)| ui * k as f64 / g as f64)
            .sum();
        let dominated = best.as_ref().is_some_and(|(b, _)| prefix_obj > *b);
        if !dominated {
            idx[n - 1] = g;
            evaluated += 1;
            if lam(&idx) <= limit {
                let (mut lo, mut hi) = (0usize, g);
                idx[n - 1] = 0;
                evaluated += 1;
                if lam(&idx) <= limit {
                    hi = 0;
                } else {
                    while hi - lo > 1 {
                        let mid = (lo + hi) / 2;
                        idx[n - 1] = mid;
                        evaluated += 1;
                        if lam(&idx) <= limit {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                }
                idx[n - 1] = hi;
                let obj = prefix_obj + prob.u[n - 1] * hi as f64 / g as f64;
                if best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-15) {
                    best = Some((obj, idx.clone()));
                }
            }
        }
        // Advance the prefix odometer.
        let mut k = n - 1;
        loop {
            if k == 0 {
                let (obj, best_idx) = best.expect("h = 1 is always feasible");
                let h: Vec<f64> = best_idx.iter().map(|&k| k as f64 / g as f64).collect();
                let lmax = lam(&best_idx);
                let residual = lmax / prob.bound - 1.0;
                return Ok(StepSolution {
                    h: OutlierIndicator::new(h)?,
                    weighted_l1: obj,
                    residual,
                    sweeps: evaluated,
                    feasible: lmax <= limit,
                    lambda_trace: vec![lmax],
                    polish_rounds: 0,
                    power_iters: 0,
                });
            }
            k -= 1;
            if idx[k] < g {
                idx[k] += 1;
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Reweighted-ℓ1 objective weights `u_i ∝ (h_i + δ)^(p−1)`, scaled so the
/// largest is 1.
pub fn reweight_lp(h_prev: &OutlierIndicator, p: f64, delta: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::parameter(format!(
            "p must lie in (0, 1) for reweighting, got {p}"
        )));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::parameter(format!("delta must be > 0, got {delta}")));
    }
    let mut u: Vec<f64> = h_prev
        .as_slice()
        .iter()
        .map(|h| (h + delta).powf(p - 1.0))
        .collect();
    let top = u.iter().copied().fold(0.0, f64::max);
    u.iter_mut().for_each(|x| *x /= top);
    Ok(u)
}
