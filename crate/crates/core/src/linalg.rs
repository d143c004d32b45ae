//! Matrix-free spectral primitives over weighted, centered point sets.
//!
//! Everything here works on the operator
//! `M(w, c) = Σ_i w_i (y_i − c)(y_i − c)ᵀ` without ever forming the `d × d`
//! matrix: one application costs `O(nd)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n × d` row-major matrix of observations. Every entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl PointSet {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::contract(format!(
                "point set needs n >= 1 and d >= 1, got n={n}, d={d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::contract(format!(
                "point set buffer has {} entries, expected {n}x{d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::contract(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(data, rows.len(), d)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    /// New point set made of the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::contract(format!(
                    "row index {i} out of range for n={}",
                    self.n
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, indices.len(), self.d)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.data.iter().copied().map(f).collect(), self.n, self.d)
    }

    /// Adds `shift` to every row.
    pub fn translate(&self, shift: &[f64]) -> Result<Self> {
        check_len("shift", shift.len(), self.d)?;
        let data = self
            .rows()
            .flat_map(|r| r.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        Self::new(data, self.n, self.d)
    }
}

/// Per-point weights `w_i ∈ [0, 1]`; `w = 1 − h` for an outlier indicator `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some((i, x)) = w
            .iter()
            .enumerate()
            .find(|(_, x)| !(0.0..=1.0).contains(*x))
        {
            return Err(Error::contract(format!(
                "weight w[{i}] = {x} outside [0, 1]"
            )));
        }
        Ok(Self(w))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<&OutlierIndicator> for WeightVector {
    fn from(h: &OutlierIndicator) -> Self {
        Self(h.0.iter().map(|x| 1.0 - x).collect())
    }
}

/// Outlier indicator `h ∈ [0, 1]ⁿ`; `h_i ≈ 1` flags point `i` as an outlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierIndicator(Vec<f64>);

impl OutlierIndicator {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if let Some((i, x)) = h
            .iter()
            .enumerate()
            .find(|(_, x)| !(0.0..=1.0).contains(*x))
        {
            return Err(Error::contract(format!(
                "indicator h[{i}] = {x} outside [0, 1]"
            )));
        }
        Ok(Self(h))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl From<&WeightVector> for OutlierIndicator {
    fn from(w: &WeightVector) -> Self {
        Self(w.0.iter().map(|x| 1.0 - x).collect())
    }
}

/// Top eigenpair of the weighted covariance operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power-iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// Relative change of the Rayleigh quotient between sweeps at which to stop.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 1000,
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::contract(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `⟨y − c, v⟩` without materializing `y − c`.
#[inline]
pub(crate) fn centered_dot(y: &[f64], c: &[f64], v: &[f64]) -> f64 {
    y.iter()
        .zip(c)
        .zip(v)
        .map(|((yi, ci), vi)| (yi - ci) * vi)
        .sum()
}

/// Writes `Σ_i w_i (y_i − c)⟨y_i − c, v⟩` into `out`. Lengths are trusted.
pub(crate) fn apply_into(points: &PointSet, w: &[f64], center: &[f64], v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (y, &wi) in points.rows().zip(w) {
        if wi == 0.0 {
            continue;
        }
        let coef = wi * centered_dot(y, center, v);
        if coef == 0.0 {
            continue;
        }
        for ((o, yi), ci) in out.iter_mut().zip(y).zip(center) {
            *o += coef * (yi - ci);
        }
    }
}

fn check_operator_args(points: &PointSet, w: &[f64], center: &[f64]) -> Result<()> {
    check_len("weight vector", w.len(), points.n())?;
    check_len("center", center.len(), points.d())?;
    if center.iter().any(|x| !x.is_finite()) {
        return Err(Error::contract("center has non-finite entries"));
    }
    Ok(())
}

/// Applies the weighted covariance operator around `center` to `v`.
pub fn apply_weighted_cov(
    points: &PointSet,
    w: &WeightVector,
    center: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    check_operator_args(points, w.as_slice(), center)?;
    check_len("direction", v.len(), points.d())?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::contract("direction has non-finite entries"));
    }
    let mut out = vec![0.0; points.d()];
    apply_into(points, w.as_slice(), center, v, &mut out);
    Ok(out)
}

/// Top eigenvalue of `Σ_i w_i (y_i − c)(y_i − c)ᵀ` by power iteration from
/// the deterministic start vector.
pub fn lambda_max(
    points: &PointSet,
    w: &WeightVector,
    center: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<SpectralResult> {
    if !(tol > 0.0) {
        return Err(Error::parameter(format!(
            "spectral tol must be > 0, got {tol}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::parameter("spectral max_iters must be >= 1"));
    }
    check_operator_args(points, w.as_slice(), center)?;
    Ok(power_iteration(
        points,
        w.as_slice(),
        center,
        SpectralOptions { tol, max_iters },
        None,
    ))
}

/// Power iteration on raw weights. `warm` replaces the default start vector
/// when it is not (numerically) in the null space.
pub(crate) fn power_iteration(
    points: &PointSet,
    w: &[f64],
    center: &[f64],
    opts: SpectralOptions,
    warm: Option<&[f64]>,
) -> SpectralResult {
    let d = points.d();
    let trace: f64 = points
        .rows()
        .zip(w)
        .filter(|(_, &wi)| wi != 0.0)
        .map(|(y, &wi)| {
            wi * y
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    let unit_ones = {
        let s = 1.0 / (d as f64).sqrt();
        vec![s; d]
    };
    if trace == 0.0 {
        return SpectralResult {
            value: 0.0,
            vector: unit_ones,
            iterations: 0,
            converged: true,
        };
    }

    let null_floor = 1e-14 * trace;
    let mut av = vec![0.0; d];
    let mut v = Vec::new();

    // Candidate start vectors in order: warm start, all-ones, (1, 2, ..., d),
    // then the coordinate axis with the largest diagonal entry.
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(4);
    if let Some(s) = warm {
        let nrm = norm2(s);
        if nrm > 0.0 && nrm.is_finite() {
            candidates.push(s.iter().map(|x| x / nrm).collect());
        }
    }
    candidates.push(unit_ones.clone());
    let ramp_norm = ((d * (d + 1) * (2 * d + 1)) as f64 / 6.0).sqrt();
    candidates.push((1..=d).map(|j| j as f64 / ramp_norm).collect());
    for cand in candidates {
        apply_into(points, w, center, &cand, &mut av);
        if norm2(&av) >= null_floor {
            v = cand;
            break;
        }
    }
    if v.is_empty() {
        let mut diag = vec![0.0; d];
        for (y, &wi) in points.rows().zip(w) {
            for ((g, yi), ci) in diag.iter_mut().zip(y).zip(center) {
                *g += wi * (yi - ci) * (yi - ci);
            }
        }
        let j = diag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        v = vec![0.0; d];
        v[j] = 1.0;
        apply_into(points, w, center, &v, &mut av);
    }

    let mut rq = dot(&v, &av);
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iters {
        iterations = it;
        let nrm = norm2(&av);
        if nrm == 0.0 {
            rq = 0.0;
            converged = true;
            break;
        }
        for (vi, ai) in v.iter_mut().zip(&av) {
            *vi = ai / nrm;
        }
        apply_into(points, w, center, &v, &mut av);
        let next = dot(&v, &av);
        let change = (next - rq).abs();
        rq = next;
        if change <= opts.tol * next.abs() {
            converged = true;
            break;
        }
    }
    // Re-normalize so the returned direction is unit length to rounding.
    let nrm = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nrm);
    SpectralResult {
        value: rq.max(0.0),
        vector: v,
        iterations,
        converged,
    }
}

/// `λ_max(Σ (1 − h_i)(y_i − c)(y_i − c)ᵀ) / bound − 1`; non-positive means
/// the spectral constraint holds.
pub fn feasibility_residual(
    points: &PointSet,
    h: &OutlierIndicator,
    center: &[f64],
    bound: f64,
) -> Result<f64> {
    feasibility_residual_with(points, h, center, bound, SpectralOptions::default())
}

pub fn feasibility_residual_with(
    points: &PointSet,
    h: &OutlierIndicator,
    center: &[f64],
    bound: f64,
    opts: SpectralOptions,
) -> Result<f64> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::parameter(format!(
            "bound must be finite and > 0, got {bound}"
        )));
    }
    let w = WeightVector::from(h);
    let res = lambda_max(points, &w, center, opts.tol, opts.max_iters)?;
    Ok(res.value / bound - 1.0)
}
