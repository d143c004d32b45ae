//! Synthetic ε-corrupted samples: the Gaussian two-cluster setting, the
//! Pareto constant-outlier setting, and a generic row-replacement operator.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{power_iteration, PointSet, SpectralOptions};

/// Master seed. Trial `k` draws from stream `k` of a ChaCha8 generator keyed
/// by the master value, so `(master, k)` reproduces a trial bit-for-bit
/// regardless of scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub master: u64,
}

impl RngSeed {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(trial);
        rng
    }
}

/// A corrupted sample together with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub points: PointSet,
    /// `true` for rows the adversary left untouched.
    pub inlier_mask: Vec<bool>,
    /// Mean of the untouched rows.
    pub oracle_mean: Vec<f64>,
    /// Population mean, when known.
    pub true_mean: Option<Vec<f64>>,
    /// Realized corruption fraction.
    pub epsilon: f64,
}

impl LabeledSample {
    pub fn corrupted_indices(&self) -> Vec<usize> {
        self.inlier_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &keep)| (!keep).then_some(i))
            .collect()
    }

    pub fn inlier_indices(&self) -> Vec<usize> {
        self.inlier_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &keep)| keep.then_some(i))
            .collect()
    }

    /// Square root of the top eigenvalue of the inlier sample covariance
    /// (normalized by the inlier count).
    pub fn empirical_sigma(&self) -> f64 {
        empirical_sigma(&self.points, &self.inlier_mask)
    }
}

fn mask_mean(points: &PointSet, mask: &[bool]) -> Vec<f64> {
    let mut mean = vec![0.0; points.d()];
    let mut count = 0usize;
    for (row, _) in points.rows().zip(mask).filter(|(_, &m)| m) {
        count += 1;
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let c = count.max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= c);
    mean
}

/// `√λ_max` of the sample covariance of the rows selected by `mask`.
pub fn empirical_sigma(points: &PointSet, mask: &[bool]) -> f64 {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return 0.0;
    }
    let center = mask_mean(points, mask);
    let inv = 1.0 / count as f64;
    let w: Vec<f64> = mask.iter().map(|&m| if m { inv } else { 0.0 }).collect();
    let opts = SpectralOptions {
        tol: 1e-10,
        max_iters: 10_000,
    };
    power_iteration(points, &w, &center, opts, None)
        .value
        .sqrt()
}

fn corruption_count(n: usize, eps: f64) -> Result<usize> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::parameter(format!(
            "eps must lie in [0, 1/2), got {eps}"
        )));
    }
    let m = (eps * n as f64).round() as usize;
    if 2 * m >= n && m > 0 {
        return Err(Error::parameter(format!(
            "eps={eps} with n={n} corrupts {m} rows, which is not below n/2"
        )));
    }
    Ok(m)
}

fn finish(points: PointSet, mask: Vec<bool>, true_mean: Option<Vec<f64>>) -> LabeledSample {
    let corrupted = mask.iter().filter(|&&m| !m).count();
    let oracle_mean = mask_mean(&points, &mask);
    let epsilon = corrupted as f64 / points.n() as f64;
    LabeledSample {
        points,
        inlier_mask: mask,
        oracle_mean,
        true_mean,
        epsilon,
    }
}

/// Standard Gaussian inliers; a uniformly random `round(eps·n)` subset is
/// split between the points `(√(d/2), ±√(d/2), 0, …, 0)`, the first cluster
/// taking the extra row when the count is odd.
pub fn gen_gaussian_two_cluster<R: Rng + ?Sized>(
    d: usize,
    n: usize,
    eps: f64,
    rng: &mut R,
) -> Result<LabeledSample> {
    if d < 2 {
        return Err(Error::parameter("two-cluster setting needs d >= 2"));
    }
    if n == 0 {
        return Err(Error::parameter("n must be >= 1"));
    }
    let m = corruption_count(n, eps)?;
    let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let mut points = PointSet::new(data, n, d)?;
    let chosen = index::sample(rng, n, m).into_vec();
    let a = (d as f64 / 2.0).sqrt();
    let first = m.div_ceil(2);
    let mut mask = vec![true; n];
    for (k, &i) in chosen.iter().enumerate() {
        let row = points.row_mut(i);
        row.iter_mut().for_each(|x| *x = 0.0);
        row[0] = a;
        row[1] = if k < first { a } else { -a };
        mask[i] = false;
    }
    Ok(finish(points, mask, Some(vec![0.0; d])))
}

/// Inverse-CDF draw from Pareto(scale, shape).
fn pareto_draw<R: Rng + ?Sized>(rng: &mut R, scale: f64, shape: f64) -> f64 {
    let u: f64 = rng.random();
    scale * (1.0 - u).powf(-1.0 / shape)
}

/// Pareto(scale, shape) coordinates; a uniformly random `round(eps·n)` subset
/// is replaced by the constant vector with coordinates `2 + √(g/d)`, where `g`
/// is the mean ℓ2 norm of the clean draw.
pub fn gen_pareto_constant<R: Rng + ?Sized>(
    d: usize,
    n: usize,
    eps: f64,
    shape: f64,
    scale: f64,
    rng: &mut R,
) -> Result<LabeledSample> {
    if !(shape > 2.0) {
        return Err(Error::parameter(format!(
            "Pareto shape must exceed 2 for a finite second moment, got {shape}"
        )));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::parameter(format!(
            "Pareto scale must be > 0, got {scale}"
        )));
    }
    if d == 0 || n == 0 {
        return Err(Error::parameter("n and d must be >= 1"));
    }
    let m = corruption_count(n, eps)?;
    let data: Vec<f64> = (0..n * d).map(|_| pareto_draw(rng, scale, shape)).collect();
    let mut points = PointSet::new(data, n, d)?;
    let g = points
        .rows()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .sum::<f64>()
        / n as f64;
    let level = 2.0 + (g / d as f64).sqrt();
    let chosen = index::sample(rng, n, m).into_vec();
    let mut mask = vec![true; n];
    for &i in &chosen {
        points.row_mut(i).iter_mut().for_each(|x| *x = level);
        mask[i] = false;
    }
    let mean = pareto_mean(scale, shape);
    Ok(finish(points, mask, Some(vec![mean; d])))
}

pub fn pareto_mean(scale: f64, shape: f64) -> f64 {
    scale * shape / (shape - 1.0)
}

/// Per-coordinate standard deviation of Pareto(scale, shape), `shape > 2`.
pub fn pareto_std(scale: f64, shape: f64) -> f64 {
    (scale * scale * shape / ((shape - 1.0).powi(2) * (shape - 2.0))).sqrt()
}

/// Replaces the rows at `indices` with the corresponding `replacements`.
///
/// Fewer than half the rows may be replaced; the population mean of the
/// result is unknown.
pub fn corrupt<R: AsRef<[f64]>>(
    points: &PointSet,
    indices: &[usize],
    replacements: &[R],
) -> Result<LabeledSample> {
    let n = points.n();
    if indices.len() != replacements.len() {
        return Err(Error::contract(format!(
            "{} indices but {} replacement rows",
            indices.len(),
            replacements.len()
        )));
    }
    if 2 * indices.len() >= n && !indices.is_empty() {
        return Err(Error::contract(format!(
            "cannot replace {} of {n} rows; fewer than half are allowed",
            indices.len()
        )));
    }
    let mut out = points.clone();
    let mut mask = vec![true; n];
    for (&i, row) in indices.iter().zip(replacements) {
        let row = row.as_ref();
        if i >= n {
            return Err(Error::contract(format!("index {i} out of range for n={n}")));
        }
        if !mask[i] {
            return Err(Error::contract(format!("index {i} listed twice")));
        }
        if row.len() != points.d() || row.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract(format!(
                "replacement for row {i} must have {} finite entries",
                points.d()
            )));
        }
        mask[i] = false;
        out.row_mut(i).copy_from_slice(row);
    }
    Ok(finish(out, mask, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cluster_clean() {
        let s = gen_gaussian_two_cluster(5, 50, 0.0, &mut RngSeed::new(1).trial_rng(0)).unwrap();
        assert!(s.inlier_mask.iter().all(|&m| m));
        assert_eq!(s.epsilon, 0.0);
        let mut mean = [0.0; 5];
        for r in s.points.rows() {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / 50.0;
            }
        }
        for (a, b) in mean.iter().zip(&s.oracle_mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_cluster_counts_and_norms() {
        let s =
            gen_gaussian_two_cluster(100, 1000, 0.2, &mut RngSeed::new(7).trial_rng(3)).unwrap();
        let bad = s.corrupted_indices();
        assert_eq!(bad.len(), 200);
        let plus = bad.iter().filter(|&&i| s.points.row(i)[1] > 0.0).count();
        assert_eq!(plus, 100);
        for &i in &bad {
            let nrm = s.points.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((nrm - 10.0).abs() < 1e-9);
        }
        assert!((s.epsilon - 0.2).abs() < 1e-15);
    }

    #[test]
    fn odd_split_favors_first_cluster() {
        let s = gen_gaussian_two_cluster(3, 30, 0.1, &mut RngSeed::new(2).trial_rng(0)).unwrap();
        let bad = s.corrupted_indices();
        assert_eq!(bad.len(), 3);
        let plus = bad.iter().filter(|&&i| s.points.row(i)[1] > 0.0).count();
        assert_eq!(plus, 2);
    }

    #[test]
    fn generators_reject_bad_parameters() {
        let mut rng = RngSeed::new(0).trial_rng(0);
        assert!(gen_gaussian_two_cluster(10, 10, 0.5, &mut rng).is_err());
        assert!(gen_gaussian_two_cluster(1, 10, 0.1, &mut rng).is_err());
        assert!(gen_gaussian_two_cluster(10, 10, 0.46, &mut rng).is_err());
        assert!(gen_pareto_constant(10, 10, 0.1, 2.0, 1.0, &mut rng).is_err());
        assert!(gen_pareto_constant(10, 10, 0.1, 2.5, 0.0, &mut rng).is_err());
    }

    #[test]
    fn pareto_constant_outliers() {
        let s =
            gen_pareto_constant(4, 200, 0.1, 2.5, 1.0, &mut RngSeed::new(5).trial_rng(1)).unwrap();
        let bad = s.corrupted_indices();
        assert_eq!(bad.len(), 20);
        let first = s.points.row(bad[0]).to_vec();
        assert!(first.iter().all(|&x| x == first[0]));
        for &i in &bad {
            assert_eq!(s.points.row(i), first.as_slice());
        }
        assert!((s.true_mean.as_ref().unwrap()[0] - 5.0 / 3.0).abs() < 1e-15);
        for &i in &s.inlier_indices() {
            assert!(s.points.row(i).iter().all(|&x| x >= 1.0));
        }
    }

    #[test]
    fn pareto_clean_has_no_constant_rows() {
        let s =
            gen_pareto_constant(3, 100, 0.0, 2.5, 1.0, &mut RngSeed::new(5).trial_rng(0)).unwrap();
        assert!(s.inlier_mask.iter().all(|&m| m));
    }

    #[test]
    fn pareto_moments() {
        assert!((pareto_mean(1.0, 2.5) - 5.0 / 3.0).abs() < 1e-15);
        assert!((pareto_std(1.0, 2.5).powi(2) - 2.5 / (2.25 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn corrupt_examples() {
        let p = PointSet::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, 9.0]]).unwrap();
        let s = corrupt(&p, &[0], &[[100.0, 100.0]]).unwrap();
        assert_eq!(s.points.row(0), &[100.0, 100.0]);
        assert_eq!(s.oracle_mean, vec![3.0, 6.0]);
        assert!((s.epsilon - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.inlier_mask, vec![false, true, true]);

        assert!(corrupt(&p, &[5], &[[1.0, 1.0]]).is_err());
        assert!(corrupt(&p, &[0, 1], &[[1.0, 1.0], [2.0, 2.0]]).is_err());
        assert!(corrupt(&p, &[0, 1], &[[1.0, 1.0]]).is_err());
        assert!(corrupt(&p, &[0], &[[1.0]]).is_err());
    }

    #[test]
    fn corrupt_empty_set_is_identity() {
        let p = PointSet::new((0..12).map(f64::from).collect(), 4, 3).unwrap();
        let s = corrupt::<[f64; 3]>(&p, &[], &[]).unwrap();
        assert_eq!(s.points, p);
        assert_eq!(s.epsilon, 0.0);
        assert_eq!(s.oracle_mean, vec![4.5, 5.5, 6.5]);
    }

    #[test]
    fn corrupt_realized_epsilon() {
        let p = PointSet::new((0..20).map(f64::from).collect(), 10, 2).unwrap();
        let s = corrupt(&p, &[1, 4, 7], &[[0.0, 0.0]; 3]).unwrap();
        assert!((s.epsilon - 0.3).abs() < 1e-15);
        assert_eq!(s.corrupted_indices(), vec![1, 4, 7]);
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let seed = RngSeed::new(42);
        let a = gen_gaussian_two_cluster(4, 20, 0.1, &mut seed.trial_rng(3)).unwrap();
        let b = gen_gaussian_two_cluster(4, 20, 0.1, &mut seed.trial_rng(3)).unwrap();
        let c = gen_gaussian_two_cluster(4, 20, 0.1, &mut seed.trial_rng(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
    }
}
