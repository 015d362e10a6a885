//! Deterministic scalar/vector primitives shared by all modules.
//!
//! Everything here is plain 64-bit arithmetic over owned buffers: a
//! max-shifted softmax, Shannon entropy in nats, sample Pearson correlation,
//! a tiny row-major matrix, and a seeded random stream. All functions are
//! pure; [`SeededRng`] is the only stateful type and is single-owner.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-9;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what });
    }
    Ok(())
}

/// A non-empty vector of finite 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput {
                what: "RealVector",
            });
        }
        ensure_finite(&values, "RealVector")?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A probability vector: entries in [0, 1] summing to 1 within [`PROB_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProbability {
                reason: "empty vector".into(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidProbability {
                    reason: format!("entry {i} = {v} outside [0, 1]"),
                });
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbability {
                reason: format!("entries sum to {sum}, not 1"),
            });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Max-shifted softmax with a temperature.
///
/// `out_i = exp(v_i/T - m) / sum_j exp(v_j/T - m)` with `m = max_i v_i/T`,
/// so arbitrarily large inputs cannot overflow.
pub fn softmax(values: &[f64], temperature: f64) -> Result<ProbVector> {
    if values.is_empty() {
        return Err(Error::EmptyInput { what: "softmax" });
    }
    ensure_finite(values, "softmax input")?;
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    let scaled: Vec<f64> = values.iter().map(|v| v / temperature).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scaled.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    ProbVector::new(out)
}

/// Shannon entropy in nats, with the convention `0 * ln 0 = 0`.
pub fn entropy(p: &ProbVector) -> f64 {
    p.as_slice()
        .iter()
        .map(|&pi| if pi > 0.0 { -pi * pi.ln() } else { 0.0 })
        .sum()
}

/// Sample Pearson correlation coefficient.
///
/// Undefined (and an error) whenever either input has zero variance: a
/// constant series admits no correlation, so we refuse rather than return a
/// silent 0.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "pearson",
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument {
            what: "pearson",
            reason: "need at least 2 samples".into(),
        });
    }
    ensure_finite(x, "pearson x")?;
    ensure_finite(y, "pearson y")?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation {
            reason: "zero-variance input".into(),
        });
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Seeded pseudo-random stream.
///
/// Backed by ChaCha8 (`rand_chacha::ChaCha8Rng`), a counter-based generator
/// with a documented, platform-independent output stream; the seed is
/// expanded with `SeedableRng::seed_from_u64`. Identical seeds produce
/// identical streams on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    /// Name of the underlying generator, for report echoes.
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn uniform_range(&mut self, lo: u64, hi: u64) -> u64 {
        self.inner.random_range(lo..=hi)
    }

    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        Normal::new(mean, std_dev)
            .expect("std_dev must be finite and non-negative")
            .sample(&mut self.inner)
    }

    pub fn lognormal(&mut self, mu: f64, sigma: f64) -> f64 {
        LogNormal::new(mu, sigma)
            .expect("sigma must be finite and non-negative")
            .sample(&mut self.inner)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, values: &mut [T]) {
        values.shuffle(&mut self.inner);
    }
}

/// Dense row-major matrix of 64-bit reals.
///
/// Deliberately minimal: the toolkit only needs mat-vec products, outer
/// products, and flat elementwise access; a tensor library would be overkill.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "Matrix::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        ensure_finite(&data, "Matrix::from_vec")?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x` for a column vector `x` of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                what: "matvec",
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `self^T * x` for a column vector `x` of length `rows`.
    pub fn t_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                what: "t_matvec",
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, &v) in self.row(r).iter().enumerate() {
                out[c] += v * xr;
            }
        }
        Ok(out)
    }

    /// Rank-1 update `self += scale * u * v^T`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64], scale: f64) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (c, &vc) in v.iter().enumerate() {
                row[c] += scale * ur * vc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_symmetry() {
        let p = softmax(&[0.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.as_slice()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn softmax_exact_exponentials() {
        let p = softmax(&[0.0, 2.0f64.ln()], 1.0).unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.as_slice()[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_no_overflow_on_large_inputs() {
        let p = softmax(&[1000.0, 1000.0], 1.0).unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.as_slice()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_inputs() {
        assert!(softmax(&[f64::NAN, 0.0], 1.0).is_err());
        assert!(softmax(&[0.0, 1.0], 0.0).is_err());
        assert!(softmax(&[0.0, 1.0], -1.0).is_err());
    }

    #[test]
    fn entropy_degenerate_is_zero() {
        let p = ProbVector::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(entropy(&p), 0.0);
    }

    #[test]
    fn entropy_uniform_is_log_n() {
        let p = ProbVector::new(vec![0.25; 4]).unwrap();
        assert_abs_diff_eq!(entropy(&p), 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_two_point_uniform() {
        let p = ProbVector::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(entropy(&p), 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn pearson_perfect_correlation() {
        let x = [1.0, 2.0, 3.0];
        assert_abs_diff_eq!(pearson(&x, &x).unwrap(), 1.0, epsilon = 1e-12);
        let y = [3.0, 2.0, 1.0];
        assert_abs_diff_eq!(pearson(&x, &y).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_hand_evaluated() {
        // deviations x: (-1,0,1), y: (-1,1,0) -> cov 1, variances 2 and 2
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 2.0];
        assert_abs_diff_eq!(pearson(&x, &y).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn pearson_constant_input_is_error() {
        let c = [2.0, 2.0, 2.0];
        let x = [1.0, 2.0, 3.0];
        assert!(matches!(
            pearson(&c, &c),
            Err(Error::UndefinedCorrelation { .. })
        ));
        // one-constant input has zero variance too; no real r exists
        assert!(pearson(&c, &x).is_err());
    }

    #[test]
    fn rng_same_seed_same_stream() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_different_seeds_differ() {
        let mut a = SeededRng::new(1);
        let mut b = SeededRng::new(2);
        let va: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(va, vb);
    }

    #[test]
    fn matrix_matvec_and_transpose() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
        assert_eq!(m.t_matvec(&[1.0, 1.0]).unwrap(), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn matrix_outer_update() {
        let mut m = Matrix::zeros(2, 2);
        m.add_outer(&[1.0, 2.0], &[3.0, 4.0], 1.0);
        assert_eq!(m.data(), &[3.0, 4.0, 6.0, 8.0]);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(v in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let p = softmax(&v, 1.0).unwrap();
            let sum: f64 = p.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() < PROB_SUM_TOL);
        }

        #[test]
        fn softmax_shift_invariant(
            v in prop::collection::vec(-20.0f64..20.0, 1..20),
            c in -100.0f64..100.0,
        ) {
            let a = softmax(&v, 1.0).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax(&shifted, 1.0).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn entropy_permutation_invariant_and_uniform_max(
            raw in prop::collection::vec(0.01f64..10.0, 2..16),
        ) {
            let z: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|r| r / z).collect();
            let p = ProbVector::new(probs.clone()).unwrap();
            let h = entropy(&p);

            let mut rev = probs.clone();
            rev.reverse();
            let hr = entropy(&ProbVector::new(rev).unwrap());
            prop_assert!((h - hr).abs() < 1e-12);

            // uniform distribution maximizes entropy
            prop_assert!(h <= (probs.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn pearson_affine_equivariance(
            x in prop::collection::vec(-10.0f64..10.0, 3..20),
            a in prop::sample::select(vec![-2.5f64, -1.0, 0.5, 3.0]),
            b in -5.0f64..5.0,
            c in prop::sample::select(vec![-3.0f64, -0.5, 1.5, 2.0]),
            d in -5.0f64..5.0,
        ) {
            let y: Vec<f64> = x.iter().map(|v| 0.7 * v * v + v).collect();
            prop_assume!(pearson(&x, &y).is_ok());
            let r = pearson(&x, &y).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let ys: Vec<f64> = y.iter().map(|v| c * v + d).collect();
            let rs = pearson(&xs, &ys).unwrap();
            let expected = (a * c).signum() * r;
            prop_assert!((rs - expected).abs() < 1e-9);
        }
    }
}
