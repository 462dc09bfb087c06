//! Orthogonal-rotation verifier: the Helmert-style matrix whose first row is
//! the scaled all-ones vector, plus algebraic and Monte-Carlo checks that the
//! sample mean and sample variance of iid normals are independent.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

/// The n x n orthogonal matrix with first row 1/sqrt(n) everywhere and row
/// k > 1 equal to (1, ..., 1, -(k-1), 0, ..., 0) / sqrt(k(k-1)) with k-1
/// leading ones.
#[derive(Debug, Clone, PartialEq)]
pub struct HelmertMatrix {
    pub n: usize,
    pub a: Tensor,
}

pub fn helmert(n: usize) -> Result<HelmertMatrix> {
    if n < 2 {
        return Err(Error::Config(format!("helmert matrix needs n >= 2, got {n}")));
    }
    let mut data = vec![0.0; n * n];
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    for j in 0..n {
        data[j] = inv_sqrt_n;
    }
    for k in 2..=n {
        let denom = 1.0 / ((k * (k - 1)) as f64).sqrt();
        let row = k - 1;
        for j in 0..(k - 1) {
            data[row * n + j] = denom;
        }
        data[row * n + (k - 1)] = -((k - 1) as f64) * denom;
    }
    Ok(HelmertMatrix {
        n,
        a: Tensor::matrix(n, n, data)?,
    })
}

impl HelmertMatrix {
    /// Max-norm of A^T A - I.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.n;
        let a = self.a.data();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut dot = 0.0;
                for k in 0..n {
                    dot += a[k * n + i] * a[k * n + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// y = A x.
    pub fn rotate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                op: "helmert rotate",
                detail: format!("vector length {} vs n {}", x.len(), self.n),
            });
        }
        let a = self.a.data();
        Ok((0..self.n)
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..self.n {
                    acc += a[i * self.n + j] * x[j];
                }
                acc
            })
            .collect())
    }
}

/// What the independence verifier measured. Thresholds live with the
/// callers; this is a report, not a gate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IndependenceReport {
    pub n: usize,
    pub trials: usize,
    pub algebraic_vectors: usize,
    /// worst relative error of (n-1) S^2 = sum_{i>=2} Y_i^2
    pub max_variance_identity_rel_err: f64,
    /// worst absolute error of sqrt(n) mean(X) = Y_1
    pub max_mean_identity_abs_err: f64,
    /// Pearson correlation of (mean, variance) over the Monte-Carlo trials
    pub mean_variance_correlation: f64,
    pub orthogonality_error: f64,
}

/// Check, for `algebraic_vectors` random vectors, that rotating by the
/// Helmert matrix sends the sample mean to the first coordinate and the
/// scaled sample variance to the remaining coordinates' energy; then draw
/// `trials` iid standard-normal samples of size n and report the empirical
/// correlation between sample mean and sample variance.
pub fn verify_independence(n: usize, trials: usize, seed: u64) -> Result<IndependenceReport> {
    if n < 2 {
        return Err(Error::Config(format!("need n >= 2, got {n}")));
    }
    if trials < 1000 {
        return Err(Error::Config(format!("need at least 1000 trials, got {trials}")));
    }
    let h = helmert(n)?;
    let mut rng = crate::rng::stream(seed, &["verify-independence"]);

    const ALGEBRAIC_VECTORS: usize = 1000;
    let mut max_var_rel = 0.0f64;
    let mut max_mean_abs = 0.0f64;
    for _ in 0..ALGEBRAIC_VECTORS {
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
        let (mean, s2) = sample_mean_var(&x);
        let y = h.rotate(&x)?;
        let lhs = (n - 1) as f64 * s2;
        let rhs: f64 = y[1..].iter().map(|v| v * v).sum();
        let rel = (lhs - rhs).abs() / lhs.abs().max(1e-12);
        max_var_rel = max_var_rel.max(rel);
        let mean_err = ((n as f64).sqrt() * mean - y[0]).abs();
        max_mean_abs = max_mean_abs.max(mean_err);
    }

    let mut means = Vec::with_capacity(trials);
    let mut vars = Vec::with_capacity(trials);
    let mut draw = vec![0.0; n];
    for _ in 0..trials {
        for v in draw.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let (m, s2) = sample_mean_var(&draw);
        means.push(m);
        vars.push(s2);
    }
    let corr = pearson(&means, &vars);

    Ok(IndependenceReport {
        n,
        trials,
        algebraic_vectors: ALGEBRAIC_VECTORS,
        max_variance_identity_rel_err: max_var_rel,
        max_mean_identity_abs_err: max_mean_abs,
        mean_variance_correlation: corr,
        orthogonality_error: h.orthogonality_error(),
    })
}

/// Sample mean and the (n-1)-denominator sample variance.
pub fn sample_mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let s2 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, s2)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt()).max(1e-300)
}

impl IndependenceReport {
    pub fn render_text(&self) -> String {
        format!(
            "independence verification (n={}, trials={})\n\
             helmert orthogonality max|A^T A - I|: {:.3e}\n\
             variance identity worst rel err over {} vectors: {:.3e}\n\
             mean identity worst abs err: {:.3e}\n\
             corr(sample mean, sample variance): {:.5}\n",
            self.n,
            self.trials,
            self.orthogonality_error,
            self.algebraic_vectors,
            self.max_variance_identity_rel_err,
            self.max_mean_identity_abs_err,
            self.mean_variance_correlation
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helmert_2_hand_computed() {
        let h = helmert(2).unwrap();
        let r = 1.0 / 2.0f64.sqrt();
        let d = h.a.data();
        assert!((d[0] - r).abs() < 1e-15 && (d[1] - r).abs() < 1e-15);
        assert!((d[2] - r).abs() < 1e-15 && (d[3] + r).abs() < 1e-15);
        assert!(helmert(1).is_err());
    }

    #[test]
    fn helmert_first_row_is_uniform() {
        let h = helmert(5).unwrap();
        let expect = 1.0 / 5.0f64.sqrt();
        for j in 0..5 {
            assert!((h.a.data()[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn helmert_rows_are_orthonormal_up_to_64() {
        for n in 2..=64 {
            let h = helmert(n).unwrap();
            assert!(
                h.orthogonality_error() < 1e-10,
                "n={n} err={}",
                h.orthogonality_error()
            );
            let a = h.a.data();
            for i in 0..n {
                for j in i..n {
                    let dot: f64 = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum();
                    if i == j {
                        assert!((dot - 1.0).abs() < 1e-12);
                    } else {
                        assert!(dot.abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_vector_has_zero_variance_and_zero_tail() {
        let h = helmert(6).unwrap();
        let x = vec![2.5; 6];
        let (_, s2) = sample_mean_var(&x);
        assert!(s2.abs() < 1e-30);
        let y = h.rotate(&x).unwrap();
        for v in &y[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn algebraic_identity_holds_for_many_sizes() {
        for &n in &[2usize, 5, 64] {
            let rep = verify_independence(n, 1000, 42).unwrap();
            assert!(rep.max_variance_identity_rel_err < 1e-8, "n={n}: {rep:?}");
            assert!(rep.max_mean_identity_abs_err < 1e-10, "n={n}: {rep:?}");
        }
    }

    #[test]
    fn verifier_validates_inputs() {
        assert!(verify_independence(1, 2000, 0).is_err());
        assert!(verify_independence(10, 10, 0).is_err());
    }
}
