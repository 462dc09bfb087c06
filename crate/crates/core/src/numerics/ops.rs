//! Loss primitives as plain vector functions.
//!
//! These are the scalar/vector forms used directly by callers and tests; the
//! tape ops in [`super::tape`] apply the same kernels row-wise and add the
//! backward rules.

use crate::error::{Error, Result};

/// Non-parametric whitening: center to zero mean and scale to unit
/// population variance, with `eps` guarding degenerate inputs. No learned
/// scale or bias.
pub fn whiten(v: &[f64], eps: f64) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::Dimension {
            op: "whiten",
            detail: format!("need at least 2 elements, got {}", v.len()),
        });
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let scale = 1.0 / (var + eps).sqrt();
    Ok(v.iter().map(|x| (x - mean) * scale).collect())
}

/// Mean smooth-L1 distance: quadratic inside `beta`, linear outside,
/// continuous (and C1) at the branch point.
pub fn smooth_l1(a: &[f64], b: &[f64], beta: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            op: "smooth_l1",
            detail: format!("lengths {} vs {}", a.len(), b.len()),
        });
    }
    if beta <= 0.0 {
        return Err(Error::Config(format!("smooth_l1 beta must be positive, got {beta}")));
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| smooth_l1_elem(x - y, beta))
        .sum();
    Ok(total / a.len() as f64)
}

pub(crate) fn smooth_l1_elem(diff: f64, beta: f64) -> f64 {
    let d = diff.abs();
    if d <= beta {
        d * d / (2.0 * beta)
    } else {
        d - beta / 2.0
    }
}

pub(crate) fn smooth_l1_deriv(diff: f64, beta: f64) -> f64 {
    if diff.abs() <= beta {
        diff / beta
    } else {
        diff.signum()
    }
}

/// KL divergence from N(mu, diag exp(logvar)) to the standard normal prior,
/// summed over dimensions.
pub fn kl_to_standard_normal(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::Dimension {
            op: "kl_to_standard_normal",
            detail: format!("lengths {} vs {}", mu.len(), logvar.len()),
        });
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum())
}

/// z = mu + exp(logvar / 2) * noise, elementwise.
pub fn reparameterize(mu: &[f64], logvar: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != noise.len() {
        return Err(Error::Dimension {
            op: "reparameterize",
            detail: format!("lengths {} / {} / {}", mu.len(), logvar.len(), noise.len()),
        });
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// Negative log softmax probability of `label`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Index {
            op: "cross_entropy",
            detail: format!("label {} out of range for {} logits", label, logits.len()),
        });
    }
    Ok(log_sum_exp(logits) - logits[label])
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax probabilities of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Population mean and variance of a slice.
pub fn mean_popvar(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn whiten_hand_computed() {
        // mean 2, popvar 2/3 -> +-sqrt(3/2)
        let w = whiten(&[1.0, 2.0, 3.0], 0.0).unwrap();
        let r = (1.5f64).sqrt();
        assert!(close(w[0], -r, 1e-12) && close(w[1], 0.0, 1e-12) && close(w[2], r, 1e-12));
        assert!(close(w[0], -1.22474, 1e-5));
    }

    #[test]
    fn whiten_constant_is_zero_not_error() {
        let w = whiten(&[5.0, 5.0, 5.0], 1e-5).unwrap();
        assert!(w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn whiten_two_point_identity() {
        let w = whiten(&[-1.0, 1.0], 0.0).unwrap();
        assert!(close(w[0], -1.0, 1e-12) && close(w[1], 1.0, 1e-12));
    }

    #[test]
    fn whiten_rejects_short_input() {
        assert!(whiten(&[1.0], 1e-5).is_err());
    }

    #[test]
    fn smooth_l1_branches() {
        // quadratic branch: 1^2 / (2*2)
        assert!(close(smooth_l1(&[1.0], &[0.0], 2.0).unwrap(), 0.25, 1e-12));
        // linear branch: 3 - 2/2
        assert!(close(smooth_l1(&[3.0], &[0.0], 2.0).unwrap(), 2.0, 1e-12));
        assert_eq!(smooth_l1(&[1.0, 2.0], &[1.0, 2.0], 2.0).unwrap(), 0.0);
        assert!(smooth_l1(&[1.0], &[1.0, 2.0], 2.0).is_err());
    }

    #[test]
    fn smooth_l1_continuous_at_branch_point() {
        // both branch formulas give beta/2 per element at d = beta
        let beta = 2.0;
        let quadratic = beta * beta / (2.0 * beta);
        let linear = beta - beta / 2.0;
        assert!(close(quadratic, 1.0, 1e-12));
        assert!(close(linear, 1.0, 1e-12));
        assert!(close(quadratic, linear, 1e-12));
        // derivative is also continuous there: d/beta = 1 = sign(d)
        assert!(close(smooth_l1_deriv(beta, beta), 1.0, 1e-12));
        assert!(close(smooth_l1_deriv(beta + 1e-15, beta), 1.0, 1e-12));
    }

    #[test]
    fn kl_hand_computed() {
        assert_eq!(kl_to_standard_normal(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!(close(kl_to_standard_normal(&[1.0], &[0.0]).unwrap(), 0.5, 1e-12));
        // 0.5 * (4 + 0 - 1 - ln 4)
        let v = kl_to_standard_normal(&[0.0], &[4.0f64.ln()]).unwrap();
        assert!(close(v, 0.8068528194400547, 1e-12));
        assert!(kl_to_standard_normal(&[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn reparameterize_hand_computed() {
        assert_eq!(reparameterize(&[1.0, -2.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(reparameterize(&[0.0], &[0.0], &[0.7]).unwrap(), vec![0.7]);
        // 1 + exp(ln 4 / 2) * 0.5 = 1 + 2 * 0.5
        let z = reparameterize(&[1.0], &[4.0f64.ln()], &[0.5]).unwrap();
        assert!(close(z[0], 2.0, 1e-12));
        assert!(reparameterize(&[0.0], &[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn cross_entropy_hand_computed() {
        assert!(close(cross_entropy(&[0.0, 0.0], 0).unwrap(), 2.0f64.ln(), 1e-12));
        assert!(cross_entropy(&[100.0, 0.0], 0).unwrap() < 1e-12);
        // ln(1 + e^-2)
        let v = cross_entropy(&[2.0, 0.0], 0).unwrap();
        assert!(close(v, (1.0 + (-2.0f64).exp()).ln(), 1e-12));
        assert!(close(v, 0.12693, 1e-5));
        assert!(cross_entropy(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn softmax_sums_to_one_and_is_stable() {
        let p = softmax(&[1000.0, 999.0]);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!(close(p.iter().sum::<f64>(), 1.0, 1e-12));
    }
}
