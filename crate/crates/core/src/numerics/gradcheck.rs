//! Finite-difference verification of tape gradients.

use crate::error::Result;
use crate::numerics::tensor::Tensor;
use rand::Rng;

const FD_STEP: f64 = 1e-5;

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// (parameter index, flat coordinate, analytic, finite-difference) of the
    /// worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub rel_tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.rel_tol
    }
}

/// Compare analytic gradients against central finite differences with step
/// 1e-5 on `samples_per_param` randomly sampled coordinates per parameter.
///
/// `loss_fn` evaluates the loss at the given parameters and returns the loss
/// value plus one gradient tensor per parameter (usually via a fresh tape).
pub fn grad_check<F>(
    mut loss_fn: F,
    params: &[Tensor],
    rel_tol: f64,
    samples_per_param: usize,
    rng: &mut impl Rng,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (_, analytic) = loss_fn(params)?;
    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel_err: f64 = 0.0;
    let mut worst = None;
    let mut coords_checked = 0;

    for (pi, p) in params.iter().enumerate() {
        for _ in 0..samples_per_param.min(p.numel()) {
            let ci = rng.random_range(0..p.numel());
            let orig = p.data()[ci];

            work[pi].data_mut()[ci] = orig + FD_STEP;
            let (plus, _) = loss_fn(&work)?;
            work[pi].data_mut()[ci] = orig - FD_STEP;
            let (minus, _) = loss_fn(&work)?;
            work[pi].data_mut()[ci] = orig;

            let fd = (plus - minus) / (2.0 * FD_STEP);
            let an = analytic[pi].data()[ci];
            let denom = an.abs().max(fd.abs()).max(1e-6);
            let rel = (an - fd).abs() / denom;
            coords_checked += 1;
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((pi, ci, an, fd));
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        coords_checked,
        worst,
        rel_tol,
    })
}
