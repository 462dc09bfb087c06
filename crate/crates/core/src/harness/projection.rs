//! 2D projection of the mu/sigma latents for visualisation export.
//!
//! PCA instead of a stochastic embedding: deterministic, dependency-free,
//! and sufficient for the branch-separation property being checked. The
//! eigensolve is a cyclic Jacobi iteration on the 64x64 covariance.

use crate::data::Subset;
use crate::error::{Error, Result};
use crate::student::StudentParams;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Mu,
    Sigma,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Mu => "mu",
            Branch::Sigma => "sigma",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionRow {
    pub id: String,
    pub branch: Branch,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionExport {
    pub rows: Vec<ProjectionRow>,
    /// The two principal directions (loadings), orthonormal.
    pub axes: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
}

/// Collect z_mu and z_sigma for every example, fit PCA on their union, and
/// emit 2D coordinates tagged by branch (all mu rows, then all sigma rows).
pub fn project_features(params: &StudentParams, data: &Subset) -> Result<ProjectionExport> {
    if data.len() < 3 {
        return Err(Error::Data(format!(
            "projection needs at least 3 examples, got {}",
            data.len()
        )));
    }
    let n = data.len();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (mu, _) = params.infer_latents(data.features(i))?;
        vectors.push(mu);
    }
    for i in 0..n {
        let (_, sigma) = params.infer_latents(data.features(i))?;
        vectors.push(sigma);
    }
    let dim = vectors[0].len();
    let total = vectors.len();

    let mut mean = vec![0.0; dim];
    for v in &vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= total as f64;
    }
    let mut cov = vec![0.0; dim * dim];
    for v in &vectors {
        for i in 0..dim {
            let vi = v[i] - mean[i];
            for j in i..dim {
                cov[i * dim + j] += vi * (v[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let c = cov[i * dim + j] / total as f64;
            cov[i * dim + j] = c;
            cov[j * dim + i] = c;
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen(&cov, dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).expect("finite eigenvalues"));
    let mut axes = [vec![0.0; dim], vec![0.0; dim]];
    let mut explained = [0.0; 2];
    for (k, &col) in order.iter().take(2).enumerate() {
        let mut axis: Vec<f64> = (0..dim).map(|r| eigvecs[r * dim + col]).collect();
        // fix the sign: largest-magnitude coordinate positive
        let lead = axis
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).expect("finite axis"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if axis[lead] < 0.0 {
            for v in &mut axis {
                *v = -*v;
            }
        }
        explained[k] = eigvals[col];
        axes[k] = axis;
    }

    let mut rows = Vec::with_capacity(total);
    for (idx, v) in vectors.iter().enumerate() {
        let branch = if idx < n { Branch::Mu } else { Branch::Sigma };
        let ex = idx % n;
        let mut x = 0.0;
        let mut y = 0.0;
        for i in 0..dim {
            let c = v[i] - mean[i];
            x += c * axes[0][i];
            y += c * axes[1][i];
        }
        rows.push(ProjectionRow {
            id: data.id(ex).to_string(),
            branch,
            x,
            y,
        });
    }
    Ok(ProjectionExport {
        rows,
        axes,
        explained_variance: explained,
    })
}

impl ProjectionExport {
    /// Euclidean distance between the mu and sigma centroids in 2D.
    pub fn branch_centroid_distance(&self) -> f64 {
        let mut mu = (0.0, 0.0, 0usize);
        let mut sg = (0.0, 0.0, 0usize);
        for r in &self.rows {
            match r.branch {
                Branch::Mu => {
                    mu.0 += r.x;
                    mu.1 += r.y;
                    mu.2 += 1;
                }
                Branch::Sigma => {
                    sg.0 += r.x;
                    sg.1 += r.y;
                    sg.2 += 1;
                }
            }
        }
        let (mx, my) = (mu.0 / mu.2 as f64, mu.1 / mu.2 as f64);
        let (sx, sy) = (sg.0 / sg.2 as f64, sg.1 / sg.2 as f64);
        ((mx - sx).powi(2) + (my - sy).powi(2)).sqrt()
    }

    /// Variance of the projected coordinates along each axis.
    pub fn projected_variances(&self) -> (f64, f64) {
        let n = self.rows.len() as f64;
        let mx = self.rows.iter().map(|r| r.x).sum::<f64>() / n;
        let my = self.rows.iter().map(|r| r.y).sum::<f64>() / n;
        let vx = self.rows.iter().map(|r| (r.x - mx) * (r.x - mx)).sum::<f64>() / n;
        let vy = self.rows.iter().map(|r| (r.y - my) * (r.y - my)).sum::<f64>() / n;
        (vx, vy)
    }
}

/// Cyclic Jacobi eigensolver for a symmetric matrix (row-major). Returns
/// (eigenvalues, eigenvectors as columns).
fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    (eigvals, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Corpus, Example, PreparedCorpus};
    use crate::student::TrainConfig;

    #[test]
    fn jacobi_diagonalizes_a_known_matrix() {
        // eigenvalues of [[2,1],[1,2]] are 3 and 1
        let (vals, vecs) = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((sorted[0] - 1.0).abs() < 1e-12);
        assert!((sorted[1] - 3.0).abs() < 1e-12);
        // columns orthonormal
        let dot = vecs[0] * vecs[1] + vecs[2] * vecs[3];
        assert!(dot.abs() < 1e-12);
    }

    fn tiny_setup() -> (PreparedCorpus, StudentParams) {
        let examples = (0..12)
            .map(|i| Example {
                id: format!("p-{i}"),
                text: format!("word{} word{} tail", i % 3, i % 5),
                label: i % 2,
                domain: "p".into(),
            })
            .collect();
        let prep = PreparedCorpus::prepare(Corpus { examples }, 512, 2, 2).unwrap();
        let cfg = TrainConfig {
            feature_dim: 512,
            hidden_dim: 8,
            ..TrainConfig::default()
        };
        let mut rng = crate::rng::stream(8, &["init"]);
        let params = StudentParams::init(&cfg, 2, &mut rng);
        (prep, params)
    }

    #[test]
    fn projection_has_two_rows_per_example_and_ordered_axes() {
        let (prep, params) = tiny_setup();
        let all = prep.all();
        let export = project_features(&params, &all).unwrap();
        assert_eq!(export.rows.len(), 2 * all.len());
        let (vx, vy) = export.projected_variances();
        assert!(vx >= vy, "axis variances {vx} < {vy}");
        // orthonormal principal directions
        let dot: f64 = export.axes[0].iter().zip(&export.axes[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
        for axis in &export.axes {
            let norm: f64 = axis.iter().map(|v| v * v).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_rejects_tiny_corpora() {
        let (prep, params) = tiny_setup();
        let two = Subset {
            prep: &prep,
            indices: vec![0, 1],
        };
        assert!(project_features(&params, &two).is_err());
    }

    #[test]
    fn centroid_distance_is_positive_for_disjoint_clouds() {
        let export = ProjectionExport {
            rows: vec![
                ProjectionRow { id: "a".into(), branch: Branch::Mu, x: 1.0, y: 1.0 },
                ProjectionRow { id: "b".into(), branch: Branch::Mu, x: 2.0, y: 1.0 },
                ProjectionRow { id: "a".into(), branch: Branch::Sigma, x: -1.0, y: -1.0 },
                ProjectionRow { id: "b".into(), branch: Branch::Sigma, x: -2.0, y: -1.0 },
            ],
            axes: [vec![1.0, 0.0], vec![0.0, 1.0]],
            explained_variance: [1.0, 0.5],
        };
        let d = export.branch_centroid_distance();
        assert!((d - (3.0f64 * 3.0 + 2.0 * 2.0).sqrt()).abs() < 1e-12);
    }
}
