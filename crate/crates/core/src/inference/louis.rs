use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{negbin_score_info, poisson_score_info, ModelKind, RouteSums, TrafficModel};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LouisResult {
    /// Observed information over `θ` (and `α` last for negbin).
    pub info: Matrix<f64>,
    pub std_errors: Vec<f64>,
    /// The information was singular or indefinite and a pseudo-inverse
    /// of its positive part was used.
    pub pseudo_inverse: bool,
}

/// Observed information by the missing-information principle:
/// for each observation, the mean complete-data information over its
/// conditional draws minus the covariance of the complete-data scores,
/// summed over observations. `draws[t]` holds flow vectors drawn from the
/// conditional given observation `t` at `m`'s parameters.
pub fn louis_standard_errors(m: &TrafficModel<f64>, draws: &[Vec<Vec<i64>>]) -> Result<LouisResult> {
    let r = m.routes();
    let mut flat = Vec::with_capacity(draws.len());
    for d in draws {
        if d.is_empty() {
            return Err(Error::Invalid("no conditional draws for an observation".into()));
        }
        let mut f = Vec::with_capacity(d.len() * r);
        for x in d {
            if x.len() != r || x.iter().any(|&v| v < 0) {
                return Err(Error::Invalid("draws must be nonnegative flow vectors of the model's size".into()));
            }
            f.extend_from_slice(x);
        }
        flat.push(f);
    }
    louis_flat(m, &flat)
}

pub(crate) fn louis_flat(m: &TrafficModel<f64>, draws: &[Vec<i64>]) -> Result<LouisResult> {
    let r = m.routes();
    if m.theta().iter().any(|&t| t <= 0.0) {
        return Err(Error::Invalid("θ on the boundary".into()));
    }
    let k = if m.kind() == ModelKind::Negbin { r + 1 } else { r };
    let sums: Vec<RouteSums> = if m.kind() == ModelKind::Negbin {
        (0..r)
            .map(|j| {
                let max = draws.iter().flat_map(|d| d.chunks(r).map(move |x| x[j])).max().unwrap_or(0);
                RouteSums::new(m.theta()[j], m.alpha(), max as usize)
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut info = Matrix::<f64>::zeros(k, k);
    for d in draws {
        let n = (d.len() / r) as f64;
        let mut mean_s = vec![0.0; k];
        let mut second = Matrix::<f64>::zeros(k, k);
        for x in d.chunks(r) {
            let xs = [x.to_vec()];
            let (s, i) = match m.kind() {
                ModelKind::Poisson => poisson_score_info(m.theta(), &xs),
                ModelKind::Negbin => negbin_score_info(m.theta(), m.alpha(), &sums, &xs),
            };
            for p in 0..k {
                mean_s[p] += s[p] / n;
                for q in 0..k {
                    info[(p, q)] += i[(p, q)] / n;
                    second[(p, q)] += s[p] * s[q] / n;
                }
            }
        }
        for p in 0..k {
            for q in 0..k {
                info[(p, q)] -= second[(p, q)] - mean_s[p] * mean_s[q];
            }
        }
    }
    let (std_errors, pseudo_inverse) = inverse_diagonal_sqrt(&info);
    if pseudo_inverse {
        log::warn!("observed information is singular or indefinite; standard errors use a pseudo-inverse");
    }
    Ok(LouisResult { info, std_errors, pseudo_inverse })
}

/// `sqrt(diag(I⁻¹))` via a symmetric eigendecomposition; eigenvalues not
/// clearly positive are dropped (pseudo-inverse) and flagged.
pub(crate) fn inverse_diagonal_sqrt(info: &Matrix<f64>) -> (Vec<f64>, bool) {
    let k = info.rows();
    let sym = DMatrix::from_fn(k, k, |i, j| 0.5 * (info[(i, j)] + info[(j, i)]));
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let eps = top * 1e-10;
    let mut pseudo = false;
    let mut diag = vec![0.0; k];
    for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= eps {
            pseudo = true;
            continue;
        }
        for (i, d) in diag.iter_mut().enumerate() {
            let v = eig.eigenvectors[(i, c)];
            *d += v * v / lambda;
        }
    }
    (diag.into_iter().map(f64::sqrt).collect(), pseudo || top == 0.0)
}
