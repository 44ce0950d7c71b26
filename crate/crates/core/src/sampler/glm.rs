use nalgebra::{DMatrix, DVector};

use crate::stats::{norm_cdf, norm_log_pdf};

const MAX_ITER: usize = 50;
const TOLERANCE: f64 = 1e-8;

/// Probit regression of `y` on `design` by iteratively reweighted least
/// squares over the rows where `rows` is true. Returns `None` when the fit does
/// not converge (separation, rank deficiency).
pub fn probit_glm(design: &DMatrix<f64>, y: &[bool], rows: &[bool]) -> Option<Vec<f64>> {
    let p = design.ncols();
    let mut beta = DVector::<f64>::zeros(p);
    for _ in 0..MAX_ITER {
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwz = DVector::<f64>::zeros(p);
        for i in (0..design.nrows()).filter(|&i| rows[i]) {
            let x = design.row(i);
            let eta: f64 = (0..p).map(|j| x[j] * beta[j]).sum();
            let mu = norm_cdf(eta).clamp(1e-10, 1.0 - 1e-10);
            let dens = norm_log_pdf(eta, 0.0, 1.0).exp().max(1e-300);
            let weight = dens * dens / (mu * (1.0 - mu));
            let target = eta + (f64::from(u8::from(y[i])) - mu) / dens;
            for a in 0..p {
                xtwz[a] += weight * x[a] * target;
                for b in 0..p {
                    xtwx[(a, b)] += weight * x[a] * x[b];
                }
            }
        }
        let next = xtwx.cholesky()?.solve(&xtwz);
        if !next.iter().all(|b| b.is_finite()) {
            return None;
        }
        let step = (&next - &beta).amax();
        beta = next;
        if step < TOLERANCE {
            return Some(beta.iter().copied().collect());
        }
    }
    None
}
