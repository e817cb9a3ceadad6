//! Fixed-effect regressions: OLS with robust covariances, iterated feasible
//! GLS for seemingly unrelated regressions, and a gamma/log GLM for costs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{CeaError, Result};
use crate::linalg::check_full_rank;
use crate::lmm::cluster_rows;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
    /// Residual variance `e'e / (n - k)`.
    pub sigma2: f64,
}

impl OlsFit {
    pub fn classical_cov(&self) -> DMatrix<f64> {
        &self.xtx_inv * self.sigma2
    }
}

pub fn ols(y: &DVector<f64>, x: &DMatrix<f64>, names: &[String]) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(CeaError::validation(format!("y has {} rows, X has {n}", y.len())));
    }
    let xtx = x.transpose() * x;
    check_full_rank(&xtx, names)?;
    let chol = xtx.cholesky().ok_or_else(|| CeaError::Singular("X'X".into()))?;
    let beta = chol.solve(&(x.transpose() * y));
    let residuals = y - x * &beta;
    let sigma2 = if n > k { residuals.dot(&residuals) / (n - k) as f64 } else { f64::NAN };
    Ok(OlsFit { beta, residuals, xtx_inv: chol.inverse(), sigma2 })
}

/// Heteroskedasticity-robust (HC1) covariance: `n/(n-k) (X'X)⁻¹ Σ eᵢ² xᵢxᵢᵀ (X'X)⁻¹`.
pub fn hc1_cov(x: &DMatrix<f64>, residuals: &DVector<f64>, xtx_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat.syger(residuals[i] * residuals[i], &xi, &xi, 1.0);
    }
    meat.fill_upper_triangle_with_lower_triangle();
    xtx_inv * meat * xtx_inv * (n as f64 / (n - k) as f64)
}

/// Cluster-robust (CR1) covariance with the `G/(G-1) · (n-1)/(n-k)` factor,
/// which collapses to HC1 when every observation is its own cluster.
pub fn cluster_robust_cov(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    xtx_inv: &DMatrix<f64>,
    cluster: &[usize],
) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let groups = cluster_rows(cluster);
    let g = groups.len() as f64;
    let mut meat = DMatrix::zeros(k, k);
    for (_, rows) in &groups {
        let mut u = DVector::zeros(k);
        for &i in rows {
            u.axpy(residuals[i], &x.row(i).transpose(), 1.0);
        }
        meat.syger(1.0, &u, &u, 1.0);
    }
    meat.fill_upper_triangle_with_lower_triangle();
    let factor = g / (g - 1.0) * (n as f64 - 1.0) / (n - k) as f64;
    xtx_inv * meat * xtx_inv * factor
}

pub const SUR_TOL: f64 = 1e-8;
pub const SUR_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SurFit {
    pub names: [Vec<String>; 2],
    pub beta: [Vec<f64>; 2],
    /// Cross-equation residual covariance.
    pub sigma: [[f64; 2]; 2],
    /// Cluster-robust covariance of the stacked coefficients
    /// (first equation, then second).
    pub cov: DMatrix<f64>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl SurFit {
    fn offset(&self, eq: usize) -> usize {
        if eq == 0 {
            0
        } else {
            self.beta[0].len()
        }
    }

    pub fn index_of(&self, eq: usize, name: &str) -> Option<usize> {
        self.names[eq].iter().position(|n| n == name).map(|k| self.offset(eq) + k)
    }

    pub fn coefficient(&self, eq: usize, name: &str) -> Option<f64> {
        self.names[eq].iter().position(|n| n == name).map(|k| self.beta[eq][k])
    }

    pub fn std_error(&self, eq: usize, name: &str) -> Option<f64> {
        self.index_of(eq, name).map(|k| libm::sqrt(self.cov[(k, k)]))
    }

    /// Covariance block for one equation.
    pub fn equation_cov(&self, eq: usize) -> DMatrix<f64> {
        let off = self.offset(eq);
        let k = self.beta[eq].len();
        self.cov.view((off, off), (k, k)).into_owned()
    }
}

fn inverse_2x2(s: &[[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    Some([[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]])
}

/// Two-equation SUR by iterated feasible GLS with a cluster-robust sandwich
/// covariance (`G/(G-1)` small-sample factor).
pub fn fit_sur(
    y: [&DVector<f64>; 2],
    x: [&DMatrix<f64>; 2],
    names: [&[String]; 2],
    cluster: &[usize],
) -> Result<SurFit> {
    let n = y[0].len();
    if y[1].len() != n || x[0].nrows() != n || x[1].nrows() != n || cluster.len() != n {
        return Err(CeaError::validation("SUR equations are not aligned on the same rows"));
    }
    let groups = cluster_rows(cluster);
    if groups.len() < 2 {
        return Err(CeaError::InsufficientData(format!("need at least 2 clusters, got {}", groups.len())));
    }
    let k = [x[0].ncols(), x[1].ncols()];
    let mut beta = [ols(y[0], x[0], names[0])?.beta, ols(y[1], x[1], names[1])?.beta];
    let cross = |a: usize, b: usize| x[a].transpose() * x[b];
    let xx = [[cross(0, 0), cross(0, 1)], [cross(1, 0), cross(1, 1)]];
    let xy = [[x[0].transpose() * y[0], x[0].transpose() * y[1]], [x[1].transpose() * y[0], x[1].transpose() * y[1]]];

    let residuals = |beta: &[DVector<f64>; 2]| [y[0] - x[0] * &beta[0], y[1] - x[1] * &beta[1]];
    let sigma_of = |e: &[DVector<f64>; 2]| {
        let mut s = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] = e[a].dot(&e[b]) / n as f64;
            }
        }
        s
    };

    let mut converged = false;
    let mut iterations = 0;
    let mut s_inv = [[0.0; 2]; 2];
    let mut system_inv = DMatrix::zeros(k[0] + k[1], k[0] + k[1]);
    for iter in 1..=SUR_MAX_ITER {
        iterations = iter;
        let sigma = sigma_of(&residuals(&beta));
        s_inv = inverse_2x2(&sigma).ok_or_else(|| CeaError::Singular("cross-equation residual covariance".into()))?;
        let mut a = DMatrix::zeros(k[0] + k[1], k[0] + k[1]);
        let mut rhs = DVector::zeros(k[0] + k[1]);
        let off = [0, k[0]];
        for p in 0..2 {
            for q in 0..2 {
                a.view_mut((off[p], off[q]), (k[p], k[q])).copy_from(&(&xx[p][q] * s_inv[p][q]));
                rhs.rows_mut(off[p], k[p]).axpy(s_inv[p][q], &xy[p][q], 1.0);
            }
        }
        let chol = a.cholesky().ok_or_else(|| CeaError::Singular("stacked SUR system".into()))?;
        let stacked = chol.solve(&rhs);
        system_inv = chol.inverse();
        let next = [stacked.rows(0, k[0]).into_owned(), stacked.rows(k[0], k[1]).into_owned()];
        let change = (0..2)
            .flat_map(|e| (0..k[e]).map(move |j| (e, j)))
            .map(|(e, j)| (next[e][j] - beta[e][j]).abs() / (1.0 + beta[e][j].abs()))
            .fold(0.0, f64::max);
        beta = next;
        if change < SUR_TOL {
            converged = true;
            break;
        }
    }

    let e = residuals(&beta);
    let kt = k[0] + k[1];
    let mut meat = DMatrix::zeros(kt, kt);
    for (_, rows) in &groups {
        let mut u = DVector::zeros(kt);
        for &i in rows {
            for p in 0..2 {
                let w = s_inv[p][0] * e[0][i] + s_inv[p][1] * e[1][i];
                let off = if p == 0 { 0 } else { k[0] };
                for j in 0..k[p] {
                    u[off + j] += w * x[p][(i, j)];
                }
            }
        }
        meat.syger(1.0, &u, &u, 1.0);
    }
    meat.fill_upper_triangle_with_lower_triangle();
    let g = groups.len() as f64;
    let cov = &system_inv * meat * &system_inv * (g / (g - 1.0));
    Ok(SurFit {
        names: [names[0].to_vec(), names[1].to_vec()],
        beta: [beta[0].iter().copied().collect(), beta[1].iter().copied().collect()],
        sigma: sigma_of(&e),
        cov,
        n_obs: n,
        n_clusters: groups.len(),
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub names: Vec<String>,
    pub beta: DVector<f64>,
    /// Cluster-robust covariance.
    pub cov: DMatrix<f64>,
    pub iterations: usize,
}

/// Gamma-family GLM with log link by IRLS (working weights are constant for
/// this pairing), with a cluster-robust sandwich covariance.
pub fn fit_gamma_log(y: &[f64], x: &DMatrix<f64>, cluster: &[usize], names: &[String]) -> Result<GlmFit> {
    let (n, k) = x.shape();
    if y.len() != n || cluster.len() != n {
        return Err(CeaError::validation("GLM inputs are not aligned"));
    }
    if y.iter().any(|v| *v < 0.0) {
        return Err(CeaError::Domain("gamma/log model needs nonnegative outcomes".into()));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return Err(CeaError::Domain("gamma/log model needs a positive mean outcome".into()));
    }
    let xtx = x.transpose() * x;
    check_full_rank(&xtx, names)?;
    let chol = xtx.cholesky().ok_or_else(|| CeaError::Singular("X'X".into()))?;
    let mut beta = DVector::zeros(k);
    let intercept = names.iter().position(|n| n == "intercept").unwrap_or(0);
    beta[intercept] = libm::log(mean);
    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=100 {
        iterations = iter;
        let eta = x * &beta;
        let z = DVector::from_fn(n, |i, _| {
            let mu = libm::exp(eta[i]);
            eta[i] + (y[i] - mu) / mu
        });
        let next = chol.solve(&(x.transpose() * z));
        let change = (&next - &beta).amax();
        beta = next;
        if !beta.iter().all(|b| b.is_finite()) {
            break;
        }
        if change < 1e-10 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CeaError::Convergence {
            iterations,
            context: "gamma/log IRLS".into(),
            last_iterate: beta.iter().copied().collect(),
        });
    }
    let eta = x * &beta;
    let score_resid = DVector::from_fn(n, |i, _| {
        let mu = libm::exp(eta[i]);
        (y[i] - mu) / mu
    });
    let bread = chol.inverse();
    let groups = cluster_rows(cluster);
    let g = groups.len() as f64;
    let mut meat = DMatrix::zeros(k, k);
    for (_, rows) in &groups {
        let mut u = DVector::zeros(k);
        for &i in rows {
            u.axpy(score_resid[i], &x.row(i).transpose(), 1.0);
        }
        meat.syger(1.0, &u, &u, 1.0);
    }
    meat.fill_upper_triangle_with_lower_triangle();
    let cov = &bread * meat * &bread * (g / (g - 1.0));
    Ok(GlmFit { names: names.to_vec(), beta, cov, iterations })
}
