//! Logistic regression, with and without a cluster random intercept, and the
//! missingness model built on it.
//!
//! The random-intercept likelihood is integrated by adaptive Gauss-Hermite
//! quadrature around each cluster's conditional mode. Writing the intercept
//! as `σu` with `u ~ N(0, 1)` keeps `σ = 0` inside the parameter space, where
//! the approximation is exact and reduces to ordinary logistic regression.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{CeaError, Result};
use crate::linalg::check_full_rank;
use crate::lmm::cluster_rows;
use crate::missing::{AnalysisTable, CellStatus, COL_OVER75, COL_READM_RATE, COL_SEX, COL_SPECIALTY, COL_UTILITY};
use crate::special::gauss_hermite;
use crate::trial::TIMEPOINT_DAYS;

pub const QUADRATURE_NODES: usize = 15;
pub const MAX_ITERATIONS: usize = 200;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn log1pexp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        libm::exp(x)
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn bernoulli_loglik(y: bool, eta: f64) -> f64 {
    if y {
        -log1pexp(-eta)
    } else {
        -log1pexp(eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
}

/// Ordinary logistic regression by iteratively reweighted least squares.
pub fn fit_logistic(y: &[bool], x: &DMatrix<f64>, names: &[String]) -> Result<LogisticFit> {
    let (n, p) = x.shape();
    if y.len() != n || names.len() != p {
        return Err(CeaError::validation("logistic inputs are not aligned"));
    }
    check_full_rank(&(x.transpose() * x), names)?;
    let mut beta = DVector::zeros(p);
    for iter in 1..=MAX_ITERATIONS {
        let eta = x * &beta;
        let mut info = DMatrix::zeros(p, p);
        let mut score = DVector::zeros(p);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = mu * (1.0 - mu);
            let xi = x.row(i).transpose();
            info.syger(w, &xi, &xi, 1.0);
            score.axpy((y[i] as u8 as f64) - mu, &xi, 1.0);
        }
        info.fill_upper_triangle_with_lower_triangle();
        let chol = info.cholesky().ok_or_else(|| CeaError::Singular("logistic information matrix".into()))?;
        let step = chol.solve(&score);
        beta += &step;
        if step.amax() < 1e-10 {
            let eta = x * &beta;
            let loglik = (0..n).map(|i| bernoulli_loglik(y[i], eta[i])).sum();
            // information at the converged point
            let mut info = DMatrix::zeros(p, p);
            for i in 0..n {
                let mu = sigmoid(eta[i]);
                let xi = x.row(i).transpose();
                info.syger(mu * (1.0 - mu), &xi, &xi, 1.0);
            }
            info.fill_upper_triangle_with_lower_triangle();
            let cov = info.cholesky().ok_or_else(|| CeaError::Singular("logistic information matrix".into()))?.inverse();
            return Ok(LogisticFit {
                names: names.to_vec(),
                beta: beta.iter().copied().collect(),
                std_errors: (0..p).map(|k| libm::sqrt(cov[(k, k)])).collect(),
                loglik,
                iterations: iter,
            });
        }
    }
    Err(CeaError::Convergence {
        iterations: MAX_ITERATIONS,
        context: "logistic IRLS (possible separation)".into(),
        last_iterate: beta.iter().copied().collect(),
    })
}

struct ClusterData {
    y: Vec<bool>,
    x: DMatrix<f64>,
}

struct Quadrature {
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
}

/// Laplace-centred Gauss-Hermite log-likelihood of one cluster.
fn cluster_loglik(c: &ClusterData, beta: &DVector<f64>, sigma: f64, q: &Quadrature) -> f64 {
    let eta = &c.x * beta;
    let g = |u: f64| -> f64 { eta.iter().zip(&c.y).map(|(e, y)| bernoulli_loglik(*y, e + sigma * u)).sum::<f64>() - 0.5 * u * u };
    // conditional mode: g is strictly concave
    let mut u = 0.0;
    for _ in 0..100 {
        let mut d1 = -u;
        let mut d2 = -1.0;
        for (e, y) in eta.iter().zip(&c.y) {
            let mu = sigmoid(e + sigma * u);
            d1 += sigma * ((*y as u8 as f64) - mu);
            d2 -= sigma * sigma * mu * (1.0 - mu);
        }
        let step = -d1 / d2;
        u += step;
        if step.abs() < 1e-13 * (1.0 + u.abs()) {
            break;
        }
    }
    let mut h = 1.0;
    for e in eta.iter() {
        let mu = sigmoid(e + sigma * u);
        h += sigma * sigma * mu * (1.0 - mu);
    }
    let scale = 1.0 / libm::sqrt(h);
    let terms: Vec<f64> = q
        .nodes
        .iter()
        .zip(&q.log_weights)
        .map(|(x, lw)| lw + g(u + core::f64::consts::SQRT_2 * scale * x) + x * x)
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| libm::exp(t - max)).sum();
    max + libm::log(sum) + libm::log(scale) - 0.5 * libm::log(core::f64::consts::PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomInterceptLogitFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Random-intercept variance `σ²`.
    pub cluster_variance: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub n_obs: usize,
    pub n_clusters: usize,
}

impl RandomInterceptLogitFit {
    pub fn z_statistics(&self) -> Vec<f64> {
        self.beta.iter().zip(&self.std_errors).map(|(b, s)| b / s).collect()
    }
}

/// Random-intercept logistic regression by maximum likelihood with adaptive
/// Gauss-Hermite quadrature. The outer problem is solved by damped Newton
/// steps on finite-difference derivatives.
pub fn fit_random_intercept_logistic(
    y: &[bool],
    x: &DMatrix<f64>,
    cluster: &[usize],
    names: &[String],
    nodes: usize,
) -> Result<RandomInterceptLogitFit> {
    let (n, p) = x.shape();
    if y.len() != n || cluster.len() != n {
        return Err(CeaError::validation("logistic inputs are not aligned"));
    }
    let groups = cluster_rows(cluster);
    if groups.len() < 2 {
        return Err(CeaError::InsufficientData(format!("need at least 2 clusters, got {}", groups.len())));
    }
    let start = fit_logistic(y, x, names)?;
    let clusters: Vec<ClusterData> = groups
        .iter()
        .map(|(_, rows)| ClusterData {
            y: rows.iter().map(|&i| y[i]).collect(),
            x: DMatrix::from_fn(rows.len(), p, |r, k| x[(rows[r], k)]),
        })
        .collect();
    let (gh_x, gh_w) = gauss_hermite(nodes);
    let q = Quadrature { nodes: gh_x, log_weights: gh_w.iter().map(|w| libm::log(*w)).collect() };
    let loglik = |theta: &DVector<f64>| -> f64 {
        let beta = theta.rows(0, p).into_owned();
        clusters.iter().map(|c| cluster_loglik(c, &beta, theta[p], &q)).sum()
    };

    let dim = p + 1;
    let mut theta = DVector::zeros(dim);
    theta.rows_mut(0, p).copy_from_slice(&start.beta);
    theta[p] = 0.5;
    let mut current = loglik(&theta);
    let derivatives = |theta: &DVector<f64>, f0: f64| -> (DVector<f64>, DMatrix<f64>) {
        let h: Vec<f64> = theta.iter().map(|t| 1e-4 * (1.0 + t.abs())).collect();
        let shifted = |pairs: &[(usize, f64)]| {
            let mut t = theta.clone();
            for &(k, d) in pairs {
                t[k] += d;
            }
            loglik(&t)
        };
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            let fp = shifted(&[(a, h[a])]);
            let fm = shifted(&[(a, -h[a])]);
            grad[a] = (fp - fm) / (2.0 * h[a]);
            hess[(a, a)] = (fp - 2.0 * f0 + fm) / (h[a] * h[a]);
            for b in 0..a {
                let v = (shifted(&[(a, h[a]), (b, h[b])]) - shifted(&[(a, h[a]), (b, -h[b])])
                    - shifted(&[(a, -h[a]), (b, h[b])])
                    + shifted(&[(a, -h[a]), (b, -h[b])]))
                    / (4.0 * h[a] * h[b]);
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        (grad, hess)
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (grad, hess) = derivatives(&theta, current);
        let neg_hess = -hess;
        // Levenberg damping until the system is positive definite
        let mut damping = 0.0;
        let step = loop {
            let mut m = neg_hess.clone();
            for k in 0..dim {
                m[(k, k)] += damping;
            }
            if let Some(ch) = m.cholesky() {
                break ch.solve(&grad);
            }
            damping = if damping == 0.0 { 1e-6 * (1.0 + neg_hess.diagonal().amax()) } else { damping * 10.0 };
            if !damping.is_finite() || damping > 1e12 {
                return Err(CeaError::Convergence {
                    iterations,
                    context: "random-intercept logistic: indefinite Hessian".into(),
                    last_iterate: theta.iter().copied().collect(),
                });
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta + &step * t;
            let v = loglik(&cand);
            if v.is_finite() && v >= current - 1e-10 * current.abs().max(1.0) {
                theta = cand;
                current = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let scaled = (0..dim).map(|k| (step[k] * t).abs() / (1.0 + theta[k].abs())).fold(0.0, f64::max);
        if !accepted || scaled < 1e-9 {
            converged = accepted || scaled < 1e-9;
            break;
        }
    }
    if !converged {
        return Err(CeaError::Convergence {
            iterations,
            context: "random-intercept logistic".into(),
            last_iterate: theta.iter().copied().collect(),
        });
    }
    let (_, hess) = derivatives(&theta, current);
    let neg_hess = -hess;
    let cov = neg_hess.clone().cholesky().map(|c| c.inverse()).or_else(|| neg_hess.clone().try_inverse());
    let std_errors = match cov {
        Some(c) => (0..p).map(|k| libm::sqrt(c[(k, k)].max(0.0))).collect(),
        None => vec![f64::NAN; p],
    };
    Ok(RandomInterceptLogitFit {
        names: names.to_vec(),
        beta: theta.rows(0, p).iter().copied().collect(),
        std_errors,
        cluster_variance: theta[p] * theta[p],
        loglik: current,
        iterations,
        n_obs: n,
        n_clusters: groups.len(),
    })
}

/// Covariates of the missingness model, in design order after the intercept.
pub const MISSINGNESS_COVARIATES: [&str; 6] = ["arm", COL_UTILITY[0], COL_SPECIALTY, COL_READM_RATE, COL_OVER75, COL_SEX];

#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessModelFit {
    pub timepoint_day: u32,
    pub fit: RandomInterceptLogitFit,
    pub n_missing: usize,
}

/// Random-intercept (ward) logistic model for "utility missing at the given
/// follow-up timepoint". Patients who had died by then are excluded. The
/// covariates must already be complete (run baseline imputation first).
pub fn fit_missingness_model(table: &AnalysisTable, timepoint: usize) -> Result<MissingnessModelFit> {
    if !(1..=3).contains(&timepoint) {
        return Err(CeaError::validation(format!("timepoint index {timepoint} is not a follow-up visit")));
    }
    let target = table.column(COL_UTILITY[timepoint])?;
    let cov_cols: Vec<&[Option<f64>]> = MISSINGNESS_COVARIATES[1..]
        .iter()
        .map(|c| table.column(c).map(|c| c.values.as_slice()))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, status) in target.status.iter().enumerate() {
        if *status == CellStatus::Structural {
            continue;
        }
        if let Some(k) = cov_cols.iter().position(|c| c[i].is_none()) {
            return Err(CeaError::InsufficientData(format!(
                "{} missing for patient {}; complete baseline covariates first",
                MISSINGNESS_COVARIATES[k + 1],
                table.rows[i].patient_id
            )));
        }
        rows.push(i);
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(MISSINGNESS_COVARIATES.iter().map(|s| s.to_string()));
    let x = DMatrix::from_fn(rows.len(), names.len(), |r, k| {
        let i = rows[r];
        match k {
            0 => 1.0,
            1 => table.rows[i].arm.indicator(),
            _ => cov_cols[k - 2][i].unwrap_or(f64::NAN),
        }
    });
    let y: Vec<bool> = rows.iter().map(|&i| target.values[i].is_none()).collect();
    let cluster: Vec<usize> = rows.iter().map(|&i| table.rows[i].ward).collect();
    let fit = fit_random_intercept_logistic(&y, &x, &cluster, &names, QUADRATURE_NODES)?;
    Ok(MissingnessModelFit { timepoint_day: TIMEPOINT_DAYS[timepoint], n_missing: y.iter().filter(|b| **b).count(), fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_is_exact_without_cluster_variance() {
        let c = ClusterData { y: vec![true, false, true], x: DMatrix::from_element(3, 1, 1.0) };
        let (x, w) = gauss_hermite(QUADRATURE_NODES);
        let q = Quadrature { nodes: x, log_weights: w.iter().map(|w| libm::log(*w)).collect() };
        let beta = DVector::from_element(1, 0.3);
        let direct: f64 = c.y.iter().map(|y| bernoulli_loglik(*y, 0.3)).sum();
        assert!((cluster_loglik(&c, &beta, 0.0, &q) - direct).abs() < 1e-12);
    }
}
