//! Gaussian linear mixed model with one random intercept per cluster,
//! fitted by restricted maximum likelihood.
//!
//! With `V_j = σ²_e (I + γ 11ᵀ)` for cluster `j`, every quantity the REML
//! criterion needs reduces to per-cluster sums (`XᵀX`, `Xᵀy`, `yᵀy`, `Xᵀ1`,
//! `Σy`, `n`), so fits, bootstrap refits and profile probes never touch
//! patient rows. The residual variance is profiled out and the criterion is
//! maximised over `θ = ln γ` by a grid scan followed by Brent's method.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{CeaError, Result};
use crate::linalg::check_full_rank;

/// Lower and upper limits of the ratio search, on the log scale.
pub const LOG_RATIO_MIN: f64 = -15.0;
pub const LOG_RATIO_MAX: f64 = 10.0;
pub const BRENT_TOL: f64 = 1e-10;

/// Sufficient statistics of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub n: f64,
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub sum_x: DVector<f64>,
    pub sum_y: f64,
    /// Coefficients already subtracted from `y`; added back to the fitted `beta`.
    pub offset: DVector<f64>,
    /// Sum of squares of the unshifted `y`, kept for scale checks.
    pub raw_yty: f64,
}

impl ClusterStats {
    pub fn from_rows(y: &[f64], x: &DMatrix<f64>, rows: &[usize]) -> Self {
        Self::shifted(y, x, rows, &DVector::zeros(x.ncols()))
    }

    /// Summaries of `y - X offset`.
    fn shifted(y: &[f64], x: &DMatrix<f64>, rows: &[usize], offset: &DVector<f64>) -> Self {
        let p = x.ncols();
        let mut s = ClusterStats {
            n: rows.len() as f64,
            xtx: DMatrix::zeros(p, p),
            xty: DVector::zeros(p),
            yty: 0.0,
            sum_x: DVector::zeros(p),
            sum_y: 0.0,
            offset: offset.clone(),
            raw_yty: 0.0,
        };
        for &i in rows {
            let xi = x.row(i).transpose();
            let r = y[i] - xi.dot(offset);
            s.xtx.syger(1.0, &xi, &xi, 1.0);
            s.xty.axpy(r, &xi, 1.0);
            s.yty += r * r;
            s.sum_x += &xi;
            s.sum_y += r;
            s.raw_yty += y[i] * y[i];
        }
        s.xtx.fill_upper_triangle_with_lower_triangle();
        s
    }
}

/// Groups rows by cluster label (ascending label order).
pub fn cluster_rows(cluster: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in cluster.iter().enumerate() {
        map.entry(c).or_default().push(i);
    }
    map.into_iter().collect()
}

/// Per-cluster summaries of `y` after removing its pooled OLS fit.
///
/// The REML fit is invariant to `y -> y - X b`. Working on residuals keeps the
/// profiled residual sum of squares free of cancellation when `y` has a large
/// mean or covariate component. The shift is recorded and added back on fit.
pub fn cluster_stats(y: &[f64], x: &DMatrix<f64>, cluster: &[usize]) -> Vec<ClusterStats> {
    let offset = (x.nrows() == y.len())
        .then(|| (x.transpose() * x).cholesky().map(|c| c.solve(&(x.transpose() * DVector::from_column_slice(y)))))
        .flatten()
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| DVector::zeros(x.ncols()));
    cluster_rows(cluster).into_iter().map(|(_, rows)| ClusterStats::shifted(y, x, &rows, &offset)).collect()
}

struct Profile {
    c: DVector<f64>,
    beta: DVector<f64>,
    rss: f64,
    log_det_r: f64,
    log_det_h: f64,
    h_inv: DMatrix<f64>,
}

fn profile(clusters: &[&ClusterStats], gamma: f64) -> Option<Profile> {
    let p = clusters.first()?.xty.len();
    let mut h = DMatrix::zeros(p, p);
    let mut c = DVector::zeros(p);
    let mut yy = 0.0;
    let mut log_det_r = 0.0;
    for s in clusters {
        let w = gamma / (1.0 + s.n * gamma);
        h += &s.xtx;
        h.syger(-w, &s.sum_x, &s.sum_x, 1.0);
        c += &s.xty;
        c.axpy(-w * s.sum_y, &s.sum_x, 1.0);
        yy += s.yty - w * s.sum_y * s.sum_y;
        log_det_r += libm::log1p(s.n * gamma);
    }
    h.fill_upper_triangle_with_lower_triangle();
    let chol = h.clone().cholesky()?;
    let beta = chol.solve(&c);
    let log_det_h = 2.0 * chol.l_dirty().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>();
    let h_inv = chol.inverse();
    let rss = yy - c.dot(&beta);
    Some(Profile { c, beta, rss, log_det_r, log_det_h, h_inv })
}

fn total_n(clusters: &[&ClusterStats]) -> f64 {
    clusters.iter().map(|s| s.n).sum()
}

/// Profiled REML log-likelihood at variance ratio `gamma = σ²_u / σ²_e`.
pub fn reml_criterion(clusters: &[&ClusterStats], gamma: f64) -> Option<f64> {
    let pr = profile(clusters, gamma)?;
    let n = total_n(clusters);
    let p = pr.beta.len() as f64;
    let dof = n - p;
    if pr.rss <= 0.0 || dof <= 0.0 {
        return None;
    }
    Some(-0.5 * (dof * libm::log(pr.rss / dof) + pr.log_det_r + pr.log_det_h + dof * (1.0 + libm::log(2.0 * PI))))
}

/// Analytic derivative of [`reml_criterion`] with respect to `ln γ`.
pub fn reml_gradient_log_ratio(clusters: &[&ClusterStats], log_gamma: f64) -> Option<f64> {
    let gamma = libm::exp(log_gamma);
    let pr = profile(clusters, gamma)?;
    let n = total_n(clusters);
    let dof = n - pr.beta.len() as f64;
    let mut d_rss = 0.0;
    let mut d_logdet_r = 0.0;
    let mut d_logdet_h = 0.0;
    for s in clusters {
        let a = 1.0 + s.n * gamma;
        let dw = 1.0 / (a * a);
        let resid = s.sum_y - s.sum_x.dot(&pr.beta);
        d_rss -= dw * resid * resid;
        d_logdet_r += s.n / a;
        d_logdet_h -= dw * (&pr.h_inv * &s.sum_x).dot(&s.sum_x);
    }
    let d_gamma = -0.5 * (dof * d_rss / pr.rss + d_logdet_r + d_logdet_h);
    Some(gamma * d_gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmmFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    /// Covariance of the fixed effects, `σ²_e (XᵀR⁻¹X)⁻¹`.
    pub cov: DMatrix<f64>,
    pub sigma2_u: f64,
    pub sigma2_e: f64,
    pub reml_loglik: f64,
    /// `ln(σ²_u/σ²_e)` at the optimum; `None` on the σ²_u = 0 boundary.
    pub log_ratio: Option<f64>,
    pub boundary: bool,
    pub converged: bool,
    pub iterations: usize,
    /// Analytic criterion gradient at the optimum (zero on the boundary).
    pub gradient: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
}

impl LmmFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.beta[k])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| libm::sqrt(self.cov[(k, k)]))
    }

    pub fn df_resid(&self) -> f64 {
        self.n_obs as f64 - self.beta.len() as f64
    }
}

/// Brent minimisation on `[a, b]`; returns (x, f(x), iterations).
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64, usize) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for iter in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + tol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            return (x, fx, iter);
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + if d >= 0.0 { tol1 } else { -tol1 } };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx, 500)
}

/// Bracketed secant (Illinois) on the REML gradient around `theta`.
fn polish_root(clusters: &[&ClusterStats], theta: f64) -> Option<f64> {
    let g = |t: f64| reml_gradient_log_ratio(clusters, t);
    let mut h = 1e-6;
    let (mut a, mut b, mut ga, mut gb);
    loop {
        a = theta - h;
        b = theta + h;
        ga = g(a)?;
        gb = g(b)?;
        if ga.is_finite() && gb.is_finite() && ga >= 0.0 && gb <= 0.0 {
            break;
        }
        h *= 10.0;
        if h > 1e-2 {
            return None;
        }
    }
    // Illinois halving rescales ga/gb, so keep the true gradients for the final pick
    let (mut true_ga, mut true_gb) = (ga, gb);
    let mut side = 0i8;
    for _ in 0..100 {
        if ga == gb {
            break;
        }
        let c = (a * gb - b * ga) / (gb - ga);
        if !(c > a && c < b) {
            break;
        }
        let gc = g(c)?;
        if gc == 0.0 || (b - a) < 1e-15 * (1.0 + theta.abs()) {
            return Some(c);
        }
        if gc > 0.0 {
            a = c;
            ga = gc;
            true_ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            gb = gc;
            true_gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        }
    }
    // the secant often converges from one side, so the midpoint can be far off
    Some(if true_ga.abs() <= true_gb.abs() { a } else { b })
}

/// Row-level entry point: groups rows by `cluster` and fits.
pub fn fit_lmm_reml(y: &[f64], x: &DMatrix<f64>, cluster: &[usize], names: &[String]) -> Result<LmmFit> {
    if y.len() != x.nrows() || y.len() != cluster.len() {
        return Err(CeaError::validation(format!(
            "misaligned inputs: y {}, X {}, cluster {}",
            y.len(),
            x.nrows(),
            cluster.len()
        )));
    }
    let stats = cluster_stats(y, x, cluster);
    let refs: Vec<&ClusterStats> = stats.iter().collect();
    fit_lmm_clusters(&refs, names)
}

/// Fits from cluster summaries. Repeated references count as distinct
/// clusters, which is what a cluster bootstrap needs.
pub fn fit_lmm_clusters(clusters: &[&ClusterStats], names: &[String]) -> Result<LmmFit> {
    if clusters.len() < 2 {
        return Err(CeaError::InsufficientData(format!("need at least 2 clusters, got {}", clusters.len())));
    }
    let p = clusters[0].xty.len();
    if names.len() != p {
        return Err(CeaError::validation(format!("{} names for {p} columns", names.len())));
    }
    let offset = &clusters[0].offset;
    if clusters.iter().any(|s| s.offset != *offset) {
        return Err(CeaError::validation("cluster summaries were built with different shifts"));
    }
    let mut gram = DMatrix::zeros(p, p);
    for s in clusters {
        gram += &s.xtx;
    }
    check_full_rank(&gram, names)?;
    let n = total_n(clusters);
    if n <= p as f64 {
        return Err(CeaError::InsufficientData(format!("{n} observations for {p} coefficients")));
    }

    let ols = profile(clusters, 0.0).ok_or_else(|| CeaError::Singular("fixed-effect system".into()))?;
    let scale = ols.c.dot(&ols.beta).abs().max(clusters.iter().map(|s| s.raw_yty).sum::<f64>());
    let finish = |pr: Profile, gamma: f64, loglik: f64, boundary: bool, iterations: usize, gradient: f64| {
        let sigma2_e = (pr.rss / (n - p as f64)).max(0.0);
        LmmFit {
            names: names.to_vec(),
            beta: pr.beta.iter().zip(offset.iter()).map(|(b, o)| b + o).collect(),
            cov: pr.h_inv * sigma2_e,
            sigma2_u: gamma * sigma2_e,
            sigma2_e,
            reml_loglik: loglik,
            log_ratio: (!boundary).then(|| libm::log(gamma)),
            boundary,
            converged: true,
            iterations,
            gradient,
            n_obs: n as usize,
            n_clusters: clusters.len(),
        }
    };
    if ols.rss <= 1e-24 * scale.max(1e-300) {
        // exact fit: no residual variation left to apportion
        return Ok(finish(ols, 0.0, f64::INFINITY, true, 0, 0.0));
    }

    let crit = |theta: f64| reml_criterion(clusters, libm::exp(theta)).unwrap_or(f64::NEG_INFINITY);
    let steps = (LOG_RATIO_MAX - LOG_RATIO_MIN) as usize;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..=steps {
        let v = crit(LOG_RATIO_MIN + k as f64);
        if v > best.1 {
            best = (k, v);
        }
    }
    let lo = LOG_RATIO_MIN + best.0.saturating_sub(1) as f64;
    let hi = (LOG_RATIO_MIN + (best.0 + 1) as f64).min(LOG_RATIO_MAX);
    let (theta, neg, iters) = brent_minimize(|t| -crit(t), lo, hi, BRENT_TOL);
    // a derivative-free search only pins the argmax to ~sqrt(eps); refine on
    // the analytic gradient, whose root is well conditioned
    let (theta, neg) = match polish_root(clusters, theta) {
        Some(t) if -crit(t) <= neg + 1e-12 * neg.abs().max(1.0) => (t, -crit(t)),
        _ => (theta, neg),
    };
    let interior_ll = -neg;
    let boundary_ll = reml_criterion(clusters, 0.0).unwrap_or(f64::NEG_INFINITY);
    let iterations = steps + 1 + iters;

    if boundary_ll >= interior_ll || theta <= LOG_RATIO_MIN + 1e-6 {
        let ll = boundary_ll.max(interior_ll);
        return Ok(finish(ols, 0.0, ll, true, iterations, 0.0));
    }
    let gamma = libm::exp(theta);
    let pr = profile(clusters, gamma).ok_or_else(|| CeaError::Singular("GLS system at optimum".into()))?;
    let gradient = reml_gradient_log_ratio(clusters, theta).unwrap_or(f64::NAN);
    let mut fit = finish(pr, gamma, interior_ll, false, iterations, gradient);
    if theta >= LOG_RATIO_MAX - 1e-6 {
        fit.converged = false;
    }
    Ok(fit)
}
