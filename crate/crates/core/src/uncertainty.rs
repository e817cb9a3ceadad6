//! Rubin pooling, the ward bootstrap, pooled clouds, CE-plane quadrants and
//! acceptability curves.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{CeaError, ErrorClass, Result};
use crate::estimation::ClusterRefit;
use crate::exec::Executor;
use crate::rng::{stream, StreamRng};
use crate::special::t_quantile;
use crate::trial::Arm;

/// Rubin-pooled scalar estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledEstimate {
    pub point: f64,
    /// Mean within-imputation variance `W`.
    pub within: f64,
    /// Between-imputation variance `B`.
    pub between: f64,
    /// `T = W + (1 + 1/M) B`.
    pub total: f64,
    /// Barnard-Rubin degrees of freedom.
    pub df: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub m: usize,
}

impl PooledEstimate {
    pub fn se(&self) -> f64 {
        libm::sqrt(self.total)
    }

    /// Multiplies point and spread by `k` (for example NHB to NMB).
    pub fn scaled(&self, k: f64) -> PooledEstimate {
        let (lo, hi) = if k >= 0.0 { (self.ci_low * k, self.ci_high * k) } else { (self.ci_high * k, self.ci_low * k) };
        PooledEstimate {
            point: self.point * k,
            within: self.within * k * k,
            between: self.between * k * k,
            total: self.total * k * k,
            df: self.df,
            ci_low: lo,
            ci_high: hi,
            m: self.m,
        }
    }
}

/// Barnard-Rubin small-sample degrees of freedom. An infinite `complete_df`
/// gives the large-sample Rubin value.
pub fn barnard_rubin_df(m: usize, within: f64, between: f64, complete_df: f64) -> f64 {
    let m_f = m as f64;
    let total = within + (1.0 + 1.0 / m_f) * between;
    let lambda = if total > 0.0 { (1.0 + 1.0 / m_f) * between / total } else { 0.0 };
    let df_old = if lambda > 0.0 { (m_f - 1.0) / (lambda * lambda) } else { f64::INFINITY };
    if complete_df.is_infinite() {
        return df_old;
    }
    let df_obs = (complete_df + 1.0) / (complete_df + 3.0) * complete_df * (1.0 - lambda);
    if df_old.is_infinite() {
        df_obs
    } else {
        df_old * df_obs / (df_old + df_obs)
    }
}

pub fn rubin_pool(estimates: &[f64], variances: &[f64], complete_df: f64) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(CeaError::InsufficientData(format!("Rubin pooling needs at least 2 imputations, got {m}")));
    }
    if variances.len() != m {
        return Err(CeaError::validation(format!("{m} estimates but {} variances", variances.len())));
    }
    if let Some(v) = variances.iter().find(|v| !(**v >= 0.0)) {
        return Err(CeaError::validation(format!("variance {v} is negative or undefined")));
    }
    if let Some(e) = estimates.iter().find(|e| !e.is_finite()) {
        return Err(CeaError::validation(format!("estimate {e} is not finite")));
    }
    let m_f = m as f64;
    // shifted mean: exact when all imputations agree
    let first = estimates[0];
    let point = first + estimates.iter().map(|e| e - first).sum::<f64>() / m_f;
    let within = variances.iter().sum::<f64>() / m_f;
    let between = estimates.iter().map(|e| (e - point) * (e - point)).sum::<f64>() / (m_f - 1.0);
    let total = within + (1.0 + 1.0 / m_f) * between;
    let df = barnard_rubin_df(m, within, between, complete_df);
    let half = if total > 0.0 { t_quantile(0.975, df) * libm::sqrt(total) } else { 0.0 };
    Ok(PooledEstimate { point, within, between, total, df, ci_low: point - half, ci_high: point + half, m })
}

/// One bootstrap replicate on the CE plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CePoint {
    pub m: usize,
    pub b: usize,
    pub delta_c: f64,
    pub delta_e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeCloud {
    pub points: Vec<CePoint>,
    pub master_seed: u64,
    pub replicates: usize,
}

impl CeCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Concatenates per-imputation clouds, tagging each point with (m, b).
pub fn pool_clouds(clouds: &[Vec<(f64, f64)>], master_seed: u64) -> Result<CeCloud> {
    let b = clouds.first().map_or(0, Vec::len);
    if let Some((m, c)) = clouds.iter().enumerate().find(|(_, c)| c.len() != b) {
        return Err(CeaError::validation(format!("imputation {m} has {} bootstrap points, expected {b}", c.len())));
    }
    let mut points = Vec::with_capacity(clouds.len() * b);
    for (m, cloud) in clouds.iter().enumerate() {
        for (i, &(delta_c, delta_e)) in cloud.iter().enumerate() {
            if !delta_c.is_finite() || !delta_e.is_finite() {
                return Err(CeaError::validation(format!("non-finite bootstrap point at m={m}, b={i}")));
            }
            points.push(CePoint { m, b: i, delta_c, delta_e });
        }
    }
    Ok(CeCloud { points, master_seed, replicates: b })
}

/// Share of points in each CE-plane quadrant. Points on an axis are counted
/// separately.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadrantSummary {
    /// More effective, more costly.
    pub north_east: f64,
    /// Less effective, more costly (dominated).
    pub north_west: f64,
    /// More effective, less costly (dominant).
    pub south_east: f64,
    /// Less effective, less costly.
    pub south_west: f64,
    pub on_axis: f64,
}

pub fn quadrant_summary(cloud: &CeCloud) -> QuadrantSummary {
    let mut q = QuadrantSummary::default();
    if cloud.is_empty() {
        return q;
    }
    let w = 1.0 / cloud.len() as f64;
    for p in &cloud.points {
        let slot = match (p.delta_e > 0.0, p.delta_e < 0.0, p.delta_c > 0.0, p.delta_c < 0.0) {
            (true, _, true, _) => &mut q.north_east,
            (true, _, _, true) => &mut q.south_east,
            (_, true, true, _) => &mut q.north_west,
            (_, true, _, true) => &mut q.south_west,
            _ => &mut q.on_axis,
        };
        *slot += w;
    }
    q
}

/// Probability cost-effective by threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Ceac {
    pub points: Vec<(f64, f64)>,
}

impl Ceac {
    pub fn probability_at(&self, lambda: f64) -> Option<f64> {
        self.points.iter().find(|(l, _)| *l == lambda).map(|(_, p)| *p)
    }
}

/// Fraction of cloud points with positive net monetary benefit.
pub fn probability_cost_effective(cloud: &CeCloud, lambda: f64) -> f64 {
    let wins = cloud.points.iter().filter(|p| lambda * p.delta_e - p.delta_c > 0.0).count();
    wins as f64 / cloud.len() as f64
}

pub fn ceac(cloud: &CeCloud, thresholds: &[f64]) -> Result<Ceac> {
    if cloud.is_empty() {
        return Err(CeaError::InsufficientData("empty bootstrap cloud".into()));
    }
    validate_thresholds(thresholds)?;
    Ok(Ceac { points: thresholds.iter().map(|&l| (l, probability_cost_effective(cloud, l))).collect() })
}

pub fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(CeaError::Config("threshold grid is empty".into()));
    }
    if thresholds.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(CeaError::Config("thresholds must be finite and nonnegative".into()));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CeaError::Config("threshold grid must be strictly increasing".into()));
    }
    Ok(())
}

/// £0 to £50,000 in £500 steps.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|k| 500.0 * k as f64).collect()
}

/// Draws clusters with replacement separately within each arm, keeping the
/// per-arm cluster counts. Returns positions into `cluster_arms`.
pub fn resample_clusters(rng: &mut StreamRng, cluster_arms: &[Arm]) -> Vec<usize> {
    let mut out = Vec::with_capacity(cluster_arms.len());
    for arm in Arm::BOTH {
        let pool: Vec<usize> = (0..cluster_arms.len()).filter(|&k| cluster_arms[k] == arm).collect();
        for _ in 0..pool.len() {
            out.push(pool[rng.random_range(0..pool.len())]);
        }
    }
    out
}

/// Maximum redraws per requested replicate.
pub const REDRAW_FACTOR: usize = 10;

fn check_bootstrap_design(cluster_arms: &[Arm]) -> Result<()> {
    for arm in Arm::BOTH {
        let k = cluster_arms.iter().filter(|a| **a == arm).count();
        if k < 2 {
            return Err(CeaError::InsufficientData(format!("bootstrap needs at least 2 wards per arm; {arm} has {k}")));
        }
    }
    Ok(())
}

/// One replicate: redraws on numerically degenerate resamples (singular or
/// rank-deficient designs) and reports how many redraws it needed.
pub fn bootstrap_replicate(refit: &ClusterRefit<'_>, rng: &mut StreamRng, max_redraws: usize) -> Result<((f64, f64), usize)> {
    let mut redraws = 0;
    loop {
        let draws = resample_clusters(rng, refit.cluster_arms());
        match refit.estimate(&draws) {
            Ok(point) => return Ok((point, redraws)),
            Err(e) if e.class() == ErrorClass::Numerical && !matches!(e, CeaError::Convergence { .. }) => {
                redraws += 1;
                if redraws > max_redraws {
                    return Err(CeaError::Singular(format!("bootstrap exceeded {max_redraws} redraws: {e}")));
                }
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    pub points: Vec<(f64, f64)>,
    pub redraws: usize,
}

/// Ward bootstrap of (ΔC, ΔE) for one dataset. Replicate `b` uses the stream
/// `(master_seed, path..., b)`.
pub fn cluster_bootstrap<E: Executor>(
    refit: &ClusterRefit<'_>,
    reps: usize,
    master_seed: u64,
    path: &[u64],
    exec: &E,
) -> Result<BootstrapDraws> {
    if reps == 0 {
        return Err(CeaError::Config("bootstrap replicates must be positive".into()));
    }
    check_bootstrap_design(refit.cluster_arms())?;
    let cap = REDRAW_FACTOR * reps;
    let results = exec.map_indexed(reps, |b| {
        let mut full = path.to_vec();
        full.push(b as u64);
        let mut rng = stream(master_seed, &full);
        bootstrap_replicate(refit, &mut rng, cap)
    });
    collect_draws(results, cap)
}

pub(crate) fn collect_draws(results: Vec<Result<((f64, f64), usize)>>, cap: usize) -> Result<BootstrapDraws> {
    let mut points = Vec::with_capacity(results.len());
    let mut redraws = 0;
    for r in results {
        let (p, k) = r?;
        points.push(p);
        redraws += k;
    }
    if redraws > cap {
        return Err(CeaError::Singular(format!("bootstrap needed {redraws} redraws, above the cap of {cap}")));
    }
    Ok(BootstrapDraws { points, redraws })
}

pub(crate) fn check_refit(refit: &ClusterRefit<'_>) -> Result<()> {
    check_bootstrap_design(refit.cluster_arms())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_cloud_at_fifteen_thousand() {
        let cloud = pool_clouds(&[alloc::vec![(-100.0, -0.01), (100.0, 0.02)]], 0).unwrap();
        assert_eq!(probability_cost_effective(&cloud, 15_000.0), 0.5);
    }

    #[test]
    fn threshold_grid_contains_policy_values() {
        let g = default_thresholds();
        for l in [15_000.0, 20_000.0, 30_000.0] {
            assert!(g.contains(&l));
        }
        assert!(validate_thresholds(&g).is_ok());
    }
}
