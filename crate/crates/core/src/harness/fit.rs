//! Risk tables and log-log rate fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::tree_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub n: usize,
    pub replication: usize,
    pub value: f64,
    pub seed: u64,
}

/// One metric per replication.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskTable {
    pub metric: String,
    pub rows: Vec<RiskRow>,
}

impl RiskTable {
    pub fn new(metric: &str) -> Self {
        Self {
            metric: metric.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: RiskRow) {
        self.rows.push(row);
    }

    /// Distinct sample sizes in increasing order.
    pub fn sizes(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    /// Finite values at `n`, ordered by replication index.
    pub fn values_at(&self, n: usize) -> Vec<f64> {
        let mut rows: Vec<&RiskRow> = self.rows.iter().filter(|r| r.n == n && r.value.is_finite()).collect();
        rows.sort_by_key(|r| r.replication);
        rows.iter().map(|r| r.value).collect()
    }

    /// `(n, mean)` per sample size, with tree-summed means.
    pub fn mean_by_n(&self) -> Vec<(usize, f64)> {
        self.sizes()
            .into_iter()
            .map(|n| {
                let v = self.values_at(n);
                (n, tree_sum(&v) / v.len().max(1) as f64)
            })
            .collect()
    }

    pub fn median_by_n(&self) -> Vec<(usize, f64)> {
        self.sizes()
            .into_iter()
            .map(|n| {
                let mut v = self.values_at(n);
                v.sort_by(f64::total_cmp);
                let m = v.len();
                let med = if m == 0 {
                    f64::NAN
                } else if m % 2 == 1 {
                    v[m / 2]
                } else {
                    0.5 * (v[m / 2 - 1] + v[m / 2])
                };
                (n, med)
            })
            .collect()
    }
}

/// OLS fit of `log risk = intercept + slope · log n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub std_error: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

impl RateFit {
    /// `|slope − expected| ≤ tolerance`.
    pub fn within(&self, expected: f64, tolerance: f64) -> bool {
        (self.slope - expected).abs() <= tolerance
    }
}

/// Fit the mean risk per sample size.
pub fn fit_rate(table: &RiskTable) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = table.mean_by_n().into_iter().map(|(n, m)| (n as f64, m)).collect();
    fit_points(&pts)
}

/// Fit `(n, risk)` pairs on log-log axes.
pub fn fit_points(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if ns.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 distinct n, got {}", ns.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(Error::DegenerateFit(format!("nonpositive risk {} at n = {}", p.1, p.0)));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let std_error = if xs.len() > 2 { (sse / (m - 2.0) / sxx).sqrt() } else { f64::NAN };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        std_error,
        r_squared,
        points: points.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact(c: f64, e: f64) -> RiskTable {
        let mut t = RiskTable::new("risk");
        for (i, n) in [256usize, 512, 1024, 2048].into_iter().enumerate() {
            t.push(RiskRow {
                n,
                replication: 0,
                value: c * (n as f64).powf(e),
                seed: i as u64,
            });
        }
        t
    }

    #[test]
    fn exact_power_laws() {
        let f = fit_rate(&exact(3.0, -0.5)).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit_rate(&exact(0.2, -0.6)).unwrap().slope + 0.6).abs() < 1e-12);
    }

    #[test]
    fn noisy_slope_within_two_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut t = RiskTable::new("risk");
        for n in [256usize, 512, 1024, 2048, 4096, 8192] {
            for r in 0..100 {
                let noise: f64 = (rng.random::<f64>() - 0.5) * 0.6;
                t.push(RiskRow {
                    n,
                    replication: r,
                    value: 2.0 * (n as f64).powf(-0.4) * noise.exp(),
                    seed: 0,
                });
            }
        }
        let f = fit_rate(&t).unwrap();
        assert!((f.slope + 0.4).abs() <= 2.0 * f.std_error, "{f:?}");
        assert!(f.r_squared > 0.99);
    }

    #[test]
    fn degenerate_inputs() {
        let mut t = exact(1.0, -0.5);
        t.rows.truncate(2);
        assert!(matches!(fit_rate(&t), Err(Error::DegenerateFit(_))));
        let mut z = exact(1.0, -0.5);
        z.rows[1].value = 0.0;
        assert!(matches!(fit_rate(&z), Err(Error::DegenerateFit(_))));
    }
}
