//! Summary statistics and Kolmogorov–Smirnov tests for click-time samples.
//!
//! Censored samples (no click before the horizon) are passed as `+inf`.

use serde::{Deserialize, Serialize};

/// Count, mean and sample standard deviation of a set of values. An empty
/// sample has NaN moments, which JSON carries as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub n: u64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub mean: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub std: f64,
}

fn nan_or_f64<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl SampleStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n: 0,
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            n: n as u64,
            mean,
            std: var.sqrt(),
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.std / (self.n as f64).sqrt()
        }
    }

    /// Statistics of the union of several samples, from their summaries alone.
    pub fn pool(parts: &[SampleStats]) -> Self {
        let parts: Vec<&SampleStats> = parts.iter().filter(|p| p.n > 0).collect();
        let n: u64 = parts.iter().map(|p| p.n).sum();
        if n == 0 {
            return Self::of(&[]);
        }
        let mean = parts.iter().map(|p| p.n as f64 * p.mean).sum::<f64>() / n as f64;
        let ss: f64 = parts
            .iter()
            .map(|p| (p.n as f64 - 1.0) * p.std * p.std + p.n as f64 * (p.mean - mean).powi(2))
            .sum();
        let std = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        Self { n, mean, std }
    }
}

/// `c(alpha) = sqrt(-ln(alpha / 2) / 2)`, the asymptotic Kolmogorov quantile.
pub fn kolmogorov_quantile(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// Critical value of the one-sample statistic at level `alpha`.
pub fn ks_critical_one_sample(n: usize, alpha: f64) -> f64 {
    kolmogorov_quantile(alpha) / (n as f64).sqrt()
}

/// Critical value of the two-sample statistic at level `alpha`.
pub fn ks_critical_two_sample(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    kolmogorov_quantile(alpha) * ((n + m) / (n * m)).sqrt()
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// `sup_x |F_n(x) - F(x)|` against a continuous reference CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sorted(samples);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |d, (i, x)| {
        let f = if x.is_infinite() && *x > 0.0 { 1.0 } else { cdf(*x) };
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d.max(above).max(below)
    })
}

/// `sup_x |F_a(x) - F_b(x)|` between two empirical distributions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn exponential_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |t| if t <= 0.0 { 0.0 } else { 1.0 - (-rate * t).exp() }
}

/// Fixed-width histogram over `[lo, hi]`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let w = (hi - lo) / bins as f64;
        Self {
            edges: (0..=bins).map(|i| lo + i as f64 * w).collect(),
            counts: vec![0; bins],
        }
    }

    pub fn add(&mut self, x: f64) -> bool {
        let (lo, hi) = (self.edges[0], *self.edges.last().unwrap());
        if !(x >= lo && x <= hi) {
            return false;
        }
        let bins = self.counts.len();
        let i = (((x - lo) / (hi - lo)) * bins as f64) as usize;
        self.counts[i.min(bins - 1)] += 1;
        true
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stats_survive_json() {
        let json = serde_json::to_string(&SampleStats::of(&[])).unwrap();
        let back: SampleStats = serde_json::from_str(&json).unwrap();
        assert_eq!(back.n, 0);
        assert!(back.mean.is_nan() && back.std.is_nan());
    }

    #[test]
    fn quantiles_match_tables() {
        assert!((kolmogorov_quantile(0.05) - 1.3581).abs() < 1e-4);
        assert!((kolmogorov_quantile(0.01) - 1.6276).abs() < 1e-4);
    }

    #[test]
    fn one_sample_statistic_on_uniform_grid() {
        // midpoints of n cells are at distance 1/(2n) from the uniform CDF
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn censored_samples_count_as_missing_mass() {
        let xs = vec![f64::INFINITY; 4];
        let d = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert_eq!(d, 1.0);
    }

    #[test]
    fn two_sample_statistic() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [3.5, 4.5, 5.5, 6.5];
        assert!((ks_two_sample(&a, &b) - 0.75).abs() < 1e-12);
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let inf = [f64::INFINITY, 1.0];
        assert!((ks_two_sample(&inf, &[1.0, f64::INFINITY]) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_stats_equal_stats_of_union() {
        let a = [1.0, 2.0, 4.0, 8.0];
        let b = [0.5, 3.0, 3.5];
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let pooled = SampleStats::pool(&[SampleStats::of(&a), SampleStats::of(&b)]);
        let direct = SampleStats::of(&all);
        assert_eq!(pooled.n, direct.n);
        assert!((pooled.mean - direct.mean).abs() < 1e-12);
        assert!((pooled.std - direct.std).abs() < 1e-12);
    }

    #[test]
    fn histogram_closes_last_bin() {
        let mut h = Histogram::new(0.0, 1.0, 4);
        assert!(h.add(0.0));
        assert!(h.add(1.0));
        assert!(!h.add(1.5));
        assert_eq!(h.counts, vec![1, 0, 0, 1]);
    }
}
