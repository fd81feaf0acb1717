//! Small statistics helpers: running moments, goodness-of-fit tests, distances.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Running mean and variance (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = (self.n + o.n) as f64;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n;
        self.m2 += o.m2 + d * d * self.n as f64 * o.n as f64 / n;
        self.n += o.n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Result of a goodness-of-fit test.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FitTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Merge bins so that every merged bin has expected count at least `min_expected`.
/// Bins are merged in increasing order of expected count.
fn merge_bins(observed: &[u64], expected: &[f64], min_expected: f64) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..expected.len()).collect();
    order.sort_by(|&a, &b| expected[a].total_cmp(&expected[b]).then(a.cmp(&b)));
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for &i in &order {
        o_acc += observed[i] as f64;
        e_acc += expected[i];
        if e_acc >= min_expected {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        if let (Some(lo), Some(le)) = (obs.last_mut(), exp.last_mut()) {
            *lo += o_acc;
            *le += e_acc;
        } else {
            obs.push(o_acc);
            exp.push(e_acc);
        }
    }
    (obs, exp)
}

fn stat_parts(observed: &[u64], probs: &[f64], g: bool) -> (f64, usize) {
    let n: u64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let (obs, exp) = merge_bins(observed, &expected, 5.0);
    let mut s = 0.0;
    for (o, e) in obs.iter().zip(&exp) {
        if g {
            if *o > 0.0 {
                s += 2.0 * o * (o / e).ln();
            }
        } else {
            s += (o - e) * (o - e) / e;
        }
    }
    (s, obs.len())
}

fn finish(statistic: f64, bins: usize, constraints: usize) -> FitTest {
    let dof = bins.saturating_sub(constraints);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map(|c| c.sf(statistic)).unwrap_or(f64::NAN)
    };
    FitTest { statistic, dof, p_value, bins }
}

/// Pearson chi-square test of counts against probabilities.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> FitTest {
    let (s, b) = stat_parts(observed, probs, false);
    finish(s, b, 1)
}

/// Likelihood-ratio (G) test of counts against probabilities.
pub fn g_test(observed: &[u64], probs: &[f64]) -> FitTest {
    let (s, b) = stat_parts(observed, probs, true);
    finish(s, b, 1)
}

/// Combined G test over independent groups, each with its own multinomial law.
pub fn g_test_grouped(groups: &[(Vec<u64>, Vec<f64>)]) -> FitTest {
    let mut s = 0.0;
    let mut bins = 0;
    let mut k = 0;
    for (obs, probs) in groups {
        if obs.iter().sum::<u64>() == 0 {
            continue;
        }
        let (gs, gb) = stat_parts(obs, probs, true);
        s += gs;
        bins += gb;
        k += 1;
    }
    finish(s, bins, k)
}

/// Total-variation distance between two weight vectors on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
