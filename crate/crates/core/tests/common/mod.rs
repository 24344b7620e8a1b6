//! Reference implementations used only by tests. They share no code with the
//! library paths they check.

#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

/// Levene's W straight from the textbook definition, with plain loops.
pub fn levene_w_bruteforce(groups: &[Vec<f64>], median_center: bool) -> f64 {
    let k = groups.len();
    // Both deviations of a two-value group equal half its range, so the
    // denominator is exactly zero; floating point would leave residue.
    if groups.iter().all(|g| g.len() == 2) {
        let range = |g: &Vec<f64>| (g[0] - g[1]).abs();
        let first = range(&groups[0]);
        return if groups.iter().all(|g| range(g) == first) {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(k);
    for g in groups {
        let center = if median_center {
            let mut s = g.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = s.len() / 2;
            if s.len() % 2 == 0 {
                (s[m - 1] + s[m]) / 2.0
            } else {
                s[m]
            }
        } else {
            let mut sum = 0.0;
            for v in g {
                sum += v;
            }
            sum / g.len() as f64
        };
        let mut zi = Vec::new();
        for v in g {
            zi.push((v - center).abs());
        }
        z.push(zi);
    }
    let mut n_total = 0usize;
    let mut grand = 0.0;
    for zi in &z {
        for v in zi {
            grand += v;
            n_total += 1;
        }
    }
    grand /= n_total as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for zi in &z {
        let mut zbar = 0.0;
        for v in zi {
            zbar += v;
        }
        zbar /= zi.len() as f64;
        num += zi.len() as f64 * (zbar - grand) * (zbar - grand);
        for v in zi {
            den += (v - zbar) * (v - zbar);
        }
    }
    ((n_total - k) as f64 / (k - 1) as f64) * num / den
}

/// Upper tail of the F distribution from an independent implementation.
pub fn f_sf_reference(x: f64, d1: u64, d2: u64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    FisherSnedecor::new(d1 as f64, d2 as f64).unwrap().sf(x)
}

/// Exact `sup |F_n - F|` for the uniform on `[lo, hi]`, counting the EDF at
/// and just below every sample point (O(n^2), no sorting).
pub fn ks_sup_bruteforce(values: &[f64], lo: f64, hi: f64) -> f64 {
    let n = values.len() as f64;
    let mut sup: f64 = 0.0;
    for &x in values {
        let at = values.iter().filter(|v| **v <= x).count() as f64 / n;
        let below = values.iter().filter(|v| **v < x).count() as f64 / n;
        let f = (x - lo) / (hi - lo);
        sup = sup.max((at - f).abs()).max((below - f).abs());
    }
    sup
}

/// `sup |F_n - F|` sampled on a uniform grid of `points + 1` positions.
pub fn ks_sup_grid(values: &[f64], lo: f64, hi: f64, points: usize) -> f64 {
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sup: f64 = 0.0;
    for j in 0..=points {
        let x = lo + (hi - lo) * j as f64 / points as f64;
        let count = sorted.partition_point(|v| *v <= x) as f64;
        sup = sup.max((count / n - (x - lo) / (hi - lo)).abs());
    }
    sup
}
