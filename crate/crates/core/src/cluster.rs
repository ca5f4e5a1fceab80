//! Seeded K-means over embedding rows.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;

use crate::error::{param_err, Result};
use crate::rng::rng_for;
use crate::tensor::Scalar;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub labels: Vec<u8>,
    pub inertia: f64,
    /// Set when fewer distinct points than clusters forced the
    /// all-in-one-cluster fallback.
    pub degenerate: bool,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// K-means++ with `restarts` seeded restarts and Lloyd iterations until the
/// largest center movement drops below 1e-6 (or 100 iterations).
pub fn kmeans<T: Scalar>(
    points: &[T],
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
) -> Result<KmeansResult> {
    if k == 0 {
        return Err(param_err!("kmeans", "k must be positive"));
    }
    if n < k {
        return Err(param_err!("kmeans", "need at least {k} points, got {n}"));
    }
    let pts: Vec<f64> = points.iter().map(|v| v.as_f64()).collect();
    let row = |i: usize| -> &[f64] { &pts[i * d..(i + 1) * d] };

    // distinct-point check: degenerate inputs keep everything in cluster 0
    let mut distinct: Vec<usize> = Vec::new();
    'outer: for i in 0..n {
        for &j in &distinct {
            if row(i) == row(j) {
                continue 'outer;
            }
        }
        distinct.push(i);
        if distinct.len() >= k {
            break;
        }
    }
    if distinct.len() < k {
        return Ok(KmeansResult {
            labels: vec![0; n],
            inertia: 0.0,
            degenerate: true,
        });
    }

    let restarts = 10;
    let mut best: Option<KmeansResult> = None;
    for r in 0..restarts {
        let mut rng = rng_for(seed, 0x6b6d_0000 + r as u64);
        // k-means++ seeding
        let mut centers: Vec<f64> = Vec::with_capacity(k * d);
        let first = rng.gen_range(0..n);
        centers.extend_from_slice(row(first));
        while centers.len() < k * d {
            let m = centers.len() / d;
            let d2: Vec<f64> = (0..n)
                .map(|i| {
                    (0..m)
                        .map(|c| dist2(row(i), &centers[c * d..(c + 1) * d]))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let total: f64 = d2.iter().sum();
            let pick = if total > 0.0 {
                let mut target = rng.gen::<f64>() * total;
                let mut chosen = n - 1;
                for (i, &w) in d2.iter().enumerate() {
                    if target < w {
                        chosen = i;
                        break;
                    }
                    target -= w;
                }
                chosen
            } else {
                rng.gen_range(0..n)
            };
            centers.extend_from_slice(row(pick));
        }

        let mut labels = vec![0u8; n];
        for _ in 0..100 {
            for i in 0..n {
                let mut best_c = 0usize;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let dd = dist2(row(i), &centers[c * d..(c + 1) * d]);
                    if dd < best_d {
                        best_d = dd;
                        best_c = c;
                    }
                }
                labels[i] = best_c as u8;
            }
            let mut new_centers = vec![0.0f64; k * d];
            let mut counts = vec![0usize; k];
            for i in 0..n {
                let c = labels[i] as usize;
                counts[c] += 1;
                for (slot, &v) in new_centers[c * d..(c + 1) * d].iter_mut().zip(row(i)) {
                    *slot += v;
                }
            }
            let mut movement = 0.0f64;
            for c in 0..k {
                if counts[c] == 0 {
                    // keep the previous center for an empty cluster
                    new_centers[c * d..(c + 1) * d]
                        .copy_from_slice(&centers[c * d..(c + 1) * d]);
                    continue;
                }
                for slot in new_centers[c * d..(c + 1) * d].iter_mut() {
                    *slot /= counts[c] as f64;
                }
                movement = movement.max(
                    dist2(
                        &new_centers[c * d..(c + 1) * d],
                        &centers[c * d..(c + 1) * d],
                    )
                    .sqrt(),
                );
            }
            centers = new_centers;
            if movement < 1e-6 {
                break;
            }
        }
        let inertia: f64 = (0..n)
            .map(|i| dist2(row(i), &centers[labels[i] as usize * d..(labels[i] as usize + 1) * d]))
            .sum();
        if best.as_ref().map_or(true, |b| inertia < b.inertia) {
            best = Some(KmeansResult {
                labels,
                inertia,
                degenerate: false,
            });
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antipodal_groups_recovered() {
        // two clumps at opposite poles of the unit sphere
        let mut pts = Vec::new();
        let n = 30;
        for i in 0..n {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let jitter = (i as f64) * 1e-3;
            let v = [sign, sign * jitter, 0.1 * sign];
            let norm = (v.iter().map(|x| x * x).sum::<f64>()).sqrt();
            pts.extend(v.iter().map(|x| x / norm));
        }
        let res = kmeans(&pts, n, 3, 2, 7).unwrap();
        assert!(!res.degenerate);
        for i in 0..n {
            assert_eq!(res.labels[i] == res.labels[0], i % 2 == 0);
        }
    }

    #[test]
    fn identical_points_fall_back() {
        let pts = vec![0.5f64; 12 * 2];
        let res = kmeans(&pts, 12, 2, 2, 3).unwrap();
        assert!(res.degenerate);
        assert!(res.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn beats_or_matches_exhaustive_partition_oracle() {
        // 12 points in 2-D: enumerate all 2^11 binary partitions
        let mut rng = crate::rng::rng_for(99, 0);
        use rand::Rng;
        let n = 12;
        let pts: Vec<f64> = (0..n * 2).map(|_| rng.gen::<f64>()).collect();
        let res = kmeans(&pts, n, 2, 2, 11).unwrap();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << (n - 1)) {
            let assign: Vec<usize> = (0..n)
                .map(|i| if i == 0 { 0 } else { ((mask >> (i - 1)) & 1) as usize })
                .collect();
            let mut centers = [[0.0f64; 2]; 2];
            let mut counts = [0usize; 2];
            for i in 0..n {
                counts[assign[i]] += 1;
                centers[assign[i]][0] += pts[i * 2];
                centers[assign[i]][1] += pts[i * 2 + 1];
            }
            if counts.iter().any(|&c| c == 0) {
                continue;
            }
            for c in 0..2 {
                centers[c][0] /= counts[c] as f64;
                centers[c][1] /= counts[c] as f64;
            }
            let inertia: f64 = (0..n)
                .map(|i| {
                    let c = assign[i];
                    (pts[i * 2] - centers[c][0]).powi(2) + (pts[i * 2 + 1] - centers[c][1]).powi(2)
                })
                .sum();
            best = best.min(inertia);
        }
        assert!(
            res.inertia <= best + 1e-9,
            "kmeans {} vs oracle {}",
            res.inertia,
            best
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let mut rng = crate::rng::rng_for(5, 1);
        use rand::Rng;
        let pts: Vec<f64> = (0..50 * 4).map(|_| rng.gen::<f64>()).collect();
        let a = kmeans(&pts, 50, 4, 2, 13).unwrap();
        let b = kmeans(&pts, 50, 4, 2, 13).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }
}
