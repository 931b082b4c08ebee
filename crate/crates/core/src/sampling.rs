//! Deterministic point sets on unit spheres.

use statrs::distribution::{ContinuousCDF, Normal};

/// `count` points on the unit sphere in `R^k`.
///
/// `k = 2` uses equally spaced angles, `k = 3` a Fibonacci spiral, and higher
/// dimensions a Kronecker sequence pushed through the inverse normal CDF and
/// normalized. `k = 1` returns the two points `+1` and `-1`.
pub fn sphere_points(k: usize, count: usize) -> Vec<Vec<f64>> {
    match k {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let th = std::f64::consts::TAU * (i as f64 + 0.5) / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => fibonacci(count),
        _ => kronecker_gaussian(k, count),
    }
}

fn fibonacci(count: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            vec![r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

// Generalized golden ratio: positive root of x^(d+1) = x + 1.
fn harmonious(d: usize) -> f64 {
    let mut x: f64 = 2.0;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

fn kronecker_gaussian(k: usize, count: usize) -> Vec<Vec<f64>> {
    let g = harmonious(k);
    let alpha: Vec<f64> = (1..=k).map(|j| g.powi(-(j as i32))).collect();
    let normal = Normal::standard();
    (0..count)
        .map(|i| {
            let mut v: Vec<f64> = alpha
                .iter()
                .map(|a| {
                    let u = (0.5 + a * (i as f64 + 1.0)).fract();
                    normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
                })
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x /= norm;
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_everywhere() {
        for k in 1..=6 {
            for p in sphere_points(k, 500) {
                let n: f64 = p.iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn roughly_balanced() {
        // Mean of a well-spread set is close to the origin.
        for k in 2..=5 {
            let pts = sphere_points(k, 4096);
            for j in 0..k {
                let m: f64 = pts.iter().map(|p| p[j]).sum::<f64>() / pts.len() as f64;
                assert!(m.abs() < 0.02, "k={k} axis {j} mean {m}");
            }
        }
    }

    #[test]
    fn covering_radius_shrinks() {
        // Every direction has a sample within a modest angle.
        let pts = sphere_points(4, 1 << 14);
        let probes = sphere_points(4, 97);
        for q in probes {
            let best = pts.iter().map(|p| p.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>()).fold(-1.0, f64::max);
            assert!(best > 0.9, "{best}");
        }
    }
}
