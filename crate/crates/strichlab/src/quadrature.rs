//! Gauss–Legendre nodes and composite Simpson weights.

/// Gauss–Legendre nodes and weights on [a, b], computed by Newton iteration
/// on P_n with the usual asymptotic starting guesses.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = mid - half * z;
        nodes[n - 1 - i] = mid + half * z;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}

/// P_n(z) and P_n'(z) by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Composite Simpson weights (1,4,2,...,4,1)·dt/3 for an even number of intervals.
pub fn simpson_sum(values: &[f64], dt: f64) -> f64 {
    let intervals = values.len() - 1;
    debug_assert!(intervals % 2 == 0, "Simpson needs an even number of intervals");
    let mut s = values[0] + values[intervals];
    for (k, v) in values.iter().enumerate().take(intervals).skip(1) {
        s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * dt / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 32, 64] {
            let (x, w) = gauss_legendre(n, -0.3, 1.7);
            for deg in 0..(2 * n) {
                let exact = (1.7f64.powi(deg as i32 + 1) - (-0.3f64).powi(deg as i32 + 1)) / (deg as f64 + 1.0);
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                assert!((got - exact).abs() < 1e-12 * exact.abs().max(1.0), "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn gl_nodes_sorted_and_inside() {
        let (x, w) = gauss_legendre(32, 0.0, 0.2);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert!(x[0] > 0.0 && x[31] < 0.2);
        assert!(w.iter().all(|&v| v > 0.0));
        assert!((w.iter().sum::<f64>() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn simpson_exact_on_cubics() {
        let dt = 0.1;
        let v: Vec<f64> = (0..=10).map(|k| {
            let t = k as f64 * dt;
            t * t * t - 2.0 * t + 1.0
        }).collect();
        let exact = 0.25 - 1.0 + 1.0;
        assert!((simpson_sum(&v, dt) - exact).abs() < 1e-14);
    }
}
