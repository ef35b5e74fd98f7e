//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a quadrature rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]` with `panels` equal panels of the given rule.
pub fn composite<F: FnMut(f64) -> f64>(
    rule: &(Vec<f64>, Vec<f64>),
    a: f64,
    b: f64,
    panels: usize,
    mut f: F,
) -> f64 {
    let width = (b - a) / panels as f64;
    let half = 0.5 * width;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            total += w * half * f(mid + half * x);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 2..=16 {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.1.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-14, "n = {n}");
            // x^{2n-2} on [-1,1] integrates to 2/(2n-1)
            let deg = 2 * n - 2;
            let got: f64 = rule
                .0
                .iter()
                .zip(&rule.1)
                .map(|(x, w)| w * x.powi(deg as i32))
                .sum();
            assert!((got - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn composite_exponential() {
        let rule = gauss_legendre(8);
        let got = composite(&rule, 0.0, 1.0, 4, |r| (-2.0 * r).exp());
        assert!((got - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-15);
    }
}
