//! Cylinder functions and Gauss-Legendre rules used by the kernels.

use std::sync::OnceLock;

use num_complex::Complex64;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Hankel function of the first kind, order zero, real positive argument.
#[inline]
pub fn hankel0(x: f64) -> Complex64 {
    Complex64::new(libm::j0(x), libm::y0(x))
}

/// Hankel function of the first kind, order one, real positive argument.
#[inline]
pub fn hankel1(x: f64) -> Complex64 {
    Complex64::new(libm::j1(x), libm::y1(x))
}

#[inline]
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

#[inline]
pub fn bessel_j1(x: f64) -> f64 {
    libm::j1(x)
}

/// Integer-order Bessel function of the first kind.
#[inline]
pub fn bessel_jn(n: i32, x: f64) -> f64 {
    libm::jn(n, x)
}

/// Integer-order Bessel function of the second kind.
#[inline]
pub fn bessel_yn(n: i32, x: f64) -> f64 {
    libm::yn(n, x)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    // ascending order
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 16-point rule used by the panel quadratures.
pub fn gauss_legendre_16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Weights of the trigonometric quadrature for the logarithmic kernel
/// `ln(4 sin^2((t - tau)/2))` on `2n` equispaced nodes; entry `m` is the
/// weight for node offset `m` (the rule is symmetric in the offset).
pub fn log_quadrature_weights(n_nodes: usize) -> Vec<f64> {
    assert!(n_nodes >= 2 && n_nodes.is_multiple_of(2), "node count must be even");
    let n = n_nodes / 2;
    let nf = n as f64;
    let pi = std::f64::consts::PI;
    (0..n_nodes)
        .map(|m| {
            let tm = pi * m as f64 / nf;
            let mut s = 0.0;
            for p in 1..n {
                s += (p as f64 * tm).cos() / p as f64;
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * pi / nf * s - pi / (nf * nf) * sign
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg} got={got}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn log_weights_integrate_log_kernel() {
        // int_0^{2pi} ln(4 sin^2(tau/2)) cos(m tau) dtau = -2pi/m for m >= 1, 0 for m = 0
        let nn = 32;
        let w = log_quadrature_weights(nn);
        for m in 0..nn / 2 {
            let got: f64 = (0..nn)
                .map(|j| {
                    let tau = 2.0 * std::f64::consts::PI * j as f64 / nn as f64;
                    w[j] * (m as f64 * tau).cos()
                })
                .sum();
            let exact = if m == 0 {
                0.0
            } else {
                -2.0 * std::f64::consts::PI / m as f64
            };
            assert!((got - exact).abs() < 1e-12, "m={m}: {got} vs {exact}");
        }
    }

    #[test]
    fn hankel_small_argument_matches_log_behaviour() {
        let x: f64 = 1e-6;
        let h = hankel0(x);
        let expect = 2.0 / std::f64::consts::PI * ((x / 2.0).ln() + EULER_GAMMA);
        assert!((h.im - expect).abs() < 1e-10);
        assert!((h.re - 1.0).abs() < 1e-11);
    }
}
