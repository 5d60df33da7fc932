//! Gauss–Legendre rules and a few numerically careful special functions
//! shared by the planar profile and the fitted face flux.

use std::sync::OnceLock;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
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
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }

    /// Mapped nodes and weights on `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, w * half))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 10-point rule.
pub fn gl10() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(10))
}

/// Shared 16-point rule.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// `((1+s)^m - 1) / s`, continuous at `s = 0`.
pub fn pow_quotient(m: f64, s: f64) -> f64 {
    if s.abs() < 1e-8 {
        m * (1.0 + 0.5 * (m - 1.0) * s)
    } else {
        (m * s.ln_1p()).exp_m1() / s
    }
}

/// `(1+s)^m - 1` without cancellation for small `s`.
pub fn pow_m1(m: f64, s: f64) -> f64 {
    (m * s.ln_1p()).exp_m1()
}

/// `ln(e^x - 1)` for `x > 0`.
pub fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Generalized binomial coefficient `binom(a, k)`.
pub fn binomial(a: f64, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= (a - i as f64) / (i as f64 + 1.0);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(10);
        // degree 19 is the highest exact degree
        let exact = 1.0 / 20.0;
        let got = rule.integrate(0.0, 1.0, |x| x.powi(19));
        assert!((got - exact).abs() < 1e-15, "{got}");
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn special_functions_near_zero() {
        assert!((pow_quotient(2.5, 0.0) - 2.5).abs() < 1e-15);
        let s = 1e-3;
        let direct = ((1.0f64 + s).powf(2.5) - 1.0) / s;
        assert!((pow_quotient(2.5, s) - direct).abs() < 1e-12);
        assert!((ln_expm1(40.0) - 40.0).abs() < 1e-15);
        assert!((ln_expm1(1.0) - (1.0f64.exp() - 1.0).ln()).abs() < 1e-15);
        assert!((binomial(2.5, 3) - 2.5 * 1.5 * 0.5 / 6.0).abs() < 1e-15);
    }
}
