//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

pub fn monotone_cubic(xs: &[f64], ys: &[f64]) -> MonotoneCubic {
    MonotoneCubic::new(xs, ys)
}

impl MonotoneCubic {
    /// `xs` strictly increasing, at least two points.
    pub fn new(xs: &[f64], ys: &[f64]) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len());
        let n = xs.len();
        let d: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();
        let mut slopes = vec![0.0; n];
        for k in 1..n - 1 {
            if d[k - 1] * d[k] <= 0.0 {
                slopes[k] = 0.0;
            } else {
                let (h0, h1) = (xs[k] - xs[k - 1], xs[k + 1] - xs[k]);
                let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
                slopes[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
            }
        }
        slopes[0] = end_slope(xs[1] - xs[0], xs.get(2).map_or(1.0, |x2| x2 - xs[1]), d[0], *d.get(1).unwrap_or(&d[0]));
        slopes[n - 1] = end_slope(
            xs[n - 1] - xs[n - 2],
            if n > 2 { xs[n - 2] - xs[n - 3] } else { 1.0 },
            d[n - 2],
            if n > 2 { d[n - 3] } else { d[n - 2] },
        );
        Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            slopes,
        }
    }

    /// Interpolates inside the data; beyond the ends continues linearly with
    /// the end slopes.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.slopes[0] * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.slopes[n - 1] * (x - self.xs[n - 1]);
        }
        let k = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[k] + h10 * h * self.slopes[k] + h01 * self.ys[k + 1] + h11 * h * self.slopes[k + 1]
    }

    pub fn end_slopes(&self) -> (f64, f64) {
        (self.slopes[0], *self.slopes.last().unwrap())
    }
}

/// Three-point one-sided end slope, limited to keep monotonicity.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}
