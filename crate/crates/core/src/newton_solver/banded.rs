//! General band matrix with LU factorization by partial pivoting
//! (the unblocked LAPACK `gbtf2`/`gbtrs` algorithm).
//!
//! Storage follows LAPACK: `A(i, j)` lives at row `kl + ku + i − j` of column
//! `j` in a column-major array with `2 kl + ku + 1` rows; the top `kl` rows
//! receive the fill-in produced by pivoting.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BandError {
    #[error("zero pivot at column {column}")]
    Singular { column: usize },
    #[error("dimension mismatch: matrix {n}, vector {len}")]
    Dimension { n: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.slot(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to `A(i, j)`; panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band ({}, {})", self.kl, self.ku);
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let base = j * self.ldab + self.kl + self.ku;
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.ab[base + i - j] * xj;
            }
        }
        y
    }

    /// `b − A x` with error-free products and compensated sums, so that
    /// iterative refinement can push the residual below `ε·cond(A)·‖b‖`.
    pub fn residual_compensated(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (mut s, mut c) = (b[i], 0.0);
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                for (j, &xj) in x.iter().enumerate().take(hi + 1).skip(lo) {
                    let a = -self.ab[self.slot(i, j)];
                    let p = a * xj;
                    let e = a.mul_add(xj, -p);
                    let t = s + p;
                    let z = t - s;
                    c += (s - (t - z)) + (p - z) + e;
                    s = t;
                }
                s + c
            })
            .collect()
    }

    /// `|A| |x|`, the scale of the rounding floor of `A x`.
    pub fn abs_matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| (self.ab[self.slot(i, j)] * x[j]).abs()).sum()
            })
            .collect()
    }

    /// Structural nonzeros of row `i`.
    pub fn row_pattern(&self, i: usize) -> Vec<usize> {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        (lo..=hi).filter(|&j| self.get(i, j) != 0.0).collect()
    }

    pub fn factor(&self) -> Result<BandLu, BandError> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let mut ab = self.ab.clone();
        let mut ipiv = vec![0usize; n];
        let at = |r: usize, c: usize| c * ldab + kv + r - c;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ldab + kv;
            let mut jp = 0;
            let mut best = ab[col].abs();
            for t in 1..=km {
                let v = ab[col + t].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(BandError::Singular { column: j });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(at(j + jp, c), at(j, c));
                }
            }
            if km > 0 {
                let piv = 1.0 / ab[col];
                for t in 1..=km {
                    ab[col + t] *= piv;
                }
                for c in j + 1..=ju {
                    let u = ab[at(j, c)];
                    if u != 0.0 {
                        for t in 1..=km {
                            ab[at(j + t, c)] -= ab[col + t] * u;
                        }
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), BandError> {
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        if b.len() != n {
            return Err(BandError::Dimension { n, len: b.len() });
        }
        let kv = kl + self.ku;
        for j in 0..n.saturating_sub(1) {
            let lm = kl.min(n - 1 - j);
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let col = j * ldab + kv;
                for t in 1..=lm {
                    b[j + t] -= self.ab[col + t] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = j * ldab + kv;
            b[j] /= self.ab[col];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    b[i] -= self.ab[col + i - j] * bj;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v: f64 = rng.gen_range(-1.0..1.0);
                // keep the diagonal away from zero so the triangular cases stay well conditioned
                a.add(i, j, if i == j { v.signum() * (0.5 + 0.5 * v.abs()) } else { v });
            }
        }
        a
    }

    #[test]
    fn solves_random_systems_requiring_pivoting() {
        for &(n, kl, ku) in &[(1, 0, 0), (7, 2, 1), (50, 4, 4), (200, 9, 9), (30, 0, 3), (30, 3, 0)] {
            let a = random_band(n, kl, ku, n as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut b = a.matvec(&x);
            a.factor().unwrap().solve_in_place(&mut b).unwrap();
            let err = x.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(err < 1e-9, "n={n} kl={kl} ku={ku}: {err}");
        }
    }

    #[test]
    fn compensated_residual_is_exact_on_integers() {
        let a = random_band(40, 3, 3, 5);
        let x: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let r = a.residual_compensated(&b, &x);
        let loose: f64 = a.matvec(&x).iter().zip(&b).map(|(p, q)| (p - q).abs()).sum();
        assert_eq!(loose, 0.0);
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn matches_dense_elimination() {
        let a = random_band(12, 3, 2, 99);
        let n = 12;
        let mut dense: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
        let mut rhs: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let mut b = rhs.clone();
        for k in 0..n {
            let p = (k..n).max_by(|&x, &y| dense[x][k].abs().total_cmp(&dense[y][k].abs())).unwrap();
            dense.swap(k, p);
            rhs.swap(k, p);
            for i in k + 1..n {
                let f = dense[i][k] / dense[k][k];
                for j in k..n {
                    dense[i][j] -= f * dense[k][j];
                }
                rhs[i] -= f * rhs[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| dense[i][j] * x[j]).sum();
            x[i] = (rhs[i] - s) / dense[i][i];
        }
        a.factor().unwrap().solve_in_place(&mut b).unwrap();
        for (p, q) in x.iter().zip(&b) {
            assert!((p - q).abs() < 1e-11);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        assert!(matches!(a.factor(), Err(BandError::Singular { column: 2 })));
    }
}
