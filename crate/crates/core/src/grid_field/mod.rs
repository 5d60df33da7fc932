//! Fields on the truncated cylinder `[−L, L] × T¹` and the discrete operators
//! of the wave equation.

mod flux;
mod ops;

pub use flux::{fitted_flux, fitted_flux_value, FaceFlux};
pub use ops::{
    diff_ops, inverse_w_transform, poisson_rhs, residual_phi, w_transform, weak_residual, Bump, Derivatives,
    TestFunction, WaveOperator,
};

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-positive value p[{i},{j}] = {value}")]
    NonPositive { i: usize, j: usize, value: f64 },
    #[error("value p[{i},{j}] = {value} below floor {floor}")]
    BelowFloor { i: usize, j: usize, value: f64, floor: f64 },
    #[error("negative input {value} at index {index}")]
    Negative { index: usize, value: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("test function support [{lo}, {hi}] touches the x-boundary of [−{l}, {l}]")]
    SupportTouchesBoundary { lo: f64, hi: f64, l: f64 },
    #[error("field shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Uniform grid: `x_i = −L + i h_x`, `i < Nx`, Dirichlet ends; `y_j = j h_y`, periodic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub half_length: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, half_length: f64) -> Result<Self, GridError> {
        if nx < 8 {
            return Err(GridError::InvalidGrid(format!("Nx = {nx} < 8")));
        }
        if ny < 4 || ny % 2 != 0 {
            return Err(GridError::InvalidGrid(format!("Ny = {ny} must be even and ≥ 4")));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(GridError::InvalidGrid(format!("L = {half_length}")));
        }
        Ok(Self { nx, ny, half_length })
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.half_length / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx - 1 {
            self.half_length
        } else {
            -self.half_length + i as f64 * self.hx()
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    #[inline]
    pub fn up(&self, j: usize) -> usize {
        if j + 1 == self.ny {
            0
        } else {
            j + 1
        }
    }

    #[inline]
    pub fn down(&self, j: usize) -> usize {
        if j == 0 {
            self.ny - 1
        } else {
            j - 1
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y(j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Dirichlet { left: f64, right: f64 },
    Free,
}

/// Values on a [`Grid`], stored x-major: `values[i * Ny + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Grid,
    values: Vec<f64>,
    boundary: Boundary,
}

impl ScalarField2D {
    pub fn new(grid: Grid, values: Vec<f64>, boundary: Boundary) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::ShapeMismatch(format!("{} values for a {}×{} grid", values.len(), grid.nx, grid.ny)));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self { grid, values, boundary })
    }

    pub fn from_fn<F: FnMut(f64, f64) -> f64>(grid: Grid, mut f: F) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            let x = grid.x(i);
            for j in 0..grid.ny {
                values.push(f(x, grid.y(j)));
            }
        }
        Self {
            grid,
            values,
            boundary: Boundary::Free,
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
            boundary: Boundary::Free,
        }
    }

    /// Sets the Dirichlet marker and overwrites the end columns with it.
    pub fn with_dirichlet(mut self, left: f64, right: f64) -> Self {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for j in 0..ny {
            self.values[j] = left;
            self.values[(nx - 1) * ny + j] = right;
        }
        self.boundary = Boundary::Dirichlet { left, right };
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.ny + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.grid.ny + j] = v;
    }

    /// The y-line at `x_i`.
    pub fn line(&self, i: usize) -> &[f64] {
        let ny = self.grid.ny;
        &self.values[i * ny..(i + 1) * ny]
    }

    pub fn line_mean(&self, i: usize) -> f64 {
        self.line(i).iter().sum::<f64>() / self.grid.ny as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            boundary: self.boundary,
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self, GridError> {
        self.same_shape(other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            boundary: self.boundary,
        })
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64, GridError> {
        self.same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs())))
    }

    /// Largest spread across y over all x-lines.
    pub fn y_spread(&self) -> f64 {
        (0..self.grid.nx)
            .map(|i| {
                let l = self.line(i);
                let hi = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = l.iter().copied().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &Self) -> Result<(), GridError> {
        if self.grid != other.grid {
            return Err(GridError::ShapeMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// CSV with header `x,y,p`, x-major, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), GridError> {
        writeln!(out, "x,y,p")?;
        for i in 0..self.grid.nx {
            let x = self.grid.x(i);
            for j in 0..self.grid.ny {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", x, self.grid.y(j), self.get(i, j))?;
            }
        }
        Ok(())
    }

    /// Reads [`write_csv`](Self::write_csv) output. Constant end columns are
    /// taken as Dirichlet data.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, GridError> {
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            if n == 0 {
                if line.trim() != "x,y,p" {
                    return Err(GridError::Parse {
                        line: lineno,
                        message: format!("expected header `x,y,p`, found `{line}`"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = |name: &str| -> Result<f64, GridError> {
                let tok = parts.next().ok_or_else(|| GridError::Parse {
                    line: lineno,
                    message: format!("missing column {name}"),
                })?;
                tok.trim().parse::<f64>().map_err(|e| GridError::Parse {
                    line: lineno,
                    message: format!("column {name}: {e}"),
                })
            };
            let row = (next("x")?, next("y")?, next("p")?);
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(GridError::Parse {
                line: 1,
                message: "no data rows".into(),
            });
        }
        let x0 = rows[0].0;
        let ny = rows.iter().take_while(|r| r.0 == x0).count();
        if rows.len() % ny != 0 {
            return Err(GridError::Parse {
                line: rows.len() + 1,
                message: format!("{} rows is not a multiple of Ny = {ny}", rows.len()),
            });
        }
        let nx = rows.len() / ny;
        let grid = Grid::new(nx, ny, -x0)?;
        for (k, r) in rows.iter().enumerate() {
            let (i, j) = (k / ny, k % ny);
            if r.0 != grid.x(i) || r.1 != grid.y(j) {
                return Err(GridError::Parse {
                    line: k + 2,
                    message: format!("coordinates ({}, {}) off the inferred grid", r.0, r.1),
                });
            }
        }
        let values: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let mut field = Self::new(grid, values, Boundary::Free)?;
        let left = field.line(0);
        let right = field.line(nx - 1);
        if left.iter().all(|&v| v == left[0]) && right.iter().all(|&v| v == right[0]) {
            field.boundary = Boundary::Dirichlet {
                left: left[0],
                right: right[0],
            };
        }
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(7, 8, 1.0).is_err());
        assert!(Grid::new(8, 5, 1.0).is_err());
        assert!(Grid::new(8, 2, 1.0).is_err());
        let g = Grid::new(9, 4, 2.0).unwrap();
        assert_eq!(g.hx(), 0.5);
        assert_eq!(g.x(8), 2.0);
        assert_eq!(g.up(3), 0);
        assert_eq!(g.down(0), 3);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = Grid::new(11, 6, 3.7).unwrap();
        let f = ScalarField2D::from_fn(g, |x, y| (x * 1.234567).exp() + (7.0 * y).sin() / 3.0).with_dirichlet(0.1, 40.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = ScalarField2D::read_csv(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let text = "x,y,p\n-1,0,1\n-1,0.5,oops\n";
        match ScalarField2D::read_csv(text.as_bytes()) {
            Err(GridError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
