//! Dense row-major grids, smoothing parameters and the penalized loss.
//!
//! Indices are 0-based throughout. Row-direction second differences act
//! along a row (over the column index `j`, valid for `j >= 2`);
//! column-direction second differences act along a column (over the row
//! index `i`, valid for `i >= 2`).

use std::fmt;
use std::ops::Index;

use crate::error::{Result, TdsError};
use crate::penalty;

/// Smallest side length accepted by the smoothing operators.
pub const MIN_SIDE: usize = 3;

/// Dense `rows x cols` matrix of finite `f64`, stored row-major.
#[derive(Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(TdsError::Dimension(format!(
                "grid must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(TdsError::Dimension(format!(
                "{rows}x{cols} grid needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(TdsError::Data(format!(
                "non-finite value {} at ({}, {})",
                data[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Grid { rows, cols, data })
    }

    /// Builds a grid from nested rows; all rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(m * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(TdsError::Dimension(format!(
                    "row {i} has {} values, expected {n}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Grid::new(m, n, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Grid::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Grid::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Grid::new(rows, cols, vec![value; rows * cols])
    }

    /// Internal constructor for data already known to be finite and sized.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Grid { rows, cols, data }
    }

    /// Re-validates data produced by arithmetic that may have overflowed.
    pub(crate) fn checked(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Grid::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i < self.rows && j < self.cols {
            Some(self.data[i * self.cols + j])
        } else {
            None
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Grid {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Grid::from_parts(self.cols, self.rows, out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Grid> {
        Grid::checked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.ensure_same_shape(other)?;
        Grid::checked(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn sub(&self, other: &Grid) -> Result<Grid> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Grid) -> Result<Grid> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn ensure_same_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(TdsError::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    /// Rejects grids smaller than 3x3, the minimum for second differences.
    pub fn ensure_smoothable(&self) -> Result<()> {
        if self.rows < MIN_SIDE || self.cols < MIN_SIDE {
            return Err(TdsError::Dimension(format!(
                "smoothing needs at least {MIN_SIDE}x{MIN_SIDE}, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Grid {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "grid index out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Grid {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Smoothing parameters for the four model variants.
///
/// `gamma` always weights row-direction roughness (differences along each
/// row, the `G T` term) and `delta` weights column-direction roughness (the
/// `H G` term). Per-row weights have length `rows`, per-column weights have
/// length `cols`.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothingParams {
    /// One global parameter for both directions. Zero is allowed.
    Tds { lambda: f64 },
    /// Global row parameter and global column parameter.
    TdsI { gamma: f64, delta: f64 },
    /// One parameter per row and one per column.
    TdsII { gamma: Vec<f64>, delta: Vec<f64> },
    /// Scalar row parameter, per-column vector: `G + gamma*G*T + H*G*diag(delta) = Z`.
    TdsIIIRowScalar { gamma: f64, delta: Vec<f64> },
    /// Per-row vector, scalar column parameter: `G + diag(gamma)*G*T + delta*H*G = Z`.
    TdsIIIColScalar { gamma: Vec<f64>, delta: f64 },
}

impl SmoothingParams {
    pub fn tds(lambda: f64) -> Self {
        SmoothingParams::Tds { lambda }
    }

    pub fn tds1(gamma: f64, delta: f64) -> Self {
        SmoothingParams::TdsI { gamma, delta }
    }

    pub fn tds2(gamma: Vec<f64>, delta: Vec<f64>) -> Self {
        SmoothingParams::TdsII { gamma, delta }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SmoothingParams::Tds { .. } => "tds",
            SmoothingParams::TdsI { .. } => "tds1",
            SmoothingParams::TdsII { .. } => "tds2",
            SmoothingParams::TdsIIIRowScalar { .. } => "tds3-row-scalar",
            SmoothingParams::TdsIIIColScalar { .. } => "tds3-col-scalar",
        }
    }

    /// Scalar pair `(gamma, delta)` when the weights are uniform per axis,
    /// which is what the spectral solver requires.
    pub fn uniform_pair(&self) -> Option<(f64, f64)> {
        match *self {
            SmoothingParams::Tds { lambda } => Some((lambda, lambda)),
            SmoothingParams::TdsI { gamma, delta } => Some((gamma, delta)),
            _ => None,
        }
    }

    /// Checks positivity and vector lengths against an `m x n` grid.
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(TdsError::Parameter(format!("{name} must be finite and > 0, got {v}")))
            }
        }
        fn positive_vec(name: &str, v: &[f64], len: usize) -> Result<()> {
            if v.len() != len {
                return Err(TdsError::Parameter(format!(
                    "{name} has length {}, expected {len}",
                    v.len()
                )));
            }
            for (k, &x) in v.iter().enumerate() {
                positive(&format!("{name}[{k}]"), x)?;
            }
            Ok(())
        }
        match self {
            SmoothingParams::Tds { lambda } => {
                if lambda.is_finite() && *lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(TdsError::Parameter(format!(
                        "lambda must be finite and >= 0, got {lambda}"
                    )))
                }
            }
            SmoothingParams::TdsI { gamma, delta } => {
                positive("gamma", *gamma)?;
                positive("delta", *delta)
            }
            SmoothingParams::TdsII { gamma, delta } => {
                positive_vec("gamma", gamma, m)?;
                positive_vec("delta", delta, n)
            }
            SmoothingParams::TdsIIIRowScalar { gamma, delta } => {
                positive("gamma", *gamma)?;
                positive_vec("delta", delta, n)
            }
            SmoothingParams::TdsIIIColScalar { gamma, delta } => {
                positive_vec("gamma", gamma, m)?;
                positive("delta", *delta)
            }
        }
    }

    /// Expands any variant into explicit per-row and per-column weights.
    pub fn weights(&self, m: usize, n: usize) -> Result<Weights> {
        self.validate(m, n)?;
        let w = match self {
            SmoothingParams::Tds { lambda } => Weights {
                row: vec![*lambda; m],
                col: vec![*lambda; n],
            },
            SmoothingParams::TdsI { gamma, delta } => Weights {
                row: vec![*gamma; m],
                col: vec![*delta; n],
            },
            SmoothingParams::TdsII { gamma, delta } => Weights {
                row: gamma.clone(),
                col: delta.clone(),
            },
            SmoothingParams::TdsIIIRowScalar { gamma, delta } => Weights {
                row: vec![*gamma; m],
                col: delta.clone(),
            },
            SmoothingParams::TdsIIIColScalar { gamma, delta } => Weights {
                row: gamma.clone(),
                col: vec![*delta; n],
            },
        };
        Ok(w)
    }

    /// Parameters for the transposed problem: row and column roles swap.
    pub fn transposed(&self) -> SmoothingParams {
        match self.clone() {
            SmoothingParams::Tds { lambda } => SmoothingParams::Tds { lambda },
            SmoothingParams::TdsI { gamma, delta } => SmoothingParams::TdsI {
                gamma: delta,
                delta: gamma,
            },
            SmoothingParams::TdsII { gamma, delta } => SmoothingParams::TdsII {
                gamma: delta,
                delta: gamma,
            },
            SmoothingParams::TdsIIIRowScalar { gamma, delta } => SmoothingParams::TdsIIIColScalar {
                gamma: delta,
                delta: gamma,
            },
            SmoothingParams::TdsIIIColScalar { gamma, delta } => SmoothingParams::TdsIIIRowScalar {
                gamma: delta,
                delta: gamma,
            },
        }
    }
}

/// Per-row weights (`row`, length m, the diagonal of Gamma) and per-column
/// weights (`col`, length n, the diagonal of Delta).
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

impl Weights {
    pub fn max(&self) -> f64 {
        self.row.iter().chain(&self.col).copied().fold(0.0, f64::max)
    }
}

/// Second difference along row `i` at column `j`: `g[i,j] - 2 g[i,j-1] + g[i,j-2]`.
pub fn second_diff_row(g: &Grid, i: usize, j: usize) -> Result<f64> {
    if i >= g.rows || j >= g.cols || j < 2 {
        return Err(TdsError::Index {
            row: i,
            col: j,
            rows: g.rows,
            cols: g.cols,
        });
    }
    let r = g.row(i);
    Ok(r[j] - 2.0 * r[j - 1] + r[j - 2])
}

/// Second difference along column `j` at row `i`: `g[i,j] - 2 g[i-1,j] + g[i-2,j]`.
pub fn second_diff_col(g: &Grid, i: usize, j: usize) -> Result<f64> {
    if i >= g.rows || j >= g.cols || i < 2 {
        return Err(TdsError::Index {
            row: i,
            col: j,
            rows: g.rows,
            cols: g.cols,
        });
    }
    Ok(g[(i, j)] - 2.0 * g[(i - 1, j)] + g[(i - 2, j)])
}

/// Squared row-direction roughness of each row (`P_i`).
pub fn row_roughness(g: &Grid) -> Vec<f64> {
    (0..g.rows)
        .map(|i| {
            g.row(i)
                .windows(3)
                .map(|w| {
                    let d = w[2] - 2.0 * w[1] + w[0];
                    d * d
                })
                .sum()
        })
        .collect()
}

/// Squared column-direction roughness of each column (`Q_j`).
pub fn col_roughness(g: &Grid) -> Vec<f64> {
    let mut q = vec![0.0; g.cols];
    for i in 2..g.rows {
        let (a, b, c) = (g.row(i - 2), g.row(i - 1), g.row(i));
        for j in 0..g.cols {
            let d = c[j] - 2.0 * b[j] + a[j];
            q[j] += d * d;
        }
    }
    q
}

/// Total unweighted roughness `P + Q`.
pub fn roughness(g: &Grid) -> f64 {
    row_roughness(g).iter().sum::<f64>() + col_roughness(g).iter().sum::<f64>()
}

/// Penalized least-squares objective minimized by every solver.
pub fn loss(z: &Grid, g: &Grid, params: &SmoothingParams) -> Result<f64> {
    z.ensure_same_shape(g)?;
    z.ensure_smoothable()?;
    let w = params.weights(z.rows, z.cols)?;
    let fit: f64 = z.data.iter().zip(&g.data).map(|(a, b)| (a - b) * (a - b)).sum();
    let p: f64 = row_roughness(g).iter().zip(&w.row).map(|(p, gw)| gw * p).sum();
    let q: f64 = col_roughness(g).iter().zip(&w.col).map(|(q, dw)| dw * q).sum();
    Ok(fit + p + q)
}

/// Exact gradient of [`loss`] with respect to `g`:
/// `2 (G + diag(gamma) G T + H G diag(delta) - Z)`.
pub fn loss_gradient(z: &Grid, g: &Grid, params: &SmoothingParams) -> Result<Grid> {
    z.ensure_same_shape(g)?;
    z.ensure_smoothable()?;
    let w = params.weights(z.rows, z.cols)?;
    let lg = penalty::apply_operator(g, &w);
    let data = lg.data.iter().zip(&z.data).map(|(a, b)| 2.0 * (a - b)).collect();
    Grid::checked(z.rows, z.cols, data)
}
