//! Solvers for the normal equations `G + diag(gamma) G T + H G diag(delta) = Z`.
//!
//! Uniform weights (TDS, TDS-I) are solved exactly in the joint eigenbasis of
//! `T` and `H`. Per-row/per-column weights (TDS-II, TDS-III) break that
//! structure and go through conjugate gradients on the matrix-free operator,
//! preconditioned by a line-separable nearby operator. A dense Kronecker
//! solve is kept as a reference.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Result, TdsError};
use crate::grid::{Grid, SmoothingParams, Weights};
use crate::penalty::{self, build_penalty, spectrum, PenaltyMatrix, PenaltySpectrum};

/// Largest `rows * cols` accepted by [`solve_dense_kronecker`].
pub const DENSE_ORACLE_LIMIT: usize = 4096;

/// Relative residual targeted by direct solves.
pub const DIRECT_TOLERANCE: f64 = 1e-10;

pub const DEFAULT_CG_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Spectral,
    ConjugateGradient,
    DenseKronecker,
}

impl SolveMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveMethod::Spectral => "spectral",
            SolveMethod::ConjugateGradient => "cg",
            SolveMethod::DenseKronecker => "dense-kronecker",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub method: SolveMethod,
    /// `||L(G) - Z||_F / ||Z||_F` (absolute when `Z = 0`).
    pub residual: f64,
    /// Bound the residual was checked against.
    pub tolerance: f64,
    pub iterations: usize,
    pub seconds: f64,
}

/// Trend/fluctuation split of an input grid.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub trend: Grid,
    pub fluctuation: Grid,
    pub params: SmoothingParams,
    pub diagnostics: SolveDiagnostics,
}

impl Decomposition {
    pub fn residual(&self) -> f64 {
        self.diagnostics.residual
    }

    pub fn iterations(&self) -> usize {
        self.diagnostics.iterations
    }

    fn assemble(z: &Grid, trend: Grid, params: SmoothingParams, diagnostics: SolveDiagnostics) -> Result<Self> {
        let fluctuation = z.sub(&trend)?;
        Ok(Decomposition {
            trend,
            fluctuation,
            params,
            diagnostics,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    /// `None` selects `10 * sqrt(rows * cols) + 200`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: DEFAULT_CG_TOLERANCE,
            max_iter: None,
        }
    }
}

impl CgOptions {
    pub fn max_iter_for(&self, rows: usize, cols: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| (10.0 * ((rows * cols) as f64).sqrt()) as usize + 200)
    }
}

/// Which axis of TDS-III carries the scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarAxis {
    /// Scalar row parameter `gamma`, per-column vector `delta`.
    Row,
    /// Per-row vector `gamma`, scalar column parameter `delta`.
    Col,
}

/// Relative normal-equation residual `||L(G) - Z|| / ||Z||`.
pub fn normal_residual(g: &Grid, z: &Grid, w: &Weights) -> f64 {
    let lg = penalty::apply_operator(g, w);
    let diff: f64 = lg
        .as_slice()
        .iter()
        .zip(z.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = z.frobenius_norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Residual bound for direct solves.
fn direct_tolerance(w: &Weights) -> f64 {
    DIRECT_TOLERANCE.max(rounding_floor(w))
}

/// Smallest relative residual resolvable in double precision, from the
/// operator norm bound `1 + 16 (max gamma + max delta)`.
fn rounding_floor(w: &Weights) -> f64 {
    let row = w.row.iter().copied().fold(0.0, f64::max);
    let col = w.col.iter().copied().fold(0.0, f64::max);
    8.0 * f64::EPSILON * (1.0 + 16.0 * (row + col))
}

/// Eigendecompositions of `T` (order `cols`) and `H` (order `rows`), shared
/// by every uniform-weight solve on grids of one shape.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    rows: usize,
    cols: usize,
    /// Spectrum of `T`, acting along rows.
    row_penalty: PenaltySpectrum,
    /// Spectrum of `H`, acting down columns.
    col_penalty: PenaltySpectrum,
}

impl SpectralCache {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        let row_penalty = spectrum(&build_penalty(cols)?)?;
        let col_penalty = spectrum(&build_penalty(rows)?)?;
        Ok(SpectralCache {
            rows,
            cols,
            row_penalty,
            col_penalty,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row_spectrum(&self) -> &PenaltySpectrum {
        &self.row_penalty
    }

    pub fn col_spectrum(&self) -> &PenaltySpectrum {
        &self.col_penalty
    }

    /// Eigenvalues of the Kronecker-sum system, `1 + gamma mu_j + delta rho_i`,
    /// laid out row-major as an `rows x cols` table.
    pub fn denominators(&self, gamma: f64, delta: f64) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.rows * self.cols);
        for &rho in &self.col_penalty.eigenvalues {
            for &mu in &self.row_penalty.eigenvalues {
                // tiny negative eigenvalues are rounding noise on the null space
                d.push(1.0 + gamma * mu.max(0.0) + delta * rho.max(0.0));
            }
        }
        d
    }

    fn transform(&self, z: &Grid, gamma: f64, delta: f64) -> Grid {
        let (m, n) = (self.rows, self.cols);
        let zm = DMatrix::from_row_slice(m, n, z.as_slice());
        let u = &self.row_penalty.eigenvectors;
        let v = &self.col_penalty.eigenvectors;
        let mut zt = v.transpose() * zm * u;
        let denom = self.denominators(gamma, delta);
        for i in 0..m {
            for j in 0..n {
                zt[(i, j)] /= denom[i * n + j];
            }
        }
        let g = v * zt * u.transpose();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(g[(i, j)]);
            }
        }
        Grid::from_parts(m, n, out)
    }

    /// Exact solve of `G + gamma G T + delta H G = Z`.
    pub fn solve(&self, z: &Grid, gamma: f64, delta: f64) -> Result<Decomposition> {
        let params = if gamma == delta {
            SmoothingParams::tds(gamma)
        } else {
            SmoothingParams::tds1(gamma, delta)
        };
        self.solve_params(z, params)
    }

    pub(crate) fn solve_params(&self, z: &Grid, params: SmoothingParams) -> Result<Decomposition> {
        let start = Instant::now();
        z.ensure_smoothable()?;
        if z.shape() != self.shape() {
            return Err(TdsError::ShapeMismatch {
                expected: self.shape(),
                found: z.shape(),
            });
        }
        let (gamma, delta) = params
            .uniform_pair()
            .ok_or_else(|| TdsError::Parameter(format!("{} has no spectral solve", params.name())))?;
        let w = params.weights(self.rows, self.cols)?;
        if gamma == 0.0 && delta == 0.0 {
            let diagnostics = SolveDiagnostics {
                method: SolveMethod::Spectral,
                residual: 0.0,
                tolerance: DIRECT_TOLERANCE,
                iterations: 0,
                seconds: start.elapsed().as_secs_f64(),
            };
            return Decomposition::assemble(z, z.clone(), params, diagnostics);
        }
        let tolerance = direct_tolerance(&w);
        let mut g = self.transform(z, gamma, delta);
        let mut residual = normal_residual(&g, z, &w);
        // one or two refinement sweeps recover the digits lost in the
        // eigenbasis round trip when the operator is badly scaled
        let mut sweeps = 0;
        while residual > 0.1 * tolerance && sweeps < 2 {
            let lg = penalty::apply_operator(&g, &w);
            let r = z.sub(&lg)?;
            let dg = self.transform(&r, gamma, delta);
            let candidate = g.add(&dg)?;
            let cand_res = normal_residual(&candidate, z, &w);
            sweeps += 1;
            if cand_res < residual {
                g = candidate;
                residual = cand_res;
            } else {
                break;
            }
        }
        if !(residual <= tolerance) {
            return Err(TdsError::Numerical(format!(
                "spectral solve residual {residual:e} exceeds {tolerance:e}"
            )));
        }
        let diagnostics = SolveDiagnostics {
            method: SolveMethod::Spectral,
            residual,
            tolerance,
            iterations: 0,
            seconds: start.elapsed().as_secs_f64(),
        };
        Decomposition::assemble(z, g, params, diagnostics)
    }
}

/// Global smoothing: `G + lambda (G T + H G) = Z`.
pub fn solve_tds(z: &Grid, lambda: f64) -> Result<Decomposition> {
    z.ensure_smoothable()?;
    SmoothingParams::tds(lambda).validate(z.rows(), z.cols())?;
    let cache = SpectralCache::new(z.rows(), z.cols())?;
    cache.solve_params(z, SmoothingParams::tds(lambda))
}

/// Separate row and column parameters: `G + gamma G T + delta H G = Z`.
pub fn solve_tds1(z: &Grid, gamma: f64, delta: f64) -> Result<Decomposition> {
    z.ensure_smoothable()?;
    let params = SmoothingParams::tds1(gamma, delta);
    params.validate(z.rows(), z.cols())?;
    let cache = SpectralCache::new(z.rows(), z.cols())?;
    cache.solve_params(z, params)
}

/// Per-row and per-column parameters: `G + diag(gamma) G T + H G diag(delta) = Z`.
pub fn solve_tds2(z: &Grid, gamma: &[f64], delta: &[f64], opts: CgOptions) -> Result<Decomposition> {
    solve_cg(z, SmoothingParams::tds2(gamma.to_vec(), delta.to_vec()), opts)
}

/// Scalar on one axis, vector on the other.
pub fn solve_tds3(z: &Grid, axis: ScalarAxis, scalar: f64, vector: &[f64], opts: CgOptions) -> Result<Decomposition> {
    let params = match axis {
        ScalarAxis::Row => SmoothingParams::TdsIIIRowScalar {
            gamma: scalar,
            delta: vector.to_vec(),
        },
        ScalarAxis::Col => SmoothingParams::TdsIIIColScalar {
            gamma: vector.to_vec(),
            delta: scalar,
        },
    };
    solve_cg(z, params, opts)
}

/// Routes to the spectral path for uniform weights and to CG otherwise.
pub fn solve(z: &Grid, params: &SmoothingParams) -> Result<Decomposition> {
    match params {
        SmoothingParams::Tds { lambda } => solve_tds(z, *lambda),
        SmoothingParams::TdsI { gamma, delta } => solve_tds1(z, *gamma, *delta),
        _ => solve_cg(z, params.clone(), CgOptions::default()),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `LDL'` factors of a symmetric pentadiagonal matrix.
#[derive(Debug, Clone)]
struct BandFactor {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl BandFactor {
    /// `diag`, `off1[i] = A[i][i-1]` and `off2[i] = A[i][i-2]` (leading entries unused).
    fn new(diag: &[f64], off1: &[f64], off2: &[f64]) -> Result<Self> {
        let k = diag.len();
        let (mut d, mut l1, mut l2) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
        for i in 0..k {
            if i >= 2 {
                l2[i] = off2[i] / d[i - 2];
            }
            if i >= 1 {
                let carry = if i >= 2 { l2[i] * d[i - 2] * l1[i - 1] } else { 0.0 };
                l1[i] = (off1[i] - carry) / d[i - 1];
            }
            let mut di = diag[i] - l1[i] * l1[i] * if i >= 1 { d[i - 1] } else { 0.0 };
            if i >= 2 {
                di -= l2[i] * l2[i] * d[i - 2];
            }
            if !(di > 0.0) {
                return Err(TdsError::Numerical(format!(
                    "line factor pivot {di:e} at {i} is not positive"
                )));
            }
            d[i] = di;
        }
        Ok(BandFactor { d, l1, l2 })
    }

    fn solve(&self, x: &mut [f64]) {
        let k = x.len();
        for i in 1..k {
            x[i] -= self.l1[i] * x[i - 1];
            if i >= 2 {
                x[i] -= self.l2[i] * x[i - 2];
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..k).rev() {
            if i + 1 < k {
                x[i] -= self.l1[i + 1] * x[i + 1];
            }
            if i + 2 < k {
                x[i] -= self.l2[i + 2] * x[i + 2];
            }
        }
    }
}

fn geometric_mean(v: &[f64]) -> f64 {
    (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
}

fn spread(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi / lo
}

/// Inverse of a nearby operator that keeps one weight vector exactly and
/// replaces the other by its geometric mean. In the eigenbasis of the
/// scalar-weighted penalty the nearby operator splits into independent
/// pentadiagonal systems, one per line. Exact for TDS-III and uniform weights.
#[derive(Debug, Clone)]
enum Preconditioner {
    /// Per-row `gamma` kept; lines are columns of `G U_T`.
    RowWeights {
        basis: DMatrix<f64>,
        lines: Vec<BandFactor>,
    },
    /// Per-column `delta` kept; lines are rows of `V_H' G`.
    ColWeights {
        basis: DMatrix<f64>,
        lines: Vec<BandFactor>,
    },
    Jacobi(Vec<f64>),
}

impl Preconditioner {
    fn new(w: &Weights, t: &PenaltyMatrix, h: &PenaltyMatrix) -> Result<Self> {
        let (m, n) = (w.row.len(), w.col.len());
        let keep_rows = spread(&w.row) >= spread(&w.col);
        let other = if keep_rows { n } else { m };
        if other > penalty::MAX_SPECTRAL_ORDER {
            let mut inv_diag = Vec::with_capacity(m * n);
            for i in 0..m {
                for j in 0..n {
                    inv_diag.push(1.0 / (1.0 + w.row[i] * t.entry(j, j) + w.col[j] * h.entry(i, i)));
                }
            }
            return Ok(Preconditioner::Jacobi(inv_diag));
        }
        // line matrix: I + diag(kept) * mu + scalar * N_line
        let build = |kept: &[f64], scalar: f64, line: &PenaltyMatrix, mu: f64| {
            let k = kept.len();
            let diag: Vec<f64> = (0..k).map(|i| 1.0 + kept[i] * mu + scalar * line.entry(i, i)).collect();
            let off1: Vec<f64> = (0..k)
                .map(|i| if i >= 1 { scalar * line.entry(i, i - 1) } else { 0.0 })
                .collect();
            let off2: Vec<f64> = (0..k)
                .map(|i| if i >= 2 { scalar * line.entry(i, i - 2) } else { 0.0 })
                .collect();
            BandFactor::new(&diag, &off1, &off2)
        };
        if keep_rows {
            let s = spectrum(t)?;
            let delta = geometric_mean(&w.col);
            let lines = s
                .eigenvalues
                .iter()
                .map(|&mu| build(&w.row, delta, h, mu.max(0.0)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Preconditioner::RowWeights {
                basis: s.eigenvectors,
                lines,
            })
        } else {
            let s = spectrum(h)?;
            let gamma = geometric_mean(&w.row);
            let lines = s
                .eigenvalues
                .iter()
                .map(|&rho| build(&w.col, gamma, t, rho.max(0.0)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Preconditioner::ColWeights {
                basis: s.eigenvectors,
                lines,
            })
        }
    }

    fn apply(&self, r: &[f64], m: usize, n: usize) -> Vec<f64> {
        match self {
            Preconditioner::Jacobi(inv) => r.iter().zip(inv).map(|(a, b)| a * b).collect(),
            Preconditioner::RowWeights { basis, lines } => {
                let mut rt = DMatrix::from_row_slice(m, n, r) * basis;
                let mut col = vec![0.0; m];
                for (j, f) in lines.iter().enumerate() {
                    for i in 0..m {
                        col[i] = rt[(i, j)];
                    }
                    f.solve(&mut col);
                    for i in 0..m {
                        rt[(i, j)] = col[i];
                    }
                }
                row_major(&(rt * basis.transpose()))
            }
            Preconditioner::ColWeights { basis, lines } => {
                let mut rt = basis.transpose() * DMatrix::from_row_slice(m, n, r);
                let mut row = vec![0.0; n];
                for (i, f) in lines.iter().enumerate() {
                    for j in 0..n {
                        row[j] = rt[(i, j)];
                    }
                    f.solve(&mut row);
                    for j in 0..n {
                        rt[(i, j)] = row[j];
                    }
                }
                row_major(&(basis * rt))
            }
        }
    }
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.nrows() * a.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// Preconditioned conjugate gradients on the matrix-free operator.
pub fn solve_cg(z: &Grid, params: SmoothingParams, opts: CgOptions) -> Result<Decomposition> {
    let start = Instant::now();
    z.ensure_smoothable()?;
    let (m, n) = z.shape();
    let w = params.weights(m, n)?;
    if !(opts.tol > 0.0) {
        return Err(TdsError::Parameter(format!("tolerance must be > 0, got {}", opts.tol)));
    }
    let max_iter = opts.max_iter_for(m, n);
    let tol = opts.tol.max(rounding_floor(&w));
    let t = build_penalty(n)?;
    let h = build_penalty(m)?;
    let precond = Preconditioner::new(&w, &t, &h)?;

    let b = z.as_slice();
    let b_norm = dot(b, b).sqrt();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let apply = |x: &[f64]| -> Vec<f64> { penalty::apply_operator(&Grid::from_parts(m, n, x.to_vec()), &w).into_vec() };

    let mut x = vec![0.0; m * n];
    let mut iterations = 0;
    let mut residual = b_norm / scale;
    // restart from the true residual if the recursive one drifted
    'outer: while iterations < max_iter {
        let ax = apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        residual = dot(&r, &r).sqrt() / scale;
        if residual <= tol {
            break;
        }
        let mut zv = precond.apply(&r, m, n);
        let mut p = zv.clone();
        let mut rz = dot(&r, &zv);
        while iterations < max_iter {
            iterations += 1;
            let q = apply(&p);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(TdsError::Numerical(format!(
                    "operator lost positive definiteness (p.Ap = {pq:e})"
                )));
            }
            let alpha = rz / pq;
            for k in 0..x.len() {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            let rec = dot(&r, &r).sqrt() / scale;
            if rec <= tol {
                continue 'outer;
            }
            zv = precond.apply(&r, m, n);
            let rz_new = dot(&r, &zv);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..p.len() {
                p[k] = zv[k] + beta * p[k];
            }
        }
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        residual = dot(&r, &r).sqrt() / scale;
        break;
    }
    if !(residual <= tol) {
        return Err(TdsError::NotConverged { iterations, residual });
    }
    let trend = Grid::checked(m, n, x)?;
    let diagnostics = SolveDiagnostics {
        method: SolveMethod::ConjugateGradient,
        residual,
        tolerance: tol,
        iterations,
        seconds: start.elapsed().as_secs_f64(),
    };
    Decomposition::assemble(z, trend, params, diagnostics)
}

/// Dense Kronecker system matrix `I + T (x) Gamma + Delta (x) H` acting on
/// column-stacked `vec(G)` (index `j * rows + i`).
pub fn kronecker_system(rows: usize, cols: usize, w: &Weights) -> Result<DMatrix<f64>> {
    let t = build_penalty(cols)?;
    let h = build_penalty(rows)?;
    let size = rows * cols;
    let mut k = DMatrix::<f64>::identity(size, size);
    for j in 0..cols {
        for l in 0..cols {
            let tjl = t.entry(j, l);
            for i in 0..rows {
                // T (x) Gamma: block (j, l) is T[j, l] * Gamma
                k[(j * rows + i, l * rows + i)] += tjl * w.row[i];
            }
        }
        for i in 0..rows {
            for q in 0..rows {
                // Delta (x) H: diagonal block j is delta_j * H
                k[(j * rows + i, j * rows + q)] += w.col[j] * h.entry(i, q);
            }
        }
    }
    Ok(k)
}

/// Reference solve by materializing and factoring the `mn x mn` system.
pub fn solve_dense_kronecker(z: &Grid, params: &SmoothingParams) -> Result<Decomposition> {
    let start = Instant::now();
    z.ensure_smoothable()?;
    let (m, n) = z.shape();
    if m * n > DENSE_ORACLE_LIMIT {
        return Err(TdsError::TooLarge {
            size: m * n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    let w = params.weights(m, n)?;
    let k = kronecker_system(m, n, &w)?;
    let mut rhs = nalgebra::DVector::zeros(m * n);
    for j in 0..n {
        for i in 0..m {
            rhs[j * m + i] = z[(i, j)];
        }
    }
    let sol = match k.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| TdsError::Numerical("dense Kronecker system is singular".into()))?,
    };
    let trend = Grid::checked(m, n, {
        let mut out = vec![0.0; m * n];
        for j in 0..n {
            for i in 0..m {
                out[i * n + j] = sol[j * m + i];
            }
        }
        out
    })?;
    let residual = normal_residual(&trend, z, &w);
    let diagnostics = SolveDiagnostics {
        method: SolveMethod::DenseKronecker,
        residual,
        tolerance: direct_tolerance(&w),
        iterations: 0,
        seconds: start.elapsed().as_secs_f64(),
    };
    Decomposition::assemble(z, trend, params.clone(), diagnostics)
}

/// `Z = G + diag(gamma) G T + H G diag(delta)`: the operator whose inverse the
/// solvers compute. Applied to an image it sharpens.
pub fn forward_apply(g: &Grid, params: &SmoothingParams) -> Result<Grid> {
    g.ensure_smoothable()?;
    let w = params.weights(g.rows(), g.cols())?;
    let out = penalty::apply_operator(g, &w);
    Grid::checked(out.rows(), out.cols(), out.into_vec())
}

/// `||G A + B G - Z||_F` with the identity split evenly,
/// `A = I/2 + gamma T` and `B = I/2 + delta H` (diagonal weights for the
/// per-row/per-column variants). Evaluated with dense products.
pub fn sylvester_residual(g: &Grid, z: &Grid, params: &SmoothingParams) -> Result<f64> {
    g.ensure_same_shape(z)?;
    g.ensure_smoothable()?;
    let (m, n) = g.shape();
    let w = params.weights(m, n)?;
    let gm = DMatrix::from_row_slice(m, n, g.as_slice());
    let zm = DMatrix::from_row_slice(m, n, z.as_slice());
    let t = build_penalty(n)?.to_dense();
    let h = build_penalty(m)?.to_dense();
    let lhs = match params.uniform_pair() {
        Some((gamma, delta)) => {
            let a = DMatrix::<f64>::identity(n, n) * 0.5 + t * gamma;
            let b = DMatrix::<f64>::identity(m, m) * 0.5 + h * delta;
            &gm * a + b * &gm
        }
        None => {
            let gamma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(w.row.clone()));
            let delta = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(w.col.clone()));
            (&gm * 0.5 + gamma * &gm * t) + (&gm * 0.5 + h * &gm * delta)
        }
    };
    Ok((lhs - zm).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::roughness;

    fn grid(rows: usize, cols: usize, seed: u64) -> Grid {
        let mut s = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        Grid::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        })
        .unwrap()
    }

    fn rel(a: &Grid, b: &Grid) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn zero_lambda_is_identity() {
        let z = grid(5, 6, 1);
        let d = solve_tds(&z, 0.0).unwrap();
        assert_eq!(d.trend, z);
        assert_eq!(d.fluctuation.max_abs(), 0.0);
    }

    #[test]
    fn bilinear_ramp_is_a_fixed_point() {
        let z = Grid::from_fn(6, 7, |i, j| 3.0 - 0.5 * i as f64 + 1.25 * j as f64).unwrap();
        for lambda in [0.5, 10.0, 1e4] {
            let d = solve_tds(&z, lambda).unwrap();
            assert!(rel(&d.trend, &z) < 1e-10, "lambda={lambda}");
            assert!(d.fluctuation.max_abs() < 1e-9);
        }
    }

    #[test]
    fn spectral_matches_dense_oracle() {
        let z = grid(5, 7, 2);
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let a = solve_tds(&z, lambda).unwrap();
            let b = solve_dense_kronecker(&z, &SmoothingParams::tds(lambda)).unwrap();
            assert!(rel(&a.trend, &b.trend) < 1e-8, "lambda={lambda}");
        }
        let z = grid(4, 6, 3);
        let a = solve_tds1(&z, 100.0, 60.0).unwrap();
        let b = solve_dense_kronecker(&z, &SmoothingParams::tds1(100.0, 60.0)).unwrap();
        assert!(rel(&a.trend, &b.trend) < 1e-8);
    }

    #[test]
    fn fluctuation_equals_weighted_roughness_operator() {
        let z = grid(6, 5, 4);
        let d = solve_tds(&z, 3.0).unwrap();
        let w = SmoothingParams::tds(3.0).weights(6, 5).unwrap();
        let c = penalty::apply_penalty_term(&d.trend, &w);
        assert!(rel(&c, &d.fluctuation) < 1e-10);
        assert!(rel(&d.trend.add(&d.fluctuation).unwrap(), &z) < 1e-14);
    }

    #[test]
    fn tds1_with_equal_parameters_is_tds() {
        let z = grid(7, 5, 5);
        let a = solve_tds1(&z, 4.0, 4.0).unwrap();
        let b = solve_tds(&z, 4.0).unwrap();
        assert!(rel(&a.trend, &b.trend) < 1e-10);
    }

    #[test]
    fn tds1_anisotropy_shifts_roughness() {
        // small gamma barely smooths along rows; large delta flattens columns
        let z = grid(8, 8, 6);
        let iso = solve_tds1(&z, 10.0, 10.0).unwrap();
        let aniso = solve_tds1(&z, 1e-3, 1e3).unwrap();
        let p = |g: &Grid| crate::grid::row_roughness(g).iter().sum::<f64>();
        let q = |g: &Grid| crate::grid::col_roughness(g).iter().sum::<f64>();
        assert!(p(&aniso.trend) > p(&iso.trend));
        assert!(q(&aniso.trend) < q(&iso.trend));
        assert!(q(&aniso.trend) < 1e-3 * q(&z));
    }

    #[test]
    fn tds2_with_constant_vectors_is_tds1() {
        let z = grid(6, 5, 7);
        let a = solve_tds2(&z, &[2.0; 6], &[7.0; 5], CgOptions::default()).unwrap();
        let b = solve_tds1(&z, 2.0, 7.0).unwrap();
        assert!(rel(&a.trend, &b.trend) < 1e-8);
        assert_eq!(a.diagnostics.method, SolveMethod::ConjugateGradient);
        assert!(a.iterations() > 0);
    }

    #[test]
    fn tds2_matches_dense_oracle() {
        let z = grid(5, 5, 8);
        let gamma = [0.3, 2.0, 11.0, 0.9, 5.0];
        let delta = [4.0, 0.2, 1.0, 30.0, 2.5];
        let a = solve_tds2(&z, &gamma, &delta, CgOptions::default()).unwrap();
        let b = solve_dense_kronecker(&z, &SmoothingParams::tds2(gamma.to_vec(), delta.to_vec())).unwrap();
        assert!(rel(&a.trend, &b.trend) < 1e-8);
    }

    #[test]
    fn heavy_row_weight_straightens_that_row() {
        let z = grid(6, 8, 9);
        let mut gamma = vec![1.0; 6];
        gamma[2] = 1e6;
        let opts = CgOptions {
            tol: 1e-12,
            max_iter: Some(20_000),
        };
        let heavy = solve_tds2(&z, &gamma, &[1.0; 8], opts).unwrap();
        let base = solve_tds2(&z, &[1.0; 6], &[1.0; 8], opts).unwrap();
        let heavy_p = crate::grid::row_roughness(&heavy.trend)[2];
        let base_p = crate::grid::row_roughness(&base.trend)[2];
        assert!(heavy_p < 1e-3 * base_p, "{heavy_p} vs {base_p}");
    }

    #[test]
    fn tds3_forms_match_oracle_and_broadcast() {
        let z = grid(4, 5, 10);
        let delta = [0.5, 3.0, 1.0, 8.0, 2.0];
        let a = solve_tds3(&z, ScalarAxis::Row, 2.0, &delta, CgOptions::default()).unwrap();
        let oracle = solve_dense_kronecker(&z, &a.params).unwrap();
        assert!(rel(&a.trend, &oracle.trend) < 1e-8);

        let z = grid(5, 4, 11);
        let gamma = [1.0, 9.0, 0.3, 2.0, 4.0];
        let b = solve_tds3(&z, ScalarAxis::Col, 6.0, &gamma, CgOptions::default()).unwrap();
        let oracle = solve_dense_kronecker(&z, &b.params).unwrap();
        assert!(rel(&b.trend, &oracle.trend) < 1e-8);

        let c = solve_tds3(&z, ScalarAxis::Row, 3.0, &[5.0; 4], CgOptions::default()).unwrap();
        let d = solve_tds1(&z, 3.0, 5.0).unwrap();
        assert!(rel(&c.trend, &d.trend) < 1e-8);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let z = grid(6, 6, 12);
        let opts = CgOptions {
            tol: 1e-14,
            max_iter: Some(1),
        };
        let gamma = [50.0, 0.1, 7.0, 300.0, 2.0, 0.5];
        let delta = [0.1, 90.0, 3.0, 0.2, 40.0, 8.0];
        match solve_tds2(&z, &gamma, &delta, opts) {
            Err(TdsError::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn line_preconditioner_is_exact_for_one_vector_axis() {
        let z = grid(9, 7, 21);
        let opts = CgOptions::default();
        let row = solve_tds3(&z, ScalarAxis::Row, 40.0, &[0.1, 5.0, 900.0, 2.0, 0.3, 60.0, 1.0], opts).unwrap();
        let col = solve_tds3(
            &z,
            ScalarAxis::Col,
            3.0,
            &[0.1, 5.0, 900.0, 2.0, 0.3, 60.0, 1.0, 8.0, 20.0],
            opts,
        )
        .unwrap();
        assert_eq!(row.iterations(), 1);
        assert_eq!(col.iterations(), 1);
    }

    #[test]
    fn band_factor_matches_dense_solve() {
        let k = 7;
        let diag: Vec<f64> = (0..k).map(|i| 10.0 + i as f64).collect();
        let off1: Vec<f64> = (0..k).map(|i| -1.5 + 0.1 * i as f64).collect();
        let off2: Vec<f64> = (0..k).map(|i| 0.7 - 0.05 * i as f64).collect();
        let a = DMatrix::from_fn(k, k, |i, j| match i.abs_diff(j) {
            0 => diag[i],
            1 => off1[i.max(j)],
            2 => off2[i.max(j)],
            _ => 0.0,
        });
        let b: Vec<f64> = (0..k).map(|i| (i as f64).sin()).collect();
        let expect = a.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        let mut x = b;
        BandFactor::new(&diag, &off1, &off2).unwrap().solve(&mut x);
        for i in 0..k {
            assert!((x[i] - expect[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn parameter_and_dimension_errors() {
        let z = grid(4, 4, 13);
        assert!(matches!(solve_tds(&z, -1.0), Err(TdsError::Parameter(_))));
        assert!(matches!(solve_tds1(&z, 0.0, 1.0), Err(TdsError::Parameter(_))));
        assert!(matches!(
            solve_tds2(&z, &[1.0, 1.0, -1.0, 1.0], &[1.0; 4], CgOptions::default()),
            Err(TdsError::Parameter(_))
        ));
        assert!(matches!(
            solve_tds2(&z, &[1.0; 3], &[1.0; 4], CgOptions::default()),
            Err(TdsError::Parameter(_))
        ));
        let thin = grid(2, 5, 14);
        assert!(matches!(solve_tds(&thin, 1.0), Err(TdsError::Dimension(_))));
        let big = Grid::zeros(65, 65).unwrap();
        assert!(matches!(
            solve_dense_kronecker(&big, &SmoothingParams::tds(1.0)),
            Err(TdsError::TooLarge { .. })
        ));
    }

    #[test]
    fn dense_oracle_on_centre_impulse() {
        let z = Grid::from_fn(3, 3, |i, j| if i == 1 && j == 1 { 1.0 } else { 0.0 }).unwrap();
        let d = solve_dense_kronecker(&z, &SmoothingParams::tds(1.0)).unwrap();
        assert!(d.trend.as_slice().iter().all(|&v| v > 0.0), "{:?}", d.trend);
        assert!(rel(&d.trend.add(&d.fluctuation).unwrap(), &z) < 1e-15);
    }

    #[test]
    fn kronecker_system_is_spd_with_unit_floor() {
        let w = SmoothingParams::tds2(vec![0.5, 2.0, 9.0, 1.0], vec![3.0, 0.1, 1.0])
            .weights(4, 3)
            .unwrap();
        let k = kronecker_system(4, 3, &w).unwrap();
        assert!((&k - k.transpose()).norm() < 1e-14);
        let eig = nalgebra::SymmetricEigen::new(k);
        assert!(eig.eigenvalues.min() >= 1.0 - 1e-9);
    }

    #[test]
    fn forward_apply_inverts_the_solver() {
        let z = grid(6, 6, 15);
        let d = solve_tds(&z, 2.0).unwrap();
        let back = forward_apply(&d.trend, &SmoothingParams::tds(2.0)).unwrap();
        assert!(rel(&back, &z) < 1e-8);
        assert_eq!(forward_apply(&z, &SmoothingParams::tds(0.0)).unwrap(), z);
        let ramp = Grid::from_fn(4, 5, |i, j| i as f64 * 2.0 - j as f64).unwrap();
        let out = forward_apply(&ramp, &SmoothingParams::tds(7.0)).unwrap();
        assert!(rel(&out, &ramp) < 1e-15);
    }

    #[test]
    fn sylvester_split_agrees_with_normal_equations() {
        let z = grid(5, 6, 16);
        let p = SmoothingParams::tds(5.0);
        let d = solve_tds(&z, 5.0).unwrap();
        assert!(sylvester_residual(&d.trend, &z, &p).unwrap() <= 1e-10 * z.frobenius_norm());
        assert_eq!(sylvester_residual(&z, &z, &SmoothingParams::tds(0.0)).unwrap(), 0.0);
        let other = grid(5, 6, 17);
        assert!(sylvester_residual(&other, &z, &p).unwrap() > 0.0);
    }

    #[test]
    fn roughness_decreases_with_lambda() {
        let z = grid(9, 7, 18);
        let cache = SpectralCache::new(9, 7).unwrap();
        let mut last = f64::INFINITY;
        for lambda in [0.1, 1.0, 10.0, 100.0, 1000.0] {
            let r = roughness(&cache.solve(&z, lambda, lambda).unwrap().trend);
            assert!(r <= last, "lambda={lambda}: {r} > {last}");
            last = r;
        }
    }

    #[test]
    fn denominators_are_at_least_one() {
        let cache = SpectralCache::new(5, 8).unwrap();
        assert!(cache.denominators(3.0, 0.5).iter().all(|&d| d >= 1.0));
    }
}
