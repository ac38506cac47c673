//! The second-difference penalty matrix `N = D^T D` and its spectrum.
//!
//! For order `k` the matrix is symmetric pentadiagonal with interior
//! stencil `(1, -4, 6, -4, 1)`. Specialised to `k = n` it is the row-direction
//! penalty `T`; to `k = m` it is the column-direction penalty `H`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, TdsError};
use crate::grid::{Grid, Weights, MIN_SIDE};

/// Largest order the dense eigensolver will accept.
pub const MAX_SPECTRAL_ORDER: usize = 4096;

/// Relative threshold (times the spectral norm) below which an eigenvalue
/// counts as zero.
pub const NEAR_ZERO_REL: f64 = 1e-9;

/// Symmetric pentadiagonal penalty matrix in band storage.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    order: usize,
    diag: Vec<f64>,
    /// `off1[i] = N[i][i+1]`
    off1: Vec<f64>,
    /// `off2[i] = N[i][i+2]`
    off2: Vec<f64>,
}

/// Builds the order-`k` penalty matrix.
pub fn build_penalty(k: usize) -> Result<PenaltyMatrix> {
    if k < MIN_SIDE {
        return Err(TdsError::Dimension(format!(
            "penalty matrix needs order >= {MIN_SIDE}, got {k}"
        )));
    }
    let (diag, off1) = match k {
        3 => (vec![1.0, 4.0, 1.0], vec![-2.0, -2.0]),
        4 => (vec![1.0, 5.0, 5.0, 1.0], vec![-2.0, -4.0, -2.0]),
        _ => {
            let mut diag = vec![6.0; k];
            diag[0] = 1.0;
            diag[1] = 5.0;
            diag[k - 2] = 5.0;
            diag[k - 1] = 1.0;
            let mut off1 = vec![-4.0; k - 1];
            off1[0] = -2.0;
            off1[k - 2] = -2.0;
            (diag, off1)
        }
    };
    Ok(PenaltyMatrix {
        order: k,
        diag,
        off1,
        off2: vec![1.0; k - 2],
    })
}

impl PenaltyMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Entry `(i, j)`, zero outside the band.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        match hi - lo {
            0 => self.diag[lo],
            1 => self.off1[lo],
            2 => self.off2[lo],
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.order, self.order, |i, j| self.entry(i, j))
    }

    /// Number of structurally nonzero entries.
    pub fn nonzeros(&self) -> usize {
        let count = |v: &[f64]| v.iter().filter(|x| **x != 0.0).count();
        count(&self.diag) + 2 * count(&self.off1) + 2 * count(&self.off2)
    }

    pub fn nonzero_fraction(&self) -> f64 {
        self.nonzeros() as f64 / (self.order * self.order) as f64
    }

    /// `y = N x` through the band.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = self.order;
        assert_eq!(x.len(), k);
        assert_eq!(y.len(), k);
        for i in 0..k {
            let mut acc = self.diag[i] * x[i];
            if i >= 1 {
                acc += self.off1[i - 1] * x[i - 1];
            }
            if i >= 2 {
                acc += self.off2[i - 2] * x[i - 2];
            }
            if i + 1 < k {
                acc += self.off1[i] * x[i + 1];
            }
            if i + 2 < k {
                acc += self.off2[i] * x[i + 2];
            }
            y[i] = acc;
        }
    }

    /// Per-row Gershgorin discs as `(centre, radius)`.
    pub fn gershgorin_circles(&self) -> Vec<(f64, f64)> {
        (0..self.order)
            .map(|i| {
                let lo = i.saturating_sub(2);
                let hi = (i + 2).min(self.order - 1);
                let radius = (lo..=hi).filter(|&j| j != i).map(|j| self.entry(i, j).abs()).sum();
                (self.diag[i], radius)
            })
            .collect()
    }
}

/// Free-function form of [`PenaltyMatrix::gershgorin_circles`].
pub fn gershgorin_circles(n: &PenaltyMatrix) -> Vec<(f64, f64)> {
    n.gershgorin_circles()
}

/// Orthogonal eigendecomposition `N = U diag(values) U^T`, values ascending.
#[derive(Debug, Clone)]
pub struct PenaltySpectrum {
    pub matrix: PenaltyMatrix,
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl PenaltySpectrum {
    pub fn order(&self) -> usize {
        self.matrix.order
    }

    /// Number of eigenvalues above `NEAR_ZERO_REL * max|eigenvalue|`.
    pub fn numerical_rank(&self) -> usize {
        let norm = self.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.eigenvalues
            .iter()
            .filter(|v| v.abs() > NEAR_ZERO_REL * norm)
            .count()
    }
}

/// Dense symmetric eigendecomposition of a penalty matrix.
pub fn spectrum(n: &PenaltyMatrix) -> Result<PenaltySpectrum> {
    let k = n.order;
    if k > MAX_SPECTRAL_ORDER {
        return Err(TdsError::TooLarge {
            size: k,
            limit: MAX_SPECTRAL_ORDER,
        });
    }
    let max_iter = 100 * k;
    let eig = SymmetricEigen::try_new(n.to_dense(), f64::EPSILON, max_iter).ok_or_else(|| {
        TdsError::Numerical(format!(
            "symmetric eigensolver did not converge for order {k} within {max_iter} iterations"
        ))
    })?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let eigenvectors = DMatrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(PenaltySpectrum {
        matrix: n.clone(),
        eigenvalues,
        eigenvectors,
    })
}

/// `G T`: the row-direction penalty applied along every row.
pub fn apply_along_rows(g: &Grid, t: &PenaltyMatrix) -> Grid {
    let (m, n) = g.shape();
    assert_eq!(t.order, n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        t.apply(g.row(i), &mut out[i * n..(i + 1) * n]);
    }
    Grid::from_parts(m, n, out)
}

/// `H G`: the column-direction penalty applied down every column.
pub fn apply_along_cols(g: &Grid, h: &PenaltyMatrix) -> Grid {
    let (m, n) = g.shape();
    assert_eq!(h.order, m);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let lo = i.saturating_sub(2);
        let hi = (i + 2).min(m - 1);
        let dst = &mut out[i * n..(i + 1) * n];
        for k in lo..=hi {
            let c = h.entry(i, k);
            for (d, s) in dst.iter_mut().zip(g.row(k)) {
                *d += c * s;
            }
        }
    }
    Grid::from_parts(m, n, out)
}

/// `diag(row) G T + H G diag(col)`, the weighted roughness operator.
pub fn apply_penalty_term(g: &Grid, w: &Weights) -> Grid {
    let (m, n) = g.shape();
    let t = build_penalty(n).expect("grid checked by caller");
    let h = build_penalty(m).expect("grid checked by caller");
    let gt = apply_along_rows(g, &t);
    let hg = apply_along_cols(g, &h);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let k = i * n + j;
            out[k] = w.row[i] * gt.as_slice()[k] + w.col[j] * hg.as_slice()[k];
        }
    }
    Grid::from_parts(m, n, out)
}

/// `G + diag(row) G T + H G diag(col)`: the left-hand side of the normal
/// equations for every variant.
pub fn apply_operator(g: &Grid, w: &Weights) -> Grid {
    let pen = apply_penalty_term(g, w);
    let data = g.as_slice().iter().zip(pen.as_slice()).map(|(a, b)| a + b).collect();
    Grid::from_parts(g.rows(), g.cols(), data)
}
