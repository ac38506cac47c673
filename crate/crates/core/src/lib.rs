//! Two-dimensional smoothing of gridded data.
//!
//! A grid `Z` is split into a smooth trend `G` and a fluctuation `C = Z - G`,
//! where `G` minimizes squared fit error plus weighted second-difference
//! roughness along rows and columns. Four parameterizations are supported:
//! one global `lambda`, separate row/column scalars, per-row/per-column
//! vectors, and the mixed scalar/vector forms.
//!
//! ```
//! use tds_core::{solve_tds, Grid};
//!
//! let z = Grid::from_fn(8, 6, |i, j| (i as f64 * 0.4).sin() + j as f64).unwrap();
//! let d = solve_tds(&z, 10.0).unwrap();
//! assert_eq!(d.trend.shape(), (8, 6));
//! assert!(d.diagnostics.residual <= 1e-10);
//! ```

// negated float comparisons deliberately treat NaN as a failure
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod penalty;
pub mod solver;
pub mod synth;
pub mod tuning;

pub use baselines::{gaussian_filter, mean_filter, median_filter, wiener_filter, WindowSpec};
pub use error::{Result, TdsError};
pub use grid::{loss, loss_gradient, roughness, Grid, SmoothingParams, Weights};
pub use io::{read_matrix, read_pgm, write_matrix, write_pgm, PgmImage};
pub use metrics::{mse, psnr, ssim, MetricReport};
pub use penalty::{build_penalty, spectrum, PenaltyMatrix, PenaltySpectrum};
pub use solver::{
    forward_apply, solve, solve_cg, solve_dense_kronecker, solve_tds, solve_tds1, solve_tds2, solve_tds3,
    sylvester_residual, CgOptions, Decomposition, ScalarAxis, SolveDiagnostics, SolveMethod, SpectralCache,
};
pub use synth::{apply_noise, canonical_fixture, test_surface, NoiseKind, NoiseSpec, SplitMix64};
pub use tuning::{fluctuation_std, tune_lambda, TuneConfig, TuneMetric, TuneResult, TuneStatus};
