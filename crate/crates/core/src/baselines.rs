//! Window filters used as comparison baselines: median, mean, Gaussian and
//! adaptive Wiener. Borders use replicate padding throughout.
//!
//! A window of height `h` covers rows `i - (h-1)/2 ..= i + h/2`, so even
//! sizes put the extra row below and the extra column to the right.

use crate::error::{Result, TdsError};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub height: usize,
    pub width: usize,
}

impl WindowSpec {
    pub fn new(height: usize, width: usize) -> Self {
        WindowSpec { height, width }
    }

    pub fn square(side: usize) -> Self {
        WindowSpec::new(side, side)
    }

    fn validate(&self, z: &Grid) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(TdsError::Parameter(format!(
                "window must be at least 1x1, got {}x{}",
                self.height, self.width
            )));
        }
        if self.height > z.rows() || self.width > z.cols() {
            return Err(TdsError::Dimension(format!(
                "{}x{} window larger than {}x{} grid",
                self.height,
                self.width,
                z.rows(),
                z.cols()
            )));
        }
        Ok(())
    }

    fn before(&self) -> (usize, usize) {
        ((self.height - 1) / 2, (self.width - 1) / 2)
    }
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Calls `f` with every output position and its replicate-padded window.
fn for_each_window(z: &Grid, w: WindowSpec, mut f: impl FnMut(usize, usize, &[f64])) {
    let (m, n) = z.shape();
    let (up, left) = w.before();
    let mut buf = Vec::with_capacity(w.height * w.width);
    for i in 0..m {
        for j in 0..n {
            buf.clear();
            for di in 0..w.height {
                let r = clamp_index(i as isize + di as isize - up as isize, m);
                let row = z.row(r);
                for dj in 0..w.width {
                    let c = clamp_index(j as isize + dj as isize - left as isize, n);
                    buf.push(row[c]);
                }
            }
            f(i, j, &buf);
        }
    }
}

/// Median over the window; even counts average the two central values.
pub fn median_filter(z: &Grid, w: WindowSpec) -> Result<Grid> {
    w.validate(z)?;
    let mut out = Vec::with_capacity(z.len());
    let mut scratch = Vec::new();
    for_each_window(z, w, |_, _, vals| {
        scratch.clear();
        scratch.extend_from_slice(vals);
        let k = scratch.len();
        let mid = k / 2;
        let (_, upper, _) = scratch.select_nth_unstable_by(mid, f64::total_cmp);
        let upper = *upper;
        if k % 2 == 1 {
            out.push(upper);
        } else {
            let lower = scratch[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.push(0.5 * (lower + upper));
        }
    });
    Grid::new(z.rows(), z.cols(), out)
}

/// Window average.
pub fn mean_filter(z: &Grid, w: WindowSpec) -> Result<Grid> {
    w.validate(z)?;
    let mut out = Vec::with_capacity(z.len());
    for_each_window(z, w, |_, _, vals| {
        out.push(vals.iter().sum::<f64>() / vals.len() as f64);
    });
    Grid::new(z.rows(), z.cols(), out)
}

/// Sampled Gaussian of radius `ceil(3 sigma)`, normalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(TdsError::Parameter(format!(
            "sigma must be finite and > 0, got {sigma}"
        )));
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    Ok(k)
}

/// Separable Gaussian blur.
pub fn gaussian_filter(z: &Grid, sigma: f64) -> Result<Grid> {
    let k = gaussian_kernel(sigma)?;
    let r = (k.len() / 2) as isize;
    let (m, n) = z.shape();
    let mut tmp = vec![0.0; m * n];
    for i in 0..m {
        let row = z.row(i);
        for j in 0..n {
            tmp[i * n + j] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * row[clamp_index(j as isize + t as isize - r, n)])
                .sum();
        }
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * tmp[clamp_index(i as isize + t as isize - r, m) * n + j])
                .sum();
        }
    }
    Grid::new(m, n, out)
}

/// Local-statistics Wiener filter. The noise power is the mean of all local
/// variances.
pub fn wiener_filter(z: &Grid, w: WindowSpec) -> Result<Grid> {
    w.validate(z)?;
    let mut means = Vec::with_capacity(z.len());
    let mut vars = Vec::with_capacity(z.len());
    for_each_window(z, w, |_, _, vals| {
        let k = vals.len() as f64;
        let mu = vals.iter().sum::<f64>() / k;
        let sq = vals.iter().map(|v| v * v).sum::<f64>() / k;
        means.push(mu);
        vars.push((sq - mu * mu).max(0.0));
    });
    let noise = vars.iter().sum::<f64>() / vars.len() as f64;
    let out = z
        .as_slice()
        .iter()
        .zip(means.iter().zip(&vars))
        .map(|(&x, (&mu, &s2))| {
            let den = s2.max(noise);
            let gain = if den > 0.0 { (s2 - noise).max(0.0) / den } else { 0.0 };
            mu + gain * (x - mu)
        })
        .collect();
    Grid::new(z.rows(), z.cols(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(rows: usize, cols: usize, seed: u64) -> Grid {
        let mut s = seed;
        Grid::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .unwrap()
    }

    fn padded(z: &Grid, i: isize, j: isize) -> f64 {
        z[(clamp_index(i, z.rows()), clamp_index(j, z.cols()))]
    }

    #[test]
    fn constant_grids_are_fixed_points() {
        let z = Grid::filled(6, 7, 2.5).unwrap();
        let w = WindowSpec::square(3);
        assert_eq!(median_filter(&z, w).unwrap(), z);
        assert_eq!(mean_filter(&z, w).unwrap(), z);
        assert_eq!(wiener_filter(&z, w).unwrap(), z);
        let g = gaussian_filter(&z, 1.4).unwrap();
        assert!(g.as_slice().iter().all(|v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn median_removes_isolated_impulse() {
        let z = Grid::from_fn(5, 5, |i, j| if (i, j) == (2, 2) { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(median_filter(&z, WindowSpec::square(3)).unwrap()[(2, 2)], 0.0);
    }

    #[test]
    fn median_matches_sort_oracle() {
        let z = noisy(7, 7, 3);
        for w in [
            WindowSpec::square(3),
            WindowSpec::new(3, 4),
            WindowSpec::new(4, 3),
            WindowSpec::square(4),
            WindowSpec::square(5),
        ] {
            let out = median_filter(&z, w).unwrap();
            let (up, left) = ((w.height - 1) / 2, (w.width - 1) / 2);
            for i in 0..7 {
                for j in 0..7 {
                    let mut v = Vec::new();
                    for di in 0..w.height {
                        for dj in 0..w.width {
                            v.push(padded(
                                &z,
                                (i + di) as isize - up as isize,
                                (j + dj) as isize - left as isize,
                            ));
                        }
                    }
                    v.sort_by(f64::total_cmp);
                    let k = v.len();
                    let want = if k % 2 == 1 {
                        v[k / 2]
                    } else {
                        0.5 * (v[k / 2 - 1] + v[k / 2])
                    };
                    assert_eq!(out[(i, j)], want);
                }
            }
        }
    }

    #[test]
    fn mean_on_checkerboard_interior() {
        let z = Grid::from_fn(6, 6, |i, j| ((i + j) % 2) as f64).unwrap();
        let out = mean_filter(&z, WindowSpec::square(3)).unwrap();
        // a 1-site sees five 1s (itself and the diagonals); a 0-site sees four
        assert!((out[(2, 3)] - 5.0 / 9.0).abs() < 1e-15);
        assert!((out[(2, 2)] - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn mean_matches_convolution_oracle() {
        let z = noisy(8, 9, 5);
        let out = mean_filter(&z, WindowSpec::square(5)).unwrap();
        for i in 0..8 {
            for j in 0..9 {
                let mut s = 0.0;
                for di in -2..=2 {
                    for dj in -2..=2 {
                        s += padded(&z, i as isize + di, j as isize + dj) / 25.0;
                    }
                }
                assert!((out[(i, j)] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_impulse_response() {
        let z = Grid::from_fn(15, 15, |i, j| if (i, j) == (7, 7) { 1.0 } else { 0.0 }).unwrap();
        let k = gaussian_kernel(1.0).unwrap();
        let out = gaussian_filter(&z, 1.0).unwrap();
        assert!((out[(7, 7)] - k[3] * k[3]).abs() < 1e-15);
        for d in 1..4 {
            assert!((out[(7, 7 + d)] - out[(7, 7 - d)]).abs() < 1e-15);
            assert!((out[(7 + d, 7)] - out[(7, 7 + d)]).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_matches_direct_2d_convolution() {
        let z = noisy(9, 9, 7);
        let sigma = 1.2;
        let k = gaussian_kernel(sigma).unwrap();
        let r = (k.len() / 2) as isize;
        let out = gaussian_filter(&z, sigma).unwrap();
        for i in 0..9isize {
            for j in 0..9isize {
                let mut s = 0.0;
                for a in -r..=r {
                    for b in -r..=r {
                        s += k[(a + r) as usize] * k[(b + r) as usize] * padded(&z, i + a, j + b);
                    }
                }
                assert!((out[(i as usize, j as usize)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_rejects_bad_sigma() {
        let z = noisy(4, 4, 1);
        assert!(gaussian_filter(&z, 0.0).is_err());
        assert!(gaussian_filter(&z, f64::NAN).is_err());
    }

    #[test]
    fn wiener_reduces_white_noise_variance() {
        for seed in 0..10 {
            let z = noisy(64, 64, seed + 100);
            let out = wiener_filter(&z, WindowSpec::square(3)).unwrap();
            let var = |g: &Grid| {
                let mu = g.mean();
                g.as_slice().iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / g.len() as f64
            };
            assert!(var(&out) < var(&z));
        }
    }

    #[test]
    fn wiener_returns_local_mean_on_flat_region() {
        // left half flat, right half strongly textured: noise power is
        // dominated by the texture, so flat pixels get gain 0
        let z = Grid::from_fn(8, 16, |i, j| if j < 8 { 1.0 } else { ((i + j) % 2) as f64 * 10.0 }).unwrap();
        let out = wiener_filter(&z, WindowSpec::square(3)).unwrap();
        assert_eq!(out[(4, 3)], 1.0);
    }

    #[test]
    fn oversized_windows_are_rejected() {
        let z = noisy(4, 6, 2);
        assert!(matches!(
            median_filter(&z, WindowSpec::new(5, 3)),
            Err(TdsError::Dimension(_))
        ));
        assert!(matches!(
            mean_filter(&z, WindowSpec::new(3, 7)),
            Err(TdsError::Dimension(_))
        ));
        assert!(matches!(
            wiener_filter(&z, WindowSpec::new(0, 3)),
            Err(TdsError::Parameter(_))
        ));
    }

    #[test]
    fn order_filters_preserve_bounds() {
        let z = noisy(10, 10, 9);
        for out in [
            median_filter(&z, WindowSpec::new(3, 4)).unwrap(),
            mean_filter(&z, WindowSpec::square(5)).unwrap(),
        ] {
            assert!(out.min() >= z.min() && out.max() <= z.max());
        }
    }

    #[test]
    fn interiors_are_shift_equivariant() {
        let base = noisy(16, 16, 21);
        let shifted = Grid::from_fn(16, 16, |i, j| base[(i.saturating_sub(2), j.saturating_sub(2))]).unwrap();
        let filters: [fn(&Grid) -> Grid; 3] = [
            |g| median_filter(g, WindowSpec::square(3)).unwrap(),
            |g| mean_filter(g, WindowSpec::square(3)).unwrap(),
            |g| gaussian_filter(g, 1.0).unwrap(),
        ];
        for f in filters {
            let a = f(&base);
            let b = f(&shifted);
            for i in 5..12 {
                for j in 5..12 {
                    assert!((b[(i, j)] - a[(i - 2, j - 2)]).abs() < 1e-13);
                }
            }
        }
    }
}
