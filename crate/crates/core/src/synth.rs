//! Seeded synthetic data: the test surface and the noise models.
//!
//! All randomness comes from [`SplitMix64`], a counter-based generator whose
//! streams are defined bit-for-bit (see docs/formats.md), so a given seed
//! yields the same noise grid on every platform.

use crate::error::{Result, TdsError};
use crate::grid::Grid;

/// Photon-count scale for Poisson noise on unit-range images.
pub const POISSON_SCALE: f64 = 255.0;

/// Largest Poisson mean drawn in one inversion pass; bigger means are split.
const POISSON_CHUNK: f64 = 500.0;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64: output `k` is `mix(seed + (k + 1) * 0x9E3779B97F4A7C15)`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on the open interval (0, 1): `((x >> 11) + 0.5) * 2^-53`.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by Box-Muller, cosine branch only (two uniforms per draw).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Gamma(shape, scale) by Marsaglia-Tsang; shapes below 1 use the
    /// `U^(1/shape)` boost.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0, 1.0);
            let u = self.uniform();
            return scale * g * u.powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return scale * d * v;
            }
        }
    }

    /// Poisson(mean) by sequential inversion; means above 500 are drawn as a
    /// sum of independent chunks of at most 500.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        let mut remaining = mean;
        let mut total = 0u64;
        while remaining > 0.0 {
            let mu = remaining.min(POISSON_CHUNK);
            remaining -= mu;
            total += self.poisson_inversion(mu);
        }
        total
    }

    fn poisson_inversion(&mut self, mu: f64) -> u64 {
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = (-mu).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mu / k as f64;
            let next = cdf + p;
            if next == cdf {
                break;
            }
            cdf = next;
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Additive `N(0, sigma^2)`.
    Awgn { sigma: f64 },
    /// `z + z * W`, `W ~ N(0, sigma^2)`.
    Mwgn { sigma: f64 },
    /// Additive `n1 * n2`, `n1 ~ N(0, 1)`, `n2 ~ Gamma(shape, scale)`.
    Cn { shape: f64, scale: f64 },
    /// Replaces a fraction `density` of entries; `None` levels default to
    /// `min(z)` and `max(z)`.
    Spn {
        density: f64,
        low: Option<f64>,
        high: Option<f64>,
    },
    /// `Poisson(z * scale) / scale`.
    Poisson { scale: f64 },
}

impl NoiseKind {
    pub fn awgn(sigma: f64) -> Self {
        NoiseKind::Awgn { sigma }
    }

    pub fn mwgn(sigma: f64) -> Self {
        NoiseKind::Mwgn { sigma }
    }

    pub fn cn() -> Self {
        NoiseKind::Cn { shape: 2.0, scale: 1.0 }
    }

    pub fn spn(density: f64) -> Self {
        NoiseKind::Spn {
            density,
            low: None,
            high: None,
        }
    }

    pub fn spn_levels(density: f64, low: f64, high: f64) -> Self {
        NoiseKind::Spn {
            density,
            low: Some(low),
            high: Some(high),
        }
    }

    pub fn poisson() -> Self {
        NoiseKind::Poisson { scale: POISSON_SCALE }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NoiseKind::Awgn { .. } => "AWGN",
            NoiseKind::Mwgn { .. } => "MWGN",
            NoiseKind::Cn { .. } => "CN",
            NoiseKind::Spn { .. } => "SPN",
            NoiseKind::Poisson { .. } => "Poisson",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(TdsError::Parameter(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match *self {
            NoiseKind::Awgn { sigma } | NoiseKind::Mwgn { sigma } => positive("sigma", sigma),
            NoiseKind::Cn { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)
            }
            NoiseKind::Spn { density, low, high } => {
                if !(density > 0.0 && density <= 1.0) {
                    return Err(TdsError::Parameter(format!(
                        "density must lie in (0, 1], got {density}"
                    )));
                }
                if let (Some(l), Some(h)) = (low, high) {
                    if !(l < h) || !l.is_finite() || !h.is_finite() {
                        return Err(TdsError::Parameter(format!("need finite low < high, got {l} and {h}")));
                    }
                }
                Ok(())
            }
            NoiseKind::Poisson { scale } => positive("scale", scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        NoiseSpec { kind, seed }
    }
}

/// `z(x, y) = x + y + 2 sin(x + y) + 10` sampled on `xs` (rows) by `ys` (columns).
pub fn test_surface(xs: &[f64], ys: &[f64]) -> Result<Grid> {
    if xs.is_empty() || ys.is_empty() {
        return Err(TdsError::Dimension("surface axes must be nonempty".into()));
    }
    let ascending = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    if !ascending(xs) || !ascending(ys) {
        return Err(TdsError::Parameter("surface axes must be strictly ascending".into()));
    }
    Grid::from_fn(xs.len(), ys.len(), |i, j| {
        let s = xs[i] + ys[j];
        s + 2.0 * s.sin() + 10.0
    })
}

/// `x = 1.0:0.1:4.0` (31 rows) and `y = 1.0:0.1:3.0` (21 columns).
pub fn canonical_axes() -> (Vec<f64>, Vec<f64>) {
    let xs = (0..31).map(|i| (10 + i) as f64 / 10.0).collect();
    let ys = (0..21).map(|j| (10 + j) as f64 / 10.0).collect();
    (xs, ys)
}

/// The clean 31x21 test surface.
pub fn canonical_fixture() -> Grid {
    let (xs, ys) = canonical_axes();
    test_surface(&xs, &ys).expect("canonical axes are valid")
}

/// Adds seeded noise to `z`.
pub fn apply_noise(z: &Grid, spec: &NoiseSpec) -> Result<Grid> {
    spec.kind.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let data: Vec<f64> = match spec.kind {
        NoiseKind::Awgn { sigma } => z.as_slice().iter().map(|&v| v + sigma * rng.normal()).collect(),
        NoiseKind::Mwgn { sigma } => z.as_slice().iter().map(|&v| v + v * sigma * rng.normal()).collect(),
        NoiseKind::Cn { shape, scale } => z
            .as_slice()
            .iter()
            .map(|&v| {
                let n1 = rng.normal();
                let n2 = rng.gamma(shape, scale);
                v + n1 * n2
            })
            .collect(),
        NoiseKind::Spn { density, low, high } => {
            let low = low.unwrap_or_else(|| z.min());
            let high = high.unwrap_or_else(|| z.max());
            z.as_slice()
                .iter()
                .map(|&v| {
                    let u = rng.uniform();
                    if u < 0.5 * density {
                        low
                    } else if u < density {
                        high
                    } else {
                        v
                    }
                })
                .collect()
        }
        NoiseKind::Poisson { scale } => {
            if z.min() < 0.0 {
                return Err(TdsError::Data("Poisson noise needs nonnegative input".into()));
            }
            z.as_slice()
                .iter()
                .map(|&v| rng.poisson(v * scale) as f64 / scale)
                .collect()
        }
    };
    Grid::new(z.rows(), z.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_std(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let mu = v.iter().sum::<f64>() / n;
        (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn splitmix_reference_stream() {
        // published SplitMix64 outputs for seed 1234567
        let mut r = SplitMix64::new(1234567);
        let want = [
            6457827717110365317u64,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for w in want {
            assert_eq!(r.next_u64(), w);
        }
    }

    #[test]
    fn uniform_is_open_unit_interval() {
        let mut r = SplitMix64::new(0);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn surface_point_values() {
        let g = test_surface(&[1.0, 4.0], &[1.0, 3.0]).unwrap();
        assert!((g[(0, 0)] - (12.0 + 2.0 * 2f64.sin())).abs() < 1e-12);
        assert!((g[(0, 0)] - 13.8186).abs() < 1e-4);
        assert!((g[(1, 1)] - 18.3140).abs() < 1e-4);
    }

    #[test]
    fn canonical_fixture_shape_and_ends() {
        let z = canonical_fixture();
        assert_eq!(z.shape(), (31, 21));
        assert!((z[(0, 0)] - 13.8186).abs() < 1e-4);
        assert!((z[(30, 20)] - 18.3140).abs() < 1e-4);
    }

    #[test]
    fn surface_rejects_bad_axes() {
        assert!(test_surface(&[], &[1.0]).is_err());
        assert!(test_surface(&[2.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn tiny_sigma_is_nearly_identity() {
        let z = canonical_fixture();
        let out = apply_noise(&z, &NoiseSpec::new(NoiseKind::awgn(1e-12), 9)).unwrap();
        assert!(out.sub(&z).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn awgn_std_band() {
        let z = canonical_fixture();
        for seed in 0..10 {
            let out = apply_noise(&z, &NoiseSpec::new(NoiseKind::awgn(1.0), seed)).unwrap();
            let s = sample_std(out.sub(&z).unwrap().as_slice());
            assert!((0.92..=1.08).contains(&s), "seed {seed}: std {s}");
        }
    }

    #[test]
    fn spn_full_density_split() {
        let z = Grid::filled(40, 50, 0.3).unwrap();
        let out = apply_noise(&z, &NoiseSpec::new(NoiseKind::spn_levels(1.0, 0.0, 1.0), 4)).unwrap();
        let ones = out.as_slice().iter().filter(|&&v| v == 1.0).count();
        let zeros = out.as_slice().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(ones + zeros, 2000);
        let sd = (2000.0f64 * 0.25).sqrt();
        assert!((ones as f64 - 1000.0).abs() <= 3.0 * sd);
    }

    #[test]
    fn spn_default_levels_are_extremes() {
        let z = canonical_fixture();
        let out = apply_noise(&z, &NoiseSpec::new(NoiseKind::spn(0.9), 1)).unwrap();
        assert!(out
            .as_slice()
            .iter()
            .all(|&v| v == z.min() || v == z.max() || z.as_slice().contains(&v)));
        assert_eq!(out.min(), z.min());
        assert_eq!(out.max(), z.max());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let z = canonical_fixture();
        for kind in [
            NoiseKind::awgn(1.0),
            NoiseKind::cn(),
            NoiseKind::mwgn(0.04),
            NoiseKind::spn(0.9),
        ] {
            let a = apply_noise(&z, &NoiseSpec::new(kind, 77)).unwrap();
            let b = apply_noise(&z, &NoiseSpec::new(kind, 77)).unwrap();
            assert!(a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn distinct_seeds_are_uncorrelated() {
        let z = Grid::zeros(31, 21).unwrap();
        let mut total = 0.0;
        for s in 0..10u64 {
            let a = apply_noise(&z, &NoiseSpec::new(NoiseKind::awgn(1.0), 2 * s)).unwrap();
            let b = apply_noise(&z, &NoiseSpec::new(NoiseKind::awgn(1.0), 2 * s + 1)).unwrap();
            let (x, y) = (a.as_slice(), b.as_slice());
            let n = x.len() as f64;
            let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
            let cov: f64 = x.iter().zip(y).map(|(p, q)| (p - mx) * (q - my)).sum();
            let vx: f64 = x.iter().map(|p| (p - mx) * (p - mx)).sum();
            let vy: f64 = y.iter().map(|q| (q - my) * (q - my)).sum();
            total += (cov / (vx * vy).sqrt()).abs();
        }
        assert!(total / 10.0 < 0.1);
    }

    #[test]
    fn cn_mean_is_zero_within_band() {
        let z = Grid::zeros(100, 100).unwrap();
        let out = apply_noise(&z, &NoiseSpec::new(NoiseKind::cn(), 3)).unwrap();
        let v = out.as_slice();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        // Var(n1 n2) = E[n2^2] = k theta^2 (k + 1) = 6
        assert!(mean.abs() < 3.0 * (6.0f64 / n).sqrt());
        let s = sample_std(v);
        assert!((s - 6f64.sqrt()).abs() < 0.1);
    }

    #[test]
    fn gamma_moments() {
        let mut r = SplitMix64::new(11);
        for (shape, scale) in [(2.0, 1.0), (0.5, 2.0), (7.5, 0.3)] {
            let v: Vec<f64> = (0..40_000).map(|_| r.gamma(shape, scale)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let sd = sample_std(&v);
            assert!((mean - shape * scale).abs() < 4.0 * sd / (v.len() as f64).sqrt());
            assert!((sd - shape.sqrt() * scale).abs() / (shape.sqrt() * scale) < 0.03);
            assert!(v.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn poisson_moments_and_chunking() {
        let mut r = SplitMix64::new(5);
        for mean in [0.5, 30.0, 255.0, 1300.0] {
            let v: Vec<f64> = (0..20_000).map(|_| r.poisson(mean) as f64).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let s = sample_std(&v);
            assert!(
                (m - mean).abs() < 4.0 * mean.sqrt() / (v.len() as f64).sqrt(),
                "mean {mean}: {m}"
            );
            assert!((s * s - mean).abs() / mean < 0.05, "mean {mean}: var {}", s * s);
        }
        assert_eq!(r.poisson(0.0), 0);
    }

    #[test]
    fn mwgn_scales_with_signal() {
        let z = Grid::filled(50, 50, 10.0).unwrap();
        let out = apply_noise(&z, &NoiseSpec::new(NoiseKind::mwgn(0.04), 8)).unwrap();
        let s = sample_std(out.sub(&z).unwrap().as_slice());
        assert!((s - 0.4).abs() < 0.03);
    }

    #[test]
    fn poisson_on_images() {
        let z = Grid::from_fn(32, 32, |i, j| (i + j) as f64 / 62.0).unwrap();
        let out = apply_noise(&z, &NoiseSpec::new(NoiseKind::poisson(), 2)).unwrap();
        assert!(out
            .as_slice()
            .iter()
            .all(|&v| v >= 0.0 && (v * 255.0 - (v * 255.0).round()).abs() < 1e-9));
        let neg = z.map(|v| v - 0.5).unwrap();
        assert!(matches!(
            apply_noise(&neg, &NoiseSpec::new(NoiseKind::poisson(), 2)),
            Err(TdsError::Data(_))
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let z = canonical_fixture();
        for kind in [
            NoiseKind::awgn(0.0),
            NoiseKind::mwgn(-1.0),
            NoiseKind::Cn { shape: 0.0, scale: 1.0 },
            NoiseKind::spn(0.0),
            NoiseKind::spn(1.5),
            NoiseKind::spn_levels(0.5, 1.0, 1.0),
            NoiseKind::Poisson { scale: 0.0 },
        ] {
            assert!(matches!(
                apply_noise(&z, &NoiseSpec::new(kind, 0)),
                Err(TdsError::Parameter(_))
            ));
        }
    }
}
