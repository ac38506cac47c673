//! Benchmark harness: every filter configuration under every noise model,
//! reduced to per-cell medians over seeds.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use tds_core::{
    apply_noise, canonical_fixture, gaussian_filter, mean_filter, median_filter, metrics, wiener_filter, Grid,
    NoiseKind, NoiseSpec, SpectralCache, TdsError, WindowSpec,
};

use crate::phantom;

pub const CSV_HEADER: &str = "filter,params,noise,seed_count,mse,psnr,ssim,seconds";

/// Median and Wiener windows of the synthetic sweep.
pub const SWEEP_WINDOWS: [(usize, usize); 7] = [(3, 3), (3, 4), (4, 3), (4, 4), (4, 5), (5, 4), (5, 5)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Synthetic,
    Image,
}

/// One filter configuration. Variant order is the CSV sort order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Filter {
    Tds { lambda: f64 },
    TdsI { gamma: f64, delta: f64 },
    Median(WindowSpec),
    Mean(WindowSpec),
    Gaussian { sigma: f64 },
    Wiener(WindowSpec),
}

impl Filter {
    pub fn name(&self) -> &'static str {
        match self {
            Filter::Tds { .. } => "TDS",
            Filter::TdsI { .. } => "TDS-I",
            Filter::Median(_) => "median",
            Filter::Mean(_) => "mean",
            Filter::Gaussian { .. } => "gaussian",
            Filter::Wiener(_) => "wiener",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Filter::Tds { .. } => 0,
            Filter::TdsI { .. } => 1,
            Filter::Median(_) => 2,
            Filter::Mean(_) => 3,
            Filter::Gaussian { .. } => 4,
            Filter::Wiener(_) => 5,
        }
    }

    fn sort_key(&self) -> (u8, f64, f64) {
        match *self {
            Filter::Tds { lambda } => (0, lambda, 0.0),
            Filter::TdsI { gamma, delta } => (1, gamma, delta),
            Filter::Median(w) | Filter::Mean(w) | Filter::Wiener(w) => (self.rank(), w.height as f64, w.width as f64),
            Filter::Gaussian { sigma } => (4, sigma, 0.0),
        }
    }

    pub fn params(&self) -> String {
        match self {
            Filter::Tds { lambda } => format!("lambda={lambda}"),
            Filter::TdsI { gamma, delta } => format!("gamma={gamma};delta={delta}"),
            Filter::Median(w) | Filter::Mean(w) | Filter::Wiener(w) => format!("{}x{}", w.height, w.width),
            Filter::Gaussian { sigma } => format!("sigma={sigma}"),
        }
    }

    fn apply(&self, z: &Grid, cache: &SpectralCache) -> tds_core::Result<Grid> {
        match *self {
            Filter::Tds { lambda } => Ok(cache.solve(z, lambda, lambda)?.trend),
            Filter::TdsI { gamma, delta } => Ok(cache.solve(z, gamma, delta)?.trend),
            Filter::Median(w) => median_filter(z, w),
            Filter::Mean(w) => mean_filter(z, w),
            Filter::Gaussian { sigma } => gaussian_filter(z, sigma),
            Filter::Wiener(w) => wiener_filter(z, w),
        }
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.params())
    }
}

/// Step sweeps built as `start + i * step` so printed values stay short.
fn sweep(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

pub fn synthetic_filters() -> Vec<Filter> {
    let mut out: Vec<Filter> = sweep(10.0, 10.0, 31)
        .into_iter()
        .map(|lambda| Filter::Tds { lambda })
        .collect();
    out.extend(
        SWEEP_WINDOWS
            .iter()
            .map(|&(h, w)| Filter::Median(WindowSpec::new(h, w))),
    );
    out.extend([3, 5].iter().map(|&s| Filter::Mean(WindowSpec::square(s))));
    out.extend(sweep(1.2, 0.2, 20).into_iter().map(|sigma| Filter::Gaussian { sigma }));
    out.extend(
        SWEEP_WINDOWS
            .iter()
            .map(|&(h, w)| Filter::Wiener(WindowSpec::new(h, w))),
    );
    out
}

pub fn image_filters() -> Vec<Filter> {
    let mut out: Vec<Filter> = [
        0.2, 0.4, 0.5, 0.6, 0.8, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0,
    ]
    .into_iter()
    .map(|lambda| Filter::Tds { lambda })
    .collect();
    let axis = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    for &gamma in &axis {
        for &delta in &axis {
            if gamma != delta {
                out.push(Filter::TdsI { gamma, delta });
            }
        }
    }
    out.extend((3..=9).map(|s| Filter::Median(WindowSpec::square(s))));
    out.extend([3, 5].iter().map(|&s| Filter::Mean(WindowSpec::square(s))));
    out.extend(sweep(0.5, 0.25, 11).into_iter().map(|sigma| Filter::Gaussian { sigma }));
    out.extend((3..=9).map(|s| Filter::Wiener(WindowSpec::square(s))));
    out
}

pub fn synthetic_noises() -> Vec<NoiseKind> {
    vec![
        NoiseKind::awgn(1.0),
        NoiseKind::cn(),
        NoiseKind::mwgn(0.04),
        NoiseKind::spn(0.9),
    ]
}

pub fn image_noises() -> Vec<NoiseKind> {
    vec![
        NoiseKind::awgn(0.1),
        NoiseKind::poisson(),
        NoiseKind::spn_levels(0.02, 0.0, 1.0),
    ]
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub suite: Suite,
    pub seeds: usize,
    pub base_seed: u64,
    /// Record median wall time per cell; off keeps the CSV deterministic.
    pub timing: bool,
    /// Replaces the bundled image in the image suite.
    pub image: Option<Grid>,
}

impl BenchConfig {
    pub fn new(suite: Suite, seeds: usize) -> Self {
        BenchConfig {
            suite,
            seeds,
            base_seed: 0,
            timing: false,
            image: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub filter: Filter,
    pub noise: &'static str,
    noise_rank: usize,
    pub seed_count: usize,
    pub mse: f64,
    /// From the median MSE, so it orders exactly like `mse`.
    pub psnr: f64,
    pub ssim: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn to_csv_record(&self) -> [String; 8] {
        [
            self.filter.name().to_string(),
            self.filter.params(),
            self.noise.to_string(),
            self.seed_count.to_string(),
            self.mse.to_string(),
            self.psnr.to_string(),
            self.ssim.to_string(),
            self.seconds.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub suite: Suite,
    pub base_seed: u64,
    pub peak: f64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Rows of one noise model and filter family.
    pub fn cells<'a>(&'a self, noise: &'a str, filter: &'a str) -> impl Iterator<Item = &'a BenchRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.noise == noise && r.filter.name() == filter)
    }

    /// Lowest median MSE within one noise model and filter family.
    pub fn best<'a>(&'a self, noise: &'a str, filter: &'a str) -> Option<&'a BenchRow> {
        self.cells(noise, filter)
            .filter(|r| r.error.is_none())
            .min_by(|a, b| a.mse.total_cmp(&b.mse))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.to_csv_record()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct Sample {
    mse: f64,
    ssim: f64,
    seconds: f64,
}

/// Runs the suite on a pool capped by `TDS_THREADS` (if set).
pub fn run_bench(cfg: &BenchConfig) -> tds_core::Result<BenchReport> {
    if cfg.seeds == 0 {
        return Err(TdsError::Config("need at least one seed".into()));
    }
    let (reference, filters, noises, peak) = match cfg.suite {
        Suite::Synthetic => {
            let z = canonical_fixture();
            let peak = z.max_abs();
            (z, synthetic_filters(), synthetic_noises(), peak)
        }
        Suite::Image => {
            let img = match &cfg.image {
                Some(g) => g.clone(),
                None => phantom::bundled()?,
            };
            (img, image_filters(), image_noises(), 1.0)
        }
    };
    let cache = SpectralCache::new(reference.rows(), reference.cols())?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|s| cfg.base_seed.wrapping_add(s)).collect();

    let jobs: Vec<(usize, u64)> = (0..noises.len())
        .flat_map(|n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(n, seed)| -> tds_core::Result<Vec<Result<Sample, String>>> {
                let noisy = apply_noise(&reference, &NoiseSpec::new(noises[n], seed))?;
                Ok(filters
                    .iter()
                    .map(|f| {
                        let start = Instant::now();
                        let out = f.apply(&noisy, &cache).map_err(|e| e.to_string())?;
                        let seconds = start.elapsed().as_secs_f64();
                        let mse = metrics::mse(&out, &reference).map_err(|e| e.to_string())?;
                        let ssim = metrics::ssim(&out, &reference, peak).map_err(|e| e.to_string())?;
                        Ok(Sample { mse, ssim, seconds })
                    })
                    .collect())
            })
            .collect::<tds_core::Result<Vec<_>>>()
    };
    let results = match thread_cap() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| TdsError::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut rows = Vec::with_capacity(noises.len() * filters.len());
    for (n, kind) in noises.iter().enumerate() {
        for (k, filter) in filters.iter().enumerate() {
            let per_seed: Vec<&Result<Sample, String>> = jobs
                .iter()
                .zip(&results)
                .filter(|((jn, _), _)| *jn == n)
                .map(|(_, r)| &r[k])
                .collect();
            let error = per_seed.iter().find_map(|r| r.as_ref().err().cloned());
            let (mse, psnr, ssim, seconds) = if error.is_some() {
                (f64::NAN, f64::NAN, f64::NAN, 0.0)
            } else {
                let ok: Vec<&Sample> = per_seed.iter().map(|r| r.as_ref().unwrap()).collect();
                let mse = median(&mut ok.iter().map(|s| s.mse).collect::<Vec<_>>());
                let ssim = median(&mut ok.iter().map(|s| s.ssim).collect::<Vec<_>>());
                let seconds = if cfg.timing {
                    median(&mut ok.iter().map(|s| s.seconds).collect::<Vec<_>>())
                } else {
                    0.0
                };
                (mse, metrics::psnr_from_mse(mse, peak)?, ssim, seconds)
            };
            rows.push(BenchRow {
                filter: *filter,
                noise: kind.label(),
                noise_rank: n,
                seed_count: cfg.seeds,
                mse,
                psnr,
                ssim,
                seconds,
                error,
            });
        }
    }
    rows.sort_by(|a, b| {
        let (ka, kb) = (a.filter.sort_key(), b.filter.sort_key());
        a.noise_rank
            .cmp(&b.noise_rank)
            .then(ka.0.cmp(&kb.0))
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
    });
    Ok(BenchReport {
        suite: cfg.suite,
        base_seed: cfg.base_seed,
        peak,
        rows,
    })
}

/// Worker count from `TDS_THREADS`; unset or invalid means rayon's default.
pub fn thread_cap() -> Option<usize> {
    std::env::var("TDS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}
