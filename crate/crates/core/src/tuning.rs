//! Global smoothing parameter selection by linear scan over `lambda`.

use crate::error::{Result, TdsError};
use crate::grid::{Grid, SmoothingParams};
use crate::metrics;
use crate::solver::{Decomposition, SpectralCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneMetric {
    /// MSE of the trend against a reference.
    Mse,
    /// PSNR of the trend against a reference.
    Psnr,
    /// SSIM of the trend against a reference.
    Ssim,
    /// Sample standard deviation of the fluctuation (known-noise case).
    FluctStd,
}

impl TuneMetric {
    pub fn needs_reference(&self) -> bool {
        !matches!(self, TuneMetric::FluctStd)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TuneMetric::Mse => "mse",
            TuneMetric::Psnr => "psnr",
            TuneMetric::Ssim => "ssim",
            TuneMetric::FluctStd => "fluct-std",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub metric: TuneMetric,
    pub target: f64,
    pub eps: f64,
    pub step: f64,
    pub max_lambda: f64,
    pub initial_lambda: f64,
    /// PSNR/SSIM peak; defaults to `max|reference|`.
    pub peak: Option<f64>,
    /// Bisect over the scan grid instead of walking it. Only valid when the
    /// metric is monotone in `lambda`; then the result equals the scan's.
    pub bisect: bool,
}

impl TuneConfig {
    pub fn new(metric: TuneMetric, target: f64, eps: f64, step: f64, max_lambda: f64) -> Self {
        TuneConfig {
            metric,
            target,
            eps,
            step,
            max_lambda,
            initial_lambda: 0.0,
            peak: None,
            bisect: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.target.is_finite() {
            return Err(TdsError::Config(format!("target must be finite, got {}", self.target)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(TdsError::Config(format!(
                "eps must be finite and > 0, got {}",
                self.eps
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(TdsError::Config(format!(
                "step must be finite and > 0, got {}",
                self.step
            )));
        }
        if !(self.initial_lambda >= 0.0 && self.initial_lambda.is_finite()) {
            return Err(TdsError::Config(format!(
                "initial lambda must be finite and >= 0, got {}",
                self.initial_lambda
            )));
        }
        if !(self.max_lambda > self.initial_lambda && self.max_lambda.is_finite()) {
            return Err(TdsError::Config(format!(
                "max lambda {} must exceed initial lambda {}",
                self.max_lambda, self.initial_lambda
            )));
        }
        if let Some(p) = self.peak {
            if !(p > 0.0 && p.is_finite()) {
                return Err(TdsError::Config(format!("peak must be finite and > 0, got {p}")));
            }
        }
        Ok(())
    }

    /// Number of scan points `initial + i * step <= max`.
    pub fn scan_len(&self) -> usize {
        let span = (self.max_lambda - self.initial_lambda) / self.step;
        (span * (1.0 + 1e-12)).floor() as usize + 1
    }

    pub fn lambda_at(&self, i: usize) -> f64 {
        self.initial_lambda + i as f64 * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneStatus {
    Converged,
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub lambda: f64,
    pub alpha: f64,
    pub decomposition: Decomposition,
    /// `(lambda, alpha)` for every evaluated point, in increasing `lambda`.
    pub trace: Vec<(f64, f64)>,
    pub status: TuneStatus,
}

/// Sample mean and standard deviation (denominator `len - 1`).
pub fn fluctuation_std(c: &Grid) -> Result<(f64, f64)> {
    let v = c.as_slice();
    if v.len() < 2 {
        return Err(TdsError::Statistics(format!(
            "need at least 2 entries, got {}",
            v.len()
        )));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

struct Evaluator<'a> {
    z: &'a Grid,
    reference: Option<&'a Grid>,
    cache: SpectralCache,
    metric: TuneMetric,
    peak: f64,
}

impl Evaluator<'_> {
    fn eval(&self, lambda: f64) -> Result<(f64, Decomposition)> {
        let d = self.cache.solve_params(self.z, SmoothingParams::tds(lambda))?;
        let alpha = match (self.metric, self.reference) {
            (TuneMetric::FluctStd, _) => fluctuation_std(&d.fluctuation)?.1,
            (TuneMetric::Mse, Some(r)) => metrics::mse(&d.trend, r)?,
            (TuneMetric::Psnr, Some(r)) => metrics::psnr(&d.trend, r, self.peak)?,
            (TuneMetric::Ssim, Some(r)) => metrics::ssim(&d.trend, r, self.peak)?,
            (_, None) => unreachable!("reference checked up front"),
        };
        if !alpha.is_finite() {
            return Err(TdsError::Numerical(format!("metric is not finite at lambda {lambda}")));
        }
        Ok((alpha, d))
    }
}

/// Scans `lambda = initial, initial + step, ...` up to `max_lambda` and stops
/// at the first point with `|alpha - target| <= eps`.
pub fn tune_lambda(z: &Grid, reference: Option<&Grid>, cfg: &TuneConfig) -> Result<TuneResult> {
    cfg.validate()?;
    z.ensure_smoothable()?;
    match (cfg.metric.needs_reference(), reference) {
        (true, None) => {
            return Err(TdsError::Config(format!(
                "metric {} needs a reference grid",
                cfg.metric.as_str()
            )))
        }
        (false, Some(_)) => return Err(TdsError::Config("fluct-std does not take a reference grid".into())),
        (true, Some(r)) => z.ensure_same_shape(r)?,
        (false, None) => {}
    }
    let peak = match (cfg.peak, reference) {
        (Some(p), _) => p,
        (None, Some(r)) if r.max_abs() > 0.0 => r.max_abs(),
        (None, _) => 1.0,
    };
    let ev = Evaluator {
        z,
        reference,
        cache: SpectralCache::new(z.rows(), z.cols())?,
        metric: cfg.metric,
        peak,
    };
    if cfg.bisect {
        bisect_scan(&ev, cfg)
    } else {
        linear_scan(&ev, cfg)
    }
}

fn within(alpha: f64, cfg: &TuneConfig) -> bool {
    (alpha - cfg.target).abs() <= cfg.eps
}

fn linear_scan(ev: &Evaluator, cfg: &TuneConfig) -> Result<TuneResult> {
    let mut trace = Vec::new();
    let mut last = None;
    for i in 0..cfg.scan_len() {
        let lambda = cfg.lambda_at(i);
        let (alpha, d) = ev.eval(lambda)?;
        trace.push((lambda, alpha));
        if within(alpha, cfg) {
            return Ok(TuneResult {
                lambda,
                alpha,
                decomposition: d,
                trace,
                status: TuneStatus::Converged,
            });
        }
        last = Some((lambda, alpha, d));
    }
    let (lambda, alpha, decomposition) = last.expect("scan has at least one point");
    Ok(TuneResult {
        lambda,
        alpha,
        decomposition,
        trace,
        status: TuneStatus::Exhausted,
    })
}

fn bisect_scan(ev: &Evaluator, cfg: &TuneConfig) -> Result<TuneResult> {
    let n = cfg.scan_len();
    let mut visited: Vec<(usize, f64, Decomposition)> = Vec::new();
    let eval = |i: usize, visited: &mut Vec<(usize, f64, Decomposition)>| -> Result<f64> {
        if let Some((_, a, _)) = visited.iter().find(|(k, _, _)| *k == i) {
            return Ok(*a);
        }
        let (a, d) = ev.eval(cfg.lambda_at(i))?;
        visited.push((i, a, d));
        Ok(a)
    };
    let first = eval(0, &mut visited)?;
    let last = eval(n - 1, &mut visited)?;
    let increasing = last >= first;
    // monotone alpha makes "reached the target band from below/above" a
    // false..true predicate over the scan grid
    let reached = |a: f64| {
        if increasing {
            a >= cfg.target - cfg.eps
        } else {
            a <= cfg.target + cfg.eps
        }
    };
    let hit = if reached(first) {
        Some(0)
    } else if !reached(last) {
        None
    } else {
        let (mut lo, mut hi) = (0, n - 1);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if reached(eval(mid, &mut visited)?) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };
    let pick = match hit {
        Some(i) if within(eval(i, &mut visited)?, cfg) => Some(i),
        _ => None,
    };
    visited.sort_by_key(|(k, _, _)| *k);
    let trace = visited.iter().map(|(k, a, _)| (cfg.lambda_at(*k), *a)).collect();
    let (status, idx) = match pick {
        Some(i) => (TuneStatus::Converged, i),
        None => (TuneStatus::Exhausted, n - 1),
    };
    let pos = visited
        .iter()
        .position(|(k, _, _)| *k == idx)
        .expect("picked index was evaluated");
    let (_, alpha, decomposition) = visited.swap_remove(pos);
    Ok(TuneResult {
        lambda: cfg.lambda_at(idx),
        alpha,
        decomposition,
        trace,
        status,
    })
}
