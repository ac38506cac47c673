use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use tds_core::io::{decode_pgm, parse_matrix, write_matrix, write_pgm};
use tds_core::{
    apply_noise, canonical_fixture, fluctuation_std, forward_apply, loss, metrics, solve, tune_lambda, Grid, NoiseKind,
    NoiseSpec, SmoothingParams, TuneConfig, TuneMetric, TuneStatus,
};

use crate::bench::{run_bench, BenchConfig, Suite};
use crate::{phantom, CliError};

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "tds", version, about = "Two-dimensional trend/fluctuation smoothing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a grid into trend and fluctuation.
    Decompose(DecomposeArgs),
    /// Apply the forward operator `G + lambda (G T + H G)` to an image or grid.
    Sharpen(SharpenArgs),
    /// Scan lambda until a quality metric reaches its target.
    Tune(TuneArgs),
    /// Run the benchmark suite and write a CSV table.
    Bench(BenchArgs),
    /// Write the test surface or bundled image, optionally with seeded noise.
    Synth(SynthArgs),
}

/// Smoothing parameters. Exactly one variant must be selected:
/// `--lambda`; `--gamma` and `--delta`; `--gamma-vec` and `--delta-vec`;
/// or one scalar with one vector.
#[derive(Debug, Args, Clone, Default)]
pub struct ParamArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Row smoothing parameter.
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Column smoothing parameter.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Comma-separated per-row parameters.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub gamma_vec: Option<Vec<f64>>,
    /// Comma-separated per-column parameters.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub delta_vec: Option<Vec<f64>>,
}

impl ParamArgs {
    pub fn resolve(&self) -> CliResult<SmoothingParams> {
        let p = self.clone();
        match (p.lambda, p.gamma, p.delta, p.gamma_vec, p.delta_vec) {
            (Some(lambda), None, None, None, None) => Ok(SmoothingParams::tds(lambda)),
            (None, Some(gamma), Some(delta), None, None) => Ok(SmoothingParams::tds1(gamma, delta)),
            (None, None, None, Some(gamma), Some(delta)) => Ok(SmoothingParams::tds2(gamma, delta)),
            (None, Some(gamma), None, None, Some(delta)) => Ok(SmoothingParams::TdsIIIRowScalar { gamma, delta }),
            (None, None, Some(delta), Some(gamma), None) => Ok(SmoothingParams::TdsIIIColScalar { gamma, delta }),
            (None, None, None, None, None) => Err(CliError::Usage(
                "no smoothing parameters: pass --lambda, --gamma/--delta or --gamma-vec/--delta-vec".into(),
            )),
            _ => Err(CliError::Usage(
                "conflicting smoothing parameters: use --lambda alone, or one row and one column parameter".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Matrix text file or binary PGM.
    pub input: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub out_trend: Option<PathBuf>,
    #[arg(long)]
    pub out_fluct: Option<PathBuf>,
    /// Print residual, loss and fluctuation statistics.
    #[arg(long)]
    pub report: bool,
    /// Clean grid to score the trend against (adds mse/psnr/ssim to the report).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// PSNR/SSIM peak; defaults to 1 for images and `max|reference|` otherwise.
    #[arg(long)]
    pub peak: Option<f64>,
    /// Write out-of-range PGM samples as an error instead of clamping.
    #[arg(long)]
    pub no_clamp: bool,
}

#[derive(Debug, Args)]
pub struct SharpenArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_clamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Mse,
    Psnr,
    Ssim,
    FluctStd,
}

impl From<MetricArg> for TuneMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mse => TuneMetric::Mse,
            MetricArg::Psnr => TuneMetric::Psnr,
            MetricArg::Ssim => TuneMetric::Ssim,
            MetricArg::FluctStd => TuneMetric::FluctStd,
        }
    }
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    #[arg(long, allow_negative_numbers = true)]
    pub target: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub step: f64,
    #[arg(long)]
    pub max_lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    pub initial_lambda: f64,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub peak: Option<f64>,
    /// Write the visited `(lambda, alpha)` pairs as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Bisect the scan grid; valid only when the metric is monotone in lambda.
    #[arg(long)]
    pub bisect: bool,
    #[arg(long)]
    pub out_trend: Option<PathBuf>,
    #[arg(long)]
    pub out_fluct: Option<PathBuf>,
    #[arg(long)]
    pub no_clamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Synthetic,
    Image,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::Synthetic)]
    pub suite: SuiteArg,
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// First noise seed; seeds `seed .. seed + seeds` are used.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill the seconds column with median wall time (nondeterministic).
    #[arg(long)]
    pub timing: bool,
    /// PGM to use instead of the bundled image (image suite only).
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Surface,
    Phantom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    None,
    Awgn,
    Mwgn,
    Cn,
    Spn,
    Poisson,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SourceArg::Surface)]
    pub source: SourceArg,
    #[arg(long, value_enum, default_value_t = NoiseArg::None)]
    pub noise: NoiseArg,
    /// AWGN/MWGN standard deviation (default 1 and 0.04 on the surface, 0.1 on the image).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// SPN density (default 0.9 on the surface, 0.02 on the image).
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noisy output (matrix text, or PGM when the name ends in `.pgm`).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the clean grid.
    #[arg(long)]
    pub out_clean: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Matrix,
    Pgm { maxval: u16 },
}

/// Reads a matrix file or P5 PGM, chosen by the leading bytes.
pub fn load_grid(path: &Path) -> CliResult<(Grid, InputKind)> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Tds(tds_core::TdsError::Io(format!("{}: {e}", path.display()))))?;
    if bytes.starts_with(b"P5") {
        let img = decode_pgm(&bytes)?;
        return Ok((img.grid, InputKind::Pgm { maxval: img.maxval }));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| tds_core::TdsError::Data(format!("{}: neither PGM nor matrix text", path.display())))?;
    Ok((parse_matrix(&text)?, InputKind::Matrix))
}

fn is_pgm_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Writes PGM when the name ends in `.pgm`, matrix text otherwise.
pub fn save_grid(g: &Grid, path: &Path, kind: InputKind, clamp: bool) -> CliResult<()> {
    if is_pgm_path(path) {
        let maxval = match kind {
            InputKind::Pgm { maxval: 65535 } => 65535,
            _ => 255,
        };
        write_pgm(g, maxval, clamp, path)?;
    } else {
        write_matrix(g, path)?;
    }
    Ok(())
}

fn default_peak(kind: InputKind, reference: Option<&Grid>) -> f64 {
    match (kind, reference) {
        (InputKind::Pgm { .. }, _) => 1.0,
        (_, Some(r)) if r.max_abs() > 0.0 => r.max_abs(),
        _ => 1.0,
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Decompose(a) => decompose(a, out),
        Command::Sharpen(a) => sharpen(a, out),
        Command::Tune(a) => tune(a, out),
        Command::Bench(a) => bench(a, out),
        Command::Synth(a) => synth(a, out),
    }
}

fn decompose(a: DecomposeArgs, out: &mut dyn Write) -> CliResult<()> {
    let params = a.params.resolve()?;
    let (z, kind) = load_grid(&a.input)?;
    let d = solve(&z, &params)?;
    let clamp = !a.no_clamp;
    if let Some(p) = &a.out_trend {
        save_grid(&d.trend, p, kind, clamp)?;
    }
    if let Some(p) = &a.out_fluct {
        save_grid(&d.fluctuation, p, kind, clamp)?;
    }
    if a.report {
        let (mean, std) = fluctuation_std(&d.fluctuation)?;
        writeln!(out, "variant={}", params.name())?;
        writeln!(out, "method={}", d.diagnostics.method.as_str())?;
        writeln!(out, "residual={:e}", d.diagnostics.residual)?;
        writeln!(out, "iterations={}", d.diagnostics.iterations)?;
        writeln!(out, "loss={}", loss(&z, &d.trend, &params)?)?;
        writeln!(out, "fluct_mean={mean}")?;
        writeln!(out, "fluct_std={std}")?;
        if let Some(rp) = &a.reference {
            let (r, _) = load_grid(rp)?;
            let peak = a.peak.unwrap_or_else(|| default_peak(kind, Some(&r)));
            let m = metrics::report(&d.trend, &r, peak)?;
            writeln!(out, "peak={peak}")?;
            writeln!(out, "mse={}", m.mse)?;
            writeln!(out, "psnr={}", m.psnr)?;
            writeln!(out, "ssim={}", m.ssim)?;
        }
    } else if a.reference.is_some() {
        return Err(CliError::Usage("--reference is only used with --report".into()));
    }
    Ok(())
}

fn sharpen(a: SharpenArgs, out: &mut dyn Write) -> CliResult<()> {
    let params = a.params.resolve()?;
    let (g, kind) = load_grid(&a.input)?;
    let z = forward_apply(&g, &params)?;
    save_grid(&z, &a.out, kind, !a.no_clamp)?;
    writeln!(out, "variant={} change={}", params.name(), z.sub(&g)?.frobenius_norm())?;
    Ok(())
}

fn tune(a: TuneArgs, out: &mut dyn Write) -> CliResult<()> {
    let (z, kind) = load_grid(&a.input)?;
    let reference = match &a.reference {
        Some(p) => Some(load_grid(p)?.0),
        None => None,
    };
    let metric: TuneMetric = a.metric.into();
    let mut cfg = TuneConfig::new(metric, a.target, a.eps, a.step, a.max_lambda);
    cfg.initial_lambda = a.initial_lambda;
    cfg.bisect = a.bisect;
    cfg.peak = Some(a.peak.unwrap_or_else(|| default_peak(kind, reference.as_ref())));
    let r = tune_lambda(&z, reference.as_ref(), &cfg)?;
    if let Some(p) = &a.trace {
        let mut w = csv::Writer::from_path(p).map_err(|e| tds_core::TdsError::Io(e.to_string()))?;
        w.write_record(["lambda", metric.as_str()])
            .map_err(|e| tds_core::TdsError::Io(e.to_string()))?;
        for (l, alpha) in &r.trace {
            w.write_record([l.to_string(), alpha.to_string()])
                .map_err(|e| tds_core::TdsError::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    let clamp = !a.no_clamp;
    if let Some(p) = &a.out_trend {
        save_grid(&r.decomposition.trend, p, kind, clamp)?;
    }
    if let Some(p) = &a.out_fluct {
        save_grid(&r.decomposition.fluctuation, p, kind, clamp)?;
    }
    let status = match r.status {
        TuneStatus::Converged => "converged",
        TuneStatus::Exhausted => "exhausted",
    };
    writeln!(
        out,
        "lambda={} alpha={} status={status} steps={}",
        r.lambda,
        r.alpha,
        r.trace.len()
    )?;
    if r.status == TuneStatus::Exhausted {
        return Err(CliError::Exhausted {
            metric: metric.as_str(),
            target: a.target,
            eps: a.eps,
            max_lambda: a.max_lambda,
        });
    }
    Ok(())
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let suite = match a.suite {
        SuiteArg::Synthetic => Suite::Synthetic,
        SuiteArg::Image => Suite::Image,
    };
    if a.image.is_some() && suite != Suite::Image {
        return Err(CliError::Usage("--image only applies to --suite image".into()));
    }
    let mut cfg = BenchConfig::new(suite, a.seeds);
    cfg.base_seed = a.seed;
    cfg.timing = a.timing;
    if let Some(p) = &a.image {
        cfg.image = Some(load_grid(p)?.0);
    }
    let report = run_bench(&cfg)?;
    let csv = report.to_csv();
    let summary = format!(
        "suite={} seed={} seeds={} rows={} peak={}",
        match suite {
            Suite::Synthetic => "synthetic",
            Suite::Image => "image",
        },
        a.seed,
        a.seeds,
        report.rows.len(),
        report.peak
    );
    match &a.out {
        Some(p) => {
            fs::write(p, &csv)?;
            writeln!(out, "{summary} out={}", p.display())?;
        }
        None => {
            out.write_all(csv.as_bytes())?;
            eprintln!("{summary}");
        }
    }
    for row in report.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "row failed: {} {} {}: {}",
            row.filter.name(),
            row.filter.params(),
            row.noise,
            row.error.as_deref().unwrap_or("")
        );
    }
    match report.failures() {
        0 => Ok(()),
        failed => Err(CliError::BenchFailures { failed }),
    }
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let (clean, kind) = match a.source {
        SourceArg::Surface => (canonical_fixture(), InputKind::Matrix),
        SourceArg::Phantom => (phantom::bundled()?, InputKind::Pgm { maxval: 255 }),
    };
    let image = a.source == SourceArg::Phantom;
    let sigma = a.sigma;
    let noise = match a.noise {
        NoiseArg::None => None,
        NoiseArg::Awgn => Some(NoiseKind::awgn(sigma.unwrap_or(if image { 0.1 } else { 1.0 }))),
        NoiseArg::Mwgn => Some(NoiseKind::mwgn(sigma.unwrap_or(0.04))),
        NoiseArg::Cn => Some(NoiseKind::cn()),
        NoiseArg::Spn if image => Some(NoiseKind::spn_levels(a.density.unwrap_or(0.02), 0.0, 1.0)),
        NoiseArg::Spn => Some(NoiseKind::spn(a.density.unwrap_or(0.9))),
        NoiseArg::Poisson => Some(NoiseKind::poisson()),
    };
    let noisy = match noise {
        Some(k) => apply_noise(&clean, &NoiseSpec::new(k, a.seed))?,
        None => clean.clone(),
    };
    save_grid(&noisy, &a.out, kind, true)?;
    if let Some(p) = &a.out_clean {
        save_grid(&clean, p, kind, true)?;
    }
    writeln!(
        out,
        "source={:?} noise={} seed={} shape={}x{}",
        a.source,
        noise.map_or("none", |k| k.label()),
        a.seed,
        clean.rows(),
        clean.cols()
    )?;
    Ok(())
}
