//! Command-line front end. Every command writes a JSON [`RunReport`];
//! grid-shaped results are also written as CSV.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 data, 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataio::{generate_synthetic, read_csv, write_atomic, write_csv, Dataset, NoiseSpec, SyntheticRanges};
use crate::discovery::{
    calibrate_alpha, crossover_from_losses, enumerate_all_subsets, enumerate_best_in_class, greedy_densify,
    loss_landscape_grid, lp_sweep, rank, DensifyStart, DiscoveryConfig, GridAxis, SweepConfig,
    DEFAULT_FROZEN_EXPONENTS,
};
use crate::error::{Error, Result};
use crate::model::{ModelFamily, ParamVector, TermMask, N_EXPONENTS, N_TERMS};
use crate::objective::{LossSpec, Normalization, PenaltyConfig, Reduction};
use crate::optimizer::{multi_restart_fit, AdamConfig, InitStrategy, DEFAULT_SEED};
use crate::report::{
    fit_runs_csv, landscape_csv, landscape_svg, stress_curves, subsets_csv, sweep_csv, sweep_svg, unix_ms,
    DatasetSummary, ReportBody, RunReport, REPORT_SCHEMA_VERSION,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable naming the directory for relative output paths.
pub const OUT_DIR_ENV: &str = "LPCANN_OUT_DIR";

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Domain(_) | Error::Parse { .. } | Error::Schema { .. } | Error::Io(_) => EXIT_DATA,
        Error::Overflow { .. } | Error::Divergence { .. } => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "lpcann", version, about = "Sparse discovery of hyperelastic models from tension, compression and shear data")]
pub struct Cli {
    /// Directory that relative output paths are resolved against
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic dataset
    Gen(GenArgs),
    /// Fit a model, optionally over many seeded restarts
    Fit(FitArgs),
    /// Enumerate fixed-size term subsets and rank them
    L0(L0Args),
    /// Grow a model one term at a time
    Densify(DensifyArgs),
    /// Sweep penalty powers and weights
    Sweep(SweepArgs),
    /// Evaluate the loss on a two-weight grid
    Landscape(LandscapeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationArg {
    Max,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionArg {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetArg {
    Default,
    Brain,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    Uniform,
    L0,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LossArgs {
    /// Per-protocol stress normalization
    #[arg(long, value_enum, default_value = "max")]
    pub normalization: NormalizationArg,
    /// Reduction of squared residuals within a protocol
    #[arg(long, value_enum, default_value = "mean")]
    pub reduction: ReductionArg,
}

impl LossArgs {
    fn spec(&self) -> LossSpec {
        LossSpec::new(
            match self.normalization {
                NormalizationArg::Max => Normalization::MaxStress,
                NormalizationArg::None => Normalization::None,
            },
            match self.reduction {
                ReductionArg::Mean => Reduction::Mean,
                ReductionArg::Sum => Reduction::Sum,
            },
        )
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AdamArgs {
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 20_000)]
    pub epochs: usize,
    /// Relative loss change over the convergence window that stops a run
    #[arg(long, default_value_t = 1e-9)]
    pub conv_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub conv_window: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

impl AdamArgs {
    fn config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.lr,
            max_epochs: self.epochs,
            convergence_tol: self.conv_tol,
            convergence_window: self.conv_window,
            seed: self.seed,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value = "mr")]
    pub family: ModelFamily,
    /// Amplitudes: two values (terms 1 and 5) for mr, eight otherwise
    #[arg(long, value_delimiter = ',', required = true)]
    pub weights: Vec<f64>,
    /// Four exponent weights for inv8
    #[arg(long, value_delimiter = ',')]
    pub exponents: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "default")]
    pub preset: PresetArg,
    /// Tension stretch range a:b, overrides the preset
    #[arg(long)]
    pub tension: Option<String>,
    #[arg(long)]
    pub compression: Option<String>,
    #[arg(long)]
    pub shear: Option<String>,
    /// Increments per protocol; each protocol gets increments + 1 points
    #[arg(long, default_value_t = 10)]
    pub increments: usize,
    /// Gaussian noise, relative to each protocol's extreme stress
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a JSON report here
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "inv8")]
    pub family: ModelFamily,
    /// Active terms, 1-based; defaults to every term of the family
    #[arg(long, value_delimiter = ',')]
    pub terms: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub init: InitArg,
    /// One-term `l0` report whose amplitudes divide the penalized weights
    #[arg(long)]
    pub normalize_weights: Option<PathBuf>,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub adam: AdamArgs,
    #[arg(long, default_value = "fit_report.json")]
    pub out: PathBuf,
    /// Per-run table
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct L0Args {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "inv8")]
    pub family: ModelFamily,
    /// Subset sizes to enumerate
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub k: Vec<usize>,
    /// Enumerate all 255 subsets (slow)
    #[arg(long)]
    pub all: bool,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    /// Rows within this relative data-loss margin of the best row of equal size are flagged
    #[arg(long, default_value_t = 0.05)]
    pub near_best_rtol: f64,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub adam: AdamArgs,
    #[arg(long, default_value = "l0_report.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DensifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "inv8")]
    pub family: ModelFamily,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Minimum penalized-loss gain for adopting a term
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Start every candidate from random weights instead of the incumbent
    #[arg(long)]
    pub cold: bool,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub adam: AdamArgs,
    #[arg(long, default_value = "densify_report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "inv8")]
    pub family: ModelFamily,
    #[arg(long, value_delimiter = ',')]
    pub terms: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.001,0.01,0.1")]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub init: InitArg,
    #[arg(long)]
    pub normalize_weights: Option<PathBuf>,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub adam: AdamArgs,
    #[arg(long, default_value = "sweep_report.json")]
    pub out: PathBuf,
    #[arg(long, default_value = "sweep.csv")]
    pub csv: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LandscapeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "mr")]
    pub family: ModelFamily,
    /// Two 1-based term numbers
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    pub pair: Vec<usize>,
    /// Weight range a:b for both axes
    #[arg(long, default_value = "0:2")]
    pub range: String,
    /// Separate range for the second axis
    #[arg(long)]
    pub range_j: Option<String>,
    #[arg(long, default_value_t = 101)]
    pub res: usize,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Set alpha so that data loss and penalty are equal at the upper grid corner
    #[arg(long)]
    pub calibrate: bool,
    /// Frozen exponent weights for inv8
    #[arg(long, value_delimiter = ',')]
    pub exponents: Option<Vec<f64>>,
    #[command(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value = "landscape_report.json")]
    pub out: PathBuf,
    #[arg(long, default_value = "landscape.csv")]
    pub csv: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

struct Context {
    out_dir: Option<PathBuf>,
    command: Vec<String>,
    config: serde_json::Value,
    started: u128,
}

impl Context {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn write(&self, p: &Path, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(p);
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    fn report(
        &self,
        out: &Path,
        dataset: Option<&Dataset>,
        result: ReportBody,
        curves: Option<Vec<crate::report::StressCurve>>,
    ) -> Result<PathBuf> {
        let report = RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config: self.config.clone(),
            dataset: dataset.map(DatasetSummary::from),
            result,
            stress_curves: curves,
            started_unix_ms: self.started,
            finished_unix_ms: unix_ms(),
        };
        self.write(out, report.to_json()?.as_bytes())
    }
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("range must look like a:b, got '{s}'"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

fn term_mask(family: ModelFamily, terms: &Option<Vec<usize>>) -> Result<TermMask> {
    match terms {
        None => Ok(family.full_mask()),
        Some(t) => {
            let m = TermMask::try_from(t.clone()).map_err(Error::Config)?;
            if m.count() == 0 {
                return Err(Error::Config("--terms must name at least one term".into()));
            }
            Ok(m)
        }
    }
}

fn exponents_arg(v: &Option<Vec<f64>>) -> Result<Option<[f64; N_EXPONENTS]>> {
    match v {
        None => Ok(None),
        Some(e) => e
            .as_slice()
            .try_into()
            .map(Some)
            .map_err(|_| Error::Config(format!("expected {N_EXPONENTS} exponents, got {}", e.len()))),
    }
}

/// One-term amplitudes from an `l0` report, indexed by term.
pub fn one_term_amplitudes(path: &Path) -> Result<[f64; N_TERMS]> {
    let text = fs::read_to_string(path)?;
    let report: RunReport =
        serde_json::from_str(&text).map_err(|e| Error::Schema { line: e.line(), message: e.to_string() })?;
    let ReportBody::Subsets { reports, .. } = report.result else {
        return Err(Error::Schema { line: 0, message: "expected an l0 report".into() });
    };
    let mut amps = [0.0; N_TERMS];
    for r in reports.iter().filter(|r| r.k() == 1) {
        if let Some(f) = &r.fitted {
            let k = r.mask.terms().next().unwrap();
            amps[k] = f.params.amplitudes[k];
        }
    }
    if let Some(k) = (0..N_TERMS).find(|&k| !(amps[k] > 0.0)) {
        return Err(Error::Schema {
            line: 0,
            message: format!("l0 report has no positive one-term amplitude for term {}", k + 1),
        });
    }
    Ok(amps)
}

fn cmd_gen(ctx: &Context, a: &GenArgs) -> Result<()> {
    let mut params = match (a.family, a.weights.len()) {
        (ModelFamily::MooneyRivlin, 2) => ParamVector::mooney_rivlin(a.weights[0], a.weights[1]),
        (ModelFamily::Stretch8, N_TERMS) => ParamVector::stretch(a.weights.clone().try_into().unwrap()),
        (ModelFamily::Invariant8, N_TERMS) => {
            ParamVector::invariant(a.weights.clone().try_into().unwrap(), DEFAULT_FROZEN_EXPONENTS)
        }
        (f, n) => {
            let want = if f == ModelFamily::MooneyRivlin { 2 } else { N_TERMS };
            return Err(Error::Config(format!("--weights for {f} needs {want} values, got {n}")));
        }
    };
    if let Some(e) = exponents_arg(&a.exponents)? {
        if a.family != ModelFamily::Invariant8 {
            return Err(Error::Config("--exponents only applies to inv8".into()));
        }
        params.exponents = e;
    }
    let mut ranges = match a.preset {
        PresetArg::Default => SyntheticRanges::default(),
        PresetArg::Brain => SyntheticRanges::brain(),
    };
    if let Some(r) = &a.tension {
        ranges.tension = parse_range(r)?;
    }
    if let Some(r) = &a.compression {
        ranges.compression = parse_range(r)?;
    }
    if let Some(r) = &a.shear {
        ranges.shear = parse_range(r)?;
    }
    let noise = (a.noise > 0.0).then_some(NoiseSpec { relative_sigma: a.noise, seed: a.seed });
    let data = generate_synthetic(&params, &ranges, a.increments, noise)?;
    let path = ctx.path(&a.out);
    if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_csv(&data, &path)?;
    println!("wrote {} points to {}", data.len(), path.display());
    if let Some(r) = &a.report {
        let body = ReportBody::Generate { path: path.display().to_string(), points: data.len() };
        ctx.report(r, Some(&data), body, stress_curves(&params, &data).ok())?;
    }
    Ok(())
}

fn init_and_norms(
    init: InitArg,
    normalize: &Option<PathBuf>,
) -> Result<(InitStrategy, Option<[f64; N_TERMS]>)> {
    let amps = normalize.as_deref().map(one_term_amplitudes).transpose()?;
    let init = match (init, amps) {
        (InitArg::Uniform, _) => InitStrategy::UniformRandom,
        (InitArg::L0, Some(amplitudes)) => InitStrategy::L0Informed { amplitudes },
        (InitArg::L0, None) => {
            return Err(Error::Config("--init l0 needs --normalize-weights <l0 report>".into()))
        }
    };
    Ok((init, amps))
}

fn cmd_fit(ctx: &Context, a: &FitArgs) -> Result<()> {
    let data = read_csv(&a.data)?;
    let mask = term_mask(a.family, &a.terms)?;
    let (init, norms) = init_and_norms(a.init, &a.normalize_weights)?;
    let mut pen = PenaltyConfig::new(a.p, a.alpha);
    pen.weight_norms = norms;
    let ens = multi_restart_fit(a.runs, &init, a.family, mask, &data, a.loss.spec(), &pen, &a.adam.config())?;
    let Some(best) = ens.best() else {
        if let Some(f) = ens.failures.first() {
            eprintln!("every run failed; first failure: {}", f.error);
        }
        return Err(Error::Divergence { epoch: 0, last_finite: Vec::new() });
    };
    let curves = stress_curves(&best.params, &data)?;
    println!(
        "best of {} runs: total loss {:.6e}, {} active terms, pooled R2 {}",
        ens.fits.len(),
        best.loss.total,
        best.active_terms,
        best.r2.pooled().map_or("n/a".into(), |r| format!("{r:.4}"))
    );
    if let Some(csv) = &a.csv {
        ctx.write(csv, &fit_runs_csv(a.family, &ens.fits)?)?;
    }
    let out = ctx.report(&a.out, Some(&data), ReportBody::Fit { ensemble: ens }, Some(curves))?;
    println!("report: {}", out.display());
    Ok(())
}

fn cmd_l0(ctx: &Context, a: &L0Args) -> Result<()> {
    let data = read_csv(&a.data)?;
    let cfg = DiscoveryConfig { spec: a.loss.spec(), adam: a.adam.config(), restarts: a.restarts };
    let mut reports = Vec::new();
    if a.all {
        eprintln!("warning: fitting all 255 subsets with {} restarts each", a.restarts);
        reports = enumerate_all_subsets(a.family, &data, a.alpha, &cfg)?;
    } else {
        for &k in &a.k {
            if k > 2 {
                eprintln!("warning: k={k} fits every {k}-term subset");
            }
            reports.extend(enumerate_best_in_class(a.family, &data, k, a.alpha, &cfg)?);
        }
        rank(&mut reports, a.alpha);
    }
    let best_of = |k: usize| reports.iter().filter(|r| r.k() == k && !r.failed()).map(|r| r.data_loss).reduce(f64::min);
    let near_best: Vec<bool> = reports
        .iter()
        .map(|r| best_of(r.k()).is_some_and(|b| !r.failed() && r.data_loss <= b * (1.0 + a.near_best_rtol)))
        .collect();
    let crossover = best_of(1).zip(best_of(2)).map(|(l1, l2)| crossover_from_losses(l1, l2));
    for (r, nb) in reports.iter().zip(&near_best) {
        println!(
            "{:>12} k={} loss={:.6} penalized={:.6}{}",
            r.mask.to_string(),
            r.k(),
            r.data_loss,
            r.penalized_loss(a.alpha),
            if *nb { " *" } else { "" }
        );
    }
    if let Some(c) = crossover {
        println!("crossover alpha: {c:.6}");
    }
    if let Some(csv) = &a.csv {
        ctx.write(csv, &subsets_csv(a.family, &reports, a.alpha, &near_best)?)?;
    }
    let curves = reports.first().and_then(|r| r.fitted.as_ref()).map(|f| stress_curves(&f.params, &data)).transpose()?;
    let body = ReportBody::Subsets { alpha: a.alpha, reports, near_best, crossover };
    ctx.report(&a.out, Some(&data), body, curves)?;
    Ok(())
}

fn cmd_densify(ctx: &Context, a: &DensifyArgs) -> Result<()> {
    let data = read_csv(&a.data)?;
    let cfg = DiscoveryConfig { spec: a.loss.spec(), adam: a.adam.config(), restarts: a.restarts };
    let start = if a.cold { DensifyStart::Cold } else { DensifyStart::Warm };
    let t = greedy_densify(a.family, &data, a.alpha, a.tol, start, &cfg)?;
    for s in &t.steps {
        println!("{:>12} data loss {:.6} penalized {:.6}", s.adopted.mask.to_string(), s.adopted.data_loss, s.adopted.penalized_loss(a.alpha));
    }
    let curves = t.last().fitted.as_ref().map(|f| stress_curves(&f.params, &data)).transpose()?;
    ctx.report(&a.out, Some(&data), ReportBody::Densify { trajectory: t }, curves)?;
    Ok(())
}

fn cmd_sweep(ctx: &Context, a: &SweepArgs) -> Result<()> {
    let data = read_csv(&a.data)?;
    let mask = term_mask(a.family, &a.terms)?;
    let (init, weight_norms) = init_and_norms(a.init, &a.normalize_weights)?;
    let sweep = SweepConfig {
        powers: a.p.clone(),
        alphas: a.alpha.clone(),
        n_runs: a.runs,
        master_seed: a.adam.seed,
        init,
        weight_norms,
    };
    let cells = lp_sweep(a.family, mask, &data, &sweep, a.loss.spec(), &a.adam.config())?;
    for c in &cells {
        println!(
            "p={} alpha={} active={} pooled R2={}{}",
            c.p,
            c.alpha,
            c.active_terms.map_or("n/a".into(), |s| format!("{:.2}±{:.2}", s.mean, s.std)),
            c.r2.pooled.map_or("n/a".into(), |s| format!("{:.4}", s.mean)),
            if c.complete() { "" } else { " (incomplete)" }
        );
    }
    ctx.write(&a.csv, &sweep_csv(a.family, &cells)?)?;
    if let Some(svg) = &a.svg {
        ctx.write(svg, sweep_svg(&cells).as_bytes())?;
    }
    ctx.report(&a.out, Some(&data), ReportBody::Sweep { cells }, None)?;
    Ok(())
}

fn cmd_landscape(ctx: &Context, a: &LandscapeArgs) -> Result<()> {
    let data = read_csv(&a.data)?;
    if a.pair.len() != 2 || a.pair.iter().any(|t| !(1..=N_TERMS).contains(t)) {
        return Err(Error::Config(format!("--pair needs two term numbers in 1..=8, got {:?}", a.pair)));
    }
    let ri = parse_range(&a.range)?;
    let rj = a.range_j.as_deref().map_or(Ok(ri), parse_range)?;
    let axis_i = GridAxis { term: a.pair[0] - 1, min: ri.0, max: ri.1 };
    let axis_j = GridAxis { term: a.pair[1] - 1, min: rj.0, max: rj.1 };
    let exponents = exponents_arg(&a.exponents)?;
    let spec = a.loss.spec();
    let alpha = if a.calibrate {
        let mut corner = ParamVector::zeros(a.family);
        if a.family == ModelFamily::Invariant8 {
            corner.exponents = exponents.unwrap_or(DEFAULT_FROZEN_EXPONENTS);
        }
        corner.amplitudes[axis_i.term] = axis_i.max;
        corner.amplitudes[axis_j.term] = axis_j.max;
        let mask = TermMask::from_terms(&[axis_i.term, axis_j.term]);
        let alpha = calibrate_alpha(a.family, mask, &data, a.p, &corner, spec)?;
        println!("calibrated alpha: {alpha:.6}");
        alpha
    } else {
        a.alpha
    };
    let pen = PenaltyConfig::new(a.p, alpha);
    let grid = loss_landscape_grid(a.family, axis_i, axis_j, &data, a.res, &pen, exponents, spec)?;
    let (wi, wj) = grid.argmin_weights();
    println!("min {:.6} at (w{}, w{}) = ({wi}, {wj})", grid.min, axis_i.term + 1, axis_j.term + 1);
    let csv = ctx.write(&a.csv, &landscape_csv(&grid)?)?;
    if let Some(svg) = &a.svg {
        ctx.write(svg, landscape_svg(&grid).as_bytes())?;
    }
    let body = ReportBody::Landscape { grid, csv: Some(csv.display().to_string()) };
    ctx.report(&a.out, Some(&data), body, None)?;
    Ok(())
}

fn dispatch(cli: &Cli, command: Vec<String>) -> Result<()> {
    let config = serde_json::to_value(cli).map_err(|e| Error::Io(e.to_string()))?;
    if let Some(dir) = &cli.out_dir {
        fs::create_dir_all(dir)?;
    }
    let ctx = Context { out_dir: cli.out_dir.clone(), command, config, started: unix_ms() };
    match &cli.command {
        Command::Gen(a) => cmd_gen(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::L0(a) => cmd_l0(&ctx, a),
        Command::Densify(a) => cmd_densify(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Landscape(a) => cmd_landscape(&ctx, a),
    }
}

/// Parses `args` (including the program name) and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let command: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli, command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
