use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use ccgof::alternatives::AltSpec;
use ccgof::analysis::{analyze, parse_values, AnalysisRequest, BandSpec, Transform};
use ccgof::calibrate::{
    calibrate, CalibrationTable, NullEnsemble, StatKind, StatRequest, DEFAULT_REPS, DEFAULT_SEED, MIN_REPS,
};
use ccgof::ccurve::{empirical_cc, population_cc, NullMode, NullSpec, Sample};
use ccgof::dyadic::DyadicGrid;
use ccgof::gofstats::Competitor;
use ccgof::powerstudy::{run_power, PowerConfig};
use ccgof::refmodels::{MonotoneCubic, ReferenceCdf};
use ccgof::render::{render_bplot, render_bqplot, render_curve, terminal_sketch, PlotStyle};

const EXIT_REJECT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "ccgof", version, about = "Comparison-curve B plots and data-driven goodness-of-fit tests")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Test one sample; exit status 0 accept, 1 reject.
    Analyze(AnalyzeArgs),
    /// Simulate critical values and penalties into a table.
    Calibrate(CalibrateArgs),
    /// Run a power study described by a TOML file.
    Power(PowerArgs),
    /// Draw the B plot of a sample, or the population curve of an alternative.
    Plot(PlotArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Whitespace- or comma-delimited numeric file ("-" for stdin).
    input: Option<PathBuf>,
    /// 0-based field to read from each record.
    #[arg(long, default_value_t = 0)]
    column: usize,
    #[arg(long)]
    skip_header: bool,
    /// scale:<θ>, logit or logit:<c>.
    #[arg(long)]
    transform: Option<String>,
    #[arg(long, default_value = "composite")]
    mode: String,
    /// Simple-mode null: normal, uniform or table:<file of x p pairs>.
    #[arg(long, default_value = "normal")]
    null: String,
    /// Grid level S (default 6 simple, 4 composite).
    #[arg(long)]
    level: Option<u32>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Pre-declared index set r:s:upper|lower (repeatable).
    #[arg(long = "band")]
    bands: Vec<String>,
    /// Competitor tests to report: AD, KS, CvM, BJ (repeatable).
    #[arg(long = "competitor")]
    competitors: Vec<String>,
    /// Calibration table to read (and update with --calibrate).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Simulate constants missing from the table.
    #[arg(long)]
    calibrate: bool,
    /// Accept constants interpolated in n between tabulated sizes.
    #[arg(long)]
    interpolate: bool,
    /// Attach Monte-Carlo p-values (runs the null ensemble).
    #[arg(long)]
    p_values: bool,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// B_q plot (composite mode).
    #[arg(long)]
    bq: Option<PathBuf>,
    /// JSON report ("-" for stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Skip the terminal sketch.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Sample sizes (repeatable).
    #[arg(long = "n", required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value = "composite")]
    mode: String,
    #[arg(long = "alpha", default_values_t = vec![0.05])]
    alphas: Vec<f64>,
    #[arg(long)]
    level: Option<u32>,
    /// Statistics: P, M, T, AD, KS, CvM, BJ (repeatable; default P and the EDF tests).
    #[arg(long = "stat")]
    stats: Vec<String>,
    #[arg(long = "band")]
    bands: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    table: PathBuf,
}

#[derive(Args)]
struct PowerArgs {
    config: PathBuf,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Population comparison curve of an alternative, e.g. A5_0:0.15.
    #[arg(long, conflicts_with = "input")]
    alt: Option<String>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    bq: Option<PathBuf>,
    /// Not accepted here: bands are declared up front with `analyze --band`.
    #[arg(long = "band", hide = true)]
    bands: Vec<String>,
}

/// Failure with the exit status it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = err
            .chain()
            .find_map(|e| e.downcast_ref::<ccgof::Error>())
            .map(|e| match e {
                ccgof::Error::Numerical(_)
                | ccgof::Error::Degenerate(_)
                | ccgof::Error::CalibrationRequired(_)
                | ccgof::Error::InsufficientReplications { .. }
                | ccgof::Error::PenaltyBound(_)
                | ccgof::Error::Divergent(_)
                | ccgof::Error::VersionMismatch { .. } => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            })
            .unwrap_or(EXIT_USAGE);
        Failure { code, err }
    }
}

impl From<ccgof::Error> for Failure {
    fn from(e: ccgof::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.cmd {
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Calibrate(a) => cmd_calibrate(a).map(|_| 0),
        Cmd::Power(a) => cmd_power(a).map(|_| 0),
        Cmd::Plot(a) => cmd_plot(a).map(|_| 0),
    };
    match out {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn parse_mode(s: &str) -> Result<NullMode, Failure> {
    Ok(s.parse::<NullMode>()?)
}

fn null_spec(mode: NullMode, null: &str) -> Result<NullSpec, Failure> {
    if mode == NullMode::Composite {
        return Ok(NullSpec::CompositeGaussian);
    }
    let f0 = match null {
        "normal" | "std-normal" => ReferenceCdf::StdNormal,
        "uniform" => ReferenceCdf::Uniform01,
        other => {
            let path = other
                .strip_prefix("table:")
                .ok_or_else(|| anyhow!("--null must be normal, uniform or table:<path>, got '{other}'"))?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            let xs = parse_values(&text, 0, false)?;
            let ps = parse_values(&text, 1, false)?;
            ReferenceCdf::Tabulated(MonotoneCubic::new(xs, ps)?)
        }
    };
    Ok(NullSpec::Simple(f0))
}

fn read_sample(d: &DataArgs) -> Result<(Sample, String), Failure> {
    let input = d.input.as_ref().ok_or_else(|| anyhow!("an input file is required"))?;
    let text = if input.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin()).context("reading stdin")?
    } else {
        fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?
    };
    let values = parse_values(&text, d.column, d.skip_header).with_context(|| format!("parsing {}", input.display()))?;
    Ok((Sample::new(values)?, input.display().to_string()))
}

fn write_out(path: &Path, text: &str) -> Result<(), Failure> {
    if path.as_os_str() == "-" {
        print!("{text}");
        return Ok(());
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_table(path: Option<&PathBuf>) -> Result<CalibrationTable, Failure> {
    match path {
        Some(p) if p.exists() => Ok(CalibrationTable::load(p).with_context(|| format!("loading {}", p.display()))?),
        _ => Ok(CalibrationTable::new()),
    }
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<u8, Failure> {
    let mode = parse_mode(&a.data.mode)?;
    let null = null_spec(mode, &a.data.null)?;
    let (raw, source) = read_sample(&a.data)?;
    let mut req = AnalysisRequest::new(null);
    req.alpha = a.alpha;
    if let Some(l) = a.data.level {
        req.level = l;
    }
    req.transform = a.data.transform.as_deref().map(str::parse::<Transform>).transpose()?;
    req.bands = a.bands.iter().map(|b| b.parse::<BandSpec>()).collect::<Result<_, _>>()?;
    req.competitors = a.competitors.iter().map(|c| c.parse::<Competitor>()).collect::<Result<_, _>>()?;
    req.reps = a.reps;
    req.seed = a.seed;
    req.auto_calibrate = a.calibrate;
    req.allow_interpolation = a.interpolate;
    req.p_values = a.p_values;
    req.source = Some(source);

    let mut table = load_table(a.table.as_ref())?;
    let before = table.len();
    let res = analyze(&raw, &req, &mut table)?;
    if let Some(p) = &a.table {
        if table.len() != before {
            table.store(p).with_context(|| format!("storing {}", p.display()))?;
        }
    }

    let rep = &res.report;
    let to_stdout = a.report.as_ref().is_some_and(|p| p.as_os_str() == "-");
    if !to_stdout {
        let t = &rep.test;
        println!(
            "{}  n={}  mode={}  S={}  alpha={}",
            rep.source.as_deref().unwrap_or("-"),
            rep.sample.n,
            rep.mode.as_str(),
            rep.level,
            rep.alpha
        );
        if let Some((m, s)) = rep.beta_hat {
            println!("beta_hat = ({m:.4}, {s:.4})");
        }
        println!(
            "{} = {:.2}  dim = {}  critical = {:.2}  oracle = {:.3} (cut {:.3})  -> {}",
            t.kind,
            t.statistic,
            t.selected_dim.unwrap_or(0),
            t.critical,
            t.oracle.unwrap_or(f64::NAN),
            t.oracle_cut.unwrap_or(f64::NAN),
            rep.decision
        );
        for c in &rep.competitors {
            let p = c.p_value.map(|p| format!("  p = {p:.4}")).unwrap_or_default();
            println!("{} = {:.4}  critical = {:.4}{}", c.kind, c.statistic, c.critical, p);
        }
        for b in &rep.bands {
            println!("band {}..{} {:?}: bound {:.3}, flagged {:?}", b.first, b.last, b.side, b.bound, b.violations);
        }
        if rep.calibration.interpolated {
            println!("note: some constants were interpolated in n");
        }
        if !a.quiet {
            print!("{}", terminal_sketch(&res.series, &res.bands, 8));
        }
    }
    let style = PlotStyle { title: Some(format!("B plot, n = {}", rep.sample.n)), ..PlotStyle::default() };
    if let Some(p) = &a.svg {
        write_out(p, &render_bplot(&res.series, &res.bands, &style))?;
    }
    if let Some(p) = &a.bq {
        let style = PlotStyle { title: Some(format!("Bq plot, n = {}", rep.sample.n)), ..PlotStyle::default() };
        write_out(p, &render_bqplot(&res.series, &res.bands, &style)?)?;
    }
    if let Some(p) = &a.report {
        write_out(p, &rep.to_json())?;
    }
    Ok(if rep.reject() { EXIT_REJECT } else { 0 })
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<(), Failure> {
    let mode = parse_mode(&a.mode)?;
    let level = a.level.unwrap_or(mode.default_level());
    DyadicGrid::new(level)?;
    if a.reps < MIN_REPS {
        return Err(anyhow!("--reps must be at least {MIN_REPS}").into());
    }
    let mut requests = Vec::new();
    let stats = if a.stats.is_empty() { vec!["P".into(), "AD".into(), "KS".into(), "CvM".into(), "BJ".into()] } else { a.stats };
    for s in &stats {
        requests.push(StatRequest::new(s.parse::<StatKind>()?, level));
    }
    for b in &a.bands {
        let b: BandSpec = b.parse()?;
        let stat = match b.side {
            ccgof::calibrate::BandSide::Upper => StatKind::Upper(b.first, b.last),
            ccgof::calibrate::BandSide::Lower => StatKind::Lower(b.first, b.last),
        };
        requests.push(StatRequest::new(stat, level));
    }
    let mut table = load_table(Some(&a.table))?;
    for &n in &a.sizes {
        let ens = NullEnsemble::new(n, mode, level, a.reps, a.seed)?;
        let entries = calibrate(&ens, &a.alphas, &requests)?;
        for (k, v) in &entries {
            println!("n={} alpha={} S={} {} = {:.4}", k.n, k.alpha, k.level, k.stat, v);
        }
        table.extend(entries);
    }
    table.store(&a.table).with_context(|| format!("storing {}", a.table.display()))?;
    Ok(())
}

fn cmd_power(a: PowerArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg = PowerConfig::from_toml(&text)?;
    if let Some(r) = a.runs {
        cfg.runs = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let mut table = load_table(a.table.as_ref())?;
    let before = table.len();
    let res = run_power(&cfg, &mut table)?;
    print!("{}", res.to_text());
    if let Some(p) = &a.csv {
        write_out(p, &res.to_csv())?;
    }
    if let Some(p) = &a.table {
        if table.len() != before {
            table.store(p).with_context(|| format!("storing {}", p.display()))?;
        }
    }
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<(), Failure> {
    if !a.bands.is_empty() {
        return Err(Failure {
            code: EXIT_USAGE,
            err: anyhow!("acceptance bands must be declared before the bars are seen; use `analyze --band` instead"),
        });
    }
    let mode = parse_mode(&a.data.mode)?;
    let null = null_spec(mode, &a.data.null)?;
    if let Some(alt) = &a.alt {
        let alt: AltSpec = alt.parse()?;
        let pc = population_cc(&alt, &null)?;
        let pts = (1..400)
            .map(|i| {
                let p = i as f64 / 400.0;
                pc.cc(p).map(|v| (p, v))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let style = PlotStyle { title: Some(format!("CC of {alt} ({} null)", mode.as_str())), ..PlotStyle::default() };
        let svg = render_curve(&pts, &style);
        match &a.svg {
            Some(p) => write_out(p, &svg)?,
            None => print!("{svg}"),
        }
        if let Some((m, s)) = pc.beta() {
            eprintln!("beta(F) = ({m:.4}, {s:.4})");
        }
        let zs = pc.zero_crossings(2000)?;
        eprintln!("zero crossings: {}", zs.iter().map(|z| format!("{z:.4}")).collect::<Vec<_>>().join(" "));
        return Ok(());
    }
    let (raw, _) = read_sample(&a.data)?;
    let sample = match a.data.transform.as_deref().map(str::parse::<Transform>).transpose()? {
        Some(t) => t.apply_all(&raw)?,
        None => raw,
    };
    let level = a.data.level.unwrap_or(mode.default_level());
    let series = empirical_cc(&sample, &null, &DyadicGrid::new(level)?, level)?;
    print!("{}", terminal_sketch(&series, &[], 8));
    let style = PlotStyle { title: Some(format!("B plot, n = {}", sample.len())), ..PlotStyle::default() };
    if let Some(p) = &a.svg {
        write_out(p, &render_bplot(&series, &[], &style))?;
    }
    if let Some(p) = &a.bq {
        write_out(p, &render_bqplot(&series, &[], &style)?)?;
    }
    Ok(())
}
