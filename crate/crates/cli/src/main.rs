use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modesep::bounds::{crb_direct_imaging, photons_in_mode, qcrb, spade_sensitivity_model};
use modesep::exec::Execution;
use modesep::harness::output::format_value;
use modesep::harness::{
    calibrate, load_config, run_campaign, run_separation, two_source_curve, write_results, write_svg, ExperimentConfig,
    Regime, RunRecord,
};
use modesep::pipeline::differential_measurement;
use modesep::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "modesep",
    version,
    about = "Two-source separation estimation by mode demultiplexing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quantum, direct-imaging and error-propagation bounds
    Bounds(BoundsArgs),
    /// Run the calibration scan and print the fitted curve
    Calibrate(Common),
    /// Estimate the configured separations
    Estimate(Common),
    /// Calibrate and estimate every separation, writing a CSV
    Campaign(Common),
    /// Low-flux campaign with the default settings
    #[command(name = "reproduce-fig3")]
    ReproduceFig3(Common),
    /// High-flux campaign with the default settings
    #[command(name = "reproduce-fig4")]
    ReproduceFig4(Common),
    /// Step one source and fit estimated against reference separations
    #[command(name = "diff-measure")]
    DiffMeasure(DiffArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    LowFlux,
    HighFlux,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::LowFlux => Regime::LowFlux,
            RegimeArg::HighFlux => Regime::HighFlux,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to use when no configuration file is given
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to one per core)
    #[arg(long)]
    threads: Option<usize>,
    /// Separations in µm, comma separated
    #[arg(long = "d-um", value_delimiter = ',')]
    d_um: Vec<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Also write an SVG plot
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "w0-um")]
    w0_um: Option<f64>,
    /// Detected photons per window
    #[arg(long)]
    photons: Option<f64>,
    #[arg(long = "t-int")]
    t_int: Option<f64>,
}

#[derive(Args, Debug)]
struct DiffArgs {
    #[command(flatten)]
    common: Common,
    /// Initial separation (µm)
    #[arg(long = "start-um", default_value_t = 120.0)]
    start_um: f64,
    #[arg(long = "step-um", default_value_t = 0.2)]
    step_um: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Waist mismatch factor of the moving beam
    #[arg(long)]
    mismatch: Option<f64>,
}

/// Layer the configuration: flags over file over regime defaults.
fn resolve(common: &Common, fixed: Option<Regime>, fallback: Regime) -> Result<ExperimentConfig> {
    let wanted = fixed.or(common.regime.map(Regime::from));
    let mut config = match &common.config {
        Some(path) => {
            let c = load_config(path)?;
            if let Some(r) = wanted.filter(|&r| r != c.regime) {
                return Err(Error::config(
                    "regime",
                    format!("{} sets {:?} but {:?} was requested", path.display(), c.regime, r),
                ));
            }
            c
        }
        None => ExperimentConfig::defaults(wanted.unwrap_or(fallback)),
    };
    if common.seed.is_some() {
        config.seed = common.seed;
    }
    if common.out.is_some() {
        config.output_dir = common.out.clone();
    }
    if !common.d_um.is_empty() {
        config.separations_um = common.d_um.clone();
    }
    if let Some(r) = common.repetitions {
        config.repetitions = r;
    }
    config.write_svg |= common.svg;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::config("threads", "must be at least one"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    config.validate()?;
    Ok(config)
}

fn summary(r: &RunRecord) -> String {
    format!(
        "d_set_um={} d_ref_um={} d_ref_err_um={} d_hat_um={} d_sens_um={} qcrb_um={} di_crb_um={} spade_model_um={} clamp_frac={} n_photons_hg01={}",
        format_value(r.d_set),
        format_value(r.d_ref),
        format_value(r.d_ref_err),
        format_value(r.d_hat),
        format_value(r.d_sensitivity),
        format_value(r.qcrb),
        format_value(r.di_crb),
        format_value(r.spade_model),
        format_value(r.clamp_fraction),
        r.photons_in_hg01
    )
}

fn write_outputs(config: &ExperimentConfig, records: &[RunRecord], stem: &str, svg: bool) -> Result<()> {
    let Some(dir) = &config.output_dir else {
        return Ok(());
    };
    let csv = dir.join(format!("{stem}.csv"));
    write_results(records, &csv)?;
    eprintln!("wrote {}", csv.display());
    if svg {
        let path = dir.join(format!("{stem}.svg"));
        write_svg(records, &path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn campaign(config: &ExperimentConfig, stem: &str, svg: bool) -> Result<()> {
    let records = run_campaign(config, &config.streams()?)?;
    for r in &records {
        println!("{}", summary(r));
    }
    write_outputs(config, &records, stem, svg)
}

fn bounds(args: &BoundsArgs) -> Result<()> {
    let mut c = resolve(&args.common, None, Regime::LowFlux)?;
    if let Some(w) = args.w0_um {
        c.waist_um = w;
    }
    if let Some(n) = args.photons {
        c.photons = n;
    }
    if let Some(t) = args.t_int {
        c.t_int = t;
    }
    c.validate()?;
    let detected = c.photons / c.t_int;
    let plus = c.power_fraction_plus;
    for &d in &c.separations_um {
        println!(
            "d_um={} qcrb_um={} di_crb_um={} spade_model_um={} n_photons_hg01={}",
            format_value(d),
            format_value(qcrb(c.photons, c.waist_um)?),
            format_value(crb_direct_imaging(
                d,
                c.waist_um,
                plus * detected,
                (1.0 - plus) * detected,
                c.t_int
            )?),
            format_value(spade_sensitivity_model(
                d,
                c.waist_um,
                c.detector_flux(),
                c.t_int,
                &c.detector
            )?),
            photons_in_mode(d, c.waist_um, c.photons)?
        );
    }
    Ok(())
}

fn calibrate_cmd(common: &Common) -> Result<()> {
    let c = resolve(common, None, Regime::LowFlux)?;
    let curve = calibrate(&c, &c.streams()?, Execution::default())?;
    let g = two_source_curve(&c, &curve)?;
    let coeffs: Vec<String> = curve.coefficients_um().iter().map(|&v| format_value(v)).collect();
    println!(
        "degree={} range_um={}..{} residual_rms={} branch_end_um={} branch_capped={} coefficients={}",
        curve.degree(),
        format_value(curve.valid_range.0),
        format_value(curve.valid_range.1),
        format_value(curve.fit_residual_rms),
        format_value(g.branch_end),
        g.branch_capped,
        coeffs.join(",")
    );
    if let Some(dir) = &c.output_dir {
        write_json(&dir.join("calibration.json"), &curve)?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn estimate(common: &Common) -> Result<()> {
    let c = resolve(common, None, Regime::LowFlux)?;
    let streams = c.streams()?;
    let curve = two_source_curve(&c, &calibrate(&c, &streams, Execution::default())?)?;
    let mut records = Vec::new();
    for i in 0..c.separations_um.len() {
        let (record, est) =
            run_separation(&c, &curve, i, &streams, Execution::default()).map_err(|e| Error::AtSeparation {
                index: i,
                separation_um: c.separations_um[i],
                source: Box::new(e),
            })?;
        if est.degraded {
            eprintln!(
                "warning: d = {} um clamped in {:.1}% of windows",
                c.separations_um[i],
                100.0 * est.clamp_fraction
            );
        }
        println!(
            "{} d_hat_mean_ratio_um={}",
            summary(&record),
            format_value(est.d_hat_mean_ratio)
        );
        records.push(record);
    }
    write_outputs(&c, &records, "estimate", c.write_svg)
}

fn diff_measure(args: &DiffArgs) -> Result<()> {
    let mut c = resolve(&args.common, None, Regime::HighFlux)?;
    let streams = c.streams()?;
    let curve = two_source_curve(&c, &calibrate(&c, &streams, Execution::default())?)?;
    if let Some(m) = args.mismatch {
        c.waist_mismatch = m;
    }
    c.validate()?;
    let result = differential_measurement(
        &c.scene(args.start_um)?,
        &c.instrument()?,
        &curve,
        args.step_um,
        args.steps,
        &c.estimate_settings(),
        &streams,
    )?;
    for (k, (dx, r)) in result.displacements.iter().zip(&result.results).enumerate() {
        println!(
            "step={k} displacement_um={} d_ref_um={} d_ref_err_um={} d_hat_um={} d_sens_um={}",
            format_value(*dx),
            format_value(r.d_ref),
            format_value(r.d_ref_err),
            format_value(r.d_hat),
            format_value(r.d_sensitivity)
        );
    }
    let f = result.fit;
    println!(
        "slope={} slope_stderr={} intercept_um={} r_squared={} pooled_sens_um={}",
        format_value(f.slope),
        format_value(f.slope_stderr),
        format_value(f.intercept),
        format_value(f.r_squared),
        format_value(result.pooled_sensitivity())
    );
    if let Some(dir) = &c.output_dir {
        write_json(&dir.join("differential.json"), &result)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bounds(a) => bounds(&a),
        Command::Calibrate(c) => calibrate_cmd(&c),
        Command::Estimate(c) => estimate(&c),
        Command::Campaign(c) => {
            let config = resolve(&c, None, Regime::LowFlux)?;
            campaign(&config, "campaign", config.write_svg)
        }
        Command::ReproduceFig3(c) => {
            let mut c = c;
            c.out.get_or_insert_with(|| PathBuf::from("runs"));
            campaign(&resolve(&c, Some(Regime::LowFlux), Regime::LowFlux)?, "fig3", true)
        }
        Command::ReproduceFig4(c) => {
            let mut c = c;
            c.out.get_or_insert_with(|| PathBuf::from("runs"));
            campaign(&resolve(&c, Some(Regime::HighFlux), Regime::HighFlux)?, "fig4", true)
        }
        Command::DiffMeasure(a) => diff_measure(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
