//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or schema error, 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    corrected_spectrum, efficiency_spectrum, ps_predictive_model, BinEstimate, SpectralBin, SpectralResult,
};
use crate::error::{Error, Result};
use crate::fitting::{fit_two_step, FitModel, FitResult, ModelKind, NoiseCurve};
use crate::io;
use crate::paramp::CompressionCurve;
use crate::quanta::{from_db, Frequency};
use crate::sources::{sntj_limit, sntj_noise, SntjLimit, SourceKind, SourceModel};
use crate::synth::{default_sntj_biases, generate_spectrum, linspace, AcquisitionSettings, ChainModel, GroundTruth};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "noisecal", version, about = "Noise calibration of microwave amplification chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic noise curves from a scenario file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the acquisition seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Two-step fit of every curve in a curve file.
    Fit(FitArgs),
    /// Fits over a list of window half-widths.
    Sweep {
        #[command(flatten)]
        fit: FitArgs,
        /// Window half-widths in quanta, ascending.
        #[arg(long, value_delimiter = ',', required = true)]
        widths: Vec<f64>,
    },
    /// Junction noise and its closed-form limits over a bias list.
    Limits {
        #[arg(long)]
        frequency_hz: f64,
        #[arg(long)]
        t_e: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        bias: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Efficiency and reference-plane corrected spectra from fitted spectra.
    Report {
        /// Spectrum fitted at the source-side plane.
        #[arg(long)]
        near: Option<PathBuf>,
        /// Spectrum fitted after the loss.
        #[arg(long)]
        far: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Noise-curve CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// single_input, two_input, two_input_saturated or ps_quadrature.
    #[arg(long)]
    model: Option<String>,
    /// Window half-width in quanta.
    #[arg(long)]
    window: Option<f64>,
    /// Compression curve CSV; enables the saturation-corrected fit.
    #[arg(long)]
    lambda: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

/// Scenario for `simulate`. Exactly one of each list/grid pair may be
/// given; junction scenarios without setpoints use the default bias sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ChainModel,
    pub sources: Vec<SourceModel>,
    #[serde(default)]
    pub setpoints: Option<Vec<f64>>,
    #[serde(default)]
    pub setpoint_grid: Option<Grid>,
    #[serde(default)]
    pub frequencies_hz: Option<Vec<f64>>,
    #[serde(default)]
    pub frequency_grid: Option<Grid>,
    #[serde(default)]
    pub acquisition: Option<AcquisitionSettings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationConfig {
    pub n2_tilde: f64,
    pub g1_small_signal: f64,
}

/// Configuration for `fit` and `sweep`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub model: Option<FitModel>,
    #[serde(default)]
    pub saturation: Option<SaturationConfig>,
    /// Independently known system gain, for the slope-ratio check.
    #[serde(default)]
    pub reference_g_sys: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsModelConfig {
    pub m_gain_db: f64,
    pub g_sys_hemt_db: f64,
    pub n_sys_hemt: f64,
    pub m_noise: f64,
    pub points: usize,
}

/// Configuration for `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default = "default_loss_temperature")]
    pub loss_temperature_k: f64,
    #[serde(default)]
    pub ps_model: Option<PsModelConfig>,
}

fn default_loss_temperature() -> f64 {
    0.01
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            loss_temperature_k: default_loss_temperature(),
            ps_model: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulationRecord<'a> {
    model: &'a ChainModel,
    acquisition: Option<AcquisitionSettings>,
    curves: Vec<CurveFile>,
    ground_truth: Vec<GroundTruth>,
}

#[derive(Debug, Serialize)]
struct CurveFile {
    file: String,
    source: SourceModel,
}

#[derive(Debug, Serialize)]
struct ErrorReport {
    kind: &'static str,
    message: String,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        Self {
            kind: if e.is_numerical() { "numerical" } else { "input" },
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
struct FitEntry {
    frequency_hz: f64,
    result: Option<FitResult>,
    error: Option<ErrorReport>,
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn grid_or_list(list: &Option<Vec<f64>>, grid: &Option<Grid>, what: &str) -> Result<Option<Vec<f64>>> {
    match (list, grid) {
        (Some(_), Some(_)) => Err(Error::schema("scenario", format!("give either the {what} list or its grid, not both"))),
        (Some(v), None) => Ok(Some(v.clone())),
        (None, Some(g)) => Ok(Some(linspace(g.start, g.stop, g.points))),
        (None, None) => Ok(None),
    }
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let scenario: Scenario = io::read_json_file(config)?;
    if scenario.sources.is_empty() {
        return Err(Error::schema("scenario", "sources must not be empty"));
    }
    let freqs = grid_or_list(&scenario.frequencies_hz, &scenario.frequency_grid, "frequency")?
        .ok_or_else(|| Error::schema("scenario", "missing frequencies_hz or frequency_grid"))?;
    if freqs.is_empty() {
        return Err(Error::schema("scenario", "frequency list is empty"));
    }
    let freqs = freqs.into_iter().map(Frequency::new).collect::<Result<Vec<_>>>()?;
    let setpoints = match grid_or_list(&scenario.setpoints, &scenario.setpoint_grid, "setpoint")? {
        Some(s) => s,
        None if scenario.sources.iter().all(|s| s.kind() == SourceKind::Sntj) => default_sntj_biases(0.5),
        None => return Err(Error::schema("scenario", "resistor scenarios need setpoints")),
    };
    if setpoints.is_empty() {
        return Err(Error::schema("scenario", "setpoint list is empty"));
    }
    let mut acq = scenario.acquisition;
    if let (Some(a), Some(s)) = (acq.as_mut(), seed) {
        a.rng_seed = s;
    }

    io::create_dir(out)?;
    let mut files = Vec::new();
    for (i, source) in scenario.sources.iter().enumerate() {
        let curves = generate_spectrum(&scenario.model, source, &setpoints, &freqs, acq.as_ref())?;
        let name = format!("curves_{i}.csv");
        io::write_curves_file(&out.join(&name), &curves)?;
        files.push(CurveFile {
            file: name,
            source: *source,
        });
    }
    if let ChainModel::Saturated { compression, .. } = &scenario.model {
        let path = out.join("lambda.csv");
        let mut w = std::fs::File::create(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        compression.to_csv(&mut w)?;
    }
    let ground_truth = freqs
        .iter()
        .map(|&f| scenario.model.ground_truth(f))
        .collect::<Result<Vec<_>>>()?;
    io::write_json_file(
        &out.join("ground_truth.json"),
        &SimulationRecord {
            model: &scenario.model,
            acquisition: acq,
            curves: files,
            ground_truth,
        },
    )
}

struct FitSetup {
    curves: Vec<NoiseCurve>,
    model: FitModel,
    reference_g_sys: Option<f64>,
}

fn fit_setup(args: &FitArgs) -> Result<FitSetup> {
    let config: FitConfig = match &args.config {
        Some(p) => io::read_json_file(p)?,
        None => FitConfig::default(),
    };
    let kind = match &args.model {
        Some(s) => Some(ModelKind::parse(s).ok_or_else(|| Error::schema("--model", format!("unknown model {s:?}")))?),
        None => None,
    };
    let mut model = match (config.model, kind) {
        (Some(mut m), Some(k)) => {
            m.kind = k;
            m
        }
        (Some(m), None) => m,
        (None, Some(k)) => FitModel::new(k),
        (None, None) => return Err(Error::schema("fit", "no model given (use --model or the config's model)")),
    };
    if args.window.is_some() {
        model.window = args.window;
    }
    let mut curves = io::read_curves_file(&args.input)?;
    if let Some(path) = &args.lambda {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        let compression = CompressionCurve::from_csv(file)?;
        model.kind = ModelKind::TwoInputSaturated;
        if let Some(s) = config.saturation {
            crate::error::ensure_positive("small-signal gain", s.g1_small_signal)?;
            model.fixed.n2_over_g1 = Some(s.n2_tilde / s.g1_small_signal);
        }
        if model.fixed.n2_over_g1.is_none() {
            return Err(Error::schema(
                "fit",
                "the saturation-corrected fit needs saturation.{n2_tilde, g1_small_signal} or fixed.n2_over_g1",
            ));
        }
        curves = curves
            .into_iter()
            .map(|c| c.with_compression(&compression))
            .collect::<Result<_>>()?;
    } else if model.kind == ModelKind::TwoInputSaturated {
        return Err(Error::schema("fit", "the two_input_saturated model needs a compression curve (--lambda)"));
    }
    Ok(FitSetup {
        curves,
        model,
        reference_g_sys: config.reference_g_sys,
    })
}

fn slope_ratio_warning(result: &mut FitResult, reference: Option<f64>) {
    let Some(g_ref) = reference else { return };
    let ratio = result.g_sys / g_ref;
    if (ratio - 1.0).abs() > 0.05 {
        let hint = if result.model == ModelKind::SingleInput && (ratio / 2.0 - 1.0).abs() < 0.05 {
            "; a ratio near 2 means the chain adds an idler input and the two_input model applies"
        } else {
            ""
        };
        result
            .warnings
            .push(format!("slope ratio {ratio:.4} relative to the reference gain {g_ref}{hint}"));
    }
}

fn fit(args: &FitArgs) -> Result<i32> {
    let setup = fit_setup(args)?;
    let results: Vec<Result<FitResult>> = setup
        .curves
        .par_iter()
        .map(|c| {
            let mut r = fit_two_step(c, &setup.model)?;
            slope_ratio_warning(&mut r, setup.reference_g_sys);
            Ok(r)
        })
        .collect();

    io::create_dir(&args.out)?;
    let mut residual_rows = Vec::new();
    let mut bins = Vec::new();
    let mut entries = Vec::new();
    let mut code = EXIT_OK;
    for (curve, r) in setup.curves.iter().zip(results) {
        let frequency_hz = curve.frequency.hertz();
        match r {
            Ok(r) => {
                let idx = curve.window_indices(setup.model.window, r.v_offs);
                for (&i, res) in idx.iter().zip(&r.residuals) {
                    residual_rows.push(vec![frequency_hz.to_string(), curve.setpoints[i].to_string(), res.to_string()]);
                }
                for w in &r.warnings {
                    eprintln!("warning at {frequency_hz} Hz: {w}");
                }
                bins.push(SpectralBin {
                    frequency_hz,
                    estimate: Some(BinEstimate::from(&r)),
                    error: None,
                });
                entries.push(FitEntry {
                    frequency_hz,
                    result: Some(r),
                    error: None,
                });
            }
            Err(e) => {
                eprintln!("fit failed at {frequency_hz} Hz: {e}");
                if code == EXIT_OK {
                    code = exit_code(&e);
                }
                bins.push(SpectralBin {
                    frequency_hz,
                    estimate: None,
                    error: Some(e.to_string()),
                });
                entries.push(FitEntry {
                    frequency_hz,
                    result: None,
                    error: Some(ErrorReport::from(&e)),
                });
            }
        }
    }
    let spectrum = SpectralResult {
        model: setup.model.kind,
        bins,
    };
    io::write_json_file(&args.out.join("fit_results.json"), &entries)?;
    io::write_table_file(&args.out.join("residuals.csv"), &["frequency_hz", "setpoint", "residual"], &residual_rows)?;
    io::write_json_file(&args.out.join("spectrum.json"), &spectrum)?;
    io::write_table_file(&args.out.join("spectrum.csv"), &SpectralResult::CSV_HEADER, &spectrum.csv_rows())?;
    Ok(code)
}

fn sweep(args: &FitArgs, widths: &[f64]) -> Result<i32> {
    if widths.is_empty() || widths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::schema("--widths", "window widths must be non-empty and strictly ascending"));
    }
    let setup = fit_setup(args)?;
    let jobs: Vec<(usize, f64)> = (0..setup.curves.len())
        .flat_map(|i| widths.iter().map(move |&w| (i, w)))
        .collect();
    let results: Vec<Result<FitResult>> = jobs
        .par_iter()
        .map(|&(i, w)| fit_two_step(&setup.curves[i], &setup.model.clone().with_window(Some(w))))
        .collect();
    let mut rows = Vec::new();
    let mut code = EXIT_OK;
    for (&(i, w), r) in jobs.iter().zip(&results) {
        let f = setup.curves[i].frequency.hertz().to_string();
        rows.push(match r {
            Ok(r) => vec![
                f,
                w.to_string(),
                r.window.points.to_string(),
                r.g_sys.to_string(),
                r.noise.to_string(),
                r.n_sys.to_string(),
                r.standard_errors.noise.to_string(),
                String::new(),
            ],
            Err(e) => {
                if code == EXIT_OK {
                    code = exit_code(e);
                }
                vec![f, w.to_string(), String::new(), String::new(), String::new(), String::new(), String::new(), e.to_string()]
            }
        });
    }
    io::create_dir(&args.out)?;
    io::write_table_file(
        &args.out.join("window_sweep.csv"),
        &["frequency_hz", "half_width", "points", "g_sys", "noise", "n_sys", "noise_error", "error"],
        &rows,
    )?;
    Ok(code)
}

fn limits(frequency_hz: f64, t_e: f64, bias: &[f64], out: Option<&Path>) -> Result<()> {
    let f = Frequency::new(frequency_hz)?;
    let mut rows = Vec::new();
    for &v in bias {
        let mut row = vec![v.to_string(), sntj_noise(v, t_e, f)?.value().to_string()];
        for case in SntjLimit::ALL {
            row.push(match sntj_limit(v, t_e, f, case) {
                Ok(q) => q.value().to_string(),
                Err(Error::Precondition(_)) => String::new(),
                Err(e) => return Err(e),
            });
        }
        rows.push(row);
    }
    let header = ["bias_v", "exact", "zero_bias", "zero_frequency", "zero_temperature"];
    match out {
        Some(p) => io::write_table_file(p, &header, &rows),
        None => {
            println!("{}", header.join(","));
            for r in rows {
                println!("{}", r.join(","));
            }
            Ok(())
        }
    }
}

fn report(near: Option<&Path>, far: Option<&Path>, config: Option<&Path>, out: &Path) -> Result<()> {
    let config: ReportConfig = match config {
        Some(p) => io::read_json_file(p)?,
        None => ReportConfig::default(),
    };
    if near.is_none() && far.is_none() && config.ps_model.is_none() {
        return Err(Error::schema("report", "nothing to report: give --near/--far spectra or a ps_model config"));
    }
    io::create_dir(out)?;
    match (near, far) {
        (Some(n), Some(f)) => {
            let near: SpectralResult = io::read_json_file(n)?;
            let far: SpectralResult = io::read_json_file(f)?;
            let eff = efficiency_spectrum(&near, &far)?;
            let rows: Vec<Vec<String>> = eff
                .iter()
                .map(|b| {
                    let mut row = vec![b.frequency_hz.to_string()];
                    match b.estimate {
                        Some(e) => row.extend([e.eta.to_string(), e.insertion_loss_db.to_string(), e.exceeds_unity.to_string()]),
                        None => row.extend([String::new(), String::new(), String::new()]),
                    }
                    row
                })
                .collect();
            io::write_table_file(&out.join("efficiency.csv"), &["frequency_hz", "eta", "insertion_loss_db", "exceeds_unity"], &rows)?;
            if near.model == ModelKind::TwoInput {
                let corrected = corrected_spectrum(&near, &eff, config.loss_temperature_k)?;
                let rows: Vec<Vec<String>> = corrected
                    .iter()
                    .zip(&near.bins)
                    .map(|(c, b)| {
                        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
                        vec![
                            c.frequency_hz.to_string(),
                            opt(b.estimate.as_ref().map(|e| e.n_sys)),
                            opt(c.eta),
                            opt(c.g_sys),
                            opt(c.correction.map(|x| x.n_sys_ex)),
                            opt(c.correction.map(|x| x.n_sys)),
                            c.correction.map(|x| x.over_subtracted.to_string()).unwrap_or_default(),
                        ]
                    })
                    .collect();
                io::write_table_file(
                    &out.join("corrected.csv"),
                    &["frequency_hz", "n_sys_measured", "eta", "g_sys", "n_sys_ex", "n_sys", "over_subtracted"],
                    &rows,
                )?;
            }
        }
        (Some(_), None) | (None, Some(_)) => {
            return Err(Error::schema("report", "efficiency needs both --near and --far"));
        }
        (None, None) => {}
    }
    if let Some(ps) = config.ps_model {
        let alpha = linspace(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, ps.points.max(2));
        let p = ps_predictive_model(from_db(ps.m_gain_db), from_db(ps.g_sys_hemt_db), ps.n_sys_hemt, ps.m_noise, &alpha)?;
        let rows: Vec<Vec<String>> = (0..p.alpha.len())
            .map(|i| vec![p.alpha[i].to_string(), p.g_sys[i].to_string(), p.n_sys[i].to_string()])
            .collect();
        io::write_table_file(&out.join("ps_model.csv"), &["alpha", "g_sys", "n_sys"], &rows)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed).map(|_| EXIT_OK),
        Command::Fit(args) => fit(&args),
        Command::Sweep { fit, widths } => sweep(&fit, &widths),
        Command::Limits {
            frequency_hz,
            t_e,
            bias,
            out,
        } => limits(frequency_hz, t_e, &bias, out.as_deref()).map(|_| EXIT_OK),
        Command::Report { near, far, config, out } => {
            report(near.as_deref(), far.as_deref(), config.as_deref(), &out).map(|_| EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()) as u8)
}
