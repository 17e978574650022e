//! Command-line front end: `sweep`, `efov`, `fit-calibration`, `fit-scan`,
//! `afov` and `scan-sim` over a shared JSON config, with flag overrides
//! winning over file values.
//!
//! Exit codes: 0 success, 2 config error, 3 fit failure, 4 I/O error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::catalog::{self, CalibrationPreset, Lights};
use crate::config::RunConfig;
use crate::fitting::{
    fit_angular_scan, CalibrationFit, CalibrationSample, ScanContext, ScanFitResult, ScanSample,
};
use crate::geometry::RxMode;
use crate::sweep;
use crate::telecom::{efov_of_profile, ScanAxis};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "vlclink",
    version,
    about = "Traffic-light-to-vehicle VLC link simulator and analysis tool"
)]
pub struct Cli {
    /// JSON config file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_baud(s: &str) -> std::result::Result<u32, String> {
    match s {
        "115200" => Ok(115_200),
        "230400" => Ok(230_400),
        other => Err(format!("baud must be 115200 or 230400, got {other}")),
    }
}

fn parse_lights(s: &str) -> std::result::Result<Lights, String> {
    s.parse::<Lights>().map_err(|e| e.to_string())
}

fn parse_axis(s: &str) -> std::result::Result<ScanAxis, String> {
    match s.to_ascii_lowercase().as_str() {
        "horizontal" | "h" => Ok(ScanAxis::Horizontal),
        "vertical" | "v" => Ok(ScanAxis::Vertical),
        other => Err(format!("axis must be horizontal or vertical, got {other}")),
    }
}

/// Flags shared by the simulation commands; they override config values.
#[derive(Args, Debug, Clone, Default)]
pub struct SimFlags {
    /// Restrict to these lens labels (repeatable).
    #[arg(long = "lens")]
    pub lens: Vec<String>,
    /// Calibration baud rate.
    #[arg(long, value_parser = parse_baud)]
    pub baud: Option<u32>,
    /// Calibration light condition.
    #[arg(long, value_parser = parse_lights)]
    pub lights: Option<Lights>,
    /// PER threshold defining the EFOV.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Amplitude and PER over the road grid.
    Sweep {
        #[command(flatten)]
        flags: SimFlags,
    },
    /// Effective field of view versus distance for every lens.
    Efov {
        #[command(flatten)]
        flags: SimFlags,
    },
    /// Geometric angle of field of view per catalog lens.
    Afov {
        #[command(flatten)]
        flags: SimFlags,
    },
    /// Model amplitude curves over misalignment angle.
    ScanSim {
        #[command(flatten)]
        flags: SimFlags,
        #[arg(long, value_parser = parse_axis, default_value = "vertical")]
        axis: ScanAxis,
        /// Scan half-span, degrees.
        #[arg(long, default_value_t = 15.0)]
        span: f64,
        /// Scan step, degrees.
        #[arg(long, default_value_t = 0.1)]
        step: f64,
    },
    /// Fit (T, sigma) to a measured PER-vs-amplitude CSV
    /// (`amplitude_mV,amp_err_mV,per,per_err`).
    FitCalibration {
        csv: PathBuf,
        #[arg(long, value_parser = parse_baud, default_value = "115200")]
        baud: u32,
        #[arg(long, value_parser = parse_lights, default_value = "off")]
        lights: Lights,
        /// Packet length in bits.
        #[arg(long, default_value_t = 48)]
        n_bits: u32,
        /// Label for the written preset record.
        #[arg(long)]
        label: Option<String>,
        /// Write the fitted preset (JSON, loadable via presets_path).
        #[arg(long)]
        preset_out: Option<PathBuf>,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit an angular scan CSV (`phi_deg,amplitude_mV,amp_err_mV`) as
    /// direct signal plus a Gaussian reflection.
    FitScan {
        csv: PathBuf,
        /// Lens the scan was taken with.
        #[arg(long)]
        lens: String,
        /// Longitudinal distance of the scan position, metres.
        #[arg(long)]
        distance: f64,
        /// Lateral offset of the scan position, metres.
        #[arg(long, default_value_t = 0.0)]
        lateral: f64,
        #[arg(long)]
        threshold: Option<f64>,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Decomposed model curves at 0.1 degree steps (CSV).
        #[arg(long)]
        curves_out: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn apply_sim_flags(config: &mut RunConfig, flags: &SimFlags) {
    if !flags.lens.is_empty() {
        config.lenses = flags.lens.clone();
    }
    if let Some(baud) = flags.baud {
        config.calibration.baud = baud;
        config.calibration.preset = None;
    }
    if let Some(lights) = flags.lights {
        config.calibration.lights = lights;
        config.calibration.preset = None;
    }
    if let Some(threshold) = flags.threshold {
        config.threshold = threshold;
    }
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Run a parsed command line. Errors map to exit codes via
/// [`Error::exit_code`].
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Sweep { flags } => {
            let mut config = load_config(&cli.config)?;
            apply_sim_flags(&mut config, flags);
            emit(&sweep_csv(&config)?, &flags.out)
        }
        Command::Efov { flags } => {
            let mut config = load_config(&cli.config)?;
            apply_sim_flags(&mut config, flags);
            emit(&efov_csv(&config)?, &flags.out)
        }
        Command::Afov { flags } => {
            let mut config = load_config(&cli.config)?;
            apply_sim_flags(&mut config, flags);
            emit(&afov_csv(&config)?, &flags.out)
        }
        Command::ScanSim {
            flags,
            axis,
            span,
            step,
        } => {
            let mut config = load_config(&cli.config)?;
            apply_sim_flags(&mut config, flags);
            emit(&scan_sim_csv(&config, *axis, *span, *step)?, &flags.out)
        }
        Command::FitCalibration {
            csv,
            baud,
            lights,
            n_bits,
            label,
            preset_out,
            out,
        } => {
            let (report, preset) =
                fit_calibration_report(csv, *n_bits, *baud, *lights, label.as_deref())?;
            if let Some(path) = preset_out {
                let json =
                    serde_json::to_string_pretty(&vec![&preset]).expect("preset serializes");
                std::fs::write(path, json + "\n")?;
            }
            emit(&report, out)
        }
        Command::FitScan {
            csv,
            lens,
            distance,
            lateral,
            threshold,
            out,
            curves_out,
        } => {
            let mut config = load_config(&cli.config)?;
            if let Some(t) = threshold {
                config.threshold = *t;
            }
            let (report, curves) = fit_scan_report(&config, csv, lens, *distance, *lateral)?;
            if let Some(path) = curves_out {
                std::fs::write(path, curves)?;
            }
            emit(&report, out)
        }
    }
}

// ---- command bodies, callable without a process ----

pub fn sweep_csv(config: &RunConfig) -> Result<String> {
    let setup = config.resolve()?;
    let rows = sweep::run_sweep(&setup)?;
    Ok(sweep::render_sweep_csv(&rows, &setup))
}

pub fn efov_csv(config: &RunConfig) -> Result<String> {
    let setup = config.resolve()?;
    let rows = sweep::run_efov(&setup)?;
    Ok(sweep::render_efov_csv(&rows, &setup))
}

pub fn afov_csv(config: &RunConfig) -> Result<String> {
    let setup = config.resolve()?;
    let rows = sweep::run_afov(&setup)?;
    Ok(sweep::render_afov_csv(&rows, &setup))
}

pub fn scan_sim_csv(config: &RunConfig, axis: ScanAxis, span: f64, step: f64) -> Result<String> {
    let setup = config.resolve()?;
    let rows = sweep::run_scan_sim(&setup, axis, span, step)?;
    Ok(sweep::render_scan_sim_csv(&rows, &setup))
}

fn csv_error(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::CsvFormat {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn open_csv(path: &Path, columns: &[&str]) -> Result<(csv::Reader<std::fs::File>, Vec<usize>)> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut indices = Vec::with_capacity(columns.len());
    for name in columns {
        let idx = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| csv_error(path, format!("missing column '{name}'")))?;
        indices.push(idx);
    }
    Ok((reader, indices))
}

fn parse_rows<T>(
    path: &Path,
    columns: &[&str],
    build: impl Fn(&[f64]) -> T,
) -> Result<Vec<T>> {
    let (mut reader, indices) = open_csv(path, columns)?;
    let mut rows = Vec::new();
    let mut fields = vec![0.0; columns.len()];
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, format!("row {}: {e}", n + 2)))?;
        for (slot, (&idx, name)) in fields.iter_mut().zip(indices.iter().zip(columns)) {
            let raw = record.get(idx).unwrap_or("");
            *slot = raw.parse::<f64>().map_err(|_| {
                csv_error(path, format!("row {}: column '{name}': bad number '{raw}'", n + 2))
            })?;
        }
        rows.push(build(&fields));
    }
    if rows.is_empty() {
        return Err(csv_error(path, "no data rows"));
    }
    Ok(rows)
}

/// Parse a calibration CSV (`amplitude_mV,amp_err_mV,per,per_err`).
pub fn read_calibration_csv(path: &Path) -> Result<Vec<CalibrationSample>> {
    parse_rows(
        path,
        &["amplitude_mV", "amp_err_mV", "per", "per_err"],
        |f| CalibrationSample {
            amplitude_mv: f[0],
            amp_err_mv: f[1],
            per: f[2],
            per_err: f[3],
        },
    )
}

/// Parse an angular-scan CSV (`phi_deg,amplitude_mV,amp_err_mV`).
pub fn read_scan_csv(path: &Path) -> Result<Vec<ScanSample>> {
    parse_rows(path, &["phi_deg", "amplitude_mV", "amp_err_mV"], |f| {
        ScanSample {
            phi_deg: f[0],
            amplitude_mv: f[1],
            amp_err_mv: f[2],
        }
    })
}

fn fit_calibration_report(
    csv: &Path,
    n_bits: u32,
    baud: u32,
    lights: Lights,
    label: Option<&str>,
) -> Result<(String, CalibrationPreset)> {
    let samples = read_calibration_csv(csv)?;
    let fit = crate::fitting::fit_calibration(&samples, n_bits)?;
    let label = label
        .map(str::to_string)
        .unwrap_or_else(|| format!("fit-lights-{}-{}", lights.label(), baud));
    let preset = CalibrationPreset {
        label,
        baud,
        n_bits,
        t_mv: fit.t_mv,
        sigma_mv: fit.sigma_mv,
        lights,
    };
    Ok((
        render_calibration_report(csv, &samples, &fit, &preset),
        preset,
    ))
}

fn render_calibration_report(
    csv: &Path,
    samples: &[CalibrationSample],
    fit: &CalibrationFit,
    preset: &CalibrationPreset,
) -> String {
    let sd = fit.std_devs();
    let mut out = String::new();
    out.push_str(&format!(
        "# vlclink v{} fit-calibration {}\n",
        crate::VERSION,
        csv.display()
    ));
    out.push_str(&format!("samples: {}\n", samples.len()));
    out.push_str(&format!(
        "n_bits: {}\nbaud: {}\nlights: {}\n",
        preset.n_bits,
        preset.baud,
        preset.lights.label()
    ));
    out.push_str(&format!("T_mV: {:.9e} +/- {:.3e}\n", fit.t_mv, sd[0]));
    out.push_str(&format!(
        "sigma_mV: {:.9e} +/- {:.3e}\n",
        fit.sigma_mv, sd[1]
    ));
    out.push_str("covariance: # rows/cols: T, sigma\n");
    for row in &fit.covariance {
        out.push_str(&format!("  {:.6e} {:.6e}\n", row[0], row[1]));
    }
    out.push_str(&format!("residual_rms: {:.6e}\n", fit.residual_rms));
    out.push_str(&format!("weighted_cost: {:.6e}\n", fit.cost));
    out.push_str(&format!("iterations: {}\n", fit.iterations));
    out.push_str("per_sample: amplitude_mV,per,per_model,residual\n");
    let curve = preset.curve();
    for s in samples {
        let model = crate::telecom::packet_error_rate(s.amplitude_mv, &curve).per;
        out.push_str(&format!(
            "  {:.6},{:.6e},{:.6e},{:.6e}\n",
            s.amplitude_mv,
            s.per,
            model,
            model - s.per
        ));
    }
    out
}

fn fit_scan_report(
    config: &RunConfig,
    csv: &Path,
    lens_label: &str,
    distance_m: f64,
    lateral_m: f64,
) -> Result<(String, String)> {
    let setup = config.resolve()?;
    let lens = catalog::find_lens(&setup.lenses, lens_label)
        .or_else(|_| catalog::find_lens(catalog::builtin_lenses(), lens_label))?
        .clone();
    let samples = read_scan_csv(csv)?;
    let scene = setup.scene_at(distance_m, lateral_m, RxMode::Optimal);
    let ctx = ScanContext {
        lens: &lens,
        pd: &setup.pd,
        src: &setup.src,
        pattern: &setup.pattern,
        scene: &scene,
    };
    let fit = fit_angular_scan(&samples, &ctx)?;

    // EFOV of the reflection-free direct component, per the configured
    // calibration and threshold
    let direct_efov = efov_of_profile(
        |phi| fit.direct_at(phi),
        fit.phi2_deg(),
        &setup.curve,
        setup.threshold,
    );

    let mut report = String::new();
    report.push_str(&format!(
        "# vlclink v{} fit-scan {} lens={} distance_m={:.3} lateral_m={:.3}\n",
        crate::VERSION,
        csv.display(),
        lens.label,
        distance_m,
        lateral_m
    ));
    let sd = fit.param_std_devs();
    report.push_str(&format!("samples: {}\n", samples.len()));
    report.push_str(&format!("scale: {:.9e} +/- {:.3e}\n", fit.scale, sd[0]));
    report.push_str(&format!(
        "image_radius_mm: {:.9e} +/- {:.3e}\n",
        fit.image_radius_mm, sd[1]
    ));
    report.push_str(&format!(
        "gauss_height_mV: {:.9e} +/- {:.3e}\n",
        fit.gauss.height_mv, sd[2]
    ));
    report.push_str(&format!(
        "gauss_center_deg: {:.9e} +/- {:.3e}\n",
        fit.gauss.center_deg, sd[3]
    ));
    report.push_str(&format!(
        "gauss_width_deg: {:.9e} +/- {:.3e}\n",
        fit.gauss.width_deg, sd[4]
    ));
    report.push_str(&format!(
        "baseline_mV: {:.9e} +/- {:.3e}\n",
        fit.gauss.baseline_mv, sd[5]
    ));
    report.push_str(&format!("residual_rms_mV: {:.6e}\n", fit.residual_rms_mv));
    report.push_str(&format!("phi2_deg: {:.6}\n", fit.phi2_deg()));
    report.push_str(&format!(
        "efov_direct_deg: {}\n",
        match direct_efov.width_deg() {
            Some(w) if w > 0.0 => format!("{w:.4}"),
            _ => String::new(),
        }
    ));
    report.push_str(&format!("iterations: {}\n", fit.iterations));
    report.push_str(
        "covariance: # rows/cols: scale, radius, height, center, width, baseline\n",
    );
    for row in &fit.covariance {
        report.push_str("  ");
        report.push_str(
            &row.iter()
                .map(|v| format!("{v:.6e}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        report.push('\n');
    }

    Ok((report, render_scan_curves(&samples, &fit)))
}

/// Decomposed model curves at 0.1 degree steps across the sampled range.
fn render_scan_curves(samples: &[ScanSample], fit: &ScanFitResult) -> String {
    let lo = samples.iter().map(|s| s.phi_deg).fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .map(|s| s.phi_deg)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = String::from("phi_deg,total_mV,direct_mV,reflection_mV\n");
    let steps = ((hi - lo) / 0.1).round() as i64;
    for k in 0..=steps {
        let phi = lo + 0.1 * k as f64;
        out.push_str(&format!(
            "{:.4},{:.6e},{:.6e},{:.6e}\n",
            phi,
            fit.total_at(phi),
            fit.direct_at(phi),
            fit.reflection_at(phi)
        ));
    }
    out
}
