//! One function per verb. Every output file is written atomically and every
//! run leaves a JSON manifest carrying the config hash.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use pnrtomo::fitting::{fit_gaussian_with, parameter_table, FitOptions, GaussianModel, TableRow};
use pnrtomo::fockspace::ComplexAmplitude;
use pnrtomo::fsutil::atomic_write;
use pnrtomo::pulse_pipeline::export::{
    height_histogram_csv, photon_histogram_csv, read_counts, write_counts, write_events,
};
use pnrtomo::pulse_pipeline::{
    photon_histogram, process_packet, CalibrationConfig, HeightHistogram, QuantizationThresholds,
    ThresholdSource,
};
use pnrtomo::tes_sim::{read_packet, write_packet, PacketHeader, PACKET_SAMPLES, SAMPLE_RATE};
use pnrtomo::tomography::{
    assemble_grid, estimate_point, interpolate_polar, point_packet, run_scan_with,
    scan_point_statistics, ScanManifest, ScanMode, TraceSettings, WignerGrid,
};

use crate::config::{hex, ExperimentConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(pnrtomo::Error::from)?;
    atomic_write(path, &bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| pnrtomo::Error::Format(format!("{}: {e}", path.display())).into())
}

/// Writes the effective configuration so the run can be repeated from it.
fn write_effective_config(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let text = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let path = out.join("config.toml");
    atomic_write(&path, text.as_bytes())
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn check_packet_length(trace: &TraceSettings) -> Result<()> {
    if trace.packet_samples != PACKET_SAMPLES {
        return Err(CliError::Config(format!(
            "packet files hold exactly {PACKET_SAMPLES} samples; options.trace.packet_samples is {}",
            trace.packet_samples
        )));
    }
    Ok(())
}

fn point_stem(index: usize) -> String {
    format!("point_{index:05}")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PacketEntry {
    pub file: String,
    pub photons: u64,
    pub saturated: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateManifest {
    pub config_hash: String,
    pub scan: bool,
    pub seed: u64,
    pub packets: Vec<PacketEntry>,
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path, scan: bool) -> Result<SimulateManifest> {
    let trace = &cfg.options.trace;
    check_packet_length(trace)?;
    let source = cfg.source_state()?;
    let hash = cfg.hash();
    let (seed, n, dir) = if scan {
        let ScanMode::FullTrace { seed } = cfg.mode else {
            return Err(CliError::Config(
                "simulate --scan needs mode.kind = \"full_trace\"".into(),
            ));
        };
        (seed, cfg.geometry.len(), out.join("packets"))
    } else {
        (cfg.simulate.seed, cfg.simulate.packets, out.to_path_buf())
    };
    let fixed = if scan {
        None
    } else {
        let beta = ComplexAmplitude::from_alpha(num_complex::Complex64::new(
            cfg.simulate.probe_q,
            cfg.simulate.probe_p,
        ));
        Some(
            source
                .detected(beta, &cfg.model, cfg.options.working_cutoff)
                .map_err(CliError::invalid)?,
        )
    };
    let one = |i: usize| -> Result<PacketEntry> {
        let stats = match &fixed {
            Some(s) => s.clone(),
            None => scan_point_statistics(&source, &cfg.geometry, &cfg.model, &cfg.options, i)
                .map_err(CliError::invalid)?,
        };
        let (arrivals, packet) = point_packet(&stats, trace, seed, i)?;
        let mut header = PacketHeader::new(
            SAMPLE_RATE,
            trace.readout.baseline,
            trace.readout.noise_rms,
            seed,
        );
        header.kernel = Some(trace.kernel);
        header.saturated = packet.saturated();
        header.config_hash = Some(hash.clone());
        header.arrivals = Some(arrivals.arrivals().to_vec());
        let name = if scan {
            point_stem(i)
        } else {
            format!("packet_{i:04}")
        };
        let path = dir.join(format!("{name}.bin"));
        write_packet(&path, &packet, &header)?;
        Ok(PacketEntry {
            file: path.file_name().unwrap().to_string_lossy().into_owned(),
            photons: arrivals.total_photons(),
            saturated: packet.saturated(),
        })
    };
    let packets = (0..n)
        .into_par_iter()
        .map(one)
        .collect::<Result<Vec<_>>>()?;
    let manifest = SimulateManifest {
        config_hash: hash,
        scan,
        seed,
        packets,
    };
    write_effective_config(out, cfg)?;
    write_json(&out.join("simulate.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Midpoints between multiples of the configured one-photon height.
    Linear,
    /// Valleys of each packet's own height histogram.
    Histogram,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProcessSummary {
    pub packet: String,
    pub settings_hash: String,
    pub packet_config_hash: Option<String>,
    pub threshold_mode: ThresholdMode,
    pub thresholds: QuantizationThresholds,
    pub events: usize,
    pub photons: u64,
    pub overflow_events: usize,
    pub bins: usize,
    pub overflow_bins: usize,
    pub saturated: bool,
    /// Photon count recorded in the packet header, when the packet is synthetic.
    pub true_photons: Option<u64>,
}

pub fn process(
    packets: &[PathBuf],
    trace: &TraceSettings,
    mode: ThresholdMode,
    out: &Path,
) -> Result<Vec<ProcessSummary>> {
    if packets.is_empty() {
        return Err(CliError::Config("no packet files given".into()));
    }
    let settings = serde_json::to_vec(&(trace, mode)).map_err(pnrtomo::Error::from)?;
    let settings_hash = hex(&Sha256::digest(&settings));
    let source = match mode {
        ThresholdMode::Linear => trace.threshold_source(),
        ThresholdMode::Histogram => ThresholdSource::Histogram(CalibrationConfig::default()),
    };
    packets
        .par_iter()
        .map(|path| {
            let (packet, header) = read_packet(path)?;
            let result = process_packet(&packet, &trace.pipeline, &source)?;
            let stem = path
                .file_stem()
                .ok_or_else(|| CliError::Config(format!("{} has no file name", path.display())))?
                .to_string_lossy()
                .into_owned();
            let file = |suffix: &str| out.join(format!("{stem}.{suffix}"));
            write_events(&file("events.csv"), &result.events, &result.photons)?;
            write_counts(&file("counts.csv"), &result.counts)?;
            let dist = photon_histogram(&result.counts, trace.pipeline.cutoff)?;
            let io = |p: PathBuf, bytes: Vec<u8>| {
                atomic_write(&p, &bytes)
                    .map_err(|e| CliError::io(format!("writing {}", p.display()), e))
            };
            io(file("photons.csv"), photon_histogram_csv(&dist)?)?;
            if !result.events.is_empty() {
                let heights: Vec<f64> = result.events.iter().map(|e| e.peak_height).collect();
                let hist = match &result.calibration {
                    Some(c) => c.histogram.clone(),
                    None => HeightHistogram::build(&heights, CalibrationConfig::default().bins),
                };
                io(file("heights.csv"), height_histogram_csv(&hist)?)?;
            }
            let summary = ProcessSummary {
                packet: path.display().to_string(),
                settings_hash: settings_hash.clone(),
                packet_config_hash: header.config_hash.clone(),
                threshold_mode: mode,
                thresholds: result.thresholds.clone(),
                events: result.events.len(),
                photons: result.photons.iter().map(|p| p.unwrap_or(0) as u64).sum(),
                overflow_events: result.photons.iter().filter(|p| p.is_none()).count(),
                bins: result.counts.len(),
                overflow_bins: result.counts.overflow_bins(),
                saturated: packet.saturated(),
                true_photons: header
                    .arrivals
                    .as_ref()
                    .map(|a| a.iter().map(|x| x.multiplicity as u64).sum()),
            };
            write_json(&file("process.json"), &summary)?;
            Ok(summary)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GridManifest {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub scan: ScanManifest,
    /// Directory of per-point counts the grid was assembled from.
    pub from_counts: Option<String>,
}

pub fn grid_manifest_path(grid: &Path) -> PathBuf {
    let stem = grid.file_stem().unwrap_or_default().to_string_lossy();
    grid.with_file_name(format!("{stem}.manifest.json"))
}

/// Grid from per-point counts written by `process` on `simulate --scan`
/// packets.
fn grid_from_counts(cfg: &ExperimentConfig, dir: &Path) -> Result<WignerGrid> {
    let estimates = (0..cfg.geometry.len())
        .into_par_iter()
        .map(|i| {
            let stem = point_stem(i);
            let series = read_counts(&dir.join(format!("{stem}.counts.csv")))?;
            let summary: ProcessSummary = read_json(&dir.join(format!("{stem}.process.json")))?;
            let mut est = estimate_point(&series, cfg.options.cutoff, cfg.options.overflow_limit);
            est.flagged |= summary.saturated;
            Ok(est)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_grid(cfg.geometry, &estimates)?)
}

pub fn scan(
    cfg: &ExperimentConfig,
    out: &Path,
    from_counts: Option<&Path>,
    surface: Option<(usize, usize)>,
) -> Result<GridManifest> {
    let source = cfg.source_state()?;
    let grid = match from_counts {
        Some(dir) => {
            if !matches!(cfg.mode, ScanMode::FullTrace { .. }) {
                return Err(CliError::Config(
                    "--from-counts assembles a full_trace scan; set mode.kind = \"full_trace\""
                        .into(),
                ));
            }
            grid_from_counts(cfg, dir)?
        }
        None => run_scan_with(&source, &cfg.geometry, &cfg.model, cfg.mode, &cfg.options)
            .map_err(CliError::invalid)?,
    };
    let hash = cfg.hash();
    let mut scan = ScanManifest::new(&source, &cfg.model, cfg.mode, &cfg.options, &grid);
    scan.config_hash = Some(hash.clone());
    let manifest = GridManifest {
        config_hash: hash,
        config: cfg.clone(),
        scan,
        from_counts: from_counts.map(|d| d.display().to_string()),
    };
    let grid_path = out.join("grid.csv");
    grid.write_csv(&grid_path)?;
    if let Some((n_amp, n_phase)) = surface {
        let s = interpolate_polar(&grid, n_amp, n_phase)?;
        let p = out.join("surface.csv");
        atomic_write(&p, &s.to_csv()?)
            .map_err(|e| CliError::io(format!("writing {}", p.display()), e))?;
    }
    write_effective_config(out, cfg)?;
    write_json(&grid_manifest_path(&grid_path), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub grid: String,
    pub config_hash: Option<String>,
    pub model: GaussianModel,
    pub errors: pnrtomo::fitting::StandardErrors,
    pub amplitude: f64,
    pub r_squared: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
    pub n_points: usize,
    pub flagged_points: usize,
    pub weighted: bool,
}

fn load_grid(path: &Path, overflow_limit: f64) -> Result<(WignerGrid, Option<GridManifest>)> {
    let grid = WignerGrid::read_csv(path, overflow_limit)?;
    let mpath = grid_manifest_path(path);
    let manifest = if mpath.exists() {
        Some(read_json(&mpath)?)
    } else {
        None
    };
    Ok((grid, manifest))
}

fn fit_and_summarize(
    path: &Path,
    grid: &WignerGrid,
    config_hash: Option<String>,
    weighted: bool,
    out: &Path,
) -> Result<(pnrtomo::fitting::FitResult, FitSummary)> {
    let opts = FitOptions {
        weighted,
        ..FitOptions::default()
    };
    let fit = fit_gaussian_with(grid, &opts)?;
    fit.write_residuals(&out.join("residuals.csv"))?;
    let summary = FitSummary {
        grid: path.display().to_string(),
        config_hash,
        model: fit.model,
        errors: fit.errors,
        amplitude: fit.amplitude(),
        r_squared: fit.r_squared,
        reduced_chi2: fit.reduced_chi2,
        iterations: fit.iterations,
        n_points: fit.n_points,
        flagged_points: grid.flagged_count(),
        weighted,
    };
    Ok((fit, summary))
}

pub fn fit(path: &Path, weighted: bool, overflow_limit: f64, out: &Path) -> Result<FitSummary> {
    let (grid, manifest) = load_grid(path, overflow_limit)?;
    let (_, summary) =
        fit_and_summarize(path, &grid, manifest.map(|m| m.config_hash), weighted, out)?;
    write_json(&out.join("fit.json"), &summary)?;
    Ok(summary)
}

/// Values from the reference measurement in the detector regime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub closed_form_peak: f64,
    pub closed_form_centre: f64,
    /// `(value, error)` pairs of the reference fit.
    pub fit_b: (f64, f64),
    pub fit_m: (f64, f64),
    pub fit_beta0: (f64, f64),
    pub r_squared: f64,
    /// Mode overlap quoted alongside that measurement.
    pub stated_overlap: f64,
}

pub const REFERENCE: ReferenceValues = ReferenceValues {
    closed_form_peak: 0.867,
    closed_form_centre: 1.597,
    fit_b: (0.877, 0.010),
    fit_m: (1.72, 0.03),
    fit_beta0: (1.552, 0.006),
    r_squared: 0.966,
    stated_overlap: 0.97,
};

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub grid: String,
    pub config_hash: String,
    pub source: String,
    pub model: pnrtomo::tomography::ExperimentModel,
    /// `V = v/(2 − v)`.
    pub overlap: f64,
    pub points: usize,
    pub flagged_points: usize,
    pub fit: Option<FitSummary>,
    pub table: Vec<TableRow>,
    /// Fit minus theory in standard errors, per table row.
    pub z_scores: Vec<Option<f64>>,
    pub reference: Option<ReferenceValues>,
    pub note: Option<String>,
}

pub fn report(
    path: &Path,
    config: Option<ExperimentConfig>,
    weighted: bool,
    out: &Path,
) -> Result<Report> {
    let (grid_probe, manifest) = load_grid(path, f64::INFINITY)?;
    let cfg = match (config, manifest) {
        (Some(c), _) => c,
        (None, Some(m)) => m.config,
        (None, None) => {
            return Err(CliError::Config(format!(
                "{} has no manifest; pass --config",
                path.display()
            )))
        }
    };
    drop(grid_probe);
    let (grid, _) = load_grid(path, cfg.options.overflow_limit)?;
    let source = cfg.source_state()?;
    let mut report = Report {
        grid: path.display().to_string(),
        config_hash: cfg.hash(),
        source: source.kind().into(),
        model: cfg.model,
        overlap: cfg.model.overlap(),
        points: grid.points.len(),
        flagged_points: grid.flagged_count(),
        fit: None,
        table: Vec::new(),
        z_scores: Vec::new(),
        reference: None,
        note: None,
    };
    match cfg.gaussian_alpha0()? {
        Some(alpha0) => {
            let theory = GaussianModel::from_theory(alpha0, &cfg.model);
            let (fit, summary) =
                fit_and_summarize(path, &grid, Some(report.config_hash.clone()), weighted, out)?;
            report.table = parameter_table(&fit, Some(&theory));
            report.z_scores = report
                .table
                .iter()
                .map(|r| r.theory.map(|t| (r.fit - t) / r.fit_error))
                .collect();
            report.fit = Some(summary);
            if matches!(source, pnrtomo::tomography::SourceState::Coherent { .. }) {
                report.reference = Some(REFERENCE);
            }
        }
        None => {
            report.note = Some(format!(
                "{} surfaces are not Gaussian; the grid is reported without a fit",
                source.kind()
            ));
        }
    }
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

pub fn render_report(r: &Report) -> String {
    let mut s = format!(
        "source {}  points {} ({} flagged)  eta {}  v {}  t2 {}  V {:.5}\n",
        r.source, r.points, r.flagged_points, r.model.eta, r.model.v, r.model.t2, r.overlap
    );
    if let Some(f) = &r.fit {
        s += &format!(
            "R2 {:.4}  reduced chi2 {:.3e}  iterations {}\n",
            f.r_squared, f.reduced_chi2, f.iterations
        );
        s += &format!(
            "{:<10}{:>12}{:>12}{:>12}{:>8}\n",
            "parameter", "fit", "error", "theory", "z"
        );
        for (row, z) in r.table.iter().zip(&r.z_scores) {
            s += &format!(
                "{:<10}{:>12.5}{:>12.5}{:>12}{:>8}\n",
                row.parameter,
                row.fit,
                row.fit_error,
                row.theory.map_or("-".into(), |t| format!("{t:.5}")),
                z.map_or("-".into(), |z| format!("{z:.2}")),
            );
        }
    }
    if let Some(rf) = &r.reference {
        s += &format!(
            "reference: closed form {} exp(-2|beta - {}|^2); fit b {}({}) m {}({}) |beta0| {}({}); R2 {}; stated V {}\n",
            rf.closed_form_peak,
            rf.closed_form_centre,
            rf.fit_b.0,
            rf.fit_b.1,
            rf.fit_m.0,
            rf.fit_m.1,
            rf.fit_beta0.0,
            rf.fit_beta0.1,
            rf.r_squared,
            rf.stated_overlap
        );
    }
    if let Some(n) = &r.note {
        s += n;
        s.push('\n');
    }
    s
}
