use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

use super::{DetectedStatistics, ExperimentModel, ScanGeometry, SourceState};
use crate::error::{Error, Result};
use crate::fockspace::ComplexAmplitude;
use crate::fsutil::atomic_write;
use crate::pulse_pipeline::{
    process_packet, CountSeries, PipelineConfig, QuantizationThresholds, ThresholdSource,
};
use crate::rng::stream_rng;
use crate::tes_sim::{
    packet_duration, sample_arrivals_with, synthesize_trace, ArrivalModel, ArrivalRecord,
    PulseKernel, Readout, TracePacket, DETECTOR_CUTOFF, PACKET_SAMPLES, SAMPLE_RATE,
};

/// Points whose overflowed-bin fraction exceeds this are flagged.
pub const DEFAULT_OVERFLOW_LIMIT: f64 = 1e-3;
pub const GRID_CSV_HEADER: &str = "amp_index,phase_index,q,p,W,n_bins,overflow_fraction";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScanMode {
    /// Exact parity of the detected statistics.
    Analytic,
    /// `bins` independent counting bins drawn from the detected statistics.
    MonteCarlo { bins: usize, seed: u64 },
    /// A synthesized detector packet per point, run through the pipeline.
    FullTrace { seed: u64 },
}

/// Detector and pipeline used by [`ScanMode::FullTrace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSettings {
    pub kernel: PulseKernel,
    pub readout: Readout,
    pub pipeline: PipelineConfig,
    pub packet_samples: usize,
    /// Fixed boundaries; linear multiples of the one-photon height if absent.
    #[serde(default)]
    pub thresholds: Option<QuantizationThresholds>,
}

impl Default for TraceSettings {
    fn default() -> Self {
        Self {
            kernel: PulseKernel::default(),
            readout: Readout::default(),
            pipeline: PipelineConfig::default(),
            packet_samples: PACKET_SAMPLES,
            thresholds: None,
        }
    }
}

impl TraceSettings {
    pub fn threshold_source(&self) -> ThresholdSource {
        match &self.thresholds {
            Some(t) => ThresholdSource::Manual(t.clone()),
            None => ThresholdSource::Linear,
        }
    }
}

/// Acquisition schedule. It only times the scan; no step waits on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanTiming {
    /// Amplitude-modulator settling per circle, seconds.
    pub settle: f64,
    /// Acquisition per point, seconds.
    pub packet: f64,
    /// Phase switching per point, seconds.
    pub switching: f64,
}

impl Default for ScanTiming {
    fn default() -> Self {
        Self {
            settle: 2.0,
            packet: packet_duration(),
            switching: 0.01,
        }
    }
}

impl ScanTiming {
    /// Start of acquisition of point `index` (circle-by-circle order).
    pub fn point_time(&self, geom: &ScanGeometry, index: usize) -> f64 {
        let circle = index / geom.n_phase;
        let within = index % geom.n_phase;
        (circle + 1) as f64 * self.settle
            + (circle * geom.n_phase + within) as f64 * (self.packet + self.switching)
            + self.switching
    }

    pub fn total(&self, geom: &ScanGeometry) -> f64 {
        geom.n_amplitude as f64 * self.settle + geom.len() as f64 * (self.packet + self.switching)
    }
}

/// Slow random walk of the signal phase over the scan, `diffusion` in rad²/s.
/// Illustrative only; no drift magnitude is known for a real setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDrift {
    pub diffusion: f64,
    pub seed: u64,
}

impl PhaseDrift {
    /// Signal phase offset at each point.
    pub fn phases(&self, geom: &ScanGeometry, timing: &ScanTiming) -> Vec<f64> {
        let mut rng = stream_rng(self.seed, u64::MAX);
        let mut phi = 0.0;
        let mut last = 0.0;
        (0..geom.len())
            .map(|i| {
                let t = timing.point_time(geom, i);
                let z: f64 = StandardNormal.sample(&mut rng);
                phi += (self.diffusion * (t - last)).sqrt() * z;
                last = t;
                phi
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanOptions {
    /// Largest photon number the detector resolves.
    pub cutoff: usize,
    /// Fock-space size for raw-state numerics.
    pub working_cutoff: usize,
    pub overflow_limit: f64,
    pub parallel: bool,
    pub timing: ScanTiming,
    #[serde(default)]
    pub drift: Option<PhaseDrift>,
    pub trace: TraceSettings,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            cutoff: DETECTOR_CUTOFF,
            working_cutoff: 60,
            overflow_limit: DEFAULT_OVERFLOW_LIMIT,
            parallel: true,
            timing: ScanTiming::default(),
            drift: None,
            trace: TraceSettings::default(),
        }
    }
}

/// Parity estimate from one point's counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub w: f64,
    pub n_bins: u64,
    pub overflow_fraction: f64,
    pub flagged: bool,
}

/// `W = Σ_{n ≤ cutoff} (−1)ⁿ cₙ / (bins without overflow)`.
pub fn estimate_point(series: &CountSeries, cutoff: usize, overflow_limit: f64) -> PointEstimate {
    let mut signed = 0i64;
    let mut valid = 0u64;
    for (&c, &o) in series.counts.iter().zip(&series.overflow) {
        if o || c as usize > cutoff {
            continue;
        }
        valid += 1;
        signed += if c % 2 == 0 { 1 } else { -1 };
    }
    let n = series.counts.len() as u64;
    let overflow_fraction = if n == 0 {
        1.0
    } else {
        (n - valid) as f64 / n as f64
    };
    PointEstimate {
        w: if valid == 0 {
            0.0
        } else {
            signed as f64 / valid as f64
        },
        n_bins: n,
        overflow_fraction,
        flagged: valid == 0 || overflow_fraction > overflow_limit,
    }
}

/// One scan point. `beta` is the probe in detected units: columns `q`, `p`
/// of the exported grid are `Re β` and `Im β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub amp_index: usize,
    pub phase_index: usize,
    pub beta: ComplexAmplitude,
    pub w: f64,
    /// Counting bins behind the estimate; zero for analytic points.
    pub n_bins: u64,
    pub overflow_fraction: f64,
    pub flagged: bool,
}

impl GridPoint {
    pub fn q(&self) -> f64 {
        self.beta.alpha().re
    }

    pub fn p(&self) -> f64 {
        self.beta.alpha().im
    }

    /// Probe amplitude before detection loss, `α = β/√η`.
    pub fn probe_alpha(&self, eta: f64) -> ComplexAmplitude {
        self.beta.scale(1.0 / eta.sqrt())
    }

    /// Statistical error `√((1 − W²)/bins)` of a sampled point.
    pub fn sigma(&self) -> Option<f64> {
        let valid = (self.n_bins as f64 * (1.0 - self.overflow_fraction)).round();
        (valid > 0.0).then(|| ((1.0 - self.w * self.w).max(0.0) / valid).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub geometry: ScanGeometry,
    pub points: Vec<GridPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    amp_index: usize,
    phase_index: usize,
    q: f64,
    p: f64,
    #[serde(rename = "W")]
    w: f64,
    n_bins: u64,
    overflow_fraction: f64,
}

impl WignerGrid {
    pub fn get(&self, amp_index: usize, phase_index: usize) -> Option<&GridPoint> {
        self.points
            .get(amp_index * self.geometry.n_phase + phase_index)
    }

    pub fn usable(&self) -> impl Iterator<Item = &GridPoint> {
        self.points.iter().filter(|p| !p.flagged)
    }

    pub fn flagged_count(&self) -> usize {
        self.points.iter().filter(|p| p.flagged).count()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.points {
            w.serialize(GridRow {
                amp_index: p.amp_index,
                phase_index: p.phase_index,
                q: p.q(),
                p: p.p(),
                w: p.w,
                n_bins: p.n_bins,
                overflow_fraction: p.overflow_fraction,
            })
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        Ok(atomic_write(path, &self.to_csv()?)?)
    }

    /// Reads an exported grid; points above `overflow_limit` are flagged.
    pub fn read_csv(path: &Path, overflow_limit: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        let mut points = Vec::new();
        for row in r.deserialize::<GridRow>() {
            let row = row.map_err(|e| Error::Format(e.to_string()))?;
            points.push(GridPoint {
                amp_index: row.amp_index,
                phase_index: row.phase_index,
                beta: ComplexAmplitude::from_alpha(num_complex::Complex64::new(row.q, row.p)),
                w: row.w,
                n_bins: row.n_bins,
                overflow_fraction: row.overflow_fraction,
                flagged: row.overflow_fraction > overflow_limit,
            });
        }
        if points.is_empty() {
            return Err(Error::Format("grid file has no points".into()));
        }
        let n_amplitude = points.iter().map(|p| p.amp_index).max().unwrap() + 1;
        let n_phase = points.iter().map(|p| p.phase_index).max().unwrap() + 1;
        let max_amplitude = points.iter().map(|p| p.beta.abs()).fold(0.0, f64::max);
        let geometry = ScanGeometry {
            n_amplitude,
            n_phase,
            max_amplitude,
        };
        let regular = points.len() == geometry.len()
            && points
                .iter()
                .enumerate()
                .all(|(i, p)| p.amp_index == i / n_phase && p.phase_index == i % n_phase);
        if !regular {
            return Err(Error::Format(
                "grid rows are not a complete circle-by-circle scan".into(),
            ));
        }
        Ok(Self { geometry, points })
    }
}

/// Metadata written next to every grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanManifest {
    pub source: String,
    pub geometry: ScanGeometry,
    pub model: ExperimentModel,
    /// `V` derived from the visibility.
    pub overlap: f64,
    pub mode: ScanMode,
    pub options: ScanOptions,
    pub scan_duration: f64,
    pub flagged_points: usize,
    #[serde(default)]
    pub config_hash: Option<String>,
}

impl ScanManifest {
    pub fn new(
        source: &SourceState,
        model: &ExperimentModel,
        mode: ScanMode,
        options: &ScanOptions,
        grid: &WignerGrid,
    ) -> Self {
        Self {
            source: source.kind().into(),
            geometry: grid.geometry,
            model: *model,
            overlap: model.overlap(),
            mode,
            options: options.clone(),
            scan_duration: options.timing.total(&grid.geometry),
            flagged_points: grid.flagged_count(),
            config_hash: None,
        }
    }
}

/// Synthesizes the detector packet of scan point `index`. Arrivals and
/// readout noise draw from separate counter-based streams of `seed`.
pub fn point_packet(
    stats: &DetectedStatistics,
    settings: &TraceSettings,
    seed: u64,
    index: usize,
) -> Result<(ArrivalRecord, TracePacket)> {
    let mut rng = stream_rng(seed, 2 * index as u64);
    let duration = settings.packet_samples as f64 / SAMPLE_RATE;
    let model = ArrivalModel::PerBin {
        bin_duration: settings.pipeline.bin_duration,
        sampler: stats,
    };
    let arrivals = sample_arrivals_with(&model, duration, SAMPLE_RATE, &mut rng)?;
    let noise_seed = stream_rng(seed, 2 * index as u64 + 1).next_u64();
    let packet = synthesize_trace(&arrivals, &settings.kernel, &settings.readout, noise_seed)?;
    Ok((arrivals, packet))
}

fn scan_point(
    stats: &DetectedStatistics,
    mode: ScanMode,
    options: &ScanOptions,
    index: usize,
) -> Result<PointEstimate> {
    match mode {
        ScanMode::Analytic => {
            let unresolved = stats.unresolved_mass();
            Ok(PointEstimate {
                w: stats.parity(),
                n_bins: 0,
                overflow_fraction: unresolved,
                flagged: unresolved > options.overflow_limit,
            })
        }
        ScanMode::MonteCarlo { bins, seed } => {
            use crate::tes_sim::PhotonCountSampler;
            let mut rng = stream_rng(seed, index as u64);
            let counts: Vec<u32> = (0..bins).map(|_| stats.sample_count(&mut rng)).collect();
            let overflow = counts
                .iter()
                .map(|&c| c as usize > options.cutoff)
                .collect();
            let series = CountSeries {
                bin_duration: options.trace.pipeline.bin_duration,
                counts,
                overflow,
            };
            Ok(estimate_point(
                &series,
                options.cutoff,
                options.overflow_limit,
            ))
        }
        ScanMode::FullTrace { seed } => {
            let (_, packet) = point_packet(stats, &options.trace, seed, index)?;
            let out = process_packet(
                &packet,
                &options.trace.pipeline,
                &options.trace.threshold_source(),
            )?;
            let mut est = estimate_point(&out.counts, options.cutoff, options.overflow_limit);
            est.flagged |= packet.saturated();
            Ok(est)
        }
    }
}

/// Assembles a grid from per-point estimates in scan order.
pub fn assemble_grid(geometry: ScanGeometry, estimates: &[PointEstimate]) -> Result<WignerGrid> {
    if estimates.len() != geometry.len() {
        return Err(Error::InvalidArgument(format!(
            "{} estimates for a {}-point scan",
            estimates.len(),
            geometry.len()
        )));
    }
    let points = geometry
        .points()
        .zip(estimates)
        .map(|((k, j, beta), e)| GridPoint {
            amp_index: k,
            phase_index: j,
            beta,
            w: e.w,
            n_bins: e.n_bins,
            overflow_fraction: e.overflow_fraction,
            flagged: e.flagged,
        })
        .collect();
    Ok(WignerGrid { geometry, points })
}

/// Per-point detected statistics of a scan, with any phase drift applied.
struct PointStatistics<'a> {
    source: &'a SourceState,
    model: &'a ExperimentModel,
    working_cutoff: usize,
    betas: Vec<ComplexAmplitude>,
    drift: Option<Vec<f64>>,
}

impl<'a> PointStatistics<'a> {
    fn new(
        source: &'a SourceState,
        geometry: &ScanGeometry,
        model: &'a ExperimentModel,
        options: &ScanOptions,
    ) -> Self {
        Self {
            source,
            model,
            working_cutoff: options.working_cutoff,
            betas: geometry.points().map(|p| p.2).collect(),
            drift: options.drift.map(|d| d.phases(geometry, &options.timing)),
        }
    }

    fn get(&self, i: usize) -> Result<DetectedStatistics> {
        match &self.drift {
            Some(phi) => {
                self.source
                    .rotated(phi[i])
                    .detected(self.betas[i], self.model, self.working_cutoff)
            }
            None => self
                .source
                .detected(self.betas[i], self.model, self.working_cutoff),
        }
    }
}

/// Detected statistics of scan point `index`, as [`run_scan_with`] sees
/// them; [`point_packet`] turns these into the point's detector packet.
pub fn scan_point_statistics(
    source: &SourceState,
    geometry: &ScanGeometry,
    model: &ExperimentModel,
    options: &ScanOptions,
    index: usize,
) -> Result<DetectedStatistics> {
    if index >= geometry.len() {
        return Err(Error::InvalidArgument(format!(
            "point {index} outside a {}-point scan",
            geometry.len()
        )));
    }
    PointStatistics::new(source, geometry, model, options).get(index)
}

pub fn run_scan(
    source: &SourceState,
    geometry: &ScanGeometry,
    model: &ExperimentModel,
    mode: ScanMode,
) -> Result<WignerGrid> {
    run_scan_with(source, geometry, model, mode, &ScanOptions::default())
}

/// Scans every point of `geometry`. Each point draws from its own stream of
/// the mode's seed, so parallel and sequential runs agree bit for bit.
pub fn run_scan_with(
    source: &SourceState,
    geometry: &ScanGeometry,
    model: &ExperimentModel,
    mode: ScanMode,
    options: &ScanOptions,
) -> Result<WignerGrid> {
    geometry.validate()?;
    model.validate()?;
    source.validate()?;
    if let ScanMode::MonteCarlo { bins: 0, .. } = mode {
        return Err(Error::InvalidArgument(
            "Monte Carlo mode needs at least one bin".into(),
        ));
    }
    let stats = PointStatistics::new(source, geometry, model, options);
    let one = |i: usize| scan_point(&stats.get(i)?, mode, options, i);
    let estimates: Vec<PointEstimate> = if options.parallel {
        (0..geometry.len())
            .into_par_iter()
            .map(one)
            .collect::<Result<_>>()?
    } else {
        (0..geometry.len()).map(one).collect::<Result<_>>()?
    };
    assemble_grid(*geometry, &estimates)
}

/// Regular polar resampling of a grid, row-major by amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedSurface {
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub values: Vec<f64>,
}

impl InterpolatedSurface {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["amplitude", "phase", "q", "p", "W"])
            .map_err(|e| Error::Format(e.to_string()))?;
        for (i, a) in self.amplitudes.iter().enumerate() {
            for (j, ph) in self.phases.iter().enumerate() {
                let v = self.values[i * self.phases.len() + j];
                w.write_record(&[
                    a.to_string(),
                    ph.to_string(),
                    (a * ph.cos()).to_string(),
                    (a * ph.sin()).to_string(),
                    v.to_string(),
                ])
                .map_err(|e| Error::Format(e.to_string()))?;
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Bilinear interpolation in `(|β|, arg β)`, periodic in phase.
pub fn interpolate_polar(
    grid: &WignerGrid,
    n_amplitude: usize,
    n_phase: usize,
) -> Result<InterpolatedSurface> {
    let g = &grid.geometry;
    if grid.points.len() != g.len() || n_amplitude == 0 || n_phase == 0 {
        return Err(Error::InvalidArgument(
            "interpolation needs a complete grid and a non-empty target".into(),
        ));
    }
    let target = ScanGeometry {
        n_amplitude,
        n_phase,
        max_amplitude: g.max_amplitude,
    };
    let amplitudes: Vec<f64> = (0..n_amplitude).map(|k| target.amplitude(k)).collect();
    let phases: Vec<f64> = (0..n_phase).map(|j| target.phase(j)).collect();
    let value = |k: usize, j: usize| grid.points[k * g.n_phase + j % g.n_phase].w;
    let mut values = Vec::with_capacity(n_amplitude * n_phase);
    for &a in &amplitudes {
        let u = if g.n_amplitude > 1 && g.max_amplitude > 0.0 {
            a / g.max_amplitude * (g.n_amplitude - 1) as f64
        } else {
            0.0
        };
        let k0 = (u.floor() as usize).min(g.n_amplitude.saturating_sub(2));
        let fu = if g.n_amplitude > 1 {
            u - k0 as f64
        } else {
            0.0
        };
        let k1 = (k0 + 1).min(g.n_amplitude - 1);
        for &ph in &phases {
            let v = ph / TAU * g.n_phase as f64;
            let j0 = v.floor() as usize;
            let fv = v - j0 as f64;
            let lo = value(k0, j0) * (1.0 - fv) + value(k0, j0 + 1) * fv;
            let hi = value(k1, j0) * (1.0 - fv) + value(k1, j0 + 1) * fv;
            values.push(lo * (1.0 - fu) + hi * fu);
        }
    }
    Ok(InterpolatedSurface {
        amplitudes,
        phases,
        values,
    })
}
