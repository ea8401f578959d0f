//! Trace packets to photon counts.
//!
//! 1. [`detect_edges`] finds rising edges that climb at least 40 % of the
//!    one-photon height above the local pre-edge level.
//! 2. [`extract_peaks`] records the largest excursion in the 1.2 µs after
//!    each edge.
//! 3. [`calibrate_thresholds`] places photon-number boundaries at the
//!    valleys of the peak-height histogram.
//! 4. [`quantize_and_bin`] maps heights to photon numbers and sums them per
//!    0.1 ms bin; [`photon_histogram`] turns a series into `p(n)`.

mod binning;
mod calibration;
mod edges;
pub mod export;
mod peaks;

use serde::{Deserialize, Serialize};

pub use binning::{photon_histogram, quantize_and_bin, CountSeries};
pub use calibration::{
    calibrate_thresholds, CalibrationConfig, HeightCalibration, HeightHistogram,
    QuantizationThresholds,
};
pub use edges::{detect_edges, Edge};
pub use peaks::{extract_peaks, EventRecord};

use crate::error::Result;
use crate::tes_sim::{TracePacket, DETECTOR_CUTOFF, RESPONSE_WINDOW};

/// Whether a peak window stops at the next detected edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    /// Every window spans the full response time, overlapping freely.
    Independent,
    /// A window restarts at the next edge: the earlier one ends just before
    /// the new rise.
    #[default]
    ClipAtNextEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Mean one-photon pulse height above the noise level.
    pub single_photon_height: f64,
    /// Mean signal level without pulses.
    pub noise_mean: f64,
    /// Cooling constant used to extrapolate a decaying pre-edge level.
    pub decay_time: f64,
    /// Required rise as a fraction of the one-photon height.
    pub edge_fraction: f64,
    /// Required first-sample step as a fraction of the one-photon height.
    pub onset_fraction: f64,
    /// Samples averaged into the pre-edge level.
    pub pre_samples: usize,
    /// Samples over which the rise is measured.
    pub rise_samples: usize,
    /// Samples after an edge before another edge may start.
    pub lockout_samples: usize,
    /// Peak-search window, seconds.
    pub window: f64,
    pub window_policy: WindowPolicy,
    /// Counting-bin duration, seconds.
    pub bin_duration: f64,
    pub cutoff: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            single_photon_height: 1000.0,
            noise_mean: 1000.0,
            decay_time: 2e-6,
            edge_fraction: 0.4,
            onset_fraction: 0.3,
            pre_samples: 4,
            rise_samples: 5,
            lockout_samples: 4,
            window: RESPONSE_WINDOW,
            window_policy: WindowPolicy::ClipAtNextEdge,
            bin_duration: 1e-4,
            cutoff: DETECTOR_CUTOFF,
        }
    }
}

/// Where the quantization boundaries come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSource {
    /// Fixed boundaries chosen during calibration.
    Manual(QuantizationThresholds),
    /// Midpoints between multiples of the configured one-photon height.
    Linear,
    /// Histogram valleys of this packet's heights, extended linearly to the
    /// cutoff.
    Histogram(CalibrationConfig),
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub events: Vec<EventRecord>,
    pub thresholds: QuantizationThresholds,
    pub photons: Vec<Option<u32>>,
    pub counts: CountSeries,
    pub calibration: Option<HeightCalibration>,
}

/// Runs every stage on one packet.
pub fn process_packet(
    packet: &TracePacket,
    cfg: &PipelineConfig,
    source: &ThresholdSource,
) -> Result<PipelineOutput> {
    let edges = detect_edges(packet, cfg)?;
    let events = extract_peaks(packet, &edges, cfg);
    let (thresholds, calibration) = match source {
        ThresholdSource::Manual(t) => (t.clone(), None),
        ThresholdSource::Linear => (
            QuantizationThresholds::linear(cfg.single_photon_height, cfg.cutoff)?,
            None,
        ),
        ThresholdSource::Histogram(cc) => {
            let heights: Vec<f64> = events.iter().map(|e| e.peak_height).collect();
            let cal = calibrate_thresholds(&heights, cc)?;
            (cal.extended(cfg.cutoff)?, Some(cal))
        }
    };
    let photons = events
        .iter()
        .map(|e| thresholds.classify(e.peak_height))
        .collect();
    let counts = quantize_and_bin(
        &events,
        &thresholds,
        cfg.bin_duration,
        packet.duration(),
        cfg.cutoff,
    )?;
    Ok(PipelineOutput {
        events,
        thresholds,
        photons,
        counts,
        calibration,
    })
}
