//! Synthetic transition-edge-sensor acquisition.
//!
//! A ground-truth [`ArrivalRecord`] is rendered into a 14-bit
//! [`TracePacket`] by linear superposition of a [`PulseKernel`] at every
//! arrival, additive white Gaussian readout noise and integer quantization.

mod arrivals;
mod kernel;
mod packet_file;
mod trace;

pub(crate) use arrivals::sample_arrivals_with;
pub use arrivals::{sample_arrivals, Arrival, ArrivalModel, ArrivalRecord, PhotonCountSampler};
pub use kernel::PulseKernel;
pub use packet_file::{read_packet, read_packet_header, write_packet, PacketHeader, PACKET_FORMAT};
pub use trace::{render_analog, synthesize_trace, Blackbody, Readout, TracePacket};

/// Digitizer rate, samples per second.
pub const SAMPLE_RATE: f64 = 5e6;
/// Samples per acquisition packet.
pub const PACKET_SAMPLES: usize = 1 << 22;
pub const BIT_DEPTH: u32 = 14;
pub const MAX_SAMPLE: u16 = (1 << BIT_DEPTH) - 1;
/// Peak-search window following each rising edge, seconds.
pub const RESPONSE_WINDOW: f64 = 1.2e-6;
/// Photon numbers the detector resolves.
pub const DETECTOR_CUTOFF: usize = 5;

/// Length of one packet in seconds (≈ 0.8389 s).
pub fn packet_duration() -> f64 {
    PACKET_SAMPLES as f64 / SAMPLE_RATE
}
