//! Packet files: `<stem>.bin` holds exactly 2²² little-endian `u16` words,
//! `<stem>.json` is the header sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Arrival, PulseKernel, TracePacket, BIT_DEPTH, MAX_SAMPLE, PACKET_SAMPLES};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

pub const PACKET_FORMAT: &str = "pnr-trace-packet";
const PACKET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketHeader {
    pub format: String,
    pub version: u32,
    pub n_samples: usize,
    pub sample_rate: f64,
    pub bit_depth: u32,
    pub baseline: f64,
    pub noise_rms: f64,
    pub seed: u64,
    #[serde(default)]
    pub kernel: Option<PulseKernel>,
    #[serde(default)]
    pub saturated: bool,
    #[serde(default)]
    pub config_hash: Option<String>,
    /// Ground truth; absent for recorded data.
    #[serde(default)]
    pub arrivals: Option<Vec<Arrival>>,
}

impl PacketHeader {
    pub fn new(sample_rate: f64, baseline: f64, noise_rms: f64, seed: u64) -> Self {
        Self {
            format: PACKET_FORMAT.into(),
            version: PACKET_VERSION,
            n_samples: PACKET_SAMPLES,
            sample_rate,
            bit_depth: BIT_DEPTH,
            baseline,
            noise_rms,
            seed,
            kernel: None,
            saturated: false,
            config_hash: None,
            arrivals: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format != PACKET_FORMAT {
            return Err(Error::Format(format!(
                "unexpected format tag {:?}",
                self.format
            )));
        }
        if self.version != PACKET_VERSION {
            return Err(Error::Format(format!(
                "unsupported packet version {}",
                self.version
            )));
        }
        if self.n_samples != PACKET_SAMPLES {
            return Err(Error::Format(format!(
                "packet holds {} samples, expected {PACKET_SAMPLES}",
                self.n_samples
            )));
        }
        if self.bit_depth != BIT_DEPTH {
            return Err(Error::Format(format!(
                "bit depth {} unsupported",
                self.bit_depth
            )));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::Format("non-positive sample rate".into()));
        }
        Ok(())
    }
}

pub fn sidecar_path(bin_path: &Path) -> PathBuf {
    bin_path.with_extension("json")
}

/// Writes samples and header; both files are replaced atomically.
pub fn write_packet(bin_path: &Path, packet: &TracePacket, header: &PacketHeader) -> Result<()> {
    if !packet.is_standard_length() {
        return Err(Error::Format(format!(
            "packet files hold exactly {PACKET_SAMPLES} samples, got {}",
            packet.len()
        )));
    }
    let mut header = header.clone();
    header.n_samples = packet.len();
    header.sample_rate = packet.sample_rate();
    header.saturated = packet.saturated();
    header.validate()?;
    let mut bytes = Vec::with_capacity(packet.len() * 2);
    for &s in packet.samples() {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    atomic_write(bin_path, &bytes)?;
    let text = serde_json::to_string_pretty(&header)?;
    atomic_write(&sidecar_path(bin_path), text.as_bytes())?;
    Ok(())
}

pub fn read_packet_header(bin_path: &Path) -> Result<PacketHeader> {
    let text = fs::read_to_string(sidecar_path(bin_path))?;
    let header: PacketHeader =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("corrupted header: {e}")))?;
    header.validate()?;
    Ok(header)
}

pub fn read_packet(bin_path: &Path) -> Result<(TracePacket, PacketHeader)> {
    let header = read_packet_header(bin_path)?;
    let bytes = fs::read(bin_path)?;
    if bytes.len() != header.n_samples * 2 {
        return Err(Error::Format(format!(
            "payload has {} bytes, header declares {} samples",
            bytes.len(),
            header.n_samples
        )));
    }
    let samples: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    if let Some(pos) = samples.iter().position(|&v| v > MAX_SAMPLE) {
        return Err(Error::Format(format!(
            "sample {pos} uses more than 14 bits"
        )));
    }
    let packet = TracePacket::new(samples, header.sample_rate)?;
    Ok((packet, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tes_sim::SAMPLE_RATE;
    use proptest::prelude::*;

    fn packet_from(seed: u64) -> TracePacket {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..PACKET_SAMPLES)
            .map(|_| rng.random_range(0..=MAX_SAMPLE))
            .collect();
        TracePacket::new(samples, SAMPLE_RATE).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(3))]
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.bin");
            let packet = packet_from(seed);
            let mut header = PacketHeader::new(SAMPLE_RATE, 1000.0, 100.0, seed);
            header.arrivals = Some(vec![Arrival { sample: 3, multiplicity: 2 }]);
            write_packet(&path, &packet, &header).unwrap();
            let (back, h) = read_packet(&path).unwrap();
            prop_assert_eq!(back.samples(), packet.samples());
            prop_assert_eq!(h.arrivals, header.arrivals);
            prop_assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 * 1024 * 1024);
        }
    }

    #[test]
    fn corrupted_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        write_packet(
            &path,
            &packet_from(1),
            &PacketHeader::new(SAMPLE_RATE, 0.0, 0.0, 1),
        )
        .unwrap();
        std::fs::write(
            sidecar_path(&path),
            "{\"format\": \"pnr-trace-packet\", \"vers",
        )
        .unwrap();
        assert!(matches!(read_packet(&path), Err(Error::Format(_))));
        let mut h = PacketHeader::new(SAMPLE_RATE, 0.0, 0.0, 1);
        h.n_samples = 10;
        std::fs::write(sidecar_path(&path), serde_json::to_string(&h).unwrap()).unwrap();
        assert!(matches!(read_packet(&path), Err(Error::Format(_))));
    }

    #[test]
    fn short_packets_cannot_be_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = TracePacket::new(vec![0; 100], SAMPLE_RATE).unwrap();
        let err = write_packet(
            &dir.path().join("x.bin"),
            &p,
            &PacketHeader::new(SAMPLE_RATE, 0.0, 0.0, 0),
        );
        assert!(matches!(err, Err(Error::Format(_))));
    }
}
