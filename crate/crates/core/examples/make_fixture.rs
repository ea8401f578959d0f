//! Regenerates the shipped pileup fixture under `tests/fixtures/`.
//!
//! Two isolated single photons, two photons one sample apart that share a
//! rising edge, and a tail pileup whose second photon lands 1.6 µs after the
//! first. Noise-free, so the pipeline output is exact.

use std::path::PathBuf;

use pnrtomo::pulse_pipeline::{process_packet, PipelineConfig, ThresholdSource};
use pnrtomo::tes_sim::{
    synthesize_trace, write_packet, Arrival, ArrivalRecord, PacketHeader, PulseKernel, Readout,
    PACKET_SAMPLES, SAMPLE_RATE,
};
use serde_json::json;

fn main() -> pnrtomo::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let arrivals = vec![
        Arrival {
            sample: 1100,
            multiplicity: 1,
        },
        Arrival {
            sample: 2300,
            multiplicity: 1,
        },
        Arrival {
            sample: 3150,
            multiplicity: 1,
        },
        Arrival {
            sample: 3151,
            multiplicity: 1,
        },
        Arrival {
            sample: 4420,
            multiplicity: 1,
        },
        Arrival {
            sample: 4428,
            multiplicity: 1,
        },
    ];
    let record = ArrivalRecord::new(SAMPLE_RATE, PACKET_SAMPLES, arrivals.clone())?;
    let kernel = PulseKernel::default();
    let readout = Readout {
        noise_rms: 0.0,
        ..Readout::default()
    };
    let packet = synthesize_trace(&record, &kernel, &readout, 0)?;
    let mut header = PacketHeader::new(SAMPLE_RATE, readout.baseline, 0.0, 0);
    header.kernel = Some(kernel);
    header.arrivals = Some(arrivals);
    write_packet(&dir.join("pileup.bin"), &packet, &header)?;

    // Truth follows from the arrival list: the coincident pair shares one
    // edge, each pileup photon gets its own.
    let nonzero: Vec<_> = record
        .bin_counts(1e-4)
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(b, &c)| json!({ "bin": b, "count": c }))
        .collect();
    let truth = json!({
        "edges": [1100, 2300, 3150, 4420, 4428],
        "photons": [1, 1, 2, 1, 1],
        "total_photons": record.total_photons(),
        "nonzero_bins": nonzero,
        "n_bins": record.bin_counts(1e-4).len(),
    });
    std::fs::write(
        dir.join("pileup.truth.json"),
        serde_json::to_string_pretty(&truth)? + "\n",
    )?;
    let out = process_packet(
        &packet,
        &PipelineConfig::default(),
        &ThresholdSource::Linear,
    )?;
    println!(
        "pipeline edges {:?}",
        out.events.iter().map(|e| e.sample).collect::<Vec<_>>()
    );
    println!("pipeline photons {:?}", out.photons);
    Ok(())
}
