use serde::{Deserialize, Serialize};

use super::{Edge, PipelineConfig, WindowPolicy};
use crate::tes_sim::TracePacket;

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Rising-edge start sample.
    pub sample: u64,
    /// Rising-edge start, seconds from packet start.
    pub time: f64,
    /// Largest excursion above the extrapolated pre-edge level in the window.
    pub peak_height: f64,
    /// The window ran past the end of the packet.
    pub truncated: bool,
}

/// Annotates each edge with the maximum signal in the response window
/// `(t, t + window]`.
///
/// Heights are measured against the pre-edge level extrapolated along the
/// cooling exponential towards `noise_mean`, so a pulse riding on an earlier
/// pulse's tail reports its own height.
pub fn extract_peaks(
    packet: &TracePacket,
    edges: &[Edge],
    cfg: &PipelineConfig,
) -> Vec<EventRecord> {
    let x = packet.samples();
    let dt = 1.0 / packet.sample_rate();
    let width = (cfg.window * packet.sample_rate()).round().max(1.0) as usize;
    let decay_per_sample = if cfg.decay_time > 0.0 && cfg.decay_time.is_finite() {
        (-dt / cfg.decay_time).exp()
    } else {
        1.0
    };
    edges
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let mut end = e.sample + width;
            let truncated = end >= x.len();
            end = end.min(x.len() - 1);
            if cfg.window_policy == WindowPolicy::ClipAtNextEdge {
                if let Some(next) = edges.get(k + 1) {
                    end = end.min(next.sample.saturating_sub(1).max(e.sample + 1));
                }
            }
            let excess = e.pre_level - cfg.noise_mean;
            let mut best = f64::NEG_INFINITY;
            for j in 1..=(end - e.sample) {
                let level = cfg.noise_mean + excess * decay_per_sample.powf(j as f64 + e.level_lag);
                best = best.max(x[e.sample + j] as f64 - level);
            }
            EventRecord {
                sample: e.sample as u64,
                time: e.time,
                peak_height: best,
                truncated,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::detect_edges;
    use super::*;
    use crate::tes_sim::{render_analog, Arrival, ArrivalRecord, PulseKernel, SAMPLE_RATE};

    fn events(arr: &[(u64, u32)], n: usize, cfg: &PipelineConfig) -> Vec<EventRecord> {
        let rec = ArrivalRecord::new(
            SAMPLE_RATE,
            n,
            arr.iter()
                .map(|&(sample, multiplicity)| Arrival {
                    sample,
                    multiplicity,
                })
                .collect(),
        )
        .unwrap();
        let a = render_analog(&rec, &PulseKernel::default(), 1000.0);
        let p =
            TracePacket::new(a.iter().map(|v| v.round() as u16).collect(), SAMPLE_RATE).unwrap();
        let edges = detect_edges(&p, cfg).unwrap();
        extract_peaks(&p, &edges, cfg)
    }

    #[test]
    fn clean_pulse_height_is_kernel_peak() {
        let e = events(&[(100, 1)], 400, &PipelineConfig::default());
        assert_eq!(e.len(), 1);
        assert!((e[0].peak_height - 1000.0).abs() <= 1.0);
        assert!(!e[0].truncated);
    }

    #[test]
    fn merged_pair_is_one_double_height_event() {
        // Kernel-sum oracle: one sample apart, maximum of g[j] + g[j−1].
        let k = PulseKernel::default();
        let g = k.sampled(SAMPLE_RATE);
        let oracle = (1..=6).map(|j| g[j] + g[j - 1]).fold(0.0, f64::max);
        let e = events(&[(100, 1), (101, 1)], 400, &PipelineConfig::default());
        assert_eq!(e.len(), 1);
        assert!(
            (e[0].peak_height - oracle).abs() <= 1.0,
            "{} vs {oracle}",
            e[0].peak_height
        );
        assert!(e[0].peak_height > 1.5 * k.unit_height);
    }

    #[test]
    fn tail_pileup_gives_two_single_height_events() {
        for policy in [WindowPolicy::Independent, WindowPolicy::ClipAtNextEdge] {
            let cfg = PipelineConfig {
                window_policy: policy,
                ..Default::default()
            };
            let e = events(&[(100, 1), (108, 1)], 400, &cfg);
            assert_eq!(e.len(), 2);
            for ev in &e {
                assert!(
                    (ev.peak_height - 1000.0).abs() < 150.0,
                    "{policy:?}: {}",
                    ev.peak_height
                );
            }
        }
    }

    #[test]
    fn window_past_packet_end_is_flagged() {
        let e = events(&[(394, 1)], 400, &PipelineConfig::default());
        assert_eq!(e.len(), 1);
        assert!(e[0].truncated);
    }
}
