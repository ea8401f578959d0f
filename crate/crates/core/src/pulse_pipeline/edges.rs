use super::PipelineConfig;
use crate::error::{Error, Result};
use crate::tes_sim::TracePacket;

/// Detected rising edge: `sample` is the last sample before the rise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub sample: usize,
    pub time: f64,
    /// Local signal level the rise was measured from.
    pub pre_level: f64,
    /// Samples by which the level estimate precedes `sample`.
    pub level_lag: f64,
}

/// Finds rising edges.
///
/// At candidate sample `i` the local level `L(k)` at sample `i + k` is the
/// mean of the `pre_samples` samples ending at `i`, extrapolated along the
/// cooling exponential. An edge requires a step `x[i+k] − L(k) ≥
/// onset_fraction·h` on both of the next two samples and a sustained rise
/// `mean(x[i+k] − L(k), k = 2..=rise_samples) ≥ edge_fraction·h`, where `h` is
/// the one-photon height. The raw trace must also climb by the onset step
/// over those two samples, which keeps the flat top of a merged pulse from
/// retriggering when the extrapolated level undershoots it. Comparing against the local level lets pileups on
/// a decaying tail qualify. After an edge, `lockout_samples` candidates are
/// skipped so one pulse triggers once.
pub fn detect_edges(packet: &TracePacket, cfg: &PipelineConfig) -> Result<Vec<Edge>> {
    let x = packet.samples();
    let pre = cfg.pre_samples.max(1);
    let rise = cfg.rise_samples.max(2);
    let min_len = pre + rise + 1;
    if x.len() < min_len {
        return Err(Error::InvalidArgument(format!(
            "trace of {} samples is shorter than the {min_len}-sample edge support",
            x.len()
        )));
    }
    if !(cfg.single_photon_height > 0.0) {
        return Err(Error::InvalidArgument(
            "one-photon height must be positive".into(),
        ));
    }
    let h = cfg.single_photon_height;
    let onset = cfg.onset_fraction * h;
    let edge = cfg.edge_fraction * h;
    let post_len = (rise - 1) as f64;

    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0i64);
    for &v in x {
        prefix.push(prefix.last().unwrap() + v as i64);
    }
    let window_sum = |a: usize, b: usize| (prefix[b + 1] - prefix[a]) as f64;

    let dt = 1.0 / packet.sample_rate();
    let decay = if cfg.decay_time > 0.0 && cfg.decay_time.is_finite() {
        (-dt / cfg.decay_time).exp()
    } else {
        1.0
    };
    let mean_lag = (pre as f64 - 1.0) / 2.0;
    let mut out = Vec::new();
    let mut i = pre - 1;
    let last = x.len() - rise - 1;
    while i <= last {
        let mean = window_sum(i + 1 - pre, i) / pre as f64;
        // A pre-window that itself contains a rise is an unfinished edge, so
        // the level is the current sample rather than a decaying average.
        let (pre_level, level_lag, rate) = if x[i] as f64 - mean >= onset {
            (x[i] as f64, 0.0, 1.0)
        } else {
            (mean, mean_lag, decay)
        };
        let excess = pre_level - cfg.noise_mean;
        let level = |k: usize| cfg.noise_mean + excess * rate.powf(k as f64 + level_lag);
        let step = (x[i + 1] as f64 - level(1)).min(x[i + 2] as f64 - level(2));
        if step >= onset && x[i + 2] as f64 - x[i] as f64 >= onset {
            let post = (2..=rise).map(|k| x[i + k] as f64 - level(k)).sum::<f64>() / post_len;
            if post >= edge {
                out.push(Edge {
                    sample: i,
                    time: i as f64 * dt,
                    pre_level,
                    level_lag,
                });
                i += cfg.lockout_samples.max(1);
                continue;
            }
        }
        i += 1;
    }
    Ok(out)
}
