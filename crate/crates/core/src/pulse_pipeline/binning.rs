use serde::{Deserialize, Serialize};

use super::{EventRecord, QuantizationThresholds};
use crate::error::{Error, Result};
use crate::fockspace::PhotonDistribution;

/// Photon counts per counting bin. Bins start at the packet start and only
/// whole bins are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    pub bin_duration: f64,
    pub counts: Vec<u32>,
    /// The bin holds an unresolvable event or more photons than the cutoff.
    pub overflow: Vec<bool>,
}

impl CountSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn overflow_bins(&self) -> usize {
        self.overflow.iter().filter(|&&o| o).count()
    }

    pub fn overflow_fraction(&self) -> f64 {
        if self.counts.is_empty() {
            0.0
        } else {
            self.overflow_bins() as f64 / self.counts.len() as f64
        }
    }
}

/// Whole bins of `bin_duration` in `duration`, tolerant of the rounding in
/// values such as `0.8388608 / 1e-4`.
pub(crate) fn whole_bins(duration: f64, bin_duration: f64) -> usize {
    (duration / bin_duration * (1.0 + 1e-12)).floor() as usize
}

/// Classifies each event and sums photon numbers by the bin holding its
/// rising edge. Events beyond the last whole bin are dropped.
pub fn quantize_and_bin(
    events: &[EventRecord],
    thresholds: &QuantizationThresholds,
    bin_duration: f64,
    packet_duration: f64,
    cutoff: usize,
) -> Result<CountSeries> {
    if !(bin_duration > 0.0) || !(packet_duration > 0.0) {
        return Err(Error::InvalidArgument(
            "bin and packet durations must be positive".into(),
        ));
    }
    let n = whole_bins(packet_duration, bin_duration);
    let mut counts = vec![0u32; n];
    let mut overflow = vec![false; n];
    for e in events {
        let b = (e.time / bin_duration * (1.0 + 1e-12)).floor();
        if b < 0.0 || b as usize >= n {
            continue;
        }
        let b = b as usize;
        match thresholds.classify(e.peak_height) {
            Some(k) => counts[b] += k,
            None => overflow[b] = true,
        }
    }
    for (c, o) in counts.iter().zip(overflow.iter_mut()) {
        if *c as usize > cutoff {
            *o = true;
        }
    }
    Ok(CountSeries {
        bin_duration,
        counts,
        overflow,
    })
}

/// Empirical `p(n) = #bins with n / #bins` for `n ≤ cutoff`; overflowed bins
/// make up the tail mass.
pub fn photon_histogram(series: &CountSeries, cutoff: usize) -> Result<PhotonDistribution> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("count series has no bins".into()));
    }
    let mut hist = vec![0u64; cutoff + 1];
    let mut over = 0u64;
    for (&c, &o) in series.counts.iter().zip(&series.overflow) {
        if o || c as usize > cutoff {
            over += 1;
        } else {
            hist[c as usize] += 1;
        }
    }
    let total = series.len() as f64;
    PhotonDistribution::with_tail(
        hist.iter().map(|&h| h as f64 / total).collect(),
        over as f64 / total,
    )
}
