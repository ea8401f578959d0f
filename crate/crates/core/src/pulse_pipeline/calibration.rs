use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ascending peak-height boundaries: heights below `boundaries[0]` are one
/// photon, between `boundaries[k-1]` and `boundaries[k]` are `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationThresholds {
    boundaries: Vec<f64>,
    /// Heights above this are beyond the resolvable range.
    overflow_above: Option<f64>,
    /// Heights below this are noise triggers and carry no photons.
    #[serde(default)]
    noise_below: Option<f64>,
}

impl QuantizationThresholds {
    pub fn new(boundaries: Vec<f64>, overflow_above: Option<f64>) -> Result<Self> {
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("non-finite threshold".into()));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "thresholds must be strictly increasing".into(),
            ));
        }
        if let (Some(o), Some(last)) = (overflow_above, boundaries.last()) {
            if o <= *last {
                return Err(Error::InvalidArgument(
                    "overflow level must exceed the last boundary".into(),
                ));
            }
        }
        Ok(Self {
            boundaries,
            overflow_above,
            noise_below: None,
        })
    }

    /// Classifies heights below `floor` as zero photons.
    pub fn with_noise_floor(mut self, floor: f64) -> Result<Self> {
        let ceiling = self.boundaries.first().copied().or(self.overflow_above);
        if !floor.is_finite() || ceiling.is_some_and(|c| floor >= c) {
            return Err(Error::InvalidArgument(format!(
                "noise floor {floor} must lie below the first boundary"
            )));
        }
        self.noise_below = Some(floor);
        Ok(self)
    }

    pub fn noise_below(&self) -> Option<f64> {
        self.noise_below
    }

    /// Boundaries halfway between consecutive multiples of `unit`, up to
    /// `cutoff` photons, with the noise floor at `unit / 2`.
    pub fn linear(unit: f64, cutoff: usize) -> Result<Self> {
        if !(unit > 0.0) {
            return Err(Error::InvalidArgument(
                "one-photon height must be positive".into(),
            ));
        }
        let boundaries = (1..cutoff).map(|k| (k as f64 + 0.5) * unit).collect();
        Self::new(boundaries, Some((cutoff as f64 + 0.5) * unit))?.with_noise_floor(0.5 * unit)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn overflow_above(&self) -> Option<f64> {
        self.overflow_above
    }

    /// Photon number for a peak height; `None` beyond the overflow level.
    pub fn classify(&self, height: f64) -> Option<u32> {
        if self.noise_below.is_some_and(|f| height < f) {
            return Some(0);
        }
        if let Some(o) = self.overflow_above {
            if height > o {
                return None;
            }
        }
        Some(1 + self.boundaries.partition_point(|&b| b <= height) as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub bins: usize,
    pub min_events: usize,
    /// Gaussian smoothing width of the histogram, in bins.
    pub smooth_bins: f64,
    /// A peak must rise this fraction of its own height above its valley.
    pub min_relative_prominence: f64,
    /// Prominence, in √count units, below which a bump is counting noise.
    pub significance: f64,
    /// Events a peak's basin must hold.
    pub min_peak_events: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            bins: 256,
            min_events: 50,
            smooth_bins: 2.0,
            min_relative_prominence: 0.5,
            significance: 3.0,
            min_peak_events: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightHistogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl HeightHistogram {
    pub fn build(heights: &[f64], bins: usize) -> Self {
        let lo = heights.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-9);
        let width = span / bins as f64;
        let mut counts = vec![0u64; bins];
        for &h in heights {
            let b = (((h - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { lo, width, counts }
    }

    pub fn centre(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.width
    }
}

/// Result of a histogram calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightCalibration {
    pub thresholds: QuantizationThresholds,
    /// Class centres, ascending.
    pub peaks: Vec<f64>,
    pub histogram: HeightHistogram,
}

impl HeightCalibration {
    /// Continues the resolved boundaries with the mean class spacing up to
    /// `cutoff` photons, relying on the detector's linear response.
    pub fn extended(&self, cutoff: usize) -> Result<QuantizationThresholds> {
        let k = self.peaks.len();
        let spacing = if k >= 2 {
            (self.peaks[k - 1] - self.peaks[0]) / (k - 1) as f64
        } else {
            self.peaks[0]
        };
        if !(spacing > 0.0) {
            return Err(Error::Calibration("non-positive class spacing".into()));
        }
        let mut b: Vec<f64> = self.thresholds.boundaries().to_vec();
        b.truncate(cutoff.saturating_sub(1));
        let mut next = self.peaks[k - 1] + spacing / 2.0;
        while b.len() + 1 < cutoff {
            b.push(next);
            next += spacing;
        }
        let top = self.peaks[k - 1] + (cutoff as f64 - k as f64) * spacing;
        QuantizationThresholds::new(b, Some(top + spacing / 2.0))?
            .with_noise_floor(self.peaks[0] / 2.0)
    }
}

fn smooth(counts: &[u64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return counts.iter().map(|&c| c as f64).collect();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let n = counts.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = i + k as isize - radius;
                if (0..n).contains(&j) {
                    acc += w * counts[j as usize] as f64;
                }
            }
            acc / norm
        })
        .collect()
}

/// Prominence of the local maximum at `i` together with its basin bounds.
fn prominence(s: &[f64], i: usize) -> (f64, usize, usize) {
    let h = s[i];
    let mut left_min = h;
    let mut l = i;
    while l > 0 && s[l - 1] <= h {
        l -= 1;
        left_min = left_min.min(s[l]);
    }
    let left_open = l == 0;
    let mut right_min = h;
    let mut r = i;
    while r + 1 < s.len() && s[r + 1] <= h {
        r += 1;
        right_min = right_min.min(s[r]);
    }
    let right_open = r + 1 == s.len();
    let base = match (left_open, right_open) {
        (true, true) => left_min.min(right_min),
        (true, false) => right_min,
        (false, true) => left_min,
        (false, false) => left_min.max(right_min),
    };
    (h - base, l, r)
}

/// Locates photon-number classes as well-separated histogram peaks and puts
/// a boundary at the lowest point between each adjacent pair.
pub fn calibrate_thresholds(heights: &[f64], cfg: &CalibrationConfig) -> Result<HeightCalibration> {
    if heights.len() < cfg.min_events {
        return Err(Error::Calibration(format!(
            "{} heights, at least {} needed",
            heights.len(),
            cfg.min_events
        )));
    }
    if heights.iter().any(|h| !h.is_finite()) {
        return Err(Error::Calibration("non-finite peak height".into()));
    }
    let hist = HeightHistogram::build(heights, cfg.bins.max(8));
    let s = smooth(&hist.counts, cfg.smooth_bins);

    let mut peaks: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < s.len() {
        // Collapse plateaus to their middle.
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let left_lower = i == 0 || s[i - 1] < s[i];
        let right_lower = j + 1 == s.len() || s[j + 1] < s[i];
        if left_lower && right_lower && s[i] > 0.0 {
            let mid = (i + j) / 2;
            let (prom, l, r) = prominence(&s, mid);
            let mass: u64 = hist.counts[l..=r].iter().sum();
            let significant = prom > cfg.significance * s[mid].sqrt();
            if mass >= cfg.min_peak_events as u64 && significant {
                if prom >= cfg.min_relative_prominence * s[mid] {
                    peaks.push(mid);
                } else {
                    let centre = hist.centre(mid);
                    return Err(Error::Calibration(format!(
                        "merged classes: bump at {centre:.1} rises only {:.0}% above its valley \
                         (need {:.0}%); peaks are not separated",
                        100.0 * prom / s[mid],
                        100.0 * cfg.min_relative_prominence
                    )));
                }
            }
        }
        i = j + 1;
    }
    if peaks.is_empty() {
        return Err(Error::Calibration(
            "no resolvable peak in height histogram".into(),
        ));
    }
    let mut boundaries = Vec::with_capacity(peaks.len() - 1);
    for w in peaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let min = s[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        let first = a + s[a..=b].iter().position(|&v| v == min).unwrap();
        let last = a + s[a..=b].iter().rposition(|&v| v == min).unwrap();
        let (lo_c, hi_c) = (hist.centre(a), hist.centre(b));
        let sep = hi_c - lo_c;
        if min > cfg.min_relative_prominence * s[a].min(s[b]) {
            return Err(Error::Calibration(format!(
                "peaks at {lo_c:.1} and {hi_c:.1} (separation {sep:.1}) share a valley at {:.0}% of the smaller peak",
                100.0 * min / s[a].min(s[b])
            )));
        }
        boundaries.push((hist.centre(first) + hist.centre(last)) / 2.0);
    }
    let peak_values: Vec<f64> = peaks.iter().map(|&p| hist.centre(p)).collect();
    Ok(HeightCalibration {
        thresholds: QuantizationThresholds::new(boundaries, None)?
            .with_noise_floor(peak_values[0] / 2.0)?,
        peaks: peak_values,
        histogram: hist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn mixture(classes: &[(f64, f64, usize)], seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for &(mu, sd, n) in classes {
            let d = Normal::new(mu, sd).unwrap();
            out.extend((0..n).map(|_| d.sample(&mut rng)));
        }
        out
    }

    #[test]
    fn two_classes_give_one_boundary() {
        let h = mixture(&[(1000.0, 30.0, 3000), (2000.0, 30.0, 1000)], 1);
        let cal = calibrate_thresholds(&h, &CalibrationConfig::default()).unwrap();
        let b = cal.thresholds.boundaries();
        assert_eq!(b.len(), 1);
        assert!(b[0] > 1200.0 && b[0] < 1800.0, "{b:?}");
    }

    #[test]
    fn single_class_has_no_boundaries() {
        let h = mixture(&[(1000.0, 50.0, 2000)], 2);
        let cal = calibrate_thresholds(&h, &CalibrationConfig::default()).unwrap();
        assert!(cal.thresholds.boundaries().is_empty());
        assert!(h.iter().all(|&x| cal.thresholds.classify(x) == Some(1)));
        // Extension places the next class at twice the height.
        let ext = cal.extended(3).unwrap();
        assert_eq!(ext.boundaries().len(), 2);
        assert!((ext.boundaries()[0] - 1.5 * cal.peaks[0]).abs() < 1e-9);
    }

    #[test]
    fn three_classes_give_two_boundaries() {
        let h = mixture(
            &[
                (1000.0, 80.0, 5000),
                (2000.0, 80.0, 2000),
                (3000.0, 80.0, 500),
            ],
            3,
        );
        let cal = calibrate_thresholds(&h, &CalibrationConfig::default()).unwrap();
        assert_eq!(cal.thresholds.boundaries().len(), 2);
        assert_eq!(cal.peaks.len(), 3);
    }

    #[test]
    fn merged_classes_fail_with_diagnostic() {
        let h = mixture(&[(1000.0, 100.0, 20000), (1300.0, 100.0, 20000)], 4);
        let err = calibrate_thresholds(&h, &CalibrationConfig::default()).unwrap_err();
        match err {
            Error::Calibration(msg) => {
                assert!(msg.contains("merged") || msg.contains("valley"), "{msg}")
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn too_few_heights() {
        assert!(calibrate_thresholds(&[1.0, 2.0], &CalibrationConfig::default()).is_err());
    }

    #[test]
    fn classification_is_monotone() {
        let t = QuantizationThresholds::linear(1000.0, 5).unwrap();
        let mut last = 0;
        for k in 0..6000 {
            let n = t.classify(k as f64).unwrap_or(u32::MAX);
            assert!(n >= last);
            last = n;
        }
        assert_eq!(t.classify(999.0), Some(1));
        assert_eq!(t.classify(1600.0), Some(2));
        assert_eq!(t.classify(5400.0), Some(5));
        assert_eq!(t.classify(5600.0), None);
        assert!(QuantizationThresholds::new(vec![2.0, 1.0], None).is_err());
    }
}
