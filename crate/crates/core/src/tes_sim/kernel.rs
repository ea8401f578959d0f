use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-photon response: exponential rise that reaches its maximum at
/// `rise_time`, then exponential cooling with time constant `decay_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseKernel {
    /// Onset-to-peak time, seconds.
    pub rise_time: f64,
    /// Cooling time constant, seconds.
    pub decay_time: f64,
    /// Sampled peak height of a one-photon pulse, digitizer units.
    pub unit_height: f64,
}

impl Default for PulseKernel {
    fn default() -> Self {
        Self {
            rise_time: 700e-9,
            decay_time: 2e-6,
            unit_height: 1000.0,
        }
    }
}

/// Decay of the tail below which the sampled kernel is cut off.
const SUPPORT_FLOOR: f64 = 1e-6;

impl PulseKernel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rise_time", self.rise_time),
            ("decay_time", self.decay_time),
            ("unit_height", self.unit_height),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "pulse kernel {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Rise time constant; three constants fit inside the onset-to-peak time.
    pub fn rise_constant(&self) -> f64 {
        self.rise_time / 3.0
    }

    /// Continuous shape with unit maximum at `t = rise_time`.
    pub fn shape(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t < self.rise_time {
            let tau = self.rise_constant();
            (1.0 - (-t / tau).exp()) / (1.0 - (-self.rise_time / tau).exp())
        } else {
            (-(t - self.rise_time) / self.decay_time).exp()
        }
    }

    /// Sample `j` is the response `j / sample_rate` after onset, scaled so
    /// the largest sample equals `unit_height`. Sample 0 is always zero.
    pub fn sampled(&self, sample_rate: f64) -> Vec<f64> {
        let dt = 1.0 / sample_rate;
        let support = self.rise_time + self.decay_time * (1.0 / SUPPORT_FLOOR).ln();
        let len = (support / dt).ceil() as usize + 1;
        let raw: Vec<f64> = (0..len).map(|j| self.shape(j as f64 * dt)).collect();
        let peak = raw.iter().copied().fold(0.0, f64::max);
        raw.into_iter()
            .map(|v| v * self.unit_height / peak)
            .collect()
    }

    /// Index of the largest sample of [`Self::sampled`].
    pub fn peak_sample(&self, sample_rate: f64) -> usize {
        let s = self.sampled(sample_rate);
        s.iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            )
            .0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tes_sim::SAMPLE_RATE;

    #[test]
    fn kernel_invariants() {
        let k = PulseKernel::default();
        let s = k.sampled(SAMPLE_RATE);
        assert!(s.iter().all(|&v| v >= 0.0));
        assert_eq!(s[0], 0.0);
        let peak = s.iter().copied().fold(0.0, f64::max);
        assert!((peak - k.unit_height).abs() < 1e-9);
        let peak_time = k.peak_sample(SAMPLE_RATE) as f64 / SAMPLE_RATE;
        assert!((peak_time - k.rise_time).abs() <= 1.0 / SAMPLE_RATE);
        let area: f64 = s.iter().sum::<f64>() / SAMPLE_RATE;
        assert!(area.is_finite() && area > 0.0);
        assert!(*s.last().unwrap() < 1e-5 * k.unit_height);
    }

    #[test]
    fn continuous_shape_peaks_at_rise_time() {
        let k = PulseKernel::default();
        assert!((k.shape(k.rise_time) - 1.0).abs() < 1e-12);
        assert!(k.shape(k.rise_time * 0.99) < 1.0);
        assert!(k.shape(k.rise_time * 1.01) < 1.0);
        assert_eq!(k.shape(-1e-9), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let k = PulseKernel {
            decay_time: 0.0,
            ..Default::default()
        };
        assert!(k.validate().is_err());
    }
}
