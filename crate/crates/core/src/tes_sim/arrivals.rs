use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{DETECTOR_CUTOFF, RESPONSE_WINDOW};
use crate::error::{Error, Result};
use crate::fockspace::PhotonDistribution;

/// Photons absorbed within one digitizer sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub sample: u64,
    pub multiplicity: u32,
}

/// Ground-truth photon arrivals on the digitizer clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRecord {
    sample_rate: f64,
    n_samples: usize,
    arrivals: Vec<Arrival>,
}

impl ArrivalRecord {
    pub fn new(sample_rate: f64, n_samples: usize, arrivals: Vec<Arrival>) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        for w in arrivals.windows(2) {
            if w[1].sample <= w[0].sample {
                return Err(Error::InvalidArgument(
                    "arrival samples must be strictly increasing".into(),
                ));
            }
        }
        if let Some(a) = arrivals.iter().find(|a| a.multiplicity == 0) {
            return Err(Error::InvalidArgument(format!(
                "zero multiplicity at sample {}",
                a.sample
            )));
        }
        if let Some(last) = arrivals.last() {
            if last.sample as usize >= n_samples {
                return Err(Error::InvalidArgument(format!(
                    "arrival at sample {} lies outside a {n_samples}-sample record",
                    last.sample
                )));
            }
        }
        Ok(Self {
            sample_rate,
            n_samples,
            arrivals,
        })
    }

    pub fn empty(sample_rate: f64, n_samples: usize) -> Self {
        Self {
            sample_rate,
            n_samples,
            arrivals: Vec::new(),
        }
    }

    /// Snaps continuous times onto the sample clock and merges coincidences.
    pub fn from_times(times: &[f64], sample_rate: f64, n_samples: usize) -> Result<Self> {
        let mut samples: Vec<u64> = times
            .iter()
            .map(|&t| {
                if !(t >= 0.0) {
                    Err(Error::InvalidArgument(format!("negative arrival time {t}")))
                } else {
                    Ok((t * sample_rate + 1e-9).floor() as u64)
                }
            })
            .collect::<Result<_>>()?;
        samples.sort_unstable();
        Self::new(sample_rate, n_samples, merge_samples(&samples))
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }

    pub fn arrivals(&self) -> &[Arrival] {
        &self.arrivals
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.arrivals
            .iter()
            .map(|a| a.sample as f64 / self.sample_rate)
            .collect()
    }

    pub fn total_photons(&self) -> u64 {
        self.arrivals.iter().map(|a| a.multiplicity as u64).sum()
    }

    /// Photons per whole bin of `bin_duration`; the trailing partial bin is
    /// dropped.
    pub fn bin_counts(&self, bin_duration: f64) -> Vec<u32> {
        let per_bin = (bin_duration * self.sample_rate).round() as u64;
        let n_bins = self.n_samples / per_bin as usize;
        let mut counts = vec![0u32; n_bins];
        for a in &self.arrivals {
            let b = (a.sample / per_bin) as usize;
            if b < n_bins {
                counts[b] += a.multiplicity;
            }
        }
        counts
    }

    /// Largest photon total inside any window of `window_samples` samples.
    pub fn max_window_multiplicity(&self, window_samples: u64) -> u32 {
        let mut best = 0;
        let mut start = 0;
        let mut running = 0u32;
        for a in &self.arrivals {
            running += a.multiplicity;
            while a.sample - self.arrivals[start].sample >= window_samples {
                running -= self.arrivals[start].multiplicity;
                start += 1;
            }
            best = best.max(running);
        }
        best
    }
}

fn merge_samples(sorted: &[u64]) -> Vec<Arrival> {
    let mut out: Vec<Arrival> = Vec::new();
    for &s in sorted {
        match out.last_mut() {
            Some(last) if last.sample == s => last.multiplicity += 1,
            _ => out.push(Arrival {
                sample: s,
                multiplicity: 1,
            }),
        }
    }
    out
}

/// Per-bin photon-number statistics that can be sampled.
pub trait PhotonCountSampler: Sync {
    fn sample_count(&self, rng: &mut dyn RngCore) -> u32;

    fn mean_count(&self) -> Option<f64> {
        None
    }
}

impl PhotonCountSampler for PhotonDistribution {
    /// Mass in the tail is returned as `cutoff + 1`.
    fn sample_count(&self, rng: &mut dyn RngCore) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (n, p) in self.probs().iter().enumerate() {
            acc += p;
            if u < acc {
                return n as u32;
            }
        }
        if self.tail_mass() > 0.0 {
            self.cutoff() as u32 + 1
        } else {
            self.cutoff() as u32
        }
    }

    fn mean_count(&self) -> Option<f64> {
        Some(self.mean())
    }
}

pub enum ArrivalModel<'a> {
    /// Homogeneous Poisson process with `rate` photons per second.
    Poisson { rate: f64 },
    /// Independent photon numbers per bin, placed uniformly inside the bin.
    PerBin {
        bin_duration: f64,
        sampler: &'a dyn PhotonCountSampler,
    },
}

/// Draws a ground-truth arrival record; deterministic in `seed`.
pub fn sample_arrivals(
    model: &ArrivalModel<'_>,
    duration: f64,
    sample_rate: f64,
    seed: u64,
) -> Result<ArrivalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_arrivals_with(model, duration, sample_rate, &mut rng)
}

pub(crate) fn sample_arrivals_with(
    model: &ArrivalModel<'_>,
    duration: f64,
    sample_rate: f64,
    rng: &mut dyn RngCore,
) -> Result<ArrivalRecord> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let n_samples = (duration * sample_rate + 1e-9).floor() as usize;
    let check_budget = |mean_rate: f64| -> Result<()> {
        let per_window = mean_rate * RESPONSE_WINDOW;
        if per_window > DETECTOR_CUTOFF as f64 {
            return Err(Error::SaturationRisk {
                mean_per_window: per_window,
                budget: DETECTOR_CUTOFF,
            });
        }
        Ok(())
    };
    let mut samples = Vec::new();
    match model {
        ArrivalModel::Poisson { rate } => {
            if !(*rate >= 0.0) || !rate.is_finite() {
                return Err(Error::Domain {
                    quantity: "photon rate",
                    value: *rate,
                    domain: "[0, ∞)",
                });
            }
            check_budget(*rate)?;
            if *rate > 0.0 {
                let gaps = Exp::new(*rate).expect("positive rate");
                let mut t = 0.0;
                loop {
                    t += gaps.sample(rng);
                    let s = (t * sample_rate).floor();
                    if s >= n_samples as f64 {
                        break;
                    }
                    samples.push(s as u64);
                }
            }
        }
        ArrivalModel::PerBin {
            bin_duration,
            sampler,
        } => {
            if !(*bin_duration > 0.0) {
                return Err(Error::InvalidArgument(
                    "bin duration must be positive".into(),
                ));
            }
            if let Some(mean) = sampler.mean_count() {
                check_budget(mean / bin_duration)?;
            }
            let per_bin = (bin_duration * sample_rate).round() as u64;
            if per_bin == 0 {
                return Err(Error::InvalidArgument("bin shorter than one sample".into()));
            }
            let n_bins = n_samples as u64 / per_bin;
            for b in 0..n_bins {
                let n = sampler.sample_count(rng);
                let start = b * per_bin;
                let first = samples.len();
                for _ in 0..n {
                    samples.push(start + rng.random_range(0..per_bin));
                }
                samples[first..].sort_unstable();
            }
        }
    }
    ArrivalRecord::new(sample_rate, n_samples, merge_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tes_sim::{packet_duration, SAMPLE_RATE};

    #[test]
    fn zero_rate_gives_empty_record() {
        let r =
            sample_arrivals(&ArrivalModel::Poisson { rate: 0.0 }, 0.84, SAMPLE_RATE, 1).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn detector_regime_mean_per_bin() {
        let tau = 1e-4;
        let lambda = 2.553;
        let r = sample_arrivals(
            &ArrivalModel::Poisson { rate: lambda / tau },
            packet_duration(),
            SAMPLE_RATE,
            7,
        )
        .unwrap();
        let counts = r.bin_counts(tau);
        assert_eq!(counts.len(), 8388);
        let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
        let sigma = (lambda / counts.len() as f64).sqrt();
        assert!((mean - lambda).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn seeded_runs_are_identical() {
        let m = ArrivalModel::Poisson { rate: 3000.0 };
        let a = sample_arrivals(&m, 0.1, SAMPLE_RATE, 42).unwrap();
        let b = sample_arrivals(&m, 0.1, SAMPLE_RATE, 42).unwrap();
        let c = sample_arrivals(&m, 0.1, SAMPLE_RATE, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn per_bin_counts_follow_the_sampler() {
        let dist = PhotonDistribution::new(vec![0.0, 0.0, 1.0]).unwrap();
        let m = ArrivalModel::PerBin {
            bin_duration: 1e-4,
            sampler: &dist,
        };
        let r = sample_arrivals(&m, 0.01, SAMPLE_RATE, 3).unwrap();
        assert!(r.bin_counts(1e-4).iter().all(|&c| c == 2));
    }

    #[test]
    fn saturating_rate_is_rejected() {
        let m = ArrivalModel::Poisson { rate: 1e7 };
        assert!(matches!(
            sample_arrivals(&m, 0.01, SAMPLE_RATE, 0),
            Err(Error::SaturationRisk { .. })
        ));
    }

    #[test]
    fn window_multiplicity() {
        let arr = vec![
            Arrival {
                sample: 10,
                multiplicity: 2,
            },
            Arrival {
                sample: 12,
                multiplicity: 1,
            },
            Arrival {
                sample: 30,
                multiplicity: 1,
            },
        ];
        let r = ArrivalRecord::new(SAMPLE_RATE, 100, arr).unwrap();
        assert_eq!(r.max_window_multiplicity(6), 3);
        assert_eq!(r.max_window_multiplicity(2), 2);
        assert_eq!(r.total_photons(), 4);
    }
}
