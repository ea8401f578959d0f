use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{ArrivalRecord, PulseKernel, MAX_SAMPLE, PACKET_SAMPLES};
use crate::error::{Error, Result};

/// Digitized detector record.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePacket {
    samples: Vec<u16>,
    sample_rate: f64,
    saturated: bool,
}

impl TracePacket {
    /// Any length is accepted in memory; files always hold
    /// [`PACKET_SAMPLES`] words.
    pub fn new(samples: Vec<u16>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty trace".into()));
        }
        if let Some((i, v)) = samples.iter().enumerate().find(|(_, &v)| v > MAX_SAMPLE) {
            return Err(Error::InvalidArgument(format!(
                "sample {i} = {v} exceeds 14 bits"
            )));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        let saturated = samples.iter().any(|&v| v == MAX_SAMPLE);
        Ok(Self {
            samples,
            sample_rate,
            saturated,
        })
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Some sample sits at full scale.
    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn is_standard_length(&self) -> bool {
        self.samples.len() == PACKET_SAMPLES
    }
}

/// Low-height thermal events that are not photons of the measured mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blackbody {
    /// Events per second.
    pub rate: f64,
    /// Mean height relative to a one-photon pulse.
    pub relative_height: f64,
}

/// Readout chain parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Readout {
    pub noise_rms: f64,
    pub baseline: f64,
    pub blackbody: Option<Blackbody>,
}

impl Default for Readout {
    fn default() -> Self {
        Self {
            noise_rms: 100.0,
            baseline: 1000.0,
            blackbody: None,
        }
    }
}

/// Noise-free analog trace: baseline plus one kernel per arrival, scaled by
/// multiplicity.
pub fn render_analog(arrivals: &ArrivalRecord, kernel: &PulseKernel, baseline: f64) -> Vec<f64> {
    let mut out = vec![baseline; arrivals.n_samples()];
    let g = kernel.sampled(arrivals.sample_rate());
    for a in arrivals.arrivals() {
        add_pulse(&mut out, &g, a.sample as usize, a.multiplicity as f64);
    }
    out
}

fn add_pulse(out: &mut [f64], g: &[f64], start: usize, scale: f64) {
    if start >= out.len() {
        return;
    }
    let end = (start + g.len()).min(out.len());
    for (o, k) in out[start..end].iter_mut().zip(g) {
        *o += scale * k;
    }
}

/// Renders, adds readout noise, rounds and clips to 14 bits. Clipping at full
/// scale sets [`TracePacket::saturated`].
pub fn synthesize_trace(
    arrivals: &ArrivalRecord,
    kernel: &PulseKernel,
    readout: &Readout,
    seed: u64,
) -> Result<TracePacket> {
    kernel.validate()?;
    if !(readout.noise_rms >= 0.0) || !(readout.baseline >= 0.0) {
        return Err(Error::InvalidArgument(
            "noise and baseline must be non-negative".into(),
        ));
    }
    if readout.baseline + kernel.unit_height >= MAX_SAMPLE as f64 + 1.0 {
        return Err(Error::InvalidArgument(format!(
            "baseline {} plus one-photon height {} leaves no headroom below 2^14",
            readout.baseline, kernel.unit_height
        )));
    }
    let mut analog = render_analog(arrivals, kernel, readout.baseline);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(bb) = readout.blackbody {
        if bb.rate > 0.0 {
            let g = kernel.sampled(arrivals.sample_rate());
            let gaps = Exp::new(bb.rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut t = 0.0;
            loop {
                t += gaps.sample(&mut rng);
                let s = (t * arrivals.sample_rate()) as usize;
                if s >= analog.len() {
                    break;
                }
                let h = bb.relative_height * (0.5 + rng.random::<f64>());
                add_pulse(&mut analog, &g, s, h);
            }
        }
    }
    if readout.noise_rms > 0.0 {
        let noise = Normal::new(0.0, readout.noise_rms)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in analog.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let samples = analog
        .iter()
        .map(|v| v.round().clamp(0.0, MAX_SAMPLE as f64) as u16)
        .collect();
    TracePacket::new(samples, arrivals.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tes_sim::{Arrival, SAMPLE_RATE};
    use proptest::prelude::*;

    fn record(arr: &[(u64, u32)], n: usize) -> ArrivalRecord {
        let a = arr
            .iter()
            .map(|&(sample, multiplicity)| Arrival {
                sample,
                multiplicity,
            })
            .collect();
        ArrivalRecord::new(SAMPLE_RATE, n, a).unwrap()
    }

    fn quiet() -> Readout {
        Readout {
            noise_rms: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn no_arrivals_gives_flat_baseline() {
        let p = synthesize_trace(&record(&[], 1000), &PulseKernel::default(), &quiet(), 0).unwrap();
        assert!(p.samples().iter().all(|&v| v == 1000));
        assert!(!p.saturated());
    }

    #[test]
    fn single_arrival_peak_is_unit_height() {
        let p = synthesize_trace(
            &record(&[(100, 1)], 1000),
            &PulseKernel::default(),
            &quiet(),
            0,
        )
        .unwrap();
        let max = *p.samples().iter().max().unwrap();
        assert_eq!(max, 2000);
    }

    #[test]
    fn close_pair_shows_second_maximum() {
        // 0.6 µs apart (three samples): the second pulse lands on the first
        // one's peak region and the summed maximum exceeds the first peak.
        let k = PulseKernel::default();
        let analog = render_analog(&record(&[(100, 1), (103, 1)], 400), &k, 0.0);
        let g = k.sampled(SAMPLE_RATE);
        for (i, v) in analog.iter().enumerate() {
            let mut expect = 0.0;
            if i >= 100 && i - 100 < g.len() {
                expect += g[i - 100];
            }
            if i >= 103 && i - 103 < g.len() {
                expect += g[i - 103];
            }
            assert!((v - expect).abs() < 1e-9);
        }
        let first_peak = analog[100 + k.peak_sample(SAMPLE_RATE)];
        let later = analog[106..112].iter().copied().fold(0.0, f64::max);
        assert!(later > first_peak);
        // Five samples apart is 1 µs: local minimum then a new maximum.
        let analog = render_analog(&record(&[(100, 1), (105, 1)], 400), &k, 0.0);
        let first = analog[103];
        let dip = analog[105];
        let second = analog[105..112].iter().copied().fold(0.0, f64::max);
        assert!(dip < first && second > first);
    }

    #[test]
    fn clipping_is_flagged() {
        let k = PulseKernel {
            unit_height: 5000.0,
            ..Default::default()
        };
        let p = synthesize_trace(&record(&[(10, 4)], 200), &k, &quiet(), 0).unwrap();
        assert!(p.saturated());
        assert!(p.samples().iter().all(|&v| v <= MAX_SAMPLE));
    }

    #[test]
    fn multiphoton_linearity() {
        let k = PulseKernel::default();
        for m in 1..=5u32 {
            let p = synthesize_trace(&record(&[(50, m)], 300), &k, &quiet(), 0).unwrap();
            let peak = *p.samples().iter().max().unwrap() as f64 - 1000.0;
            assert!((peak - m as f64 * k.unit_height).abs() <= 0.5);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let r = record(&[(10, 1)], 500);
        let a = synthesize_trace(&r, &PulseKernel::default(), &Readout::default(), 5).unwrap();
        let b = synthesize_trace(&r, &PulseKernel::default(), &Readout::default(), 5).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn rendering_is_additive(
            a in prop::collection::btree_set(0u64..2000, 0..12),
            b in prop::collection::btree_set(0u64..2000, 0..12),
        ) {
            let k = PulseKernel::default();
            let to_rec = |s: &std::collections::BTreeSet<u64>| record(&s.iter().map(|&x| (x, 1)).collect::<Vec<_>>(), 2200);
            let mut union: std::collections::BTreeMap<u64, u32> = Default::default();
            for &x in a.iter().chain(b.iter()) { *union.entry(x).or_default() += 1; }
            let u = record(&union.into_iter().collect::<Vec<_>>(), 2200);
            let base = 1000.0;
            let ta = render_analog(&to_rec(&a), &k, base);
            let tb = render_analog(&to_rec(&b), &k, base);
            let tu = render_analog(&u, &k, base);
            for i in 0..tu.len() {
                prop_assert!((tu[i] - (ta[i] + tb[i] - base)).abs() < 1e-9);
            }
        }
    }
}
