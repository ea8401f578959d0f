//! Experiment configuration files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use pnrtomo::fockspace::ComplexAmplitude;
use pnrtomo::tomography::{
    phase_diffused_mixture, ExperimentModel, Modulation, ScanGeometry, ScanMode, ScanOptions,
    SourceState,
};
use pnrtomo::DensityMatrix;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub source: SourceConfig,
    #[serde(default = "ideal_model")]
    pub model: ExperimentModel,
    #[serde(default)]
    pub geometry: ScanGeometry,
    #[serde(default = "default_mode")]
    pub mode: ScanMode,
    #[serde(default)]
    pub options: ScanOptions,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

fn ideal_model() -> ExperimentModel {
    ExperimentModel::IDEAL
}

fn default_mode() -> ScanMode {
    ScanMode::Analytic
}

/// Signal state. Coherent amplitudes are given either as `amplitude`
/// (`|α₀|`) or as `detected_mean` (`η|α₀|²`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    Vacuum {},
    Coherent {
        amplitude: Option<f64>,
        detected_mean: Option<f64>,
        #[serde(default)]
        phase: f64,
    },
    PhaseDiffused {
        amplitude: Option<f64>,
        detected_mean: Option<f64>,
        #[serde(default)]
        phase: f64,
        modulation: Modulation,
        n_components: usize,
    },
    Fock {
        n: usize,
    },
}

/// Packet-level simulation: the probe `β = probe_q + i probe_p` is held
/// fixed for every packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub packets: usize,
    pub seed: u64,
    pub probe_q: f64,
    pub probe_p: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            packets: 1,
            seed: 1,
            probe_q: 0.0,
            probe_p: 0.0,
        }
    }
}

fn modulus(amplitude: Option<f64>, detected_mean: Option<f64>, eta: f64) -> Result<f64, CliError> {
    match (amplitude, detected_mean) {
        (Some(a), None) if a >= 0.0 => Ok(a),
        (None, Some(m)) if m >= 0.0 && eta > 0.0 => Ok((m / eta).sqrt()),
        (Some(_), Some(_)) => Err(CliError::Config(
            "give either amplitude or detected_mean, not both".into(),
        )),
        (None, None) => Err(CliError::Config(
            "source needs amplitude or detected_mean".into(),
        )),
        _ => Err(CliError::Config(
            "source amplitude must be non-negative".into(),
        )),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.model.validate().map_err(CliError::invalid)?;
        self.geometry.validate().map_err(CliError::invalid)?;
        self.source_state()?.validate().map_err(CliError::invalid)?;
        if let ScanMode::MonteCarlo { bins: 0, .. } = self.mode {
            return Err(CliError::Config("monte_carlo mode needs bins > 0".into()));
        }
        if self.options.cutoff == 0 || self.options.working_cutoff < self.options.cutoff {
            return Err(CliError::Config("need 0 < cutoff <= working_cutoff".into()));
        }
        Ok(())
    }

    pub fn source_state(&self) -> Result<SourceState, CliError> {
        let eta = self.model.eta;
        Ok(match &self.source {
            SourceConfig::Vacuum {} => SourceState::Vacuum,
            SourceConfig::Coherent {
                amplitude,
                detected_mean,
                phase,
            } => SourceState::Coherent {
                alpha0: ComplexAmplitude::from_polar(
                    modulus(*amplitude, *detected_mean, eta)?,
                    *phase,
                ),
            },
            SourceConfig::PhaseDiffused {
                amplitude,
                detected_mean,
                phase,
                modulation,
                n_components,
            } => {
                let alpha0 =
                    ComplexAmplitude::from_polar(modulus(*amplitude, *detected_mean, eta)?, *phase);
                phase_diffused_mixture(alpha0, *modulation, *n_components)
                    .map_err(CliError::invalid)?
            }
            SourceConfig::Fock { n } => SourceState::Raw(DensityMatrix::fock(*n, *n)),
        })
    }

    /// Centre of the Gaussian reference surface, for sources that have one.
    pub fn gaussian_alpha0(&self) -> Result<Option<ComplexAmplitude>, CliError> {
        Ok(match self.source_state()? {
            SourceState::Vacuum => Some(ComplexAmplitude::from_polar(0.0, 0.0)),
            SourceState::Coherent { alpha0 } => Some(alpha0),
            _ => None,
        })
    }

    /// SHA-256 of the canonical JSON form, so equivalent files hash alike.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
