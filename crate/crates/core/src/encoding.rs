//! Classical feature vectors to 8-qubit input states.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Gate, StateVector};

/// Register width used by both encoders.
pub const ENCODED_QUBITS: usize = 8;
pub const AMPLITUDE_DIM: usize = 1 << ENCODED_QUBITS;
pub const ANGLE_DIM: usize = ENCODED_QUBITS;

/// Min–max normalized features in `[0, 1]`, of dimension 8 or 256.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != AMPLITUDE_DIM && values.len() != ANGLE_DIM {
            return Err(Error::UnsupportedDim(values.len()));
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(Error::FeatureOutOfRange { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(f: FeatureVector) -> Self {
        f.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoder {
    Amplitude,
    Angle,
}

impl Encoder {
    pub fn feature_dim(self) -> usize {
        match self {
            Encoder::Amplitude => AMPLITUDE_DIM,
            Encoder::Angle => ANGLE_DIM,
        }
    }

    pub fn embed(self, features: &FeatureVector) -> Result<StateVector> {
        match self {
            Encoder::Amplitude => amplitude_embed(features),
            Encoder::Angle => angle_embed(features),
        }
    }
}

impl fmt::Display for Encoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoder::Amplitude => "amplitude",
            Encoder::Angle => "angle",
        })
    }
}

impl FromStr for Encoder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude" => Ok(Encoder::Amplitude),
            "angle" => Ok(Encoder::Angle),
            other => Err(Error::Config(format!("unknown encoder {other:?}"))),
        }
    }
}

/// Amplitude embedding for vectors longer than 8, angle embedding otherwise.
pub fn select_encoder(dim: usize) -> Result<Encoder> {
    match dim {
        AMPLITUDE_DIM => Ok(Encoder::Amplitude),
        ANGLE_DIM => Ok(Encoder::Angle),
        other => Err(Error::UnsupportedDim(other)),
    }
}

/// Loads `x / ‖x‖₂` as the amplitudes of an 8-qubit register.
pub fn amplitude_embed(features: &FeatureVector) -> Result<StateVector> {
    if features.dim() != AMPLITUDE_DIM {
        return Err(Error::UnsupportedDim(features.dim()));
    }
    let norm = features.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let amps = features
        .values()
        .iter()
        .map(|x| Complex64::new(x / norm, 0.0))
        .collect();
    StateVector::from_amplitudes(amps)
}

/// Rotation angles `(θ, φ) = (πx, π(2x − 1))` for one feature.
pub fn angle_pair(x: f64) -> (f64, f64) {
    (PI * x, PI * (2.0 * x - 1.0))
}

/// Product state `⊗ RZ(φ_i)·RY(θ_i)|0⟩` over the 8 features.
pub fn angle_embed(features: &FeatureVector) -> Result<StateVector> {
    if features.dim() != ANGLE_DIM {
        return Err(Error::UnsupportedDim(features.dim()));
    }
    let mut state = StateVector::zero(ENCODED_QUBITS)?;
    for (wire, &x) in features.values().iter().enumerate() {
        let (theta, phi) = angle_pair(x);
        state.apply(&Gate::Ry { wire, theta })?;
        state.apply(&Gate::Rz { wire, theta: phi })?;
    }
    Ok(state)
}
