//! Full pipeline: encoder, QCNN backbone, classical heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{Encoder, FeatureVector};
use crate::error::{Error, Result};
use crate::grad::{backward_classical, quantum_grad};
use crate::heads::{predict, HeadConfig, HeadParams};
use crate::qcnn::{CircuitLayout, Qcnn, QcnnParams, QuantumFeatures, Readout, QUANTUM_PARAM_COUNT};

/// Static description of a model, enough to rebuild it from parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: Encoder,
    pub layout: CircuitLayout,
    pub heads: HeadConfig,
}

impl ModelSpec {
    pub fn readout(&self) -> Readout {
        if self.heads.recycle {
            Readout::Recycled
        } else {
            Readout::Baseline
        }
    }

    pub fn param_count(&self) -> usize {
        QUANTUM_PARAM_COUNT + self.heads.param_count()
    }
}

/// Per-sample (or batch-averaged) gradient of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub loss: f64,
    pub quantum: Vec<f64>,
    pub heads: Vec<f64>,
}

impl ModelGrad {
    pub fn zeros(model: &HybridModel) -> Self {
        Self {
            loss: 0.0,
            quantum: vec![0.0; QUANTUM_PARAM_COUNT],
            heads: vec![0.0; model.heads.param_count()],
        }
    }

    pub fn add(&mut self, other: &ModelGrad) {
        self.loss += other.loss;
        self.quantum.iter_mut().zip(&other.quantum).for_each(|(a, b)| *a += b);
        self.heads.iter_mut().zip(&other.heads).for_each(|(a, b)| *a += b);
    }

    pub fn scale(&mut self, s: f64) {
        self.loss *= s;
        self.quantum.iter_mut().chain(self.heads.iter_mut()).for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.quantum.iter().chain(&self.heads).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct HybridModel {
    pub spec: ModelSpec,
    pub qcnn: Qcnn,
    pub quantum: QcnnParams,
    pub heads: HeadParams,
}

impl HybridModel {
    /// Quantum angles uniform in `[-π, π]`, Glorot heads.
    pub fn init(spec: ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        let quantum = QcnnParams::random(rng);
        let heads = HeadParams::new(&spec.heads, rng)?;
        Self::from_parts(spec, quantum, heads)
    }

    pub fn from_parts(spec: ModelSpec, quantum: QcnnParams, heads: HeadParams) -> Result<Self> {
        heads.validate()?;
        if heads.config() != spec.heads {
            return Err(Error::Shape(format!(
                "head parameters {:?} do not match {:?}",
                heads.config(),
                spec.heads
            )));
        }
        let qcnn = Qcnn::new(spec.layout.clone())?;
        Ok(Self { spec, qcnn, quantum, heads })
    }

    pub fn readout(&self) -> Readout {
        self.spec.readout()
    }

    pub fn param_count(&self) -> usize {
        self.quantum.len() + self.heads.param_count()
    }

    pub fn features(&self, x: &FeatureVector) -> Result<QuantumFeatures> {
        let input = self.spec.encoder.embed(x)?;
        self.qcnn.forward(&input, &self.quantum, self.readout())
    }

    pub fn logits(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.heads.logits(&self.features(x)?)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<usize> {
        Ok(predict(&self.logits(x)?))
    }

    pub fn loss(&self, x: &FeatureVector, label: usize) -> Result<f64> {
        crate::heads::cross_entropy(&self.logits(x)?, label)
    }

    /// Loss, prediction and full gradient for one labelled sample.
    pub fn sample_grad(&self, x: &FeatureVector, label: usize) -> Result<(ModelGrad, usize)> {
        let input = self.spec.encoder.embed(x)?;
        let angles = self.quantum.to_flat();
        let features = self.qcnn.forward_flat(&input, &angles, self.readout())?;
        let acts = self.heads.activations(&features)?;
        let classical = backward_classical(&self.heads, &acts, label)?;
        let quantum = quantum_grad(&self.qcnn, &input, &angles, self.readout(), &classical.upstream())?;
        let grad = ModelGrad {
            loss: classical.loss,
            quantum,
            heads: classical.heads.to_flat(),
        };
        Ok((grad, predict(&acts.logits)))
    }

    /// All trainable values, quantum angles first.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.quantum.to_flat();
        v.extend(self.heads.to_flat());
        v
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.param_count(), flat.len())));
        }
        let (q, h) = flat.split_at(QUANTUM_PARAM_COUNT);
        self.quantum = QcnnParams::from_flat(q)?;
        self.heads.assign_flat(h)
    }
}
