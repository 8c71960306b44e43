//! Hybrid quantum convolutional classifier that reuses the qubits discarded
//! by pooling as an extra feature stream.

pub mod data;
pub mod encoding;
pub mod error;
pub mod grad;
pub mod heads;
pub mod model;
pub mod qcnn;
pub mod sim;
pub mod trainer;

pub use encoding::{Encoder, FeatureVector};
pub use error::{Error, Result};
pub use data::{RawDataset, Sample};
pub use heads::{HeadConfig, HeadParams};
pub use model::{HybridModel, ModelGrad, ModelSpec};
pub use qcnn::{CircuitLayout, LayoutOptions, Qcnn, QcnnParams, QuantumFeatures, Readout};
pub use sim::{Gate, StateVector};
pub use trainer::{Checkpoint, Metrics, TrainConfig, TrainReport};
