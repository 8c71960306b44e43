//! Three-block QCNN backbone: `(conv, conv, pool) × 2` then `(conv, conv)`.
//!
//! Every conv layer applies one shared 15-angle two-qubit template to all of
//! its wire pairs; every pooling layer applies one shared `CRZ · CRX` pair.
//! The circuit is compiled once per layout into a flat list of primitive
//! operations, each rotation tagged with the flat index of the angle it reads.

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Gate, StateVector};

pub const N_QUBITS: usize = 8;
pub const CONV_LAYERS: usize = 6;
pub const POOL_LAYERS: usize = 2;
pub const CONV_PARAMS: usize = 15;
pub const POOL_PARAMS: usize = 2;
pub const QUANTUM_PARAM_COUNT: usize = CONV_LAYERS * CONV_PARAMS + POOL_LAYERS * POOL_PARAMS;

/// Flat parameters per macro-block: two conv templates plus one pooling pair.
const BLOCK_STRIDE: usize = 2 * CONV_PARAMS + POOL_PARAMS;

/// Angles of the two-qubit conv template, in the order
/// `(θ₁, φ₂, λ₃, θ₄, φ₅, λ₆, θ₇, θ₈, θ₉, θ₁₀, φ₁₁, λ₁₂, θ₁₃, φ₁₄, λ₁₅)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvParams(pub [f64; CONV_PARAMS]);

/// `(φ₁, φ₂)` of the pooling pair `CRZ(φ₁)` then `CRX(φ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolParams(pub [f64; POOL_PARAMS]);

/// Where a flat parameter index lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSlot {
    Conv { layer: usize, slot: usize },
    Pool { layer: usize, slot: usize },
}

/// All trainable angles of the backbone.
///
/// The flat layout follows the circuit's block order:
/// `QC1, QC2, pool1, QC3, QC4, pool2, QC5, QC6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcnnParams {
    pub conv: [ConvParams; CONV_LAYERS],
    pub pool: [PoolParams; POOL_LAYERS],
}

pub fn conv_offset(layer: usize) -> usize {
    (layer / 2) * BLOCK_STRIDE + (layer % 2) * CONV_PARAMS
}

pub fn pool_offset(layer: usize) -> usize {
    layer * BLOCK_STRIDE + 2 * CONV_PARAMS
}

impl QcnnParams {
    pub fn zeros() -> Self {
        Self {
            conv: [ConvParams([0.0; CONV_PARAMS]); CONV_LAYERS],
            pool: [PoolParams([0.0; POOL_PARAMS]); POOL_LAYERS],
        }
    }

    /// Angles drawn uniformly from `[-π, π]`.
    pub fn random(rng: &mut impl Rng) -> Self {
        let flat: Vec<f64> = (0..QUANTUM_PARAM_COUNT).map(|_| rng.gen_range(-PI..=PI)).collect();
        Self::from_flat(&flat).expect("length is QUANTUM_PARAM_COUNT")
    }

    pub fn len(&self) -> usize {
        QUANTUM_PARAM_COUNT
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn slot(id: usize) -> Result<ParamSlot> {
        if id >= QUANTUM_PARAM_COUNT {
            return Err(Error::ParamIndex(id));
        }
        let block = id / BLOCK_STRIDE;
        let within = id % BLOCK_STRIDE;
        Ok(if within < 2 * CONV_PARAMS {
            ParamSlot::Conv {
                layer: 2 * block + within / CONV_PARAMS,
                slot: within % CONV_PARAMS,
            }
        } else {
            ParamSlot::Pool {
                layer: block,
                slot: within - 2 * CONV_PARAMS,
            }
        })
    }

    pub fn get(&self, id: usize) -> Result<f64> {
        Ok(match Self::slot(id)? {
            ParamSlot::Conv { layer, slot } => self.conv[layer].0[slot],
            ParamSlot::Pool { layer, slot } => self.pool[layer].0[slot],
        })
    }

    pub fn set(&mut self, id: usize, value: f64) -> Result<()> {
        match Self::slot(id)? {
            ParamSlot::Conv { layer, slot } => self.conv[layer].0[slot] = value,
            ParamSlot::Pool { layer, slot } => self.pool[layer].0[slot] = value,
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![0.0; QUANTUM_PARAM_COUNT];
        for (layer, c) in self.conv.iter().enumerate() {
            let o = conv_offset(layer);
            out[o..o + CONV_PARAMS].copy_from_slice(&c.0);
        }
        for (layer, p) in self.pool.iter().enumerate() {
            let o = pool_offset(layer);
            out[o..o + POOL_PARAMS].copy_from_slice(&p.0);
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != QUANTUM_PARAM_COUNT {
            return Err(Error::Shape(format!(
                "expected {QUANTUM_PARAM_COUNT} quantum parameters, got {}",
                flat.len()
            )));
        }
        let mut p = Self::zeros();
        for (layer, c) in p.conv.iter_mut().enumerate() {
            let o = conv_offset(layer);
            c.0.copy_from_slice(&flat[o..o + CONV_PARAMS]);
        }
        for (layer, q) in p.pool.iter_mut().enumerate() {
            let o = pool_offset(layer);
            q.0.copy_from_slice(&flat[o..o + POOL_PARAMS]);
        }
        Ok(p)
    }
}

/// How the second conv layer of a block pairs wires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Second layer on the shifted pairs `(w₁,w₂), (w₃,w₄), …, (w_last,w₀)`.
    #[default]
    Brick,
    /// Both layers on `(w₀,w₁), (w₂,w₃), …`.
    Aligned,
}

/// Which wire of each `(w₂ᵢ, w₂ᵢ₊₁)` pooling pair survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeepRule {
    #[default]
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LayoutOptions {
    pub pairing: Pairing,
    pub keep: KeepRule,
    /// Explicit survivors of pooling 1 (4 wires); overrides `keep`.
    pub pool1_survivors: Option<Vec<usize>>,
    /// Explicit survivors of pooling 2 (2 wires); the order given is the
    /// bit order of the retained joint distribution. Overrides `keep`.
    pub pool2_survivors: Option<Vec<usize>>,
}

impl LayoutOptions {
    /// Survivors `(1,3,5,7)` after pooling 1, then the given retained pair.
    pub fn odd_survivors(retained: [usize; 2]) -> Self {
        Self {
            pool1_survivors: Some(vec![1, 3, 5, 7]),
            pool2_survivors: Some(retained.to_vec()),
            ..Self::default()
        }
    }
}

/// Wire assignment of every layer of the backbone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitLayout {
    pub n_qubits: usize,
    /// Pairs `(wire 1, wire 2)` for each of the six conv layers.
    pub conv_pairs: Vec<Vec<(usize, usize)>>,
    /// `(control/survivor, target/discarded)` for each pooling layer.
    pub pool_pairs: Vec<Vec<(usize, usize)>>,
    pub retained_wires: [usize; 2],
    pub discarded_wires: [usize; 4],
}

impl Default for CircuitLayout {
    fn default() -> Self {
        Self::build(&LayoutOptions::default()).expect("default layout is valid")
    }
}

fn conv_layer_pairs(live: &[usize], second: bool, pairing: Pairing) -> Vec<(usize, usize)> {
    let n = live.len();
    if second && pairing == Pairing::Brick {
        (0..n / 2).map(|i| (live[2 * i + 1], live[(2 * i + 2) % n])).collect()
    } else {
        live.chunks(2).map(|c| (c[0], c[1])).collect()
    }
}

fn pool_layer(
    live: &[usize],
    keep: KeepRule,
    explicit: Option<&[usize]>,
    which: usize,
) -> Result<(Vec<(usize, usize)>, Vec<usize>)> {
    match explicit {
        None => {
            let pairs: Vec<(usize, usize)> = live
                .chunks(2)
                .map(|c| match keep {
                    KeepRule::Lower => (c[0], c[1]),
                    KeepRule::Upper => (c[1], c[0]),
                })
                .collect();
            let survivors = pairs.iter().map(|p| p.0).collect();
            Ok((pairs, survivors))
        }
        Some(survivors) => {
            if survivors.len() * 2 != live.len() {
                return Err(Error::Layout(format!(
                    "pooling {which} must keep {} of {:?}, got {:?}",
                    live.len() / 2,
                    live,
                    survivors
                )));
            }
            for (k, w) in survivors.iter().enumerate() {
                if !live.contains(w) || survivors[..k].contains(w) {
                    return Err(Error::Layout(format!(
                        "pooling {which} survivors {survivors:?} must be distinct members of {live:?}"
                    )));
                }
            }
            let mut kept: Vec<usize> = survivors.to_vec();
            kept.sort_unstable();
            let dropped: Vec<usize> = live.iter().copied().filter(|w| !kept.contains(w)).collect();
            let pairs = kept.into_iter().zip(dropped).collect();
            Ok((pairs, survivors.to_vec()))
        }
    }
}

impl CircuitLayout {
    pub fn build(options: &LayoutOptions) -> Result<Self> {
        let live0: Vec<usize> = (0..N_QUBITS).collect();
        let mut conv_pairs = Vec::with_capacity(CONV_LAYERS);
        let mut pool_pairs = Vec::with_capacity(POOL_LAYERS);

        conv_pairs.push(conv_layer_pairs(&live0, false, options.pairing));
        conv_pairs.push(conv_layer_pairs(&live0, true, options.pairing));
        let (p1, survivors1) = pool_layer(&live0, options.keep, options.pool1_survivors.as_deref(), 1)?;
        pool_pairs.push(p1);

        let mut live1 = survivors1.clone();
        live1.sort_unstable();
        conv_pairs.push(conv_layer_pairs(&live1, false, options.pairing));
        conv_pairs.push(conv_layer_pairs(&live1, true, options.pairing));
        let (p2, survivors2) = pool_layer(&live1, options.keep, options.pool2_survivors.as_deref(), 2)?;
        pool_pairs.push(p2);

        let mut live2 = survivors2.clone();
        live2.sort_unstable();
        conv_pairs.push(conv_layer_pairs(&live2, false, options.pairing));
        conv_pairs.push(conv_layer_pairs(&live2, true, options.pairing));

        let mut discarded: Vec<usize> = pool_pairs[0].iter().map(|p| p.1).collect();
        discarded.sort_unstable();

        let layout = Self {
            n_qubits: N_QUBITS,
            conv_pairs,
            pool_pairs,
            retained_wires: [survivors2[0], survivors2[1]],
            discarded_wires: discarded.try_into().expect("pooling 1 drops 4 wires"),
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Checks every structural invariant; used for deserialized layouts too.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Layout(m));
        if self.n_qubits != N_QUBITS {
            return err(format!("expected {N_QUBITS} qubits, got {}", self.n_qubits));
        }
        if self.conv_pairs.len() != CONV_LAYERS || self.pool_pairs.len() != POOL_LAYERS {
            return err("expected 6 conv layers and 2 pooling layers".into());
        }
        let mut live: Vec<usize> = (0..N_QUBITS).collect();
        for block in 0..3 {
            for layer in [2 * block, 2 * block + 1] {
                let pairs = &self.conv_pairs[layer];
                if pairs.is_empty() {
                    return err(format!("conv layer {} has no pairs", layer + 1));
                }
                check_layer_wires(pairs, &live, &format!("conv layer {}", layer + 1))?;
            }
            if block < POOL_LAYERS {
                let pairs = &self.pool_pairs[block];
                check_layer_wires(pairs, &live, &format!("pooling layer {}", block + 1))?;
                if pairs.len() * 2 != live.len() {
                    return err(format!("pooling layer {} must halve {} wires", block + 1, live.len()));
                }
                let mut targets: Vec<usize> = pairs.iter().map(|p| p.1).collect();
                targets.sort_unstable();
                if block == 0 && targets != self.discarded_wires.to_vec() {
                    let mut sorted = self.discarded_wires;
                    sorted.sort_unstable();
                    if targets != sorted.to_vec() {
                        return err("discarded wires must be the pooling-1 targets".into());
                    }
                }
                live.retain(|w| !targets.contains(w));
            }
        }
        let mut retained = self.retained_wires;
        retained.sort_unstable();
        if retained.to_vec() != live {
            return err(format!("retained wires {:?} are not the survivors {live:?}", self.retained_wires));
        }
        Ok(())
    }
}

fn check_layer_wires(pairs: &[(usize, usize)], live: &[usize], what: &str) -> Result<()> {
    let mut seen = Vec::new();
    for &(a, b) in pairs {
        for w in [a, b] {
            if !live.contains(&w) {
                return Err(Error::Layout(format!("{what} uses wire {w} outside live set {live:?}")));
            }
            if seen.contains(&w) {
                return Err(Error::Layout(format!("{what} uses wire {w} twice")));
            }
            seen.push(w);
        }
    }
    Ok(())
}

/// Which measurement streams the backbone reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// Retained joint distribution plus pooling-1 discarded excitations.
    Recycled,
    /// Retained joint distribution only; discarded wires are never read.
    Baseline,
}

impl Readout {
    pub fn feature_len(self) -> usize {
        match self {
            Readout::Recycled => 8,
            Readout::Baseline => 4,
        }
    }
}

/// Measured probabilities handed to the classical heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumFeatures {
    /// Joint distribution of the two retained wires (bit order = `retained_wires`).
    pub retained: [f64; 4],
    /// `P(|1⟩)` of each pooling-1 discarded wire; `None` under [`Readout::Baseline`].
    pub discarded: Option<[f64; 4]>,
}

impl QuantumFeatures {
    /// Retained entries followed by discarded entries (when present).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.retained.to_vec();
        if let Some(d) = self.discarded {
            v.extend_from_slice(&d);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Rx,
    Ry,
    Rz,
    Cnot,
    Crx,
    Crz,
}

/// One primitive gate of the compiled circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitOp {
    pub kind: OpKind,
    /// Target for one-qubit kinds, control for two-qubit kinds.
    pub wire: usize,
    /// Target of two-qubit kinds.
    pub target: usize,
    /// Flat index of the angle this op reads.
    pub param: Option<usize>,
}

impl CircuitOp {
    pub fn gate(&self, angle: f64) -> Gate {
        let (wire, control, target) = (self.wire, self.wire, self.target);
        match self.kind {
            OpKind::Rx => Gate::Rx { wire, theta: angle },
            OpKind::Ry => Gate::Ry { wire, theta: angle },
            OpKind::Rz => Gate::Rz { wire, theta: angle },
            OpKind::Cnot => Gate::Cnot { control, target },
            OpKind::Crx => Gate::Crx { control, target, theta: angle },
            OpKind::Crz => Gate::Crz { control, target, theta: angle },
        }
    }

    pub fn is_controlled_rotation(&self) -> bool {
        matches!(self.kind, OpKind::Crx | OpKind::Crz)
    }

    fn rot(kind: OpKind, wire: usize, param: usize) -> Self {
        Self { kind, wire, target: wire, param: Some(param) }
    }

    fn cnot(control: usize, target: usize) -> Self {
        Self { kind: OpKind::Cnot, wire: control, target, param: None }
    }
}

/// Appends a U3 as `RZ(λ)`, `RY(θ)`, `RZ(φ)` in application order.
fn push_u3(ops: &mut Vec<CircuitOp>, wire: usize, theta: usize, phi: usize, lambda: usize) {
    ops.push(CircuitOp::rot(OpKind::Rz, wire, lambda));
    ops.push(CircuitOp::rot(OpKind::Ry, wire, theta));
    ops.push(CircuitOp::rot(OpKind::Rz, wire, phi));
}

/// Emits the conv template on `(w1, w2)` reading angles `offset..offset + 15`.
pub fn push_conv_ops(ops: &mut Vec<CircuitOp>, w1: usize, w2: usize, offset: usize) {
    let p = |k: usize| offset + k;
    push_u3(ops, w1, p(0), p(1), p(2));
    push_u3(ops, w2, p(3), p(4), p(5));
    ops.push(CircuitOp::cnot(w1, w2));
    ops.push(CircuitOp::rot(OpKind::Ry, w1, p(6)));
    ops.push(CircuitOp::rot(OpKind::Rz, w2, p(7)));
    ops.push(CircuitOp::cnot(w2, w1));
    ops.push(CircuitOp::rot(OpKind::Ry, w1, p(8)));
    ops.push(CircuitOp::cnot(w1, w2));
    push_u3(ops, w1, p(9), p(10), p(11));
    push_u3(ops, w2, p(12), p(13), p(14));
}

/// Emits `CRZ(φ₁)` then `CRX(φ₂)` reading angles `offset, offset + 1`.
pub fn push_pool_ops(ops: &mut Vec<CircuitOp>, control: usize, target: usize, offset: usize) {
    ops.push(CircuitOp { kind: OpKind::Crz, wire: control, target, param: Some(offset) });
    ops.push(CircuitOp { kind: OpKind::Crx, wire: control, target, param: Some(offset + 1) });
}

fn run_ops(ops: &[CircuitOp], state: &mut StateVector, angles: &[f64]) -> Result<()> {
    for op in ops {
        let angle = op.param.map_or(0.0, |p| angles[p]);
        state.apply(&op.gate(angle))?;
    }
    Ok(())
}

/// Applies the 15-angle conv template to the pair `(w1, w2)`.
pub fn apply_conv_unitary(state: &mut StateVector, pair: (usize, usize), params: &ConvParams) -> Result<()> {
    if pair.0 == pair.1 {
        return Err(Error::InvalidWires(format!("conv pair uses wire {} twice", pair.0)));
    }
    let mut ops = Vec::new();
    push_conv_ops(&mut ops, pair.0, pair.1, 0);
    run_ops(&ops, state, &params.0)
}

/// Applies `CRZ(φ₁)` then `CRX(φ₂)` with the given control and target.
pub fn apply_pool_unitary(state: &mut StateVector, control: usize, target: usize, params: &PoolParams) -> Result<()> {
    let mut ops = Vec::new();
    push_pool_ops(&mut ops, control, target, 0);
    run_ops(&ops, state, &params.0)
}

/// A layout compiled into its primitive gate sequence.
#[derive(Debug, Clone)]
pub struct Qcnn {
    layout: CircuitLayout,
    ops: Vec<CircuitOp>,
    pool1_end: usize,
}

impl Qcnn {
    pub fn new(layout: CircuitLayout) -> Result<Self> {
        layout.validate()?;
        let mut ops = Vec::new();
        let mut pool1_end = 0;
        for block in 0..3 {
            for layer in [2 * block, 2 * block + 1] {
                for &(a, b) in &layout.conv_pairs[layer] {
                    push_conv_ops(&mut ops, a, b, conv_offset(layer));
                }
            }
            if block < POOL_LAYERS {
                for &(c, t) in &layout.pool_pairs[block] {
                    push_pool_ops(&mut ops, c, t, pool_offset(block));
                }
                if block == 0 {
                    pool1_end = ops.len();
                }
            }
        }
        Ok(Self { layout, ops, pool1_end })
    }

    pub fn layout(&self) -> &CircuitLayout {
        &self.layout
    }

    pub fn ops(&self) -> &[CircuitOp] {
        &self.ops
    }

    /// Ops up to and including the last pooling-1 gate.
    pub fn pool1_range(&self) -> Range<usize> {
        0..self.pool1_end
    }

    pub fn param_count(&self) -> usize {
        QUANTUM_PARAM_COUNT
    }

    /// Gate instances reading parameter `id` (weight sharing multiplicity).
    pub fn instances_of(&self, id: usize) -> usize {
        self.ops.iter().filter(|op| op.param == Some(id)).count()
    }

    /// Circuit executions needed for one full parameter-shift gradient:
    /// two per single-qubit rotation instance, four per controlled rotation.
    pub fn shift_evaluation_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| op.param.is_some())
            .map(|op| if op.is_controlled_rotation() { 4 } else { 2 })
            .sum()
    }

    fn check_input(&self, input: &StateVector, angles: &[f64]) -> Result<()> {
        if input.n_qubits() != self.layout.n_qubits {
            return Err(Error::Layout(format!(
                "input has {} qubits, layout expects {}",
                input.n_qubits(),
                self.layout.n_qubits
            )));
        }
        if angles.len() != QUANTUM_PARAM_COUNT {
            return Err(Error::Shape(format!(
                "expected {QUANTUM_PARAM_COUNT} angles, got {}",
                angles.len()
            )));
        }
        Ok(())
    }

    /// Applies `ops[range]` with the given flat angles.
    pub fn run_range(&self, state: &mut StateVector, angles: &[f64], range: Range<usize>) -> Result<()> {
        run_ops(&self.ops[range], state, angles)
    }

    pub fn readout(&self, state: &StateVector, readout: Readout) -> Result<QuantumFeatures> {
        let r = state.joint_probabilities(&self.layout.retained_wires)?;
        let discarded = match readout {
            Readout::Recycled => {
                let d = state.excitation_probabilities(&self.layout.discarded_wires)?;
                Some([d[0], d[1], d[2], d[3]])
            }
            Readout::Baseline => None,
        };
        Ok(QuantumFeatures {
            retained: [r[0], r[1], r[2], r[3]],
            discarded,
        })
    }

    /// Runs the full circuit on `input` and returns the final state.
    pub fn evolve(&self, input: &StateVector, angles: &[f64]) -> Result<StateVector> {
        self.check_input(input, angles)?;
        let mut state = input.clone();
        self.run_range(&mut state, angles, 0..self.ops.len())?;
        Ok(state)
    }

    pub fn forward_flat(&self, input: &StateVector, angles: &[f64], readout: Readout) -> Result<QuantumFeatures> {
        let state = self.evolve(input, angles)?;
        self.readout(&state, readout)
    }

    pub fn forward(&self, input: &StateVector, params: &QcnnParams, readout: Readout) -> Result<QuantumFeatures> {
        self.forward_flat(input, &params.to_flat(), readout)
    }

    /// Excitations of the discarded wires read right after pooling 1.
    pub fn discarded_after_pool1(&self, input: &StateVector, params: &QcnnParams) -> Result<[f64; 4]> {
        let angles = params.to_flat();
        self.check_input(input, &angles)?;
        let mut state = input.clone();
        self.run_range(&mut state, &angles, self.pool1_range())?;
        let d = state.excitation_probabilities(&self.layout.discarded_wires)?;
        Ok([d[0], d[1], d[2], d[3]])
    }
}

/// Recycled-readout forward pass through `layout`.
pub fn forward(input: &StateVector, params: &QcnnParams, layout: &CircuitLayout) -> Result<QuantumFeatures> {
    Qcnn::new(layout.clone())?.forward(input, params, Readout::Recycled)
}
