//! Classical post-processing of the measured probabilities.
//!
//! Both probability vectors are rescaled to `[-2, 2]` by `p ↦ 4p − 2`, passed
//! through their own `tanh` heads and fused by an elementwise product. The
//! fused vector is the logit vector; cross-entropy is taken on its softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcnn::QuantumFeatures;

pub const NUM_CLASSES: usize = 4;

/// Rescaling factor κ of `p ↦ κp − κ/2`.
pub const KAPPA: f64 = 4.0;

/// Affine map `p ↦ 4p − 2`; rejects entries outside `[0, 1]`.
pub fn rescale(p: &[f64]) -> Result<Vec<f64>> {
    p.iter()
        .map(|&v| {
            if !(0.0..=1.0).contains(&v) {
                Err(Error::ProbabilityOutOfRange(v))
            } else {
                Ok(KAPPA * v - KAPPA / 2.0)
            }
        })
        .collect()
}

/// Inverse of [`rescale`].
pub fn unscale(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| (v + KAPPA / 2.0) / KAPPA).collect()
}

/// Fully connected layer `W x + b` with `W` stored row-major (`rows × cols`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Self {
            rows,
            cols,
            weights: (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect(),
            bias: vec![0.0; rows],
        }
    }

    /// Ones on the main diagonal (`W[i][i] = 1` for `i < min(rows, cols)`).
    pub fn identity(rows: usize, cols: usize) -> Self {
        let mut d = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            d.weights[i * cols + i] = 1.0;
        }
        d
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn weight(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.rows * self.cols || self.bias.len() != self.rows {
            return Err(Error::Shape(format!(
                "dense {}x{} holds {} weights and {} biases",
                self.rows,
                self.cols,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite dense parameter".into()));
        }
        Ok(())
    }

    /// Pre-activation `W x + b`.
    pub fn affine(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!("dense expects {} inputs, got {}", self.cols, x.len())));
        }
        Ok(self
            .weights
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    pub fn tanh(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.affine(x)?.into_iter().map(f64::tanh).collect())
    }
}

/// Three-stage head on the discarded-wire features: project, expand by `k`, recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedHead {
    pub project: Dense,
    pub expand: Dense,
    pub recover: Dense,
}

/// Intermediate activations of the discarded head.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscardedActivations {
    pub projected: Vec<f64>,
    pub expanded: Vec<f64>,
    pub output: Vec<f64>,
}

impl DiscardedHead {
    pub fn new(classes: usize, expansion: usize, rng: &mut impl Rng) -> Self {
        let wide = classes * expansion;
        Self {
            project: Dense::glorot(classes, classes, rng),
            expand: Dense::glorot(wide, classes, rng),
            recover: Dense::glorot(classes, wide, rng),
        }
    }

    pub fn zeros(classes: usize, expansion: usize) -> Self {
        let wide = classes * expansion;
        Self {
            project: Dense::zeros(classes, classes),
            expand: Dense::zeros(wide, classes),
            recover: Dense::zeros(classes, wide),
        }
    }

    pub fn param_count(&self) -> usize {
        self.project.param_count() + self.expand.param_count() + self.recover.param_count()
    }

    pub fn activations(&self, x: &[f64]) -> Result<DiscardedActivations> {
        let projected = self.project.tanh(x)?;
        let expanded = self.expand.tanh(&projected)?;
        let output = self.recover.tanh(&expanded)?;
        Ok(DiscardedActivations { projected, expanded, output })
    }
}

/// `tanh(W_ret x + b_ret)`.
pub fn retained_head(x: &[f64], layer: &Dense) -> Result<Vec<f64>> {
    layer.tanh(x)
}

pub fn discarded_head(x: &[f64], head: &DiscardedHead) -> Result<Vec<f64>> {
    Ok(head.activations(x)?.output)
}

/// Hadamard product of the two head outputs.
pub fn fuse(y_ret: &[f64], y_disc: &[f64]) -> Result<Vec<f64>> {
    if y_ret.len() != y_disc.len() {
        return Err(Error::Shape(format!("fusing {} with {} entries", y_ret.len(), y_disc.len())));
    }
    Ok(y_ret.iter().zip(y_disc).map(|(a, b)| a * b).collect())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(z)[label]`, computed with log-sum-exp.
pub fn cross_entropy(z: &[f64], label: usize) -> Result<f64> {
    if label >= z.len() {
        return Err(Error::InvalidLabel { label, classes: z.len() });
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok((lse - z[label]).max(0.0))
}

/// Mean cross-entropy over a batch of `(logits, label)` pairs.
pub fn batch_loss<'a>(batch: impl IntoIterator<Item = (&'a [f64], usize)>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (z, label) in batch {
        total += cross_entropy(z, label)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    Ok(total / n as f64)
}

/// Argmax with ties resolved toward the lowest index.
pub fn predict(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// Shape knobs of the classical stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub classes: usize,
    /// Expansion factor `k` of the discarded head.
    pub expansion: usize,
    /// Linear `m × m` layer on the fused vector.
    pub final_layer: bool,
    /// `false` drops the discarded branch entirely (baseline).
    pub recycle: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            classes: NUM_CLASSES,
            expansion: 2,
            final_layer: false,
            recycle: true,
        }
    }
}

/// Weights of every classical layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub classes: usize,
    pub expansion: usize,
    pub retained: Dense,
    pub discarded: Option<DiscardedHead>,
    pub final_layer: Option<Dense>,
}

/// Forward quantities kept for backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadActivations {
    pub retained_scaled: Vec<f64>,
    pub retained_out: Vec<f64>,
    pub discarded_scaled: Option<Vec<f64>>,
    pub discarded: Option<DiscardedActivations>,
    /// Fused vector (equals `retained_out` in the baseline).
    pub fused: Vec<f64>,
    pub logits: Vec<f64>,
}

impl HeadParams {
    pub fn new(config: &HeadConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let m = config.classes;
        let retained = Dense::glorot(m, m, rng);
        let discarded = config.recycle.then(|| DiscardedHead::new(m, config.expansion, rng));
        let final_layer = config.final_layer.then(|| Dense::glorot(m, m, rng));
        Ok(Self {
            classes: m,
            expansion: config.expansion,
            retained,
            discarded,
            final_layer,
        })
    }

    /// Same shapes as `config`, every entry zero (also the gradient container).
    pub fn zeros(config: &HeadConfig) -> Self {
        let m = config.classes;
        Self {
            classes: m,
            expansion: config.expansion,
            retained: Dense::zeros(m, m),
            discarded: config.recycle.then(|| DiscardedHead::zeros(m, config.expansion)),
            final_layer: config.final_layer.then(|| Dense::zeros(m, m)),
        }
    }

    pub fn config(&self) -> HeadConfig {
        HeadConfig {
            classes: self.classes,
            expansion: self.expansion,
            final_layer: self.final_layer.is_some(),
            recycle: self.discarded.is_some(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config())
    }

    fn layers(&self) -> Vec<&Dense> {
        let mut v = vec![&self.retained];
        if let Some(d) = &self.discarded {
            v.extend([&d.project, &d.expand, &d.recover]);
        }
        if let Some(f) = &self.final_layer {
            v.push(f);
        }
        v
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut v = vec![&mut self.retained];
        if let Some(d) = &mut self.discarded {
            v.extend([&mut d.project, &mut d.expand, &mut d.recover]);
        }
        if let Some(f) = &mut self.final_layer {
            v.push(f);
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Layer weights then biases, in the order retained, project, expand,
    /// recover, final.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} head parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut rest = flat;
        for l in self.layers_mut() {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.config().validate()?;
        let m = self.classes;
        let k = self.expansion;
        let expect = |d: &Dense, r: usize, c: usize| -> Result<()> {
            d.check()?;
            if d.rows != r || d.cols != c {
                return Err(Error::Shape(format!("layer is {}x{}, expected {r}x{c}", d.rows, d.cols)));
            }
            Ok(())
        };
        expect(&self.retained, m, m)?;
        if let Some(d) = &self.discarded {
            expect(&d.project, m, m)?;
            expect(&d.expand, m * k, m)?;
            expect(&d.recover, m, m * k)?;
        }
        if let Some(f) = &self.final_layer {
            expect(f, m, m)?;
        }
        Ok(())
    }

    /// Runs rescale, heads, fusion and the optional final layer.
    pub fn activations(&self, features: &QuantumFeatures) -> Result<HeadActivations> {
        let retained_scaled = rescale(&features.retained)?;
        let retained_out = retained_head(&retained_scaled, &self.retained)?;
        let (discarded_scaled, discarded, fused) = match (&self.discarded, &features.discarded) {
            (Some(head), Some(p)) => {
                let x = rescale(p)?;
                let acts = head.activations(&x)?;
                let fused = fuse(&retained_out, &acts.output)?;
                (Some(x), Some(acts), fused)
            }
            (None, _) => (None, None, retained_out.clone()),
            (Some(_), None) => {
                return Err(Error::Shape("recycled heads need discarded-wire features".into()));
            }
        };
        let logits = match &self.final_layer {
            Some(f) => f.affine(&fused)?,
            None => fused.clone(),
        };
        Ok(HeadActivations {
            retained_scaled,
            retained_out,
            discarded_scaled,
            discarded,
            fused,
            logits,
        })
    }

    pub fn logits(&self, features: &QuantumFeatures) -> Result<Vec<f64>> {
        Ok(self.activations(features)?.logits)
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.expansion == 0 {
            return Err(Error::Config("class count and expansion factor must be positive".into()));
        }
        Ok(())
    }

    /// Closed-form classical parameter count: `m² + m` for the retained head,
    /// `(m² + m) + (k m² + k m) + (k m² + m)` for the discarded head and
    /// `m² + m` for the final layer.
    pub fn param_count(&self) -> usize {
        let m = self.classes;
        let k = self.expansion;
        let mut n = m * m + m;
        if self.recycle {
            n += (m * m + m) + (k * m * m + k * m) + (k * m * m + m);
        }
        if self.final_layer {
            n += m * m + m;
        }
        n
    }
}
