//! Experiment orchestration: data loading, the Adam training loop,
//! evaluation and output files.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod metrics;

use std::fmt::Write as _;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Sample};
use crate::error::{Error, Result};
use crate::heads::NUM_CLASSES;
use crate::model::{HybridModel, ModelGrad, ModelSpec};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use config::{EncoderChoice, Source, TrainConfig};
pub use metrics::{compute_metrics, Metrics};

/// Loop settings independent of the data source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 16,
            iterations: 600,
            seed: 0,
            eval_every: 50,
        }
    }
}

impl From<&TrainConfig> for TrainOptions {
    fn from(c: &TrainConfig) -> Self {
        Self {
            adam: c.adam(),
            batch_size: c.batch_size,
            iterations: c.iterations,
            seed: c.seed,
            eval_every: c.eval_every,
        }
    }
}

/// One row of `curves.csv`; train values are for the mini-batch of that iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub iter: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub param_count: usize,
    pub iterations: usize,
    pub train: Metrics,
    pub test: Metrics,
    #[serde(skip)]
    pub curves: Vec<CurveRecord>,
    #[serde(skip)]
    pub checkpoint: Option<Checkpoint>,
}

/// Cycles through seeded permutations of `0..n`.
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Mean gradient over `batch`, summed in batch order so results do not
/// depend on thread scheduling. Returns the gradient and the batch accuracy.
pub fn batch_gradient(model: &HybridModel, batch: &[&Sample]) -> Result<(ModelGrad, f64)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let per_sample: Vec<(ModelGrad, usize)> = batch
        .par_iter()
        .map(|s| model.sample_grad(&s.features, s.label))
        .collect::<Result<_>>()?;
    let mut total = ModelGrad::zeros(model);
    let mut correct = 0;
    for ((g, pred), s) in per_sample.iter().zip(batch) {
        total.add(g);
        correct += (*pred == s.label) as usize;
    }
    total.scale(1.0 / batch.len() as f64);
    Ok((total, correct as f64 / batch.len() as f64))
}

/// One Adam update of every parameter; returns the batch loss and accuracy.
pub fn train_step(model: &mut HybridModel, adam: &mut Adam, batch: &[&Sample], iteration: usize) -> Result<(f64, f64)> {
    let (grad, acc) = batch_gradient(model, batch)?;
    if !grad.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration,
            detail: format!("loss {} or a gradient entry is not finite", grad.loss),
        });
    }
    let mut flat = model.to_flat();
    let g: Vec<f64> = grad.quantum.iter().chain(&grad.heads).copied().collect();
    adam.step(&mut flat, &g)?;
    model.assign_flat(&flat)?;
    Ok((grad.loss, acc))
}

pub fn predictions(model: &HybridModel, samples: &[Sample]) -> Result<Vec<usize>> {
    samples.par_iter().map(|s| model.predict(&s.features)).collect()
}

pub fn evaluate(model: &HybridModel, samples: &[Sample]) -> Result<Metrics> {
    let pred = predictions(model, samples)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    compute_metrics(&labels, &pred)
}

fn check_samples(model: &HybridModel, samples: &[Sample], what: &str) -> Result<()> {
    let dim = model.spec.encoder.feature_dim();
    if let Some(s) = samples.iter().find(|s| s.features.dim() != dim) {
        return Err(Error::Config(format!(
            "{what} sample has {} features but the {} encoder needs {dim}",
            s.features.dim(),
            model.spec.encoder
        )));
    }
    Ok(())
}

/// Runs the mini-batch loop on `model` in place and returns the curve records.
pub fn train_model(model: &mut HybridModel, opts: &TrainOptions, train: &[Sample], test: &[Sample]) -> Result<Vec<CurveRecord>> {
    opts.adam.validate()?;
    if train.is_empty() || opts.batch_size == 0 || opts.eval_every == 0 {
        return Err(Error::Config("need training samples, a positive batch size and eval interval".into()));
    }
    check_samples(model, train, "training")?;
    check_samples(model, test, "test")?;
    let mut adam = Adam::new(opts.adam, model.param_count());
    let mut sampler = BatchSampler::new(train.len(), opts.seed);
    let mut curves = Vec::with_capacity(opts.iterations);
    for it in 1..=opts.iterations {
        let batch: Vec<&Sample> = sampler.next_batch(opts.batch_size).into_iter().map(|i| &train[i]).collect();
        let (loss, acc) = train_step(model, &mut adam, &batch, it)?;
        let test_acc = if !test.is_empty() && (it % opts.eval_every == 0 || it == opts.iterations) {
            Some(evaluate(model, test)?.accuracy)
        } else {
            None
        };
        if let Some(t) = test_acc {
            info!("iter {it}: batch loss {loss:.4}, batch acc {acc:.3}, test acc {t:.4}");
        }
        curves.push(CurveRecord { iter: it, train_loss: loss, train_acc: acc, test_acc });
    }
    Ok(curves)
}

/// Initializes a model from `spec`, trains it and measures it on both sets.
pub fn train_samples(
    spec: ModelSpec,
    opts: &TrainOptions,
    train: &[Sample],
    test: &[Sample],
    classes: &[u8],
) -> Result<TrainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = HybridModel::init(spec, &mut rng)?;
    let param_count = model.param_count();
    info!(
        "model has {param_count} trainable parameters ({} quantum, {} classical)",
        model.quantum.len(),
        model.heads.param_count()
    );
    let curves = train_model(&mut model, opts, train, test)?;
    Ok(TrainReport {
        param_count,
        iterations: opts.iterations,
        train: evaluate(&model, train)?,
        test: evaluate(&model, test)?,
        curves,
        checkpoint: Some(Checkpoint::from_model(&model, classes)),
    })
}

pub fn model_spec(cfg: &TrainConfig) -> Result<ModelSpec> {
    Ok(ModelSpec {
        encoder: cfg.encoder()?,
        layout: cfg.layout()?,
        heads: cfg.head_config(),
    })
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("missing {key}")))
}

/// Loads, filters, subsets and preprocesses the train and test samples.
pub fn load_samples(cfg: &TrainConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    cfg.validate()?;
    let encoder = cfg.encoder()?;
    let (train, test) = match cfg.source {
        Source::Synthetic => {
            let train = data::synthetic_clusters(cfg.train_size, encoder, cfg.synthetic_noise, cfg.seed)?;
            let test = data::synthetic_clusters(cfg.test_size, encoder, cfg.synthetic_noise, cfg.seed.wrapping_add(1))?;
            return Ok((train, test));
        }
        Source::Idx => {
            let train = data::load_idx(required(&cfg.train_images, "train_images")?, required(&cfg.train_labels, "train_labels")?)?;
            let test = data::load_idx(required(&cfg.test_images, "test_images")?, required(&cfg.test_labels, "test_labels")?)?;
            (data::filter_split(&train, &cfg.classes)?, data::filter_split(&test, &cfg.classes)?)
        }
        Source::Csv => {
            let all = data::load_csv(required(&cfg.csv_path, "csv_path")?)?;
            data::split_train_test(&data::filter_split(&all, &cfg.classes)?, cfg.test_fraction, cfg.seed)?
        }
    };
    let train = data::take_subset(&train, cfg.train_size, cfg.seed);
    let test = data::take_subset(&test, cfg.test_size, cfg.seed.wrapping_add(1));
    if train.is_empty() || test.is_empty() {
        return Err(Error::ClassSplit(format!("classes {:?} leave an empty train or test set", cfg.classes)));
    }
    let grid = cfg.grid();
    Ok((data::to_samples(&train, encoder, grid)?, data::to_samples(&test, encoder, grid)?))
}

pub fn run_train(cfg: &TrainConfig) -> Result<TrainReport> {
    let (train, test) = load_samples(cfg)?;
    info!("loaded {} training and {} test samples", train.len(), test.len());
    train_samples(model_spec(cfg)?, &TrainOptions::from(cfg), &train, &test, &cfg.classes)
}

/// Test-set metrics of a stored model on the data described by `cfg`.
pub fn run_eval(checkpoint: &Checkpoint, cfg: &TrainConfig) -> Result<Metrics> {
    let model = checkpoint.to_model()?;
    let mut cfg = cfg.clone();
    cfg.encoder = match model.spec.encoder {
        crate::encoding::Encoder::Amplitude => EncoderChoice::Amplitude,
        crate::encoding::Encoder::Angle => EncoderChoice::Angle,
    };
    if checkpoint.classes != cfg.classes {
        return Err(Error::Config(format!(
            "checkpoint classes {:?} differ from config classes {:?}",
            checkpoint.classes, cfg.classes
        )));
    }
    let (_, test) = load_samples(&cfg)?;
    evaluate(&model, &test)
}

pub const CURVES_HEADER: &str = "iter,train_loss,train_acc,test_acc";

pub fn curves_csv(curves: &[CurveRecord]) -> String {
    let mut s = format!("{CURVES_HEADER}\n");
    for c in curves {
        let test = c.test_acc.map(|t| t.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{},{}", c.iter, c.train_loss, c.train_acc, test).expect("writing to a String");
    }
    s
}

/// Rows are true classes, columns predicted classes.
pub fn confusion_csv(m: &Metrics) -> String {
    let mut s = String::new();
    for row in &m.confusion {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{}", cells.join(",")).expect("writing to a String");
    }
    s
}

/// Writes `metrics.json`, `curves.csv`, `confusion.csv` (test set) and
/// `checkpoint.json` into `dir`.
pub fn emit_outputs(report: &TrainReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for m in [&report.train, &report.test] {
        if m.count == 0 {
            return Err(Error::EmptyMetrics("metrics cover no samples".into()));
        }
        let total: usize = m.confusion.iter().flatten().sum();
        if total != m.count || m.confusion.len() != NUM_CLASSES {
            return Err(Error::EmptyMetrics(format!("confusion holds {total} of {} samples", m.count)));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("metrics.json", serde_json::to_string_pretty(report)? + "\n")?;
    write("curves.csv", curves_csv(&report.curves))?;
    write("confusion.csv", confusion_csv(&report.test))?;
    if let Some(ck) = &report.checkpoint {
        ck.save(dir.join("checkpoint.json"))?;
    }
    Ok(())
}
