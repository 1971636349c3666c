//! A small from-scratch MLP trainer.
//!
//! `input -> [ReLU hidden]* -> feature -> head`, trained with cross-entropy on
//! either the plain softmax or the L2-softmax (feature rescaled to norm `s`
//! before the head). The feature layer is the last hidden layer; with no
//! hidden layers the model is a linear classifier on the raw input.
//!
//! Everything is `f64`, single-threaded and deterministic given the seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::division::{Divider, TiePolicy};
use crate::error::{Error, Result};
use crate::geometry::ClassifierHead;
use crate::metrics::LabeledFeatureSet;
use crate::scalar::norm;
use crate::sensitivity::{gradient_magnitude_summary, BiasHandling, GradientSummary};

/// Raw-input features below this norm are treated as dead for L2-softmax.
const DEAD_FEATURE: f64 = 1e-12;

fn default_prototype_scale() -> f64 {
    1.0
}

/// Gaussian blobs around random unit-sphere prototypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_classes: usize,
    pub input_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Expected norm of the isotropic noise (per-coordinate std `spread / sqrt(dim)`).
    pub spread: f64,
    /// Number of nuisance groups; sample `k` of every class belongs to group `k % groups`.
    #[serde(default)]
    pub nuisance_groups: usize,
    /// Norm of the per-group offset vector.
    #[serde(default)]
    pub group_offset: f64,
    /// Use this group as the test split instead of an i.i.d. split.
    #[serde(default)]
    pub holdout_group: Option<usize>,
    #[serde(default = "default_prototype_scale")]
    pub prototype_scale: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::BadSpec(format!("need at least 2 classes, got {}", self.n_classes)));
        }
        if self.input_dim == 0 || self.train_per_class + self.test_per_class == 0 {
            return Err(Error::BadSpec("empty dataset".into()));
        }
        if !(self.spread > 0.0) || !self.spread.is_finite() {
            return Err(Error::BadSpec(format!("spread must be positive, got {}", self.spread)));
        }
        if !(self.group_offset >= 0.0) || !(self.prototype_scale > 0.0) {
            return Err(Error::BadSpec("group offset must be >= 0 and prototype scale > 0".into()));
        }
        if let Some(g) = self.holdout_group {
            if g >= self.nuisance_groups {
                return Err(Error::BadSpec(format!("holdout group {g} but only {} groups", self.nuisance_groups)));
            }
        }
        Ok(())
    }

    pub fn samples_per_class(&self) -> usize {
        self.train_per_class + self.test_per_class
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn scaled_unit(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    loop {
        let g = gaussian(rng, n);
        let len = norm(&g);
        if len > 1e-8 {
            return g.into_iter().map(|x| scale * x / len).collect();
        }
    }
}

/// Train and test sets of raw inputs. Sample ids are the generation order,
/// identical for any two specs with the same class count, sample counts and
/// group count, so two modalities can be aligned by id.
pub fn make_synthetic_dataset(spec: &DatasetSpec) -> Result<(LabeledFeatureSet<f64>, LabeledFeatureSet<f64>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.input_dim;
    let prototypes: Vec<Vec<f64>> = (0..spec.n_classes).map(|_| scaled_unit(&mut rng, d, spec.prototype_scale)).collect();
    let offsets: Vec<Vec<f64>> = (0..spec.nuisance_groups).map(|_| scaled_unit(&mut rng, d, spec.group_offset)).collect();
    let sigma = spec.spread / (d as f64).sqrt();
    let names: Vec<String> = (0..spec.n_classes).map(|c| format!("c{c}")).collect();

    let mut parts = [(Vec::new(), Vec::new(), Vec::new(), Vec::new()), (Vec::new(), Vec::new(), Vec::new(), Vec::new())];
    let mut id = 0;
    for (class, proto) in prototypes.iter().enumerate() {
        for k in 0..spec.samples_per_class() {
            let group = if spec.nuisance_groups > 0 { k % spec.nuisance_groups } else { 0 };
            let noise = gaussian(&mut rng, d);
            let x: Vec<f64> = (0..d)
                .map(|i| proto[i] + offsets.get(group).map_or(0.0, |o| o[i]) + sigma * noise[i])
                .collect();
            let is_test = match spec.holdout_group {
                Some(g) => group == g,
                None => k >= spec.train_per_class,
            };
            let p = &mut parts[is_test as usize];
            p.0.push(x);
            p.1.push(class);
            p.2.push(group);
            p.3.push(id);
            id += 1;
        }
    }
    let [tr, te] = parts;
    let build = |(v, l, g, i): (Vec<Vec<f64>>, Vec<usize>, Vec<usize>, Vec<usize>), split| -> Result<_> {
        Ok(LabeledFeatureSet::new(v, l, names.clone())?.with_groups(g)?.with_ids(i)?.with_split(split))
    };
    Ok((build(tr, crate::metrics::Split::Train)?, build(te, crate::metrics::Split::Test)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    Softmax,
    L2Softmax { scale: f64 },
}

impl Loss {
    pub fn scale(&self) -> Option<f64> {
        match *self {
            Loss::Softmax => None,
            Loss::L2Softmax { scale } => Some(scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Layer layout; the input and class counts come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// ReLU layer widths; the last one is the feature layer.
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub head_bias: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: vec![64, 16], head_bias: false }
    }
}

fn default_probe() -> usize {
    256
}

fn default_decay() -> f64 {
    1.0
}

fn default_decay_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: Loss,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// Learning rate is multiplied by `lr_decay` every `decay_every` steps.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_decay_every")]
    pub decay_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_probe")]
    pub probe_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if let Loss::L2Softmax { scale } = self.loss {
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::BadSpec(format!("L2-softmax scale must be > 0, got {scale}")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::BadSpec("epochs, batch size and decay interval must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::BadSpec("learning rate must be >= 0 and decay > 0".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((step / self.decay_every) as i32)
    }
}

/// Everything a `train` run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelSpec,
    pub train: TrainConfig,
}

impl TrainJob {
    /// The same job with dataset and training seeds replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut job = self.clone();
        job.dataset.seed = seed;
        job.train.seed = seed;
        job
    }
}

/// Dense ReLU network with a linear head.
///
/// `params[2l]` is the row-major `sizes[l+1] × sizes[l]` weight of layer `l`,
/// `params[2l+1]` its bias (empty for a bias-free head).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPModel {
    pub sizes: Vec<usize>,
    pub loss: Loss,
    pub params: Vec<Vec<f64>>,
}

struct Forward {
    /// Activations per layer, `acts[0]` is the input, the last is the feature.
    acts: Vec<Vec<f64>>,
    head_input: Vec<f64>,
    logits: Vec<f64>,
}

fn matvec(w: &[f64], b: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b.get(r).copied().unwrap_or(0.0)
        })
        .collect()
}

fn log_softmax_at(z: &[f64], y: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z[y] - lse
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

impl MLPModel {
    pub fn init(spec: &ModelSpec, input_dim: usize, n_classes: usize, loss: Loss, rng: &mut ChaCha8Rng) -> Result<Self> {
        if input_dim == 0 || n_classes < 2 || spec.hidden.contains(&0) {
            return Err(Error::BadSpec("layer widths must be positive with >= 2 classes".into()));
        }
        let mut sizes = vec![input_dim];
        sizes.extend(&spec.hidden);
        sizes.push(n_classes);
        let n_layers = sizes.len() - 1;
        let mut params = Vec::with_capacity(2 * n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let head = l + 1 == n_layers;
            // He-uniform for ReLU layers, LeCun-uniform for the head
            let bound = if head { (3.0 / fan_in as f64).sqrt() } else { (6.0 / fan_in as f64).sqrt() };
            params.push((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect());
            params.push(if head && !spec.head_bias { Vec::new() } else { vec![0.0; fan_out] });
        }
        Ok(Self { sizes, loss, params })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 2]
    }

    pub fn n_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn has_head_bias(&self) -> bool {
        !self.params[2 * self.n_layers() - 1].is_empty()
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let n_layers = self.n_layers();
        let mut acts = Vec::with_capacity(n_layers);
        acts.push(x.to_vec());
        for l in 0..n_layers - 1 {
            let pre = matvec(&self.params[2 * l], &self.params[2 * l + 1], &acts[l], self.sizes[l + 1]);
            acts.push(pre.into_iter().map(|v| v.max(0.0)).collect());
        }
        let feature = acts.last().unwrap();
        let head_input = match self.loss {
            Loss::Softmax => feature.clone(),
            Loss::L2Softmax { scale } => {
                let len = norm(feature);
                if len < DEAD_FEATURE {
                    vec![0.0; feature.len()]
                } else {
                    feature.iter().map(|v| scale * v / len).collect()
                }
            }
        };
        let l = n_layers - 1;
        let logits = matvec(&self.params[2 * l], &self.params[2 * l + 1], &head_input, self.sizes[l + 1]);
        Forward { acts, head_input, logits }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).logits
    }

    /// Penultimate (post-ReLU) activations.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).acts.pop().unwrap()
    }

    /// What the head actually sees: the feature, or `s·a/‖a‖` under L2-softmax.
    pub fn head_input(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).head_input
    }

    /// Logit argmax, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn head(&self) -> Result<ClassifierHead<f64>> {
        let l = self.n_layers() - 1;
        let cols = self.sizes[l];
        let w = &self.params[2 * l];
        let rows = (0..self.n_classes()).map(|r| w[r * cols..(r + 1) * cols].to_vec()).collect();
        let bias = self.has_head_bias().then(|| self.params[2 * l + 1].clone());
        ClassifierHead::unnamed(rows, bias)
    }

    /// Mean cross-entropy over the given rows, and its gradient w.r.t. every parameter.
    fn loss_and_grad(&self, set: &LabeledFeatureSet<f64>, rows: &[usize]) -> (f64, Vec<Vec<f64>>) {
        let n_layers = self.n_layers();
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let inv = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &r in rows {
            let x = &set.vectors()[r];
            let y = set.labels()[r];
            let fw = self.forward(x);
            loss -= log_softmax_at(&fw.logits, y) * inv;

            let mut gz = crate::sensitivity::softmax(&fw.logits);
            gz[y] -= 1.0;
            gz.iter_mut().for_each(|g| *g *= inv);

            // head
            let l = n_layers - 1;
            let cols = self.sizes[l];
            let w = &self.params[2 * l];
            let mut gh = vec![0.0; cols];
            for (o, &g) in gz.iter().enumerate() {
                let row = &mut grads[2 * l][o * cols..(o + 1) * cols];
                for (c, gw) in row.iter_mut().enumerate() {
                    *gw += g * fw.head_input[c];
                    gh[c] += g * w[o * cols + c];
                }
                if !grads[2 * l + 1].is_empty() {
                    grads[2 * l + 1][o] += g;
                }
            }

            // through the normalization
            let mut ga = match self.loss {
                Loss::Softmax => gh,
                Loss::L2Softmax { scale } => {
                    let feat = fw.acts.last().unwrap();
                    let len = norm(feat);
                    if len < DEAD_FEATURE {
                        vec![0.0; cols]
                    } else {
                        let proj: f64 = feat.iter().zip(&gh).map(|(a, g)| a * g).sum::<f64>() / (len * len);
                        gh.iter().zip(feat).map(|(g, a)| scale / len * (g - a * proj)).collect()
                    }
                }
            };

            // hidden layers, top down
            for l in (0..n_layers - 1).rev() {
                let cols = self.sizes[l];
                let out = &fw.acts[l + 1];
                let inp = &fw.acts[l];
                let w = &self.params[2 * l];
                let mut prev = vec![0.0; cols];
                for o in 0..self.sizes[l + 1] {
                    if out[o] <= 0.0 {
                        continue;
                    }
                    let g = ga[o];
                    grads[2 * l + 1][o] += g;
                    let row = &mut grads[2 * l][o * cols..(o + 1) * cols];
                    for c in 0..cols {
                        row[c] += g * inp[c];
                        prev[c] += g * w[o * cols + c];
                    }
                }
                ga = prev;
            }
        }
        (loss, grads)
    }

    /// Mean cross-entropy and accuracy.
    pub fn evaluate(&self, set: &LabeledFeatureSet<f64>) -> (f64, f64) {
        if set.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let mut loss = 0.0;
        let mut correct = 0;
        for (x, &y) in set.vectors().iter().zip(set.labels()) {
            let z = self.logits(x);
            loss -= log_softmax_at(&z, y);
            correct += (argmax(&z) == y) as usize;
        }
        let m = set.len() as f64;
        (loss / m, correct as f64 / m)
    }
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the state at initialization.
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Softmax partials on the fixed probe batch, at the head input.
    pub probe: Option<GradientSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub probe_rows: Vec<usize>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("trace has the initial record")
    }

    /// Test over train cross-entropy at the last epoch.
    pub fn loss_ratio(&self) -> Option<f64> {
        let last = self.last();
        last.test_loss.map(|t| t / last.train_loss)
    }
}

fn probe_summary(model: &MLPModel, set: &LabeledFeatureSet<f64>, rows: &[usize]) -> Option<GradientSummary> {
    let head = model.head().ok()?;
    let inputs: Vec<Vec<f64>> = rows.iter().map(|&r| model.head_input(&set.vectors()[r])).collect();
    let live: Vec<&Vec<f64>> = inputs.iter().filter(|v| norm(v) > 0.0).collect();
    gradient_magnitude_summary(live.iter().map(|v| (v.as_slice(), &head)), BiasHandling::FoldOut).ok()
}

enum OptState {
    Sgd,
    Adam { m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: i32 },
}

/// Trains a freshly initialized model. The seed drives initialization, the
/// probe selection and the per-epoch shuffles.
pub fn train(
    spec: &ModelSpec,
    config: &TrainConfig,
    train_set: &LabeledFeatureSet<f64>,
    test_set: Option<&LabeledFeatureSet<f64>>,
) -> Result<(MLPModel, TrainTrace)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if let Some(t) = test_set {
        if !t.is_empty() && t.dim() != train_set.dim() {
            return Err(Error::DimensionMismatch { expected: train_set.dim(), found: t.dim() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = MLPModel::init(spec, train_set.dim(), train_set.n_classes(), config.loss, &mut rng)?;
    train_model(model, config, train_set, test_set, &mut rng)
}

/// Continues training an existing model.
pub fn train_model(
    mut model: MLPModel,
    config: &TrainConfig,
    train_set: &LabeledFeatureSet<f64>,
    test_set: Option<&LabeledFeatureSet<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<(MLPModel, TrainTrace)> {
    config.validate()?;
    let m = train_set.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let probe_rows: Vec<usize> = order[..config.probe_size.min(m)].to_vec();
    let mut trace = TrainTrace { probe_rows, epochs: Vec::with_capacity(config.epochs + 1) };

    let record = |model: &MLPModel, epoch: usize, lr: f64, trace: &TrainTrace| -> EpochRecord {
        let (train_loss, train_accuracy) = model.evaluate(train_set);
        let test = test_set.filter(|t| !t.is_empty()).map(|t| model.evaluate(t));
        EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss,
            train_accuracy,
            test_loss: test.map(|t| t.0),
            test_accuracy: test.map(|t| t.1),
            probe: probe_summary(model, train_set, &trace.probe_rows),
        }
    };
    let first = record(&model, 0, config.lr_at(0), &trace);
    trace.epochs.push(first);

    let mut state = match config.optimizer {
        Optimizer::Sgd => OptState::Sgd,
        Optimizer::Adam { .. } => OptState::Adam {
            m: model.params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: model.params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        },
    };
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        for batch in order.chunks(config.batch_size) {
            let lr = config.lr_at(step);
            let (loss, grads) = model.loss_and_grad(train_set, batch);
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected { epoch, trace: Box::new(trace) });
            }
            match (&mut state, config.optimizer) {
                (OptState::Adam { m, v, t }, Optimizer::Adam { beta1, beta2, eps }) => {
                    *t += 1;
                    let c1 = 1.0 - beta1.powi(*t);
                    let c2 = 1.0 - beta2.powi(*t);
                    for (k, g) in grads.iter().enumerate() {
                        for (i, &gi) in g.iter().enumerate() {
                            m[k][i] = beta1 * m[k][i] + (1.0 - beta1) * gi;
                            v[k][i] = beta2 * v[k][i] + (1.0 - beta2) * gi * gi;
                            model.params[k][i] -= lr * (m[k][i] / c1) / ((v[k][i] / c2).sqrt() + eps);
                        }
                    }
                }
                _ => {
                    for (p, g) in model.params.iter_mut().zip(&grads) {
                        p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
                    }
                }
            }
            step += 1;
        }
        let rec = record(&model, epoch, config.lr_at(step), &trace);
        let finite = rec.train_loss.is_finite() && rec.test_loss.map_or(true, f64::is_finite);
        trace.epochs.push(rec);
        if !finite || model.params.iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::DivergenceDetected { epoch, trace: Box::new(trace) });
        }
    }
    Ok((model, trace))
}

/// Per-tensor relative error `‖g_a - g_n‖ / max(‖g_a‖, ‖g_n‖)` between the
/// backward pass and central differences of the mean loss over `rows`.
pub fn gradient_check(model: &MLPModel, set: &LabeledFeatureSet<f64>, rows: &[usize], step: f64) -> Vec<f64> {
    let (_, analytic) = model.loss_and_grad(set, rows);
    let mut probe = model.clone();
    let mut errors = Vec::with_capacity(model.params.len());
    for (k, tensor) in analytic.iter().enumerate() {
        if tensor.is_empty() {
            continue;
        }
        let mut numeric = vec![0.0; tensor.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.params[k][i];
            probe.params[k][i] = orig + step;
            let up = probe.loss_and_grad(set, rows).0;
            probe.params[k][i] = orig - step;
            let down = probe.loss_and_grad(set, rows).0;
            probe.params[k][i] = orig;
            *slot = (up - down) / (2.0 * step);
        }
        let diff = norm(&tensor.iter().zip(&numeric).map(|(a, b)| a - b).collect::<Vec<_>>());
        let scale = norm(tensor).max(norm(&numeric));
        errors.push(if scale == 0.0 { 0.0 } else { diff / scale });
    }
    errors
}

/// Exported penultimate features and head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExport {
    /// Post-ReLU activations; unnormalized even under L2-softmax.
    pub features: LabeledFeatureSet<f64>,
    pub head: ClassifierHead<f64>,
    /// L2-softmax scale, if the head was trained on `s·a/‖a‖`.
    pub scale: Option<f64>,
}

pub fn export_features(model: &MLPModel, set: &LabeledFeatureSet<f64>) -> Result<FeatureExport> {
    let vectors: Vec<Vec<f64>> = set.vectors().iter().map(|x| model.features(x)).collect();
    let mut features = LabeledFeatureSet::new(vectors, set.labels().to_vec(), set.class_names().to_vec())?.with_split(set.split());
    if let Some(g) = set.groups() {
        features = features.with_groups(g.to_vec())?;
    }
    if let Some(i) = set.ids() {
        features = features.with_ids(i.to_vec())?;
    }
    let head = model.head()?;
    let head = ClassifierHead::new(head.weights().to_vec(), head.bias().map(<[f64]>::to_vec), set.class_names().to_vec())?;
    Ok(FeatureExport { features, head, scale: model.loss.scale() })
}

/// `region_of` on every exported feature (lowest index on ties, matching
/// [`MLPModel::predict`]).
pub fn exported_regions(export: &FeatureExport) -> Result<Vec<usize>> {
    let divider = Divider::new(&export.head)?.with_ties(TiePolicy::LowestIndex);
    export
        .features
        .vectors()
        .iter()
        .map(|a| {
            if export.head.has_bias() {
                let mut e = a.clone();
                e.push(1.0);
                divider.region_of(&e)
            } else {
                divider.region_of(a)
            }
        })
        .collect()
}

/// Mean over classes of the mean pairwise cosine distance within the class.
pub fn mean_intra_class_distance(set: &LabeledFeatureSet<f64>) -> Result<f64> {
    let mut per_class = Vec::new();
    for class in 0..set.n_classes() {
        let units: Vec<Vec<f64>> = set
            .vectors()
            .iter()
            .zip(set.labels())
            .filter(|(v, &l)| l == class && norm(v) > 0.0)
            .map(|(v, _)| {
                let n = norm(v);
                v.iter().map(|x| x / n).collect()
            })
            .collect();
        if units.len() < 2 {
            continue;
        }
        let mut acc = Vec::new();
        for i in 0..units.len() {
            for j in i + 1..units.len() {
                acc.push(1.0 - crate::scalar::dot(&units[i], &units[j]));
            }
        }
        per_class.push(crate::scalar::compensated_sum(acc.iter().copied()) / acc.len() as f64);
    }
    if per_class.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> DatasetSpec {
        DatasetSpec {
            n_classes: 3,
            input_dim: 6,
            train_per_class: 20,
            test_per_class: 10,
            spread: 0.3,
            nuisance_groups: 0,
            group_offset: 0.0,
            holdout_group: None,
            prototype_scale: 1.0,
            seed,
        }
    }

    fn config(seed: u64) -> TrainConfig {
        TrainConfig {
            loss: Loss::Softmax,
            optimizer: Optimizer::adam(),
            learning_rate: 0.01,
            lr_decay: 1.0,
            decay_every: 1,
            batch_size: 16,
            epochs: 5,
            seed,
            probe_size: 256,
        }
    }

    #[test]
    fn dataset_is_deterministic_and_counted() {
        let (a, b) = make_synthetic_dataset(&spec(1)).unwrap();
        let (c, d) = make_synthetic_dataset(&spec(1)).unwrap();
        assert_eq!(a, c);
        assert_eq!(b, d);
        assert_eq!((a.len(), b.len()), (60, 30));
        assert_ne!(a, make_synthetic_dataset(&spec(2)).unwrap().0);
    }

    #[test]
    fn holdout_group_becomes_test() {
        let mut s = spec(3);
        s.nuisance_groups = 3;
        s.group_offset = 1.0;
        s.holdout_group = Some(2);
        let (tr, te) = make_synthetic_dataset(&s).unwrap();
        assert!(te.groups().unwrap().iter().all(|&g| g == 2));
        assert!(tr.groups().unwrap().iter().all(|&g| g != 2));
        assert_eq!(tr.len() + te.len(), 90);
    }

    #[test]
    fn bad_specs() {
        let mut s = spec(0);
        s.spread = 0.0;
        assert!(matches!(make_synthetic_dataset(&s), Err(Error::BadSpec(_))));
        let mut s = spec(0);
        s.n_classes = 1;
        assert!(matches!(make_synthetic_dataset(&s), Err(Error::BadSpec(_))));
        let mut c = config(0);
        c.loss = Loss::L2Softmax { scale: 0.0 };
        assert!(matches!(c.validate(), Err(Error::BadSpec(_))));
    }

    #[test]
    fn gradient_check_at_init() {
        let (tr, _) = make_synthetic_dataset(&spec(5)).unwrap();
        for loss in [Loss::Softmax, Loss::L2Softmax { scale: 3.0 }] {
            for head_bias in [false, true] {
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                let model = MLPModel::init(&ModelSpec { hidden: vec![8, 5], head_bias }, 6, 3, loss, &mut rng).unwrap();
                let errs = gradient_check(&model, &tr, &[0, 25, 50], 1e-5);
                assert!(errs.iter().all(|&e| e < 1e-4), "{loss:?} {errs:?}");
            }
        }
    }

    #[test]
    fn loss_is_shift_invariant() {
        let z = [0.3, -1.2, 2.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        assert!((log_softmax_at(&z, 1) - log_softmax_at(&shifted, 1)).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (tr, _) = make_synthetic_dataset(&spec(6)).unwrap();
        let mut cfg = config(4);
        cfg.learning_rate = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = MLPModel::init(&ModelSpec::default(), 6, 3, cfg.loss, &mut rng).unwrap();
        let (trained, _) = train(&ModelSpec::default(), &cfg, &tr, None).unwrap();
        assert_eq!(init.params, trained.params);
        let (sgd, _) = train(&ModelSpec::default(), &TrainConfig { optimizer: Optimizer::Sgd, ..cfg }, &tr, None).unwrap();
        assert_eq!(init.params, sgd.params);
    }

    #[test]
    fn training_is_deterministic() {
        let (tr, te) = make_synthetic_dataset(&spec(7)).unwrap();
        let a = train(&ModelSpec::default(), &config(1), &tr, Some(&te)).unwrap();
        let b = train(&ModelSpec::default(), &config(1), &tr, Some(&te)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.epochs.len(), 6);
    }

    #[test]
    fn separable_data_is_learned() {
        let mut s = spec(8);
        s.n_classes = 2;
        s.spread = 0.2;
        s.train_per_class = 50;
        let (tr, te) = make_synthetic_dataset(&s).unwrap();
        let mut cfg = config(2);
        cfg.epochs = 50;
        let (_, trace) = train(&ModelSpec { hidden: vec![16], head_bias: false }, &cfg, &tr, Some(&te)).unwrap();
        assert!(trace.last().train_accuracy >= 0.99);
        assert!(trace.last().train_loss < trace.epochs[0].train_loss);
        assert!(trace.last().probe.is_some());
    }

    #[test]
    fn point_masses_are_fit_perfectly() {
        let mut s = spec(9);
        s.spread = 1e-9;
        let (tr, _) = make_synthetic_dataset(&s).unwrap();
        let mut cfg = config(3);
        cfg.epochs = 60;
        let (_, trace) = train(&ModelSpec::default(), &cfg, &tr, None).unwrap();
        assert_eq!(trace.last().train_accuracy, 1.0);
    }

    #[test]
    fn exported_head_reproduces_predictions() {
        let (tr, _) = make_synthetic_dataset(&spec(10)).unwrap();
        for (loss, head_bias) in [(Loss::Softmax, false), (Loss::Softmax, true), (Loss::L2Softmax { scale: 2.0 }, false)] {
            let cfg = TrainConfig { loss, ..config(5) };
            let (model, _) = train(&ModelSpec { hidden: vec![12, 6], head_bias }, &cfg, &tr, None).unwrap();
            let export = export_features(&model, &tr).unwrap();
            let regions = exported_regions(&export).unwrap();
            for (x, r) in tr.vectors().iter().zip(regions) {
                assert_eq!(model.predict(x), r);
            }
            assert!(export.features.vectors().iter().flatten().all(|&v| v >= 0.0));
            assert_eq!(export.scale, loss.scale());
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (tr, _) = make_synthetic_dataset(&spec(11)).unwrap();
        let cfg = TrainConfig { optimizer: Optimizer::Sgd, learning_rate: 1e300, ..config(0) };
        match train(&ModelSpec::default(), &cfg, &tr, None) {
            Err(Error::DivergenceDetected { epoch, trace }) => {
                assert_eq!(epoch, 1);
                assert_eq!(trace.epochs.len(), 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
