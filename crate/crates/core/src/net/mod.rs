//! Dual-branch classifier: a shared input layer feeds a deep (4-layer) and a
//! shallow (2-layer) Dense → BatchNorm → ReLU stack, whose outputs are mixed
//! by additive attention before the output layer.
//!
//! With hidden width `H`, `F` inputs and `C` classes the parameter count is
//! `8H² + H(F + C + 20) + C` (34 691 for `H = 64`).

mod fusion;
mod layers;
mod optim;

pub use fusion::{AttentionFusion, FusionCache};
pub use layers::{BatchNorm, BnCache, Dense, RunningStats};
pub use optim::{Adam, AdamConfig};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use layers::{relu, relu_backward};

use crate::error::{Error, Result};
use crate::featurize::{FeatureVector, GlycemicClass, N_CLASSES, N_FEATURES};
use crate::models::{log_sum_exp, softmax, Classifier, ModelKind, Probabilities};
use crate::seed::derive_seed;

pub const DEEP_LAYERS: usize = 4;
pub const SHALLOW_LAYERS: usize = 2;

/// Closed-form parameter count for hidden width `h`.
pub fn parameter_count(h: usize) -> usize {
    8 * h * h + h * (N_FEATURES + N_CLASSES + 20) + N_CLASSES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub dense: Dense,
    pub norm: BatchNorm,
}

/// Every trainable tensor. Gradients and optimizer moments share this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub input: Dense,
    pub deep: Vec<Block>,
    pub shallow: Vec<Block>,
    pub fusion: AttentionFusion,
    pub output: Dense,
}

impl NetParams {
    pub fn init(hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let block = |rng: &mut ChaCha8Rng| Block {
            dense: Dense::init(hidden, hidden, rng),
            norm: BatchNorm::new(hidden),
        };
        let input = Dense::init(N_FEATURES, hidden, rng);
        let deep = (0..DEEP_LAYERS).map(|_| block(rng)).collect();
        let shallow = (0..SHALLOW_LAYERS).map(|_| block(rng)).collect();
        let fusion = AttentionFusion::init(hidden, rng);
        let output = Dense::init(hidden, N_CLASSES, rng);
        NetParams {
            input,
            deep,
            shallow,
            fusion,
            output,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.slices_mut().into_iter().for_each(|s| s.fill(0.0));
        z
    }

    pub fn hidden_width(&self) -> usize {
        self.input.outputs()
    }

    /// Flat views of every tensor in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        out.push(
            self.input
                .weight
                .as_slice_memory_order()
                .expect("contiguous"),
        );
        out.push(self.input.bias.as_slice_memory_order().expect("contiguous"));
        for b in self.deep.iter().chain(&self.shallow) {
            out.push(b.dense.weight.as_slice_memory_order().expect("contiguous"));
            out.push(b.dense.bias.as_slice_memory_order().expect("contiguous"));
            out.push(b.norm.gain.as_slice_memory_order().expect("contiguous"));
            out.push(b.norm.shift.as_slice_memory_order().expect("contiguous"));
        }
        out.push(
            self.fusion
                .score
                .as_slice_memory_order()
                .expect("contiguous"),
        );
        out.push(
            self.fusion
                .proj_deep
                .as_slice_memory_order()
                .expect("contiguous"),
        );
        out.push(
            self.fusion
                .proj_shallow
                .as_slice_memory_order()
                .expect("contiguous"),
        );
        out.push(
            self.output
                .weight
                .as_slice_memory_order()
                .expect("contiguous"),
        );
        out.push(
            self.output
                .bias
                .as_slice_memory_order()
                .expect("contiguous"),
        );
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let NetParams {
            input,
            deep,
            shallow,
            fusion,
            output,
        } = self;
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(
            input
                .weight
                .as_slice_memory_order_mut()
                .expect("contiguous"),
        );
        out.push(input.bias.as_slice_memory_order_mut().expect("contiguous"));
        for b in deep.iter_mut().chain(shallow.iter_mut()) {
            out.push(
                b.dense
                    .weight
                    .as_slice_memory_order_mut()
                    .expect("contiguous"),
            );
            out.push(
                b.dense
                    .bias
                    .as_slice_memory_order_mut()
                    .expect("contiguous"),
            );
            out.push(b.norm.gain.as_slice_memory_order_mut().expect("contiguous"));
            out.push(
                b.norm
                    .shift
                    .as_slice_memory_order_mut()
                    .expect("contiguous"),
            );
        }
        out.push(
            fusion
                .score
                .as_slice_memory_order_mut()
                .expect("contiguous"),
        );
        out.push(
            fusion
                .proj_deep
                .as_slice_memory_order_mut()
                .expect("contiguous"),
        );
        out.push(
            fusion
                .proj_shallow
                .as_slice_memory_order_mut()
                .expect("contiguous"),
        );
        out.push(
            output
                .weight
                .as_slice_memory_order_mut()
                .expect("contiguous"),
        );
        out.push(output.bias.as_slice_memory_order_mut().expect("contiguous"));
        out
    }

    /// Parallel to [`Self::slices`]: true for weight matrices, false for
    /// biases, batch-norm gains/shifts and the attention scoring vector.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![true, false];
        for _ in self.deep.iter().chain(&self.shallow) {
            mask.extend([true, false, false, false]);
        }
        mask.extend([false, true, true, true, false]);
        mask
    }

    pub fn count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_width: 64,
            epochs: 300,
            batch_size: 32,
            adam: AdamConfig::default(),
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            class_weighting: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Hyper(msg));
        if self.hidden_width == 0 {
            return bad("hidden width must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch size {} must be at least 2", self.batch_size));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return bad(format!(
                "batch-norm momentum {} must lie in (0, 1)",
                self.bn_momentum
            ));
        }
        if !(self.bn_eps > 0.0) || !(self.adam.step_size >= 0.0) {
            return bad("batch-norm epsilon must be positive and step size non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossGpModel {
    pub config: TrainConfig,
    pub params: NetParams,
    pub deep_stats: Vec<RunningStats>,
    pub shallow_stats: Vec<RunningStats>,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

struct BlockCache {
    input: Array2<f64>,
    norm: BnCache,
    out: Array2<f64>,
}

/// Intermediate values of a forward pass, consumed by [`CrossGpModel::backward`].
pub struct ForwardCache {
    x: Array2<f64>,
    hidden: Array2<f64>,
    deep: Vec<BlockCache>,
    shallow: Vec<BlockCache>,
    fusion: FusionCache,
    fused: Array2<f64>,
    pub logits: Array2<f64>,
}

impl ForwardCache {
    /// B × 2 attention weights, columns (deep, shallow).
    pub fn attention(&self) -> &Array2<f64> {
        &self.fusion.weights
    }
}

/// Per-example class weights: inverse class frequency, normalized to mean one.
pub fn inverse_frequency_weights(y: &[GlycemicClass]) -> [f64; N_CLASSES] {
    let mut counts = [0usize; N_CLASSES];
    y.iter().for_each(|c| counts[c.code()] += 1);
    std::array::from_fn(|k| {
        if counts[k] == 0 {
            0.0
        } else {
            y.len() as f64 / (N_CLASSES * counts[k]) as f64
        }
    })
}

/// Weighted mean softmax cross-entropy, stable via log-sum-exp.
pub fn loss(
    logits: &Array2<f64>,
    labels: &[GlycemicClass],
    class_weights: Option<&[f64; N_CLASSES]>,
) -> f64 {
    let mut total = 0.0;
    let mut norm = 0.0;
    for (row, y) in logits.rows().into_iter().zip(labels) {
        let z = [row[0], row[1], row[2]];
        let w = class_weights.map_or(1.0, |cw| cw[y.code()]);
        total += w * (log_sum_exp(&z) - z[y.code()]);
        norm += w;
    }
    total / norm
}

fn to_matrix(x: &[FeatureVector]) -> Array2<f64> {
    Array2::from_shape_fn((x.len(), N_FEATURES), |(i, j)| x[i][j])
}

impl CrossGpModel {
    pub fn init(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "crossgp/init"));
        let h = config.hidden_width;
        Ok(CrossGpModel {
            config,
            params: NetParams::init(h, &mut rng),
            deep_stats: (0..DEEP_LAYERS).map(|_| RunningStats::new(h)).collect(),
            shallow_stats: (0..SHALLOW_LAYERS).map(|_| RunningStats::new(h)).collect(),
            loss_trace: Vec::new(),
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.params.hidden_width()
    }

    /// Pure forward pass. Train mode normalizes with batch statistics but does
    /// not touch the running statistics; see [`Self::update_running_stats`].
    pub fn forward(&self, x: &Array2<f64>, mode: Mode) -> Result<ForwardCache> {
        if x.ncols() != N_FEATURES {
            return Err(Error::Shape(format!(
                "expected {N_FEATURES} feature columns, got {}",
                x.ncols()
            )));
        }
        if mode == Mode::Train && x.nrows() < 2 {
            return Err(Error::Shape(format!(
                "train-mode batch needs at least 2 rows, got {}",
                x.nrows()
            )));
        }
        let eps = self.config.bn_eps;
        let hidden = relu(self.params.input.forward(x));
        let run = |blocks: &[Block], stats: &[RunningStats]| {
            let mut caches = Vec::with_capacity(blocks.len());
            let mut h = hidden.clone();
            for (b, s) in blocks.iter().zip(stats) {
                let z = b.dense.forward(&h);
                let (y, norm) = match mode {
                    Mode::Train => b.norm.forward_train(&z, eps),
                    Mode::Infer => {
                        let y = b.norm.forward_infer(&z, s, eps);
                        let empty = BnCache {
                            xhat: Array2::zeros((0, 0)),
                            inv_std: s.var.mapv(|v| 1.0 / (v + eps).sqrt()),
                            batch_mean: s.mean.clone(),
                            batch_var: s.var.clone(),
                        };
                        (y, empty)
                    }
                };
                let out = relu(y);
                caches.push(BlockCache {
                    input: std::mem::replace(&mut h, out.clone()),
                    norm,
                    out,
                });
            }
            (h, caches)
        };
        let (h_deep, deep) = run(&self.params.deep, &self.deep_stats);
        let (h_shallow, shallow) = run(&self.params.shallow, &self.shallow_stats);
        let (fused, fusion) = self.params.fusion.forward(&h_deep, &h_shallow);
        let logits = self.params.output.forward(&fused);
        Ok(ForwardCache {
            x: x.clone(),
            hidden,
            deep,
            shallow,
            fusion,
            fused,
            logits,
        })
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let m = self.config.bn_momentum;
        for (s, c) in self.deep_stats.iter_mut().zip(&cache.deep) {
            s.update(&c.norm, m);
        }
        for (s, c) in self.shallow_stats.iter_mut().zip(&cache.shallow) {
            s.update(&c.norm, m);
        }
    }

    /// Exact gradient of [`loss`] for a train-mode forward on the same batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        labels: &[GlycemicClass],
        class_weights: Option<&[f64; N_CLASSES]>,
    ) -> NetParams {
        let p = &self.params;
        let mut grad = p.zeros_like();

        let weights: Vec<f64> = labels
            .iter()
            .map(|y| class_weights.map_or(1.0, |cw| cw[y.code()]))
            .collect();
        let norm: f64 = weights.iter().sum();
        let mut d_logits = Array2::zeros(cache.logits.raw_dim());
        for (i, (row, y)) in cache.logits.rows().into_iter().zip(labels).enumerate() {
            let probs = softmax(&[row[0], row[1], row[2]]);
            for k in 0..N_CLASSES {
                let target = if y.code() == k { 1.0 } else { 0.0 };
                d_logits[[i, k]] = weights[i] * (probs[k] - target) / norm;
            }
        }

        let d_fused = p.output.backward(&cache.fused, &d_logits, &mut grad.output);
        let h_deep = &cache.deep.last().expect("deep branch").out;
        let h_shallow = &cache.shallow.last().expect("shallow branch").out;
        let (d_deep, d_shallow) =
            p.fusion
                .backward(h_deep, h_shallow, &cache.fusion, &d_fused, &mut grad.fusion);

        let branch =
            |blocks: &[Block], caches: &[BlockCache], grads: &mut [Block], mut d: Array2<f64>| {
                for ((b, c), g) in blocks.iter().zip(caches).zip(grads).rev() {
                    let dy = relu_backward(&c.out, &d);
                    let dz = b.norm.backward(&c.norm, &dy, &mut g.norm);
                    d = b.dense.backward(&c.input, &dz, &mut g.dense);
                }
                d
            };
        let d_hidden = branch(&p.deep, &cache.deep, &mut grad.deep, d_deep)
            + branch(&p.shallow, &cache.shallow, &mut grad.shallow, d_shallow);
        let d_input = relu_backward(&cache.hidden, &d_hidden);
        p.input.backward(&cache.x, &d_input, &mut grad.input);
        grad
    }

    fn logits_infer(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x, Mode::Infer)
            .expect("shape checked by caller")
            .logits
    }

    pub fn predict_proba_batch(&self, x: &[FeatureVector]) -> Vec<Probabilities> {
        if x.is_empty() {
            return Vec::new();
        }
        self.logits_infer(&to_matrix(x))
            .rows()
            .into_iter()
            .map(|r| softmax(&[r[0], r[1], r[2]]))
            .collect()
    }
}

/// Mini-batch Adam on the weighted cross-entropy. Shuffling and
/// initialization draw from separate seeded streams.
pub fn train(
    x: &[FeatureVector],
    y: &[GlycemicClass],
    config: &TrainConfig,
) -> Result<CrossGpModel> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::TrainingData);
    }
    let mut model = CrossGpModel::init(*config)?;
    let class_weights = config.class_weighting.then(|| inverse_frequency_weights(y));
    let mut adam = Adam::new(config.adam, &model.params);
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "crossgp/shuffle"));
    let mut order: Vec<usize> = (0..x.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let mut batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        // a single leftover row cannot form batch statistics; merge it back
        if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            batches.pop();
            let n = batches.len();
            let start = (n - 1) * config.batch_size;
            batches[n - 1] = &order[start..];
        }
        let mut epoch_loss = 0.0;
        for idx in batches {
            let xb = Array2::from_shape_fn((idx.len(), N_FEATURES), |(i, j)| x[idx[i]][j]);
            let yb: Vec<GlycemicClass> = idx.iter().map(|&i| y[i]).collect();
            let cache = model.forward(&xb, Mode::Train)?;
            let l = loss(&cache.logits, &yb, class_weights.as_ref());
            let grad = model.backward(&cache, &yb, class_weights.as_ref());
            model.update_running_stats(&cache);
            adam.step(&mut model.params, &grad);
            if !l.is_finite() || !model.params.is_finite() {
                return Err(Error::NonFinite {
                    stage: "crossgp training",
                    step: epoch,
                });
            }
            epoch_loss += l * idx.len() as f64;
        }
        model.loss_trace.push(epoch_loss / x.len() as f64);
    }
    Ok(model)
}

impl Classifier for CrossGpModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Crossgp
    }

    fn predict_proba(&self, x: &FeatureVector) -> Probabilities {
        self.predict_proba_batch(std::slice::from_ref(x))[0]
    }

    fn predict_proba_many(&self, x: &[FeatureVector]) -> Vec<Probabilities> {
        self.predict_proba_batch(x)
    }
}
