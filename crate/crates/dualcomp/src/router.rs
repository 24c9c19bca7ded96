//! Instruction-conditioned compression policy.
//!
//! A small MLP with two sigmoid heads maps a pooled instruction embedding to a
//! duality factor λ ∈ [0,1] (0 = object-semantic preference, 1 =
//! scene-geometric preference) and a retention ratio ρ ∈ [ρ_min, 1]. The model
//! is trained offline with plain SGD against fused rule/provider labels and is
//! frozen at inference; [`allocate_budget`] turns a policy into integer token
//! budgets for the two streams.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Mean-pooled instruction representation plus the optional raw text it came
/// from (kept only for rule-based labeling).
#[derive(Clone, Debug)]
pub struct InstructionRepr {
    pub embedding: Vec<f64>,
    pub raw_text: Option<String>,
}

impl InstructionRepr {
    pub fn new(embedding: Vec<f64>) -> Result<Self> {
        if embedding.is_empty() {
            return Err(Error::invalid("instruction embedding", "empty vector"));
        }
        if let Some(index) = embedding.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "instruction embedding",
                index,
            });
        }
        Ok(Self {
            embedding,
            raw_text: None,
        })
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.raw_text = Some(text.into());
        self
    }
}

/// Compression policy: duality factor and overall retention ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskPolicy {
    pub lambda: f64,
    pub rho: f64,
}

impl TaskPolicy {
    pub fn new(lambda: f64, rho: f64, rho_min: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
            return Err(Error::invalid("policy", format!("lambda {lambda} outside [0,1]")));
        }
        if !(rho_min..=1.0).contains(&rho) || !rho.is_finite() {
            return Err(Error::invalid(
                "policy",
                format!("rho {rho} outside [{rho_min},1]"),
            ));
        }
        Ok(Self { lambda, rho })
    }
}

/// Integer token budgets derived from a policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenBudget {
    pub n_max: usize,
    pub n_keep: usize,
    pub n_sem: usize,
    pub n_geo: usize,
}

/// Split `n_max` tokens per the policy: `n_keep = clamp(round(n_max·ρ), 1,
/// n_max)`, `n_sem = round(n_keep·(1−λ))`, and the residual goes to the
/// geometric stream so the two always sum to `n_keep` exactly.
pub fn allocate_budget(policy: &TaskPolicy, n_max: usize) -> TokenBudget {
    assert!(n_max >= 1, "allocate_budget requires n_max >= 1");
    let n_keep = ((n_max as f64 * policy.rho).round() as usize).clamp(1, n_max);
    let n_sem = ((n_keep as f64 * (1.0 - policy.lambda)).round() as usize).min(n_keep);
    let n_geo = n_keep - n_sem;
    TokenBudget {
        n_max,
        n_keep,
        n_sem,
        n_geo,
    }
}

/// Convex label fusion: `α·λ_llm + (1−α)·λ_rule`, passing `λ_rule` through
/// when no provider score is available. Out-of-range inputs signal a corrupted
/// label file and are rejected.
pub fn fuse_labels(lambda_llm: Option<f64>, lambda_rule: f64, alpha: f64) -> Result<f64> {
    for (name, value) in [("lambda_rule", lambda_rule), ("alpha", alpha)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid("label", format!("{name} {value} outside [0,1]")));
        }
    }
    match lambda_llm {
        None => Ok(lambda_rule),
        Some(llm) => {
            if !(0.0..=1.0).contains(&llm) {
                return Err(Error::invalid(
                    "label",
                    format!("lambda_llm {llm} outside [0,1]"),
                ));
            }
            Ok(alpha * llm + (1.0 - alpha) * lambda_rule)
        }
    }
}

/// Fused training label for one instruction.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelRecord {
    pub lambda_rule: f64,
    pub lambda_llm: Option<f64>,
    pub alpha: f64,
    pub lambda_gt: f64,
    pub rho_gt: f64,
}

impl LabelRecord {
    pub fn new(
        lambda_llm: Option<f64>,
        lambda_rule: f64,
        alpha: f64,
        rho_gt: f64,
        rho_min: f64,
    ) -> Result<Self> {
        let lambda_gt = fuse_labels(lambda_llm, lambda_rule, alpha)?;
        if !(rho_min..=1.0).contains(&rho_gt) {
            return Err(Error::invalid(
                "label",
                format!("rho_gt {rho_gt} outside [{rho_min},1]"),
            ));
        }
        Ok(Self {
            lambda_rule,
            lambda_llm,
            alpha,
            lambda_gt,
            rho_gt,
        })
    }
}

/// Trunk/head dimensions. The defaults (768 → 1024 → 256 → 1+1) total
/// 1,050,370 parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RouterDims {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for RouterDims {
    fn default() -> Self {
        Self {
            input: 768,
            hidden1: 1024,
            hidden2: 256,
        }
    }
}

/// Dense layer, weights stored out×in row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayer {
    fn init(in_dim: usize, out_dim: usize, rng: &mut SplitMix64) -> Self {
        let scale = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.next_range(-scale, scale))
            .collect();
        let bias = vec![0.0; out_dim];
        Self {
            weights,
            bias,
            in_dim,
            out_dim,
        }
    }

    fn forward(&self, input: &[f64], output: &mut [f64]) {
        debug_assert_eq!(input.len(), self.in_dim);
        debug_assert_eq!(output.len(), self.out_dim);
        for (o, out) in output.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *out = acc;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Two-layer tanh trunk with independent sigmoid heads for λ and ρ.
#[derive(Clone, Debug, PartialEq)]
pub struct RouterModel {
    pub dims: RouterDims,
    pub rho_min: f64,
    pub layer1: DenseLayer,
    pub layer2: DenseLayer,
    pub head_lambda: DenseLayer,
    pub head_rho: DenseLayer,
}

struct ForwardCache {
    h1: Vec<f64>,
    h2: Vec<f64>,
    lambda: f64,
    rho: f64,
    sig_rho: f64,
}

impl RouterModel {
    pub fn init(dims: RouterDims, rho_min: f64, seed: u64) -> Result<Self> {
        if dims.input == 0 || dims.hidden1 == 0 || dims.hidden2 == 0 {
            return Err(Error::Config("router dims must be positive".into()));
        }
        if !(rho_min > 0.0 && rho_min < 1.0) {
            return Err(Error::Config(format!("rho_min {rho_min} outside (0,1)")));
        }
        let mut rng = SplitMix64::new(seed);
        Ok(Self {
            dims,
            rho_min,
            layer1: DenseLayer::init(dims.input, dims.hidden1, &mut rng),
            layer2: DenseLayer::init(dims.hidden1, dims.hidden2, &mut rng),
            head_lambda: DenseLayer::init(dims.hidden2, 1, &mut rng),
            head_rho: DenseLayer::init(dims.hidden2, 1, &mut rng),
        })
    }

    pub fn param_count(&self) -> usize {
        [&self.layer1, &self.layer2, &self.head_lambda, &self.head_rho]
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, input: &InstructionRepr) -> Result<()> {
        if input.embedding.len() != self.dims.input {
            return Err(Error::DimensionMismatch {
                what: "router input",
                expected: self.dims.input,
                got: input.embedding.len(),
            });
        }
        Ok(())
    }

    fn forward_cache(&self, x: &[f64]) -> ForwardCache {
        let mut h1 = vec![0.0; self.dims.hidden1];
        self.layer1.forward(x, &mut h1);
        for v in &mut h1 {
            *v = v.tanh();
        }
        let mut h2 = vec![0.0; self.dims.hidden2];
        self.layer2.forward(&h1, &mut h2);
        for v in &mut h2 {
            *v = v.tanh();
        }
        let mut z = [0.0];
        self.head_lambda.forward(&h2, &mut z);
        let lambda = sigmoid(z[0]);
        self.head_rho.forward(&h2, &mut z);
        let sig_rho = sigmoid(z[0]);
        let rho = self.rho_min + (1.0 - self.rho_min) * sig_rho;
        ForwardCache {
            h1,
            h2,
            lambda,
            rho,
            sig_rho,
        }
    }

    /// Predict a policy. Bounds hold by construction: λ = σ(·) and
    /// ρ = ρ_min + (1−ρ_min)·σ(·).
    pub fn forward(&self, input: &InstructionRepr) -> Result<TaskPolicy> {
        self.check_input(input)?;
        let cache = self.forward_cache(&input.embedding);
        Ok(TaskPolicy {
            lambda: cache.lambda,
            rho: cache.rho,
        })
    }

    /// Squared-error loss against a `(λ_gt, ρ_gt)` target.
    pub fn loss(&self, input: &InstructionRepr, target: (f64, f64)) -> Result<f64> {
        self.check_input(input)?;
        let cache = self.forward_cache(&input.embedding);
        let dl = cache.lambda - target.0;
        let dr = cache.rho - target.1;
        Ok(dl * dl + dr * dr)
    }

    /// Analytic gradients of `(λ−λ_gt)² + (ρ−ρ_gt)²` with respect to every
    /// weight and bias, plus the loss itself.
    pub fn backward(
        &self,
        input: &InstructionRepr,
        target: (f64, f64),
    ) -> Result<(RouterGradients, f64)> {
        self.check_input(input)?;
        let (lambda_gt, rho_gt) = target;
        let x = &input.embedding;
        let cache = self.forward_cache(x);
        let loss = (cache.lambda - lambda_gt).powi(2) + (cache.rho - rho_gt).powi(2);

        // Head pre-activation gradients.
        let g_lambda = 2.0 * (cache.lambda - lambda_gt) * cache.lambda * (1.0 - cache.lambda);
        let g_rho = 2.0 * (cache.rho - rho_gt)
            * (1.0 - self.rho_min)
            * cache.sig_rho
            * (1.0 - cache.sig_rho);

        let h2n = self.dims.hidden2;
        let h1n = self.dims.hidden1;
        let mut grads = RouterGradients::zeros(self.dims);

        for j in 0..h2n {
            grads.head_lambda_w[j] = g_lambda * cache.h2[j];
            grads.head_rho_w[j] = g_rho * cache.h2[j];
        }
        grads.head_lambda_b[0] = g_lambda;
        grads.head_rho_b[0] = g_rho;

        // d L / d a2 through tanh.
        let mut delta2 = vec![0.0; h2n];
        for j in 0..h2n {
            let dh2 = g_lambda * self.head_lambda.weights[j] + g_rho * self.head_rho.weights[j];
            delta2[j] = dh2 * (1.0 - cache.h2[j] * cache.h2[j]);
        }
        for j in 0..h2n {
            let row = &mut grads.layer2_w[j * h1n..(j + 1) * h1n];
            for (k, g) in row.iter_mut().enumerate() {
                *g = delta2[j] * cache.h1[k];
            }
            grads.layer2_b[j] = delta2[j];
        }

        // d L / d a1.
        let mut delta1 = vec![0.0; h1n];
        for k in 0..h1n {
            let mut acc = 0.0;
            for j in 0..h2n {
                acc += delta2[j] * self.layer2.weights[j * h1n + k];
            }
            delta1[k] = acc * (1.0 - cache.h1[k] * cache.h1[k]);
        }
        let d = self.dims.input;
        for k in 0..h1n {
            let row = &mut grads.layer1_w[k * d..(k + 1) * d];
            for (i, g) in row.iter_mut().enumerate() {
                *g = delta1[k] * x[i];
            }
            grads.layer1_b[k] = delta1[k];
        }

        Ok((grads, loss))
    }

    /// Flat view of all parameters in a fixed order (for gradient checking).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in [&self.layer1, &self.layer2, &self.head_lambda, &self.head_rho] {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Overwrite all parameters from the same flat order as [`Self::params`].
    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut offset = 0;
        for layer in [
            &mut self.layer1,
            &mut self.layer2,
            &mut self.head_lambda,
            &mut self.head_rho,
        ] {
            let w = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + w]);
            offset += w;
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + b]);
            offset += b;
        }
    }
}

/// Gradient structure congruent to [`RouterModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct RouterGradients {
    pub layer1_w: Vec<f64>,
    pub layer1_b: Vec<f64>,
    pub layer2_w: Vec<f64>,
    pub layer2_b: Vec<f64>,
    pub head_lambda_w: Vec<f64>,
    pub head_lambda_b: Vec<f64>,
    pub head_rho_w: Vec<f64>,
    pub head_rho_b: Vec<f64>,
}

impl RouterGradients {
    pub fn zeros(dims: RouterDims) -> Self {
        Self {
            layer1_w: vec![0.0; dims.input * dims.hidden1],
            layer1_b: vec![0.0; dims.hidden1],
            layer2_w: vec![0.0; dims.hidden1 * dims.hidden2],
            layer2_b: vec![0.0; dims.hidden2],
            head_lambda_w: vec![0.0; dims.hidden2],
            head_lambda_b: vec![0.0; 1],
            head_rho_w: vec![0.0; dims.hidden2],
            head_rho_b: vec![0.0; 1],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.flat_parts_mut().into_iter().zip(other.flat_parts()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn flat_parts(&self) -> [&[f64]; 8] {
        [
            &self.layer1_w,
            &self.layer1_b,
            &self.layer2_w,
            &self.layer2_b,
            &self.head_lambda_w,
            &self.head_lambda_b,
            &self.head_rho_w,
            &self.head_rho_b,
        ]
    }

    fn flat_parts_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.layer1_w,
            &mut self.layer1_b,
            &mut self.layer2_w,
            &mut self.layer2_b,
            &mut self.head_lambda_w,
            &mut self.head_lambda_b,
            &mut self.head_rho_w,
            &mut self.head_rho_b,
        ]
    }

    /// Flat view in the same order as [`RouterModel::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for part in self.flat_parts() {
            out.extend_from_slice(part);
        }
        out
    }
}

/// Per-step training record.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    /// Sample loss observed at each step, before the update.
    pub step_losses: Vec<f64>,
    /// Mean corpus loss before the first step.
    pub initial_corpus_loss: f64,
    /// Mean corpus loss after the last step.
    pub final_corpus_loss: f64,
}

/// Plain SGD with a fixed learning rate over single-sample steps.
/// Deterministic: sample order comes from `seed` alone. `steps = 0` returns
/// the model bitwise-unchanged.
pub fn train_router(
    model: &RouterModel,
    corpus: &[(InstructionRepr, LabelRecord)],
    steps: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<(RouterModel, TrainLog)> {
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus", "empty"));
    }
    let mut model = model.clone();
    let mut log = TrainLog::default();
    if steps == 0 {
        return Ok((model, log));
    }
    log.initial_corpus_loss = corpus_loss(&model, corpus)?;
    let mut rng = SplitMix64::new(seed);
    for step in 0..steps {
        let (input, label) = &corpus[rng.next_usize(corpus.len())];
        let (grads, loss) = model.backward(input, (label.lambda_gt, label.rho_gt))?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        log.step_losses.push(loss);
        sgd_update(&mut model, &grads, learning_rate);
    }
    log.final_corpus_loss = corpus_loss(&model, corpus)?;
    Ok((model, log))
}

fn sgd_update(model: &mut RouterModel, grads: &RouterGradients, lr: f64) {
    let layers = [
        (&mut model.layer1, &grads.layer1_w, &grads.layer1_b),
        (&mut model.layer2, &grads.layer2_w, &grads.layer2_b),
        (&mut model.head_lambda, &grads.head_lambda_w, &grads.head_lambda_b),
        (&mut model.head_rho, &grads.head_rho_w, &grads.head_rho_b),
    ];
    for (layer, gw, gb) in layers {
        for (w, g) in layer.weights.iter_mut().zip(gw.iter()) {
            *w -= lr * g;
        }
        for (b, g) in layer.bias.iter_mut().zip(gb.iter()) {
            *b -= lr * g;
        }
    }
}

/// Mean squared-error loss over a corpus.
pub fn corpus_loss(model: &RouterModel, corpus: &[(InstructionRepr, LabelRecord)]) -> Result<f64> {
    let mut total = 0.0;
    for (input, label) in corpus {
        total += model.loss(input, (label.lambda_gt, label.rho_gt))?;
    }
    Ok(total / corpus.len() as f64)
}
