//! One-hidden-layer patch classifier with hand-written backpropagation.
//!
//! Inputs are flattened `p × p × B` patches. Each value is standardized with
//! its band's training mean and deviation, fed through a fully connected
//! hidden layer (tanh by default) and a softmax output layer. Loss is mean
//! cross-entropy of the true class. Gradients are exact with respect to both
//! the parameters and the raw input values.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fill_patch, HyperCube, LabelMap, Patch, UNLABELED};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::rng_from_seed;

pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// Samples per partial gradient sum; partial sums are added in chunk order.
const REDUCTION_CHUNK: usize = 16;
/// Band deviations below this are replaced by 1 (constant bands).
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Identity hidden layer, which makes the logits affine in the input.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn slope(self, activated: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - activated * activated,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_width: usize,
    #[serde(default)]
    pub seed: u64,
    pub weight_init_scale: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 100,
            batch_size: 32,
            hidden_width: 32,
            seed: 0,
            weight_init_scale: 1.0,
            activation: Activation::Tanh,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_init_scale > 0.0 && self.weight_init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "weight_init_scale must be > 0, got {}",
                self.weight_init_scale
            )));
        }
        if self.batch_size == 0 || self.hidden_width == 0 {
            return Err(Error::Config(
                "batch_size and hidden_width must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Network weights plus the standardization statistics they were trained with.
/// `hidden_weights` is `hidden_width × input_len` and `output_weights` is
/// `num_classes × hidden_width`, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierParams {
    pub patch_size: usize,
    pub input_bands: usize,
    pub hidden_width: usize,
    pub num_classes: u16,
    pub activation: Activation,
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: Vec<f64>,
    pub band_mean: Vec<f64>,
    pub band_std: Vec<f64>,
}

/// Gradient of the mean loss, laid out like the corresponding weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: Vec<f64>,
}

impl Gradients {
    fn zeros_like(p: &ClassifierParams) -> Self {
        Self {
            hidden_weights: vec![0.0; p.hidden_weights.len()],
            hidden_bias: vec![0.0; p.hidden_bias.len()],
            output_weights: vec![0.0; p.output_weights.len()],
            output_bias: vec![0.0; p.output_bias.len()],
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in [
            (&mut self.hidden_weights, &other.hidden_weights),
            (&mut self.hidden_bias, &other.hidden_bias),
            (&mut self.output_weights, &other.output_weights),
            (&mut self.output_bias, &other.output_bias),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, s: f64) {
        for v in [
            &mut self.hidden_weights,
            &mut self.hidden_bias,
            &mut self.output_weights,
            &mut self.output_bias,
        ] {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.hidden_weights
            .iter()
            .chain(&self.hidden_bias)
            .chain(&self.output_weights)
            .chain(&self.output_bias)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Anything that scores a flattened patch against a label and can
/// differentiate that score with respect to the patch values.
pub trait PatchObjective: Sync {
    fn patch_size(&self) -> usize;
    fn input_bands(&self) -> usize;

    fn input_len(&self) -> usize {
        self.patch_size() * self.patch_size() * self.input_bands()
    }

    fn loss(&self, x: &[f64], label: u16) -> Result<f64> {
        self.loss_and_input_grad(x, label).map(|(l, _)| l)
    }

    fn loss_and_input_grad(&self, x: &[f64], label: u16) -> Result<(f64, Vec<f64>)>;
}

struct Activations {
    hidden: Vec<f64>,
    probs: Vec<f64>,
    log_norm: f64,
    logits: Vec<f64>,
}

impl ClassifierParams {
    pub fn input_len(&self) -> usize {
        self.patch_size * self.patch_size * self.input_bands
    }

    /// All-zero network with identity standardization.
    pub fn zeros(
        patch_size: usize,
        input_bands: usize,
        hidden_width: usize,
        num_classes: u16,
        activation: Activation,
    ) -> Self {
        let d = patch_size * patch_size * input_bands;
        let c = usize::from(num_classes);
        Self {
            patch_size,
            input_bands,
            hidden_width,
            num_classes,
            activation,
            hidden_weights: vec![0.0; hidden_width * d],
            hidden_bias: vec![0.0; hidden_width],
            output_weights: vec![0.0; c * hidden_width],
            output_bias: vec![0.0; c],
            band_mean: vec![0.0; input_bands],
            band_std: vec![1.0; input_bands],
        }
    }

    /// Uniform `[-s, s]` weights with `s = scale / √fan_in`, zero biases.
    pub fn initialize(
        patch_size: usize,
        input_bands: usize,
        num_classes: u16,
        config: &TrainConfig,
    ) -> Self {
        let mut p = Self::zeros(
            patch_size,
            input_bands,
            config.hidden_width,
            num_classes,
            config.activation,
        );
        let mut rng = rng_from_seed(config.seed);
        let s1 = config.weight_init_scale / (p.input_len() as f64).sqrt();
        let s2 = config.weight_init_scale / (config.hidden_width as f64).sqrt();
        p.hidden_weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-s1..=s1));
        p.output_weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-s2..=s2));
        p
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_len();
        let h = self.hidden_width;
        let c = usize::from(self.num_classes);
        if self.patch_size.is_multiple_of(2) || d == 0 || h == 0 || c == 0 {
            return Err(Error::Shape(
                "classifier metadata must be positive, patch size odd".into(),
            ));
        }
        let checks = [
            ("hidden_weights", self.hidden_weights.len(), h * d),
            ("hidden_bias", self.hidden_bias.len(), h),
            ("output_weights", self.output_weights.len(), c * h),
            ("output_bias", self.output_bias.len(), c),
            ("band_mean", self.band_mean.len(), self.input_bands),
            ("band_std", self.band_std.len(), self.input_bands),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Shape(format!(
                    "{name}: {got} values, expected {want}"
                )));
            }
        }
        for (name, v) in [
            ("hidden_weights", &self.hidden_weights),
            ("hidden_bias", &self.hidden_bias),
            ("output_weights", &self.output_weights),
            ("output_bias", &self.output_bias),
            ("band_mean", &self.band_mean),
            ("band_std", &self.band_std),
        ] {
            ensure_finite(v, name)?;
        }
        if self.band_std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Data("band_std must be positive".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "classifier expects {} inputs ({}x{}x{}), got {}",
                self.input_len(),
                self.patch_size,
                self.patch_size,
                self.input_bands,
                x.len()
            )));
        }
        Ok(())
    }

    fn check_label(&self, label: u16) -> Result<()> {
        if label == UNLABELED || label > self.num_classes {
            return Err(Error::Data(format!(
                "label {label} outside 1..={}",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        let b = self.input_bands;
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.band_mean[i % b]) / self.band_std[i % b])
            .collect()
    }

    /// Inverse of [`standardize`](Self::standardize).
    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        let b = self.input_bands;
        z.iter()
            .enumerate()
            .map(|(i, v)| v * self.band_std[i % b] + self.band_mean[i % b])
            .collect()
    }

    /// View that consumes already-standardized inputs.
    pub fn standardized(&self) -> Standardized<'_> {
        Standardized(self)
    }

    fn activations(&self, z: &[f64]) -> Activations {
        let d = self.input_len();
        let hidden: Vec<f64> = self
            .hidden_weights
            .chunks_exact(d)
            .zip(&self.hidden_bias)
            .map(|(row, b)| {
                let s: f64 = row.iter().zip(z).map(|(w, x)| w * x).sum();
                self.activation.apply(s + b)
            })
            .collect();
        let logits: Vec<f64> = self
            .output_weights
            .chunks_exact(self.hidden_width)
            .zip(&self.output_bias)
            .map(|(row, b)| row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>() + b)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs = exps.iter().map(|e| e / total).collect();
        Activations {
            hidden,
            probs,
            log_norm: max + total.ln(),
            logits,
        }
    }

    /// Backward pass for one standardized sample. Accumulates parameter
    /// gradients into `grads` when given and returns `∂loss/∂z` when asked.
    fn backward(
        &self,
        z: &[f64],
        act: &Activations,
        label: u16,
        grads: Option<&mut Gradients>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let h = self.hidden_width;
        let d = self.input_len();
        let mut dlogits = act.probs.clone();
        dlogits[usize::from(label) - 1] -= 1.0;
        let mut dpre = vec![0.0; h];
        for (c, &dl) in dlogits.iter().enumerate() {
            let row = &self.output_weights[c * h..(c + 1) * h];
            for (acc, w) in dpre.iter_mut().zip(row) {
                *acc += w * dl;
            }
        }
        for (g, &a) in dpre.iter_mut().zip(&act.hidden) {
            *g *= self.activation.slope(a);
        }
        if let Some(grads) = grads {
            for (c, &dl) in dlogits.iter().enumerate() {
                let row = &mut grads.output_weights[c * h..(c + 1) * h];
                for (g, a) in row.iter_mut().zip(&act.hidden) {
                    *g += dl * a;
                }
                grads.output_bias[c] += dl;
            }
            for (k, &dp) in dpre.iter().enumerate() {
                if dp != 0.0 {
                    let row = &mut grads.hidden_weights[k * d..(k + 1) * d];
                    for (g, x) in row.iter_mut().zip(z) {
                        *g += dp * x;
                    }
                }
                grads.hidden_bias[k] += dp;
            }
        }
        want_input.then(|| {
            let mut dz = vec![0.0; d];
            for (k, &dp) in dpre.iter().enumerate() {
                if dp != 0.0 {
                    let row = &self.hidden_weights[k * d..(k + 1) * d];
                    for (g, w) in dz.iter_mut().zip(row) {
                        *g += dp * w;
                    }
                }
            }
            dz
        })
    }

    fn sample_loss(&self, act: &Activations, label: u16) -> f64 {
        act.log_norm - act.logits[usize::from(label) - 1]
    }

    /// Class probabilities for a raw patch.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(&self.standardize(x)).probs)
    }

    /// Arg-max class (1-based); ties go to the smaller class index.
    pub fn predict(&self, x: &[f64]) -> Result<u16> {
        self.forward(x).map(|p| argmax_class(&p))
    }

    fn check_batch(&self, patches: &[Patch]) -> Result<()> {
        if patches.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        for p in patches {
            self.check_input(&p.values)?;
            self.check_label(p.label)?;
        }
        Ok(())
    }

    /// Mean cross-entropy of the true class.
    pub fn loss(&self, patches: &[Patch]) -> Result<f64> {
        self.check_batch(patches)?;
        let total: f64 = patches
            .par_chunks(REDUCTION_CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|p| {
                        self.sample_loss(&self.activations(&self.standardize(&p.values)), p.label)
                    })
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        Ok(total / patches.len() as f64)
    }

    /// Exact gradient of [`loss`](Self::loss) with respect to every weight.
    pub fn grad_params(&self, patches: &[Patch]) -> Result<Gradients> {
        self.check_batch(patches)?;
        Ok(self.grad_params_unchecked(patches))
    }

    fn grad_params_unchecked(&self, patches: &[Patch]) -> Gradients {
        let partials: Vec<Gradients> = patches
            .par_chunks(REDUCTION_CHUNK)
            .map(|chunk| {
                let mut g = Gradients::zeros_like(self);
                for p in chunk {
                    let z = self.standardize(&p.values);
                    let act = self.activations(&z);
                    self.backward(&z, &act, p.label, Some(&mut g), false);
                }
                g
            })
            .collect();
        let mut total = Gradients::zeros_like(self);
        for g in &partials {
            total.add(g);
        }
        total.scale(1.0 / patches.len() as f64);
        total
    }

    /// `∂loss/∂x` for one raw patch.
    pub fn grad_input(&self, x: &[f64], label: u16) -> Result<Vec<f64>> {
        self.loss_and_input_grad(x, label).map(|(_, g)| g)
    }

    fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in [
            (&mut self.hidden_weights, &grads.hidden_weights),
            (&mut self.hidden_bias, &grads.hidden_bias),
            (&mut self.output_weights, &grads.output_weights),
            (&mut self.output_bias, &grads.output_bias),
        ] {
            w.iter_mut().zip(g).for_each(|(w, g)| *w -= lr * g);
        }
    }

    /// Label of every pixel of `cube`, using mirror-padded patches.
    pub fn predict_map(&self, cube: &HyperCube, patch_size: usize) -> Result<LabelMap> {
        if cube.bands() != self.input_bands {
            return Err(Error::Shape(format!(
                "cube has {} bands, classifier expects {}",
                cube.bands(),
                self.input_bands
            )));
        }
        if patch_size != self.patch_size {
            return Err(Error::Shape(format!(
                "patch size {patch_size} differs from trained size {}",
                self.patch_size
            )));
        }
        let width = cube.width();
        let labels: Vec<u16> = (0..cube.pixels())
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                fill_patch(cube, i / width, i % width, patch_size, buf);
                argmax_class(&self.activations(&self.standardize(buf)).probs)
            })
            .collect();
        LabelMap::new(cube.height(), cube.width(), self.num_classes, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format_version: u32,
            #[serde(flatten)]
            params: &'a ClassifierParams,
        }
        let path = path.as_ref();
        let text = serde_json::to_string(&Doc {
            format_version: PARAMS_FORMAT_VERSION,
            params: self,
        })
        .map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            format_version: u32,
            #[serde(flatten)]
            params: ClassifierParams,
        }
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Doc = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if doc.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported params format_version {}",
                doc.format_version
            )));
        }
        doc.params.validate()?;
        Ok(doc.params)
    }
}

impl PatchObjective for ClassifierParams {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn input_bands(&self) -> usize {
        self.input_bands
    }

    fn loss_and_input_grad(&self, x: &[f64], label: u16) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        self.check_label(label)?;
        let z = self.standardize(x);
        let act = self.activations(&z);
        let mut g = self.backward(&z, &act, label, None, true).unwrap();
        let b = self.input_bands;
        for (i, v) in g.iter_mut().enumerate() {
            *v /= self.band_std[i % b];
        }
        Ok((self.sample_loss(&act, label), g))
    }
}

/// The classifier seen from standardized input space.
#[derive(Debug, Clone, Copy)]
pub struct Standardized<'a>(pub &'a ClassifierParams);

impl Standardized<'_> {
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.0.check_input(z)?;
        Ok(self.0.activations(z).probs)
    }

    pub fn predict(&self, z: &[f64]) -> Result<u16> {
        self.forward(z).map(|p| argmax_class(&p))
    }
}

impl PatchObjective for Standardized<'_> {
    fn patch_size(&self) -> usize {
        self.0.patch_size
    }

    fn input_bands(&self) -> usize {
        self.0.input_bands
    }

    fn loss_and_input_grad(&self, z: &[f64], label: u16) -> Result<(f64, Vec<f64>)> {
        self.0.check_input(z)?;
        self.0.check_label(label)?;
        let act = self.0.activations(z);
        let g = self.0.backward(z, &act, label, None, true).unwrap();
        Ok((self.0.sample_loss(&act, label), g))
    }
}

/// 1-based arg-max with ties resolved toward the smaller index.
pub fn argmax_class(probs: &[f64]) -> u16 {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    (best + 1) as u16
}

/// Per-band mean and deviation over the centre pixels of `patches`.
pub fn band_statistics(patches: &[Patch], bands: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; bands];
    let mut sq = vec![0.0; bands];
    for p in patches {
        let centre = (p.size * p.size / 2) * bands;
        for (b, &v) in p.values[centre..centre + bands].iter().enumerate() {
            mean[b] += v;
        }
    }
    let n = patches.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    for p in patches {
        let centre = (p.size * p.size / 2) * bands;
        for (b, &v) in p.values[centre..centre + bands].iter().enumerate() {
            sq[b] += (v - mean[b]) * (v - mean[b]);
        }
    }
    let std = sq
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd < MIN_STD {
                1.0
            } else {
                sd
            }
        })
        .collect();
    (mean, std)
}

/// Mini-batch gradient descent on mean cross-entropy.
///
/// Standardization statistics are fitted on the centre pixels of `patches`.
/// Each epoch visits samples in a fresh seeded permutation, so the result is a
/// pure function of the data and `config`.
pub fn train(
    patches: &[Patch],
    num_classes: u16,
    config: &TrainConfig,
) -> Result<ClassifierParams> {
    config.validate()?;
    let first = patches
        .first()
        .ok_or_else(|| Error::Data("no training patches".into()))?;
    let size = first.size;
    if size == 0 || first.values.len() % (size * size) != 0 {
        return Err(Error::Shape("malformed training patch".into()));
    }
    let bands = first.values.len() / (size * size);
    let mut params = ClassifierParams::initialize(size, bands, num_classes, config);
    params.check_batch(patches)?;
    let (mean, std) = band_statistics(patches, bands);
    params.band_mean = mean;
    params.band_std = std;

    let mut rng = rng_from_seed(crate::rng::derive_seed(config.seed, "shuffle"));
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut batch: Vec<Patch> = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| patches[i].clone()));
            let grads = params.grad_params_unchecked(&batch);
            params.apply_step(&grads, config.learning_rate);
        }
        if params.output_weights.iter().any(|w| !w.is_finite())
            || params.hidden_weights.iter().any(|w| !w.is_finite())
        {
            return Err(Error::Numeric(format!("weights diverged in epoch {epoch}")));
        }
    }
    Ok(params)
}
