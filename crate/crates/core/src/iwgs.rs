//! Iterative wavelet-domain gradient band selection.
//!
//! A binary mask over the channels of the cube's channel representation
//! (wavelet coefficients by default) starts with the central channel. Each
//! iteration reconstructs the cube through the current mask, evaluates the
//! classifier loss on a fixed seeded subset of labeled pixels, differentiates
//! that loss with respect to the relaxed mask, and admits one more channel.
//!
//! Three pick rules are available. [`Criterion::AbsMin`] (the default) takes
//! the unselected channel with the smallest gradient magnitude, exactly as the
//! procedure is commonly stated. [`Criterion::SignedMin`] takes the most
//! negative gradient, which is the first-order best single addition. Every
//! trace record lists what each rule would have picked so the two can be
//! compared after the fact.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::PatchObjective;
use crate::data::{fill_patch, patch_pixel_indices, HyperCube, LabelMap};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::wavelet::{ChannelTransform, CoeffCube, Domain, WaveletSpec};

pub const MASK_FORMAT_VERSION: u32 = 1;
const REDUCTION_CHUNK: usize = 8;

/// Binary channel selection vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionMask {
    w: Vec<bool>,
}

impl SelectionMask {
    pub fn empty(channels: usize) -> Self {
        Self {
            w: vec![false; channels],
        }
    }

    pub fn full(channels: usize) -> Self {
        Self {
            w: vec![true; channels],
        }
    }

    pub fn from_indices(channels: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = Self::empty(channels);
        for &j in indices {
            if j >= channels {
                return Err(Error::Shape(format!("channel {j} outside 0..{channels}")));
            }
            mask.w[j] = true;
        }
        Ok(mask)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.w[j]
    }

    pub fn insert(&mut self, j: usize) -> bool {
        !std::mem::replace(&mut self.w[j], true)
    }

    pub fn selected_count(&self) -> usize {
        self.w.iter().filter(|&&b| b).count()
    }

    /// Selected channels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.w
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn as_weights(&self) -> Vec<f64> {
        self.w.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Channels not in `self`.
    pub fn complement(&self) -> Self {
        Self {
            w: self.w.iter().map(|b| !b).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Smallest `|∂L/∂w_j|`.
    #[default]
    AbsMin,
    /// Most negative `∂L/∂w_j`.
    SignedMin,
    /// Largest `|∂L/∂w_j|`.
    AbsMax,
}

impl Criterion {
    /// Index into `candidates` of the pick; ties go to the earliest candidate.
    fn pick(self, gradient: &[f64], candidates: &[usize]) -> usize {
        let score = |j: usize| match self {
            Criterion::AbsMin => gradient[j].abs(),
            Criterion::SignedMin => gradient[j],
            Criterion::AbsMax => -gradient[j].abs(),
        };
        let mut best = candidates[0];
        for &j in &candidates[1..] {
            if score(j) < score(best) {
                best = j;
            }
        }
        best
    }
}

/// How the configured band count maps to selection iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    /// The central channel counts toward `num_bands`: `num_bands - 1` iterations.
    #[default]
    Total,
    /// Central channel plus `num_bands` iterations.
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IwgsConfig {
    pub num_bands: usize,
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default)]
    pub budget_mode: BudgetMode,
    #[serde(default)]
    pub wavelet: WaveletSpec,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default = "default_eval_subset")]
    pub eval_subset_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_eval_subset() -> usize {
    512
}

impl Default for IwgsConfig {
    fn default() -> Self {
        Self {
            num_bands: 4,
            criterion: Criterion::default(),
            budget_mode: BudgetMode::default(),
            wavelet: WaveletSpec::default(),
            domain: Domain::default(),
            eval_subset_size: default_eval_subset(),
            seed: 0,
        }
    }
}

impl IwgsConfig {
    pub fn transform(&self) -> ChannelTransform {
        ChannelTransform {
            domain: self.domain,
            wavelet: self.wavelet,
        }
    }

    /// Channels in the final mask.
    pub fn final_count(&self) -> usize {
        match self.budget_mode {
            BudgetMode::Total => self.num_bands,
            BudgetMode::PaperLiteral => self.num_bands + 1,
        }
    }

    pub fn iterations(&self) -> usize {
        self.final_count() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGradient {
    pub channel: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionPicks {
    pub abs_min: usize,
    pub signed_min: usize,
    pub abs_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub chosen: usize,
    pub loss_before: f64,
    pub criterion: Criterion,
    pub picks: CriterionPicks,
    /// `∂L/∂w_j` for every channel still unselected at this iteration.
    pub gradient: Vec<ChannelGradient>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub initial_channel: usize,
    pub records: Vec<TraceRecord>,
}

impl SelectionTrace {
    /// One JSON object per iteration.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).map_err(|e| Error::json("trace", e))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_json_lines()?.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Persisted form of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskDocument {
    pub version: u32,
    pub wavelet: WaveletSpec,
    pub domain: Domain,
    pub channels: usize,
    pub indices: Vec<usize>,
}

impl MaskDocument {
    pub fn new(mask: &SelectionMask, transform: &ChannelTransform) -> Self {
        Self {
            version: MASK_FORMAT_VERSION,
            wavelet: transform.wavelet,
            domain: transform.domain,
            channels: mask.len(),
            indices: mask.indices(),
        }
    }

    pub fn mask(&self) -> Result<SelectionMask> {
        SelectionMask::from_indices(self.channels, &self.indices)
    }

    pub fn transform(&self) -> ChannelTransform {
        ChannelTransform {
            domain: self.domain,
            wavelet: self.wavelet,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if doc.version != MASK_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported mask version {}",
                doc.version
            )));
        }
        let mut sorted = doc.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != doc.indices {
            return Err(Error::Data(
                "mask indices must be sorted and distinct".into(),
            ));
        }
        doc.mask()?;
        Ok(doc)
    }
}

/// A labeled pixel used as a loss evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalPoint {
    pub pixel: usize,
    pub label: u16,
}

/// Seeded subset of at most `size` labeled pixels, in ascending pixel order.
pub fn eval_subset(labels: &LabelMap, size: usize, seed: u64) -> Result<Vec<EvalPoint>> {
    let labeled = labels.labeled_indices();
    if labeled.is_empty() || size == 0 {
        return Err(Error::Data("evaluation subset is empty".into()));
    }
    let mut picked: Vec<usize> = if labeled.len() <= size {
        labeled
    } else {
        let mut rng = rng_from_seed(seed);
        sample(&mut rng, labeled.len(), size)
            .into_iter()
            .map(|k| labeled[k])
            .collect()
    };
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|pixel| EvalPoint {
            pixel,
            label: labels.labels()[pixel],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskGradient {
    /// Mean loss over the evaluation points at the given mask.
    pub loss: f64,
    /// `∂loss/∂w_j` for every channel.
    pub gradient: Vec<f64>,
}

fn check_model(model: &impl PatchObjective, coeffs: &CoeffCube) -> Result<()> {
    if model.input_bands() != coeffs.source_bands() {
        return Err(Error::Shape(format!(
            "model expects {} bands, cube has {}",
            model.input_bands(),
            coeffs.source_bands()
        )));
    }
    Ok(())
}

/// Loss and mask gradient at real-valued channel weights.
///
/// With `X̂ = S(X_W ⊙ w)` pixel-wise (`S` = inverse transform then strip
/// padding) the chain rule gives `∂L/∂w_j = Σ_cells c_pix[j] · (Sᵀ ∇_X̂ ℓ)[j]`,
/// averaged over evaluation points; `Sᵀ` is the forward transform of the
/// zero-extended spectral gradient.
pub fn mask_gradient(
    model: &impl PatchObjective,
    transform: &ChannelTransform,
    coeffs: &CoeffCube,
    points: &[EvalPoint],
    weights: &[f64],
) -> Result<MaskGradient> {
    check_model(model, coeffs)?;
    if points.is_empty() {
        return Err(Error::Data("evaluation subset is empty".into()));
    }
    let recon = transform.weighted_reconstruct(coeffs, weights)?;
    let channels = coeffs.channels();
    let bands = coeffs.source_bands();
    let (height, width) = (coeffs.height(), coeffs.width());
    let size = model.patch_size();
    if let Some(p) = points.iter().find(|p| p.pixel >= height * width) {
        return Err(Error::Shape(format!(
            "evaluation pixel {} outside cube",
            p.pixel
        )));
    }

    let partials: Vec<Result<(f64, Vec<f64>)>> = points
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; channels];
            let mut buf = Vec::new();
            for p in chunk {
                let (row, col) = (p.pixel / width, p.pixel % width);
                fill_patch(&recon, row, col, size, &mut buf);
                let (l, g) = model.loss_and_input_grad(&buf, p.label)?;
                loss += l;
                for (cell, pix) in patch_pixel_indices(height, width, row, col, size).enumerate() {
                    let adj = transform
                        .reconstruction_adjoint(&g[cell * bands..(cell + 1) * bands], channels);
                    for ((acc, c), a) in grad.iter_mut().zip(coeffs.pixel(pix)).zip(&adj) {
                        *acc += c * a;
                    }
                }
            }
            Ok((loss, grad))
        })
        .collect();

    let n = points.len() as f64;
    let mut loss = 0.0;
    let mut gradient = vec![0.0; channels];
    for part in partials {
        let (l, g) = part?;
        loss += l;
        gradient.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    gradient.iter_mut().for_each(|g| *g /= n);
    let loss = loss / n;
    if !loss.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite loss or mask gradient".into()));
    }
    Ok(MaskGradient { loss, gradient })
}

/// Mean loss of `model` over `points` on `cube`.
pub fn mean_loss(
    model: &impl PatchObjective,
    cube: &HyperCube,
    points: &[EvalPoint],
) -> Result<f64> {
    let width = cube.width();
    let size = model.patch_size();
    let losses: Vec<Result<f64>> = points
        .par_iter()
        .map_init(Vec::new, |buf, p| {
            fill_patch(cube, p.pixel / width, p.pixel % width, size, buf);
            model.loss(buf, p.label)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / points.len() as f64)
}

/// Greedy channel selection. `labels` supplies the pixels the loss is
/// evaluated on (typically training pixels only).
pub fn select(
    cube: &HyperCube,
    labels: &LabelMap,
    model: &impl PatchObjective,
    config: &IwgsConfig,
) -> Result<(SelectionMask, SelectionTrace)> {
    if model.input_bands() != cube.bands() {
        return Err(Error::Shape(format!(
            "model expects {} bands, cube has {}",
            model.input_bands(),
            cube.bands()
        )));
    }
    labels.ensure_matches(cube)?;
    let transform = config.transform();
    let coeffs = transform.forward(cube)?;
    let channels = coeffs.channels();
    if config.num_bands == 0 || config.final_count() > channels {
        return Err(Error::Config(format!(
            "cannot select {} of {channels} channels ({:?} budget)",
            config.final_count(),
            config.budget_mode
        )));
    }
    let points = eval_subset(labels, config.eval_subset_size, config.seed)?;

    let centre = channels / 2;
    let mut mask = SelectionMask::empty(channels);
    mask.insert(centre);
    let mut trace = SelectionTrace {
        initial_channel: centre,
        records: Vec::with_capacity(config.iterations()),
    };
    for iteration in 1..=config.iterations() {
        let mg = mask_gradient(model, &transform, &coeffs, &points, &mask.as_weights())?;
        let candidates = mask.complement().indices();
        let picks = CriterionPicks {
            abs_min: Criterion::AbsMin.pick(&mg.gradient, &candidates),
            signed_min: Criterion::SignedMin.pick(&mg.gradient, &candidates),
            abs_max: Criterion::AbsMax.pick(&mg.gradient, &candidates),
        };
        let chosen = config.criterion.pick(&mg.gradient, &candidates);
        mask.insert(chosen);
        trace.records.push(TraceRecord {
            iteration,
            chosen,
            loss_before: mg.loss,
            criterion: config.criterion,
            picks,
            gradient: candidates
                .iter()
                .map(|&channel| ChannelGradient {
                    channel,
                    value: mg.gradient[channel],
                })
                .collect(),
        });
    }
    Ok((mask, trace))
}

/// Forward transform followed by masked reconstruction.
pub fn apply_selection(
    cube: &HyperCube,
    mask: &SelectionMask,
    transform: &ChannelTransform,
) -> Result<HyperCube> {
    let coeffs = transform.forward(cube)?;
    transform.masked_reconstruct(&coeffs, mask)
}
