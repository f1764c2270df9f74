#![allow(dead_code)]

use iwgs_core::classifier::{Activation, ClassifierParams};
use iwgs_core::data::Patch;
use iwgs_core::metrics::ConfusionMatrix;
use iwgs_core::rng::rng_from_seed;
use iwgs_core::PatchObjective;
use iwgs_core::Result;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Central finite difference of `f` at `x` along every coordinate.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest element-wise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn rng(seed: u64) -> iwgs_core::rng::Rng {
    rng_from_seed(seed)
}

/// Random small network with non-trivial standardization statistics.
pub fn random_params(rng: &mut impl Rng, activation: Activation) -> ClassifierParams {
    let patch_size = [1, 3][rng.random_range(0..2)];
    let bands = rng.random_range(1..=5);
    let hidden = rng.random_range(1..=6);
    let classes = rng.random_range(2..=4);
    let mut p = ClassifierParams::zeros(patch_size, bands, hidden, classes, activation);
    for w in p
        .hidden_weights
        .iter_mut()
        .chain(&mut p.hidden_bias)
        .chain(&mut p.output_weights)
        .chain(&mut p.output_bias)
    {
        *w = rng.random_range(-1.0..1.0);
    }
    for m in &mut p.band_mean {
        *m = rng.random_range(-0.5..0.5);
    }
    for s in &mut p.band_std {
        *s = rng.random_range(0.5..2.0);
    }
    p
}

pub fn random_patch(rng: &mut impl Rng, params: &ClassifierParams) -> Patch {
    Patch {
        size: params.patch_size,
        center_row: 0,
        center_col: 0,
        values: (0..params.input_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
        label: rng.random_range(1..=params.num_classes),
    }
}

/// Objective that is linear in the input: loss = Σ aᵢ xᵢ, independent of the label.
pub struct LinearScore {
    pub size: usize,
    pub bands: usize,
    pub weights: Vec<f64>,
}

impl PatchObjective for LinearScore {
    fn patch_size(&self) -> usize {
        self.size
    }

    fn input_bands(&self) -> usize {
        self.bands
    }

    fn loss_and_input_grad(&self, x: &[f64], _label: u16) -> Result<(f64, Vec<f64>)> {
        let loss = x.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        Ok((loss, self.weights.clone()))
    }
}

/// OA, AA, κ by direct summation over an explicit list of (truth, predicted) pairs.
pub fn brute_force_metrics(cm: &ConfusionMatrix) -> (f64, f64, f64) {
    let c = cm.classes();
    let mut pairs = Vec::new();
    for t in 1..=c {
        for p in 1..=c {
            for _ in 0..cm.get(t, p) {
                pairs.push((t, p));
            }
        }
    }
    let n = pairs.len() as f64;
    let agree = pairs.iter().filter(|(t, p)| t == p).count() as f64;
    let oa = agree / n;
    let mut recalls = Vec::new();
    let mut expected = 0.0;
    for k in 1..=c {
        let truth_k = pairs.iter().filter(|(t, _)| *t == k).count() as f64;
        let pred_k = pairs.iter().filter(|(_, p)| *p == k).count() as f64;
        if truth_k > 0.0 {
            let hit = pairs.iter().filter(|(t, p)| *t == k && *p == k).count() as f64;
            recalls.push(hit / truth_k);
        }
        expected += (truth_k / n) * (pred_k / n);
    }
    let aa = recalls.iter().sum::<f64>() / recalls.len() as f64;
    let kappa = if (1.0 - expected).abs() < 1e-15 {
        if agree == n {
            1.0
        } else {
            0.0
        }
    } else {
        (oa - expected) / (1.0 - expected)
    };
    (oa, aa, kappa)
}

pub fn random_confusion(rng: &mut impl Rng) -> ConfusionMatrix {
    let c = rng.random_range(2..=6);
    loop {
        let sparse = rng.random_bool(0.3);
        let counts: Vec<u64> = (0..c * c)
            .map(|_| {
                if sparse && rng.random_bool(0.6) {
                    0
                } else {
                    rng.random_range(0..30)
                }
            })
            .collect();
        if counts.iter().sum::<u64>() > 0 {
            return ConfusionMatrix::from_counts(c, counts).unwrap();
        }
    }
}

fn param_slots(p: &mut ClassifierParams) -> Vec<&mut f64> {
    p.hidden_weights
        .iter_mut()
        .chain(&mut p.hidden_bias)
        .chain(&mut p.output_weights)
        .chain(&mut p.output_bias)
        .collect()
}

fn flat_params(p: &ClassifierParams) -> Vec<f64> {
    p.hidden_weights
        .iter()
        .chain(&p.hidden_bias)
        .chain(&p.output_weights)
        .chain(&p.output_bias)
        .copied()
        .collect()
}

fn activation_for(seed: u64) -> Activation {
    if seed.is_multiple_of(2) {
        Activation::Tanh
    } else {
        Activation::Identity
    }
}

/// Worst relative error between `grad_params` and finite differences on one random instance.
pub fn grad_params_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let params = random_params(&mut r, activation_for(seed));
    let batch: Vec<Patch> = (0..r.random_range(1..=4))
        .map(|_| random_patch(&mut r, &params))
        .collect();
    let g = params.grad_params(&batch).unwrap();
    let analytic: Vec<f64> = g
        .hidden_weights
        .iter()
        .chain(&g.hidden_bias)
        .chain(&g.output_weights)
        .chain(&g.output_bias)
        .copied()
        .collect();
    let theta = flat_params(&params);
    let numeric = central_difference(&theta, FD_STEP, |t| {
        let mut q = params.clone();
        for (slot, v) in param_slots(&mut q).into_iter().zip(t) {
            *slot = *v;
        }
        q.loss(&batch).unwrap()
    });
    max_relative_error(&analytic, &numeric, 1e-6)
}

/// Worst relative error of the input gradient, raw and standardized, on one random instance.
pub fn grad_input_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let params = random_params(&mut r, activation_for(seed));
    let patch = random_patch(&mut r, &params);
    let analytic = params.grad_input(&patch.values, patch.label).unwrap();
    let numeric = central_difference(&patch.values, FD_STEP, |x| {
        PatchObjective::loss(&params, x, patch.label).unwrap()
    });
    let raw = max_relative_error(&analytic, &numeric, 1e-6);
    let view = params.standardized();
    let z = params.standardize(&patch.values);
    let (_, analytic) = view.loss_and_input_grad(&z, patch.label).unwrap();
    let numeric = central_difference(&z, FD_STEP, |z| view.loss(z, patch.label).unwrap());
    raw.max(max_relative_error(&analytic, &numeric, 1e-6))
}

/// Worst relative error of the mask gradient at random real-valued weights.
pub fn mask_gradient_error(seed: u64) -> f64 {
    use iwgs_core::iwgs::{mask_gradient, EvalPoint};
    use iwgs_core::wavelet::{ChannelTransform, Family, WaveletSpec};
    use iwgs_core::HyperCube;

    let mut r = rng(seed);
    let mut params = random_params(&mut r, activation_for(seed));
    // Need at least two bands for a one-level transform.
    if params.input_bands < 2 {
        params = ClassifierParams {
            input_bands: 2,
            hidden_weights: vec![0.3; params.hidden_width * params.patch_size.pow(2) * 2],
            band_mean: vec![0.1, -0.2],
            band_std: vec![0.8, 1.3],
            ..params
        };
    }
    let bands = params.input_bands;
    let (h, w) = (r.random_range(2..=4), r.random_range(2..=4));
    let cube = HyperCube::new(
        h,
        w,
        bands,
        (0..h * w * bands)
            .map(|_| r.random_range(0.0..1.0))
            .collect(),
    )
    .unwrap();
    let transform = match seed % 3 {
        0 => ChannelTransform::spectral(),
        1 => ChannelTransform::wavelet(WaveletSpec::new(Family::Haar, 1)),
        _ => ChannelTransform::wavelet(WaveletSpec::new(Family::Daubechies4, 1)),
    };
    let coeffs = transform.forward(&cube).unwrap();
    let points: Vec<EvalPoint> = (0..h * w)
        .map(|pixel| EvalPoint {
            pixel,
            label: r.random_range(1..=params.num_classes),
        })
        .collect();
    let weights: Vec<f64> = (0..coeffs.channels())
        .map(|_| r.random_range(0.0..1.0))
        .collect();
    let mg = mask_gradient(&params, &transform, &coeffs, &points, &weights).unwrap();
    let numeric = central_difference(&weights, FD_STEP, |wt| {
        mask_gradient(&params, &transform, &coeffs, &points, wt)
            .unwrap()
            .loss
    });
    max_relative_error(&mg.gradient, &numeric, 1e-6)
}

/// Replays a greedy selection and returns, per step, the chosen channel and the
/// candidates ranked by the true loss after adding them (ties by index).
pub fn replay_true_losses(
    model: &impl PatchObjective,
    cube: &iwgs_core::HyperCube,
    labels: &iwgs_core::LabelMap,
    config: &iwgs_core::IwgsConfig,
    trace: &iwgs_core::SelectionTrace,
) -> Vec<(usize, Vec<(usize, f64)>)> {
    use iwgs_core::iwgs::{eval_subset, mask_gradient};
    use iwgs_core::SelectionMask;
    let transform = config.transform();
    let coeffs = transform.forward(cube).unwrap();
    let points = eval_subset(labels, config.eval_subset_size, config.seed).unwrap();
    let mut mask = SelectionMask::empty(coeffs.channels());
    mask.insert(trace.initial_channel);
    trace
        .records
        .iter()
        .map(|rec| {
            let mut ranked: Vec<(usize, f64)> = mask
                .complement()
                .indices()
                .into_iter()
                .map(|j| {
                    let mut w = mask.as_weights();
                    w[j] = 1.0;
                    (
                        j,
                        mask_gradient(model, &transform, &coeffs, &points, &w)
                            .unwrap()
                            .loss,
                    )
                })
                .collect();
            ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            mask.insert(rec.chosen);
            (rec.chosen, ranked)
        })
        .collect()
}

/// Random instance for the linear-objective greedy oracle: returns the cube,
/// labels, objective and a config with at most 16 channels and 8 selections.
pub fn linear_greedy_instance(
    seed: u64,
) -> (
    iwgs_core::HyperCube,
    iwgs_core::LabelMap,
    LinearScore,
    iwgs_core::IwgsConfig,
) {
    use iwgs_core::wavelet::{Domain, Family, WaveletSpec};
    use iwgs_core::{Criterion, HyperCube, IwgsConfig, LabelMap};
    let mut r = rng(seed);
    let bands = r.random_range(2..=16);
    let (h, w) = (r.random_range(2..=4), r.random_range(2..=4));
    let size = [1, 3][r.random_range(0..2)];
    let cube = HyperCube::new(
        h,
        w,
        bands,
        (0..h * w * bands)
            .map(|_| r.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let labels =
        LabelMap::new(h, w, 2, (0..h * w).map(|_| r.random_range(1..=2)).collect()).unwrap();
    let model = LinearScore {
        size,
        bands,
        weights: (0..size * size * bands)
            .map(|_| r.random_range(-1.0..1.0))
            .collect(),
    };
    let max_levels = (usize::BITS - 1 - bands.leading_zeros()) as usize;
    let mut config = IwgsConfig {
        criterion: Criterion::SignedMin,
        wavelet: WaveletSpec::new(
            if r.random_bool(0.5) {
                Family::Haar
            } else {
                Family::Daubechies4
            },
            r.random_range(1..=max_levels),
        ),
        domain: if r.random_bool(0.2) {
            Domain::Spectral
        } else {
            Domain::Wavelet
        },
        seed: r.random(),
        eval_subset_size: r.random_range(1..=h * w),
        ..IwgsConfig::default()
    };
    let channels = config.transform().channels(bands).unwrap();
    config.num_bands = r.random_range(1..=channels.min(8));
    (cube, labels, model, config)
}
