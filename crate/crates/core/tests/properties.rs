mod common;

use common::{brute_force_metrics, random_confusion, random_params, rng};
use iwgs_core::adversarial::{
    atmospheric_noise, compound_perturb, pgd_attack, pgd_attack_observed,
};
use iwgs_core::classifier::{Activation, ClassifierParams};
use iwgs_core::metrics::{accumulate, average_accuracy, kappa, overall_accuracy, ConfusionMatrix};
use iwgs_core::wavelet::{dwt_in_place, idwt_in_place, Family};
use iwgs_core::{AttackConfig, PatchObjective};
use proptest::prelude::*;
use rand::Rng;

fn family(i: u8) -> Family {
    if i.is_multiple_of(2) {
        Family::Haar
    } else {
        Family::Daubechies4
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn softmax_is_positive_and_normalized(seed in any::<u64>(), scale in 0.0f64..1e3) {
        // Bounded tanh features keep every logit gap small enough for exp() not to underflow.
        let mut r = rng(seed);
        let params = random_params(&mut r, Activation::Tanh);
        let x: Vec<f64> = (0..params.input_len()).map(|_| scale * r.random_range(-1.0..1.0)).collect();
        let probs = params.forward(&x).unwrap();
        prop_assert_eq!(probs.len(), usize::from(params.num_classes));
        prop_assert!(probs.iter().all(|&p| p > 0.0));
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_stable_for_huge_logits(seed in any::<u64>(), scale in 1e2f64..1e6) {
        let mut r = rng(seed);
        let params = random_params(&mut r, Activation::Identity);
        let x: Vec<f64> = (0..params.input_len()).map(|_| scale * r.random_range(-1.0..1.0)).collect();
        let probs = params.forward(&x).unwrap();
        prop_assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wavelet_is_linear_orthonormal_and_invertible(
        seed in any::<u64>(),
        fam in 0u8..2,
        log_len in 1u32..7,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let n = 1usize << log_len;
        let levels = 1 + (seed as usize) % log_len as usize;
        let family = family(fam);
        let mut r = rng(seed);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let fwd = |v: &[f64]| { let mut v = v.to_vec(); dwt_in_place(&mut v, family, levels); v };
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fc) = (fwd(&x), fwd(&y), fwd(&combo));
        for i in 0..n {
            prop_assert!((fc[i] - (a * fx[i] + b * fy[i])).abs() < 1e-6);
        }
        let energy = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>();
        prop_assert!((energy(&fx) - energy(&x)).abs() <= 1e-6 * energy(&x));
        let mut back = fx.clone();
        idwt_in_place(&mut back, family, levels);
        for i in 0..n {
            prop_assert!((back[i] - x[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn kappa_bounded_by_oa_and_matches_brute_force(seed in any::<u64>()) {
        let cm = random_confusion(&mut rng(seed));
        let (oa, aa, k) = (overall_accuracy(&cm).unwrap(), average_accuracy(&cm).unwrap(), kappa(&cm).unwrap());
        prop_assert!(k <= oa);
        let (boa, baa, bk) = brute_force_metrics(&cm);
        prop_assert!((oa - boa).abs() < 1e-12);
        prop_assert!((aa - baa).abs() < 1e-12);
        prop_assert!((k - bk).abs() < 1e-12);
    }

    #[test]
    fn oa_is_support_weighted_recall(seed in any::<u64>()) {
        let cm = random_confusion(&mut rng(seed));
        let n = cm.total() as f64;
        let weighted: f64 = cm
            .per_class_accuracy()
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|a| a * cm.row_sum(i + 1) as f64 / n))
            .sum();
        prop_assert!((weighted - overall_accuracy(&cm).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metrics_invariant_under_class_permutation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cm = random_confusion(&mut r);
        let c = cm.classes();
        let mut perm: Vec<usize> = (0..c).collect();
        for i in (1..c).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let mut counts = vec![0u64; c * c];
        for t in 0..c {
            for p in 0..c {
                counts[perm[t] * c + perm[p]] = cm.get(t + 1, p + 1);
            }
        }
        let permuted = ConfusionMatrix::from_counts(c, counts).unwrap();
        prop_assert_eq!(overall_accuracy(&cm).unwrap(), overall_accuracy(&permuted).unwrap());
        prop_assert_eq!(kappa(&cm).unwrap(), kappa(&permuted).unwrap());
        prop_assert!((average_accuracy(&cm).unwrap() - average_accuracy(&permuted).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn accumulate_is_additive(seed in any::<u64>(), len_a in 0usize..60, len_b in 0usize..60) {
        let mut r = rng(seed);
        let c = 4u16;
        let mut draw = |n: usize| -> (Vec<u16>, Vec<u16>) {
            (0..n).map(|_| (r.random_range(0..=c), r.random_range(1..=c))).unzip()
        };
        let (ta, pa) = draw(len_a);
        let (tb, pb) = draw(len_b);
        let mut merged = accumulate(&ta, &pa, 4).unwrap();
        merged.merge(&accumulate(&tb, &pb, 4).unwrap()).unwrap();
        let joint = accumulate(&[ta, tb].concat(), &[pa, pb].concat(), 4).unwrap();
        prop_assert_eq!(merged, joint);
    }

    #[test]
    fn pgd_stays_in_ball_after_every_step(
        seed in any::<u64>(),
        epsilon in 0.0f64..0.5,
        alpha in 0.001f64..0.3,
        steps in 1usize..8,
    ) {
        let mut r = rng(seed);
        let params = random_params(&mut r, Activation::Tanh);
        let x: Vec<f64> = (0..params.input_len()).map(|_| r.random_range(-2.0..2.0)).collect();
        let label = r.random_range(1..=params.num_classes);
        let cfg = AttackConfig { epsilon, alpha, steps, noise_sigma: 0.0, seed, random_start: seed % 3 == 0 };
        let mut violations = 0;
        let out = pgd_attack_observed(&params, &x, label, &cfg, |_, adv| {
            violations += adv.iter().zip(&x).filter(|(a, c)| (*a - *c).abs() > epsilon).count();
        })
        .unwrap();
        prop_assert_eq!(violations, 0);
        prop_assert_eq!(out.step_losses.len(), steps);
    }

    #[test]
    fn compound_perturbation_bounded_around_noised_input(
        seed in any::<u64>(),
        epsilon in 0.0f64..0.3,
        sigma in 0.0f64..0.5,
    ) {
        let mut r = rng(seed);
        let params = random_params(&mut r, Activation::Tanh);
        let x: Vec<f64> = (0..params.input_len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let cfg = AttackConfig { epsilon, alpha: 0.05, steps: 5, noise_sigma: sigma, seed, random_start: false };
        let out = compound_perturb(&params, &x, 1, &cfg).unwrap();
        for (a, n) in out.adversarial.iter().zip(&out.noised) {
            prop_assert!((a - n).abs() <= epsilon);
        }
        if sigma == 0.0 {
            prop_assert_eq!(&out.noised, &x);
            prop_assert_eq!(out.adversarial, pgd_attack(&params, &x, 1, &cfg).unwrap());
        }
    }
}

/// Identity activation: logits affine in the input, loss convex in it.
fn linear_classifier(seed: u64) -> ClassifierParams {
    let mut r = rng(seed);
    let bands = r.random_range(1..=6);
    let mut p = ClassifierParams::zeros(1, bands, 2, 3, Activation::Identity);
    for w in p
        .hidden_weights
        .iter_mut()
        .chain(&mut p.output_weights)
        .chain(&mut p.output_bias)
    {
        *w = r.random_range(-1.0..1.0);
    }
    p
}

#[test]
fn pgd_on_linear_classifier_never_decreases_loss() {
    for seed in 0..300 {
        let params = linear_classifier(seed);
        let mut r = rng(seed ^ 0xabc);
        let x: Vec<f64> = (0..params.input_len())
            .map(|_| r.random_range(-1.0..1.0))
            .collect();
        let label = r.random_range(1..=params.num_classes);
        let cfg = AttackConfig {
            epsilon: 0.1,
            alpha: 0.02,
            steps: 8,
            ..AttackConfig::default()
        };
        let out = pgd_attack_observed(&params, &x, label, &cfg, |_, _| {}).unwrap();
        let mut prev = out.initial_loss;
        for &l in &out.step_losses {
            assert!(
                l >= prev - 1e-9,
                "seed {seed}: loss fell from {prev} to {l}"
            );
            prev = l;
        }
    }
}

#[test]
fn linear_pgd_ends_on_ball_boundary() {
    // A loss linear in x has a constant gradient sign.
    struct Linear(Vec<f64>);
    impl PatchObjective for Linear {
        fn patch_size(&self) -> usize {
            1
        }
        fn input_bands(&self) -> usize {
            self.0.len()
        }
        fn loss_and_input_grad(&self, x: &[f64], _: u16) -> iwgs_core::Result<(f64, Vec<f64>)> {
            Ok((
                x.iter().zip(&self.0).map(|(a, b)| a * b).sum(),
                self.0.clone(),
            ))
        }
    }
    let model = Linear(vec![0.5, -2.0, 0.0, 1e-3]);
    let x = [0.25, -0.5, 0.75, 1.0];
    let cfg = AttackConfig {
        epsilon: 0.0625,
        alpha: 0.015625,
        steps: 6,
        ..AttackConfig::default()
    };
    let adv = pgd_attack(&model, &x, 1, &cfg).unwrap();
    assert_eq!(adv, vec![0.3125, -0.5625, 0.75, 1.0625]);
    assert!(model.loss(&adv, 1).unwrap() >= model.loss(&x, 1).unwrap());
}

#[test]
fn noise_sample_statistics() {
    let n = 1_000_000;
    let sigma = 0.2;
    let x = vec![0.5; n];
    let y = atmospheric_noise(&x, sigma, 42).unwrap();
    let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() <= 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    assert!(
        (var.sqrt() - sigma).abs() <= 0.01 * sigma,
        "std {}",
        var.sqrt()
    );
    assert_eq!(y, atmospheric_noise(&x, sigma, 42).unwrap());
    assert_ne!(y, atmospheric_noise(&x, sigma, 43).unwrap());
}
