//! Additive atmospheric noise and ℓ∞ projected-gradient attacks.
//!
//! Untargeted: every step ascends the true-label loss by `α · sign(∇x)` and
//! projects back onto the ℓ∞ ball of radius `ε` around the attack's starting
//! point. Values are not clamped to any physical range; callers attack in
//! standardized units.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::classifier::PatchObjective;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Start from a uniform point in the ball instead of its centre.
    #[serde(default)]
    pub random_start: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.03,
            alpha: 0.01,
            steps: 10,
            noise_sigma: 0.0,
            seed: 0,
            random_start: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.alpha > self.epsilon && self.epsilon > 0.0 {
            log::warn!(
                "PGD step alpha={} exceeds radius epsilon={}",
                self.alpha,
                self.epsilon
            );
        }
        Ok(())
    }

    /// Same attack with a different noise/start stream.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Adds i.i.d. `N(0, σ²)` noise to every value. `σ = 0` returns the input bit-for-bit.
pub fn atmospheric_noise(values: &[f64], noise_sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise_sigma must be >= 0, got {noise_sigma}"
        )));
    }
    if noise_sigma == 0.0 {
        return Ok(values.to_vec());
    }
    let mut rng = rng_from_seed(seed);
    Ok(values
        .iter()
        .map(|v| v + noise_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Closed interval `[lo, hi]` around `centre` such that both `hi - centre` and
/// `centre - lo` evaluate to at most `epsilon` in floating point.
fn ball_bounds(centre: f64, epsilon: f64) -> (f64, f64) {
    let mut hi = centre + epsilon;
    while hi - centre > epsilon {
        hi = hi.next_down();
    }
    let mut lo = centre - epsilon;
    while centre - lo > epsilon {
        lo = lo.next_up();
    }
    (lo, hi)
}

/// Result of a PGD run with the loss after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome {
    pub adversarial: Vec<f64>,
    pub initial_loss: f64,
    pub step_losses: Vec<f64>,
}

/// PGD attack; `observe(step, iterate)` sees every projected iterate.
pub fn pgd_attack_observed(
    model: &impl PatchObjective,
    x: &[f64],
    label: u16,
    config: &AttackConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<PgdOutcome> {
    config.validate()?;
    if x.len() != model.input_len() {
        return Err(Error::Shape(format!(
            "attack input has {} values, model expects {}",
            x.len(),
            model.input_len()
        )));
    }
    let bounds: Vec<(f64, f64)> = x.iter().map(|&c| ball_bounds(c, config.epsilon)).collect();
    let mut adv = x.to_vec();
    if config.random_start && config.epsilon > 0.0 {
        let mut rng = rng_from_seed(derive_seed(config.seed, "pgd-start"));
        for (v, &(lo, hi)) in adv.iter_mut().zip(&bounds) {
            *v = rng.random_range(lo..=hi);
        }
    }
    let (initial_loss, mut grad) = model.loss_and_input_grad(&adv, label)?;
    let mut step_losses = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        for ((v, &g), &(lo, hi)) in adv.iter_mut().zip(&grad).zip(&bounds) {
            let dir = if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                0.0
            };
            *v = (*v + config.alpha * dir).clamp(lo, hi);
        }
        observe(step, &adv);
        let (loss, g) = model.loss_and_input_grad(&adv, label)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "attack loss non-finite at step {step}"
            )));
        }
        step_losses.push(loss);
        grad = g;
    }
    Ok(PgdOutcome {
        adversarial: adv,
        initial_loss,
        step_losses,
    })
}

pub fn pgd_attack(
    model: &impl PatchObjective,
    x: &[f64],
    label: u16,
    config: &AttackConfig,
) -> Result<Vec<f64>> {
    pgd_attack_observed(model, x, label, config, |_, _| {}).map(|o| o.adversarial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub noised: Vec<f64>,
    pub adversarial: Vec<f64>,
}

/// Noise first, then PGD inside the ε-ball around the noised input.
pub fn compound_perturb(
    model: &impl PatchObjective,
    x: &[f64],
    label: u16,
    config: &AttackConfig,
) -> Result<Perturbed> {
    config.validate()?;
    let noised = atmospheric_noise(x, config.noise_sigma, derive_seed(config.seed, "noise"))?;
    let adversarial = pgd_attack(model, &noised, label, config)?;
    Ok(Perturbed {
        noised,
        adversarial,
    })
}
