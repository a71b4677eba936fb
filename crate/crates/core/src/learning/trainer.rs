use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::LearningError;
use crate::model::ModelParameters;

/// Model architecture. Parameters are laid out as weight matrices
/// (row-major, output-major) followed by bias vectors, layer by layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelFamily {
    /// Multinomial logistic regression.
    Linear { d_in: usize, classes: usize },
    /// One tanh hidden layer.
    Mlp {
        d_in: usize,
        hidden: usize,
        classes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    #[default]
    CrossEntropy,
    /// `0.5 * ||logits - onehot||^2`, mostly useful for hand-checked tests.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub eta: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub local_steps: u32,
    pub loss: Loss,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            eta: 0.05,
            momentum: 0.0,
            batch_size: 20,
            local_steps: 5,
            loss: Loss::CrossEntropy,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), LearningError> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(LearningError::Config(format!(
                "eta must be >= 0, got {}",
                self.eta
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(LearningError::Config(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 || self.local_steps == 0 {
            return Err(LearningError::Config(
                "batch_size and local_steps must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl ModelFamily {
    pub fn d_in(&self) -> usize {
        match *self {
            ModelFamily::Linear { d_in, .. } | ModelFamily::Mlp { d_in, .. } => d_in,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            ModelFamily::Linear { classes, .. } | ModelFamily::Mlp { classes, .. } => classes,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            ModelFamily::Linear { d_in, classes } => classes * (d_in + 1),
            ModelFamily::Mlp {
                d_in,
                hidden,
                classes,
            } => hidden * (d_in + 1) + classes * (hidden + 1),
        }
    }

    /// Seeded random initialization.
    pub fn init(&self, seed: u64) -> ModelParameters {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(self.param_count());
        let mut gaussian = |count: usize, std: f64, values: &mut Vec<f64>| {
            let d = Normal::new(0.0, std).expect("valid std");
            values.extend((0..count).map(|_| d.sample(&mut rng)));
        };
        match *self {
            ModelFamily::Linear { d_in, classes } => {
                gaussian(classes * d_in, 0.01, &mut values);
                values.extend(std::iter::repeat_n(0.0, classes));
            }
            ModelFamily::Mlp {
                d_in,
                hidden,
                classes,
            } => {
                gaussian(hidden * d_in, 1.0 / (d_in as f64).sqrt(), &mut values);
                values.extend(std::iter::repeat_n(0.0, hidden));
                gaussian(classes * hidden, 1.0 / (hidden as f64).sqrt(), &mut values);
                values.extend(std::iter::repeat_n(0.0, classes));
            }
        }
        ModelParameters::new(values).expect("finite initialization")
    }

    fn check(&self, model: &ModelParameters, data: &Dataset) -> Result<(), LearningError> {
        if model.dim() != self.param_count() {
            return Err(LearningError::Shape(format!(
                "model has {} parameters, family expects {}",
                model.dim(),
                self.param_count()
            )));
        }
        if data.d_in != self.d_in() || data.classes != self.classes() {
            return Err(LearningError::Shape(
                "dataset does not match model family".into(),
            ));
        }
        Ok(())
    }

    /// Logits for one input row; `hidden` receives the hidden activations.
    fn forward(&self, params: &[f64], x: &[f64], hidden_out: &mut Vec<f64>, logits: &mut Vec<f64>) {
        logits.clear();
        match *self {
            ModelFamily::Linear { d_in, classes } => {
                let (w, b) = params.split_at(classes * d_in);
                for c in 0..classes {
                    logits.push(dot(&w[c * d_in..(c + 1) * d_in], x) + b[c]);
                }
            }
            ModelFamily::Mlp {
                d_in,
                hidden,
                classes,
            } => {
                let (w1, rest) = params.split_at(hidden * d_in);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(classes * hidden);
                hidden_out.clear();
                for h in 0..hidden {
                    hidden_out.push((dot(&w1[h * d_in..(h + 1) * d_in], x) + b1[h]).tanh());
                }
                for c in 0..classes {
                    logits.push(dot(&w2[c * hidden..(c + 1) * hidden], hidden_out) + b2[c]);
                }
            }
        }
    }

    /// Mean loss over `batch` rows of `data` and its gradient.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        data: &Dataset,
        batch: &[usize],
        loss: Loss,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.len()];
        let mut hidden = Vec::new();
        let mut logits = Vec::new();
        let mut dlogits = vec![0.0; self.classes()];
        let mut total = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let x = data.row(i);
            let y = data.labels[i];
            self.forward(params, x, &mut hidden, &mut logits);
            total += output_loss(&logits, y, loss, &mut dlogits);
            for d in dlogits.iter_mut() {
                *d *= scale;
            }
            self.backward(params, x, &hidden, &dlogits, &mut grad);
        }
        (total * scale, grad)
    }

    fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        hidden: &[f64],
        dlogits: &[f64],
        grad: &mut [f64],
    ) {
        match *self {
            ModelFamily::Linear { d_in, classes } => {
                let (gw, gb) = grad.split_at_mut(classes * d_in);
                for c in 0..classes {
                    axpy(dlogits[c], x, &mut gw[c * d_in..(c + 1) * d_in]);
                    gb[c] += dlogits[c];
                }
            }
            ModelFamily::Mlp {
                d_in,
                hidden: h_dim,
                classes,
            } => {
                let w2 = &params[h_dim * (d_in + 1)..h_dim * (d_in + 1) + classes * h_dim];
                let (gw1, rest) = grad.split_at_mut(h_dim * d_in);
                let (gb1, rest) = rest.split_at_mut(h_dim);
                let (gw2, gb2) = rest.split_at_mut(classes * h_dim);
                let mut dhidden = vec![0.0; h_dim];
                for c in 0..classes {
                    axpy(dlogits[c], hidden, &mut gw2[c * h_dim..(c + 1) * h_dim]);
                    gb2[c] += dlogits[c];
                    axpy(dlogits[c], &w2[c * h_dim..(c + 1) * h_dim], &mut dhidden);
                }
                for h in 0..h_dim {
                    let dpre = dhidden[h] * (1.0 - hidden[h] * hidden[h]);
                    axpy(dpre, x, &mut gw1[h * d_in..(h + 1) * d_in]);
                    gb1[h] += dpre;
                }
            }
        }
    }

    pub fn loss(&self, params: &[f64], data: &Dataset, batch: &[usize], loss: Loss) -> f64 {
        self.loss_and_grad(params, data, batch, loss).0
    }

    pub fn predict(&self, params: &[f64], x: &[f64]) -> usize {
        let mut hidden = Vec::new();
        let mut logits = Vec::new();
        self.forward(params, x, &mut hidden, &mut logits);
        argmax(&logits)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-example loss; writes d(loss)/d(logits) into `dlogits`.
fn output_loss(logits: &[f64], y: usize, loss: Loss, dlogits: &mut [f64]) -> f64 {
    match loss {
        Loss::CrossEntropy => {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (d, &l) in dlogits.iter_mut().zip(logits) {
                *d = (l - max).exp();
                z += *d;
            }
            for d in dlogits.iter_mut() {
                *d /= z;
            }
            let loss = -(dlogits[y].max(f64::MIN_POSITIVE)).ln();
            dlogits[y] -= 1.0;
            loss
        }
        Loss::Squared => {
            let mut total = 0.0;
            for (c, (d, &l)) in dlogits.iter_mut().zip(logits).enumerate() {
                let target = if c == y { 1.0 } else { 0.0 };
                *d = l - target;
                total += 0.5 * *d * *d;
            }
            total
        }
    }
}

/// Minibatch indices: without replacement when the shard is large enough.
fn draw_batch(m: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<usize> {
    if m >= batch_size {
        rand::seq::index::sample(rng, m, batch_size).into_vec()
    } else {
        (0..batch_size).map(|_| rng.random_range(0..m)).collect()
    }
}

/// Runs `config.local_steps` minibatch SGD steps with momentum from a zero
/// buffer. The input model is untouched; the result's age grows by the
/// number of steps.
pub fn local_train(
    model: &ModelParameters,
    data: &Dataset,
    family: &ModelFamily,
    config: &TrainerConfig,
    rng: &mut impl Rng,
) -> Result<ModelParameters, LearningError> {
    family.check(model, data)?;
    if data.is_empty() {
        return Err(LearningError::EmptyData);
    }
    let mut params = model.values().to_vec();
    let mut velocity = vec![0.0; params.len()];
    for _ in 0..config.local_steps {
        let batch = draw_batch(data.len(), config.batch_size, rng);
        let (loss, grad) = family.loss_and_grad(&params, data, &batch, config.loss);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(LearningError::Divergence);
        }
        for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = config.momentum * *v + g;
            *p -= config.eta * *v;
        }
    }
    ModelParameters::with_age(params, model.age() + config.local_steps as u64)
        .map_err(|_| LearningError::Divergence)
}

/// Top-1 accuracy on `test`.
pub fn evaluate(
    model: &ModelParameters,
    test: &Dataset,
    family: &ModelFamily,
) -> Result<f64, LearningError> {
    family.check(model, test)?;
    if test.is_empty() {
        return Err(LearningError::EmptyData);
    }
    let params = model.values();
    let mut hidden = Vec::new();
    let mut logits = Vec::new();
    let correct = (0..test.len())
        .filter(|&i| {
            family.forward(params, test.row(i), &mut hidden, &mut logits);
            argmax(&logits) == test.labels[i]
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::dataset::{synth_dataset, SynthSpec};

    fn tiny() -> Dataset {
        Dataset::new(1, 2, vec![1.0], vec![0]).unwrap()
    }

    #[test]
    fn squared_loss_hand_gradient() {
        let family = ModelFamily::Linear {
            d_in: 1,
            classes: 2,
        };
        let config = TrainerConfig {
            eta: 0.1,
            batch_size: 1,
            local_steps: 1,
            loss: Loss::Squared,
            ..TrainerConfig::default()
        };
        let w0 = ModelParameters::zeros(family.param_count());
        let out = local_train(
            &w0,
            &tiny(),
            &family,
            &config,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        // params = [w_0, w_1, b_0, b_1]; target class 0 with x = 1.
        assert!((out.values()[0] - 0.1).abs() < 1e-15);
        assert_eq!(out.values()[1], 0.0);
        assert_eq!(out.age(), 1);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let data = synth_dataset(&SynthSpec {
            n_samples: 200,
            ..SynthSpec::default()
        })
        .unwrap();
        let family = ModelFamily::Linear {
            d_in: 32,
            classes: 10,
        };
        let model = family.init(3);
        let config = TrainerConfig {
            eta: 0.0,
            ..TrainerConfig::default()
        };
        let out = local_train(
            &model,
            &data.train,
            &family,
            &config,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(out.values(), model.values());
        assert_eq!(out.age(), 5);
    }

    #[test]
    fn divergence_is_reported() {
        let data = Dataset::new(1, 2, vec![1e200], vec![0]).unwrap();
        let family = ModelFamily::Linear {
            d_in: 1,
            classes: 2,
        };
        let config = TrainerConfig {
            eta: 1e200,
            batch_size: 1,
            loss: Loss::Squared,
            ..TrainerConfig::default()
        };
        let err = local_train(
            &ModelParameters::zeros(4),
            &data,
            &family,
            &config,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "divergence: reduce eta");
    }

    #[test]
    fn shape_mismatch() {
        let family = ModelFamily::Linear {
            d_in: 1,
            classes: 2,
        };
        assert!(evaluate(&ModelParameters::zeros(3), &tiny(), &family).is_err());
    }

    #[test]
    fn small_shard_samples_with_replacement() {
        let b = draw_batch(3, 20, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(b.len(), 20);
        assert!(b.iter().all(|&i| i < 3));
        let b = draw_batch(100, 20, &mut ChaCha8Rng::seed_from_u64(0));
        let mut s = b.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 20);
    }

    #[test]
    fn training_is_deterministic() {
        let data = synth_dataset(&SynthSpec {
            n_samples: 300,
            ..SynthSpec::default()
        })
        .unwrap();
        let family = ModelFamily::Mlp {
            d_in: 32,
            hidden: 8,
            classes: 10,
        };
        let model = family.init(1);
        let config = TrainerConfig {
            momentum: 0.9,
            ..TrainerConfig::default()
        };
        let a = local_train(
            &model,
            &data.train,
            &family,
            &config,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let b = local_train(
            &model,
            &data.train,
            &family,
            &config,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
