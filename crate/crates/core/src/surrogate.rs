//! Three-layer perceptron used as the fitness surrogate.
//!
//! Logistic hidden and output units. Targets are real fitness divided by
//! `fitness_scale`, so predictions live in `(0, fitness_scale)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub const HIDDEN: usize = 5;
const INIT_RANGE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub initial_bias: f64,
    pub momentum: f64,
    pub updates_per_retrain: usize,
    // Carried for provenance; plain SGD does not use them.
    pub elasticity: f64,
    pub calming_rate: f64,
    pub elasticity_rate: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.3,
            initial_bias: 0.0,
            momentum: 0.0,
            updates_per_retrain: 1000,
            elasticity: 1.0,
            calming_rate: 1.0,
            elasticity_rate: 0.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::Training(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.updates_per_retrain < 1 {
            return Err(ModelError::Training("updates per retrain must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ModelError::Training(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

/// Genome input (scaled to `[-1, 1]`) paired with its measured fitness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluatedPair {
    pub scaled_input: Vec<f64>,
    pub real_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SurrogateModel {
    input_size: usize,
    hidden_size: usize,
    /// Row-major `hidden_size × input_size`.
    hidden_weights: Vec<f64>,
    hidden_biases: Vec<f64>,
    output_weights: Vec<f64>,
    output_bias: f64,
    fitness_scale: f64,
}

/// Parameter gradient laid out like [`SurrogateModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub hidden_weights: Vec<f64>,
    pub hidden_biases: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SurrogateModel {
    /// Weights uniform in `[-0.5, 0.5]`, biases at `initial_bias`.
    pub fn init<R: Rng + ?Sized>(
        input_size: usize,
        fitness_scale: f64,
        initial_bias: f64,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let mut model = Self::zeroed(input_size, fitness_scale)?;
        for w in model.hidden_weights.iter_mut().chain(model.output_weights.iter_mut()) {
            *w = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
        model.hidden_biases.fill(initial_bias);
        model.output_bias = initial_bias;
        Ok(model)
    }

    /// All weights and biases zero.
    pub fn zeroed(input_size: usize, fitness_scale: f64) -> Result<Self, ModelError> {
        if input_size != 10 && input_size != 15 {
            return Err(ModelError::InputSize(input_size));
        }
        if !(fitness_scale > 0.0 && fitness_scale.is_finite()) {
            return Err(ModelError::FitnessScale(fitness_scale));
        }
        Ok(Self {
            input_size,
            hidden_size: HIDDEN,
            hidden_weights: vec![0.0; HIDDEN * input_size],
            hidden_biases: vec![0.0; HIDDEN],
            output_weights: vec![0.0; HIDDEN],
            output_bias: 0.0,
            fitness_scale,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn fitness_scale(&self) -> f64 {
        self.fitness_scale
    }

    pub fn hidden_weights_mut(&mut self) -> &mut [f64] {
        &mut self.hidden_weights
    }

    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        &mut self.output_weights
    }

    pub fn hidden_biases_mut(&mut self) -> &mut [f64] {
        &mut self.hidden_biases
    }

    pub fn set_output_bias(&mut self, bias: f64) {
        self.output_bias = bias;
    }

    /// Flat view of every parameter: hidden weights, hidden biases, output
    /// weights, output bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = self.hidden_weights.clone();
        p.extend(&self.hidden_biases);
        p.extend(&self.output_weights);
        p.push(self.output_bias);
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let (nw, nh) = (self.hidden_weights.len(), self.hidden_size);
        assert_eq!(params.len(), nw + 2 * nh + 1, "parameter vector length");
        self.hidden_weights.copy_from_slice(&params[..nw]);
        self.hidden_biases.copy_from_slice(&params[nw..nw + nh]);
        self.output_weights.copy_from_slice(&params[nw + nh..nw + 2 * nh]);
        self.output_bias = params[nw + 2 * nh];
    }

    fn check_input(&self, input: &[f64]) -> Result<(), ModelError> {
        if input.len() != self.input_size {
            return Err(ModelError::InputLength { expected: self.input_size, got: input.len() });
        }
        Ok(())
    }

    fn hidden_activations(&self, input: &[f64]) -> [f64; HIDDEN] {
        let mut hidden = [0.0; HIDDEN];
        for (h, out) in hidden.iter_mut().enumerate() {
            let row = &self.hidden_weights[h * self.input_size..(h + 1) * self.input_size];
            let net: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.hidden_biases[h];
            *out = sigmoid(net);
        }
        hidden
    }

    /// Output unit activation in `(0, 1)`.
    pub fn normalized_output(&self, input: &[f64]) -> Result<f64, ModelError> {
        self.check_input(input)?;
        let hidden = self.hidden_activations(input);
        let net: f64 = hidden.iter().zip(&self.output_weights).map(|(h, w)| h * w).sum::<f64>() + self.output_bias;
        Ok(sigmoid(net))
    }

    /// Predicted fitness in `(0, fitness_scale)`.
    pub fn predict(&self, input: &[f64]) -> Result<f64, ModelError> {
        Ok(self.normalized_output(input)? * self.fitness_scale)
    }

    /// Half squared error on one pair, in normalized units.
    pub fn sample_loss(&self, pair: &EvaluatedPair) -> Result<f64, ModelError> {
        let err = self.normalized_output(&pair.scaled_input)? - pair.real_fitness / self.fitness_scale;
        Ok(0.5 * err * err)
    }

    /// Backpropagated gradient of [`SurrogateModel::sample_loss`].
    pub fn gradient(&self, pair: &EvaluatedPair) -> Result<Gradient, ModelError> {
        let input = &pair.scaled_input;
        self.check_input(input)?;
        let hidden = self.hidden_activations(input);
        let net: f64 = hidden.iter().zip(&self.output_weights).map(|(h, w)| h * w).sum::<f64>() + self.output_bias;
        let out = sigmoid(net);
        let target = pair.real_fitness / self.fitness_scale;
        let delta_out = (out - target) * out * (1.0 - out);

        let output_weights: Vec<f64> = hidden.iter().map(|h| delta_out * h).collect();
        let mut hidden_weights = vec![0.0; self.hidden_weights.len()];
        let mut hidden_biases = vec![0.0; self.hidden_size];
        for h in 0..self.hidden_size {
            let delta_h = delta_out * self.output_weights[h] * hidden[h] * (1.0 - hidden[h]);
            hidden_biases[h] = delta_h;
            for (i, x) in input.iter().enumerate() {
                hidden_weights[h * self.input_size + i] = delta_h * x;
            }
        }
        Ok(Gradient { hidden_weights, hidden_biases, output_weights, output_bias: delta_out })
    }

    fn apply(&mut self, grad: &Gradient, rate: f64, momentum: f64, velocity: &mut Vec<f64>) {
        let mut flat = grad.hidden_weights.clone();
        flat.extend(&grad.hidden_biases);
        flat.extend(&grad.output_weights);
        flat.push(grad.output_bias);
        if velocity.is_empty() {
            velocity.resize(flat.len(), 0.0);
        }
        let mut params = self.parameters();
        for ((p, g), v) in params.iter_mut().zip(&flat).zip(velocity.iter_mut()) {
            *v = momentum * *v - rate * g;
            *p += *v;
        }
        self.set_parameters(&params);
    }
}

/// `cfg.updates_per_retrain` single-sample SGD updates, drawing pairs without
/// replacement and reshuffling whenever a pass through the set is exhausted.
pub fn train_incremental<R: Rng + ?Sized>(
    model: &SurrogateModel,
    dataset: &[EvaluatedPair],
    cfg: &TrainingConfig,
    rng: &mut R,
) -> Result<SurrogateModel, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    cfg.validate()?;
    for pair in dataset {
        model.check_input(&pair.scaled_input)?;
    }
    let mut trained = model.clone();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut velocity = Vec::new();
    for _ in 0..cfg.updates_per_retrain {
        if cursor == order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let pair = &dataset[order[cursor]];
        cursor += 1;
        let grad = trained.gradient(pair)?;
        trained.apply(&grad, cfg.learning_rate, cfg.momentum, &mut velocity);
    }
    Ok(trained)
}

/// Mean squared error over normalized fitness.
pub fn evaluate_loss(model: &SurrogateModel, dataset: &[EvaluatedPair]) -> Result<f64, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for pair in dataset {
        let err = model.normalized_output(&pair.scaled_input)? - pair.real_fitness / model.fitness_scale;
        total += err * err;
    }
    Ok(total / dataset.len() as f64)
}
