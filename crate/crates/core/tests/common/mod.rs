//! Shared oracles for the integration and acceptance suites.

use labelnoise::matrix::Matrix;
use labelnoise::nn::{self, NetworkSpec, Params, Targets};
use labelnoise::rng::seeded_rng;
use rand::Rng;

/// Central finite differences of the batch loss with respect to every
/// parameter, step `eps`. Independent of the backprop path: only evaluates
/// the forward loss.
pub fn numeric_gradient(
    params: &Params<f64>,
    spec: &NetworkSpec,
    features: &Matrix<f64>,
    targets: Targets<'_, f64>,
    eps: f64,
) -> Params<f64> {
    let loss_at = |p: &Params<f64>| -> f64 {
        let probs = nn::forward(p, spec, features).unwrap();
        match targets {
            Targets::Hard(labels) => nn::ce_loss(&probs, labels).unwrap(),
            Targets::Soft(soft) => nn::soft_ce_loss(&probs, soft).unwrap(),
        }
    };
    let mut grads = Params::<f64>::zeros(spec);
    let mut work = params.clone();
    for l in 0..params.layers.len() {
        for idx in 0..params.layers[l].weights.data().len() {
            let orig = work.layers[l].weights.data()[idx];
            work.layers[l].weights.data_mut()[idx] = orig + eps;
            let up = loss_at(&work);
            work.layers[l].weights.data_mut()[idx] = orig - eps;
            let down = loss_at(&work);
            work.layers[l].weights.data_mut()[idx] = orig;
            grads.layers[l].weights.data_mut()[idx] = (up - down) / (2.0 * eps);
        }
        for idx in 0..params.layers[l].bias.len() {
            let orig = work.layers[l].bias[idx];
            work.layers[l].bias[idx] = orig + eps;
            let up = loss_at(&work);
            work.layers[l].bias[idx] = orig - eps;
            let down = loss_at(&work);
            work.layers[l].bias[idx] = orig;
            grads.layers[l].bias[idx] = (up - down) / (2.0 * eps);
        }
    }
    grads
}

/// Largest relative disagreement between analytic and numeric gradients.
pub fn max_relative_error(analytic: &Params<f64>, numeric: &Params<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.layers.iter().zip(&numeric.layers) {
        let pairs = a
            .weights
            .data()
            .iter()
            .zip(n.weights.data())
            .chain(a.bias.iter().zip(&n.bias));
        for (&x, &y) in pairs {
            let scale = x.abs().max(y.abs()).max(1e-6);
            worst = worst.max((x - y).abs() / scale);
        }
    }
    worst
}

/// Random small network, batch, and both kinds of targets for one checker case.
pub struct GradCase {
    pub spec: NetworkSpec,
    pub params: Params<f64>,
    pub features: Matrix<f64>,
    pub labels: Vec<usize>,
    pub soft: Matrix<f64>,
}

pub fn random_case(seed: u64) -> GradCase {
    let mut rng = seeded_rng(seed);
    let depth = rng.random_range(0..=2);
    let input = rng.random_range(1..=6);
    let classes = rng.random_range(2..=5);
    let mut widths = vec![input];
    for _ in 0..depth {
        widths.push(rng.random_range(2..=16));
    }
    widths.push(classes);
    let spec = NetworkSpec::mlp(widths).unwrap();
    let mut params = Params::<f64>::init(&spec, rng.random());
    // Keep logits moderate so the probe stays away from the log clamp and
    // from saturated softmax rows. Biases are jittered because zero biases
    // park dead-input units exactly on the relu kink, where the loss is not
    // differentiable and central differences measure the half-slope.
    for layer in &mut params.layers {
        for w in layer.weights.data_mut() {
            *w *= 0.5;
        }
        for b in &mut layer.bias {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    let rows = rng.random_range(1..=8);
    let mut features = Matrix::<f64>::zeros(rows, input);
    for v in features.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(1..=classes)).collect();
    let mut soft = Matrix::<f64>::zeros(rows, classes);
    for i in 0..rows {
        let mut total = 0.0;
        let row = soft.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.random_range(0.05..1.0);
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    GradCase {
        spec,
        params,
        features,
        labels,
        soft,
    }
}
