//! The training update: plain SGD, the data-gradient regularized step, and
//! the epoch loop with validation-based model selection.
//!
//! The regularized step estimates the weight gradient of the data-gradient
//! penalty by finite differences. One batch costs two forward and two
//! backward passes:
//!
//! ```text
//! xi    = dL/dW at d                  (first backward, also yields dL/dd)
//! y     = immediate gradient of R applied to dL/dd
//! dhat  = d + t*y
//! omega = dL/dW at dhat               (second backward)
//! W    <- W - eta * (lambda0*xi + lambda1*(omega - xi)/t)
//! ```
//!
//! With lambda1 = 0 the second pass is skipped and the arithmetic reduces
//! bitwise to plain SGD: the regularizer term is never computed, not merely
//! multiplied by zero (adding 0.0 can still flip the sign bit of -0.0).

use crate::data::{batches, gather, Dataset};
use crate::error::{Error, Result};
use crate::network::{
    argmax, backward, backward_batch, cross_entropy_loss, forward, forward_batch, init_he,
    NetworkParams,
};
use crate::regularizer::{adversarial_direction, immediate_gradient_in_place, make_adversarial, RegularizerKind};
use crate::tensor::{Matrix, Vector};

/// Classical norm penalty on the weights, for baseline runs. Applies to
/// weight matrices only, never biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPenalty {
    pub kind: RegularizerKind,
    pub coeff: f64,
}

/// Every knob a training run depends on. Two runs with equal configs and
/// equal data produce bitwise-identical parameter trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    /// Finite-difference step t used during training. Distinct from the
    /// attack magnitude phi used at evaluation time.
    pub fd_step: f64,
    pub reg_kind: RegularizerKind,
    pub weight_penalty: Option<WeightPenalty>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Auxiliary-task coefficient, multi-task runs only.
    pub gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.1,
            lambda0: 1.0,
            lambda1: 0.0,
            fd_step: 0.05,
            reg_kind: RegularizerKind::L1,
            weight_penalty: None,
            batch_size: 100,
            epochs: 30,
            seed: 0,
            gamma: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be a positive finite number, got {}", self.eta));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return bad(format!("fd_step must be a positive finite number, got {}", self.fd_step));
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return bad(format!("lambda0 must be nonnegative and finite, got {}", self.lambda0));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad(format!("lambda1 must be nonnegative and finite, got {}", self.lambda1));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be nonnegative and finite, got {}", self.gamma));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".to_string());
        }
        if let Some(wp) = &self.weight_penalty {
            if !(wp.coeff >= 0.0 && wp.coeff.is_finite()) {
                return bad(format!(
                    "weight penalty coefficient must be nonnegative and finite, got {}",
                    wp.coeff
                ));
            }
        }
        Ok(())
    }
}

/// Per-layer weight and bias gradients, shaped like the network they came
/// from.
#[derive(Debug, Clone)]
pub struct GradSet {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

/// Batch-averaged gradients of one step: `xi` from the clean inputs, and
/// `omega` from the perturbed inputs when the regularizer is active.
#[derive(Debug, Clone)]
pub struct StepGrads {
    pub xi: GradSet,
    pub omega: Option<GradSet>,
}

/// Finite-difference estimate of the regularizer's weight gradient for one
/// sample: (omega - xi) / fd_step per layer. A network that is already
/// indifferent to its input (zero data gradient) yields exactly zero.
pub fn fd_regularizer_grad(
    params: &NetworkParams,
    d: &Vector,
    t_label: usize,
    cfg: &TrainConfig,
) -> Result<GradSet> {
    if !(cfg.fd_step > 0.0 && cfg.fd_step.is_finite()) {
        return Err(Error::Config(format!(
            "fd_step must be a positive finite number, got {}",
            cfg.fd_step
        )));
    }
    let trace = forward(params, d)?;
    let clean = backward(params, &trace, t_label)?;
    let y = adversarial_direction(cfg.reg_kind, &clean.data_gradient);
    let dhat = make_adversarial(d, &y, cfg.fd_step)?;
    let trace_hat = forward(params, &dhat)?;
    let perturbed = backward(params, &trace_hat, t_label)?;

    let t = cfg.fd_step;
    let mut weights = Vec::with_capacity(params.depth());
    let mut biases = Vec::with_capacity(params.depth());
    for layer in 0..params.depth() {
        let xi = &clean.weight_grads[layer];
        let om = &perturbed.weight_grads[layer];
        let mut wg = Matrix::zeros(xi.rows(), xi.cols());
        for ((g, &o), &x) in wg.as_mut_slice().iter_mut().zip(om.as_slice()).zip(xi.as_slice()) {
            *g = (o - x) / t;
        }
        if !wg.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite regularizer gradient in layer {layer} weights"
            )));
        }
        let mut bg = Vector::zeros(clean.bias_grads[layer].len());
        for ((g, &o), &x) in bg
            .as_mut_slice()
            .iter_mut()
            .zip(perturbed.bias_grads[layer].as_slice())
            .zip(clean.bias_grads[layer].as_slice())
        {
            *g = (o - x) / t;
        }
        if !bg.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite regularizer gradient in layer {layer} biases"
            )));
        }
        weights.push(wg);
        biases.push(bg);
    }
    Ok(GradSet { weights, biases })
}

/// What one batch produced: the gradients plus forward-pass statistics
/// (correct predictions and summed cross-entropy on the clean inputs).
pub(crate) struct BatchOutcome {
    pub grads: StepGrads,
    pub correct: usize,
    pub loss_sum: f64,
}

fn grad_set(params: &NetworkParams, images: &Matrix, labels: &[usize], want_data: bool) -> Result<(GradSet, Option<Matrix>, Matrix)> {
    let trace = forward_batch(params, images)?;
    let grads = backward_batch(params, &trace, labels, want_data)?;
    Ok((
        GradSet { weights: grads.weight_grads, biases: grads.bias_grads },
        grads.data_gradients,
        trace.predictions,
    ))
}

/// Both gradient passes for one batch, rows of `images` being the samples.
pub(crate) fn batch_outcome(
    params: &NetworkParams,
    images: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<BatchOutcome> {
    let want_data = cfg.lambda1 > 0.0;
    let (xi, data_grads, predictions) = grad_set(params, images, labels, want_data)?;

    let mut correct = 0;
    let mut loss_sum = 0.0;
    for (s, &t) in labels.iter().enumerate() {
        let row = predictions.row(s);
        if argmax(row) == t {
            correct += 1;
        }
        loss_sum += cross_entropy_loss(row, t);
    }

    let omega = if want_data {
        let mut y = data_grads.expect("requested data gradients");
        immediate_gradient_in_place(cfg.reg_kind, y.as_mut_slice());
        let mut dhat = images.clone();
        for (d, &yv) in dhat.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *d += cfg.fd_step * yv;
        }
        let (om, _, _) = grad_set(params, &dhat, labels, false)?;
        Some(om)
    } else {
        None
    };

    Ok(BatchOutcome { grads: StepGrads { xi, omega }, correct, loss_sum })
}

/// Applies one averaged-gradient step in place:
/// W <- W - eta * (lambda0*xi + lambda1*(omega - xi)/fd_step + penalty').
/// Terms with a zero coefficient are skipped outright, so a lambda1 = 0
/// config takes exactly the plain-SGD arithmetic path.
pub(crate) fn apply_update(
    params: &mut NetworkParams,
    grads: &StepGrads,
    cfg: &TrainConfig,
) -> Result<()> {
    let reg = if cfg.lambda1 > 0.0 {
        match &grads.omega {
            Some(om) => Some(om),
            None => {
                return Err(Error::InvalidInput(
                    "lambda1 > 0 but the step carries no perturbed-input gradients".to_string(),
                ))
            }
        }
    } else {
        None
    };
    let penalty = cfg.weight_penalty.filter(|wp| wp.coeff > 0.0);
    let (l0, l1, t) = (cfg.lambda0, cfg.lambda1, cfg.fd_step);

    for layer in 0..params.depth() {
        let xiw = grads.xi.weights[layer].as_slice();
        let omw = reg.map(|om| om.weights[layer].as_slice());
        let w = params.weights[layer].as_mut_slice();
        for (i, wi) in w.iter_mut().enumerate() {
            let mut g = l0 * xiw[i];
            if let Some(om) = omw {
                g += l1 * ((om[i] - xiw[i]) / t);
            }
            if let Some(wp) = penalty {
                g += match wp.kind {
                    RegularizerKind::L1 => wp.coeff * crate::regularizer::sign(*wi),
                    RegularizerKind::L2 => 2.0 * wp.coeff * *wi,
                };
            }
            *wi -= cfg.eta * g;
        }
        if !params.weights[layer].is_finite() {
            return Err(Error::numerical(format!("non-finite update in layer {layer} weights")));
        }

        let xib = grads.xi.biases[layer].as_slice();
        let omb = reg.map(|om| om.biases[layer].as_slice());
        let b = params.biases[layer].as_mut_slice();
        for (i, bi) in b.iter_mut().enumerate() {
            let mut g = l0 * xib[i];
            if let Some(om) = omb {
                g += l1 * ((om[i] - xib[i]) / t);
            }
            *bi -= cfg.eta * g;
        }
        if !params.biases[layer].is_finite() {
            return Err(Error::numerical(format!("non-finite update in layer {layer} biases")));
        }
    }
    Ok(())
}

fn batch_to_matrix(batch: &[(Vector, usize)], input_dim: usize) -> Result<(Matrix, Vec<usize>)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".to_string()));
    }
    let mut images = Matrix::zeros(batch.len(), input_dim);
    let mut labels = Vec::with_capacity(batch.len());
    for (s, (d, t)) in batch.iter().enumerate() {
        if d.len() != input_dim {
            return Err(Error::shape(
                "batch",
                format!("sample {s} has {} features, network expects {input_dim}", d.len()),
            ));
        }
        images.row_mut(s).copy_from_slice(d.as_slice());
        labels.push(*t);
    }
    Ok((images, labels))
}

/// One plain SGD step on a batch: W <- W - eta * (lambda0*xi + penalty').
/// The regularizer settings in `cfg` are ignored.
pub fn sgd_step(params: &mut NetworkParams, batch: &[(Vector, usize)], cfg: &TrainConfig) -> Result<()> {
    let (images, labels) = batch_to_matrix(batch, params.input_dim())?;
    let (xi, _, _) = grad_set(params, &images, &labels, false)?;
    for layer in 0..params.depth() {
        let xiw = xi.weights[layer].as_slice();
        let w = params.weights[layer].as_mut_slice();
        for (i, wi) in w.iter_mut().enumerate() {
            let mut g = cfg.lambda0 * xiw[i];
            if let Some(wp) = &cfg.weight_penalty {
                if wp.coeff > 0.0 {
                    g += match wp.kind {
                        RegularizerKind::L1 => wp.coeff * crate::regularizer::sign(*wi),
                        RegularizerKind::L2 => 2.0 * wp.coeff * *wi,
                    };
                }
            }
            *wi -= cfg.eta * g;
        }
        if !params.weights[layer].is_finite() {
            return Err(Error::numerical(format!("non-finite update in layer {layer} weights")));
        }
        let xib = xi.biases[layer].as_slice();
        let b = params.biases[layer].as_mut_slice();
        for (i, bi) in b.iter_mut().enumerate() {
            *bi -= cfg.eta * (cfg.lambda0 * xib[i]);
        }
        if !params.biases[layer].is_finite() {
            return Err(Error::numerical(format!("non-finite update in layer {layer} biases")));
        }
    }
    Ok(())
}

/// One data-gradient regularized step on a batch. With lambda1 = 0 this is
/// bitwise-identical to `sgd_step`.
pub fn datagrad_step(
    params: &mut NetworkParams,
    batch: &[(Vector, usize)],
    cfg: &TrainConfig,
) -> Result<()> {
    let (images, labels) = batch_to_matrix(batch, params.input_dim())?;
    let outcome = batch_outcome(params, &images, &labels, cfg)?;
    apply_update(params, &outcome.grads, cfg)
}

/// Classification accuracy in percent, evaluated in chunks.
pub fn accuracy(params: &NetworkParams, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate accuracy on an empty set".to_string()));
    }
    const CHUNK: usize = 500;
    let input_dim = params.input_dim();
    let mut correct = 0usize;
    let mut start = 0usize;
    while start < ds.len() {
        let end = (start + CHUNK).min(ds.len());
        let mut images = Matrix::zeros(end - start, input_dim);
        for (row, img) in ds.images[start..end].iter().enumerate() {
            if img.len() != input_dim {
                return Err(Error::shape(
                    "accuracy",
                    format!(
                        "image {} has {} pixels, network expects {input_dim}",
                        start + row,
                        img.len()
                    ),
                ));
            }
            images.row_mut(row).copy_from_slice(img.as_slice());
        }
        let trace = forward_batch(params, &images)?;
        for (row, &label) in ds.labels[start..end].iter().enumerate() {
            if argmax(trace.predictions.row(row)) == label as usize {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(100.0 * correct as f64 / ds.len() as f64)
}

/// Accuracy and mean loss measured on the training batches as they were
/// seen (before each update), plus validation accuracy after the epoch.
/// Accuracies are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

/// A finished run: the parameters from the best-validation epoch, not the
/// last one.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: NetworkParams,
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    pub history: Vec<EpochStats>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shuffle seed for one epoch, decorrelated from the weight-init stream.
pub(crate) fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    splitmix64(seed ^ splitmix64(epoch as u64 + 1))
}

fn check_dataset(ds: &Dataset, input_dim: usize, output_dim: usize, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::InvalidInput(format!("{what} set is empty")));
    }
    if let Some((i, img)) = ds.images.iter().enumerate().find(|(_, im)| im.len() != input_dim) {
        return Err(Error::InvalidInput(format!(
            "{what} image {i} has {} pixels, network expects {input_dim}",
            img.len()
        )));
    }
    if let Some((i, &l)) = ds.labels.iter().enumerate().find(|&(_, &l)| l as usize >= output_dim) {
        return Err(Error::InvalidInput(format!(
            "{what} label {l} at index {i} out of range for {output_dim} classes"
        )));
    }
    Ok(())
}

pub(crate) fn with_step_coordinates(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::Numerical { context } => {
            Error::numerical(format!("epoch {epoch}, batch {batch}: {context}"))
        }
        other => other,
    }
}

/// Trains a fresh He-initialized network for `cfg.epochs` epochs and keeps
/// the parameters of the epoch with the highest validation accuracy
/// (earliest epoch wins ties). `on_epoch` fires once per epoch in order.
/// With `epochs` = 0 the untrained initialization is returned.
pub fn train_network(
    train: &Dataset,
    validation: &Dataset,
    layer_sizes: &[usize],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut params = init_he(layer_sizes, cfg.seed)?;
    check_dataset(train, params.input_dim(), params.output_dim(), "training")?;
    check_dataset(validation, params.input_dim(), params.output_dim(), "validation")?;

    let mut best = params.clone();
    let mut best_epoch = 0usize;
    let mut best_acc = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.epochs);

    let input_dim = params.input_dim();
    let mut labels: Vec<usize> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        let plan = batches(train, cfg.batch_size, epoch_seed(cfg.seed, epoch));
        let mut correct = 0usize;
        let mut loss_sum = 0.0;
        for (bi, idx) in plan.iter().enumerate() {
            let mut images = Matrix::zeros(idx.len(), input_dim);
            gather(train, idx, &mut images, &mut labels);
            let outcome = batch_outcome(&params, &images, &labels, cfg)
                .map_err(|e| with_step_coordinates(e, epoch, bi))?;
            apply_update(&mut params, &outcome.grads, cfg)
                .map_err(|e| with_step_coordinates(e, epoch, bi))?;
            correct += outcome.correct;
            loss_sum += outcome.loss_sum;
        }
        let stats = EpochStats {
            epoch,
            train_accuracy: 100.0 * correct as f64 / train.len() as f64,
            train_loss: loss_sum / train.len() as f64,
            validation_accuracy: accuracy(&params, validation)?,
        };
        if stats.validation_accuracy > best_acc {
            best_acc = stats.validation_accuracy;
            best_epoch = epoch;
            best = params.clone();
        }
        on_epoch(&stats);
        history.push(stats);
    }

    if history.is_empty() {
        best_acc = accuracy(&best, validation)?;
    }
    Ok(TrainedModel {
        params: best,
        best_epoch,
        best_validation_accuracy: best_acc,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{fd_mixed_partial, fd_mixed_partial_bias, rel_error};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(dim: usize, rng: &mut ChaCha8Rng) -> Vector {
        Vector::from_vec((0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
    }

    fn cfg_dg(lambda1: f64, fd_step: f64, kind: RegularizerKind) -> TrainConfig {
        TrainConfig { lambda1, fd_step, reg_kind: kind, ..TrainConfig::default() }
    }

    #[test]
    fn config_validation_names_the_field() {
        let names = |cfg: TrainConfig, field: &str| {
            assert!(cfg.validate().unwrap_err().to_string().contains(field), "{field}");
        };
        names(TrainConfig { eta: 0.0, ..TrainConfig::default() }, "eta");
        names(TrainConfig { fd_step: -1.0, ..TrainConfig::default() }, "fd_step");
        names(TrainConfig { lambda1: f64::NAN, ..TrainConfig::default() }, "lambda1");
        names(TrainConfig { batch_size: 0, ..TrainConfig::default() }, "batch_size");
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn zero_data_gradient_gives_exactly_zero_regularizer_grad() {
        // First-layer weights of zero make the input invisible to the
        // network, so the data gradient, y, and the finite difference all
        // collapse to exact zeros.
        let mut p = init_he(&[2, 3, 2], 11).unwrap();
        p.weights[0] = Matrix::zeros(3, 2);
        p.biases[0] = Vector::from_vec(vec![0.3, 0.7, 0.2]);
        let d = Vector::from_vec(vec![0.4, 0.9]);
        let g = fd_regularizer_grad(&p, &d, 1, &cfg_dg(0.01, 0.05, RegularizerKind::L1)).unwrap();
        for wg in &g.weights {
            assert!(wg.as_slice().iter().all(|&v| v == 0.0));
        }
        for bg in &g.biases {
            assert!(bg.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn regularizer_grad_matches_nested_difference_oracle() {
        // Independent route: y picked from the analytic data gradient, then
        // sum_s y[s] * d2L/dW[r,c] dd[s] by nested central differences.
        let cfg = cfg_dg(0.01, 1e-4, RegularizerKind::L2);
        let p = init_he(&[2, 2, 2], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let d = random_input(2, &mut rng);
        let label = 1;

        let trace = forward(&p, &d).unwrap();
        let back = backward(&p, &trace, label).unwrap();
        let y = adversarial_direction(cfg.reg_kind, &back.data_gradient);

        let got = fd_regularizer_grad(&p, &d, label, &cfg).unwrap();
        for layer in 0..p.depth() {
            for r in 0..p.weights[layer].rows() {
                for c in 0..p.weights[layer].cols() {
                    let mut want = 0.0;
                    for s in 0..d.len() {
                        want += y[s]
                            * fd_mixed_partial(&p, &d, label, layer, r, c, s, 1e-4, 1e-4).unwrap();
                    }
                    let err = rel_error(got.weights[layer][(r, c)], want, 1.0);
                    assert!(err < 1e-3, "layer {layer} ({r},{c}): {err}");
                }
            }
            for i in 0..p.biases[layer].len() {
                let mut want = 0.0;
                for s in 0..d.len() {
                    want +=
                        y[s] * fd_mixed_partial_bias(&p, &d, label, layer, i, s, 1e-4, 1e-4).unwrap();
                }
                let err = rel_error(got.biases[layer][i], want, 1.0);
                assert!(err < 1e-3, "layer {layer} bias {i}: {err}");
            }
        }
    }

    #[test]
    fn regularizer_grad_converges_at_first_order() {
        // s(t) = <grad estimate at step t, V> for a fixed direction V must
        // approach its Richardson-extrapolated limit linearly in t.
        let p = init_he(&[3, 4, 2], 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let d = random_input(3, &mut rng);
        let v: Vec<f64> = (0..p.weights[0].rows() * p.weights[0].cols() + p.weights[1].rows() * p.weights[1].cols())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();

        let s_at = |t: f64| -> f64 {
            let g = fd_regularizer_grad(&p, &d, 0, &cfg_dg(0.01, t, RegularizerKind::L2)).unwrap();
            g.weights
                .iter()
                .flat_map(|m| m.as_slice())
                .zip(&v)
                .map(|(a, b)| a * b)
                .sum()
        };
        let s1 = s_at(1e-3);
        let s2 = s_at(5e-4);
        let s3 = s_at(2.5e-4);
        let limit = 2.0 * s3 - s2;
        let e1 = (s1 - limit).abs();
        let e2 = (s2 - limit).abs();
        assert!(e2 > 1e-12, "degenerate direction, errors too small to compare");
        let ratio = e1 / e2;
        assert!((1.5..=2.5).contains(&ratio), "convergence ratio {ratio}, e1={e1} e2={e2}");
    }

    fn toy_batch(n: usize, dim: usize, classes: usize, seed: u64) -> Vec<(Vector, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = random_input(dim, &mut rng);
                let t = rng.random_range(0..classes);
                (x, t)
            })
            .collect()
    }

    #[test]
    fn update_identity_holds_per_element() {
        // lambda0*xi + lambda1*(omega-xi)/t against the rearranged
        // (lambda0 - lambda1/t)*xi + (lambda1/t)*omega, elementwise. The
        // two differ only by floating-point reassociation.
        let cfg = cfg_dg(0.01, 0.1, RegularizerKind::L1);
        let p = init_he(&[6, 5, 4], 23).unwrap();
        let batch = toy_batch(7, 6, 4, 99);
        let (images, labels) = batch_to_matrix(&batch, 6).unwrap();
        let g = batch_outcome(&p, &images, &labels, &cfg).unwrap().grads;
        let om = g.omega.as_ref().unwrap();
        let (l0, l1, t) = (cfg.lambda0, cfg.lambda1, cfg.fd_step);
        for layer in 0..p.depth() {
            for (&x, &o) in g.xi.weights[layer].as_slice().iter().zip(om.weights[layer].as_slice()) {
                let a = l0 * x + l1 * (o - x) / t;
                let b = (l0 - l1 / t) * x + (l1 / t) * o;
                let scale = (l0 * x).abs() + (l1 / t * x).abs() + (l1 / t * o).abs();
                assert!((a - b).abs() <= 1e-12 * scale.max(1e-30), "a={a} b={b}");
            }
        }
    }

    #[test]
    fn lambda1_zero_is_bitwise_plain_sgd() {
        let arch = [5, 8, 3];
        let batchs: Vec<_> = (0..20).map(|i| toy_batch(6, 5, 3, 1000 + i)).collect();

        let mut cfg = cfg_dg(0.0, 0.1, RegularizerKind::L1);
        cfg.weight_penalty = Some(WeightPenalty { kind: RegularizerKind::L2, coeff: 1e-4 });

        let mut a = init_he(&arch, 7).unwrap();
        let mut b = a.clone();
        for batch in &batchs {
            datagrad_step(&mut a, batch, &cfg).unwrap();
            sgd_step(&mut b, batch, &cfg).unwrap();
        }
        for layer in 0..a.depth() {
            let wa = a.weights[layer].as_slice();
            let wb = b.weights[layer].as_slice();
            assert!(wa.iter().zip(wb).all(|(x, y)| x.to_bits() == y.to_bits()));
            let ba = a.biases[layer].as_slice();
            let bb = b.biases[layer].as_slice();
            assert!(ba.iter().zip(bb).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn zero_eta_leaves_params_unchanged() {
        let mut cfg = cfg_dg(0.01, 0.1, RegularizerKind::L1);
        cfg.eta = 0.0;
        let p0 = init_he(&[4, 6, 3], 5).unwrap();
        let mut p = p0.clone();
        datagrad_step(&mut p, &toy_batch(5, 4, 3, 2), &cfg).unwrap();
        for layer in 0..p.depth() {
            assert_eq!(p.weights[layer].as_slice(), p0.weights[layer].as_slice());
            assert_eq!(p.biases[layer].as_slice(), p0.biases[layer].as_slice());
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut p = init_he(&[4, 3], 5).unwrap();
        let cfg = TrainConfig::default();
        assert!(datagrad_step(&mut p, &[], &cfg).is_err());
        assert!(sgd_step(&mut p, &[], &cfg).is_err());
    }

    /// Two interleaved Gaussian blobs, linearly separable.
    fn blob_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 2) as u8;
            let center = if class == 0 { 0.25 } else { 0.75 };
            images.push(Vector::from_vec(
                (0..6).map(|_| center + rng.random_range(-0.15..0.15)).collect(),
            ));
            labels.push(class);
        }
        Dataset { images, labels, aux_labels: None }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let train = blob_dataset(64, 3);
        let val = blob_dataset(16, 4);
        let mut cfg = cfg_dg(0.01, 0.05, RegularizerKind::L1);
        cfg.epochs = 3;
        cfg.batch_size = 8;
        cfg.seed = 42;
        let m1 = train_network(&train, &val, &[6, 10, 2], &cfg, |_| {}).unwrap();
        let m2 = train_network(&train, &val, &[6, 10, 2], &cfg, |_| {}).unwrap();
        assert_eq!(m1.history, m2.history);
        for layer in 0..m1.params.depth() {
            let w1 = m1.params.weights[layer].as_slice();
            let w2 = m2.params.weights[layer].as_slice();
            assert!(w1.iter().zip(w2).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn training_learns_separable_blobs_and_selects_best_epoch() {
        let train = blob_dataset(128, 5);
        let val = blob_dataset(32, 6);
        let cfg = TrainConfig { epochs: 5, batch_size: 16, seed: 1, ..TrainConfig::default() };
        let mut seen = 0;
        let model = train_network(&train, &val, &[6, 12, 2], &cfg, |_| seen += 1).unwrap();
        assert_eq!(seen, 5);
        assert!(model.best_validation_accuracy > 90.0, "{}", model.best_validation_accuracy);

        let want_best = model
            .history
            .iter()
            .max_by(|a, b| {
                a.validation_accuracy
                    .partial_cmp(&b.validation_accuracy)
                    .unwrap()
                    .then(b.epoch.cmp(&a.epoch))
            })
            .unwrap()
            .epoch;
        assert_eq!(model.best_epoch, want_best);
        assert_eq!(
            model.best_validation_accuracy,
            model.history[model.best_epoch].validation_accuracy
        );
    }

    #[test]
    fn numerical_blowup_reports_epoch_and_batch() {
        let train = blob_dataset(32, 7);
        let val = blob_dataset(8, 8);
        let cfg = TrainConfig { eta: 1e160, epochs: 2, batch_size: 8, ..TrainConfig::default() };
        let err = train_network(&train, &val, &[6, 8, 2], &cfg, |_| {}).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epoch 0") && msg.contains("batch"), "{msg}");
    }

    #[test]
    fn config_errors_precede_compute() {
        let train = blob_dataset(8, 9);
        let val = blob_dataset(4, 10);
        let cfg = TrainConfig { fd_step: 0.0, ..TrainConfig::default() };
        match train_network(&train, &val, &[6, 4, 2], &cfg, |_| {}) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn epoch_seeds_differ_between_epochs_and_seeds() {
        let a: Vec<u64> = (0..10).map(|e| epoch_seed(1, e)).collect();
        let b: Vec<u64> = (0..10).map(|e| epoch_seed(2, e)).collect();
        let mut uniq = a.clone();
        uniq.extend(&b);
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 20);
    }
}
