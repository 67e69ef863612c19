//! K-layer rectifier network: forward pass, cross-entropy loss, and a full
//! backward pass that produces per-layer error signals, weight gradients,
//! and the gradient of the loss with respect to the input itself.
//!
//! Two code paths compute the same math: a per-sample path over `Vector`s
//! (the reference implementation, used by gradient checks and small tools)
//! and a batched path over `Matrix` blocks of rows (used by training and
//! evaluation). Both funnel every contraction through the same kernels in
//! the same order, so forward activations, error signals, and input
//! gradients agree bitwise between them; batched weight gradients differ
//! from averaged per-sample ones only by summation grouping.

use crate::error::{Error, Result};
use crate::tensor::{hadamard, matmul, matmul_transpose, mul_nn, mul_nt, mul_tn, outer, Matrix, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Parameters of a K-layer rectifier network.
///
/// `weights[l]` maps layer l to layer l+1 and has shape
/// `layer_sizes[l+1] x layer_sizes[l]`; `biases[l]` has length
/// `layer_sizes[l+1]`. Hidden layers use ReLU; the output layer is softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
    /// Seed used at initialization; informational only.
    pub seed: u64,
}

impl NetworkParams {
    /// Number of weight layers (network depth).
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().all(Vector::is_finite)
    }
}

/// He-style initialization: weights drawn i.i.d. from a zero-mean Gaussian
/// with variance 2/fan_in, biases zero. Draw order is fixed (layer by layer,
/// row-major), so the result is a pure function of `layer_sizes` and `seed`.
pub fn init_he(layer_sizes: &[usize], seed: u64) -> Result<NetworkParams> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least an input and an output layer, got {} sizes",
            layer_sizes.len()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidInput("layer sizes must all be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for l in 0..layer_sizes.len() - 1 {
        weights.push(he_layer(&mut rng, layer_sizes[l + 1], layer_sizes[l])?);
        biases.push(Vector::zeros(layer_sizes[l + 1]));
    }
    Ok(NetworkParams { layer_sizes: layer_sizes.to_vec(), weights, biases, seed })
}

/// One He-initialized layer matrix (fan_out x fan_in), drawn row-major from
/// the caller's stream.
pub(crate) fn he_layer(rng: &mut ChaCha8Rng, fan_out: usize, fan_in: usize) -> Result<Matrix> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std dev");
    let data: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(fan_out, fan_in, data)
}

#[inline]
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// ReLU derivative with the subgradient 0 at exactly 0.
#[inline]
pub fn relu_deriv(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Softmax over a logit slice, in place, with max-subtraction so large
/// logits cannot overflow.
pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Everything the forward pass computed for one input: pre-activations
/// h_1..h_K, activations a_0..a_K (a_0 is the input, a_K the softmax
/// output), and the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub preactivations: Vec<Vector>,
    pub activations: Vec<Vector>,
    pub prediction: Vector,
}

/// Full backward-pass output: per-layer error signals dout_1..dout_K, weight
/// and bias gradients, and the gradient of the loss with respect to the
/// input (`data_gradient`).
#[derive(Debug, Clone, PartialEq)]
pub struct BackpropResult {
    pub douts: Vec<Vector>,
    pub weight_grads: Vec<Matrix>,
    pub bias_grads: Vec<Vector>,
    pub data_gradient: Vector,
}

/// Feed-forward pass: h_l = W_l a_{l-1} + b_l, ReLU on hidden layers,
/// softmax on the output layer.
pub fn forward(params: &NetworkParams, d: &Vector) -> Result<ForwardTrace> {
    if d.len() != params.input_dim() {
        return Err(Error::shape(
            "forward",
            format!("input length {} vs input layer {}", d.len(), params.input_dim()),
        ));
    }
    if !d.is_finite() {
        return Err(Error::InvalidInput("forward: input contains non-finite values".into()));
    }
    let k = params.depth();
    let mut preactivations = Vec::with_capacity(k);
    let mut activations = Vec::with_capacity(k + 1);
    activations.push(d.clone());
    for l in 0..k {
        let mut h = matmul(&params.weights[l], &activations[l])?;
        for (hi, bi) in h.as_mut_slice().iter_mut().zip(params.biases[l].as_slice()) {
            *hi += bi;
        }
        let a = if l + 1 < k {
            Vector::from_vec(h.as_slice().iter().map(|&z| relu(z)).collect())
        } else {
            let mut p = h.clone();
            softmax_in_place(p.as_mut_slice());
            p
        };
        preactivations.push(h);
        activations.push(a);
    }
    let prediction = activations[k].clone();
    Ok(ForwardTrace { preactivations, activations, prediction })
}

/// Negative log likelihood of the true class. The predicted probability is
/// clamped at 1e-300 so a zero never reaches the logarithm.
pub fn cross_entropy_loss(prediction: &[f64], t: usize) -> f64 {
    assert!(t < prediction.len(), "label {} out of range for {} classes", t, prediction.len());
    -prediction[t].max(1e-300).ln()
}

/// Backward pass for the softmax + cross-entropy composite:
/// dout_K = prediction - onehot(t), then
/// dout_l = (W_{l+1}^T dout_{l+1}) o g(h_l) down the stack,
/// weight gradients dout_l a_{l-1}^T, and the input gradient W_1^T dout_1.
pub fn backward(params: &NetworkParams, trace: &ForwardTrace, t: usize) -> Result<BackpropResult> {
    let k = params.depth();
    if trace.activations.len() != k + 1
        || trace.preactivations.len() != k
        || (0..k).any(|l| {
            trace.preactivations[l].len() != params.layer_sizes[l + 1]
                || trace.activations[l].len() != params.layer_sizes[l]
        })
        || trace.prediction.len() != params.output_dim()
    {
        return Err(Error::shape("backward", "trace does not match network layout"));
    }
    if t >= params.output_dim() {
        return Err(Error::InvalidInput(format!(
            "label {} out of range for {} output classes",
            t,
            params.output_dim()
        )));
    }

    let mut douts = vec![Vector::zeros(1); k];
    let mut top = trace.prediction.clone();
    top[t] -= 1.0;
    douts[k - 1] = top;
    for l in (0..k - 1).rev() {
        let back = matmul_transpose(&params.weights[l + 1], &douts[l + 1])?;
        let mask =
            Vector::from_vec(trace.preactivations[l].as_slice().iter().map(|&z| relu_deriv(z)).collect());
        douts[l] = hadamard(&back, &mask)?;
    }

    let mut weight_grads = Vec::with_capacity(k);
    let mut bias_grads = Vec::with_capacity(k);
    for (dout, act) in douts.iter().zip(&trace.activations) {
        weight_grads.push(outer(dout, act));
        bias_grads.push(dout.clone());
    }
    let data_gradient = matmul_transpose(&params.weights[0], &douts[0])?;
    Ok(BackpropResult { douts, weight_grads, bias_grads, data_gradient })
}

/// Forward pass over a block of inputs, one sample per row.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    pub preactivations: Vec<Matrix>,
    pub activations: Vec<Matrix>,
    pub predictions: Matrix,
}

pub fn forward_batch(params: &NetworkParams, a0: &Matrix) -> Result<BatchTrace> {
    if a0.cols() != params.input_dim() {
        return Err(Error::shape(
            "forward_batch",
            format!("batch width {} vs input layer {}", a0.cols(), params.input_dim()),
        ));
    }
    let k = params.depth();
    let mut preactivations = Vec::with_capacity(k);
    let mut activations = Vec::with_capacity(k + 1);
    activations.push(a0.clone());
    for l in 0..k {
        let mut h = mul_nt(&activations[l], &params.weights[l])?;
        let bias = params.biases[l].as_slice();
        for s in 0..h.rows() {
            for (hi, bi) in h.row_mut(s).iter_mut().zip(bias) {
                *hi += bi;
            }
        }
        let a = if l + 1 < k {
            let mut a = h.clone();
            for v in a.as_mut_slice() {
                *v = relu(*v);
            }
            a
        } else {
            let mut p = h.clone();
            for s in 0..p.rows() {
                softmax_in_place(p.row_mut(s));
            }
            p
        };
        preactivations.push(h);
        activations.push(a);
    }
    let predictions = activations[k].clone();
    Ok(BatchTrace { preactivations, activations, predictions })
}

/// Batch-averaged gradients. `data_gradients` holds one row per sample (not
/// averaged: each row is that sample's own input gradient).
#[derive(Debug, Clone)]
pub struct BatchGrads {
    pub weight_grads: Vec<Matrix>,
    pub bias_grads: Vec<Vector>,
    pub data_gradients: Option<Matrix>,
}

/// Backward pass over a batch trace. Weight and bias gradients are averaged
/// over the batch; per-sample input gradients are produced on request.
pub fn backward_batch(
    params: &NetworkParams,
    trace: &BatchTrace,
    labels: &[usize],
    want_data_gradients: bool,
) -> Result<BatchGrads> {
    let batch = trace.predictions.rows();
    if labels.len() != batch {
        return Err(Error::shape(
            "backward_batch",
            format!("{batch} rows vs {} labels", labels.len()),
        ));
    }
    let k = params.depth();
    let out_dim = params.output_dim();
    for &t in labels {
        if t >= out_dim {
            return Err(Error::InvalidInput(format!(
                "label {t} out of range for {out_dim} output classes"
            )));
        }
    }

    let mut dout = trace.predictions.clone();
    for (s, &t) in labels.iter().enumerate() {
        dout.row_mut(s)[t] -= 1.0;
    }
    let (weight_grads, bias_grads, data_gradients) = descend_stack(
        &params.weights,
        &trace.preactivations,
        &trace.activations[..k],
        dout,
        want_data_gradients,
    )?;
    Ok(BatchGrads { weight_grads, bias_grads, data_gradients })
}

/// Walks a ReLU stack top-down, turning `dout` (the batch gradient at the
/// topmost pre-activation) into batch-averaged per-layer gradients and,
/// on request, per-sample input gradients. `activations[l]` feeds layer l;
/// masks come from `preactivations[..levels-1]`. Shared by the single-task
/// and multi-task backward passes so the two stay arithmetically identical.
pub(crate) fn descend_stack(
    weights: &[Matrix],
    preactivations: &[Matrix],
    activations: &[Matrix],
    mut dout: Matrix,
    want_data_gradients: bool,
) -> Result<(Vec<Matrix>, Vec<Vector>, Option<Matrix>)> {
    let levels = weights.len();
    let batch = dout.rows();
    let b = batch as f64;
    let mut weight_grads = vec![Matrix::zeros(1, 1); levels];
    let mut bias_grads = vec![Vector::zeros(1); levels];

    let mut layer = levels;
    loop {
        layer -= 1;
        let mut wg = mul_tn(&dout, &activations[layer])?;
        for v in wg.as_mut_slice() {
            *v /= b;
        }
        let mut bg = Vector::zeros(wg.rows());
        for s in 0..batch {
            crate::tensor::axpy(1.0, dout.row(s), bg.as_mut_slice());
        }
        for v in bg.as_mut_slice() {
            *v /= b;
        }
        weight_grads[layer] = wg;
        bias_grads[layer] = bg;

        if layer == 0 {
            break;
        }
        let mut prev = mul_nn(&dout, &weights[layer])?;
        let mask = &preactivations[layer - 1];
        for (v, z) in prev.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *v *= relu_deriv(*z);
        }
        dout = prev;
    }

    let data_gradients = if want_data_gradients { Some(mul_nn(&dout, &weights[0])?) } else { None };
    Ok((weight_grads, bias_grads, data_gradients))
}

/// Per-sample input gradients for a batch, skipping the weight-gradient
/// contractions entirely. This is the attack-generation path.
pub fn data_gradients_batch(
    params: &NetworkParams,
    trace: &BatchTrace,
    labels: &[usize],
) -> Result<Matrix> {
    let batch = trace.predictions.rows();
    if labels.len() != batch {
        return Err(Error::shape(
            "data_gradients_batch",
            format!("{batch} rows vs {} labels", labels.len()),
        ));
    }
    let out_dim = params.output_dim();
    for &t in labels {
        if t >= out_dim {
            return Err(Error::InvalidInput(format!(
                "label {t} out of range for {out_dim} output classes"
            )));
        }
    }
    let k = params.depth();
    let mut dout = trace.predictions.clone();
    for (s, &t) in labels.iter().enumerate() {
        dout.row_mut(s)[t] -= 1.0;
    }
    for layer in (1..k).rev() {
        let mut prev = mul_nn(&dout, &params.weights[layer])?;
        let mask = &trace.preactivations[layer - 1];
        for (v, z) in prev.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *v *= relu_deriv(*z);
        }
        dout = prev;
    }
    mul_nn(&dout, &params.weights[0])
}

/// Index of the largest entry; first occurrence wins on exact ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_he_shapes_match_layer_sizes() {
        let p = init_he(&[784, 784, 784, 784, 10], 3).unwrap();
        assert_eq!(p.depth(), 4);
        for l in 0..3 {
            assert_eq!((p.weights[l].rows(), p.weights[l].cols()), (784, 784));
        }
        assert_eq!((p.weights[3].rows(), p.weights[3].cols()), (10, 784));
        for l in 0..4 {
            assert_eq!(p.biases[l].len(), p.layer_sizes[l + 1]);
            assert!(p.biases[l].as_slice().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_he_is_deterministic() {
        let a = init_he(&[7, 5, 3], 99).unwrap();
        let b = init_he(&[7, 5, 3], 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_he_variance_tracks_fan_in() {
        // Enough draws in the first layer for the sample variance to settle.
        let p = init_he(&[4, 2500, 2], 7).unwrap();
        let w = p.weights[0].as_slice();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let target = 2.0 / 4.0;
        assert!((var - target).abs() < 0.1 * target, "sample variance {var} vs target {target}");
    }

    #[test]
    fn init_he_rejects_degenerate_sizes() {
        assert!(init_he(&[5], 0).is_err());
        assert!(init_he(&[], 0).is_err());
        assert!(init_he(&[4, 0, 2], 0).is_err());
    }

    #[test]
    fn relu_cases() {
        assert_eq!((relu(-1.0), relu_deriv(-1.0)), (0.0, 0.0));
        assert_eq!((relu(0.0), relu_deriv(0.0)), (0.0, 0.0));
        assert_eq!((relu(2.5), relu_deriv(2.5)), (2.5, 1.0));
    }

    #[test]
    fn zero_network_predicts_uniform() {
        let mut p = init_he(&[3, 4, 5], 1).unwrap();
        for w in &mut p.weights {
            w.scale(0.0);
        }
        let t = forward(&p, &Vector::from_vec(vec![0.3, -0.7, 2.0])).unwrap();
        for i in 0..5 {
            assert!((t.prediction[i] - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_hand_trace() {
        // 2-2-2 net traced by hand: h1 = (0.7, 0.2), a1 = relu(h1),
        // h2 = (0.5*0.7 - 1.0*0.2, 0.25*0.7 + 0.75*0.2) = (0.15, 0.325),
        // prediction = softmax(h2).
        let p = NetworkParams {
            layer_sizes: vec![2, 2, 2],
            weights: vec![
                Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(),
                Matrix::from_rows(&[&[0.5, -1.0], &[0.25, 0.75]]).unwrap(),
            ],
            biases: vec![Vector::from_vec(vec![0.1, -0.2]), Vector::zeros(2)],
            seed: 0,
        };
        let t = forward(&p, &Vector::from_vec(vec![0.6, 0.4])).unwrap();
        assert!((t.preactivations[0][0] - 0.7).abs() < 1e-15);
        assert!((t.preactivations[0][1] - 0.2).abs() < 1e-15);
        assert!((t.preactivations[1][0] - 0.15).abs() < 1e-15);
        assert!((t.preactivations[1][1] - 0.325).abs() < 1e-15);
        // exp(-0.175) / (1 + exp(-0.175)) and its complement.
        assert!((t.prediction[0] - 0.45636131276292113).abs() < 1e-12);
        assert!((t.prediction[1] - 0.5436386872370789).abs() < 1e-12);
    }

    #[test]
    fn scaling_final_weights_keeps_argmax() {
        let p = init_he(&[4, 6, 3], 11).unwrap();
        let d = Vector::from_vec(vec![0.9, -0.3, 0.4, 0.1]);
        let base = forward(&p, &d).unwrap();
        let mut scaled = p.clone();
        scaled.weights.last_mut().unwrap().scale(3.0);
        scaled.biases.last_mut().unwrap().as_mut_slice().iter_mut().for_each(|b| *b *= 3.0);
        let got = forward(&scaled, &d).unwrap();
        assert_eq!(argmax(base.prediction.as_slice()), argmax(got.prediction.as_slice()));
    }

    #[test]
    fn cross_entropy_analytic_values() {
        assert_eq!(cross_entropy_loss(&[0.0, 1.0, 0.0], 1), 0.0);
        assert!((cross_entropy_loss(&[0.1; 10], 4) - 10f64.ln()).abs() < 1e-12);
        assert!((cross_entropy_loss(&[0.5, 0.5], 0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let loss = cross_entropy_loss(&[1.0, 0.0], 1);
        assert!(loss.is_finite() && loss > 600.0);
    }

    #[test]
    fn perfect_prediction_gives_zero_gradients() {
        let p = init_he(&[3, 4, 2], 5).unwrap();
        let d = Vector::from_vec(vec![0.2, 0.8, -0.1]);
        let mut trace = forward(&p, &d).unwrap();
        trace.prediction = Vector::from_vec(vec![0.0, 1.0]);
        trace.activations[2] = trace.prediction.clone();
        let back = backward(&p, &trace, 1).unwrap();
        assert!(back.douts[1].as_slice().iter().all(|&v| v == 0.0));
        for g in &back.weight_grads {
            assert!(g.as_slice().iter().all(|&v| v == 0.0));
        }
        assert!(back.data_gradient.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_trace() {
        let p = init_he(&[3, 4, 2], 5).unwrap();
        let other = init_he(&[3, 5, 2], 5).unwrap();
        let trace = forward(&other, &Vector::from_vec(vec![0.1, 0.2, 0.3])).unwrap();
        assert!(backward(&p, &trace, 0).is_err());
    }

    #[test]
    fn data_gradient_length_matches_input_for_any_depth() {
        for sizes in [vec![6, 3, 2], vec![6, 5, 4, 2], vec![6, 4, 4, 4, 3]] {
            let p = init_he(&sizes, 2).unwrap();
            let d = Vector::from_vec(vec![0.1; 6]);
            let trace = forward(&p, &d).unwrap();
            let back = backward(&p, &trace, 1).unwrap();
            assert_eq!(back.data_gradient.len(), 6);
        }
    }

    #[test]
    fn backward_is_deterministic() {
        let p = init_he(&[5, 6, 4], 21).unwrap();
        let d = Vector::from_vec(vec![0.5, -0.25, 0.75, 0.0, 1.0]);
        let trace = forward(&p, &d).unwrap();
        let a = backward(&p, &trace, 2).unwrap();
        let b = backward(&p, &trace, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_paths_match_per_sample() {
        let p = init_he(&[6, 5, 4, 3], 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let batch = 5;
        let mut a0 = Matrix::zeros(batch, 6);
        for v in a0.as_mut_slice() {
            *v = normal.sample(&mut rng);
        }
        let labels = [0usize, 2, 1, 2, 0];

        let trace = forward_batch(&p, &a0).unwrap();
        let grads = backward_batch(&p, &trace, &labels, true).unwrap();
        let dgrads = grads.data_gradients.as_ref().unwrap();

        let mut avg_w: Vec<Matrix> =
            (0..p.depth()).map(|l| Matrix::zeros(p.weights[l].rows(), p.weights[l].cols())).collect();
        for (s, &label) in labels.iter().enumerate() {
            let d = Vector::from_vec(a0.row(s).to_vec());
            let t = forward(&p, &d).unwrap();
            let bk = backward(&p, &t, label).unwrap();
            // Activations, predictions, and input gradients share kernels
            // and must agree to the bit.
            for (got, want) in trace.predictions.row(s).iter().zip(t.prediction.as_slice()) {
                assert_eq!(got.to_bits(), want.to_bits());
            }
            for (got, want) in dgrads.row(s).iter().zip(bk.data_gradient.as_slice()) {
                assert_eq!(got.to_bits(), want.to_bits());
            }
            for (acc_m, g_m) in avg_w.iter_mut().zip(&bk.weight_grads) {
                for (acc, g) in acc_m.as_mut_slice().iter_mut().zip(g_m.as_slice()) {
                    *acc += g;
                }
            }
        }
        // Weight gradients are contracted in a different grouping, so only
        // near-exact agreement is expected.
        for (l, (got_m, want_m)) in grads.weight_grads.iter().zip(&avg_w).enumerate() {
            for (got, want) in got_m.as_slice().iter().zip(want_m.as_slice()) {
                let want = want / batch as f64;
                assert!(
                    (got - want).abs() <= 1e-13 * want.abs().max(1e-12),
                    "layer {l}: {got} vs {want}"
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn softmax_sums_to_one_and_shift_invariant(
            logits in proptest::collection::vec(-50.0f64..50.0, 2..=12),
            shift in -100.0f64..100.0,
        ) {
            let mut a = logits.clone();
            softmax_in_place(&mut a);
            let sum: f64 = a.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(a.iter().all(|&p| (0.0..=1.0).contains(&p)));

            let mut b: Vec<f64> = logits.iter().map(|&x| x + shift).collect();
            softmax_in_place(&mut b);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn prediction_is_a_distribution(seed in 0u64..1000, inputs in proptest::collection::vec(-2.0f64..2.0, 5)) {
            let p = init_he(&[5, 7, 4], seed).unwrap();
            let t = forward(&p, &Vector::from_vec(inputs)).unwrap();
            let sum: f64 = t.prediction.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for l in 0..t.preactivations.len() - 1 {
                for i in 0..t.preactivations[l].len() {
                    prop_assert_eq!(t.activations[l + 1][i], relu(t.preactivations[l][i]));
                }
            }
        }
    }
}
