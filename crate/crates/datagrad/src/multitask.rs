//! Two-headed network for joint digit and rotation prediction: a shared
//! ReLU stack feeding two softmax heads, trained on
//! L = L0 + gamma * L1 with the data-gradient penalty driven by L0 alone.
//!
//! Head 0 is the digit task, head 1 the auxiliary rotation task. The
//! perturbation direction y therefore comes from dL0/dd, and the second
//! backward pass at the perturbed inputs propagates only L0, so the
//! regularizer term reaches the shared stack and the digit head but never
//! the rotation head. The rotation head sees the combined gradient alone.
//!
//! With gamma = 0 and lambda1 = 0 every computation here degenerates, op
//! for op, to the single-task network whose output layer is head 0; tests
//! pin that equivalence bitwise.

use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::network::{
    argmax, cross_entropy_loss, descend_stack, he_layer, relu, relu_deriv, softmax_in_place,
    NetworkParams,
};
use crate::regularizer::immediate_gradient_in_place;
use crate::tensor::{mul_nn, mul_nt, mul_tn, Matrix, Vector};
use crate::train::{epoch_seed, with_step_coordinates, EpochStats, TrainConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One output head: a dense layer from the penultimate activation to this
/// task's logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Head {
    pub fn classes(&self) -> usize {
        self.weight.rows()
    }
}

/// Shared ReLU stack plus two task heads. `shared.layer_sizes` runs from
/// the input through the penultimate layer; both heads consume its last
/// activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskParams {
    pub shared: NetworkParams,
    pub head0: Head,
    pub head1: Head,
    pub seed: u64,
}

impl MultiTaskParams {
    pub fn input_dim(&self) -> usize {
        self.shared.input_dim()
    }

    /// Width of the activation both heads consume.
    pub fn penultimate_dim(&self) -> usize {
        *self.shared.layer_sizes.last().expect("at least two layers")
    }

    pub fn is_finite(&self) -> bool {
        self.shared.is_finite()
            && self.head0.weight.is_finite()
            && self.head0.bias.is_finite()
            && self.head1.weight.is_finite()
            && self.head1.bias.is_finite()
    }
}

/// He initialization from a single stream: shared layers in order, then
/// head 0, then head 1. The shared-plus-head0 draws coincide exactly with
/// a single-task network of the same stacked architecture and seed.
pub fn init_multitask(
    shared_sizes: &[usize],
    n_digit: usize,
    n_aux: usize,
    seed: u64,
) -> Result<MultiTaskParams> {
    if shared_sizes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "shared stack needs at least an input and one hidden layer, got {} sizes",
            shared_sizes.len()
        )));
    }
    if shared_sizes.contains(&0) || n_digit == 0 || n_aux == 0 {
        return Err(Error::InvalidInput("layer and head sizes must all be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(shared_sizes.len() - 1);
    let mut biases = Vec::with_capacity(shared_sizes.len() - 1);
    for l in 0..shared_sizes.len() - 1 {
        weights.push(he_layer(&mut rng, shared_sizes[l + 1], shared_sizes[l])?);
        biases.push(Vector::zeros(shared_sizes[l + 1]));
    }
    let penultimate = shared_sizes[shared_sizes.len() - 1];
    let head0 = Head { weight: he_layer(&mut rng, n_digit, penultimate)?, bias: Vector::zeros(n_digit) };
    let head1 = Head { weight: he_layer(&mut rng, n_aux, penultimate)?, bias: Vector::zeros(n_aux) };
    Ok(MultiTaskParams {
        shared: NetworkParams {
            layer_sizes: shared_sizes.to_vec(),
            weights,
            biases,
            seed,
        },
        head0,
        head1,
        seed,
    })
}

/// Forward pass over a batch: shared pre-activations and activations
/// (every shared layer is ReLU), then one softmax distribution per head.
#[derive(Debug, Clone)]
pub struct MtBatchTrace {
    pub shared_pre: Vec<Matrix>,
    pub shared_act: Vec<Matrix>,
    pub p0: Matrix,
    pub p1: Matrix,
}

fn head_forward(a_top: &Matrix, head: &Head) -> Result<Matrix> {
    let mut z = mul_nt(a_top, &head.weight)?;
    let bias = head.bias.as_slice();
    for s in 0..z.rows() {
        for (zi, bi) in z.row_mut(s).iter_mut().zip(bias) {
            *zi += bi;
        }
    }
    for s in 0..z.rows() {
        softmax_in_place(z.row_mut(s));
    }
    Ok(z)
}

pub fn mt_forward_batch(mt: &MultiTaskParams, a0: &Matrix) -> Result<MtBatchTrace> {
    if a0.cols() != mt.input_dim() {
        return Err(Error::shape(
            "mt_forward_batch",
            format!("batch width {} vs input layer {}", a0.cols(), mt.input_dim()),
        ));
    }
    let p = mt.shared.depth();
    let mut shared_pre = Vec::with_capacity(p);
    let mut shared_act = Vec::with_capacity(p + 1);
    shared_act.push(a0.clone());
    for l in 0..p {
        let mut h = mul_nt(&shared_act[l], &mt.shared.weights[l])?;
        let bias = mt.shared.biases[l].as_slice();
        for s in 0..h.rows() {
            for (hi, bi) in h.row_mut(s).iter_mut().zip(bias) {
                *hi += bi;
            }
        }
        let mut a = h.clone();
        for v in a.as_mut_slice() {
            *v = relu(*v);
        }
        shared_pre.push(h);
        shared_act.push(a);
    }
    let p0 = head_forward(&shared_act[p], &mt.head0)?;
    let p1 = head_forward(&shared_act[p], &mt.head1)?;
    Ok(MtBatchTrace { shared_pre, shared_act, p0, p1 })
}

/// Gradients for every parameter of the two-headed network, batch-averaged.
#[derive(Debug, Clone)]
pub struct MtGradSet {
    pub shared_weights: Vec<Matrix>,
    pub shared_biases: Vec<Vector>,
    pub head0_weight: Matrix,
    pub head0_bias: Vector,
    pub head1_weight: Matrix,
    pub head1_bias: Vector,
}

fn check_labels(labels: &[usize], classes: usize, what: &str) -> Result<()> {
    for &t in labels {
        if t >= classes {
            return Err(Error::InvalidInput(format!(
                "{what} label {t} out of range for {classes} classes"
            )));
        }
    }
    Ok(())
}

/// prediction - onehot(label), the softmax + cross-entropy gradient.
fn dz_rows(predictions: &Matrix, labels: &[usize]) -> Matrix {
    let mut dz = predictions.clone();
    for (s, &t) in labels.iter().enumerate() {
        dz.row_mut(s)[t] -= 1.0;
    }
    dz
}

/// Batch-averaged gradient of one head: mul_tn against the penultimate
/// activations plus a column mean, the same arithmetic `descend_stack`
/// applies per layer.
fn head_grads(dz: &Matrix, a_top: &Matrix) -> Result<(Matrix, Vector)> {
    let b = dz.rows() as f64;
    let mut wg = mul_tn(dz, a_top)?;
    for v in wg.as_mut_slice() {
        *v /= b;
    }
    let mut bg = Vector::zeros(dz.cols());
    for s in 0..dz.rows() {
        crate::tensor::axpy(1.0, dz.row(s), bg.as_mut_slice());
    }
    for v in bg.as_mut_slice() {
        *v /= b;
    }
    Ok((wg, bg))
}

fn mask_by(pre: &Matrix, mut dout: Matrix) -> Matrix {
    for (v, z) in dout.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        *v *= relu_deriv(*z);
    }
    dout
}

/// Backward pass of the digit loss L0 alone: head 0 and the shared stack.
/// The rotation head takes no gradient from L0, so its slots are zero.
fn l0_backward(
    mt: &MultiTaskParams,
    trace: &MtBatchTrace,
    digits: &[usize],
    want_data_gradients: bool,
) -> Result<(MtGradSet, Option<Matrix>)> {
    check_labels(digits, mt.head0.classes(), "digit")?;
    let p = mt.shared.depth();
    let dz0 = dz_rows(&trace.p0, digits);
    let (head0_weight, head0_bias) = head_grads(&dz0, &trace.shared_act[p])?;
    let da = mul_nn(&dz0, &mt.head0.weight)?;
    let dout = mask_by(&trace.shared_pre[p - 1], da);
    let (shared_weights, shared_biases, data_gradients) = descend_stack(
        &mt.shared.weights,
        &trace.shared_pre,
        &trace.shared_act[..p],
        dout,
        want_data_gradients,
    )?;
    Ok((
        MtGradSet {
            shared_weights,
            shared_biases,
            head0_weight,
            head0_bias,
            head1_weight: Matrix::zeros(mt.head1.classes(), mt.penultimate_dim()),
            head1_bias: Vector::zeros(mt.head1.classes()),
        },
        data_gradients,
    ))
}

/// Backward pass of the combined loss L0 + gamma * L1. With gamma = 0 the
/// rotation branch is skipped entirely, leaving exactly the L0 arithmetic.
fn combined_backward(
    mt: &MultiTaskParams,
    trace: &MtBatchTrace,
    digits: &[usize],
    auxes: &[usize],
    gamma: f64,
    want_data_gradients: bool,
) -> Result<(MtGradSet, Option<Matrix>)> {
    check_labels(digits, mt.head0.classes(), "digit")?;
    let p = mt.shared.depth();
    let dz0 = dz_rows(&trace.p0, digits);
    let (head0_weight, head0_bias) = head_grads(&dz0, &trace.shared_act[p])?;
    let mut da = mul_nn(&dz0, &mt.head0.weight)?;

    let (head1_weight, head1_bias) = if gamma > 0.0 {
        check_labels(auxes, mt.head1.classes(), "auxiliary")?;
        let mut dz1 = dz_rows(&trace.p1, auxes);
        for v in dz1.as_mut_slice() {
            *v *= gamma;
        }
        let hg = head_grads(&dz1, &trace.shared_act[p])?;
        let da1 = mul_nn(&dz1, &mt.head1.weight)?;
        for (v, w) in da.as_mut_slice().iter_mut().zip(da1.as_slice()) {
            *v += w;
        }
        hg
    } else {
        (
            Matrix::zeros(mt.head1.classes(), mt.penultimate_dim()),
            Vector::zeros(mt.head1.classes()),
        )
    };

    let dout = mask_by(&trace.shared_pre[p - 1], da);
    let (shared_weights, shared_biases, data_gradients) = descend_stack(
        &mt.shared.weights,
        &trace.shared_pre,
        &trace.shared_act[..p],
        dout,
        want_data_gradients,
    )?;
    Ok((
        MtGradSet {
            shared_weights,
            shared_biases,
            head0_weight,
            head0_bias,
            head1_weight,
            head1_bias,
        },
        data_gradients,
    ))
}

fn head_data_gradients(
    mt: &MultiTaskParams,
    trace: &MtBatchTrace,
    predictions: &Matrix,
    head: &Head,
    labels: &[usize],
    what: &str,
) -> Result<Matrix> {
    check_labels(labels, head.classes(), what)?;
    let p = mt.shared.depth();
    let dz = dz_rows(predictions, labels);
    let da = mul_nn(&dz, &head.weight)?;
    let mut dout = mask_by(&trace.shared_pre[p - 1], da);
    for layer in (1..p).rev() {
        let prev = mul_nn(&dout, &mt.shared.weights[layer])?;
        dout = mask_by(&trace.shared_pre[layer - 1], prev);
    }
    mul_nn(&dout, &mt.shared.weights[0])
}

/// Per-sample input gradients of the digit loss, the chain the attacks and
/// the perturbation direction both use. Weight gradients are skipped.
pub fn digit_data_gradients(
    mt: &MultiTaskParams,
    trace: &MtBatchTrace,
    digits: &[usize],
) -> Result<Matrix> {
    head_data_gradients(mt, trace, &trace.p0, &mt.head0, digits, "digit")
}

/// Input gradients of the rotation loss, for attacks driven by the
/// auxiliary task.
pub fn rotation_data_gradients(
    mt: &MultiTaskParams,
    trace: &MtBatchTrace,
    auxes: &[usize],
) -> Result<Matrix> {
    head_data_gradients(mt, trace, &trace.p1, &mt.head1, auxes, "auxiliary")
}

/// What one labelled sample contributes: combined-loss gradients for every
/// parameter, the input gradient of the combined loss, and the input
/// gradient of the digit loss alone (the one the perturbation direction is
/// built from).
#[derive(Debug, Clone)]
pub struct MtSampleBackward {
    pub grads: MtGradSet,
    pub data_gradient: Vector,
    pub data_gradient_l0: Vector,
    pub loss: f64,
}

/// Forward and backward for a single sample under L0 + gamma * L1.
pub fn multitask_forward_backward(
    mt: &MultiTaskParams,
    d: &Vector,
    digit: usize,
    aux: usize,
    cfg: &TrainConfig,
) -> Result<MtSampleBackward> {
    if d.len() != mt.input_dim() {
        return Err(Error::shape(
            "multitask_forward_backward",
            format!("input length {} vs input layer {}", d.len(), mt.input_dim()),
        ));
    }
    if !d.is_finite() {
        return Err(Error::InvalidInput("non-finite input sample".to_string()));
    }
    let mut images = Matrix::zeros(1, d.len());
    images.row_mut(0).copy_from_slice(d.as_slice());
    let trace = mt_forward_batch(mt, &images)?;
    check_labels(&[aux], mt.head1.classes(), "auxiliary")?;
    let (grads, data) = combined_backward(mt, &trace, &[digit], &[aux], cfg.gamma, true)?;
    let data_gradient = Vector::from_vec(data.expect("requested data gradients").row(0).to_vec());
    let l0 = digit_data_gradients(mt, &trace, &[digit])?;
    let loss = cross_entropy_loss(trace.p0.row(0), digit)
        + cfg.gamma * cross_entropy_loss(trace.p1.row(0), aux);
    Ok(MtSampleBackward {
        grads,
        data_gradient,
        data_gradient_l0: Vector::from_vec(l0.row(0).to_vec()),
        loss,
    })
}

/// Gradients of one training step: the combined-loss gradients, plus the
/// clean and perturbed digit-loss gradients when the regularizer is on.
pub struct MtStepGrads {
    pub xi_combined: MtGradSet,
    pub xi_l0: Option<MtGradSet>,
    pub omega_l0: Option<MtGradSet>,
}

pub(crate) struct MtBatchOutcome {
    pub grads: MtStepGrads,
    pub correct_digit: usize,
    pub loss_sum: f64,
}

pub(crate) fn mt_batch_outcome(
    mt: &MultiTaskParams,
    images: &Matrix,
    digits: &[usize],
    auxes: &[usize],
    cfg: &TrainConfig,
) -> Result<MtBatchOutcome> {
    let trace = mt_forward_batch(mt, images)?;
    let (xi_combined, _) = combined_backward(mt, &trace, digits, auxes, cfg.gamma, false)?;

    let mut correct_digit = 0;
    let mut loss_sum = 0.0;
    for (s, &t) in digits.iter().enumerate() {
        let row = trace.p0.row(s);
        if argmax(row) == t {
            correct_digit += 1;
        }
        loss_sum += cross_entropy_loss(row, t);
    }
    if cfg.gamma > 0.0 {
        for (s, &a) in auxes.iter().enumerate() {
            loss_sum += cfg.gamma * cross_entropy_loss(trace.p1.row(s), a);
        }
    }

    let (xi_l0, omega_l0) = if cfg.lambda1 > 0.0 {
        let (xi_l0, data) = l0_backward(mt, &trace, digits, true)?;
        let mut y = data.expect("requested data gradients");
        immediate_gradient_in_place(cfg.reg_kind, y.as_mut_slice());
        let mut dhat = images.clone();
        for (d, &yv) in dhat.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *d += cfg.fd_step * yv;
        }
        let trace_hat = mt_forward_batch(mt, &dhat)?;
        let (omega, _) = l0_backward(mt, &trace_hat, digits, false)?;
        (Some(xi_l0), Some(omega))
    } else {
        (None, None)
    };

    Ok(MtBatchOutcome {
        grads: MtStepGrads { xi_combined, xi_l0, omega_l0 },
        correct_digit,
        loss_sum,
    })
}

struct PenaltyTerm {
    kind: crate::regularizer::RegularizerKind,
    coeff: f64,
}

fn penalty_grad(p: &PenaltyTerm, w: f64) -> f64 {
    match p.kind {
        crate::regularizer::RegularizerKind::L1 => p.coeff * crate::regularizer::sign(w),
        crate::regularizer::RegularizerKind::L2 => 2.0 * p.coeff * w,
    }
}

/// One parameter block updated in place:
/// value <- value - eta * (lambda0*xi + lambda1*(omega - xi_l0)/t + penalty').
/// `reg` carries (xi_l0, omega) for blocks the regularizer reaches.
#[allow(clippy::too_many_arguments)]
fn update_block(
    values: &mut [f64],
    xi: &[f64],
    reg: Option<(&[f64], &[f64])>,
    penalty: Option<&PenaltyTerm>,
    cfg: &TrainConfig,
) {
    let (l0, l1, t) = (cfg.lambda0, cfg.lambda1, cfg.fd_step);
    for (i, v) in values.iter_mut().enumerate() {
        let mut g = l0 * xi[i];
        if let Some((xl, om)) = reg {
            g += l1 * ((om[i] - xl[i]) / t);
        }
        if let Some(p) = penalty {
            g += penalty_grad(p, *v);
        }
        *v -= cfg.eta * g;
    }
}

pub(crate) fn mt_apply_update(
    mt: &mut MultiTaskParams,
    grads: &MtStepGrads,
    cfg: &TrainConfig,
) -> Result<()> {
    let reg = if cfg.lambda1 > 0.0 {
        match (&grads.xi_l0, &grads.omega_l0) {
            (Some(x), Some(o)) => Some((x, o)),
            _ => {
                return Err(Error::InvalidInput(
                    "lambda1 > 0 but the step carries no digit-loss gradient pair".to_string(),
                ))
            }
        }
    } else {
        None
    };
    let penalty = cfg
        .weight_penalty
        .filter(|wp| wp.coeff > 0.0)
        .map(|wp| PenaltyTerm { kind: wp.kind, coeff: wp.coeff });

    for layer in 0..mt.shared.depth() {
        update_block(
            mt.shared.weights[layer].as_mut_slice(),
            grads.xi_combined.shared_weights[layer].as_slice(),
            reg.map(|(x, o)| (x.shared_weights[layer].as_slice(), o.shared_weights[layer].as_slice())),
            penalty.as_ref(),
            cfg,
        );
        if !mt.shared.weights[layer].is_finite() {
            return Err(Error::numerical(format!(
                "non-finite update in shared layer {layer} weights"
            )));
        }
        update_block(
            mt.shared.biases[layer].as_mut_slice(),
            grads.xi_combined.shared_biases[layer].as_slice(),
            reg.map(|(x, o)| (x.shared_biases[layer].as_slice(), o.shared_biases[layer].as_slice())),
            None,
            cfg,
        );
        if !mt.shared.biases[layer].is_finite() {
            return Err(Error::numerical(format!(
                "non-finite update in shared layer {layer} biases"
            )));
        }
    }

    update_block(
        mt.head0.weight.as_mut_slice(),
        grads.xi_combined.head0_weight.as_slice(),
        reg.map(|(x, o)| (x.head0_weight.as_slice(), o.head0_weight.as_slice())),
        penalty.as_ref(),
        cfg,
    );
    update_block(
        mt.head0.bias.as_mut_slice(),
        grads.xi_combined.head0_bias.as_slice(),
        reg.map(|(x, o)| (x.head0_bias.as_slice(), o.head0_bias.as_slice())),
        None,
        cfg,
    );
    if !(mt.head0.weight.is_finite() && mt.head0.bias.is_finite()) {
        return Err(Error::numerical("non-finite update in digit head".to_string()));
    }

    // The digit loss never reaches the rotation head, so no regularizer
    // term exists for it: combined gradient (plus penalty) only.
    update_block(
        mt.head1.weight.as_mut_slice(),
        grads.xi_combined.head1_weight.as_slice(),
        None,
        penalty.as_ref(),
        cfg,
    );
    update_block(
        mt.head1.bias.as_mut_slice(),
        grads.xi_combined.head1_bias.as_slice(),
        None,
        None,
        cfg,
    );
    if !(mt.head1.weight.is_finite() && mt.head1.bias.is_finite()) {
        return Err(Error::numerical("non-finite update in rotation head".to_string()));
    }
    Ok(())
}

/// One regularized step on a batch of (image, digit, rotation) samples.
pub fn multitask_datagrad_step(
    mt: &mut MultiTaskParams,
    batch: &[(Vector, usize, usize)],
    cfg: &TrainConfig,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".to_string()));
    }
    let input_dim = mt.input_dim();
    let mut images = Matrix::zeros(batch.len(), input_dim);
    let mut digits = Vec::with_capacity(batch.len());
    let mut auxes = Vec::with_capacity(batch.len());
    for (s, (d, digit, aux)) in batch.iter().enumerate() {
        if d.len() != input_dim {
            return Err(Error::shape(
                "batch",
                format!("sample {s} has {} features, network expects {input_dim}", d.len()),
            ));
        }
        images.row_mut(s).copy_from_slice(d.as_slice());
        digits.push(*digit);
        auxes.push(*aux);
    }
    let outcome = mt_batch_outcome(mt, &images, &digits, &auxes, cfg)?;
    mt_apply_update(mt, &outcome.grads, cfg)
}

/// Digit-head classification accuracy in percent.
pub fn digit_accuracy(mt: &MultiTaskParams, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate accuracy on an empty set".to_string()));
    }
    const CHUNK: usize = 500;
    let input_dim = mt.input_dim();
    let mut correct = 0usize;
    let mut start = 0usize;
    while start < ds.len() {
        let end = (start + CHUNK).min(ds.len());
        let mut images = Matrix::zeros(end - start, input_dim);
        for (row, img) in ds.images[start..end].iter().enumerate() {
            if img.len() != input_dim {
                return Err(Error::shape(
                    "digit_accuracy",
                    format!(
                        "image {} has {} pixels, network expects {input_dim}",
                        start + row,
                        img.len()
                    ),
                ));
            }
            images.row_mut(row).copy_from_slice(img.as_slice());
        }
        let trace = mt_forward_batch(mt, &images)?;
        for (row, &label) in ds.labels[start..end].iter().enumerate() {
            if argmax(trace.p0.row(row)) == label as usize {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(100.0 * correct as f64 / ds.len() as f64)
}

/// A finished multi-task run; accuracy fields refer to the digit head.
#[derive(Debug, Clone)]
pub struct TrainedMultiTask {
    pub mt: MultiTaskParams,
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    pub history: Vec<EpochStats>,
}

fn gather_mt(
    ds: &Dataset,
    aux: &[u8],
    idx: &[u32],
    images: &mut Matrix,
    digits: &mut Vec<usize>,
    auxes: &mut Vec<usize>,
) {
    digits.clear();
    auxes.clear();
    for (row, &i) in idx.iter().enumerate() {
        images.row_mut(row).copy_from_slice(ds.images[i as usize].as_slice());
        digits.push(ds.labels[i as usize] as usize);
        auxes.push(aux[i as usize] as usize);
    }
}

/// Trains a fresh two-headed network. The training set must carry
/// auxiliary labels; validation is scored on the digit head only and the
/// best-validation epoch's parameters are kept (earliest epoch wins ties).
pub fn train_multitask(
    train: &Dataset,
    validation: &Dataset,
    shared_sizes: &[usize],
    n_digit: usize,
    n_aux: usize,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainedMultiTask> {
    cfg.validate()?;
    let mut mt = init_multitask(shared_sizes, n_digit, n_aux, cfg.seed)?;
    let input_dim = mt.input_dim();

    let aux = train.aux_labels.as_ref().ok_or_else(|| {
        Error::InvalidInput("multi-task training needs auxiliary labels".to_string())
    })?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }
    for (what, ds) in [("training", train), ("validation", validation)] {
        if let Some((i, img)) = ds.images.iter().enumerate().find(|(_, im)| im.len() != input_dim)
        {
            return Err(Error::InvalidInput(format!(
                "{what} image {i} has {} pixels, network expects {input_dim}",
                img.len()
            )));
        }
        if let Some(&l) = ds.labels.iter().find(|&&l| l as usize >= n_digit) {
            return Err(Error::InvalidInput(format!(
                "{what} digit label {l} out of range for {n_digit} classes"
            )));
        }
    }
    if let Some(&a) = aux.iter().find(|&&a| a as usize >= n_aux) {
        return Err(Error::InvalidInput(format!(
            "auxiliary label {a} out of range for {n_aux} classes"
        )));
    }

    let mut best = mt.clone();
    let mut best_epoch = 0usize;
    let mut best_acc = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut digits: Vec<usize> = Vec::with_capacity(cfg.batch_size);
    let mut auxes: Vec<usize> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        let plan = batches(train, cfg.batch_size, epoch_seed(cfg.seed, epoch));
        let mut correct = 0usize;
        let mut loss_sum = 0.0;
        for (bi, idx) in plan.iter().enumerate() {
            let mut images = Matrix::zeros(idx.len(), input_dim);
            gather_mt(train, aux, idx, &mut images, &mut digits, &mut auxes);
            let outcome = mt_batch_outcome(&mt, &images, &digits, &auxes, cfg)
                .map_err(|e| with_step_coordinates(e, epoch, bi))?;
            mt_apply_update(&mut mt, &outcome.grads, cfg)
                .map_err(|e| with_step_coordinates(e, epoch, bi))?;
            correct += outcome.correct_digit;
            loss_sum += outcome.loss_sum;
        }
        let stats = EpochStats {
            epoch,
            train_accuracy: 100.0 * correct as f64 / train.len() as f64,
            train_loss: loss_sum / train.len() as f64,
            validation_accuracy: digit_accuracy(&mt, validation)?,
        };
        if stats.validation_accuracy > best_acc {
            best_acc = stats.validation_accuracy;
            best_epoch = epoch;
            best = mt.clone();
        }
        on_epoch(&stats);
        history.push(stats);
    }

    if history.is_empty() {
        best_acc = digit_accuracy(&best, validation)?;
    }
    Ok(TrainedMultiTask { mt: best, best_epoch, best_validation_accuracy: best_acc, history })
}
