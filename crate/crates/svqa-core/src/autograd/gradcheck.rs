use crate::autograd::tape::{Tape, TensorId};
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Central-difference step. Large enough that f32 forward noise stays well
/// below the signal at the scales used in the randomized checks.
pub const H: f32 = 1e-3;

/// Pass threshold for a single op check.
pub const TOLERANCE: f32 = 1e-3;

/// Elementwise relative error, max over positions:
/// |a - n| / max(1e-8, |a| + |n|).
pub fn max_rel_error(analytic: &[f32], numeric: &[f32]) -> f32 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f32::max)
}

/// Check the gradient of an arbitrary scalar program against central
/// differences over every element of every input. The program is recorded
/// once; perturbed losses are re-evaluated by replaying the tape in f64, so
/// the finite-difference signal is not drowned by f32 forward rounding (a
/// softmax row whose output gradient is nearly centered would otherwise sit
/// below the f32 noise floor at this step size). Returns the max relative
/// error between analytic and numeric gradients.
pub fn grad_check_fn(
    inputs: &[Tensor],
    build: impl Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
) -> Result<f32> {
    let inputs: Vec<Tensor> = inputs.iter().cloned().map(Tensor::with_grad).collect();

    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = build(&mut tape, &ids)?;
    if tape.value(loss).len() != 1 {
        return Err(Error::NonScalarLoss(tape.shape(loss).to_vec()));
    }
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f32>> = ids
        .iter()
        .zip(&inputs)
        .map(|(&id, t)| grads.dense(id, t.numel()))
        .collect();

    let mut worst = 0.0f32;
    for (ti, t) in inputs.iter().enumerate() {
        let base: Vec<f64> = t.data().iter().map(|&x| x as f64).collect();
        for j in 0..t.numel() {
            let mut pert = base.clone();
            pert[j] = base[j] + H as f64;
            let up = tape.replay_f64(loss, &[(ids[ti], pert.clone())]);
            pert[j] = base[j] - H as f64;
            let down = tape.replay_f64(loss, &[(ids[ti], pert)]);
            let numeric = ((up - down) / (2.0 * H as f64)) as f32;
            let a = analytic[ti][j];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Every differentiable tape op, for the randomized check suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckedOp {
    MatMul,
    Add,
    AddBias,
    Mul,
    Scale,
    Transpose,
    Reshape,
    ConcatRows,
    ConcatCols,
    SliceRows,
    SliceCols,
    GatherRows,
    Softmax,
    Sigmoid,
    Gelu,
    LayerNorm,
    Embed,
    Sum,
    Mean,
    WeightedBce,
    SoftmaxXent,
}

impl CheckedOp {
    pub const ALL: &'static [CheckedOp] = &[
        CheckedOp::MatMul,
        CheckedOp::Add,
        CheckedOp::AddBias,
        CheckedOp::Mul,
        CheckedOp::Scale,
        CheckedOp::Transpose,
        CheckedOp::Reshape,
        CheckedOp::ConcatRows,
        CheckedOp::ConcatCols,
        CheckedOp::SliceRows,
        CheckedOp::SliceCols,
        CheckedOp::GatherRows,
        CheckedOp::Softmax,
        CheckedOp::Sigmoid,
        CheckedOp::Gelu,
        CheckedOp::LayerNorm,
        CheckedOp::Embed,
        CheckedOp::Sum,
        CheckedOp::Mean,
        CheckedOp::WeightedBce,
        CheckedOp::SoftmaxXent,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckedOp::MatMul => "matmul",
            CheckedOp::Add => "add",
            CheckedOp::AddBias => "add_bias",
            CheckedOp::Mul => "mul",
            CheckedOp::Scale => "scale",
            CheckedOp::Transpose => "transpose",
            CheckedOp::Reshape => "reshape",
            CheckedOp::ConcatRows => "concat_rows",
            CheckedOp::ConcatCols => "concat_cols",
            CheckedOp::SliceRows => "slice_rows",
            CheckedOp::SliceCols => "slice_cols",
            CheckedOp::GatherRows => "gather_rows",
            CheckedOp::Softmax => "softmax",
            CheckedOp::Sigmoid => "sigmoid",
            CheckedOp::Gelu => "gelu",
            CheckedOp::LayerNorm => "layer_norm",
            CheckedOp::Embed => "embed",
            CheckedOp::Sum => "sum",
            CheckedOp::Mean => "mean",
            CheckedOp::WeightedBce => "weighted_bce",
            CheckedOp::SoftmaxXent => "softmax_xent",
        }
    }
}

fn rand_tensor(rng: &mut SeededRng, shape: Vec<usize>, lo: f32, hi: f32) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(lo, hi)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

/// Project a possibly non-scalar op output down to a scalar with a fixed
/// positive random weighting, so every output element reaches the loss.
fn project(tape: &mut Tape, y: TensorId, proj: &Tensor) -> Result<TensorId> {
    let p = tape.constant(proj);
    let flat_len = tape.value(y).len();
    let yf = tape.reshape(y, vec![flat_len])?;
    let m = tape.mul(yf, p)?;
    tape.sum(m)
}

/// Randomized gradient check for one op. Shapes and values are drawn from
/// `rng`; returns the max relative error over the constructed case.
pub fn grad_check_op(op: CheckedOp, rng: &mut SeededRng) -> Result<f32> {
    let mut dim = |lo: usize, hi: usize| lo + rng.index(hi - lo + 1);
    match op {
        CheckedOp::MatMul => {
            let (m, k, n) = (dim(1, 4), dim(1, 4), dim(1, 4));
            let a = rand_tensor(rng, vec![m, k], -1.0, 1.0);
            let b = rand_tensor(rng, vec![k, n], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![m * n], 0.5, 1.5);
            grad_check_fn(&[a, b], move |tape, ids| {
                let y = tape.matmul(ids[0], ids[1])?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::Add | CheckedOp::Mul => {
            let (r, c) = (dim(1, 4), dim(1, 4));
            let a = rand_tensor(rng, vec![r, c], -1.0, 1.0);
            let b = rand_tensor(rng, vec![r, c], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![r * c], 0.5, 1.5);
            grad_check_fn(&[a, b], move |tape, ids| {
                let y = if op == CheckedOp::Add {
                    tape.add(ids[0], ids[1])?
                } else {
                    tape.mul(ids[0], ids[1])?
                };
                project(tape, y, &proj)
            })
        }
        CheckedOp::AddBias => {
            let (r, c) = (dim(1, 4), dim(1, 4));
            let a = rand_tensor(rng, vec![r, c], -1.0, 1.0);
            let b = rand_tensor(rng, vec![c], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![r * c], 0.5, 1.5);
            grad_check_fn(&[a, b], move |tape, ids| {
                let y = tape.add_bias(ids[0], ids[1])?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::Scale => {
            let (r, c) = (dim(1, 4), dim(1, 4));
            let factor = rng.uniform_range(-2.0, 2.0);
            let a = rand_tensor(rng, vec![r, c], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![r * c], 0.5, 1.5);
            grad_check_fn(&[a], move |tape, ids| {
                let y = tape.scale(ids[0], factor)?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::Transpose => {
            let (m, n) = (dim(1, 4), dim(1, 4));
            let a = rand_tensor(rng, vec![m, n], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![m * n], 0.5, 1.5);
            grad_check_fn(&[a], move |tape, ids| {
                let y = tape.transpose(ids[0])?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::Reshape => {
            let (m, n) = (dim(1, 4), dim(1, 4));
            let a = rand_tensor(rng, vec![m, n], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![m * n], 0.5, 1.5);
            grad_check_fn(&[a], move |tape, ids| {
                let y = tape.reshape(ids[0], vec![n * m])?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::ConcatRows => {
            let c = dim(1, 3);
            let (r1, r2) = (dim(1, 3), dim(1, 3));
            let a = rand_tensor(rng, vec![r1, c], -1.0, 1.0);
            let b = rand_tensor(rng, vec![r2, c], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![(r1 + r2) * c], 0.5, 1.5);
            grad_check_fn(&[a, b], move |tape, ids| {
                let y = tape.concat_rows(&[ids[0], ids[1]])?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::ConcatCols => {
            let r = dim(1, 3);
            let (c1, c2) = (dim(1, 3), dim(1, 3));
            let a = rand_tensor(rng, vec![r, c1], -1.0, 1.0);
            let b = rand_tensor(rng, vec![r, c2], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![r * (c1 + c2)], 0.5, 1.5);
            grad_check_fn(&[a, b], move |tape, ids| {
                let y = tape.concat_cols(&[ids[0], ids[1]])?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::SliceRows => {
            let (r, c) = (dim(2, 5), dim(1, 3));
            let start = rng.index(r);
            let len = 1 + rng.index(r - start);
            let a = rand_tensor(rng, vec![r, c], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![len * c], 0.5, 1.5);
            grad_check_fn(&[a], move |tape, ids| {
                let y = tape.slice_rows(ids[0], start, len)?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::SliceCols => {
            let (r, c) = (dim(1, 3), dim(2, 5));
            let start = rng.index(c);
            let width = 1 + rng.index(c - start);
            let a = rand_tensor(rng, vec![r, c], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![r * width], 0.5, 1.5);
            grad_check_fn(&[a], move |tape, ids| {
                let y = tape.slice_cols(ids[0], start, width)?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::GatherRows => {
            let (r, c) = (dim(2, 4), dim(1, 3));
            let k = dim(1, 5);
            let idx: Vec<usize> = (0..k).map(|_| rng.index(r)).collect();
            let a = rand_tensor(rng, vec![r, c], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![k * c], 0.5, 1.5);
            grad_check_fn(&[a], move |tape, ids| {
                let y = tape.gather_rows(ids[0], &idx)?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::Softmax => {
            let (r, d) = (dim(1, 3), dim(2, 5));
            let a = rand_tensor(rng, vec![r, d], -1.5, 1.5);
            let proj = rand_tensor(rng, vec![r * d], 0.5, 1.5);
            grad_check_fn(&[a], move |tape, ids| {
                let y = tape.softmax(ids[0])?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::Sigmoid | CheckedOp::Gelu => {
            let (r, c) = (dim(1, 4), dim(1, 4));
            let a = rand_tensor(rng, vec![r, c], -2.0, 2.0);
            let proj = rand_tensor(rng, vec![r * c], 0.5, 1.5);
            grad_check_fn(&[a], move |tape, ids| {
                let y = if op == CheckedOp::Sigmoid {
                    tape.sigmoid(ids[0])?
                } else {
                    tape.gelu(ids[0])?
                };
                project(tape, y, &proj)
            })
        }
        CheckedOp::LayerNorm => {
            let (r, d) = (dim(1, 3), dim(3, 6));
            let x = rand_tensor(rng, vec![r, d], -1.0, 1.0);
            let gain = rand_tensor(rng, vec![d], 0.5, 1.5);
            let bias = rand_tensor(rng, vec![d], -0.5, 0.5);
            let proj = rand_tensor(rng, vec![r * d], 0.5, 1.5);
            grad_check_fn(&[x, gain, bias], move |tape, ids| {
                let y = tape.layer_norm(ids[0], ids[1], ids[2], 1e-5)?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::Embed => {
            let (v, d) = (dim(2, 5), dim(1, 4));
            let k = dim(1, 5);
            let ids_in: Vec<usize> = (0..k).map(|_| rng.index(v)).collect();
            let table = rand_tensor(rng, vec![v, d], -1.0, 1.0);
            let proj = rand_tensor(rng, vec![k * d], 0.5, 1.5);
            grad_check_fn(&[table], move |tape, ids| {
                let y = tape.embed(ids[0], &ids_in)?;
                project(tape, y, &proj)
            })
        }
        CheckedOp::Sum => {
            let (r, c) = (dim(1, 4), dim(1, 4));
            let a = rand_tensor(rng, vec![r, c], -1.0, 1.0);
            grad_check_fn(&[a], |tape, ids| tape.sum(ids[0]))
        }
        CheckedOp::Mean => {
            let (r, c) = (dim(1, 4), dim(1, 4));
            let a = rand_tensor(rng, vec![r, c], -1.0, 1.0);
            grad_check_fn(&[a], |tape, ids| tape.mean(ids[0]))
        }
        CheckedOp::WeightedBce | CheckedOp::SoftmaxXent => {
            // small N*V keeps the per-element gradient large relative to the
            // f32 forward noise floor at step H
            let (n, v) = (dim(1, 2), dim(2, 4));
            let scores = rand_tensor(rng, vec![n, v], -2.0, 2.0);
            let targets: Vec<usize> = (0..n).map(|_| rng.index(v)).collect();
            let weights: Vec<f32> = (0..n)
                .map(|_| if rng.index(2) == 0 { 1.0 } else { 3.0 })
                .collect();
            grad_check_fn(&[scores], move |tape, ids| {
                if op == CheckedOp::WeightedBce {
                    tape.weighted_bce(ids[0], &targets, &weights)
                } else {
                    tape.softmax_xent(ids[0], &targets, &weights)
                }
            })
        }
    }
}

/// Run every op check once against a derived stream per op; returns
/// (op name, max relative error) pairs in a fixed order.
pub fn grad_check_suite(rng: &SeededRng) -> Result<Vec<(&'static str, f32)>> {
    let mut out = Vec::with_capacity(CheckedOp::ALL.len());
    for (i, &op) in CheckedOp::ALL.iter().enumerate() {
        let mut sub = rng.derive(i as u64);
        let err = grad_check_op(op, &mut sub)?;
        out.push((op.name(), err));
    }
    Ok(out)
}
