//! Low-rank adapters over frozen linear layers.
//!
//! A linear layer here is `y = x * W^T` with `W` of shape [out, in]. An
//! adapter covers a contiguous row block of `W` (= column block of `y`) with
//! a delta `(alpha/r) * B * A`, where `A` is [r, in] and `B` is [rows, r].
//! `B` starts at zero, so a freshly attached adapter leaves the layer's
//! output untouched.

use crate::autograd::{matmul_raw, Tensor};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Which decoder matrices receive adapters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoraPreset {
    /// One adapter across the whole fused attention projection plus one on
    /// the output projection.
    AttnProj,
    /// Separate adapters for the query, key and value row blocks of the
    /// fused attention weight, plus one on the output projection.
    QkvO,
}

impl LoraPreset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "attn-proj" => Ok(LoraPreset::AttnProj),
            "qkv-o" => Ok(LoraPreset::QkvO),
            _ => Err(Error::Config(format!(
                "unknown lora_targets {s:?} (expected attn-proj or qkv-o)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LoraPreset::AttnProj => "attn-proj",
            LoraPreset::QkvO => "qkv-o",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f32,
    pub preset: LoraPreset,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 8,
            alpha: 16.0,
            preset: LoraPreset::AttnProj,
        }
    }
}

/// A single adapter: `a` is [r, in], `b` is [rows, r].
#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter {
    pub a: Tensor,
    pub b: Tensor,
    pub alpha: f32,
}

impl LoraAdapter {
    /// Standard init: `a` Gaussian, `b` zero, so the delta starts at zero.
    pub fn init(rows: usize, input: usize, rank: usize, alpha: f32, rng: &mut SeededRng) -> Result<Self> {
        if rank == 0 || rank > rows.min(input) {
            return Err(Error::BadArgument {
                op: "LoraAdapter::init",
                msg: format!("rank {rank} outside 1..={}", rows.min(input)),
            });
        }
        Ok(LoraAdapter {
            a: Tensor::randn(vec![rank, input], 0.02, rng),
            b: Tensor::zeros(vec![rows, rank]),
            alpha,
        })
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn rows(&self) -> usize {
        self.b.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn scaling(&self) -> f32 {
        self.alpha / self.rank() as f32
    }

    /// Dense delta `(alpha/r) * B * A`, shape [rows, in].
    pub fn delta(&self) -> Tensor {
        let rows = self.rows();
        let r = self.rank();
        let input = self.input_dim();
        let mut d = matmul_raw(self.b.data(), self.a.data(), rows, r, input);
        let s = self.scaling();
        for v in &mut d {
            *v *= s;
        }
        Tensor::new(vec![rows, input], d).expect("sized")
    }
}

/// Adapter bound to a row block of a base weight.
#[derive(Clone, Debug)]
pub struct BoundAdapter {
    pub row_start: usize,
    pub adapter: LoraAdapter,
}

fn check_bounds(w: &Tensor, b: &BoundAdapter) -> Result<()> {
    if w.rank() != 2
        || b.adapter.input_dim() != w.cols()
        || b.row_start + b.adapter.rows() > w.rows()
    {
        return Err(Error::ShapeMismatch {
            op: "lora",
            lhs: w.shape().to_vec(),
            rhs: vec![b.row_start + b.adapter.rows(), b.adapter.input_dim()],
        });
    }
    Ok(())
}

/// Runtime path: `x * W^T` plus every adapter's contribution in its column
/// block. `x` is [n, in]; result is [n, out].
pub fn lora_forward_raw(x: &Tensor, w: &Tensor, adapters: &[BoundAdapter]) -> Result<Tensor> {
    if x.rank() != 2 || w.rank() != 2 || x.cols() != w.cols() {
        return Err(Error::ShapeMismatch {
            op: "lora_forward",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    let (n, input) = (x.rows(), x.cols());
    let out = w.rows();
    // y = x * W^T
    let mut wt = vec![0.0f32; input * out];
    for r in 0..out {
        for c in 0..input {
            wt[c * out + r] = w.at2(r, c);
        }
    }
    let mut y = matmul_raw(x.data(), &wt, n, input, out);
    for b in adapters {
        check_bounds(w, b)?;
        let r = b.adapter.rank();
        let rows = b.adapter.rows();
        // u = x * A^T  -> [n, r]
        let mut at = vec![0.0f32; input * r];
        for i in 0..r {
            for c in 0..input {
                at[c * r + i] = b.adapter.a.at2(i, c);
            }
        }
        let u = matmul_raw(x.data(), &at, n, input, r);
        // v = u * B^T -> [n, rows]
        let mut bt = vec![0.0f32; r * rows];
        for i in 0..rows {
            for c in 0..r {
                bt[c * rows + i] = b.adapter.b.at2(i, c);
            }
        }
        let v = matmul_raw(&u, &bt, n, r, rows);
        let s = b.adapter.scaling();
        for i in 0..n {
            for j in 0..rows {
                y[i * out + b.row_start + j] += s * v[i * rows + j];
            }
        }
    }
    Tensor::new(vec![n, out], y)
}

/// Fold every adapter's delta into a copy of the base weight.
pub fn merged_weight(w: &Tensor, adapters: &[BoundAdapter]) -> Result<Tensor> {
    let mut out = w.clone();
    for b in adapters {
        check_bounds(w, b)?;
        let delta = b.adapter.delta();
        let cols = w.cols();
        for i in 0..delta.rows() {
            for j in 0..cols {
                out.data_mut()[(b.row_start + i) * cols + j] += delta.at2(i, j);
            }
        }
    }
    Ok(out)
}

/// Subtract every adapter's delta back out of a merged weight.
pub fn unmerged_weight(w: &Tensor, adapters: &[BoundAdapter]) -> Result<Tensor> {
    let mut out = w.clone();
    for b in adapters {
        check_bounds(w, b)?;
        let delta = b.adapter.delta();
        let cols = w.cols();
        for i in 0..delta.rows() {
            for j in 0..cols {
                out.data_mut()[(b.row_start + i) * cols + j] -= delta.at2(i, j);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain_forward(x: &Tensor, w: &Tensor) -> Tensor {
        lora_forward_raw(x, w, &[]).unwrap()
    }

    fn rand_adapter(rng: &mut SeededRng, rows: usize, input: usize, rank: usize) -> LoraAdapter {
        let mut ad = LoraAdapter::init(rows, input, rank, 16.0, rng).unwrap();
        // give B real values so the delta is non-trivial
        ad.b = Tensor::randn(vec![rows, rank], 0.1, rng);
        ad
    }

    #[test]
    fn scaling_is_alpha_over_rank() {
        let mut rng = SeededRng::new(1);
        let ad = LoraAdapter::init(8, 4, 4, 16.0, &mut rng).unwrap();
        assert_eq!(ad.scaling(), 4.0);
    }

    #[test]
    fn rank_bounds_enforced() {
        let mut rng = SeededRng::new(1);
        assert!(LoraAdapter::init(8, 4, 0, 16.0, &mut rng).is_err());
        assert!(LoraAdapter::init(8, 4, 5, 16.0, &mut rng).is_err());
        assert!(LoraAdapter::init(8, 4, 4, 16.0, &mut rng).is_ok());
    }

    #[test]
    fn fresh_adapter_is_transparent() {
        let mut rng = SeededRng::new(2);
        let w = Tensor::randn(vec![6, 4], 0.5, &mut rng);
        let x = Tensor::randn(vec![3, 4], 0.5, &mut rng);
        let ad = BoundAdapter {
            row_start: 0,
            adapter: LoraAdapter::init(6, 4, 2, 16.0, &mut rng).unwrap(),
        };
        let plain = plain_forward(&x, &w);
        let adapted = lora_forward_raw(&x, &w, &[ad]).unwrap();
        for (a, b) in plain.data().iter().zip(adapted.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn runtime_equals_merged() {
        let mut rng = SeededRng::new(3);
        for _ in 0..10 {
            let w = Tensor::randn(vec![9, 5], 0.5, &mut rng);
            let x = Tensor::randn(vec![4, 5], 0.5, &mut rng);
            let ads = vec![
                BoundAdapter {
                    row_start: 0,
                    adapter: rand_adapter(&mut rng, 3, 5, 2),
                },
                BoundAdapter {
                    row_start: 3,
                    adapter: rand_adapter(&mut rng, 6, 5, 3),
                },
            ];
            let runtime = lora_forward_raw(&x, &w, &ads).unwrap();
            let merged = merged_weight(&w, &ads).unwrap();
            let folded = plain_forward(&x, &merged);
            for (a, b) in runtime.data().iter().zip(folded.data()) {
                assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn merge_then_unmerge_recovers_base() {
        let mut rng = SeededRng::new(4);
        let w = Tensor::randn(vec![6, 4], 0.5, &mut rng);
        let ads = vec![BoundAdapter {
            row_start: 2,
            adapter: rand_adapter(&mut rng, 4, 4, 2),
        }];
        let merged = merged_weight(&w, &ads).unwrap();
        let back = unmerged_weight(&merged, &ads).unwrap();
        for (a, b) in w.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn adapter_only_touches_its_column_block() {
        let mut rng = SeededRng::new(5);
        let w = Tensor::randn(vec![8, 4], 0.5, &mut rng);
        let x = Tensor::randn(vec![2, 4], 0.5, &mut rng);
        let ads = vec![BoundAdapter {
            row_start: 2,
            adapter: rand_adapter(&mut rng, 3, 4, 2),
        }];
        let plain = plain_forward(&x, &w);
        let adapted = lora_forward_raw(&x, &w, &ads).unwrap();
        for i in 0..2 {
            for j in 0..8 {
                let same = (plain.at2(i, j) - adapted.at2(i, j)).abs() < 1e-7;
                if (2..5).contains(&j) {
                    // inside the block values generally move
                } else {
                    assert!(same, "column {j} outside the block changed");
                }
            }
        }
    }

    #[test]
    fn out_of_bounds_block_rejected() {
        let mut rng = SeededRng::new(6);
        let w = Tensor::randn(vec![4, 4], 0.5, &mut rng);
        let x = Tensor::randn(vec![1, 4], 0.5, &mut rng);
        let ads = vec![BoundAdapter {
            row_start: 2,
            adapter: rand_adapter(&mut rng, 3, 4, 2),
        }];
        assert!(lora_forward_raw(&x, &w, &ads).is_err());
    }

    #[test]
    fn preset_parsing() {
        assert_eq!(LoraPreset::parse("attn-proj").unwrap(), LoraPreset::AttnProj);
        assert_eq!(LoraPreset::parse("qkv-o").unwrap(), LoraPreset::QkvO);
        assert!(LoraPreset::parse("everything").is_err());
        assert_eq!(LoraPreset::QkvO.as_str(), "qkv-o");
    }
}
