use crate::autograd::{ParamId, ParamSet, Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const LN_EPS: f32 = 1e-5;
const INIT_STD: f32 = 0.02;

/// Shared transformer geometry for the two encoders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderConfig {
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub video_layers: usize,
    pub text_layers: usize,
    pub max_question_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            heads: 4,
            ffn_dim: 128,
            video_layers: 2,
            text_layers: 2,
            max_question_len: 16,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.ffn_dim == 0 || self.max_question_len == 0 {
            return Err(Error::Config(
                "encoder dims, heads, ffn and question length must be positive".into(),
            ));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Layer norm parameters (gain starts at one, bias at zero).
pub(crate) struct LnP {
    pub g: ParamId,
    pub b: ParamId,
}

impl LnP {
    pub fn new(ps: &mut ParamSet, prefix: &str, d: usize) -> LnP {
        LnP {
            g: ps.add(format!("{prefix}.g"), Tensor::filled(vec![d], 1.0), true),
            b: ps.add(format!("{prefix}.b"), Tensor::zeros(vec![d]), true),
        }
    }

    pub fn apply(&self, tape: &mut Tape, reg: &[TensorId], x: TensorId) -> Result<TensorId> {
        tape.layer_norm(x, reg[self.g.0], reg[self.b.0], LN_EPS)
    }
}

/// Separate q/k/v/output projections for one attention layer.
pub(crate) struct AttnP {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
}

impl AttnP {
    pub fn new(ps: &mut ParamSet, prefix: &str, d: usize, rng: &mut SeededRng) -> AttnP {
        let mut proj = |name: &str| {
            (
                ps.add(
                    format!("{prefix}.{name}.w"),
                    Tensor::randn(vec![d, d], INIT_STD, rng),
                    true,
                ),
                ps.add(format!("{prefix}.{name}.b"), Tensor::zeros(vec![d]), true),
            )
        };
        let (wq, bq) = proj("q");
        let (wk, bk) = proj("k");
        let (wv, bv) = proj("v");
        let (wo, bo) = proj("o");
        AttnP {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    /// Multi-head attention of `queries` over `keys_values` (pass the same id
    /// twice for self attention). `mask` is added to raw scores pre-softmax.
    /// Returns the projected output and one attention matrix per head.
    pub fn apply(
        &self,
        tape: &mut Tape,
        reg: &[TensorId],
        queries: TensorId,
        keys_values: TensorId,
        heads: usize,
        mask: Option<TensorId>,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        let d = tape.shape(queries)[1];
        let dh = d / heads;
        let wq = tape.transpose(reg[self.wq.0])?;
        let q_all = tape.matmul(queries, wq)?;
        let q_all = tape.add_bias(q_all, reg[self.bq.0])?;
        let wk = tape.transpose(reg[self.wk.0])?;
        let k_all = tape.matmul(keys_values, wk)?;
        let k_all = tape.add_bias(k_all, reg[self.bk.0])?;
        let wv = tape.transpose(reg[self.wv.0])?;
        let v_all = tape.matmul(keys_values, wv)?;
        let v_all = tape.add_bias(v_all, reg[self.bv.0])?;

        let mut ctxs = Vec::with_capacity(heads);
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q_all, h * dh, dh)?;
            let kh = tape.slice_cols(k_all, h * dh, dh)?;
            let vh = tape.slice_cols(v_all, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let raw = tape.matmul(qh, kt)?;
            let scaled = tape.scale(raw, 1.0 / (dh as f32).sqrt())?;
            let masked = match mask {
                Some(m) => tape.add(scaled, m)?,
                None => scaled,
            };
            let p = tape.softmax(masked)?;
            let ctx = tape.matmul(p, vh)?;
            probs.push(p);
            ctxs.push(ctx);
        }
        let ctx_all = tape.concat_cols(&ctxs)?;
        let wo = tape.transpose(reg[self.wo.0])?;
        let out = tape.matmul(ctx_all, wo)?;
        let out = tape.add_bias(out, reg[self.bo.0])?;
        Ok((out, probs))
    }
}

/// Two-layer GELU feed-forward.
pub(crate) struct FfnP {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl FfnP {
    pub fn new(ps: &mut ParamSet, prefix: &str, d: usize, hidden: usize, rng: &mut SeededRng) -> FfnP {
        FfnP {
            w1: ps.add(
                format!("{prefix}.w1"),
                Tensor::randn(vec![hidden, d], INIT_STD, rng),
                true,
            ),
            b1: ps.add(format!("{prefix}.b1"), Tensor::zeros(vec![hidden]), true),
            w2: ps.add(
                format!("{prefix}.w2"),
                Tensor::randn(vec![d, hidden], INIT_STD, rng),
                true,
            ),
            b2: ps.add(format!("{prefix}.b2"), Tensor::zeros(vec![d]), true),
        }
    }

    pub fn apply(&self, tape: &mut Tape, reg: &[TensorId], x: TensorId) -> Result<TensorId> {
        let w1 = tape.transpose(reg[self.w1.0])?;
        let h = tape.matmul(x, w1)?;
        let h = tape.add_bias(h, reg[self.b1.0])?;
        let h = tape.gelu(h)?;
        let w2 = tape.transpose(reg[self.w2.0])?;
        let y = tape.matmul(h, w2)?;
        tape.add_bias(y, reg[self.b2.0])
    }
}

struct VideoBlock {
    ln1: LnP,
    attn: AttnP,
    ln2: LnP,
    ffn: FfnP,
}

/// Pre-norm transformer over visible video tokens. With zero layers it
/// reduces to the final layer norm alone.
pub struct VideoEncoder {
    pub heads: usize,
    pub patch: ParamId,
    blocks: Vec<VideoBlock>,
    final_ln: LnP,
}

impl VideoEncoder {
    pub fn new(
        ps: &mut ParamSet,
        cfg: &EncoderConfig,
        cube_pixels: usize,
        rng: &mut SeededRng,
    ) -> VideoEncoder {
        let patch = ps.add(
            "video.patch.w",
            Tensor::randn(vec![cfg.dim, cube_pixels], INIT_STD, rng),
            true,
        );
        let blocks = (0..cfg.video_layers)
            .map(|i| {
                let p = format!("video.block{i}");
                VideoBlock {
                    ln1: LnP::new(ps, &format!("{p}.ln1"), cfg.dim),
                    attn: AttnP::new(ps, &format!("{p}.attn"), cfg.dim, rng),
                    ln2: LnP::new(ps, &format!("{p}.ln2"), cfg.dim),
                    ffn: FfnP::new(ps, &format!("{p}.ffn"), cfg.dim, cfg.ffn_dim, rng),
                }
            })
            .collect();
        let final_ln = LnP::new(ps, "video.final_ln", cfg.dim);
        VideoEncoder {
            heads: cfg.heads,
            patch,
            blocks,
            final_ln,
        }
    }

    pub fn forward(&self, tape: &mut Tape, reg: &[TensorId], tokens: TensorId) -> Result<TensorId> {
        if tape.shape(tokens)[0] == 0 {
            return Err(Error::BadArgument {
                op: "video_encoder",
                msg: "no visible tokens".into(),
            });
        }
        let mut x = tokens;
        for b in &self.blocks {
            let h = b.ln1.apply(tape, reg, x)?;
            let (a, _) = b.attn.apply(tape, reg, h, h, self.heads, None)?;
            x = tape.add(x, a)?;
            let h2 = b.ln2.apply(tape, reg, x)?;
            let f = b.ffn.apply(tape, reg, h2)?;
            x = tape.add(x, f)?;
        }
        self.final_ln.apply(tape, reg, x)
    }
}

struct TextBlock {
    self_ln: LnP,
    self_attn: AttnP,
    cross_ln: LnP,
    cross_attn: AttnP,
    ffn_ln: LnP,
    ffn: FfnP,
}

/// Question encoder fused with video features: bidirectional self attention,
/// then cross attention where the text queries attend over every video
/// feature (no mask of any kind on the cross direction), then feed-forward.
pub struct TextEncoder {
    pub heads: usize,
    pub emb: ParamId,
    blocks: Vec<TextBlock>,
    final_ln: LnP,
}

/// Fused question representation plus the cross-attention maps
/// (layer-major, head-minor) for inspection.
pub struct FusionOut {
    pub fused: TensorId,
    pub cross_attn: Vec<Vec<TensorId>>,
}

impl TextEncoder {
    pub fn new(ps: &mut ParamSet, cfg: &EncoderConfig, vocab: usize, rng: &mut SeededRng) -> TextEncoder {
        let emb = ps.add(
            "text.emb",
            Tensor::randn(vec![vocab, cfg.dim], INIT_STD, rng),
            true,
        );
        let blocks = (0..cfg.text_layers)
            .map(|i| {
                let p = format!("text.block{i}");
                TextBlock {
                    self_ln: LnP::new(ps, &format!("{p}.self_ln"), cfg.dim),
                    self_attn: AttnP::new(ps, &format!("{p}.self"), cfg.dim, rng),
                    cross_ln: LnP::new(ps, &format!("{p}.cross_ln"), cfg.dim),
                    cross_attn: AttnP::new(ps, &format!("{p}.cross"), cfg.dim, rng),
                    ffn_ln: LnP::new(ps, &format!("{p}.ffn_ln"), cfg.dim),
                    ffn: FfnP::new(ps, &format!("{p}.ffn"), cfg.dim, cfg.ffn_dim, rng),
                }
            })
            .collect();
        let final_ln = LnP::new(ps, "text.final_ln", cfg.dim);
        TextEncoder {
            heads: cfg.heads,
            emb,
            blocks,
            final_ln,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        reg: &[TensorId],
        question_ids: &[usize],
        question_pos: TensorId,
        video_feats: TensorId,
    ) -> Result<FusionOut> {
        if question_ids.is_empty() {
            return Err(Error::BadArgument {
                op: "text_encoder",
                msg: "empty question".into(),
            });
        }
        let e = tape.embed(reg[self.emb.0], question_ids)?;
        let mut x = tape.add(e, question_pos)?;
        let mut cross_maps = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let h = b.self_ln.apply(tape, reg, x)?;
            let (a, _) = b.self_attn.apply(tape, reg, h, h, self.heads, None)?;
            x = tape.add(x, a)?;
            let hc = b.cross_ln.apply(tape, reg, x)?;
            let (c, maps) = b
                .cross_attn
                .apply(tape, reg, hc, video_feats, self.heads, None)?;
            x = tape.add(x, c)?;
            cross_maps.push(maps);
            let hf = b.ffn_ln.apply(tape, reg, x)?;
            let f = b.ffn.apply(tape, reg, hf)?;
            x = tape.add(x, f)?;
        }
        let fused = self.final_ln.apply(tape, reg, x)?;
        Ok(FusionOut {
            fused,
            cross_attn: cross_maps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(video_layers: usize, text_layers: usize) -> (EncoderConfig, ParamSet, VideoEncoder, TextEncoder) {
        let cfg = EncoderConfig {
            dim: 8,
            heads: 2,
            ffn_dim: 16,
            video_layers,
            text_layers,
            max_question_len: 6,
        };
        let mut ps = ParamSet::new();
        let mut rng = SeededRng::new(7);
        let venc = VideoEncoder::new(&mut ps, &cfg, 24, &mut rng);
        let tenc = TextEncoder::new(&mut ps, &cfg, 11, &mut rng);
        (cfg, ps, venc, tenc)
    }

    #[test]
    fn config_validation() {
        let mut cfg = EncoderConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
        cfg.heads = 0;
        assert!(cfg.validate().is_err());
        let zero_layers = EncoderConfig {
            video_layers: 0,
            text_layers: 0,
            ..EncoderConfig::default()
        };
        assert!(zero_layers.validate().is_ok());
    }

    #[test]
    fn zero_layer_video_encoder_is_final_norm_only() {
        let (_, ps, venc, _) = setup(0, 0);
        let mut tape = Tape::new();
        let reg = ps.register_frozen(&mut tape);
        let mut rng = SeededRng::new(1);
        let tokens = Tensor::randn(vec![3, 8], 1.0, &mut rng);
        let tid = tape.constant(&tokens);
        let out = venc.forward(&mut tape, &reg, tid).unwrap();
        // with unit gain and zero bias this is plain row normalization
        let expect = {
            let mut t2 = Tape::new();
            let x = t2.constant(&tokens);
            let g = t2.constant(&Tensor::filled(vec![8], 1.0));
            let b = t2.constant(&Tensor::zeros(vec![8]));
            let y = t2.layer_norm(x, g, b, LN_EPS).unwrap();
            t2.value(y).to_vec()
        };
        assert_eq!(tape.value(out), &expect[..]);
    }

    #[test]
    fn video_encoder_rejects_empty_sequences() {
        let (_, ps, venc, _) = setup(1, 0);
        let mut tape = Tape::new();
        let reg = ps.register_frozen(&mut tape);
        let empty = tape.constant(&Tensor::zeros(vec![0, 8]));
        assert!(venc.forward(&mut tape, &reg, empty).is_err());
    }

    #[test]
    fn cross_attention_rows_are_stochastic() {
        let (_, ps, venc, tenc) = setup(1, 2);
        let mut tape = Tape::new();
        let reg = ps.register_frozen(&mut tape);
        let mut rng = SeededRng::new(2);
        let tokens = tape.constant(&Tensor::randn(vec![5, 8], 0.5, &mut rng));
        let vf = venc.forward(&mut tape, &reg, tokens).unwrap();
        let pos = tape.constant(&Tensor::zeros(vec![3, 8]));
        let out = tenc.forward(&mut tape, &reg, &[3, 4, 5], pos, vf).unwrap();
        assert_eq!(out.cross_attn.len(), 2);
        for layer in &out.cross_attn {
            assert_eq!(layer.len(), 2);
            for &p in layer {
                assert_eq!(tape.shape(p), &[3, 5]);
                for row in tape.value(p).chunks(5) {
                    let s: f32 = row.iter().sum();
                    assert!((s - 1.0).abs() < 1e-5);
                }
            }
        }
        assert_eq!(tape.shape(out.fused), &[3, 8]);
    }

    #[test]
    fn text_encoder_rejects_empty_question() {
        let (_, ps, venc, tenc) = setup(0, 1);
        let mut tape = Tape::new();
        let reg = ps.register_frozen(&mut tape);
        let tokens = tape.constant(&Tensor::filled(vec![2, 8], 0.1));
        let vf = venc.forward(&mut tape, &reg, tokens).unwrap();
        let pos = tape.constant(&Tensor::zeros(vec![0, 8]));
        assert!(tenc.forward(&mut tape, &reg, &[], pos, vf).is_err());
    }

    #[test]
    fn same_seed_same_initialization() {
        let (_, ps1, _, _) = setup(2, 2);
        let (_, ps2, _, _) = setup(2, 2);
        assert_eq!(ps1.len(), ps2.len());
        for ((_, a), (_, b)) in ps1.iter().zip(ps2.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.tensor.data(), b.tensor.data());
        }
    }

    #[test]
    fn parameter_names_follow_the_block_scheme() {
        let (_, ps, _, _) = setup(1, 1);
        for want in [
            "video.patch.w",
            "video.block0.attn.q.w",
            "video.final_ln.g",
            "text.emb",
            "text.block0.cross.o.b",
            "text.final_ln.b",
        ] {
            assert!(ps.by_name(want).is_some(), "missing {want}");
        }
    }
}
