use crate::autograd::{ParamId, ParamSet, Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::model::encoder::{FfnP, LnP};
use crate::model::lora::{
    merged_weight, unmerged_weight, BoundAdapter, LoraAdapter, LoraConfig, LoraPreset,
};
use crate::rng::SeededRng;

const INIT_STD: f32 = 0.02;
const MASK_NEG: f32 = -1e9;

/// Causal decoder geometry. `max_seq_len` bounds prefix plus answer tokens
/// and sizes the decoder's positional table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderConfig {
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub max_seq_len: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            dim: 64,
            heads: 4,
            ffn_dim: 128,
            layers: 2,
            max_seq_len: 64,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.ffn_dim == 0 || self.max_seq_len == 0 {
            return Err(Error::Config(
                "decoder dims, heads, ffn and sequence length must be positive".into(),
            ));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "decoder dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}

/// One low-rank adapter bound to a row block of a base projection.
pub(crate) struct LoraSite {
    pub a: ParamId,
    pub b: ParamId,
    pub row_start: usize,
    pub rows: usize,
    pub rank: usize,
    pub alpha: f32,
}

impl LoraSite {
    fn scaling(&self) -> f32 {
        self.alpha / self.rank as f32
    }
}

struct DecBlock {
    ln1: LnP,
    attn_w: ParamId, // fused q|k|v stacked over rows, [3*dim, dim]
    attn_b: ParamId,
    proj_w: ParamId, // output projection, [dim, dim]
    proj_b: ParamId,
    ln2: LnP,
    ffn: FfnP,
    attn_sites: Vec<LoraSite>,
    proj_sites: Vec<LoraSite>,
}

/// Decoder-only stack with pre-norm blocks, a causal mask on self attention,
/// low-rank adapters on the attention projections, and a vocabulary head.
pub struct Decoder {
    pub heads: usize,
    pub emb: ParamId,
    blocks: Vec<DecBlock>,
    final_ln: LnP,
    head_w: ParamId,
    head_b: ParamId,
    merged: bool,
}

/// Final hidden states plus per-layer, per-head self-attention maps.
pub struct DecOut {
    pub hidden: TensorId,
    pub attn: Vec<Vec<TensorId>>,
}

impl Decoder {
    pub fn new(
        ps: &mut ParamSet,
        cfg: &DecoderConfig,
        lora: &LoraConfig,
        vocab: usize,
        rng: &mut SeededRng,
    ) -> Result<Decoder> {
        cfg.validate()?;
        let d = cfg.dim;
        let emb = ps.add(
            "dec.emb",
            Tensor::randn(vec![vocab, d], INIT_STD, rng),
            true,
        );
        let mut blocks = Vec::with_capacity(cfg.layers);
        for i in 0..cfg.layers {
            let p = format!("dec.block{i}");
            let ln1 = LnP::new(ps, &format!("{p}.ln1"), d);
            let attn_w = ps.add(
                format!("{p}.attn.w"),
                Tensor::randn(vec![3 * d, d], INIT_STD, rng),
                true,
            );
            let attn_b = ps.add(format!("{p}.attn.b"), Tensor::zeros(vec![3 * d]), true);
            let proj_w = ps.add(
                format!("{p}.proj.w"),
                Tensor::randn(vec![d, d], INIT_STD, rng),
                true,
            );
            let proj_b = ps.add(format!("{p}.proj.b"), Tensor::zeros(vec![d]), true);
            let ln2 = LnP::new(ps, &format!("{p}.ln2"), d);
            let ffn = FfnP::new(ps, &format!("{p}.ffn"), d, cfg.ffn_dim, rng);

            let attn_blocks: Vec<(usize, usize)> = match lora.preset {
                LoraPreset::AttnProj => vec![(0, 3 * d)],
                LoraPreset::QkvO => vec![(0, d), (d, d), (2 * d, d)],
            };
            let mut attn_sites = Vec::new();
            for (j, &(row_start, rows)) in attn_blocks.iter().enumerate() {
                attn_sites.push(make_site(
                    ps,
                    &format!("{p}.attn.lora{j}"),
                    row_start,
                    rows,
                    d,
                    lora,
                    rng,
                )?);
            }
            let proj_sites = vec![make_site(
                ps,
                &format!("{p}.proj.lora0"),
                0,
                d,
                d,
                lora,
                rng,
            )?];

            blocks.push(DecBlock {
                ln1,
                attn_w,
                attn_b,
                proj_w,
                proj_b,
                ln2,
                ffn,
                attn_sites,
                proj_sites,
            });
        }
        let final_ln = LnP::new(ps, "dec.final_ln", d);
        let head_w = ps.add(
            "dec.head.w",
            Tensor::randn(vec![vocab, d], INIT_STD, rng),
            true,
        );
        let head_b = ps.add("dec.head.b", Tensor::zeros(vec![vocab]), true);
        Ok(Decoder {
            heads: cfg.heads,
            emb,
            blocks,
            final_ln,
            head_w,
            head_b,
            merged: false,
        })
    }

    pub fn is_merged(&self) -> bool {
        self.merged
    }

    /// Run the stack over an already-embedded sequence (prefix rows plus
    /// answer token rows, positions added by the caller).
    pub fn forward(&self, tape: &mut Tape, reg: &[TensorId], x: TensorId) -> Result<DecOut> {
        let l = tape.shape(x)[0];
        if l == 0 {
            return Err(Error::BadArgument {
                op: "decoder",
                msg: "empty input sequence".into(),
            });
        }
        let d = tape.shape(x)[1];
        let dh = d / self.heads;
        let mask = causal_mask(tape, l);
        let mut h = x;
        let mut attn_maps = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let n1 = blk.ln1.apply(tape, reg, h)?;
            let qkv = self.lora_linear(tape, reg, n1, blk.attn_w, blk.attn_b, &blk.attn_sites, 3 * d)?;
            let q = tape.slice_cols(qkv, 0, d)?;
            let k = tape.slice_cols(qkv, d, d)?;
            let v = tape.slice_cols(qkv, 2 * d, d)?;
            let mut ctxs = Vec::with_capacity(self.heads);
            let mut probs = Vec::with_capacity(self.heads);
            for hd in 0..self.heads {
                let qh = tape.slice_cols(q, hd * dh, dh)?;
                let kh = tape.slice_cols(k, hd * dh, dh)?;
                let vh = tape.slice_cols(v, hd * dh, dh)?;
                let kt = tape.transpose(kh)?;
                let raw = tape.matmul(qh, kt)?;
                let scaled = tape.scale(raw, 1.0 / (dh as f32).sqrt())?;
                let masked = tape.add(scaled, mask)?;
                let pb = tape.softmax(masked)?;
                let ctx = tape.matmul(pb, vh)?;
                probs.push(pb);
                ctxs.push(ctx);
            }
            let ctx_all = tape.concat_cols(&ctxs)?;
            let o = self.lora_linear(tape, reg, ctx_all, blk.proj_w, blk.proj_b, &blk.proj_sites, d)?;
            h = tape.add(h, o)?;
            attn_maps.push(probs);
            let n2 = blk.ln2.apply(tape, reg, h)?;
            let f = blk.ffn.apply(tape, reg, n2)?;
            h = tape.add(h, f)?;
        }
        let hidden = self.final_ln.apply(tape, reg, h)?;
        Ok(DecOut {
            hidden,
            attn: attn_maps,
        })
    }

    /// Vocabulary scores for each hidden row.
    pub fn head_scores(&self, tape: &mut Tape, reg: &[TensorId], hidden: TensorId) -> Result<TensorId> {
        let wt = tape.transpose(reg[self.head_w.0])?;
        let s = tape.matmul(hidden, wt)?;
        tape.add_bias(s, reg[self.head_b.0])
    }

    /// Base projection plus the runtime low-rank path of each bound site,
    /// skipped entirely once the deltas are folded into the base weights.
    fn lora_linear(
        &self,
        tape: &mut Tape,
        reg: &[TensorId],
        x: TensorId,
        w: ParamId,
        b: ParamId,
        sites: &[LoraSite],
        out_dim: usize,
    ) -> Result<TensorId> {
        let wt = tape.transpose(reg[w.0])?;
        let mut y = tape.matmul(x, wt)?;
        if !self.merged {
            for s in sites {
                let at = tape.transpose(reg[s.a.0])?;
                let u = tape.matmul(x, at)?;
                let bt = tape.transpose(reg[s.b.0])?;
                let v = tape.matmul(u, bt)?;
                let vs = tape.scale(v, s.scaling())?;
                let placed = if s.row_start == 0 && s.rows == out_dim {
                    vs
                } else {
                    let l = tape.shape(x)[0];
                    let mut parts = Vec::new();
                    if s.row_start > 0 {
                        parts.push(tape.constant(&Tensor::zeros(vec![l, s.row_start])));
                    }
                    parts.push(vs);
                    let right = out_dim - s.row_start - s.rows;
                    if right > 0 {
                        parts.push(tape.constant(&Tensor::zeros(vec![l, right])));
                    }
                    tape.concat_cols(&parts)?
                };
                y = tape.add(y, placed)?;
            }
        }
        tape.add_bias(y, reg[b.0])
    }

    /// Fold every adapter delta into its base matrix; forwards then take the
    /// plain path. Errors when called twice.
    pub fn merge(&mut self, ps: &mut ParamSet) -> Result<()> {
        if self.merged {
            return Err(Error::BadArgument {
                op: "merge_adapters",
                msg: "adapters already merged".into(),
            });
        }
        for i in 0..self.blocks.len() {
            fold(ps, self.blocks[i].attn_w, &self.blocks[i].attn_sites, true)?;
            fold(ps, self.blocks[i].proj_w, &self.blocks[i].proj_sites, true)?;
        }
        self.merged = true;
        Ok(())
    }

    /// Subtract the deltas back out, restoring the runtime adapter path.
    pub fn unmerge(&mut self, ps: &mut ParamSet) -> Result<()> {
        if !self.merged {
            return Err(Error::BadArgument {
                op: "unmerge_adapters",
                msg: "adapters are not merged".into(),
            });
        }
        for i in 0..self.blocks.len() {
            fold(ps, self.blocks[i].attn_w, &self.blocks[i].attn_sites, false)?;
            fold(ps, self.blocks[i].proj_w, &self.blocks[i].proj_sites, false)?;
        }
        self.merged = false;
        Ok(())
    }

    /// Names of the base matrices the adapters wrap (frozen under every
    /// training policy).
    pub fn adapted_base_names(&self) -> Vec<String> {
        (0..self.blocks.len())
            .flat_map(|i| [format!("dec.block{i}.attn.w"), format!("dec.block{i}.proj.w")])
            .collect()
    }
}

fn make_site(
    ps: &mut ParamSet,
    prefix: &str,
    row_start: usize,
    rows: usize,
    input: usize,
    lora: &LoraConfig,
    rng: &mut SeededRng,
) -> Result<LoraSite> {
    let ad = LoraAdapter::init(rows, input, lora.rank, lora.alpha, rng)?;
    let a = ps.add(format!("{prefix}.a"), ad.a, true);
    let b = ps.add(format!("{prefix}.b"), ad.b, true);
    Ok(LoraSite {
        a,
        b,
        row_start,
        rows,
        rank: lora.rank,
        alpha: lora.alpha,
    })
}

fn fold(ps: &mut ParamSet, w: ParamId, sites: &[LoraSite], into: bool) -> Result<()> {
    let bound: Vec<BoundAdapter> = sites
        .iter()
        .map(|s| BoundAdapter {
            row_start: s.row_start,
            adapter: LoraAdapter {
                a: ps.tensor(s.a).clone(),
                b: ps.tensor(s.b).clone(),
                alpha: s.alpha,
            },
        })
        .collect();
    let base = ps.tensor(w).clone();
    let next = if into {
        merged_weight(&base, &bound)?
    } else {
        unmerged_weight(&base, &bound)?
    };
    ps.get_mut(w).tensor.data_mut().copy_from_slice(next.data());
    Ok(())
}

/// Additive mask constant: zero on and below the diagonal, a large negative
/// value above it so future positions get exactly zero softmax weight.
fn causal_mask(tape: &mut Tape, l: usize) -> TensorId {
    let mut m = Tensor::zeros(vec![l, l]);
    for i in 0..l {
        for j in (i + 1)..l {
            m.data_mut()[i * l + j] = MASK_NEG;
        }
    }
    tape.constant(&m)
}
