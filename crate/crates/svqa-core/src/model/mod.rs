//! The video question answering model: cube-embedded video tokens run
//! through a self-attention encoder, question tokens attend over the video
//! features by cross attention, and the fused sequence becomes the prefix of
//! a causal decoder whose attention projections carry low-rank adapters.

mod decoder;
mod encoder;
mod lora;

pub use decoder::{DecOut, Decoder, DecoderConfig};
pub use encoder::{EncoderConfig, FusionOut, TextEncoder, VideoEncoder};
pub use lora::{
    lora_forward_raw, merged_weight, unmerged_weight, BoundAdapter, LoraAdapter, LoraConfig,
    LoraPreset,
};

use crate::autograd::{ParamSet, Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::text::{Vocab, EOS};
use crate::video::{
    cube_pixels, sinusoidal_positions, visible_token_rows, Clip, CubeDims, TubeMask,
};

/// Everything that fixes the model's shape. Vocabulary size comes from the
/// dataset and is supplied separately.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub n_frames: usize,
    pub frame_h: usize,
    pub frame_w: usize,
    pub cube: CubeDims,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub lora: LoraConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_frames: 8,
            frame_h: 32,
            frame_w: 32,
            cube: CubeDims::default(),
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            lora: LoraConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.encoder.dim != self.decoder.dim {
            return Err(Error::Config(format!(
                "encoder dim {} must match decoder dim {} (fused tokens become the decoder prefix)",
                self.encoder.dim, self.decoder.dim
            )));
        }
        for (axis, len, cube) in [
            ("time", self.n_frames, self.cube.t),
            ("height", self.frame_h, self.cube.h),
            ("width", self.frame_w, self.cube.w),
        ] {
            if cube == 0 || len == 0 || len % cube != 0 {
                return Err(Error::Divisibility { axis, len, cube });
            }
        }
        if self.encoder.max_question_len + 1 > self.decoder.max_seq_len {
            return Err(Error::Config(format!(
                "max_seq_len {} leaves no room for answers after a {}-token question",
                self.decoder.max_seq_len, self.encoder.max_question_len
            )));
        }
        Ok(())
    }

    /// Token grid extents (temporal, vertical, horizontal).
    pub fn token_grid(&self) -> (usize, usize, usize) {
        (
            self.n_frames / self.cube.t,
            self.frame_h / self.cube.h,
            self.frame_w / self.cube.w,
        )
    }

    pub fn n_tokens(&self) -> usize {
        let (t, h, w) = self.token_grid();
        t * h * w
    }
}

/// One generated answer: token ids (without the end marker), the decoded
/// text, and how many decoding steps ran.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub ids: Vec<usize>,
    pub text: String,
    pub steps: usize,
}

pub struct VqaModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
    pub video: VideoEncoder,
    pub text: TextEncoder,
    pub decoder: Decoder,
    posenc_video: Tensor,
    posenc_text: Tensor,
    posenc_dec: Tensor,
}

impl VqaModel {
    /// Build a freshly initialized model. The same (config, vocab, seed)
    /// triple always produces bit-identical parameters.
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<VqaModel> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::Config("empty vocabulary".into()));
        }
        let mut rng = SeededRng::new(seed);
        let mut params = ParamSet::new();
        let video = VideoEncoder::new(&mut params, &config.encoder, config.cube.pixel_count(), &mut rng);
        let text = TextEncoder::new(&mut params, &config.encoder, vocab.len(), &mut rng);
        let decoder = Decoder::new(&mut params, &config.decoder, &config.lora, vocab.len(), &mut rng)?;
        let d = config.encoder.dim;
        let posenc_video = sinusoidal_positions(config.n_tokens(), d);
        let posenc_text = sinusoidal_positions(config.encoder.max_question_len, d);
        let posenc_dec = sinusoidal_positions(config.decoder.max_seq_len, d);
        Ok(VqaModel {
            config,
            vocab,
            params,
            video,
            text,
            decoder,
            posenc_video,
            posenc_text,
            posenc_dec,
        })
    }

    /// Cube-embed a clip and run the video encoder. Position codes are added
    /// to the full token grid first; when a tube mask is given, only the
    /// surviving rows (with their true positions) enter the encoder.
    pub fn encode_video(
        &self,
        tape: &mut Tape,
        reg: &[TensorId],
        clip: &Clip,
        mask: Option<&TubeMask>,
    ) -> Result<TensorId> {
        if clip.frames.len() != self.config.n_frames
            || clip.frame_h() != self.config.frame_h
            || clip.frame_w() != self.config.frame_w
        {
            return Err(Error::BadArgument {
                op: "encode_video",
                msg: format!(
                    "clip geometry {}x{}x{} does not match configured {}x{}x{}",
                    clip.frames.len(),
                    clip.frame_h(),
                    clip.frame_w(),
                    self.config.n_frames,
                    self.config.frame_h,
                    self.config.frame_w
                ),
            });
        }
        let pixels = cube_pixels(clip, &self.config.cube)?;
        let px = tape.constant(&pixels);
        let pt = tape.transpose(reg[self.video.patch.0])?;
        let proj = tape.matmul(px, pt)?;
        let pos = tape.constant(&self.posenc_video);
        let mut x = tape.add(proj, pos)?;
        if let Some(m) = mask {
            let (t_grid, h_grid, w_grid) = self.config.token_grid();
            if m.h_grid != h_grid || m.w_grid != w_grid {
                return Err(Error::BadArgument {
                    op: "encode_video",
                    msg: format!(
                        "mask grid {}x{} does not match token grid {}x{}",
                        m.h_grid, m.w_grid, h_grid, w_grid
                    ),
                });
            }
            let rows = visible_token_rows(m, t_grid);
            x = tape.gather_rows(x, &rows)?;
        }
        self.video.forward(tape, reg, x)
    }

    /// Encode the question and fuse it with video features by cross
    /// attention. Question length is capped by the configured maximum.
    pub fn fuse(
        &self,
        tape: &mut Tape,
        reg: &[TensorId],
        question_ids: &[usize],
        video_feats: TensorId,
    ) -> Result<FusionOut> {
        let max = self.config.encoder.max_question_len;
        if question_ids.len() > max {
            return Err(Error::BadArgument {
                op: "fuse",
                msg: format!("question has {} tokens, limit is {max}", question_ids.len()),
            });
        }
        let pos = pos_rows(tape, &self.posenc_text, question_ids.len())?;
        self.text.forward(tape, reg, question_ids, pos, video_feats)
    }

    /// Teacher-forced decoder pass: the fused question rows form the prefix,
    /// the gold answer tokens follow, and the readout is the score row that
    /// predicts each answer token plus the end marker. Shape (n+1) x vocab.
    pub fn answer_scores(
        &self,
        tape: &mut Tape,
        reg: &[TensorId],
        fused: TensorId,
        answer_ids: &[usize],
    ) -> Result<TensorId> {
        let p = tape.shape(fused)[0];
        let n = answer_ids.len();
        let total = p + n;
        if total > self.config.decoder.max_seq_len {
            return Err(Error::BadArgument {
                op: "answer_scores",
                msg: format!(
                    "prefix {p} plus {n} answer tokens exceeds max_seq_len {}",
                    self.config.decoder.max_seq_len
                ),
            });
        }
        let seq = if n == 0 {
            fused
        } else {
            let emb = tape.embed(reg[self.decoder.emb.0], answer_ids)?;
            tape.concat_rows(&[fused, emb])?
        };
        let pos = pos_rows(tape, &self.posenc_dec, total)?;
        let x = tape.add(seq, pos)?;
        let out = self.decoder.forward(tape, reg, x)?;
        let readout = tape.slice_rows(out.hidden, p - 1, n + 1)?;
        self.decoder.head_scores(tape, reg, readout)
    }

    /// Greedy decoding: repeatedly rebuild the forward pass, take the
    /// highest-scoring token (lowest id on exact ties), stop at the end
    /// marker or after `max_new_tokens` tokens.
    pub fn generate(&self, clip: &Clip, question: &str, max_new_tokens: usize) -> Result<Generated> {
        let mut q_ids = self.vocab.encode(question)?;
        q_ids.truncate(self.config.encoder.max_question_len);
        let budget = max_new_tokens.min(
            self.config
                .decoder
                .max_seq_len
                .saturating_sub(q_ids.len() + 1),
        );
        let mut ids: Vec<usize> = Vec::new();
        let mut steps = 0;
        loop {
            let mut tape = Tape::new();
            let reg = self.params.register_frozen(&mut tape);
            let vf = self.encode_video(&mut tape, &reg, clip, None)?;
            let fused = self.fuse(&mut tape, &reg, &q_ids, vf)?;
            let scores = self.answer_scores(&mut tape, &reg, fused.fused, &ids)?;
            let v = self.vocab.len();
            let row = &tape.value(scores)[ids.len() * v..(ids.len() + 1) * v];
            let tok = argmax(row);
            steps += 1;
            if tok == EOS || ids.len() >= budget {
                break;
            }
            ids.push(tok);
            if ids.len() >= budget {
                break;
            }
        }
        let text = self.vocab.decode(&ids)?;
        Ok(Generated { ids, text, steps })
    }

    pub fn merge_adapters(&mut self) -> Result<()> {
        self.decoder.merge(&mut self.params)
    }

    pub fn unmerge_adapters(&mut self) -> Result<()> {
        self.decoder.unmerge(&mut self.params)
    }

    pub fn adapters_merged(&self) -> bool {
        self.decoder.is_merged()
    }
}

/// First `rows` rows of a fixed position table as an on-tape constant.
fn pos_rows(tape: &mut Tape, table: &Tensor, rows: usize) -> Result<TensorId> {
    let d = table.shape()[1];
    tape.constant_from(vec![rows, d], table.data()[..rows * d].to_vec())
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
