//! Flat run configuration. Values come from built-in defaults, then an
//! optional `key = value` config file, then `--key value` command line
//! overrides, in that order. `to_text` echoes the fully resolved
//! configuration in a form `apply_file` reads back unchanged.

use crate::data::DatasetConfig;
use crate::error::{Error, Result};
use crate::model::{DecoderConfig, EncoderConfig, LoraConfig, LoraPreset, ModelConfig};
use crate::train::{FreezePolicy, LossKind, TrainConfig};
use crate::video::{CubeDims, SamplerSpec};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub out_dir: String,
    pub data_dir: String,
    pub train_manifest: String,
    pub test_manifest: String,
    pub checkpoint: String,
    pub n_clips: usize,
    pub train_ratio: f64,
    pub n_frames: usize,
    pub stride: usize,
    pub fps: f32,
    pub frame_h: usize,
    pub frame_w: usize,
    pub cube_t: usize,
    pub cube_h: usize,
    pub cube_w: usize,
    pub embed_dim: usize,
    pub n_heads: usize,
    pub video_layers: usize,
    pub text_layers: usize,
    pub ffn_dim: usize,
    pub max_question_len: usize,
    pub decoder_layers: usize,
    pub decoder_heads: usize,
    pub decoder_ffn: usize,
    pub max_seq_len: usize,
    pub max_new_tokens: usize,
    pub lora_rank: usize,
    pub lora_alpha: f32,
    pub lora_targets: String,
    pub mask_ratio: f32,
    pub train_masking: bool,
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub lambda: f32,
    pub lambda_grid: Vec<f32>,
    pub loss: String,
    pub freeze: String,
    pub answer_kind: String,
    pub question: String,
    pub clip_dir: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            out_dir: "out".into(),
            data_dir: "data".into(),
            train_manifest: String::new(),
            test_manifest: String::new(),
            checkpoint: String::new(),
            n_clips: 100,
            train_ratio: 0.856,
            n_frames: 8,
            stride: 4,
            fps: 30.0,
            frame_h: 32,
            frame_w: 32,
            cube_t: 2,
            cube_h: 16,
            cube_w: 16,
            embed_dim: 64,
            n_heads: 4,
            video_layers: 2,
            text_layers: 2,
            ffn_dim: 128,
            max_question_len: 16,
            decoder_layers: 2,
            decoder_heads: 4,
            decoder_ffn: 128,
            max_seq_len: 64,
            max_new_tokens: 12,
            lora_rank: 8,
            lora_alpha: 16.0,
            lora_targets: "attn-proj".into(),
            mask_ratio: 0.75,
            train_masking: true,
            epochs: 60,
            lr: 3e-4,
            batch_size: 8,
            lambda: 1.0,
            lambda_grid: vec![1.0, 2.0, 5.0, 10.0, 25.0, 50.0],
            loss: "wbce".into(),
            freeze: "full".into(),
            answer_kind: "long".into(),
            question: String::new(),
            clip_dir: String::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {v:?}: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {v:?}"
        ))),
    }
}

impl Config {
    /// Set one key from its text form. Unknown keys are errors so typos in
    /// config files or flags fail loudly.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = value.into(),
            "data_dir" => self.data_dir = value.into(),
            "train_manifest" => self.train_manifest = value.into(),
            "test_manifest" => self.test_manifest = value.into(),
            "checkpoint" => self.checkpoint = value.into(),
            "n_clips" => self.n_clips = parse(key, value)?,
            "train_ratio" => self.train_ratio = parse(key, value)?,
            "n_frames" => self.n_frames = parse(key, value)?,
            "stride" => self.stride = parse(key, value)?,
            "fps" => self.fps = parse(key, value)?,
            "frame_h" => self.frame_h = parse(key, value)?,
            "frame_w" => self.frame_w = parse(key, value)?,
            "cube_t" => self.cube_t = parse(key, value)?,
            "cube_h" => self.cube_h = parse(key, value)?,
            "cube_w" => self.cube_w = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "n_heads" => self.n_heads = parse(key, value)?,
            "video_layers" => self.video_layers = parse(key, value)?,
            "text_layers" => self.text_layers = parse(key, value)?,
            "ffn_dim" => self.ffn_dim = parse(key, value)?,
            "max_question_len" => self.max_question_len = parse(key, value)?,
            "decoder_layers" => self.decoder_layers = parse(key, value)?,
            "decoder_heads" => self.decoder_heads = parse(key, value)?,
            "decoder_ffn" => self.decoder_ffn = parse(key, value)?,
            "max_seq_len" => self.max_seq_len = parse(key, value)?,
            "max_new_tokens" => self.max_new_tokens = parse(key, value)?,
            "lora_rank" => self.lora_rank = parse(key, value)?,
            "lora_alpha" => self.lora_alpha = parse(key, value)?,
            "lora_targets" => self.lora_targets = value.into(),
            "mask_ratio" => self.mask_ratio = parse(key, value)?,
            "train_masking" => self.train_masking = parse_bool(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "lambda_grid" => {
                let grid: Result<Vec<f32>> = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect();
                let grid = grid?;
                if grid.is_empty() {
                    return Err(Error::Config("lambda_grid: empty list".into()));
                }
                self.lambda_grid = grid;
            }
            "loss" => self.loss = value.into(),
            "freeze" => self.freeze = value.into(),
            "answer_kind" => self.answer_kind = value.into(),
            "question" => self.question = value.into(),
            "clip_dir" => self.clip_dir = value.into(),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Layer a `key = value` file over the current values. `#` starts a
    /// full-line comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io_at(path.display().to_string(), e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key = value", path.display(), i + 1))
            })?;
            self.apply(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Echo every key in a fixed order, readable back via [`apply_file`].
    pub fn to_text(&self) -> String {
        let grid = self
            .lambda_grid
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("seed", self.seed.to_string());
        put("out_dir", self.out_dir.clone());
        put("data_dir", self.data_dir.clone());
        put("train_manifest", self.train_manifest.clone());
        put("test_manifest", self.test_manifest.clone());
        put("checkpoint", self.checkpoint.clone());
        put("n_clips", self.n_clips.to_string());
        put("train_ratio", self.train_ratio.to_string());
        put("n_frames", self.n_frames.to_string());
        put("stride", self.stride.to_string());
        put("fps", self.fps.to_string());
        put("frame_h", self.frame_h.to_string());
        put("frame_w", self.frame_w.to_string());
        put("cube_t", self.cube_t.to_string());
        put("cube_h", self.cube_h.to_string());
        put("cube_w", self.cube_w.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("n_heads", self.n_heads.to_string());
        put("video_layers", self.video_layers.to_string());
        put("text_layers", self.text_layers.to_string());
        put("ffn_dim", self.ffn_dim.to_string());
        put("max_question_len", self.max_question_len.to_string());
        put("decoder_layers", self.decoder_layers.to_string());
        put("decoder_heads", self.decoder_heads.to_string());
        put("decoder_ffn", self.decoder_ffn.to_string());
        put("max_seq_len", self.max_seq_len.to_string());
        put("max_new_tokens", self.max_new_tokens.to_string());
        put("lora_rank", self.lora_rank.to_string());
        put("lora_alpha", self.lora_alpha.to_string());
        put("lora_targets", self.lora_targets.clone());
        put("mask_ratio", self.mask_ratio.to_string());
        put("train_masking", self.train_masking.to_string());
        put("epochs", self.epochs.to_string());
        put("lr", self.lr.to_string());
        put("batch_size", self.batch_size.to_string());
        put("lambda", self.lambda.to_string());
        put("lambda_grid", grid);
        put("loss", self.loss.clone());
        put("freeze", self.freeze.clone());
        put("answer_kind", self.answer_kind.clone());
        put("question", self.question.clone());
        put("clip_dir", self.clip_dir.clone());
        s
    }

    pub fn train_manifest_path(&self) -> PathBuf {
        if self.train_manifest.is_empty() {
            Path::new(&self.data_dir).join("train.jsonl")
        } else {
            PathBuf::from(&self.train_manifest)
        }
    }

    pub fn test_manifest_path(&self) -> PathBuf {
        if self.test_manifest.is_empty() {
            Path::new(&self.data_dir).join("test.jsonl")
        } else {
            PathBuf::from(&self.test_manifest)
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        if self.checkpoint.is_empty() {
            Path::new(&self.out_dir).join("model.ckpt")
        } else {
            PathBuf::from(&self.checkpoint)
        }
    }

    pub fn sampler(&self) -> SamplerSpec {
        SamplerSpec {
            n_frames: self.n_frames,
            stride: self.stride,
            fps: self.fps,
        }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n_clips: self.n_clips,
            train_ratio: self.train_ratio,
            seed: self.seed,
            sampler: self.sampler(),
            frame_h: self.frame_h,
            frame_w: self.frame_w,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            n_frames: self.n_frames,
            frame_h: self.frame_h,
            frame_w: self.frame_w,
            cube: CubeDims {
                t: self.cube_t,
                h: self.cube_h,
                w: self.cube_w,
            },
            encoder: EncoderConfig {
                dim: self.embed_dim,
                heads: self.n_heads,
                ffn_dim: self.ffn_dim,
                video_layers: self.video_layers,
                text_layers: self.text_layers,
                max_question_len: self.max_question_len,
            },
            decoder: DecoderConfig {
                dim: self.embed_dim,
                heads: self.decoder_heads,
                ffn_dim: self.decoder_ffn,
                layers: self.decoder_layers,
                max_seq_len: self.max_seq_len,
            },
            lora: LoraConfig {
                rank: self.lora_rank,
                alpha: self.lora_alpha,
                preset: LoraPreset::parse(&self.lora_targets)?,
            },
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            lambda: self.lambda,
            loss: LossKind::parse(&self.loss)?,
            mask_ratio: self.mask_ratio,
            train_masking: self.train_masking,
            freeze: FreezePolicy::parse(&self.freeze)?,
            seed: self.seed,
        })
    }

    /// Whether training and evaluation target the long sentence answer
    /// (`long`) or the short form (`short`).
    pub fn use_long_answer(&self) -> Result<bool> {
        match self.answer_kind.as_str() {
            "long" => Ok(true),
            "short" => Ok(false),
            other => Err(Error::Config(format!(
                "answer_kind: expected long or short, got {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_echo_round_trips_through_apply_file() {
        let mut cfg = Config::default();
        cfg.apply("lambda", "5").unwrap();
        cfg.apply("question", "Is flushing performed during this clip?")
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, cfg.to_text()).unwrap();
        let mut back = Config::default();
        back.apply_file(&path).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn file_then_flag_layering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nepochs = 10\nlr = 0.001\n").unwrap();
        let mut cfg = Config::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.epochs, 10);
        cfg.apply("epochs", "3").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert!((cfg.lr - 0.001).abs() < 1e-9);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        let mut cfg = Config::default();
        let err = cfg.apply("epoch", "10").unwrap_err().to_string();
        assert!(err.contains("epoch"), "{err}");
        assert!(cfg.apply("epochs", "ten").is_err());
        assert!(cfg.apply("train_masking", "yes").is_err());
        assert!(cfg.apply("lambda_grid", "1,two").is_err());
    }

    #[test]
    fn grid_parsing_and_derived_paths() {
        let mut cfg = Config::default();
        cfg.apply("lambda_grid", "1, 2, 5").unwrap();
        assert_eq!(cfg.lambda_grid, vec![1.0, 2.0, 5.0]);
        assert_eq!(
            cfg.train_manifest_path(),
            Path::new("data").join("train.jsonl")
        );
        cfg.apply("train_manifest", "elsewhere/t.jsonl").unwrap();
        assert_eq!(cfg.train_manifest_path(), Path::new("elsewhere/t.jsonl"));
        assert_eq!(cfg.checkpoint_path(), Path::new("out").join("model.ckpt"));
    }

    #[test]
    fn conversions_build_the_nested_configs() {
        let cfg = Config::default();
        let m = cfg.model_config().unwrap();
        assert_eq!(m.encoder.dim, 64);
        assert_eq!(m.cube.h, 16);
        assert_eq!(m.decoder.max_seq_len, 64);
        let t = cfg.train_config().unwrap();
        assert_eq!(t.epochs, 60);
        assert!(cfg.use_long_answer().unwrap());

        let mut bad = Config::default();
        bad.apply("freeze", "bogus").unwrap();
        assert!(bad.train_config().is_err());
        bad.apply("lora_targets", "everything").unwrap();
        assert!(bad.model_config().is_err());
    }
}
