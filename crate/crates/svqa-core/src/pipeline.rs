//! End-to-end commands behind the CLI: dataset generation, training,
//! evaluation, single-clip prediction, the keyword-weight sweep, and the
//! gradient self-check. Each command takes a resolved [`Config`], does its
//! file I/O under the configured directories, and returns a printable
//! summary.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::{grad_check_suite, TOLERANCE};
use crate::config::Config;
use crate::data::{read_manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::metrics::{
    score_corpus, AblationReport, AblationRow, CategoryEntry, EvalReport, MetricSummary,
    SCHEMA_VERSION,
};
use crate::model::VqaModel;
use crate::rng::SeededRng;
use crate::text::{keyword_positions, Vocab};
use crate::train::{
    apply_checkpoint, file_fnv1a, load_checkpoint, save_checkpoint, train, EpochStats, TrainItem,
};
use crate::video::{load_clip_dir, Clip};

const GRADCHECK_ROUNDS: u64 = 20;

/// Build the synthetic dataset under `data_dir`.
pub fn cmd_gen_data(cfg: &Config) -> Result<String> {
    let summary = crate::data::build_dataset(Path::new(&cfg.data_dir), &cfg.dataset_config())?;
    Ok(format!(
        "clips {} (train {} / test {})\ntrain items {}\ntest items {} ({} out of template)\nwrote {}\nwrote {}\n",
        summary.n_clips,
        summary.n_train_clips,
        summary.n_test_clips,
        summary.n_train_items,
        summary.n_test_items,
        summary.n_out_of_template,
        summary.train_manifest.display(),
        summary.test_manifest.display(),
    ))
}

/// Train a fresh model on the train manifest and save a checkpoint holding
/// the weights, the resolved config, and the vocabulary.
pub fn cmd_train(cfg: &Config, mut progress: impl FnMut(&EpochStats)) -> Result<String> {
    let entries = read_nonempty_manifest(&cfg.train_manifest_path())?;
    let vocab = manifest_vocab(&entries);
    let mut model = VqaModel::new(cfg.model_config()?, vocab, cfg.seed)?;
    let clips = load_clips(Path::new(&cfg.data_dir), &entries)?;
    let items = to_train_items(&entries, &clips, &model, cfg.use_long_answer()?)?;
    let stats = train(&mut model, &items, &cfg.train_config()?, |s| progress(s))?;

    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io_at(cfg.out_dir.clone(), e))?;
    let ck = cfg.checkpoint_path();
    save_checkpoint(&ck, &model.params, &checkpoint_config_text(cfg, &model.vocab))?;
    let first = stats.first().map(|s| s.mean_loss).unwrap_or(f32::NAN);
    let last = stats.last().map(|s| s.mean_loss).unwrap_or(f32::NAN);
    Ok(format!(
        "trained {} items, vocab {} words, {} epochs\nloss {first:.4} -> {last:.4}\nwrote {} (fnv1a {:016x})\n",
        items.len(),
        model.vocab.len(),
        stats.len(),
        ck.display(),
        file_fnv1a(&ck)?,
    ))
}

/// Evaluate a checkpoint over the test manifest: generate an answer per
/// entry, score it against the reference, and write the report plus the raw
/// predictions under `out_dir`.
pub fn cmd_eval(cfg: &Config) -> Result<String> {
    let (model, stored) = load_model(&cfg.checkpoint_path())?;
    let entries = read_nonempty_manifest(&cfg.test_manifest_path())?;
    let (report, preds) = evaluate(
        &model,
        Path::new(&cfg.data_dir),
        &entries,
        cfg.max_new_tokens,
        stored.use_long_answer()?,
    )?;

    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io_at(cfg.out_dir.clone(), e))?;
    let report_path = Path::new(&cfg.out_dir).join("eval_report.json");
    std::fs::write(&report_path, report.to_json()?)
        .map_err(|e| Error::io_at(report_path.display().to_string(), e))?;
    let preds_path = Path::new(&cfg.out_dir).join("predictions.jsonl");
    write_predictions(&preds_path, &preds)?;
    Ok(format!(
        "{}\nwrote {}\nwrote {}\n",
        report.to_text(),
        report_path.display(),
        preds_path.display(),
    ))
}

/// Answer one question about one clip directory.
pub fn cmd_predict(cfg: &Config) -> Result<String> {
    if cfg.clip_dir.is_empty() || cfg.question.is_empty() {
        return Err(Error::Config(
            "predict needs --clip_dir and --question".into(),
        ));
    }
    let (model, _) = load_model(&cfg.checkpoint_path())?;
    let clip = load_clip_dir(Path::new(&cfg.clip_dir))?;
    let gen = model.generate(&clip, &cfg.question, cfg.max_new_tokens)?;
    Ok(format!(
        "question: {}\nanswer: {}\nsteps: {}\n",
        cfg.question, gen.text, gen.steps
    ))
}

/// Sweep the keyword weight over `lambda_grid`. Every run re-starts from one
/// shared initial checkpoint so rows differ only in the weight.
pub fn cmd_ablate(cfg: &Config, mut progress: impl FnMut(&str)) -> Result<String> {
    let train_entries = read_nonempty_manifest(&cfg.train_manifest_path())?;
    let eval_entries = read_nonempty_manifest(&cfg.test_manifest_path())?;
    let vocab = manifest_vocab(&train_entries);
    let long = cfg.use_long_answer()?;

    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io_at(cfg.out_dir.clone(), e))?;
    let init_model = VqaModel::new(cfg.model_config()?, vocab, cfg.seed)?;
    let init_path = Path::new(&cfg.out_dir).join("ablate_init.ckpt");
    save_checkpoint(
        &init_path,
        &init_model.params,
        &checkpoint_config_text(cfg, &init_model.vocab),
    )?;
    let init_hash = format!("{:016x}", file_fnv1a(&init_path)?);
    let init_ck = load_checkpoint(&init_path)?;

    let clips = load_clips(Path::new(&cfg.data_dir), &train_entries)?;
    let items = to_train_items(&train_entries, &clips, &init_model, long)?;
    let base_tc = cfg.train_config()?;

    let mut rows = Vec::with_capacity(cfg.lambda_grid.len());
    for &lambda in &cfg.lambda_grid {
        let mut model = VqaModel::new(cfg.model_config()?, init_model.vocab.clone(), cfg.seed)?;
        apply_checkpoint(&mut model.params, &init_ck)?;
        let mut tc = base_tc.clone();
        tc.lambda = lambda;
        let stats = train(&mut model, &items, &tc, |_| {})?;
        let (report, _) = evaluate(
            &model,
            Path::new(&cfg.data_dir),
            &eval_entries,
            cfg.max_new_tokens,
            long,
        )?;
        progress(&format!(
            "lambda {lambda}: loss {:.4}, bleu4 {:.2}, kacc {:.2}",
            stats.last().map(|s| s.mean_loss).unwrap_or(f32::NAN),
            report.overall.bleu4,
            report.overall.kacc,
        ));
        rows.push(AblationRow {
            lambda: lambda as f64,
            metrics: report.overall,
        });
    }

    let report = AblationReport {
        schema_version: SCHEMA_VERSION,
        init_checkpoint_hash: init_hash,
        n_train: items.len(),
        n_eval: eval_entries.len(),
        epochs: base_tc.epochs,
        rows,
    };
    let path = Path::new(&cfg.out_dir).join("ablation.json");
    std::fs::write(&path, report.to_json()?)
        .map_err(|e| Error::io_at(path.display().to_string(), e))?;
    Ok(format!("{}\nwrote {}\n", report.to_text(), path.display()))
}

/// Run the randomized gradient check suite over every differentiable op,
/// several seeds per op, and fail if any error exceeds the tolerance.
pub fn cmd_gradcheck(cfg: &Config) -> Result<String> {
    let mut worst: BTreeMap<&'static str, f32> = BTreeMap::new();
    for round in 0..GRADCHECK_ROUNDS {
        let rng = SeededRng::new(cfg.seed).derive(round);
        for (op, err) in grad_check_suite(&rng)? {
            let w = worst.entry(op).or_insert(0.0);
            *w = w.max(err);
        }
    }
    let mut out = format!(
        "{} rounds per op, tolerance {TOLERANCE:.1e}\n",
        GRADCHECK_ROUNDS
    );
    for (op, err) in &worst {
        out.push_str(&format!("{op:<14} max rel err {err:.3e}\n"));
    }
    if let Some((op, err)) = worst.iter().max_by(|a, b| a.1.total_cmp(b.1)) {
        if *err > TOLERANCE {
            return Err(Error::GradCheckFailed {
                op: op.to_string(),
                err: *err,
            });
        }
        out.push_str(&format!("worst {op} at {err:.3e}: ok\n"));
    }
    Ok(out)
}

/// Rebuild a model from a checkpoint: the stored config text fixes the
/// architecture and vocabulary, then the saved tensors overwrite the fresh
/// initialization.
pub fn load_model(path: &Path) -> Result<(VqaModel, Config)> {
    let ck = load_checkpoint(path)?;
    let mut cfg = Config::default();
    let mut vocab = None;
    for line in ck.config_text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Checkpoint(format!("bad config line in checkpoint: {line:?}"))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k == "vocab" {
            vocab = Some(Vocab::from_line(v)?);
        } else {
            cfg.apply(k, v)?;
        }
    }
    let vocab =
        vocab.ok_or_else(|| Error::Checkpoint("checkpoint config lacks a vocab line".into()))?;
    let mut model = VqaModel::new(cfg.model_config()?, vocab, cfg.seed)?;
    apply_checkpoint(&mut model.params, &ck)?;
    Ok((model, cfg))
}

/// Configuration text embedded in a checkpoint. Host paths and one-shot
/// prediction inputs are reset to defaults so a checkpoint depends only on
/// the model architecture and training recipe, not on where it was produced.
fn checkpoint_config_text(cfg: &Config, vocab: &Vocab) -> String {
    let defaults = Config::default();
    let mut stored = cfg.clone();
    stored.out_dir = defaults.out_dir;
    stored.data_dir = defaults.data_dir;
    stored.train_manifest = defaults.train_manifest;
    stored.test_manifest = defaults.test_manifest;
    stored.checkpoint = defaults.checkpoint;
    stored.clip_dir = defaults.clip_dir;
    stored.question = defaults.question;
    format!("{}vocab = {}\n", stored.to_text(), vocab.to_line())
}

fn read_nonempty_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let entries = read_manifest(path)?;
    if entries.is_empty() {
        return Err(Error::Dataset(format!("{}: no entries", path.display())));
    }
    Ok(entries)
}

/// Vocabulary over everything the model must read or produce at train time.
fn manifest_vocab(entries: &[ManifestEntry]) -> Vocab {
    Vocab::build(entries.iter().flat_map(|e| {
        [
            e.question.as_str(),
            e.answer_long.as_str(),
            e.answer_short.as_str(),
        ]
    }))
}

/// Load each referenced clip directory once, keyed by clip id.
fn load_clips(root: &Path, entries: &[ManifestEntry]) -> Result<HashMap<String, Clip>> {
    let mut clips = HashMap::new();
    for e in entries {
        if !clips.contains_key(&e.clip_id) {
            let dir = root.join("clips").join(&e.clip_id);
            clips.insert(e.clip_id.clone(), load_clip_dir(&dir)?);
        }
    }
    Ok(clips)
}

fn reference_answer(entry: &ManifestEntry, long: bool) -> &str {
    if long {
        &entry.answer_long
    } else {
        &entry.answer_short
    }
}

fn to_train_items(
    entries: &[ManifestEntry],
    clips: &HashMap<String, Clip>,
    model: &VqaModel,
    long: bool,
) -> Result<Vec<TrainItem>> {
    let max_q = model.config.encoder.max_question_len;
    entries
        .iter()
        .map(|e| {
            let mut question_ids = model.vocab.encode(&e.question)?;
            question_ids.truncate(max_q);
            let answer_ids = model.vocab.encode(reference_answer(e, long))?;
            let kw_ids: Vec<Vec<usize>> = e
                .keywords
                .iter()
                .map(|k| model.vocab.encode(k))
                .collect::<Result<_>>()?;
            let keyword_flags = keyword_positions(&answer_ids, &kw_ids);
            Ok(TrainItem {
                clip: clips[&e.clip_id].clone(),
                question_ids,
                answer_ids,
                keyword_flags,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
struct PredRecord {
    clip_id: String,
    question: String,
    prediction: String,
    reference: String,
}

fn write_predictions(path: &Path, preds: &[PredRecord]) -> Result<()> {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path.display().to_string(), e))
}

/// Generate and score every entry; group scores by question category.
fn evaluate(
    model: &VqaModel,
    root: &Path,
    entries: &[ManifestEntry],
    max_new_tokens: usize,
    long: bool,
) -> Result<(EvalReport, Vec<PredRecord>)> {
    let clips = load_clips(root, entries)?;
    let mut preds = Vec::with_capacity(entries.len());
    for e in entries {
        let gen = model.generate(&clips[&e.clip_id], &e.question, max_new_tokens)?;
        preds.push(PredRecord {
            clip_id: e.clip_id.clone(),
            question: e.question.clone(),
            prediction: gen.text,
            reference: reference_answer(e, long).to_string(),
        });
    }

    let overall = score_corpus(entries.iter().zip(&preds).map(|(e, p)| {
        (
            p.prediction.as_str(),
            p.reference.as_str(),
            e.keywords.as_slice(),
        )
    }));
    let mut per_category = BTreeMap::new();
    let mut cats: Vec<&str> = entries.iter().map(|e| e.category.as_str()).collect();
    cats.sort_unstable();
    cats.dedup();
    for cat in cats {
        let scores = score_corpus(
            entries
                .iter()
                .zip(&preds)
                .filter(|(e, _)| e.category == cat)
                .map(|(e, p)| {
                    (
                        p.prediction.as_str(),
                        p.reference.as_str(),
                        e.keywords.as_slice(),
                    )
                }),
        );
        per_category.insert(
            cat.to_string(),
            CategoryEntry {
                n_items: scores.n,
                metrics: MetricSummary::from(scores),
            },
        );
    }

    let mut splits: Vec<&str> = entries.iter().map(|e| e.split.as_str()).collect();
    splits.sort_unstable();
    splits.dedup();
    let split = if splits.len() == 1 { splits[0] } else { "mixed" };
    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        split: split.to_string(),
        n_items: entries.len(),
        overall: MetricSummary::from(overall),
        per_category,
    };
    Ok((report, preds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcheck_command_reports_every_op() {
        let mut cfg = Config::default();
        cfg.seed = 5;
        let out = cmd_gradcheck(&cfg).unwrap();
        assert!(out.contains("matmul"), "{out}");
        assert!(out.contains("ok"), "{out}");
    }

    #[test]
    fn predict_requires_clip_and_question() {
        let cfg = Config::default();
        assert!(matches!(cmd_predict(&cfg), Err(Error::Config(_))));
    }
}
