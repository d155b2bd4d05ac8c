//! Synthetic colonoscopy-style VQA dataset: rendered clips on disk, exact
//! per-frame annotations beside them, and train/test manifests of QA pairs
//! derived from clip-level majority labels. Everything downstream of the
//! seed is deterministic, so rebuilding with the same config is
//! byte-identical.

mod annotations;
mod manifest;
mod qagen;
mod scene;
mod templates;

pub use annotations::{
    clip_labels, load_annotations, majority_label, save_annotations, ClipLabels, FrameAnnotation,
    Histology, Illumination, LesionAnnotation, ScopeMotion, ScreenPos, Site, Tool,
};
pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use qagen::{generate_qa, perturb_question, QaItem, SkipNote};
pub use scene::{random_scene, render_synthetic_clip, SceneSpec};
pub use templates::{
    answer, template_by_id, template_by_question, AnswerParts, Template, TEMPLATES,
};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::video::{save_clip_dir, SamplerSpec};
use std::path::{Path, PathBuf};

const CLIP_SALT: u64 = 0x636c_6970; // "clip"
const SPLIT_SALT: u64 = 0x73_706c_6974; // "split"
const PERTURB_SALT: u64 = 0x7065_7274; // "pert"

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub n_clips: usize,
    pub train_ratio: f64,
    pub seed: u64,
    pub sampler: SamplerSpec,
    pub frame_h: usize,
    pub frame_w: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_clips: 100,
            train_ratio: 0.856,
            seed: 42,
            sampler: SamplerSpec::default(),
            frame_h: 32,
            frame_w: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSummary {
    pub n_clips: usize,
    pub n_train_clips: usize,
    pub n_test_clips: usize,
    pub n_train_items: usize,
    pub n_test_items: usize,
    pub n_out_of_template: usize,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

/// Number of clips assigned to the train split: nearest integer to
/// `ratio * n`, so 100 clips at 0.856 give 86.
pub fn train_count(n_clips: usize, train_ratio: f64) -> usize {
    (train_ratio * n_clips as f64).round() as usize
}

pub fn clip_dir_name(index: usize) -> String {
    format!("clip_{index:04}")
}

/// Build the full dataset under `dir`: `clips/clip_NNNN/` directories with
/// PNG frames, a provenance header and `annotations.json`, plus
/// `train.jsonl` / `test.jsonl` manifests. Each test clip contributes one
/// extra entry whose question is swapped for a held-out paraphrase and
/// flagged `out_of_template`.
pub fn build_dataset(dir: &Path, cfg: &DatasetConfig) -> Result<DatasetSummary> {
    if cfg.n_clips < 2 {
        return Err(Error::Config(format!(
            "need at least 2 clips to split, got {}",
            cfg.n_clips
        )));
    }
    if !(cfg.train_ratio > 0.0 && cfg.train_ratio < 1.0) {
        return Err(Error::Config(format!(
            "train ratio must lie inside (0, 1), got {}",
            cfg.train_ratio
        )));
    }
    let n_train = train_count(cfg.n_clips, cfg.train_ratio);
    if n_train == 0 || n_train >= cfg.n_clips {
        return Err(Error::Config(format!(
            "train ratio {} leaves an empty split over {} clips",
            cfg.train_ratio, cfg.n_clips
        )));
    }

    let base = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..cfg.n_clips).collect();
    base.derive(SPLIT_SALT).shuffle(&mut order);
    let mut is_train = vec![false; cfg.n_clips];
    for &clip in &order[..n_train] {
        is_train[clip] = true;
    }

    let clips_root = dir.join("clips");
    std::fs::create_dir_all(&clips_root)
        .map_err(|e| Error::io_at(clips_root.display().to_string(), e))?;

    let mut train_entries = Vec::new();
    let mut test_entries = Vec::new();
    let mut n_out_of_template = 0;
    for i in 0..cfg.n_clips {
        let mut rng = base.derive2(CLIP_SALT, i as u64);
        let spec = random_scene(&mut rng);
        let (clip, anns) = render_synthetic_clip(&spec, &cfg.sampler, cfg.frame_h, cfg.frame_w)?;
        let clip_dir = clips_root.join(clip_dir_name(i));
        save_clip_dir(&clip_dir, &clip)?;
        save_annotations(&clip_dir.join("annotations.json"), &anns)?;

        let labels = clip_labels(&anns, cfg.sampler.n_frames)?;
        let (items, _skips) = generate_qa(&labels);
        let split = if is_train[i] { "train" } else { "test" };
        let frame_paths: Vec<String> = (0..cfg.sampler.n_frames)
            .map(|k| format!("clips/{}/frame_{k:03}.png", clip_dir_name(i)))
            .collect();
        let bucket = if is_train[i] {
            &mut train_entries
        } else {
            &mut test_entries
        };
        for item in &items {
            bucket.push(ManifestEntry {
                clip_id: clip_dir_name(i),
                frame_paths: frame_paths.clone(),
                question: item.question.clone(),
                answer_short: item.answer_short.clone(),
                answer_long: item.answer_long.clone(),
                keywords: item.keywords.clone(),
                category: item.category.to_string(),
                domain: item.domain.to_string(),
                template_id: item.template_id.to_string(),
                out_of_template: false,
                split: split.to_string(),
            });
        }
        if !is_train[i] {
            let mut prng = base.derive2(PERTURB_SALT, i as u64);
            let item = &items[prng.index(items.len())];
            let question = perturb_question(&item.question, &mut prng)?;
            test_entries.push(ManifestEntry {
                clip_id: clip_dir_name(i),
                frame_paths: frame_paths.clone(),
                question,
                answer_short: item.answer_short.clone(),
                answer_long: item.answer_long.clone(),
                keywords: item.keywords.clone(),
                category: item.category.to_string(),
                domain: item.domain.to_string(),
                template_id: item.template_id.to_string(),
                out_of_template: true,
                split: "test".to_string(),
            });
            n_out_of_template += 1;
        }
    }

    let train_manifest = dir.join("train.jsonl");
    let test_manifest = dir.join("test.jsonl");
    write_manifest(&train_manifest, &train_entries)?;
    write_manifest(&test_manifest, &test_entries)?;
    Ok(DatasetSummary {
        n_clips: cfg.n_clips,
        n_train_clips: n_train,
        n_test_clips: cfg.n_clips - n_train,
        n_train_items: train_entries.len(),
        n_test_items: test_entries.len(),
        n_out_of_template,
        train_manifest,
        test_manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use std::collections::HashMap;

    fn small_cfg(seed: u64) -> DatasetConfig {
        DatasetConfig {
            n_clips: 6,
            train_ratio: 0.856,
            seed,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn split_counts_round_to_nearest() {
        assert_eq!(train_count(100, 0.856), 86);
        assert_eq!(train_count(7, 0.856), 6);
        assert_eq!(train_count(6, 0.856), 5);
        assert_eq!(train_count(2, 0.856), 2); // rejected by build_dataset
    }

    #[test]
    fn bad_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(1);
        cfg.n_clips = 1;
        assert!(build_dataset(dir.path(), &cfg).is_err());
        let mut cfg = small_cfg(1);
        cfg.train_ratio = 1.2;
        assert!(build_dataset(dir.path(), &cfg).is_err());
        let mut cfg = small_cfg(1);
        cfg.n_clips = 2;
        cfg.train_ratio = 0.9; // rounds to 2 of 2, empty test split
        assert!(build_dataset(dir.path(), &cfg).is_err());
    }

    #[test]
    fn builds_clips_manifests_and_out_of_template_entries() {
        let dir = tempfile::tempdir().unwrap();
        let summary = build_dataset(dir.path(), &small_cfg(42)).unwrap();
        assert_eq!(summary.n_train_clips, 5);
        assert_eq!(summary.n_test_clips, 1);
        assert_eq!(summary.n_out_of_template, 1);

        let train = read_manifest(&summary.train_manifest).unwrap();
        let test = read_manifest(&summary.test_manifest).unwrap();
        assert_eq!(train.len(), summary.n_train_items);
        assert_eq!(test.len(), summary.n_test_items);
        assert!(train.iter().all(|e| e.split == "train" && !e.out_of_template));
        assert!(test.iter().all(|e| e.split == "test"));
        assert_eq!(test.iter().filter(|e| e.out_of_template).count(), 1);

        for e in train.iter().chain(&test) {
            assert_eq!(e.frame_paths.len(), 8);
            for p in &e.frame_paths {
                assert!(dir.path().join(p).exists(), "{p} missing");
            }
            let toks = tokenize(&e.answer_long);
            assert!(e.keywords.iter().all(|k| toks.contains(k)));
            if e.out_of_template {
                // paraphrases never reuse a canonical question
                assert!(template_by_question(&e.question).is_none());
            } else {
                assert!(template_by_question(&e.question).is_some());
            }
        }

        let clip = crate::video::load_clip_dir(&dir.path().join("clips/clip_0000")).unwrap();
        assert_eq!(clip.frames.len(), 8);
        assert_eq!(clip.frames[0].h, 32);
    }

    #[test]
    fn manifest_agrees_with_per_frame_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let summary = build_dataset(dir.path(), &small_cfg(7)).unwrap();
        let mut by_clip: HashMap<String, Vec<ManifestEntry>> = HashMap::new();
        for e in read_manifest(&summary.train_manifest)
            .unwrap()
            .into_iter()
            .chain(read_manifest(&summary.test_manifest).unwrap())
            .filter(|e| !e.out_of_template)
        {
            by_clip.entry(e.clip_id.clone()).or_default().push(e);
        }
        assert_eq!(by_clip.len(), 6);
        for (clip_id, entries) in by_clip {
            let anns =
                load_annotations(&dir.path().join(format!("clips/{clip_id}/annotations.json")))
                    .unwrap();
            let labels = clip_labels(&anns, 8).unwrap();
            let (expected, _) = generate_qa(&labels);
            assert_eq!(entries.len(), expected.len(), "{clip_id}");
            for (e, x) in entries.iter().zip(&expected) {
                assert_eq!(e.question, x.question, "{clip_id}");
                assert_eq!(e.answer_short, x.answer_short);
                assert_eq!(e.answer_long, x.answer_long);
                assert_eq!(e.keywords, x.keywords);
                assert_eq!(e.template_id, x.template_id);
                assert_eq!(e.category, x.category);
            }
        }
    }

    fn walk_sorted(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(root).unwrap().display().to_string();
                    out.push((rel, std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn rebuilds_are_byte_identical_and_seed_sensitive() {
        let (a, b, c) = (
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
        );
        build_dataset(a.path(), &small_cfg(42)).unwrap();
        build_dataset(b.path(), &small_cfg(42)).unwrap();
        build_dataset(c.path(), &small_cfg(43)).unwrap();
        let (fa, fb, fc) = (walk_sorted(a.path()), walk_sorted(b.path()), walk_sorted(c.path()));
        assert_eq!(fa, fb);
        assert_ne!(fa, fc);
    }
}
