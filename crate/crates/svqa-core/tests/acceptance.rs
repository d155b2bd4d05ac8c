//! System acceptance checks. Each criterion prints exactly one PASS/FAIL
//! line (visible with `--nocapture`); the test fails if any criterion does.
//!
//! Run: `cargo test --test acceptance -- --nocapture`

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use svqa_core::autograd::{grad_check_suite, Tape, Tensor, TOLERANCE};
use svqa_core::config::Config;
use svqa_core::data::{build_dataset, read_manifest, DatasetConfig, ManifestEntry};
use svqa_core::error::Result;
use svqa_core::metrics::{score_corpus, score_pair, validate_ablation_json};
use svqa_core::model::VqaModel;
use svqa_core::pipeline::{cmd_ablate, cmd_eval, cmd_gen_data, cmd_train};
use svqa_core::rng::SeededRng;
use svqa_core::text::{keyword_positions, tokenize, Vocab};
use svqa_core::train::{answer_targets, file_fnv1a, sequence_loss, train, FreezePolicy, LossKind, TrainConfig, TrainItem};
use svqa_core::video::{load_clip_dir, make_tube_mask, sample_clip, visible_token_rows, Frame, SamplerSpec};

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(svqa_core::Error::Config(format!($($msg)*)));
        }
    };
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Result<String>>)> = vec![
        ("C01 gradient suite", Box::new(c01_gradients)),
        ("C02 tube masking", Box::new(c02_tube_mask)),
        ("C03 weighted loss identities", Box::new(c03_loss_identities)),
        ("C04 clip sampling window", Box::new(c04_clip_sampling)),
        ("C05 low-rank adapters", Box::new(c05_lora)),
        ("C06 metric golden values", Box::new(c06_metric_goldens)),
        ("C07 train-set overfit", Box::new(c07_overfit)),
        ("C08 keyword-weight sweep", Box::new(c08_ablation)),
        ("C09 bitwise reproducibility", Box::new(c09_reproducibility)),
        ("C10 dataset statistics", Box::new(c10_dataset_stats)),
    ];

    let mut failures = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(e) => {
                println!("[FAIL] {name}: {e}");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

// ---------------------------------------------------------------- helpers

fn default_model(entries: &[ManifestEntry], seed: u64) -> Result<VqaModel> {
    let vocab = Vocab::build(entries.iter().flat_map(|e| {
        [
            e.question.as_str(),
            e.answer_long.as_str(),
            e.answer_short.as_str(),
        ]
    }));
    VqaModel::new(Config::default().model_config()?, vocab, seed)
}

fn items_from_entries(
    root: &Path,
    entries: &[ManifestEntry],
    model: &VqaModel,
) -> Result<Vec<TrainItem>> {
    let mut clips = HashMap::new();
    for e in entries {
        if !clips.contains_key(&e.clip_id) {
            clips.insert(
                e.clip_id.clone(),
                load_clip_dir(&root.join("clips").join(&e.clip_id))?,
            );
        }
    }
    entries
        .iter()
        .map(|e| {
            let mut question_ids = model.vocab.encode(&e.question)?;
            question_ids.truncate(model.config.encoder.max_question_len);
            let answer_ids = model.vocab.encode(&e.answer_long)?;
            let kw: Vec<Vec<usize>> = e
                .keywords
                .iter()
                .map(|k| model.vocab.encode(k))
                .collect::<Result<_>>()?;
            let keyword_flags = keyword_positions(&answer_ids, &kw);
            Ok(TrainItem {
                clip: clips[&e.clip_id].clone(),
                question_ids,
                answer_ids,
                keyword_flags,
            })
        })
        .collect()
}

fn forward_scores(model: &VqaModel, clip: &svqa_core::video::Clip) -> Result<Vec<f32>> {
    let mut tape = Tape::new();
    let reg = model.params.register_frozen(&mut tape);
    let vf = model.encode_video(&mut tape, &reg, clip, None)?;
    let fused = model.fuse(&mut tape, &reg, &[4, 9, 5], vf)?;
    let scores = model.answer_scores(&mut tape, &reg, fused.fused, &[6, 7, 8])?;
    Ok(tape.value(scores).to_vec())
}

fn test_clip(seed: u64) -> svqa_core::video::Clip {
    let mut rng = SeededRng::new(seed);
    let frames: Vec<Frame> = (0..8)
        .map(|_| {
            let bytes: Vec<u8> = (0..32 * 32 * 3).map(|_| rng.index(256) as u8).collect();
            Frame::from_u8(32, 32, &bytes).unwrap()
        })
        .collect();
    svqa_core::video::Clip::from_frames(frames)
}

// ---------------------------------------------------------------- criteria

/// Analytic gradients of every differentiable op agree with central
/// differences to better than the shared tolerance, across 20 seed rounds.
fn c01_gradients() -> Result<String> {
    let t0 = Instant::now();
    let mut worst = 0.0f32;
    let mut worst_op = "";
    for round in 0..20u64 {
        let rng = SeededRng::new(0xACC).derive(round);
        for (op, err) in grad_check_suite(&rng)? {
            if err > worst {
                worst = err;
                worst_op = op;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(worst < TOLERANCE, "worst {worst_op} error {worst:.2e} >= {TOLERANCE:.0e}");
    ensure!(secs < 120.0, "suite took {secs:.0}s, budget 120s");
    Ok(format!(
        "20 seed rounds, worst {worst_op} at {worst:.2e} < {TOLERANCE:.0e} ({secs:.1}s)"
    ))
}

/// A 14x14 grid at ratio 0.75 masks exactly 147 spatial tubes; masked and
/// visible counts always partition the grid, and every visible token column
/// appears in every temporal slice.
fn c02_tube_mask() -> Result<String> {
    for seed in 0..10u64 {
        let mut rng = SeededRng::new(seed).derive(0x77);
        let mask = make_tube_mask(14, 14, 0.75, &mut rng)?;
        ensure!(mask.spatial_size() == 196, "wrong grid size");
        ensure!(
            mask.masked_count() == 147,
            "seed {seed}: masked {} of 196, want 147",
            mask.masked_count()
        );
        ensure!(
            mask.masked_count() + mask.visible_count() == 196,
            "counts do not partition the grid"
        );
        let t_grid = 4;
        let rows = visible_token_rows(&mask, t_grid);
        ensure!(rows.len() == 49 * t_grid, "visible rows {} != 196", rows.len());
        ensure!(rows.windows(2).all(|w| w[0] < w[1]), "rows not ascending");
        for s in 0..196 {
            let want = !mask.is_masked(s);
            for t in 0..t_grid {
                ensure!(
                    rows.contains(&(t * 196 + s)) == want,
                    "tube {s} broken at slice {t}"
                );
            }
        }
    }
    Ok("147 of 196 tubes masked at 0.75; tubes span all temporal slices (10 seeds)".into())
}

/// The keyword weighting is exactly transparent at weight one, exactly
/// linear for uniform weights, and strictly monotone in the weight.
fn c03_loss_identities() -> Result<String> {
    let mut rng = SeededRng::new(77);
    let vals: Vec<f32> = (0..60).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
    let t = Tensor::new(vec![5, 12], vals)?;
    let answer = [3usize, 7, 1, 9];
    let flags = [true, false, true, false];
    let mut tape = Tape::new();
    let scores = tape.constant(&t);

    let (targets, w1) = answer_targets(&answer, &flags, 1.0)?;
    let a = sequence_loss(&mut tape, scores, &targets, &w1, LossKind::WeightedBce)?;
    let b = sequence_loss(&mut tape, scores, &targets, &[1.0; 5], LossKind::WeightedBce)?;
    let (a, b) = (tape.scalar_value(a), tape.scalar_value(b));
    ensure!((a - b).abs() <= 1e-7, "unit weight differs: {a} vs {b}");

    let one = b;
    for lambda in [2.0f32, 5.0, 25.0, 50.0] {
        let l = sequence_loss(&mut tape, scores, &targets, &[lambda; 5], LossKind::WeightedBce)?;
        let l = tape.scalar_value(l);
        ensure!(
            (l - lambda * one).abs() / lambda <= 1e-6,
            "uniform weight {lambda}: {l} vs {}",
            lambda * one
        );
    }

    let mut prev = f32::NEG_INFINITY;
    for lambda in [1.0f32, 2.0, 5.0, 10.0, 25.0, 50.0] {
        let (tg, w) = answer_targets(&answer, &flags, lambda)?;
        let l = sequence_loss(&mut tape, scores, &tg, &w, LossKind::WeightedBce)?;
        let l = tape.scalar_value(l);
        ensure!(l > prev, "loss not strictly increasing at weight {lambda}");
        prev = l;
    }
    Ok("unit weight transparent (1e-7), uniform weights scale linearly (1e-6), grid strictly monotone".into())
}

/// The default sampler starting at frame 100 reads exactly frames
/// 100, 104, ..., 128: a 28-frame span lasting 0.9333s at 30 fps.
fn c04_clip_sampling() -> Result<String> {
    let frames: Vec<Frame> = (0..200)
        .map(|i| Frame::from_u8(8, 8, &vec![i as u8; 8 * 8 * 3]).unwrap())
        .collect();
    let spec = SamplerSpec::default();
    let clip = sample_clip(&frames, "acceptance", &spec, 100)?;
    ensure!(clip.frames.len() == 8, "wrong frame count");
    for (k, f) in clip.frames.iter().enumerate() {
        let got = f.to_u8()[0] as usize;
        ensure!(got == 100 + 4 * k, "frame {k} reads source {got}, want {}", 100 + 4 * k);
    }
    ensure!(clip.header.start_frame_index == 100, "start index lost");
    ensure!(spec.span_frames() == 28, "span {} != 28", spec.span_frames());
    let dur = spec.duration_seconds();
    ensure!((dur - 28.0 / 30.0).abs() < 1e-4, "duration {dur}");
    Ok(format!(
        "frames 100..=128 step 4, span 28 frames = {dur:.4}s at 30 fps"
    ))
}

/// Fresh adapters are exactly transparent, the merged weights reproduce the
/// runtime adapter path for random adapters, and the frozen policy leaves
/// every non-adapter parameter bit-identical through 100 optimizer steps.
fn c05_lora() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let summary = build_dataset(
        dir.path(),
        &DatasetConfig {
            n_clips: 2,
            train_ratio: 0.5,
            seed: 19,
            ..DatasetConfig::default()
        },
    )?;
    let entries = read_manifest(&summary.train_manifest)?;
    let mut model = default_model(&entries, 19)?;
    let clip = test_clip(3);

    // zero-initialized adapters change nothing
    let runtime = forward_scores(&model, &clip)?;
    model.merge_adapters()?;
    let merged = forward_scores(&model, &clip)?;
    model.unmerge_adapters()?;
    let zero_gap = runtime
        .iter()
        .zip(&merged)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    ensure!(zero_gap <= 1e-6, "fresh adapters shift scores by {zero_gap:.2e}");

    // randomized adapters: merged weights match the runtime path
    let lora_names: Vec<String> = model
        .params
        .iter()
        .filter(|(_, p)| p.name.contains(".lora"))
        .map(|(_, p)| p.name.clone())
        .collect();
    ensure!(!lora_names.is_empty(), "no adapter parameters found");
    let mut rng = SeededRng::new(40);
    let mut merge_gap = 0.0f32;
    for _ in 0..20 {
        for name in &lora_names {
            let id = model.params.by_name(name).unwrap();
            let n = model.params.tensor(id).numel();
            let vals: Vec<f32> = (0..n).map(|_| rng.uniform_range(-0.05, 0.05)).collect();
            model.params.load_values(name, &vals)?;
        }
        let runtime = forward_scores(&model, &clip)?;
        model.merge_adapters()?;
        let merged = forward_scores(&model, &clip)?;
        model.unmerge_adapters()?;
        let gap = runtime
            .iter()
            .zip(&merged)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        merge_gap = merge_gap.max(gap);
    }
    ensure!(merge_gap <= 1e-5, "merge/runtime gap {merge_gap:.2e} > 1e-5");

    // adapter-only training never touches frozen parameters
    let mut model = default_model(&entries, 19)?;
    let items = items_from_entries(dir.path(), &entries, &model)?;
    let items = &items[..4.min(items.len())];
    let policy = FreezePolicy::Adapters;
    let frozen_before: Vec<(String, Vec<f32>)> = model
        .params
        .iter()
        .filter(|(_, p)| !policy.trainable(&p.name, &model.decoder.adapted_base_names()))
        .map(|(_, p)| (p.name.clone(), p.tensor.data().to_vec()))
        .collect();
    let cfg = TrainConfig {
        epochs: 100,
        batch_size: 4,
        freeze: FreezePolicy::Adapters,
        train_masking: false,
        seed: 19,
        ..TrainConfig::default()
    };
    train(&mut model, items, &cfg, |_| {})?;
    for (name, before) in &frozen_before {
        let id = model.params.by_name(name).unwrap();
        let after = model.params.tensor(id).data();
        ensure!(
            before.iter().zip(after).all(|(a, b)| a.to_bits() == b.to_bits()),
            "frozen parameter {name} moved"
        );
    }
    let bname = lora_names.iter().find(|n| n.ends_with(".b")).unwrap();
    let b0 = model.params.by_name(bname).unwrap();
    ensure!(
        model.params.tensor(b0).data().iter().any(|&x| x != 0.0),
        "adapters did not train"
    );
    Ok(format!(
        "zero-init gap {zero_gap:.1e}, merge gap {merge_gap:.1e} over 20 draws, frozen base bit-stable over 100 steps"
    ))
}

/// The six generation metrics reproduce independently computed golden
/// values on twelve reference pairs to within 1e-6.
fn c06_metric_goldens() -> Result<String> {
    struct G {
        cand: &'static str,
        refr: &'static str,
        keywords: &'static [&'static str],
        want: [f64; 5],
        hit: bool,
    }
    // (bleu3, bleu4, rouge2, rougel, meteor), frozen from an independent
    // reference implementation
    let gold = [
        G { cand: "a catheter is visible in the scene", refr: "a catheter is visible in the scene",
            keywords: &["catheter"], want: [1.0, 1.0, 1.0, 1.0, 0.998542274], hit: true },
        G { cand: "the cat", refr: "the cat sat on the mat",
            keywords: &["cat"], want: [0.085255886, 0.067667642, 0.333333333, 0.5, 0.334821429], hit: true },
        G { cand: "", refr: "yes", keywords: &["yes"], want: [0.0; 5], hit: false },
        G { cand: "no the scope is not advancing here", refr: "yes the scope is advancing deeper here",
            keywords: &["yes"], want: [0.362460124, 0.241497794, 0.333333333, 0.714285714, 0.637142857], hit: false },
        G { cand: "visibly", refr: "visible",
            keywords: &["visible"], want: [0.5, 0.5, 0.0, 0.0, 0.5], hit: false },
        G { cand: "a snare is visible in the scene", refr: "a catheter is visible in the scene",
            keywords: &["catheter"], want: [0.699902805, 0.643458884, 0.666666667, 0.857142857, 0.841269841], hit: false },
        G { cand: "the lesion measures about 6 mm across", refr: "the lesion measures about 6 mm across",
            keywords: &["6", "mm"], want: [1.0, 1.0, 1.0, 1.0, 0.998542274], hit: true },
        G { cand: "narrow band imaging active", refr: "the clip uses narrow band imaging mode",
            keywords: &["narrow band"], want: [0.297572282, 0.198605670, 0.444444444, 0.545454545, 0.439469320], hit: true },
        G { cand: "a catheterization device", refr: "a catheter is visible",
            keywords: &["catheter"], want: [0.150462147, 0.142017355, 0.0, 0.285714286, 0.128205128], hit: false },
        G { cand: "scene the in visible is catheter a", refr: "a catheter is visible in the scene",
            keywords: &["catheter"], want: [0.172153019, 0.138166887, 0.0, 0.142857143, 0.5], hit: true },
        G { cand: "yes", refr: "yes",
            keywords: &["yes"], want: [0.629960525, 0.594603558, 0.0, 1.0, 0.5], hit: true },
        G { cand: "the scope is withdrawing from the colon", refr: "the scope is advancing through the colon",
            keywords: &["advancing"], want: [0.414913267, 0.267261242, 0.5, 0.714285714, 0.691428571], hit: false },
    ];

    for (i, g) in gold.iter().enumerate() {
        let kw: Vec<String> = g.keywords.iter().map(|s| s.to_string()).collect();
        let s = score_pair(g.cand, g.refr, &kw);
        let got = [s.bleu3, s.bleu4, s.rouge2, s.rougel, s.meteor];
        for (m, (a, b)) in got.iter().zip(&g.want).enumerate() {
            ensure!((a - b).abs() < 1e-6, "pair {i} metric {m}: got {a:.9}, want {b:.9}");
        }
        ensure!(s.keyword_hit == g.hit, "pair {i}: keyword hit {}", s.keyword_hit);
    }

    // corpus scores are plain macro averages on the 0-100 scale
    let kws: Vec<Vec<String>> = gold
        .iter()
        .map(|g| g.keywords.iter().map(|s| s.to_string()).collect())
        .collect();
    let corpus = score_corpus(
        gold.iter()
            .zip(&kws)
            .map(|(g, k)| (g.cand, g.refr, k.as_slice())),
    );
    let mean = |ix: usize| 100.0 * gold.iter().map(|g| g.want[ix]).sum::<f64>() / 12.0;
    ensure!((corpus.bleu4 - mean(1)).abs() < 1e-6, "corpus bleu4 off");
    ensure!((corpus.meteor - mean(4)).abs() < 1e-6, "corpus meteor off");
    let hits = 100.0 * gold.iter().filter(|g| g.hit).count() as f64 / 12.0;
    ensure!((corpus.kacc - hits).abs() < 1e-6, "corpus keyword accuracy off");
    Ok("12 golden pairs and corpus averages reproduced within 1e-6".into())
}

/// The full model memorizes 64 training pairs: after at most 300 unmasked
/// epochs the train split scores at least 90 BLEU-4 and 95% keyword
/// accuracy, with strictly decreasing loss over the first 10 epochs.
fn c07_overfit() -> Result<String> {
    let t0 = Instant::now();
    let dir = tempfile::tempdir()?;
    let summary = build_dataset(
        dir.path(),
        &DatasetConfig {
            n_clips: 6,
            seed: 11,
            ..DatasetConfig::default()
        },
    )?;
    let entries = read_manifest(&summary.train_manifest)?;
    ensure!(entries.len() >= 64, "only {} train items", entries.len());
    let entries = &entries[..64];

    let mut model = default_model(entries, 11)?;
    let items = items_from_entries(dir.path(), entries, &model)?;
    let cfg = TrainConfig {
        epochs: 300,
        lr: 1e-3,
        batch_size: 4,
        train_masking: false,
        mask_ratio: 0.0,
        freeze: FreezePolicy::Full,
        seed: 11,
        ..TrainConfig::default()
    };
    let stats = train(&mut model, &items, &cfg, |_| {})?;
    for w in stats[..10].windows(2) {
        ensure!(
            w[1].mean_loss < w[0].mean_loss,
            "loss rose between early epochs {} and {}",
            w[0].epoch,
            w[1].epoch
        );
    }

    let mut clips = HashMap::new();
    let mut preds = Vec::new();
    for e in entries {
        let clip = clips
            .entry(e.clip_id.clone())
            .or_insert_with(|| load_clip_dir(&dir.path().join("clips").join(&e.clip_id)).unwrap());
        preds.push(model.generate(clip, &e.question, 12)?.text);
    }
    let corpus = score_corpus(
        entries
            .iter()
            .zip(&preds)
            .map(|(e, p)| (p.as_str(), e.answer_long.as_str(), e.keywords.as_slice())),
    );
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 600.0, "overfit run took {secs:.0}s, budget 600s");
    ensure!(
        corpus.bleu4 >= 90.0,
        "train BLEU-4 {:.2} < 90 after 300 epochs",
        corpus.bleu4
    );
    ensure!(
        corpus.kacc >= 95.0,
        "train keyword accuracy {:.2} < 95",
        corpus.kacc
    );
    Ok(format!(
        "64 pairs: BLEU-4 {:.1}, K-ACC {:.1} after {} epochs ({secs:.0}s)",
        corpus.bleu4,
        corpus.kacc,
        stats.len()
    ))
}

/// The weight sweep trains every grid point from one shared, fingerprinted
/// initialization and reports one row per weight.
fn c08_ablation() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let mut cfg = Config::default();
    cfg.data_dir = dir.path().join("data").display().to_string();
    cfg.out_dir = dir.path().join("out").display().to_string();
    cfg.n_clips = 4;
    cfg.seed = 3;
    cfg.epochs = 2;
    cmd_gen_data(&cfg)?;
    cmd_ablate(&cfg, |_| {})?;

    let path = Path::new(&cfg.out_dir).join("ablation.json");
    let text = std::fs::read_to_string(&path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    validate_ablation_json(&v)?;
    let rows = v["rows"].as_array().unwrap();
    ensure!(rows.len() == 6, "{} rows, want 6", rows.len());
    let lambdas: Vec<f64> = rows.iter().map(|r| r["lambda"].as_f64().unwrap()).collect();
    ensure!(
        lambdas == [1.0, 2.0, 5.0, 10.0, 25.0, 50.0],
        "grid {lambdas:?}"
    );
    let hash = format!(
        "{:016x}",
        file_fnv1a(&Path::new(&cfg.out_dir).join("ablate_init.ckpt"))?
    );
    ensure!(
        v["init_checkpoint_hash"].as_str() == Some(hash.as_str()),
        "init hash does not match the checkpoint on disk"
    );
    Ok(format!("6 rows over weights {lambdas:?}, shared init {hash}"))
}

/// Dataset generation, training, and evaluation are byte-identical when
/// repeated with the same seed.
fn c09_reproducibility() -> Result<String> {
    fn walk(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((
                        p.strip_prefix(root).unwrap().display().to_string(),
                        std::fs::read(&p).unwrap(),
                    ));
                }
            }
        }
        out.sort();
        out
    }

    let dir = tempfile::tempdir()?;
    let mk = |name: &str| {
        let mut cfg = Config::default();
        cfg.data_dir = dir.path().join(name).join("data").display().to_string();
        cfg.out_dir = dir.path().join(name).join("out").display().to_string();
        cfg.n_clips = 4;
        cfg.seed = 9;
        cfg.epochs = 3;
        cfg
    };
    let (a, b) = (mk("a"), mk("b"));
    cmd_gen_data(&a)?;
    cmd_gen_data(&b)?;
    ensure!(
        walk(Path::new(&a.data_dir)) == walk(Path::new(&b.data_dir)),
        "generated datasets differ"
    );
    cmd_train(&a, |_| {})?;
    cmd_train(&b, |_| {})?;
    ensure!(
        std::fs::read(a.checkpoint_path())? == std::fs::read(b.checkpoint_path())?,
        "checkpoints differ"
    );
    cmd_eval(&a)?;
    cmd_eval(&b)?;
    for f in ["eval_report.json", "predictions.jsonl"] {
        ensure!(
            std::fs::read(Path::new(&a.out_dir).join(f))?
                == std::fs::read(Path::new(&b.out_dir).join(f))?,
            "{f} differs between reruns"
        );
    }
    Ok("dataset, checkpoint, report and predictions byte-identical across reruns".into())
}

/// Manifest statistics sit inside +-30% of the reference profile, the split
/// is round(0.856 n), and held-out paraphrases appear only in the test
/// split.
fn c10_dataset_stats() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let summary = build_dataset(
        dir.path(),
        &DatasetConfig {
            n_clips: 70,
            seed: 21,
            ..DatasetConfig::default()
        },
    )?;
    ensure!(summary.n_train_clips == 60, "train clips {}", summary.n_train_clips);
    ensure!(summary.n_test_clips == 10, "test clips {}", summary.n_test_clips);

    let train = read_manifest(&summary.train_manifest)?;
    let test = read_manifest(&summary.test_manifest)?;
    ensure!(!train.is_empty() && !test.is_empty(), "a split is empty");
    ensure!(
        train.iter().all(|e| !e.out_of_template),
        "paraphrase leaked into the train split"
    );
    ensure!(
        test.iter().filter(|e| e.out_of_template).count() == summary.n_test_clips,
        "expected one paraphrase per test clip"
    );

    let all: Vec<&ManifestEntry> = train.iter().chain(&test).collect();
    ensure!(all.len() >= 1000, "sample has only {} pairs", all.len());
    let mean = |f: &dyn Fn(&ManifestEntry) -> f64| {
        all.iter().map(|e| f(e)).sum::<f64>() / all.len() as f64
    };
    let q_chars = mean(&|e| e.question.len() as f64);
    let q_words = mean(&|e| e.question.split_whitespace().count() as f64);
    let short_words = mean(&|e| e.answer_short.split_whitespace().count() as f64);
    let long_words = mean(&|e| e.answer_long.split_whitespace().count() as f64);
    let band = |x: f64, mid: f64| x >= 0.7 * mid && x <= 1.3 * mid;
    ensure!(band(q_chars, 41.0), "question chars {q_chars:.1} outside 41 +-30%");
    ensure!(band(q_words, 7.5), "question words {q_words:.2} outside 7.5 +-30%");
    ensure!(band(short_words, 1.0), "short answer words {short_words:.2} outside 1 +-30%");
    ensure!(band(long_words, 6.8), "long answer words {long_words:.2} outside 6.8 +-30%");

    for e in &all {
        let toks = tokenize(&e.answer_long);
        ensure!(
            e.keywords.iter().all(|k| toks.contains(k)),
            "{}: keyword not in long answer",
            e.clip_id
        );
    }
    Ok(format!(
        "{} pairs: question {q_chars:.1} chars / {q_words:.2} words, answers {short_words:.2} / {long_words:.2} words, split 60/10, {} paraphrases test-only",
        all.len(),
        summary.n_out_of_template
    ))
}
