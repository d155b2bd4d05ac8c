//! Browser bindings for the interactive demo page.
//!
//! Three operations back the static page in `www/`: rendering a synthetic
//! endoscopy clip with its annotations and QA pairs, sampling a tube mask
//! over a patch grid, and scoring a candidate answer against a reference.
//! Every function takes plain scalars or strings and returns a JSON string,
//! so the page needs no framework and no shared state. Errors come back as
//! `{"error": "..."}` rather than exceptions.
//!
//! The crate compiles for the host (where the unit tests run) and for
//! `wasm32-unknown-unknown`, where the same functions are exported through
//! `wasm-bindgen`.

use serde::Serialize;
use svqa_core::data::{clip_labels, generate_qa, random_scene, render_synthetic_clip};
use svqa_core::metrics::score_pair;
use svqa_core::rng::SeededRng;
use svqa_core::video::{make_tube_mask, SamplerSpec};
use svqa_core::Result;

#[cfg(target_arch = "wasm32")]
use wasm_bindgen::prelude::wasm_bindgen;

const FRAME_H: usize = 32;
const FRAME_W: usize = 32;

#[derive(Serialize)]
struct SceneView {
    seed: u64,
    n_frames: usize,
    frame_h: usize,
    frame_w: usize,
    /// Row-major RGB bytes, one inner array per sampled frame.
    frames: Vec<Vec<u8>>,
    annotations: Vec<serde_json::Value>,
    qa: Vec<QaView>,
}

#[derive(Serialize)]
struct QaView {
    category: String,
    domain: String,
    question: String,
    answer_short: String,
    answer_long: String,
    keywords: Vec<String>,
}

#[derive(Serialize)]
struct MaskView {
    h_grid: usize,
    w_grid: usize,
    ratio: f32,
    masked_count: usize,
    visible_count: usize,
    /// Row-major over the spatial grid; `true` marks a masked tube.
    flags: Vec<bool>,
}

#[derive(Serialize)]
struct ScoreView {
    bleu3: f64,
    bleu4: f64,
    rouge2: f64,
    rougel: f64,
    meteor: f64,
    keyword_hit: bool,
}

fn fail_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn or_error(r: Result<String>) -> String {
    r.unwrap_or_else(|e| fail_json(&e.to_string()))
}

fn build_scene(seed: u64) -> Result<String> {
    let mut rng = SeededRng::new(seed);
    let spec = random_scene(&mut rng);
    let sampler = SamplerSpec::default();
    let (clip, anns) = render_synthetic_clip(&spec, &sampler, FRAME_H, FRAME_W)?;
    let labels = clip_labels(&anns, sampler.n_frames)?;
    let (qa, _) = generate_qa(&labels);
    let view = SceneView {
        seed,
        n_frames: clip.frames.len(),
        frame_h: FRAME_H,
        frame_w: FRAME_W,
        frames: clip.frames.iter().map(|f| f.to_u8()).collect(),
        annotations: anns
            .iter()
            .map(serde_json::to_value)
            .collect::<std::result::Result<_, _>>()?,
        qa: qa
            .into_iter()
            .map(|q| QaView {
                category: q.category.to_string(),
                domain: q.domain.to_string(),
                question: q.question,
                answer_short: q.answer_short,
                answer_long: q.answer_long,
                keywords: q.keywords,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&view)?)
}

fn build_mask(h_grid: u32, w_grid: u32, ratio: f32, seed: u64) -> Result<String> {
    let mut rng = SeededRng::new(seed);
    let mask = make_tube_mask(h_grid as usize, w_grid as usize, ratio, &mut rng)?;
    let view = MaskView {
        h_grid: mask.h_grid,
        w_grid: mask.w_grid,
        ratio,
        masked_count: mask.masked_count(),
        visible_count: mask.visible_count(),
        flags: mask.flags().to_vec(),
    };
    Ok(serde_json::to_string(&view)?)
}

fn build_score(candidate: &str, reference: &str, keywords: &str) -> Result<String> {
    let kw: Vec<String> = keywords
        .replace(',', " ")
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let s = score_pair(candidate, reference, &kw);
    let view = ScoreView {
        bleu3: 100.0 * s.bleu3,
        bleu4: 100.0 * s.bleu4,
        rouge2: 100.0 * s.rouge2,
        rougel: 100.0 * s.rougel,
        meteor: 100.0 * s.meteor,
        keyword_hit: s.keyword_hit,
    };
    Ok(serde_json::to_string(&view)?)
}

/// Render a random synthetic clip for `seed`: 8 frames of RGB bytes, the
/// per-frame annotations, and every QA pair the annotations support.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn scene_json(seed: u64) -> String {
    or_error(build_scene(seed))
}

/// Sample a tube mask over an `h_grid` x `w_grid` patch grid. Masked tubes
/// hide the same spatial patch in every frame of the clip.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn mask_json(h_grid: u32, w_grid: u32, ratio: f32, seed: u64) -> String {
    or_error(build_mask(h_grid, w_grid, ratio, seed))
}

/// Score a candidate answer against a reference: BLEU-3/4, ROUGE-2/L and
/// METEOR on the 0-100 scale, plus the keyword hit flag. `keywords` is a
/// comma- or space-separated list and may be empty.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn score_json(candidate: &str, reference: &str, keywords: &str) -> String {
    or_error(build_score(candidate, reference, keywords))
}
