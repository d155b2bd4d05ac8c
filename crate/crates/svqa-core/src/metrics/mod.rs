//! Generative answer quality metrics, computed in f64 and reported on a
//! 0-100 scale at the corpus level.
//!
//! All scorers share the crate tokenizer (lowercase words plus single
//! punctuation marks) so a scored pair is judged on exactly the tokens a
//! model can emit.

mod report;

pub use report::{
    validate_ablation_json, validate_report_json, AblationReport, AblationRow, CategoryEntry,
    EvalReport, MetricSummary, SCHEMA_VERSION,
};

use std::collections::HashMap;

use crate::text::tokenize;

/// Scores for one candidate/reference pair, each in [0, 1] except the
/// keyword hit which is the all-keywords-present indicator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScores {
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge2: f64,
    pub rougel: f64,
    pub meteor: f64,
    pub keyword_hit: bool,
}

/// Corpus macro averages on the 0-100 scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusScores {
    pub n: usize,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge2: f64,
    pub rougel: f64,
    pub meteor: f64,
    pub kacc: f64,
}

pub fn score_pair(candidate: &str, reference: &str, keywords: &[String]) -> PairScores {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    let kw: Vec<Vec<String>> = keywords.iter().map(|k| tokenize(k)).collect();
    PairScores {
        bleu3: bleu(&cand, &refr, 3),
        bleu4: bleu(&cand, &refr, 4),
        rouge2: rouge_n(&cand, &refr, 2),
        rougel: rouge_l(&cand, &refr),
        meteor: meteor(&cand, &refr),
        keyword_hit: keyword_hit(&cand, &kw),
    }
}

/// Macro-average pair scores over a corpus; empty corpora score zero.
pub fn score_corpus<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str, &'a [String])>,
) -> CorpusScores {
    let mut n = 0usize;
    let (mut b3, mut b4, mut r2, mut rl, mut me, mut ka) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (c, r, k) in pairs {
        let s = score_pair(c, r, k);
        b3 += s.bleu3;
        b4 += s.bleu4;
        r2 += s.rouge2;
        rl += s.rougel;
        me += s.meteor;
        ka += s.keyword_hit as u8 as f64;
        n += 1;
    }
    let avg = |x: f64| if n == 0 { 0.0 } else { 100.0 * x / n as f64 };
    CorpusScores {
        n,
        bleu3: avg(b3),
        bleu4: avg(b4),
        rouge2: avg(r2),
        rougel: avg(rl),
        meteor: avg(me),
        kacc: avg(ka),
    }
}

/// Smoothed BLEU-n: geometric mean of clipped k-gram precisions for
/// k = 1..=n, a zero-match precision replaced by 1/(2 * candidate length),
/// times the brevity penalty exp(1 - r/c) for candidates shorter than the
/// reference.
fn bleu(cand: &[String], refr: &[String], n: usize) -> f64 {
    let c = cand.len();
    let r = refr.len();
    if c == 0 || r == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0f64;
    for k in 1..=n {
        let denom = c.saturating_sub(k - 1);
        let num = clipped_matches(cand, refr, k);
        let p = if num > 0 {
            num as f64 / denom as f64
        } else {
            1.0 / (2.0 * c as f64)
        };
        log_sum += p.ln();
    }
    let geo = (log_sum / n as f64).exp();
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * geo
}

/// Count candidate k-grams also present in the reference, each reference
/// k-gram usable at most as often as it occurs there.
fn clipped_matches(cand: &[String], refr: &[String], k: usize) -> usize {
    if cand.len() < k || refr.len() < k {
        return 0;
    }
    let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
    for w in refr.windows(k) {
        *ref_counts.entry(w).or_insert(0) += 1;
    }
    let mut cand_counts: HashMap<&[String], usize> = HashMap::new();
    for w in cand.windows(k) {
        *cand_counts.entry(w).or_insert(0) += 1;
    }
    cand_counts
        .iter()
        .map(|(w, &c)| c.min(*ref_counts.get(w).unwrap_or(&0)))
        .sum()
}

/// Clipped n-gram F1 (used with n = 2).
fn rouge_n(cand: &[String], refr: &[String], n: usize) -> f64 {
    let cg = cand.len().saturating_sub(n - 1);
    let rg = refr.len().saturating_sub(n - 1);
    if cg == 0 || rg == 0 {
        return 0.0;
    }
    let overlap = clipped_matches(cand, refr, n) as f64;
    f1(overlap / cg as f64, overlap / rg as f64)
}

/// Longest-common-subsequence F1.
fn rouge_l(cand: &[String], refr: &[String]) -> f64 {
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let l = lcs_len(cand, refr) as f64;
    f1(l / cand.len() as f64, l / refr.len() as f64)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Harmonic-mean matcher with a fragmentation penalty: exact matches first,
/// then suffix-stemmed matches, both greedy leftmost; F = 10PR / (R + 9P),
/// scaled by 1 - 0.5 * (chunks / matches)^3.
fn meteor(cand: &[String], refr: &[String]) -> f64 {
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let pairs = greedy_align(cand, refr);
    let m = pairs.len() as f64;
    if pairs.is_empty() {
        return 0.0;
    }
    let p = m / cand.len() as f64;
    let r = m / refr.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let chunks = count_chunks(&pairs) as f64;
    let penalty = 0.5 * (chunks / m).powi(3);
    f * (1.0 - penalty)
}

/// Candidate-to-reference alignment, sorted by candidate position.
fn greedy_align(cand: &[String], refr: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; refr.len()];
    let mut cand_matched = vec![false; cand.len()];
    let mut pairs = Vec::new();
    for (i, c) in cand.iter().enumerate() {
        let hit = refr
            .iter()
            .enumerate()
            .find(|&(j, r)| !used[j] && r == c)
            .map(|(j, _)| j);
        if let Some(j) = hit {
            used[j] = true;
            cand_matched[i] = true;
            pairs.push((i, j));
        }
    }
    let ref_stems: Vec<String> = refr.iter().map(|w| stem(w)).collect();
    for (i, c) in cand.iter().enumerate() {
        if cand_matched[i] {
            continue;
        }
        let cs = stem(c);
        let hit = ref_stems
            .iter()
            .enumerate()
            .find(|&(j, rs)| !used[j] && *rs == cs)
            .map(|(j, _)| j);
        if let Some(j) = hit {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Number of maximal runs that are contiguous in both sequences at once.
fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(ci, rj) in pairs {
        match prev {
            Some((pc, pr)) if ci == pc + 1 && rj == pr + 1 => {}
            _ => chunks += 1,
        }
        prev = Some((ci, rj));
    }
    chunks
}

/// Longest-suffix stripper; the remaining stem must keep at least three
/// characters or the word is left whole.
fn stem(w: &str) -> String {
    const SUFFIXES: [&str; 12] = [
        "tion", "ness", "ment", "ing", "est", "ed", "es", "er", "ly", "le", "al", "s",
    ];
    for suf in SUFFIXES {
        if w.len() > suf.len() && w.ends_with(suf) && w.len() - suf.len() >= 3 {
            return w[..w.len() - suf.len()].to_string();
        }
    }
    w.to_string()
}

/// True when every keyword phrase occurs in the candidate as a contiguous
/// token run. An empty keyword list is trivially satisfied.
pub fn keyword_hit(cand_tokens: &[String], keywords: &[Vec<String>]) -> bool {
    keywords
        .iter()
        .all(|kw| !kw.is_empty() && contains_run(cand_tokens, kw))
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-6;

    struct Fixture {
        cand: &'static str,
        refr: &'static str,
        keywords: &'static [&'static str],
        bleu3: f64,
        bleu4: f64,
        rouge2: f64,
        rougel: f64,
        meteor: f64,
        hit: bool,
    }

    // frozen golden values computed with an independent implementation
    const FIXTURES: [Fixture; 12] = [
        Fixture {
            cand: "a catheter is visible in the scene",
            refr: "a catheter is visible in the scene",
            keywords: &["catheter"],
            bleu3: 1.0,
            bleu4: 1.0,
            rouge2: 1.0,
            rougel: 1.0,
            meteor: 0.998542274,
            hit: true,
        },
        Fixture {
            cand: "the cat",
            refr: "the cat sat on the mat",
            keywords: &["cat"],
            bleu3: 0.085255886,
            bleu4: 0.067667642,
            rouge2: 0.333333333,
            rougel: 0.500000000,
            meteor: 0.334821429,
            hit: true,
        },
        Fixture {
            cand: "",
            refr: "yes",
            keywords: &["yes"],
            bleu3: 0.0,
            bleu4: 0.0,
            rouge2: 0.0,
            rougel: 0.0,
            meteor: 0.0,
            hit: false,
        },
        Fixture {
            cand: "no the scope is not advancing here",
            refr: "yes the scope is advancing deeper here",
            keywords: &["yes"],
            bleu3: 0.362460124,
            bleu4: 0.241497794,
            rouge2: 0.333333333,
            rougel: 0.714285714,
            meteor: 0.637142857,
            hit: false,
        },
        Fixture {
            cand: "visibly",
            refr: "visible",
            keywords: &["visible"],
            bleu3: 0.5,
            bleu4: 0.5,
            rouge2: 0.0,
            rougel: 0.0,
            meteor: 0.5,
            hit: false,
        },
        Fixture {
            cand: "a snare is visible in the scene",
            refr: "a catheter is visible in the scene",
            keywords: &["catheter"],
            bleu3: 0.699902805,
            bleu4: 0.643458884,
            rouge2: 0.666666667,
            rougel: 0.857142857,
            meteor: 0.841269841,
            hit: false,
        },
        Fixture {
            cand: "the lesion measures about 6 mm across",
            refr: "the lesion measures about 6 mm across",
            keywords: &["6", "mm"],
            bleu3: 1.0,
            bleu4: 1.0,
            rouge2: 1.0,
            rougel: 1.0,
            meteor: 0.998542274,
            hit: true,
        },
        Fixture {
            cand: "narrow band imaging active",
            refr: "the clip uses narrow band imaging mode",
            keywords: &["narrow band"],
            bleu3: 0.297572282,
            bleu4: 0.198605670,
            rouge2: 0.444444444,
            rougel: 0.545454545,
            meteor: 0.439469320,
            hit: true,
        },
        Fixture {
            cand: "a catheterization device",
            refr: "a catheter is visible",
            keywords: &["catheter"],
            bleu3: 0.150462147,
            bleu4: 0.142017355,
            rouge2: 0.0,
            rougel: 0.285714286,
            meteor: 0.128205128,
            hit: false,
        },
        Fixture {
            cand: "scene the in visible is catheter a",
            refr: "a catheter is visible in the scene",
            keywords: &["catheter"],
            bleu3: 0.172153019,
            bleu4: 0.138166887,
            rouge2: 0.0,
            rougel: 0.142857143,
            meteor: 0.500000000,
            hit: true,
        },
        Fixture {
            cand: "yes",
            refr: "yes",
            keywords: &["yes"],
            bleu3: 0.629960525,
            bleu4: 0.594603558,
            rouge2: 0.0,
            rougel: 1.0,
            meteor: 0.5,
            hit: true,
        },
        Fixture {
            cand: "the scope is withdrawing from the colon",
            refr: "the scope is advancing through the colon",
            keywords: &["advancing"],
            bleu3: 0.414913267,
            bleu4: 0.267261242,
            rouge2: 0.500000000,
            rougel: 0.714285714,
            meteor: 0.691428571,
            hit: false,
        },
    ];

    #[test]
    fn golden_pairs_match_the_independent_oracle() {
        for (i, f) in FIXTURES.iter().enumerate() {
            let kw: Vec<String> = f.keywords.iter().map(|s| s.to_string()).collect();
            let s = score_pair(f.cand, f.refr, &kw);
            let checks = [
                ("bleu3", s.bleu3, f.bleu3),
                ("bleu4", s.bleu4, f.bleu4),
                ("rouge2", s.rouge2, f.rouge2),
                ("rougel", s.rougel, f.rougel),
                ("meteor", s.meteor, f.meteor),
            ];
            for (name, got, want) in checks {
                assert!(
                    (got - want).abs() < TOL,
                    "fixture {i} {name}: got {got:.9}, want {want:.9}"
                );
            }
            assert_eq!(s.keyword_hit, f.hit, "fixture {i} keyword hit");
        }
    }

    #[test]
    fn corpus_macro_average_is_the_mean_of_pairs_times_100() {
        let kw: Vec<String> = vec!["cat".into()];
        let pairs = [
            ("the cat", "the cat sat on the mat", &kw[..]),
            ("the cat sat on the mat", "the cat sat on the mat", &kw[..]),
        ];
        let c = score_corpus(pairs.iter().map(|&(a, b, k)| (a, b, k)));
        assert_eq!(c.n, 2);
        let lone = score_pair("the cat", "the cat sat on the mat", &kw);
        assert!((c.bleu4 - 100.0 * (lone.bleu4 + 1.0) / 2.0).abs() < TOL);
        assert!((c.kacc - 100.0).abs() < TOL);
        assert_eq!(score_corpus(std::iter::empty()).n, 0);
    }

    #[test]
    fn stemmer_cases() {
        for (w, s) in [
            ("visibly", "visib"),
            ("visible", "visib"),
            ("catheterization", "catheteriza"),
            ("advancing", "advanc"),
            ("measures", "measur"),
            ("best", "best"),     // stripping est would leave 1 char
            ("illumination", "illumina"),
            ("dimmest", "dimm"),
            ("scope", "scope"),
            ("tools", "tool"),
        ] {
            assert_eq!(stem(w), s, "{w}");
        }
    }

    #[test]
    fn lcs_agrees_with_a_recursive_reference() {
        fn slow(a: &[String], b: &[String]) -> usize {
            if a.is_empty() || b.is_empty() {
                0
            } else if a[a.len() - 1] == b[b.len() - 1] {
                1 + slow(&a[..a.len() - 1], &b[..b.len() - 1])
            } else {
                slow(&a[..a.len() - 1], b).max(slow(a, &b[..b.len() - 1]))
            }
        }
        let mut rng = crate::rng::SeededRng::new(17);
        let alphabet = ["a", "b", "c"];
        for _ in 0..50 {
            let a: Vec<String> = (0..rng.index(7))
                .map(|_| alphabet[rng.index(3)].to_string())
                .collect();
            let b: Vec<String> = (0..rng.index(7))
                .map(|_| alphabet[rng.index(3)].to_string())
                .collect();
            assert_eq!(lcs_len(&a, &b), slow(&a, &b), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn keyword_hits_are_contiguous_and_conjunctive() {
        let toks = |s: &str| tokenize(s);
        assert!(keyword_hit(
            &toks("narrow band imaging is active"),
            &[toks("narrow band")]
        ));
        assert!(!keyword_hit(
            &toks("narrow imaging band active"),
            &[toks("narrow band")]
        ));
        assert!(!keyword_hit(
            &toks("the catheter moves"),
            &[toks("catheter"), toks("forceps")]
        ));
        assert!(keyword_hit(&toks("anything"), &[]));
        assert!(!keyword_hit(&toks("anything"), &[vec![]]));
    }

    #[test]
    fn identical_long_answers_score_one_on_ngram_metrics() {
        let s = score_pair(
            "the instrument enters from the lower right corner",
            "the instrument enters from the lower right corner",
            &[],
        );
        assert!((s.bleu3 - 1.0).abs() < TOL);
        assert!((s.bleu4 - 1.0).abs() < TOL);
        assert!((s.rouge2 - 1.0).abs() < TOL);
        assert!((s.rougel - 1.0).abs() < TOL);
        assert!(s.meteor > 0.99);
    }
}
