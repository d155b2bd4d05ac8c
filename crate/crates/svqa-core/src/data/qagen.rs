//! Turn clip labels into concrete QA items by walking the template
//! inventory in order. Templates that need an absent label (lesion, tool)
//! are skipped with a note rather than silently dropped.

use crate::data::annotations::ClipLabels;
use crate::data::templates::{answer, template_by_question, AnswerParts, TEMPLATES};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct QaItem {
    pub template_id: &'static str,
    pub domain: &'static str,
    pub category: &'static str,
    pub question: String,
    pub answer_short: String,
    pub answer_long: String,
    pub keywords: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkipNote {
    pub template_id: &'static str,
    pub reason: String,
}

/// One QA item per applicable template, in fixed inventory order.
pub fn generate_qa(labels: &ClipLabels) -> (Vec<QaItem>, Vec<SkipNote>) {
    let mut items = Vec::new();
    let mut skips = Vec::new();
    for t in &TEMPLATES {
        match answer(t, labels) {
            Some(AnswerParts {
                short,
                long,
                keywords,
            }) => {
                debug_assert!(
                    {
                        let toks = crate::text::tokenize(&long);
                        keywords.iter().all(|k| toks.contains(k))
                    },
                    "{}: keywords must appear in the long answer",
                    t.id
                );
                items.push(QaItem {
                    template_id: t.id,
                    domain: t.domain,
                    category: t.category,
                    question: t.question.to_string(),
                    answer_short: short,
                    answer_long: long,
                    keywords,
                });
            }
            None => skips.push(SkipNote {
                template_id: t.id,
                reason: if t.id.starts_with("inst") {
                    "no instrument on this clip".into()
                } else {
                    "no lesion on this clip".into()
                },
            }),
        }
    }
    (items, skips)
}

/// Swap a canonical question for one of its paraphrase variants. The result
/// never equals the input; unknown questions are rejected.
pub fn perturb_question(question: &str, rng: &mut SeededRng) -> Result<String> {
    let t = template_by_question(question).ok_or_else(|| Error::BadArgument {
        op: "perturb_question",
        msg: format!("not a canonical template question: {question:?}"),
    })?;
    Ok(t.variants[rng.index(2)].to_string())
}
