//! Question templates. Seventeen templates across six domains turn clip
//! labels into question/answer pairs; each carries two paraphrase variants
//! used for the held-out rephrasing entries in the test split. Answers come
//! in a short form (usually one word) and a long sentence whose keyword
//! tokens always appear verbatim in the sentence.

use crate::data::annotations::{ClipLabels, ScopeMotion, ScreenPos};

#[derive(Clone, Copy, Debug)]
pub struct Template {
    pub id: &'static str,
    pub domain: &'static str,
    pub category: &'static str,
    pub question: &'static str,
    pub variants: [&'static str; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnswerParts {
    pub short: String,
    pub long: String,
    pub keywords: Vec<String>,
}

pub const TEMPLATES: [Template; 17] = [
    Template {
        id: "inst.presence",
        domain: "instruments",
        category: "tool_presence",
        question: "Is any tool visible in the scene?",
        variants: [
            "Can any instrument be seen here?",
            "Do you see a tool anywhere in view?",
        ],
    },
    Template {
        id: "inst.identity",
        domain: "instruments",
        category: "tool_identity",
        question: "Which tool is visible in the scene?",
        variants: [
            "What instrument can be seen?",
            "Name the instrument present in the scene.",
        ],
    },
    Template {
        id: "inst.count",
        domain: "instruments",
        category: "tool_count",
        question: "How many instruments are deployed in this view?",
        variants: [
            "How many tools are deployed right now?",
            "Count the instruments visible in this view.",
        ],
    },
    Template {
        id: "pos.screen",
        domain: "positions",
        category: "lesion_screen_position",
        question: "Where does the lesion appear on the screen?",
        variants: [
            "On which part of the screen is the lesion?",
            "Where on screen does the lesion sit?",
        ],
    },
    Template {
        id: "pos.site",
        domain: "positions",
        category: "anatomical_site",
        question: "Which segment of the colon is shown here?",
        variants: [
            "Which part of the colon appears here?",
            "What colon segment does this clip show?",
        ],
    },
    Template {
        id: "siz.mm",
        domain: "sizing",
        category: "lesion_size",
        question: "How large is the lesion in millimeters?",
        variants: [
            "What is the lesion size in millimeters?",
            "About how many millimeters wide is the lesion?",
        ],
    },
    Template {
        id: "diag.histology",
        domain: "diagnosis",
        category: "histology",
        question: "What is the likely histology of the lesion?",
        variants: [
            "Which histology best fits this lesion?",
            "What histology does the lesion suggest?",
        ],
    },
    Template {
        id: "op.occlusion",
        domain: "operation_notes",
        category: "occlusion",
        question: "Is the view partly occluded in this clip?",
        variants: [
            "Is part of the view blocked in this clip?",
            "Does anything occlude the view here?",
        ],
    },
    Template {
        id: "op.flushing",
        domain: "operation_notes",
        category: "flushing",
        question: "Is flushing performed during this clip?",
        variants: [
            "Does flushing happen during this clip?",
            "Is the scene washed by flushing here?",
        ],
    },
    Template {
        id: "op.illumination",
        domain: "operation_notes",
        category: "illumination_mode",
        question: "Which imaging mode lights the scene?",
        variants: [
            "What lighting mode is active in the scene?",
            "Which light setting illuminates this clip?",
        ],
    },
    Template {
        id: "op.visibility",
        domain: "operation_notes",
        category: "visibility",
        question: "Is mucosal visibility adequate in this clip?",
        variants: [
            "Is visibility good enough in this clip?",
            "Does the mucosa stay clearly visible here?",
        ],
    },
    Template {
        id: "op.lens",
        domain: "operation_notes",
        category: "lens_clarity",
        question: "Is the lens clear for most of the clip?",
        variants: [
            "Does the lens stay clear for most frames?",
            "Is the camera view clean through the clip?",
        ],
    },
    Template {
        id: "mov.advancing",
        domain: "movement",
        category: "advancing_check",
        question: "Is the scope advancing in this clip?",
        variants: [
            "Is the scope moving deeper in this clip?",
            "Does the scope push forward here?",
        ],
    },
    Template {
        id: "mov.withdrawing",
        domain: "movement",
        category: "withdrawing_check",
        question: "Is the scope being withdrawn here?",
        variants: [
            "Is the scope being pulled back here?",
            "Does the scope retreat during this clip?",
        ],
    },
    Template {
        id: "mov.exiting",
        domain: "movement",
        category: "exiting_check",
        question: "Is the scope exiting the segment now?",
        variants: [
            "Is the scope leaving the segment now?",
            "Does the scope exit the segment in this clip?",
        ],
    },
    Template {
        id: "mov.kind",
        domain: "movement",
        category: "motion_kind",
        question: "What is the scope doing in this clip?",
        variants: [
            "What movement does the scope make here?",
            "Describe the scope motion in this clip.",
        ],
    },
    Template {
        id: "mov.closer",
        domain: "movement",
        category: "approach_check",
        question: "Does the camera move closer to the mucosa?",
        variants: [
            "Does the view approach the mucosa here?",
            "Is the camera getting nearer to the wall?",
        ],
    },
];

pub fn template_by_id(id: &str) -> Option<&'static Template> {
    TEMPLATES.iter().find(|t| t.id == id)
}

pub fn template_by_question(question: &str) -> Option<&'static Template> {
    TEMPLATES.iter().find(|t| t.question == question)
}

fn yes_no(hit: bool, yes_long: &str, no_long: &str) -> AnswerParts {
    AnswerParts {
        short: if hit { "yes" } else { "no" }.into(),
        long: if hit { yes_long } else { no_long }.into(),
        keywords: vec![if hit { "yes" } else { "no" }.into()],
    }
}

fn worded(short: &str, long: String) -> AnswerParts {
    AnswerParts {
        short: short.into(),
        long,
        keywords: vec![short.into()],
    }
}

/// Answer one template against clip labels. `None` means the template does
/// not apply to this clip (for example a sizing question without a lesion).
pub fn answer(t: &Template, labels: &ClipLabels) -> Option<AnswerParts> {
    let parts = match t.id {
        "inst.presence" => match labels.tool {
            Some(tool) => AnswerParts {
                short: "yes".into(),
                long: format!("yes a {} is visible in the scene", tool.as_str()),
                keywords: vec!["yes".into()],
            },
            None => AnswerParts {
                short: "no".into(),
                long: "no tool is visible in the scene".into(),
                keywords: vec!["no".into()],
            },
        },
        "inst.identity" => {
            let tool = labels.tool?;
            worded(
                tool.as_str(),
                format!("a {} is visible in the scene", tool.as_str()),
            )
        }
        "inst.count" => {
            if labels.tool.is_some() {
                worded("one", "one instrument is deployed in this view".into())
            } else {
                worded("zero", "zero instruments are deployed in this view".into())
            }
        }
        "pos.screen" => {
            let pos = labels.lesion?.on_screen_position;
            let long = match pos {
                ScreenPos::Center => "the lesion appears at the center of the screen".into(),
                _ => format!(
                    "the lesion appears on the {} side of the screen",
                    pos.as_str()
                ),
            };
            worded(pos.as_str(), long)
        }
        "pos.site" => {
            let site = labels.lesion?.anatomical_site;
            worded(
                site.as_str(),
                format!("this view lies in the {} segment", site.as_str()),
            )
        }
        "siz.mm" => {
            let mm = labels.lesion?.size_mm;
            AnswerParts {
                short: mm.to_string(),
                long: format!("the lesion measures about {mm} mm across"),
                keywords: vec![mm.to_string(), "mm".into()],
            }
        }
        "diag.histology" => {
            let histo = labels.lesion?.histopathology;
            worded(
                histo.as_str(),
                format!("the lesion appears {} in this view", histo.as_str()),
            )
        }
        "op.occlusion" => yes_no(
            labels.occluded,
            "yes the view is partly occluded here",
            "no the view is not occluded here",
        ),
        "op.flushing" => yes_no(
            labels.flushing,
            "yes flushing briefly washes over the view",
            "no flushing happens during this clip",
        ),
        "op.illumination" => {
            if labels.narrow_band {
                AnswerParts {
                    short: "narrow band".into(),
                    long: "the clip uses narrow band imaging mode".into(),
                    keywords: vec!["narrow".into(), "band".into()],
                }
            } else {
                AnswerParts {
                    short: "white light".into(),
                    long: "the clip uses plain white light imaging".into(),
                    keywords: vec!["white".into(), "light".into()],
                }
            }
        }
        "op.visibility" => yes_no(
            labels.visibility,
            "yes visibility stays adequate in this clip",
            "no visibility drops too low in this clip",
        ),
        "op.lens" => yes_no(
            !labels.occluded && !labels.flushing,
            "yes the lens stays clear for most frames",
            "no the lens is not clear here",
        ),
        "mov.advancing" => yes_no(
            labels.motion == ScopeMotion::Advancing,
            "yes the scope is advancing deeper here",
            "no the scope is not advancing here",
        ),
        "mov.withdrawing" => yes_no(
            labels.motion == ScopeMotion::Withdrawing,
            "yes the scope is withdrawing right now",
            "no the scope is not withdrawing here",
        ),
        "mov.exiting" => yes_no(
            labels.motion == ScopeMotion::Exiting,
            "yes the scope is exiting the segment",
            "no the scope is not exiting here",
        ),
        "mov.kind" => match labels.motion {
            ScopeMotion::Advancing => {
                worded("advancing", "the scope is advancing through the colon".into())
            }
            ScopeMotion::Withdrawing => worded(
                "withdrawing",
                "the scope is withdrawing from the colon".into(),
            ),
            ScopeMotion::Exiting => worded("exiting", "the scope is exiting the segment now".into()),
            ScopeMotion::None => worded("steady", "the scope is holding steady in place".into()),
        },
        "mov.closer" => yes_no(
            labels.motion == ScopeMotion::Advancing,
            "yes the camera moves closer to the mucosa",
            "no the camera does not move closer",
        ),
        other => unreachable!("unknown template id {other}"),
    };
    Some(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::annotations::{Histology, LesionAnnotation, Site, Tool};
    use crate::text::tokenize;
    use std::collections::HashSet;

    fn sample_labels() -> Vec<ClipLabels> {
        let lesion = LesionAnnotation {
            on_screen_position: ScreenPos::Left,
            anatomical_site: Site::Sigmoid,
            size_mm: 6,
            histopathology: Histology::Serrated,
        };
        let mut out = Vec::new();
        for motion in ScopeMotion::ALL {
            for tool in [None, Some(Tool::Snare), Some(Tool::Catheter)] {
                for flags in 0..16u32 {
                    out.push(ClipLabels {
                        motion,
                        tool,
                        visibility: flags & 1 != 0,
                        occluded: flags & 2 != 0,
                        flushing: flags & 4 != 0,
                        narrow_band: flags & 8 != 0,
                        lesion: (flags & 1 != 0).then_some(lesion),
                    });
                }
            }
        }
        out
    }

    #[test]
    fn inventory_shape_and_unique_ids() {
        assert_eq!(TEMPLATES.len(), 17);
        let ids: HashSet<&str> = TEMPLATES.iter().map(|t| t.id).collect();
        assert_eq!(ids.len(), 17);
        let count = |d: &str| TEMPLATES.iter().filter(|t| t.domain == d).count();
        assert_eq!(count("instruments"), 3);
        assert_eq!(count("positions"), 2);
        assert_eq!(count("sizing"), 1);
        assert_eq!(count("diagnosis"), 1);
        assert_eq!(count("operation_notes"), 5);
        assert_eq!(count("movement"), 5);
        for t in &TEMPLATES {
            assert_ne!(t.variants[0], t.question);
            assert_ne!(t.variants[1], t.question);
            assert_ne!(t.variants[0], t.variants[1]);
        }
    }

    #[test]
    fn keywords_always_appear_in_the_long_answer() {
        for labels in sample_labels() {
            for t in &TEMPLATES {
                if let Some(parts) = answer(t, &labels) {
                    let long: HashSet<String> = tokenize(&parts.long).into_iter().collect();
                    assert!(!parts.keywords.is_empty(), "{} has no keywords", t.id);
                    for kw in &parts.keywords {
                        assert!(long.contains(kw), "{}: {kw:?} not in {:?}", t.id, parts.long);
                    }
                }
            }
        }
    }

    #[test]
    fn label_dependent_templates_skip_when_inapplicable() {
        let labels = ClipLabels {
            motion: ScopeMotion::None,
            tool: None,
            visibility: true,
            occluded: false,
            flushing: false,
            narrow_band: false,
            lesion: None,
        };
        for id in ["inst.identity", "pos.screen", "pos.site", "siz.mm", "diag.histology"] {
            assert!(answer(template_by_id(id).unwrap(), &labels).is_none());
        }
        // everything else still answers
        let answered = TEMPLATES
            .iter()
            .filter(|t| answer(t, &labels).is_some())
            .count();
        assert_eq!(answered, 12);
        let kind = answer(template_by_id("mov.kind").unwrap(), &labels).unwrap();
        assert_eq!(kind.short, "steady");
    }

    #[test]
    fn specific_answers_match_labels() {
        let labels = ClipLabels {
            motion: ScopeMotion::Withdrawing,
            tool: Some(Tool::Snare),
            visibility: true,
            occluded: true,
            flushing: false,
            narrow_band: true,
            lesion: Some(LesionAnnotation {
                on_screen_position: ScreenPos::Center,
                anatomical_site: Site::Cecum,
                size_mm: 9,
                histopathology: Histology::Adenomatous,
            }),
        };
        let get = |id: &str| answer(template_by_id(id).unwrap(), &labels).unwrap();
        assert_eq!(get("inst.identity").short, "snare");
        assert_eq!(get("inst.count").short, "one");
        assert_eq!(
            get("pos.screen").long,
            "the lesion appears at the center of the screen"
        );
        assert_eq!(get("siz.mm").short, "9");
        assert_eq!(get("siz.mm").keywords, vec!["9".to_string(), "mm".to_string()]);
        assert_eq!(get("diag.histology").short, "adenomatous");
        assert_eq!(get("op.illumination").short, "narrow band");
        assert_eq!(get("op.lens").short, "no");
        assert_eq!(get("mov.withdrawing").short, "yes");
        assert_eq!(get("mov.advancing").short, "no");
        assert_eq!(get("mov.closer").short, "no");
        assert_eq!(get("mov.kind").long, "the scope is withdrawing from the colon");
    }

    #[test]
    fn question_statistics_sit_in_the_expected_band() {
        let chars: f64 = TEMPLATES.iter().map(|t| t.question.len() as f64).sum::<f64>()
            / TEMPLATES.len() as f64;
        let words: f64 = TEMPLATES
            .iter()
            .map(|t| t.question.split_whitespace().count() as f64)
            .sum::<f64>()
            / TEMPLATES.len() as f64;
        assert!((28.7..=53.3).contains(&chars), "mean question chars {chars}");
        assert!((5.25..=9.75).contains(&words), "mean question words {words}");
    }
}
