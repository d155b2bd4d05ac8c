//! Evaluation and ablation reports: serializable summaries, fixed-width
//! text tables, and structural validators for the emitted JSON (mirroring
//! `docs/report_schema.json`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metrics::CorpusScores;

pub const SCHEMA_VERSION: u64 = 1;

const METRIC_KEYS: [&str; 6] = ["bleu3", "bleu4", "rouge2", "rougel", "meteor", "kacc"];

/// The six corpus metrics on the 0-100 scale.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge2: f64,
    pub rougel: f64,
    pub meteor: f64,
    pub kacc: f64,
}

impl From<CorpusScores> for MetricSummary {
    fn from(c: CorpusScores) -> Self {
        MetricSummary {
            bleu3: c.bleu3,
            bleu4: c.bleu4,
            rouge2: c.rouge2,
            rougel: c.rougel,
            meteor: c.meteor,
            kacc: c.kacc,
        }
    }
}

impl MetricSummary {
    fn row(&self) -> String {
        format!(
            "{:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            self.bleu3, self.bleu4, self.rouge2, self.rougel, self.meteor, self.kacc
        )
    }

    fn header() -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "BLEU-3", "BLEU-4", "ROUGE-2", "ROUGE-L", "METEOR", "K-ACC"
        )
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct CategoryEntry {
    pub n_items: usize,
    #[serde(flatten)]
    pub metrics: MetricSummary,
}

/// One evaluation run over a split.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub schema_version: u64,
    pub split: String,
    pub n_items: usize,
    pub overall: MetricSummary,
    pub per_category: BTreeMap<String, CategoryEntry>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "split {}   items {}\n\n{:<16} {}\n",
            self.split,
            self.n_items,
            "scope",
            MetricSummary::header()
        ));
        out.push_str(&format!("{:<16} {}\n", "overall", self.overall.row()));
        for (cat, entry) in &self.per_category {
            out.push_str(&format!(
                "{:<16} {}   ({} items)\n",
                cat,
                entry.metrics.row(),
                entry.n_items
            ));
        }
        out
    }
}

/// One keyword-weight setting in an ablation sweep.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub lambda: f64,
    pub metrics: MetricSummary,
}

/// A keyword-weight sweep where every row starts from the same saved
/// initialization (fingerprinted so reruns are comparable).
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub schema_version: u64,
    pub init_checkpoint_hash: String,
    pub n_train: usize,
    pub n_eval: usize,
    pub epochs: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "shared init {}   train {}   eval {}   epochs {}\n\n{:>8} {}\n",
            self.init_checkpoint_hash,
            self.n_train,
            self.n_eval,
            self.epochs,
            "lambda",
            MetricSummary::header()
        );
        for row in &self.rows {
            out.push_str(&format!("{:>8} {}\n", row.lambda, row.metrics.row()));
        }
        out
    }
}

fn want_object<'v>(v: &'v Value, ctx: &str) -> Result<&'v serde_json::Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::Config(format!("{ctx}: expected an object")))
}

fn want_u64(obj: &serde_json::Map<String, Value>, key: &str, ctx: &str) -> Result<u64> {
    obj.get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Config(format!("{ctx}: missing unsigned integer {key:?}")))
}

fn check_metric_block(v: &Value, ctx: &str) -> Result<()> {
    let obj = want_object(v, ctx)?;
    for key in METRIC_KEYS {
        let x = obj
            .get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Config(format!("{ctx}: missing number {key:?}")))?;
        if !(0.0..=100.0).contains(&x) {
            return Err(Error::Config(format!("{ctx}: {key} = {x} outside [0, 100]")));
        }
    }
    Ok(())
}

fn check_version(obj: &serde_json::Map<String, Value>, ctx: &str) -> Result<()> {
    let v = want_u64(obj, "schema_version", ctx)?;
    if v != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{ctx}: schema_version {v}, supported {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

/// Structural check of an evaluation report JSON document.
pub fn validate_report_json(v: &Value) -> Result<()> {
    let obj = want_object(v, "report")?;
    check_version(obj, "report")?;
    if obj.get("split").and_then(Value::as_str).is_none() {
        return Err(Error::Config("report: missing string \"split\"".into()));
    }
    let n = want_u64(obj, "n_items", "report")?;
    let overall = obj
        .get("overall")
        .ok_or_else(|| Error::Config("report: missing \"overall\"".into()))?;
    check_metric_block(overall, "report.overall")?;
    let cats = want_object(
        obj.get("per_category")
            .ok_or_else(|| Error::Config("report: missing \"per_category\"".into()))?,
        "report.per_category",
    )?;
    let mut cat_total = 0;
    for (name, entry) in cats {
        let ctx = format!("report.per_category.{name}");
        let eobj = want_object(entry, &ctx)?;
        cat_total += want_u64(eobj, "n_items", &ctx)?;
        check_metric_block(entry, &ctx)?;
    }
    if !cats.is_empty() && cat_total != n {
        return Err(Error::Config(format!(
            "report: category item counts sum to {cat_total}, n_items is {n}"
        )));
    }
    Ok(())
}

/// Structural check of an ablation report JSON document.
pub fn validate_ablation_json(v: &Value) -> Result<()> {
    let obj = want_object(v, "ablation")?;
    check_version(obj, "ablation")?;
    let hash = obj
        .get("init_checkpoint_hash")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Config("ablation: missing string \"init_checkpoint_hash\"".into()))?;
    if hash.len() != 16 || !hash.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::Config(format!(
            "ablation: init_checkpoint_hash {hash:?} is not 16 hex digits"
        )));
    }
    for key in ["n_train", "n_eval", "epochs"] {
        want_u64(obj, key, "ablation")?;
    }
    let rows = obj
        .get("rows")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Config("ablation: missing array \"rows\"".into()))?;
    if rows.is_empty() {
        return Err(Error::Config("ablation: empty \"rows\"".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        let ctx = format!("ablation.rows[{i}]");
        let robj = want_object(row, &ctx)?;
        let lambda = robj
            .get("lambda")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Config(format!("{ctx}: missing number \"lambda\"")))?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Config(format!("{ctx}: lambda {lambda} must be positive")));
        }
        let metrics = robj
            .get("metrics")
            .ok_or_else(|| Error::Config(format!("{ctx}: missing \"metrics\"")))?;
        check_metric_block(metrics, &format!("{ctx}.metrics"))?;
    }
    Ok(())
}
