//! QA metrics, grouped aggregation with seeded bootstrap dispersion, and the
//! benchmark runner.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::generation::ScriptedClient;
use crate::hash::fnv1a64;
use crate::pipeline::{EegQuery, Pipeline, QueryInput};
use crate::retrieval::MetadataQuery;
use crate::{jsonl, Error, Result};

pub const QA_FILE: &str = "qa.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub domain: String,
    pub role: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eeg_ref: Option<String>,
    pub gold: String,
}

impl QaExample {
    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() || self.gold.trim().is_empty() {
            return Err(Error::invalid(format!("example `{}` needs a question and a gold answer", self.id)));
        }
        Ok(())
    }

    pub fn to_input(&self) -> QueryInput {
        let mut query = MetadataQuery::new(&self.question).with_role(&self.role);
        query.domain = Some(self.domain.clone());
        QueryInput {
            query,
            eeg: self.eeg_ref.clone().map(EegQuery::StoredId),
        }
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<QaExample>> {
    let rows: Vec<QaExample> = jsonl::read(path)?;
    for r in &rows {
        r.validate()?;
    }
    Ok(rows)
}

/// Lowercase, drop punctuation, drop the articles "a", "an" and "the", and
/// split on whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

/// 1.0 when the normalized token lists are identical, else 0.0.
pub fn exact_match(pred: &str, gold: &str) -> f64 {
    f64::from(u8::from(normalize_answer(pred) == normalize_answer(gold)))
}

/// Token-level F1 over multiset overlap of normalized tokens.
pub fn f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    if p.is_empty() || g.is_empty() {
        return f64::from(u8::from(p.is_empty() && g.is_empty()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub id: String,
    pub domain: String,
    pub role: String,
    pub prediction: Option<String>,
    /// 0 or 100.
    pub em: f64,
    /// Percent.
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub group: String,
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    /// Bootstrap standard deviation of the group mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1_std: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub resamples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: Vec<ExampleResult>,
    pub overall: Aggregate,
    pub per_domain: Vec<Aggregate>,
    pub per_role: Vec<Aggregate>,
    pub errored: usize,
    /// Present when dispersion was estimated; the `*_std` fields are then
    /// seeded nonparametric bootstrap standard deviations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSpec>,
}

/// Seeded bootstrap of the means of paired `(em, f1)` scores.
///
/// Each of the `resamples` replicates draws `n` indices uniformly with
/// replacement from a ChaCha8 stream seeded with `seed ^ fnv1a64(group)`; an
/// index is the high 64 bits of `next_u64() * n`. Returns the sample standard
/// deviations of the replicate means of EM and F1, or zeros for fewer than two
/// replicates.
pub fn bootstrap_std(scores: &[(f64, f64)], group: &str, resamples: usize, seed: u64) -> (f64, f64) {
    let n = scores.len();
    if n == 0 || resamples < 2 {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(group.as_bytes()));
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let (mut em, mut f) = (0.0, 0.0);
        for _ in 0..n {
            let i = ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize;
            em += scores[i].0;
            f += scores[i].1;
        }
        means.push((em / n as f64, f / n as f64));
    }
    let r = resamples as f64;
    let (mem, mf) = means.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mem, mf) = (mem / r, mf / r);
    let (vem, vf) = means
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mem).powi(2), b + (y - mf).powi(2)));
    ((vem / (r - 1.0)).sqrt(), (vf / (r - 1.0)).sqrt())
}

fn aggregate(group: &str, rows: &[&ExampleResult], bootstrap: Option<BootstrapSpec>) -> Aggregate {
    let n = rows.len();
    let mean = |f: fn(&ExampleResult) -> f64| {
        if n == 0 {
            0.0
        } else {
            rows.iter().map(|r| f(r)).sum::<f64>() / n as f64
        }
    };
    let (em_std, f1_std) = match bootstrap {
        Some(b) => {
            let scores: Vec<(f64, f64)> = rows.iter().map(|r| (r.em, r.f1)).collect();
            let (e, f) = bootstrap_std(&scores, group, b.resamples, b.seed);
            (Some(e), Some(f))
        }
        None => (None, None),
    };
    Aggregate {
        group: group.to_string(),
        n,
        em: mean(|r| r.em),
        f1: mean(|r| r.f1),
        em_std,
        f1_std,
    }
}

/// Aggregate scored examples. Errored rows are excluded; rows are ordered by
/// id first so the result does not depend on dataset order.
pub fn summarize(mut examples: Vec<ExampleResult>, bootstrap: Option<BootstrapSpec>) -> EvalReport {
    examples.sort_by(|a, b| a.id.cmp(&b.id));
    let ok: Vec<&ExampleResult> = examples.iter().filter(|e| e.error.is_none()).collect();
    let mut domains: BTreeMap<&str, Vec<&ExampleResult>> = BTreeMap::new();
    let mut roles: BTreeMap<&str, Vec<&ExampleResult>> = BTreeMap::new();
    for e in &ok {
        domains.entry(&e.domain).or_default().push(e);
        roles.entry(&e.role).or_default().push(e);
    }
    let per_domain = domains
        .iter()
        .map(|(d, rows)| aggregate(&format!("domain:{d}"), rows, bootstrap))
        .collect();
    let per_role = roles
        .iter()
        .map(|(r, rows)| aggregate(&format!("role:{r}"), rows, bootstrap))
        .collect();
    let overall = aggregate("overall", &ok, bootstrap);
    let errored = examples.len() - ok.len();
    EvalReport {
        examples,
        overall,
        per_domain,
        per_role,
        errored,
        bootstrap,
    }
}

pub fn score_example(ex: &QaExample, prediction: &str) -> ExampleResult {
    ExampleResult {
        id: ex.id.clone(),
        domain: ex.domain.clone(),
        role: ex.role.clone(),
        prediction: Some(prediction.to_string()),
        em: 100.0 * exact_match(prediction, &ex.gold),
        f1: 100.0 * f1(prediction, &ex.gold),
        error: None,
    }
}

/// A client answering every dataset question with its gold answer.
pub fn echo_gold_client(dataset: &[QaExample]) -> ScriptedClient {
    ScriptedClient::new(dataset.iter().map(|e| (e.question.clone(), e.gold.clone())))
}

/// Run every example through `pipeline` and score it. Failed examples (such
/// as an unknown `eeg_ref`) are recorded as errored and left out of the
/// aggregates. `resamples == 0` skips the bootstrap.
pub fn run_benchmark(dataset: &[QaExample], pipeline: &Pipeline, resamples: usize, seed: u64) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::invalid("benchmark dataset is empty"));
    }
    for ex in dataset {
        ex.validate()?;
    }
    let inputs: Vec<QueryInput> = dataset.iter().map(QaExample::to_input).collect();
    let outputs = pipeline.query_batch(&inputs);
    let results = dataset
        .iter()
        .zip(outputs)
        .map(|(ex, out)| match out {
            Ok(o) => score_example(ex, &o.answer),
            Err(e) => {
                log::warn!("example `{}` failed: {e}", ex.id);
                ExampleResult {
                    id: ex.id.clone(),
                    domain: ex.domain.clone(),
                    role: ex.role.clone(),
                    prediction: None,
                    em: 0.0,
                    f1: 0.0,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    let bootstrap = (resamples > 0).then_some(BootstrapSpec { resamples, seed });
    Ok(summarize(results, bootstrap))
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned text table with one row per domain, per role and overall.
    pub fn table(&self) -> String {
        let rows: Vec<&Aggregate> = self
            .per_domain
            .iter()
            .chain(&self.per_role)
            .chain(std::iter::once(&self.overall))
            .collect();
        let width = rows.iter().map(|a| a.group.len()).max().unwrap_or(0).max("group".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>4}  {:>7}  {:>7}  {:>7}  {:>7}",
            "group", "n", "F1", "EM", "F1 std", "EM std"
        );
        for a in rows {
            let std = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |s| format!("{s:.2}"));
            let _ = writeln!(
                out,
                "{:<width$}  {:>4}  {:>7.2}  {:>7.2}  {:>7}  {:>7}",
                a.group,
                a.n,
                a.f1,
                a.em,
                std(a.f1_std),
                std(a.em_std)
            );
        }
        if self.errored > 0 {
            let _ = writeln!(out, "errored examples: {}", self.errored);
        }
        if self.bootstrap.is_some() {
            let _ = writeln!(out, "std: seeded bootstrap standard deviation of the group mean");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = dir.join(REPORT_FILE);
        std::fs::write(&report, self.to_json()).map_err(|e| Error::io(&report, e))?;
        let table = dir.join(TABLE_FILE);
        std::fs::write(&table, self.table()).map_err(|e| Error::io(&table, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("The Mild Depression."), toks(&["mild", "depression"]));
        assert!(normalize_answer("").is_empty());
        assert!(normalize_answer("a  A   the").is_empty());
    }

    #[test]
    fn exact_match_cases() {
        assert_eq!(exact_match("mild depression", "Mild depression."), 1.0);
        assert_eq!(exact_match("depression", "epilepsy"), 0.0);
        assert_eq!(exact_match("", ""), 1.0);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1("mild depression", "moderate depression"), 0.5);
        assert_eq!(f1("absence seizure", "absence seizure"), 1.0);
        assert_eq!(f1("alpha", "theta"), 0.0);
        assert_eq!(f1("", ""), 1.0);
        assert_eq!(f1("", "x"), 0.0);
        assert_eq!(f1("x", ""), 0.0);
        // Multiset: one repeated token overlaps once.
        assert_eq!(f1("spike spike", "spike wave"), 0.5);
    }

    fn result(id: &str, domain: &str, em: f64) -> ExampleResult {
        ExampleResult {
            id: id.into(),
            domain: domain.into(),
            role: "doctor".into(),
            prediction: Some(String::new()),
            em,
            f1: em,
            error: None,
        }
    }

    #[test]
    fn mean_and_errored_exclusion() {
        let mut bad = result("c", "x", 0.0);
        bad.error = Some("missing".into());
        let r = summarize(vec![result("a", "x", 100.0), result("b", "y", 0.0), bad], None);
        assert_eq!(r.overall.em, 50.0);
        assert_eq!(r.overall.n, 2);
        assert_eq!(r.errored, 1);
        assert_eq!(r.per_domain.len(), 2);
        assert!(r.table().contains("errored examples: 1"));
    }

    #[test]
    fn permutation_invariant() {
        let a = vec![result("a", "x", 100.0), result("b", "y", 0.0), result("c", "x", 100.0)];
        let mut b = a.clone();
        b.reverse();
        let spec = Some(BootstrapSpec { resamples: 50, seed: 7 });
        assert_eq!(summarize(a, spec).to_json(), summarize(b, spec).to_json());
    }

    #[test]
    fn bootstrap_of_constant_scores_is_zero() {
        let (e, f) = bootstrap_std(&[(100.0, 100.0); 4], "overall", 100, 7);
        assert_eq!((e, f), (0.0, 0.0));
    }
}
