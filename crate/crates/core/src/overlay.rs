//! Feedback rules and the response generator that applies them on top of a model.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explainer::RuleSet;
use crate::model::BinaryClassifier;
use crate::rules::{
    parse_rule, rules_conflict, ClassLabel, Clause, Instance, ParseError, Rule, Schema,
    SchemaError,
};
use crate::transform::{
    apply_transformation, build_transformation, TransformError, TransformationConfig,
    TransformationFunction,
};

pub type RuleId = u64;

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("corrected rule conflicts with feedback rule {conflict_with}")]
    Conflict { conflict_with: RuleId },
    #[error("corrected rule is identical to the original rule")]
    Unchanged,
    #[error("no feedback rule with id {0}")]
    UnknownId(RuleId),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// A stored correction `(R, R', T)`. Without `original` it is a complementary rule.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRule {
    pub id: RuleId,
    pub original: Option<Rule>,
    pub corrected: Rule,
    pub transformation: Option<TransformationFunction>,
    pub seq: u64,
}

type Key = (Clause, ClassLabel);

/// Feedback rules keyed by the explanation and prediction they correct.
#[derive(Debug, Clone, Default)]
pub struct FeedbackTable {
    rules: Vec<FeedbackRule>,
    // key -> positions in `rules`, in insertion order
    index: HashMap<Key, Vec<usize>>,
    // keys in order of first insertion
    keys: Vec<Key>,
    next_id: RuleId,
    next_seq: u64,
}

impl FeedbackTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[FeedbackRule] {
        &self.rules
    }

    pub fn get(&self, id: RuleId) -> Option<&FeedbackRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Stores a correction; a corrected rule that conflicts with a stored one is rejected.
    pub fn add_feedback_rule(
        &mut self,
        corrected: Rule,
        original: Option<Rule>,
        config: &TransformationConfig,
        schema: &Schema,
    ) -> Result<&FeedbackRule, OverlayError> {
        if original.as_ref() == Some(&corrected) {
            return Err(OverlayError::Unchanged);
        }
        self.check_conflicts(&corrected, schema)?;
        let transformation = match &original {
            Some(r) => Some(build_transformation(r, &corrected, config)?),
            None => None,
        };
        let rule = FeedbackRule {
            id: self.next_id,
            original,
            corrected,
            transformation,
            seq: self.next_seq,
        };
        Ok(self.push(rule))
    }

    fn check_conflicts(&self, corrected: &Rule, schema: &Schema) -> Result<(), OverlayError> {
        for stored in &self.rules {
            if rules_conflict(&stored.corrected, corrected, schema)? {
                return Err(OverlayError::Conflict {
                    conflict_with: stored.id,
                });
            }
        }
        Ok(())
    }

    fn push(&mut self, rule: FeedbackRule) -> &FeedbackRule {
        self.next_id = self.next_id.max(rule.id + 1);
        self.next_seq = self.next_seq.max(rule.seq + 1);
        let position = self.rules.len();
        if let Some(original) = &rule.original {
            let key = (original.clause.clone(), original.label);
            let slot = self.index.entry(key.clone()).or_default();
            if slot.is_empty() {
                self.keys.push(key);
            }
            slot.push(position);
        }
        self.rules.push(rule);
        &self.rules[position]
    }

    pub fn remove(&mut self, id: RuleId) -> Result<FeedbackRule, OverlayError> {
        let position = self
            .rules
            .iter()
            .position(|r| r.id == id)
            .ok_or(OverlayError::UnknownId(id))?;
        let removed = self.rules.remove(position);
        let rules = std::mem::take(&mut self.rules);
        let (next_id, next_seq) = (self.next_id, self.next_seq);
        self.index.clear();
        self.keys.clear();
        for rule in rules {
            self.push(rule);
        }
        self.next_id = next_id;
        self.next_seq = next_seq;
        Ok(removed)
    }

    /// Rules stored under `(e, p)`, oldest first.
    pub fn retrieve(&self, e: &Clause, p: ClassLabel) -> Vec<&FeedbackRule> {
        self.index
            .get(&(e.clone(), p))
            .map(|ps| ps.iter().map(|&i| &self.rules[i]).collect())
            .unwrap_or_default()
    }

    fn complementary(&self) -> Vec<&FeedbackRule> {
        self.rules.iter().filter(|r| r.original.is_none()).collect()
    }

    pub fn to_jsonl(&self, schema: &Schema) -> String {
        let mut out = String::new();
        for rule in &self.rules {
            let record = Record {
                id: rule.id,
                original: rule.original.as_ref().map(|r| RuleRecord::new(r, schema)),
                corrected: RuleRecord::new(&rule.corrected, schema),
                transformation: rule.transformation.clone(),
                seq: rule.seq,
            };
            out.push_str(&serde_json::to_string(&record).expect("feedback record serializes"));
            out.push('\n');
        }
        out
    }

    /// Loads a table written by [`FeedbackTable::to_jsonl`], re-checking conflicts.
    /// Records without a stored transformation get one rebuilt from `config`.
    pub fn from_jsonl(
        text: &str,
        schema: &Schema,
        config: &TransformationConfig,
    ) -> Result<Self, OverlayError> {
        let mut table = FeedbackTable::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(line).map_err(|source| OverlayError::Json {
                line: line_no,
                source,
            })?;
            let parse = |r: &RuleRecord| {
                parse_rule(&r.clause, &r.label, schema).map_err(|source| OverlayError::Parse {
                    line: line_no,
                    source,
                })
            };
            let corrected = parse(&record.corrected)?;
            let original = record.original.as_ref().map(parse).transpose()?;
            table.check_conflicts(&corrected, schema)?;
            let transformation = match (&original, record.transformation) {
                (Some(_), Some(t)) => Some(t),
                (Some(r), None) => Some(build_transformation(r, &corrected, config)?),
                (None, _) => None,
            };
            table.push(FeedbackRule {
                id: record.id,
                original,
                corrected,
                transformation,
                seq: record.seq,
            });
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub clause: String,
    pub label: String,
}

impl RuleRecord {
    pub fn new(rule: &Rule, schema: &Schema) -> Self {
        RuleRecord {
            clause: rule.clause.to_string(),
            label: schema.label_name(rule.label).to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: RuleId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    original: Option<RuleRecord>,
    corrected: RuleRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transformation: Option<TransformationFunction>,
    seq: u64,
}

/// What the system answers for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub model_prediction: ClassLabel,
    /// The user's label, when a feedback rule applied.
    pub user_label: Option<ClassLabel>,
    pub explanation: Option<Clause>,
    pub transformation: Option<String>,
    pub feedback_id: Option<RuleId>,
    pub sc_prediction: ClassLabel,
    pub hc_prediction: ClassLabel,
}

impl Response {
    fn bare(p: ClassLabel, explanation: Option<Clause>) -> Self {
        Response {
            model_prediction: p,
            user_label: None,
            explanation,
            transformation: None,
            feedback_id: None,
            sc_prediction: p,
            hc_prediction: p,
        }
    }
}

pub fn get_other_label(p: ClassLabel) -> ClassLabel {
    p.other()
}

/// Result of scanning one candidate list.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    /// The model agrees with the user label, directly or after transformation.
    Confirmed(Response),
    /// A rule applied but its transformation did not move the model.
    Unconfirmed(Response),
    Empty,
}

/// Checks candidates in order against `x`, which the model labels `p`.
///
/// A candidate is admitted when `x` satisfies `e` or its `e'`. Complementary
/// candidates carry no `e` of their own, so they need `x` to satisfy `e'`.
pub fn evaluate_feedback_rules<M, R>(
    x: &Instance,
    e: &Clause,
    p: ClassLabel,
    candidates: &[&FeedbackRule],
    model: &M,
    rng: &mut R,
) -> Evaluation
where
    M: BinaryClassifier + ?Sized,
    R: Rng + ?Sized,
{
    let mut last = None;
    for fr in candidates {
        let e_prime = &fr.corrected.clause;
        let in_e_prime = e_prime.satisfies(x);
        let in_e = fr.original.is_some() && e.satisfies(x);
        if !(in_e || in_e_prime) {
            continue;
        }
        let user_label = if in_e_prime {
            fr.corrected.label
        } else {
            get_other_label(fr.corrected.label)
        };
        let mut response = Response {
            model_prediction: p,
            user_label: Some(user_label),
            explanation: Some(e_prime.clone()),
            transformation: None,
            feedback_id: Some(fr.id),
            sc_prediction: p,
            hc_prediction: user_label,
        };
        if p == user_label {
            // model is already capturing this rule
            return Evaluation::Confirmed(response);
        }
        let new_p = match &fr.transformation {
            Some(t) => {
                response.transformation = Some(t.description.clone());
                model.predict(&apply_transformation(x, t, rng))
            }
            None => model.predict(x),
        };
        response.sc_prediction = new_p;
        if new_p == user_label {
            return Evaluation::Confirmed(response);
        }
        last = Some(response);
    }
    match last {
        Some(r) => Evaluation::Unconfirmed(r),
        None => Evaluation::Empty,
    }
}

/// Model prediction for `x`, patched by whatever feedback rule applies.
pub fn generate_response<M, R>(
    x: &Instance,
    model: &M,
    ers: &RuleSet,
    table: &FeedbackTable,
    rng: &mut R,
) -> Response
where
    M: BinaryClassifier + ?Sized,
    R: Rng + ?Sized,
{
    let p = model.predict(x);
    let explanations = ers.explain(x, p);
    let mut last: Option<Response> = None;
    let mut visited: Vec<&Key> = Vec::new();

    for e in &explanations {
        let candidates = table.retrieve(e, p);
        match evaluate_feedback_rules(x, e, p, &candidates, model, rng) {
            Evaluation::Confirmed(r) => return r,
            Evaluation::Unconfirmed(r) => last = Some(r),
            Evaluation::Empty => {}
        }
    }
    for key in &table.keys {
        if explanations.contains(&&key.0) && key.1 == p {
            visited.push(key);
        }
    }

    if last.is_none() {
        for key in &table.keys {
            if visited.contains(&key) {
                continue;
            }
            let candidates = table.retrieve(&key.0, key.1);
            match evaluate_feedback_rules(x, &key.0, p, &candidates, model, rng) {
                Evaluation::Confirmed(r) => return r,
                Evaluation::Unconfirmed(r) => last = Some(r),
                Evaluation::Empty => {}
            }
        }
        let complementary = table.complementary();
        match evaluate_feedback_rules(x, &Clause::empty(), p, &complementary, model, rng) {
            Evaluation::Confirmed(r) => return r,
            Evaluation::Unconfirmed(r) => last = Some(r),
            Evaluation::Empty => {}
        }
    }

    last.unwrap_or_else(|| {
        let chosen = match explanations.len() {
            0 => None,
            1 => Some(explanations[0].clone()),
            n => Some(explanations[rng.gen_range(0..n)].clone()),
        };
        Response::bare(p, chosen)
    })
}
