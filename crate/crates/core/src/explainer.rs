//! Per-class DNF rule sets and a decision-tree rule inducer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{
    parse_rule, rules_conflict, ClassLabel, Clause, Condition, FeatureKind, Instance, Op,
    ParseError, Rule, Schema, Value,
};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("rule set has no class named `{0}`")]
    UnknownClass(String),
    #[error("invalid clause for class `{label}`: {source}")]
    Clause {
        label: String,
        #[source]
        source: ParseError,
    },
    #[error("malformed rule set file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RuleSetRole {
    /// Explains a fitted model.
    Ers,
    /// Explains a model fitted on part of the data.
    Pkrs,
    /// Oracle learned from ground truth on all data.
    Fkrs,
}

/// Clauses for each class; an instance gets class `c` if it satisfies any clause of `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub role: RuleSetRole,
    classes: [Vec<Clause>; 2],
}

#[derive(Serialize, Deserialize)]
struct RuleSetFile {
    role: RuleSetRole,
    classes: BTreeMap<String, Vec<String>>,
}

impl RuleSet {
    pub fn new(role: RuleSetRole, negative: Vec<Clause>, positive: Vec<Clause>) -> Self {
        RuleSet {
            role,
            classes: [negative, positive],
        }
    }

    pub fn clauses(&self, label: ClassLabel) -> &[Clause] {
        &self.classes[label.index()]
    }

    pub fn len(&self) -> usize {
        self.classes[0].len() + self.classes[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Clauses of `label` satisfied by `x`, in rule-set order.
    pub fn explain(&self, x: &Instance, label: ClassLabel) -> Vec<&Clause> {
        self.clauses(label)
            .iter()
            .filter(|c| c.satisfies(x))
            .collect()
    }

    /// Class of the first satisfied clause, scanning negative clauses first.
    pub fn classify(&self, x: &Instance) -> Option<ClassLabel> {
        ClassLabel::BOTH
            .into_iter()
            .find(|&label| self.clauses(label).iter().any(|c| c.satisfies(x)))
    }

    /// Fraction of instances whose classification equals the given label.
    /// Uncovered instances count as errors.
    pub fn accuracy(&self, xs: &[Instance], ys: &[ClassLabel]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        let hits = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| self.classify(x) == Some(**y))
            .count();
        hits as f64 / xs.len() as f64
    }

    /// Cross-class clause pairs that some instance satisfies together.
    pub fn conflicts(&self, schema: &Schema) -> Vec<(Clause, Clause)> {
        let mut out = Vec::new();
        for a in &self.classes[0] {
            for b in &self.classes[1] {
                let ra = Rule::new(a.clone(), ClassLabel::Negative);
                let rb = Rule::new(b.clone(), ClassLabel::Positive);
                if rules_conflict(&ra, &rb, schema).unwrap_or(true) {
                    out.push((a.clone(), b.clone()));
                }
            }
        }
        out
    }

    pub fn to_json(&self, schema: &Schema) -> String {
        let classes = ClassLabel::BOTH
            .into_iter()
            .map(|l| {
                let texts = self.clauses(l).iter().map(ToString::to_string).collect();
                (schema.label_name(l).to_string(), texts)
            })
            .collect();
        let file = RuleSetFile {
            role: self.role,
            classes,
        };
        serde_json::to_string_pretty(&file).expect("rule set serializes")
    }

    pub fn from_json(text: &str, schema: &Schema) -> Result<Self, ExplainError> {
        let file: RuleSetFile = serde_json::from_str(text)?;
        let mut classes: [Vec<Clause>; 2] = Default::default();
        for (name, texts) in &file.classes {
            let label = schema
                .parse_label(name)
                .map_err(|_| ExplainError::UnknownClass(name.clone()))?;
            for text in texts {
                let rule = parse_rule(text, name, schema).map_err(|source| ExplainError::Clause {
                    label: name.clone(),
                    source,
                })?;
                classes[label.index()].push(rule.clause);
            }
        }
        Ok(RuleSet {
            role: file.role,
            classes,
        })
    }
}

/// Something that learns a rule set from labelled instances.
pub trait RuleInducer: Send + Sync {
    fn induce(
        &self,
        schema: &Schema,
        xs: &[Instance],
        labels: &[ClassLabel],
        role: RuleSetRole,
    ) -> RuleSet;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or no split is possible.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Leaves whose majority share is below this emit no clause.
    pub purity_threshold: f64,
}

impl TreeConfig {
    /// Depth 5, every leaf becomes a clause.
    pub fn explainer() -> Self {
        TreeConfig {
            max_depth: Some(5),
            min_leaf: 1,
            purity_threshold: 0.0,
        }
    }

    /// Unlimited depth, only leaves at least 90% pure become clauses.
    pub fn oracle() -> Self {
        TreeConfig {
            max_depth: None,
            min_leaf: 1,
            purity_threshold: 0.9,
        }
    }
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self::explainer()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Test {
    /// `value <= threshold` goes left.
    AtMost(f64),
    /// `value == category` goes left.
    Is(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        test: Test,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn majority(counts: [usize; 2]) -> ClassLabel {
        if counts[1] > counts[0] {
            ClassLabel::Positive
        } else {
            ClassLabel::Negative
        }
    }
}

/// Entropy-criterion binary tree over a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: Node,
}

// What a root-to-node path already says about one feature.
#[derive(Debug, Clone, PartialEq)]
enum PathState {
    Free,
    // Numeric features are split at most once per path: a second split on the
    // same feature would leave one child with a two-sided interval, which a
    // single condition cannot express.
    Bounded,
    Excludes(String),
    Pinned,
}

fn entropy(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn count(labels: &[ClassLabel], idx: &[usize]) -> [usize; 2] {
    let mut counts = [0, 0];
    for &i in idx {
        counts[labels[i].index()] += 1;
    }
    counts
}

struct Builder<'a> {
    schema: &'a Schema,
    xs: &'a [Instance],
    labels: &'a [ClassLabel],
    config: TreeConfig,
}

struct Candidate {
    gain: f64,
    feature: usize,
    test: Test,
}

impl Builder<'_> {
    fn grow(&self, idx: Vec<usize>, depth: usize, state: &mut Vec<PathState>) -> Node {
        let counts = count(self.labels, &idx);
        let pure = counts[0] == 0 || counts[1] == 0;
        let capped = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || capped {
            return Node::Leaf { counts };
        }
        let Some(best) = self.best_split(&idx, counts, state) else {
            return Node::Leaf { counts };
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| goes_left(&best.test, self.xs[i].get(best.feature)));
        let saved = state[best.feature].clone();
        let (left_state, right_state) = match (&best.test, &saved) {
            (Test::AtMost(_), _) => (PathState::Bounded, PathState::Bounded),
            (Test::Is(c), PathState::Free) => (PathState::Pinned, PathState::Excludes(c.clone())),
            (Test::Is(_), _) => (PathState::Pinned, PathState::Pinned),
        };
        state[best.feature] = left_state;
        let left = self.grow(left_idx, depth + 1, state);
        state[best.feature] = right_state;
        let right = self.grow(right_idx, depth + 1, state);
        state[best.feature] = saved;
        Node::Split {
            feature: best.feature,
            test: best.test,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&self, idx: &[usize], counts: [usize; 2], state: &[PathState]) -> Option<Candidate> {
        let parent = entropy(counts);
        let n = idx.len() as f64;
        let min_leaf = self.config.min_leaf.max(1);
        let mut best: Option<Candidate> = None;
        let mut consider = |gain: f64, feature: usize, test: Test| {
            if best.as_ref().is_none_or(|b| gain > b.gain + 1e-12) {
                best = Some(Candidate { gain, feature, test });
            }
        };
        for (j, feature) in self.schema.features().iter().enumerate() {
            match (feature.kind, &state[j]) {
                (FeatureKind::Numeric, PathState::Free) => {
                    let mut pairs: Vec<(f64, ClassLabel)> = idx
                        .iter()
                        .map(|&i| (self.xs[i].get(j).as_number().unwrap_or(0.0), self.labels[i]))
                        .collect();
                    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let mut left = [0usize; 2];
                    for k in 0..pairs.len() - 1 {
                        left[pairs[k].1.index()] += 1;
                        let (lo, hi) = (pairs[k].0, pairs[k + 1].0);
                        if lo == hi {
                            continue;
                        }
                        let taken = k + 1;
                        if taken < min_leaf || pairs.len() - taken < min_leaf {
                            continue;
                        }
                        let right = [counts[0] - left[0], counts[1] - left[1]];
                        let child = (taken as f64 * entropy(left)
                            + (pairs.len() - taken) as f64 * entropy(right))
                            / n;
                        let mut threshold = lo + (hi - lo) / 2.0;
                        if threshold >= hi {
                            threshold = lo;
                        }
                        consider(parent - child, j, Test::AtMost(threshold));
                    }
                }
                (FeatureKind::Categorical, PathState::Free | PathState::Excludes(_)) => {
                    let mut seen: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
                    for &i in idx {
                        if let Some(c) = self.xs[i].get(j).as_category() {
                            seen.entry(c).or_default()[self.labels[i].index()] += 1;
                        }
                    }
                    if seen.len() < 2 {
                        continue;
                    }
                    if let PathState::Excludes(excluded) = &state[j] {
                        // Only a split whose "other" side pins one category is expressible.
                        let remaining = feature.domain.iter().filter(|d| *d != excluded).count();
                        if remaining != 2 {
                            continue;
                        }
                    }
                    for (category, left) in &seen {
                        let taken = left[0] + left[1];
                        if taken < min_leaf || idx.len() - taken < min_leaf {
                            continue;
                        }
                        let right = [counts[0] - left[0], counts[1] - left[1]];
                        let child = (taken as f64 * entropy(*left)
                            + (idx.len() - taken) as f64 * entropy(right))
                            / n;
                        consider(parent - child, j, Test::Is(category.to_string()));
                    }
                }
                _ => {}
            }
        }
        best
    }
}

fn goes_left(test: &Test, value: &Value) -> bool {
    match (test, value) {
        (Test::AtMost(t), Value::Number(v)) => v <= t,
        (Test::Is(c), Value::Category(v)) => v == c,
        _ => false,
    }
}

impl DecisionTree {
    pub fn fit(schema: &Schema, xs: &[Instance], labels: &[ClassLabel], config: TreeConfig) -> Self {
        let builder = Builder {
            schema,
            xs,
            labels,
            config,
        };
        let mut state = vec![PathState::Free; schema.len()];
        let root = builder.grow((0..xs.len()).collect(), 0, &mut state);
        DecisionTree { root }
    }

    pub fn predict(&self, x: &Instance) -> ClassLabel {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { counts } => return Node::majority(*counts),
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    node = if goes_left(test, x.get(*feature)) {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    /// One clause per leaf whose majority share reaches `purity_threshold`.
    pub fn to_rule_set(&self, schema: &Schema, purity_threshold: f64, role: RuleSetRole) -> RuleSet {
        let mut classes: [Vec<Clause>; 2] = Default::default();
        let mut path: Vec<Condition> = Vec::new();
        collect(schema, &self.root, &mut path, purity_threshold, &mut classes);
        RuleSet { role, classes }
    }
}

fn collect(
    schema: &Schema,
    node: &Node,
    path: &mut Vec<Condition>,
    purity_threshold: f64,
    classes: &mut [Vec<Clause>; 2],
) {
    match node {
        Node::Leaf { counts } => {
            let total = counts[0] + counts[1];
            if total == 0 {
                return;
            }
            let label = Node::majority(*counts);
            let share = counts[label.index()] as f64 / total as f64;
            if share >= purity_threshold {
                let clause = Clause::new(path.clone()).expect("tree paths hold one condition per feature");
                classes[label.index()].push(clause);
            }
        }
        Node::Split {
            feature,
            test,
            left,
            right,
        } => {
            let f = &schema.features()[*feature];
            let existing = path.iter().position(|c| c.position() == *feature);
            let (left_cond, right_cond) = match test {
                Test::AtMost(t) => (
                    Condition::new(schema, &f.name, Op::Leq, *t),
                    Condition::new(schema, &f.name, Op::Gt, *t),
                ),
                Test::Is(c) => {
                    let right = match existing {
                        // the path already excludes one category; the rest is a single value
                        Some(k) => {
                            let excluded = path[k].value().as_category().unwrap_or_default();
                            let last = f
                                .domain
                                .iter()
                                .find(|d| *d != excluded && *d != c)
                                .expect("split admitted only when one category remains");
                            Condition::new(schema, &f.name, Op::Eq, last.as_str())
                        }
                        None => Condition::new(schema, &f.name, Op::Neq, c.as_str()),
                    };
                    (Condition::new(schema, &f.name, Op::Eq, c.as_str()), right)
                }
            };
            for (cond, child) in [(left_cond, left), (right_cond, right)] {
                let cond = cond.expect("split values come from the data");
                match existing {
                    Some(k) => {
                        let saved = std::mem::replace(&mut path[k], cond);
                        collect(schema, child, path, purity_threshold, classes);
                        path[k] = saved;
                    }
                    None => {
                        path.push(cond);
                        collect(schema, child, path, purity_threshold, classes);
                        path.pop();
                    }
                }
            }
        }
    }
}

/// Entropy tree turned into one clause per leaf.
#[derive(Debug, Clone, Copy, Default)]
pub struct TreeInducer {
    pub config: TreeConfig,
}

impl TreeInducer {
    pub fn new(config: TreeConfig) -> Self {
        TreeInducer { config }
    }
}

impl RuleInducer for TreeInducer {
    fn induce(
        &self,
        schema: &Schema,
        xs: &[Instance],
        labels: &[ClassLabel],
        role: RuleSetRole,
    ) -> RuleSet {
        if xs.is_empty() {
            return RuleSet::new(role, Vec::new(), Vec::new());
        }
        DecisionTree::fit(schema, xs, labels, self.config).to_rule_set(
            schema,
            self.config.purity_threshold,
            role,
        )
    }
}

/// Labels every instance with `labeler`, then induces a rule set with a tree.
pub fn induce_rules<F>(
    labeler: F,
    xs: &[Instance],
    schema: &Schema,
    config: TreeConfig,
    role: RuleSetRole,
) -> RuleSet
where
    F: Fn(&Instance) -> ClassLabel,
{
    let labels: Vec<ClassLabel> = xs.iter().map(labeler).collect();
    TreeInducer::new(config).induce(schema, xs, &labels, role)
}
