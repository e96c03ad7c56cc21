//! Compiling a rule edit into a transformation of instances.
//!
//! Given the explanation rule `R(e, p)` and a corrected rule `R'(e', p')`, the
//! transformation rewrites feature values so that, feature by feature,
//! satisfying the edited literal of `e'` maps to satisfying (label kept) or
//! violating (label changed) the original literal of `e`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{
    CategorySet, Clause, Condition, FeatureKind, Instance, NumericRegion, Op, Rule, Schema, Value,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("no transformation config entry for `{0}`")]
    MissingConfig(String),
    #[error("config entry for `{feature}` does not fit a {kind} feature")]
    ConfigKind { feature: String, kind: FeatureKind },
    #[error("margin for `{0}` must be a positive finite number")]
    InvalidMargin(String),
    #[error("category `{category}` of `{feature}` is missing from the configured domain")]
    DomainMissing { feature: String, category: String },
    #[error("literals on `{0}` do not have the same kind")]
    KindMismatch(String),
    #[error("no value of `{0}` can satisfy the rewrite")]
    NoWitness(String),
}

/// Per-feature transformation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureConfig {
    Margin { margin: f64 },
    Domain { domain: Vec<String> },
}

/// Margins for numeric features and domains for categorical ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformationConfig {
    entries: BTreeMap<String, FeatureConfig>,
}

impl TransformationConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Margin 1 for every numeric feature, the schema domain for every categorical one.
    pub fn from_schema(schema: &Schema) -> Self {
        let entries = schema
            .features()
            .iter()
            .map(|f| {
                let entry = match f.kind {
                    FeatureKind::Numeric => FeatureConfig::Margin { margin: 1.0 },
                    FeatureKind::Categorical => FeatureConfig::Domain {
                        domain: f.domain.clone(),
                    },
                };
                (f.name.clone(), entry)
            })
            .collect();
        TransformationConfig { entries }
    }

    pub fn with_margin(mut self, feature: &str, margin: f64) -> Self {
        self.entries
            .insert(feature.to_string(), FeatureConfig::Margin { margin });
        self
    }

    pub fn with_domain<S: Into<String>>(
        mut self,
        feature: &str,
        domain: impl IntoIterator<Item = S>,
    ) -> Self {
        let domain = domain.into_iter().map(Into::into).collect();
        self.entries
            .insert(feature.to_string(), FeatureConfig::Domain { domain });
        self
    }

    pub fn get(&self, feature: &str) -> Option<&FeatureConfig> {
        self.entries.get(feature)
    }

    /// Fills in schema defaults for features without an entry.
    pub fn completed(mut self, schema: &Schema) -> Self {
        for (name, entry) in Self::from_schema(schema).entries {
            self.entries.entry(name).or_insert(entry);
        }
        self
    }
}

/// Literals of `e` missing from `e'` (`map_1`) and of `e'` missing from `e` (`map_2`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LiteralDiff {
    pub map_1: BTreeMap<String, Condition>,
    pub map_2: BTreeMap<String, Condition>,
}

pub fn diff_function(e: &Clause, e_prime: &Clause) -> LiteralDiff {
    let only_in = |a: &Clause, b: &Clause| {
        a.conditions()
            .iter()
            .filter(|c| !b.conditions().contains(c))
            .map(|c| (c.variable().to_string(), c.clone()))
            .collect::<BTreeMap<_, _>>()
    };
    LiteralDiff {
        map_1: only_in(e, e_prime),
        map_2: only_in(e_prime, e),
    }
}

/// One comparison `value <op> threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub op: Op,
    pub threshold: f64,
}

/// A predicate over a single feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Guard {
    Never,
    /// Conjunction of comparisons; no atoms means always true.
    Numeric { all: Vec<Atom> },
    Categorical { members: Vec<String> },
}

impl Guard {
    fn numeric(atoms: Vec<Atom>) -> Guard {
        let region = atoms.iter().fold(NumericRegion::everything(), |r, a| {
            r.intersect(&NumericRegion::from_op(a.op, a.threshold))
        });
        if region.is_empty() {
            Guard::Never
        } else {
            Guard::Numeric { all: atoms }
        }
    }

    fn categorical(set: &CategorySet) -> Guard {
        if set.is_empty() {
            Guard::Never
        } else {
            Guard::Categorical {
                members: set.members(),
            }
        }
    }

    pub fn is_never(&self) -> bool {
        matches!(self, Guard::Never)
    }

    pub fn matches(&self, value: &Value) -> bool {
        match (self, value) {
            (Guard::Numeric { all }, Value::Number(v)) => {
                all.iter().all(|a| a.op.compare(*v, a.threshold))
            }
            (Guard::Categorical { members }, Value::Category(c)) => members.contains(c),
            _ => false,
        }
    }

    /// Readable predicate with the feature name in place of the value.
    pub fn describe(&self, name: &str, domain: Option<&[String]>) -> String {
        match self {
            Guard::Never => "false".to_string(),
            Guard::Numeric { all } => all
                .iter()
                .fold(NumericRegion::everything(), |r, a| {
                    r.intersect(&NumericRegion::from_op(a.op, a.threshold))
                })
                .describe(name),
            Guard::Categorical { members } => {
                let domain = domain.map(<[String]>::to_vec).unwrap_or_else(|| members.clone());
                CategorySet::from_members(&domain, members).describe(name)
            }
        }
    }
}

/// What a firing guard writes into the feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Replacement {
    Set(Value),
    /// Uniform draw from the listed categories.
    Draw(Vec<String>),
}

impl Replacement {
    fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match self {
            Replacement::Set(v) => v.clone(),
            Replacement::Draw(options) => {
                Value::Category(options[rng.gen_range(0..options.len())].clone())
            }
        }
    }
}

impl fmt::Display for Replacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Replacement::Set(v) => write!(f, "{v}"),
            Replacement::Draw(options) => {
                let quoted: Vec<String> = options
                    .iter()
                    .map(|o| Value::Category(o.clone()).to_string())
                    .collect();
                write!(f, "random({})", quoted.join(", "))
            }
        }
    }
}

/// `if guard_1 then feature := value_1 else if guard_2 then feature := value_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardedAssignment {
    pub feature: String,
    pub position: usize,
    pub guard_1: Guard,
    pub value_1: Replacement,
    pub guard_2: Guard,
    pub value_2: Option<Replacement>,
    pub description: String,
}

impl GuardedAssignment {
    pub fn apply<R: Rng + ?Sized>(&self, x: &mut Instance, rng: &mut R) {
        let current = x.get(self.position);
        if self.guard_1.matches(current) {
            let v = self.value_1.realize(rng);
            x.set(self.position, v);
        } else if self.guard_2.matches(current) {
            if let Some(value) = &self.value_2 {
                let v = value.realize(rng);
                x.set(self.position, v);
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformationFunction {
    pub actions: Vec<GuardedAssignment>,
    pub description: String,
}

impl TransformationFunction {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        self.actions.is_empty()
    }

    fn from_actions(mut actions: Vec<GuardedAssignment>) -> Self {
        actions.sort_by(|a, b| a.feature.cmp(&b.feature));
        let description = actions
            .iter()
            .map(|a| a.description.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        TransformationFunction {
            actions,
            description,
        }
    }
}

/// Value sets and witnesses for the literal being rewritten.
enum Literal {
    Numeric { op: Op, threshold: f64, margin: f64 },
    Categorical { set: CategorySet },
}

impl Literal {
    fn new(cond: &Condition, config: Option<&FeatureConfig>) -> Result<Self, TransformError> {
        let name = cond.variable();
        let config = config.ok_or_else(|| TransformError::MissingConfig(name.to_string()))?;
        match (cond.value(), config) {
            (Value::Number(t), FeatureConfig::Margin { margin }) => {
                if !(margin.is_finite() && *margin > 0.0) {
                    return Err(TransformError::InvalidMargin(name.to_string()));
                }
                Ok(Literal::Numeric {
                    op: cond.op(),
                    threshold: *t,
                    margin: *margin,
                })
            }
            (Value::Category(c), FeatureConfig::Domain { domain }) => {
                if !domain.contains(c) {
                    return Err(TransformError::DomainMissing {
                        feature: name.to_string(),
                        category: c.clone(),
                    });
                }
                Ok(Literal::Categorical {
                    set: CategorySet::from_op(domain, cond.op(), c),
                })
            }
            (Value::Number(_), _) => Err(TransformError::ConfigKind {
                feature: name.to_string(),
                kind: FeatureKind::Numeric,
            }),
            (Value::Category(_), _) => Err(TransformError::ConfigKind {
                feature: name.to_string(),
                kind: FeatureKind::Categorical,
            }),
        }
    }
}

/// Closest value past the boundary, on the satisfying side.
fn numeric_inside(op: Op, a: f64, m: f64) -> f64 {
    match op {
        Op::Gt | Op::Geq | Op::Neq => a + m,
        Op::Lt | Op::Leq => a - m,
        Op::Eq => a,
    }
}

/// Closest value past the boundary, on the violating side.
fn numeric_outside(op: Op, a: f64, m: f64) -> f64 {
    match op {
        Op::Gt | Op::Geq => a - m,
        Op::Lt | Op::Leq | Op::Eq => a + m,
        Op::Neq => a,
    }
}

fn closure_atom(op: Op, threshold: f64) -> Option<Atom> {
    let op = match op {
        Op::Gt => Op::Geq,
        Op::Lt => Op::Leq,
        Op::Neq => return None,
        other => other,
    };
    Some(Atom { op, threshold })
}

fn atom(op: Op, threshold: f64) -> Atom {
    Atom { op, threshold }
}

fn witness(feature: &str, set: &CategorySet, deterministic: bool) -> Result<Replacement, TransformError> {
    let members = set.members();
    match members.len() {
        0 => Err(TransformError::NoWitness(feature.to_string())),
        1 => Ok(Replacement::Set(Value::Category(members[0].clone()))),
        _ if deterministic => Ok(Replacement::Set(Value::Category(members[0].clone()))),
        _ => Ok(Replacement::Draw(members)),
    }
}

/// Builds the rewrite for one variable.
///
/// `lit_2 = None` is a literal deleted by the user and behaves as if it were
/// always satisfied. Returns `None` when neither guard can ever fire.
pub fn build_action(
    lit_1: &Condition,
    lit_2: Option<&Condition>,
    config: Option<&FeatureConfig>,
    label_changed: bool,
) -> Result<Option<GuardedAssignment>, TransformError> {
    let feature = lit_1.variable();
    if let Some(l2) = lit_2 {
        let same_kind = matches!(
            (lit_1.value(), l2.value()),
            (Value::Number(_), Value::Number(_)) | (Value::Category(_), Value::Category(_))
        );
        if !same_kind || l2.variable() != feature {
            return Err(TransformError::KindMismatch(feature.to_string()));
        }
    }
    let a = Literal::new(lit_1, config)?;
    let b = lit_2.map(|l| Literal::new(l, config)).transpose()?;

    let (guard_1, value_1, guard_2, value_2, domain) = match (&a, &b) {
        (Literal::Numeric { op, threshold, margin }, b) => {
            let (op_a, t_a, m) = (*op, *threshold, *margin);
            let not_a = atom(op_a.negate(), t_a);
            let inside = Value::Number(numeric_inside(op_a, t_a, m));
            let outside = Value::Number(numeric_outside(op_a, t_a, m));
            let b_atom = match b {
                Some(Literal::Numeric { op, threshold, .. }) => Some(atom(*op, *threshold)),
                None => None,
                Some(Literal::Categorical { .. }) => unreachable!("kinds checked above"),
            };
            let closed_not_a: Vec<Atom> = closure_atom(not_a.op, t_a).into_iter().collect();
            if !label_changed {
                let g1 = match b_atom {
                    Some(b) => Guard::numeric(vec![atom(op_a, t_a), atom(b.op.negate(), b.threshold)]),
                    None => Guard::Never,
                };
                let g2 = Guard::numeric(closed_not_a.iter().copied().chain(b_atom).collect());
                // Prefer the value just outside e' when it still satisfies e.
                let v2 = match b_atom {
                    Some(b) => {
                        let candidate = numeric_outside(b.op, b.threshold, m);
                        if op_a.compare(candidate, t_a) {
                            Value::Number(candidate)
                        } else {
                            inside.clone()
                        }
                    }
                    None => inside.clone(),
                };
                (g1, Replacement::Set(outside), g2, Replacement::Set(v2), None)
            } else {
                let g1 = Guard::numeric(b_atom.into_iter().chain([atom(op_a, t_a)]).collect());
                let g2 = match b_atom {
                    Some(b) => Guard::numeric(
                        std::iter::once(atom(b.op.negate(), b.threshold))
                            .chain(closed_not_a.iter().copied())
                            .collect(),
                    ),
                    None => Guard::Never,
                };
                (g1, Replacement::Set(outside), g2, Replacement::Set(inside), None)
            }
        }
        (Literal::Categorical { set: set_a }, b) => {
            let domain = set_a.domain().to_vec();
            let set_b = match b {
                Some(Literal::Categorical { set }) => set.clone(),
                None => CategorySet::all(&domain),
                Some(Literal::Numeric { .. }) => unreachable!("kinds checked above"),
            };
            let not_a = set_a.complement();
            let not_b = set_b.complement();
            let (g1, g2) = if !label_changed {
                (set_a.intersect(&not_b), not_a.intersect(&set_b))
            } else {
                (set_b.intersect(set_a), not_b.intersect(&not_a))
            };
            let guard_1 = Guard::categorical(&g1);
            let guard_2 = Guard::categorical(&g2);
            let v1 = if guard_1.is_never() {
                Replacement::Set(Value::Category(String::new()))
            } else {
                witness(feature, &not_a, false)?
            };
            let v2 = if guard_2.is_never() {
                Replacement::Set(Value::Category(String::new()))
            } else {
                witness(feature, set_a, true)?
            };
            (guard_1, v1, guard_2, v2, Some(domain))
        }
    };

    let (guard_1, value_1, guard_2, value_2) = match (guard_1.is_never(), guard_2.is_never()) {
        (true, true) => return Ok(None),
        (false, true) => (guard_1, value_1, Guard::Never, None),
        (false, false) => (guard_1, value_1, guard_2, Some(value_2)),
        (true, false) => {
            // Only the second branch can fire; promote it. A fixed category
            // maps to itself, so it may join the guard without changing behaviour.
            let guard = match (guard_2, &value_2) {
                (Guard::Categorical { mut members }, Replacement::Set(Value::Category(w))) => {
                    let domain = domain.as_deref().unwrap_or_default();
                    if !members.contains(w) {
                        members.push(w.clone());
                        members.sort_by_key(|m| domain.iter().position(|d| d == m));
                    }
                    Guard::Categorical { members }
                }
                (g, _) => g,
            };
            (guard, value_2, Guard::Never, None)
        }
    };

    let mut description = format!(
        "if {} then {feature} := {value_1}",
        guard_1.describe(feature, domain.as_deref())
    );
    if let Some(v2) = &value_2 {
        description.push_str(&format!(
            " else if {} then {feature} := {v2}",
            guard_2.describe(feature, domain.as_deref())
        ));
    }
    Ok(Some(GuardedAssignment {
        feature: feature.to_string(),
        position: lit_1.position(),
        guard_1,
        value_1,
        guard_2,
        value_2,
        description,
    }))
}

/// Compiles the edit from `r` to `r_prime`. Literals only present in `e'` get no action.
pub fn build_transformation(
    r: &Rule,
    r_prime: &Rule,
    config: &TransformationConfig,
) -> Result<TransformationFunction, TransformError> {
    let diff = diff_function(&r.clause, &r_prime.clause);
    let label_changed = r.label != r_prime.label;
    let mut actions = Vec::new();
    for (variable, lit_1) in &diff.map_1 {
        let lit_2 = diff.map_2.get(variable);
        if let Some(action) = build_action(lit_1, lit_2, config.get(variable), label_changed)? {
            actions.push(action);
        }
    }
    Ok(TransformationFunction::from_actions(actions))
}

/// Applies every action in order to a copy of `x`.
pub fn apply_transformation<R: Rng + ?Sized>(
    x: &Instance,
    t: &TransformationFunction,
    rng: &mut R,
) -> Instance {
    let mut out = x.clone();
    for action in &t.actions {
        action.apply(&mut out, rng);
    }
    out
}

impl fmt::Display for TransformationFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.actions.is_empty() {
            f.write_str("identity")
        } else {
            f.write_str(&self.description)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{parse_clause, ClassLabel, Feature};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const MARITAL: [&str; 7] = [
        "Married-civ-spouse",
        "Divorced",
        "Never-married",
        "Separated",
        "Widowed",
        "Married-spouse-absent",
        "Married-AF-spouse",
    ];

    fn adult() -> Schema {
        Schema::with_labels(
            vec![
                Feature::numeric("age"),
                Feature::numeric("income"),
                Feature::categorical("education", ["Bachelors", "Masters", "Doctorate"]),
                Feature::categorical("marital-status", MARITAL),
            ],
            "<=50K",
            ">50K",
        )
        .unwrap()
    }

    fn cond(s: &Schema, text: &str) -> Condition {
        parse_clause(text, s).unwrap().conditions()[0].clone()
    }

    fn person(s: &Schema, age: f64, education: &str, marital: &str) -> Instance {
        Instance::from_pairs(
            s,
            [
                ("age", Value::from(age)),
                ("income", 60000.0.into()),
                ("education", education.into()),
                ("marital-status", marital.into()),
            ],
        )
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn diff_of_tic_tac_toe_edit() {
        let cells = ["tl", "tm", "tr", "ml", "mm", "mr", "bl", "bm", "br"];
        let s = Schema::with_labels(
            cells
                .iter()
                .map(|c| Feature::categorical(*c, ["b", "o", "x"]))
                .collect(),
            "negative",
            "positive",
        )
        .unwrap();
        let e = parse_clause("tr == \"x\" AND br != \"o\" AND bl != \"o\"", &s).unwrap();
        let e2 = parse_clause("tr == \"x\" AND mr == \"x\" AND br == \"x\"", &s).unwrap();
        let d = diff_function(&e, &e2);
        assert_eq!(d.map_1.keys().collect::<Vec<_>>(), ["bl", "br"]);
        assert_eq!(d.map_1["br"].to_string(), "br != \"o\"");
        assert_eq!(d.map_2.keys().collect::<Vec<_>>(), ["br", "mr"]);
        assert_eq!(d.map_2["br"].to_string(), "br == \"x\"");
        let same = diff_function(&e, &e);
        assert!(same.map_1.is_empty() && same.map_2.is_empty());
    }

    #[test]
    fn diff_of_banknote_edit() {
        let s = Schema::with_labels(
            vec![Feature::numeric("variance"), Feature::numeric("skewness")],
            "0",
            "1",
        )
        .unwrap();
        let e = parse_clause("variance > -3.33 AND skewness > 5.80", &s).unwrap();
        let e2 = parse_clause("variance > -3.31 AND skewness > 5.82", &s).unwrap();
        let d = diff_function(&e, &e2);
        assert_eq!(d.map_1.len(), 2);
        assert_eq!(d.map_2.len(), 2);
    }

    #[test]
    fn widening_age_keeps_label() {
        let s = adult();
        let cfg = TransformationConfig::from_schema(&s);
        let action = build_action(
            &cond(&s, "age <= 30"),
            Some(&cond(&s, "age > 26")),
            cfg.get("age"),
            false,
        )
        .unwrap()
        .unwrap();
        assert_eq!(action.guard_1.describe("value", None), "value <= 26.00");
        assert_eq!(action.value_1, Replacement::Set(Value::Number(31.0)));
        assert_eq!(action.guard_2.describe("value", None), "value >= 30.00");
        assert_eq!(action.value_2, Some(Replacement::Set(Value::Number(25.0))));
    }

    #[test]
    fn marital_status_relaxation() {
        let s = adult();
        let cfg = TransformationConfig::from_schema(&s);
        let action = build_action(
            &cond(&s, "marital-status == \"Never-married\""),
            Some(&cond(&s, "marital-status != \"Divorced\"")),
            cfg.get("marital-status"),
            false,
        )
        .unwrap()
        .unwrap();
        assert_eq!(
            action.guard_1.describe("value", Some(&cfg_domain(&cfg, "marital-status"))),
            "value != \"Divorced\""
        );
        assert_eq!(
            action.value_1,
            Replacement::Set(Value::Category("Never-married".into()))
        );
        assert!(action.guard_2.is_never());
        assert_eq!(action.value_2, None);
    }

    fn cfg_domain(cfg: &TransformationConfig, f: &str) -> Vec<String> {
        match cfg.get(f) {
            Some(FeatureConfig::Domain { domain }) => domain.clone(),
            _ => panic!("no domain"),
        }
    }

    #[test]
    fn education_swap() {
        let s = adult();
        let cfg = TransformationConfig::from_schema(&s);
        let action = build_action(
            &cond(&s, "education == \"Masters\""),
            Some(&cond(&s, "education == \"Doctorate\"")),
            cfg.get("education"),
            false,
        )
        .unwrap()
        .unwrap();
        let mut r = rng();
        let mut x = person(&s, 40.0, "Doctorate", "Divorced");
        action.apply(&mut x, &mut r);
        assert_eq!(x.get(2), &Value::from("Masters"));
        assert_eq!(
            action.value_1,
            Replacement::Draw(vec!["Bachelors".into(), "Doctorate".into()])
        );
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..64 {
            let mut y = person(&s, 40.0, "Masters", "Divorced");
            action.apply(&mut y, &mut r);
            seen.insert(y.get(2).as_category().unwrap().to_string());
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), ["Bachelors", "Doctorate"]);
    }

    fn age_rules(s: &Schema, narrowed: &str, label: ClassLabel) -> (Rule, Rule) {
        let rest = "income > 50000 AND education == \"Masters\"";
        let r = Rule::new(
            parse_clause(&format!("age > 26 AND {rest}"), s).unwrap(),
            ClassLabel::Positive,
        );
        let r2 = Rule::new(parse_clause(&format!("{narrowed} AND {rest}"), s).unwrap(), label);
        (r, r2)
    }

    #[test]
    fn narrowing_age_moves_the_gap_out() {
        let s = adult();
        let (r, r2) = age_rules(&s, "age > 30", ClassLabel::Positive);
        let t = build_transformation(&r, &r2, &TransformationConfig::from_schema(&s)).unwrap();
        assert_eq!(t.actions.len(), 1);
        assert_eq!(t.description, "if 26.00 < age <= 30.00 then age := 25.00");
        let mut g = rng();
        let x = person(&s, 28.0, "Masters", "Divorced");
        let y = apply_transformation(&x, &t, &mut g);
        assert_eq!(y.get(0), &Value::Number(25.0));
        assert_eq!(x.get(0), &Value::Number(28.0));
        let old = person(&s, 40.0, "Masters", "Divorced");
        assert_eq!(apply_transformation(&old, &t, &mut g), old);
    }

    #[test]
    fn label_change_on_age() {
        let s = adult();
        let (r, r2) = age_rules(&s, "age > 30", ClassLabel::Negative);
        let t = build_transformation(&r, &r2, &TransformationConfig::from_schema(&s)).unwrap();
        let at = |age| {
            let y = apply_transformation(&person(&s, age, "Masters", "Divorced"), &t, &mut rng());
            y.get(0).as_number().unwrap()
        };
        assert_eq!(at(35.0), 25.0);
        assert_eq!(at(20.0), 27.0);
        assert_eq!(at(28.0), 28.0);
    }

    #[test]
    fn identical_rules_give_identity() {
        let s = adult();
        let (r, _) = age_rules(&s, "age > 30", ClassLabel::Positive);
        let t = build_transformation(&r, &r, &TransformationConfig::from_schema(&s)).unwrap();
        assert!(t.is_identity());
    }

    #[test]
    fn missing_config_is_reported() {
        let s = adult();
        let err = build_action(&cond(&s, "age <= 30"), Some(&cond(&s, "age > 26")), None, false)
            .unwrap_err();
        assert_eq!(err, TransformError::MissingConfig("age".into()));
        let bad = TransformationConfig::new().with_margin("age", 0.0);
        assert!(matches!(
            build_action(&cond(&s, "age <= 30"), None, bad.get("age"), false),
            Err(TransformError::InvalidMargin(_))
        ));
        let wrong = TransformationConfig::new().with_margin("education", 1.0);
        assert!(matches!(
            build_action(&cond(&s, "education == \"Masters\""), None, wrong.get("education"), false),
            Err(TransformError::ConfigKind { .. })
        ));
    }

    #[test]
    fn deleted_literal() {
        let s = adult();
        let cfg = TransformationConfig::from_schema(&s);
        let keep = build_action(&cond(&s, "age > 26"), None, cfg.get("age"), false)
            .unwrap()
            .unwrap();
        assert_eq!(keep.description, "if age <= 26.00 then age := 27.00");
        let flip = build_action(&cond(&s, "age > 26"), None, cfg.get("age"), true)
            .unwrap()
            .unwrap();
        assert_eq!(flip.description, "if age > 26.00 then age := 25.00");
    }

    #[test]
    fn serializes_to_json() {
        let s = adult();
        let (r, r2) = age_rules(&s, "age > 30", ClassLabel::Negative);
        let t = build_transformation(&r, &r2, &TransformationConfig::from_schema(&s)).unwrap();
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(json["actions"][0]["guard_1"]["kind"], "numeric");
        let back: TransformationFunction = serde_json::from_value(json).unwrap();
        assert_eq!(back, t);
        let cfg: TransformationConfig =
            serde_json::from_str(r#"{"age":{"margin":2},"education":{"domain":["a","b"]}}"#)
                .unwrap();
        assert_eq!(cfg.get("age"), Some(&FeatureConfig::Margin { margin: 2.0 }));
    }
}
