//! Typed conditions, conjunctive clauses and rules over a feature schema.
//!
//! A [`Clause`] is a conjunction of [`Condition`]s with at most one condition
//! per feature. Conditions are resolved against a [`Schema`] when they are
//! built, so evaluation never has to look names up.

mod region;
mod schema;
mod text;

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use region::{
    clause_conjunction_satisfiable, rules_conflict, Bound, CategorySet, FeatureRegion,
    NumericRegion,
};
pub use schema::{Feature, FeatureKind, Schema};
pub use text::{format_clause, format_number, parse_clause, parse_rule, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("duplicate feature `{0}`")]
    DuplicateFeature(String),
    #[error("invalid feature name `{0}`")]
    InvalidName(String),
    #[error("categorical feature `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("numeric feature `{0}` cannot declare a category domain")]
    DomainOnNumeric(String),
    #[error("category `{category}` listed twice for `{feature}`")]
    DuplicateCategory { feature: String, category: String },
    #[error("`{category}` is not in the domain of `{feature}`")]
    UnknownCategory { feature: String, category: String },
    #[error("value for `{feature}` must be {expected}")]
    KindMismatch {
        feature: String,
        expected: FeatureKind,
    },
    #[error("operator `{op}` is not allowed on categorical feature `{feature}`")]
    OperatorMismatch { feature: String, op: Op },
    #[error("value for `{0}` is not finite")]
    NonFinite(String),
    #[error("clause has more than one condition on `{0}`")]
    DuplicateVariable(String),
    #[error("unknown class label `{0}`")]
    UnknownLabel(String),
    #[error("labels must differ, got `{0}` twice")]
    DuplicateLabel(String),
    #[error("instance has {found} values, schema has {expected} features")]
    Arity { expected: usize, found: usize },
    #[error("missing value for `{0}`")]
    MissingValue(String),
    #[error("condition on `{0}` does not match the schema")]
    Mismatch(String),
}

/// One of the two labels of a binary task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Negative,
    Positive,
}

impl ClassLabel {
    pub const BOTH: [ClassLabel; 2] = [ClassLabel::Negative, ClassLabel::Positive];

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Negative => 0,
            ClassLabel::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            ClassLabel::Negative
        } else {
            ClassLabel::Positive
        }
    }

    /// The unique other label of the task.
    pub fn other(self) -> Self {
        match self {
            ClassLabel::Negative => ClassLabel::Positive,
            ClassLabel::Positive => ClassLabel::Negative,
        }
    }
}

/// A feature value: a number for numeric features, a category label otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Category(c) => Some(c),
            Value::Number(_) => None,
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Number(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Category(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Category(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => f.write_str(&format_number(*v)),
            Value::Category(c) => write!(f, "{}", text::quote(c)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Neq,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Geq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Leq,
}

impl Op {
    pub const ALL: [Op; 6] = [Op::Eq, Op::Neq, Op::Gt, Op::Geq, Op::Lt, Op::Leq];

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "==",
            Op::Neq => "!=",
            Op::Gt => ">",
            Op::Geq => ">=",
            Op::Lt => "<",
            Op::Leq => "<=",
        }
    }

    /// The operator whose truth value is always the opposite of this one.
    pub fn negate(self) -> Op {
        match self {
            Op::Eq => Op::Neq,
            Op::Neq => Op::Eq,
            Op::Gt => Op::Leq,
            Op::Geq => Op::Lt,
            Op::Lt => Op::Geq,
            Op::Leq => Op::Gt,
        }
    }

    pub fn allowed_on(self, kind: FeatureKind) -> bool {
        kind == FeatureKind::Numeric || matches!(self, Op::Eq | Op::Neq)
    }

    pub fn compare(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Op::Eq => lhs == rhs,
            Op::Neq => lhs != rhs,
            Op::Gt => lhs > rhs,
            Op::Geq => lhs >= rhs,
            Op::Lt => lhs < rhs,
            Op::Leq => lhs <= rhs,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A fully valued row of a task, stored in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    values: Vec<Value>,
}

impl Instance {
    pub fn new(schema: &Schema, values: Vec<Value>) -> Result<Self, SchemaError> {
        if values.len() != schema.len() {
            return Err(SchemaError::Arity {
                expected: schema.len(),
                found: values.len(),
            });
        }
        for (i, value) in values.iter().enumerate() {
            schema.check_value(i, value)?;
        }
        Ok(Instance { values })
    }

    /// Builds an instance from `name -> value` pairs; every feature must be present.
    pub fn from_pairs<'a, I>(schema: &Schema, pairs: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = (&'a str, Value)>,
    {
        let mut slots: Vec<Option<Value>> = vec![None; schema.len()];
        for (name, value) in pairs {
            let (i, _) = schema.require(name)?;
            slots[i] = Some(value);
        }
        let values = slots
            .into_iter()
            .zip(schema.features())
            .map(|(v, f)| v.ok_or_else(|| SchemaError::MissingValue(f.name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Instance::new(schema, values)
    }

    /// Parses a JSON object `{"feature": value, ...}`.
    pub fn from_json(schema: &Schema, json: &serde_json::Value) -> Result<Self, SchemaError> {
        let object = json
            .as_object()
            .ok_or_else(|| SchemaError::MissingValue("<instance object>".into()))?;
        let mut pairs = Vec::with_capacity(object.len());
        for (name, raw) in object {
            let (_, feature) = schema.require(name)?;
            let value = match (feature.kind, raw) {
                (FeatureKind::Numeric, serde_json::Value::Number(n)) => {
                    Value::Number(n.as_f64().unwrap_or(f64::NAN))
                }
                (FeatureKind::Categorical, serde_json::Value::String(s)) => {
                    Value::Category(s.clone())
                }
                (kind, _) => {
                    return Err(SchemaError::KindMismatch {
                        feature: name.clone(),
                        expected: kind,
                    })
                }
            };
            pairs.push((name.as_str(), value));
        }
        Instance::from_pairs(schema, pairs)
    }

    pub fn to_json(&self, schema: &Schema) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (feature, value) in schema.features().iter().zip(&self.values) {
            let v = match value {
                Value::Number(n) => serde_json::Number::from_f64(*n)
                    .map(serde_json::Value::Number)
                    .unwrap_or(serde_json::Value::Null),
                Value::Category(c) => serde_json::Value::String(c.clone()),
            };
            map.insert(feature.name.clone(), v);
        }
        serde_json::Value::Object(map)
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn get(&self, position: usize) -> &Value {
        &self.values[position]
    }

    pub(crate) fn set(&mut self, position: usize, value: Value) {
        self.values[position] = value;
    }
}

/// `⟨variable, operator, value⟩`, resolved to a schema position.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    variable: String,
    position: usize,
    op: Op,
    value: Value,
}

impl Condition {
    pub fn new(
        schema: &Schema,
        variable: &str,
        op: Op,
        value: impl Into<Value>,
    ) -> Result<Self, SchemaError> {
        let value = value.into();
        let (position, feature) = schema.require(variable)?;
        if !op.allowed_on(feature.kind) {
            return Err(SchemaError::OperatorMismatch {
                feature: variable.to_string(),
                op,
            });
        }
        schema.check_value(position, &value)?;
        Ok(Condition {
            variable: variable.to_string(),
            position,
            op,
            value,
        })
    }

    pub fn variable(&self) -> &str {
        &self.variable
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn op(&self) -> Op {
        self.op
    }

    pub fn value(&self) -> &Value {
        &self.value
    }

    /// Truth value of the condition on a single feature value.
    pub fn holds_for(&self, value: &Value) -> bool {
        match (&self.value, value) {
            (Value::Number(threshold), Value::Number(v)) => self.op.compare(*v, *threshold),
            (Value::Category(label), Value::Category(v)) => match self.op {
                Op::Eq => v == label,
                Op::Neq => v != label,
                _ => false,
            },
            _ => false,
        }
    }

    pub fn evaluate(&self, x: &Instance) -> bool {
        self.holds_for(x.get(self.position))
    }

    /// Whether this condition refers to the same schema slot as `schema` says it should.
    pub(crate) fn matches_schema(&self, schema: &Schema) -> bool {
        schema.position(&self.variable) == Some(self.position)
            && schema.check_value(self.position, &self.value).is_ok()
            && self.op.allowed_on(schema.features()[self.position].kind)
    }

    fn sort_key(&self) -> (&str, Op) {
        (&self.variable, self.op)
    }
}

impl Eq for Condition {}

impl Hash for Condition {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.variable.hash(state);
        self.op.hash(state);
        match &self.value {
            Value::Number(v) => {
                0u8.hash(state);
                // -0.0 and 0.0 compare equal, so they must hash equal too.
                let v = if *v == 0.0 { 0.0 } else { *v };
                v.to_bits().hash(state);
            }
            Value::Category(c) => {
                1u8.hash(state);
                c.hash(state);
            }
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.variable, self.op, self.value)
    }
}

pub fn evaluate_condition(cond: &Condition, x: &Instance) -> bool {
    cond.evaluate(x)
}

/// A conjunction of conditions, at most one per feature.
///
/// Display order is the order the conditions were given in. Equality and
/// hashing ignore order.
#[derive(Debug, Clone, Default)]
pub struct Clause {
    conditions: Vec<Condition>,
}

impl Clause {
    pub fn new(conditions: Vec<Condition>) -> Result<Self, SchemaError> {
        for (i, c) in conditions.iter().enumerate() {
            if conditions[..i].iter().any(|d| d.variable == c.variable) {
                return Err(SchemaError::DuplicateVariable(c.variable.clone()));
            }
        }
        Ok(Clause { conditions })
    }

    /// The clause with no conditions; every instance satisfies it.
    pub fn empty() -> Self {
        Clause::default()
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn condition_on(&self, variable: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.variable == variable)
    }

    pub fn satisfies(&self, x: &Instance) -> bool {
        self.conditions.iter().all(|c| c.evaluate(x))
    }

    /// Conditions sorted by variable name.
    pub fn canonical(&self) -> Vec<&Condition> {
        let mut sorted: Vec<&Condition> = self.conditions.iter().collect();
        sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        sorted
    }

    /// Copy with conditions in canonical (variable name) order.
    pub fn to_canonical(&self) -> Clause {
        Clause {
            conditions: self.canonical().into_iter().cloned().collect(),
        }
    }

    pub fn matches_schema(&self, schema: &Schema) -> bool {
        self.conditions.iter().all(|c| c.matches_schema(schema))
    }
}

impl PartialEq for Clause {
    fn eq(&self, other: &Self) -> bool {
        self.conditions.len() == other.conditions.len()
            && self
                .canonical()
                .iter()
                .zip(other.canonical())
                .all(|(a, b)| *a == b)
    }
}

impl Eq for Clause {}

impl Hash for Clause {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.conditions.len().hash(state);
        for c in self.canonical() {
            c.hash(state);
        }
    }
}

impl PartialOrd for Clause {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Clause {
    fn cmp(&self, other: &Self) -> Ordering {
        format_clause(&self.to_canonical()).cmp(&format_clause(&other.to_canonical()))
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_clause(self))
    }
}

pub fn satisfies(clause: &Clause, x: &Instance) -> bool {
    clause.satisfies(x)
}

/// A clause together with the label it assigns.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub clause: Clause,
    pub label: ClassLabel,
}

impl Rule {
    pub fn new(clause: Clause, label: ClassLabel) -> Self {
        Rule { clause, label }
    }
}
