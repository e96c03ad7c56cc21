//! Random small tasks, rule edits and exhaustive enumeration shared by the
//! integration tests.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use rulepatch::rules::{
    ClassLabel, Clause, Condition, Feature, FeatureKind, Instance, Op, Rule, Schema, Value,
};
use rulepatch::transform::{
    apply_transformation, build_transformation, TransformationConfig, TransformationFunction,
};

pub const NUMERIC_OPS: [Op; 6] = [Op::Eq, Op::Neq, Op::Gt, Op::Geq, Op::Lt, Op::Leq];
pub const CATEGORICAL_OPS: [Op; 2] = [Op::Eq, Op::Neq];

/// Up to four features: integer grids `0..n` with `n <= 50`, or up to seven categories.
/// The product of all value counts stays at most `max_points`.
pub fn random_schema<R: Rng>(rng: &mut R, max_points: usize) -> Schema {
    let n = rng.gen_range(1..=4);
    let mut features = Vec::with_capacity(n);
    let mut budget = max_points;
    for i in 0..n {
        let remaining = n - i - 1;
        // leave at least 2 values for every later feature
        let cap = budget / 2usize.pow(remaining as u32);
        if rng.gen_bool(0.5) {
            let size = rng.gen_range(2..=cap.clamp(2, 50));
            budget /= size;
            features.push(Feature::numeric(format!("n{i}")).with_range(0.0, (size - 1) as f64));
        } else {
            let size = rng.gen_range(2..=cap.clamp(2, 7));
            budget /= size;
            let domain: Vec<String> = (0..size).map(|c| format!("c{c}")).collect();
            features.push(Feature::categorical(format!("k{i}"), domain));
        }
    }
    Schema::with_labels(features, "neg", "pos").expect("valid schema")
}

pub fn grid_size(feature: &Feature) -> usize {
    match feature.kind {
        FeatureKind::Numeric => {
            let [lo, hi] = feature.range.expect("grid features carry a range");
            (hi - lo) as usize + 1
        }
        FeatureKind::Categorical => feature.domain.len(),
    }
}

fn random_value<R: Rng>(rng: &mut R, feature: &Feature) -> Value {
    match feature.kind {
        FeatureKind::Numeric => Value::Number(rng.gen_range(0..grid_size(feature)) as f64),
        FeatureKind::Categorical => Value::Category(feature.domain.choose(rng).unwrap().clone()),
    }
}

fn random_op<R: Rng>(rng: &mut R, feature: &Feature) -> Op {
    match feature.kind {
        FeatureKind::Numeric => *NUMERIC_OPS.choose(rng).unwrap(),
        FeatureKind::Categorical => *CATEGORICAL_OPS.choose(rng).unwrap(),
    }
}

pub fn random_condition<R: Rng>(rng: &mut R, schema: &Schema, position: usize) -> Condition {
    let feature = &schema.features()[position];
    let op = random_op(rng, feature);
    let value = random_value(rng, feature);
    Condition::new(schema, &feature.name, op, value).expect("generated condition is valid")
}

/// A clause over a random non-empty subset of the features.
pub fn random_clause<R: Rng>(rng: &mut R, schema: &Schema) -> Clause {
    let mut positions: Vec<usize> = (0..schema.len()).collect();
    positions.shuffle(rng);
    let k = rng.gen_range(1..=schema.len());
    let conditions = positions[..k]
        .iter()
        .map(|&p| random_condition(rng, schema, p))
        .collect();
    Clause::new(conditions).expect("one condition per feature")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edit {
    Value,
    Operator,
    Delete,
    Add,
}

#[derive(Debug, Clone)]
pub struct EditCase {
    pub schema: Schema,
    pub r: Rule,
    pub r_prime: Rule,
    pub edits: Vec<Edit>,
}

impl EditCase {
    pub fn has_added_literal(&self) -> bool {
        self.edits.contains(&Edit::Add)
    }

    pub fn label_changed(&self) -> bool {
        self.r.label != self.r_prime.label
    }
}

fn edit_clause<R: Rng>(
    rng: &mut R,
    schema: &Schema,
    clause: &Clause,
    edit: Edit,
) -> Option<Clause> {
    let mut conditions: Vec<Condition> = clause.conditions().to_vec();
    match edit {
        Edit::Value | Edit::Operator => {
            if conditions.is_empty() {
                return None;
            }
            let i = rng.gen_range(0..conditions.len());
            let old = &conditions[i];
            let feature = &schema.features()[old.position()];
            for _ in 0..20 {
                let (op, value) = match edit {
                    Edit::Value => (old.op(), random_value(rng, feature)),
                    _ => (random_op(rng, feature), old.value().clone()),
                };
                let changed = Condition::new(schema, &feature.name, op, value).ok()?;
                if changed != *old {
                    conditions[i] = changed;
                    return Clause::new(conditions).ok();
                }
            }
            None
        }
        Edit::Delete => {
            if conditions.is_empty() {
                return None;
            }
            conditions.remove(rng.gen_range(0..conditions.len()));
            Clause::new(conditions).ok()
        }
        Edit::Add => {
            let free: Vec<usize> = (0..schema.len())
                .filter(|p| !conditions.iter().any(|c| c.position() == *p))
                .collect();
            let p = *free.choose(rng)?;
            conditions.push(random_condition(rng, schema, p));
            Clause::new(conditions).ok()
        }
    }
}

/// A rule and a user edit of it made of one to three modifications; the clause
/// always ends up different.
pub fn random_edit_case<R: Rng>(rng: &mut R, allowed: &[Edit], max_points: usize) -> EditCase {
    loop {
        let schema = random_schema(rng, max_points);
        let clause = random_clause(rng, &schema);
        let label = if rng.gen_bool(0.5) {
            ClassLabel::Positive
        } else {
            ClassLabel::Negative
        };
        let mut edited = clause.clone();
        let mut edits = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let edit = *allowed.choose(rng).unwrap();
            if let Some(next) = edit_clause(rng, &schema, &edited, edit) {
                edited = next;
                edits.push(edit);
            }
        }
        // a pure relabel is not an edit of the clause
        if edits.is_empty() || edited == clause {
            continue;
        }
        let label_prime = if rng.gen_bool(0.5) { label } else { label.other() };
        let r = Rule::new(clause, label);
        let r_prime = Rule::new(edited, label_prime);
        return EditCase {
            schema,
            r,
            r_prime,
            edits,
        };
    }
}

/// Every point of the schema's grid.
pub fn enumerate(schema: &Schema) -> Vec<Instance> {
    let axes: Vec<Vec<Value>> = schema
        .features()
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Numeric => (0..grid_size(f)).map(|v| Value::Number(v as f64)).collect(),
            FeatureKind::Categorical => f.domain.iter().cloned().map(Value::Category).collect(),
        })
        .collect();
    product(schema, &axes)
}

/// Numeric axes at every half step from one below to one above the grid, so that
/// any non-empty intersection of integer-threshold conditions has a witness.
pub fn enumerate_half_grid(schema: &Schema) -> Vec<Instance> {
    let axes: Vec<Vec<Value>> = schema
        .features()
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Numeric => {
                let n = grid_size(f) as i64;
                (-2..=2 * n)
                    .map(|h| Value::Number(h as f64 / 2.0))
                    .collect()
            }
            FeatureKind::Categorical => f.domain.iter().cloned().map(Value::Category).collect(),
        })
        .collect();
    product(schema, &axes)
}

fn product(schema: &Schema, axes: &[Vec<Value>]) -> Vec<Instance> {
    let mut rows: Vec<Vec<Value>> = vec![Vec::new()];
    for axis in axes {
        rows = rows
            .into_iter()
            .flat_map(|row| {
                axis.iter().map(move |v| {
                    let mut next = row.clone();
                    next.push(v.clone());
                    next
                })
            })
            .collect();
    }
    rows.into_iter()
        .map(|values| Instance::new(schema, values).expect("grid point is valid"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `e'(x)` holds but `t(x)` does not end up where the contract wants it.
    Forward,
    /// `e'(x)` fails but `t(x)` still lands on the `e'` side.
    Reverse,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub x: Instance,
    pub t_x: Instance,
    pub direction: Direction,
}

/// Checks `e'(x) <=> e(t(x))` (label kept) or `e'(x) <=> !e(t(x))` (label changed)
/// on every enumerated point.
pub fn contract_violations<R: Rng>(
    case: &EditCase,
    t: &TransformationFunction,
    points: &[Instance],
    rng: &mut R,
) -> Vec<Violation> {
    let e = &case.r.clause;
    let e_prime = &case.r_prime.clause;
    let mut out = Vec::new();
    for x in points {
        let t_x = apply_transformation(x, t, rng);
        let lhs = e_prime.satisfies(x);
        let in_e = e.satisfies(&t_x);
        let rhs = if case.label_changed() { !in_e } else { in_e };
        if lhs != rhs {
            let direction = if lhs {
                Direction::Forward
            } else {
                Direction::Reverse
            };
            out.push(Violation {
                x: x.clone(),
                t_x,
                direction,
            });
        }
    }
    out
}

pub fn transformation_for(case: &EditCase) -> TransformationFunction {
    let config = TransformationConfig::from_schema(&case.schema);
    build_transformation(&case.r, &case.r_prime, &config).expect("transformation builds")
}
