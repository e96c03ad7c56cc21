//! Exact sets of feature values described by conditions.
//!
//! A numeric region is any finite union of intervals of the real line. It is
//! stored as sorted breakpoints with one membership bit per breakpoint and one
//! per open gap between breakpoints, which makes complement, intersection and
//! union pointwise bit operations after merging breakpoints.

use std::fmt;

use super::{Clause, Condition, FeatureKind, Op, Rule, Schema, SchemaError, Value};
use crate::rules::text::quote;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Included(f64),
    Excluded(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericRegion {
    points: Vec<f64>,
    at: Vec<bool>,
    // gaps[i] is the open interval (points[i-1], points[i]); gaps[0] starts at -inf
    gaps: Vec<bool>,
}

impl NumericRegion {
    pub fn everything() -> Self {
        NumericRegion {
            points: Vec::new(),
            at: Vec::new(),
            gaps: vec![true],
        }
    }

    pub fn nothing() -> Self {
        NumericRegion {
            points: Vec::new(),
            at: Vec::new(),
            gaps: vec![false],
        }
    }

    /// The set `{ v : v <op> threshold }`.
    pub fn from_op(op: Op, threshold: f64) -> Self {
        let (below, at, above) = match op {
            Op::Eq => (false, true, false),
            Op::Neq => (true, false, true),
            Op::Gt => (false, false, true),
            Op::Geq => (false, true, true),
            Op::Lt => (true, false, false),
            Op::Leq => (true, true, false),
        };
        NumericRegion {
            points: vec![threshold],
            at: vec![at],
            gaps: vec![below, above],
        }
        .normalized()
    }

    pub fn contains(&self, v: f64) -> bool {
        match self.points.binary_search_by(|p| p.total_cmp(&v)) {
            Ok(i) => self.at[i],
            Err(i) => self.gaps[i],
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.at.iter().chain(&self.gaps).any(|&b| b)
    }

    pub fn is_everything(&self) -> bool {
        self.at.iter().chain(&self.gaps).all(|&b| b)
    }

    pub fn complement(&self) -> Self {
        NumericRegion {
            points: self.points.clone(),
            at: self.at.iter().map(|b| !b).collect(),
            gaps: self.gaps.iter().map(|b| !b).collect(),
        }
    }

    /// Topological closure: every breakpoint adjacent to a member gap becomes a member.
    pub fn closure(&self) -> Self {
        let at = (0..self.points.len())
            .map(|i| self.at[i] || self.gaps[i] || self.gaps[i + 1])
            .collect();
        NumericRegion {
            points: self.points.clone(),
            at,
            gaps: self.gaps.clone(),
        }
        .normalized()
    }

    pub fn intersect(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a && b)
    }

    pub fn union(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a || b)
    }

    fn combine(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        let mut points: Vec<f64> = self.points.iter().chain(&other.points).copied().collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        let at = points
            .iter()
            .map(|&p| f(self.contains(p), other.contains(p)))
            .collect();
        let gaps = (0..=points.len())
            .map(|j| {
                let lower = if j == 0 { None } else { Some(points[j - 1]) };
                f(self.gap_member(lower), other.gap_member(lower))
            })
            .collect();
        NumericRegion { points, at, gaps }.normalized()
    }

    // Membership of the open gap that starts just above `lower` (or at -inf).
    fn gap_member(&self, lower: Option<f64>) -> bool {
        match lower {
            None => self.gaps[0],
            Some(v) => {
                let index = self.points.partition_point(|p| p.total_cmp(&v).is_le());
                self.gaps[index]
            }
        }
    }

    fn normalized(mut self) -> Self {
        let mut i = 0;
        while i < self.points.len() {
            if self.at[i] == self.gaps[i] && self.at[i] == self.gaps[i + 1] {
                self.points.remove(i);
                self.at.remove(i);
                self.gaps.remove(i);
            } else {
                i += 1;
            }
        }
        self
    }

    /// Maximal intervals as `(lower, upper)` with `None` for an infinite end.
    pub fn intervals(&self) -> Vec<(Option<Bound>, Option<Bound>)> {
        let mut out = Vec::new();
        let mut start: Option<Option<Bound>> = if self.gaps[0] { Some(None) } else { None };
        for (i, &p) in self.points.iter().enumerate() {
            let above = self.gaps[i + 1];
            match (start, self.at[i]) {
                (Some(lo), true) if !above => {
                    out.push((lo, Some(Bound::Included(p))));
                    start = None;
                }
                (Some(lo), false) => {
                    out.push((lo, Some(Bound::Excluded(p))));
                    start = above.then_some(Some(Bound::Excluded(p)));
                }
                (None, true) if above => start = Some(Some(Bound::Included(p))),
                (None, true) => out.push((Some(Bound::Included(p)), Some(Bound::Included(p)))),
                (None, false) if above => start = Some(Some(Bound::Excluded(p))),
                _ => {}
            }
        }
        if let Some(lo) = start {
            out.push((lo, None));
        }
        out
    }

    /// Human-readable predicate over `name`, e.g. `26 < age <= 30`.
    pub fn describe(&self, name: &str) -> String {
        if self.is_empty() {
            return "false".to_string();
        }
        if self.is_everything() {
            return "true".to_string();
        }
        // A line with finitely many holes reads better as a list of exclusions.
        let holes: Vec<f64> = self
            .points
            .iter()
            .zip(&self.at)
            .filter(|(_, &a)| !a)
            .map(|(p, _)| *p)
            .collect();
        if self.gaps.iter().all(|&g| g) {
            return holes
                .iter()
                .map(|h| format!("{name} != {}", super::format_number(*h)))
                .collect::<Vec<_>>()
                .join(" and ");
        }
        self.intervals()
            .into_iter()
            .map(|(lo, hi)| describe_interval(name, lo, hi))
            .collect::<Vec<_>>()
            .join(" or ")
    }
}

fn describe_interval(name: &str, lo: Option<Bound>, hi: Option<Bound>) -> String {
    use super::format_number as n;
    match (lo, hi) {
        (Some(Bound::Included(a)), Some(Bound::Included(b))) if a == b => {
            format!("{name} == {}", n(a))
        }
        (None, None) => "true".to_string(),
        (None, Some(Bound::Included(b))) => format!("{name} <= {}", n(b)),
        (None, Some(Bound::Excluded(b))) => format!("{name} < {}", n(b)),
        (Some(Bound::Included(a)), None) => format!("{name} >= {}", n(a)),
        (Some(Bound::Excluded(a)), None) => format!("{name} > {}", n(a)),
        (Some(lo), Some(hi)) => {
            let left = match lo {
                Bound::Included(a) => format!("{} <= ", n(a)),
                Bound::Excluded(a) => format!("{} < ", n(a)),
            };
            let right = match hi {
                Bound::Included(b) => format!(" <= {}", n(b)),
                Bound::Excluded(b) => format!(" < {}", n(b)),
            };
            format!("{left}{name}{right}")
        }
    }
}

/// A subset of a categorical domain, kept in domain order.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySet {
    domain: Vec<String>,
    mask: Vec<bool>,
}

impl CategorySet {
    pub fn all(domain: &[String]) -> Self {
        CategorySet {
            domain: domain.to_vec(),
            mask: vec![true; domain.len()],
        }
    }

    pub fn from_op(domain: &[String], op: Op, label: &str) -> Self {
        let mask = domain
            .iter()
            .map(|d| match op {
                Op::Eq => d == label,
                _ => d != label,
            })
            .collect();
        CategorySet {
            domain: domain.to_vec(),
            mask,
        }
    }

    pub fn from_members(domain: &[String], members: &[String]) -> Self {
        CategorySet {
            domain: domain.to_vec(),
            mask: domain.iter().map(|d| members.contains(d)).collect(),
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.domain
            .iter()
            .zip(&self.mask)
            .any(|(d, &m)| m && d == label)
    }

    pub fn members(&self) -> Vec<String> {
        self.domain
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(d, _)| d.clone())
            .collect()
    }

    pub fn domain(&self) -> &[String] {
        &self.domain
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn insert(&mut self, label: &str) {
        for (d, m) in self.domain.iter().zip(self.mask.iter_mut()) {
            if d == label {
                *m = true;
            }
        }
    }

    pub fn complement(&self) -> Self {
        CategorySet {
            domain: self.domain.clone(),
            mask: self.mask.iter().map(|m| !m).collect(),
        }
    }

    pub fn intersect(&self, other: &Self) -> Self {
        CategorySet {
            domain: self.domain.clone(),
            mask: self
                .domain
                .iter()
                .zip(&self.mask)
                .map(|(d, &m)| m && other.contains(d))
                .collect(),
        }
    }

    pub fn describe(&self, name: &str) -> String {
        let members = self.members();
        let excluded = self.complement().members();
        match (members.len(), excluded.len()) {
            (0, _) => "false".to_string(),
            (_, 0) => "true".to_string(),
            (1, _) => format!("{name} == {}", quote(&members[0])),
            (_, 1) => format!("{name} != {}", quote(&excluded[0])),
            _ => format!(
                "{name} in {{{}}}",
                members.iter().map(|m| quote(m)).collect::<Vec<_>>().join(", ")
            ),
        }
    }
}

/// The set of values a single feature may take under some constraints.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureRegion {
    Numeric(NumericRegion),
    Categorical(CategorySet),
}

impl FeatureRegion {
    pub fn everything(schema: &Schema, position: usize) -> Self {
        let feature = &schema.features()[position];
        match feature.kind {
            FeatureKind::Numeric => FeatureRegion::Numeric(NumericRegion::everything()),
            FeatureKind::Categorical => FeatureRegion::Categorical(CategorySet::all(&feature.domain)),
        }
    }

    pub fn of_condition(schema: &Schema, cond: &Condition) -> Self {
        let feature = &schema.features()[cond.position()];
        match cond.value() {
            Value::Number(t) => FeatureRegion::Numeric(NumericRegion::from_op(cond.op(), *t)),
            Value::Category(c) => {
                FeatureRegion::Categorical(CategorySet::from_op(&feature.domain, cond.op(), c))
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            FeatureRegion::Numeric(r) => r.is_empty(),
            FeatureRegion::Categorical(s) => s.is_empty(),
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (FeatureRegion::Numeric(r), Value::Number(v)) => r.contains(*v),
            (FeatureRegion::Categorical(s), Value::Category(c)) => s.contains(c),
            _ => false,
        }
    }

    pub fn complement(&self) -> Self {
        match self {
            FeatureRegion::Numeric(r) => FeatureRegion::Numeric(r.complement()),
            FeatureRegion::Categorical(s) => FeatureRegion::Categorical(s.complement()),
        }
    }

    /// Closure on numeric features; categorical sets are already closed.
    pub fn closure(&self) -> Self {
        match self {
            FeatureRegion::Numeric(r) => FeatureRegion::Numeric(r.closure()),
            other => other.clone(),
        }
    }

    pub fn intersect(&self, other: &Self) -> Self {
        match (self, other) {
            (FeatureRegion::Numeric(a), FeatureRegion::Numeric(b)) => {
                FeatureRegion::Numeric(a.intersect(b))
            }
            (FeatureRegion::Categorical(a), FeatureRegion::Categorical(b)) => {
                FeatureRegion::Categorical(a.intersect(b))
            }
            _ => panic!("intersecting regions of different feature kinds"),
        }
    }

    pub fn describe(&self, name: &str) -> String {
        match self {
            FeatureRegion::Numeric(r) => r.describe(name),
            FeatureRegion::Categorical(s) => s.describe(name),
        }
    }
}

impl fmt::Display for FeatureRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe("value"))
    }
}

fn check_clause(clause: &Clause, schema: &Schema) -> Result<(), SchemaError> {
    match clause.conditions().iter().find(|c| !c.matches_schema(schema)) {
        Some(c) => Err(SchemaError::Mismatch(c.variable().to_string())),
        None => Ok(()),
    }
}

/// True iff some instance satisfies both clauses.
///
/// Decided per feature by intersecting the value sets each condition admits.
pub fn clause_conjunction_satisfiable(
    c1: &Clause,
    c2: &Clause,
    schema: &Schema,
) -> Result<bool, SchemaError> {
    check_clause(c1, schema)?;
    check_clause(c2, schema)?;
    for cond in c1.conditions() {
        let mut region = FeatureRegion::of_condition(schema, cond);
        if let Some(other) = c2.condition_on(cond.variable()) {
            region = region.intersect(&FeatureRegion::of_condition(schema, other));
        }
        if region.is_empty() {
            return Ok(false);
        }
    }
    for cond in c2.conditions() {
        if c1.condition_on(cond.variable()).is_none()
            && FeatureRegion::of_condition(schema, cond).is_empty()
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Two rules conflict when they assign different labels to some common instance.
pub fn rules_conflict(r1: &Rule, r2: &Rule, schema: &Schema) -> Result<bool, SchemaError> {
    if r1.label == r2.label {
        check_clause(&r1.clause, schema)?;
        check_clause(&r2.clause, schema)?;
        return Ok(false);
    }
    clause_conjunction_satisfiable(&r1.clause, &r2.clause, schema)
}
