//! Oracle-driven experiments: slice-wise feedback with and without retraining,
//! and the comparison against low-margin active learning.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{partition, train_test_split, DataError, Dataset};
use crate::explainer::{induce_rules, RuleInducer, RuleSet, RuleSetRole, TreeConfig, TreeInducer};
use crate::model::{BinaryClassifier, LogisticModel, LogisticParams, ModelError};
use crate::overlay::{generate_response, FeedbackTable, OverlayError};
use crate::rules::{ClassLabel, Instance, Rule, Schema};
use crate::transform::TransformationConfig;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("test set is empty")]
    EmptyTest,
    #[error("pool is empty")]
    EmptyPool,
    #[error("batch of {batch} requested from a pool of {pool}")]
    BatchTooLarge { batch: usize, pool: usize },
    #[error("no curves to aggregate")]
    NoCurves,
    #[error("series {series} has different instance grids across seeds")]
    GridMismatch { series: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "exp1")]
    Exp1,
    #[serde(rename = "exp2")]
    Exp2,
    #[serde(rename = "al")]
    ActiveLearning,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Exp1 => "exp1",
            Mode::Exp2 => "exp2",
            Mode::ActiveLearning => "al",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exp1" => Ok(Mode::Exp1),
            "exp2" => Ok(Mode::Exp2),
            "al" | "active_learning" => Ok(Mode::ActiveLearning),
            other => Err(format!("unknown mode {other:?}, expected exp1, exp2 or al")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Ml,
    OverlaySc,
    OverlayHc,
    AlModel,
}

impl Series {
    pub fn name(self) -> &'static str {
        match self {
            Series::Ml => "ml",
            Series::OverlaySc => "overlay_sc",
            Series::OverlayHc => "overlay_hc",
            Series::AlModel => "al_model",
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub tconfig: TransformationConfig,
    pub oracle: TreeConfig,
    pub explainer: TreeConfig,
    pub logistic: LogisticParams,
    pub train_fraction: f64,
    pub partitions: usize,
    pub batch_size: usize,
    pub n_iterations: usize,
    pub initial_fraction: f64,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, dataset: impl Into<String>, schema: &Schema) -> Self {
        ExperimentConfig {
            mode,
            dataset: dataset.into(),
            seeds: (0..50).collect(),
            tconfig: TransformationConfig::from_schema(schema),
            oracle: TreeConfig::oracle(),
            explainer: TreeConfig::explainer(),
            logistic: LogisticParams::default(),
            train_fraction: 0.8,
            partitions: 4,
            batch_size: 10,
            n_iterations: 20,
            initial_fraction: 1.0 / 50.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.seeds.is_empty() {
            return Err(SimError::Config("seed list is empty".into()));
        }
        if self.batch_size == 0 {
            return Err(SimError::Config("batch size must be at least 1".into()));
        }
        if self.partitions < 2 {
            return Err(SimError::Config("need at least two partitions".into()));
        }
        if !(self.initial_fraction > 0.0 && self.initial_fraction < 1.0) {
            return Err(SimError::Config("initial fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub series: Series,
    pub seed: u64,
    /// `(instances consumed, accuracy)`.
    pub points: Vec<(usize, f64)>,
}

/// Counters kept during one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Models fitted for the ML series.
    pub model_fits: usize,
    /// Times the overlay got a new model and rule set.
    pub overlay_fits: usize,
    pub oracle_queries: usize,
    pub feedback_added: usize,
    pub conflicts_dropped: usize,
    pub transform_failures: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub curves: Vec<AccuracyCurve>,
    pub stats: RunStats,
    pub table: FeedbackTable,
    pub wall_time_secs: f64,
}

impl RunOutput {
    pub fn curve(&self, series: Series) -> Option<&AccuracyCurve> {
        self.curves.iter().find(|c| c.series == series)
    }
}

/// A fitted model, or a constant one when the training labels are all equal.
#[derive(Debug, Clone)]
pub enum Fitted {
    Logistic(LogisticModel),
    Constant(ClassLabel),
}

impl BinaryClassifier for Fitted {
    fn predict_proba(&self, x: &Instance) -> [f64; 2] {
        match self {
            Fitted::Logistic(m) => m.predict_proba(x),
            Fitted::Constant(ClassLabel::Negative) => [1.0, 0.0],
            Fitted::Constant(ClassLabel::Positive) => [0.0, 1.0],
        }
    }
}

pub fn fit_model(
    schema: &Schema,
    xs: &[Instance],
    ys: &[ClassLabel],
    params: LogisticParams,
) -> Result<Fitted, SimError> {
    match LogisticModel::fit(schema, xs, ys, params) {
        Ok(m) => Ok(Fitted::Logistic(m)),
        Err(ModelError::DegenerateLabels) => {
            tracing::warn!(label = ?ys[0], "single-class training slice, using a constant model");
            Ok(Fitted::Constant(ys[0]))
        }
        Err(e) => Err(e.into()),
    }
}

/// Model, its explainer rule set and the feedback table on top.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub model: Fitted,
    pub ers: RuleSet,
    pub table: FeedbackTable,
}

impl Overlay {
    pub fn new(model: Fitted, ers: RuleSet) -> Self {
        Overlay {
            model,
            ers,
            table: FeedbackTable::new(),
        }
    }

    /// Replaces model and rule set; stored feedback is kept.
    pub fn refit(&mut self, model: Fitted, ers: RuleSet) {
        self.model = model;
        self.ers = ers;
    }
}

/// Rule set explaining `model` on `xs`.
pub fn learn_model_rules(
    model: &Fitted,
    xs: &[Instance],
    schema: &Schema,
    config: TreeConfig,
) -> RuleSet {
    induce_rules(|x| model.predict(x), xs, schema, config, RuleSetRole::Pkrs)
}

/// Full-knowledge rule set induced from the ground truth of every row.
pub fn build_oracle(ds: &Dataset, config: TreeConfig) -> RuleSet {
    TreeInducer::new(config).induce(&ds.schema, &ds.rows, &ds.labels, RuleSetRole::Fkrs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracies {
    pub ml: f64,
    pub sc: f64,
    pub hc: f64,
}

/// Raw model accuracy plus the overlay's soft and hard constraint accuracies.
pub fn compute_accuracy<M, R>(
    overlay: &Overlay,
    model: &M,
    xs: &[Instance],
    ys: &[ClassLabel],
    rng: &mut R,
) -> Result<Accuracies, SimError>
where
    M: BinaryClassifier + ?Sized,
    R: Rng + ?Sized,
{
    if xs.is_empty() {
        return Err(SimError::EmptyTest);
    }
    let (mut ml, mut sc, mut hc) = (0usize, 0usize, 0usize);
    for (x, &y) in xs.iter().zip(ys) {
        ml += usize::from(model.predict(x) == y);
        let r = generate_response(x, &overlay.model, &overlay.ers, &overlay.table, rng);
        sc += usize::from(r.sc_prediction == y);
        hc += usize::from(r.hc_prediction == y);
    }
    let n = xs.len() as f64;
    Ok(Accuracies {
        ml: ml as f64 / n,
        sc: sc as f64 / n,
        hc: hc as f64 / n,
    })
}

fn feedback_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

// Fresh per measurement, so evaluation never shifts the draws of the feedback loop.
fn eval_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

/// Simulated user: corrects the overlay's answer on `x` with a clause from the oracle.
#[allow(clippy::too_many_arguments)]
fn oracle_feedback<R: Rng + ?Sized>(
    overlay: &mut Overlay,
    fkrs: &RuleSet,
    x: &Instance,
    label: ClassLabel,
    config: &ExperimentConfig,
    schema: &Schema,
    stats: &mut RunStats,
    rng: &mut R,
) {
    let fk = fkrs.explain(x, label);
    if fk.is_empty() {
        return;
    }
    stats.oracle_queries += 1;
    let response = generate_response(x, &overlay.model, &overlay.ers, &overlay.table, rng);
    if response.user_label.is_some() {
        return;
    }
    let p = response.model_prediction;
    let e_prime = match fk.len() {
        1 => fk[0].clone(),
        n => fk[rng.gen_range(0..n)].clone(),
    };
    let corrected = Rule::new(e_prime.clone(), label);
    let original = match response.explanation {
        None => None,
        Some(e) if e != e_prime || p != label => Some(Rule::new(e, p)),
        Some(_) => return,
    };
    match overlay
        .table
        .add_feedback_rule(corrected, original, &config.tconfig, schema)
    {
        Ok(_) => stats.feedback_added += 1,
        Err(OverlayError::Conflict { conflict_with }) => {
            tracing::warn!(conflict_with, clause = %e_prime, "dropping conflicting oracle correction");
            stats.conflicts_dropped += 1;
        }
        Err(err) => {
            tracing::warn!(%err, clause = %e_prime, "dropping oracle correction");
            stats.transform_failures += 1;
        }
    }
}

/// 1-based positions inside a slice of `len` rows after which accuracy is measured.
///
/// Every `ceil(len / 10)` rows plus the slice end. When that does not give ten
/// points (slices under about 90 rows) the positions `ceil(j * len / 10)` are used.
pub fn measurement_points(len: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let step = len.div_ceil(10);
    let mut points: Vec<usize> = (1..=len / step).map(|j| j * step).collect();
    if points.last() != Some(&len) {
        points.push(len);
    }
    if points.len() != 10 {
        points = (1..=10).map(|j| (j * len).div_ceil(10)).collect();
    }
    points
}

struct Recorder {
    seed: u64,
    series: Vec<Series>,
    points: Vec<Vec<(usize, f64)>>,
}

impl Recorder {
    fn new(seed: u64, series: &[Series]) -> Self {
        Recorder {
            seed,
            series: series.to_vec(),
            points: vec![Vec::new(); series.len()],
        }
    }

    fn push(&mut self, instances: usize, values: &[f64]) {
        for (pts, &v) in self.points.iter_mut().zip(values) {
            pts.push((instances, v));
        }
    }

    fn finish(self) -> Vec<AccuracyCurve> {
        self.series
            .into_iter()
            .zip(self.points)
            .map(|(series, points)| AccuracyCurve {
                series,
                seed: self.seed,
                points,
            })
            .collect()
    }
}

/// Experiments 1 and 2 for one seed.
pub fn run_experiment(
    ds: &Dataset,
    fkrs: &RuleSet,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RunOutput, SimError> {
    let started = Instant::now();
    let retrain_overlay = match config.mode {
        Mode::Exp1 => true,
        Mode::Exp2 => false,
        Mode::ActiveLearning => {
            return Err(SimError::Config("run_experiment handles exp1 and exp2".into()))
        }
    };
    let schema = &ds.schema;
    let (train, test) = train_test_split(ds, config.train_fraction, seed)?;
    if test.is_empty() {
        return Err(SimError::EmptyTest);
    }
    let parts = partition(&train, config.partitions)?;
    let mut rng = feedback_rng(seed);
    let mut stats = RunStats::default();
    let mut overlay: Option<Overlay> = None;
    let mut rec = Recorder::new(seed, &[Series::Ml, Series::OverlaySc, Series::OverlayHc]);

    for k in 1..parts.len() {
        let slice = Dataset::concat(&parts[..k])?;
        let pk_model = fit_model(schema, &slice.rows, &slice.labels, config.logistic)?;
        stats.model_fits += 1;
        if retrain_overlay || overlay.is_none() {
            let ers = learn_model_rules(&pk_model, &slice.rows, schema, config.explainer);
            match overlay.as_mut() {
                Some(o) => o.refit(pk_model.clone(), ers),
                None => overlay = Some(Overlay::new(pk_model.clone(), ers)),
            }
            stats.overlay_fits += 1;
        }
        let overlay = overlay.as_mut().expect("set above");

        let measure = |overlay: &Overlay| -> Result<[f64; 3], SimError> {
            let acc =
                compute_accuracy(overlay, &pk_model, &test.rows, &test.labels, &mut eval_rng(seed))?;
            Ok([acc.ml, acc.sc, acc.hc])
        };
        rec.push(slice.len(), &measure(overlay)?);

        let learning = &parts[k];
        let marks = measurement_points(learning.len());
        let mut next = 0;
        for i in 1..=learning.len() {
            let (x, y) = (&learning.rows[i - 1], learning.labels[i - 1]);
            oracle_feedback(overlay, fkrs, x, y, config, schema, &mut stats, &mut rng);
            while next < marks.len() && marks[next] == i {
                rec.push(i + slice.len(), &measure(overlay)?);
                next += 1;
            }
        }
    }

    Ok(RunOutput {
        seed,
        curves: rec.finish(),
        stats,
        table: overlay.map(|o| o.table).unwrap_or_default(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Indices of the `batch` pool rows with the smallest probability margin, ties by index.
pub fn low_margin_query(batch: usize, probas: &[[f64; 2]]) -> Result<Vec<usize>, SimError> {
    if probas.is_empty() {
        return Err(SimError::EmptyPool);
    }
    if batch > probas.len() {
        return Err(SimError::BatchTooLarge {
            batch,
            pool: probas.len(),
        });
    }
    let mut order: Vec<usize> = (0..probas.len()).collect();
    let margin = |i: usize| (probas[i][1] - probas[i][0]).abs();
    order.sort_by(|&a, &b| margin(a).total_cmp(&margin(b)).then(a.cmp(&b)));
    order.truncate(batch);
    Ok(order)
}

/// Labelled rows and the pool, both as indices into the training set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelPool {
    pub labelled: Vec<usize>,
    pub pool: Vec<usize>,
}

impl LabelPool {
    /// The first `initial` training rows start out labelled.
    pub fn new(n: usize, initial: usize) -> Self {
        let initial = initial.min(n);
        LabelPool {
            labelled: (0..initial).collect(),
            pool: (initial..n).collect(),
        }
    }

    /// Moves the given pool positions to the labelled set, in the given order.
    /// Returns the training-set indices moved.
    pub fn take(&mut self, positions: &[usize]) -> Vec<usize> {
        let moved: Vec<usize> = positions.iter().map(|&p| self.pool[p]).collect();
        let mut drop = vec![false; self.pool.len()];
        for &p in positions {
            drop[p] = true;
        }
        let mut keep = drop.iter();
        self.pool.retain(|_| !*keep.next().expect("same length"));
        self.labelled.extend(&moved);
        moved
    }
}

/// Active learning against the frozen-model overlay for one seed.
pub fn run_active_learning(
    ds: &Dataset,
    fkrs: &RuleSet,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RunOutput, SimError> {
    let started = Instant::now();
    let schema = &ds.schema;
    let initial = (ds.len() as f64 * config.initial_fraction).floor() as usize;
    let (train, test) = train_test_split(ds, config.train_fraction, seed)?;
    if test.is_empty() {
        return Err(SimError::EmptyTest);
    }
    if initial == 0 || initial >= train.len() {
        return Err(SimError::Config(format!(
            "initial slice of {initial} rows does not fit a training set of {}",
            train.len()
        )));
    }
    let mut rng = feedback_rng(seed);
    let mut stats = RunStats::default();
    let mut split = LabelPool::new(train.len(), initial);

    let labelled = train.subset(&split.labelled);
    let mut pk_model = fit_model(schema, &labelled.rows, &labelled.labels, config.logistic)?;
    stats.model_fits += 1;
    let ers = learn_model_rules(&pk_model, &labelled.rows, schema, config.explainer);
    let mut overlay = Overlay::new(pk_model.clone(), ers);
    stats.overlay_fits += 1;

    let mut rec = Recorder::new(seed, &[Series::AlModel, Series::OverlaySc, Series::OverlayHc]);
    let measure = |overlay: &Overlay, model: &Fitted| -> Result<[f64; 3], SimError> {
        let acc = compute_accuracy(overlay, model, &test.rows, &test.labels, &mut eval_rng(seed))?;
        Ok([acc.ml, acc.sc, acc.hc])
    };
    rec.push(0, &measure(&overlay, &pk_model)?);

    for k in 1..=config.n_iterations {
        let probas: Vec<[f64; 2]> = split
            .pool
            .iter()
            .map(|&i| pk_model.predict_proba(&train.rows[i]))
            .collect();
        let picked = low_margin_query(config.batch_size, &probas)?;
        let batch = split.take(&picked);
        for &i in &batch {
            let (x, y) = (&train.rows[i], train.labels[i]);
            oracle_feedback(&mut overlay, fkrs, x, y, config, schema, &mut stats, &mut rng);
        }
        let labelled = train.subset(&split.labelled);
        pk_model = fit_model(schema, &labelled.rows, &labelled.labels, config.logistic)?;
        stats.model_fits += 1;
        rec.push(config.batch_size * k, &measure(&overlay, &pk_model)?);
    }

    Ok(RunOutput {
        seed,
        curves: rec.finish(),
        stats,
        table: overlay.table,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Runs every configured seed in parallel; results come back in seed order.
pub fn run_all(ds: &Dataset, config: &ExperimentConfig) -> Result<Vec<RunOutput>, SimError> {
    config.validate()?;
    let fkrs = build_oracle(ds, config.oracle);
    config
        .seeds
        .par_iter()
        .map(|&seed| match config.mode {
            Mode::ActiveLearning => run_active_learning(ds, &fkrs, config, seed),
            _ => run_experiment(ds, &fkrs, config, seed),
        })
        .collect()
}

/// Percentile `q` in `[0, 1]` of sorted values, interpolating linearly between ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub series: Series,
    pub instances: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

/// Median and quartile band per series and point, across seeds.
pub fn aggregate_curves(curves: &[AccuracyCurve]) -> Result<Vec<AggregatePoint>, SimError> {
    if curves.is_empty() {
        return Err(SimError::NoCurves);
    }
    let mut by_series: BTreeMap<Series, Vec<&AccuracyCurve>> = BTreeMap::new();
    for c in curves {
        by_series.entry(c.series).or_default().push(c);
    }
    let mut out = Vec::new();
    for (series, group) in by_series {
        let grid: Vec<usize> = group[0].points.iter().map(|p| p.0).collect();
        for c in &group {
            if c.points.len() != grid.len() || c.points.iter().zip(&grid).any(|(p, g)| p.0 != *g) {
                return Err(SimError::GridMismatch {
                    series: series.to_string(),
                });
            }
        }
        for (j, &instances) in grid.iter().enumerate() {
            let mut values: Vec<f64> = group.iter().map(|c| c.points[j].1).collect();
            values.sort_by(f64::total_cmp);
            out.push(AggregatePoint {
                series,
                instances,
                median: percentile(&values, 0.5),
                p25: percentile(&values, 0.25),
                p75: percentile(&values, 0.75),
            });
        }
    }
    Ok(out)
}

pub fn write_curves_csv<W: Write>(
    out: W,
    mode: Mode,
    dataset: &str,
    runs: &[RunOutput],
) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "dataset", "seed", "series", "instances", "accuracy"])?;
    for run in runs {
        for curve in &run.curves {
            for &(instances, acc) in &curve.points {
                w.write_record([
                    mode.name(),
                    dataset,
                    &curve.seed.to_string(),
                    curve.series.name(),
                    &instances.to_string(),
                    &acc.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(
    out: W,
    mode: Mode,
    dataset: &str,
    points: &[AggregatePoint],
) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "dataset", "series", "instances", "median", "p25", "p75"])?;
    for p in points {
        w.write_record([
            mode.name(),
            dataset,
            p.series.name(),
            &p.instances.to_string(),
            &p.median.to_string(),
            &p.p25.to_string(),
            &p.p75.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-run record written next to the curves.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub config: &'a ExperimentConfig,
    pub seed: u64,
    pub stats: RunStats,
    pub feedback_rules: usize,
    pub wall_time_secs: f64,
}
