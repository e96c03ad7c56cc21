//! Binary classifiers: the interface, feature encoding and a logistic regression.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{ClassLabel, FeatureKind, Instance, Schema, Value};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot fit on an empty training set")]
    EmptyData,
    #[error("{instances} instances but {labels} labels")]
    LengthMismatch { instances: usize, labels: usize },
    #[error("degenerate labels: training data contains a single class")]
    DegenerateLabels,
    #[error("model was fitted on a different schema")]
    SchemaMismatch,
    #[error("invalid hyperparameter: {0}")]
    InvalidParams(String),
    #[error("malformed model snapshot: {0}")]
    Snapshot(#[from] serde_json::Error),
}

/// Anything that maps an instance to a probability for each class.
pub trait BinaryClassifier: Send + Sync {
    /// `[p_negative, p_positive]`, summing to one.
    fn predict_proba(&self, x: &Instance) -> [f64; 2];

    /// Most probable class; an exact tie goes to the negative class.
    fn predict(&self, x: &Instance) -> ClassLabel {
        let [neg, pos] = self.predict_proba(x);
        if pos > neg {
            ClassLabel::Positive
        } else {
            ClassLabel::Negative
        }
    }
}

impl<T: BinaryClassifier + ?Sized> BinaryClassifier for Box<T> {
    fn predict_proba(&self, x: &Instance) -> [f64; 2] {
        (**self).predict_proba(x)
    }
}

impl<T: BinaryClassifier + ?Sized> BinaryClassifier for std::sync::Arc<T> {
    fn predict_proba(&self, x: &Instance) -> [f64; 2] {
        (**self).predict_proba(x)
    }
}

/// A training procedure producing a classifier.
pub trait Learner: Send + Sync {
    type Model: BinaryClassifier;

    fn fit(&self, xs: &[Instance], ys: &[ClassLabel]) -> Result<Self::Model, ModelError>;
}

pub fn accuracy<M: BinaryClassifier + ?Sized>(model: &M, xs: &[Instance], ys: &[ClassLabel]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let hits = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| model.predict(x) == **y)
        .count();
    hits as f64 / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Column {
    Numeric { mean: f64, std: f64 },
    Categorical { categories: Vec<String> },
}

/// Standardizes numeric features and one-hot encodes categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    columns: Vec<Column>,
    width: usize,
}

impl Preprocessor {
    /// Population statistics over `xs`; a constant column gets standard deviation 1.
    pub fn fit(xs: &[Instance], schema: &Schema) -> Result<Self, ModelError> {
        if xs.is_empty() {
            return Err(ModelError::EmptyData);
        }
        let n = xs.len() as f64;
        let mut columns = Vec::with_capacity(schema.len());
        for (j, feature) in schema.features().iter().enumerate() {
            let column = match feature.kind {
                FeatureKind::Numeric => {
                    let values = xs.iter().map(|x| x.get(j).as_number().unwrap_or(0.0));
                    let mean = values.clone().sum::<f64>() / n;
                    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let std = var.sqrt();
                    Column::Numeric {
                        mean,
                        std: if std > 0.0 { std } else { 1.0 },
                    }
                }
                FeatureKind::Categorical => {
                    let mut categories: Vec<String> = xs
                        .iter()
                        .filter_map(|x| x.get(j).as_category().map(str::to_string))
                        .collect();
                    categories.sort();
                    categories.dedup();
                    Column::Categorical { categories }
                }
            };
            columns.push(column);
        }
        let width = columns
            .iter()
            .map(|c| match c {
                Column::Numeric { .. } => 1,
                Column::Categorical { categories } => categories.len(),
            })
            .sum();
        Ok(Preprocessor { columns, width })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn encode(&self, x: &Instance) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width);
        self.encode_into(x, &mut out);
        out
    }

    pub fn encode_into(&self, x: &Instance, out: &mut Vec<f64>) {
        for (column, value) in self.columns.iter().zip(x.values()) {
            match (column, value) {
                (Column::Numeric { mean, std }, Value::Number(v)) => out.push((v - mean) / std),
                (Column::Categorical { categories }, Value::Category(c)) => {
                    out.extend(categories.iter().map(|k| if k == c { 1.0 } else { 0.0 }));
                }
                (Column::Numeric { .. }, _) => out.push(0.0),
                (Column::Categorical { categories }, _) => {
                    out.extend(std::iter::repeat_n(0.0, categories.len()));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            learning_rate: 0.1,
            l2: 1.0,
            tolerance: 1e-6,
            max_iter: 500,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// log(1 + e^z) without overflow
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Regularized mean log-loss and its gradient.
///
/// `loss = mean(log(1 + e^z) - y z) + l2 / (2n) * |w|^2` with `z = w.x + b`;
/// the bias is not penalized. Returns `(loss, grad_w, grad_b)`.
pub fn loss_and_gradient(
    rows: &[Vec<f64>],
    ys: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &y) in rows.iter().zip(ys) {
        let z = bias + row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        grad_b += r;
        for (g, a) in grad.iter_mut().zip(row) {
            *g += r * a;
        }
    }
    let norm: f64 = weights.iter().map(|w| w * w).sum();
    loss = loss / n + l2 / (2.0 * n) * norm;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 / n * w;
    }
    (loss, grad, grad_b / n)
}

/// Logistic regression fitted by full-batch gradient descent from zero weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub preprocessor: Preprocessor,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub params: LogisticParams,
    pub iterations: usize,
    pub schema_hash: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_history: Vec<f64>,
}

impl LogisticModel {
    pub fn fit(
        schema: &Schema,
        xs: &[Instance],
        ys: &[ClassLabel],
        params: LogisticParams,
    ) -> Result<Self, ModelError> {
        if xs.len() != ys.len() {
            return Err(ModelError::LengthMismatch {
                instances: xs.len(),
                labels: ys.len(),
            });
        }
        if !(params.learning_rate > 0.0 && params.l2 >= 0.0 && params.tolerance >= 0.0) {
            return Err(ModelError::InvalidParams(format!("{params:?}")));
        }
        let preprocessor = Preprocessor::fit(xs, schema)?;
        if ys.iter().all(|y| *y == ys[0]) {
            return Err(ModelError::DegenerateLabels);
        }
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| preprocessor.encode(x)).collect();
        let targets: Vec<f64> = ys.iter().map(|y| y.index() as f64).collect();
        let mut weights = vec![0.0; preprocessor.width()];
        let mut bias = 0.0;
        let mut history = Vec::new();
        let mut iterations = 0;
        let (mut loss, mut grad, mut grad_b) =
            loss_and_gradient(&rows, &targets, &weights, bias, params.l2);
        history.push(loss);
        while iterations < params.max_iter {
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= params.learning_rate * g;
            }
            bias -= params.learning_rate * grad_b;
            iterations += 1;
            let previous = loss;
            (loss, grad, grad_b) = loss_and_gradient(&rows, &targets, &weights, bias, params.l2);
            history.push(loss);
            if previous - loss < params.tolerance {
                break;
            }
        }
        tracing::debug!(iterations, loss, "logistic regression fitted");
        Ok(LogisticModel {
            preprocessor,
            weights,
            bias,
            params,
            iterations,
            schema_hash: schema.fingerprint(),
            loss_history: history,
        })
    }

    pub fn decision(&self, x: &Instance) -> f64 {
        let row = self.preprocessor.encode(x);
        self.bias + row.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Loads a snapshot and checks it was fitted on `schema`.
    pub fn from_json(text: &str, schema: &Schema) -> Result<Self, ModelError> {
        let model: LogisticModel = serde_json::from_str(text)?;
        if model.schema_hash != schema.fingerprint() {
            return Err(ModelError::SchemaMismatch);
        }
        Ok(model)
    }
}

impl BinaryClassifier for LogisticModel {
    fn predict_proba(&self, x: &Instance) -> [f64; 2] {
        let p = sigmoid(self.decision(x)).clamp(1e-12, 1.0 - 1e-12);
        [1.0 - p, p]
    }
}

/// Fits [`LogisticModel`]s for a fixed schema and hyperparameters.
#[derive(Debug, Clone)]
pub struct LogisticLearner {
    pub schema: std::sync::Arc<Schema>,
    pub params: LogisticParams,
}

impl LogisticLearner {
    pub fn new(schema: std::sync::Arc<Schema>) -> Self {
        LogisticLearner {
            schema,
            params: LogisticParams::default(),
        }
    }
}

impl Learner for LogisticLearner {
    type Model = LogisticModel;

    fn fit(&self, xs: &[Instance], ys: &[ClassLabel]) -> Result<LogisticModel, ModelError> {
        LogisticModel::fit(&self.schema, xs, ys, self.params)
    }
}
