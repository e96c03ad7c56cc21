//! A session directory holds one fitted model, its explanation rules and the
//! feedback table, plus the train/test split they came from.
//!
//! ```text
//! session.json    seed, label column, hyperparameters
//! schema.json     features and class labels
//! model.json      logistic model snapshot
//! ruleset.json    explanation rules learned from the model
//! feedback.jsonl  one stored feedback rule per line
//! tconfig.json    margins and domains used to build transformations
//! train.csv, test.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rulepatch::data::{load_csv, train_test_split, write_csv, Dataset, LoadOptions};
use rulepatch::explainer::{induce_rules, RuleSet, RuleSetRole, TreeConfig};
use rulepatch::model::{BinaryClassifier, LogisticModel, LogisticParams};
use rulepatch::overlay::{generate_response, FeedbackTable, RuleId, RuleRecord};
use rulepatch::rules::{parse_rule, Instance, Rule, Schema};
use rulepatch::transform::TransformationConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::AppError;

pub const SESSION_FILE: &str = "session.json";
pub const SCHEMA_FILE: &str = "schema.json";
pub const MODEL_FILE: &str = "model.json";
pub const RULESET_FILE: &str = "ruleset.json";
pub const FEEDBACK_FILE: &str = "feedback.jsonl";
pub const TCONFIG_FILE: &str = "tconfig.json";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub seed: u64,
    pub label_column: String,
    pub train_fraction: f64,
    pub logistic: LogisticParams,
    pub explainer: TreeConfig,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub data: PathBuf,
    pub schema: Option<PathBuf>,
    pub label: String,
    pub positive_label: Option<String>,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Everything a request needs: model, explanation rules and feedback table.
#[derive(Debug, Clone)]
pub struct Session {
    pub dir: PathBuf,
    pub meta: SessionMeta,
    pub schema: Arc<Schema>,
    pub model: LogisticModel,
    pub ers: RuleSet,
    pub table: FeedbackTable,
    pub tconfig: TransformationConfig,
    pub train: Dataset,
    pub test: Dataset,
}

/// Wire form of an overlay response; label fields carry class names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub prediction: String,
    pub sc_prediction: String,
    pub hc_prediction: String,
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformation_description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_rule_id: Option<RuleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleView {
    pub id: RuleId,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<RuleRecord>,
    pub corrected: RuleRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformation_description: Option<String>,
}

/// A correction as submitted: `original` omitted means a complementary rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    #[serde(default)]
    pub original: Option<RuleRecord>,
    pub corrected: RuleRecord,
}

fn read(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

/// Writes through a sibling temp file so readers never see a half-written file.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), AppError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("session files serialize")
}

fn load_split(path: &Path, schema: &Schema, label: &str) -> Result<Dataset, AppError> {
    let mut opts = LoadOptions::new(label);
    opts.schema = Some(schema.clone());
    Ok(load_csv(path, &opts)?)
}

/// Splits `"<clause>@<label>"` at its last `@`.
pub fn parse_rule_arg(text: &str) -> Result<RuleRecord, AppError> {
    let (clause, label) = text
        .rsplit_once('@')
        .ok_or_else(|| AppError::Invalid(format!("expected <clause>@<label>, got `{text}`")))?;
    Ok(RuleRecord {
        clause: clause.trim().to_string(),
        label: label.trim().to_string(),
    })
}

/// Fits the model and explanation rules and writes a fresh session to `out`.
pub fn train(opts: &TrainOptions, out: &Path) -> Result<Session, AppError> {
    let mut load = LoadOptions::new(opts.label.clone());
    load.positive_label = opts.positive_label.clone();
    if let Some(path) = &opts.schema {
        load.schema = Some(serde_json::from_str(&read(path)?)?);
    }
    let ds = load_csv(&opts.data, &load)?;
    let (train, test) = train_test_split(&ds, opts.train_fraction, opts.seed)?;
    let meta = SessionMeta {
        seed: opts.seed,
        label_column: opts.label.clone(),
        train_fraction: opts.train_fraction,
        logistic: LogisticParams::default(),
        explainer: TreeConfig::explainer(),
    };
    let model = LogisticModel::fit(&ds.schema, &train.rows, &train.labels, meta.logistic)?;
    let ers = induce_rules(
        |x| model.predict(x),
        &train.rows,
        &ds.schema,
        meta.explainer,
        RuleSetRole::Pkrs,
    );
    let session = Session {
        dir: out.to_path_buf(),
        meta,
        schema: ds.schema.clone(),
        model,
        ers,
        table: FeedbackTable::new(),
        tconfig: TransformationConfig::from_schema(&ds.schema),
        train,
        test,
    };
    session.write_all()?;
    Ok(session)
}

impl Session {
    pub fn open(dir: &Path) -> Result<Session, AppError> {
        if !dir.join(MODEL_FILE).is_file() {
            return Err(AppError::NotFitted(dir.to_path_buf()));
        }
        let meta: SessionMeta = serde_json::from_str(&read(&dir.join(SESSION_FILE))?)?;
        let schema: Schema = serde_json::from_str(&read(&dir.join(SCHEMA_FILE))?)?;
        let model = LogisticModel::from_json(&read(&dir.join(MODEL_FILE))?, &schema)?;
        let ers = RuleSet::from_json(&read(&dir.join(RULESET_FILE))?, &schema)?;
        let tconfig: TransformationConfig = serde_json::from_str(&read(&dir.join(TCONFIG_FILE))?)?;
        let table = FeedbackTable::from_jsonl(&read(&dir.join(FEEDBACK_FILE))?, &schema, &tconfig)?;
        let train = load_split(&dir.join(TRAIN_FILE), &schema, &meta.label_column)?;
        let test = load_split(&dir.join(TEST_FILE), &schema, &meta.label_column)?;
        Ok(Session {
            dir: dir.to_path_buf(),
            meta,
            schema: Arc::new(schema),
            model,
            ers,
            table,
            tconfig,
            train,
            test,
        })
    }

    fn write_all(&self) -> Result<(), AppError> {
        fs::create_dir_all(&self.dir).map_err(|e| AppError::io(&self.dir, e))?;
        write_atomic(&self.dir.join(SESSION_FILE), pretty(&self.meta).as_bytes())?;
        write_atomic(&self.dir.join(SCHEMA_FILE), pretty(&*self.schema).as_bytes())?;
        write_atomic(&self.dir.join(TCONFIG_FILE), pretty(&self.tconfig).as_bytes())?;
        write_atomic(&self.dir.join(RULESET_FILE), self.ers.to_json(&self.schema).as_bytes())?;
        for (name, ds) in [(TRAIN_FILE, &self.train), (TEST_FILE, &self.test)] {
            let mut buf = Vec::new();
            write_csv(ds, &mut buf)?;
            write_atomic(&self.dir.join(name), &buf)?;
        }
        self.save_table()?;
        // written last: its presence marks the session as fitted
        write_atomic(&self.dir.join(MODEL_FILE), self.model.to_json().as_bytes())
    }

    pub fn save_table(&self) -> Result<(), AppError> {
        write_atomic(
            &self.dir.join(FEEDBACK_FILE),
            self.table.to_jsonl(&self.schema).as_bytes(),
        )
    }

    pub fn parse_instance(&self, json: &serde_json::Value) -> Result<Instance, AppError> {
        Ok(Instance::from_json(&self.schema, json)?)
    }

    /// Seeds the response RNG from the session seed and the instance, so the
    /// same request gets the same answer from every front end and after restarts.
    pub fn request_rng(&self, x: &Instance) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.meta.seed.to_le_bytes());
        hasher.update(x.to_json(&self.schema).to_string().as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes))
    }

    pub fn respond(&self, x: &Instance) -> PredictResponse {
        self.respond_with(x, &self.table)
    }

    pub fn respond_with(&self, x: &Instance, table: &FeedbackTable) -> PredictResponse {
        let mut rng = self.request_rng(x);
        let r = generate_response(x, &self.model, &self.ers, table, &mut rng);
        let name = |l| self.schema.label_name(l).to_string();
        PredictResponse {
            prediction: name(r.model_prediction),
            sc_prediction: name(r.sc_prediction),
            hc_prediction: name(r.hc_prediction),
            explanation: r.explanation.map(|c| c.to_string()),
            user_label: r.user_label.map(name),
            transformation_description: r.transformation,
            feedback_rule_id: r.feedback_id,
        }
    }

    fn rule(&self, record: &RuleRecord) -> Result<Rule, AppError> {
        Ok(parse_rule(&record.clause, &record.label, &self.schema)?)
    }

    /// Inserts into `table` without touching disk.
    pub fn insert_into(
        &self,
        table: &mut FeedbackTable,
        req: &FeedbackRequest,
        tconfig: Option<&TransformationConfig>,
    ) -> Result<RuleId, AppError> {
        let corrected = self.rule(&req.corrected)?;
        let original = req.original.as_ref().map(|r| self.rule(r)).transpose()?;
        let config = match tconfig {
            Some(c) => c.clone().completed(&self.schema),
            None => self.tconfig.clone(),
        };
        let stored = table.add_feedback_rule(corrected, original, &config, &self.schema)?;
        Ok(stored.id)
    }

    pub fn add_feedback(
        &mut self,
        req: &FeedbackRequest,
        tconfig: Option<&TransformationConfig>,
    ) -> Result<RuleId, AppError> {
        let mut table = self.table.clone();
        let id = self.insert_into(&mut table, req, tconfig)?;
        let previous = std::mem::replace(&mut self.table, table);
        if let Err(e) = self.save_table() {
            self.table = previous;
            return Err(e);
        }
        Ok(id)
    }

    pub fn remove_feedback(&mut self, id: RuleId) -> Result<(), AppError> {
        let mut table = self.table.clone();
        table.remove(id)?;
        let previous = std::mem::replace(&mut self.table, table);
        if let Err(e) = self.save_table() {
            self.table = previous;
            return Err(e);
        }
        Ok(())
    }

    pub fn rules(&self) -> Vec<RuleView> {
        self.table
            .rules()
            .iter()
            .map(|r| RuleView {
                id: r.id,
                seq: r.seq,
                original: r.original.as_ref().map(|o| RuleRecord::new(o, &self.schema)),
                corrected: RuleRecord::new(&r.corrected, &self.schema),
                transformation_description: r.transformation.as_ref().map(|t| t.description.clone()),
            })
            .collect()
    }
}
