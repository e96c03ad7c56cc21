use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ClassLabel, SchemaError, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Numeric => f.write_str("numeric"),
            FeatureKind::Categorical => f.write_str("categorical"),
        }
    }
}

/// One column of a task.
///
/// Categorical features carry their full label domain. Numeric features may
/// carry a `[min, max]` range, which only enumeration-based tests look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domain: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

impl Feature {
    pub fn numeric(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Numeric,
            domain: Vec::new(),
            range: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        domain: impl IntoIterator<Item = S>,
    ) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Categorical,
            domain: domain.into_iter().map(Into::into).collect(),
            range: None,
        }
    }

    pub fn with_range(mut self, min: f64, max: f64) -> Self {
        self.range = Some([min, max]);
        self
    }

    pub fn is_numeric(&self) -> bool {
        self.kind == FeatureKind::Numeric
    }

    pub fn in_domain(&self, label: &str) -> bool {
        self.domain.iter().any(|d| d == label)
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    features: Vec<Feature>,
    labels: [String; 2],
}

/// Feature list plus the display names of the two class labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct Schema {
    features: Vec<Feature>,
    labels: [String; 2],
    index: HashMap<String, usize>,
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features && self.labels == other.labels
    }
}

impl TryFrom<SchemaFile> for Schema {
    type Error = SchemaError;

    fn try_from(file: SchemaFile) -> Result<Self, SchemaError> {
        Schema::new(file.features, file.labels)
    }
}

impl From<Schema> for SchemaFile {
    fn from(schema: Schema) -> Self {
        SchemaFile {
            features: schema.features,
            labels: schema.labels,
        }
    }
}

impl Schema {
    pub fn new(features: Vec<Feature>, labels: [String; 2]) -> Result<Self, SchemaError> {
        if labels[0] == labels[1] {
            return Err(SchemaError::DuplicateLabel(labels[0].clone()));
        }
        let mut index = HashMap::with_capacity(features.len());
        for (i, feature) in features.iter().enumerate() {
            if feature.name.trim().is_empty() || feature.name.trim() != feature.name {
                return Err(SchemaError::InvalidName(feature.name.clone()));
            }
            if index.insert(feature.name.clone(), i).is_some() {
                return Err(SchemaError::DuplicateFeature(feature.name.clone()));
            }
            match feature.kind {
                FeatureKind::Categorical => {
                    if feature.domain.is_empty() {
                        return Err(SchemaError::EmptyDomain(feature.name.clone()));
                    }
                    let mut seen = HashSet::new();
                    for label in &feature.domain {
                        if !seen.insert(label.as_str()) {
                            return Err(SchemaError::DuplicateCategory {
                                feature: feature.name.clone(),
                                category: label.clone(),
                            });
                        }
                    }
                }
                FeatureKind::Numeric => {
                    if !feature.domain.is_empty() {
                        return Err(SchemaError::DomainOnNumeric(feature.name.clone()));
                    }
                }
            }
        }
        Ok(Schema {
            features,
            labels,
            index,
        })
    }

    /// Convenience constructor used heavily in tests.
    pub fn with_labels(
        features: Vec<Feature>,
        negative: impl Into<String>,
        positive: impl Into<String>,
    ) -> Result<Self, SchemaError> {
        Schema::new(features, [negative.into(), positive.into()])
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.position(name).map(|i| &self.features[i])
    }

    pub fn require(&self, name: &str) -> Result<(usize, &Feature), SchemaError> {
        self.position(name)
            .map(|i| (i, &self.features[i]))
            .ok_or_else(|| SchemaError::UnknownFeature(name.to_string()))
    }

    pub fn labels(&self) -> &[String; 2] {
        &self.labels
    }

    pub fn label_name(&self, label: ClassLabel) -> &str {
        &self.labels[label.index()]
    }

    pub fn parse_label(&self, name: &str) -> Result<ClassLabel, SchemaError> {
        if name == self.labels[0] {
            Ok(ClassLabel::Negative)
        } else if name == self.labels[1] {
            Ok(ClassLabel::Positive)
        } else {
            Err(SchemaError::UnknownLabel(name.to_string()))
        }
    }

    /// Checks that `value` is well-typed for feature `position`.
    pub fn check_value(&self, position: usize, value: &Value) -> Result<(), SchemaError> {
        let feature = &self.features[position];
        match (feature.kind, value) {
            (FeatureKind::Numeric, Value::Number(v)) if v.is_finite() => Ok(()),
            (FeatureKind::Numeric, Value::Number(_)) => {
                Err(SchemaError::NonFinite(feature.name.clone()))
            }
            (FeatureKind::Categorical, Value::Category(c)) if feature.in_domain(c) => Ok(()),
            (FeatureKind::Categorical, Value::Category(c)) => Err(SchemaError::UnknownCategory {
                feature: feature.name.clone(),
                category: c.clone(),
            }),
            (kind, _) => Err(SchemaError::KindMismatch {
                feature: feature.name.clone(),
                expected: kind,
            }),
        }
    }

    /// Stable content hash, used to tie snapshots to the schema they were fitted on.
    pub fn fingerprint(&self) -> String {
        // FNV-1a over the canonical JSON encoding.
        let text = serde_json::to_string(self).expect("schema serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}
