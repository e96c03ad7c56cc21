//! CSV datasets, seeded splits and partitions.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rules::{format_number, ClassLabel, Feature, Instance, Schema, SchemaError, Value};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("column {0:?} required by the schema is missing")]
    MissingColumn(String),
    #[error("column {0:?} is not in the schema")]
    UnexpectedColumn(String),
    #[error("expected at most two label values, found {0:?}")]
    TooManyLabels(Vec<String>),
    #[error("positive label {0:?} does not occur in the label column")]
    UnknownPositiveLabel(String),
    #[error("line {line}: expected {expected} cells, found {found}")]
    Arity {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: column {column:?}: {cell:?} is not a number")]
    BadNumber {
        line: u64,
        column: String,
        cell: String,
    },
    #[error("line {line}: column {column:?} is empty")]
    EmptyCell { line: u64, column: String },
    #[error("line {line}: {source}")]
    Row {
        line: u64,
        #[source]
        source: SchemaError,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("dataset is empty")]
    Empty,
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("cannot cut {n} rows into {k} parts")]
    Partition { n: usize, k: usize },
}

/// Rows, their labels and the schema they conform to.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Arc<Schema>,
    pub label_column: String,
    pub rows: Vec<Instance>,
    pub labels: Vec<ClassLabel>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub label_column: String,
    /// Label value mapped to [`ClassLabel::Positive`]. Ignored when a schema is given.
    pub positive_label: Option<String>,
    /// Explicit schema; inferred from the cells when absent.
    pub schema: Option<Schema>,
}

impl LoadOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        LoadOptions {
            label_column: label_column.into(),
            ..Default::default()
        }
    }
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, options)
}

pub fn read_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_at = header
        .iter()
        .position(|h| *h == options.label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(options.label_column.clone()))?;

    let mut records = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(DataError::Arity {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        let cells: Vec<String> = record.iter().map(|c| c.trim().to_string()).collect();
        records.push((line, cells));
    }
    if records.is_empty() {
        return Err(DataError::Empty);
    }

    let mut label_values = BTreeSet::new();
    for (_, cells) in &records {
        label_values.insert(cells[label_at].clone());
    }

    let columns: Vec<usize> = (0..header.len()).filter(|&i| i != label_at).collect();
    let schema = match &options.schema {
        Some(schema) => {
            for name in columns.iter().map(|&i| &header[i]) {
                if schema.position(name).is_none() {
                    return Err(DataError::UnexpectedColumn(name.clone()));
                }
            }
            for feature in schema.features() {
                if !header.contains(&feature.name) {
                    return Err(DataError::MissingColumn(feature.name.clone()));
                }
            }
            schema.clone()
        }
        None => infer_schema(&header, &columns, &records, label_values, options)?,
    };

    // header index for each schema position
    let source: Vec<usize> = schema
        .features()
        .iter()
        .map(|f| header.iter().position(|h| *h == f.name).expect("checked above"))
        .collect();

    let mut rows = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (line, cells) in &records {
        let mut values = Vec::with_capacity(source.len());
        for (feature, &at) in schema.features().iter().zip(&source) {
            let cell = &cells[at];
            if cell.is_empty() {
                return Err(DataError::EmptyCell {
                    line: *line,
                    column: feature.name.clone(),
                });
            }
            let value = if feature.is_numeric() {
                Value::Number(parse_number(cell).ok_or_else(|| DataError::BadNumber {
                    line: *line,
                    column: feature.name.clone(),
                    cell: cell.clone(),
                })?)
            } else {
                Value::Category(cell.clone())
            };
            values.push(value);
        }
        let row = Instance::new(&schema, values).map_err(|source| DataError::Row {
            line: *line,
            source,
        })?;
        let label = schema
            .parse_label(&cells[label_at])
            .map_err(|source| DataError::Row {
                line: *line,
                source,
            })?;
        rows.push(row);
        labels.push(label);
    }

    Ok(Dataset {
        schema: Arc::new(schema),
        label_column: options.label_column.clone(),
        rows,
        labels,
    })
}

fn infer_schema(
    header: &[String],
    columns: &[usize],
    records: &[(u64, Vec<String>)],
    label_values: BTreeSet<String>,
    options: &LoadOptions,
) -> Result<Schema, DataError> {
    let mut features = Vec::with_capacity(columns.len());
    for &i in columns {
        let filled = || records.iter().map(|(_, c)| c[i].as_str()).filter(|c| !c.is_empty());
        let numeric = filled().next().is_some() && filled().all(|c| parse_number(c).is_some());
        if numeric {
            features.push(Feature::numeric(header[i].clone()));
        } else {
            let domain: BTreeSet<&str> = filled().collect();
            features.push(Feature::categorical(header[i].clone(), domain));
        }
    }

    let values: Vec<String> = label_values.into_iter().collect();
    if values.len() > 2 {
        return Err(DataError::TooManyLabels(values));
    }
    let labels = match &options.positive_label {
        Some(pos) => {
            if !values.contains(pos) {
                return Err(DataError::UnknownPositiveLabel(pos.clone()));
            }
            let neg = values
                .iter()
                .find(|v| *v != pos)
                .cloned()
                .unwrap_or_else(|| format!("not {pos}"));
            [neg, pos.clone()]
        }
        None => match values.as_slice() {
            [a, b] => [a.clone(), b.clone()],
            [only] => [format!("not {only}"), only.clone()],
            _ => unreachable!("records are non-empty"),
        },
    };
    Ok(Schema::new(features, labels)?)
}

/// Writes the dataset back as CSV, features in schema order, label last.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.schema.features().iter().map(|f| f.name.as_str()).collect();
    header.push(&ds.label_column);
    out.write_record(&header)?;
    for (row, label) in ds.rows.iter().zip(&ds.labels) {
        let mut cells: Vec<String> = row
            .values()
            .iter()
            .map(|v| match v {
                Value::Number(n) => n.to_string(),
                Value::Category(c) => c.clone(),
            })
            .collect();
        cells.push(ds.schema.label_name(*label).to_string());
        out.write_record(&cells)?;
    }
    out.flush()?;
    Ok(())
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same schema, rows picked by index.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            label_column: self.label_column.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Rows `range` in order.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            label_column: self.label_column.clone(),
            rows: self.rows[range.clone()].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }

    pub fn concat(parts: &[Dataset]) -> Result<Dataset, DataError> {
        let first = parts.first().ok_or(DataError::Empty)?;
        let mut out = first.slice(0..0);
        for part in parts {
            out.rows.extend(part.rows.iter().cloned());
            out.labels.extend(part.labels.iter().copied());
        }
        Ok(out)
    }

    /// Counts rows per class, negative first.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    /// `name=value, ... -> label`, for logs.
    pub fn describe_row(&self, i: usize) -> String {
        let cells: Vec<String> = self
            .schema
            .features()
            .iter()
            .zip(self.rows[i].values())
            .map(|(f, v)| match v {
                Value::Number(n) => format!("{}={}", f.name, format_number(*n)),
                Value::Category(c) => format!("{}={c}", f.name),
            })
            .collect();
        format!("{} -> {}", cells.join(", "), self.schema.label_name(self.labels[i]))
    }
}

/// Row order after shuffling with `ChaCha8Rng::seed_from_u64(seed)`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Shuffles rows by `seed`; the first `floor(fraction * n)` go to train.
pub fn train_test_split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if ds.is_empty() {
        return Err(DataError::Empty);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::Fraction(train_fraction));
    }
    let order = shuffled_indices(ds.len(), seed);
    let cut = (train_fraction * ds.len() as f64).floor() as usize;
    Ok((ds.subset(&order[..cut]), ds.subset(&order[cut..])))
}

/// Part sizes for `n` rows in `k` contiguous parts, larger parts first.
pub fn partition_sizes(n: usize, k: usize) -> Result<Vec<usize>, DataError> {
    if k == 0 || k > n {
        return Err(DataError::Partition { n, k });
    }
    let (base, extra) = (n / k, n % k);
    Ok((0..k).map(|i| base + usize::from(i < extra)).collect())
}

pub fn partition(ds: &Dataset, k: usize) -> Result<Vec<Dataset>, DataError> {
    let sizes = partition_sizes(ds.len(), k)?;
    let mut start = 0;
    Ok(sizes
        .into_iter()
        .map(|size| {
            let part = ds.slice(start..start + size);
            start += size;
            part
        })
        .collect())
}
