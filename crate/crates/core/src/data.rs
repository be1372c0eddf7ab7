//! Domain types, dataset containers and CSV I/O.
//!
//! Two record layouts share one container: full-information records carry
//! the correct arm (class label) for a context, bandit records carry the arm
//! that was displayed, the observed binary reward and the probability with
//! which the logging policy displayed that arm.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::Deref;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: non-numeric feature value {value:?} in column {column}")]
    NonNumeric { line: u64, column: usize, value: String },
    #[error("line {line}: non-finite feature value in column {column}")]
    NonFinite { line: u64, column: usize },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("no records")]
    NoRecords,
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("context has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("context contains a non-finite value")]
    NonFiniteContext,
    #[error("arm {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },
    #[error("reward must be 0 or 1, got {0}")]
    InvalidReward(u8),
    #[error("propensity must lie in (0, 1], got {0}")]
    InvalidPropensity(f64),
    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("expected a {expected} dataset")]
    WrongKind { expected: DatasetKind },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// A user's feature vector. Every entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ContextVector(Vec<f64>);

impl ContextVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(ContextVector(values))
        } else {
            Err(DataError::NonFiniteContext)
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ContextVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ContextVector {
    type Error = DataError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ContextVector::new(values)
    }
}

impl From<ContextVector> for Vec<f64> {
    fn from(c: ContextVector) -> Vec<f64> {
        c.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedRecord {
    pub context: ContextVector,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditRecord {
    pub context: ContextVector,
    pub action: usize,
    pub reward: u8,
    pub propensity: f64,
}

impl BanditRecord {
    pub fn clicked(&self) -> bool {
        self.reward == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    FullInformation,
    Bandit,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetKind::FullInformation => f.write_str("full-information"),
            DatasetKind::Bandit => f.write_str("bandit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Full(Vec<SupervisedRecord>),
    Bandit(Vec<BanditRecord>),
}

/// Validated, immutable collection of records sharing one dimension and arm
/// count. `arm_labels[i]` is the label arm `i` had in the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dimension: usize,
    num_arms: usize,
    records: Records,
    arm_labels: Vec<String>,
}

fn default_labels(num_arms: usize) -> Vec<String> {
    (0..num_arms).map(|a| a.to_string()).collect()
}

impl Dataset {
    pub fn full(dimension: usize, num_arms: usize, records: Vec<SupervisedRecord>) -> Result<Self> {
        Self::with_labels(dimension, Records::Full(records), default_labels(num_arms))
    }

    pub fn bandit(dimension: usize, num_arms: usize, records: Vec<BanditRecord>) -> Result<Self> {
        Self::with_labels(dimension, Records::Bandit(records), default_labels(num_arms))
    }

    /// Builds a dataset whose arm count is `arm_labels.len()`, validating every
    /// record against the dimension and arm range.
    pub fn with_labels(dimension: usize, records: Records, arm_labels: Vec<String>) -> Result<Self> {
        if arm_labels.is_empty() {
            return Err(DataError::Schema("dataset needs at least one arm".into()));
        }
        let num_arms = arm_labels.len();
        let check_ctx = |c: &ContextVector| {
            if c.len() != dimension {
                Err(DataError::DimensionMismatch { expected: dimension, found: c.len() })
            } else {
                Ok(())
            }
        };
        let check_arm = |arm: usize| {
            if arm >= num_arms {
                Err(DataError::ArmOutOfRange { arm, num_arms })
            } else {
                Ok(())
            }
        };
        match &records {
            Records::Full(rs) => {
                for r in rs {
                    check_ctx(&r.context)?;
                    check_arm(r.label)?;
                }
            }
            Records::Bandit(rs) => {
                for r in rs {
                    check_ctx(&r.context)?;
                    check_arm(r.action)?;
                    if r.reward > 1 {
                        return Err(DataError::InvalidReward(r.reward));
                    }
                    if !(r.propensity > 0.0 && r.propensity <= 1.0) {
                        return Err(DataError::InvalidPropensity(r.propensity));
                    }
                }
            }
        }
        Ok(Dataset { dimension, num_arms, records, arm_labels })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn arm_labels(&self) -> &[String] {
        &self.arm_labels
    }

    pub fn records(&self) -> &Records {
        &self.records
    }

    pub fn kind(&self) -> DatasetKind {
        match self.records {
            Records::Full(_) => DatasetKind::FullInformation,
            Records::Bandit(_) => DatasetKind::Bandit,
        }
    }

    pub fn len(&self) -> usize {
        match &self.records {
            Records::Full(rs) => rs.len(),
            Records::Bandit(rs) => rs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn supervised(&self) -> Result<&[SupervisedRecord]> {
        match &self.records {
            Records::Full(rs) => Ok(rs),
            Records::Bandit(_) => Err(DataError::WrongKind { expected: DatasetKind::FullInformation }),
        }
    }

    pub fn logged(&self) -> Result<&[BanditRecord]> {
        match &self.records {
            Records::Bandit(rs) => Ok(rs),
            Records::Full(_) => Err(DataError::WrongKind { expected: DatasetKind::Bandit }),
        }
    }

    pub fn context(&self, i: usize) -> &ContextVector {
        match &self.records {
            Records::Full(rs) => &rs[i].context,
            Records::Bandit(rs) => &rs[i].context,
        }
    }

    pub fn contexts(&self) -> impl Iterator<Item = &ContextVector> + '_ {
        (0..self.len()).map(move |i| self.context(i))
    }

    /// The supervised label or the bandit reward, used as the prediction
    /// target when scoring features.
    pub fn target(&self, i: usize) -> usize {
        match &self.records {
            Records::Full(rs) => rs[i].label,
            Records::Bandit(rs) => rs[i].reward as usize,
        }
    }

    /// New dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records = match &self.records {
            Records::Full(rs) => Records::Full(indices.iter().map(|&i| rs[i].clone()).collect()),
            Records::Bandit(rs) => Records::Bandit(indices.iter().map(|&i| rs[i].clone()).collect()),
        };
        Dataset { dimension: self.dimension, num_arms: self.num_arms, records, arm_labels: self.arm_labels.clone() }
    }

    /// Applies `f` to every context. `f` must return vectors of length `dimension`.
    pub fn map_contexts<F>(&self, dimension: usize, f: F) -> Result<Dataset>
    where
        F: Fn(&ContextVector) -> Vec<f64>,
    {
        let ctx = |c: &ContextVector| ContextVector::new(f(c));
        let records = match &self.records {
            Records::Full(rs) => Records::Full(
                rs.iter()
                    .map(|r| Ok(SupervisedRecord { context: ctx(&r.context)?, label: r.label }))
                    .collect::<Result<_>>()?,
            ),
            Records::Bandit(rs) => Records::Bandit(
                rs.iter()
                    .map(|r| Ok(BanditRecord { context: ctx(&r.context)?, ..r.clone() }))
                    .collect::<Result<_>>()?,
            ),
        };
        Dataset::with_labels(dimension, records, self.arm_labels.clone())
    }

    /// SHA-256 of the canonical CSV rendering, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        write_csv(self, &mut HashWriter(&mut hasher)).expect("hashing never fails");
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

struct HashWriter<'a>(&'a mut Sha256);

impl Write for HashWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Column reference in a schema: zero-based position, the last column, or a
/// header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Column {
    Index(usize),
    Last,
    Name(String),
}

impl FromStr for Column {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(DataError::Schema("empty column reference".into()));
        }
        if s == "last" {
            return Ok(Column::Last);
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        })
    }
}

impl TryFrom<String> for Column {
    type Error = DataError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Column> for String {
    fn from(c: Column) -> String {
        c.to_string()
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Index(i) => write!(f, "{i}"),
            Column::Last => f.write_str("last"),
            Column::Name(n) => f.write_str(n),
        }
    }
}

impl Column {
    fn resolve(&self, header: Option<&[String]>, width: usize) -> Option<usize> {
        match self {
            Column::Index(i) if *i < width => Some(*i),
            Column::Index(_) => None,
            Column::Last => width.checked_sub(1),
            Column::Name(n) => header?.iter().position(|h| h == n),
        }
    }
}

/// Column layout of a CSV file. Every column not named here is a feature.
///
/// String form: `full`, `full:label=<col>`, `bandit`, or
/// `bandit:action=<col>,reward=<col>,propensity=<col|none>,k=<arms>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Schema {
    FullInformation {
        label: Column,
    },
    Bandit {
        action: Column,
        reward: Column,
        /// `None` means the file has no propensity column. A named column that
        /// is absent from the header is also treated as missing.
        propensity: Option<Column>,
        /// Arm count override; otherwise the largest action index plus one.
        num_arms: Option<usize>,
    },
}

impl Schema {
    pub fn full() -> Self {
        Schema::FullInformation { label: Column::Last }
    }

    pub fn bandit() -> Self {
        Schema::Bandit {
            action: Column::Name("action".into()),
            reward: Column::Name("reward".into()),
            propensity: Some(Column::Name("propensity".into())),
            num_arms: None,
        }
    }

    pub fn with_num_arms(self, k: Option<usize>) -> Self {
        match self {
            Schema::Bandit { action, reward, propensity, .. } => {
                Schema::Bandit { action, reward, propensity, num_arms: k }
            }
            other => other,
        }
    }
}

impl FromStr for Schema {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k.trim(), r),
            None => (s.trim(), ""),
        };
        let mut schema = match kind {
            "full" => Schema::full(),
            "bandit" => Schema::bandit(),
            other => return Err(DataError::Schema(format!("unknown layout {other:?}"))),
        };
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| DataError::Schema(format!("expected key=value, got {part:?}")))?;
            match (&mut schema, key.trim()) {
                (Schema::FullInformation { label }, "label") => *label = value.parse()?,
                (Schema::Bandit { action, .. }, "action") => *action = value.parse()?,
                (Schema::Bandit { reward, .. }, "reward") => *reward = value.parse()?,
                (Schema::Bandit { propensity, .. }, "propensity") => {
                    *propensity = match value.trim() {
                        "none" => None,
                        v => Some(v.parse()?),
                    }
                }
                (Schema::Bandit { num_arms, .. }, "k") => {
                    let k = value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| DataError::Schema(format!("invalid arm count {value:?}")))?;
                    *num_arms = Some(k);
                }
                (_, key) => return Err(DataError::Schema(format!("unknown key {key:?} for {kind} layout"))),
            }
        }
        Ok(schema)
    }
}

impl TryFrom<String> for Schema {
    type Error = DataError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Schema> for String {
    fn from(s: Schema) -> String {
        s.to_string()
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schema::FullInformation { label } => write!(f, "full:label={label}"),
            Schema::Bandit { action, reward, propensity, num_arms } => {
                write!(f, "bandit:action={action},reward={reward},propensity=")?;
                match propensity {
                    Some(p) => write!(f, "{p}")?,
                    None => f.write_str("none")?,
                }
                if let Some(k) = num_arms {
                    write!(f, ",k={k}")?;
                }
                Ok(())
            }
        }
    }
}

fn is_numeric(field: &str) -> bool {
    field.trim().parse::<f64>().is_ok()
}

/// Orders labels numerically when they all parse as numbers, otherwise
/// lexicographically.
fn sort_labels(labels: &mut [String]) {
    if labels.iter().all(|l| is_numeric(l)) {
        labels.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.total_cmp(&y)
        });
    } else {
        labels.sort();
    }
}

/// Reads a CSV file into a validated dataset.
///
/// A first row is treated as a header when some column holds text there and
/// a number in the row below it.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    read_dataset(file, schema).map_err(|e| match e {
        DataError::Csv { source, .. } => DataError::Csv { path: path.to_path_buf(), source },
        other => other,
    })
}

pub fn read_dataset<R: io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|source| DataError::Csv { path: PathBuf::new(), source })?;
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, row.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(DataError::NoRecords);
    }

    let has_header = match rows.get(1) {
        Some((_, second)) => rows[0]
            .1
            .iter()
            .zip(second)
            .any(|(a, b)| !is_numeric(a) && is_numeric(b)),
        None => rows[0].1.iter().any(|f| !is_numeric(f)),
    };
    let header = if has_header { Some(rows.remove(0).1) } else { None };
    if rows.is_empty() {
        return Err(DataError::NoRecords);
    }
    let width = header.as_ref().map(|h| h.len()).unwrap_or(rows[0].1.len());
    let header = header.as_deref();
    let resolve = |c: &Column| c.resolve(header, width).ok_or_else(|| DataError::UnknownColumn(c.to_string()));

    for (line, row) in &rows {
        if row.len() != width {
            return Err(DataError::Malformed {
                line: *line,
                message: format!("expected {width} fields, found {}", row.len()),
            });
        }
    }

    let parse_feature = |line: u64, column: usize, field: &str| -> Result<f64> {
        let v = field
            .parse::<f64>()
            .map_err(|_| DataError::NonNumeric { line, column, value: field.to_string() })?;
        if !v.is_finite() {
            return Err(DataError::NonFinite { line, column });
        }
        Ok(v)
    };

    match schema {
        Schema::FullInformation { label } => {
            let label_col = resolve(label)?;
            let feature_cols: Vec<usize> = (0..width).filter(|&c| c != label_col).collect();
            let mut labels: Vec<String> = rows.iter().map(|(_, r)| r[label_col].clone()).collect();
            sort_labels(&mut labels);
            labels.dedup();
            let mut records = Vec::with_capacity(rows.len());
            for (line, row) in &rows {
                let values = feature_cols
                    .iter()
                    .map(|&c| parse_feature(*line, c, &row[c]))
                    .collect::<Result<Vec<_>>>()?;
                let label = labels.iter().position(|l| *l == row[label_col]).expect("label collected above");
                records.push(SupervisedRecord { context: ContextVector(values), label });
            }
            Dataset::with_labels(feature_cols.len(), Records::Full(records), labels)
        }
        Schema::Bandit { action, reward, propensity, num_arms } => {
            let action_col = resolve(action)?;
            let reward_col = resolve(reward)?;
            let propensity_col = match propensity {
                None => None,
                Some(c @ Column::Name(_)) => c.resolve(header, width),
                Some(c) => Some(resolve(c)?),
            };
            let special = [Some(action_col), Some(reward_col), propensity_col];
            let feature_cols: Vec<usize> = (0..width).filter(|c| !special.contains(&Some(*c))).collect();

            let mut parsed = Vec::with_capacity(rows.len());
            for (line, row) in &rows {
                let line = *line;
                let values = feature_cols
                    .iter()
                    .map(|&c| parse_feature(line, c, &row[c]))
                    .collect::<Result<Vec<_>>>()?;
                let action = row[action_col].parse::<usize>().map_err(|_| DataError::Malformed {
                    line,
                    message: format!("action {:?} is not a non-negative integer", row[action_col]),
                })?;
                let reward = match row[reward_col].as_str() {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(DataError::Malformed { line, message: format!("reward {other:?} is not 0 or 1") })
                    }
                };
                let prop = match propensity_col {
                    Some(c) => Some(row[c].parse::<f64>().map_err(|_| DataError::Malformed {
                        line,
                        message: format!("propensity {:?} is not a number", row[c]),
                    })?),
                    None => None,
                };
                parsed.push((line, values, action, reward, prop));
            }
            let observed = parsed.iter().map(|p| p.2).max().unwrap_or(0) + 1;
            let k = num_arms.unwrap_or(observed);
            if k < observed {
                return Err(DataError::ArmOutOfRange { arm: observed - 1, num_arms: k });
            }
            let mut records = Vec::with_capacity(parsed.len());
            for (line, values, action, reward, prop) in parsed {
                let propensity = prop.unwrap_or(1.0 / k as f64);
                if !(propensity > 0.0 && propensity <= 1.0) {
                    return Err(DataError::Malformed {
                        line,
                        message: format!("propensity {propensity} outside (0, 1]"),
                    });
                }
                records.push(BanditRecord { context: ContextVector(values), action, reward, propensity });
            }
            Dataset::with_labels(feature_cols.len(), Records::Bandit(records), default_labels(k))
        }
    }
}

/// Schema matching the layout [`write_dataset`] produces for `data`.
pub fn schema_for(data: &Dataset) -> Schema {
    match data.kind() {
        DatasetKind::FullInformation => Schema::FullInformation { label: Column::Name("label".into()) },
        DatasetKind::Bandit => Schema::bandit().with_num_arms(Some(data.num_arms())),
    }
}

/// Writes `data` as CSV with a header row: `f0..f{d-1},label` or
/// `f0..f{d-1},action,reward,propensity`. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let io_err = |source| DataError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_csv(data, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_csv<W: Write>(data: &Dataset, w: &mut W) -> io::Result<()> {
    let features = (0..data.dimension()).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
    let sep = if data.dimension() > 0 { "," } else { "" };
    let write_ctx = |w: &mut W, c: &ContextVector| -> io::Result<()> {
        for (j, v) in c.iter().enumerate() {
            if j > 0 {
                w.write_all(b",")?;
            }
            write!(w, "{v}")?;
        }
        w.write_all(sep.as_bytes())
    };
    match data.records() {
        Records::Full(rs) => {
            writeln!(w, "{features}{sep}label")?;
            for r in rs {
                write_ctx(w, &r.context)?;
                writeln!(w, "{}", data.arm_labels()[r.label])?;
            }
        }
        Records::Bandit(rs) => {
            writeln!(w, "{features}{sep}action,reward,propensity")?;
            for r in rs {
                write_ctx(w, &r.context)?;
                writeln!(w, "{},{},{}", r.action, r.reward, r.propensity)?;
            }
        }
    }
    Ok(())
}

/// `⌈n · fraction⌉`, guarded against the product landing a hair above an
/// integer through rounding.
pub fn train_size(n: usize, fraction: f64) -> usize {
    let exact = n as f64 * fraction;
    let nearest = exact.round();
    if (exact - nearest).abs() <= 1e-9 * exact.max(1.0) {
        nearest as usize
    } else {
        exact.ceil() as usize
    }
}

/// Seeded random partition into `⌈n · fraction⌉` training records and the rest.
pub fn split_train_test(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }
    if data.is_empty() {
        return Err(DataError::NoRecords);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let cut = train_size(data.len(), train_fraction).min(data.len());
    Ok((data.subset(&order[..cut]), data.subset(&order[cut..])))
}

/// Per-feature z-score parameters fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation per feature; constant features
    /// keep scale 1.
    pub fn fit(data: &Dataset) -> Standardizer {
        let d = data.dimension();
        let n = data.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for c in data.contexts() {
            for (m, v) in mean.iter_mut().zip(c.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for c in data.contexts() {
            for ((s, v), m) in var.iter_mut().zip(c.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dimension() != self.mean.len() {
            return Err(DataError::DimensionMismatch { expected: self.mean.len(), found: data.dimension() });
        }
        data.map_contexts(data.dimension(), |c| self.transform(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(v: &[f64]) -> ContextVector {
        ContextVector::new(v.to_vec()).unwrap()
    }

    fn toy(n: usize) -> Dataset {
        let records = (0..n)
            .map(|i| SupervisedRecord { context: ctx(&[i as f64, 0.5]), label: i % 3 })
            .collect();
        Dataset::full(2, 3, records).unwrap()
    }

    #[test]
    fn hand_written_csv() {
        let text = "0.5,1.0,0\n-2,3e-1,1\n4,4,0\n";
        let data = read_dataset(text.as_bytes(), &Schema::full()).unwrap();
        assert_eq!(data.dimension(), 2);
        assert_eq!(data.num_arms(), 2);
        assert_eq!(data.len(), 3);
        assert_eq!(data.supervised().unwrap()[1].context.as_slice(), &[-2.0, 0.3]);
    }

    #[test]
    fn labels_remapped_to_contiguous_indices() {
        let text = "1,7\n2,3\n3,7\n4,10\n";
        let data = read_dataset(text.as_bytes(), &Schema::full()).unwrap();
        assert_eq!(data.arm_labels(), &["3", "7", "10"]);
        let labels: Vec<usize> = data.supervised().unwrap().iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![1, 0, 1, 2]);
    }

    #[test]
    fn empty_file_is_an_error() {
        let err = read_dataset("".as_bytes(), &Schema::full()).unwrap_err();
        assert_eq!(err.to_string(), "no records");
        let err = read_dataset("f0,label\n".as_bytes(), &Schema::full()).unwrap_err();
        assert!(matches!(err, DataError::NoRecords));
    }

    #[test]
    fn malformed_row_names_line() {
        let err = read_dataset("1,2,0\n1,0\n".as_bytes(), &Schema::full()).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn non_numeric_feature_rejected() {
        let err = read_dataset("1,2,0\n1,x,1\n".as_bytes(), &Schema::full()).unwrap_err();
        assert!(matches!(err, DataError::NonNumeric { line: 2, column: 1, .. }), "{err}");
    }

    #[test]
    fn non_finite_feature_rejected() {
        let err = read_dataset("1,2,0\n1,inf,1\n".as_bytes(), &Schema::full()).unwrap_err();
        assert!(matches!(err, DataError::NonFinite { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_label_column() {
        let schema: Schema = "full:label=class".parse().unwrap();
        let err = read_dataset("a,b,label\n1,2,0\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, DataError::UnknownColumn(ref c) if c == "class"));
        let schema: Schema = "full:label=9".parse().unwrap();
        assert!(read_dataset("1,2,0\n".as_bytes(), &schema).is_err());
    }

    #[test]
    fn label_column_by_name_and_position() {
        let text = "cls,a,b\nx,1,2\ny,3,4\n";
        let data = read_dataset(text.as_bytes(), &"full:label=cls".parse().unwrap()).unwrap();
        assert_eq!(data.dimension(), 2);
        assert_eq!(data.arm_labels(), &["x", "y"]);
        let data = read_dataset("x,1,2\ny,3,4\n".as_bytes(), &"full:label=0".parse().unwrap()).unwrap();
        assert_eq!(data.context(1).as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn bandit_csv_with_and_without_propensity() {
        let text = "f0,action,reward,propensity\n0.1,0,1,0.25\n0.2,2,0,0.5\n";
        let data = read_dataset(text.as_bytes(), &Schema::bandit()).unwrap();
        assert_eq!(data.num_arms(), 3);
        let rs = data.logged().unwrap();
        assert_eq!(rs[1].action, 2);
        assert_eq!(rs[0].propensity, 0.25);

        let text = "f0,action,reward\n0.1,0,1\n0.2,3,0\n";
        let data = read_dataset(text.as_bytes(), &Schema::bandit()).unwrap();
        assert_eq!(data.num_arms(), 4);
        assert!(data.logged().unwrap().iter().all(|r| r.propensity == 0.25));

        let data = read_dataset(text.as_bytes(), &Schema::bandit().with_num_arms(Some(5))).unwrap();
        assert_eq!(data.logged().unwrap()[0].propensity, 0.2);
    }

    #[test]
    fn bandit_rejects_bad_reward_and_propensity() {
        let bad_reward = "f0,action,reward\n0.1,0,2\n0.1,0,1\n";
        assert!(read_dataset(bad_reward.as_bytes(), &Schema::bandit()).is_err());
        let bad_prop = "f0,action,reward,propensity\n0.1,0,1,0\n0.1,0,1,1\n";
        let err = read_dataset(bad_prop.as_bytes(), &Schema::bandit()).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn schema_strings() {
        for s in ["full:label=last", "full:label=class", "bandit:action=3,reward=4,propensity=none,k=7"] {
            let parsed: Schema = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
        assert!("tree".parse::<Schema>().is_err());
        assert!("full:action=1".parse::<Schema>().is_err());
    }

    #[test]
    fn write_then_load_is_exact() {
        let records = vec![
            SupervisedRecord { context: ctx(&[0.1, -1e-300]), label: 1 },
            SupervisedRecord { context: ctx(&[1.0 / 3.0, 12345.678]), label: 0 },
        ];
        let data = Dataset::with_labels(2, Records::Full(records), vec!["a".into(), "b".into()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&data, &path).unwrap();
        let back = load_dataset(&path, &schema_for(&data)).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_dataset(Path::new("/no/such/file.csv"), &Schema::full()).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = split_train_test(&toy(10), 0.7, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        assert_eq!(train_size(5620, 0.7), 3934);
        assert_eq!(5620 - train_size(5620, 0.7), 1686);
        assert_eq!(train_size(10, 0.25), 3);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        for f in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(split_train_test(&toy(4), f, 0), Err(DataError::InvalidFraction(_))));
        }
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_train_test(&toy(50), 0.7, 9).unwrap();
        let b = split_train_test(&toy(50), 0.7, 9).unwrap();
        assert_eq!(a, b);
        let c = split_train_test(&toy(50), 0.7, 10).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let records = vec![
            SupervisedRecord { context: ctx(&[1.0, 5.0]), label: 0 },
            SupervisedRecord { context: ctx(&[3.0, 5.0]), label: 0 },
        ];
        let data = Dataset::full(2, 1, records).unwrap();
        let st = Standardizer::fit(&data);
        assert_eq!(st.mean, vec![2.0, 5.0]);
        assert_eq!(st.scale, vec![1.0, 1.0]);
        let out = st.apply(&data).unwrap();
        assert_eq!(out.context(0).as_slice(), &[-1.0, 0.0]);
    }

    #[test]
    fn validation_catches_bad_records() {
        let r = SupervisedRecord { context: ctx(&[1.0]), label: 3 };
        assert!(matches!(Dataset::full(1, 2, vec![r]), Err(DataError::ArmOutOfRange { .. })));
        let r = SupervisedRecord { context: ctx(&[1.0, 2.0]), label: 0 };
        assert!(matches!(Dataset::full(1, 2, vec![r]), Err(DataError::DimensionMismatch { .. })));
        assert!(ContextVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = toy(5);
        assert_eq!(a.fingerprint(), toy(5).fingerprint());
        assert_ne!(a.fingerprint(), toy(6).fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
