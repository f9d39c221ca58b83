//! (G)ZSL datasets: CSV files on disk, a synthetic generator, split checks.
//!
//! On-disk layout:
//!
//! ```text
//! features.csv    id,label,f0,...,f{D-1}     one instance per row
//! attributes.csv  label,a0,...,a{A-1}        one class per row
//! splits.json     {"seen":[..],"unseen":[..],"train":[ids],"test_seen":[ids],"test_unseen":[ids]}
//! ```
//!
//! Class labels may be any strings; they are remapped to dense `0..C-1` in
//! attributes.csv row order and the original names kept in `class_names`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const FEATURES_FILE: &str = "features.csv";
pub const ATTRIBUTES_FILE: &str = "attributes.csv";
pub const SPLITS_FILE: &str = "splits.json";

/// Features, labels, class attributes and seen/unseen splits.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    /// `[N x D]`
    pub features: Tensor,
    pub instance_ids: Vec<String>,
    /// Dense class label of every instance.
    pub labels: Vec<usize>,
    /// `[C x A]`, row `c` describes class `c`.
    pub class_attributes: Tensor,
    /// Original name of each dense label.
    pub class_names: Vec<String>,
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    /// Row indices into `features`.
    pub train_idx: Vec<usize>,
    pub test_seen_idx: Vec<usize>,
    pub test_unseen_idx: Vec<usize>,
}

impl SplitDataset {
    pub fn num_classes(&self) -> usize {
        self.class_attributes.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn attr_dim(&self) -> usize {
        self.class_attributes.cols()
    }

    /// Feature rows and labels for the given instance indices.
    pub fn subset(&self, idx: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        Ok((
            self.features.select_rows(idx)?,
            idx.iter().map(|&i| self.labels[i]).collect(),
        ))
    }

    /// Attribute rows of `classes`, in that order.
    pub fn attributes_of(&self, classes: &[usize]) -> Result<Tensor> {
        self.class_attributes.select_rows(classes)
    }

    pub fn all_classes(&self) -> Vec<usize> {
        (0..self.num_classes()).collect()
    }

    /// Rescales every attribute row to unit L2 norm (zero rows are left as is).
    pub fn normalize_attributes(&mut self) {
        let a = self.class_attributes.cols();
        for row in self.class_attributes.data_mut().chunks_mut(a) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_splits(self)
    }

    /// Writes the three dataset files into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let path = dir.join(ATTRIBUTES_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
        let mut header = vec!["label".to_string()];
        header.extend((0..self.attr_dim()).map(|k| format!("a{k}")));
        w.write_record(&header).map_err(|e| csv_io(&path, e))?;
        for c in 0..self.num_classes() {
            let mut rec = vec![self.class_names[c].clone()];
            rec.extend(self.class_attributes.row(c).iter().map(|x| format!("{x:?}")));
            w.write_record(&rec).map_err(|e| csv_io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join(FEATURES_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..self.feature_dim()).map(|k| format!("f{k}")));
        w.write_record(&header).map_err(|e| csv_io(&path, e))?;
        for i in 0..self.features.rows() {
            let mut rec = vec![self.instance_ids[i].clone(), self.class_names[self.labels[i]].clone()];
            rec.extend(self.features.row(i).iter().map(|x| format!("{x:?}")));
            w.write_record(&rec).map_err(|e| csv_io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let ids = |idx: &[usize]| -> Vec<serde_json::Value> {
            idx.iter().map(|&i| json_token(&self.instance_ids[i])).collect()
        };
        let names = |cls: &[usize]| -> Vec<serde_json::Value> {
            cls.iter().map(|&c| json_token(&self.class_names[c])).collect()
        };
        let splits = SplitsFile {
            seen: names(&self.seen),
            unseen: names(&self.unseen),
            train: ids(&self.train_idx),
            test_seen: ids(&self.test_seen_idx),
            test_unseen: ids(&self.test_unseen_idx),
        };
        let path = dir.join(SPLITS_FILE);
        fs::write(&path, serde_json::to_string_pretty(&splits)?).map_err(|e| Error::io(&path, e))
    }

    /// `label_map.json`: dense label to original class name.
    pub fn write_label_map(&self, path: &Path) -> Result<()> {
        let map: Vec<LabelMapEntry> = self
            .class_names
            .iter()
            .enumerate()
            .map(|(label, name)| LabelMapEntry {
                label,
                name: name.clone(),
            })
            .collect();
        fs::write(path, serde_json::to_string_pretty(&map)?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct LabelMapEntry {
    label: usize,
    name: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitsFile {
    seen: Vec<serde_json::Value>,
    unseen: Vec<serde_json::Value>,
    train: Vec<serde_json::Value>,
    test_seen: Vec<serde_json::Value>,
    test_unseen: Vec<serde_json::Value>,
}

/// Integers are written as JSON numbers, anything else as strings.
fn json_token(s: &str) -> serde_json::Value {
    match s.parse::<u64>() {
        Ok(n) if n.to_string() == s => serde_json::Value::from(n),
        _ => serde_json::Value::from(s),
    }
}

fn token_string(path: &Path, v: &serde_json::Value) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("expected an id or label, found {other}"),
        }),
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{other:?}"),
        },
    }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn check_header(path: &Path, header: &csv::StringRecord, fixed: &[&str], prefix: &str) -> Result<usize> {
    for (k, name) in fixed.iter().enumerate() {
        if header.get(k) != Some(name) {
            return Err(parse_err(path, 1, format!("column {k} must be '{name}'")));
        }
    }
    let width = header.len() - fixed.len();
    if width == 0 {
        return Err(parse_err(path, 1, "no numeric columns"));
    }
    for k in 0..width {
        let expected = format!("{prefix}{k}");
        if header.get(fixed.len() + k) != Some(expected.as_str()) {
            return Err(parse_err(path, 1, format!("expected column '{expected}'")));
        }
    }
    Ok(width)
}

fn parse_numbers<'a>(path: &Path, line: u64, fields: impl Iterator<Item = &'a str>, out: &mut Vec<f64>) -> Result<()> {
    for field in fields {
        let x: f64 = field
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("'{field}' is not a number")))?;
        if !x.is_finite() {
            return Err(parse_err(path, line, format!("non-finite value '{field}'")));
        }
        out.push(x);
    }
    Ok(())
}

/// Loads and validates a dataset from the three files.
pub fn load_csv_dataset(features_path: &Path, attributes_path: &Path, splits_path: &Path) -> Result<SplitDataset> {
    // attributes.csv
    let mut reader = open_csv(attributes_path)?;
    let header = reader.headers().map_err(|e| csv_io(attributes_path, e))?.clone();
    let attr_dim = check_header(attributes_path, &header, &["label"], "a")?;
    let mut class_names = Vec::new();
    let mut class_index = HashMap::new();
    let mut attrs = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_io(attributes_path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != attr_dim + 1 {
            return Err(parse_err(attributes_path, line, format!("expected {} fields, got {}", attr_dim + 1, rec.len())));
        }
        let name = rec[0].trim().to_string();
        if class_index.insert(name.clone(), class_names.len()).is_some() {
            return Err(parse_err(attributes_path, line, format!("duplicate attribute row for class '{name}'")));
        }
        class_names.push(name);
        parse_numbers(attributes_path, line, rec.iter().skip(1), &mut attrs)?;
    }
    if class_names.is_empty() {
        return Err(parse_err(attributes_path, 1, "no classes"));
    }
    let class_attributes = Tensor::matrix(class_names.len(), attr_dim, attrs)?;

    // features.csv
    let mut reader = open_csv(features_path)?;
    let header = reader.headers().map_err(|e| csv_io(features_path, e))?.clone();
    let feat_dim = check_header(features_path, &header, &["id", "label"], "f")?;
    let mut instance_ids = Vec::new();
    let mut id_index = HashMap::new();
    let mut labels = Vec::new();
    let mut feats = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_io(features_path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != feat_dim + 2 {
            return Err(parse_err(features_path, line, format!("expected {} fields, got {}", feat_dim + 2, rec.len())));
        }
        let id = rec[0].trim().to_string();
        if id_index.insert(id.clone(), instance_ids.len()).is_some() {
            return Err(parse_err(features_path, line, format!("duplicate instance id '{id}'")));
        }
        let name = rec[1].trim();
        let label = *class_index.get(name).ok_or_else(|| {
            parse_err(features_path, line, format!("attribute row missing for class '{name}'"))
        })?;
        instance_ids.push(id);
        labels.push(label);
        parse_numbers(features_path, line, rec.iter().skip(2), &mut feats)?;
    }
    if instance_ids.is_empty() {
        return Err(parse_err(features_path, 1, "no instances"));
    }
    let features = Tensor::matrix(instance_ids.len(), feat_dim, feats)?;

    // splits.json
    let text = fs::read_to_string(splits_path).map_err(|e| Error::io(splits_path, e))?;
    let splits: SplitsFile = serde_json::from_str(&text)
        .map_err(|e| parse_err(splits_path, e.line() as u64, e.to_string()))?;
    let classes = |vals: &[serde_json::Value]| -> Result<Vec<usize>> {
        vals.iter()
            .map(|v| {
                let name = token_string(splits_path, v)?;
                class_index
                    .get(&name)
                    .copied()
                    .ok_or_else(|| parse_err(splits_path, 0, format!("unknown class '{name}'")))
            })
            .collect()
    };
    let indices = |vals: &[serde_json::Value]| -> Result<Vec<usize>> {
        vals.iter()
            .map(|v| {
                let id = token_string(splits_path, v)?;
                id_index
                    .get(&id)
                    .copied()
                    .ok_or_else(|| parse_err(splits_path, 0, format!("split references unknown instance '{id}'")))
            })
            .collect()
    };
    let ds = SplitDataset {
        features,
        instance_ids,
        labels,
        class_attributes,
        class_names,
        seen: classes(&splits.seen)?,
        unseen: classes(&splits.unseen)?,
        train_idx: indices(&splits.train)?,
        test_seen_idx: indices(&splits.test_seen)?,
        test_unseen_idx: indices(&splits.test_unseen)?,
    };
    let violations = ds.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(parse_err(splits_path, 0, list.join("; ")));
    }
    Ok(ds)
}

/// Loads `features.csv`, `attributes.csv` and `splits.json` from one directory.
pub fn load_csv_dir(dir: &Path) -> Result<SplitDataset> {
    load_csv_dataset(&dir.join(FEATURES_FILE), &dir.join(ATTRIBUTES_FILE), &dir.join(SPLITS_FILE))
}

/// Parameters of the synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SynthConfig {
    pub num_seen: usize,
    pub num_unseen: usize,
    pub attr_dim: usize,
    pub feat_dim: usize,
    pub per_class: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_seen: 10,
            num_unseen: 5,
            attr_dim: 16,
            feat_dim: 32,
            per_class: 50,
            noise: 0.01,
            seed: 7,
        }
    }
}

/// Synthetic GZSL data: `x = W a_class + N(0, noise^2)`.
///
/// Attributes are uniform in `[0,1]^A`; the hidden map `W` is drawn once,
/// entrywise uniform in `[0, 1/sqrt(A))`, so features are non-negative like
/// post-ReLU backbone features. Classes `0..num_seen` are seen. Seen
/// instances split 80/20 per class into train/test, every unseen instance goes
/// to the unseen test split.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SplitDataset> {
    let SynthConfig {
        num_seen,
        num_unseen,
        attr_dim,
        feat_dim,
        per_class,
        noise,
        seed,
    } = *cfg;
    if [num_seen, num_unseen, attr_dim, feat_dim, per_class].contains(&0) {
        return Err(Error::contract("synthetic dataset sizes must be >= 1"));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::contract(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = num_seen + num_unseen;
    let attrs: Vec<f64> = (0..classes * attr_dim).map(|_| rng.random::<f64>()).collect();
    let class_attributes = Tensor::matrix(classes, attr_dim, attrs)?;
    let scale = 1.0 / (attr_dim as f64).sqrt();
    let w: Vec<f64> = (0..feat_dim * attr_dim).map(|_| scale * rng.random::<f64>()).collect();
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::contract(e.to_string()))?;

    let mut feats = Vec::with_capacity(classes * per_class * feat_dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let a = class_attributes.row(c);
        let centre: Vec<f64> = (0..feat_dim)
            .map(|d| w[d * attr_dim..(d + 1) * attr_dim].iter().zip(a).map(|(w, a)| w * a).sum())
            .collect();
        for _ in 0..per_class {
            for &m in &centre {
                let eps = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                feats.push(m + eps);
            }
            labels.push(c);
        }
    }
    let n = labels.len();
    let features = Tensor::matrix(n, feat_dim, feats)?;

    let n_train = ((per_class as f64) * 0.8).round().max(1.0) as usize;
    let (mut train_idx, mut test_seen_idx) = (Vec::new(), Vec::new());
    for c in 0..num_seen {
        let mut idx: Vec<usize> = (c * per_class..(c + 1) * per_class).collect();
        idx.shuffle(&mut rng);
        let (tr, te) = idx.split_at(n_train.min(per_class));
        train_idx.extend_from_slice(tr);
        test_seen_idx.extend_from_slice(te);
    }
    train_idx.sort_unstable();
    test_seen_idx.sort_unstable();

    Ok(SplitDataset {
        features,
        instance_ids: (0..n).map(|i| i.to_string()).collect(),
        labels,
        class_attributes,
        class_names: (0..classes).map(|c| c.to_string()).collect(),
        seen: (0..num_seen).collect(),
        unseen: (num_seen..classes).collect(),
        train_idx,
        test_seen_idx,
        test_unseen_idx: (num_seen * per_class..n).collect(),
    })
}

/// One broken dataset invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub code: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

/// Checks every dataset invariant; an empty result means the dataset is valid.
pub fn validate_splits(ds: &SplitDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |code: &'static str, detail: String| out.push(Violation { code, detail });
    let n = ds.features.rows();
    let c = ds.class_attributes.rows();

    if ds.labels.len() != n || ds.instance_ids.len() != n {
        flag("label-count", format!("{n} instances, {} labels, {} ids", ds.labels.len(), ds.instance_ids.len()));
    }
    if ds.class_names.len() != c {
        flag("class-names", format!("{c} attribute rows, {} class names", ds.class_names.len()));
    }
    if let Some(&l) = ds.labels.iter().find(|&&l| l >= c) {
        flag("missing-attributes", format!("label {l} has no attribute row"));
    }
    for &cls in ds.seen.iter().chain(&ds.unseen) {
        if cls >= c {
            flag("unknown-class", format!("class {cls} has no attribute row"));
        }
    }
    let seen: BTreeSet<usize> = ds.seen.iter().copied().collect();
    let unseen: BTreeSet<usize> = ds.unseen.iter().copied().collect();
    if seen.len() != ds.seen.len() || unseen.len() != ds.unseen.len() {
        flag("duplicate-class", "a class is listed twice".into());
    }
    if let Some(cls) = seen.intersection(&unseen).next() {
        flag("seen-unseen-overlap", format!("class {cls} is both seen and unseen"));
    }

    let splits: [(&str, &[usize]); 3] = [
        ("train", &ds.train_idx),
        ("test_seen", &ds.test_seen_idx),
        ("test_unseen", &ds.test_unseen_idx),
    ];
    let mut owner: BTreeMap<usize, &str> = BTreeMap::new();
    for (name, idx) in splits {
        for &i in idx {
            if i >= n {
                flag("index-out-of-range", format!("{name} index {i} >= {n}"));
                continue;
            }
            if let Some(prev) = owner.insert(i, name) {
                if prev == name {
                    flag("duplicate-index", format!("instance {} twice in {name}", ds.instance_ids[i]));
                } else {
                    flag("split-overlap", format!("instance {} in both {prev} and {name}", ds.instance_ids[i]));
                }
            }
        }
    }
    let label_of = |i: usize| ds.labels.get(i).copied();
    if let Some(&i) = ds.train_idx.iter().find(|&&i| label_of(i).is_some_and(|l| !seen.contains(&l))) {
        flag("train-leak", format!("train instance {} is not from a seen class", ds.instance_ids[i]));
    }
    if let Some(&i) = ds.test_seen_idx.iter().find(|&&i| label_of(i).is_some_and(|l| !seen.contains(&l))) {
        flag("test-seen-leak", format!("test_seen instance {} is not from a seen class", ds.instance_ids[i]));
    }
    if let Some(&i) = ds.test_unseen_idx.iter().find(|&&i| label_of(i).is_some_and(|l| !unseen.contains(&l))) {
        flag("test-unseen-leak", format!("test_unseen instance {} is not from an unseen class", ds.instance_ids[i]));
    }
    if ds.train_idx.is_empty() {
        flag("no-train", "train split is empty".into());
    }
    if ds.test_unseen_idx.is_empty() {
        flag("no-unseen-test", "test_unseen split is empty".into());
    }
    out
}

/// Where a dataset comes from: a directory of CSV files, three explicit
/// paths, or a synthetic recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum DataSource {
    Dir(PathBuf),
    Files {
        features: PathBuf,
        attributes: PathBuf,
        splits: PathBuf,
    },
    Synthetic(SynthConfig),
}

impl DataSource {
    /// Interprets a `--data` path: a directory of CSV files or a JSON manifest
    /// holding a serialized `DataSource` (relative paths resolve against the
    /// manifest's directory).
    pub fn from_path(path: &Path) -> Result<DataSource> {
        if path.is_dir() {
            return Ok(DataSource::Dir(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let src: DataSource =
            serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        Ok(match src {
            DataSource::Dir(d) => DataSource::Dir(fix(d)),
            DataSource::Files {
                features,
                attributes,
                splits,
            } => DataSource::Files {
                features: fix(features),
                attributes: fix(attributes),
                splits: fix(splits),
            },
            s @ DataSource::Synthetic(_) => s,
        })
    }

    pub fn load(&self) -> Result<SplitDataset> {
        match self {
            DataSource::Dir(d) => load_csv_dir(d),
            DataSource::Files {
                features,
                attributes,
                splits,
            } => load_csv_dataset(features, attributes, splits),
            DataSource::Synthetic(cfg) => generate_synthetic(cfg),
        }
    }
}
