//! Prediction sources for ML actions and network instances.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::scenario::OracleOutput;
use super::value::SimValue;
use crate::build::bridge::{Bridge, Verb};
use crate::model::{ConfigTree, Value};

pub trait Predictor: Send {
    fn preprocess(&mut self) -> Result<(), String> {
        Ok(())
    }
    fn train(&mut self) -> Result<(), String> {
        Ok(())
    }
    fn predict(&mut self, input: &SimValue) -> Result<Vec<f64>, String>;
}

/// Fixed outputs keyed by sample id.
pub struct OracleStub {
    unit: String,
    n_outputs: usize,
    table: BTreeMap<String, OracleOutput>,
}

impl OracleStub {
    pub fn new(unit: &str, n_outputs: usize, table: BTreeMap<String, OracleOutput>) -> Self {
        OracleStub { unit: unit.to_string(), n_outputs, table }
    }
}

impl Predictor for OracleStub {
    fn predict(&mut self, input: &SimValue) -> Result<Vec<f64>, String> {
        let SimValue::Str(id) = input else {
            return Err(format!("oracle for `{}` needs a sample id, got {input}", self.unit));
        };
        match self.table.get(id) {
            Some(OracleOutput::Vector(v)) => Ok(v.clone()),
            Some(OracleOutput::Class(k)) if *k < self.n_outputs => {
                let mut v = vec![0.0; self.n_outputs];
                v[*k] = 1.0;
                Ok(v)
            }
            Some(OracleOutput::Class(k)) => Err(format!("class {k} out of range for `{}`", self.unit)),
            None => Err(format!("oracle for `{}` has no entry for `{id}`", self.unit)),
        }
    }
}

/// Reads `id` plus the named feature columns.
pub fn read_samples(path: &Path, features: &[String]) -> Result<BTreeMap<String, Vec<f64>>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let id = col("id").ok_or_else(|| format!("{}: no `id` column", path.display()))?;
    let cols: Vec<usize> = features
        .iter()
        .map(|f| col(f).ok_or_else(|| format!("{}: no column `{f}`", path.display())))
        .collect::<Result<_, _>>()?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let xs = cols
            .iter()
            .map(|&c| rec.get(c).unwrap_or("").trim().parse::<f64>().map_err(|_| format!("sample `{}`: non-numeric feature", &rec[id])))
            .collect::<Result<_, _>>()?;
        out.insert(rec[id].to_string(), xs);
    }
    Ok(out)
}

/// Weights served through a bridge. `da_train` loads the stored archive
/// rather than training.
pub struct TrainedModel {
    unit: String,
    bridge: Box<dyn Bridge>,
    archive: PathBuf,
    spec: PathBuf,
    samples: BTreeMap<String, Vec<f64>>,
    loaded: bool,
}

impl TrainedModel {
    pub fn new(unit: &str, bridge: Box<dyn Bridge>, archive: PathBuf, spec: PathBuf, samples: BTreeMap<String, Vec<f64>>) -> Self {
        TrainedModel { unit: unit.to_string(), bridge, archive, spec, samples, loaded: false }
    }

    fn call(&mut self, verb: Verb, payload: ConfigTree) -> Result<ConfigTree, String> {
        self.bridge.call(verb, &payload.with("unit", self.unit.as_str())).map_err(|e| {
            let tail = self.bridge.stderr_excerpt();
            if tail.is_empty() {
                e.to_string()
            } else {
                format!("{e}\n{tail}")
            }
        })
    }

    fn load(&mut self) -> Result<(), String> {
        if !self.loaded {
            let archive = self.archive.to_string_lossy().into_owned();
            self.call(Verb::Load, ConfigTree::new().with("archive", archive.as_str()))?;
            self.loaded = true;
        }
        Ok(())
    }
}

impl Predictor for TrainedModel {
    fn preprocess(&mut self) -> Result<(), String> {
        let spec = self.spec.to_string_lossy().into_owned();
        self.call(Verb::Preprocess, ConfigTree::new().with("spec", spec.as_str())).map(drop)
    }

    fn train(&mut self) -> Result<(), String> {
        self.load()
    }

    fn predict(&mut self, input: &SimValue) -> Result<Vec<f64>, String> {
        self.load()?;
        let xs = match input {
            SimValue::Str(id) => self.samples.get(id).cloned().ok_or_else(|| format!("unknown sample `{id}`"))?,
            SimValue::Tensor(xs) => xs.clone(),
            other => return Err(format!("cannot predict from {other}")),
        };
        let input = Value::List(xs.into_iter().map(Value::Real).collect());
        let out = self.call(Verb::Predict, ConfigTree::new().with("input", input))?;
        out.get("output")
            .and_then(Value::as_list)
            .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
            .ok_or_else(|| "PREDICT reply has no numeric `output`".to_string())
    }
}

/// Memoizes predictions so replays see identical outputs.
pub struct Cached {
    inner: Box<dyn Predictor>,
    memo: BTreeMap<String, Vec<f64>>,
}

impl Cached {
    pub fn new(inner: Box<dyn Predictor>) -> Self {
        Cached { inner, memo: BTreeMap::new() }
    }
}

impl Predictor for Cached {
    fn preprocess(&mut self) -> Result<(), String> {
        self.inner.preprocess()
    }

    fn train(&mut self) -> Result<(), String> {
        self.inner.train()
    }

    fn predict(&mut self, input: &SimValue) -> Result<Vec<f64>, String> {
        let key = input.to_string();
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.clone());
        }
        let v = self.inner.predict(input)?;
        self.memo.insert(key, v.clone());
        Ok(v)
    }
}
