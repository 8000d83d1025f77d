//! JSON dataset and state files.
//!
//! Dataset (`fvddp-dataset/1`):
//!
//! ```json
//! {"schema": "fvddp-dataset/1", "theta": 1.0,
//!  "baseline": {"kind": "nonatomic"},
//!  "times": [0.0, 0.5], "observations": [["a", "b"], []]}
//! ```
//!
//! An atomic baseline is `{"kind": "atomic", "atoms": [{"label": "a", "mass": 0.5}, ...]}`.
//!
//! State (`fvddp-state/1`) stores `theta`, `baseline`, the registered `labels`
//! in order, `nodes` as `{"m": [counts], "w": weight}` rows in lexicographic
//! order of `m`, and a `provenance` block. Floats are written in shortest
//! round-trip form, so load(save(state)) reproduces every weight bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{Dataset, ObservationBatch};
use crate::lattice::{Baseline, FvddpState, Node, TypeRegistry};

pub const DATASET_SCHEMA: &str = "fvddp-dataset/1";
pub const STATE_SCHEMA: &str = "fvddp-state/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomEntry {
    pub label: String,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineSpec {
    Nonatomic,
    Atomic { atoms: Vec<AtomEntry> },
}

impl BaselineSpec {
    pub fn from_baseline(b: &Baseline) -> Self {
        match b {
            Baseline::Nonatomic => BaselineSpec::Nonatomic,
            Baseline::Atomic(atoms) => BaselineSpec::Atomic {
                atoms: atoms.iter().map(|(l, p)| AtomEntry { label: l.clone(), mass: *p }).collect(),
            },
        }
    }

    pub fn to_baseline(&self) -> Result<Baseline> {
        match self {
            BaselineSpec::Nonatomic => Ok(Baseline::Nonatomic),
            BaselineSpec::Atomic { atoms } => Baseline::atomic(atoms.iter().map(|a| (a.label.clone(), a.mass))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub schema: String,
    pub theta: f64,
    pub baseline: BaselineSpec,
    pub times: Vec<f64>,
    pub observations: Vec<Vec<String>>,
}

impl DatasetFile {
    pub fn from_dataset(d: &Dataset) -> Self {
        DatasetFile {
            schema: DATASET_SCHEMA.into(),
            theta: d.theta,
            baseline: BaselineSpec::from_baseline(&d.baseline),
            times: d.times().to_vec(),
            observations: d.batches().iter().map(|b| b.labels().to_vec()).collect(),
        }
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        check_schema(&self.schema, DATASET_SCHEMA)?;
        if let Some(w) = self.times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!("times must be strictly increasing ({} then {})", w[0], w[1])));
        }
        let batches = self.observations.iter().map(|o| ObservationBatch::new(o.iter().cloned())).collect();
        Dataset::new(self.theta, self.baseline.to_baseline()?, self.times.clone(), batches)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub m: Vec<u32>,
    pub w: f64,
}

/// How a state file was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<u64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub schema: String,
    pub theta: f64,
    pub baseline: BaselineSpec,
    pub labels: Vec<String>,
    pub nodes: Vec<NodeRow>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl StateFile {
    pub fn from_state(state: &FvddpState, provenance: Provenance) -> Self {
        StateFile {
            schema: STATE_SCHEMA.into(),
            theta: state.theta(),
            baseline: BaselineSpec::from_baseline(state.baseline()),
            labels: state.registry().labels().to_vec(),
            nodes: state.nodes().iter().map(|(n, &w)| NodeRow { m: n.counts().to_vec(), w }).collect(),
            provenance,
        }
    }

    pub fn to_state(&self) -> Result<FvddpState> {
        check_schema(&self.schema, STATE_SCHEMA)?;
        let registry = TypeRegistry::from_labels(self.labels.iter().cloned())?;
        let mut nodes = BTreeMap::new();
        for row in &self.nodes {
            if nodes.insert(Node::new(row.m.clone()), row.w).is_some() {
                return Err(Error::Invalid(format!("node {:?} listed twice", row.m)));
            }
        }
        FvddpState::from_normalized_parts(self.theta, self.baseline.to_baseline()?, registry, nodes)
    }
}

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Parse(format!("schema {found:?}, expected {expected:?}")));
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn dataset_to_string(d: &Dataset) -> String {
    to_json(&DatasetFile::from_dataset(d))
}

pub fn dataset_from_str(text: &str) -> Result<Dataset> {
    from_json::<DatasetFile>(text)?.to_dataset()
}

pub fn state_to_string(state: &FvddpState, provenance: Provenance) -> String {
    to_json(&StateFile::from_state(state, provenance))
}

pub fn state_from_str(text: &str) -> Result<FvddpState> {
    from_json::<StateFile>(text)?.to_state()
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_str(&fs::read_to_string(path)?)
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    Ok(fs::write(path, dataset_to_string(d))?)
}

pub fn load_state(path: &Path) -> Result<FvddpState> {
    state_from_str(&fs::read_to_string(path)?)
}

pub fn save_state(state: &FvddpState, provenance: Provenance, path: &Path) -> Result<()> {
    Ok(fs::write(path, state_to_string(state, provenance))?)
}
