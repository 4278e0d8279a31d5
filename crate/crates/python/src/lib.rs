//! Python bindings: parse `.morph` text, run synthesis and trajectory
//! searches, walk decision paths, compare quality vectors.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use morphsynth::morphfile::{self, MorphDocument};
use morphsynth::{
    chain_for_path, execute_decision_path, network_trajectories, pareto_layers as layers, synthesize_node,
    weakly_dominates, AggregationMode, CompositeSolution, Dominance, Feasibility, MissingEntryPolicy,
    OutcomeAssignment, PriorityRule, SynthesisConfig,
};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// `(w; n1, n2, ...)`.
#[pyclass(frozen, eq, hash, skip_from_py_object, module = "morphsynth_py")]
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct QualityVector(morphsynth::QualityVector);

#[pymethods]
impl QualityVector {
    #[new]
    fn new(w: u32, n: Vec<u32>) -> Self {
        Self(morphsynth::QualityVector::new(w, n))
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        text.parse().map(Self).map_err(err)
    }

    #[getter]
    fn w(&self) -> u32 {
        self.0.w
    }

    #[getter]
    fn n(&self) -> Vec<u32> {
        self.0.n.clone()
    }

    /// True when `self` is at least as good as `other` in `w` and every prefix sum.
    fn weakly_dominates(&self, other: &Self) -> bool {
        weakly_dominates(&self.0, &other.0)
    }

    fn dominates(&self, other: &Self) -> bool {
        morphsynth::dominates(&self.0, &other.0) == Dominance::StrictlyDominates
    }

    fn __repr__(&self) -> String {
        format!("QualityVector('{}')", self.0)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "morphsynth_py")]
#[derive(Clone)]
pub struct Solution {
    name: String,
    node: String,
    selection: Vec<String>,
    leaves: Vec<String>,
    quality: QualityVector,
    layer: usize,
}

impl From<&CompositeSolution> for Solution {
    fn from(s: &CompositeSolution) -> Self {
        Self {
            name: s.name.clone(),
            node: s.node.clone(),
            selection: s.selection.iter().map(|i| i.item.clone()).collect(),
            leaves: s.leaves.iter().map(|i| i.item.clone()).collect(),
            quality: QualityVector(s.quality.clone()),
            layer: s.layer,
        }
    }
}

#[pymethods]
impl Solution {
    fn __repr__(&self) -> String {
        format!(
            "{} = {} N={} layer={}",
            self.name,
            self.selection.join("*"),
            self.quality.0,
            self.layer
        )
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "morphsynth_py")]
#[derive(Clone)]
pub struct Trajectory {
    name: String,
    /// (point, solution) pairs.
    assignment: Vec<(String, String)>,
    quality: QualityVector,
    layer: usize,
    formula: String,
}

impl From<&morphsynth::Trajectory> for Trajectory {
    fn from(t: &morphsynth::Trajectory) -> Self {
        Self {
            name: t.name.clone(),
            assignment: t.assignment.clone(),
            quality: QualityVector(t.quality.clone()),
            layer: t.layer,
            formula: t.formula(),
        }
    }
}

#[pymethods]
impl Trajectory {
    fn __repr__(&self) -> String {
        format!(
            "{} = {} N={} layer={}",
            self.name, self.formula, self.quality.0, self.layer
        )
    }
}

#[pyclass(frozen, get_all, module = "morphsynth_py")]
pub struct DecisionPath {
    visited: Vec<String>,
    points: Vec<String>,
    truncated: bool,
}

fn config(layers: usize, rule: &str, assume: Option<u32>, admit_zero: bool) -> PyResult<SynthesisConfig> {
    let rule = match rule {
        "pareto" => PriorityRule::ParetoLayer,
        "declared" => PriorityRule::Declared,
        other => return Err(err(format!("unknown priority rule {other:?}"))),
    };
    let mut cfg = SynthesisConfig::default().with_layers(layers).with_rule(rule);
    if let Some(v) = assume {
        cfg = cfg.with_policy(MissingEntryPolicy::AssumeValue(v));
    }
    if admit_zero {
        cfg = cfg.with_feasibility(Feasibility::AdmitZero);
    }
    Ok(cfg)
}

fn mode(name: &str) -> PyResult<AggregationMode> {
    AggregationMode::from_keyword(name).ok_or_else(|| err(format!("unknown mode {name:?}")))
}

/// A parsed `.morph` document.
#[pyclass(frozen, module = "morphsynth_py")]
pub struct Document(MorphDocument);

impl Document {
    fn network(&self, name: &str) -> PyResult<&morphsynth::TopLevelNetwork> {
        self.0
            .network(name)
            .ok_or_else(|| err(format!("unknown network {name}")))
    }
}

#[pymethods]
impl Document {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        morphfile::parse(text).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    #[getter]
    fn structures(&self) -> Vec<String> {
        self.0.structures.keys().cloned().collect()
    }

    #[getter]
    fn networks(&self) -> Vec<String> {
        self.0.networks.keys().cloned().collect()
    }

    fn serialize(&self) -> String {
        morphfile::serialize(&self.0)
    }

    #[pyo3(signature = (structure, node=None, layers=1, rule="pareto", assume=None, admit_zero=false))]
    fn synthesize(
        &self,
        structure: &str,
        node: Option<&str>,
        layers: usize,
        rule: &str,
        assume: Option<u32>,
        admit_zero: bool,
    ) -> PyResult<Vec<Solution>> {
        let s = self
            .0
            .structure(structure)
            .ok_or_else(|| err(format!("unknown structure {structure}")))?;
        let node = match node {
            Some(n) => n.to_string(),
            None => s
                .root()
                .map(|r| r.id.clone())
                .ok_or_else(|| err("structure has no root"))?,
        };
        let cfg = config(layers, rule, assume, admit_zero)?;
        let sols = synthesize_node(s, &node, &cfg).map_err(err)?;
        Ok(sols.iter().map(Solution::from).collect())
    }

    /// Pareto trajectories over an acyclic network of morph points, or along
    /// the path realized by `outcomes` when those are given.
    #[pyo3(signature = (network, mode="adjacent", layers=1, assume=None, outcomes=None, start=None, step_limit=64))]
    #[allow(clippy::too_many_arguments)]
    fn trajectories(
        &self,
        network: &str,
        mode: &str,
        layers: usize,
        assume: Option<u32>,
        outcomes: Option<OutcomeAssignment>,
        start: Option<&str>,
        step_limit: usize,
    ) -> PyResult<Vec<Trajectory>> {
        let net = self.network(network)?;
        let cfg = config(layers, "pareto", assume, false)?;
        let m = self::mode(mode)?;
        let found = match outcomes {
            Some(o) => {
                let path = self.walk(net, &o, start, step_limit)?;
                chain_for_path(net, &self.0.structures, &path.points, m, &cfg)
            }
            None => network_trajectories(net, &self.0.structures, m, &cfg),
        }
        .map_err(err)?;
        Ok(found.iter().map(Trajectory::from).collect())
    }

    #[pyo3(signature = (network, outcomes, start=None, step_limit=64))]
    fn decision_path(
        &self,
        network: &str,
        outcomes: OutcomeAssignment,
        start: Option<&str>,
        step_limit: usize,
    ) -> PyResult<DecisionPath> {
        let net = self.network(network)?;
        let p = self.walk(net, &outcomes, start, step_limit)?;
        Ok(DecisionPath {
            visited: p.visited,
            points: p.points,
            truncated: p.truncated,
        })
    }

    /// Claim lines and oracle lines, as the `verify` command prints them.
    fn verify(&self, claims: &str) -> PyResult<Vec<String>> {
        let claims = morphsynth::verify::parse_claims(claims).map_err(err)?;
        let report = morphsynth::verify::verify(&self.0, &claims);
        Ok(report
            .claims
            .iter()
            .map(ToString::to_string)
            .chain(report.oracle.iter().map(ToString::to_string))
            .collect())
    }

    #[pyo3(signature = (network, trajectory=None))]
    fn export_graph(&self, network: &str, trajectory: Option<&str>) -> PyResult<String> {
        let net = self.network(network)?;
        let assignment = match trajectory {
            None => None,
            Some(t) => Some(
                net.trajectories
                    .iter()
                    .find(|x| x.name == t)
                    .ok_or_else(|| err(format!("unknown trajectory {t}")))?
                    .assignment
                    .as_slice(),
            ),
        };
        Ok(morphfile::export_graph(net, assignment))
    }
}

impl Document {
    fn walk(
        &self,
        net: &morphsynth::TopLevelNetwork,
        outcomes: &OutcomeAssignment,
        start: Option<&str>,
        step_limit: usize,
    ) -> PyResult<morphsynth::DecisionPath> {
        let start = match start {
            Some(s) => s.to_string(),
            None => net
                .roots()
                .first()
                .map(|s| s.to_string())
                .ok_or_else(|| err("empty network"))?,
        };
        execute_decision_path(net, &start, outcomes, step_limit).map_err(err)
    }
}

/// Indices of `vectors` grouped by Pareto layer, best layer first.
#[pyfunction]
#[pyo3(signature = (vectors, depth=None))]
fn pareto_layers(vectors: Vec<PyRef<'_, QualityVector>>, depth: Option<usize>) -> Vec<Vec<usize>> {
    let items: Vec<(usize, morphsynth::QualityVector)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.0.clone()))
        .collect();
    layers(items, depth.unwrap_or(usize::MAX))
        .into_iter()
        .map(|l| l.into_iter().map(|(i, _)| i).collect())
        .collect()
}

#[pyfunction]
fn dominates(a: PyRef<'_, QualityVector>, b: PyRef<'_, QualityVector>) -> bool {
    a.dominates(&b)
}

#[pymodule]
fn morphsynth_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<QualityVector>()?;
    m.add_class::<Solution>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<DecisionPath>()?;
    m.add_class::<Document>()?;
    m.add_function(wrap_pyfunction!(pareto_layers, m)?)?;
    m.add_function(wrap_pyfunction!(dominates, m)?)?;
    Ok(())
}
