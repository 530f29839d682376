//! Spec files (JSON or TOML), signal files, and CSV export/import.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Edge, FlowGraph};
use crate::pwc::PiecewiseConstantFn;
use crate::solution::ControlSignal;
use crate::system::{BoundaryState, DifferenceSystem, HyperbolicSystem};

/// A matrix given either as nested rows or as a flat row-major list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl MatrixSpec {
    /// `rows` is required; `cols` is inferred from flat data when `None`.
    pub fn to_matrix(&self, rows: usize, cols: Option<usize>, name: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Rows(r) => {
                if r.len() != rows {
                    return Err(Error::Parse(format!(
                        "{name} has {} rows, expected {rows}",
                        r.len()
                    )));
                }
                let c = cols.unwrap_or_else(|| r.first().map_or(0, Vec::len));
                if r.iter().any(|row| row.len() != c) {
                    return Err(Error::Parse(format!(
                        "{name} rows must all have {c} entries"
                    )));
                }
                Ok(DMatrix::from_fn(rows, c, |i, j| r[i][j]))
            }
            MatrixSpec::Flat(v) => {
                if rows == 0 {
                    return Ok(DMatrix::zeros(0, cols.unwrap_or(0)));
                }
                let c = cols.unwrap_or(v.len() / rows);
                if v.len() != rows * c {
                    return Err(Error::Parse(format!(
                        "{name} has {} entries, expected {rows}x{c}",
                        v.len()
                    )));
                }
                Ok(DMatrix::from_row_slice(rows, c, v))
            }
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixSpec::Rows(
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect(),
        )
    }
}

/// A coefficient given as a constant or as a step function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Constant(f64),
    Piecewise(PiecewiseConstantFn),
}

impl ProfileSpec {
    pub fn to_fn(&self) -> Result<PiecewiseConstantFn> {
        match self {
            ProfileSpec::Constant(v) => PiecewiseConstantFn::constant(0.0, 1.0, *v),
            ProfileSpec::Piecewise(f) => Ok(f.clone()),
        }
    }
}

/// Hyperbolic system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    pub n_plus: usize,
    pub speeds: Vec<ProfileSpec>,
    #[serde(default)]
    pub dampings: Option<Vec<ProfileSpec>>,
    #[serde(rename = "M")]
    pub m: MatrixSpec,
    #[serde(rename = "B")]
    pub b: MatrixSpec,
    #[serde(default)]
    pub q: Option<f64>,
}

/// Difference system description, bypassing the PDE layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifferenceSpec {
    #[serde(rename = "K")]
    pub k: MatrixSpec,
    #[serde(rename = "B")]
    pub b: MatrixSpec,
    pub delays: Vec<f64>,
    #[serde(default)]
    pub damping_integrals: Option<Vec<f64>>,
    #[serde(default)]
    pub q: Option<f64>,
}

/// Either form of system file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnySystemSpec {
    Hyperbolic(SystemSpec),
    Difference(DifferenceSpec),
}

/// A loaded system: the PDE description when available, the difference
/// system always.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub hyperbolic: Option<HyperbolicSystem>,
    pub difference: DifferenceSystem,
    pub q: f64,
}

impl SystemSpec {
    pub fn build(&self) -> Result<HyperbolicSystem> {
        let n = self.n;
        if self.speeds.len() != n {
            return Err(Error::Parse(format!(
                "{} speeds for n = {n}",
                self.speeds.len()
            )));
        }
        let speeds = self
            .speeds
            .iter()
            .map(ProfileSpec::to_fn)
            .collect::<Result<Vec<_>>>()?;
        let dampings = match &self.dampings {
            Some(d) => {
                if d.len() != n {
                    return Err(Error::Parse(format!("{} dampings for n = {n}", d.len())));
                }
                d.iter()
                    .map(ProfileSpec::to_fn)
                    .collect::<Result<Vec<_>>>()?
            }
            None => (0..n)
                .map(|_| PiecewiseConstantFn::zero(0.0, 1.0))
                .collect::<Result<Vec<_>>>()?,
        };
        let m = self.m.to_matrix(n, Some(n), "M")?;
        let b = self.b.to_matrix(n, None, "B")?;
        HyperbolicSystem::new(speeds, dampings, m, b, self.n_plus)
    }
}

impl DifferenceSpec {
    pub fn build(&self) -> Result<DifferenceSystem> {
        let n = self.delays.len();
        let k = self.k.to_matrix(n, Some(n), "K")?;
        let b = self.b.to_matrix(n, None, "B")?;
        match &self.damping_integrals {
            Some(z) => {
                DifferenceSystem::with_damping_integrals(k, b, self.delays.clone(), z.clone())
            }
            None => DifferenceSystem::new(k, b, self.delays.clone()),
        }
    }
}

fn check_q(q: Option<f64>) -> Result<f64> {
    let q = q.unwrap_or(2.0);
    if !(q.is_finite() && q >= 1.0) {
        return Err(Error::Parse(format!("q = {q} must lie in [1, inf)")));
    }
    Ok(q)
}

impl AnySystemSpec {
    pub fn load(&self) -> Result<LoadedSystem> {
        match self {
            AnySystemSpec::Hyperbolic(s) => {
                let q = check_q(s.q)?;
                let hyp = s.build()?;
                let difference = hyp.to_difference_system();
                Ok(LoadedSystem {
                    hyperbolic: Some(hyp),
                    difference,
                    q,
                })
            }
            AnySystemSpec::Difference(s) => Ok(LoadedSystem {
                hyperbolic: None,
                difference: s.build()?,
                q: check_q(s.q)?,
            }),
        }
    }
}

fn is_toml(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

/// Parse JSON or TOML text; `toml_hint` picks the format.
pub fn parse_text<T: for<'de> Deserialize<'de>>(text: &str, toml_hint: bool) -> Result<T> {
    if toml_hint {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    } else {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    std::fs::File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

pub fn read_system(path: &Path) -> Result<LoadedSystem> {
    let spec: AnySystemSpec = parse_text(&read_to_string(path)?, is_toml(path))?;
    spec.load()
}

pub fn parse_system(text: &str, toml: bool) -> Result<LoadedSystem> {
    parse_text::<AnySystemSpec>(text, toml)?.load()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub tail: usize,
    pub head: usize,
    pub speed: ProfileSpec,
    #[serde(default)]
    pub damping: Option<ProfileSpec>,
}

/// Graph description. Weights are `(vertex, edge, w)` triples; when omitted
/// each vertex splits evenly over its outgoing edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: usize,
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub weights: Option<Vec<(usize, usize, f64)>>,
    pub gamma: MatrixSpec,
}

impl GraphSpec {
    pub fn build(&self) -> Result<FlowGraph> {
        let edges = self
            .edges
            .iter()
            .map(|e| {
                Ok(Edge {
                    tail: e.tail,
                    head: e.head,
                    speed: e.speed.to_fn()?,
                    damping: e
                        .damping
                        .as_ref()
                        .map_or_else(|| PiecewiseConstantFn::zero(0.0, 1.0), |d| d.to_fn())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let gamma = self.gamma.to_matrix(self.vertices, None, "gamma")?;
        match &self.weights {
            None => Ok(FlowGraph::with_uniform_weights(self.vertices, edges, gamma)),
            Some(triples) => {
                let mut w = DMatrix::zeros(self.vertices, edges.len());
                for &(i, j, v) in triples {
                    if i >= self.vertices || j >= edges.len() {
                        return Err(Error::Parse(format!("weight ({i}, {j}) out of range")));
                    }
                    w[(i, j)] = v;
                }
                Ok(FlowGraph::new(self.vertices, edges, w, gamma))
            }
        }
    }
}

pub fn read_graph(path: &Path) -> Result<FlowGraph> {
    parse_text::<GraphSpec>(&read_to_string(path)?, is_toml(path))?.build()
}

pub fn parse_graph(text: &str, toml: bool) -> Result<FlowGraph> {
    parse_text::<GraphSpec>(text, toml)?.build()
}

/// Signal file: a list of step functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    Wrapped {
        components: Vec<PiecewiseConstantFn>,
    },
    Bare(Vec<PiecewiseConstantFn>),
}

impl SignalSpec {
    pub fn components(self) -> Vec<PiecewiseConstantFn> {
        match self {
            SignalSpec::Wrapped { components } | SignalSpec::Bare(components) => components,
        }
    }
}

fn read_components(path: &Path) -> Result<Vec<PiecewiseConstantFn>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("csv") {
        return read_state_csv(std::fs::File::open(path)?);
    }
    Ok(parse_text::<SignalSpec>(&read_to_string(path)?, is_toml(path))?.components())
}

/// Initial state from JSON/TOML or an exact state CSV.
pub fn read_state(path: &Path, delays: &[f64]) -> Result<BoundaryState> {
    BoundaryState::new(delays, read_components(path)?)
}

pub fn read_control(path: &Path) -> Result<ControlSignal> {
    ControlSignal::new(read_components(path)?)
}

pub fn signal_json(components: &[PiecewiseConstantFn]) -> String {
    serde_json::to_string_pretty(&SignalSpec::Wrapped {
        components: components.to_vec(),
    })
    .expect("serializable")
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    component: usize,
    s: f64,
    value: f64,
}

/// Exact state CSV `(component, s, value)`: one row per piece at its left end,
/// then a closing row at the right end repeating the last value.
pub fn write_state_csv<W: Write>(w: W, components: &[PiecewiseConstantFn]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (i, c) in components.iter().enumerate() {
        for (k, &v) in c.values().iter().enumerate() {
            wr.serialize(Row {
                component: i,
                s: c.breakpoints()[k],
                value: v,
            })
            .map_err(csv_err)?;
        }
        let last = *c.values().last().expect("non-empty");
        wr.serialize(Row {
            component: i,
            s: c.upper(),
            value: last,
        })
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_state_csv<R: Read>(r: R) -> Result<Vec<PiecewiseConstantFn>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rd.deserialize::<Row>() {
        let row = row.map_err(csv_err)?;
        groups
            .entry(row.component)
            .or_default()
            .push((row.s, row.value));
    }
    if groups.is_empty() {
        return Err(Error::Parse("state CSV has no rows".into()));
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(expect, (i, rows))| {
            if i != expect {
                return Err(Error::Parse(format!("state CSV skips component {expect}")));
            }
            let b = rows.iter().map(|r| r.0).collect();
            let v = rows[..rows.len() - 1].iter().map(|r| r.1).collect();
            PiecewiseConstantFn::new(b, v)
        })
        .collect()
}

/// Sampled trajectory CSV `(component, t, value)`.
pub fn write_trajectory_csv<W: Write>(w: W, rows: &[(usize, f64, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["component", "t", "value"])
        .map_err(csv_err)?;
    for (i, t, v) in rows {
        wr.write_record([i.to_string(), t.to_string(), v.to_string()])
            .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_toml_specs_agree() {
        let json = r#"{"n": 2, "n_plus": 2, "speeds": [1.0, {"breakpoints": [0, 0.5, 1], "values": [1, 2]}],
                       "M": [[0, 1], [1, 0]], "B": [0, 1]}"#;
        let toml = r#"
n = 2
n_plus = 2
speeds = [1.0, { breakpoints = [0.0, 0.5, 1.0], values = [1.0, 2.0] }]
M = [[0.0, 1.0], [1.0, 0.0]]
B = [[0.0], [1.0]]
"#;
        let a = parse_system(json, false).unwrap();
        let b = parse_system(toml, true).unwrap();
        assert_eq!(a.difference, b.difference);
        assert_eq!(a.difference.delays(), &[1.0, 0.75]);
        assert_eq!(a.q, 2.0);
    }

    #[test]
    fn difference_form() {
        let s = parse_system(
            r#"{"K": [0, 1, 1, 0], "B": [[0], [1]], "delays": [1, 0.5]}"#,
            false,
        )
        .unwrap();
        assert!(s.hyperbolic.is_none());
        assert_eq!(s.difference.k()[(0, 1)], 1.0);
    }

    #[test]
    fn malformed_specs() {
        assert!(parse_system(r#"{"n": 2, "n_plus": 2, "speeds": [1.0"#, false).is_err());
        assert!(parse_system(
            r#"{"n": 1, "n_plus": 1, "speeds": [1.0], "M": [1], "B": [1], "q": 0.5}"#,
            false
        )
        .is_err());
    }

    #[test]
    fn graph_spec() {
        let g = parse_graph(
            r#"{"vertices": 2, "edges": [{"tail": 0, "head": 1, "speed": -1}, {"tail": 1, "head": 0, "speed": -2, "damping": 0.5}],
                "gamma": [[0], [1]]}"#,
            false,
        )
        .unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.weights()[(1, 1)], 1.0);
    }

    #[test]
    fn state_csv_round_trip() {
        let comps = vec![
            PiecewiseConstantFn::new(vec![-1.0, -0.3333333333333333, 0.0], vec![0.1, -2.5e-7])
                .unwrap(),
            PiecewiseConstantFn::new(vec![-0.7071067811865476, 0.0], vec![3.0]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_state_csv(&mut buf, &comps).unwrap();
        let back = read_state_csv(&buf[..]).unwrap();
        assert_eq!(back, comps);
    }
}
