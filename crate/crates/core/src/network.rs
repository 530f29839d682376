//! Flows in directed graphs: assembly of the hyperbolic and difference
//! systems, the cycle obstruction, and spectral controllability tests.
//!
//! Edge `j` carries a leftward flow on `[0, 1]` from its tail (at `x = 1`) to
//! its head (at `x = 0`). At each vertex the incoming mass plus the control
//! `Γu` is redistributed over the outgoing edges with weights `w⁻`.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::commensurable::{detect_commensurable, DEFAULT_MAX_DENOMINATOR};
use crate::controllability::{rank_kb, ControllabilityReport, Verdict, Witness};
use crate::error::{Error, Result};
use crate::linalg::{complex_singular_values, spectral_norm};
use crate::pwc::PiecewiseConstantFn;
use crate::system::{
    compute_damping_integrals, compute_delays, DifferenceSystem, HyperbolicSystem,
};

const WEIGHT_TOL: f64 = 1e-12;
/// Relative tolerance for "same ratio" and "same spectral point".
pub const COINCIDENCE_TOL: f64 = 1e-9;
/// Orbit samples per free phase for incommensurable cycles.
pub const TORUS_SAMPLES: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub speed: PiecewiseConstantFn,
    pub damping: PiecewiseConstantFn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    vertices: usize,
    edges: Vec<Edge>,
    weights: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl FlowGraph {
    /// `weights` is `k × n` (`w⁻ᵢⱼ`), `gamma` is `k × m`.
    pub fn new(
        vertices: usize,
        edges: Vec<Edge>,
        weights: DMatrix<f64>,
        gamma: DMatrix<f64>,
    ) -> Self {
        Self {
            vertices,
            edges,
            weights,
            gamma,
        }
    }

    /// Each vertex splits its outflow evenly over its outgoing edges.
    pub fn with_uniform_weights(vertices: usize, edges: Vec<Edge>, gamma: DMatrix<f64>) -> Self {
        let mut out_deg = vec![0usize; vertices];
        for e in &edges {
            if e.tail < vertices {
                out_deg[e.tail] += 1;
            }
        }
        let mut weights = DMatrix::zeros(vertices, edges.len());
        for (j, e) in edges.iter().enumerate() {
            if e.tail < vertices {
                weights[(e.tail, j)] = 1.0 / out_deg[e.tail] as f64;
            }
        }
        Self {
            vertices,
            edges,
            weights,
            gamma,
        }
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn with_gamma(&self, gamma: DMatrix<f64>) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    /// `𝓘⁻`: `1` at `(tail(j), j)`.
    pub fn tail_incidence(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.vertices, self.edges.len());
        for (j, e) in self.edges.iter().enumerate() {
            m[(e.tail, j)] = 1.0;
        }
        m
    }

    /// `𝓘⁺`: `1` at `(head(j), j)`.
    pub fn head_incidence(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.vertices, self.edges.len());
        for (j, e) in self.edges.iter().enumerate() {
            m[(e.head, j)] = 1.0;
        }
        m
    }

    /// `𝓘_w⁻`: `w⁻ᵢⱼ` on the support of `𝓘⁻`.
    pub fn weighted_incidence(&self) -> DMatrix<f64> {
        self.weights.component_mul(&self.tail_incidence())
    }

    pub fn incoming(&self, v: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&j| self.edges[j].head == v)
            .collect()
    }

    pub fn outgoing(&self, v: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&j| self.edges[j].tail == v)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoEdges,
    EndpointOutOfRange {
        edge: usize,
        vertex: usize,
    },
    InvalidSpeed {
        edge: usize,
        reason: String,
    },
    Shape {
        what: String,
        expected: [usize; 2],
        found: [usize; 2],
    },
    WeightRange {
        vertex: usize,
        edge: usize,
        weight: f64,
    },
    WeightSupport {
        vertex: usize,
        edge: usize,
        weight: f64,
    },
    WeightSum {
        vertex: usize,
        sum: f64,
    },
    NoIncoming {
        vertex: usize,
    },
    NoOutgoing {
        vertex: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoEdges => write!(f, "graph has no edges"),
            Violation::EndpointOutOfRange { edge, vertex } => {
                write!(f, "edge {edge} references vertex {vertex}")
            }
            Violation::InvalidSpeed { edge, reason } => write!(f, "edge {edge}: {reason}"),
            Violation::Shape {
                what,
                expected,
                found,
            } => {
                write!(
                    f,
                    "{what} is {}x{}, expected {}x{}",
                    found[0], found[1], expected[0], expected[1]
                )
            }
            Violation::WeightRange {
                vertex,
                edge,
                weight,
            } => {
                write!(f, "weight ({vertex}, {edge}) = {weight} outside [0, 1]")
            }
            Violation::WeightSupport {
                vertex,
                edge,
                weight,
            } => {
                write!(f, "weight ({vertex}, {edge}) = {weight} but vertex {vertex} is not the tail of edge {edge}")
            }
            Violation::WeightSum { vertex, sum } => {
                write!(f, "weights at vertex {vertex} sum to {sum}, expected 1")
            }
            Violation::NoIncoming { vertex } => write!(f, "vertex {vertex} has no incoming edge"),
            Violation::NoOutgoing { vertex } => write!(f, "vertex {vertex} has no outgoing edge"),
        }
    }
}

/// Structural checks: endpoints, speeds, weight normalization and support,
/// and at least one incoming and one outgoing edge per vertex.
pub fn validate_graph(g: &FlowGraph) -> std::result::Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let k = g.vertices;
    let n = g.edges.len();
    if n == 0 {
        v.push(Violation::NoEdges);
    }
    let mut endpoints_ok = true;
    for (j, e) in g.edges.iter().enumerate() {
        for x in [e.tail, e.head] {
            if x >= k {
                v.push(Violation::EndpointOutOfRange { edge: j, vertex: x });
                endpoints_ok = false;
            }
        }
        if let Some(bad) = e.speed.values().iter().find(|&&s| !(s < 0.0)) {
            v.push(Violation::InvalidSpeed {
                edge: j,
                reason: format!("speed value {bad} is not negative"),
            });
        }
        for (name, f) in [("speed", &e.speed), ("damping", &e.damping)] {
            if f.lower().abs() > 1e-12 || (f.upper() - 1.0).abs() > 1e-12 {
                v.push(Violation::InvalidSpeed {
                    edge: j,
                    reason: format!("{name} is not defined on [0, 1]"),
                });
            }
        }
    }
    if g.weights.shape() != (k, n) {
        v.push(Violation::Shape {
            what: "weights".into(),
            expected: [k, n],
            found: [g.weights.nrows(), g.weights.ncols()],
        });
    }
    if g.gamma.nrows() != k {
        v.push(Violation::Shape {
            what: "gamma".into(),
            expected: [k, g.gamma.ncols()],
            found: [g.gamma.nrows(), g.gamma.ncols()],
        });
    }
    if !endpoints_ok || g.weights.shape() != (k, n) {
        return Err(v);
    }
    for i in 0..k {
        let mut sum = 0.0;
        for j in 0..n {
            let w = g.weights[(i, j)];
            if !(0.0..=1.0).contains(&w) {
                v.push(Violation::WeightRange {
                    vertex: i,
                    edge: j,
                    weight: w,
                });
            }
            let is_tail = g.edges[j].tail == i;
            if (w != 0.0) != is_tail {
                v.push(Violation::WeightSupport {
                    vertex: i,
                    edge: j,
                    weight: w,
                });
            }
            sum += w;
        }
        if (sum - 1.0).abs() >= WEIGHT_TOL {
            v.push(Violation::WeightSum { vertex: i, sum });
        }
        if g.incoming(i).is_empty() {
            v.push(Violation::NoIncoming { vertex: i });
        }
        if g.outgoing(i).is_empty() {
            v.push(Violation::NoOutgoing { vertex: i });
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// `K = (𝓘_w⁻)ᵀ 𝓘⁺ Z`, `B = (𝓘_w⁻)ᵀ Γ`, with all speeds leftward.
pub fn build_network_system(g: &FlowGraph) -> Result<(HyperbolicSystem, DifferenceSystem)> {
    validate_graph(g).map_err(Error::InvalidGraph)?;
    let iw = g.weighted_incidence();
    let m = iw.transpose() * g.head_incidence();
    let b = iw.transpose() * &g.gamma;
    let speeds: Vec<_> = g.edges.iter().map(|e| e.speed.clone()).collect();
    let dampings: Vec<_> = g.edges.iter().map(|e| e.damping.clone()).collect();
    let hyp = HyperbolicSystem::new(speeds, dampings, m, b, 0)?;
    let diff = hyp.to_difference_system();
    Ok((hyp, diff))
}

/// Edge delays and damping integrals straight from the graph.
fn edge_data(g: &FlowGraph) -> Result<(Vec<f64>, Vec<f64>)> {
    let speeds: Vec<_> = g.edges.iter().map(|e| e.speed.clone()).collect();
    let dampings: Vec<_> = g.edges.iter().map(|e| e.damping.clone()).collect();
    Ok((
        compute_delays(&speeds)?,
        compute_damping_integrals(&speeds, &dampings)?,
    ))
}

/// Disjoint directed cycles covering all edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleDecomposition {
    /// Edges of each cycle in successor order: `head(cₜ) = tail(cₜ₊₁)`.
    pub cycles: Vec<Vec<usize>>,
    /// Relabeled position → original edge.
    pub permutation: Vec<usize>,
}

impl CycleDecomposition {
    pub fn count(&self) -> usize {
        self.cycles.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.cycles.iter().map(Vec::len).collect()
    }

    /// Positions of cycle `l` in the relabeled order.
    pub fn block(&self, l: usize) -> std::ops::Range<usize> {
        let start: usize = self.cycles[..l].iter().map(Vec::len).sum();
        start..start + self.cycles[l].len()
    }

    /// `P K Pᵀ` in the relabeled order.
    pub fn relabel(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let p = &self.permutation;
        DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(p[i], p[j])])
    }
}

/// A vertex with two incoming edges and the resulting proportional columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Obstruction {
    pub vertex: usize,
    pub columns: [usize; 2],
    /// `K_{c₀} = ratio · K_{c₁}`.
    pub ratio: f64,
    /// Angle between the two columns of the assembled `K`.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CycleOutcome {
    Decomposition(CycleDecomposition),
    Obstruction(Obstruction),
}

/// Angle between two vectors, robust for nearly parallel ones.
pub fn column_angle(a: &[f64], b: &[f64]) -> f64 {
    let bb: f64 = b.iter().map(|x| x * x).sum();
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    if bb == 0.0 {
        return if a.iter().all(|&x| x == 0.0) {
            0.0
        } else {
            std::f64::consts::FRAC_PI_2
        };
    }
    let c = ab / bb;
    let perp: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - c * y).powi(2))
        .sum::<f64>()
        .sqrt();
    perp.atan2(ab.abs() / bb.sqrt())
}

pub fn cycle_decomposition(g: &FlowGraph) -> Result<CycleOutcome> {
    let (_, diff) = build_network_system(g)?;
    let (_, zeta) = edge_data(g)?;
    for v in 0..g.vertices {
        let inc = g.incoming(v);
        if inc.len() >= 2 {
            let (j1, j2) = (inc[0], inc[1]);
            let k = diff.k();
            let c1: Vec<f64> = k.column(j1).iter().copied().collect();
            let c2: Vec<f64> = k.column(j2).iter().copied().collect();
            return Ok(CycleOutcome::Obstruction(Obstruction {
                vertex: v,
                columns: [j1, j2],
                ratio: (zeta[j2] - zeta[j1]).exp(),
                angle: column_angle(&c1, &c2),
            }));
        }
    }
    // Every vertex has exactly one incoming and (by counting) one outgoing edge.
    let n = g.edges.len();
    let succ: Vec<usize> = g.edges.iter().map(|e| g.outgoing(e.head)[0]).collect();
    let mut seen = vec![false; n];
    let mut cycles = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cyc = Vec::new();
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            cyc.push(j);
            j = succ[j];
        }
        cycles.push(cyc);
    }
    let permutation = cycles.iter().flatten().copied().collect();
    Ok(CycleOutcome::Decomposition(CycleDecomposition {
        cycles,
        permutation,
    }))
}

/// `p = −Σζ/Στ + i·2kπ/Στ` over the edges of cycle `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralPoint {
    pub cycle: usize,
    pub k: i64,
    pub re: f64,
    pub im: f64,
}

impl SpectralPoint {
    pub fn p(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Per-cycle sums `(Στ, Σζ)`.
fn cycle_sums(tau: &[f64], zeta: &[f64], cycle: &[usize]) -> (f64, f64) {
    (
        cycle.iter().map(|&j| tau[j]).sum(),
        cycle.iter().map(|&j| zeta[j]).sum(),
    )
}

pub fn spectral_set(
    g: &FlowGraph,
    dec: &CycleDecomposition,
    l: usize,
    k_range: std::ops::Range<i64>,
) -> Result<Vec<SpectralPoint>> {
    let cycle = dec
        .cycles
        .get(l)
        .ok_or_else(|| Error::DimensionMismatch(format!("no cycle {l}")))?;
    let (tau, zeta) = edge_data(g)?;
    let (s, z) = cycle_sums(&tau, &zeta, cycle);
    Ok(k_range
        .map(|k| SpectralPoint {
            cycle: l,
            k,
            re: -z / s,
            im: 2.0 * std::f64::consts::PI * k as f64 / s,
        })
        .collect())
}

/// Components `yⱼ = Π_{t<j} e^{pτₜ + ζₜ}` along the cycle order.
fn kernel_raw(tau: &[f64], zeta: &[f64], cycle: &[usize], p: Complex64) -> Vec<Complex64> {
    let mut y = Vec::with_capacity(cycle.len());
    let mut acc = Complex64::new(1.0, 0.0);
    for t in 0..cycle.len() {
        if t > 0 {
            let prev = cycle[t - 1];
            acc *= (p * tau[prev] + zeta[prev]).exp();
        }
        y.push(acc);
    }
    y
}

fn spectral_distance(s: f64, z: f64, p: Complex64) -> f64 {
    // |e^{pΣτ + Σζ} − 1| measured through the exponent
    let w = p * s + z;
    let k = (w.im / (2.0 * std::f64::consts::PI)).round();
    Complex64::new(w.re, w.im - 2.0 * std::f64::consts::PI * k).norm()
}

/// Left kernel vector of `𝒯ₗ(p) − C_hZₗ` at a spectral point.
pub fn kernel_vector(
    g: &FlowGraph,
    dec: &CycleDecomposition,
    l: usize,
    p: Complex64,
) -> Result<Vec<Complex64>> {
    let cycle = dec
        .cycles
        .get(l)
        .ok_or_else(|| Error::DimensionMismatch(format!("no cycle {l}")))?;
    let (tau, zeta) = edge_data(g)?;
    let (s, z) = cycle_sums(&tau, &zeta, cycle);
    if spectral_distance(s, z, p) > 1e-8 * (1.0 + p.norm() * s) {
        return Err(Error::NotSpectral {
            cycle: l,
            re: p.re,
            im: p.im,
        });
    }
    Ok(kernel_raw(&tau, &zeta, cycle, p))
}

/// `𝒯ₗ(p) − C_hZₗ` in cycle order; `C_h` has ones at `(t, t−1)` and `(0, h−1)`.
pub fn cycle_block(
    g: &FlowGraph,
    dec: &CycleDecomposition,
    l: usize,
    p: Complex64,
) -> Result<DMatrix<Complex64>> {
    let cycle = dec
        .cycles
        .get(l)
        .ok_or_else(|| Error::DimensionMismatch(format!("no cycle {l}")))?;
    let (tau, zeta) = edge_data(g)?;
    let h = cycle.len();
    let mut m = DMatrix::zeros(h, h);
    for t in 0..h {
        m[(t, t)] += (p * tau[cycle[t]]).exp();
        let prev = (t + h - 1) % h;
        m[(t, prev)] -= Complex64::new((-zeta[cycle[prev]]).exp(), 0.0);
    }
    Ok(m)
}

/// `C_h Zₗ` for cycle `l` (real).
pub fn cycle_companion(g: &FlowGraph, dec: &CycleDecomposition, l: usize) -> Result<DMatrix<f64>> {
    let cycle = dec
        .cycles
        .get(l)
        .ok_or_else(|| Error::DimensionMismatch(format!("no cycle {l}")))?;
    let (_, zeta) = edge_data(g)?;
    let h = cycle.len();
    let mut m = DMatrix::zeros(h, h);
    for t in 0..h {
        let prev = (t + h - 1) % h;
        m[(t, prev)] = (-zeta[cycle[prev]]).exp();
    }
    Ok(m)
}

/// Per-cycle data in a network report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleSummary {
    pub edges: Vec<usize>,
    pub tau_sum: f64,
    pub zeta_sum: f64,
    pub ratio: f64,
    pub min_margin: f64,
    pub argmin_p: [f64; 2],
    pub exact: bool,
    pub points_checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkReport {
    pub report: ControllabilityReport,
    pub decomposition: Option<CycleDecomposition>,
    pub obstruction: Option<Obstruction>,
    pub cycles: Vec<CycleSummary>,
}

impl NetworkReport {
    pub fn verdict(&self) -> Verdict {
        self.report.verdict
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn base_report(criterion: &str, diff: &DifferenceSystem) -> ControllabilityReport {
    ControllabilityReport {
        criterion: criterion.into(),
        verdict: Verdict::Inconclusive,
        witness: None,
        rank_kb: rank_kb(diff),
        n: diff.dim(),
        min_criterion: f64::INFINITY,
        min_det_found: None,
        argmin_p: [0.0, 0.0],
        alpha_estimate: None,
        search_box: None,
        kalman: None,
        notes: Vec::new(),
        elapsed_ms: 0.0,
    }
}

fn obstruction_report(
    criterion: &str,
    diff: &DifferenceSystem,
    ob: Obstruction,
    start: Instant,
) -> NetworkReport {
    let mut report = base_report(criterion, diff);
    report.verdict = Verdict::NotControllable;
    report.witness = Some(Witness::Obstruction {
        vertex: ob.vertex,
        columns: ob.columns,
        angle: ob.angle,
    });
    report.notes.push(format!(
        "vertex {} has several incoming edges, so columns {} and {} of K are proportional",
        ob.vertex, ob.columns[0], ob.columns[1]
    ));
    report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    NetworkReport {
        report,
        decomposition: None,
        obstruction: Some(ob),
        cycles: Vec::new(),
    }
}

/// Relative closeness.
fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= COINCIDENCE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Groups of cycle indices with equal `Σζ/Στ`.
fn ratio_groups(ratios: &[f64]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (l, &r) in ratios.iter().enumerate() {
        match groups.iter_mut().find(|g| close(ratios[g[0]], r)) {
            Some(g) => g.push(l),
            None => groups.push(vec![l]),
        }
    }
    groups
}

/// Controllability of a network flow through the cycle structure: obstruction
/// check, then `V(p) ∩ ker Bᵀ = {0}` at every spectral point, with `V(p)`
/// spanned by the kernel vectors of all cycles whose spectral set contains `p`.
pub fn network_approx_test(g: &FlowGraph, pass_tol: f64, fail_tol: f64) -> Result<NetworkReport> {
    let start = Instant::now();
    let (_, diff) = build_network_system(g)?;
    let dec = match cycle_decomposition(g)? {
        CycleOutcome::Obstruction(ob) => {
            return Ok(obstruction_report("approximate", &diff, ob, start))
        }
        CycleOutcome::Decomposition(d) => d,
    };
    let (tau, zeta) = edge_data(g)?;
    let b = diff.b();
    let bnorm = spectral_norm(b);
    let sums: Vec<(f64, f64)> = dec
        .cycles
        .iter()
        .map(|c| cycle_sums(&tau, &zeta, c))
        .collect();
    let ratios: Vec<f64> = sums.iter().map(|(s, z)| z / s).collect();
    let groups = ratio_groups(&ratios);
    let mut report = base_report("approximate", &diff);
    let mut summaries: Vec<Option<CycleSummary>> = vec![None; dec.count()];
    let mut all_exact = true;

    for group in &groups {
        let delays: Vec<f64> = group
            .iter()
            .flat_map(|&l| dec.cycles[l].iter().map(|&j| tau[j]))
            .collect();
        let common = detect_commensurable(&delays, COINCIDENCE_TOL, DEFAULT_MAX_DENOMINATOR);
        let per_cycle: Vec<CycleSummary> = group
            .par_iter()
            .map(|&l| {
                let (s, z) = sums[l];
                let (ks, exact): (Vec<i64>, bool) = match &common {
                    Some(c) => {
                        let n_l = (s / c.base).round().max(1.0) as i64;
                        ((0..n_l).collect(), true)
                    }
                    None => ((0..TORUS_SAMPLES as i64).collect(), false),
                };
                let mut worst = (f64::INFINITY, [0.0, 0.0]);
                for &k in &ks {
                    let omega = 2.0 * std::f64::consts::PI * k as f64 / s;
                    let p = Complex64::new(-z / s, omega);
                    let members: Vec<usize> = group
                        .iter()
                        .copied()
                        .filter(|&l2| {
                            let x = omega * sums[l2].0 / (2.0 * std::f64::consts::PI);
                            (x - x.round()).abs() <= COINCIDENCE_TOL * x.abs().max(1.0)
                        })
                        .collect();
                    let margin = stacked_margin(&tau, &zeta, &dec, &members, p, b, bnorm);
                    if margin < worst.0 {
                        worst = (margin, [p.re, p.im]);
                    }
                }
                CycleSummary {
                    edges: dec.cycles[l].clone(),
                    tau_sum: s,
                    zeta_sum: z,
                    ratio: z / s,
                    min_margin: worst.0,
                    argmin_p: worst.1,
                    exact,
                    points_checked: ks.len(),
                }
            })
            .collect();
        for (&l, sum) in group.iter().zip(per_cycle) {
            all_exact &= sum.exact;
            summaries[l] = Some(sum);
        }
    }
    let cycles: Vec<CycleSummary> = summaries
        .into_iter()
        .map(|s| s.expect("every cycle is in a group"))
        .collect();
    let (worst_l, worst) = cycles
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.min_margin.total_cmp(&b.1.min_margin))
        .expect("at least one cycle");
    report.min_criterion = worst.min_margin;
    report.argmin_p = worst.argmin_p;
    report.verdict = if worst.min_margin < fail_tol {
        Verdict::NotControllable
    } else if worst.min_margin > pass_tol {
        Verdict::Controllable
    } else {
        Verdict::Inconclusive
    };
    if report.verdict == Verdict::NotControllable {
        report.witness = Some(Witness::Cycle {
            cycle: worst_l,
            p: worst.argmin_p,
            margin: worst.min_margin,
        });
    }
    if !all_exact {
        report.notes.push(format!(
            "some cycles have incommensurable delays; their spectral points were sampled for k < {TORUS_SAMPLES}"
        ));
    }
    report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(NetworkReport {
        report,
        decomposition: Some(dec),
        obstruction: None,
        cycles,
    })
}

/// `σ_min` of the stacked rows `ỹₗ(p)ᵀB / ‖ỹₗ(p)‖`, divided by `‖B‖`.
fn stacked_margin(
    tau: &[f64],
    zeta: &[f64],
    dec: &CycleDecomposition,
    members: &[usize],
    p: Complex64,
    b: &DMatrix<f64>,
    bnorm: f64,
) -> f64 {
    if bnorm == 0.0 {
        return 0.0;
    }
    let m = b.ncols();
    let mut rows = DMatrix::zeros(members.len(), m);
    for (r, &l) in members.iter().enumerate() {
        let y = kernel_raw(tau, zeta, &dec.cycles[l], p);
        let ynorm = y.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for c in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &j) in dec.cycles[l].iter().enumerate() {
                acc += y[t] * b[(j, c)];
            }
            rows[(r, c)] = acc / ynorm;
        }
    }
    if members.len() > m {
        return 0.0;
    }
    let sv = complex_singular_values(&rows);
    sv.iter().copied().fold(f64::INFINITY, f64::min) / bnorm
}

/// Exact controllability through limits of the kernel vectors: for each cycle
/// minimize `|Yₗᵀ B| / (‖Yₗ‖ ‖B‖)` over the closure of the spectral phases.
/// Requires pairwise distinct ratios `Σζ/Στ`.
pub fn network_exact_test(g: &FlowGraph, pass_tol: f64, fail_tol: f64) -> Result<NetworkReport> {
    let start = Instant::now();
    let (_, diff) = build_network_system(g)?;
    let dec = match cycle_decomposition(g)? {
        CycleOutcome::Obstruction(ob) => return Ok(obstruction_report("exact", &diff, ob, start)),
        CycleOutcome::Decomposition(d) => d,
    };
    let (tau, zeta) = edge_data(g)?;
    let b = diff.b();
    let bnorm = spectral_norm(b);
    let sums: Vec<(f64, f64)> = dec
        .cycles
        .iter()
        .map(|c| cycle_sums(&tau, &zeta, c))
        .collect();
    let ratios: Vec<f64> = sums.iter().map(|(s, z)| z / s).collect();
    let mut report = base_report("exact", &diff);
    report
        .notes
        .push("exact verdicts are L^1 statements".into());
    if ratio_groups(&ratios).iter().any(|g| g.len() > 1) {
        report.notes.push(
            "two cycles share the ratio sum(zeta)/sum(tau); the exact criterion does not apply"
                .into(),
        );
        report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok(NetworkReport {
            report,
            decomposition: Some(dec),
            obstruction: None,
            cycles: Vec::new(),
        });
    }
    let cycles: Vec<CycleSummary> = (0..dec.count())
        .into_par_iter()
        .map(|l| torus_minimum(&tau, &zeta, &dec.cycles[l], sums[l], b, bnorm))
        .collect();
    let (worst_l, worst) = cycles
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.min_margin.total_cmp(&b.1.min_margin))
        .expect("at least one cycle");
    report.min_criterion = worst.min_margin;
    report.alpha_estimate = Some(worst.min_margin);
    report.argmin_p = worst.argmin_p;
    report.verdict = if worst.min_margin < fail_tol {
        Verdict::NotControllable
    } else if worst.min_margin > pass_tol {
        Verdict::Controllable
    } else {
        Verdict::Inconclusive
    };
    if report.verdict == Verdict::NotControllable {
        report.witness = Some(Witness::Cycle {
            cycle: worst_l,
            p: worst.argmin_p,
            margin: worst.min_margin,
        });
    }
    if cycles.iter().any(|c| !c.exact) {
        report.notes.push(
            "phase closures of incommensurable cycles were sampled and refined numerically".into(),
        );
    }
    report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(NetworkReport {
        report,
        decomposition: Some(dec),
        obstruction: None,
        cycles,
    })
}

/// `|Y(θ)ᵀB| / (‖Y‖ ‖B‖)` with fixed moduli and free cumulative phases.
struct TorusObjective {
    moduli: Vec<f64>,
    rows: Vec<Vec<f64>>,
    ynorm: f64,
    bnorm: f64,
}

impl TorusObjective {
    /// `theta[t]` is the phase of edge `t` (first `h − 1` used).
    fn eval(&self, theta: &[f64]) -> f64 {
        if self.bnorm == 0.0 {
            return 0.0;
        }
        let m = self.rows[0].len();
        let mut acc = vec![Complex64::new(0.0, 0.0); m];
        let mut phase = 0.0;
        for (t, row) in self.rows.iter().enumerate() {
            if t > 0 {
                phase += theta[t - 1];
            }
            let y = Complex64::from_polar(self.moduli[t], phase);
            for c in 0..m {
                acc[c] += y * row[c];
            }
        }
        acc.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt() / (self.ynorm * self.bnorm)
    }
}

fn torus_minimum(
    tau: &[f64],
    zeta: &[f64],
    cycle: &[usize],
    (s, z): (f64, f64),
    b: &DMatrix<f64>,
    bnorm: f64,
) -> CycleSummary {
    let h = cycle.len();
    let re = -z / s;
    let mut moduli = Vec::with_capacity(h);
    let mut acc = 0.0;
    for t in 0..h {
        if t > 0 {
            acc += re * tau[cycle[t - 1]] + zeta[cycle[t - 1]];
        }
        moduli.push(acc.exp());
    }
    let ynorm = moduli.iter().map(|x| x * x).sum::<f64>().sqrt();
    let rows: Vec<Vec<f64>> = cycle
        .iter()
        .map(|&j| b.row(j).iter().copied().collect())
        .collect();
    let obj = TorusObjective {
        moduli,
        rows,
        ynorm,
        bnorm,
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    // Phase of edge t at spectral index k: 2π k τₜ / S.
    let freqs: Vec<f64> = cycle[..h.saturating_sub(1)]
        .iter()
        .map(|&j| tau[j] / s)
        .collect();
    let theta_at = |k: f64| {
        freqs
            .iter()
            .map(|f| two_pi * (k * f).fract())
            .collect::<Vec<_>>()
    };
    let to_p = |k: f64| [re, two_pi * k / s];

    let delays: Vec<f64> = cycle.iter().map(|&j| tau[j]).collect();
    if h == 1 {
        let v = obj.eval(&[]);
        return CycleSummary {
            edges: cycle.to_vec(),
            tau_sum: s,
            zeta_sum: z,
            ratio: z / s,
            min_margin: v,
            argmin_p: to_p(0.0),
            exact: true,
            points_checked: 1,
        };
    }
    if let Some(c) = detect_commensurable(&delays, COINCIDENCE_TOL, DEFAULT_MAX_DENOMINATOR) {
        let n_l = c.total() as i64;
        let mut best = (f64::INFINITY, 0);
        for k in 0..n_l {
            let v = obj.eval(&theta_at(k as f64));
            if v < best.0 {
                best = (v, k);
            }
        }
        return CycleSummary {
            edges: cycle.to_vec(),
            tau_sum: s,
            zeta_sum: z,
            ratio: z / s,
            min_margin: best.0,
            argmin_p: to_p(best.1 as f64),
            exact: true,
            points_checked: n_l as usize,
        };
    }
    // Kronecker orbit {k·τₜ/S} mod 1.
    let free = h - 1;
    let samples = TORUS_SAMPLES * free;
    let mut scored: Vec<(f64, usize)> = (0..samples)
        .map(|k| (obj.eval(&theta_at(k as f64)), k))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (scored[0].0, to_p(scored[0].1 as f64));
    // Continuous refinement when the orbit closure is the full phase torus.
    if free == 1 || !has_small_relation(&freqs) {
        for &(_, k) in scored.iter().take(8) {
            let v = refine_torus(&obj, theta_at(k as f64));
            if v < best.0 {
                best = (v, to_p(k as f64));
            }
        }
    }
    CycleSummary {
        edges: cycle.to_vec(),
        tau_sum: s,
        zeta_sum: z,
        ratio: z / s,
        min_margin: best.0,
        argmin_p: best.1,
        exact: false,
        points_checked: samples,
    }
}

/// Integer relation `Σ cₜ fₜ ∈ ℤ` with `|cₜ| ≤ 6`, not all zero.
fn has_small_relation(freqs: &[f64]) -> bool {
    let n = freqs.len();
    if n > 4 {
        return false;
    }
    let mut c = vec![-6i64; n];
    loop {
        if c.iter().any(|&x| x != 0) {
            let s: f64 = c.iter().zip(freqs).map(|(&a, f)| a as f64 * f).sum();
            if (s - s.round()).abs() < 1e-9 {
                return true;
            }
        }
        let mut i = 0;
        while i < n {
            c[i] += 1;
            if c[i] <= 6 {
                break;
            }
            c[i] = -6;
            i += 1;
        }
        if i == n {
            return false;
        }
    }
}

fn refine_torus(obj: &TorusObjective, mut theta: Vec<f64>) -> f64 {
    let mut best = obj.eval(&theta);
    let mut step = 2.0 * std::f64::consts::PI / TORUS_SAMPLES as f64;
    for _ in 0..400 {
        if step < 1e-14 {
            break;
        }
        let mut moved = false;
        'dirs: for i in 0..theta.len() {
            for d in [step, -step] {
                theta[i] += d;
                let v = obj.eval(&theta);
                if v < best {
                    best = v;
                    moved = true;
                    break 'dirs;
                }
                theta[i] -= d;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best
}

/// Edge counts keyed by vertex, used in diagnostics.
pub fn in_degrees(g: &FlowGraph) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for e in &g.edges {
        *m.entry(e.head).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(tail: usize, head: usize, speed: f64, damping: f64) -> Edge {
        Edge {
            tail,
            head,
            speed: PiecewiseConstantFn::constant(0.0, 1.0, speed).unwrap(),
            damping: PiecewiseConstantFn::constant(0.0, 1.0, damping).unwrap(),
        }
    }

    #[test]
    fn validation() {
        let g = FlowGraph::with_uniform_weights(
            1,
            vec![edge(0, 0, -1.0, 0.0)],
            DMatrix::from_element(1, 1, 1.0),
        );
        assert!(validate_graph(&g).is_ok());
        let g = FlowGraph::with_uniform_weights(
            2,
            vec![edge(0, 1, -1.0, 0.0), edge(1, 1, -1.0, 0.0)],
            DMatrix::zeros(2, 1),
        );
        let v = validate_graph(&g).unwrap_err();
        assert!(v.contains(&Violation::NoIncoming { vertex: 0 }));
        let g = FlowGraph::new(
            1,
            vec![edge(0, 0, -1.0, 0.0)],
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::zeros(1, 1),
        );
        assert!(matches!(
            validate_graph(&g).unwrap_err()[0],
            Violation::WeightSum { vertex: 0, .. }
        ));
    }

    #[test]
    fn self_loop_system() {
        let g = FlowGraph::with_uniform_weights(
            1,
            vec![edge(0, 0, -1.0, 0.0)],
            DMatrix::from_element(1, 1, 1.0),
        );
        let (_, d) = build_network_system(&g).unwrap();
        assert_eq!(d.k()[(0, 0)], 1.0);
        assert_eq!(d.b()[(0, 0)], 1.0);
        assert_eq!(d.delays(), &[1.0]);
    }

    #[test]
    fn two_cycle_is_cyclic_permutation() {
        let g = FlowGraph::with_uniform_weights(
            2,
            vec![edge(0, 1, -1.0, 0.0), edge(1, 0, -1.0, 0.0)],
            DMatrix::zeros(2, 1),
        );
        let (_, d) = build_network_system(&g).unwrap();
        assert_eq!(d.k(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn decomposition_sizes() {
        let g = FlowGraph::with_uniform_weights(
            3,
            vec![
                edge(0, 1, -1.0, 0.0),
                edge(2, 2, -1.0, 0.0),
                edge(1, 0, -2.0, 0.0),
            ],
            DMatrix::zeros(3, 1),
        );
        let CycleOutcome::Decomposition(d) = cycle_decomposition(&g).unwrap() else {
            panic!()
        };
        assert_eq!(d.count(), 2);
        let mut sizes = d.sizes();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
    }

    #[test]
    fn obstruction_found() {
        let g = FlowGraph::with_uniform_weights(
            2,
            vec![
                edge(0, 1, -1.0, 0.3),
                edge(0, 1, -2.0, 0.0),
                edge(1, 0, -1.0, 0.0),
            ],
            DMatrix::from_element(2, 1, 1.0),
        );
        let CycleOutcome::Obstruction(ob) = cycle_decomposition(&g).unwrap() else {
            panic!()
        };
        assert_eq!(ob.vertex, 1);
        assert!(ob.angle < 1e-12);
    }

    #[test]
    fn spectral_points() {
        let g = FlowGraph::with_uniform_weights(
            2,
            vec![edge(0, 1, -1.0, 0.0), edge(1, 0, -1.0, 0.0)],
            DMatrix::zeros(2, 1),
        );
        let CycleOutcome::Decomposition(d) = cycle_decomposition(&g).unwrap() else {
            panic!()
        };
        let pts = spectral_set(&g, &d, 0, -2..3).unwrap();
        for p in &pts {
            assert_eq!(p.re, 0.0);
            assert!((p.im - p.k as f64 * std::f64::consts::PI).abs() < 1e-15);
            let y = kernel_vector(&g, &d, 0, p.p()).unwrap();
            assert_eq!(y[0], Complex64::new(1.0, 0.0));
            let m = cycle_block(&g, &d, 0, p.p()).unwrap();
            let r = nalgebra::RowDVector::from_row_slice(&y) * m;
            assert!(r.norm() < 1e-12);
        }
        assert!(kernel_vector(&g, &d, 0, Complex64::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn two_cycle_tests() {
        let g = FlowGraph::with_uniform_weights(
            2,
            vec![edge(0, 1, -1.0, 0.0), edge(1, 0, -(2f64.sqrt()), 0.0)],
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        );
        assert_eq!(
            network_approx_test(&g, 1e-6, 1e-10).unwrap().verdict(),
            Verdict::Controllable
        );
        let zero = g.with_gamma(DMatrix::zeros(2, 1));
        assert_eq!(
            network_approx_test(&zero, 1e-6, 1e-10).unwrap().verdict(),
            Verdict::NotControllable
        );
        assert_eq!(
            network_exact_test(&zero, 1e-6, 1e-10).unwrap().verdict(),
            Verdict::NotControllable
        );
    }

    #[test]
    fn shared_spectrum_needs_two_controls() {
        let g = FlowGraph::with_uniform_weights(
            2,
            vec![edge(0, 0, -1.0, 0.0), edge(1, 1, -1.0, 0.0)],
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        );
        assert_eq!(
            network_approx_test(&g, 1e-6, 1e-10).unwrap().verdict(),
            Verdict::NotControllable
        );
        let exact = network_exact_test(&g, 1e-6, 1e-10).unwrap();
        assert_eq!(exact.verdict(), Verdict::Inconclusive);
    }

    #[test]
    fn one_cycle_exact() {
        let g = FlowGraph::with_uniform_weights(
            2,
            vec![edge(0, 0, -1.0, 0.0), edge(1, 1, -1.0, 0.5)],
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        );
        assert_eq!(
            network_exact_test(&g, 1e-6, 1e-10).unwrap().verdict(),
            Verdict::Controllable
        );
        let g = g.with_gamma(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(
            network_exact_test(&g, 1e-6, 1e-10).unwrap().verdict(),
            Verdict::NotControllable
        );
    }
}
