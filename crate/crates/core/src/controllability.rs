//! Hautus-type frequency tests for approximate and exact controllability.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commensurable::{
    commensurable_reduce_with, detect_commensurable, Commensurability, KalmanVerdict,
};
use crate::error::{Error, Result};
use crate::linalg::{
    complex_det, complex_det_in_place, complex_singular_values, hstack, rank, rank_tolerance,
    spectral_norm,
};
use crate::system::DifferenceSystem;

/// `|Re p| · τ_max` above which `e^{pτ}` is not evaluated.
pub const OVERFLOW_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HautusValue {
    #[serde(serialize_with = "ser_complex")]
    pub p: Complex64,
    /// `det(H(p)H(p)* + BB*)`.
    pub det_criterion: f64,
    /// Smallest singular value of `[H(p), B]`.
    pub min_sv: f64,
    pub max_sv: f64,
    /// `min_sv / (max e^{Re p τ} + ‖K‖ + ‖B‖)`, the quantity the verdicts
    /// are based on. The denominator bounds `max_sv`.
    pub rel_sv: f64,
    /// Numerical rank of `[H(p), B]`.
    pub rank: usize,
    pub rank_tol: f64,
    /// `det_criterion / Πⱼ (e^{2 Re p τⱼ} + ‖K‖² + ‖B‖²)`.
    pub normalized: f64,
}

impl HautusValue {
    /// Threshold on `det_criterion` implied by the rank tolerance: a singular
    /// value at `rank_tol` with the others at `σ_max`.
    pub fn det_threshold(&self, n: usize) -> f64 {
        self.max_sv.powi(2 * (n as i32 - 1)) * self.rank_tol * self.rank_tol
    }
}

fn ser_complex<S: serde::Serializer>(p: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [p.re, p.im].serialize(s)
}

fn h_matrix(sys: &DifferenceSystem, p: Complex64) -> DMatrix<Complex64> {
    let n = sys.dim();
    DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j {
            (p * sys.delays()[i]).exp()
        } else {
            Complex64::new(0.0, 0.0)
        };
        d - sys.k()[(i, j)]
    })
}

fn guard(sys: &DifferenceSystem, p: Complex64) -> Result<()> {
    let g = p.re.abs() * sys.tau_max();
    if !g.is_finite() || g > OVERFLOW_GUARD || !p.im.is_finite() {
        return Err(Error::FrequencyOutOfRange(g));
    }
    Ok(())
}

fn sv_scale(sys: &DifferenceSystem, re: f64, knorm: f64, bnorm: f64) -> f64 {
    let diag = sys
        .delays()
        .iter()
        .map(|t| (re * t).exp())
        .fold(0.0, f64::max);
    diag + knorm + bnorm
}

fn normalizer(sys: &DifferenceSystem, re: f64, knorm: f64, bnorm: f64) -> f64 {
    let c = knorm * knorm + bnorm * bnorm;
    sys.delays()
        .iter()
        .map(|t| (2.0 * re * t).exp() + c)
        .product()
}

/// `H(p) = diag(e^{pτ}) − K` together with both rank criteria.
pub fn hautus_value(sys: &DifferenceSystem, p: Complex64) -> Result<HautusValue> {
    guard(sys, p)?;
    let n = sys.dim();
    let m = sys.inputs();
    let h = h_matrix(sys, p);
    let b = sys.b().map(|v| Complex64::new(v, 0.0));
    let mut hb = DMatrix::zeros(n, n + m);
    hb.columns_mut(0, n).copy_from(&h);
    hb.columns_mut(n, m).copy_from(&b);
    let sv = complex_singular_values(&hb);
    let max_sv = sv.iter().copied().fold(0.0, f64::max);
    let min_sv = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let rank_tol = rank_tolerance(n, n + m, max_sv);
    let rank = sv.iter().filter(|&&s| s > rank_tol).count();
    let gram = &hb * hb.adjoint();
    let det_criterion = complex_det(&gram).re.max(0.0);
    let normalized =
        det_criterion / normalizer(sys, p.re, spectral_norm(sys.k()), spectral_norm(sys.b()));
    let rel_sv = if sv.len() < n {
        0.0
    } else {
        min_sv / sv_scale(sys, p.re, spectral_norm(sys.k()), spectral_norm(sys.b()))
    };
    Ok(HautusValue {
        p,
        det_criterion,
        min_sv,
        max_sv,
        rel_sv,
        rank,
        rank_tol,
        normalized,
    })
}

/// Numerical rank of `[K, B]`.
pub fn rank_kb(sys: &DifferenceSystem) -> usize {
    rank(&hstack(sys.k(), sys.b()))
}

/// Strip and tolerance settings for the frequency search. `None` fields are
/// derived from the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StripOptions {
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub im_max: Option<f64>,
    /// Grid points along `Im p` per quasi-period `2π / Στ`.
    pub grid: f64,
    /// Grid points along `Re p` per `2π / Στ`.
    pub re_grid: f64,
    pub max_im_points: usize,
    pub max_re_points: usize,
    /// Number of local minima refined by pattern search.
    pub refine_starts: usize,
    pub pass_tol: f64,
    pub fail_tol: f64,
    pub commensurable_tol: f64,
    pub max_denominator: u64,
}

impl Default for StripOptions {
    fn default() -> Self {
        Self {
            sigma_min: None,
            sigma_max: None,
            im_max: None,
            grid: 64.0,
            re_grid: 16.0,
            max_im_points: 4096,
            max_re_points: 512,
            refine_starts: 16,
            pass_tol: 1e-6,
            fail_tol: 1e-10,
            commensurable_tol: crate::commensurable::DEFAULT_TOL,
            max_denominator: crate::commensurable::DEFAULT_MAX_DENOMINATOR,
        }
    }
}

/// Search region actually used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchBox {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub im_max: f64,
    pub re_points: usize,
    pub im_points: usize,
    pub commensurable: Option<Commensurability>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Controllable,
    NotControllable,
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Controllable => 0,
            Verdict::NotControllable => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Controllable => "Controllable",
            Verdict::NotControllable => "NotControllable",
            Verdict::Inconclusive => "Inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `rank [K, B] < n`.
    RankKb { rank: usize, n: usize },
    /// A frequency where `[H(p), B]` loses rank.
    Frequency {
        p: [f64; 2],
        rel_sv: f64,
        normalized: f64,
    },
    /// `[M, B]` loses rank for a limit point `M` of `H(ℂ)`.
    LimitMatrix {
        description: String,
        p: [f64; 2],
        rel_sv: f64,
    },
    /// Proportional columns of `K` forced by a vertex with several incoming edges.
    Obstruction {
        vertex: usize,
        columns: [usize; 2],
        angle: f64,
    },
    /// A network cycle whose spectral test fails.
    Cycle {
        cycle: usize,
        p: [f64; 2],
        margin: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllabilityReport {
    /// `approximate` or `exact`.
    pub criterion: String,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub rank_kb: usize,
    pub n: usize,
    /// Smallest value of the quantity compared against the tolerances.
    pub min_criterion: f64,
    /// Normalized `det(H(p)H(p)* + BB*)` at `argmin_p`.
    pub min_det_found: Option<f64>,
    pub argmin_p: [f64; 2],
    pub alpha_estimate: Option<f64>,
    pub search_box: Option<SearchBox>,
    pub kalman: Option<KalmanVerdict>,
    pub notes: Vec<String>,
    pub elapsed_ms: f64,
}

impl ControllabilityReport {
    pub fn summary_line(&self) -> String {
        format!("{}: {}", self.criterion, self.verdict)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Cheap normalized criterion used on the grid.
struct Evaluator<'a> {
    sys: &'a DifferenceSystem,
    bbt: DMatrix<f64>,
    knorm: f64,
    bnorm: f64,
}

impl<'a> Evaluator<'a> {
    fn new(sys: &'a DifferenceSystem) -> Self {
        let bbt = sys.b() * sys.b().transpose();
        Self {
            sys,
            bbt,
            knorm: spectral_norm(sys.k()),
            bnorm: spectral_norm(sys.b()),
        }
    }

    fn eval(&self, re: f64, im: f64) -> f64 {
        let n = self.sys.dim();
        let k = self.sys.k();
        let mut h = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = Complex64::new(-k[(i, j)], 0.0);
            }
            h[i * n + i] += (Complex64::new(re, im) * self.sys.delays()[i]).exp();
        }
        let mut g = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in i..n {
                let mut acc = Complex64::new(self.bbt[(i, j)], 0.0);
                for l in 0..n {
                    acc += h[i * n + l] * h[j * n + l].conj();
                }
                g[i * n + j] = acc;
                g[j * n + i] = acc.conj();
            }
        }
        let det = complex_det_in_place(&mut g, n).re.max(0.0);
        det / normalizer(self.sys, re, self.knorm, self.bnorm)
    }

    /// `σ_min([H(p), B])` over its a-priori bound.
    fn rel_sv(&self, re: f64, im: f64) -> f64 {
        let n = self.sys.dim();
        let m = self.sys.inputs();
        let p = Complex64::new(re, im);
        let hb = DMatrix::from_fn(n, n + m, |i, j| {
            if j < n {
                let d = if i == j {
                    (p * self.sys.delays()[i]).exp()
                } else {
                    Complex64::new(0.0, 0.0)
                };
                d - self.sys.k()[(i, j)]
            } else {
                Complex64::new(self.sys.b()[(i, j - n)], 0.0)
            }
        });
        let sv = complex_singular_values(&hb);
        if sv.len() < n {
            return 0.0;
        }
        sv.iter().copied().fold(f64::INFINITY, f64::min)
            / sv_scale(self.sys, re, self.knorm, self.bnorm)
    }

    /// Left limit `Re p → −∞`: `σ_min([K, B]) / (‖K‖ + ‖B‖)`.
    fn left_limit(&self) -> f64 {
        let sv = crate::linalg::singular_values(&hstack(self.sys.k(), self.sys.b()));
        let scale = self.knorm + self.bnorm;
        if sv.len() < self.sys.dim() || scale == 0.0 {
            return 0.0;
        }
        sv.iter().copied().fold(f64::INFINITY, f64::min) / scale
    }
}

/// Strip bounds, grid, and best point found.
struct StripResult {
    search: SearchBox,
    /// Smallest scaled `σ_min` found.
    min: f64,
    /// Normalized determinant there.
    det: f64,
    argmin: (f64, f64),
}

fn strip_box(sys: &DifferenceSystem, opts: &StripOptions) -> SearchBox {
    let n = sys.dim() as f64;
    let knorm = spectral_norm(sys.k());
    let tau_min = sys.tau_min();
    let total: f64 = sys.delays().iter().sum();
    let sigma_max = opts
        .sigma_max
        .unwrap_or_else(|| (1.0 + n * knorm).ln() / tau_min);
    let sigma_min = opts.sigma_min.unwrap_or_else(|| {
        let mut s = (1e-8 * (1.0 + knorm)).ln() / tau_min;
        // Left of this line every |e^{pτⱼ}| is below half the smallest singular
        // value of [K, B], so [H(p), B] keeps full rank there.
        let sv = crate::linalg::singular_values(&hstack(sys.k(), sys.b()));
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if sv.len() == sys.dim() && smin > 0.0 {
            s = s.min((0.5 * smin).ln() / tau_min);
        }
        s.max(-OVERFLOW_GUARD / sys.tau_max() * 0.99)
    });
    let commensurable =
        detect_commensurable(sys.delays(), opts.commensurable_tol, opts.max_denominator);
    let im_max = opts.im_max.unwrap_or_else(|| {
        let mut im = 4.0 * std::f64::consts::PI / tau_min;
        if let Some(c) = &commensurable {
            // One period of H in Im p, halved by conjugate symmetry.
            im = im.max(std::f64::consts::PI / c.base);
        }
        im
    });
    let quasi = 2.0 * std::f64::consts::PI / total;
    let im_points = ((opts.grid * im_max / quasi).ceil() as usize).clamp(16, opts.max_im_points);
    let re_points = ((opts.re_grid * (sigma_max - sigma_min) / quasi).ceil() as usize)
        .clamp(32, opts.max_re_points);
    SearchBox {
        sigma_min,
        sigma_max,
        im_max,
        re_points,
        im_points,
        commensurable,
    }
}

fn search_strip(sys: &DifferenceSystem, opts: &StripOptions) -> StripResult {
    let search = strip_box(sys, opts);
    let ev = Evaluator::new(sys);
    let (nr, ni) = (search.re_points, search.im_points);
    let re_at = |a: usize| {
        search.sigma_min + (search.sigma_max - search.sigma_min) * a as f64 / (nr - 1) as f64
    };
    let im_at = |b: usize| search.im_max * b as f64 / (ni - 1) as f64;
    let grid: Vec<Vec<f64>> = (0..nr)
        .into_par_iter()
        .map(|a| (0..ni).map(|b| ev.eval(re_at(a), im_at(b))).collect())
        .collect();

    // Local minima of the grid, best first.
    let mut minima = Vec::new();
    for a in 0..nr {
        for b in 0..ni {
            let v = grid[a][b];
            let mut is_min = true;
            'nb: for da in -1i64..=1 {
                for db in -1i64..=1 {
                    let (x, y) = (a as i64 + da, b as i64 + db);
                    if (da, db) == (0, 0) || x < 0 || y < 0 || x >= nr as i64 || y >= ni as i64 {
                        continue;
                    }
                    if grid[x as usize][y as usize] < v {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if is_min {
                minima.push((v, a, b));
            }
        }
    }
    minima.sort_by(|x, y| x.0.total_cmp(&y.0));
    minima.truncate(opts.refine_starts.max(1));

    let step_re = (search.sigma_max - search.sigma_min) / (nr - 1) as f64;
    let step_im = search.im_max / (ni - 1) as f64;
    let refined: Vec<(f64, f64, f64)> = minima
        .par_iter()
        .map(|&(_, a, b)| {
            let (_, re, im) = pattern_search(
                |r, i| ev.eval(r, i),
                &search,
                re_at(a),
                im_at(b),
                step_re,
                step_im,
            );
            // The determinant is flat (quadratic) at a zero; finish on the
            // singular value ratio, which vanishes linearly.
            pattern_search(|r, i| ev.rel_sv(r, i), &search, re, im, step_re, step_im)
        })
        .collect();
    let best = refined
        .into_iter()
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .unwrap_or((f64::INFINITY, 0.0, 0.0));
    StripResult {
        search,
        min: best.0,
        det: ev.eval(best.1, best.2),
        argmin: (best.1, best.2),
    }
}

/// Compass search with halving steps, clamped to the strip (with `Im p ≥ 0`).
fn pattern_search<F: Fn(f64, f64) -> f64>(
    f: F,
    b: &SearchBox,
    re0: f64,
    im0: f64,
    sr: f64,
    si: f64,
) -> (f64, f64, f64) {
    let clamp = |re: f64, im: f64| (re.clamp(b.sigma_min, b.sigma_max), im.clamp(0.0, b.im_max));
    let (mut re, mut im) = (re0, im0);
    let mut best = f(re, im);
    let (mut sr, mut si) = (sr, si);
    let scale_re = b.sigma_max.abs().max(b.sigma_min.abs()).max(1.0);
    let scale_im = b.im_max.max(1.0);
    for _ in 0..600 {
        if sr < 1e-14 * scale_re && si < 1e-14 * scale_im {
            break;
        }
        let mut moved = false;
        for (dr, di) in [
            (sr, 0.0),
            (-sr, 0.0),
            (0.0, si),
            (0.0, -si),
            (sr, si),
            (-sr, -si),
            (sr, -si),
            (-sr, si),
        ] {
            let (r2, i2) = clamp(re + dr, im + di);
            let v = f(r2, i2);
            if v < best {
                best = v;
                re = r2;
                im = i2;
                moved = true;
                break;
            }
        }
        if !moved {
            sr *= 0.5;
            si *= 0.5;
        }
        if best == 0.0 {
            break;
        }
    }
    (best, re, im)
}

fn verdict_for(value: f64, opts: &StripOptions) -> Verdict {
    if value < opts.fail_tol {
        Verdict::NotControllable
    } else if value > opts.pass_tol {
        Verdict::Controllable
    } else {
        Verdict::Inconclusive
    }
}

/// Approximate controllability: `rank [K, B] = n` and `[H(p), B]` of full
/// rank on the search strip, judged by its scaled smallest singular value.
pub fn approx_controllability_report(
    sys: &DifferenceSystem,
    opts: &StripOptions,
) -> ControllabilityReport {
    let start = Instant::now();
    let n = sys.dim();
    let rkb = rank_kb(sys);
    let mut notes = Vec::new();
    let kalman = kalman_if_commensurable(sys, opts);
    if rkb < n {
        return ControllabilityReport {
            criterion: "approximate".into(),
            verdict: Verdict::NotControllable,
            witness: Some(Witness::RankKb { rank: rkb, n }),
            rank_kb: rkb,
            n,
            min_criterion: 0.0,
            min_det_found: None,
            argmin_p: [f64::NEG_INFINITY, 0.0],
            alpha_estimate: None,
            search_box: None,
            kalman,
            notes,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        };
    }
    let strip = search_strip(sys, opts);
    let (re, im) = strip.argmin;
    let verdict = verdict_for(strip.min, opts);
    let witness = (verdict == Verdict::NotControllable).then_some(Witness::Frequency {
        p: [re, im],
        rel_sv: strip.min,
        normalized: strip.det,
    });
    if strip.search.commensurable.is_none() {
        notes.push(format!(
            "delays are incommensurable: the search covers Im p in [0, {:.6}] only and cannot rule out rank loss beyond it",
            strip.search.im_max
        ));
    }
    ControllabilityReport {
        criterion: "approximate".into(),
        verdict,
        witness,
        rank_kb: rkb,
        n,
        min_criterion: strip.min,
        min_det_found: Some(strip.det),
        argmin_p: [re, im],
        alpha_estimate: None,
        search_box: Some(strip.search),
        kalman,
        notes,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Estimate the infimum of the scaled `σ_min([M, B])` over `M` in the closure
/// of `H(ℂ)` by the strip minimum and the left limit `M = −K`.
pub fn exact_controllability_report(
    sys: &DifferenceSystem,
    opts: &StripOptions,
) -> ControllabilityReport {
    let start = Instant::now();
    let approx = approx_controllability_report(sys, opts);
    let mut notes = vec!["exact verdicts are L^1 statements".to_string()];
    if approx.verdict == Verdict::NotControllable {
        notes.push("approximate test fails, so exact controllability fails".into());
        notes.extend(approx.notes);
        return ControllabilityReport {
            criterion: "exact".into(),
            alpha_estimate: Some(approx.min_criterion),
            notes,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            ..approx
        };
    }
    let left = Evaluator::new(sys).left_limit();
    let (mut alpha, mut argmin, mut at_limit) = (approx.min_criterion, approx.argmin_p, false);
    if left < alpha {
        alpha = left;
        argmin = [f64::NEG_INFINITY, 0.0];
        at_limit = true;
    }
    let verdict = verdict_for(alpha, opts);
    let witness = (verdict == Verdict::NotControllable).then(|| {
        let description = if at_limit {
            "M = -K (Re p -> -inf)"
        } else {
            "M = H(p*)"
        };
        Witness::LimitMatrix {
            description: description.into(),
            p: argmin,
            rel_sv: alpha,
        }
    });
    let search = approx.search_box.clone();
    if search.as_ref().is_some_and(|s| s.commensurable.is_none()) {
        notes.push(
            "closure of H(C) includes torus limits of (e^{i theta tau_j}) not covered by the finite strip; alpha is an upper estimate"
                .into(),
        );
    }
    ControllabilityReport {
        criterion: "exact".into(),
        verdict,
        witness,
        rank_kb: approx.rank_kb,
        n: approx.n,
        min_criterion: alpha,
        min_det_found: approx.min_det_found,
        argmin_p: argmin,
        alpha_estimate: Some(alpha),
        search_box: search,
        kalman: approx.kalman,
        notes,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

fn kalman_if_commensurable(sys: &DifferenceSystem, opts: &StripOptions) -> Option<KalmanVerdict> {
    commensurable_reduce_with(sys, opts.commensurable_tol, opts.max_denominator, 256)
        .ok()
        .map(|a| a.kalman())
}
