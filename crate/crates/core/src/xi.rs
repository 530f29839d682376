//! The matrix family `Ξ_ℓ` indexed by multi-indices and the coefficients of
//! `det(I − K diag(t))`.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default cap on `n` for the `2ⁿ` coefficient table.
pub const DEFAULT_ALPHA_BOUND: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<i64>);

impl MultiIndex {
    pub fn new(entries: Vec<i64>) -> Self {
        Self(entries)
    }

    pub fn zero(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn unit(n: usize, k: usize) -> Self {
        let mut e = vec![0; n];
        e[k] = 1;
        Self(e)
    }

    pub fn entries(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|ℓ| = Σ ℓᵢ`.
    pub fn order(&self) -> i64 {
        self.0.iter().sum()
    }

    pub fn is_natural(&self) -> bool {
        self.0.iter().all(|&v| v >= 0)
    }
}

impl From<Vec<i64>> for MultiIndex {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

impl From<&[i64]> for MultiIndex {
    fn from(v: &[i64]) -> Self {
        Self(v.to_vec())
    }
}

/// Memoized `Ξ_ℓ` for a fixed `K`.
///
/// `xi` takes `&mut self`; share a table across threads only after
/// [`XiTable::precompute`], through [`XiTable::get`].
#[derive(Debug, Clone)]
pub struct XiTable {
    k: DMatrix<f64>,
    memo: HashMap<Vec<i64>, DMatrix<f64>>,
    zero: DMatrix<f64>,
    sign_fault: bool,
}

impl XiTable {
    pub fn new(k: DMatrix<f64>) -> Self {
        assert!(k.is_square(), "K must be square");
        let n = k.nrows();
        let mut memo = HashMap::new();
        memo.insert(vec![0; n], DMatrix::identity(n, n));
        Self {
            zero: DMatrix::zeros(n, n),
            k,
            memo,
            sign_fault: false,
        }
    }

    /// Debug variant whose recursion flips the sign of the first-column term.
    /// Used as a negative control by the verification suite.
    pub fn with_sign_fault(k: DMatrix<f64>) -> Self {
        Self {
            sign_fault: true,
            ..Self::new(k)
        }
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }

    /// `Ξ_ℓ`, zero outside `ℕⁿ`.
    pub fn xi(&mut self, l: &[i64]) -> &DMatrix<f64> {
        assert_eq!(l.len(), self.dim(), "multi-index length must equal n");
        if l.iter().any(|&v| v < 0) {
            return &self.zero;
        }
        if !self.memo.contains_key(l) {
            self.fill(l);
        }
        &self.memo[l]
    }

    /// Stored `Ξ_ℓ` without computing; `None` if not yet memoized.
    pub fn get(&self, l: &[i64]) -> Option<&DMatrix<f64>> {
        if l.iter().any(|&v| v < 0) {
            return Some(&self.zero);
        }
        self.memo.get(l)
    }

    /// Compute every `Ξ_ℓ` with `|ℓ| ≤ max_order`.
    pub fn precompute(&mut self, max_order: usize) {
        for j in 0..=max_order {
            for l in indices_of_order(self.dim(), j) {
                self.xi(&l);
            }
        }
    }

    /// Compute every `Ξ_ℓ` with `τ·ℓ ≤ bound`.
    pub fn precompute_delay_bound(&mut self, delays: &[f64], bound: f64) {
        for l in indices_within(delays, bound) {
            self.xi(&l);
        }
    }

    // Iterative fill in order of increasing |ℓ| over the missing predecessors,
    // so deep indices do not recurse.
    fn fill(&mut self, target: &[i64]) {
        let mut stack = vec![target.to_vec()];
        while let Some(l) = stack.last().cloned() {
            if self.memo.contains_key(&l) {
                stack.pop();
                continue;
            }
            let mut missing = false;
            for k in 0..l.len() {
                if l[k] > 0 {
                    let mut p = l.clone();
                    p[k] -= 1;
                    if !self.memo.contains_key(&p) {
                        stack.push(p);
                        missing = true;
                    }
                }
            }
            if missing {
                continue;
            }
            stack.pop();
            let value = self.step(&l);
            self.memo.insert(l, value);
        }
    }

    // Ξ_ℓ = Σ_k K e_k e_kᵀ Ξ_{ℓ−e_k}
    fn step(&self, l: &[i64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for k in 0..n {
            if l[k] == 0 {
                continue;
            }
            let mut p = l.to_vec();
            p[k] -= 1;
            let prev = &self.memo[&p];
            let sign = if self.sign_fault && k == 0 { -1.0 } else { 1.0 };
            out.ger(sign, &self.k.column(k), &prev.row(k).transpose(), 1.0);
        }
        out
    }
}

/// All `ℓ ∈ ℕⁿ` with `|ℓ| = order`.
pub fn indices_of_order(n: usize, order: usize) -> Vec<Vec<i64>> {
    fn rec(n: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() + 1 == n {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=left).rev() {
            cur.push(v);
            rec(n, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    rec(n, order as i64, &mut Vec::with_capacity(n), &mut out);
    out
}

/// All `ℓ ∈ ℕⁿ` with `τ·ℓ ≤ bound`, in nondecreasing `|ℓ|`.
pub fn indices_within(delays: &[f64], bound: f64) -> Vec<Vec<i64>> {
    fn rec(delays: &[f64], left: f64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        let i = cur.len();
        if i == delays.len() {
            out.push(cur.clone());
            return;
        }
        let mut v = 0;
        while (v as f64) * delays[i] <= left {
            cur.push(v);
            rec(delays, left - v as f64 * delays[i], cur, out);
            cur.pop();
            v += 1;
        }
    }
    let mut out = Vec::new();
    if bound < 0.0 {
        return out;
    }
    rec(
        delays,
        bound,
        &mut Vec::with_capacity(delays.len()),
        &mut out,
    );
    out.sort_by_key(|l| l.iter().sum::<i64>());
    out
}

/// Coefficients `α_k`, `k ∈ {0,1}ⁿ`, of `det(I − K diag(t)) = Σ α_k t^k`.
///
/// Stored by bitmask: bit `i` set means `kᵢ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCoefficients {
    n: usize,
    values: Vec<f64>,
}

impl AlphaCoefficients {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn by_mask(&self, mask: usize) -> f64 {
        self.values[mask]
    }

    pub fn get(&self, k: &[u8]) -> f64 {
        self.values[Self::mask(k)]
    }

    pub fn mask(k: &[u8]) -> usize {
        k.iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| 1usize << i)
            .sum()
    }

    pub fn index(&self, mask: usize) -> Vec<i64> {
        (0..self.n).map(|i| ((mask >> i) & 1) as i64).collect()
    }

    /// `(mask, α)` pairs for every `k ≠ 0`.
    pub fn nonzero_indices(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().copied().enumerate().skip(1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `P(t) = Σ α_k t^k`.
    pub fn eval(&self, t: &[f64]) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(mask, a)| {
                a * (0..self.n)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| t[i])
                    .product::<f64>()
            })
            .sum()
    }
}

pub fn char_coefficients(k: &DMatrix<f64>) -> Result<AlphaCoefficients> {
    char_coefficients_bounded(k, DEFAULT_ALPHA_BOUND)
}

/// `P` is multilinear, so `α` is the Möbius transform of its values at the
/// vertices `χ_S` of the unit cube, where `P(χ_S) = det(I − K_SS)`.
pub fn char_coefficients_bounded(k: &DMatrix<f64>, bound: usize) -> Result<AlphaCoefficients> {
    if !k.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "K is {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    let n = k.nrows();
    if n > bound {
        return Err(Error::TooLarge { n, bound });
    }
    let mut values: Vec<f64> = (0..1usize << n)
        .map(|mask| {
            let idx: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let m = idx.len();
            if m == 0 {
                return 1.0;
            }
            let sub = DMatrix::from_fn(m, m, |r, c| {
                (if r == c { 1.0 } else { 0.0 }) - k[(idx[r], idx[c])]
            });
            sub.lu().determinant()
        })
        .collect();
    for i in 0..n {
        let bit = 1usize << i;
        for mask in 0..values.len() {
            if mask & bit != 0 {
                values[mask] -= values[mask ^ bit];
            }
        }
    }
    values[0] = 1.0;
    Ok(AlphaCoefficients { n, values })
}

/// `‖eⱼᵀ Ξ_ℓ + Σ_{k≠0} α_k eⱼᵀ Ξ_{ℓ−k}‖₂` for eligible `(ℓ, j)` (0-based `j`).
pub fn verify_xi_recurrence(table: &mut XiTable, l: &[i64], j: usize) -> Result<f64> {
    let n = table.dim();
    if l.len() != n || j >= n {
        return Err(Error::DimensionMismatch(format!(
            "index of length {} and row {j} for n = {n}",
            l.len()
        )));
    }
    let eligible =
        l.iter().all(|&v| v >= 0) && (l.iter().copied().max().unwrap_or(0) >= 2 || l[j] == 1);
    if !eligible {
        return Err(Error::IneligibleIndex {
            index: l.to_vec(),
            row: j,
        });
    }
    let alpha = char_coefficients(table.k())?;
    let mut acc = table.xi(l).row(j).into_owned();
    for (mask, a) in alpha.nonzero_indices() {
        if a == 0.0 {
            continue;
        }
        let shifted: Vec<i64> = l
            .iter()
            .enumerate()
            .map(|(i, &v)| v - ((mask >> i) & 1) as i64)
            .collect();
        acc += table.xi(&shifted).row(j) * a;
    }
    Ok(acc.norm())
}

/// Frobenius norm of `(K diag(t))^j − Σ_{|ℓ|=j} Ξ_ℓ t^ℓ`.
pub fn power_sum_check(table: &mut XiTable, t: &[f64], j: usize) -> f64 {
    let n = table.dim();
    assert_eq!(t.len(), n, "t must have length n");
    let kt = table.k() * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(t));
    let lhs = kt.pow(j as u32);
    let mut rhs = DMatrix::zeros(n, n);
    for l in indices_of_order(n, j) {
        let mono: f64 = l.iter().zip(t).map(|(&e, &x)| x.powi(e as i32)).product();
        rhs += table.xi(&l) * mono;
    }
    (lhs - rhs).norm()
}
