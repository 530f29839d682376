//! Commensurable delays: reduction to a single-delay system and the Kalman
//! rank test.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::system::DifferenceSystem;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_DENOMINATOR: u64 = 1000;
/// Cap on the augmented dimension `Σ τᵢ / base`.
pub const DEFAULT_MAX_DIM: usize = 512;

/// Common base `b` with `τᵢ = mᵢ b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Commensurability {
    pub base: f64,
    pub multiples: Vec<u64>,
}

impl Commensurability {
    pub fn total(&self) -> u64 {
        self.multiples.iter().sum()
    }
}

/// Best rational approximation `p/q` of `x > 0` with `|x − p/q| ≤ tol·x` and
/// `q ≤ max_den`, by continued fractions.
pub fn rational_approx(x: f64, tol: f64, max_den: u64) -> Option<(u64, u64)> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a > 1e15 {
            break;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (x - h1 as f64 / k1 as f64).abs() <= tol * x {
            return Some((h1, k1));
        }
        let frac = r - a as f64;
        if frac <= 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Detect a common base of the delays.
pub fn detect_commensurable(delays: &[f64], tol: f64, max_den: u64) -> Option<Commensurability> {
    let first = *delays.first()?;
    let mut fracs = Vec::with_capacity(delays.len());
    let mut lcm: u64 = 1;
    for &t in delays {
        let (p, q) = rational_approx(t / first, tol, max_den)?;
        lcm = lcm.checked_mul(q / gcd(lcm, q))?;
        fracs.push((p, q));
    }
    let multiples: Vec<u64> = fracs.iter().map(|&(p, q)| p * (lcm / q)).collect();
    let g = multiples.iter().copied().fold(0, gcd);
    let multiples: Vec<u64> = multiples.iter().map(|m| m / g).collect();
    let base = first / multiples[0] as f64;
    let ok = delays
        .iter()
        .zip(&multiples)
        .all(|(t, &m)| (m as f64 * base - t).abs() <= tol * t.max(1.0) * 10.0);
    ok.then_some(Commensurability { base, multiples })
}

/// Single-delay system `z(t) = Ã z(t − b) + B̃ u(t)` of dimension `Σ mᵢ`.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    structure: Commensurability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KalmanVerdict {
    pub rank: usize,
    pub dim: usize,
    pub controllable: bool,
}

pub fn commensurable_reduce(sys: &DifferenceSystem, tol: f64) -> Result<AugmentedSystem> {
    commensurable_reduce_with(sys, tol, DEFAULT_MAX_DENOMINATOR, DEFAULT_MAX_DIM)
}

pub fn commensurable_reduce_with(
    sys: &DifferenceSystem,
    tol: f64,
    max_den: u64,
    max_dim: usize,
) -> Result<AugmentedSystem> {
    let structure =
        detect_commensurable(sys.delays(), tol, max_den).ok_or(Error::NotCommensurable { tol })?;
    let d = structure.total() as usize;
    if d > max_dim {
        return Err(Error::TooLarge {
            n: d,
            bound: max_dim,
        });
    }
    let n = sys.dim();
    let m = sys.inputs();
    // Block k holds y_k(t − b), …, y_k(t − m_k b).
    let offsets: Vec<usize> = structure
        .multiples
        .iter()
        .scan(0usize, |acc, &mk| {
            let o = *acc;
            *acc += mk as usize;
            Some(o)
        })
        .collect();
    let last = |l: usize| offsets[l] + structure.multiples[l] as usize - 1;
    let mut a = DMatrix::zeros(d, d);
    let mut b = DMatrix::zeros(d, m);
    for k in 0..n {
        let row = offsets[k];
        for l in 0..n {
            a[(row, last(l))] += sys.k()[(k, l)];
        }
        for r in 0..m {
            b[(row, r)] = sys.b()[(k, r)];
        }
        for i in 1..structure.multiples[k] as usize {
            a[(row + i, row + i - 1)] = 1.0;
        }
    }
    Ok(AugmentedSystem { a, b, structure })
}

impl AugmentedSystem {
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn base(&self) -> f64 {
        self.structure.base
    }

    pub fn multiples(&self) -> &[u64] {
        &self.structure.multiples
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `[B̃, ÃB̃, …, Ã^{d−1}B̃]`.
    pub fn kalman_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let m = self.b.ncols();
        let mut out = DMatrix::zeros(d, d * m);
        let mut block = self.b.clone();
        for k in 0..d {
            out.columns_mut(k * m, m).copy_from(&block);
            block = &self.a * block;
        }
        out
    }

    /// Rank of the Kalman matrix, computed as the dimension of the Krylov
    /// space with orthonormalized iterates so that powers of `Ã` never form.
    pub fn kalman(&self) -> KalmanVerdict {
        let d = self.dim();
        let scale = spectral_norm(&self.a).max(1.0);
        let bscale = spectral_norm(&self.b);
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let tol = 1e-10 * d as f64;
        let mut frontier: Vec<DVector<f64>> = self
            .b
            .column_iter()
            .map(|c| c.into_owned() / bscale.max(f64::MIN_POSITIVE))
            .collect();
        while !frontier.is_empty() && basis.len() < d {
            let mut added = Vec::new();
            for mut v in frontier {
                let before = v.norm();
                if before == 0.0 {
                    continue;
                }
                for _ in 0..2 {
                    for q in &basis {
                        let c = q.dot(&v);
                        v.axpy(-c, q, 1.0);
                    }
                }
                if v.norm() > tol {
                    let v = v.normalize();
                    basis.push(v.clone());
                    added.push(v);
                }
            }
            frontier = added.into_iter().map(|v| &self.a * v / scale).collect();
        }
        let rank = basis.len();
        KalmanVerdict {
            rank,
            dim: d,
            controllable: rank == d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continued_fractions() {
        assert_eq!(rational_approx(1.5, 1e-9, 1000), Some((3, 2)));
        assert_eq!(rational_approx(2.0, 1e-9, 1000), Some((2, 1)));
        assert_eq!(rational_approx(2f64.sqrt(), 1e-9, 1000), None);
    }

    #[test]
    fn detection() {
        let c = detect_commensurable(&[2.0, 1.0], 1e-9, 1000).unwrap();
        assert_eq!(c.multiples, vec![2, 1]);
        assert!((c.base - 1.0).abs() < 1e-15);
        let c = detect_commensurable(&[0.6, 0.4, 1.0], 1e-9, 1000).unwrap();
        assert_eq!(c.multiples, vec![3, 2, 5]);
        assert!(detect_commensurable(&[1.0, 2f64.sqrt()], 1e-9, 1000).is_none());
    }

    fn swap_sys(delays: Vec<f64>) -> DifferenceSystem {
        DifferenceSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            delays,
        )
        .unwrap()
    }

    #[test]
    fn equal_delays_kalman() {
        let aug = commensurable_reduce(&swap_sys(vec![1.0, 1.0]), 1e-9).unwrap();
        assert_eq!(aug.dim(), 2);
        assert_eq!(aug.base(), 1.0);
        let kv = aug.kalman();
        assert_eq!((kv.rank, kv.controllable), (2, true));
        assert_eq!(crate::linalg::rank(&aug.kalman_matrix()), 2);
    }

    #[test]
    fn augmented_size() {
        let aug = commensurable_reduce(&swap_sys(vec![2.0, 1.0]), 1e-9).unwrap();
        assert_eq!(aug.dim(), 3);
        assert!(matches!(
            commensurable_reduce(&swap_sys(vec![1.0, 2f64.sqrt()]), 1e-9),
            Err(Error::NotCommensurable { .. })
        ));
    }

    #[test]
    fn uncontrollable_kalman() {
        let sys = DifferenceSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            vec![1.0, 1.0],
        )
        .unwrap();
        let kv = commensurable_reduce(&sys, 1e-9).unwrap().kalman();
        assert_eq!((kv.rank, kv.controllable), (1, false));
    }
}
