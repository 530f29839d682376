//! Oracles shared by the integration tests.

use std::collections::HashMap;

use hypctl_core::{BoundaryState, ControlSignal, DifferenceSystem};

/// Straight recursion `yᵢ(t) = Σⱼ Kᵢⱼ yⱼ(t − τⱼ) + (Bu)ᵢ(t)` memoized on the
/// number of steps taken along each delay.
pub struct Descent<'a> {
    sys: &'a DifferenceSystem,
    phi: &'a BoundaryState,
    u: &'a ControlSignal,
    memo: HashMap<(usize, Vec<i64>), f64>,
    t0: f64,
}

impl<'a> Descent<'a> {
    pub fn new(
        sys: &'a DifferenceSystem,
        phi: &'a BoundaryState,
        u: &'a ControlSignal,
        t0: f64,
    ) -> Self {
        Self {
            sys,
            phi,
            u,
            memo: HashMap::new(),
            t0,
        }
    }

    pub fn value(&mut self, i: usize, steps: Vec<i64>) -> f64 {
        if let Some(&v) = self.memo.get(&(i, steps.clone())) {
            return v;
        }
        let shift: f64 = steps
            .iter()
            .zip(self.sys.delays())
            .map(|(&s, &d)| s as f64 * d)
            .sum();
        let t = self.t0 - shift;
        let v = if t < 0.0 {
            self.phi.eval(i, t)
        } else {
            let mut acc = 0.0;
            for j in 0..self.sys.dim() {
                let kij = self.sys.k()[(i, j)];
                if kij != 0.0 {
                    let mut next = steps.clone();
                    next[j] += 1;
                    acc += kij * self.value(j, next);
                }
            }
            for r in 0..self.sys.inputs() {
                acc += self.sys.b()[(i, r)] * self.u.eval(r, t);
            }
            acc
        };
        self.memo.insert((i, steps), v);
        v
    }
}

pub fn descent(
    sys: &DifferenceSystem,
    phi: &BoundaryState,
    u: &ControlSignal,
    i: usize,
    t: f64,
) -> f64 {
    Descent::new(sys, phi, u, t).value(i, vec![0; sys.dim()])
}
