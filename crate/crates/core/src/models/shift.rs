//! Right translation on `L²(0, 1)` with a scalar control acting on `[0, 1/4]`.
//!
//! On `m` cells of width `h = 1/m` the semigroup at time `h` moves every cell one
//! step to the right and drops the last one. A control held on `[kh, (k+1)h)`
//! adds `h u_k` to each of the first `m/4` cells, so the control-to-state map is
//! assembled from shifted windows without any matrix exponential.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{pinv, RankPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShiftSystem {
    m: usize,
}

impl ShiftSystem {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m % 4 != 0 {
            return Err(Error::Model(format!("cell count must be a positive multiple of 4, got {m}")));
        }
        Ok(Self { m })
    }

    pub fn cells(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Cell centres.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.m).map(|i| (i as f64 + 0.5) * self.h()).collect()
    }

    /// One-step shift matrix.
    pub fn step_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| if i == j + 1 { 1.0 } else { 0.0 })
    }

    /// Input column: `h` on the first `m/4` cells.
    pub fn input(&self) -> DVector<f64> {
        DVector::from_fn(self.m, |i, _| if i < self.m / 4 { self.h() } else { 0.0 })
    }

    /// Number of steps making up horizon `t`; `t` must be a whole number of cells.
    pub fn steps(&self, t: f64) -> Result<usize> {
        let k = t * self.m as f64;
        let r = k.round();
        if !(t > 0.0) || (k - r).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::Domain(format!(
                "horizon {t} is not a positive multiple of the cell width {}",
                self.h()
            )));
        }
        Ok(r as usize)
    }

    /// Column `k` is the state at time `t` produced by a unit control on step `k`.
    pub fn controllability_map(&self, t: f64) -> Result<DMatrix<f64>> {
        let n = self.steps(t)?;
        let w = self.m / 4;
        let h = self.h();
        Ok(DMatrix::from_fn(self.m, n, |i, k| {
            // the window injected at step k has moved n - 1 - k cells
            let offset = n - 1 - k;
            if i >= offset && i < offset + w {
                h
            } else {
                0.0
            }
        }))
    }

    /// `L²` distance from `target` (cell values) to the states reachable at `t`.
    pub fn reachable_defect(&self, t: f64, target: &DVector<f64>, policy: RankPolicy) -> Result<f64> {
        if target.len() != self.m {
            return Err(Error::Dimension(format!("target has {} samples, mesh has {}", target.len(), self.m)));
        }
        let l = self.controllability_map(t)?;
        let coeffs = pinv(&l, policy) * target;
        let miss = target - l * coeffs;
        Ok(self.h().sqrt() * miss.norm())
    }

    /// `f(s) = min(s, 1/4)` at the cell centres.
    pub fn ramp_target(&self) -> DVector<f64> {
        DVector::from_iterator(self.m, self.grid().into_iter().map(|s| s.min(0.25)))
    }

    /// `L²` norm of the target restricted to `(1/2, 1]`, a lower bound for the
    /// defect at `t = 1/4`.
    pub fn tail_norm(&self, target: &DVector<f64>) -> f64 {
        let tail: f64 = target.iter().skip(self.m / 2).map(|v| v * v).sum();
        (self.h() * tail).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert!(ShiftSystem::new(30).is_err());
        let s = ShiftSystem::new(64).unwrap();
        let p = RankPolicy::default();
        assert_eq!(s.reachable_defect(0.25, &DVector::zeros(64), p).unwrap(), 0.0);
        let f = s.ramp_target();
        let bound = 1.0 / (4.0 * 2f64.sqrt());
        assert!((s.tail_norm(&f) - bound).abs() < 1e-15);
        assert!(s.reachable_defect(0.25, &f, p).unwrap() >= bound);
        assert!(s.reachable_defect(1.0, &f, p).unwrap() < 1e-10);
    }

    #[test]
    fn reachable_states_vanish_past_half() {
        let s = ShiftSystem::new(32).unwrap();
        let l = s.controllability_map(0.25).unwrap();
        for i in 16..32 {
            assert!(l.row(i).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn map_matches_stepping() {
        let s = ShiftSystem::new(16).unwrap();
        let l = s.controllability_map(0.5).unwrap();
        let u: Vec<f64> = (0..8).map(|k| (k as f64).sin()).collect();
        let mut y = DVector::zeros(16);
        for &uk in &u {
            y = s.step_matrix() * y + s.input() * uk;
        }
        assert!((l * DVector::from_vec(u) - y).norm() < 1e-15);
    }
}
