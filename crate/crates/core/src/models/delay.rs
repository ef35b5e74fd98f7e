//! Scalar delay equation `x'(t) = a0 x(t) + a1 x(t - d) + b0 u(t)` on the state
//! space `R × L²(-d, 0)`.
//!
//! The history segment is discretized by cell averages on a uniform mesh. A state
//! `(x0, x1)` has coordinates `(x0, √h · mean of x1 on each cell)`, which makes
//! the Euclidean inner product the product-space inner product for
//! piecewise-constant histories.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::energy::{null_controllability_from, NullControllability};
use crate::error::{Error, Result};
use crate::gramian::{Gramian, GramianMethod, Horizon};
use crate::linalg::{RankPolicy, SymmetricPsd};
use crate::quadrature::gauss_legendre;

/// Coarsest admissible mesh.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelaySystem {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub d: f64,
    pub cells: usize,
}

/// Polynomial coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn integral(&self) -> Poly {
        let mut c = vec![0.0];
        c.extend(self.0.iter().enumerate().map(|(k, a)| a / (k as f64 + 1.0)));
        Poly(c)
    }
}

/// `g(t) = x(t; (1, 0))`, stored as `g(kd + τ) = e^{a0 (kd + τ)} p_k(τ)` for
/// `τ ∈ [0, d]`.
#[derive(Debug, Clone, Serialize)]
pub struct FundamentalSolution {
    a0: f64,
    d: f64,
    segments: Vec<Poly>,
    /// `∫₀^{kd} g` for each segment start.
    #[serde(skip)]
    cumulative: Vec<f64>,
    #[serde(skip)]
    rule: (Vec<f64>, Vec<f64>),
}

impl FundamentalSolution {
    /// Method of steps up to time `horizon`.
    ///
    /// Writing `x = e^{a0 t} y` turns the equation into
    /// `y'(t) = a1 e^{-a0 d} y(t - d)`, so each segment is the running integral
    /// of the previous one.
    pub fn new(a0: f64, a1: f64, d: f64, horizon: f64) -> Result<Self> {
        if !(d > 0.0) || !horizon.is_finite() || horizon < 0.0 {
            return Err(Error::Domain(format!("need d > 0 and a finite horizon >= 0, got d = {d}, t = {horizon}")));
        }
        let count = (horizon / d).floor() as usize + 2;
        let c = a1 * (-a0 * d).exp();
        let mut segments = vec![Poly(vec![1.0])];
        while segments.len() < count {
            let prev = segments.last().unwrap();
            let mut next = prev.integral();
            for v in next.0.iter_mut() {
                *v *= c;
            }
            next.0[0] = prev.eval(d);
            segments.push(next);
        }
        let mut sol = Self {
            a0,
            d,
            segments,
            cumulative: vec![0.0],
            rule: gauss_legendre(16),
        };
        for k in 0..count - 1 {
            let start = k as f64 * sol.d;
            let piece = integrate(&sol.rule, start, start + sol.d, |s| sol.eval(s));
            let last = *sol.cumulative.last().unwrap();
            sol.cumulative.push(last + piece);
        }
        Ok(sol)
    }

    pub fn segments(&self) -> &[Poly] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        (self.segments.len() - 1) as f64 * self.d
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let k = ((t / self.d).floor() as usize).min(self.segments.len() - 1);
        (k, t - k as f64 * self.d)
    }

    /// `g(t)`, zero for `t < 0`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let (k, tau) = self.locate(t);
        (self.a0 * t).exp() * self.segments[k].eval(tau)
    }

    /// `∫₀ᵗ g`, zero for `t <= 0`.
    pub fn antiderivative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (k, _) = self.locate(t);
        let k = k.min(self.cumulative.len() - 1);
        let start = k as f64 * self.d;
        self.cumulative[k] + integrate(&self.rule, start, t, |s| self.eval(s))
    }

    /// Mean of `g` over `[u, u + h]`.
    pub fn mean(&self, u: f64, h: f64) -> f64 {
        (self.antiderivative(u + h) - self.antiderivative(u)) / h
    }
}

fn integrate(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * half * f(mid + half * x)).sum()
}

/// Gauss–Legendre on `[a, b]` split at every multiple of `h`.
fn integrate_split(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, h: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    let mut lo = a;
    while lo < b {
        let k = (lo / h).floor() + 1.0;
        let mut hi = (k * h).min(b);
        if hi - lo <= 1e-14 * h {
            hi = ((k + 1.0) * h).min(b);
        }
        total += integrate(rule, lo, hi, &f);
        lo = hi;
    }
    total
}

impl DelaySystem {
    pub fn new(a0: f64, a1: f64, b0: f64, d: f64, cells: usize) -> Result<Self> {
        if [a0, a1, b0, d].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("delay coefficients"));
        }
        if a1 == 0.0 || b0 == 0.0 {
            return Err(Error::Model("a1 and b0 must be nonzero".into()));
        }
        if !(d > 0.0) {
            return Err(Error::Model(format!("delay must be positive, got {d}")));
        }
        let sys = Self { a0, a1, b0, d, cells };
        sys.check_mesh()?;
        Ok(sys)
    }

    pub fn with_cells(&self, cells: usize) -> Result<Self> {
        Self::new(self.a0, self.a1, self.b0, self.d, cells)
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        self.d / self.cells as f64
    }

    pub fn dim(&self) -> usize {
        self.cells + 1
    }

    /// The mesh must have at least [`MIN_CELLS`] cells and resolve the fastest
    /// rate `|a0| + |a1|` within one cell.
    fn check_mesh(&self) -> Result<()> {
        if self.cells < MIN_CELLS {
            return Err(Error::Resolution(format!(
                "{} cells on [-d, 0]; need at least {MIN_CELLS}",
                self.cells
            )));
        }
        let rate = self.a0.abs() + self.a1.abs();
        if rate * self.h() > 1.0 {
            return Err(Error::Resolution(format!(
                "cell width {} exceeds 1/(|a0| + |a1|) = {}",
                self.h(),
                1.0 / rate
            )));
        }
        Ok(())
    }

    pub fn fundamental(&self, t: f64) -> Result<FundamentalSolution> {
        FundamentalSolution::new(self.a0, self.a1, self.d, t + self.d)
    }

    /// Left end of cell `i` in `[-d, 0]`.
    fn theta(&self, i: usize) -> f64 {
        -self.d + i as f64 * self.h()
    }

    /// Coordinates of `e^{rA} B 1 / b0 = (g(r), g(r + ·))`.
    fn impulse(&self, g: &FundamentalSolution, r: f64) -> DVector<f64> {
        let h = self.h();
        let sh = h.sqrt();
        let mut w = DVector::zeros(self.dim());
        w[0] = g.eval(r);
        for i in 0..self.cells {
            w[i + 1] = sh * g.mean(r + self.theta(i), h);
        }
        w
    }

    /// `Q_t = b0² ∫₀ᵗ w(r) w(r)ᵀ dr` with Gauss–Legendre panels of one cell
    /// width, aligned so no kink of the integrand falls inside a panel.
    pub fn gramian(&self, t: f64, policy: RankPolicy) -> Result<Gramian> {
        let q = self.gramian_matrix(t)?;
        Gramian::new(
            SymmetricPsd::from_symmetrized(&q, policy)?,
            Horizon::Finite(t),
            self.fingerprint(),
            GramianMethod::Quadrature,
        )
    }

    pub fn gramian_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {t}")));
        }
        let g = self.fundamental(t)?;
        let rule = gauss_legendre(8);
        let n = self.dim();
        let mut q = DMatrix::zeros(n, n);
        let h = self.h();
        let mut lo = 0.0;
        while lo < t {
            let hi = (lo + h).min(t);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, wt) in rule.0.iter().zip(&rule.1) {
                let w = self.impulse(&g, mid + half * x);
                q.ger(wt * half, &w, &w, 1.0);
            }
            lo = hi;
            if t - lo <= 1e-14 * t {
                break;
            }
        }
        Ok(q * (self.b0 * self.b0))
    }

    /// `⟨Q_t e_0, z⟩` through the adjoint substitution: the history is reflected
    /// and divided by `a1`, then propagated as a free solution.
    pub fn gramian_row0_adjoint(&self, t: f64, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::Dimension(format!("vector of length {}, mesh has {}", z.len(), self.dim())));
        }
        let g = self.fundamental(t)?;
        let flipped: Vec<f64> = (0..self.cells)
            .map(|i| z[self.cells - i] / self.a1)
            .collect();
        let mut y = DVector::zeros(self.dim());
        y[0] = z[0];
        for (i, v) in flipped.iter().enumerate() {
            y[i + 1] = *v;
        }
        let rule = gauss_legendre(8);
        let h = self.h();
        let integral = integrate_split(&rule, 0.0, t, h, |s| g.eval(s) * self.free_solution(&g, &y, s));
        Ok(self.b0 * self.b0 * integral)
    }

    /// `x(s)` for `s >= 0` from the state with coordinates `y`:
    /// `g(s) y0 + a1 ∫ g(s - d - θ) y1(θ) dθ`.
    pub fn free_solution(&self, g: &FundamentalSolution, y: &DVector<f64>, s: f64) -> f64 {
        let h = self.h();
        let sh = h.sqrt();
        let mut x = g.eval(s) * y[0];
        for i in 0..self.cells {
            let th = self.theta(i);
            // ∫_{θ_i}^{θ_i + h} g(s - d - θ) dθ
            let cell = g.antiderivative(s - self.d - th) - g.antiderivative(s - self.d - th - h);
            x += self.a1 * cell * y[i + 1] / sh;
        }
        x
    }

    /// State at time `s` started from the unit coordinate vector of history
    /// cell `i` (history value `1/√h` on that cell).
    fn history_response(&self, g: &FundamentalSolution, i: usize, s: f64) -> f64 {
        let h = self.h();
        let th = self.theta(i);
        if s >= 0.0 {
            let u = s - self.d - th;
            self.a1 * (g.antiderivative(u) - g.antiderivative(u - h)) / h.sqrt()
        } else if s >= th && s < th + h {
            1.0 / h.sqrt()
        } else {
            0.0
        }
    }

    /// Matrix of `e^{tA}` on the mesh: each basis state is propagated exactly
    /// and re-averaged over the cells.
    ///
    /// The history block depends only on `j - i`, so one entry per diagonal is
    /// computed.
    pub fn semigroup(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be non-negative, got {t}")));
        }
        let g = self.fundamental(t)?;
        let n = self.dim();
        let m = self.cells;
        let h = self.h();
        let sh = h.sqrt();
        let rule = gauss_legendre(8);
        let cell_mean = |j: usize, f: &dyn Fn(f64) -> f64| {
            let a = t + self.theta(j);
            integrate_split(&rule, a, a + h, h, f) / sh
        };
        let mut out = DMatrix::zeros(n, n);
        out[(0, 0)] = g.eval(t);
        for j in 0..m {
            out[(j + 1, 0)] = cell_mean(j, &|s| g.eval(s));
        }
        for i in 0..m {
            out[(0, i + 1)] = if t > 0.0 {
                self.history_response(&g, i, t)
            } else {
                0.0
            };
        }
        for k in -(m as isize - 1)..=(m as isize - 1) {
            let i = (-k).max(0) as usize;
            let j = (i as isize + k) as usize;
            let v = cell_mean(j, &|s| self.history_response(&g, i, s));
            let mut i = i;
            let mut j = j;
            while i < m && j < m {
                out[(j + 1, i + 1)] = v;
                i += 1;
                j += 1;
            }
        }
        Ok(out)
    }

    /// Largest relative violation of `x1(0) = x0` over the columns of `Q_t`,
    /// reading the history at the boundary as the last cell value.
    pub fn boundary_residual(&self, q: &DMatrix<f64>) -> f64 {
        let sh = self.h().sqrt();
        q.column_iter()
            .map(|c| {
                let norm = c.norm();
                if norm == 0.0 {
                    0.0
                } else {
                    (c[0] - c[self.cells] / sh).abs() / norm
                }
            })
            .fold(0.0, f64::max)
    }

    /// Mesh coordinates of the state `(f0, f1)`, using cell means of `f1`.
    pub fn project(&self, f0: f64, f1: impl Fn(f64) -> f64) -> DVector<f64> {
        let h = self.h();
        let rule = gauss_legendre(8);
        let mut z = DVector::zeros(self.dim());
        z[0] = f0;
        for i in 0..self.cells {
            let a = self.theta(i);
            z[i + 1] = integrate(&rule, a, a + h, &f1) / h.sqrt();
        }
        z
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in [self.a0, self.a1, self.b0, self.d, self.cells as f64] {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DelayNullControllability {
    pub t0: f64,
    pub cells: usize,
    pub result: NullControllability,
    /// Whether `T0 > d`, the threshold past which the test should succeed.
    pub past_threshold: bool,
}

/// `R(e^{T0 A}) ⊆ R(Q_{T0}^{1/2})` on the mesh.
pub fn delay_null_controllability(
    sys: &DelaySystem,
    t0: f64,
    policy: RankPolicy,
) -> Result<DelayNullControllability> {
    let q = sys.gramian(t0, policy)?;
    let s = sys.semigroup(t0)?;
    Ok(DelayNullControllability {
        t0,
        cells: sys.cells,
        result: null_controllability_from(&s, q.q(), policy)?,
        past_threshold: t0 > sys.d,
    })
}
