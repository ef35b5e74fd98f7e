//! Minimum-energy steering from the origin.
//!
//! The state runs on `[-t, 0]` with `y(-t) = 0`, so
//! `y(0) = ∫_{-t}^0 e^{-rA} B u(r) dr`. The minimal energy `½∫|u|²` to reach `x`
//! is `½|Q_t^{-1/2} x|²`, attained by `û(r) = B* e^{-rA*} Q_t^{-1} x`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramian::{Gramian, GramianCache, Horizon, LinearSystem, QuadratureConfig};
use crate::linalg::{self, expm, max_abs, op_norm, pinv, range_inclusion, RankPolicy, SymmetricPsd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReachabilityClass {
    InRangeQ,
    InRangeQhalfOnly,
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reachability {
    pub class: ReachabilityClass,
    /// Distance from the target to `R(Q_t^{1/2})`.
    pub defect: f64,
}

fn membership_tol(policy: RankPolicy, x: &DVector<f64>) -> f64 {
    policy.inclusion_tol() * x.norm()
}

fn check_len(q: &SymmetricPsd, x: &DVector<f64>) -> Result<()> {
    if q.dim() != x.len() {
        return Err(Error::Dimension(format!(
            "target has length {} but the Gramian is {}x{}",
            x.len(),
            q.dim(),
            q.dim()
        )));
    }
    Ok(())
}

/// Decides whether `x` lies in `R(Q_t)`, only in `R(Q_t^{1/2})`, or in neither.
///
/// On a finite truncation the two ranges coincide numerically, so the middle
/// class is only produced when the two projections disagree.
pub fn classify_target(qt: &Gramian, x: &DVector<f64>) -> Result<Reachability> {
    let q = qt.q();
    check_len(q, x)?;
    let tol = membership_tol(q.policy(), x);
    let defect_full = q.range_defect(x);
    let defect_half = q.sqrt().range_defect(x);
    let class = if defect_full <= tol {
        ReachabilityClass::InRangeQ
    } else if defect_half <= tol {
        ReachabilityClass::InRangeQhalfOnly
    } else {
        ReachabilityClass::Unreachable
    };
    Ok(Reachability {
        class,
        defect: defect_half,
    })
}

/// `V(t, x) = ½|Q_t^{-1/2} x|²`.
pub fn value_function(qt: &Gramian, x: &DVector<f64>) -> Result<f64> {
    let r = classify_target(qt, x)?;
    if r.class == ReachabilityClass::Unreachable {
        return Err(Error::Unreachable { defect: r.defect });
    }
    let z = qt.q().pinv_sqrt() * x;
    Ok(0.5 * z.norm_squared())
}

/// `½⟨Q_t⁺ x, x⟩`, the second form of the value function on `R(Q_t)`.
pub fn value_function_quadratic(qt: &Gramian, x: &DVector<f64>) -> Result<f64> {
    let r = classify_target(qt, x)?;
    if r.class != ReachabilityClass::InRangeQ {
        return Err(Error::Unreachable { defect: r.defect });
    }
    Ok(0.5 * x.dot(&(qt.q().pinv() * x)))
}

/// Control samples on an ascending grid spanning `[-t, 0]`, linearly
/// interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    grid: Vec<f64>,
    values: Vec<DVector<f64>>,
}

impl ControlSignal {
    pub fn new(grid: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        validate_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} control values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        let m = values.first().map_or(0, |v| v.len());
        if values.iter().any(|v| v.len() != m) {
            return Err(Error::Dimension("control values have mixed lengths".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        -self.grid[0]
    }

    /// `½∫|u|²` by the trapezoid rule on the grid.
    pub fn energy(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v.norm_squared()).collect();
        0.5 * self
            .grid
            .windows(2)
            .zip(sq.windows(2))
            .map(|(g, s)| 0.5 * (g[1] - g[0]) * (s[0] + s[1]))
            .sum::<f64>()
    }

    pub fn eval(&self, r: f64) -> DVector<f64> {
        let k = match self.grid.binary_search_by(|g| g.total_cmp(&r)) {
            Ok(k) => return self.values[k].clone(),
            Err(k) => k.clamp(1, self.grid.len() - 1),
        };
        let (r0, r1) = (self.grid[k - 1], self.grid[k]);
        let w = ((r - r0) / (r1 - r0)).clamp(0.0, 1.0);
        &self.values[k - 1] * (1.0 - w) + &self.values[k] * w
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Domain("grid needs at least two nodes".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("grid must be strictly ascending".into()));
    }
    if *grid.last().unwrap() != 0.0 || !(grid[0] < 0.0) {
        return Err(Error::Domain("grid must run from -t to 0".into()));
    }
    Ok(())
}

/// `k` equally spaced nodes from `-t` to `0`.
pub fn uniform_grid(t: f64, k: usize) -> Vec<f64> {
    let k = k.max(2);
    let mut g: Vec<f64> = (0..k)
        .map(|i| -t + t * i as f64 / (k - 1) as f64)
        .collect();
    g[0] = -t;
    g[k - 1] = 0.0;
    g
}

fn require_in_range_q(qt: &Gramian, x: &DVector<f64>) -> Result<()> {
    let r = classify_target(qt, x)?;
    if r.class != ReachabilityClass::InRangeQ {
        let defect = if r.class == ReachabilityClass::Unreachable {
            r.defect
        } else {
            qt.q().range_defect(x)
        };
        return Err(Error::Unreachable { defect });
    }
    Ok(())
}

/// `û(r) = B* e^{-rA*} Q_t⁺ x` sampled on `grid`.
pub fn optimal_control(
    sys: &LinearSystem,
    qt: &Gramian,
    x: &DVector<f64>,
    grid: &[f64],
) -> Result<ControlSignal> {
    validate_grid(grid)?;
    require_in_range_q(qt, x)?;
    let z = qt.q().pinv() * x;
    let at = sys.a().transpose();
    let bt = sys.b().transpose();
    let values = grid
        .iter()
        .map(|&r| Ok(&bt * (expm(&at, -r)? * &z)))
        .collect::<Result<Vec<_>>>()?;
    ControlSignal::new(grid.to_vec(), values)
}

/// `ŷ(r) = Q_{t+r} e^{-rA*} Q_t⁺ x` on `grid`; `Q_{t+r}` comes from `cache`.
pub fn optimal_trajectory(
    cache: &GramianCache,
    x: &DVector<f64>,
    t: f64,
    grid: &[f64],
) -> Result<Vec<DVector<f64>>> {
    validate_grid(grid)?;
    let qt = cache.get(t)?;
    require_in_range_q(&qt, x)?;
    let z = qt.q().pinv() * x;
    let at = cache.system().a().transpose();
    grid.iter()
        .map(|&r| {
            let s = t + r;
            if s <= 0.0 {
                return Ok(DVector::zeros(x.len()));
            }
            let qs = cache.get(s)?;
            Ok(qs.matrix() * (expm(&at, -r)? * &z))
        })
        .collect()
}

/// Integrates `y' = Ay + Bu` from `y(grid[0]) = 0` with the piecewise-linear
/// control, exactly on each interval (first-order hold).
pub fn simulate(sys: &LinearSystem, u: &ControlSignal) -> Result<Vec<DVector<f64>>> {
    let n = sys.dim();
    let m = sys.inputs();
    let mut y = DVector::zeros(n);
    let mut out = vec![y.clone()];
    let mut cached: Option<(f64, DMatrix<f64>)> = None;
    for k in 0..u.grid.len() - 1 {
        let h = u.grid[k + 1] - u.grid[k];
        let e = match &cached {
            Some((hh, e)) if *hh == h => e.clone(),
            _ => {
                let mut f = DMatrix::zeros(n + 2 * m, n + 2 * m);
                f.view_mut((0, 0), (n, n)).copy_from(sys.a());
                f.view_mut((0, n), (n, m)).copy_from(sys.b());
                f.view_mut((n, n + m), (m, m))
                    .copy_from(&DMatrix::identity(m, m));
                let e = expm(&f, h)?;
                cached = Some((h, e.clone()));
                e
            }
        };
        let phi = e.view((0, 0), (n, n));
        let g1 = e.view((0, n), (n, m));
        let g2 = e.view((0, n + m), (n, m));
        let slope = (&u.values[k + 1] - &u.values[k]) / h;
        y = phi * &y + g1 * &u.values[k] + g2 * slope;
        out.push(y.clone());
    }
    Ok(out)
}

/// Feedback gain `B* Q_s⁺` at elapsed horizon `s` (or `B* Q_∞⁺`).
pub fn feedback_gain(cache: &GramianCache, s: Horizon) -> Result<DMatrix<f64>> {
    let bt = cache.system().b().transpose();
    match s {
        Horizon::Finite(s) => {
            if !(s > 0.0) {
                return Err(Error::Domain(format!("feedback horizon must be positive, got {s}")));
            }
            Ok(bt * cache.get(s)?.q().pinv())
        }
        Horizon::Infinite => {
            let qi = cache.q_inf().ok_or(Error::Unstable {
                abscissa: cache.system().spectral_abscissa(),
            })?;
            Ok(bt * qi.q().pinv())
        }
    }
}

/// Closed-loop generator `A + BB* Q_s⁺` of the backward feedback loop.
pub fn closed_loop_matrix(cache: &GramianCache, s: Horizon) -> Result<DMatrix<f64>> {
    let k = feedback_gain(cache, s)?;
    Ok(cache.system().a() + cache.system().b() * k)
}

/// Least-norm oracle over piecewise-constant controls on `n_steps` intervals.
///
/// The control-to-endpoint map is assembled from exact per-interval integrals of
/// the matrix exponential. Unknowns are scaled by `√h` so the Euclidean norm is
/// the continuous `L²` norm.
#[derive(Debug, Clone)]
pub struct BruteForceSolver {
    t: f64,
    n_steps: usize,
    inputs: usize,
    map: DMatrix<f64>,
    map_pinv: DMatrix<f64>,
    policy: RankPolicy,
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub energy: f64,
    /// Control value on each interval, earliest first.
    pub controls: Vec<DVector<f64>>,
    /// Scaled unknowns `√h · u`.
    pub scaled: DVector<f64>,
}

impl BruteForceSolver {
    pub fn new(sys: &LinearSystem, t: f64, n_steps: usize, policy: RankPolicy) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {t}")));
        }
        if n_steps == 0 {
            return Err(Error::Domain("need at least one step".into()));
        }
        let n = sys.dim();
        let m = sys.inputs();
        let h = t / n_steps as f64;
        // ∫₀ʰ e^{-sA} ds from the augmented exponential
        let mut aug = DMatrix::zeros(2 * n, 2 * n);
        aug.view_mut((0, 0), (n, n)).copy_from(&(-sys.a()));
        aug.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
        let integral = expm(&aug, h)?.view((0, n), (n, n)).into_owned();
        let block = integral * sys.b() / h.sqrt();
        let step = expm(sys.a(), h)?;
        let mut map = DMatrix::zeros(n, m * n_steps);
        // interval k starts at r_k = -t + kh; its block is e^{(t - kh)A} ∫₀ʰ e^{-sA} ds B
        let mut prop = step.clone();
        for k in (0..n_steps).rev() {
            map.view_mut((0, k * m), (n, m)).copy_from(&(&prop * &block));
            if k > 0 {
                prop = if (n_steps - k) % 128 == 0 {
                    expm(sys.a(), t - (k - 1) as f64 * h)?
                } else {
                    &step * &prop
                };
            }
        }
        let map_pinv = pinv(&map, policy);
        Ok(Self {
            t,
            n_steps,
            inputs: m,
            map,
            map_pinv,
            policy,
        })
    }

    pub fn map(&self) -> &DMatrix<f64> {
        &self.map
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Kernel projector `I - L⁺L` of the scaled control map.
    pub fn kernel_projector(&self) -> DMatrix<f64> {
        let k = self.map.ncols();
        DMatrix::identity(k, k) - &self.map_pinv * &self.map
    }

    pub fn solve(&self, x: &DVector<f64>) -> Result<BruteForceResult> {
        if x.len() != self.map.nrows() {
            return Err(Error::Dimension(format!(
                "target has length {}, system has dimension {}",
                x.len(),
                self.map.nrows()
            )));
        }
        let v = &self.map_pinv * x;
        let miss = (&self.map * &v - x).norm();
        if miss > membership_tol(self.policy, x) {
            return Err(Error::Unreachable { defect: miss });
        }
        let h = self.t / self.n_steps as f64;
        let controls = (0..self.n_steps)
            .map(|k| v.rows(k * self.inputs, self.inputs).into_owned() / h.sqrt())
            .collect();
        Ok(BruteForceResult {
            energy: 0.5 * v.norm_squared(),
            controls,
            scaled: v,
        })
    }
}

pub fn brute_force_min_energy(
    sys: &LinearSystem,
    x: &DVector<f64>,
    t: f64,
    n_steps: usize,
    policy: RankPolicy,
) -> Result<BruteForceResult> {
    BruteForceSolver::new(sys, t, n_steps, policy)?.solve(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullControllability {
    pub satisfied: bool,
    /// Smallest `c` with `|e^{T0 A*} x|² <= c ⟨Q_{T0} x, x⟩`; infinite when unsatisfied.
    pub constant: f64,
    pub defect: f64,
}

/// Tests `R(e^{T0 A}) ⊆ R(Q_{T0}^{1/2})`.
pub fn null_controllability_test(
    sys: &LinearSystem,
    t0: f64,
    cfg: &QuadratureConfig,
) -> Result<NullControllability> {
    if !(t0 > 0.0) {
        return Err(Error::Domain(format!("T0 must be positive, got {t0}")));
    }
    let q = crate::gramian::gramian_quadrature(sys, t0, cfg)?;
    let e = expm(sys.a(), t0)?;
    null_controllability_from(&e, q.q(), cfg.policy)
}

pub fn null_controllability_from(
    semigroup: &DMatrix<f64>,
    q: &SymmetricPsd,
    policy: RankPolicy,
) -> Result<NullControllability> {
    let inc = range_inclusion(semigroup, q.sqrt().matrix(), policy)?;
    Ok(NullControllability {
        satisfied: inc.included,
        constant: inc.constant_k * inc.constant_k,
        defect: inc.defect,
    })
}

/// The space `H = R(Q_∞^{1/2})` with `⟨x, y⟩_H = ⟨Q_∞^{-1/2}x, Q_∞^{-1/2}y⟩`.
///
/// Operators on `H` are stored as matrices acting on `X` coordinates.
#[derive(Debug, Clone)]
pub struct HGeometry {
    q_inf: Gramian,
    sqrt: SymmetricPsd,
    pinv_sqrt: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl HGeometry {
    pub fn new(q_inf: Gramian) -> Result<Self> {
        if q_inf.horizon() != Horizon::Infinite {
            return Err(Error::Precondition("H needs the infinite-horizon Gramian".into()));
        }
        let sqrt = q_inf.q().sqrt();
        let pinv_sqrt = q_inf.q().pinv_sqrt();
        let pinv = q_inf.q().pinv();
        Ok(Self {
            q_inf,
            sqrt,
            pinv_sqrt,
            pinv,
        })
    }

    pub fn q_inf(&self) -> &Gramian {
        &self.q_inf
    }

    pub fn sqrt(&self) -> &SymmetricPsd {
        &self.sqrt
    }

    pub fn pinv_sqrt(&self) -> &DMatrix<f64> {
        &self.pinv_sqrt
    }

    /// `Q_∞⁺`.
    pub fn q_inf_pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn dim(&self) -> usize {
        self.pinv.nrows()
    }

    /// Orthonormal basis of `H` in `X` coordinates (`Q_∞^{1/2}` applied to an
    /// orthonormal basis of `R(Q_∞)`).
    pub fn h_orthonormal_basis(&self) -> DMatrix<f64> {
        self.sqrt.matrix() * self.q_inf.q().range_basis()
    }

    pub fn defect(&self, x: &DVector<f64>) -> f64 {
        self.q_inf.q().range_defect(x)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.defect(x) <= membership_tol(self.q_inf.q().policy(), x)
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (&self.pinv_sqrt * x).dot(&(&self.pinv_sqrt * y))
    }

    pub fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "vector of length {} in H of ambient dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.contains(x) {
            return Err(Error::NotInH {
                defect: self.defect(x),
            });
        }
        Ok((&self.pinv_sqrt * x).norm())
    }

    /// Matrix of `T` in an `H`-orthonormal frame: `Q_∞^{-1/2} T Q_∞^{1/2}`.
    pub fn to_h_coords(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        &self.pinv_sqrt * t * self.sqrt.matrix()
    }

    /// `H`-adjoint `Q_∞ T* Q_∞⁺` (restricted to `H`).
    pub fn adjoint(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        self.q_inf.matrix() * t.transpose() * &self.pinv
    }

    pub fn op_norm(&self, t: &DMatrix<f64>) -> f64 {
        op_norm(&self.to_h_coords(t))
    }

    /// Largest `|⟨Tx,y⟩_H - ⟨x,Ty⟩_H|` over an `H`-orthonormal frame.
    pub fn asymmetry(&self, t: &DMatrix<f64>) -> f64 {
        let m = self.to_h_coords(t);
        max_abs(&(&m - m.transpose()))
    }

    /// Smallest eigenvalue of the symmetric part of `T` in `H`.
    pub fn min_eigenvalue(&self, t: &DMatrix<f64>) -> f64 {
        let m = linalg::symmetrize(&self.to_h_coords(t));
        let basis = self.q_inf.q().range_basis();
        // restrict to H so the kernel of Q_∞ does not contribute zeros
        let r = basis.transpose() * m * &basis;
        if r.is_empty() {
            return 0.0;
        }
        r.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn h_norm(geom: &HGeometry, x: &DVector<f64>) -> Result<f64> {
    geom.norm(x)
}
