//! Controllability Gramians `Q_t = ∫₀ᵗ e^{rA} BB* e^{rA*} dr` and `Q_∞`.
//!
//! Four constructions are provided and cross-checked against each other:
//! composite Gauss–Legendre quadrature, RK4 integration of the differential
//! Lyapunov equation, the closed form for symmetric `A` commuting with `BB*`,
//! and the algebraic route `Q_t = Q_∞ - e^{tA} Q_∞ e^{tA*}` for stable systems.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, commutes, ensure_finite, expm, max_abs, op_norm, range_inclusion, symmetrize,
    RangeInclusion, RankPolicy, SymmetricPsd,
};
use crate::quadrature::gauss_legendre;

/// `y' = Ay + Bu` on a finite truncation.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    bbt: DMatrix<f64>,
    stability_margin: f64,
    spectral_abscissa: f64,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "B has {} rows but A is {}x{}",
                b.nrows(),
                a.nrows(),
                a.ncols()
            )));
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        let spectral_abscissa = if a.nrows() == 0 {
            f64::NEG_INFINITY
        } else if linalg::is_diagonal(&a) {
            a.diagonal().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        } else {
            a.complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let stability_margin = if spectral_abscissa < 0.0 {
            -spectral_abscissa
        } else {
            0.0
        };
        let bbt = symmetrize(&(&b * b.transpose()));
        Ok(Self {
            a,
            b,
            bbt,
            stability_margin,
            spectral_abscissa,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `BB*`.
    pub fn bbt(&self) -> &DMatrix<f64> {
        &self.bbt
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Largest `ω` with `Re λ(A) <= -ω`; zero when `A` is not stable.
    pub fn stability_margin(&self) -> f64 {
        self.stability_margin
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.spectral_abscissa
    }

    pub fn is_stable(&self) -> bool {
        self.stability_margin > 0.0
    }

    pub fn is_symmetric(&self) -> bool {
        max_abs(&(&self.a - self.a.transpose())) <= 1e-12 * max_abs(&self.a)
    }

    /// Symmetric `A` commuting with `BB*`.
    pub fn is_commuting_symmetric(&self) -> bool {
        self.is_symmetric()
            && (max_abs(&self.bbt) == 0.0 || commutes(&self.a, &self.bbt, 1e-10).unwrap_or(false))
    }

    /// FNV-1a over the bit patterns of `A` and `B`.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for byte in x.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.a.nrows() as u64);
        feed(self.b.ncols() as u64);
        for v in self.a.iter().chain(self.b.iter()) {
            feed(v.to_bits());
        }
        h
    }

    /// Estimates `M` in `|e^{tA}| <= M e^{-ωt}` from samples on `t ∈ [0, 1]`.
    pub fn growth_constant(&self) -> Result<f64> {
        let omega = self.stability_margin;
        let mut m: f64 = 1.0;
        for k in 0..=64 {
            let t = k as f64 / 64.0;
            m = m.max(op_norm(&expm(&self.a, t)?) * (omega * t).exp());
        }
        Ok(m)
    }

    pub fn to_spec(&self) -> LinearSystemSpec {
        LinearSystemSpec {
            a: rows_of(&self.a),
            b: rows_of(&self.b),
        }
    }
}

/// JSON form `{"A": [[...]], "B": [[...]]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LinearSystemSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

impl TryFrom<&LinearSystemSpec> for LinearSystem {
    type Error = Error;

    fn try_from(spec: &LinearSystemSpec) -> Result<Self> {
        let a = matrix_from_rows(&spec.a, "A")?;
        let b = matrix_from_rows(&spec.b, "B")?;
        LinearSystem::new(a, b)
    }
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

impl Horizon {
    pub fn finite(self) -> Option<f64> {
        match self {
            Horizon::Finite(t) => Some(t),
            Horizon::Infinite => None,
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(t) => write!(f, "{t}"),
            Horizon::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianMethod {
    Quadrature,
    LyapunovOde,
    ClosedForm,
    Algebraic,
}

#[derive(Debug, Clone)]
pub struct Gramian {
    q: SymmetricPsd,
    horizon: Horizon,
    system_fingerprint: u64,
    method: GramianMethod,
}

impl Gramian {
    pub fn new(
        q: SymmetricPsd,
        horizon: Horizon,
        system_fingerprint: u64,
        method: GramianMethod,
    ) -> Result<Self> {
        if let Horizon::Finite(t) = horizon {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("horizon must be positive, got {t}")));
            }
        }
        Ok(Self {
            q,
            horizon,
            system_fingerprint,
            method,
        })
    }

    pub fn q(&self) -> &SymmetricPsd {
        &self.q
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.q.matrix()
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn method(&self) -> GramianMethod {
        self.method
    }

    pub fn system_fingerprint(&self) -> u64 {
        self.system_fingerprint
    }

    pub fn to_export(&self) -> GramianExport {
        GramianExport {
            horizon: self.horizon,
            method: self.method,
            system_fingerprint: format!("{:016x}", self.system_fingerprint),
            rank: self.q.rank(),
            matrix: rows_of(self.q.matrix()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramianExport {
    pub horizon: Horizon,
    pub method: GramianMethod,
    pub system_fingerprint: String,
    pub rank: usize,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub nodes_per_panel: usize,
    pub rel_tol: f64,
    pub max_panels: usize,
    pub policy: RankPolicy,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes_per_panel: 8,
            rel_tol: 1e-10,
            max_panels: 1 << 14,
            policy: RankPolicy::default(),
        }
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "horizon must be positive and finite, got {t}"
        )));
    }
    Ok(())
}

/// Raw composite Gauss–Legendre sum with `panels` panels; no refinement.
pub fn quadrature_sum(
    sys: &LinearSystem,
    t: f64,
    nodes_per_panel: usize,
    panels: usize,
) -> Result<DMatrix<f64>> {
    let n = sys.dim();
    let (xs, ws) = gauss_legendre(nodes_per_panel);
    let width = t / panels as f64;
    let half = 0.5 * width;
    // The per-panel integrand sum is the same matrix conjugated by e^{pΔA}.
    let mut panel_sum = DMatrix::zeros(n, n);
    for (x, w) in xs.iter().zip(&ws) {
        let g = expm(sys.a(), half * (1.0 + x))? * sys.b();
        panel_sum += (&g * g.transpose()) * (w * half);
    }
    let step = expm(sys.a(), width)?;
    let mut start = DMatrix::<f64>::identity(n, n);
    let mut total = DMatrix::zeros(n, n);
    for p in 0..panels {
        if p > 0 {
            // re-anchor periodically so repeated products do not drift
            start = if p % 64 == 0 {
                expm(sys.a(), p as f64 * width)?
            } else {
                &start * &step
            };
        }
        total += &start * &panel_sum * start.transpose();
    }
    Ok(symmetrize(&total))
}

/// `Q_t` by composite Gauss–Legendre quadrature with panel doubling.
pub fn gramian_quadrature(sys: &LinearSystem, t: f64, cfg: &QuadratureConfig) -> Result<Gramian> {
    check_horizon(t)?;
    if cfg.nodes_per_panel < 2 {
        return Err(Error::Domain(format!(
            "quadrature needs at least 2 nodes, got {}",
            cfg.nodes_per_panel
        )));
    }
    let mut panels = 1;
    let mut prev = quadrature_sum(sys, t, cfg.nodes_per_panel, panels)?;
    loop {
        if panels >= cfg.max_panels {
            break;
        }
        panels *= 2;
        let next = quadrature_sum(sys, t, cfg.nodes_per_panel, panels)?;
        let scale = max_abs(&next);
        let diff = max_abs(&(&next - &prev));
        prev = next;
        if diff <= cfg.rel_tol * scale {
            break;
        }
    }
    Gramian::new(
        SymmetricPsd::from_symmetrized(&prev, cfg.policy)?,
        Horizon::Finite(t),
        sys.fingerprint(),
        GramianMethod::Quadrature,
    )
}

#[derive(Debug, Clone, Copy)]
pub struct OdeConfig {
    pub rel_tol: f64,
    pub max_steps: usize,
    pub policy: RankPolicy,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_steps: 1 << 22,
            policy: RankPolicy::default(),
        }
    }
}

fn lyapunov_rhs(a: &DMatrix<f64>, bbt: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let aq = a * q;
    &aq + aq.transpose() + bbt
}

fn rk4_lyapunov(sys: &LinearSystem, t: f64, steps: usize) -> DMatrix<f64> {
    let a = sys.a();
    let bbt = sys.bbt();
    let h = t / steps as f64;
    let mut q = DMatrix::zeros(sys.dim(), sys.dim());
    for _ in 0..steps {
        let k1 = lyapunov_rhs(a, bbt, &q);
        let k2 = lyapunov_rhs(a, bbt, &(&q + &k1 * (0.5 * h)));
        let k3 = lyapunov_rhs(a, bbt, &(&q + &k2 * (0.5 * h)));
        let k4 = lyapunov_rhs(a, bbt, &(&q + &k3 * h));
        q += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        q = symmetrize(&q);
    }
    q
}

/// `Q_t` by RK4 on `Q' = AQ + QA* + BB*`, `Q(0) = 0`, halving the step until
/// two successive results agree to `cfg.rel_tol`.
pub fn gramian_lyapunov_ode(sys: &LinearSystem, t: f64, cfg: &OdeConfig) -> Result<Gramian> {
    check_horizon(t)?;
    let anorm = op_norm(sys.a());
    let mut steps = ((t * anorm).ceil() as usize).max(8);
    let mut prev = rk4_lyapunov(sys, t, steps);
    loop {
        if steps * 2 > cfg.max_steps {
            return Err(Error::Stiff {
                spread: eigen_spread(sys),
                max_steps: cfg.max_steps,
            });
        }
        steps *= 2;
        let next = rk4_lyapunov(sys, t, steps);
        let ok = next.iter().all(|v| v.is_finite())
            && max_abs(&(&next - &prev)) <= cfg.rel_tol * max_abs(&next);
        prev = next;
        if ok {
            break;
        }
    }
    Gramian::new(
        SymmetricPsd::from_symmetrized(&prev, cfg.policy)?,
        Horizon::Finite(t),
        sys.fingerprint(),
        GramianMethod::LyapunovOde,
    )
}

fn eigen_spread(sys: &LinearSystem) -> f64 {
    let re: Vec<f64> = sys
        .a()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.abs())
        .collect();
    let hi = re.iter().cloned().fold(0.0, f64::max);
    let lo = re.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Unknown ordering for the packed symmetric Lyapunov solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PackedOrdering {
    /// `(0,0), (0,1), …, (0,n-1), (1,1), …`
    RowMajor,
    /// `(0,0), (0,1), (1,1), (0,2), …`
    ColumnMajor,
}

fn packed_index(n: usize, i: usize, j: usize, ord: PackedOrdering) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match ord {
        PackedOrdering::RowMajor => i * n - i * i.saturating_sub(1) / 2 + (j - i),
        PackedOrdering::ColumnMajor => j * (j + 1) / 2 + i,
    }
}

/// Solves `AQ + QA* + C = 0` for symmetric `Q` as a dense system in the
/// `n(n+1)/2` packed unknowns.
pub fn solve_lyapunov_packed(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    ord: PackedOrdering,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let size = n * (n + 1) / 2;
    let mut lhs = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for i in 0..n {
        for j in i..n {
            let row = packed_index(n, i, j, ord);
            rhs[row] = -c[(i, j)];
            // (AQ)_{ij} = Σ_k A_ik Q_kj ; (QA*)_{ij} = Σ_k Q_ik A_jk
            for k in 0..n {
                lhs[(row, packed_index(n, k, j, ord))] += a[(i, k)];
                lhs[(row, packed_index(n, i, k, ord))] += a[(j, k)];
            }
        }
    }
    let lu = lhs.clone().lu();
    let mut sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("Lyapunov operator is singular".into()))?;
    // one step of iterative refinement
    let resid = &rhs - &lhs * &sol;
    if let Some(corr) = lu.solve(&resid) {
        sol += corr;
    }
    Ok(DMatrix::from_fn(n, n, |i, j| sol[packed_index(n, i, j, ord)]))
}

/// `Q_∞`, the solution of `AQ + QA* + BB* = 0`.
pub fn gramian_infinite(sys: &LinearSystem, policy: RankPolicy) -> Result<Gramian> {
    if !sys.is_stable() {
        return Err(Error::Unstable {
            abscissa: sys.spectral_abscissa(),
        });
    }
    let q = solve_lyapunov_packed(sys.a(), sys.bbt(), PackedOrdering::RowMajor)?;
    Gramian::new(
        SymmetricPsd::from_symmetrized(&q, policy)?,
        Horizon::Infinite,
        sys.fingerprint(),
        GramianMethod::Algebraic,
    )
}

/// `Q_t = Q_∞ - e^{tA} Q_∞ e^{tA*}` for a stable system.
pub fn gramian_algebraic(sys: &LinearSystem, q_inf: &Gramian, t: f64) -> Result<Gramian> {
    check_horizon(t)?;
    if q_inf.system_fingerprint() != sys.fingerprint() || q_inf.horizon() != Horizon::Infinite {
        return Err(Error::Precondition(
            "Q_inf does not belong to this system".into(),
        ));
    }
    let e = expm(sys.a(), t)?;
    let q = q_inf.matrix() - &e * q_inf.matrix() * e.transpose();
    Gramian::new(
        SymmetricPsd::from_symmetrized(&q, q_inf.q().policy())?,
        Horizon::Finite(t),
        sys.fingerprint(),
        GramianMethod::Algebraic,
    )
}

/// `½A⁻¹(e^{2tA} - I)BB*` (or `-½A⁻¹BB*` at `t = ∞`) for symmetric invertible
/// `A` commuting with `BB*`.
pub fn gramian_commuting_closed_form(
    sys: &LinearSystem,
    horizon: Horizon,
    policy: RankPolicy,
) -> Result<Gramian> {
    if !sys.is_commuting_symmetric() {
        return Err(Error::Precondition(
            "closed form needs symmetric A commuting with BB*".into(),
        ));
    }
    let n = sys.dim();
    let lu = sys.a().clone().lu();
    if !lu.is_invertible() {
        return Err(Error::Precondition("closed form needs invertible A".into()));
    }
    let inner = match horizon {
        Horizon::Finite(t) => {
            check_horizon(t)?;
            (expm(sys.a(), 2.0 * t)? - DMatrix::identity(n, n)) * sys.bbt()
        }
        Horizon::Infinite => {
            if !sys.is_stable() {
                return Err(Error::Unstable {
                    abscissa: sys.spectral_abscissa(),
                });
            }
            -sys.bbt()
        }
    };
    let q = lu
        .solve(&inner)
        .ok_or_else(|| Error::Precondition("closed form needs invertible A".into()))?
        * 0.5;
    Gramian::new(
        SymmetricPsd::from_symmetrized(&q, policy)?,
        horizon,
        sys.fingerprint(),
        GramianMethod::ClosedForm,
    )
}

/// Write-once cache of Gramians keyed by horizon, for a single system.
#[derive(Debug)]
pub struct GramianCache {
    sys: LinearSystem,
    q_inf: Option<Gramian>,
    quad: QuadratureConfig,
    entries: RwLock<HashMap<u64, Arc<Gramian>>>,
}

impl GramianCache {
    /// Uses the algebraic route when the system is stable, quadrature otherwise.
    pub fn new(sys: &LinearSystem, quad: QuadratureConfig) -> Result<Self> {
        let q_inf = if sys.is_stable() {
            Some(gramian_infinite(sys, quad.policy)?)
        } else {
            None
        };
        Ok(Self {
            sys: sys.clone(),
            q_inf,
            quad,
            entries: RwLock::new(HashMap::new()),
        })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.sys
    }

    pub fn q_inf(&self) -> Option<&Gramian> {
        self.q_inf.as_ref()
    }

    pub fn get(&self, t: f64) -> Result<Arc<Gramian>> {
        let key = t.to_bits();
        if let Some(g) = self.entries.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(g));
        }
        let g = Arc::new(match &self.q_inf {
            Some(qi) => gramian_algebraic(&self.sys, qi, t)?,
            None => gramian_quadrature(&self.sys, t, &self.quad)?,
        });
        let mut map = self.entries.write().expect("cache lock");
        Ok(Arc::clone(map.entry(key).or_insert(g)))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelViolation {
    pub inner: String,
    pub outer: String,
    pub escape: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelChainReport {
    pub times: Vec<f64>,
    pub kernel_dims: Vec<usize>,
    pub bstar_kernel_dim: usize,
    pub commuting_symmetric: bool,
    /// Only meaningful in the commuting symmetric case.
    pub all_equal: Option<bool>,
    pub violations: Vec<KernelViolation>,
    pub ok: bool,
}

/// Largest escape of an orthonormal basis `inner` from the subspace spanned by
/// orthonormal `outer`, with the worst vector.
fn subspace_escape(inner: &DMatrix<f64>, outer: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let mut worst = 0.0;
    let mut vec = DVector::zeros(inner.nrows());
    for c in inner.column_iter() {
        let c = c.into_owned();
        let proj = outer * (outer.transpose() * &c);
        let e = (&c - proj).norm();
        if e > worst {
            worst = e;
            vec = c;
        }
    }
    (worst, vec)
}

const SUBSPACE_TOL: f64 = 1e-6;

/// Checks `ker Q_t ⊆ ker Q_s ⊆ ker B*` for `s < t` from `times`.
pub fn kernel_chain_check(
    sys: &LinearSystem,
    times: &[f64],
    cfg: &QuadratureConfig,
) -> Result<KernelChainReport> {
    if times.windows(2).any(|w| w[0] >= w[1]) || times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Domain("times must be positive and ascending".into()));
    }
    let kernels: Vec<(String, DMatrix<f64>)> = times
        .iter()
        .map(|&t| {
            gramian_quadrature(sys, t, cfg).map(|g| (format!("ker Q_{t}"), g.q().kernel_basis()))
        })
        .collect::<Result<_>>()?;
    // ker B* = ker BB*
    let bstar_kernel = SymmetricPsd::from_symmetrized(sys.bbt(), cfg.policy)?.kernel_basis();
    let mut violations = Vec::new();
    // chain from the longest horizon down to ker B*
    let mut chain: Vec<&(String, DMatrix<f64>)> = kernels.iter().rev().collect();
    let b_entry = ("ker B*".to_string(), bstar_kernel.clone());
    chain.push(&b_entry);
    for w in chain.windows(2) {
        let (inner_name, inner) = w[0];
        let (outer_name, outer) = w[1];
        let (escape, v) = subspace_escape(inner, outer);
        if escape > SUBSPACE_TOL {
            violations.push(KernelViolation {
                inner: inner_name.clone(),
                outer: outer_name.clone(),
                escape,
                vector: v.iter().cloned().collect(),
            });
        }
    }
    let commuting_symmetric = sys.is_commuting_symmetric();
    let all_equal = if commuting_symmetric {
        let dims_equal = kernels
            .iter()
            .all(|(_, k)| k.ncols() == bstar_kernel.ncols());
        Some(dims_equal && violations.is_empty())
    } else {
        None
    };
    let ok = violations.is_empty() && all_equal.unwrap_or(true);
    Ok(KernelChainReport {
        times: times.to_vec(),
        kernel_dims: kernels.iter().map(|(_, k)| k.ncols()).collect(),
        bstar_kernel_dim: bstar_kernel.ncols(),
        commuting_symmetric,
        all_equal,
        violations,
        ok,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RangeEqualityReport {
    pub t: f64,
    pub t0: f64,
    /// Whether equality is expected at this `t` (`t >= T0`, or the commuting case).
    pub expected: bool,
    /// `R(Q_t^{1/2}) ⊆ R(Q_∞^{1/2})`
    pub finite_in_infinite: RangeInclusion,
    /// `R(Q_∞^{1/2}) ⊆ R(Q_t^{1/2})`
    pub infinite_in_finite: RangeInclusion,
    pub equal: bool,
    pub ok: bool,
}

/// Compares `R(Q_t^{1/2})` with `R(Q_∞^{1/2})`.
pub fn range_equality_check(
    sys: &LinearSystem,
    t: f64,
    t0: f64,
    policy: RankPolicy,
) -> Result<RangeEqualityReport> {
    check_horizon(t)?;
    let q_inf = gramian_infinite(sys, policy)?;
    let q_t = gramian_algebraic(sys, &q_inf, t)?;
    let half_t = q_t.q().sqrt();
    let half_inf = q_inf.q().sqrt();
    let fwd = range_inclusion(half_t.matrix(), half_inf.matrix(), policy)?;
    let bwd = range_inclusion(half_inf.matrix(), half_t.matrix(), policy)?;
    let expected = t >= t0 || sys.is_commuting_symmetric();
    let equal = fwd.included && bwd.included;
    Ok(RangeEqualityReport {
        t,
        t0,
        expected,
        finite_in_infinite: fwd,
        infinite_in_finite: bwd,
        equal,
        // the forward inclusion holds for every t
        ok: fwd.included && (!expected || equal),
    })
}
