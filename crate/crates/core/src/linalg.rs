//! Dense operator algebra on finite truncations.
//!
//! Everything here is a pure function of its inputs. Rank decisions go through a
//! [`RankPolicy`], which is always relative to the largest singular value.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative rank cutoff: singular values `σ <= rel_threshold * σ_max` count as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    rel_threshold: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self { rel_threshold: 1e-10 }
    }
}

impl RankPolicy {
    pub fn new(rel_threshold: f64) -> Result<Self> {
        if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
            return Err(Error::Domain(format!(
                "rank threshold must lie in (0, 1), got {rel_threshold}"
            )));
        }
        Ok(Self { rel_threshold })
    }

    pub fn rel_threshold(&self) -> f64 {
        self.rel_threshold
    }

    /// Relative defect below which a range inclusion is accepted.
    pub fn inclusion_tol(&self) -> f64 {
        self.rel_threshold.sqrt()
    }

    fn cutoff(&self, largest: f64) -> f64 {
        self.rel_threshold * largest
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Thin singular value decomposition `m = u diag(s) v_t`, values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// Singular value decomposition through the symmetric eigenproblem of
/// `[[0, M], [M*, 0]]`, whose eigenpairs are `±σ` with vectors `[u; ±v]/√2`.
///
/// nalgebra's bidiagonal SVD occasionally returns factors that do not
/// reconstruct the input on rank-deficient matrices; its symmetric solver does
/// not have that problem. Singular vectors belonging to zero singular values
/// are not meaningful and callers never use them. Rectangular inputs are first
/// reduced to a square triangular factor by QR.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    // the eigensolver misbehaves on tiny entries, so work at unit scale
    let scale = m.amax();
    if scale > 0.0 && scale.is_finite() && scale != 1.0 {
        let mut out = svd_unit(&(m / scale));
        out.singular_values *= scale;
        return out;
    }
    svd_unit(m)
}

fn svd_unit(m: &DMatrix<f64>) -> Svd {
    let out = svd_eigen(m);
    let finite = |x: &DMatrix<f64>| x.iter().all(|v| v.is_finite());
    if out.singular_values.iter().all(|v| v.is_finite()) && finite(&out.u) && finite(&out.v_t) {
        out
    } else {
        jacobi_svd(m)
    }
}

/// One-sided Jacobi: slower, but immune to the eigensolver's breakdown on
/// entries spanning hundreds of orders of magnitude.
fn jacobi_svd(m: &DMatrix<f64>) -> Svd {
    if m.ncols() > m.nrows() {
        let t = jacobi_svd(&m.transpose());
        return Svd {
            u: t.v_t.transpose(),
            singular_values: t.singular_values,
            v_t: t.u.transpose(),
        };
    }
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, k) in [(&mut a, rows), (&mut v, cols)] {
                    for i in 0..k {
                        let (xp, xq) = (x[(i, p)], x[(i, q)]);
                        x[(i, p)] = c * xp - s * xq;
                        x[(i, q)] = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let mut u = DMatrix::zeros(rows, cols);
    let mut v_t = DMatrix::zeros(cols, cols);
    let mut sv = DVector::zeros(cols);
    for (c, &j) in order.iter().enumerate() {
        sv[c] = norms[j];
        if norms[j] > 0.0 {
            u.set_column(c, &(a.column(j) / norms[j]));
        }
        v_t.set_row(c, &v.column(j).transpose());
    }
    Svd {
        u,
        singular_values: sv,
        v_t,
    }
}

fn svd_eigen(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(rows, 0),
            singular_values: DVector::zeros(0),
            v_t: DMatrix::zeros(0, cols),
        };
    }
    if cols > rows {
        // M = Rᵀ Qᵀ with Mᵀ = QR
        let qr = m.transpose().qr();
        let inner = square_svd(&qr.r().transpose());
        let v_t = &inner.v_t * qr.q().transpose();
        return Svd { v_t, ..inner };
    }
    if rows > cols {
        let qr = m.clone().qr();
        let inner = square_svd(&qr.r());
        let u = qr.q() * &inner.u;
        return Svd { u, ..inner };
    }
    square_svd(m)
}

fn square_svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows;
    let n = rows + cols;
    let mut j = DMatrix::zeros(n, n);
    j.view_mut((0, rows), (rows, cols)).copy_from(m);
    j.view_mut((rows, 0), (cols, rows)).copy_from(&m.transpose());
    let eig = j.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = DMatrix::zeros(rows, k);
    let mut v_t = DMatrix::zeros(k, cols);
    let mut sv = DVector::zeros(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        sv[c] = eig.eigenvalues[idx].max(0.0);
        let w = eig.eigenvectors.column(idx);
        let x = w.rows(0, rows).into_owned();
        let y = w.rows(rows, cols).into_owned();
        let (nx, ny) = (x.norm(), y.norm());
        if nx > 0.0 {
            u.set_column(c, &(x / nx));
        }
        if ny > 0.0 {
            v_t.set_row(c, &(y / ny).transpose());
        }
    }
    Svd {
        u,
        singular_values: sv,
        v_t,
    }
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    svd(m).singular_values
}

/// Smallest singular value (`+∞` for an empty matrix).
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).iter().fold(0.0_f64, |a, &b| a.max(b))
}

pub fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && m.iter()
            .enumerate()
            .all(|(k, v)| *v == 0.0 || k % m.nrows() == k / m.nrows())
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// `e^{tA}` by scaling and squaring with the degree-13 Padé approximant.
///
/// Diagonal inputs take an exact path, which also makes negative `t` meaningful
/// there. For general `A` a negative `t` is evaluated all the same; it is the
/// caller's business whether the backward flow means anything.
pub fn expm(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expm needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if t == 0.0 || n == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    if is_diagonal(a) {
        return Ok(DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            (0..n).map(|i| (a[(i, i)] * t).exp()),
        )));
    }
    let mut x = a * t;
    let norm = one_norm(&x);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    if squarings > 0 {
        x /= 2f64.powi(squarings);
    }

    let id = DMatrix::<f64>::identity(n, n);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let b = &PADE13;
    let u_inner = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9]);
    let u = &x * (u_inner + &x6 * b[7] + &x4 * b[5] + &x2 * b[3] + &id * b[1]);
    let v_inner = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8]);
    let v = v_inner + &x6 * b[6] + &x4 * b[4] + &x2 * b[2] + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Domain("Padé denominator is singular".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Moore–Penrose pseudoinverse under `policy`. A rank-zero input yields zero.
pub fn pinv(m: &DMatrix<f64>, policy: RankPolicy) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return DMatrix::zeros(cols, rows);
    }
    let svd = svd(m);
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return DMatrix::zeros(cols, rows);
    }
    let cut = policy.cutoff(smax);
    let (u, vt) = (&svd.u, &svd.v_t);
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// Orthonormal basis of the numerical range of `m` (columns).
pub fn range_basis(m: &DMatrix<f64>, policy: RankPolicy) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.is_empty() {
        return DMatrix::zeros(rows, 0);
    }
    let svd = svd(m);
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cut = policy.cutoff(smax);
    let u = svd.u;
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax > 0.0 && s > cut)
        .map(|(k, _)| k)
        .collect();
    DMatrix::from_fn(rows, keep.len(), |i, j| u[(i, keep[j])])
}

/// Orthogonal projector onto the numerical range of `m`.
pub fn range_projector(m: &DMatrix<f64>, policy: RankPolicy) -> DMatrix<f64> {
    let basis = range_basis(m, policy);
    &basis * basis.transpose()
}

pub fn numerical_rank(m: &DMatrix<f64>, policy: RankPolicy) -> usize {
    range_basis(m, policy).ncols()
}

/// Symmetric positive semidefinite matrix with its eigendecomposition computed
/// once at construction.
///
/// Eigenvalues in `[-rel·λ_max, rel·λ_max]` are set to zero; anything more
/// negative is rejected.
#[derive(Debug, Clone)]
pub struct SymmetricPsd {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    policy: RankPolicy,
}

impl SymmetricPsd {
    pub fn new(m: DMatrix<f64>, policy: RankPolicy) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "PSD matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        ensure_finite(&m, "symmetric PSD matrix")?;
        let scale = max_abs(&m);
        let asym = max_abs(&(&m - m.transpose()));
        let sym_tol = 1e-12 * scale;
        if asym > sym_tol {
            return Err(Error::NotSymmetric {
                asymmetry: asym,
                tolerance: sym_tol,
            });
        }
        let m = symmetrize(&m);
        let eig = SymmetricEigen::new(m.clone());
        let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
        let cut = policy.cutoff(lmax);
        let mut eigenvalues = eig.eigenvalues.clone();
        for v in eigenvalues.iter_mut() {
            if *v < -cut {
                return Err(Error::NotPsd {
                    eigenvalue: *v,
                    tolerance: cut,
                });
            }
            if *v <= cut {
                *v = 0.0;
            }
        }
        let eigenvectors = eig.eigenvectors;
        let matrix = rebuild(&eigenvectors, &eigenvalues);
        Ok(Self {
            matrix,
            eigenvalues,
            eigenvectors,
            policy,
        })
    }

    /// Symmetrizes before validating; for matrices produced by quadrature or
    /// solves whose asymmetry is pure roundoff.
    pub fn from_symmetrized(m: &DMatrix<f64>, policy: RankPolicy) -> Result<Self> {
        Self::new(symmetrize(m), policy)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn policy(&self) -> RankPolicy {
        self.policy
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b))
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().filter(|&&v| v > 0.0).count()
    }

    fn select(&self, keep: impl Fn(f64) -> bool) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&k| keep(self.eigenvalues[k]))
            .collect();
        DMatrix::from_fn(self.dim(), idx.len(), |i, j| self.eigenvectors[(i, idx[j])])
    }

    pub fn range_basis(&self) -> DMatrix<f64> {
        self.select(|v| v > 0.0)
    }

    pub fn kernel_basis(&self) -> DMatrix<f64> {
        self.select(|v| v == 0.0)
    }

    pub fn range_projector(&self) -> DMatrix<f64> {
        let b = self.range_basis();
        &b * b.transpose()
    }

    /// `f` applied to the nonzero eigenvalues, zero on the kernel.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mapped = self
            .eigenvalues
            .map(|v| if v > 0.0 { f(v) } else { 0.0 });
        rebuild(&self.eigenvectors, &mapped)
    }

    /// Square root sharing this matrix's kernel.
    pub fn sqrt(&self) -> SymmetricPsd {
        let eigenvalues = self.eigenvalues.map(f64::sqrt);
        SymmetricPsd {
            matrix: rebuild(&self.eigenvectors, &eigenvalues),
            eigenvalues,
            eigenvectors: self.eigenvectors.clone(),
            policy: self.policy,
        }
    }

    pub fn pinv(&self) -> DMatrix<f64> {
        self.spectral_map(|v| 1.0 / v)
    }

    pub fn pinv_sqrt(&self) -> DMatrix<f64> {
        self.spectral_map(|v| 1.0 / v.sqrt())
    }

    /// Distance from `x` to the range.
    pub fn range_defect(&self, x: &DVector<f64>) -> f64 {
        let b = self.range_basis();
        let proj = &b * (b.transpose() * x);
        (x - proj).norm()
    }
}

fn rebuild(vectors: &DMatrix<f64>, values: &DVector<f64>) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
        vectors[(i, j)] * values[j]
    });
    symmetrize(&(scaled * vectors.transpose()))
}

/// Principal square root of a PSD matrix, with the kernel of `m` preserved.
pub fn psd_sqrt(m: &SymmetricPsd) -> SymmetricPsd {
    m.sqrt()
}

/// `max|AK - KA| <= tol · max|A| · max|K|`.
pub fn commutes(a: &DMatrix<f64>, k: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if !a.is_square() || !k.is_square() || a.nrows() != k.nrows() {
        return Err(Error::Dimension(format!(
            "commutator needs equal square matrices, got {:?} and {:?}",
            a.shape(),
            k.shape()
        )));
    }
    let comm = a * k - k * a;
    Ok(max_abs(&comm) <= tol * max_abs(a) * max_abs(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeInclusion {
    pub included: bool,
    /// Smallest `k` with `|A1* x| <= k |A2* x|`; infinite when not included.
    pub constant_k: f64,
    /// `|(I - Π_{R(A2)}) A1|`, relative to `|A1|`.
    pub defect: f64,
}

/// Tests `R(A1) ⊆ R(A2)`.
///
/// The constant is the norm of the minimal-norm factor `C = A2⁺A1`, for which
/// `A1 = A2 C` whenever the inclusion holds.
pub fn range_inclusion(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    policy: RankPolicy,
) -> Result<RangeInclusion> {
    if a1.nrows() != a2.nrows() {
        return Err(Error::Dimension(format!(
            "range inclusion needs equal row counts, got {} and {}",
            a1.nrows(),
            a2.nrows()
        )));
    }
    let norm_a1 = op_norm(a1);
    if norm_a1 == 0.0 {
        return Ok(RangeInclusion {
            included: true,
            constant_k: 0.0,
            defect: 0.0,
        });
    }
    let proj = range_projector(a2, policy);
    let escape = a1 - &proj * a1;
    let defect = op_norm(&escape) / norm_a1;
    let included = defect <= policy.inclusion_tol();
    let constant_k = if included {
        op_norm(&(pinv(a2, policy) * a1))
    } else {
        f64::INFINITY
    };
    Ok(RangeInclusion {
        included,
        constant_k,
        defect,
    })
}

/// `A2⁺A1` for commuting `A1`, `A2` with `R(A1) ⊆ R(A2)`; on `R(A2)` this agrees
/// with `A1 A2⁺`.
pub fn commuting_pinv_compose(
    a1: &DMatrix<f64>,
    a2: &SymmetricPsd,
    policy: RankPolicy,
) -> Result<DMatrix<f64>> {
    let m2 = a2.matrix();
    if !commutes(a1, m2, 1e-9)? {
        return Err(Error::Precondition("A1 and A2 do not commute".into()));
    }
    let inc = range_inclusion(a1, m2, policy)?;
    if !inc.included {
        return Err(Error::Precondition(format!(
            "range of A1 escapes range of A2 (defect {:e})",
            inc.defect
        )));
    }
    Ok(a2.pinv() * a1)
}
