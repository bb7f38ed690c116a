//! Dense linear algebra for small symmetric systems, sized for bandit
//! dimensions (d up to a few dozen), plus the incrementally maintained Gram
//! state every policy shares.
//!
//! Design points:
//! - `GramState` keeps V_t = λI + Σ x_s x_sᵀ and its inverse side by side.
//!   The inverse is advanced by rank-one (Sherman–Morrison) updates,
//!       (V + xxᵀ)⁻¹ = V⁻¹ − (V⁻¹x)(V⁻¹x)ᵀ / (1 + xᵀV⁻¹x),
//!   and recomputed from scratch every 64 updates to stop drift.
//! - Eigenvalues come from cyclic Jacobi sweeps. Off-diagonal mass is driven
//!   below 1e-12 (relative to the matrix's Frobenius norm once that exceeds
//!   one, since f64 cannot do better); convergence is quadratic and the sweep
//!   cap is never reached for well-posed inputs.
//! - V_t^{-1/2} is assembled from the eigendecomposition, Q Λ^{-1/2} Qᵀ.
//! - Matrices are symmetrized, (M + Mᵀ)/2, before any decomposition so that
//!   accumulated roundoff cannot masquerade as asymmetry.

use crate::error::{Error, Result};

/// Largest relative asymmetry tolerated before a matrix is rejected.
const SYMMETRY_TOL: f64 = 1e-10;
/// Quadratic forms this far below zero are treated as roundoff and clamped.
const QUADFORM_SLACK: f64 = 1e-12;
/// Full inverse recompute cadence for the Gram state.
const REFRESH_EVERY: usize = 64;
/// Jacobi sweep budget; quadratic convergence makes ~10 sweeps typical.
const MAX_JACOBI_SWEEPS: usize = 50;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

fn check_vector(name: &str, a: &[f64], d: usize) -> Result<()> {
    if a.len() != d {
        return Err(Error::Contract(format!(
            "{name}: expected dimension {d}, got {}",
            a.len()
        )));
    }
    if !all_finite(a) {
        return Err(Error::Contract(format!("{name}: non-finite entry")));
    }
    Ok(())
}

/// General square matrix, row-major. Used for known constraint matrices and
/// eigenvector frames; no symmetry assumed.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    d: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(d: usize) -> Self {
        Matrix { d, data: vec![0.0; d * d] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.data[i * d + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::Contract("matrix: empty row list".into()));
        }
        let mut data = Vec::with_capacity(d * d);
        for row in rows {
            check_vector("matrix row", row, d)?;
            data.extend_from_slice(row);
        }
        Ok(Matrix { d, data })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.d + j] = v;
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d);
        let d = self.d;
        (0..d).map(|i| dot(&self.data[i * d..(i + 1) * d], x)).collect()
    }

    /// Largest singular value, computed as sqrt(λ_max(MᵀM)).
    pub fn spectral_norm(&self) -> Result<f64> {
        let d = self.d;
        let mut gram = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += self.at(k, i) * self.at(k, j);
                }
                gram[i * d + j] = s;
                gram[j * d + i] = s;
            }
        }
        let (eigvals, _) = jacobi_eigen(d, &mut gram, false)?;
        let top = eigvals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(top.max(0.0).sqrt())
    }
}

/// Symmetric positive-definite matrix, row-major. Constructors enforce
/// symmetry to within 1e-10 relative; definiteness is enforced by the
/// operations that rely on it (Cholesky, inverse square root).
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    d: usize,
    data: Vec<f64>,
}

impl SpdMatrix {
    pub fn identity(d: usize) -> Self {
        SpdMatrix { d, data: Matrix::identity(d).data }
    }

    pub fn scaled_identity(d: usize, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Contract(format!("scaled identity: scale {c} not positive")));
        }
        let mut m = Self::identity(d);
        for i in 0..d {
            m.data[i * d + i] = c;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        Self::from_matrix(m)
    }

    fn from_matrix(m: Matrix) -> Result<Self> {
        let scale = m.data.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..m.d {
            for j in (i + 1)..m.d {
                if (m.at(i, j) - m.at(j, i)).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Contract(format!(
                        "symmetric matrix: entries ({i},{j}) and ({j},{i}) disagree beyond tolerance"
                    )));
                }
            }
        }
        Ok(SpdMatrix { d: m.d, data: m.data })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d);
        let d = self.d;
        (0..d).map(|i| dot(&self.data[i * d..(i + 1) * d], x)).collect()
    }

    /// xᵀ M x, exploiting symmetry.
    #[inline]
    pub fn quadform(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            let row = &self.data[i * d..(i + 1) * d];
            s += row[i] * x[i] * x[i];
            let mut cross = 0.0;
            for j in (i + 1)..d {
                cross += row[j] * x[j];
            }
            s += 2.0 * x[i] * cross;
        }
        s
    }

    /// M += scale · xxᵀ.
    fn add_outer(&mut self, x: &[f64], scale: f64) {
        let d = self.d;
        for i in 0..d {
            for j in 0..d {
                self.data[i * d + j] += scale * x[i] * x[j];
            }
        }
    }

    /// (M + Mᵀ)/2 in place; controls drift from repeated rank-one updates.
    fn symmetrize(&mut self) {
        let d = self.d;
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (self.data[i * d + j] + self.data[j * d + i]);
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg;
            }
        }
    }

    pub fn frobenius(&self) -> f64 {
        norm2(&self.data)
    }

    /// Eigendecomposition; eigenvalues ascending, eigenvectors as the
    /// columns of the returned frame.
    pub fn eigen(&self) -> Result<(Vec<f64>, Matrix)> {
        let mut work = self.data.clone();
        symmetrize_raw(self.d, &mut work);
        let (vals, vecs) = jacobi_eigen(self.d, &mut work, true)?;
        Ok((vals, vecs.expect("eigenvectors requested")))
    }

    /// Lower-triangular Cholesky factor; fails on nonpositive pivots.
    fn cholesky(&self) -> Result<Vec<f64>> {
        let d = self.d;
        let mut l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = self.data[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Degenerate(format!(
                            "cholesky: nonpositive pivot {s:e} at index {i}"
                        )));
                    }
                    l[i * d + i] = s.sqrt();
                } else {
                    l[i * d + j] = s / l[j * d + j];
                }
            }
        }
        Ok(l)
    }

    /// Exact inverse via Cholesky; used for the periodic Gram refresh.
    pub fn inverse(&self) -> Result<SpdMatrix> {
        let d = self.d;
        let l = self.cholesky()?;
        let mut inv = vec![0.0; d * d];
        let mut col = vec![0.0; d];
        for c in 0..d {
            // Solve L y = e_c, then Lᵀ z = y.
            col.iter_mut().for_each(|v| *v = 0.0);
            for i in c..d {
                let mut s = if i == c { 1.0 } else { 0.0 };
                for k in c..i {
                    s -= l[i * d + k] * col[k];
                }
                col[i] = s / l[i * d + i];
            }
            for i in (0..d).rev() {
                let mut s = col[i];
                for k in (i + 1)..d {
                    s -= l[k * d + i] * col[k];
                }
                col[i] = s / l[i * d + i];
            }
            for r in 0..d {
                inv[r * d + c] = col[r];
            }
        }
        let mut out = SpdMatrix { d, data: inv };
        out.symmetrize();
        Ok(out)
    }
}

fn symmetrize_raw(d: usize, data: &mut [f64]) {
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (data[i * d + j] + data[j * d + i]);
            data[i * d + j] = avg;
            data[j * d + i] = avg;
        }
    }
}

fn off_diag_frobenius(d: usize, data: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += data[i * d + j] * data[i * d + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi on a symmetric buffer (destroyed in place). Returns
/// eigenvalues ascending and, when requested, the accumulated rotation frame
/// whose columns are the matching eigenvectors.
fn jacobi_eigen(
    d: usize,
    a: &mut [f64],
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<Matrix>)> {
    if d == 1 {
        let vals = vec![a[0]];
        let vecs = want_vectors.then(|| Matrix::identity(1));
        return Ok((vals, vecs));
    }
    let mut q = want_vectors.then(|| Matrix::identity(d));
    let tol = 1e-12 * norm2(a).max(1.0);
    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        if off_diag_frobenius(d, a) <= tol {
            converged = true;
            break;
        }
        for p in 0..d {
            for r in (p + 1)..d {
                let apr = a[p * d + r];
                if apr == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let arr = a[r * d + r];
                let theta = (arr - app) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akr = a[k * d + r];
                    a[k * d + p] = c * akp - s * akr;
                    a[k * d + r] = s * akp + c * akr;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let ark = a[r * d + k];
                    a[p * d + k] = c * apk - s * ark;
                    a[r * d + k] = s * apk + c * ark;
                }
                // Zero the pivot pair exactly; roundoff otherwise lingers.
                a[p * d + r] = 0.0;
                a[r * d + p] = 0.0;
                if let Some(frame) = q.as_mut() {
                    for k in 0..d {
                        let qkp = frame.at(k, p);
                        let qkr = frame.at(k, r);
                        frame.set(k, p, c * qkp - s * qkr);
                        frame.set(k, r, s * qkp + c * qkr);
                    }
                }
            }
        }
    }
    if !converged && off_diag_frobenius(d, a) > tol {
        return Err(Error::Degenerate(format!(
            "jacobi: off-diagonal mass {:e} after {MAX_JACOBI_SWEEPS} sweeps",
            off_diag_frobenius(d, a)
        )));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[i * d + i].partial_cmp(&a[j * d + j]).expect("finite eigenvalues"));
    let vals: Vec<f64> = order.iter().map(|&i| a[i * d + i]).collect();
    let vecs = q.map(|frame| {
        let mut sorted = Matrix::zeros(d);
        for (new_col, &old_col) in order.iter().enumerate() {
            for k in 0..d {
                sorted.set(k, new_col, frame.at(k, old_col));
            }
        }
        sorted
    });
    Ok((vals, vecs))
}

/// √(xᵀ M x). Roundoff-negative radicands down to −1e-12 clamp to zero;
/// anything lower means M was not positive semidefinite.
pub fn weighted_norm(m: &SpdMatrix, x: &[f64]) -> Result<f64> {
    check_vector("weighted_norm input", x, m.dim())?;
    let q = m.quadform(x);
    if q < -QUADFORM_SLACK {
        return Err(Error::Degenerate(format!(
            "weighted_norm: quadratic form {q:e} below roundoff slack"
        )));
    }
    Ok(q.max(0.0).sqrt())
}

/// Smallest eigenvalue via Jacobi.
pub fn min_eigenvalue(m: &SpdMatrix) -> Result<f64> {
    let mut work = m.data.clone();
    symmetrize_raw(m.d, &mut work);
    let (vals, _) = jacobi_eigen(m.d, &mut work, false)?;
    Ok(vals[0])
}

/// M^{-1/2} = Q Λ^{-1/2} Qᵀ; requires strictly positive eigenvalues.
pub fn inv_sqrt(m: &SpdMatrix) -> Result<SpdMatrix> {
    let d = m.dim();
    let (vals, vecs) = m.eigen()?;
    if vals[0] <= 0.0 {
        return Err(Error::Degenerate(format!(
            "inv_sqrt: nonpositive eigenvalue {:e}",
            vals[0]
        )));
    }
    let inv_roots: Vec<f64> = vals.iter().map(|&l| 1.0 / l.sqrt()).collect();
    let mut out = SpdMatrix { d, data: vec![0.0; d * d] };
    for i in 0..d {
        for j in i..d {
            let mut s = 0.0;
            for k in 0..d {
                s += vecs.at(i, k) * inv_roots[k] * vecs.at(j, k);
            }
            out.data[i * d + j] = s;
            out.data[j * d + i] = s;
        }
    }
    Ok(out)
}

/// Which regression target an observation feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Reward,
    Constraint,
}

/// Regularized design state shared by every policy: the Gram matrix
/// V = λI + Σ x_s x_sᵀ, its tracked inverse, and the moment vector(s)
/// b = Σ y_s x_s (plus a constraint-channel twin when that feedback exists).
#[derive(Clone, Debug)]
pub struct GramState {
    v: SpdMatrix,
    v_inv: SpdMatrix,
    b_reward: Vec<f64>,
    b_constraint: Option<Vec<f64>>,
    count: usize,
    regularizer: f64,
}

impl GramState {
    /// Fresh state at V = λI. `track_constraint` allocates the second moment
    /// vector for policies that learn a separate constraint parameter.
    pub fn new(d: usize, regularizer: f64, track_constraint: bool) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("gram state: dimension must be positive".into()));
        }
        if !(regularizer.is_finite() && regularizer > 0.0) {
            return Err(Error::Config(format!(
                "gram state: regularizer {regularizer} must be positive"
            )));
        }
        Ok(GramState {
            v: SpdMatrix::scaled_identity(d, regularizer)?,
            v_inv: SpdMatrix::scaled_identity(d, 1.0 / regularizer)?,
            b_reward: vec![0.0; d],
            b_constraint: track_constraint.then(|| vec![0.0; d]),
            count: 0,
            regularizer,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn regularizer(&self) -> f64 {
        self.regularizer
    }

    pub fn v(&self) -> &SpdMatrix {
        &self.v
    }

    pub fn v_inv(&self) -> &SpdMatrix {
        &self.v_inv
    }

    pub fn b_reward(&self) -> &[f64] {
        &self.b_reward
    }

    pub fn b_constraint(&self) -> Option<&[f64]> {
        self.b_constraint.as_deref()
    }

    pub fn tracks_constraint(&self) -> bool {
        self.b_constraint.is_some()
    }

    /// Absorb one observation: V += xxᵀ, b += y·x (and the constraint twin
    /// when tracked, which then requires `w`). The inverse advances by
    /// Sherman–Morrison and is rebuilt exactly every 64 updates.
    pub fn update(&mut self, x: &[f64], y: f64, w: Option<f64>) -> Result<()> {
        let d = self.dim();
        check_vector("gram update action", x, d)?;
        if !y.is_finite() {
            return Err(Error::Contract(format!("gram update: non-finite reward {y}")));
        }
        if self.b_constraint.is_some() && w.is_none() {
            return Err(Error::MissingFeedback(
                "constraint channel is tracked but no constraint observation was supplied",
            ));
        }
        if let Some(wv) = w {
            if !wv.is_finite() {
                return Err(Error::Contract(format!(
                    "gram update: non-finite constraint observation {wv}"
                )));
            }
        }
        let vx = self.v_inv.mat_vec(x);
        let denom = 1.0 + dot(x, &vx);
        if denom <= 1e-14 {
            return Err(Error::Degenerate(format!(
                "rank-one update: denominator {denom:e} vanished"
            )));
        }
        self.v.add_outer(x, 1.0);
        for i in 0..d {
            self.b_reward[i] += y * x[i];
        }
        if let (Some(bc), Some(wv)) = (self.b_constraint.as_mut(), w) {
            for i in 0..d {
                bc[i] += wv * x[i];
            }
        }
        self.count += 1;
        if self.count % REFRESH_EVERY == 0 {
            self.v_inv = self.v.inverse()?;
        } else {
            self.v_inv.add_outer(&vx, -1.0 / denom);
            self.v_inv.symmetrize();
        }
        Ok(())
    }
}
