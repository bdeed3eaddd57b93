//! Dense symmetric linear algebra: eigendecomposition, inverse square
//! root, AR(1) covariance construction, Kronecker products.
//!
//! Matrices are stored dense row-major. Everything here targets desk
//! scale (dimensions up to ~1000), where a cyclic Jacobi sweep is simple,
//! portable, and comfortably meets the reconstruction tolerances the rest
//! of the crate relies on.

use crate::error::{Error, Result};

/// Refuse Kronecker products whose output dimension exceeds this.
pub const KRON_DIM_CAP: usize = 2048;

/// A general rectangular matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn identity(dim: usize) -> Self {
        Mat::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * rhs`, plain triple loop in row-major friendly order.
    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = out.row_mut(i);
                for j in 0..rhs.cols {
                    orow[j] += a * rrow[j];
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// A symmetric matrix. The full dense array is stored and the two
/// triangles are kept bit-identical by construction: every mutation path
/// writes both (i, j) and (j, i).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix requires dim >= 1");
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// Build from a generator evaluated on the upper triangle (i <= j)
    /// and mirrored, so symmetry holds exactly as stored.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    /// Build from full rows, requiring symmetry up to `tol` on the input;
    /// the stored matrix mirrors the upper triangle exactly.
    pub fn from_rows(rows: &[Vec<f64>], tol: f64) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    r.len(),
                    dim
                )));
            }
        }
        let mut scale: f64 = 0.0;
        for r in rows {
            for &v in r {
                if !v.is_finite() {
                    return Err(Error::InvalidInput("non-finite entry".into()));
                }
                scale = scale.max(v.abs());
            }
        }
        for i in 0..dim {
            for j in i + 1..dim {
                if (rows[i][j] - rows[j][i]).abs() > tol * scale.max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({}, {})",
                        i, j
                    )));
                }
            }
        }
        Ok(SymMatrix::from_fn(dim, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both (i, j) and (j, i).
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Element-wise infinity norm (largest absolute entry).
    pub fn inf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "cannot add {}x{0} and {}x{1}",
                self.dim, other.dim
            )));
        }
        Ok(SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn as_mat(&self) -> Mat {
        Mat {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Eigendecomposition of a symmetric matrix: `A = V diag(values) V^T`,
/// eigenvalues sorted descending, columns of `vectors` the eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl EigenDecomp {
    /// Rebuild `V f(lambda) V^T` for an arbitrary spectral map, mirrored
    /// so the result is symmetric exactly as stored.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        SymMatrix::from_fn(n, |i, j| {
            let mut s = 0.0;
            for (k, &m) in mapped.iter().enumerate() {
                s += self.vectors.get(i, k) * m * self.vectors.get(j, k);
            }
            s
        })
    }
}

/// AR(1) covariance: entry (i, j) equals `rho^|i-j|`.
pub fn ar1_covariance(dim: usize, rho: f64) -> Result<SymMatrix> {
    if dim < 1 {
        return Err(Error::InvalidParameter(
            "ar1_covariance requires dim >= 1".into(),
        ));
    }
    if !rho.is_finite() || rho.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "ar1_covariance requires |rho| < 1, got {}",
            rho
        )));
    }
    Ok(SymMatrix::from_fn(dim, |i, j| rho.powi((j - i) as i32)))
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The contract is the tolerance, not the algorithm: reconstruction and
/// orthogonality errors stay below 1e-10 relative on well-conditioned
/// input, which Jacobi delivers with margin at these dimensions.
pub fn sym_eigendecomp(a: &SymMatrix) -> Result<EigenDecomp> {
    if !a.is_finite() {
        return Err(Error::InvalidInput(
            "eigendecomposition of non-finite matrix".into(),
        ));
    }
    let n = a.dim;
    let mut m = a.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    if n > 1 {
        let max_sweeps = 100;
        let mut converged = false;
        for sweep in 0..max_sweeps {
            let mut off: f64 = 0.0;
            for p in 0..n - 1 {
                for q in p + 1..n {
                    off += m[p * n + q].abs();
                }
            }
            if off == 0.0 {
                converged = true;
                break;
            }
            // During the first sweeps only rotate the dominant entries.
            let thresh = if sweep < 3 {
                0.2 * off / (n * n) as f64
            } else {
                0.0
            };
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = m[p * n + q];
                    let g = 100.0 * apq.abs();
                    // Skip rotations that cannot change anything at f64 resolution.
                    if sweep >= 4
                        && m[p * n + p].abs() + g == m[p * n + p].abs()
                        && m[q * n + q].abs() + g == m[q * n + q].abs()
                    {
                        m[p * n + q] = 0.0;
                        m[q * n + p] = 0.0;
                        continue;
                    }
                    if apq.abs() <= thresh {
                        continue;
                    }
                    let h = m[q * n + q] - m[p * n + p];
                    let t = if h.abs() + g == h.abs() {
                        apq / h
                    } else {
                        let theta = 0.5 * h / apq;
                        let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                        if theta < 0.0 {
                            t = -t;
                        }
                        t
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);
                    let delta = t * apq;
                    m[p * n + p] -= delta;
                    m[q * n + q] += delta;
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    for r in 0..n {
                        if r == p || r == q {
                            continue;
                        }
                        let arp = m[r * n + p];
                        let arq = m[r * n + q];
                        let nrp = arp - s * (arq + tau * arp);
                        let nrq = arq + s * (arp - tau * arq);
                        m[r * n + p] = nrp;
                        m[p * n + r] = nrp;
                        m[r * n + q] = nrq;
                        m[q * n + r] = nrq;
                    }
                    for r in 0..n {
                        let vrp = v[r * n + p];
                        let vrq = v[r * n + q];
                        v[r * n + p] = vrp - s * (vrq + tau * vrp);
                        v[r * n + q] = vrq + s * (vrp - tau * vrq);
                    }
                }
            }
        }
        if !converged {
            // One final check: accept if the leftover mass is negligible.
            let mut off: f64 = 0.0;
            let mut dmax: f64 = 0.0;
            for p in 0..n {
                dmax = dmax.max(m[p * n + p].abs());
                for q in p + 1..n {
                    off = off.max(m[p * n + q].abs());
                }
            }
            if off > 1e-12 * dmax.max(1.0) {
                return Err(Error::InvalidInput(
                    "jacobi eigendecomposition failed to converge".into(),
                ));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j]
            .partial_cmp(&m[i * n + i])
            .expect("eigenvalues are finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[r * n + order[c]]);
    Ok(EigenDecomp { values, vectors })
}

/// Inverse square root with eigenvalue flooring.
#[derive(Debug, Clone)]
pub struct InvSqrt {
    pub matrix: SymMatrix,
    /// Number of eigenvalues raised to the floor. Nonzero means the input
    /// was (near-)singular and the result is a regularized inverse root.
    pub floored: usize,
}

/// `V diag(max(lambda_i, floor))^{-1/2} V^T`.
///
/// Flooring absorbs near-singularity instead of failing: the caller
/// learns about it through [`InvSqrt::floored`].
pub fn inv_sqrt(a: &SymMatrix, floor: f64) -> Result<InvSqrt> {
    if floor <= 0.0 || !floor.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "inv_sqrt requires floor > 0, got {}",
            floor
        )));
    }
    let eig = sym_eigendecomp(a)?;
    let floored = eig.values.iter().filter(|&&l| l < floor).count();
    let matrix = eig.spectral_map(|l| 1.0 / l.max(floor).sqrt());
    Ok(InvSqrt { matrix, floored })
}

/// Relative eigenvalue floor used wherever an inverse square root of an
/// estimated covariance is taken: `1e-10 * lambda_max`.
pub fn relative_floor(eig_values: &[f64]) -> f64 {
    let lmax = eig_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    if lmax > 0.0 {
        1e-10 * lmax
    } else {
        1e-300
    }
}

/// Matrix square root of a positive semi-definite matrix; negative
/// round-off eigenvalues are clamped to zero.
pub fn sqrt_psd(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigendecomp(a)?;
    Ok(eig.spectral_map(|l| l.max(0.0).sqrt()))
}

/// Inverse of a symmetric positive definite matrix via its spectrum.
pub fn inverse_spd(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigendecomp(a)?;
    if eig.values.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput(
            "matrix is not positive definite, cannot invert".into(),
        ));
    }
    Ok(eig.spectral_map(|l| 1.0 / l))
}

/// Kronecker product of two symmetric matrices: block (i, j) is
/// `a[i][j] * b`. Result dimension is `a.dim * b.dim`.
pub fn kron(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    let dim = a
        .dim
        .checked_mul(b.dim)
        .ok_or_else(|| Error::ResourceLimit("kronecker dimension overflows usize".into()))?;
    if dim > KRON_DIM_CAP {
        return Err(Error::ResourceLimit(format!(
            "kronecker dimension {} exceeds cap {}",
            dim, KRON_DIM_CAP
        )));
    }
    Ok(SymMatrix::from_fn(dim, |r, c| {
        let (ia, ib) = (r / b.dim, r % b.dim);
        let (ja, jb) = (c / b.dim, c % b.dim);
        a.get(ia, ja) * b.get(ib, jb)
    }))
}
