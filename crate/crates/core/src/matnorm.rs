//! Sampling from matrix-normal laws with separable covariance, and the
//! ground-truth spatial precision models used by the simulation harness.

use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, sqrt_psd, sym_eigendecomp, Mat, SymMatrix};
use crate::rng::Rng;

/// A matrix-normal law defined by its spatial and temporal covariance
/// pair, with the corresponding precision matrices and the square-root
/// factors needed for sampling cached at construction.
#[derive(Debug, Clone)]
pub struct KroneckerModel {
    sigma_l: SymMatrix,
    sigma_t: SymMatrix,
    omega_l: SymMatrix,
    omega_t: SymMatrix,
    sqrt_l: SymMatrix,
    sqrt_t: SymMatrix,
}

impl KroneckerModel {
    /// Build from the covariance pair. Both factors must be symmetric
    /// positive definite.
    pub fn new(sigma_l: SymMatrix, sigma_t: SymMatrix) -> Result<Self> {
        let omega_l = inverse_spd(&sigma_l)
            .map_err(|_| Error::InvalidInput("spatial covariance is not SPD".into()))?;
        let omega_t = inverse_spd(&sigma_t)
            .map_err(|_| Error::InvalidInput("temporal covariance is not SPD".into()))?;
        let sqrt_l = sqrt_psd(&sigma_l)?;
        let sqrt_t = sqrt_psd(&sigma_t)?;
        let model = KroneckerModel {
            sigma_l,
            sigma_t,
            omega_l,
            omega_t,
            sqrt_l,
            sqrt_t,
        };
        model.check_inverse_residuals()?;
        Ok(model)
    }

    /// Build from the spatial precision matrix (the harness's natural
    /// parametrization) and the temporal covariance.
    pub fn from_precisions(omega_l: SymMatrix, sigma_t: SymMatrix) -> Result<Self> {
        let sigma_l = inverse_spd(&omega_l)
            .map_err(|_| Error::InvalidInput("spatial precision is not SPD".into()))?;
        Self::new(sigma_l, sigma_t)
    }

    fn check_inverse_residuals(&self) -> Result<()> {
        for (s, o, name) in [
            (&self.sigma_l, &self.omega_l, "spatial"),
            (&self.sigma_t, &self.omega_t, "temporal"),
        ] {
            let prod = s.as_mat().matmul(&o.as_mat())?;
            let dim = s.dim();
            let mut err: f64 = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    let target = if i == j { 1.0 } else { 0.0 };
                    err = err.max((prod.get(i, j) - target).abs());
                }
            }
            if err > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "{} covariance/precision pair inconsistent (residual {})",
                    name, err
                )));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.sigma_l.dim()
    }

    pub fn q(&self) -> usize {
        self.sigma_t.dim()
    }

    pub fn sigma_l(&self) -> &SymMatrix {
        &self.sigma_l
    }

    pub fn sigma_t(&self) -> &SymMatrix {
        &self.sigma_t
    }

    pub fn omega_l(&self) -> &SymMatrix {
        &self.omega_l
    }

    pub fn omega_t(&self) -> &SymMatrix {
        &self.omega_t
    }
}

/// n subjects of p x q (locations x time) observations, stored as a flat
/// tensor indexed (subject, location, time).
#[derive(Debug, Clone)]
pub struct SpatioTemporalSample {
    n: usize,
    p: usize,
    q: usize,
    data: Vec<f64>,
}

impl SpatioTemporalSample {
    pub fn new(n: usize, p: usize, q: usize, data: Vec<f64>) -> Result<Self> {
        if n < 2 || p < 2 || q < 1 {
            return Err(Error::InvalidParameter(format!(
                "sample requires n >= 2, p >= 2, q >= 1; got n={}, p={}, q={}",
                n, p, q
            )));
        }
        if data.len() != n * p * q {
            return Err(Error::DimensionMismatch(format!(
                "tensor has {} entries, expected {}",
                data.len(),
                n * p * q
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "sample contains non-finite entries".into(),
            ));
        }
        Ok(SpatioTemporalSample { n, p, q, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, l: usize) -> f64 {
        self.data[(k * self.p + i) * self.q + l]
    }

    /// The k-th subject as a p x q matrix.
    pub fn subject(&self, k: usize) -> Mat {
        Mat::from_fn(self.p, self.q, |i, l| self.get(k, i, l))
    }

    /// A copy with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> SpatioTemporalSample {
        SpatioTemporalSample {
            n: self.n,
            p: self.p,
            q: self.q,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn from_subjects(subjects: &[Mat]) -> Result<Self> {
        let n = subjects.len();
        if n == 0 {
            return Err(Error::InvalidInput("no subjects".into()));
        }
        let p = subjects[0].rows();
        let q = subjects[0].cols();
        let mut data = Vec::with_capacity(n * p * q);
        for (k, s) in subjects.iter().enumerate() {
            if s.rows() != p || s.cols() != q {
                return Err(Error::DimensionMismatch(format!(
                    "subject {} is {}x{}, expected {}x{}",
                    k,
                    s.rows(),
                    s.cols(),
                    p,
                    q
                )));
            }
            for i in 0..p {
                data.extend_from_slice(s.row(i));
            }
        }
        SpatioTemporalSample::new(n, p, q, data)
    }
}

/// Draw n independent samples `X_k = Sigma_L^{1/2} Z Sigma_T^{1/2}` with
/// Z a p x q matrix of independent standard normals, so that
/// `Cov(X[i,l], X[j,m]) = sigma_L[i,j] * sigma_T[l,m]`.
pub fn sample_matrix_normal(
    model: &KroneckerModel,
    n: usize,
    rng: &mut Rng,
) -> Result<SpatioTemporalSample> {
    let (p, q) = (model.p(), model.q());
    let mut data = Vec::with_capacity(n * p * q);
    for _ in 0..n {
        let z = Mat::from_fn(p, q, |_, _| rng.normal());
        let x = model
            .sqrt_l
            .as_mat()
            .matmul(&z)?
            .matmul(&model.sqrt_t.as_mat())?;
        for i in 0..p {
            data.extend_from_slice(x.row(i));
        }
    }
    SpatioTemporalSample::new(n, p, q, data)
}

/// The three spatial precision designs used in the multiple-testing
/// experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Banded: unit diagonal, 0.6 on the first off-diagonal, 0.3 on the second.
    Model1,
    /// Disjoint stars of size 10 (hub to nine leaves at 0.5), shifted to SPD.
    Model2,
    /// Unit diagonal plus symmetric 0.8 * Bernoulli(2/p) off-diagonals, shifted to SPD.
    Model3,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Model1 => write!(f, "model1"),
            ModelKind::Model2 => write!(f, "model2"),
            ModelKind::Model3 => write!(f, "model3"),
        }
    }
}

/// Shift a symmetric candidate onto the SPD cone:
/// `(A + delta I) / (1 + delta)` with `delta = |lambda_min(A)| + 0.05`.
fn spd_shift(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigendecomp(a)?;
    let lmin = *eig.values.last().expect("non-empty spectrum");
    let delta = lmin.abs() + 0.05;
    let dim = a.dim();
    Ok(SymMatrix::from_fn(dim, |i, j| {
        let shifted = a.get(i, j) + if i == j { delta } else { 0.0 };
        shifted / (1.0 + delta)
    }))
}

/// Construct the spatial precision matrix for one of the ground-truth
/// designs. `rng` is consumed only by `Model3`; the builders are
/// deterministic given (kind, p, seed).
pub fn build_model(kind: ModelKind, p: usize, rng: &mut Rng) -> Result<SymMatrix> {
    if p < 4 {
        return Err(Error::InvalidParameter(
            "model construction requires p >= 4".into(),
        ));
    }
    match kind {
        ModelKind::Model1 => Ok(SymMatrix::from_fn(p, |i, j| match j - i {
            0 => 1.0,
            1 => 0.6,
            2 => 0.3,
            _ => 0.0,
        })),
        ModelKind::Model2 => {
            if !p.is_multiple_of(10) {
                return Err(Error::InvalidParameter(format!(
                    "model2 requires p divisible by 10, got {}",
                    p
                )));
            }
            let star = SymMatrix::from_fn(p, |i, j| {
                // Hub of block k sits at index 10k (0-based); leaves follow it.
                if i != j && i % 10 == 0 && j / 10 == i / 10 {
                    0.5
                } else {
                    0.0
                }
            });
            spd_shift(&star)
        }
        ModelKind::Model3 => {
            let prob = 2.0 / p as f64;
            let mut star = SymMatrix::identity(p);
            for i in 0..p {
                for j in i + 1..p {
                    if rng.uniform() < prob {
                        star.set(i, j, 0.8);
                    }
                }
            }
            spd_shift(&star)
        }
    }
}

/// Spatial precision alternative for the global-power experiment: the
/// identity perturbed in four random upper-triangle positions (mirrored,
/// eight nonzeros total), entry magnitudes uniform on
/// `[2 sqrt(log p / nq), 4 sqrt(log p / nq)]` with random sign, then the
/// SPD shift `(I + U + delta I)/(1 + delta)`.
pub fn build_global_alternative(p: usize, n: usize, q: usize, rng: &mut Rng) -> Result<SymMatrix> {
    if p < 8 {
        return Err(Error::InvalidParameter(
            "global alternative requires p >= 8".into(),
        ));
    }
    let total_pairs = p * (p - 1) / 2;
    let mut chosen: Vec<usize> = Vec::with_capacity(4);
    while chosen.len() < 4 {
        let idx = rng.below(total_pairs as u64) as usize;
        if !chosen.contains(&idx) {
            chosen.push(idx);
        }
    }
    let a = ((p as f64).ln() / (n * q) as f64).sqrt();
    let mut base = SymMatrix::identity(p);
    for &idx in &chosen {
        let (i, j) = unpack_pair(idx, p);
        let magnitude = rng.uniform_in(2.0 * a, 4.0 * a);
        base.set(i, j, rng.sign() * magnitude);
    }
    spd_shift(&base)
}

/// Spatial precision under the global null: the identity.
pub fn null_spatial(p: usize) -> SymMatrix {
    SymMatrix::identity(p)
}

/// Upper-triangle pairs (i < j) where the precision entry is nonzero:
/// the ground-truth edge set for power accounting.
pub fn true_edges(omega: &SymMatrix) -> Vec<(usize, usize)> {
    let p = omega.dim();
    let mut edges = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if omega.get(i, j) != 0.0 {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Map a flat index in [0, p(p-1)/2) to the (i, j) pair with i < j,
/// ordered row by row.
fn unpack_pair(idx: usize, p: usize) -> (usize, usize) {
    let mut rem = idx;
    for i in 0..p - 1 {
        let row_len = p - 1 - i;
        if rem < row_len {
            return (i, i + 1 + rem);
        }
        rem -= row_len;
    }
    unreachable!("index out of range for pair unpacking");
}
