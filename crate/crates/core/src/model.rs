//! Phase-space value types: the canonical Poisson tensor, mean vectors,
//! second moments and covariances.
//!
//! Coordinates are ordered `(q_1..q_n, p_1..p_n)`. The Poisson tensor `J`
//! satisfies `{q_i, p_i} = +1`, so `ż = J∇H` gives `q̇ = ∂H/∂p`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative symmetry tolerance accepted for input matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Tolerance of the Williamson admissibility test.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

/// The canonical Poisson tensor on `R^{2n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    dof: usize,
    matrix: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn new(dof: usize) -> Result<Self> {
        if dof == 0 {
            return Err(Error::ZeroDof);
        }
        let dim = 2 * dof;
        let mut ints = vec![0i64; dim * dim];
        for i in 0..dof {
            ints[i * dim + (dof + i)] = 1;
            ints[(dof + i) * dim + i] = -1;
        }
        // Jᵀ = −J and J² = −I are checked exactly before casting.
        for r in 0..dim {
            for c in 0..dim {
                debug_assert_eq!(ints[r * dim + c], -ints[c * dim + r]);
                let sq: i64 = (0..dim).map(|k| ints[r * dim + k] * ints[k * dim + c]).sum();
                debug_assert_eq!(sq, if r == c { -1 } else { 0 });
            }
        }
        let matrix = DMatrix::from_row_slice(dim, dim, &ints.iter().map(|&v| v as f64).collect::<Vec<_>>());
        Ok(Self { dof, matrix })
    }

    /// Form matching a phase-space dimension `2n`.
    pub fn for_dim(dim: usize) -> Result<Self> {
        if !dim.is_multiple_of(2) {
            return Err(Error::Dimension { expected: dim + 1, got: dim });
        }
        Self::new(dim / 2)
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn dim(&self) -> usize {
        2 * self.dof
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// `make_symplectic_form`: the `2n × 2n` canonical matrix.
pub fn symplectic_form(dof: usize) -> Result<DMatrix<f64>> {
    SymplecticForm::new(dof).map(|j| j.matrix)
}

/// A point (or mean) in phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(DVector<f64>);

impl PhaseVector {
    pub fn new(entries: DVector<f64>) -> Result<Self> {
        if entries.is_empty() || !entries.len().is_multiple_of(2) {
            return Err(Error::Dimension { expected: entries.len() + entries.len() % 2, got: entries.len() });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phase vector"));
        }
        Ok(Self(entries))
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(entries))
    }

    pub fn zeros(dof: usize) -> Self {
        Self(DVector::zeros(2 * dof))
    }

    pub fn dof(&self) -> usize {
        self.0.len() / 2
    }

    pub fn q(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn p(&self, i: usize) -> f64 {
        self.0[self.dof() + i]
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

pub(crate) fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_square_symmetric(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() || !m.nrows().is_multiple_of(2) || m.nrows() == 0 {
        return Err(Error::Dimension { expected: m.nrows() + m.nrows() % 2, got: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    let defect = symmetry_defect(m);
    if defect > SYMMETRY_TOL {
        return Err(Error::Asymmetric(defect));
    }
    Ok(())
}

/// `X = ⟨ζζ⟩/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoment(DMatrix<f64>);

impl SecondMoment {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&matrix, "second moment")?;
        Ok(Self(symmetrize(&matrix)))
    }

    /// Second moment of a state with mean `z` and physical covariance `c`:
    /// `X = (c + zzᵀ)/2`.
    pub fn from_mean_and_covariance(z: &DVector<f64>, c: &DMatrix<f64>) -> Result<Self> {
        Self::new((c + z * z.transpose()) * 0.5)
    }

    /// `2X − zzᵀ`.
    pub fn covariance(&self, z: &DVector<f64>) -> DMatrix<f64> {
        &self.0 * 2.0 - z * z.transpose()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Dimensionless covariance `Σ` with explicit `ħ`; the physical covariance is `ħΣ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    sigma: DMatrix<f64>,
    hbar: f64,
}

impl Covariance {
    pub fn new(sigma: DMatrix<f64>, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
        }
        check_square_symmetric(&sigma, "covariance")?;
        let sigma = symmetrize(&sigma);
        if sigma.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { sigma, hbar })
    }

    /// Covariance with `ħ = 1`.
    pub fn unit(sigma: DMatrix<f64>) -> Result<Self> {
        Self::new(sigma, 1.0)
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn physical(&self) -> DMatrix<f64> {
        &self.sigma * self.hbar
    }

    pub fn dof(&self) -> usize {
        self.sigma.nrows() / 2
    }
}

/// Symplectic (Williamson) eigenvalues of a symmetric positive definite
/// matrix, ascending, one per degree of freedom.
pub fn symplectic_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square_symmetric(m, "matrix")?;
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let root =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let j = SymplecticForm::for_dim(m.nrows())?;
    // R J R is antisymmetric with eigenvalues ±iν, so (RJR)ᵀ(RJR) has ν² twice.
    let a = &root * j.matrix() * &root;
    let gram = symmetrize(&(a.transpose() * &a));
    let mut squares: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    squares.sort_by(|x, y| x.total_cmp(y));
    Ok(squares.chunks(2).map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt()).collect())
}

/// Williamson criterion: every symplectic eigenvalue of `ħΣ` is at least `ħ/2`.
pub fn uncertainty_admissible(cov: &Covariance) -> Result<bool> {
    let nu = symplectic_eigenvalues(cov.sigma())?;
    Ok(nu.iter().all(|&v| v >= 0.5 - ADMISSIBILITY_TOL))
}
