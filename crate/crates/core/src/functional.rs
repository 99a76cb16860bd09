//! Scalar functionals of a mean vector and a symmetric matrix coordinate
//! (either `X = ⟨ζζ⟩/2` or the covariance `Σ`, depending on the bracket).
//!
//! Matrix gradients follow the symmetric convention `dF = Tr(F_M dM)` for
//! symmetric `dM`, and are always returned symmetric.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub z: DVector<f64>,
    pub m: DMatrix<f64>,
}

impl Gradient {
    pub fn zeros(dim: usize, with_matrix: bool) -> Self {
        let md = if with_matrix { dim } else { 0 };
        Self { z: DVector::zeros(dim), m: DMatrix::zeros(md, md) }
    }
}

/// A functional `F(z, M)`. Implementors that know their partials return
/// them from [`Observable::gradient`]; everything else is differenced.
pub trait Observable: Send + Sync {
    fn value(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> f64;

    fn gradient(&self, _z: &DVector<f64>, _m: &DMatrix<f64>) -> Option<Gradient> {
        None
    }
}

impl<F> Observable for F
where
    F: Fn(&DVector<f64>, &DMatrix<f64>) -> f64 + Send + Sync,
{
    fn value(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
        self(z, m)
    }
}

impl Observable for Box<dyn Observable> {
    fn value(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
        self.as_ref().value(z, m)
    }

    fn gradient(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> Option<Gradient> {
        self.as_ref().gradient(z, m)
    }
}

/// Central-difference gradient. Matrix directions move the `(i, j)` and
/// `(j, i)` entries together, so off-diagonal partials come out halved.
pub fn fd_gradient(f: &dyn Observable, z: &DVector<f64>, m: &DMatrix<f64>, step: f64) -> Result<Gradient> {
    let mut gz = DVector::zeros(z.len());
    let mut zp = z.clone();
    for i in 0..z.len() {
        zp[i] = z[i] + step;
        let fp = f.value(&zp, m);
        zp[i] = z[i] - step;
        let fm = f.value(&zp, m);
        zp[i] = z[i];
        gz[i] = (fp - fm) / (2.0 * step);
    }
    let n = m.nrows();
    let mut gm = DMatrix::zeros(n, n);
    let mut mp = m.clone();
    for i in 0..n {
        for j in i..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            mp[(i, j)] = a + step;
            mp[(j, i)] = b + step;
            let fp = f.value(z, &mp);
            mp[(i, j)] = a - step;
            mp[(j, i)] = b - step;
            let fm = f.value(z, &mp);
            mp[(i, j)] = a;
            mp[(j, i)] = b;
            let d = (fp - fm) / (2.0 * step);
            if i == j {
                gm[(i, i)] = d;
            } else {
                gm[(i, j)] = 0.5 * d;
                gm[(j, i)] = 0.5 * d;
            }
        }
    }
    if gz.iter().chain(gm.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SingularDifference(step));
    }
    Ok(Gradient { z: gz, m: gm })
}

/// How a gradient was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMethod {
    Analytic,
    FiniteDifference { step: f64 },
}

/// Analytic gradient when available, otherwise central differences.
pub fn gradient_of(
    f: &dyn Observable,
    z: &DVector<f64>,
    m: &DMatrix<f64>,
    step: f64,
) -> Result<(Gradient, GradientMethod)> {
    match f.gradient(z, m) {
        Some(g) => Ok((g, GradientMethod::Analytic)),
        None => Ok((fd_gradient(f, z, m, step)?, GradientMethod::FiniteDifference { step })),
    }
}

/// Product `F·G`, with product-rule partials when both factors have them.
pub struct Product<A, B>(pub A, pub B);

impl<A: Observable, B: Observable> Observable for Product<A, B> {
    fn value(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
        self.0.value(z, m) * self.1.value(z, m)
    }

    fn gradient(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> Option<Gradient> {
        let (ga, gb) = (self.0.gradient(z, m)?, self.1.gradient(z, m)?);
        let (a, b) = (self.0.value(z, m), self.1.value(z, m));
        Some(Gradient { z: &ga.z * b + &gb.z * a, m: &ga.m * b + &gb.m * a })
    }
}

/// A coordinate observable: one entry of `z` or one (symmetrized) entry of `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coordinate {
    Mean(usize),
    Matrix(usize, usize),
}

impl Coordinate {
    pub fn unit_gradient(self, dim: usize) -> Gradient {
        let mut g = Gradient::zeros(dim, true);
        match self {
            Coordinate::Mean(i) => g.z[i] = 1.0,
            Coordinate::Matrix(i, j) if i == j => g.m[(i, i)] = 1.0,
            Coordinate::Matrix(i, j) => {
                g.m[(i, j)] = 0.5;
                g.m[(j, i)] = 0.5;
            }
        }
        g
    }
}

impl Observable for Coordinate {
    fn value(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
        match *self {
            Coordinate::Mean(i) => z[i],
            Coordinate::Matrix(i, j) => 0.5 * (m[(i, j)] + m[(j, i)]),
        }
    }

    fn gradient(&self, z: &DVector<f64>, _m: &DMatrix<f64>) -> Option<Gradient> {
        Some(self.unit_gradient(z.len()))
    }
}

/// Every coordinate of a `dim`-dimensional phase space with its matrix,
/// upper triangle only.
pub fn coordinates(dim: usize) -> Vec<Coordinate> {
    let mut out: Vec<Coordinate> = (0..dim).map(Coordinate::Mean).collect();
    for i in 0..dim {
        for j in i..dim {
            out.push(Coordinate::Matrix(i, j));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fd_gradient_uses_symmetric_convention() {
        // F = M_01 (symmetrized) → F_M = [[0, ½], [½, 0]]
        let f = |_: &DVector<f64>, m: &DMatrix<f64>| 0.5 * (m[(0, 1)] + m[(1, 0)]);
        let z = DVector::from_vec(vec![0.3, -0.2]);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]);
        let g = fd_gradient(&f, &z, &m, 1e-5).unwrap();
        assert_relative_eq!(g.m[(0, 1)], 0.5, epsilon = 1e-10);
        assert_relative_eq!(g.m[(1, 0)], 0.5, epsilon = 1e-10);
        assert_relative_eq!(g.m[(0, 0)], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn trace_gradient_is_identity() {
        let f = |z: &DVector<f64>, m: &DMatrix<f64>| m.trace() + z[0] * z[1];
        let z = DVector::from_vec(vec![2.0, 3.0]);
        let m = DMatrix::identity(2, 2);
        let g = fd_gradient(&f, &z, &m, 1e-5).unwrap();
        assert_relative_eq!(g.m, DMatrix::identity(2, 2), epsilon = 1e-9);
        assert_relative_eq!(g.z, DVector::from_vec(vec![3.0, 2.0]), epsilon = 1e-9);
    }

    #[test]
    fn non_finite_difference_reported() {
        let f = |z: &DVector<f64>, _: &DMatrix<f64>| 1.0 / z[0];
        let z = DVector::from_vec(vec![0.0, 0.0]);
        let m = DMatrix::zeros(2, 2);
        let r = fd_gradient(&f, &z, &m, 0.0);
        assert!(matches!(r, Err(Error::SingularDifference(_))));
    }

    #[test]
    fn product_rule() {
        let a = Coordinate::Mean(0);
        let b = Coordinate::Matrix(0, 1);
        let z = DVector::from_vec(vec![2.0, 1.0]);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        let g = Product(a, b).gradient(&z, &m).unwrap();
        assert_eq!(g.z[0], 3.0);
        assert_eq!(g.m[(0, 1)], 1.0);
    }
}
