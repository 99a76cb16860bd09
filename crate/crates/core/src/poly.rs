//! Sparse real polynomials in the phase-space coordinates, used as random
//! observables with exact partials by the bracket axiom checks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::functional::{coordinates, Coordinate, Gradient, Observable};

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn variable(nvars: usize, index: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[index] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(exps, 1.0);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, exps: Vec<u32>, coeff: f64) {
        assert_eq!(exps.len(), self.nvars);
        let entry = self.terms.entry(exps).or_insert(0.0);
        *entry += coeff;
    }

    /// Random polynomial of total degree ≤ `max_degree` with `nterms`
    /// monomials and coefficients uniform in `[−1, 1]`.
    pub fn random<R: Rng>(nvars: usize, max_degree: u32, nterms: usize, rng: &mut R) -> Self {
        let mut p = Self::zero(nvars);
        for _ in 0..nterms {
            let degree = rng.gen_range(0..=max_degree);
            let mut exps = vec![0u32; nvars];
            for _ in 0..degree {
                exps[rng.gen_range(0..nvars)] += 1;
            }
            p.add_term(exps, rng.gen_range(-1.0..=1.0));
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| c * e.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product::<f64>()).sum()
    }

    pub fn derivative(&self, var: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            if e[var] > 0 {
                let mut d = e.clone();
                d[var] -= 1;
                out.add_term(d, c * e[var] as f64);
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { nvars: self.nvars, terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e.clone(), c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

/// Polynomial in the packed coordinates `(z, upper triangle of M)`, or in
/// `z` alone when `with_matrix` is false.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyObservable {
    dim: usize,
    with_matrix: bool,
    poly: Polynomial,
}

pub fn variable_count(dim: usize, with_matrix: bool) -> usize {
    if with_matrix {
        dim + dim * (dim + 1) / 2
    } else {
        dim
    }
}

pub fn pack(z: &DVector<f64>, m: &DMatrix<f64>, with_matrix: bool) -> Vec<f64> {
    let dim = z.len();
    if !with_matrix {
        return z.iter().copied().collect();
    }
    coordinates(dim).into_iter().map(|c| c.value(z, m)).collect()
}

impl PolyObservable {
    pub fn new(dim: usize, with_matrix: bool, poly: Polynomial) -> Self {
        assert_eq!(poly.nvars(), variable_count(dim, with_matrix));
        Self { dim, with_matrix, poly }
    }

    pub fn random<R: Rng>(dim: usize, with_matrix: bool, max_degree: u32, nterms: usize, rng: &mut R) -> Self {
        Self::new(dim, with_matrix, Polynomial::random(variable_count(dim, with_matrix), max_degree, nterms, rng))
    }

    pub fn poly(&self) -> &Polynomial {
        &self.poly
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_matrix(&self) -> bool {
        self.with_matrix
    }

    pub fn coordinates(&self) -> Vec<Coordinate> {
        let all = coordinates(self.dim);
        if self.with_matrix {
            all
        } else {
            all.into_iter().take(self.dim).collect()
        }
    }
}

impl Observable for PolyObservable {
    fn value(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
        self.poly.eval(&pack(z, m, self.with_matrix))
    }

    fn gradient(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> Option<Gradient> {
        let x = pack(z, m, self.with_matrix);
        let mut g = Gradient::zeros(self.dim, self.with_matrix);
        for (var, coord) in self.coordinates().into_iter().enumerate() {
            let d = self.poly.derivative(var).eval(&x);
            match coord {
                Coordinate::Mean(i) => g.z[i] = d,
                Coordinate::Matrix(i, j) if i == j => g.m[(i, i)] = d,
                Coordinate::Matrix(i, j) => {
                    g.m[(i, j)] = 0.5 * d;
                    g.m[(j, i)] = 0.5 * d;
                }
            }
        }
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::fd_gradient;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arithmetic() {
        let x = Polynomial::variable(2, 0);
        let y = Polynomial::variable(2, 1);
        let p = x.mul(&y).add(&x.scale(2.0)).add(&Polynomial::constant(2, 1.0));
        assert_eq!(p.eval(&[3.0, 4.0]), 12.0 + 6.0 + 1.0);
        assert_eq!(p.derivative(0).eval(&[3.0, 4.0]), 6.0);
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = PolyObservable::random(2, true, 3, 8, &mut rng);
        let z = DVector::from_vec(vec![0.3, -0.4]);
        let m = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.6]);
        let exact = f.gradient(&z, &m).unwrap();
        let fd = fd_gradient(&f, &z, &m, 1e-5).unwrap();
        assert_relative_eq!(exact.z, fd.z, epsilon = 1e-8);
        assert_relative_eq!(exact.m, fd.m, epsilon = 1e-8);
    }
}
