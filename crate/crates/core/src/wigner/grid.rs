//! Sampled Wigner functions on a rectangle, their construction, moments
//! and on-disk formats.

use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::model::{symplectic_eigenvalues, Covariance, PhaseVector, SecondMoment, ADMISSIBILITY_TOL};

/// Largest admissible share of `∫|W|` within reach of the boundary stencils.
pub const DEFAULT_BOUNDARY_LIMIT: f64 = 1e-8;

/// Width, in nodes, of the band checked by the boundary guard.
const BOUNDARY_BAND: usize = 3;

/// Uniform axis with `n` nodes from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::InvalidArgument(format!("empty axis [{min}, {max}]")));
        }
        if n < super::stencil::MIN_POINTS {
            return Err(Error::GridTooCoarse(n));
        }
        Ok(Self { min, max, n })
    }

    /// Axis centred on `centre` spanning `±half_width`.
    pub fn centred(centre: f64, half_width: f64, n: usize) -> Result<Self> {
        Self::new(centre - half_width, centre + half_width, n)
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.min + self.spacing() * i as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.n {
            0.5 * h
        } else {
            h
        }
    }

    /// Fractional index of `x`, or `None` outside `[min, max]`.
    pub fn locate(&self, x: f64) -> Option<f64> {
        let s = (x - self.min) / self.spacing();
        (0.0..=(self.n - 1) as f64).contains(&s).then_some(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Lab,
    Comoving,
}

/// `W` sampled at `(q_i, p_j)`, stored row-major with `q` as the outer index.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub q: Axis,
    pub p: Axis,
    pub values: Vec<f64>,
    pub frame: Frame,
    pub hbar: f64,
}

impl WignerGrid {
    pub fn new(q: Axis, p: Axis, values: Vec<f64>, frame: Frame, hbar: f64) -> Result<Self> {
        if values.len() != q.n * p.n {
            return Err(Error::Dimension { expected: q.n * p.n, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Wigner values"));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self { q, p, values, frame, hbar })
    }

    pub fn zeros(q: Axis, p: Axis, frame: Frame, hbar: f64) -> Self {
        Self { q, p, values: vec![0.0; q.n * p.n], frame, hbar }
    }

    /// Same axes, frame and `ħ` with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self { values, ..self.clone() }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.p.n + j
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.index(i, j)]
    }

    /// Trapezoid-rule `∫∫ f W`.
    pub fn integrate_with(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let qs = self.q.nodes();
        let ps = self.p.nodes();
        let mut total = 0.0;
        for (i, &q) in qs.iter().enumerate() {
            let wq = self.q.weight(i);
            let mut row = 0.0;
            for (j, &p) in ps.iter().enumerate() {
                row += self.p.weight(j) * f(q, p) * self.values[i * self.p.n + j];
            }
            total += wq * row;
        }
        total
    }

    /// Trapezoid-rule `∫∫ a W` for a field sampled on the same grid.
    pub fn integrate_field(&self, field: &[f64]) -> f64 {
        let np = self.p.n;
        let mut total = 0.0;
        for i in 0..self.q.n {
            let mut row = 0.0;
            for j in 0..np {
                let k = i * np + j;
                row += self.p.weight(j) * field[k] * self.values[k];
            }
            total += self.q.weight(i) * row;
        }
        total
    }

    pub fn mass(&self) -> f64 {
        self.integrate_with(|_, _| 1.0)
    }

    /// `∫ W dp` at every `q` node.
    pub fn position_marginal(&self) -> Vec<f64> {
        self.values
            .chunks(self.p.n)
            .map(|row| row.iter().enumerate().map(|(j, w)| self.p.weight(j) * w).sum())
            .collect()
    }

    /// Position marginal at `x`, linearly interpolated between nodes.
    pub fn position_marginal_at(&self, x: f64) -> Result<f64> {
        let s = self.q.locate(x).ok_or(Error::OutsideGrid(x))?;
        let m = self.position_marginal();
        let i = (s.floor() as usize).min(self.q.n - 2);
        let f = s - i as f64;
        Ok((1.0 - f) * m[i] + f * m[i + 1])
    }

    /// Share of `∫|W|` carried by the nodes next to the edges.
    pub fn boundary_fraction(&self) -> f64 {
        let (nq, np) = (self.q.n, self.p.n);
        let band = BOUNDARY_BAND.min(nq / 2).min(np / 2);
        let mut edge = 0.0;
        let mut total = 0.0;
        for i in 0..nq {
            for j in 0..np {
                let w = self.q.weight(i) * self.p.weight(j) * self.values[i * np + j].abs();
                total += w;
                if i < band || j < band || i + band >= nq || j + band >= np {
                    edge += w;
                }
            }
        }
        if total > 0.0 {
            edge / total
        } else {
            0.0
        }
    }

    pub fn check_boundary(&self, limit: f64) -> Result<()> {
        let fraction = self.boundary_fraction();
        if fraction > limit || !fraction.is_finite() {
            return Err(Error::BoundaryMass { fraction, limit });
        }
        Ok(())
    }

    /// Rows of `q,p,w`, one per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "q,p,w")?;
        let ps = self.p.nodes();
        for (i, q) in self.q.nodes().into_iter().enumerate() {
            for (j, p) in ps.iter().enumerate() {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", q, p, self.at(i, j))?;
            }
        }
        Ok(())
    }

    /// Five header lines followed by the values as little-endian `f64`,
    /// `q`-major.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "nq {}", self.q.n)?;
        writeln!(out, "np {}", self.p.n)?;
        writeln!(out, "q {:.17e} {:.17e}", self.q.min, self.q.max)?;
        writeln!(out, "p {:.17e} {:.17e}", self.p.min, self.p.max)?;
        writeln!(out, "data f64le row-major q-major")?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the layout written by [`write_binary`](Self::write_binary).
    pub fn read_binary<R: BufRead>(mut input: R, frame: Frame, hbar: f64) -> io::Result<Self> {
        let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
        let mut line = String::new();
        let mut fields = |key: &str| -> io::Result<Vec<String>> {
            line.clear();
            input.read_line(&mut line)?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(format!("expected header field `{key}`, found `{}`", line.trim())));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
        let count = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
        let nq = count(&fields("nq")?.join(""))?;
        let np = count(&fields("np")?.join(""))?;
        let qr = fields("q")?;
        let pr = fields("p")?;
        fields("data")?;
        if qr.len() != 2 || pr.len() != 2 {
            return Err(bad("axis range needs two numbers".into()));
        }
        let q = Axis::new(num(&qr[0])?, num(&qr[1])?, nq).map_err(|e| bad(e.to_string()))?;
        let p = Axis::new(num(&pr[0])?, num(&pr[1])?, np).map_err(|e| bad(e.to_string()))?;
        let mut bytes = vec![0u8; nq * np * 8];
        input.read_exact(&mut bytes)?;
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(q, p, values, frame, hbar).map_err(|e| bad(e.to_string()))
    }
}

/// Measured mass, mean and `⟨ζζ⟩/2`, all normalised by the mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMoments {
    pub mass: f64,
    pub mean: PhaseVector,
    pub second: SecondMoment,
}

impl GridMoments {
    /// `⟨ζζ⟩ − ⟨ζ⟩⟨ζ⟩`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.second.covariance(self.mean.vector())
    }
}

pub fn moments(grid: &WignerGrid) -> Result<GridMoments> {
    let mass = grid.mass();
    if !(mass.is_finite() && mass.abs() > 0.0) {
        return Err(Error::NonFinite("grid mass"));
    }
    let e = |f: &dyn Fn(f64, f64) -> f64| grid.integrate_with(f) / mass;
    let mean = [e(&|q, _| q), e(&|_, p| p)];
    let qq = e(&|q, _| q * q);
    let qp = e(&|q, p| q * p);
    let pp = e(&|_, p| p * p);
    let x = DMatrix::from_row_slice(2, 2, &[qq, qp, qp, pp]) * 0.5;
    Ok(GridMoments { mass, mean: PhaseVector::from_slice(&mean)?, second: SecondMoment::new(x)? })
}

/// Gaussian Wigner function with mean `z` and physical covariance `ħΣ`,
/// normalised to unit mass.
pub fn gaussian_init(z: &PhaseVector, cov: &Covariance, q: Axis, p: Axis, frame: Frame) -> Result<WignerGrid> {
    if z.dof() != 1 || cov.dof() != 1 {
        return Err(Error::Dimension { expected: 2, got: z.vector().len().max(cov.sigma().nrows()) });
    }
    let nu = symplectic_eigenvalues(cov.sigma())?[0];
    if nu < 0.5 - ADMISSIBILITY_TOL {
        return Err(Error::Inadmissible(nu));
    }
    let hbar = cov.hbar();
    let s = cov.sigma();
    let sigma = Matrix2::new(s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]);
    let inv = sigma.try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * hbar * sigma.determinant().sqrt());
    let centre = Vector2::new(z.q(0), z.p(0));
    let ps = p.nodes();
    let mut values = Vec::with_capacity(q.n * p.n);
    for qi in q.nodes() {
        for &pj in &ps {
            let d = Vector2::new(qi, pj) - centre;
            values.push(norm * (-(d.dot(&(inv * d))) / (2.0 * hbar)).exp());
        }
    }
    let grid = WignerGrid::new(q, p, values, frame, hbar)?;
    grid.check_boundary(DEFAULT_BOUNDARY_LIMIT)?;
    Ok(grid)
}

/// Axes spanning `±width` standard deviations of `ħΣ` about `centre`.
pub fn axes_for(centre: &[f64; 2], cov: &Covariance, width: f64, n: usize) -> Result<(Axis, Axis)> {
    let phys = cov.physical();
    Ok((
        Axis::centred(centre[0], width * phys[(0, 0)].sqrt(), n)?,
        Axis::centred(centre[1], width * phys[(1, 1)].sqrt(), n)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample() -> WignerGrid {
        let z = PhaseVector::from_slice(&[1.0, 2.0]).unwrap();
        let cov = Covariance::unit(DMatrix::identity(2, 2) * 0.5).unwrap();
        let q = Axis::new(-6.0, 8.0, 256).unwrap();
        let p = Axis::new(-5.0, 9.0, 256).unwrap();
        gaussian_init(&z, &cov, q, p, Frame::Lab).unwrap()
    }

    #[test]
    fn gaussian_moments_recovered() {
        let g = sample();
        let m = moments(&g).unwrap();
        assert_relative_eq!(m.mass, 1.0, epsilon = 1e-8);
        assert_relative_eq!(m.mean.q(0), 1.0, epsilon = 1e-8);
        assert_relative_eq!(m.mean.p(0), 2.0, epsilon = 1e-8);
        let c = m.covariance();
        assert_relative_eq!(c, DMatrix::identity(2, 2) * 0.5, epsilon = 1e-6);
    }

    #[test]
    fn peak_value() {
        // closed form at ζ = z with Σ = I/2, ħ = 1: 1 / (2π · 1/2)
        let q = Axis::new(-5.0, 5.0, 101).unwrap();
        let g = gaussian_init(
            &PhaseVector::zeros(1),
            &Covariance::unit(DMatrix::identity(2, 2) * 0.5).unwrap(),
            q,
            q,
            Frame::Lab,
        )
        .unwrap();
        assert_relative_eq!(g.at(50, 50), 1.0 / std::f64::consts::PI, epsilon = 1e-14);
    }

    #[test]
    fn symmetric_grid_has_zero_mean() {
        let q = Axis::new(-8.0, 8.0, 129).unwrap();
        let cov = Covariance::unit(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.7])).unwrap();
        let g = gaussian_init(&PhaseVector::zeros(1), &cov, q, q, Frame::Comoving).unwrap();
        let m = moments(&g).unwrap();
        assert!(m.mean.vector().norm() < 1e-12);
    }

    #[test]
    fn too_small_domain_rejected() {
        let q = Axis::new(-2.0, 2.0, 64).unwrap();
        let cov = Covariance::unit(DMatrix::identity(2, 2)).unwrap();
        let err = gaussian_init(&PhaseVector::zeros(1), &cov, q, q, Frame::Lab).unwrap_err();
        assert!(matches!(err, Error::BoundaryMass { .. }));
    }

    #[test]
    fn inadmissible_rejected() {
        let q = Axis::new(-4.0, 4.0, 64).unwrap();
        let cov = Covariance::unit(DMatrix::identity(2, 2) * 0.1).unwrap();
        assert!(matches!(gaussian_init(&PhaseVector::zeros(1), &cov, q, q, Frame::Lab), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn marginal_of_unit_gaussian() {
        let q = Axis::new(-10.0, 10.0, 201).unwrap();
        let g = gaussian_init(
            &PhaseVector::zeros(1),
            &Covariance::unit(DMatrix::identity(2, 2)).unwrap(),
            q,
            q,
            Frame::Comoving,
        )
        .unwrap();
        let density = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(g.position_marginal_at(0.0).unwrap(), density, epsilon = 1e-12);
        assert!(g.position_marginal_at(11.0).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let g = sample();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        let back = WignerGrid::read_binary(io::Cursor::new(buf), Frame::Lab, 1.0).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let q = Axis::new(-1.0, 1.0, 7).unwrap();
        let g = WignerGrid::zeros(q, q, Frame::Lab, 1.0);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 50);
    }
}
