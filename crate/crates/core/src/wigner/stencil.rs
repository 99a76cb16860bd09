//! Finite-difference derivative operators on a uniform axis.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Smallest axis that fits the seven-point third-derivative stencil.
pub const MIN_POINTS: usize = 7;

/// Treatment of the nodes whose central stencil leaves the axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Values beyond the axis are taken as zero and the central stencil is
    /// truncated. Keeps the advection operator close to skew-symmetric.
    #[default]
    ZeroExtension,
    /// The stencil window is shifted inward, keeping its width and order.
    OneSided,
}

/// Weights of the `order`-th derivative at 0 from samples at `offsets`
/// (in units of the spacing).
pub fn weights(offsets: &[f64], order: usize) -> Vec<f64> {
    let n = offsets.len();
    assert!(order < n, "need more points than the derivative order");
    let a = DMatrix::from_fn(n, n, |r, c| offsets[c].powi(r as i32));
    let mut b = DVector::zeros(n);
    b[order] = (1..=order).map(|k| k as f64).product();
    a.lu().solve(&b).expect("distinct offsets give a regular Vandermonde system").iter().copied().collect()
}

/// Fourth-order derivative of a fixed order along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeOp {
    n: usize,
    /// Per node: first index of the window and its weights, already scaled.
    rows: Vec<(usize, Vec<f64>)>,
}

impl DerivativeOp {
    pub fn new(n: usize, spacing: f64, order: usize, boundary: Boundary) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::GridTooCoarse(n));
        }
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!("derivative order {order} not supported")));
        }
        let width = if order == 3 { 7 } else { 5 };
        let half = width / 2;
        let scale = spacing.powi(-(order as i32));
        let central: Vec<f64> = weights(&(0..width).map(|k| k as f64 - half as f64).collect::<Vec<_>>(), order)
            .into_iter()
            .map(|w| w * scale)
            .collect();
        let rows = (0..n)
            .map(|i| {
                let interior = i >= half && i + half < n;
                match boundary {
                    _ if interior => (i - half, central.clone()),
                    Boundary::ZeroExtension => {
                        let lo = i.saturating_sub(half);
                        let hi = (i + half).min(n - 1);
                        let skip = lo + half - i;
                        (lo, central[skip..skip + hi - lo + 1].to_vec())
                    }
                    Boundary::OneSided => {
                        let lo = i.saturating_sub(half).min(n - width);
                        let offsets: Vec<f64> = (lo..lo + width).map(|k| k as f64 - i as f64).collect();
                        (lo, weights(&offsets, order).into_iter().map(|w| w * scale).collect())
                    }
                }
            })
            .collect();
        Ok(Self { n, rows })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Derivative of a contiguous 1-d sample.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        for (o, (lo, w)) in out.iter_mut().zip(&self.rows) {
            *o = w.iter().zip(&f[*lo..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Differentiation along the outer (q) index of a row-major `nq × np` array.
pub fn along_q(op: &DerivativeOp, values: &[f64], np: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    out.par_chunks_mut(np).zip(&op.rows).for_each(|(row, (lo, w))| {
        for (k, wk) in w.iter().enumerate() {
            let src = &values[(lo + k) * np..(lo + k + 1) * np];
            for (o, s) in row.iter_mut().zip(src) {
                *o += wk * s;
            }
        }
    });
    out
}

/// Differentiation along the inner (p) index of a row-major `nq × np` array.
pub fn along_p(op: &DerivativeOp, values: &[f64], np: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    out.par_chunks_mut(np).zip(values.par_chunks(np)).for_each(|(o, f)| op.apply(f, o));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn classic_weights() {
        let w = weights(&[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
        let w3 = weights(&[-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0], 3);
        let expect3 = [1.0 / 8.0, -1.0, 13.0 / 8.0, 0.0, -13.0 / 8.0, 1.0, -1.0 / 8.0];
        for (a, b) in w3.iter().zip(expect3) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn quartic_differentiated_exactly() {
        let n = 21;
        let h = 0.1;
        let x: Vec<f64> = (0..n).map(|i| -1.0 + h * i as f64).collect();
        let f: Vec<f64> = x.iter().map(|v| v.powi(4) - v * v).collect();
        let mut out = vec![0.0; n];
        for (order, exact) in [
            (1, Box::new(|v: f64| 4.0 * v.powi(3) - 2.0 * v) as Box<dyn Fn(f64) -> f64>),
            (2, Box::new(|v: f64| 12.0 * v * v - 2.0)),
            (3, Box::new(|v: f64| 24.0 * v)),
        ] {
            DerivativeOp::new(n, h, order, Boundary::OneSided).unwrap().apply(&f, &mut out);
            for (o, v) in out.iter().zip(&x) {
                assert_relative_eq!(*o, exact(*v), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn zero_extension_truncates_stencil() {
        let op = DerivativeOp::new(9, 1.0, 1, Boundary::ZeroExtension).unwrap();
        assert_eq!(op.rows[0].0, 0);
        assert_eq!(op.rows[0].1.len(), 3);
        assert_eq!(op.rows[8].1.len(), 3);
        assert_eq!(op.rows[4].1.len(), 5);
    }

    #[test]
    fn too_few_points() {
        assert_eq!(DerivativeOp::new(6, 1.0, 1, Boundary::default()), Err(Error::GridTooCoarse(6)));
    }

    #[test]
    fn axis_directions() {
        let (nq, np) = (9, 8);
        let v: Vec<f64> = (0..nq * np).map(|k| ((k / np) as f64) * 2.0 + (k % np) as f64 * 3.0).collect();
        let dq = along_q(&DerivativeOp::new(nq, 1.0, 1, Boundary::OneSided).unwrap(), &v, np);
        let dp = along_p(&DerivativeOp::new(np, 1.0, 1, Boundary::OneSided).unwrap(), &v, np);
        assert!(dq.iter().all(|d| (d - 2.0).abs() < 1e-12));
        assert!(dp.iter().all(|d| (d - 3.0).abs() < 1e-12));
    }
}
