//! Truncated Moyal transport `∂_t W = {{H, W}}`.

use rayon::prelude::*;

use super::grid::WignerGrid;
use super::stencil::{along_p, along_q, Boundary, DerivativeOp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MoyalOrder {
    /// Classical Poisson bracket: Liouville transport.
    #[default]
    Classical,
    /// Adds the first quantum correction, of order `ħ²`.
    Hbar2,
}

/// `H_qqq, H_qqp, H_qpp, H_ppp` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdDerivatives {
    pub qqq: Vec<f64>,
    pub qqp: Vec<f64>,
    pub qpp: Vec<f64>,
    pub ppp: Vec<f64>,
}

/// Partial derivatives of a Hamiltonian sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianFields {
    pub h_q: Vec<f64>,
    pub h_p: Vec<f64>,
    /// Only needed for [`MoyalOrder::Hbar2`].
    pub third: Option<ThirdDerivatives>,
}

/// Derivative operators of a grid, built once per shape. `W` is
/// differenced with the chosen boundary rule; Hamiltonians, which do not
/// vanish at the edges, always use one-sided closures.
#[derive(Debug, Clone)]
pub struct Differentiator {
    np: usize,
    q: [DerivativeOp; 3],
    p: [DerivativeOp; 3],
    field_q: [DerivativeOp; 3],
    field_p: [DerivativeOp; 3],
}

impl Differentiator {
    pub fn new(grid: &WignerGrid, boundary: Boundary) -> Result<Self> {
        let ops = |n, h| -> Result<[DerivativeOp; 3]> {
            Ok([
                DerivativeOp::new(n, h, 1, boundary)?,
                DerivativeOp::new(n, h, 2, boundary)?,
                DerivativeOp::new(n, h, 3, boundary)?,
            ])
        };
        let field = |n, h| -> Result<[DerivativeOp; 3]> {
            Ok([
                DerivativeOp::new(n, h, 1, Boundary::OneSided)?,
                DerivativeOp::new(n, h, 2, Boundary::OneSided)?,
                DerivativeOp::new(n, h, 3, Boundary::OneSided)?,
            ])
        };
        let (nq, hq, np, hp) = (grid.q.n, grid.q.spacing(), grid.p.n, grid.p.spacing());
        Ok(Self { np, q: ops(nq, hq)?, p: ops(np, hp)?, field_q: field(nq, hq)?, field_p: field(np, hp)? })
    }

    pub fn matches(&self, grid: &WignerGrid) -> bool {
        self.np == grid.p.n && self.q[0].len() == grid.q.n
    }

    /// `∂^order f / ∂q^order`.
    pub fn dq(&self, f: &[f64], order: usize) -> Vec<f64> {
        along_q(&self.q[order - 1], f, self.np)
    }

    pub fn dp(&self, f: &[f64], order: usize) -> Vec<f64> {
        along_p(&self.p[order - 1], f, self.np)
    }

    /// Derivatives of a smooth field that need not vanish at the edges.
    pub fn field_dq(&self, f: &[f64], order: usize) -> Vec<f64> {
        along_q(&self.field_q[order - 1], f, self.np)
    }

    pub fn field_dp(&self, f: &[f64], order: usize) -> Vec<f64> {
        along_p(&self.field_p[order - 1], f, self.np)
    }

    /// Derivative fields of a sampled Hamiltonian.
    pub fn fields(&self, h: &[f64], order: MoyalOrder) -> HamiltonianFields {
        let third = (order == MoyalOrder::Hbar2).then(|| ThirdDerivatives {
            qqq: self.field_dq(h, 3),
            qqp: self.field_dp(&self.field_dq(h, 2), 1),
            qpp: self.field_dq(&self.field_dp(h, 2), 1),
            ppp: self.field_dp(h, 3),
        });
        HamiltonianFields { h_q: self.field_dq(h, 1), h_p: self.field_dp(h, 1), third }
    }

    /// `(H_q − c_q) W_p − (H_p − c_p) W_q` plus the `ħ²` term when requested.
    /// The shifts `c` carry the co-moving counter-term and vanish in the lab.
    pub fn transport(
        &self,
        fields: &HamiltonianFields,
        shift: [f64; 2],
        w: &[f64],
        hbar: f64,
        order: MoyalOrder,
    ) -> Result<Vec<f64>> {
        let n = w.len();
        if fields.h_q.len() != n || fields.h_p.len() != n {
            return Err(Error::Dimension { expected: n, got: fields.h_q.len().min(fields.h_p.len()) });
        }
        let wq = self.dq(w, 1);
        let wp = self.dp(w, 1);
        let mut out: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|k| (fields.h_q[k] - shift[0]) * wp[k] - (fields.h_p[k] - shift[1]) * wq[k])
            .collect();
        if order == MoyalOrder::Hbar2 {
            let third = fields
                .third
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("third derivatives of H are required at order ħ²".into()))?;
            let wppp = self.dp(w, 3);
            let wqpp = self.dq(&self.dp(w, 2), 1);
            let wqqp = self.dp(&self.dq(w, 2), 1);
            let wqqq = self.dq(w, 3);
            let c = hbar * hbar / 24.0;
            out.par_iter_mut().enumerate().for_each(|(k, o)| {
                *o -= c
                    * (third.qqq[k] * wppp[k] - 3.0 * third.qqp[k] * wqpp[k] + 3.0 * third.qpp[k] * wqqp[k]
                        - third.ppp[k] * wqqq[k]);
            });
        }
        Ok(out)
    }
}

/// `{{H, W}}` for a Hamiltonian sampled on the grid; every derivative is
/// taken by fourth-order finite differences.
pub fn moyal_rhs(h: &[f64], grid: &WignerGrid, order: MoyalOrder) -> Result<Vec<f64>> {
    if h.len() != grid.values.len() {
        return Err(Error::Dimension { expected: grid.values.len(), got: h.len() });
    }
    let d = Differentiator::new(grid, Boundary::default())?;
    d.transport(&d.fields(h, order), [0.0; 2], &grid.values, grid.hbar, order)
}

/// `{{H, W}}` from derivative fields supplied by the caller.
pub fn moyal_rhs_fields(fields: &HamiltonianFields, grid: &WignerGrid, order: MoyalOrder) -> Result<Vec<f64>> {
    let d = Differentiator::new(grid, Boundary::default())?;
    d.transport(fields, [0.0; 2], &grid.values, grid.hbar, order)
}

/// `|∫ a {{b, c}} − ∫ c {{a, b}}|` by the trapezoid rule.
pub fn moyal_permutation_check(a: &[f64], b: &[f64], c: &[f64], grid: &WignerGrid, order: MoyalOrder) -> Result<f64> {
    let bc = moyal_rhs(b, &grid.with_values(c.to_vec()), order)?;
    let ab = moyal_rhs(a, &grid.with_values(b.to_vec()), order)?;
    let unit = grid.with_values(vec![1.0; grid.values.len()]);
    let lhs: f64 = unit.integrate_field(&a.iter().zip(&bc).map(|(x, y)| x * y).collect::<Vec<_>>());
    let rhs: f64 = unit.integrate_field(&c.iter().zip(&ab).map(|(x, y)| x * y).collect::<Vec<_>>());
    Ok((lhs - rhs).abs())
}
