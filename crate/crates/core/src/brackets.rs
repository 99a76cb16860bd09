//! Poisson brackets on functionals of the moments, their Casimirs, and a
//! numerical check of the bracket axioms.
//!
//! Three brackets are provided:
//!
//! * canonical: `{F, G}_c = F_z · J G_z`
//! * moment, on `(z, X)` with `X = ⟨ζζ⟩/2`:
//!   `{F, G}_c + z·(F_X J G_z − G_X J F_z) + Tr(X [F_X J G_X − G_X J F_X])`
//! * covariance, on `(z, Σ)` with `Σ = 2X − zzᵀ`:
//!   `{F, G}_z + 2 Tr(Σ [F_Σ J G_Σ − G_Σ J F_Σ])`
//!
//! The moment and covariance brackets are linear in the point, which lets
//! [`poisson_tensor`] express them as polynomials and makes the Jacobi
//! identity checkable to roundoff.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functional::{coordinates, gradient_of, Gradient, GradientMethod, Observable, Product, DEFAULT_FD_STEP};
use crate::model::{symmetrize, Covariance, PhaseVector, SecondMoment, SymplecticForm};
use crate::poly::{variable_count, PolyObservable, Polynomial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BracketKind {
    Canonical,
    Moment,
    Covariance,
}

impl BracketKind {
    pub fn name(self) -> &'static str {
        match self {
            BracketKind::Canonical => "canonical",
            BracketKind::Moment => "moment",
            BracketKind::Covariance => "covariance",
        }
    }

    fn with_matrix(self) -> bool {
        !matches!(self, BracketKind::Canonical)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketReport {
    pub value: f64,
    pub method: GradientMethod,
}

impl BracketReport {
    pub fn fd_step(&self) -> Option<f64> {
        match self.method {
            GradientMethod::Analytic => None,
            GradientMethod::FiniteDifference { step } => Some(step),
        }
    }
}

/// Bracket value from the two gradients at `(z, m)`.
pub fn bracket_from_gradients(
    kind: BracketKind,
    j: &DMatrix<f64>,
    z: &DVector<f64>,
    m: &DMatrix<f64>,
    f: &Gradient,
    g: &Gradient,
) -> f64 {
    let canonical = f.z.dot(&(j * &g.z));
    match kind {
        BracketKind::Canonical => canonical,
        BracketKind::Moment => {
            let mixed = z.dot(&(&f.m * j * &g.z - &g.m * j * &f.z));
            let quad = (m * (&f.m * j * &g.m - &g.m * j * &f.m)).trace();
            canonical + mixed + quad
        }
        BracketKind::Covariance => canonical + 2.0 * (m * (&f.m * j * &g.m - &g.m * j * &f.m)).trace(),
    }
}

fn combine(a: GradientMethod, b: GradientMethod) -> GradientMethod {
    match (a, b) {
        (GradientMethod::Analytic, GradientMethod::Analytic) => GradientMethod::Analytic,
        (GradientMethod::FiniteDifference { step }, _) | (_, GradientMethod::FiniteDifference { step }) => {
            GradientMethod::FiniteDifference { step }
        }
    }
}

/// Generic evaluation at a raw point; the typed entry points below wrap it.
pub fn evaluate(
    kind: BracketKind,
    f: &dyn Observable,
    g: &dyn Observable,
    z: &DVector<f64>,
    m: &DMatrix<f64>,
    fd_step: f64,
) -> Result<BracketReport> {
    let j = SymplecticForm::for_dim(z.len())?;
    let (gf, mf) = gradient_of(f, z, m, fd_step)?;
    let (gg, mg) = gradient_of(g, z, m, fd_step)?;
    let value = bracket_from_gradients(kind, j.matrix(), z, m, &gf, &gg);
    if !value.is_finite() {
        return Err(Error::SingularDifference(fd_step));
    }
    Ok(BracketReport { value, method: combine(mf, mg) })
}

/// `{f, g}_c = ∇f · J∇g` for scalar fields on phase space, by central differences.
pub fn canonical_bracket<F, G>(f: F, g: G, at: &PhaseVector, step: f64) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> f64 + Send + Sync,
{
    let fo = move |z: &DVector<f64>, _: &DMatrix<f64>| f(z);
    let go = move |z: &DVector<f64>, _: &DMatrix<f64>| g(z);
    let empty = DMatrix::zeros(0, 0);
    if !fo.value(at.vector(), &empty).is_finite() || !go.value(at.vector(), &empty).is_finite() {
        return Err(Error::NonFinite("field evaluation"));
    }
    evaluate(BracketKind::Canonical, &fo, &go, at.vector(), &empty, step).map(|r| r.value)
}

/// Moment bracket at `(z, X)`.
pub fn moment_bracket(
    f: &dyn Observable,
    g: &dyn Observable,
    z: &PhaseVector,
    x: &SecondMoment,
    fd_step: f64,
) -> Result<BracketReport> {
    check_dims(z, x.matrix())?;
    evaluate(BracketKind::Moment, f, g, z.vector(), x.matrix(), fd_step)
}

/// Covariance bracket at `(z, ħΣ)`.
pub fn covariance_bracket(
    f: &dyn Observable,
    g: &dyn Observable,
    z: &PhaseVector,
    cov: &Covariance,
    fd_step: f64,
) -> Result<BracketReport> {
    let sigma = cov.physical();
    check_dims(z, &sigma)?;
    evaluate(BracketKind::Covariance, f, g, z.vector(), &sigma, fd_step)
}

fn check_dims(z: &PhaseVector, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != z.vector().len() {
        return Err(Error::Dimension { expected: z.vector().len(), got: m.nrows() });
    }
    Ok(())
}

fn check_casimir_index(j: usize) -> Result<()> {
    if (1..=3).contains(&j) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("Casimir index must be 1, 2 or 3, got {j}")))
    }
}

/// `C_j = (1/2j) Tr[((X − ½zzᵀ) J)^{2j}]`.
pub fn casimir(j: usize, z: &PhaseVector, x: &SecondMoment) -> Result<f64> {
    check_casimir_index(j)?;
    check_dims(z, x.matrix())?;
    Ok(MomentCasimir::new(j).value(z.vector(), x.matrix()))
}

/// `det(2X − zzᵀ)`.
pub fn casimir_det(z: &PhaseVector, x: &SecondMoment) -> Result<f64> {
    check_dims(z, x.matrix())?;
    Ok(MomentCasimirDet.value(z.vector(), x.matrix()))
}

fn trace_power_gradient(a: &DMatrix<f64>, jm: &DMatrix<f64>, j: usize) -> (f64, DMatrix<f64>) {
    let aj = a * jm;
    let mut pow = DMatrix::identity(a.nrows(), a.nrows());
    for _ in 0..(2 * j - 1) {
        pow = &pow * &aj;
    }
    let value = (&pow * &aj).trace() / (2 * j) as f64;
    (value, symmetrize(&(jm * pow)))
}

/// `C_j` as an observable of `(z, X)`, with exact partials.
#[derive(Debug, Clone, Copy)]
pub struct MomentCasimir {
    j: usize,
}

impl MomentCasimir {
    pub fn new(j: usize) -> Self {
        assert!((1..=3).contains(&j));
        Self { j }
    }
}

impl Observable for MomentCasimir {
    fn value(&self, z: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
        let jm = SymplecticForm::for_dim(z.len()).expect("even dimension");
        let a = x - z * z.transpose() * 0.5;
        trace_power_gradient(&a, jm.matrix(), self.j).0
    }

    fn gradient(&self, z: &DVector<f64>, x: &DMatrix<f64>) -> Option<Gradient> {
        let jm = SymplecticForm::for_dim(z.len()).ok()?;
        let a = x - z * z.transpose() * 0.5;
        let (_, k) = trace_power_gradient(&a, jm.matrix(), self.j);
        Some(Gradient { z: -(&k * z), m: k })
    }
}

/// `det(2X − zzᵀ)` as an observable of `(z, X)`.
#[derive(Debug, Clone, Copy)]
pub struct MomentCasimirDet;

impl Observable for MomentCasimirDet {
    fn value(&self, z: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
        (x * 2.0 - z * z.transpose()).determinant()
    }

    fn gradient(&self, z: &DVector<f64>, x: &DMatrix<f64>) -> Option<Gradient> {
        let sigma = x * 2.0 - z * z.transpose();
        let det = sigma.determinant();
        let adj = symmetrize(&(sigma.try_inverse()? * det));
        Some(Gradient { z: -(&adj * z) * 2.0, m: adj * 2.0 })
    }
}

/// `C_j` written in the covariance: `(1/2j) Tr[((Σ/2) J)^{2j}]`.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceCasimir {
    j: usize,
}

impl CovarianceCasimir {
    pub fn new(j: usize) -> Self {
        assert!((1..=3).contains(&j));
        Self { j }
    }
}

impl Observable for CovarianceCasimir {
    fn value(&self, z: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
        let jm = SymplecticForm::for_dim(z.len()).expect("even dimension");
        trace_power_gradient(&(sigma * 0.5), jm.matrix(), self.j).0
    }

    fn gradient(&self, z: &DVector<f64>, sigma: &DMatrix<f64>) -> Option<Gradient> {
        let jm = SymplecticForm::for_dim(z.len()).ok()?;
        let (_, k) = trace_power_gradient(&(sigma * 0.5), jm.matrix(), self.j);
        Some(Gradient { z: DVector::zeros(z.len()), m: k * 0.5 })
    }
}

/// `det Σ` as an observable of `(z, Σ)`.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceCasimirDet;

impl Observable for CovarianceCasimirDet {
    fn value(&self, _z: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
        sigma.determinant()
    }

    fn gradient(&self, z: &DVector<f64>, sigma: &DMatrix<f64>) -> Option<Gradient> {
        let det = sigma.determinant();
        Some(Gradient { z: DVector::zeros(z.len()), m: symmetrize(&(sigma.clone().try_inverse()? * det)) })
    }
}

/// Bracket of coordinate pairs `{u_a, u_b}` as affine polynomials in the
/// packed coordinates `u` (mean entries, then the matrix upper triangle).
pub fn poisson_tensor(kind: BracketKind, dim: usize) -> Result<Vec<Vec<Polynomial>>> {
    let jm = SymplecticForm::for_dim(dim)?;
    let with_matrix = kind.with_matrix();
    let coords: Vec<_> = coordinates(dim).into_iter().take(variable_count(dim, with_matrix)).collect();
    let nvars = coords.len();
    let md = if with_matrix { dim } else { 0 };
    let grads: Vec<Gradient> = coords
        .iter()
        .map(|c| {
            let mut g = c.unit_gradient(dim);
            if !with_matrix {
                g.m = DMatrix::zeros(0, 0);
            }
            g
        })
        .collect();
    // Unit points: the single coordinate set to 1 (both symmetric entries).
    let points: Vec<(DVector<f64>, DMatrix<f64>)> = std::iter::once((DVector::zeros(dim), DMatrix::zeros(md, md)))
        .chain(coords.iter().map(|c| {
            let mut z = DVector::zeros(dim);
            let mut m = DMatrix::zeros(md, md);
            match *c {
                crate::functional::Coordinate::Mean(i) => z[i] = 1.0,
                crate::functional::Coordinate::Matrix(i, k) => {
                    m[(i, k)] = 1.0;
                    m[(k, i)] = 1.0;
                }
            }
            (z, m)
        }))
        .collect();
    let mut tensor = vec![vec![Polynomial::zero(nvars); nvars]; nvars];
    for a in 0..nvars {
        for b in 0..nvars {
            let vals: Vec<f64> = points
                .iter()
                .map(|(z, m)| bracket_from_gradients(kind, jm.matrix(), z, m, &grads[a], &grads[b]))
                .collect();
            let mut p = Polynomial::constant(nvars, vals[0]);
            for c in 0..nvars {
                let coeff = vals[c + 1] - vals[0];
                if coeff != 0.0 {
                    p = p.add(&Polynomial::variable(nvars, c).scale(coeff));
                }
            }
            tensor[a][b] = p;
        }
    }
    Ok(tensor)
}

/// `{F, G}` as a polynomial, for polynomial observables.
pub fn bracket_polynomial(tensor: &[Vec<Polynomial>], f: &PolyObservable, g: &PolyObservable) -> PolyObservable {
    let nvars = f.poly().nvars();
    let df: Vec<Polynomial> = (0..nvars).map(|a| f.poly().derivative(a)).collect();
    let dg: Vec<Polynomial> = (0..nvars).map(|b| g.poly().derivative(b)).collect();
    let mut out = Polynomial::zero(nvars);
    for a in 0..nvars {
        for b in 0..nvars {
            if tensor[a][b].degree() == 0 && tensor[a][b].eval(&vec![0.0; nvars]) == 0.0 {
                continue;
            }
            out = out.add(&tensor[a][b].mul(&df[a]).mul(&dg[b]));
        }
    }
    PolyObservable::new(f.dim(), f.with_matrix(), out)
}

/// Hides any analytic gradient so that evaluation goes through differences.
struct Differenced<'a>(&'a dyn Observable);

impl Observable for Differenced<'_> {
    fn value(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
        self.0.value(z, m)
    }
}

/// `{G, H}` evaluated pointwise through differenced gradients.
struct NestedBracket<'a> {
    kind: BracketKind,
    g: &'a dyn Observable,
    h: &'a dyn Observable,
    step: f64,
}

impl Observable for NestedBracket<'_> {
    fn value(&self, z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
        evaluate(self.kind, &Differenced(self.g), &Differenced(self.h), z, m, self.step)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomConfig {
    pub kind: BracketKind,
    pub samples: usize,
    pub seed: u64,
    pub dof: usize,
    /// `None` uses exact polynomial partials.
    pub fd_step: Option<f64>,
    pub max_degree: u32,
    pub terms: usize,
}

impl AxiomConfig {
    pub fn new(kind: BracketKind, samples: usize, seed: u64) -> Self {
        Self { kind, samples, seed, dof: 1, fd_step: None, max_degree: 3, terms: 6 }
    }

    pub fn finite_difference(mut self, step: f64) -> Self {
        self.fd_step = Some(step);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub kind: BracketKind,
    pub samples: usize,
    pub fd_step: Option<f64>,
    pub antisymmetry: f64,
    pub leibniz: f64,
    pub jacobi: f64,
    /// Largest `|{C, F}|` over the Casimirs; absent for the canonical bracket.
    pub casimir: Option<f64>,
}

impl AxiomReport {
    pub fn max_defect(&self) -> f64 {
        [self.antisymmetry, self.leibniz, self.jacobi, self.casimir.unwrap_or(0.0)].into_iter().fold(0.0, f64::max)
    }

    pub fn csv_header() -> &'static str {
        "bracket,mode,samples,antisymmetry,leibniz,jacobi,casimir"
    }

    pub fn csv_row(&self) -> String {
        let mode = match self.fd_step {
            Some(h) => format!("fd({h:e})"),
            None => "analytic".to_string(),
        };
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{:.6e},{:.6e},{:.6e},",
            self.kind.name(),
            mode,
            self.samples,
            self.antisymmetry,
            self.leibniz,
            self.jacobi
        );
        match self.casimir {
            Some(c) => {
                let _ = write!(s, "{c:.6e}");
            }
            None => s.push_str("NA"),
        }
        s
    }
}

/// Random point suited to `kind`: `z` uniform in `[−1, 1]`, covariance
/// `AAᵀ + ½I` with `A` uniform in `[−½, ½]`.
pub fn random_point<R: Rng>(kind: BracketKind, dof: usize, rng: &mut R) -> (DVector<f64>, DMatrix<f64>) {
    let (z, sigma) = random_state(dof, rng);
    let m = match kind {
        BracketKind::Canonical => DMatrix::zeros(0, 0),
        BracketKind::Moment => (&sigma + &z * z.transpose()) * 0.5,
        BracketKind::Covariance => sigma,
    };
    (z, m)
}

/// Random mean and positive definite covariance.
pub fn random_state<R: Rng>(dof: usize, rng: &mut R) -> (DVector<f64>, DMatrix<f64>) {
    let dim = 2 * dof;
    let z = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-0.5..0.5));
    let sigma = symmetrize(&(&a * a.transpose())) + DMatrix::identity(dim, dim) * 0.5;
    (z, sigma)
}

fn casimirs_for(kind: BracketKind) -> Vec<Box<dyn Observable>> {
    match kind {
        BracketKind::Canonical => vec![],
        BracketKind::Moment => vec![
            Box::new(MomentCasimir::new(1)),
            Box::new(MomentCasimir::new(2)),
            Box::new(MomentCasimir::new(3)),
            Box::new(MomentCasimirDet),
        ],
        BracketKind::Covariance => vec![
            Box::new(CovarianceCasimir::new(1)),
            Box::new(CovarianceCasimir::new(2)),
            Box::new(CovarianceCasimir::new(3)),
            Box::new(CovarianceCasimirDet),
        ],
    }
}

#[derive(Default)]
struct Defects {
    antisymmetry: f64,
    leibniz: f64,
    jacobi: f64,
    casimir: f64,
}

fn sample_defects(cfg: &AxiomConfig, tensor: &[Vec<Polynomial>], index: usize) -> Result<Defects> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    let dim = 2 * cfg.dof;
    let with_matrix = cfg.kind.with_matrix();
    let f = PolyObservable::random(dim, with_matrix, cfg.max_degree, cfg.terms, &mut rng);
    let g = PolyObservable::random(dim, with_matrix, cfg.max_degree, cfg.terms, &mut rng);
    let h = PolyObservable::random(dim, with_matrix, cfg.max_degree, cfg.terms, &mut rng);
    let (z, m) = random_point(cfg.kind, cfg.dof, &mut rng);
    let kind = cfg.kind;
    let step = cfg.fd_step.unwrap_or(DEFAULT_FD_STEP);

    let br = |a: &dyn Observable, b: &dyn Observable| -> Result<f64> {
        match cfg.fd_step {
            Some(s) => evaluate(kind, &Differenced(a), &Differenced(b), &z, &m, s).map(|r| r.value),
            None => evaluate(kind, a, b, &z, &m, step).map(|r| r.value),
        }
    };

    let mut d = Defects { antisymmetry: (br(&f, &g)? + br(&g, &f)?).abs(), ..Default::default() };

    let fg = Product(f.clone(), g.clone());
    let leibniz = br(&fg, &h)? - br(&f, &h)? * g.value(&z, &m) - f.value(&z, &m) * br(&g, &h)?;
    d.leibniz = leibniz.abs();

    d.jacobi = match cfg.fd_step {
        Some(s) => {
            let gh = NestedBracket { kind, g: &g, h: &h, step: s };
            let hf = NestedBracket { kind, g: &h, h: &f, step: s };
            let fgb = NestedBracket { kind, g: &f, h: &g, step: s };
            (br(&f, &gh)? + br(&g, &hf)? + br(&h, &fgb)?).abs()
        }
        None => {
            let gh = bracket_polynomial(tensor, &g, &h);
            let hf = bracket_polynomial(tensor, &h, &f);
            let fgb = bracket_polynomial(tensor, &f, &g);
            (br(&f, &gh)? + br(&g, &hf)? + br(&h, &fgb)?).abs()
        }
    };

    for c in casimirs_for(kind) {
        d.casimir = d.casimir.max(br(c.as_ref(), &f)?.abs());
    }
    Ok(d)
}

/// Maximum axiom defects over `cfg.samples` random observables and points.
/// Samples are independent and evaluated in parallel with per-sample seeds.
pub fn bracket_axiom_suite(cfg: &AxiomConfig) -> Result<AxiomReport> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let tensor = poisson_tensor(cfg.kind, 2 * cfg.dof)?;
    let all: Vec<Defects> =
        (0..cfg.samples).into_par_iter().map(|i| sample_defects(cfg, &tensor, i)).collect::<Result<_>>()?;
    let max = |sel: fn(&Defects) -> f64| all.iter().map(sel).fold(0.0, f64::max);
    Ok(AxiomReport {
        kind: cfg.kind,
        samples: cfg.samples,
        fd_step: cfg.fd_step,
        antisymmetry: max(|d| d.antisymmetry),
        leibniz: max(|d| d.leibniz),
        jacobi: max(|d| d.jacobi),
        casimir: if cfg.kind == BracketKind::Canonical { None } else { Some(max(|d| d.casimir)) },
    })
}
