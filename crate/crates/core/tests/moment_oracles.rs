//! Moment flows against oracles that do not share code with the library:
//! a sigma-point ensemble evolved by Liouville dynamics, and the coordinate
//! brackets.

use nalgebra::{DMatrix, DVector};
use qmoments::brackets::{evaluate, BracketKind};
use qmoments::dynamics::{
    conservative_fourth_order_rhs, covariance_rhs, moment_rhs, nonconservative_fourth_order_rhs, ClosureSpec,
    FiveMoments,
};
use qmoments::functional::{Coordinate, Observable};
use qmoments::poly::PolyObservable;
use qmoments::potential::Potential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn j2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

fn random_state(rng: &mut ChaCha8Rng) -> (DVector<f64>, DMatrix<f64>) {
    let z = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.5..0.5));
    let sigma = &a * a.transpose() + DMatrix::identity(2, 2) * 0.5;
    (z, (&sigma + sigma.transpose()) * 0.5)
}

/// Fourth-order central differences in `z` and in the symmetric matrix
/// entries, with `dF = Tr(F_M dM)`.
fn gradient(f: &dyn Observable, z: &DVector<f64>, m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let h = 1e-3;
    let d4 =
        |shift: &dyn Fn(f64) -> f64| (8.0 * (shift(h) - shift(-h)) - (shift(2.0 * h) - shift(-2.0 * h))) / (12.0 * h);
    let gz = DVector::from_fn(z.len(), |i, _| {
        d4(&|e| {
            let mut zz = z.clone();
            zz[i] += e;
            f.value(&zz, m)
        })
    });
    let gm = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        let d = d4(&|e| {
            let mut mm = m.clone();
            mm[(i, j)] += e;
            if i != j {
                mm[(j, i)] += e;
            }
            f.value(z, &mm)
        });
        if i == j {
            d
        } else {
            0.5 * d
        }
    });
    (gz, gm)
}

/// Equal-weight points with mean `z` and covariance `sigma`.
fn sigma_points(z: &DVector<f64>, sigma: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let l = sigma.clone().cholesky().unwrap().l();
    let d = z.len();
    let scale = (d as f64).sqrt();
    (0..d).flat_map(|i| [z + l.column(i) * scale, z - l.column(i) * scale]).collect()
}

/// Liouville flow of an ensemble under `ℋ(ζ)`, reported as `(ż, d⟨ζζᵀ⟩/dt)`.
fn ensemble_rates(
    points: &[DVector<f64>],
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let w = 1.0 / points.len() as f64;
    let mut dz = DVector::zeros(2);
    let mut dmm = DMatrix::zeros(2, 2);
    for zeta in points {
        let v = j2() * grad(zeta);
        dz += &v * w;
        dmm += (&v * zeta.transpose() + zeta * v.transpose()) * w;
    }
    (dz, dmm)
}

fn energies() -> Vec<(String, Box<dyn Observable>)> {
    let mut out: Vec<(String, Box<dyn Observable>)> = vec![];
    for (name, pot, n) in [
        ("harmonic", Potential::harmonic(1.3), 2),
        ("quartic", Potential::quartic(0.7), 4),
        ("morse", Potential::morse(1.0, 0.8), 4),
        ("morse3", Potential::morse(0.5, 1.2), 3),
    ] {
        out.push((name.to_string(), Box::new(ClosureSpec::new(pot, n).unwrap().energy())));
    }
    out
}

#[test]
fn moment_flow_matches_ensemble_liouville() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let (z, sigma) = random_state(&mut rng);
        let x = (&sigma + &z * z.transpose()) * 0.5;
        let poly = PolyObservable::random(2, true, 3, 6, &mut rng);
        let mut hs = energies()
            .into_iter()
            .map(|(_, e)| qmoments::dynamics::InMoments(e))
            .map(|e| Box::new(e) as Box<dyn Observable>)
            .collect::<Vec<_>>();
        hs.push(Box::new(poly));
        for h in &hs {
            let (hz, hx) = gradient(h.as_ref(), &z, &x);
            // ℋ(ζ) = H_z·ζ + ½ ζᵀ H_X ζ
            let (dz_ens, dmm) = ensemble_rates(&sigma_points(&z, &sigma), |zeta| &hz + &hx * zeta);
            let (dz, dx) = moment_rhs(h.as_ref(), &z, &x).unwrap();
            worst = worst.max((dz - dz_ens).amax()).max((dx - dmm * 0.5).amax());
        }
        assert!(worst < 1e-9, "sample {k}: defect {worst:.3e}");
    }
}

#[test]
fn covariance_flow_matches_ensemble_liouville() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (z, sigma) = random_state(&mut rng);
        let mut hs = energies().into_iter().map(|(_, e)| e).collect::<Vec<_>>();
        hs.push(Box::new(PolyObservable::random(2, true, 3, 6, &mut rng)));
        for h in &hs {
            let (hz, hs_) = gradient(h.as_ref(), &z, &sigma);
            // ℋ(ζ) = h_z·ζ + (ζ − z)ᵀ h_Σ (ζ − z)
            let (dz_ens, dmm) = ensemble_rates(&sigma_points(&z, &sigma), |zeta| &hz + &hs_ * (zeta - &z) * 2.0);
            let dsigma_ens = dmm - (&dz_ens * z.transpose() + &z * dz_ens.transpose());
            let (dz, ds) = covariance_rhs(h.as_ref(), &z, &sigma).unwrap();
            worst = worst.max((dz - dz_ens).amax()).max((ds - dsigma_ens).amax());
        }
    }
    assert!(worst < 1e-9, "defect {worst:.3e}");
}

#[test]
fn flows_match_coordinate_brackets() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let (z, sigma) = random_state(&mut rng);
        let x = (&sigma + &z * z.transpose()) * 0.5;
        for (_, e) in energies() {
            let (dz, ds) = covariance_rhs(e.as_ref(), &z, &sigma).unwrap();
            let hx = qmoments::dynamics::InMoments(e);
            let (dzx, dx) = moment_rhs(&hx, &z, &x).unwrap();
            for i in 0..2 {
                let bz = evaluate(BracketKind::Moment, &Coordinate::Mean(i), &hx, &z, &x, 1e-5).unwrap().value;
                assert!((dzx[i] - bz).abs() < 1e-9);
                assert!((dz[i] - dzx[i]).abs() < 1e-9);
            }
            for (i, j) in [(0, 0), (0, 1), (1, 1)] {
                let bx = evaluate(BracketKind::Moment, &Coordinate::Matrix(i, j), &hx, &z, &x, 1e-5).unwrap().value;
                assert!((dx[(i, j)] - bx).abs() < 1e-9);
                let bs = evaluate(BracketKind::Covariance, &Coordinate::Matrix(i, j), &hx.0, &z, &sigma, 1e-5)
                    .unwrap()
                    .value;
                assert!((ds[(i, j)] - bs).abs() < 1e-9);
                // Σ̇ = 2Ẋ − żzᵀ − zżᵀ
                let chain = 2.0 * dx[(i, j)] - dzx[i] * z[j] - z[i] * dzx[j];
                assert!((ds[(i, j)] - chain).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn printed_fourth_order_system_is_the_bracket_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for pot in [
        Potential::morse(1.0, 1.0),
        Potential::quartic(0.4),
        Potential::polynomial(vec![0.0, 0.3, -0.2, 0.5, 0.1, 0.05]),
    ] {
        let energy = ClosureSpec::new(pot.clone(), 4).unwrap().energy();
        for _ in 0..100 {
            let (z, sigma) = random_state(&mut rng);
            let printed =
                conservative_fourth_order_rhs(&pot, &FiveMoments::from_mean_and_covariance(&z, &sigma)).unwrap();
            let (dz, ds) = covariance_rhs(&energy, &z, &sigma).unwrap();
            let expect = [
                dz[0],
                dz[1],
                ds[(0, 0)] + 2.0 * z[0] * dz[0],
                ds[(1, 1)] + 2.0 * z[1] * dz[1],
                ds[(0, 1)] + dz[0] * z[1] + z[0] * dz[1],
            ];
            for (a, b) in printed.to_array().iter().zip(expect) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn closures_coincide_without_fifth_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let pot = Potential::quartic(1.0);
    for _ in 0..50 {
        let (z, sigma) = random_state(&mut rng);
        let m = FiveMoments::from_mean_and_covariance(&z, &sigma);
        assert_eq!(
            conservative_fourth_order_rhs(&pot, &m).unwrap(),
            nonconservative_fourth_order_rhs(&pot, &m).unwrap()
        );
    }
}
