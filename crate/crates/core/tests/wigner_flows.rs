//! Grid Wigner evolution checked against exact moment dynamics and the
//! structural properties of the co-moving frame.

use nalgebra::{DMatrix, Matrix2, Vector2};
use qmoments::integrate::{integrate, StepperConfig};
use qmoments::model::{Covariance, PhaseVector};
use qmoments::potential::Potential;
use qmoments::wigner::{
    comoving_step_rhs, evolve_comoving, evolve_lab, gaussian_init, group_action, moments, step_potential_scenario,
    Axis, Coherent, ComovingFlow, ComovingState, Frame, GroupElement, MoyalOrder, Sampled, Translated,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn comoving_gaussian(z: [f64; 2], sigma: [f64; 3], half: f64, n: usize) -> ComovingState {
    let ax = Axis::centred(0.0, half, n).unwrap();
    let cov = Covariance::unit(DMatrix::from_row_slice(2, 2, &[sigma[0], sigma[1], sigma[1], sigma[2]])).unwrap();
    let grid = gaussian_init(&PhaseVector::zeros(1), &cov, ax, ax, Frame::Comoving).unwrap();
    ComovingState::new(grid, PhaseVector::from_slice(&z).unwrap(), 0.0).unwrap()
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn harmonic_grid_moments_follow_the_exact_rotation() {
    let state = comoving_gaussian([1.0, 0.0], [1.0, 0.0, 0.25], 8.0, 128);
    let h = Translated::new(Potential::harmonic(1.0)).unwrap();
    let flow = ComovingFlow::new(&state.grid, MoyalOrder::Hbar2).unwrap();
    let run = evolve_comoving(&flow, &h, &state, &StepperConfig::rk4(0.01, 3.0)).unwrap();
    let m0 = moments(&state.grid).unwrap();
    let c0 = m0.covariance();
    let c0 = Matrix2::new(c0[(0, 0)], c0[(0, 1)], c0[(1, 0)], c0[(1, 1)]);
    let mut worst = 0.0f64;
    for (t, row) in run.record.times.iter().zip(&run.record.states) {
        let (c, s) = (t.cos(), t.sin());
        let r = Matrix2::new(c, s, -s, c);
        let mean = r * Vector2::new(1.0, 0.0);
        let cov = r * c0 * r.transpose();
        let expect = [mean[0], mean[1], cov[(0, 0)], cov[(0, 1)], cov[(1, 1)], m0.mass];
        worst = worst.max(sup(&row[2..], &expect));
    }
    assert!(worst < 1e-4, "max moment deviation {worst:.3e}");
}

#[test]
fn quadratic_hamiltonian_has_no_moyal_correction() {
    let state = comoving_gaussian([0.5, -0.3], [1.0, 0.2, 0.6], 8.0, 96);
    let quad = Sampled(|q: f64, p: f64| 0.5 * p * p + 0.4 * q * q + 0.3 * q * p);
    let (zc, wc) = comoving_step_rhs(&state, &quad, MoyalOrder::Classical).unwrap();
    let (zm, wm) = comoving_step_rhs(&state, &quad, MoyalOrder::Hbar2).unwrap();
    assert!(sup(&zc, &zm) < 1e-14);
    let scale = wc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // sampled third derivatives of a quadratic vanish up to roundoff
    assert!(sup(&wc, &wm) < 1e-8 * scale);
}

#[test]
fn coherent_state_shape_is_frozen() {
    let pot = Potential::morse(1.0, 0.8);
    let state = comoving_gaussian([0.7, 0.3], [0.5, 0.0, 0.5], 7.0, 81);
    let h = Coherent { potential: pot.clone() };
    let flow = ComovingFlow::new(&state.grid, MoyalOrder::Hbar2).unwrap();
    let cfg = StepperConfig::adaptive(1e-10, 5.0);
    let run = evolve_comoving(&flow, &h, &state, &cfg).unwrap();
    assert!(sup(&run.final_grid.values, &state.grid.values) < 1e-8);

    let mut classical = |_t: f64, y: &[f64], out: &mut [f64]| {
        out[0] = y[1];
        out[1] = -pot.derivative(1, y[0])?;
        Ok(())
    };
    let orbit = integrate(&mut classical, &[0.7, 0.3], &cfg, &[]).unwrap();
    assert!(sup(&run.final_origin, &orbit.final_state) < 1e-7);
}

#[test]
fn step_force_is_the_marginal_at_the_wall() {
    let mu = 0.5;
    for q0 in [0.0, -1.0, 0.8] {
        let state = comoving_gaussian([q0, 1.0], [1.0, 0.0, 1.0], 10.0, 201);
        let (dz, _) = step_potential_scenario(mu, &state).unwrap();
        let density = (-0.5 * q0 * q0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((dz[1] + mu * density).abs() < 1e-5, "q0={q0}: {}", dz[1]);
        assert!((dz[0] - 1.0).abs() < 1e-12);
    }
    let far = comoving_gaussian([12.0, 1.0], [1.0, 0.0, 1.0], 10.0, 201);
    assert!(step_potential_scenario(mu, &far).is_err());
}

#[test]
fn step_run_keeps_mass_and_pinning() {
    let state = comoving_gaussian([-1.0, 1.0], [1.0, 0.0, 1.0], 10.0, 129);
    let h = qmoments::wigner::StepHamiltonian { height: 0.5 };
    let flow = ComovingFlow::new(&state.grid, MoyalOrder::Classical).unwrap();
    let run = evolve_comoving(&flow, &h, &state, &StepperConfig::rk4(0.01, 1.0)).unwrap();
    let mass = run.record.states.iter().map(|r| r[7]).fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
    assert!(mass < 1e-6, "mass {mass:.3e}");
    let pin = run.record.monitor("pinning").unwrap().iter().fold(0.0f64, |m, v| m.max(*v));
    assert!(pin < 1e-5, "pinning {pin:.3e}");
}

#[test]
fn lab_frame_quartic_conserves_mass() {
    let ax = Axis::centred(0.0, 8.0, 161).unwrap();
    let cov = Covariance::new(DMatrix::identity(2, 2), 0.5).unwrap();
    let grid = gaussian_init(&PhaseVector::from_slice(&[0.5, 0.0]).unwrap(), &cov, ax, ax, Frame::Lab).unwrap();
    let h = Sampled(|q: f64, p: f64| 0.5 * (p * p + q * q) + 0.05 * q.powi(4));
    let flow = ComovingFlow::new(&grid, MoyalOrder::Hbar2).unwrap();
    let run = evolve_lab(&flow, &h, &grid, &StepperConfig::rk4(0.0005, 0.25)).unwrap();
    let m0 = grid.mass();
    assert!((run.final_grid.mass() - m0).abs() < 1e-10 * m0);
    let e = run.record.monitor("energy").unwrap();
    assert!((e[e.len() - 1] - e[0]).abs() < 1e-4 * e[0].abs());
}

fn random_element(rng: &mut ChaCha8Rng) -> GroupElement {
    let (angle, squeeze, shear) = (rng.gen_range(-3.0..3.0), rng.gen_range(-0.3..0.3), rng.gen_range(-0.4..0.4));
    let (c, s) = f64::sin_cos(angle);
    let m = Matrix2::new(c, -s, s, c)
        * Matrix2::new(f64::exp(squeeze), 0.0, 0.0, f64::exp(-squeeze))
        * Matrix2::new(1.0, shear, 0.0, 1.0);
    let shift = Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    GroupElement::new(m, shift, rng.gen_range(0.0..1.0)).unwrap()
}

#[test]
fn moments_are_equivariant_under_the_group() {
    let ax = Axis::centred(0.0, 9.0, 241).unwrap();
    let cov = Covariance::unit(DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.7])).unwrap();
    let grid = gaussian_init(&PhaseVector::from_slice(&[0.3, -0.2]).unwrap(), &cov, ax, ax, Frame::Lab).unwrap();
    let before = moments(&grid).unwrap();
    let tol = 2.0 * ax.spacing().powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let g = random_element(&mut rng);
        let after = moments(&group_action(&g, &grid).unwrap()).unwrap();
        let mean = g.transform_mean(&Vector2::new(before.mean.q(0), before.mean.p(0)));
        let c = g.transform_covariance(&before.covariance());
        assert!((after.mean.q(0) - mean[0]).abs() < tol && (after.mean.p(0) - mean[1]).abs() < tol);
        assert!((after.covariance() - c).amax() < tol, "{:?}", g);
        assert!((after.mass - before.mass).abs() < tol);
    }
}

#[test]
fn comoving_translation_of_sampled_matches_analytic_fields() {
    let state = comoving_gaussian([0.4, 0.2], [0.7, 0.1, 0.9], 8.0, 101);
    let pot = Potential::quartic(0.3);
    let analytic = Translated::new(pot.clone()).unwrap();
    let sampled = Sampled(move |q: f64, p: f64| 0.5 * p * p + pot.value(q).unwrap());
    for order in [MoyalOrder::Classical, MoyalOrder::Hbar2] {
        let (za, wa) = comoving_step_rhs(&state, &analytic, order).unwrap();
        let (zs, ws) = comoving_step_rhs(&state, &sampled, order).unwrap();
        assert!(sup(&za, &zs) < 1e-6);
        let scale = wa.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup(&wa, &ws) < 1e-3 * scale);
    }
}
