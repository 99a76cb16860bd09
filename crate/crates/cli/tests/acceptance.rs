//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the report is printed whether or not anything fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use qmoments::brackets::{bracket_axiom_suite, AxiomConfig, BracketKind};
use qmoments::dynamics::{
    conservative_fourth_order_rhs, covariance_rhs, moment_rhs, ClosureSpec, FiveMoments, InMoments,
};
use qmoments::functional::Observable;
use qmoments::model::{Covariance, PhaseVector};
use qmoments::poly::PolyObservable;
use qmoments::potential::Potential;
use qmoments::wigner::{
    comoving_step_rhs, gaussian_init, group_action, moments, step_potential_scenario, Axis, ComovingState, Frame,
    GroupElement, MoyalOrder, Translated,
};
use qmoments_cli::compare::simulate_pair;
use qmoments_cli::config::{parse_for, Config, Purpose};
use qmoments_cli::crossval::cross_validate;
use qmoments_cli::run::{simulate, simulate_comoving};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().expect("temporary directory")
}

fn shipped(name: &str, purpose: Purpose, out: &tempfile::TempDir) -> Config {
    let text = std::fs::read_to_string(configs_dir().join(name)).expect("shipped config");
    let mut cfg = parse_for(&text, purpose).expect("valid config");
    cfg.output.dir = out.path().to_path_buf();
    cfg
}

fn bracket_axioms() -> Outcome {
    let mut worst_exact = 0.0f64;
    let mut worst_fd = 0.0f64;
    for kind in [BracketKind::Canonical, BracketKind::Moment, BracketKind::Covariance] {
        let exact = bracket_axiom_suite(&AxiomConfig::new(kind, 50, 1)).expect("suite runs");
        worst_exact = worst_exact.max(exact.max_defect());
        let fd = bracket_axiom_suite(&AxiomConfig::new(kind, 50, 2).finite_difference(1e-5)).expect("suite runs");
        worst_fd = worst_fd.max(fd.antisymmetry.max(fd.leibniz).max(fd.jacobi));
    }
    outcome(
        worst_exact < 1e-10 && worst_fd < 1e-6,
        format!("analytic defect {worst_exact:.2e} (< 1e-10), differenced {worst_fd:.2e} (< 1e-6)"),
    )
}

fn j2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

fn random_state(rng: &mut ChaCha8Rng) -> (DVector<f64>, DMatrix<f64>) {
    let z = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.5..0.5));
    let sigma = &a * a.transpose() + DMatrix::identity(2, 2) * 0.5;
    (z, (&sigma + sigma.transpose()) * 0.5)
}

/// Fourth-order central differences, `dF = Tr(F_M dM)` on symmetric `M`.
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

/// Sigma points of `(z, Σ)` moved by the Liouville flow of `ℋ(ζ)`.
fn ensemble_rates(
    z: &DVector<f64>,
    sigma: &DMatrix<f64>,
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let l = sigma.clone().cholesky().expect("positive covariance").l();
    let scale = 2f64.sqrt();
    let points: Vec<_> = (0..2).flat_map(|i| [z + l.column(i) * scale, z - l.column(i) * scale]).collect();
    let mut dz = DVector::zeros(2);
    let mut dmm = DMatrix::zeros(2, 2);
    for zeta in &points {
        let v = j2() * grad(zeta);
        dz += &v * 0.25;
        dmm += (&v * zeta.transpose() + zeta * v.transpose()) * 0.25;
    }
    (dz, dmm)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pots = [(Potential::harmonic(1.3), 2), (Potential::quartic(0.7), 4), (Potential::morse(1.0, 0.8), 4)];
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (z, sigma) = random_state(&mut rng);
        let x = (&sigma + &z * z.transpose()) * 0.5;
        let mut energies: Vec<Box<dyn Observable>> = pots
            .iter()
            .map(|(p, n)| Box::new(ClosureSpec::new(p.clone(), *n).unwrap().energy()) as Box<dyn Observable>)
            .collect();
        energies.push(Box::new(PolyObservable::random(2, true, 3, 6, &mut rng)));
        for h in energies {
            let (hz, hs) = gradient(h.as_ref(), &z, &sigma);
            let (dz_ens, dmm) = ensemble_rates(&z, &sigma, |zeta| &hz + &hs * (zeta - &z) * 2.0);
            let ds_ens = &dmm - (&dz_ens * z.transpose() + &z * dz_ens.transpose());
            let (dz, ds) = covariance_rhs(h.as_ref(), &z, &sigma).unwrap();
            worst = worst.max((dz - &dz_ens).amax()).max((ds - ds_ens).amax());

            let hx = InMoments(h);
            let (gz, gx) = gradient(&hx, &z, &x);
            let (dz_ens, dmm) = ensemble_rates(&z, &sigma, |zeta| &gz + &gx * zeta);
            let (dz, dx) = moment_rhs(&hx, &z, &x).unwrap();
            worst = worst.max((dz - dz_ens).amax()).max((dx - dmm * 0.5).amax());
        }
    }
    outcome(worst < 1e-9, format!("max entrywise defect {worst:.2e} over 100 states (< 1e-9)"))
}

fn moment_config(scenario: &str, potential: &str, model: &str, closure: usize) -> Config {
    let text = format!(
        r#"{{
        "scenario": "{scenario}",
        "model": "{model}",
        "potential": {potential},
        "closure_order": {closure},
        "hbar": 0.5,
        "initial": {{"mean": [1.5, 0.0], "sigma": [[0.5, 0.0], [0.0, 0.5]]}},
        "stepper": {{"method": "adaptive", "rtol": 1e-10, "atol": 1e-12, "horizon": 100.0}}
    }}"#
    );
    parse_for(&text, Purpose::Run).expect("valid config")
}

fn conservation() -> Outcome {
    let cases = [
        ("harmonic", r#"{"k": 1.0}"#, 2),
        ("quartic", r#"{"lambda": 0.1}"#, 4),
        ("morse", r#"{"depth": 1.0, "width": 1.0}"#, 4),
    ];
    let mut worst = 0.0f64;
    let mut parts = vec![];
    for (scenario, pot, n) in cases {
        let mut case_worst = 0.0f64;
        for model in ["moment_xz", "moment_sigma"] {
            let sim = match simulate(&moment_config(scenario, pot, model, n)) {
                Ok(sim) => sim,
                Err(e) => return outcome(false, format!("{scenario}/{model}: {e}")),
            };
            for m in ["energy", "casimir_1", "casimir_det"] {
                let d = sim.record.max_relative_drift(m, 1e-300).unwrap_or(f64::INFINITY);
                case_worst = case_worst.max(d);
            }
        }
        parts.push(format!("{scenario} {case_worst:.1e}"));
        worst = worst.max(case_worst);
    }
    outcome(worst < 1e-7, format!("max relative drift of h, C1, det over t in [0,100]: {} (< 1e-7)", parts.join(", ")))
}

fn closure_comparison() -> Outcome {
    let out = scratch();
    let quartic = shipped("quartic_compare.json", Purpose::Compare, &out);
    let morse = shipped("morse_compare.json", Purpose::Compare, &out);
    let (q, m) = match (simulate_pair(&quartic), simulate_pair(&morse)) {
        (Ok(q), Ok(m)) => (q.2, m.2),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
    };
    let diff = q.max_state_difference.unwrap_or(f64::INFINITY);
    outcome(
        diff <= 1e-12 && m.ratio() >= 10.0,
        format!(
            "quartic state difference {diff:.1e} (<= 1e-12); Morse drift {:.2e} vs {:.2e}, ratio {:.1e} (>= 10)",
            m.nonconservative_drift,
            m.conservative_drift,
            m.ratio()
        ),
    )
}

fn conservative_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mut worst = 0.0f64;
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
            worst = worst.max(sup(&printed.to_array(), &expect));
        }
    }
    outcome(worst < 1e-10, format!("max defect {worst:.2e} over 100 states per potential (< 1e-10)"))
}

fn comoving_gaussian(z: [f64; 2], sigma: [f64; 3], half: f64, n: usize) -> ComovingState {
    let ax = Axis::centred(0.0, half, n).unwrap();
    let cov = Covariance::unit(DMatrix::from_row_slice(2, 2, &[sigma[0], sigma[1], sigma[1], sigma[2]])).unwrap();
    let grid = gaussian_init(&PhaseVector::zeros(1), &cov, ax, ax, Frame::Comoving).unwrap();
    ComovingState::new(grid, PhaseVector::from_slice(&z).unwrap(), 0.0).unwrap()
}

fn quadratic_exactness() -> Outcome {
    let state = comoving_gaussian([1.0, 0.3], [1.0, 0.2, 0.5], 8.0, 256);
    let h = Translated::new(Potential::harmonic(1.0)).unwrap();
    let (zc, wc) = comoving_step_rhs(&state, &h, MoyalOrder::Classical).unwrap();
    let (zm, wm) = comoving_step_rhs(&state, &h, MoyalOrder::Hbar2).unwrap();
    let rhs_gap = sup(&zc, &zm).max(sup(&wc, &wm));

    let out = scratch();
    let cfg = shipped("harmonic_grid.json", Purpose::CrossValidate, &out);
    match cross_validate(&cfg) {
        Ok(cv) => outcome(
            cv.max_deviation < 1e-4 && rhs_gap == 0.0,
            format!(
                "256^2 grid vs moment flow over t in [0,10]: {:.2e} (< 1e-4); Moyal vs classical RHS gap {rhs_gap:.1e}",
                cv.max_deviation
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn coherent_invariance() -> Outcome {
    let out = scratch();
    let cfg = shipped("coherent.json", Purpose::CrossValidate, &out);
    match cross_validate(&cfg) {
        Ok(cv) => {
            let shape = cv.shape_change.unwrap_or(f64::INFINITY);
            outcome(
                shape < 1e-8 && cv.max_deviation < 1e-7,
                format!("shape change {shape:.1e} (< 1e-8), orbit deviation {:.1e} (< 1e-7)", cv.max_deviation),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn random_element(rng: &mut ChaCha8Rng) -> GroupElement {
    let (angle, squeeze, shear) = (rng.gen_range(-3.0..3.0), rng.gen_range(-0.3..0.3), rng.gen_range(-0.4..0.4));
    let (s, c) = f64::sin_cos(angle);
    let m = Matrix2::new(c, -s, s, c)
        * Matrix2::new(f64::exp(squeeze), 0.0, 0.0, f64::exp(-squeeze))
        * Matrix2::new(1.0, shear, 0.0, 1.0);
    let shift = Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    GroupElement::new(m, shift, rng.gen_range(0.0..1.0)).unwrap()
}

fn equivariance() -> Outcome {
    let ax = Axis::centred(0.0, 9.0, 241).unwrap();
    let cov = Covariance::unit(DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.7])).unwrap();
    let grid = gaussian_init(&PhaseVector::from_slice(&[0.3, -0.2]).unwrap(), &cov, ax, ax, Frame::Lab).unwrap();
    let before = moments(&grid).unwrap();
    let tol = 2.0 * ax.spacing().powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let g = random_element(&mut rng);
        let after = moments(&group_action(&g, &grid).unwrap()).unwrap();
        let mean = g.transform_mean(&Vector2::new(before.mean.q(0), before.mean.p(0)));
        let c = g.transform_covariance(&before.covariance());
        worst = worst
            .max((after.mean.q(0) - mean[0]).abs())
            .max((after.mean.p(0) - mean[1]).abs())
            .max((after.covariance() - c).amax())
            .max((after.mass - before.mass).abs());
    }
    outcome(worst < tol, format!("max moment error {worst:.2e} over 20 elements (< 2 spacing^2 = {tol:.2e})"))
}

fn step_structure() -> Outcome {
    let mu = 0.5;
    let state = comoving_gaussian([0.0, 1.0], [1.0, 0.0, 1.0], 10.0, 201);
    let force = match step_potential_scenario(mu, &state) {
        Ok((dz, _)) => dz[1],
        Err(e) => return outcome(false, e.to_string()),
    };
    let force_err = (force + mu / (2.0 * std::f64::consts::PI).sqrt()).abs();

    let out = scratch();
    let cfg = shipped("step.json", Purpose::Run, &out);
    let sim = match simulate_comoving(&cfg) {
        Ok(sim) => sim,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mass_col = sim.columns.iter().position(|c| c == "mass").expect("mass column");
    let mass = sim.record.states.iter().map(|r| (r[mass_col] - 1.0).abs()).fold(0.0, f64::max);
    let pin = sim.record.monitor("pinning").expect("pinning monitor").iter().fold(0.0f64, |m, v| m.max(*v));
    outcome(
        force_err < 1e-5 && mass < 1e-6 && pin < 1e-5 && sim.record.final_time() >= 2.0 - 1e-12,
        format!("force error {force_err:.1e} (< 1e-5), mass deviation {mass:.1e} (< 1e-6), pinning {pin:.1e} (< 1e-5)"),
    )
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("bracket axioms", Duration::from_secs(10), bracket_axioms),
        ("oracle equivalence", Duration::from_secs(30), oracle_equivalence),
        ("Casimir and energy conservation", Duration::from_secs(60), conservation),
        ("closure comparison", Duration::from_secs(60), closure_comparison),
        ("conservative model identity", Duration::from_secs(10), conservative_identity),
        ("quadratic exactness", Duration::from_secs(300), quadratic_exactness),
        ("coherent-state invariance", Duration::from_secs(60), coherent_invariance),
        ("momentum-map equivariance", Duration::from_secs(60), equivariance),
        ("step-potential structure", Duration::from_secs(300), step_structure),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let passed = result.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "{} criterion {}: {name}: {} [{:.1} s of {} s]",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
