use qmoments::brackets::{bracket_axiom_suite, AxiomConfig, BracketKind};

const KINDS: [BracketKind; 3] = [BracketKind::Canonical, BracketKind::Moment, BracketKind::Covariance];

#[test]
fn exact_partials_satisfy_the_axioms() {
    for kind in KINDS {
        for dof in [1, 2] {
            let cfg = AxiomConfig { dof, ..AxiomConfig::new(kind, 60, 3) };
            let r = bracket_axiom_suite(&cfg).unwrap();
            assert!(r.max_defect() < 1e-10, "{} dof={dof}: {r:?}", kind.name());
        }
    }
}

#[test]
fn differenced_partials_satisfy_the_axioms() {
    for kind in KINDS {
        let r = bracket_axiom_suite(&AxiomConfig::new(kind, 60, 4).finite_difference(1e-5)).unwrap();
        assert!(r.antisymmetry.max(r.leibniz).max(r.jacobi) < 1e-6, "{}: {r:?}", kind.name());
        assert_eq!(r.fd_step, Some(1e-5));
    }
}

#[test]
fn suite_is_reproducible() {
    let cfg = AxiomConfig::new(BracketKind::Moment, 20, 9).finite_difference(1e-5);
    assert_eq!(bracket_axiom_suite(&cfg).unwrap(), bracket_axiom_suite(&cfg).unwrap());
    assert!(bracket_axiom_suite(&AxiomConfig::new(BracketKind::Moment, 0, 9)).is_err());
}
