use torus_interp::nullpole::{check_simple_structure, SimpleNullPoleData};
use torus_interp::numerics::c;
use torus_interp::theta::ThetaEvaluator;
use torus_interp::trivialize::{
    block_theta_triv, scalar_trivialization, scalar_trivialization_zero, verify_automorphy,
    FlatFactor, InductiveTrivialization,
};
use torus_interp::{CMat, EllipticCurve, Tolerances};

fn setup() -> (EllipticCurve, ThetaEvaluator, Tolerances) {
    let curve = EllipticCurve::new(c(0.0, 1.0)).unwrap();
    let tol = Tolerances::default();
    (curve, ThetaEvaluator::new(curve, &tol), tol)
}

#[test]
fn scalar_trivialization_has_simple_structure() {
    let (curve, ev, tol) = setup();
    let alpha = c(2.0, 0.0);
    let f = scalar_trivialization(&ev, alpha).unwrap();
    let one = CMat::from_element(1, 1, c(1.0, 0.0));
    let d = SimpleNullPoleData::new(
        &curve,
        vec![(scalar_trivialization_zero(&curve, alpha), one.clone())],
        vec![(curve.reduce(curve.delta()), one)],
        1e-9,
    )
    .unwrap();
    let rep = check_simple_structure(&curve, &|u| f.eval(u), &d, &tol).unwrap();
    assert!(rep.passed, "{:#?}", rep.checks);
}

#[test]
fn block_theta_fails_simple_structure() {
    let (curve, ev, tol) = setup();
    let alpha = c(2.0, 0.0);
    let g = block_theta_triv(&ev, alpha, 2).unwrap();
    let e0 = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
    let d = SimpleNullPoleData::new(
        &curve,
        vec![
            (scalar_trivialization_zero(&curve, alpha), e0.clone()),
            (curve.reduce(c(0.2, 0.3)), e0.clone()),
        ],
        vec![
            (curve.reduce(curve.delta()), e0.clone()),
            (curve.reduce(c(0.8, 0.2)), e0),
        ],
        1e-9,
    )
    .unwrap();
    let rep = check_simple_structure(&curve, &|u| g.eval(u), &d, &tol).unwrap();
    assert!(!rep.passed);
}

fn extend_and_check(alpha: f64, rank: usize, expected_n: usize) {
    let (curve, ev, tol) = setup();
    let alpha = c(alpha, 0.0);
    let mut f = InductiveTrivialization::base(&ev, alpha, c(0.0, 0.0)).unwrap();
    while f.rank() < rank {
        f = f.extend().unwrap();
    }
    assert_eq!(f.data.n(), expected_n);
    let map = f.to_map();
    let res = verify_automorphy(
        &curve,
        &map,
        &FlatFactor::jordan(alpha, rank).unwrap(),
        20,
        11,
    )
    .unwrap();
    assert!(res < 1e-7, "automorphy {res}");
    let rep = check_simple_structure(&curve, &|u| f.eval(u), &f.data, &tol).unwrap();
    assert!(rep.passed, "{:#?}", rep.checks);
}

#[test]
fn extension_alpha_two() {
    extend_and_check(2.0, 2, 2);
}

#[test]
fn extension_alpha_two_rank_three() {
    extend_and_check(2.0, 3, 3);
}

#[test]
fn extension_alpha_one_rank_three() {
    extend_and_check(1.0, 3, 4);
}

#[test]
fn extension_alpha_one() {
    extend_and_check(1.0, 2, 2);
}

#[test]
fn extension_away_from_origin() {
    let (curve, ev, tol) = setup();
    let alpha = c(2.0, 0.0);
    let f = InductiveTrivialization::base(&ev, alpha, c(0.23, 0.41))
        .unwrap()
        .extend()
        .unwrap();
    let res = verify_automorphy(
        &curve,
        &f.to_map(),
        &FlatFactor::jordan(alpha, 2).unwrap(),
        20,
        5,
    )
    .unwrap();
    assert!(res < 1e-7, "automorphy {res}");
    let rep = check_simple_structure(&curve, &|u| f.eval(u), &f.data, &tol).unwrap();
    assert!(rep.passed, "{:#?}", rep.checks);
}
