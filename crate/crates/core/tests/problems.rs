use std::io::Write;

use proptest::prelude::*;
use qnpe::problems::{load_matrix_market, log_spaced_spectrum, make_logistic, make_quadratic, parse_matrix_market};
use qnpe::{Matrix, Objective, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_vector(d: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

fn assert_gradient_matches_values<O: Objective>(obj: &O, x: &Vector, dir: &Vector) {
    let h = 1e-5;
    let f = |v: &Vector| obj.value(v).unwrap();
    let fd = (f(&(x + dir * h)) - f(&(x - dir * h))) / (2.0 * h);
    let analytic = obj.grad(x).dot(dir);
    assert!((fd - analytic).abs() <= 1e-6 * analytic.abs().max(1.0), "fd {fd} vs {analytic}");
}

#[test]
fn quadratic_gradient_and_minimizer() {
    let q = make_quadratic(50, 1.0, 1e3, 7).unwrap();
    let xs = q.minimizer().unwrap();
    assert!(q.grad(xs).norm() <= 1e-10 * q.b.norm().max(1.0));
    let ev = q.a.clone().symmetric_eigenvalues();
    assert!((ev.min() - 1.0).abs() <= 1e-9 && (ev.max() - 1e3).abs() <= 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_gradient_matches_values(&q, &gaussian_vector(50, &mut rng), &gaussian_vector(50, &mut rng));
}

#[test]
fn logistic_derivatives_and_curvature_bounds() {
    let l = make_logistic(200, 20, 0.01, 3).unwrap();
    let curv = l.curvature();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let x = gaussian_vector(20, &mut rng);
        let dir = gaussian_vector(20, &mut rng);
        assert_gradient_matches_values(&l, &x, &dir);

        let h = 1e-5;
        let fd = (l.grad(&(&x + &dir * h)) - l.grad(&(&x - &dir * h))) / (2.0 * h);
        let hv = l.hessian(&x).unwrap() * &dir;
        assert!((fd - &hv).norm() <= 1e-6 * hv.norm().max(1.0));

        let ev = l.hessian(&x).unwrap().symmetric_eigenvalues();
        assert!(ev.min() >= curv.mu - 1e-12 && ev.max() <= curv.l1 + 1e-12);
    }
    let xs = l.minimizer().unwrap();
    assert!(l.grad(xs).norm() <= 1e-12);
}

#[test]
fn logistic_hessian_is_lipschitz_with_reported_constant() {
    let l = make_logistic(60, 5, 0.1, 4).unwrap();
    let l2 = l.curvature().l2.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x = gaussian_vector(5, &mut rng);
        let z = gaussian_vector(5, &mut rng);
        let diff = l.hessian(&x).unwrap() - l.hessian(&z).unwrap();
        let op = diff.symmetric_eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(op <= l2 * (&x - &z).norm() * (1.0 + 1e-9));
    }
}

#[test]
fn matrix_market_symmetric_coordinate_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        file,
        "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 3\n1 1 4\n2 1 1\n2 2 3"
    )
    .unwrap();
    let q = load_matrix_market(file.path(), None).unwrap();
    assert_eq!(q.a, Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]));
    let xs = q.minimizer().unwrap();
    assert!((&q.a * xs - Vector::from_element(2, 1.0)).norm() <= 1e-14);
}

#[test]
fn matrix_market_errors() {
    assert_eq!(parse_matrix_market("").unwrap_err().category(), "ParseError");
    let truncated = "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n";
    assert_eq!(parse_matrix_market(truncated).unwrap_err().category(), "ParseError");
    let missing = load_matrix_market(std::path::Path::new("/nonexistent/file.mtx"), None).unwrap_err();
    assert_eq!(missing.category(), "IoError");
    let indefinite = "%%MatrixMarket matrix array real general\n2 2\n1\n0\n0\n-1\n";
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(indefinite.as_bytes()).unwrap();
    assert!(load_matrix_market(file.path(), None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectrum_is_sorted_and_spans_range(d in 2usize..100, mu in 0.01f64..10.0, ratio in 1.0f64..1e4) {
        let l1 = mu * ratio;
        let s = log_spaced_spectrum(d, mu, l1);
        prop_assert_eq!(s.len(), d);
        prop_assert_eq!(s[0], mu);
        prop_assert_eq!(s[d - 1], l1);
        for w in s.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn quadratic_generator_is_deterministic(seed in any::<u64>(), d in 1usize..12) {
        let a = make_quadratic(d, 1.0, 10.0, seed).unwrap();
        let b = make_quadratic(d, 1.0, 10.0, seed).unwrap();
        prop_assert_eq!(a.a, b.a);
        prop_assert_eq!(a.b, b.b);
    }
}
