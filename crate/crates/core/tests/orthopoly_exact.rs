//! Legendre values and quadrature checked against exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use quadrep::orthopoly::{gauss_legendre, legendre_eval, legendre_row};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Classical `P_n(x)` by the three-term recurrence in exact arithmetic.
fn exact_legendre(n: usize, x: &BigRational) -> BigRational {
    let (mut p0, mut p1) = (BigRational::one(), x.clone());
    if n == 0 {
        return p0;
    }
    for k in 1..n {
        let k = k as i64;
        let p2 = (rat(2 * k + 1, 1) * x * &p1 - rat(k, 1) * &p0) / rat(k + 1, 1);
        p0 = p1;
        p1 = p2;
    }
    p1
}

#[test]
fn normalized_values_match_exact_recurrence() {
    let points = [rat(-1, 1), rat(-7, 9), rat(-1, 3), rat(0, 1), rat(1, 7), rat(5, 8), rat(1, 1)];
    for n in 0..=40usize {
        let norm = ((2 * n + 1) as f64 / 2.0).sqrt();
        for x in &points {
            let exact = exact_legendre(n, x).to_f64().unwrap() * norm;
            let got = legendre_eval(n, x.to_f64().unwrap()).unwrap();
            assert!(
                (got - exact).abs() <= 1e-13 * norm.max(exact.abs()),
                "n={n} x={x}: {got} vs {exact}"
            );
        }
    }
}

#[test]
fn row_agrees_with_single_evaluations() {
    let row = legendre_row(30, 0.37).unwrap();
    for (n, &v) in row.iter().enumerate() {
        assert_eq!(v, legendre_eval(n, 0.37).unwrap());
    }
}

#[test]
fn gauss_rule_integrates_monomials_exactly() {
    // exact integral of x^k over [-1, 1]
    let exact = |k: usize| if k % 2 == 1 { BigRational::zero() } else { rat(2, k as i64 + 1) };
    for m in [1usize, 2, 5, 20, 33] {
        let rule = gauss_legendre(m).unwrap();
        let wsum: f64 = rule.weights().iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
        for k in 0..2 * m {
            let got = rule.integrate(|x| x.powi(k as i32));
            let want = exact(k).to_f64().unwrap();
            assert!((got - want).abs() < 1e-14, "m={m} k={k}: {got} vs {want}");
        }
    }
}

#[test]
fn nodes_are_sorted_symmetric_roots() {
    let rule = gauss_legendre(12).unwrap();
    let nodes = rule.nodes();
    assert!(nodes.windows(2).all(|w| w[0] < w[1]));
    for (a, b) in nodes.iter().zip(nodes.iter().rev()) {
        assert!((a + b).abs() < 1e-15);
    }
    for &x in nodes {
        assert!(legendre_eval(12, x).unwrap().abs() < 1e-13);
    }
}
