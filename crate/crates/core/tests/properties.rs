use proptest::prelude::*;
use quadrep::representation::{solve_quadratic, Basis, IndexFunction, PolyCoeffs};

proptest! {
    #[test]
    fn basis_round_trip(coeffs in prop::collection::vec(-5.0f64..5.0, 1..12), lo in -3.0f64..0.0, len in 0.5f64..4.0) {
        let domain = (lo, lo + len);
        let p = PolyCoeffs::legendre(coeffs.clone(), domain).unwrap();
        let back = p.convert(Basis::Monomial).unwrap().convert(Basis::LegendreNormalized).unwrap();
        let scale = coeffs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        // Monomials in the physical coordinate lose digits like
        // ((|mid| + h) / h)^degree on a short off-centre interval.
        let (mid, h) = (lo + 0.5 * len, 0.5 * len);
        let kappa = ((mid.abs() + h) / h).powi(coeffs.len() as i32 - 1) * 4f64.powi(coeffs.len() as i32);
        let tol = 1e-14 * kappa * scale;
        for (a, b) in coeffs.iter().zip(&back.coeffs) {
            prop_assert!((a - b).abs() < tol, "{} vs {} (tol {})", a, b, tol);
        }
        let m = p.convert(Basis::Monomial).unwrap();
        for i in 0..=8 {
            let x = lo + len * i as f64 / 8.0;
            prop_assert!((p.eval(x) - m.eval(x)).abs() < tol);
        }
    }

    #[test]
    fn quadratic_roots_satisfy_equation(a in 0.1f64..10.0, r1 in -100.0f64..100.0, r2 in -100.0f64..100.0) {
        // a (f - r1)(f - r2) = a f² - a(r1 + r2) f + a r1 r2
        let b = a * (r1 + r2);
        let c = -a * r1 * r2;
        let roots = solve_quadratic(a, b, c, a, 0.0).unwrap();
        let scale = a * (r1.abs() + r2.abs() + 1.0).powi(2);
        for r in [roots.plus, roots.minus] {
            prop_assert!((a * r * r - b * r - c).abs() <= 1e-12 * scale);
        }
        prop_assert!(roots.lo <= roots.hi);
        prop_assert!((roots.lo - r1.min(r2)).abs() <= 1e-9 * (1.0 + r1.abs().max(r2.abs())));
    }

    #[test]
    fn index_dense_round_trip(signs in prop::collection::vec(prop::bool::ANY, 1..80), step in 0.1f64..3.0) {
        let signs: Vec<i8> = signs.into_iter().map(|s| if s { 1 } else { -1 }).collect();
        let positions: Vec<f64> = (0..signs.len()).map(|i| i as f64 * step).collect();
        let idx = IndexFunction::from_dense(&positions, &signs).unwrap();
        prop_assert_eq!(idx.to_dense(&positions), signs.clone());
        let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert_eq!(idx.breakpoints().len(), flips);
    }
}
