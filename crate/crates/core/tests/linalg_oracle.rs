//! Least squares and rank decisions compared with nalgebra's SVD.

use nalgebra::DMatrix;
use quadrep::linalg::{pivoted_qr, weighted_lsq, DenseMatrix, IncrementalLsq, DEFAULT_RANK_TOL};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
}

fn random_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..cols).map(|_| (0..rows).map(|_| uniform(rng)).collect()).collect()
}

fn to_nalgebra(cols: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(cols[0].len(), cols.len(), |i, j| cols[j][i])
}

fn svd_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = m.singular_values();
    let top = s.max();
    s.iter().filter(|&&v| v > rel_tol * top).count()
}

#[test]
fn rank_matches_svd_for_planted_dependencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (rows, indep, extra) in [(30, 5, 3), (50, 12, 4), (20, 7, 0), (40, 1, 6)] {
        let mut cols = random_columns(&mut rng, rows, indep);
        for _ in 0..extra {
            let (a, b) = (uniform(&mut rng), uniform(&mut rng));
            let combo = cols[0].iter().zip(&cols[indep - 1]).map(|(x, y)| a * x + b * y).collect();
            cols.push(combo);
        }
        let qr = pivoted_qr(&DenseMatrix::from_columns(&cols).unwrap()).unwrap();
        let svd = svd_rank(&to_nalgebra(&cols), 1e-10);
        assert_eq!(svd, indep);
        assert_eq!(qr.numerical_rank(DEFAULT_RANK_TOL), svd);
    }
}

#[test]
fn weighted_solution_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cols = random_columns(&mut rng, 40, 6);
    let y: Vec<f64> = (0..40).map(|_| uniform(&mut rng)).collect();
    let w: Vec<f64> = (0..40).map(|_| 0.5 + uniform(&mut rng).abs()).collect();
    let sol = weighted_lsq(&DenseMatrix::from_columns(&cols).unwrap(), &y, &w).unwrap();

    let sw = nalgebra::DVector::from_iterator(40, w.iter().map(|v| v.sqrt()));
    let a = to_nalgebra(&cols);
    let aw = DMatrix::from_fn(40, 6, |i, j| a[(i, j)] * sw[i]);
    let yw = nalgebra::DVector::from_iterator(40, y.iter().zip(sw.iter()).map(|(a, b)| a * b));
    let oracle = aw.clone().svd(true, true).solve(&yw, 1e-14).unwrap();
    for (got, want) in sol.coeffs.iter().zip(oracle.iter()) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    let resid = (aw * oracle - yw).norm();
    assert!((sol.residual_norm - resid).abs() < 1e-12);
}

#[test]
fn incremental_matches_batch_at_every_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cols = random_columns(&mut rng, 25, 8);
    let y: Vec<f64> = (0..25).map(|_| uniform(&mut rng)).collect();
    let w = vec![1.0; 25];
    let mut inc = IncrementalLsq::new(&y, &w).unwrap();
    for k in 1..=cols.len() {
        inc.append_column(&cols[k - 1]).unwrap();
        let batch = weighted_lsq(&DenseMatrix::from_columns(&cols[..k]).unwrap(), &y, &w).unwrap();
        assert!((inc.residual_norm() - batch.residual_norm).abs() < 1e-12);
        for (a, b) in inc.coefficients().iter().zip(&batch.coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
