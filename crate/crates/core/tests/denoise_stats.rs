use quadrep::denoise::*;
use quadrep::representation::solve_quadratic;

fn step_data(target: NoiseTarget, sigma: f64, seed: u64) -> Generated {
    let truth = GroundTruth::step_manifold().unwrap();
    generate_noisy(&truth, &integer_positions(400), NoiseSpec { target, sigma }, seed).unwrap()
}

fn moments_vec(m: &MomentSet) -> [f64; 11] {
    [m.s0, m.sx, m.sx2, m.m_f, m.m_xf, m.m_x2f, m.m_f2, m.m_xf2, m.m_x2f2, m.m_f3, m.m_xf3]
}

#[test]
fn debiased_moments_are_unbiased() {
    let clean = step_data(NoiseTarget::Function, 0.0, 0);
    let reference = moments_vec(&compute_moments(&clean.dataset, &clean.truth, true).unwrap());
    let sigma: f64 = 150.0;
    let seeds = 200;
    let samples: Vec<[f64; 11]> = (0..seeds)
        .map(|s| {
            let g = step_data(NoiseTarget::Function, sigma, 1000 + s);
            let noisy = compute_noisy_moments(&g.dataset).unwrap();
            moments_vec(&debias_moments(&noisy, sigma * sigma).unwrap())
        })
        .collect();
    for j in 0..11 {
        let mean = samples.iter().map(|v| v[j]).sum::<f64>() / seeds as f64;
        let var = samples.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        let se = (var / seeds as f64).sqrt();
        assert!(
            (mean - reference[j]).abs() <= 5.0 * se + 1e-9 * reference[j].abs(),
            "moment {j}: mean {mean} vs {} (se {se})",
            reference[j]
        );
    }
}

#[test]
fn undebiased_moments_are_biased() {
    let clean = step_data(NoiseTarget::Function, 0.0, 0);
    let reference = compute_moments(&clean.dataset, &clean.truth, true).unwrap();
    let sigma: f64 = 150.0;
    let mean_f2 = (0..50)
        .map(|s| compute_noisy_moments(&step_data(NoiseTarget::Function, sigma, s).dataset).unwrap().m_f2)
        .sum::<f64>()
        / 50.0;
    // E[Σ(f+ε)²] = Σf² + n σ²
    let expected = reference.m_f2 + reference.s0 * sigma * sigma;
    assert!((mean_f2 - expected).abs() < 0.02 * expected);
}

#[test]
fn manifold_noise_roots_near_ground_truth() {
    let g = step_data(NoiseTarget::Manifold, 5000.0, 7);
    let rec = denoise_ls(&g.dataset, None).unwrap();
    let t0 = g.dataset.frame().unwrap().to_reference(0.0);
    let (b, c) = rec.fit.bc_at(t0);
    let r = solve_quadratic(1.0, b, c, 1.0, 0.0).unwrap();
    let (lo, hi) = (r.lo, r.hi);
    assert!((lo - 25.0).abs() < 3.0, "lower root {lo}");
    assert!((hi - 255.0).abs() < 3.0, "upper root {hi}");
}

#[test]
fn clean_data_is_reproduced_by_every_mode() {
    let g = step_data(NoiseTarget::Function, 0.0, 0);
    let check = |rec: &Reconstruction| {
        for (a, b) in rec.reconstructed.iter().zip(&g.truth) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    };
    check(&denoise_ls(&g.dataset, None).unwrap());
    check(&denoise_ls(&g.dataset, Some(10)).unwrap());
    check(&denoise_case3(&g.dataset, 0.0, 10).unwrap());
    let it = denoise_iterative(&g.dataset, &IterativeConfig::default()).unwrap();
    assert!(it.converged);
    check(&it.result);
}

#[test]
fn moment_system_matches_least_squares_on_clean_data() {
    for sigma in [0.0, 20.0] {
        let g = step_data(NoiseTarget::Function, sigma, 3);
        let ls = fit_manifold_ls(&g.dataset).unwrap();
        let ms = solve_moment_system(&compute_noisy_moments(&g.dataset).unwrap()).unwrap();
        let diff = ls.scaled.iter().zip(&ms.scaled).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = ls.scaled.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff <= 1e-8 * norm, "{:?} vs {:?}", ls.scaled, ms.scaled);
    }
}

#[test]
fn generation_is_seeded() {
    let a = step_data(NoiseTarget::Function, 30.0, 7);
    let b = step_data(NoiseTarget::Function, 30.0, 7);
    let c = step_data(NoiseTarget::Function, 30.0, 8);
    assert_eq!(a.dataset.observed(), b.dataset.observed());
    assert_ne!(a.dataset.observed(), c.dataset.observed());
    assert_eq!(a.dataset.len(), 401);
}
