use selfsim::evolution::{Evolution, EvolutionConfig, Perturbation, Shape};
use selfsim::geometry::{PerturbationBasis, WarpedTarget};
use selfsim::profile::{solve_profile, ProfileConfig, ProfileSolution};

fn profile(d: usize, epsilon: f64) -> ProfileSolution {
    let t = WarpedTarget::new(d, epsilon, PerturbationBasis::sin_squared()).unwrap();
    solve_profile(&t, &ProfileConfig::default()).unwrap()
}

#[test]
fn perturbed_evolution_converges_at_fourth_order() {
    let p = profile(5, 0.02);
    let mut v = Perturbation::new([1e-2, 1e-2], Shape::Gaussian { center: 0.0, width: 0.5 });
    v.support = 4.0;
    let mut prev: Option<Vec<f64>> = None;
    let mut errs = Vec::new();
    for m in [64, 128, 256, 512] {
        let cfg = EvolutionConfig { intervals: m, perturbation: v.clone(), ..Default::default() };
        let ev = Evolution::<f64>::new(&p, &cfg).unwrap();
        let (phi, _) = ev.perturbation(&ev.final_state(1.0, &v, 1.0).unwrap());
        if let Some(coarse) = &prev {
            errs.push((0..coarse.len()).map(|i| (coarse[i] - phi.values[2 * i]).abs()).fold(0.0, f64::max));
        }
        prev = Some(phi.values);
    }
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 2f64.powf(3.5), "{errs:?}");
    }
}

#[test]
fn outer_boundary_does_not_reach_the_light_cone() {
    let p = profile(3, 0.0);
    let v = Perturbation::new([1e-2, -1e-2], Shape::Bump { radius: 1.5 });
    let h = 1.0 / 32.0;
    let dt = EvolutionConfig { radius: 12.0, intervals: 384, ..Default::default() }.max_time_step();
    let runs: Vec<_> = [8.0, 12.0]
        .iter()
        .map(|&radius| {
            let cfg = EvolutionConfig { radius, intervals: (radius / h) as usize, time_step: Some(dt), ..Default::default() };
            Evolution::<f64>::new(&p, &cfg).unwrap().final_state(1.0, &v, 4.0).unwrap()
        })
        .collect();
    let inside = (1.0 / h) as usize;
    for i in 0..=inside {
        assert_eq!(runs[0].psi1.values[i], runs[1].psi1.values[i], "node {i}");
        assert_eq!(runs[0].psi2.values[i], runs[1].psi2.values[i], "node {i}");
    }
}

#[test]
fn single_precision_tracks_double() {
    let p = profile(3, 0.0);
    let v = Perturbation::new([1e-2, 1e-2], Shape::Gaussian { center: 0.0, width: 0.3 });
    let cfg = EvolutionConfig { intervals: 128, ..Default::default() };
    let wide = selfsim::Evolver::new(&p, &cfg).unwrap().final_state(1.0, &v, 0.5).unwrap();
    let narrow = selfsim::Evolver32::new(&p, &cfg).unwrap().final_state(1.0, &v, 0.5).unwrap();
    for (a, b) in wide.psi1.values.iter().zip(&narrow.psi1.values) {
        assert!((a - *b as f64).abs() < 1e-5, "{a} {b}");
    }
}
