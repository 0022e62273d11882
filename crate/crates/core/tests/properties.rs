use mframe::conditions::{
    check_locally_bounded, estimate_local_lipschitz, example_kappa, Component,
};
use mframe::hilbert::{log_norm, make_dilation, DilationTriple, SemigroupSpec};
use mframe::noise::{
    sample_noise, shift_noise, shift_noise_at, uniform_grid, MarkMeasureSpec, MarkSampler, QWienerSpec,
};
use mframe::vector::{norm, retract};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn shift_dilation(nodes: usize, padding: usize) -> (SemigroupSpec, DilationTriple) {
    let dx = 1.0 / 32.0;
    let spec = SemigroupSpec::ShiftHalfline { dx, nodes, omega: 0.0 };
    let d = make_dilation(&spec, padding, padding as f64 * dx).unwrap();
    (spec, d)
}

fn jumpy_marks() -> MarkMeasureSpec {
    MarkMeasureSpec::none(1)
        .with_small(5.0, MarkSampler::Gaussian { mean: vec![0.0], std: vec![0.1] })
        .with_large(3.0, MarkSampler::UniformBox { lower: vec![0.5], upper: vec![1.0] })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_group_law_is_exact(
        h in prop::collection::vec(-10.0f64..10.0, 16),
        s in -8i32..=8,
        t in -8i32..=8,
    ) {
        let (_, d) = shift_dilation(16, 16);
        let dx = 1.0 / 32.0;
        let y = d.embed(&h).unwrap();
        let (s, t) = (s as f64 * dx, t as f64 * dx);
        let lhs = d.group_apply(s, &d.group_apply(t, &y).unwrap()).unwrap();
        let rhs = d.group_apply(s + t, &y).unwrap();
        prop_assert_eq!(lhs.as_slice(), rhs.as_slice());
    }

    #[test]
    fn projection_inverts_embedding(h in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let n = h.len();
        let (_, d) = shift_dilation(n, 5);
        let back = d.project(&d.embed(&h).unwrap()).unwrap();
        prop_assert_eq!(back.as_slice(), h.as_slice());
        let diag = SemigroupSpec::Diagonal { eigenvalues: vec![-1.0; n], omega: 0.0 };
        let d = make_dilation(&diag, 0, 1.0).unwrap();
        let back = d.project(&d.embed(&h).unwrap()).unwrap();
        prop_assert_eq!(back.as_slice(), h.as_slice());
    }

    #[test]
    fn diagonal_semigroup_is_pseudo_contractive(
        mu in prop::collection::vec(-5.0f64..0.5, 1..10),
        h in prop::collection::vec(-3.0f64..3.0, 10),
        t in 0.0f64..3.0,
    ) {
        let omega = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let spec = SemigroupSpec::Diagonal { eigenvalues: mu.clone(), omega };
        let sg = spec.build().unwrap();
        let h = &h[..mu.len()];
        let out = sg.apply(t, h).unwrap();
        prop_assert!(out.norm() <= (omega * t).exp() * norm(h) * (1.0 + 1e-14));
    }

    #[test]
    fn matrix_semigroup_respects_its_log_norm(
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        h in prop::collection::vec(-1.0f64..1.0, 4),
        t in 0.0f64..2.0,
    ) {
        let a = DMatrix::from_row_slice(4, 4, &entries);
        let omega = log_norm(&a);
        let generator = (0..4).map(|i| entries[4 * i..4 * i + 4].to_vec()).collect();
        let sg = SemigroupSpec::Matrix { generator, omega }.build().unwrap();
        let out = sg.apply(t, &h).unwrap();
        prop_assert!(out.norm() <= (omega * t).exp() * norm(&h) * (1.0 + 1e-10) + 1e-14);
    }

    #[test]
    fn retraction_stays_in_ball(y in prop::collection::vec(-100.0f64..100.0, 1..6), k in 0.1f64..50.0) {
        let r = retract(k, &y);
        prop_assert!(r.norm() <= k * (1.0 + 1e-15));
        if norm(&y) <= k {
            prop_assert_eq!(r.as_slice(), y.as_slice());
        }
    }

    #[test]
    fn kappa_is_nondecreasing_and_concave(a in 0.0f64..2.0, b in 0.0f64..2.0, delta in 0.01f64..0.36) {
        let k = |u: f64| example_kappa(u, delta).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        // the affine continuation has slope -(1 + ln delta) > 0 for delta < 1/e
        prop_assert!(k(lo) <= k(hi) + 1e-15);
        let mid = 0.5 * (lo + hi);
        prop_assert!(k(mid) + 1e-15 >= 0.5 * (k(lo) + k(hi)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noise_sampling_is_deterministic(seed in any::<u64>()) {
        let q = QWienerSpec::new(vec![1.0, 0.25]).unwrap();
        let grid = uniform_grid(1.0, 1.0 / 64.0).unwrap();
        let a = sample_noise(&q, &jumpy_marks(), &grid, seed).unwrap();
        let b = sample_noise(&q, &jumpy_marks(), &grid, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for j in a.jumps() {
            prop_assert_eq!(a.absolute_time(j.node), j.time);
        }
    }

    #[test]
    fn shift_composition_is_exact(seed in any::<u64>(), s in 1usize..30, t in 1usize..30) {
        let q = QWienerSpec::new(vec![1.0]).unwrap();
        let dx = 1.0 / 64.0;
        let grid = uniform_grid(1.0, dx).unwrap();
        let p = sample_noise(&q, &jumpy_marks(), &grid, seed).unwrap();
        let once = shift_noise(&p, grid[s]).unwrap();
        let tau = once.time(once.node_of(grid[s + t] - grid[s]).unwrap());
        let twice = shift_noise(&once, tau).unwrap();
        let direct = shift_noise_at(&p, p.node_of(grid[s + t]).unwrap()).unwrap();
        prop_assert_eq!(twice.times(), direct.times());
        prop_assert_eq!(twice.jumps(), direct.jumps());
        prop_assert_eq!(twice.steps(), direct.steps());
        for cell in 0..twice.steps() {
            prop_assert_eq!(twice.increment(cell), direct.increment(cell));
        }
    }

    #[test]
    fn estimates_grow_with_radius_and_samples(seed in any::<u64>(), few in 8usize..32) {
        let f = Component::new(2, |_, y| vec![y[0] * y[1], y[1].sin() * y[0] * y[0]]);
        let t = [0.0];
        let radii = [1.0, 2.0, 4.0];
        for report in [
            estimate_local_lipschitz(&f, &t, &radii, few, seed, None).unwrap(),
            check_locally_bounded(&f, &t, &radii, few, seed, None).unwrap(),
        ] {
            let est: Vec<f64> = report.estimates.iter().map(|e| e.estimate).collect();
            prop_assert!(est.windows(2).all(|w| w[1] >= w[0]), "{:?}", est);
        }
        let small = estimate_local_lipschitz(&f, &t, &radii, few, seed, None).unwrap();
        let large = estimate_local_lipschitz(&f, &t, &radii, few * 4, seed, None).unwrap();
        for (a, b) in small.estimates.iter().zip(&large.estimates) {
            prop_assert!(b.estimate >= a.estimate);
        }
    }
}

#[test]
fn lipschitz_estimates_approach_a_known_constant() {
    // |A y| with A = diag(3, 1): L = 3, attained along e_0
    let f = Component::new(2, |_, y| vec![3.0 * y[0], y[1]]);
    let r = estimate_local_lipschitz(&f, &[0.0], &[1.0, 10.0], 20_000, 3, Some(3.0)).unwrap();
    for e in &r.estimates {
        assert!(e.estimate <= 3.0 + 1e-12 && e.estimate >= 3.0 - 1e-6, "{}", e.estimate);
    }
    assert!(r.pass());
}
