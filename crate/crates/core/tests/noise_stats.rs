use mframe::noise::{
    compensator_integral, sample_noise, uniform_grid, MarkMeasureSpec, MarkSampler, QWienerSpec,
};
use mframe::rng::StreamKey;
use mframe::sde::CoefficientSet;

const REPS: u64 = 100_000;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn wiener_increment_variance_matches_eigenvalues() {
    let q = QWienerSpec::new(vec![1.0, 0.25]).unwrap();
    let grid = [0.0, 0.5];
    let m = MarkMeasureSpec::none(1);
    let mut sum = [0.0f64; 2];
    let mut sum_sq = [0.0f64; 2];
    for seed in 0..REPS {
        let p = sample_noise(&q, &m, &grid, seed).unwrap();
        for (j, v) in p.increment(0).iter().enumerate() {
            sum[j] += v;
            sum_sq[j] += v * v;
        }
    }
    let n = REPS as f64;
    for (j, lambda) in [1.0, 0.25].iter().enumerate() {
        let mean = sum[j] / n;
        let var = sum_sq[j] / n - mean * mean;
        assert!(rel(var, 0.5 * lambda) <= 0.02, "coordinate {j}: variance {var}");
    }
}

#[test]
fn unit_interval_single_increment() {
    let q = QWienerSpec::new(vec![1.0]).unwrap();
    let m = MarkMeasureSpec::none(1);
    let xs: Vec<f64> = (0..REPS).map(|s| sample_noise(&q, &m, &[0.0, 1.0], s).unwrap().increment(0)[0]).collect();
    let mean = xs.iter().sum::<f64>() / REPS as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (REPS - 1) as f64;
    assert!(rel(var, 1.0) <= 0.02, "{var}");
}

#[test]
fn jump_counts_match_poisson_means() {
    let q = QWienerSpec::new(vec![1.0]).unwrap();
    let m = MarkMeasureSpec::none(1)
        .with_small(3.0, MarkSampler::UniformBox { lower: vec![-0.1], upper: vec![0.1] })
        .with_large(2.0, MarkSampler::UniformBox { lower: vec![1.0], upper: vec![2.0] });
    let grid = uniform_grid(1.0, 0.25).unwrap();
    let (mut small, mut large) = (0usize, 0usize);
    for seed in 0..REPS {
        let p = sample_noise(&q, &m, &grid, seed).unwrap();
        for j in p.jumps() {
            if j.is_large {
                large += 1;
            } else {
                small += 1;
            }
            assert!(p.times().contains(&j.time));
        }
    }
    assert!(rel(large as f64 / REPS as f64, 2.0) <= 0.02);
    assert!(rel(small as f64 / REPS as f64, 3.0) <= 0.02);
}

#[test]
fn distinct_path_indices_give_independent_streams() {
    let q = QWienerSpec::new(vec![1.0]).unwrap();
    let m = MarkMeasureSpec::none(1);
    let grid = uniform_grid(1.0, 0.5).unwrap();
    let a = mframe::noise::sample_noise_keyed(&q, &m, &grid, StreamKey::new(9, 0)).unwrap();
    let b = mframe::noise::sample_noise_keyed(&q, &m, &grid, StreamKey::new(9, 1)).unwrap();
    assert_ne!(a.increment(0), b.increment(0));
}

#[test]
fn compensator_of_symmetric_atoms_vanishes() {
    let c = CoefficientSet::new(2, 1).with_jump(1, |_, _, x, out| {
        out[0] = x[0] * 0.6;
        out[1] = x[0] * 0.8;
    });
    let m = MarkMeasureSpec::none(1).with_small(
        1.5,
        MarkSampler::DiscreteAtoms { atoms: vec![vec![1.0], vec![-1.0]], weights: vec![0.5, 0.5] },
    );
    let v = compensator_integral(&c, 0.0, &[0.0, 0.0], &m, 32).unwrap();
    assert_eq!(v.as_slice(), &[0.0, 0.0]);
}

#[test]
fn compensator_of_uniform_marks_is_the_mean() {
    let c = CoefficientSet::new(2, 1).with_jump(1, |_, _, x, out| {
        out[0] = x[0] * 0.6;
        out[1] = x[0] * 0.8;
    });
    let m = MarkMeasureSpec::none(1)
        .with_small(1.0, MarkSampler::UniformBox { lower: vec![0.0], upper: vec![1.0] });
    let v = compensator_integral(&c, 0.0, &[0.0, 0.0], &m, 64).unwrap();
    assert!((v[0] - 0.3).abs() <= 1e-10 && (v[1] - 0.4).abs() <= 1e-10, "{v:?}");
    assert!(compensator_integral(&CoefficientSet::new(2, 1), 0.0, &[1.0, 1.0], &m, 8).unwrap().norm() == 0.0);
}
