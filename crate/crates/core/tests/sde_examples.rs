use mframe::noise::{sample_noise, uniform_grid, MarkMeasureSpec, MarkSampler, NoisePath, QWienerSpec};
use mframe::sde::{
    globalize_solve, interlace_solve, local_level, local_solve, solve, CoefficientSet, LifetimeReason, Regime,
    Regularity, SolverOpts,
};
use mframe::Error;

fn opts(dt: f64, horizon: f64) -> SolverOpts {
    SolverOpts { dt, horizon, ..SolverOpts::default() }
}

fn quiet(horizon: f64, dt: f64) -> NoisePath {
    let q = QWienerSpec::new(vec![1.0]).unwrap();
    sample_noise(&q, &MarkMeasureSpec::none(1), &uniform_grid(horizon, dt).unwrap(), 0).unwrap()
}

#[test]
fn linear_decay_matches_exponential() {
    let c = CoefficientSet::new(1, 1).with_drift(|_, y, out| out[0] = -y[0]);
    let traj = interlace_solve(&c, &[1.0], &quiet(1.0, 1e-4), &opts(1e-4, 1.0)).unwrap();
    assert!((traj.last()[0] - (-1f64).exp()).abs() <= 1e-3);
}

#[test]
fn pure_jump_path_is_a_step() {
    let c = CoefficientSet::new(2, 1).with_jump(1, |_, _, x, out| {
        out[0] = x[0];
        out[1] = -x[0];
    });
    let grid = uniform_grid(1.0, 0.125).unwrap();
    let noise =
        NoisePath::from_parts(grid, 1, vec![0.0; 8], vec![(0.5, vec![2.0], true)], MarkMeasureSpec::none(1), 0)
            .unwrap();
    let traj = interlace_solve(&c, &[1.0, 1.0], &noise, &opts(0.125, 1.0)).unwrap();
    for i in 0..traj.len() {
        let expected = if traj.time(i) < 0.5 { [1.0, 1.0] } else { [3.0, -1.0] };
        assert_eq!(traj.value(i), &expected, "t = {}", traj.time(i));
    }
    assert_eq!(traj.left_limit_at(4).unwrap(), &[1.0, 1.0]);
}

/// `y0 exp((mu - sigma^2/2 - F(B) E[x]) T + sigma W_T) prod (1 + xi)`.
fn stochastic_exponential(mu: f64, sigma: f64, small_rate: f64, small_mean: f64, noise: &NoisePath) -> f64 {
    let t = noise.horizon();
    let w = noise.wiener_total()[0];
    let product: f64 = noise.jumps().iter().map(|j| 1.0 + j.mark[0]).product();
    ((mu - 0.5 * sigma * sigma - small_rate * small_mean) * t + sigma * w).exp() * product
}

#[test]
fn geometric_jump_diffusion_converges_to_closed_form() {
    let (mu, sigma) = (0.3, 0.5);
    let c = CoefficientSet::new(1, 1)
        .with_drift(move |_, y, out| out[0] = mu * y[0])
        .with_diffusion(move |_, y, out| out[0] = sigma * y[0])
        .with_jump(1, |_, y, x, out| out[0] = y[0] * x[0]);
    let q = QWienerSpec::new(vec![1.0]).unwrap();
    let m = MarkMeasureSpec::none(1)
        .with_small(2.0, MarkSampler::UniformBox { lower: vec![0.0], upper: vec![0.2] })
        .with_large(1.0, MarkSampler::UniformBox { lower: vec![0.3], upper: vec![0.5] });
    let fine = 2f64.powi(-10);
    let grid = uniform_grid(1.0, fine).unwrap();
    let paths = 400;
    let mut err = [0.0f64; 2];
    for seed in 0..paths {
        let noise = sample_noise(&q, &m, &grid, seed).unwrap();
        let exact = stochastic_exponential(mu, sigma, 2.0, 0.1, &noise);
        for (k, factor) in [64usize, 1].iter().enumerate() {
            let n = noise.coarsen(*factor).unwrap();
            let y = interlace_solve(&c, &[1.0], &n, &opts(fine * *factor as f64, 1.0)).unwrap();
            err[k] += (y.last()[0] - exact).abs() / paths as f64;
        }
    }
    // dt shrinks by 64: an order-1/2 scheme gains about a factor 8
    assert!(err[1] < err[0] / 4.0, "{err:?}");
    assert!(err[1] < 0.05, "{err:?}");
}

#[test]
fn superlinear_drift_violates_non_explosion() {
    let c = CoefficientSet::new(1, 1)
        .with_drift(|_, y, out| out[0] = y[0].powi(3))
        .with_regularity(Regularity::LOCAL_LINEAR_GROWTH);
    let mut o = opts(1e-3, 2.0);
    o.k_max = 16.0;
    let err = globalize_solve(&c, &[1.0], &quiet(2.0, 1e-3), &o).unwrap_err();
    assert!(matches!(err, Error::NonExplosionViolated { .. }), "{err}");
    assert!(err.is_numerical());
}

#[test]
fn global_regime_rejects_local_only_coefficients() {
    let c = CoefficientSet::new(1, 1)
        .with_drift(|_, y, out| out[0] = y[0].powi(3))
        .with_regularity(Regularity::LOCAL);
    let err = solve(Regime::Global, &c, &[1.0], &quiet(1.0, 0.01), &opts(0.01, 1.0)).unwrap_err();
    assert!(matches!(err, Error::UnsupportedRegime(_)));
}

#[test]
fn quadratic_drift_has_finite_lifetime() {
    // y' = y^2 from 1 leaves the level-2 ball at t = 1/2
    let c = CoefficientSet::new(1, 1)
        .with_drift(|_, y, out| out[0] = y[0] * y[0])
        .with_regularity(Regularity::LOCAL);
    let dt = 1e-4;
    let traj = local_solve(&c, &[1.0], &quiet(5.0, dt), &opts(dt, 5.0)).unwrap();
    let life = traj.lifetime();
    assert_eq!(life.reason, LifetimeReason::TruncationLevelK);
    assert_eq!(life.level, Some(2.0));
    assert!((life.time - 0.5).abs() < 5e-3, "{}", life.time);
    assert_eq!(traj.time(traj.len() - 1), life.time);
}

#[test]
fn zero_dynamics_live_to_the_horizon() {
    let c = CoefficientSet::new(1, 1).with_regularity(Regularity::LOCAL);
    let traj = local_solve(&c, &[0.0], &quiet(1.0, 0.1), &opts(0.1, 1.0)).unwrap();
    assert_eq!(traj.lifetime().reason, LifetimeReason::Horizon);
    assert!((traj.lifetime().time - 1.0).abs() < 1e-15);
}

#[test]
fn partition_cell_fixes_the_level() {
    assert_eq!(local_level(&[1.2]), local_level(&[-1.9]));
    assert_eq!(local_level(&[0.0]), 1.0);
    assert_eq!(local_level(&[2.0]), 3.0);
}

#[test]
fn contractive_flow_shrinks_the_gap() {
    let c = CoefficientSet::new(2, 2)
        .with_drift(|_, y, out| {
            out[0] = -y[0];
            out[1] = -2.0 * y[1];
        })
        .with_diffusion(|_, _, out| {
            out.fill(0.0);
            out[0] = 0.5;
            out[3] = 0.5;
        });
    let q = QWienerSpec::new(vec![1.0, 1.0]).unwrap();
    let m = MarkMeasureSpec::none(1);
    let noise = sample_noise(&q, &m, &uniform_grid(1.0, 0.01).unwrap(), 4).unwrap();
    let (a, b) = ([1.0, 1.0], [1.5, 0.0]);
    let ya = interlace_solve(&c, &a, &noise, &opts(0.01, 1.0)).unwrap();
    let yb = interlace_solve(&c, &b, &noise, &opts(0.01, 1.0)).unwrap();
    let gap0 = mframe::vector::distance(&a, &b);
    for i in 0..ya.len() {
        assert!(mframe::vector::distance(ya.value(i), yb.value(i)) <= gap0 * (1.0 + 1e-12));
    }
}
