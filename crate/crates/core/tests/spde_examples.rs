use mframe::hilbert::{make_dilation, SemigroupSpec};
use mframe::noise::{sample_noise, uniform_grid, MarkMeasureSpec, MarkSampler, NoisePath, QWienerSpec};
use mframe::sde::{CoefficientSet, Regularity, SolverOpts};
use mframe::spde::{
    mild_residuals, mild_solve_exponential_euler, mild_solve_moving_frame, reconstruct_frame_process,
    SpdeProblem,
};
use mframe::vector::distance;

fn opts(dt: f64, horizon: f64) -> SolverOpts {
    SolverOpts { dt, horizon, ..SolverOpts::default() }
}

fn problem(spec: SemigroupSpec, padding: usize, c: CoefficientSet, z0: Vec<f64>, horizon: f64) -> SpdeProblem {
    let d = make_dilation(&spec, padding, horizon).unwrap();
    SpdeProblem::new(spec, d, c, z0.into(), horizon, 1e-8).unwrap()
}

fn shift_spec(nodes: usize) -> SemigroupSpec {
    SemigroupSpec::ShiftHalfline { dx: 1.0 / 16.0, nodes, omega: 0.0 }
}

fn sampled(q: &[f64], m: &MarkMeasureSpec, horizon: f64, dt: f64, seed: u64) -> NoisePath {
    let q = QWienerSpec::new(q.to_vec()).unwrap();
    sample_noise(&q, m, &uniform_grid(horizon, dt).unwrap(), seed).unwrap()
}

fn jumpy() -> MarkMeasureSpec {
    MarkMeasureSpec::none(1)
        .with_small(3.0, MarkSampler::UniformBox { lower: vec![-0.2], upper: vec![0.2] })
        .with_large(2.0, MarkSampler::UniformBox { lower: vec![0.5], upper: vec![1.0] })
}

#[test]
fn zero_coefficients_follow_the_semigroup_exactly() {
    let z0: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).cos()).collect();
    let noise = sampled(&[1.0], &jumpy(), 0.5, 1.0 / 16.0, 3);
    // the shift is exact on grid multiples; the diagonal case compounds exp(-k dt) per step
    for (spec, padding, tol) in [
        (shift_spec(12), 8, 0.0),
        (SemigroupSpec::Diagonal { eigenvalues: (0..12).map(|k| -(k as f64)).collect(), omega: 0.0 }, 0, 1e-13),
    ] {
        let p = problem(spec, padding, CoefficientSet::new(12, 1), z0.clone(), 0.5);
        let sg = p.semigroup();
        let frame = mild_solve_moving_frame(&p, &noise, &opts(1.0 / 16.0, 0.5)).unwrap();
        let ee = mild_solve_exponential_euler(&p, &noise, &opts(1.0 / 16.0, 0.5)).unwrap();
        for i in 0..ee.len() {
            let t = noise.time(i);
            let exact = sg.apply(t, &z0).unwrap();
            assert!(distance(ee.value(i), &exact) <= tol, "expeuler at t = {t}");
            assert!(distance(frame.z.value(i), &exact) <= tol, "frame at t = {t}");
            assert_eq!(frame.y.value(i), p.dilation().embed(&z0).unwrap().as_slice());
        }
        let res = mild_residuals(&p, &ee, &noise, 8).unwrap();
        assert!(res.iter().all(|r| r.residual <= tol), "{res:?}");
    }
}

#[test]
fn drift_cancels_the_generator() {
    let c = CoefficientSet::new(2, 1).with_drift(|_, z, out| out.copy_from_slice(z));
    let spec = SemigroupSpec::Diagonal { eigenvalues: vec![-1.0, -1.0], omega: 0.0 };
    let p = problem(spec, 0, c, vec![1.0, -2.0], 1.0);
    let dt = 1e-4;
    let noise = sampled(&[1.0], &MarkMeasureSpec::none(1), 1.0, dt, 0);
    let frame = mild_solve_moving_frame(&p, &noise, &opts(dt, 1.0)).unwrap();
    let ee = mild_solve_exponential_euler(&p, &noise, &opts(dt, 1.0)).unwrap();
    assert!(distance(frame.z.last(), &[1.0, -2.0]) <= 1e-3);
    assert!(distance(ee.last(), &[1.0, -2.0]) <= 1e-3);
}

#[test]
fn single_large_jump_translates_under_the_shift() {
    let m = 16;
    let dx = 1.0 / 16.0;
    let g: Vec<f64> = (0..m).map(|i| if (4..8).contains(&i) { 1.0 + i as f64 } else { 0.0 }).collect();
    let profile = g.clone();
    let c = CoefficientSet::new(m, 1).with_jump(1, move |_, _, x, out| {
        for (o, v) in out.iter_mut().zip(&profile) {
            *o = x[0] * v;
        }
    });
    let p = problem(shift_spec(m), 16, c, vec![0.0; m], 0.5);
    let grid = uniform_grid(0.5, dx).unwrap();
    let steps = grid.len() - 1;
    let noise = NoisePath::from_parts(grid, 1, vec![0.0; steps], vec![(0.125, vec![1.0], true)], MarkMeasureSpec::none(1), 0)
        .unwrap();
    let o = opts(dx, 0.5);
    let frame = mild_solve_moving_frame(&p, &noise, &o).unwrap();
    let ee = mild_solve_exponential_euler(&p, &noise, &o).unwrap();
    for z in [&frame.z, &ee] {
        for i in 0..z.len() {
            let t = noise.time(i);
            let expected: Vec<f64> = if t < 0.125 {
                vec![0.0; m]
            } else {
                let s = ((t - 0.125) / dx).round() as usize;
                (0..m).map(|k| if k + s < m { g[k + s] } else { 0.0 }).collect()
            };
            assert_eq!(z.value(i), expected.as_slice(), "t = {t}");
        }
        assert_eq!(z.left_limit_at(2).unwrap(), vec![0.0; m].as_slice());
    }
    // the frame process has a single jump of U_{-rho} embed g and is constant otherwise
    let y = &frame.y;
    let jump = p.state_to_frame(0.125, &g).unwrap();
    for i in 0..y.len() {
        let expected = if noise.time(i) < 0.125 { vec![0.0; jump.len()] } else { jump.to_vec() };
        assert_eq!(y.value(i), expected.as_slice());
    }
}

fn field(dim: usize) -> CoefficientSet {
    CoefficientSet::new(dim, 2)
        .with_drift(|_, z, out| {
            for (o, v) in out.iter_mut().zip(z) {
                *o = 0.5 * v.sin();
            }
        })
        .with_diffusion(|_, z, out| {
            out.fill(0.0);
            for (i, v) in z.iter().enumerate() {
                out[2 * i + i % 2] = 0.2 + 0.1 * v.cos();
            }
        })
        .with_jump(1, |_, z, x, out| {
            for (o, v) in out.iter_mut().zip(z) {
                *o = x[0] * (0.3 * v + 0.1);
            }
        })
        .with_regularity(Regularity::LIPSCHITZ)
}

#[test]
fn projection_identity_and_round_trip() {
    let spec = SemigroupSpec::Diagonal { eigenvalues: vec![-0.5, -1.0, -2.0], omega: 0.0 };
    let p = problem(spec, 0, field(3), vec![1.0, 0.5, -0.5], 1.0);
    let mut gaps = Vec::new();
    for dt in [1.0 / 32.0, 1.0 / 256.0] {
        let noise = sampled(&[1.0, 0.5], &jumpy(), 1.0, dt, 5);
        let sol = mild_solve_moving_frame(&p, &noise, &opts(dt, 1.0)).unwrap();
        for i in 0..sol.z.len() {
            let t = noise.time(i);
            assert_eq!(sol.z.value(i), p.frame_to_state(t, sol.y.value(i)).unwrap().as_slice());
        }
        let rebuilt = reconstruct_frame_process(&p, &sol.z, &noise).unwrap();
        gaps.push(rebuilt.sup_distance(&sol.y));
    }
    assert!(gaps[1] <= gaps[0] || gaps[1] < 1e-12, "{gaps:?}");
    assert!(gaps[1] < 0.05, "{gaps:?}");
}

#[test]
fn jumps_only_at_noise_jump_nodes() {
    let spec = SemigroupSpec::Diagonal { eigenvalues: vec![-1.0, -1.5], omega: 0.0 };
    let p = problem(spec, 0, field(2), vec![1.0, 1.0], 1.0);
    let noise = sampled(&[1.0, 1.0], &jumpy(), 1.0, 1.0 / 64.0, 8);
    let z = mild_solve_exponential_euler(&p, &noise, &opts(1.0 / 64.0, 1.0)).unwrap();
    let mut nodes: Vec<usize> = noise.jumps().iter().map(|j| j.node).collect();
    nodes.dedup();
    let recorded: Vec<usize> = {
        let mut r: Vec<usize> = z.jumps().iter().map(|j| j.node).collect();
        r.dedup();
        r
    };
    assert_eq!(recorded, nodes);
}
