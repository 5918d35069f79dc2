use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

use oneshot_core::adjoint::backward_pass;
use oneshot_core::linalg::CyclicTridiagonalLu;
use oneshot_core::models::{AdvectionDiffusionModel, ControlledVdpModel, VanDerPolModel};
use oneshot_core::{
    solve_classic, sweep_h, AdjointTrajectory, ClassicOptions, DesignVector, Linearization, Model, StateVector,
    SweepOptions, TimeGrid, Trajectory,
};

fn sweeps(c: &mut Criterion) {
    let vdp = VanDerPolModel::default();
    let u = vdp.default_design();
    let grid = TimeGrid::uniform(20.0, 512).unwrap();
    let y = Trajectory::constant(grid.steps(), &vdp.initial_state(&u));
    c.bench_function("sweep_h vdp N=512", |b| {
        b.iter(|| sweep_h(&vdp, &grid, black_box(&y), &u, &SweepOptions::default()).unwrap())
    });

    let ad = AdvectionDiffusionModel::new(1.0, 1e-5, 100).unwrap();
    let none = DesignVector::zeros(0);
    let grid_ad = TimeGrid::uniform(1.0, 100).unwrap();
    let y_ad = Trajectory::constant(grid_ad.steps(), &ad.initial_state(&none));
    c.bench_function("sweep_h advdiff M=100 N=100", |b| {
        b.iter(|| sweep_h(&ad, &grid_ad, black_box(&y_ad), &none, &SweepOptions::default()).unwrap())
    });
}

fn adjoint(c: &mut Criterion) {
    let m = ControlledVdpModel::default();
    let u = m.default_design();
    let grid = TimeGrid::uniform(20.0, 512).unwrap();
    let (y, _) = solve_classic(&m, &grid, &u, &ClassicOptions::default()).unwrap();
    let lin = Linearization::new(&m, &grid, &y, &u, &SweepOptions::default()).unwrap();
    let adj: AdjointTrajectory = Trajectory::constant(grid.steps(), &StateVector::zeros(m.state_dim()));
    c.bench_function("linearize vdp_control N=512", |b| {
        b.iter(|| Linearization::new(&m, &grid, black_box(&y), &u, &SweepOptions::default()).unwrap())
    });
    c.bench_function("backward pass vdp_control N=512", |b| {
        b.iter(|| backward_pass(&m, &grid, &y, black_box(&adj), &u, &lin, true).unwrap())
    });
}

fn cyclic_solve(c: &mut Criterion) {
    let ad = AdvectionDiffusionModel::new(1.0, 1e-5, 1000).unwrap();
    let a = ad.operator().shifted(100.0, -1.0);
    let lu = CyclicTridiagonalLu::new(&a).unwrap();
    let r = DVector::from_fn(1000, |i, _| (i as f64 * 0.01).sin());
    c.bench_function("cyclic tridiagonal factor M=1000", |b| {
        b.iter(|| CyclicTridiagonalLu::new(black_box(&a)).unwrap())
    });
    c.bench_function("cyclic tridiagonal solve M=1000", |b| b.iter(|| lu.solve(black_box(&r))));
}

criterion_group!(benches, sweeps, adjoint, cyclic_solve);
criterion_main!(benches);
