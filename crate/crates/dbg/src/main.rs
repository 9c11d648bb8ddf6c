use ndarray::Array1;
use vibcontrol::hamiltonian::{eigenstates, Channel};
use vibcontrol::krotov::*;
use vibcontrol::presets::two_level_system;
use vibcontrol::propagator::{MemoryTrajectory, StateVector, TimeGrid};

fn main() {
    let splitting = 0.05;
    let tgrid = TimeGrid::new(2000, 2.0).unwrap();
    let sys = two_level_system(splitting, 1.0).unwrap();
    let g = eigenstates(&sys, Channel::Ground, 1).unwrap();
    let e = eigenstates(&sys, Channel::Excited, 1).unwrap();
    let problem = ControlProblem::new(
        sys,
        StateVector::from_eigenstate(&g, 0),
        StateVector::from_eigenstate(&e, 0),
        tgrid,
    ).unwrap();
    let t_total = tgrid.duration();
    let amp = 0.2 * std::f64::consts::PI / (0.5 * t_total);
    let shape = Array1::from_iter(tgrid.field_times().iter().map(|&t| (std::f64::consts::PI*t/t_total).sin().powi(2)));
    let values = Array1::from_iter(tgrid.field_times().iter().map(|&t| amp*(std::f64::consts::PI*t/t_total).sin().powi(2)*(splitting*t).cos()));
    let guess = ControlField::new(values, shape, 0.25, tgrid.dt).unwrap();
    let options = KrotovOptions {
        stop: StopCriteria { target_fidelity: 0.99999, max_iterations: 200, ..Default::default() },
        eps_budget: 0.05,
        ..Default::default()
    };
    let run = optimize(&problem, &guess, &options).unwrap();
    println!("converged F={} iters={} reason={} fieldmax={}", run.fidelity(), run.iterations(), run.stop_reason, run.field.max_abs());
    let mut traj = MemoryTrajectory::new(tgrid.n_steps + 1);
    let (newf, rec) = krotov_iterate(&problem, &run.field, &mut traj).unwrap();
    println!("iterate: F={} penalty={} d1={} fieldmax={}", rec.fidelity, rec.penalty, rec.delta1, newf.max_abs());
    // inspect where the update is large
    let mut worst = (0usize, 0.0f64);
    for k in 0..2000 {
        let d = (newf.values[k] - run.field.values[k]).abs();
        if d > worst.1 { worst = (k, d); }
    }
    println!("largest update at k={} of {}", worst.0, worst.1);
    println!("shape there = {}, alpha = {}", run.field.shape[worst.0], run.field.alpha);
}
