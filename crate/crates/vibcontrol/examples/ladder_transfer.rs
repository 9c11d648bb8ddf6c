//! Desk-scale vibrational ladder transfer: drive v = 8 of the ground Morse
//! well to v = 0 through the excited channel, with the guess carriers read
//! off the Franck-Condon map.
//!
//! Usage: ladder_transfer [max_iterations] [alpha_small] [alpha_large] [switch] [amplitude]

use std::sync::Arc;

use ndarray::Array1;
use vibcontrol::krotov::{
    optimize, AlphaSchedule, ControlProblem, KrotovOptions, StopCriteria,
};
use vibcontrol::presets::LadderModel;
use vibcontrol::propagator::StateVector;
use vibcontrol::strategies::{make_guess, EnvelopeKind, GuessSpec, ShapeKind};
use vibcontrol::units;

fn main() -> vibcontrol::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, default: f64| -> f64 {
        args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
    };
    let max_iterations = arg(1, 300.0) as usize;
    let alpha_small = arg(2, 10.0);
    let alpha_large = arg(3, 100.0);
    let switch_iteration = arg(4, 40.0) as usize;
    let amplitude = arg(5, 0.008);

    let t0 = std::time::Instant::now();
    let model = LadderModel::desk()?;
    println!(
        "model: {} ground / {} excited bound levels on a {}-point grid ({:.1?})",
        model.ground.n_bound,
        model.excited.n_bound,
        model.params.n_points,
        t0.elapsed()
    );

    let v_init = 8;
    let (w_from, w_to) = model.guess_centers(v_init);
    println!(
        "FC windows: out of v={v_init} at {:.1} cm^-1, into v=0 at {:.1} cm^-1",
        units::hartree_to_cm1(w_from),
        units::hartree_to_cm1(w_to)
    );

    let tgrid = model.time_grid_for(v_init, 2.0, 12.0)?;
    println!(
        "time grid: T = {:.1} au ({:.3} ps), {} steps, dt = {:.2} au",
        tgrid.duration(),
        tgrid.duration() * units::SECOND_PER_AU * 1e12,
        tgrid.n_steps,
        tgrid.dt
    );

    let spec = GuessSpec {
        amplitude,
        centers: vec![w_from, w_to],
        envelope: EnvelopeKind::SinSquared,
        train_offsets: vec![],
    };
    let guess = make_guess(&spec, &tgrid, &ShapeKind::SinSquared, alpha_small)?;

    let problem = ControlProblem::new(
        model.system.clone(),
        StateVector::from_eigenstate(&model.ground, v_init),
        StateVector::from_eigenstate(&model.ground, 0),
        tgrid,
    )?;

    let options = KrotovOptions {
        schedule: Some(AlphaSchedule { alpha_small, alpha_large, switch_iteration }),
        stop: StopCriteria { target_fidelity: 0.99, max_iterations, ..Default::default() },
        eps_budget: 0.1,
        ..Default::default()
    };

    let t1 = std::time::Instant::now();
    let run = optimize(&problem, &guess, &options)?;
    let wall = t1.elapsed();

    for r in run.records.iter().filter(|r| r.iteration % 10 == 0 || r.iteration < 4) {
        println!(
            "iter {:4}  F = {:.6}  J = {:+.6e}  penalty = {:.3e}  d1 = {:.3e}  min d2 = {:.3e}  |eps| = {:.4}",
            r.iteration, r.fidelity, r.functional, r.penalty, r.delta1, r.min_delta2, r.field_max
        );
    }
    println!(
        "result: F = {:.6} after {} iterations ({}); wall {:.1?} ({:.2} s/iter)",
        run.fidelity(),
        run.iterations(),
        run.stop_reason,
        wall,
        wall.as_secs_f64() / run.iterations().max(1) as f64
    );

    // where did the optimal spectrum end up relative to the FC windows?
    let spectrum = vibcontrol::analysis::pulse_spectrum(&run.field, vibcontrol::analysis::WindowKind::Rectangular)?;
    for (name, w) in [("from", w_from), ("to", w_to)] {
        let target_cm1 = units::hartree_to_cm1(w);
        let peak = spectrum.peak_near(target_cm1, 10);
        let peak_cm1 = spectrum.frequencies_cm1[peak];
        println!(
            "spectrum peak near the '{name}' window: {:.1} cm^-1 (FC prediction {:.1}, {:+.1} bins)",
            peak_cm1,
            target_cm1,
            (peak_cm1 - target_cm1) / spectrum.bin_width_cm1
        );
    }

    let _ = Array1::<f64>::zeros(1);
    Ok(())
}
