//! End-to-end orchestration: build the system from a config, construct the
//! guess, run the strategy pipeline, and emit the artifact set.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array1;

use crate::analysis::{population_trace, pulse_energy_joules, pulse_spectrum, WindowKind};
use crate::config::{
    EnvelopeConfig, PenaltyVariant, PipelineStage, PotentialSource, RunConfig, ShapeConfig,
    TailConfig,
};
use crate::error::{Result, VibError};
use crate::grid::build_mapped_grid;
use crate::hamiltonian::{
    build_system, eigenstates, franck_condon_map, Channel, ChannelSystem, EigenBasis,
    FranckCondonMap,
};
use crate::krotov::{
    optimize, read_checkpoint, write_checkpoint, AlphaSchedule, CheckpointPolicy, ControlField,
    ControlProblem, KrotovOptions, KrotovRun, PenaltyKind, SpillPolicy, StopCriteria,
};
use crate::potential::PotentialCurve;
use crate::propagator::{
    propagate, ChebychevPropagator, DiskTrajectory, MemoryTrajectory, StateVector, TimeGrid,
    Trajectory,
};
use crate::strategies::{
    compress_time, make_guess, minimal_time_hint, reduce_intensity_restart, CompressOptions,
    EnergyTarget, EnvelopeKind, GuessSpec, ShapeKind, SpectralDeletion,
};
use crate::units;

/// Environment variable overriding the trajectory spill directory.
pub const SPILL_DIR_ENV: &str = "VIBCONTROL_SPILL_DIR";

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub max_iterations: Option<usize>,
    pub seed: Option<u64>,
}

/// Everything resolved from a config, ready to run.
pub struct ResolvedRun {
    pub config: RunConfig,
    pub config_path: PathBuf,
    pub system: Arc<ChannelSystem>,
    pub ground: EigenBasis,
    pub excited: EigenBasis,
    pub fc: FranckCondonMap,
    pub tgrid: TimeGrid,
    pub centers: Vec<f64>,
    pub guess: ControlField,
    pub t_star: f64,
}

/// Outcome summary returned by `run` and `resume`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub fidelity: f64,
    pub iterations: usize,
    pub output_dir: PathBuf,
    pub stages: Vec<String>,
}

fn build_curve(source: &PotentialSource, label: &str) -> Result<PotentialCurve> {
    match source {
        PotentialSource::Morse { d_hartree, a_inv_bohr, r_e_bohr, offset_hartree } => {
            PotentialCurve::morse(*d_hartree, *a_inv_bohr, *r_e_bohr, *offset_hartree, label)
        }
        PotentialSource::File { path, tail } => {
            let tail = match tail {
                TailConfig::None => None,
                TailConfig::C3 => Some(crate::potential::TailKind::InverseCube),
                TailConfig::C6 => Some(crate::potential::TailKind::InverseSixth),
            };
            PotentialCurve::from_file(path, label, tail)
        }
    }
}

fn shape_kind(cfg: &RunConfig) -> ShapeKind {
    match cfg.shape {
        ShapeConfig::Sin2 => ShapeKind::SinSquared,
        ShapeConfig::Sine => ShapeKind::Sine,
        ShapeConfig::Gaussian => {
            // a broad gate centered in the window
            ShapeKind::Gaussian { fwhm: 0.5 }
        }
    }
}

/// Resolve a config into a concrete system, time grid, and guess field.
pub fn resolve(config: RunConfig, config_path: &Path) -> Result<ResolvedRun> {
    let mass = config.mass_me()?;
    let g_curve = build_curve(&config.system.ground, "ground")?;
    let e_curve = build_curve(&config.system.excited, "excited")?;

    // envelope: pointwise minimum of both channels on a fine mesh
    let (r_min, r_max) = (config.grid.r_min_bohr, config.grid.r_max_bohr);
    let nf = 2048;
    let mut rr = Vec::with_capacity(nf);
    let mut vv = Vec::with_capacity(nf);
    for i in 0..nf {
        let r = r_min + (r_max - r_min) * i as f64 / (nf - 1) as f64;
        rr.push(r);
        vv.push(g_curve.value(r)?.min(e_curve.value(r)?));
    }
    let envelope = PotentialCurve::from_samples(rr, vv, "envelope", None)?;
    let grid = build_mapped_grid(
        &envelope,
        config.grid.e_max_hartree,
        config.grid.n_points,
        config.grid.beta,
        r_min,
        r_max,
    )?;
    let system = Arc::new(build_system(&g_curve, &e_curve, Arc::new(grid), mass, config.system.dipole_au)?);

    let mut n_request = config
        .grid
        .n_points
        .min(64.max(config.initial_level + 1).max(config.target_level + 1));
    let mut ground = eigenstates(&system, Channel::Ground, n_request)?;
    if ground.n_bound > n_request && ground.n_bound <= config.grid.n_points {
        n_request = ground.n_bound;
        ground = eigenstates(&system, Channel::Ground, n_request)?;
    }
    let n_request_e = config.grid.n_points.min(n_request.max(1));
    let mut excited = eigenstates(&system, Channel::Excited, n_request_e)?;
    if excited.n_bound > n_request_e && excited.n_bound <= config.grid.n_points {
        excited = eigenstates(&system, Channel::Excited, excited.n_bound)?;
    }
    if config.initial_level >= ground.n_states() || config.target_level >= ground.n_states() {
        return Err(VibError::invalid(format!(
            "levels {} -> {} not available: only {} ground states computed",
            config.initial_level,
            config.target_level,
            ground.n_states()
        )));
    }
    let fc = franck_condon_map(&ground, &excited)?;

    // carriers
    let centers: Vec<f64> = if config.guess.centers_cm1.is_empty() {
        let (_, _, w_from) = fc.peak_from(config.initial_level);
        let (_, _, w_to) = fc.peak_from(config.target_level);
        if (w_from - w_to).abs() < 1e-12 {
            vec![w_from]
        } else {
            vec![w_from, w_to]
        }
    } else {
        config.guess.centers_cm1.iter().map(|&w| units::cm1_to_hartree(w)).collect()
    };

    // horizon
    let t_star = if config.initial_level >= 1 {
        minimal_time_hint(&ground, config.initial_level)?.t_star
    } else {
        minimal_time_hint(&ground, 1)?.t_star
    };
    let t_total = match config.time.t_ps {
        Some(ps) => units::ps_to_au(ps),
        None => config.time.horizon_multiple * t_star,
    };
    let n_steps = match config.time.n_steps {
        Some(n) => n,
        None => {
            let w_max = centers.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
            let dt_max = 2.0 * std::f64::consts::PI / w_max / config.time.samples_per_cycle;
            ((t_total / dt_max).ceil() as usize).div_ceil(10) * 10
        }
    };
    let tgrid = TimeGrid::new(n_steps, t_total / n_steps as f64)?;

    // guess field
    let envelope_kind = match config.guess.envelope {
        EnvelopeConfig::Gaussian => EnvelopeKind::Gaussian {
            fwhm: units::fs_to_au(config.guess.fwhm_fs.unwrap_or(0.0)),
        },
        EnvelopeConfig::Sin2 => EnvelopeKind::SinSquared,
        EnvelopeConfig::Sine => EnvelopeKind::Sine,
    };
    let spec = GuessSpec {
        amplitude: config.guess.amplitude_au,
        centers: centers.clone(),
        envelope: envelope_kind,
        train_offsets: config.guess.train_offsets_fs.iter().map(|&t| units::fs_to_au(t)).collect(),
    };
    let guess = make_guess(&spec, &tgrid, &shape_kind(&config), config.penalty.alpha)?;

    Ok(ResolvedRun {
        config,
        config_path: config_path.to_path_buf(),
        system,
        ground,
        excited,
        fc,
        tgrid,
        centers,
        guess,
        t_star,
    })
}

impl ResolvedRun {
    pub fn problem(&self, tgrid: TimeGrid) -> Result<ControlProblem> {
        ControlProblem::new(
            self.system.clone(),
            StateVector::from_eigenstate(&self.ground, self.config.initial_level),
            StateVector::from_eigenstate(&self.ground, self.config.target_level),
            tgrid,
        )
    }

    fn spill_dir(&self) -> Option<PathBuf> {
        std::env::var_os(SPILL_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.config.output.spill_dir.clone())
    }

    fn spill_policy(&self) -> SpillPolicy {
        SpillPolicy {
            memory_budget_bytes: self.config.output.memory_budget_mb << 20,
            spill_dir: self.spill_dir(),
        }
    }

    fn penalty(&self, reference: &ControlField) -> Result<PenaltyKind> {
        match self.config.penalty.variant {
            PenaltyVariant::Quadratic => Ok(PenaltyKind::Quadratic),
            PenaltyVariant::Restricted => {
                let alpha2 = self.config.penalty.alpha2.unwrap_or(0.0);
                let reference = match &self.config.penalty.reference_checkpoint {
                    Some(path) => read_checkpoint(path)?.values,
                    None => reference.values.clone(),
                };
                Ok(PenaltyKind::Restricted { alpha2, reference })
            }
        }
    }

    /// Human-readable resolution report (the `validate` subcommand output).
    pub fn report(&self) -> String {
        let cfg = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "config: {}", self.config_path.display());
        if !cfg.label.is_empty() {
            let _ = writeln!(s, "label: {}", cfg.label);
        }
        let _ = writeln!(s, "seed: {}", cfg.seed);
        let _ = writeln!(s, "mass: {:.6} m_e", self.system.kinetic.mass);
        let _ = writeln!(s, "dipole: {:.6} au", self.system.dipole);
        let _ = writeln!(
            s,
            "grid: {} points on [{:.4}, {:.4}] bohr, beta {:.3}, e_max {:.6} hartree",
            cfg.grid.n_points, cfg.grid.r_min_bohr, cfg.grid.r_max_bohr, cfg.grid.beta,
            cfg.grid.e_max_hartree
        );
        let _ = writeln!(
            s,
            "levels: ground {} bound, excited {} bound; transfer v={} -> v={}",
            self.ground.n_bound, self.excited.n_bound, cfg.initial_level, cfg.target_level
        );
        let _ = writeln!(
            s,
            "T* = {:.2} au ({:.4} ps); recommended T = 2 T* = {:.2} au",
            self.t_star,
            self.t_star * units::SECOND_PER_AU * 1e12,
            2.0 * self.t_star
        );
        let t = self.tgrid.duration();
        let _ = writeln!(
            s,
            "time grid: T = {:.2} au ({:.4} ps), {} steps, dt = {:.4} au",
            t,
            t * units::SECOND_PER_AU * 1e12,
            self.tgrid.n_steps,
            self.tgrid.dt
        );
        if t < self.t_star {
            let _ = writeln!(
                s,
                "warning: T is below T* = {:.2} au; direct optimization may fail \
                 (the time-compression strategy exists for this regime)",
                self.t_star
            );
        }
        let centers_cm1: Vec<String> = self
            .centers
            .iter()
            .map(|&w| format!("{:.2}", units::hartree_to_cm1(w)))
            .collect();
        let _ = writeln!(
            s,
            "guess: amplitude {:.6} au, centers [{}] cm^-1",
            cfg.guess.amplitude_au,
            centers_cm1.join(", ")
        );
        let _ = writeln!(
            s,
            "penalty: {:?}, alpha {}, schedule {:?}",
            cfg.penalty.variant, cfg.penalty.alpha, cfg.schedule
        );
        let _ = writeln!(
            s,
            "stop: F >= {}, max {} iterations, stagnation {} over {} iterations",
            cfg.stop.target_fidelity, cfg.stop.max_iterations, cfg.stop.stagnation_tol,
            cfg.stop.stagnation_window
        );
        let _ = writeln!(s, "output: {}", cfg.output.dir.display());
        if cfg.pipeline.is_empty() {
            let _ = writeln!(s, "pipeline: [optimize]");
        } else {
            let _ = writeln!(s, "pipeline:");
            for (i, stage) in cfg.pipeline.iter().enumerate() {
                let _ = writeln!(s, "  {i:02}: {stage:?}");
            }
        }
        s
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn eigen_table(basis: &EigenBasis) -> String {
    let mut s = String::from("# v energy_hartree energy_cm1 bound\n");
    for v in 0..basis.n_states() {
        let e = basis.energies[v];
        let _ = writeln!(
            s,
            "{v} {e:.16e} {:.10} {}",
            units::hartree_to_cm1(e),
            if v < basis.n_bound { 1 } else { 0 }
        );
    }
    s
}

fn fc_matrix_table(fc: &FranckCondonMap) -> String {
    let (nv, nvp) = fc.factors.dim();
    let mut s = String::from("# rows: ground v; columns: excited v'\n# v\\v'");
    for vp in 0..nvp {
        let _ = write!(s, " {vp}");
    }
    s.push('\n');
    for v in 0..nv {
        let _ = write!(s, "{v}");
        for vp in 0..nvp {
            let _ = write!(s, " {:.10e}", fc.factors[[v, vp]]);
        }
        s.push('\n');
    }
    s
}

fn fc_column_table(fc: &FranckCondonMap, v: usize) -> String {
    let mut s = format!("# transitions out of ground v = {v}\n# frequency_cm1 fc_factor\n");
    for vp in 0..fc.factors.ncols() {
        let _ = writeln!(
            s,
            "{:.10} {:.10e}",
            units::hartree_to_cm1(fc.frequencies[[v, vp]]),
            fc.factors[[v, vp]]
        );
    }
    s
}

fn convergence_log(run: &KrotovRun) -> String {
    let mut s = String::from("# n F J penalty delta1 min_delta2\n");
    for r in &run.records {
        let _ = writeln!(
            s,
            "{} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            r.iteration, r.fidelity, r.functional, r.penalty, r.delta1, r.min_delta2
        );
    }
    s
}

fn spectrum_table(field: &ControlField) -> Result<String> {
    let spec = pulse_spectrum(field, WindowKind::Rectangular)?;
    let mut s = String::from("# frequency_cm1 magnitude\n");
    for (f, m) in spec.frequencies_cm1.iter().zip(spec.magnitude.iter()) {
        let _ = writeln!(s, "{f:.10} {m:.16e}");
    }
    Ok(s)
}

fn population_tables(
    resolved: &ResolvedRun,
    field: &ControlField,
    tgrid: &TimeGrid,
    out_dir: &Path,
) -> Result<()> {
    // propagate once more, storing the trajectory within the memory budget
    let problem = resolved.problem(*tgrid)?;
    let eps_budget = field.max_abs() * 1.5 + 1e-9;
    let bounds = crate::hamiltonian::spectral_bounds(&resolved.system, eps_budget);
    let mut prop = ChebychevPropagator::new(resolved.system.clone(), bounds, 1e-12)?;
    let n_slots = tgrid.n_steps + 1;
    let bytes = n_slots * resolved.system.n_points() * 32;
    let spill = resolved.spill_policy();
    let mut traj: Box<dyn Trajectory> = if bytes <= spill.memory_budget_bytes {
        Box::new(MemoryTrajectory::new(n_slots))
    } else {
        let dir = spill.spill_dir.unwrap_or_else(std::env::temp_dir);
        std::fs::create_dir_all(&dir)?;
        Box::new(DiskTrajectory::create(
            dir.join(format!("vibcontrol-final-{}.traj", std::process::id())),
            resolved.system.n_points(),
            tgrid.n_steps,
            tgrid.dt,
        )?)
    };
    propagate(
        &problem.initial,
        field.values.as_slice().unwrap(),
        &mut prop,
        tgrid,
        traj.as_mut(),
    )?;

    let trace = population_trace(traj.as_mut(), &resolved.ground, &resolved.excited)?;
    for (channel, pops, total, bound) in [
        ("ground", &trace.ground, &trace.ground_total, &trace.ground_bound_sum),
        ("excited", &trace.excited, &trace.excited_total, &trace.excited_bound_sum),
    ] {
        let mut s = format!("# time_au total bound_sum continuum pops[v=0..{}]\n", pops.ncols() - 1);
        for k in 0..trace.times.len() {
            let _ = write!(
                s,
                "{:.10e} {:.10e} {:.10e} {:.10e}",
                trace.times[k],
                total[k],
                bound[k],
                total[k] - bound[k]
            );
            for v in 0..pops.ncols() {
                let _ = write!(s, " {:.10e}", pops[[k, v]]);
            }
            s.push('\n');
        }
        write_text(&out_dir.join(format!("population_{channel}.txt")), &s)?;
    }

    // threshold census in the two-row-per-channel table layout
    let census = crate::analysis::threshold_census(&trace, &resolved.config.output.census_thresholds)?;
    let mut s = String::from("# levels whose population ever exceeds each threshold\n");
    let _ = writeln!(s, "# threshold ground_count excited_count");
    for (i, th) in census.thresholds.iter().enumerate() {
        let _ = writeln!(s, "{th:.4} {} {}", census.ground_counts[i], census.excited_counts[i]);
    }
    let _ = writeln!(s, "# longest contiguous occupation per exceeding level (channel v t_au t_fs)");
    for (i, th) in census.thresholds.iter().enumerate() {
        for &(v, t) in &census.ground_runs[i] {
            let _ = writeln!(s, "# th={th:.4} ground {v} {t:.6e} {:.4}", units::au_to_fs(t));
        }
        for &(v, t) in &census.excited_runs[i] {
            let _ = writeln!(s, "# th={th:.4} excited {v} {t:.6e} {:.4}", units::au_to_fs(t));
        }
    }
    write_text(&out_dir.join("census.txt"), &s)?;
    Ok(())
}

struct StageOutcome {
    field: ControlField,
    tgrid: TimeGrid,
    fidelity: f64,
    iterations: usize,
    description: String,
}

fn optimize_stage(
    resolved: &ResolvedRun,
    field: &ControlField,
    tgrid: &TimeGrid,
    stage_dir: &Path,
    stage_index: usize,
    start_iteration: usize,
    target_override: Option<f64>,
    max_iter_override: Option<usize>,
    global_max_override: Option<usize>,
) -> Result<(KrotovRun, StageOutcome)> {
    let cfg = &resolved.config;
    let problem = resolved.problem(*tgrid)?;
    let stop = StopCriteria {
        target_fidelity: target_override.unwrap_or(cfg.stop.target_fidelity),
        max_iterations: global_max_override
            .or(max_iter_override)
            .unwrap_or(cfg.stop.max_iterations),
        stagnation_window: cfg.stop.stagnation_window,
        stagnation_tol: cfg.stop.stagnation_tol,
    };
    let schedule = cfg.schedule.map(|s| AlphaSchedule {
        alpha_small: s.alpha_small,
        alpha_large: s.alpha_large,
        switch_iteration: s.switch_iteration,
    });
    let mut extra_headers = vec![
        ("config".to_string(), resolved.config_path.display().to_string()),
        ("stage".to_string(), stage_index.to_string()),
    ];
    extra_headers.push(("label".to_string(), cfg.label.clone()));
    let options = KrotovOptions {
        penalty: resolved.penalty(field)?,
        stop,
        schedule,
        checkpoint: Some(CheckpointPolicy {
            dir: stage_dir.to_path_buf(),
            every: cfg.output.checkpoint_every,
            extra_headers,
        }),
        spill: resolved.spill_policy(),
        eps_budget: (field.max_abs() * 3.0).max(0.05),
        propagation_tol: 1e-12,
        monotonicity_tol: 1e-9,
        start_iteration,
    };
    std::fs::create_dir_all(stage_dir)?;
    let run = optimize(&problem, field, &options)?;
    write_text(&stage_dir.join("convergence.log"), &convergence_log(&run))?;
    write_checkpoint(
        &stage_dir.join("optimal_field.txt"),
        &run.field,
        run.iterations(),
        run.fidelity(),
        run.records.last().map(|r| r.functional).unwrap_or(0.0),
        &[("stop".to_string(), run.stop_reason.to_string())],
    )?;
    write_text(&stage_dir.join("spectrum_optimal.txt"), &spectrum_table(&run.field)?)?;
    let outcome = StageOutcome {
        field: run.field.clone(),
        tgrid: *tgrid,
        fidelity: run.fidelity(),
        iterations: run.iterations() - start_iteration,
        description: format!(
            "optimize: F = {:.6} after {} iterations ({})",
            run.fidelity(),
            run.iterations() - start_iteration,
            run.stop_reason
        ),
    };
    Ok((run, outcome))
}

fn execute_pipeline(
    resolved: &ResolvedRun,
    out_dir: &Path,
    overrides: &Overrides,
    resume_state: Option<(usize, usize, ControlField)>,
) -> Result<RunSummary> {
    let cfg = &resolved.config;
    std::fs::create_dir_all(out_dir)?;

    // static artifacts
    write_text(&out_dir.join("eigenvalues_ground.txt"), &eigen_table(&resolved.ground))?;
    write_text(&out_dir.join("eigenvalues_excited.txt"), &eigen_table(&resolved.excited))?;
    write_text(&out_dir.join("fc_matrix.txt"), &fc_matrix_table(&resolved.fc))?;
    write_text(
        &out_dir.join("fc_from_initial.txt"),
        &fc_column_table(&resolved.fc, cfg.initial_level),
    )?;
    write_text(
        &out_dir.join("fc_from_target.txt"),
        &fc_column_table(&resolved.fc, cfg.target_level),
    )?;
    write_checkpoint(&out_dir.join("guess_field.txt"), &resolved.guess, 0, 0.0, 0.0, &[])?;
    write_text(&out_dir.join("spectrum_guess.txt"), &spectrum_table(&resolved.guess)?)?;
    let resolved_toml = toml::to_string_pretty(&cfg)
        .map_err(|e| VibError::invalid(format!("cannot serialize resolved config: {e}")))?;
    write_text(&out_dir.join("run_config.toml"), &resolved_toml)?;

    let pipeline: Vec<PipelineStage> = if cfg.pipeline.is_empty() {
        vec![PipelineStage::Optimize { target_fidelity: None, max_iterations: None }]
    } else {
        cfg.pipeline.clone()
    };

    let (first_stage, start_iteration, mut field) = match resume_state {
        Some((stage, iteration, field)) => (stage, iteration, field),
        None => (0, 0, resolved.guess.clone()),
    };
    let mut tgrid = resolved.tgrid;
    if field.n_samples() != tgrid.n_steps {
        // resuming a compressed stage: the checkpoint fixes the grid
        tgrid = TimeGrid::new(field.n_samples(), field.dt)?;
    }
    let mut fidelity = 0.0;
    let mut iterations = 0usize;
    let mut stages: Vec<String> = Vec::new();
    let mut start_iter = start_iteration;

    for (idx, stage) in pipeline.iter().enumerate().skip(first_stage) {
        let stage_dir = out_dir.join(format!("stage_{idx:02}"));
        match stage {
            PipelineStage::Optimize { target_fidelity, max_iterations } => {
                let (run, outcome) = optimize_stage(
                    resolved,
                    &field,
                    &tgrid,
                    &stage_dir,
                    idx,
                    start_iter,
                    *target_fidelity,
                    *max_iterations,
                    overrides.max_iterations,
                )?;
                field = outcome.field;
                fidelity = outcome.fidelity;
                iterations += outcome.iterations;
                stages.push(format!("stage {idx:02} {}", outcome.description));
                let _ = run;
                start_iter = 0;
            }
            PipelineStage::ReduceIntensity { factor } => {
                field = reduce_intensity_restart(&field, *factor)?;
                std::fs::create_dir_all(&stage_dir)?;
                write_checkpoint(&stage_dir.join("field_after_reduction.txt"), &field, 0, 0.0, 0.0, &[])?;
                stages.push(format!(
                    "stage {idx:02} reduce_intensity: factor {factor} (energy / {:.1})",
                    factor * factor
                ));
            }
            PipelineStage::CompressTime { factor, symmetric, energy_fraction } => {
                let options = CompressOptions {
                    deletion: if *symmetric {
                        SpectralDeletion::Symmetric
                    } else {
                        SpectralDeletion::Asymmetric
                    },
                    energy: EnergyTarget::FractionOfOriginal(
                        energy_fraction.unwrap_or(1.0 / *factor as f64),
                    ),
                };
                field = compress_time(&field, *factor, &options)?;
                tgrid = TimeGrid::new(field.n_samples(), field.dt)?;
                std::fs::create_dir_all(&stage_dir)?;
                write_checkpoint(&stage_dir.join("field_after_compression.txt"), &field, 0, 0.0, 0.0, &[])?;
                stages.push(format!(
                    "stage {idx:02} compress_time: k = {factor}, T -> {:.2} au, {} samples",
                    field.duration(),
                    field.n_samples()
                ));
            }
        }
    }

    // final artifacts
    write_checkpoint(&out_dir.join("optimal_field.txt"), &field, iterations, fidelity, 0.0, &[])?;
    write_text(&out_dir.join("spectrum_optimal.txt"), &spectrum_table(&field)?)?;
    population_tables(resolved, &field, &tgrid, out_dir)?;
    let energy_j = pulse_energy_joules(&field, cfg.output.beam_radius_um * 1e-6)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "label: {}", cfg.label);
    let _ = writeln!(summary, "final fidelity: {fidelity:.8}");
    let _ = writeln!(summary, "total optimize iterations: {iterations}");
    let _ = writeln!(
        summary,
        "pulse energy: {energy_j:.6e} J at beam radius {} um",
        cfg.output.beam_radius_um
    );
    let _ = writeln!(
        summary,
        "pulse energy integral: {:.6e} au",
        field.energy_integral()
    );
    for line in &stages {
        let _ = writeln!(summary, "{line}");
    }
    write_text(&out_dir.join("summary.txt"), &summary)?;

    Ok(RunSummary { fidelity, iterations, output_dir: out_dir.to_path_buf(), stages })
}

/// Execute a full configured run.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<RunSummary> {
    let mut config = RunConfig::from_file(config_path)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    let out_dir = overrides.output_dir.clone().unwrap_or_else(|| config.output.dir.clone());
    let resolved = resolve(config, config_path)?;
    execute_pipeline(&resolved, &out_dir, overrides, None)
}

/// Parse-only mode: resolve and report without running.
pub fn validate(config_path: &Path) -> Result<String> {
    let config = RunConfig::from_file(config_path)?;
    let resolved = resolve(config, config_path)?;
    Ok(resolved.report())
}

/// Continue an interrupted optimization from a checkpoint written by `run`.
/// The original config is located through the checkpoint header.
pub fn resume(checkpoint_path: &Path, overrides: &Overrides) -> Result<RunSummary> {
    let cp = read_checkpoint(checkpoint_path)?;
    let mut config_path: Option<PathBuf> = None;
    let mut stage = 0usize;
    for (k, v) in &cp.headers {
        match k.as_str() {
            "config" => config_path = Some(PathBuf::from(v)),
            "stage" => stage = v.parse().unwrap_or(0),
            _ => {}
        }
    }
    let config_path = config_path.ok_or_else(|| {
        VibError::invalid("checkpoint has no '# config' header; cannot locate the run config")
    })?;
    let config_path = if config_path.is_relative() {
        checkpoint_path
            .parent()
            .map(|d| d.join(&config_path))
            .unwrap_or(config_path)
    } else {
        config_path
    };
    let config = RunConfig::from_file(&config_path)?;
    let out_dir = overrides
        .output_dir
        .clone()
        .unwrap_or_else(|| config.output.dir.join(format!("resume_from_{}", cp.iteration)));
    let resolved = resolve(config, &config_path)?;

    // reattach the shape: the checkpoint stores only the field samples
    let tgrid = TimeGrid::new(cp.values.len(), cp.dt)?;
    let shape = crate::strategies::sample_shape(&shape_kind(&resolved.config), &tgrid);
    let mut field = ControlField::new(cp.values.clone(), shape, cp.alpha, cp.dt)?;
    // compressed stages carry the restart shape
    if field.n_samples() != resolved.tgrid.n_steps {
        field.shape = crate::strategies::sample_shape(&ShapeKind::Sine, &tgrid);
    }
    let _ = Array1::<f64>::zeros(0);
    execute_pipeline(&resolved, &out_dir, overrides, Some((stage, cp.iteration, field)))
}
