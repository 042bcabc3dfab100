//! Projected gradient ascent on the morphing vector with Armijo
//! backtracking, convergence diagnostics, and multi-start.
//!
//! Each iteration takes a gradient step, projects onto the box `[0, zeta]^N`,
//! and backtracks the step size until the projected point satisfies the
//! sufficient-increase condition
//!
//! ```text
//! SE(y+) >= SE(y) + c1 * <grad SE(y), y+ - y>,    y+ = proj(y + step * grad),
//! ```
//!
//! the inner-product form appropriate for box constraints. Accepted
//! objective values are nondecreasing by construction. Termination is by
//! relative objective change, gradient-mapping norm `||y+ - y|| / step`, the
//! iteration cap, or a line-search stall; the reason is recorded.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{FimError, Result};
use crate::geometry::{project_feasible, ArrayConfig, MorphingVector};
use crate::gradient::{grad_sum_se, GradientWorkspace};
use crate::model::FimModel;
use crate::se::SeBreakdown;
use crate::seeding::stream_rng;

/// Optimizer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmConfig {
    /// Step size tried first in each line search.
    pub step0: f64,
    /// Backtracking shrink factor in (0, 1).
    pub shrink: f64,
    /// Sufficient-increase constant in (0, 1).
    pub c1: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Relative objective-change tolerance.
    pub obj_tol: f64,
    /// Gradient-mapping norm tolerance.
    pub map_tol: f64,
    /// Smallest step the line search will try before declaring a stall.
    pub min_step: f64,
    /// Number of optimization runs in [`multi_start`].
    pub restarts: usize,
    /// Whether run 0 starts from the flat surface.
    pub include_flat_start: bool,
    /// Master seed for the random starting points.
    pub seed: u64,
}

impl PgmConfig {
    /// Length-scale-aware defaults for a given array.
    pub fn for_array(array: &ArrayConfig) -> Self {
        Self {
            step0: array.wavelength / 10.0,
            shrink: 0.5,
            c1: 1e-4,
            max_iters: 500,
            obj_tol: 1e-8,
            map_tol: 1e-6,
            min_step: 1e-12 * array.wavelength,
            restarts: 1,
            include_flat_start: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(FimError::InvalidParameter(format!(
                "shrink must be in (0,1), got {}",
                self.shrink
            )));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(FimError::InvalidParameter(format!(
                "c1 must be in (0,1), got {}",
                self.c1
            )));
        }
        for (name, v) in [
            ("step0", self.step0),
            ("obj_tol", self.obj_tol),
            ("map_tol", self.map_tol),
            ("min_step", self.min_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FimError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.restarts == 0 {
            return Err(FimError::InvalidParameter("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative objective change fell below `obj_tol`.
    ObjectiveTol,
    /// Gradient-mapping norm fell below `map_tol`.
    GradientMap,
    /// Iteration cap reached.
    MaxIters,
    /// No step down to `min_step` satisfied the Armijo condition.
    LineSearchStall,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Termination::ObjectiveTol => "objective-tol",
            Termination::GradientMap => "gradient-map",
            Termination::MaxIters => "max-iters",
            Termination::LineSearchStall => "line-search-stall",
        };
        f.write_str(s)
    }
}

/// One accepted iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub se_nats: f64,
    pub se_bits: f64,
    pub step: f64,
    pub grad_map_norm: f64,
    pub backtracks: u32,
}

/// Result of one optimization run.
#[derive(Debug, Clone)]
pub struct PgmTrajectory {
    pub records: Vec<IterationRecord>,
    pub y_opt: MorphingVector,
    pub best: SeBreakdown,
    pub initial_se: f64,
    pub termination: Termination,
    pub wall_seconds: f64,
}

impl PgmTrajectory {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn median_backtracks(&self) -> u32 {
        if self.records.is_empty() {
            return 0;
        }
        let mut counts: Vec<u32> = self.records.iter().map(|r| r.backtracks).collect();
        counts.sort_unstable();
        counts[counts.len() / 2]
    }

    /// Writes the iterate history as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,se_nats,se_bits,step,grad_map_norm")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.6e},{:.6e}",
                r.iteration, r.se_nats, r.se_bits, r.step, r.grad_map_norm
            )?;
        }
        Ok(())
    }
}

/// Outcome of one Armijo line search.
#[derive(Debug, Clone)]
pub struct ArmijoOutcome {
    pub step: f64,
    pub iterate: MorphingVector,
    pub value: f64,
    pub backtracks: u32,
}

/// Backtracking line search along the projected gradient step for an
/// arbitrary ascent objective over the box `[0, zeta]^N`.
///
/// The accepted iterate `y+ = proj(y + step * grad)` satisfies
/// `f(y+) >= f(y) + c1 * <grad, y+ - y>`. Returns `None` when no step at or
/// above `min_step` qualifies; callers treat that as a termination reason,
/// not an error.
pub fn armijo_step<F>(
    objective: F,
    zeta: f64,
    y: &MorphingVector,
    f_now: f64,
    grad: &DVector<f64>,
    start_step: f64,
    cfg: &PgmConfig,
) -> Result<Option<ArmijoOutcome>>
where
    F: Fn(&MorphingVector) -> Result<f64>,
{
    let mut step = start_step.max(cfg.min_step);
    let mut backtracks = 0u32;
    loop {
        let candidate = project_feasible(&(y.as_vector() + grad * step), zeta);
        let moved = candidate.as_vector() - y.as_vector();
        let inner = grad.dot(&moved);
        let value = objective(&candidate)?;
        if !value.is_finite() {
            return Err(FimError::Numerical(format!(
                "non-finite objective at step {step}"
            )));
        }
        if value >= f_now + cfg.c1 * inner {
            return Ok(Some(ArmijoOutcome {
                step,
                iterate: candidate,
                value,
                backtracks,
            }));
        }
        step *= cfg.shrink;
        backtracks += 1;
        if step < cfg.min_step {
            return Ok(None);
        }
    }
}

/// Runs projected gradient ascent from a feasible starting point.
pub fn optimize(
    model: &FimModel,
    cfg: &PgmConfig,
    start: &MorphingVector,
) -> Result<PgmTrajectory> {
    cfg.validate()?;
    let t0 = Instant::now();
    let zeta = model.array.zeta;
    let mut y = project_feasible(start.as_vector(), zeta);
    let mut current = model.se_nats(&y)?;
    let initial_se = current;
    let mut records = Vec::new();
    let mut warm_step = cfg.step0;
    let mut termination = Termination::MaxIters;

    for iteration in 1..=cfg.max_iters {
        let ws = GradientWorkspace::build(model, y.as_vector())?;
        let grad = grad_sum_se(model, y.as_vector(), &ws)?;

        let Some(outcome) = armijo_step(
            |p| model.se_nats(p),
            zeta,
            &y,
            current,
            &grad,
            warm_step,
            cfg,
        )?
        else {
            termination = Termination::LineSearchStall;
            break;
        };

        let moved = outcome.iterate.as_vector() - y.as_vector();
        let map_norm = moved.norm() / outcome.step;
        let rel_change = (outcome.value - current) / current.abs().max(f64::MIN_POSITIVE);

        records.push(IterationRecord {
            iteration,
            se_nats: outcome.value,
            se_bits: outcome.value / std::f64::consts::LN_2,
            step: outcome.step,
            grad_map_norm: map_norm,
            backtracks: outcome.backtracks,
        });

        y = outcome.iterate;
        current = outcome.value;
        // try growing the accepted step once on the next iteration
        warm_step = (outcome.step / cfg.shrink).min(cfg.step0 / cfg.shrink);

        if map_norm < cfg.map_tol {
            termination = Termination::GradientMap;
            break;
        }
        if rel_change < cfg.obj_tol {
            termination = Termination::ObjectiveTol;
            break;
        }
    }

    let best = model.evaluate(&y)?;
    Ok(PgmTrajectory {
        records,
        y_opt: y,
        best,
        initial_se,
        termination,
        wall_seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Uniform random point in the feasible box.
pub fn random_feasible<R: Rng>(n: usize, zeta: f64, rng: &mut R) -> MorphingVector {
    let y = DVector::from_fn(n, |_, _| rng.random_range(0.0..=zeta.max(0.0)));
    project_feasible(&y, zeta)
}

/// Summary of one run inside a multi-start batch.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run: usize,
    pub se_nats: f64,
    pub iterations: usize,
    pub termination: Termination,
}

/// Best trajectory across restarts plus per-run summaries.
#[derive(Debug)]
pub struct MultiStartResult {
    pub best: PgmTrajectory,
    pub best_run: usize,
    pub runs: Vec<RunSummary>,
}

impl MultiStartResult {
    /// Spread of final objective values across runs (max - min).
    pub fn se_spread(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in &self.runs {
            lo = lo.min(r.se_nats);
            hi = hi.max(r.se_nats);
        }
        (hi - lo).max(0.0)
    }
}

/// Runs `cfg.restarts` independent optimizations and keeps the best.
///
/// Run 0 starts from the flat surface when `include_flat_start` is set; the
/// remaining runs start from seeded uniform points. Runs execute in
/// parallel; ties break toward the lowest run index.
pub fn multi_start(model: &FimModel, cfg: &PgmConfig) -> Result<MultiStartResult> {
    cfg.validate()?;
    let n = model.elements();
    let zeta = model.array.zeta;
    let starts: Vec<MorphingVector> = (0..cfg.restarts)
        .map(|run| {
            if run == 0 && cfg.include_flat_start {
                MorphingVector::flat(n)
            } else {
                let mut rng = stream_rng(cfg.seed, run as u64);
                random_feasible(n, zeta, &mut rng)
            }
        })
        .collect();

    let trajectories: Vec<PgmTrajectory> = starts
        .par_iter()
        .map(|start| optimize(model, cfg, start))
        .collect::<Result<Vec<_>>>()?;

    let runs: Vec<RunSummary> = trajectories
        .iter()
        .enumerate()
        .map(|(run, t)| RunSummary {
            run,
            se_nats: t.best.se_nats,
            iterations: t.iterations(),
            termination: t.termination,
        })
        .collect();

    let mut best_run = 0;
    for (i, t) in trajectories.iter().enumerate() {
        if t.best.se_nats > trajectories[best_run].best.se_nats {
            best_run = i;
        }
    }
    let best = trajectories.into_iter().nth(best_run).expect("nonempty");
    Ok(MultiStartResult {
        best,
        best_run,
        runs,
    })
}

/// Largest violation of the per-coordinate first-order conditions:
/// interior coordinates need `|g_n| <= tol`, coordinates at 0 need
/// `g_n <= tol`, coordinates at `zeta` need `g_n >= -tol`.
///
/// `boundary_snap` classifies coordinates within that distance of a bound
/// as being on it.
pub fn kkt_max_violation(
    y: &DVector<f64>,
    grad: &DVector<f64>,
    zeta: f64,
    boundary_snap: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (v, g) in y.iter().zip(grad.iter()) {
        let at_lower = *v <= boundary_snap;
        let at_upper = *v >= zeta - boundary_snap;
        let violation = if at_lower && at_upper {
            0.0 // degenerate box (zeta ~ 0): any gradient is optimal
        } else if at_lower {
            g.max(0.0)
        } else if at_upper {
            (-g).max(0.0)
        } else {
            g.abs()
        };
        worst = worst.max(violation);
    }
    worst
}
