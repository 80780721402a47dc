//! Reference solutions on prescribed output grids.
//!
//! Non-stiff problems use an adaptive Dormand-Prince 5(4) pair that lands
//! exactly on every requested output time. Stiff problems (Robertson) use a
//! self-convergence reference built from a Patankar scheme run on successively
//! subdivided copies of the same grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::Trajectory;
use crate::mprk::{patankar_step, SchemeConfig};
use crate::pds::PdsProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSpec {
    pub abstol: f64,
    pub reltol: f64,
}

impl ToleranceSpec {
    pub fn new(abstol: f64, reltol: f64) -> Result<Self> {
        let tol = Self { abstol, reltol };
        tol.validate()?;
        Ok(tol)
    }

    pub fn uniform(tol: f64) -> Result<Self> {
        Self::new(tol, tol)
    }

    fn validate(&self) -> Result<()> {
        if self.abstol > 0.0 && self.reltol > 0.0 {
            Ok(())
        } else {
            Err(Error::arg("tolerances must be positive"))
        }
    }
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            abstol: 1e-10,
            reltol: 1e-10,
        }
    }
}

// Dormand-Prince 5(4) coefficients; the problems are autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights (identical to the last row of `A`, FSAL).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Difference between fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
// PI controller exponents (Hairer & Wanner, order 5).
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;
const MAX_STEPS: usize = 1_000_000;

struct Dopri<'a> {
    problem: &'a PdsProblem,
    tol: ToleranceSpec,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
}

impl<'a> Dopri<'a> {
    fn new(problem: &'a PdsProblem, tol: ToleranceSpec) -> Self {
        let n = problem.dim();
        Self {
            problem,
            tol,
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
        }
    }

    /// One trial step from `y` (with `k[0] = f(y)` already set). Returns the
    /// candidate solution and the scaled error norm.
    fn trial(&mut self, y: &[f64], h: f64) -> Result<(Vec<f64>, f64)> {
        let n = y.len();
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += a * self.k[j][i];
                }
                self.stage[i] = y[i] + h * acc;
            }
            let stage = std::mem::take(&mut self.stage);
            let rhs = self.problem.rhs(&stage);
            self.stage = stage;
            self.k[s] = rhs?;
        }
        let mut y_new = vec![0.0; n];
        let mut err = 0.0f64;
        for i in 0..n {
            let mut acc = 0.0;
            let mut e = 0.0;
            for s in 0..7 {
                acc += B5[s] * self.k[s][i];
                e += E[s] * self.k[s][i];
            }
            y_new[i] = y[i] + h * acc;
            let scale = self.tol.abstol + self.tol.reltol * y[i].abs().max(y_new[i].abs());
            err = err.max((h * e).abs() / scale);
        }
        Ok((y_new, err))
    }
}

/// Adaptive Dormand-Prince 5(4) solution sampled at `output_times`.
///
/// `output_times[0]` must be the initial time; the trajectory's first record
/// is `y0` there. Every later output time is hit exactly by clamping the step.
pub fn rk45_reference(
    problem: &PdsProblem,
    y0: &[f64],
    output_times: &[f64],
    tol: ToleranceSpec,
) -> Result<Trajectory> {
    tol.validate()?;
    if y0.len() != problem.dim() {
        return Err(Error::arg("initial state has the wrong dimension"));
    }
    let Some(&t_start) = output_times.first() else {
        return Err(Error::arg("output grid must contain the initial time"));
    };
    if output_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::arg("output times must be strictly increasing"));
    }
    let t_end = *output_times.last().unwrap();
    let mut traj = Trajectory::new(problem.name(), "rk45", t_start, y0.to_vec());
    if output_times.len() == 1 {
        return Ok(traj);
    }

    let mut dp = Dopri::new(problem, tol);
    let mut t = t_start;
    let mut y = y0.to_vec();
    dp.k[0] = problem.rhs(&y)?;
    let mut h = 1e-4 * (t_end - t_start);
    let mut err_prev = 1e-4f64;
    let mut steps = 0usize;

    for &t_out in &output_times[1..] {
        while t < t_out {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Stiffness { t, h });
            }
            let remaining = t_out - t;
            let clamped = h >= remaining;
            let h_try = if clamped { remaining } else { h };
            if h_try < 1e2 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::Stiffness { t, h: h_try });
            }
            let (y_new, err) = match dp.trial(&y, h_try) {
                Ok(v) => v,
                // blown-up stages: treat like an infinite error estimate
                Err(Error::Evaluation(_)) => (Vec::new(), f64::INFINITY),
                Err(e) => return Err(e),
            };
            if !err.is_finite() {
                h = h_try * MIN_FACTOR;
                continue;
            }
            if err <= 1.0 {
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-PI_ALPHA) * err_prev.powf(PI_BETA)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                err_prev = err.max(1e-4);
                t = if clamped { t_out } else { t + h_try };
                y = y_new;
                dp.k[0] = std::mem::take(&mut dp.k[6]);
                dp.k[6] = vec![0.0; y.len()];
                // keep the unclamped step size proposal after hitting an output time
                h = if clamped { h.max(h_try * factor) } else { h_try * factor };
            } else {
                let factor = (SAFETY * err.powf(-PI_ALPHA)).clamp(MIN_FACTOR, 1.0);
                h = h_try * factor;
            }
        }
        traj.push(t_out, y.clone());
    }
    Ok(traj)
}

/// Time grid on which a self-convergence reference is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPlan {
    /// Uniform steps of `dt`, last one shortened to land on `t_end`.
    Fixed { t_start: f64, t_end: f64, dt: f64 },
    /// `Δt_i = dt0 * ratio^(i-1)` until the first step reaching `t_end`.
    Geometric {
        t_start: f64,
        dt0: f64,
        ratio: f64,
        t_end: f64,
    },
}

impl StepPlan {
    /// All grid times including the start.
    pub fn times(&self) -> Result<Vec<f64>> {
        match *self {
            StepPlan::Fixed { t_start, t_end, dt } => crate::harness::fixed_grid(t_start, t_end, dt),
            StepPlan::Geometric {
                t_start,
                dt0,
                ratio,
                t_end,
            } => crate::harness::geometric_grid(t_start, dt0, ratio, t_end),
        }
    }
}

/// Result of a self-convergence reference.
#[derive(Debug, Clone)]
pub struct SelfConvergence {
    /// Finest level, sampled on the coarse grid.
    pub trajectory: Trajectory,
    /// Per output time: `max_i |y_R,i - y_{R-1},i|` from the two finest levels.
    pub abs_estimate: Vec<f64>,
    /// Per output time: `abs_estimate / ‖y_R‖∞`.
    pub rel_estimate: Vec<f64>,
    /// Largest relative estimate for each level pair `(r-1, r)`, `r = 1..=R`.
    pub level_estimates: Vec<f64>,
    /// The last refinement shrank the estimate by at least [`ACCEPT_RATIO`]
    /// (or it is at round-off level).
    pub accepted: bool,
}

impl SelfConvergence {
    /// Shrink factor of the estimate over the last refinement.
    pub fn last_ratio(&self) -> f64 {
        let n = self.level_estimates.len();
        self.level_estimates[n - 2] / self.level_estimates[n - 1]
    }
}

/// Estimates at or below this level are treated as converged to round-off.
const ROUNDOFF_ESTIMATE: f64 = 1e-13;

/// Minimum shrink factor of the last refinement for an accepted reference.
pub const ACCEPT_RATIO: f64 = 3.0;

fn run_refined(
    problem: &PdsProblem,
    scheme: &SchemeConfig,
    y0: &[f64],
    grid: &[f64],
    substeps: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(grid.len());
    out.push(y.clone());
    for (step, w) in grid.windows(2).enumerate() {
        let h = (w[1] - w[0]) / substeps as f64;
        for _ in 0..substeps {
            y = patankar_step(problem, scheme, &y, h)
                .map_err(|e| Error::Integration {
                    step: step + 1,
                    t: w[0],
                    reason: e.to_string(),
                })?
                .y_next;
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn level_difference(fine: &[Vec<f64>], coarse: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    fine.iter()
        .zip(coarse)
        .map(|(f, c)| {
            let abs = f.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
            (abs, if scale > 0.0 { abs / scale } else { abs })
        })
        .unzip()
}

/// Self-convergence reference: level `r` subdivides each grid step into
/// `2^r` equal substeps, `r = 0..=refinements`.
///
/// Fails with [`Error::NonConvergence`] if the level-to-level estimate grows.
/// A slowly shrinking estimate is reported through
/// [`SelfConvergence::accepted`] instead.
pub fn self_convergence_reference(
    problem: &PdsProblem,
    scheme: &SchemeConfig,
    y0: &[f64],
    grid: StepPlan,
    refinements: usize,
) -> Result<SelfConvergence> {
    if refinements < 3 {
        return Err(Error::arg("self-convergence needs at least 3 refinements"));
    }
    scheme.validate()?;
    let times = grid.times()?;
    let levels: Vec<Vec<Vec<f64>>> = (0..=refinements)
        .into_par_iter()
        .map(|r| run_refined(problem, scheme, y0, &times, 1 << r))
        .collect::<Result<_>>()?;

    let level_estimates: Vec<f64> = levels
        .windows(2)
        .map(|w| level_difference(&w[1], &w[0]).1.into_iter().fold(0.0, f64::max))
        .collect();
    for (r, w) in level_estimates.windows(2).enumerate() {
        let (prev, next) = (w[0], w[1]);
        if next > prev && next > ROUNDOFF_ESTIMATE {
            return Err(Error::NonConvergence(format!(
                "estimate grew from {prev:e} to {next:e} at refinement {}",
                r + 2
            )));
        }
    }
    let n = level_estimates.len();
    let (prev, last) = (level_estimates[n - 2], level_estimates[n - 1]);
    let accepted = last <= ROUNDOFF_ESTIMATE || prev >= ACCEPT_RATIO * last;

    let finest = &levels[refinements];
    let (abs_estimate, rel_estimate) = level_difference(finest, &levels[refinements - 1]);
    let label = format!("{} self-convergence x{}", scheme.label(), 1usize << refinements);
    let mut trajectory = Trajectory::new(problem.name(), &label, times[0], finest[0].clone());
    for (t, y) in times.iter().zip(finest).skip(1) {
        trajectory.push(*t, y.clone());
    }
    Ok(SelfConvergence {
        trajectory,
        abs_estimate,
        rel_estimate,
        level_estimates,
        accepted,
    })
}
