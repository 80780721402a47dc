//! Drivers, error metric and convergence studies.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mprk::{Method, SchemeConfig};
use crate::pds::{PdsProblem, State};
use crate::reference::{rk45_reference, ToleranceSpec};

/// Per-step relative conservation bound re-checked by the drivers.
pub const STEP_CONSERVATION_TOL: f64 = 1e-12;
/// Tolerance used for the rk45 reference of convergence studies.
pub const REFERENCE_TOL: f64 = 1e-10;
const MAX_GRID_STEPS: usize = 50_000_000;

/// Ordered `(t, y)` samples produced by a driver.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub problem: String,
    pub scheme: String,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(problem: &str, scheme: &str, t0: f64, y0: Vec<f64>) -> Self {
        Self {
            problem: problem.to_string(),
            scheme: scheme.to_string(),
            times: vec![t0],
            states: vec![y0],
        }
    }

    pub fn push(&mut self, t: f64, y: Vec<f64>) {
        self.times.push(t);
        self.states.push(y);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of executed steps (records minus the initial state).
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn last(&self) -> State {
        State::new(*self.times.last().unwrap(), self.states.last().unwrap().clone())
    }

    pub fn state(&self, k: usize) -> State {
        State::new(self.times[k], self.states[k].clone())
    }

    pub fn sums(&self) -> Vec<f64> {
        self.states.iter().map(|y| y.iter().sum()).collect()
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|y| y[i]).collect()
    }

    pub fn all_positive(&self) -> bool {
        self.states.iter().flatten().all(|&v| v > 0.0)
    }
}

/// Uniform grid `t_start + k dt`, last point clamped to `t_end`.
pub fn fixed_grid(t_start: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("dt must be positive, got {dt}")));
    }
    if !(t_end > t_start) {
        return Err(Error::arg("t_end must exceed t_start"));
    }
    let ratio = (t_end - t_start) / dt;
    // absorb round-off in spans that are exact multiples of dt
    let steps = (ratio * (1.0 - 1e-12)).ceil().max(1.0);
    if steps > MAX_GRID_STEPS as f64 {
        return Err(Error::arg(format!("{steps} steps exceed the grid limit")));
    }
    let steps = steps as usize;
    let mut times: Vec<f64> = (0..steps).map(|k| t_start + k as f64 * dt).collect();
    times.push(t_end);
    Ok(times)
}

/// Geometric grid with `Δt_i = dt0 ratio^(i-1)`, stopping at the first step
/// whose endpoint reaches `t_end` (that endpoint is not clamped).
pub fn geometric_grid(t_start: f64, dt0: f64, ratio: f64, t_end: f64) -> Result<Vec<f64>> {
    if !(dt0 > 0.0) || !dt0.is_finite() {
        return Err(Error::arg(format!("dt0 must be positive, got {dt0}")));
    }
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::arg(format!("ratio must exceed 1, got {ratio}")));
    }
    if !(t_end > t_start) {
        return Err(Error::arg("t_end must exceed t_start"));
    }
    let mut times = vec![t_start];
    let (mut t, mut dt) = (t_start, dt0);
    while t < t_end {
        if times.len() > MAX_GRID_STEPS {
            return Err(Error::arg("geometric grid exceeds the step limit"));
        }
        t += dt;
        dt *= ratio;
        times.push(t);
    }
    Ok(times)
}

/// Step sizes for a grid built from nominal steps: the nominal value wherever
/// the grid spacing only differs from it by round-off, the spacing otherwise.
fn grid_steps(times: &[f64], nominal: impl Fn(usize) -> f64) -> Vec<f64> {
    times
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (h, dt) = (w[1] - w[0], nominal(k));
            if (h - dt).abs() <= 1e-9 * dt {
                dt
            } else {
                h
            }
        })
        .collect()
}

fn integrate_on_grid(
    problem: &PdsProblem,
    method: &Method,
    y0: &[f64],
    times: &[f64],
    steps: &[f64],
) -> Result<Trajectory> {
    if y0.len() != problem.dim() {
        return Err(Error::arg("initial state has the wrong dimension"));
    }
    if method.is_patankar() && y0.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::arg("Patankar schemes need a strictly positive initial state"));
    }
    if let Method::Patankar(cfg) = method {
        cfg.validate()?;
    }
    let mut traj = Trajectory::new(problem.name(), &method.label(), times[0], y0.to_vec());
    let mut y = y0.to_vec();
    for (k, (w, &dt)) in times.windows(2).zip(steps).enumerate() {
        let step = k + 1;
        let fail = |reason: String| Error::Integration { step, t: w[0], reason };
        let next = match method.advance(problem, &y, dt) {
            Ok(v) => v,
            Err(e @ Error::Argument(_)) => return Err(e),
            Err(e) => return Err(fail(e.to_string())),
        };
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(fail(format!("component {} is not finite", i + 1)));
        }
        if method.is_patankar() {
            if let Some(i) = next.iter().position(|&v| !(v > 0.0)) {
                return Err(fail(format!("component {} lost positivity: {}", i + 1, next[i])));
            }
            let (before, after): (f64, f64) = (y.iter().sum(), next.iter().sum());
            if (after - before).abs() > STEP_CONSERVATION_TOL * before.abs() {
                return Err(fail(format!("sum drifted from {before} to {after}")));
            }
        }
        traj.push(w[1], next.clone());
        y = next;
    }
    Ok(traj)
}

/// Fixed-step integration over `t_span`; the final step is shortened to end
/// exactly at `t_span.1`.
pub fn integrate_fixed(
    problem: &PdsProblem,
    method: &Method,
    y0: &[f64],
    t_span: (f64, f64),
    dt: f64,
) -> Result<Trajectory> {
    let times = fixed_grid(t_span.0, t_span.1, dt)?;
    integrate_on_grid(problem, method, y0, &times, &grid_steps(&times, |_| dt))
}

/// Integration with geometrically growing steps, see [`geometric_grid`].
pub fn integrate_geometric(
    problem: &PdsProblem,
    method: &Method,
    y0: &[f64],
    t_start: f64,
    dt0: f64,
    ratio: f64,
    t_end: f64,
) -> Result<Trajectory> {
    let times = geometric_grid(t_start, dt0, ratio, t_end)?;
    let steps = grid_steps(&times, |k| dt0 * ratio.powi(k as i32));
    integrate_on_grid(problem, method, y0, &times, &steps)
}

/// Relative error over already aligned samples (initial state excluded by
/// the caller). Returns `(E, E_i)`.
pub fn relative_error_states(numeric: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    if numeric.len() != reference.len() || numeric.is_empty() {
        return Err(Error::arg(format!(
            "cannot compare {} numeric samples against {} reference samples",
            numeric.len(),
            reference.len()
        )));
    }
    let n = reference[0].len();
    if numeric.iter().chain(reference).any(|y| y.len() != n) {
        return Err(Error::arg("state dimensions differ"));
    }
    let m = numeric.len() as f64;
    let per_component: Vec<f64> = (0..n)
        .map(|i| {
            let mean = reference.iter().map(|y| y[i]).sum::<f64>() / m;
            if mean == 0.0 {
                return Err(Error::MetricUndefined { component: i + 1 });
            }
            let mse = numeric
                .iter()
                .zip(reference)
                .map(|(a, b)| (b[i] - a[i]).powi(2))
                .sum::<f64>()
                / m;
            Ok(mse.sqrt() / mean)
        })
        .collect::<Result<_>>()?;
    let e = per_component.iter().sum::<f64>() / n as f64;
    Ok((e, per_component))
}

/// Relative error `E` of a trajectory against reference states on the same
/// grid. Means run over the executed steps only.
pub fn relative_error(traj: &Trajectory, reference: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    if traj.states.len() != reference.len() {
        return Err(Error::arg(format!(
            "trajectory has {} records, reference {}",
            traj.states.len(),
            reference.len()
        )));
    }
    if traj.states.len() < 2 {
        return Err(Error::arg("trajectory has no executed steps"));
    }
    relative_error_states(&traj.states[1..], &reference[1..])
}

/// Pairwise observed orders `ln(E_k/E_{k+1}) / ln(dt_k/dt_{k+1})`.
pub fn observed_orders(rows: &[(f64, f64)]) -> Result<Vec<f64>> {
    if let Some((dt, e)) = rows.iter().find(|(dt, e)| !(*e > 0.0) || !(*dt > 0.0)) {
        return Err(Error::arg(format!("need positive dt and E, got ({dt}, {e})")));
    }
    if rows.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::arg("step sizes must be strictly decreasing"));
    }
    Ok(rows
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub error: f64,
    /// Observed order against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub problem: String,
    pub scheme: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn final_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }
}

/// Reference states on the trajectory's grid: closed form if available,
/// otherwise rk45 at `REFERENCE_TOL`.
pub fn reference_states(problem: &PdsProblem, y0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    if problem.has_exact() && y0 == problem.default_initial() && times[0] == problem.default_span().0 {
        return Ok(times.iter().map(|&t| problem.exact(t).unwrap()).collect());
    }
    let tol = ToleranceSpec::uniform(REFERENCE_TOL)?;
    Ok(rk45_reference(problem, y0, times, tol)?.states)
}

/// Step-halving study on the problem's default initial state and span with
/// `dt = dt_max / 2^k`, `k = 0..levels`.
pub fn convergence_study(
    problem: &PdsProblem,
    method: &Method,
    dt_max: f64,
    levels: usize,
) -> Result<ConvergenceReport> {
    if levels < 3 {
        return Err(Error::arg("a convergence study needs at least 3 levels"));
    }
    let y0 = problem.default_initial();
    let span = problem.default_span();
    let errors: Vec<(f64, f64)> = (0..levels)
        .into_par_iter()
        .map(|k| {
            let dt = dt_max / (1u64 << k) as f64;
            let traj = integrate_fixed(problem, method, y0, span, dt)?;
            let reference = reference_states(problem, y0, &traj.times)?;
            Ok((dt, relative_error(&traj, &reference)?.0))
        })
        .collect::<Result<_>>()?;
    let orders = observed_orders(&errors)?;
    let rows = errors
        .iter()
        .enumerate()
        .map(|(k, &(dt, error))| ConvergenceRow {
            dt,
            error,
            order: k.checked_sub(1).map(|j| orders[j]),
        })
        .collect();
    Ok(ConvergenceReport {
        problem: problem.name().to_string(),
        scheme: method.label(),
        rows,
    })
}

/// Error of MPRK22(α) (`conservative_stage`) or MPRK22ncs(α) at a fixed step
/// for each α, sorted by α.
pub fn alpha_sweep(
    problem: &PdsProblem,
    alphas: &[f64],
    dt: f64,
    conservative_stage: bool,
) -> Result<Vec<(f64, f64)>> {
    if alphas.is_empty() {
        return Err(Error::arg("no alpha values given"));
    }
    if let Some(a) = alphas.iter().find(|&&a| !(a >= 0.5)) {
        return Err(Error::arg(format!("alpha must be >= 1/2, got {a}")));
    }
    let y0 = problem.default_initial();
    let span = problem.default_span();
    let times = fixed_grid(span.0, span.1, dt)?;
    let steps = grid_steps(&times, |_| dt);
    let reference = reference_states(problem, y0, &times)?;
    let mut rows: Vec<(f64, f64)> = alphas
        .par_iter()
        .map(|&alpha| {
            let cfg = if conservative_stage {
                SchemeConfig::mprk22(alpha)
            } else {
                SchemeConfig::mprk22ncs(alpha)
            };
            let traj = integrate_on_grid(problem, &Method::Patankar(cfg), y0, &times, &steps)?;
            Ok((alpha, relative_error(&traj, &reference)?.0))
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rows)
}

/// Total variation `Σ_m |y_i^{m+1} - y_i^m|` of each component.
pub fn total_variation(traj: &Trajectory) -> Vec<f64> {
    let n = traj.states.first().map_or(0, |y| y.len());
    let mut tv = vec![0.0; n];
    for w in traj.states.windows(2) {
        for i in 0..n {
            tv[i] += (w[1][i] - w[0][i]).abs();
        }
    }
    tv
}
