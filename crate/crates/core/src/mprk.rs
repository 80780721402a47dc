//! Modified Patankar-Runge-Kutta step kernels.
//!
//! Every scheme here reduces one time step to one or two linear systems whose
//! matrices are column-stochastic M-matrices (positive diagonal, non-positive
//! off-diagonal, columns summing to one). Their inverses are entrywise in
//! `[0, 1]`, which is what makes the iterates positive and conservative for
//! any step size.
//!
//! The schemes differ only in the Patankar-weight denominators (PWDs):
//!
//! | scheme            | stages | stage PWD `π` | final PWD `σ`                              |
//! |-------------------|--------|---------------|--------------------------------------------|
//! | MPE               | 1      |               | `y^n`                                      |
//! | MPElin            | 1      |               | `y^n (1 - 3Δt)` for `Δt < 1/3`, else `y^n` |
//! | MPRK22(α)         | 2      | `y^n`         | `y^n (y^(2) / y^n)^(1/α)`                  |
//! | MPRK22ncs(α)      | 2      | `y^n`         | as MPRK22(α), non-conservative stage       |
//! | convex(α, ω, s1)  | 2      | `y^n`         | `ω y^n r^s1 + (1-ω) y^n r^s2`, `r = y^(2)/y^n` |

use std::fmt;

use crate::error::{Error, Result};
use crate::pds::{production_totals, PdsProblem};
use crate::smallsolve::{self, DenseMatrix};

/// Second-order explicit two-stage tableau with `a21 = c2 = α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tableau2 {
    alpha: f64,
}

impl Tableau2 {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.5) || !alpha.is_finite() {
            return Err(Error::arg(format!(
                "alpha must be >= 1/2 for non-negative weights, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn a21(&self) -> f64 {
        self.alpha
    }

    pub fn c2(&self) -> f64 {
        self.alpha
    }

    pub fn b1(&self) -> f64 {
        1.0 - 1.0 / (2.0 * self.alpha)
    }

    pub fn b2(&self) -> f64 {
        1.0 / (2.0 * self.alpha)
    }
}

/// Final-step PWD of a two-stage scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FinalPwd {
    /// `σ = y^n (y^(2) / y^n)^(1/α)`.
    Power,
    /// `σ = y^(2)`; second order only for `α = 1`.
    Stage,
    /// Convex combination of two powers, `0 <= ω < 1`.
    Convex { omega: f64, s1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Mpe,
    MpeLin,
    Mprk22,
    Mprk22Ncs,
    ConvexPwd,
    /// Arbitrary `(δ, final PWD)` combination for experiments.
    Custom,
}

impl SchemeKind {
    pub fn stages(self) -> usize {
        match self {
            SchemeKind::Mpe | SchemeKind::MpeLin => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Only meaningful for two-stage kinds.
    pub alpha: f64,
    /// 1: conservative stage, 0: production terms explicit in the stage.
    pub delta: u8,
    pub pwd: FinalPwd,
}

impl SchemeConfig {
    pub fn mpe() -> Self {
        Self {
            kind: SchemeKind::Mpe,
            alpha: 1.0,
            delta: 1,
            pwd: FinalPwd::Power,
        }
    }

    pub fn mpelin() -> Self {
        Self {
            kind: SchemeKind::MpeLin,
            ..Self::mpe()
        }
    }

    pub fn mprk22(alpha: f64) -> Self {
        Self {
            kind: SchemeKind::Mprk22,
            alpha,
            delta: 1,
            pwd: FinalPwd::Power,
        }
    }

    pub fn mprk22ncs(alpha: f64) -> Self {
        Self {
            kind: SchemeKind::Mprk22Ncs,
            alpha,
            delta: 0,
            pwd: FinalPwd::Power,
        }
    }

    pub fn convex(alpha: f64, omega: f64, s1: f64) -> Self {
        Self {
            kind: SchemeKind::ConvexPwd,
            alpha,
            delta: 1,
            pwd: FinalPwd::Convex { omega, s1 },
        }
    }

    pub fn custom(alpha: f64, delta: u8, pwd: FinalPwd) -> Self {
        Self {
            kind: SchemeKind::Custom,
            alpha,
            delta,
            pwd,
        }
    }

    pub fn tableau(&self) -> Result<Tableau2> {
        Tableau2::new(self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta > 1 {
            return Err(Error::arg(format!("delta must be 0 or 1, got {}", self.delta)));
        }
        if self.kind.stages() == 1 {
            return Ok(());
        }
        self.tableau()?;
        match (self.kind, self.pwd, self.delta) {
            (SchemeKind::Mprk22, FinalPwd::Power, 1) | (SchemeKind::Mprk22Ncs, FinalPwd::Power, 0) => {}
            (SchemeKind::Mprk22, ..) | (SchemeKind::Mprk22Ncs, ..) => {
                return Err(Error::arg(
                    "MPRK22 fixes delta = 1 and MPRK22ncs delta = 0 with the power PWD; use a custom config",
                ))
            }
            (SchemeKind::ConvexPwd, FinalPwd::Convex { .. }, _) => {}
            (SchemeKind::ConvexPwd, ..) => {
                return Err(Error::arg("convex scheme requires a convex PWD"))
            }
            _ => {}
        }
        if let FinalPwd::Convex { omega, s1 } = self.pwd {
            if !(0.0..1.0).contains(&omega) {
                return Err(Error::arg(format!("omega must lie in [0, 1), got {omega}")));
            }
            if !s1.is_finite() {
                return Err(Error::arg("s1 must be finite"));
            }
        }
        Ok(())
    }

    /// Exponent `s2` completing a convex PWD to second order.
    pub fn convex_s2(alpha: f64, omega: f64, s1: f64) -> f64 {
        (alpha * omega * s1 - 1.0) / (alpha * (omega - 1.0))
    }

    pub fn label(&self) -> String {
        match self.kind {
            SchemeKind::Mpe => "MPE".into(),
            SchemeKind::MpeLin => "MPElin".into(),
            SchemeKind::Mprk22 => format!("MPRK22({})", self.alpha),
            SchemeKind::Mprk22Ncs => format!("MPRK22ncs({})", self.alpha),
            SchemeKind::ConvexPwd => match self.pwd {
                FinalPwd::Convex { omega, s1 } => {
                    format!("MPRK22convex({},{omega},{s1})", self.alpha)
                }
                _ => "MPRK22convex(?)".into(),
            },
            SchemeKind::Custom => format!("MPRK-custom({},{},{:?})", self.alpha, self.delta, self.pwd),
        }
    }
}

/// Explicit Runge-Kutta tableau for the unmodified baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub name: String,
    /// Strictly lower-triangular rows, `a[k][ν]` for `ν < k`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ButcherTableau {
    pub fn forward_euler() -> Self {
        Self {
            name: "euler".into(),
            a: vec![vec![]],
            b: vec![1.0],
            c: vec![0.0],
        }
    }

    pub fn heun() -> Self {
        Self::two_stage("heun", 1.0)
    }

    pub fn two_stage(name: &str, alpha: f64) -> Self {
        let t = Tableau2 { alpha };
        Self {
            name: name.into(),
            a: vec![vec![], vec![t.a21()]],
            b: vec![t.b1(), t.b2()],
            c: vec![0.0, t.c2()],
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }
}

/// Integrator selected by name on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Patankar(SchemeConfig),
    Explicit(ButcherTableau),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Patankar(c) => c.label(),
            Method::Explicit(t) => t.name.clone(),
        }
    }

    pub fn is_patankar(&self) -> bool {
        matches!(self, Method::Patankar(_))
    }

    /// Advances `y` by one step of size `dt`.
    pub fn advance(&self, problem: &PdsProblem, y: &[f64], dt: f64) -> Result<Vec<f64>> {
        match self {
            Method::Patankar(cfg) => Ok(patankar_step(problem, cfg, y, dt)?.y_next),
            Method::Explicit(tab) => explicit_rk_step(problem, y, dt, tab),
        }
    }
}

impl From<SchemeConfig> for Method {
    fn from(c: SchemeConfig) -> Self {
        Method::Patankar(c)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub const SCHEME_NAMES: [&str; 7] = ["mpe", "mpelin", "mprk22", "mprk22ncs", "convex", "euler", "heun"];

/// Scheme registry. `alpha`, `omega` and `s1` are used only where relevant.
pub fn scheme_by_name(name: &str, alpha: f64, omega: f64, s1: f64) -> Result<Method> {
    let cfg = match name {
        "mpe" => SchemeConfig::mpe(),
        "mpelin" => SchemeConfig::mpelin(),
        "mprk22" => SchemeConfig::mprk22(alpha),
        "mprk22ncs" => SchemeConfig::mprk22ncs(alpha),
        "convex" => SchemeConfig::convex(alpha, omega, s1),
        "euler" => return Ok(Method::Explicit(ButcherTableau::forward_euler())),
        "heun" => return Ok(Method::Explicit(ButcherTableau::heun())),
        other => {
            return Err(Error::arg(format!(
                "unknown scheme '{other}' (expected one of {})",
                SCHEME_NAMES.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(Method::Patankar(cfg))
}

/// Stage system of a Patankar step.
#[derive(Debug, Clone, PartialEq)]
pub enum StageMatrix {
    /// `δ = 1`: `M^(k) y^(k) = y^n`.
    Dense(DenseMatrix),
    /// `δ = 0`: `diag(d) y^(k) = y^n + rhs_addend`.
    Diagonal { diag: Vec<f64>, rhs_addend: Vec<f64> },
}

impl StageMatrix {
    pub fn solve(&self, y_n: &[f64]) -> Result<Vec<f64>> {
        match self {
            StageMatrix::Dense(m) => solve_patankar(m, y_n),
            StageMatrix::Diagonal { diag, rhs_addend } => {
                let rhs: Vec<f64> = y_n.iter().zip(rhs_addend).map(|(y, p)| y + p).collect();
                smallsolve::solve_diagonal(diag, &rhs)
            }
        }
    }
}

/// Everything computed during one Patankar step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub y_next: Vec<f64>,
    pub stage2: Option<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub pi: Option<Vec<f64>>,
    pub final_matrix: DenseMatrix,
    pub stage_matrix: Option<StageMatrix>,
}

/// Solves a unit-column-sum Patankar system without cancellation.
pub fn solve_patankar(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    smallsolve::solve_mmatrix(m, &vec![1.0; m.dim()], rhs)
}

fn check_dt(dt: f64) -> Result<()> {
    if dt >= 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("step size must be finite and >= 0, got {dt}")))
    }
}

fn check_positive(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::arg(format!("{what} has length {}, expected {n}", v.len())));
    }
    match v.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        Some(i) => Err(Error::arg(format!(
            "{what} component {} is {} (must be positive and finite)",
            i + 1,
            v[i]
        ))),
        None => Ok(()),
    }
}

fn check_weights(weights: &[f64], expected: usize) -> Result<()> {
    if weights.len() != expected {
        return Err(Error::arg(format!(
            "{} weights for {expected} stages",
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::arg("Runge-Kutta weights must be non-negative"));
    }
    Ok(())
}

fn rates_of(problem: &PdsProblem, states: &[&[f64]]) -> Result<Vec<DenseMatrix>> {
    states.iter().map(|y| problem.production(y)).collect()
}

/// Weighted rate matrix `Σ_k w_k Π(y^(k))`.
fn combine(rates: &[DenseMatrix], weights: &[f64]) -> DenseMatrix {
    let n = rates[0].dim();
    let mut acc = DenseMatrix::zeros(n);
    for (r, &w) in rates.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                acc[(i, j)] += w * r[(i, j)];
            }
        }
    }
    acc
}

/// Patankar matrix for combined rates `rate` and denominators `denom`:
/// `m_ii = 1 + dt Σ_j rate[j][i] / denom_i`, `m_ij = -dt rate[i][j] / denom_j`.
fn patankar_matrix(rate: &DenseMatrix, denom: &[f64], dt: f64) -> DenseMatrix {
    let n = rate.dim();
    let mut m = DenseMatrix::zeros(n);
    for j in 0..n {
        let mut outflow = 0.0;
        for i in 0..n {
            if i != j {
                let v = dt * rate[(i, j)] / denom[j];
                m[(i, j)] = -v;
                outflow += v;
            }
        }
        m[(j, j)] = 1.0 + outflow;
    }
    m
}

pub(crate) fn final_matrix_from_rates(
    rates: &[DenseMatrix],
    weights: &[f64],
    sigma: &[f64],
    dt: f64,
) -> DenseMatrix {
    patankar_matrix(&combine(rates, weights), sigma, dt)
}

pub(crate) fn stage_matrix_from_rates(
    rates: &[DenseMatrix],
    a_row: &[f64],
    pi: &[f64],
    dt: f64,
    delta: u8,
) -> StageMatrix {
    let n = pi.len();
    if rates.is_empty() {
        return match delta {
            1 => StageMatrix::Dense(DenseMatrix::identity(n)),
            _ => StageMatrix::Diagonal {
                diag: vec![1.0; n],
                rhs_addend: vec![0.0; n],
            },
        };
    }
    let combined = combine(rates, a_row);
    if delta == 1 {
        return StageMatrix::Dense(patankar_matrix(&combined, pi, dt));
    }
    let destruction = combined.column_sums();
    let diag = (0..n).map(|i| 1.0 + dt * destruction[i] / pi[i]).collect();
    let rhs_addend = production_totals(&combined).into_iter().map(|p| dt * p).collect();
    StageMatrix::Diagonal { diag, rhs_addend }
}

/// Final-step matrix `M` with `M y^{n+1} = y^n`.
///
/// `m_ii = 1 + Δt Σ_k b_k Σ_j d_ij(y^(k)) / σ_i` and
/// `m_ij = -Δt Σ_k b_k p_ij(y^(k)) / σ_j` for `i != j`.
pub fn assemble_final_matrix(
    problem: &PdsProblem,
    stage_states: &[&[f64]],
    weights: &[f64],
    sigma: &[f64],
    dt: f64,
) -> Result<DenseMatrix> {
    check_dt(dt)?;
    check_weights(weights, stage_states.len())?;
    check_positive("sigma", sigma, problem.dim())?;
    if stage_states.is_empty() {
        return Ok(DenseMatrix::identity(problem.dim()));
    }
    let rates = rates_of(problem, stage_states)?;
    Ok(final_matrix_from_rates(&rates, weights, sigma, dt))
}

/// Matrix of stage `k` built from the prior stages `y^(1..k-1)`.
///
/// With `delta = 0` only the diagonal is returned together with the explicit
/// production addend `Δt Σ_ν a_kν P(y^(ν))` for the right-hand side.
pub fn assemble_stage_matrix(
    problem: &PdsProblem,
    prior_states: &[&[f64]],
    a_row: &[f64],
    pi: &[f64],
    dt: f64,
    delta: u8,
) -> Result<StageMatrix> {
    check_dt(dt)?;
    if delta > 1 {
        return Err(Error::arg(format!("delta must be 0 or 1, got {delta}")));
    }
    check_weights(a_row, prior_states.len())?;
    check_positive("pi", pi, problem.dim())?;
    let rates = rates_of(problem, prior_states)?;
    Ok(stage_matrix_from_rates(&rates, a_row, pi, dt, delta))
}

/// MPElin denominators: `y^n (1 - 3Δt)` below `Δt = 1/3`, else `y^n`.
pub fn mpelin_sigma(y_n: &[f64], dt: f64) -> Vec<f64> {
    let factor = if dt < 1.0 / 3.0 { 1.0 - 3.0 * dt } else { 1.0 };
    y_n.iter().map(|y| y * factor).collect()
}

fn one_stage_step(problem: &PdsProblem, y_n: &[f64], dt: f64, sigma: Vec<f64>) -> Result<StepRecord> {
    check_positive("y_n", y_n, problem.dim())?;
    check_dt(dt)?;
    check_positive("sigma", &sigma, problem.dim())?;
    let rates = [problem.production(y_n)?];
    let m = final_matrix_from_rates(&rates, &[1.0], &sigma, dt);
    let y_next = solve_patankar(&m, y_n)?;
    Ok(StepRecord {
        y_next,
        stage2: None,
        sigma,
        pi: None,
        final_matrix: m,
        stage_matrix: None,
    })
}

/// Modified Patankar-Euler step.
pub fn mpe_step(problem: &PdsProblem, y_n: &[f64], dt: f64) -> Result<StepRecord> {
    one_stage_step(problem, y_n, dt, y_n.to_vec())
}

pub fn mpelin_step(problem: &PdsProblem, y_n: &[f64], dt: f64) -> Result<StepRecord> {
    check_dt(dt)?;
    one_stage_step(problem, y_n, dt, mpelin_sigma(y_n, dt))
}

/// `y^n (y^(2)/y^n)^s` evaluated in log space.
fn weighted_power(y_n: f64, stage: f64, s: f64) -> f64 {
    let log_n = y_n.ln();
    (s * (stage.ln() - log_n) + log_n).exp()
}

/// Final PWDs of a two-stage scheme.
pub fn two_stage_sigma(pwd: FinalPwd, alpha: f64, y_n: &[f64], stage: &[f64]) -> Result<Vec<f64>> {
    let sigma: Vec<f64> = match pwd {
        FinalPwd::Stage => stage.to_vec(),
        FinalPwd::Power => y_n
            .iter()
            .zip(stage)
            .map(|(&yn, &y2)| weighted_power(yn, y2, 1.0 / alpha))
            .collect(),
        FinalPwd::Convex { omega, s1 } => {
            let s2 = SchemeConfig::convex_s2(alpha, omega, s1);
            y_n.iter()
                .zip(stage)
                .map(|(&yn, &y2)| {
                    omega * weighted_power(yn, y2, s1) + (1.0 - omega) * weighted_power(yn, y2, s2)
                })
                .collect()
        }
    };
    if let Some(i) = sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Evaluation(format!(
            "Patankar denominator {} is {} (y^n = {}, y^(2) = {})",
            i + 1,
            sigma[i],
            y_n[i],
            stage[i]
        )));
    }
    Ok(sigma)
}

/// Two-stage MPRK step (MPRK22, MPRK22ncs, convex or custom PWDs).
pub fn mprk22_step(problem: &PdsProblem, y_n: &[f64], dt: f64, config: &SchemeConfig) -> Result<StepRecord> {
    if config.kind.stages() != 2 {
        return Err(Error::arg(format!("{} is not a two-stage scheme", config.label())));
    }
    config.validate()?;
    check_positive("y_n", y_n, problem.dim())?;
    check_dt(dt)?;
    let tab = config.tableau()?;

    let rates_n = problem.production(y_n)?;
    let pi = y_n.to_vec();
    let stage_matrix =
        stage_matrix_from_rates(std::slice::from_ref(&rates_n), &[tab.a21()], &pi, dt, config.delta);
    let stage2 = stage_matrix.solve(y_n)?;
    if let Some(i) = stage2.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Evaluation(format!(
            "stage value {} is {} in {}",
            i + 1,
            stage2[i],
            config.label()
        )));
    }

    let sigma = two_stage_sigma(config.pwd, tab.alpha(), y_n, &stage2)?;
    let rates = [rates_n, problem.production(&stage2)?];
    let m = final_matrix_from_rates(&rates, &[tab.b1(), tab.b2()], &sigma, dt);
    let y_next = solve_patankar(&m, y_n)?;
    Ok(StepRecord {
        y_next,
        stage2: Some(stage2),
        sigma,
        pi: Some(pi),
        final_matrix: m,
        stage_matrix: Some(stage_matrix),
    })
}

/// Dispatches to the kernel for `config.kind`.
pub fn patankar_step(problem: &PdsProblem, config: &SchemeConfig, y_n: &[f64], dt: f64) -> Result<StepRecord> {
    match config.kind {
        SchemeKind::Mpe => mpe_step(problem, y_n, dt),
        SchemeKind::MpeLin => mpelin_step(problem, y_n, dt),
        _ => mprk22_step(problem, y_n, dt, config),
    }
}

/// Plain explicit Runge-Kutta step; can leave the positive orthant.
pub fn explicit_rk_step(problem: &PdsProblem, y_n: &[f64], dt: f64, tableau: &ButcherTableau) -> Result<Vec<f64>> {
    check_dt(dt)?;
    let n = problem.dim();
    if y_n.len() != n {
        return Err(Error::arg(format!("y_n has length {}, expected {n}", y_n.len())));
    }
    let mut slopes: Vec<Vec<f64>> = Vec::with_capacity(tableau.stages());
    for k in 0..tableau.stages() {
        let mut yk = y_n.to_vec();
        for (nu, &a) in tableau.a[k].iter().enumerate() {
            for i in 0..n {
                yk[i] += dt * a * slopes[nu][i];
            }
        }
        slopes.push(problem.rhs(&yk)?);
    }
    let mut y = y_n.to_vec();
    for (k, &b) in tableau.b.iter().enumerate() {
        for i in 0..n {
            y[i] += dt * b * slopes[k][i];
        }
    }
    Ok(y)
}
