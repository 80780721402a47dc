//! Fully conservative production-destruction systems.
//!
//! A system is stored only through its production-rate matrix `Π` with
//! `Π[i][j] = p_ij(y)`, the rate at which constituent `j` turns into `i`.
//! Destruction rates are never stored: `d_ij(y) = Π[j][i]`. Conservation of
//! `Σ y_i` therefore follows from the storage layout.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::smallsolve::DenseMatrix;

/// Machine epsilon used for the "almost zero" initial values of the
/// Brusselator and Robertson problems.
pub const EPS: f64 = f64::EPSILON;

/// Fills the (zeroed) production matrix for a positive state.
pub type RateFn = Arc<dyn Fn(&[f64], &mut DenseMatrix) + Send + Sync>;
/// Closed-form solution `t -> y(t)`.
pub type ExactFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// A point on a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub y: Vec<f64>,
}

impl State {
    pub fn new(t: f64, y: Vec<f64>) -> Self {
        Self { t, y }
    }

    pub fn is_positive(&self) -> bool {
        self.y.iter().all(|&v| v > 0.0)
    }
}

#[derive(Clone)]
pub struct PdsProblem {
    name: String,
    n: usize,
    production: RateFn,
    default_initial: Vec<f64>,
    default_span: (f64, f64),
    exact: Option<ExactFn>,
    params: Vec<(String, f64)>,
}

impl fmt::Debug for PdsProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdsProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("default_initial", &self.default_initial)
            .field("default_span", &self.default_span)
            .field("exact", &self.exact.is_some())
            .field("params", &self.params)
            .finish()
    }
}

impl PdsProblem {
    /// Builds a problem from an arbitrary rate function. The diagonal of the
    /// produced matrix is discarded, see [`make_fully_conservative`].
    pub fn new(
        name: impl Into<String>,
        n: usize,
        production: RateFn,
        default_initial: Vec<f64>,
        default_span: (f64, f64),
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("a system needs at least one constituent"));
        }
        if default_initial.len() != n {
            return Err(Error::arg(format!(
                "initial state has length {}, expected {n}",
                default_initial.len()
            )));
        }
        if let Some(i) = default_initial.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::arg(format!(
                "initial component {} is {} (must be > 0)",
                i + 1,
                default_initial[i]
            )));
        }
        if !(default_span.1 > default_span.0) {
            return Err(Error::arg("time span must satisfy t_start < t_end"));
        }
        Ok(Self {
            name: name.into(),
            n,
            production: make_fully_conservative(production),
            default_initial,
            default_span,
            exact: None,
            params: Vec::new(),
        })
    }

    pub fn with_exact(mut self, exact: ExactFn) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn with_param(mut self, key: impl Into<String>, value: f64) -> Self {
        self.params.push((key.into(), value));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn default_initial(&self) -> &[f64] {
        &self.default_initial
    }

    pub fn default_span(&self) -> (f64, f64) {
        self.default_span
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact(&self, t: f64) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|f| f(t))
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::arg(format!(
                "state has length {}, problem '{}' has {} constituents",
                y.len(),
                self.name,
                self.n
            )));
        }
        Ok(())
    }

    /// Writes `Π(y)` into `out`, which must be `n x n`.
    pub fn production_into(&self, y: &[f64], out: &mut DenseMatrix) -> Result<()> {
        self.check_state(y)?;
        if out.dim() != self.n {
            return Err(Error::arg("output matrix has the wrong dimension"));
        }
        out.fill(0.0);
        (self.production)(y, out);
        if !out.is_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite production rate in '{}' at y = {y:?}",
                self.name
            )));
        }
        Ok(())
    }

    /// Production-rate matrix `Π(y)`.
    pub fn production(&self, y: &[f64]) -> Result<DenseMatrix> {
        let mut m = DenseMatrix::zeros(self.n);
        self.production_into(y, &mut m)?;
        Ok(m)
    }

    /// Right-hand side `P_i(y) - D_i(y)`.
    pub fn rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(rhs_from_rates(&self.production(y)?))
    }
}

/// Production totals `P_i = Σ_j Π[i][j]`.
pub fn production_totals(rates: &DenseMatrix) -> Vec<f64> {
    (0..rates.dim()).map(|i| rates.row(i).iter().sum()).collect()
}

/// Destruction totals `D_i = Σ_j Π[j][i]`.
pub fn destruction_totals(rates: &DenseMatrix) -> Vec<f64> {
    rates.column_sums()
}

pub fn rhs_from_rates(rates: &DenseMatrix) -> Vec<f64> {
    production_totals(rates)
        .into_iter()
        .zip(destruction_totals(rates))
        .map(|(p, d)| p - d)
        .collect()
}

/// Drops self-exchange rates `p_ii = d_ii` from a rate function; the
/// right-hand side is unchanged because those terms cancel.
pub fn make_fully_conservative(production: RateFn) -> RateFn {
    Arc::new(move |y: &[f64], out: &mut DenseMatrix| {
        production(y, out);
        for i in 0..out.dim() {
            out[(i, i)] = 0.0;
        }
    })
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must be positive and finite, got {value}")))
    }
}

/// Linear exchange between two constituents, `y1' = y2 - a y1`.
pub fn linear_test(a: f64) -> Result<PdsProblem> {
    linear_test_with(a, [0.9, 0.1], (0.0, 1.75))
}

pub fn linear_test_with(a: f64, y0: [f64; 2], span: (f64, f64)) -> Result<PdsProblem> {
    require_positive("a", a)?;
    let rates: RateFn = Arc::new(move |y: &[f64], p: &mut DenseMatrix| {
        p[(0, 1)] = y[1];
        p[(1, 0)] = a * y[0];
    });
    let (t0, total) = (span.0, y0[0] + y0[1]);
    let y_inf = total / (a + 1.0);
    let c = y0[0] / y_inf - 1.0;
    let exact: ExactFn = Arc::new(move |t: f64| {
        let y1 = (1.0 + c * (-(a + 1.0) * (t - t0)).exp()) * y_inf;
        vec![y1, total - y1]
    });
    Ok(PdsProblem::new("linear", 2, rates, y0.to_vec(), span)?
        .with_exact(exact)
        .with_param("a", a))
}

/// Nutrient -> phytoplankton -> detritus model of an algal bloom.
pub fn nonlinear_test(a: f64) -> Result<PdsProblem> {
    require_positive("a", a)?;
    let rates: RateFn = Arc::new(move |y: &[f64], p: &mut DenseMatrix| {
        p[(1, 0)] = y[0] * y[1] / (y[0] + 1.0);
        p[(2, 1)] = a * y[1];
    });
    Ok(
        PdsProblem::new("nonlinear", 3, rates, vec![9.98, 0.01, 0.01], (0.0, 30.0))?
            .with_param("a", a),
    )
}

/// Default growth-to-decay parameter of the nonlinear test.
pub const NONLINEAR_DEFAULT_A: f64 = 0.3;

/// Original Brusselator with all rate constants set to one.
pub fn brusselator() -> PdsProblem {
    let (k1, k2, k3, k4) = (1.0, 1.0, 1.0, 1.0);
    let rates: RateFn = Arc::new(move |y: &[f64], p: &mut DenseMatrix| {
        p[(2, 1)] = k2 * y[1] * y[4];
        p[(3, 4)] = k4 * y[4];
        p[(4, 0)] = k1 * y[0];
        p[(4, 5)] = k3 * y[4] * y[4] * y[5];
        p[(5, 4)] = k2 * y[1] * y[4];
    });
    PdsProblem::new(
        "brusselator",
        6,
        rates,
        vec![10.0, 10.0, EPS, EPS, 0.1, 0.1],
        (0.0, 10.0),
    )
    .expect("brusselator defaults are valid")
}

/// Robertson's stiff kinetics problem.
pub fn robertson() -> PdsProblem {
    let rates: RateFn = Arc::new(|y: &[f64], p: &mut DenseMatrix| {
        p[(0, 1)] = 1e4 * y[1] * y[2];
        p[(1, 0)] = 0.04 * y[0];
        p[(2, 1)] = 3e7 * y[1] * y[1];
    });
    PdsProblem::new(
        "robertson",
        3,
        rates,
        vec![1.0 - 2.0 * EPS, EPS, EPS],
        (1e-6, 1e10),
    )
    .expect("robertson defaults are valid")
}

/// Linear family `y_I' = -mu y_I`, `y_J' = mu y_I`, all other components
/// constant. `big_i` and `big_j` are 1-based.
pub fn order_test_pds(n: usize, big_i: usize, big_j: usize, mu: f64) -> Result<PdsProblem> {
    if n < 2 {
        return Err(Error::arg("order test needs n >= 2"));
    }
    if big_i == 0 || big_j == 0 || big_i > n || big_j > n {
        return Err(Error::arg(format!(
            "indices I = {big_i}, J = {big_j} must lie in 1..={n}"
        )));
    }
    if big_i == big_j {
        return Err(Error::arg("order test needs I != J"));
    }
    require_positive("mu", mu)?;
    let (ii, jj) = (big_i - 1, big_j - 1);
    let rates: RateFn = Arc::new(move |y: &[f64], p: &mut DenseMatrix| {
        p[(jj, ii)] = mu * y[ii];
    });
    let exact: ExactFn = Arc::new(move |t: f64| {
        let decay = (-mu * t).exp();
        let mut y = vec![1.0; n];
        y[ii] = decay;
        y[jj] = 2.0 - decay;
        y
    });
    Ok(PdsProblem::new("order-test", n, rates, vec![1.0; n], (0.0, 1.0))?
        .with_exact(exact)
        .with_param("n", n as f64)
        .with_param("I", big_i as f64)
        .with_param("J", big_j as f64)
        .with_param("mu", mu))
}

/// Names accepted by [`problem_by_name`].
pub const PROBLEM_NAMES: [&str; 5] = ["linear", "nonlinear", "brusselator", "robertson", "order-test"];

/// Built-in problem with its default parameters.
pub fn problem_by_name(name: &str) -> Result<PdsProblem> {
    match name {
        "linear" => linear_test(5.0),
        "nonlinear" => nonlinear_test(NONLINEAR_DEFAULT_A),
        "brusselator" => Ok(brusselator()),
        "robertson" => Ok(robertson()),
        "order-test" => order_test_pds(3, 1, 2, 1.0),
        other => Err(Error::arg(format!(
            "unknown problem '{other}' (expected one of {})",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn linear_rhs_by_hand() {
        let p = linear_test(5.0).unwrap();
        let r = p.rhs(&[0.9, 0.1]).unwrap();
        assert!(close(&r, &[-4.4, 4.4], 1e-15));
    }

    #[test]
    fn linear_exact_values() {
        let p = linear_test(5.0).unwrap();
        assert_eq!(p.exact(0.0).unwrap()[0], 0.9);
        // y_inf = 1/6, c = 4.4
        let y = p.exact(0.1).unwrap();
        let oracle = (1.0 + 4.4 * (-0.6f64).exp()) / 6.0;
        assert!((y[0] - oracle).abs() < 1e-15);
        assert!((y[0] - 0.5691285).abs() < 5e-8);
        let y = p.exact(1.75).unwrap();
        assert!((y[0] - 0.1666869).abs() < 5e-8);
        assert!((y[0] + y[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nonlinear_rhs_by_hand() {
        let p = nonlinear_test(0.3).unwrap();
        let r = p.rhs(&[9.98, 0.01, 0.01]).unwrap();
        let uptake = 9.98 * 0.01 / 10.98;
        assert!(close(&r, &[-uptake, uptake - 0.003, 0.003], 1e-16));
        assert!((uptake - 0.009089253).abs() < 1e-9);
        assert!(r.iter().sum::<f64>().abs() < 1e-17);
        let m = p.production(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(m[(1, 0)], 0.5);
    }

    #[test]
    fn nonlinear_rates_vanish_with_phytoplankton() {
        let p = nonlinear_test(0.3).unwrap();
        let m = p.production(&[5.0, 1e-300, 2.0]).unwrap();
        assert!(m.as_slice().iter().all(|&v| v.abs() < 1e-299));
    }

    #[test]
    fn brusselator_rhs_by_hand() {
        let p = brusselator();
        let r = p.rhs(p.default_initial()).unwrap();
        let expect = [-10.0, -1.0, 1.0, 0.1, 8.901, 0.999];
        assert!(close(&r, &expect, 1e-14), "{r:?}");
        assert!(r.iter().sum::<f64>().abs() < 1e-13);
        let m = p.production(&[1.0, 1.0, 1.0, 1.0, 0.1, 0.1]).unwrap();
        assert!((m[(4, 5)] - 0.001).abs() < 1e-18);
    }

    #[test]
    fn robertson_rhs_by_hand() {
        let p = robertson();
        let r = p.rhs(&[1.0, 1e-8, 1e-8]).unwrap();
        let expect = [1e-12 - 0.04, 0.04 - 1e-12 - 3e-9, 3e-9];
        assert!(close(&r, &expect, 1e-17), "{r:?}");
        assert!((r[0] + 0.04).abs() < 1e-11);
    }

    #[test]
    fn order_test_closed_form() {
        let p = order_test_pds(2, 1, 2, 1.0).unwrap();
        let y = p.exact(std::f64::consts::LN_2).unwrap();
        assert!(close(&y, &[0.5, 1.5], 1e-15));
        let q = order_test_pds(4, 3, 1, 2.0).unwrap();
        assert_eq!(q.exact(0.0).unwrap(), vec![1.0; 4]);
        let y = q.exact(1.0).unwrap();
        assert!((y[2] - 0.1353353).abs() < 5e-8);
        assert!((y[0] - (2.0 - (-2.0f64).exp())).abs() < 1e-15);
        assert_eq!((y[1], y[3]), (1.0, 1.0));
    }

    #[test]
    fn order_test_rejects_bad_indices() {
        assert!(order_test_pds(3, 2, 2, 1.0).is_err());
        assert!(order_test_pds(3, 0, 2, 1.0).is_err());
        assert!(order_test_pds(3, 1, 4, 1.0).is_err());
        assert!(order_test_pds(1, 1, 2, 1.0).is_err());
        assert!(order_test_pds(3, 1, 2, 0.0).is_err());
    }

    #[test]
    fn parameters_must_be_positive() {
        assert!(matches!(linear_test(0.0), Err(Error::Argument(_))));
        assert!(matches!(linear_test(-1.0), Err(Error::Argument(_))));
        assert!(matches!(nonlinear_test(0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn zeroing_the_diagonal() {
        let raw: RateFn = Arc::new(|_y: &[f64], p: &mut DenseMatrix| {
            p[(0, 0)] = 3.0;
            p[(0, 1)] = 1.0;
            p[(1, 0)] = 2.0;
            p[(1, 1)] = 5.0;
        });
        let fixed = make_fully_conservative(raw.clone());
        let mut m = DenseMatrix::zeros(2);
        fixed(&[1.0, 1.0], &mut m);
        assert_eq!(m, DenseMatrix::from_rows(&[[0.0, 1.0], [2.0, 0.0]]).unwrap());

        let zero: RateFn = Arc::new(|_y: &[f64], _p: &mut DenseMatrix| {});
        let mut z = DenseMatrix::zeros(3);
        make_fully_conservative(zero)(&[1.0; 3], &mut z);
        assert_eq!(z, DenseMatrix::zeros(3));

        let mut m_raw = DenseMatrix::zeros(2);
        raw(&[1.0, 1.0], &mut m_raw);
        assert_eq!(rhs_from_rates(&m_raw), rhs_from_rates(&m));
    }

    #[test]
    fn state_dimension_is_checked() {
        let p = linear_test(5.0).unwrap();
        assert!(matches!(p.rhs(&[1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn non_finite_rates_are_reported() {
        let bad: RateFn = Arc::new(|y: &[f64], p: &mut DenseMatrix| {
            p[(0, 1)] = 1.0 / (y[0] - 1.0);
        });
        let p = PdsProblem::new("bad", 2, bad, vec![0.5, 0.5], (0.0, 1.0)).unwrap();
        assert!(matches!(p.rhs(&[1.0, 1.0]), Err(Error::Evaluation(_))));
    }

    #[test]
    fn registry() {
        for name in PROBLEM_NAMES {
            let p = problem_by_name(name).unwrap();
            assert_eq!(p.name(), name);
        }
        assert!(problem_by_name("lorenz").is_err());
    }
}
