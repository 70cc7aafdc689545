//! Backward cumulant solvers and Laplace-transform evaluations.
//!
//! Conditional on an environment path, the quenched Laplace exponents solve
//! the backward integral equation
//!
//! ```text
//! u_{r,t} = lambda - integral_r^t e^{xi(s)} phi(e^{-xi(s)} u_{s,t}) ds,
//! ```
//!
//! together with its rescaling `v_{r,t}(xi, lambda) = e^{-xi(r)}
//! u_{r,t}(xi, e^{xi(t)} lambda)`. This module integrates these equations
//! with the path frozen per grid cell at its left endpoint, evaluates the
//! quenched, annealed, and stationary Laplace transforms built from them,
//! and computes the comparison objects: the marginal-kernel solution, the
//! scalar dominating solution, and the large-initial-value limit `vbar`.
//!
//! The integrator is a fixed-step classical 4-stage Runge-Kutta scheme per
//! substep. When the local derivative is large relative to the state (huge
//! terminal conditions during the `vbar` doubling sweep), the substep is
//! consumed in shorter geometric pieces so the solve contracts instead of
//! exploding; smooth solves never trigger this and keep clean fourth-order
//! behavior.

use rayon::prelude::*;

use crate::config::ModelSpec;
use crate::levy_env::EnvPath;
use crate::linalg::Vec2;
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism, ScalarMechanism};
use crate::scalar::Real;
use crate::stats::McEstimate;
use crate::{Error, Result};

/// Hard cap on the number of geometric pieces per substep; reaching it is
/// flagged as blow-up.
const MAX_PIECES_PER_SUBSTEP: usize = 200_000;

/// Integrator and limit-procedure parameters.
#[derive(Clone, Copy, Debug)]
pub struct SolverOpts<F> {
    /// Runge-Kutta substeps per path grid cell.
    pub substeps_per_cell: usize,
    /// Negative excursions beyond this magnitude count as clamp events.
    pub abs_tol: F,
    /// State ceiling; exceeding it sets the blow-up flag.
    pub blowup_ceiling: F,
    /// Largest terminal value tried by the `vbar` doubling sweep.
    pub max_lambda_cap: F,
    /// Relative-change threshold declaring the `vbar` sweep converged.
    pub convergence_tol: F,
    /// Absolute-change floor for the same sweep. At long horizons the
    /// functional itself sits orders of magnitude below the relative
    /// threshold times any representable change, so without this floor a
    /// finite limit would be misreported as divergent.
    pub convergence_abs_tol: F,
}

impl<F: Real> Default for SolverOpts<F> {
    fn default() -> Self {
        Self {
            substeps_per_cell: 2,
            abs_tol: F::of(1e-9),
            blowup_ceiling: F::of(1e100),
            max_lambda_cap: F::of(1.099511627776e12),
            convergence_tol: F::of(2.5e-7),
            convergence_abs_tol: F::of(1e-10),
        }
    }
}

/// State types the backward integrator can carry.
trait OdeState<F: Real>: Copy {
    fn add_scaled(self, k: Self, a: F) -> Self;
    fn rk4_combine(self, k1: Self, k2: Self, k3: Self, k4: Self, h: F) -> Self;
    /// Zeroes negative components; the flag reports whether any component
    /// was below `-tol`.
    fn clamp_nonneg(self, tol: F) -> (Self, bool);
    fn linf(self) -> F;
    fn finite(self) -> bool;
}

impl<F: Real> OdeState<F> for F {
    fn add_scaled(self, k: Self, a: F) -> Self {
        self + k * a
    }

    fn rk4_combine(self, k1: Self, k2: Self, k3: Self, k4: Self, h: F) -> Self {
        let two = F::of(2.0);
        self + (k1 + two * k2 + two * k3 + k4) * (h / F::of(6.0))
    }

    fn clamp_nonneg(self, tol: F) -> (Self, bool) {
        if self < F::zero() {
            (F::zero(), self < -tol)
        } else {
            (self, false)
        }
    }

    fn linf(self) -> F {
        self.abs()
    }

    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl<F: Real> OdeState<F> for Vec2<F> {
    fn add_scaled(self, k: Self, a: F) -> Self {
        self + k * a
    }

    fn rk4_combine(self, k1: Self, k2: Self, k3: Self, k4: Self, h: F) -> Self {
        let two = F::of(2.0);
        self + (k1 + k2 * two + k3 * two + k4) * (h / F::of(6.0))
    }

    fn clamp_nonneg(self, tol: F) -> (Self, bool) {
        let clamped = self.max(Vec2::zero());
        let big = self.x1 < -tol || self.x2 < -tol;
        (clamped, big)
    }

    fn linf(self) -> F {
        Vec2::linf(self)
    }

    fn finite(self) -> bool {
        self.is_finite()
    }
}

/// Backward solution stored on the path grid restricted to `[0, t]`, in
/// ascending time order with the terminal node last. On blow-up only the
/// reached portion `[stop, t]` is stored.
#[derive(Clone, Debug)]
pub struct SolveGrid<F, S> {
    times: Vec<F>,
    values: Vec<S>,
    terminal_time: F,
    clamp_events: usize,
    blown_up: bool,
    blow_at: F,
    ceiling: F,
}

/// Two-type cumulant solution grid.
pub type CumulantGrid<F> = SolveGrid<F, Vec2<F>>;
/// Scalar dominating-solution grid.
pub type ScalarCumulantGrid<F> = SolveGrid<F, F>;

impl<F: Real, S: Copy> SolveGrid<F, S> {
    pub fn times(&self) -> &[F] {
        &self.times
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn terminal_time(&self) -> F {
        self.terminal_time
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn blown_up(&self) -> bool {
        self.blown_up
    }

    /// Solution at time 0; fails when the solve blew up before reaching it.
    pub fn initial(&self) -> Result<S> {
        if self.blown_up {
            return Err(self.blow_up_error());
        }
        Ok(self.values[0])
    }

    /// Solution at the grid node nearest to `r`.
    pub fn value_near(&self, r: F) -> Result<S> {
        if self.blown_up {
            return Err(self.blow_up_error());
        }
        let idx = self
            .times
            .partition_point(|&s| s < r)
            .min(self.times.len() - 1);
        let best = if idx > 0 && (self.times[idx] - r).abs() > (self.times[idx - 1] - r).abs() {
            idx - 1
        } else {
            idx
        };
        Ok(self.values[best])
    }

    fn blow_up_error(&self) -> Error {
        Error::BlowUp {
            ceiling: self.ceiling.as_f64(),
            at: self.blow_at.as_f64(),
        }
    }
}

impl<F: Real> CumulantGrid<F> {
    /// CSV rendering with columns `s,u1,u2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,u1,u2\n");
        for (s, v) in self.times.iter().zip(&self.values) {
            use std::fmt::Write as _;
            let _ = writeln!(out, "{},{},{}", s, v.x1, v.x2);
        }
        out
    }
}

impl<F: Real> ScalarCumulantGrid<F> {
    /// CSV rendering with columns `s,w`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,w\n");
        for (s, v) in self.times.iter().zip(&self.values) {
            use std::fmt::Write as _;
            let _ = writeln!(out, "{},{}", s, v);
        }
        out
    }
}

fn rk4_step<F: Real, S: OdeState<F>>(xi: F, u: S, h: F, rhs: &impl Fn(F, S) -> S) -> S {
    let half = h / F::of(2.0);
    let zero = F::zero();
    let k1 = rhs(xi, u);
    let k2 = rhs(xi, u.add_scaled(k1, half).clamp_nonneg(zero).0);
    let k3 = rhs(xi, u.add_scaled(k2, half).clamp_nonneg(zero).0);
    let k4 = rhs(xi, u.add_scaled(k3, h).clamp_nonneg(zero).0);
    u.rk4_combine(k1, k2, k3, k4, h)
}

fn integrate_backward<F: Real, S: OdeState<F>>(
    path: &EnvPath<F>,
    t: F,
    terminal: S,
    opts: &SolverOpts<F>,
    rhs: &impl Fn(F, S) -> S,
) -> SolveGrid<F, S> {
    let step = path.step();
    let eps = step * F::of(1e-9);
    let top = path.index_at(t);
    let top_time = path.time(top);

    let mut segments: Vec<(F, F, F)> = Vec::new();
    if t - top_time > eps {
        segments.push((t, top_time, path.value(top)));
    }
    for k in (1..=top).rev() {
        segments.push((path.time(k), path.time(k - 1), path.value(k - 1)));
    }

    let mut rev_times = vec![t];
    let mut rev_values = vec![terminal];
    let mut u = terminal;
    let mut clamp_events = 0usize;
    let mut blown_up = false;
    let mut blow_at = t;

    'segments: for &(hi, lo, xi) in &segments {
        let len = hi - lo;
        let sub = len / F::of(opts.substeps_per_cell as f64);
        let mut pos = hi;
        for _ in 0..opts.substeps_per_cell {
            let mut remaining = sub;
            let mut pieces = 0usize;
            loop {
                let g = rhs(xi, u);
                if !g.finite() {
                    blown_up = true;
                    blow_at = pos;
                    break 'segments;
                }
                let kappa = g.linf() / u.linf().max(F::one());
                let quarter = F::of(0.25);
                let h = if remaining * kappa <= quarter {
                    remaining
                } else {
                    quarter / kappa
                };
                u = rk4_step(xi, u, -h, rhs);
                let (clamped, big) = u.clamp_nonneg(opts.abs_tol);
                u = clamped;
                if big {
                    clamp_events += 1;
                }
                pos -= h;
                if !u.finite() || u.linf() > opts.blowup_ceiling {
                    blown_up = true;
                    blow_at = pos;
                    break 'segments;
                }
                remaining -= h;
                pieces += 1;
                if remaining <= sub * F::of(1e-12) {
                    break;
                }
                if pieces >= MAX_PIECES_PER_SUBSTEP {
                    blown_up = true;
                    blow_at = pos;
                    break 'segments;
                }
            }
        }
        rev_times.push(lo);
        rev_values.push(u);
    }

    rev_times.reverse();
    rev_values.reverse();
    SolveGrid {
        times: rev_times,
        values: rev_values,
        terminal_time: t,
        clamp_events,
        blown_up,
        blow_at,
        ceiling: opts.blowup_ceiling,
    }
}

fn check_time_range<F: Real>(path: &EnvPath<F>, t: F) -> Result<F> {
    let horizon = path.horizon();
    if t < F::zero() || t > horizon * (F::one() + F::of(1e-12)) {
        return Err(Error::InvalidInput(format!(
            "terminal time {t} outside the path horizon [0, {horizon}]"
        )));
    }
    Ok(t.min(horizon))
}

fn check_lambda<F: Real>(lambda: Vec2<F>) -> Result<()> {
    if !lambda.is_finite() || !lambda.is_nonnegative() {
        return Err(Error::InvalidInput(format!(
            "Laplace argument must be finite and nonnegative, got ({}, {})",
            lambda.x1, lambda.x2
        )));
    }
    Ok(())
}

/// Solves the two-type backward equation for `u` down to time 0.
pub fn solve_u<F: Real>(
    path: &EnvPath<F>,
    mech: &BranchingMechanism<F>,
    t: F,
    lambda: Vec2<F>,
    opts: &SolverOpts<F>,
) -> Result<CumulantGrid<F>> {
    let t = check_time_range(path, t)?;
    check_lambda(lambda)?;
    let rhs = |xi: F, u: Vec2<F>| mech.phi(u * (-xi).exp()) * xi.exp();
    Ok(integrate_backward(path, t, lambda, opts, &rhs))
}

/// Solves the marginal-kernel variant with the mechanism that only sees
/// `z_i lambda_i` inside each jump integral.
pub fn solve_u_tilde<F: Real>(
    path: &EnvPath<F>,
    mech: &BranchingMechanism<F>,
    t: F,
    lambda: Vec2<F>,
    opts: &SolverOpts<F>,
) -> Result<CumulantGrid<F>> {
    let t = check_time_range(path, t)?;
    check_lambda(lambda)?;
    let rhs = |xi: F, u: Vec2<F>| mech.phi_tilde(u * (-xi).exp()) * xi.exp();
    Ok(integrate_backward(path, t, lambda, opts, &rhs))
}

/// Solves the scalar dominating equation driven by `varphi`.
pub fn solve_w<F: Real>(
    path: &EnvPath<F>,
    varphi: &ScalarMechanism<F>,
    t: F,
    lambda: F,
    opts: &SolverOpts<F>,
) -> Result<ScalarCumulantGrid<F>> {
    let t = check_time_range(path, t)?;
    if !lambda.is_finite() || lambda < F::zero() {
        return Err(Error::InvalidInput(format!(
            "Laplace argument must be finite and nonnegative, got {lambda}"
        )));
    }
    let rhs = |xi: F, w: F| xi.exp() * varphi.eval((-xi).exp() * w);
    Ok(integrate_backward(path, t, lambda, opts, &rhs))
}

/// Solves for the rescaled cumulant `v`: the grid values are
/// `v_{r,t}(xi, lambda) = e^{-xi(r)} u_{r,t}(xi, e^{xi(t)} lambda)` at the
/// grid nodes.
pub fn solve_v<F: Real>(
    path: &EnvPath<F>,
    mech: &BranchingMechanism<F>,
    t: F,
    lambda: Vec2<F>,
    opts: &SolverOpts<F>,
) -> Result<CumulantGrid<F>> {
    let t = check_time_range(path, t)?;
    check_lambda(lambda)?;
    let xi_t = path.value(path.index_at(t));
    let terminal = lambda * xi_t.exp();
    if !terminal.is_finite() {
        return Err(Error::InvalidInput(
            "terminal condition overflows after environment scaling".into(),
        ));
    }
    let mut grid = solve_u(path, mech, t, terminal, opts)?;
    if !grid.blown_up {
        for (s, v) in grid.times.iter().zip(grid.values.iter_mut()) {
            let xi_s = path.value(path.index_at(*s));
            *v = *v * (-xi_s).exp();
        }
    }
    Ok(grid)
}

/// Point evaluation `v_{r,t}(xi, lambda)`: re-solves `u` with the scaled
/// terminal condition and rescales at the node nearest to `r`.
pub fn v_from_u<F: Real>(
    path: &EnvPath<F>,
    mech: &BranchingMechanism<F>,
    r: F,
    t: F,
    lambda: Vec2<F>,
    opts: &SolverOpts<F>,
) -> Result<Vec2<F>> {
    if r < F::zero() || r > t {
        return Err(Error::InvalidInput(format!(
            "need 0 <= r <= t, got r = {r}, t = {t}"
        )));
    }
    let grid = solve_v(path, mech, t, lambda, opts)?;
    grid.value_near(r)
}

/// Quenched Laplace transform `exp(-<x, v_{0,t}(xi, lambda)>)`.
pub fn quenched_laplace<F: Real>(
    path: &EnvPath<F>,
    mech: &BranchingMechanism<F>,
    x: Vec2<F>,
    lambda: Vec2<F>,
    t: F,
    opts: &SolverOpts<F>,
) -> Result<F> {
    if !x.is_finite() || !x.is_nonnegative() {
        return Err(Error::InvalidInput(format!(
            "initial state must be finite and nonnegative, got ({}, {})",
            x.x1, x.x2
        )));
    }
    let v0 = v_from_u(path, mech, F::zero(), t, lambda, opts)?;
    Ok((-x.dot(v0)).exp())
}

fn trapezoid_psi<F: Real>(grid: &CumulantGrid<F>, imm: &ImmigrationMechanism<F>) -> F {
    let mut total = F::zero();
    for k in 1..grid.times.len() {
        let dt = grid.times[k] - grid.times[k - 1];
        let a = imm.psi(grid.values[k - 1]);
        let b = imm.psi(grid.values[k]);
        total += dt * (a + b) / F::of(2.0);
    }
    total
}

/// Immigration exponent `integral_0^t psi(v_{s,t}(xi, lambda)) ds`,
/// evaluated by the trapezoid rule on the solution grid.
pub fn immigration_exponent<F: Real>(
    path: &EnvPath<F>,
    mech: &BranchingMechanism<F>,
    imm: &ImmigrationMechanism<F>,
    lambda: Vec2<F>,
    t: F,
    opts: &SolverOpts<F>,
) -> Result<F> {
    let grid = solve_v(path, mech, t, lambda, opts)?;
    if grid.blown_up {
        return Err(grid.blow_up_error());
    }
    Ok(trapezoid_psi(&grid, imm))
}

/// Annealed Laplace transform: Monte-Carlo mean over environment paths of
/// `exp(-<x, v_{0,t}> - integral_0^t psi(v_{s,t}) ds)`. Fails if any path
/// blows up.
pub fn annealed_laplace<F: Real>(
    model: &ModelSpec<F>,
    x: Vec2<F>,
    lambda: Vec2<F>,
    t: F,
    n_paths: usize,
    dt: F,
    seed: u64,
) -> Result<McEstimate<F>> {
    if n_paths < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 paths, got {n_paths}"
        )));
    }
    if !(t > F::zero()) || !(dt > F::zero()) {
        return Err(Error::InvalidInput(format!(
            "need positive t and dt, got t = {t}, dt = {dt}"
        )));
    }
    check_lambda(lambda)?;
    if !x.is_finite() || !x.is_nonnegative() {
        return Err(Error::InvalidInput(
            "initial state must be finite and nonnegative".into(),
        ));
    }
    let opts = SolverOpts::default();
    let dt_eff = dt.min(t);
    let results: Vec<Result<F>> = (1..=n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i);
            let path = model.env.sample_path(t, dt_eff, &mut rng)?;
            let grid = solve_v(&path, &model.branching, t, lambda, &opts)?;
            let v0 = grid.initial()?;
            let exponent = x.dot(v0) + trapezoid_psi(&grid, &model.immigration);
            Ok((-exponent).exp())
        })
        .collect();
    collect_path_values(results, n_paths).map(|vals| McEstimate::from_values(&vals))
}

/// Stationary Laplace transform estimate.
#[derive(Clone, Copy, Debug)]
pub struct StationaryLaplace<F> {
    pub estimate: McEstimate<F>,
    /// Largest integrand value seen at the far end of the truncation
    /// window; magnitudes above tolerance mean the window is too short.
    pub tail_max: F,
}

/// Stationary Laplace transform: Monte-Carlo mean of
/// `exp(-integral_0^T psi(v_{s,T}(xi, lambda)) ds)` over fresh paths on
/// `[0, T]`. By stationarity of the environment increments this equals the
/// integral over `[-T, 0]` in the limit formula, relabeled to start at 0.
pub fn stationary_laplace<F: Real>(
    model: &ModelSpec<F>,
    lambda: Vec2<F>,
    truncation_t: F,
    n_paths: usize,
    dt: F,
    seed: u64,
) -> Result<StationaryLaplace<F>> {
    if !(truncation_t > F::zero()) {
        return Err(Error::InvalidInput(format!(
            "truncation horizon must be positive, got {truncation_t}"
        )));
    }
    if n_paths < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 paths, got {n_paths}"
        )));
    }
    check_lambda(lambda)?;
    let opts = SolverOpts::default();
    let dt_eff = dt.min(truncation_t);
    let results: Vec<Result<(F, F)>> = (1..=n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i);
            let path = model.env.sample_path(truncation_t, dt_eff, &mut rng)?;
            let grid = solve_v(&path, &model.branching, truncation_t, lambda, &opts)?;
            if grid.blown_up() {
                return Err(grid.blow_up_error());
            }
            let tail = model.immigration.psi(grid.values[0]);
            Ok(((-trapezoid_psi(&grid, &model.immigration)).exp(), tail))
        })
        .collect();
    let pairs = collect_path_values(results, n_paths)?;
    let values: Vec<F> = pairs.iter().map(|p| p.0).collect();
    let tail_max = pairs
        .iter()
        .map(|p| p.1)
        .fold(F::zero(), |acc, v| acc.max(v));
    Ok(StationaryLaplace {
        estimate: McEstimate::from_values(&values),
        tail_max,
    })
}

/// Splits per-path results into values, converting blow-ups into a count.
fn collect_path_values<T>(results: Vec<Result<T>>, total: usize) -> Result<Vec<T>> {
    let mut values = Vec::with_capacity(total);
    let mut blowups = 0usize;
    for r in results {
        match r {
            Ok(v) => values.push(v),
            Err(Error::BlowUp { .. }) => blowups += 1,
            Err(other) => return Err(other),
        }
    }
    if blowups > 0 {
        return Err(Error::BlowUpPaths {
            count: blowups,
            total,
        });
    }
    Ok(values)
}

/// Large-initial-value limit of `v_{0,t}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Vbar<F> {
    Finite(Vec2<F>),
    /// The doubling sweep failed to stabilize below the terminal cap: the
    /// mechanism does not drive arbitrarily large populations extinct.
    Diverged,
}

impl<F: Real> Vbar<F> {
    pub fn finite(self) -> Option<Vec2<F>> {
        match self {
            Vbar::Finite(v) => Some(v),
            Vbar::Diverged => None,
        }
    }
}

/// Evaluates `vbar_{0,t}(xi) = lim_{lambda -> infinity} v_{0,t}(xi, lambda)`
/// by doubling the terminal value until the result stabilizes.
pub fn vbar<F: Real>(
    path: &EnvPath<F>,
    mech: &BranchingMechanism<F>,
    t: F,
    opts: &SolverOpts<F>,
) -> Result<Vbar<F>> {
    if !(t > F::zero()) {
        return Err(Error::InvalidInput(format!(
            "extinction functional needs t > 0, got {t}"
        )));
    }
    let mut lam = F::one();
    let mut prev: Option<Vec2<F>> = None;
    while lam <= opts.max_lambda_cap {
        let grid = solve_v(path, mech, t, Vec2::splat(lam), opts)?;
        if grid.blown_up() {
            return Ok(Vbar::Diverged);
        }
        let v0 = grid.values[0];
        if let Some(p) = prev {
            let denom = v0.linf().max(F::of(1e-300));
            let diff = v0.abs_diff(p).linf();
            if diff / denom < opts.convergence_tol || diff < opts.convergence_abs_tol {
                return Ok(Vbar::Finite(v0));
            }
        }
        prev = Some(v0);
        lam *= F::of(2.0);
    }
    Ok(Vbar::Diverged)
}

/// Numerical check of the dominating-envelope condition: the scalar
/// mechanism must have a positive quadratic part and sit below both local
/// projections of the branching mechanism for every nonnegative argument
/// (checked on a grid plus an asymptotic coefficient comparison).
#[derive(Clone, Copy, Debug)]
pub struct Condition1Report<F> {
    /// `c0 > 0`, the implemented sufficient condition for the dominating
    /// mechanism to drive large populations extinct.
    pub quadratic_ok: bool,
    /// Envelope inequality `varphi <= phi_star_i` on the test grid and in
    /// the leading asymptotic coefficients.
    pub envelope_ok: bool,
    /// Largest positive gap `varphi(x) - phi_star_i(x)` found on the grid.
    pub max_gap: F,
}

impl<F> Condition1Report<F> {
    pub fn ok(&self) -> bool {
        self.quadratic_ok && self.envelope_ok
    }
}

/// Checks the envelope condition on `[0, x_max]` with the given number of
/// grid points.
pub fn check_condition1<F: Real>(
    mech: &BranchingMechanism<F>,
    varphi: &ScalarMechanism<F>,
    x_max: F,
    points: usize,
) -> Condition1Report<F> {
    let tol = F::of(1e-12);
    let quadratic_ok = varphi.c0 > F::zero();

    let mut max_gap = F::zero();
    let n = points.max(2);
    for k in 0..n {
        let x = x_max * F::of(k as f64) / F::of((n - 1) as f64);
        let v = varphi.eval(x);
        for i in 0..2 {
            let star = mech.phi_star(i, x);
            let gap = v - star;
            if gap > max_gap {
                max_gap = gap;
            }
        }
    }
    let scale = F::one() + x_max * x_max;
    let grid_ok = max_gap <= tol * scale;

    // Asymptotics: varphi(x) ~ c0 x^2 + slope x with slope = b0 + sum w s;
    // phi_star_i(x) ~ c_i x^2 + (row_i + marginal first moment) x. The grid
    // cannot see past x_max, so compare leading coefficients directly.
    let mut tail_ok = true;
    let slope0 = varphi.b0
        + varphi
            .atoms
            .iter()
            .map(|&(s, w)| s * w)
            .fold(F::zero(), |a, v| a + v);
    let rows = mech.b.row_sums();
    let moments = [mech.m1.first_moment().x1, mech.m2.first_moment().x2];
    for (i, &mi) in moments.iter().enumerate() {
        let ci = mech.c.get(i);
        let row = rows.get(i);
        if varphi.c0 > ci + tol || ((varphi.c0 - ci).abs() <= tol && slope0 > row + mi + tol) {
            tail_ok = false;
        }
    }

    Condition1Report {
        quadratic_ok,
        envelope_ok: grid_ok && tail_ok,
        max_gap,
    }
}

/// Outcome of the chain comparison `u <= u-tilde <= w` on a solution grid.
#[derive(Clone, Copy, Debug)]
pub struct DominationReport<F> {
    pub condition1: Condition1Report<F>,
    /// Largest positive violation of either inequality over all grid
    /// nodes, components, and terminal values.
    pub max_violation: F,
    pub points_checked: usize,
}

/// Verifies the domination chain on one path for a grid of terminal values:
/// the two-type solution below the marginal-kernel solution below the
/// scalar solution started from the L1 norm. Condition-1 failure is
/// reported in the result, not as an error.
pub fn check_domination<F: Real>(
    path: &EnvPath<F>,
    mech: &BranchingMechanism<F>,
    varphi: &ScalarMechanism<F>,
    t: F,
    lambda_grid: &[Vec2<F>],
    opts: &SolverOpts<F>,
) -> Result<DominationReport<F>> {
    let xi_min = path.values().iter().fold(F::zero(), |acc, &v| acc.min(v));
    let lam_max = lambda_grid
        .iter()
        .map(|l| l.l1())
        .fold(F::zero(), |a, v| a.max(v));
    let x_max = F::of(4.0) * (F::one() + lam_max) * (-xi_min).exp();
    let condition1 = check_condition1(mech, varphi, x_max, 512);

    let mut max_violation = F::of(f64::NEG_INFINITY);
    let mut points_checked = 0usize;
    for &lambda in lambda_grid {
        let gu = solve_u(path, mech, t, lambda, opts)?;
        let gt = solve_u_tilde(path, mech, t, lambda, opts)?;
        let gw = solve_w(path, varphi, t, lambda.l1(), opts)?;
        if gu.blown_up() || gt.blown_up() || gw.blown_up() {
            return Err(Error::BlowUp {
                ceiling: opts.blowup_ceiling.as_f64(),
                at: t.as_f64(),
            });
        }
        for k in 0..gu.times.len() {
            let u = gu.values[k];
            let ut = gt.values[k];
            let w = gw.values[k];
            for i in 0..2 {
                max_violation = max_violation.max(u.get(i) - ut.get(i));
                max_violation = max_violation.max(ut.get(i) - w);
            }
            points_checked += 2;
        }
    }
    Ok(DominationReport {
        condition1,
        max_violation,
        points_checked,
    })
}
