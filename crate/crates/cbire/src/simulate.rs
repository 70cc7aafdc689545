//! Pathwise Monte-Carlo simulation of the two-type process.
//!
//! Conditional on an environment path, the simulator works in discounted
//! coordinates `Y = e^{-xi} X`: there `Y` is a time-inhomogeneous CBI
//! process whose coefficients at time `s` carry explicit `e^{xi(s)}`
//! factors, and no stochastic integral against the environment appears.
//! Per grid cell, with the environment frozen at the cell's left value
//! `k`, one step applies
//!
//! 1. the exact linear flow `Y <- e^{-b^T dt} Y`,
//! 2. the branching-jump compensator `-dt M^T Y` (`M` rows are the first
//!    moments of the jump measures), so jumps enter fully compensated and
//!    the linear flow alone carries the first moment,
//! 3. the immigration drift `+dt e^{-k} h`,
//! 4. the exact transition of the square-root diffusion
//!    `dY_i = sqrt(2 e^{-k} c_i Y_i) dW`: a Gamma variable with Poisson
//!    mixed shape, which stays nonnegative and preserves the conditional
//!    mean exactly (a Gaussian step would need a clamp at zero whose bias
//!    dominates near the boundary),
//! 5. branching jumps at frozen rate `Y_i e^{k} m_i(total)` adding
//!    `e^{-k} z`, and immigration jumps at rate `n(total)` adding
//!    `e^{-k} z`.
//!
//! States are reported in the original coordinates `X = e^{xi} Y`.

use rayon::prelude::*;

use rand::RngExt;
use rand_distr::{Gamma, Poisson};

use crate::config::ModelSpec;
use crate::levy_env::EnvPath;
use crate::linalg::{Mat2, Vec2};
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism};
use crate::moments::mat_exp;
use crate::scalar::Real;
use crate::transport::EmpiricalMeasure;
use crate::{Error, Result};

/// One simulated path on the grid of an environment path.
#[derive(Clone, Debug)]
pub struct Trajectory<F> {
    times: Vec<F>,
    states: Vec<Vec2<F>>,
    rate_warnings: usize,
}

impl<F: Real> Trajectory<F> {
    pub fn times(&self) -> &[F] {
        &self.times
    }

    pub fn states(&self) -> &[Vec2<F>] {
        &self.states
    }

    pub fn initial_state(&self) -> Vec2<F> {
        self.states[0]
    }

    pub fn final_state(&self) -> Vec2<F> {
        *self.states.last().expect("trajectory is never empty")
    }

    /// State at the grid node nearest to `t`.
    pub fn state_at(&self, t: F) -> Vec2<F> {
        let idx = self
            .times
            .partition_point(|&s| s < t)
            .min(self.times.len() - 1);
        let best = if idx > 0 && (self.times[idx] - t).abs() > (self.times[idx - 1] - t).abs() {
            idx - 1
        } else {
            idx
        };
        self.states[best]
    }

    /// Cells where a jump-rate stability heuristic fired (`dt * rate > 0.1`).
    pub fn rate_warnings(&self) -> usize {
        self.rate_warnings
    }
}

/// Ensemble of trajectories from independent seeds.
#[derive(Clone, Debug)]
pub struct TrajectorySet<F> {
    trajectories: Vec<Trajectory<F>>,
}

impl<F: Real> TrajectorySet<F> {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory<F>] {
        &self.trajectories
    }

    /// Empirical measure of the states at the grid node nearest to `t`.
    pub fn measure_at(&self, t: F) -> Result<EmpiricalMeasure<F>> {
        EmpiricalMeasure::new(self.trajectories.iter().map(|p| p.state_at(t)).collect())
    }

    /// Empirical measure of the terminal states.
    pub fn final_measure(&self) -> Result<EmpiricalMeasure<F>> {
        EmpiricalMeasure::new(self.trajectories.iter().map(|p| p.final_state()).collect())
    }

    /// Total rate warnings across all trajectories.
    pub fn rate_warnings(&self) -> usize {
        self.trajectories.iter().map(|p| p.rate_warnings).sum()
    }

    /// CSV rendering with columns `path,t,x1,x2`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("path,t,x1,x2\n");
        for (id, traj) in self.trajectories.iter().enumerate() {
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let _ = writeln!(out, "{},{},{},{}", id, t, x.x1, x.x2);
            }
        }
        out
    }
}

/// Endpoint of the three-part coupling under one shared environment.
///
/// `eta0` is the immigration-only part started from zero, `gamma0` the
/// branching part from the componentwise minimum of the two initial
/// states, and `gamma1`/`gamma2` the branching parts from the positive and
/// negative parts of their difference. The coupled states are assembled as
/// `sigma1 = eta0 + gamma0 + gamma1` and `sigma2 = eta0 + gamma0 + gamma2`.
#[derive(Clone, Copy, Debug)]
pub struct CoupledSample<F> {
    pub sigma1: Vec2<F>,
    pub sigma2: Vec2<F>,
    pub eta0: Vec2<F>,
    pub gamma0: Vec2<F>,
    pub gamma1: Vec2<F>,
    pub gamma2: Vec2<F>,
}

/// CSV rendering of coupled endpoints with columns
/// `path,sigma1_1,sigma1_2,sigma2_1,sigma2_2`.
pub fn coupled_to_csv<F: Real>(samples: &[CoupledSample<F>]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("path,sigma1_1,sigma1_2,sigma2_1,sigma2_2\n");
    for (id, s) in samples.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            id, s.sigma1.x1, s.sigma1.x2, s.sigma2.x1, s.sigma2.x2
        );
    }
    out
}

fn poisson_count<F: Real>(mean: F, rng: &mut impl rand::Rng) -> u64 {
    let mean = mean.as_f64();
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = rng.sample(Poisson::new(mean).expect("finite positive Poisson mean"));
    draw as u64
}

/// `int_0^t e^{-b u} du` by scaling and squaring: the truncated series at a
/// halved time, then doubled through `K(2s) = (I + e^{-b s}) K(s)`.
fn mat_exp_integral<F: Real>(b: Mat2<F>, t: F) -> Mat2<F> {
    let a = b.scale(-F::one());
    let mut tau = t;
    let mut norm = a.max_abs() * t.abs();
    let mut squarings = 0u32;
    while norm > F::of(0.25) && squarings < 64 {
        tau *= F::of(0.5);
        norm *= F::of(0.5);
        squarings += 1;
    }
    let mut term = Mat2::identity().scale(tau);
    let mut integral = term;
    for k in 1..20 {
        term = a.mul_mat(term).scale(tau / F::of((k + 1) as f64));
        integral = integral.add_mat(term);
    }
    let mut exp = mat_exp(b, tau);
    for _ in 0..squarings {
        integral = Mat2::identity().add_mat(exp).mul_mat(integral);
        exp = exp.mul_mat(exp);
    }
    integral
}

/// Per-cell step operators, shared across cells of equal length.
#[derive(Clone, Copy)]
struct CellOps<F> {
    /// `e^{-b^T dt}`.
    drift: Mat2<F>,
    /// `int_0^dt e^{-b^T u} du`, applied to the immigration drift so the
    /// drift part of the step is the exact flow of `y' = -b^T y + g`.
    imm_kernel: Mat2<F>,
}

impl<F: Real> CellOps<F> {
    fn new(b: Mat2<F>, dt: F) -> Self {
        let bt = b.transpose();
        CellOps {
            drift: mat_exp(bt, dt),
            imm_kernel: mat_exp_integral(bt, dt),
        }
    }
}

/// Advances `y` through one cell of length `dt` with the environment
/// frozen at `xi`.
#[allow(clippy::too_many_arguments)]
fn step_cell<F: Real>(
    y: Vec2<F>,
    xi: F,
    dt: F,
    ops: CellOps<F>,
    mech: &BranchingMechanism<F>,
    imm: &ImmigrationMechanism<F>,
    rng: &mut impl rand::Rng,
    warnings: &mut usize,
) -> Vec2<F> {
    let y_start = y;
    let env_down = (-xi).exp();
    let env_up = xi.exp();
    let zero = F::zero();

    let mut y = ops.drift.mul_vec(y);
    let m = mech.jump_moment_matrix();
    y = y - m.tr_mul_vec(y_start) * dt;
    y += ops.imm_kernel.mul_vec(imm.h) * env_down;
    y = y.pos_part();

    for i in 0..2 {
        let c = mech.c.get(i);
        if c > zero {
            // For phi_i = c lambda^2 the flow of the cumulant equation is
            // u_t = lambda / (1 + c t lambda), so the transition from y is
            // Gamma(N, theta) with theta = c dt and N ~ Poisson(y / theta).
            let theta = env_down * c * dt;
            let yi = y.get(i);
            let renewed = if yi > zero && theta > zero {
                match poisson_count(yi / theta, rng) {
                    0 => zero,
                    n => {
                        let g: f64 = rng.sample(
                            Gamma::new(n as f64, theta.as_f64())
                                .expect("finite positive Gamma parameters"),
                        );
                        F::of(g)
                    }
                }
            } else {
                yi
            };
            y = if i == 0 {
                Vec2::new(renewed, y.x2)
            } else {
                Vec2::new(y.x1, renewed)
            };
        }
    }

    for i in 0..2 {
        let measure = if i == 0 { &mech.m1 } else { &mech.m2 };
        let mass = measure.total_mass();
        if mass > zero && y_start.get(i) > zero {
            let rate = y_start.get(i) * env_up * mass;
            if dt * rate > F::of(0.1) {
                *warnings += 1;
            }
            for _ in 0..poisson_count(rate * dt, rng) {
                y += measure.sample(rng) * env_down;
            }
        }
    }

    let imm_mass = imm.n.total_mass();
    if imm_mass > zero {
        if dt * imm_mass > F::of(0.1) {
            *warnings += 1;
        }
        for _ in 0..poisson_count(imm_mass * dt, rng) {
            y += imm.n.sample(rng) * env_down;
        }
    }

    y
}

/// Simulates one trajectory conditional on a fixed environment path.
pub fn simulate_quenched<F: Real>(
    path: &EnvPath<F>,
    mech: &BranchingMechanism<F>,
    imm: &ImmigrationMechanism<F>,
    x: Vec2<F>,
    t: F,
    rng: &mut impl rand::Rng,
) -> Result<Trajectory<F>> {
    if !x.is_finite() || !x.is_nonnegative() {
        return Err(Error::InvalidInput(format!(
            "initial state must be finite and nonnegative, got ({}, {})",
            x.x1, x.x2
        )));
    }
    let horizon = path.horizon();
    if t < F::zero() || t > horizon * (F::one() + F::of(1e-12)) {
        return Err(Error::InvalidInput(format!(
            "terminal time {t} outside the path horizon [0, {horizon}]"
        )));
    }
    let t = t.min(horizon);
    let dt = path.step();
    let eps = dt * F::of(1e-9);
    let top = path.index_at(t);

    let ops_full = CellOps::new(mech.b, dt);
    let mut warnings = 0usize;
    let mut y = x * (-path.value(0)).exp();
    let mut times = Vec::with_capacity(top + 2);
    let mut states = Vec::with_capacity(top + 2);
    times.push(F::zero());
    states.push(x);

    for k in 0..top {
        y = step_cell(
            y,
            path.value(k),
            dt,
            ops_full,
            mech,
            imm,
            rng,
            &mut warnings,
        );
        times.push(path.time(k + 1));
        states.push(y * path.value(k + 1).exp());
    }
    let top_time = path.time(top);
    if t - top_time > eps {
        let dt_partial = t - top_time;
        let ops_partial = CellOps::new(mech.b, dt_partial);
        y = step_cell(
            y,
            path.value(top),
            dt_partial,
            ops_partial,
            mech,
            imm,
            rng,
            &mut warnings,
        );
        times.push(t);
        states.push(y * path.value(top).exp());
    }

    Ok(Trajectory {
        times,
        states,
        rate_warnings: warnings,
    })
}

/// Simulates an annealed ensemble: a fresh environment path per
/// trajectory, then the quenched dynamics along it. Trajectory `i` uses
/// rng stream `i + 1` of `seed`, so the ensemble is independent of thread
/// scheduling.
pub fn simulate_annealed<F: Real>(
    model: &ModelSpec<F>,
    x: Vec2<F>,
    t: F,
    n_paths: usize,
    dt: F,
    seed: u64,
) -> Result<TrajectorySet<F>> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("need at least one path".into()));
    }
    if !(t > F::zero()) || !(dt > F::zero()) {
        return Err(Error::InvalidInput(format!(
            "need positive t and dt, got t = {t}, dt = {dt}"
        )));
    }
    let dt_eff = dt.min(t);
    let trajectories: Result<Vec<Trajectory<F>>> = (1..=n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i);
            let path = model.env.sample_path(t, dt_eff, &mut rng)?;
            simulate_quenched(&path, &model.branching, &model.immigration, x, t, &mut rng)
        })
        .collect();
    Ok(TrajectorySet {
        trajectories: trajectories?,
    })
}

/// Simulates the three-part coupling of the laws started from `x` and `y`
/// under one shared environment per sample: immigration-only from zero,
/// branching from `x min y`, and branching from each side's surplus.
pub fn simulate_coupled<F: Real>(
    model: &ModelSpec<F>,
    x: Vec2<F>,
    y: Vec2<F>,
    t: F,
    n_paths: usize,
    dt: F,
    seed: u64,
) -> Result<Vec<CoupledSample<F>>> {
    for (name, v) in [("x", x), ("y", y)] {
        if !v.is_finite() || !v.is_nonnegative() {
            return Err(Error::InvalidInput(format!(
                "initial state {name} must be finite and nonnegative"
            )));
        }
    }
    if n_paths == 0 {
        return Err(Error::InvalidInput("need at least one path".into()));
    }
    if !(t > F::zero()) || !(dt > F::zero()) {
        return Err(Error::InvalidInput(format!(
            "need positive t and dt, got t = {t}, dt = {dt}"
        )));
    }
    let dt_eff = dt.min(t);
    let no_imm = ImmigrationMechanism::none();
    let floor = x.min(y);
    let up = (x - y).pos_part();
    let down = (x - y).neg_part();
    let samples: Result<Vec<CoupledSample<F>>> = (1..=n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i);
            let path = model.env.sample_path(t, dt_eff, &mut rng)?;
            let mech = &model.branching;
            let eta0 =
                simulate_quenched(&path, mech, &model.immigration, Vec2::zero(), t, &mut rng)?
                    .final_state();
            let gamma0 = simulate_quenched(&path, mech, &no_imm, floor, t, &mut rng)?.final_state();
            let gamma1 = simulate_quenched(&path, mech, &no_imm, up, t, &mut rng)?.final_state();
            let gamma2 = simulate_quenched(&path, mech, &no_imm, down, t, &mut rng)?.final_state();
            Ok(CoupledSample {
                sigma1: eta0 + gamma0 + gamma1,
                sigma2: eta0 + gamma0 + gamma2,
                eta0,
                gamma0,
                gamma1,
                gamma2,
            })
        })
        .collect();
    samples
}

/// Stationary sampling output.
#[derive(Clone, Debug)]
pub struct StationarySample<F> {
    pub measure: EmpiricalMeasure<F>,
    /// Set when the burn-in looks too short against the decay rate.
    pub burn_in_warning: Option<String>,
    pub rate_warnings: usize,
}

/// Collects approximately stationary states from one long annealed
/// trajectory started at `x0`: after `burn_in` time units, a state is
/// recorded every `thinning` units (snapped to the simulation grid). The
/// environment path uses rng stream 0 of `seed` and the dynamics stream 1.
pub fn sample_stationary<F: Real>(
    model: &ModelSpec<F>,
    x0: Vec2<F>,
    burn_in: F,
    n_samples: usize,
    thinning: F,
    dt: F,
    seed: u64,
) -> Result<StationarySample<F>> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    if !(thinning > F::zero()) || !(dt > F::zero()) || burn_in < F::zero() {
        return Err(Error::InvalidInput(format!(
            "need thinning > 0, dt > 0, burn_in >= 0, got {thinning}, {dt}, {burn_in}"
        )));
    }
    if !x0.is_finite() || !x0.is_nonnegative() {
        return Err(Error::InvalidInput(
            "initial state must be finite and nonnegative".into(),
        ));
    }

    let burn_in_warning = match crate::moments::spectral_of(model) {
        Ok(s) if s.rho > F::zero() => {
            let recommended = F::of(5.0) / s.rho;
            (burn_in < recommended).then(|| {
                format!(
                    "burn-in {} below recommended 5/rho = {}",
                    burn_in, recommended
                )
            })
        }
        Ok(_) => Some("decay rate is not positive; no stationary law is guaranteed".into()),
        Err(_) => Some("spectral discriminant not positive; burn-in heuristic unavailable".into()),
    };

    let horizon = burn_in + thinning * F::of(n_samples as f64);
    let mut env_rng = crate::rng::stream(seed, 0);
    let path = model.env.sample_path(horizon, dt, &mut env_rng)?;
    let step = path.step();
    let cells = path.cells();

    let mut sample_nodes: Vec<usize> = (1..=n_samples)
        .map(|j| {
            let target = (burn_in + thinning * F::of(j as f64)) / step;
            (target.round().as_f64() as usize).min(cells)
        })
        .collect();
    sample_nodes.dedup();
    if sample_nodes.len() != n_samples {
        return Err(Error::InvalidInput(format!(
            "thinning {} below the grid step {} collapses samples",
            thinning, step
        )));
    }

    let ops = CellOps::new(model.branching.b, step);
    let mut rng = crate::rng::stream(seed, 1);
    let mut warnings = 0usize;
    let mut y = x0 * (-path.value(0)).exp();
    let mut states = Vec::with_capacity(n_samples);
    let mut next = 0usize;
    for k in 0..cells {
        y = step_cell(
            y,
            path.value(k),
            step,
            ops,
            &model.branching,
            &model.immigration,
            &mut rng,
            &mut warnings,
        );
        if next < sample_nodes.len() && k + 1 == sample_nodes[next] {
            states.push(y * path.value(k + 1).exp());
            next += 1;
        }
    }

    Ok(StationarySample {
        measure: EmpiricalMeasure::new(states)?,
        burn_in_warning,
        rate_warnings: warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_env::{EnvJump, EnvSpec};
    use crate::mechanisms::{Atom, JumpMeasure};
    use crate::moments::{mean_total_mass, spectral_of};
    use crate::stats::McEstimate;
    use approx::assert_relative_eq;

    fn no_imm() -> ImmigrationMechanism<f64> {
        ImmigrationMechanism::none()
    }

    fn atom_measure(p1: f64, p2: f64, w: f64) -> JumpMeasure<f64> {
        JumpMeasure::new(
            vec![Atom {
                point: Vec2::new(p1, p2),
                weight: w,
            }],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn frozen_dynamics_keep_the_state() {
        let path = EnvPath::zero(0.1, 10).unwrap();
        let mech = BranchingMechanism::linear(Mat2::zero());
        let x = Vec2::new(1.0, 2.0);
        let mut rng = crate::rng::stream(1, 1);
        let traj = simulate_quenched(&path, &mech, &no_imm(), x, 1.0, &mut rng).unwrap();
        assert_eq!(traj.times().len(), 11);
        for s in traj.states() {
            assert_eq!(*s, x);
        }
        assert_eq!(traj.rate_warnings(), 0);
    }

    #[test]
    fn linear_ode_is_exact_per_step() {
        let path = EnvPath::zero(0.1, 10).unwrap();
        let mech = BranchingMechanism::linear(Mat2::identity());
        let x = Vec2::new(2.0, 4.0);
        let mut rng = crate::rng::stream(2, 1);
        let traj = simulate_quenched(&path, &mech, &no_imm(), x, 1.0, &mut rng).unwrap();
        let e = (-1.0f64).exp();
        let last = traj.final_state();
        assert_relative_eq!(last.x1, 2.0 * e, max_relative = 1e-12);
        assert_relative_eq!(last.x2, 4.0 * e, max_relative = 1e-12);
    }

    #[test]
    fn environment_rescales_linear_flow() {
        // Deterministic drift 0.5: X(t) = e^{0.5 t} e^{-t} x.
        let env = EnvSpec::new(0.5, 0.0, vec![]).unwrap();
        let mut rng = crate::rng::stream(3, 1);
        let path = env.sample_path(1.0, 0.01, &mut rng).unwrap();
        let mech = BranchingMechanism::linear(Mat2::identity());
        let x = Vec2::new(1.0, 3.0);
        let traj = simulate_quenched(&path, &mech, &no_imm(), x, 1.0, &mut rng).unwrap();
        let factor = (0.5f64 - 1.0).exp();
        assert_relative_eq!(traj.final_state().x1, factor, max_relative = 1e-10);
        assert_relative_eq!(traj.final_state().x2, 3.0 * factor, max_relative = 1e-10);
        assert_eq!(traj.initial_state(), x);
    }

    #[test]
    fn annealed_mean_matches_exact_first_moment() {
        let mech = BranchingMechanism::new(
            Mat2::new(2.0, -0.5, -0.5, 3.0),
            Vec2::new(1.0, 1.0),
            atom_measure(0.5, 0.1, 0.2),
            atom_measure(0.1, 0.4, 0.2),
        )
        .unwrap();
        let imm = ImmigrationMechanism::new(Vec2::new(0.5, 0.25), JumpMeasure::zero()).unwrap();
        let env = EnvSpec::new(-0.3, 0.3, vec![]).unwrap();
        let model = ModelSpec::new(mech, imm, env, None);
        let x = Vec2::new(1.0, 1.0);
        let t = 1.0;
        let set = simulate_annealed(&model, x, t, 10_000, 0.01, 321).unwrap();
        let totals: Vec<f64> = set
            .trajectories()
            .iter()
            .map(|p| p.final_state().sum())
            .collect();
        let est = McEstimate::from_values(&totals);
        let exact = mean_total_mass(
            model.branching.b,
            model.env.beta(),
            &model.immigration,
            x,
            t,
        );
        assert!(
            (est.mean - exact).abs() <= 3.0 * est.std_error,
            "mean {} +- {} vs exact {exact}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn annealed_laplace_agrees_with_cumulant_solver() {
        let mech = BranchingMechanism::new(
            Mat2::new(1.5, -0.5, -0.25, 2.0),
            Vec2::new(0.5, 0.75),
            atom_measure(0.3, 0.1, 0.4),
            JumpMeasure::zero(),
        )
        .unwrap();
        let imm =
            ImmigrationMechanism::new(Vec2::new(0.3, 0.2), atom_measure(0.2, 0.3, 0.5)).unwrap();
        let env = EnvSpec::new(
            -0.2,
            0.4,
            vec![EnvJump {
                size: -0.3,
                rate: 0.5,
            }],
        )
        .unwrap();
        let model = ModelSpec::new(mech, imm, env, None);
        let x = Vec2::new(1.0, 0.5);
        let t = 1.0;
        let n = 4000;
        let set = simulate_annealed(&model, x, t, n, 0.01, 808).unwrap();
        for lambda in [
            Vec2::new(0.5, 0.5),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 1.0),
        ] {
            let values: Vec<f64> = set
                .trajectories()
                .iter()
                .map(|p| (-lambda.dot(p.final_state())).exp())
                .collect();
            let empirical = McEstimate::from_values(&values);
            let solver =
                crate::cumulant::annealed_laplace(&model, x, lambda, t, n, 0.01, 809).unwrap();
            let combined = (empirical.std_error.powi(2) + solver.std_error.powi(2)).sqrt();
            assert!(
                (empirical.mean - solver.mean).abs() <= 3.0 * combined,
                "lambda ({}, {}): simulated {} +- {} vs solver {} +- {}",
                lambda.x1,
                lambda.x2,
                empirical.mean,
                empirical.std_error,
                solver.mean,
                solver.std_error
            );
        }
    }

    #[test]
    fn coupling_is_exact_for_equal_starts() {
        let mech = BranchingMechanism::new(
            Mat2::new(1.0, -0.25, -0.25, 1.0),
            Vec2::new(0.5, 0.5),
            atom_measure(0.4, 0.2, 0.3),
            JumpMeasure::zero(),
        )
        .unwrap();
        let imm = ImmigrationMechanism::new(Vec2::new(0.2, 0.2), JumpMeasure::zero()).unwrap();
        let env = EnvSpec::new(-0.1, 0.2, vec![]).unwrap();
        let model = ModelSpec::new(mech, imm, env, None);
        let x = Vec2::new(1.0, 0.5);
        let samples = simulate_coupled(&model, x, x, 1.0, 50, 0.02, 99).unwrap();
        for s in samples {
            assert_eq!(s.sigma1, s.sigma2);
            assert_eq!(s.gamma1, Vec2::zero());
            assert_eq!(s.gamma2, Vec2::zero());
        }
    }

    #[test]
    fn coupling_gap_is_constant_for_frozen_dynamics() {
        let mech = BranchingMechanism::linear(Mat2::zero());
        let model = ModelSpec::new(mech, no_imm(), EnvSpec::still(), None);
        let x = Vec2::new(1.0, 1.0);
        let y = Vec2::new(2.0, 3.0);
        let samples = simulate_coupled(&model, x, y, 1.0, 20, 0.05, 7).unwrap();
        for s in &samples {
            assert_eq!((s.sigma1 - s.sigma2).l1(), 3.0);
            assert_eq!(s.sigma1, x);
            assert_eq!(s.sigma2, y);
        }
    }

    #[test]
    fn coupling_marginal_matches_annealed_ensemble() {
        let mech = BranchingMechanism::new(
            Mat2::new(1.5, -0.5, -0.5, 1.5),
            Vec2::new(0.5, 0.5),
            JumpMeasure::zero(),
            JumpMeasure::zero(),
        )
        .unwrap();
        let imm = ImmigrationMechanism::new(Vec2::new(0.3, 0.3), JumpMeasure::zero()).unwrap();
        let env = EnvSpec::new(-0.2, 0.3, vec![]).unwrap();
        let model = ModelSpec::new(mech, imm, env, None);
        let x = Vec2::new(2.0, 1.0);
        let y = Vec2::new(1.0, 2.0);
        let t = 1.0;
        let n = 4000;
        let coupled = simulate_coupled(&model, x, y, t, n, 0.01, 515).unwrap();
        let sigma1_total: Vec<f64> = coupled.iter().map(|s| s.sigma1.sum()).collect();
        let marginal = McEstimate::from_values(&sigma1_total);
        let direct = simulate_annealed(&model, x, t, n, 0.01, 516).unwrap();
        let totals: Vec<f64> = direct
            .trajectories()
            .iter()
            .map(|p| p.final_state().sum())
            .collect();
        let annealed = McEstimate::from_values(&totals);
        let combined = (marginal.std_error.powi(2) + annealed.std_error.powi(2)).sqrt();
        assert!(
            (marginal.mean - annealed.mean).abs() <= 3.0 * combined,
            "coupled {} +- {} vs annealed {} +- {}",
            marginal.mean,
            marginal.std_error,
            annealed.mean,
            annealed.std_error
        );
    }

    #[test]
    fn coupling_gap_shrinks_in_time() {
        let mech = BranchingMechanism::new(
            Mat2::new(2.0, -1.0, -1.0, 2.0),
            Vec2::new(0.25, 0.25),
            JumpMeasure::zero(),
            JumpMeasure::zero(),
        )
        .unwrap();
        let imm = ImmigrationMechanism::new(Vec2::new(0.3, 0.3), JumpMeasure::zero()).unwrap();
        let env = EnvSpec::new(-0.5, 0.0, vec![]).unwrap();
        let model = ModelSpec::new(mech, imm, env, None);
        let x = Vec2::new(2.0, 1.0);
        let y = Vec2::new(1.0, 1.0);
        let early = simulate_coupled(&model, x, y, 0.5, 2000, 0.01, 77).unwrap();
        let late = simulate_coupled(&model, x, y, 2.0, 2000, 0.01, 78).unwrap();
        let e: McEstimate<f64> = crate::transport::coupling_cost(&early).unwrap();
        let l = crate::transport::coupling_cost(&late).unwrap();
        let slack = 3.0 * (e.std_error.powi(2) + l.std_error.powi(2)).sqrt();
        assert!(
            l.mean <= e.mean + slack,
            "late {} vs early {}",
            l.mean,
            e.mean
        );
    }

    #[test]
    fn stationary_extinction_without_immigration() {
        let mech = BranchingMechanism::new(
            Mat2::diagonal(1.0, 2.0),
            Vec2::new(1.0, 1.0),
            JumpMeasure::zero(),
            JumpMeasure::zero(),
        )
        .unwrap();
        let model = ModelSpec::new(
            mech,
            no_imm(),
            EnvSpec::new(0.0, 0.2, vec![]).unwrap(),
            None,
        );
        let rho = spectral_of(&model).unwrap().rho;
        assert_relative_eq!(rho, 0.98, max_relative = 1e-12);
        let x0 = Vec2::new(1.0, 1.0);
        let out = sample_stationary(&model, x0, 6.0, 50, 0.5, 0.01, 44).unwrap();
        assert!(out.burn_in_warning.is_none());
        let totals: Vec<f64> = out.measure.points().iter().map(|p| p.l1()).collect();
        let est = McEstimate::from_values(&totals);
        let bound = (-rho * 6.0f64).exp() * x0.l1() + 3.0 * est.std_error + 1e-3;
        assert!(est.mean <= bound, "mean {} above bound {bound}", est.mean);
    }

    #[test]
    fn stationary_mean_matches_moment_limit_for_deterministic_model() {
        // Noise-free model: the chain is a deterministic recursion whose
        // drift part is the exact flow, so the fixed point is (b^T)^{-1} h.
        let mech = BranchingMechanism::linear(Mat2::diagonal(1.0, 2.0));
        let imm = ImmigrationMechanism::new(Vec2::new(1.0, 0.5), JumpMeasure::zero()).unwrap();
        let model = ModelSpec::new(mech, imm, EnvSpec::still(), None);
        let out = sample_stationary(&model, Vec2::zero(), 12.0, 20, 0.5, 0.01, 5).unwrap();
        let mean = out.measure.mean();
        let limit = mean_total_mass(
            model.branching.b,
            0.0,
            &model.immigration,
            Vec2::zero(),
            30.0,
        );
        assert_relative_eq!(mean.sum(), limit, epsilon = 1e-4);
        assert_relative_eq!(mean.x1, 1.0, epsilon = 1e-5);
        assert_relative_eq!(mean.x2, 0.25, epsilon = 1e-5);
    }

    #[test]
    fn stationary_chains_with_disjoint_seeds_agree() {
        let mech = BranchingMechanism::new(
            Mat2::diagonal(1.0, 2.0),
            Vec2::new(0.5, 0.5),
            JumpMeasure::zero(),
            JumpMeasure::zero(),
        )
        .unwrap();
        let imm = ImmigrationMechanism::new(Vec2::new(0.5, 0.5), JumpMeasure::zero()).unwrap();
        let env = EnvSpec::new(-0.2, 0.2, vec![]).unwrap();
        let model = ModelSpec::new(mech, imm, env, None);
        let a = sample_stationary(&model, Vec2::zero(), 6.0, 300, 0.7, 0.01, 10).unwrap();
        let b = sample_stationary(&model, Vec2::zero(), 6.0, 300, 0.7, 0.01, 11).unwrap();
        let ta: Vec<f64> = a.measure.points().iter().map(|p| p.sum()).collect();
        let tb: Vec<f64> = b.measure.points().iter().map(|p| p.sum()).collect();
        let ea = McEstimate::from_values(&ta);
        let eb = McEstimate::from_values(&tb);
        // Thinned chain samples are correlated, so standard errors
        // underestimate; allow a generous factor.
        let slack = 6.0 * (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt();
        assert!(
            (ea.mean - eb.mean).abs() <= slack,
            "{} vs {}",
            ea.mean,
            eb.mean
        );
    }

    #[test]
    fn burn_in_warning_fires_when_too_short() {
        let mech = BranchingMechanism::new(
            Mat2::diagonal(1.0, 2.0),
            Vec2::new(0.5, 0.5),
            JumpMeasure::zero(),
            JumpMeasure::zero(),
        )
        .unwrap();
        let model = ModelSpec::new(mech, no_imm(), EnvSpec::still(), None);
        let out = sample_stationary(&model, Vec2::zero(), 0.5, 5, 0.5, 0.01, 1).unwrap();
        assert!(out.burn_in_warning.is_some());
    }

    #[test]
    fn seeded_runs_reproduce_exactly() {
        let mech = BranchingMechanism::new(
            Mat2::new(1.0, -0.5, -0.5, 1.0),
            Vec2::new(0.5, 0.5),
            atom_measure(0.3, 0.3, 0.5),
            JumpMeasure::zero(),
        )
        .unwrap();
        let imm =
            ImmigrationMechanism::new(Vec2::new(0.2, 0.1), atom_measure(0.1, 0.2, 0.4)).unwrap();
        let env = EnvSpec::new(
            -0.1,
            0.3,
            vec![EnvJump {
                size: 0.4,
                rate: 0.6,
            }],
        )
        .unwrap();
        let model = ModelSpec::new(mech, imm, env, None);
        let x = Vec2::new(1.0, 1.0);
        let a = simulate_annealed(&model, x, 0.5, 40, 0.02, 2718).unwrap();
        let b = simulate_annealed(&model, x, 0.5, 40, 0.02, 2718).unwrap();
        for (p, q) in a.trajectories().iter().zip(b.trajectories()) {
            assert_eq!(p.states(), q.states());
        }
        let c = simulate_annealed(&model, x, 0.5, 40, 0.02, 2719).unwrap();
        assert_ne!(
            a.trajectories()[0].final_state(),
            c.trajectories()[0].final_state()
        );
    }

    #[test]
    fn states_stay_nonnegative_under_stress() {
        let mech = BranchingMechanism::new(
            Mat2::new(2.0, -1.0, -1.0, 2.0),
            Vec2::new(2.0, 2.0),
            atom_measure(1.0, 0.5, 1.0),
            atom_measure(0.5, 1.0, 1.0),
        )
        .unwrap();
        let imm = ImmigrationMechanism::new(Vec2::new(0.5, 0.5), JumpMeasure::zero()).unwrap();
        let env = EnvSpec::new(
            -0.5,
            1.0,
            vec![EnvJump {
                size: -1.5,
                rate: 1.0,
            }],
        )
        .unwrap();
        let model = ModelSpec::new(mech, imm, env, None);
        let set = simulate_annealed(&model, Vec2::new(0.2, 0.0), 2.0, 100, 0.01, 31).unwrap();
        for traj in set.trajectories() {
            for s in traj.states() {
                assert!(s.is_nonnegative(), "negative state {s:?}");
            }
        }
    }

    #[test]
    fn rate_warning_counter_fires() {
        let mech = BranchingMechanism::new(
            Mat2::new(1.0, 0.0, 0.0, 1.0),
            Vec2::zero(),
            JumpMeasure::new(
                vec![Atom {
                    point: Vec2::new(0.01, 0.0),
                    weight: 50.0,
                }],
                vec![],
            )
            .unwrap(),
            JumpMeasure::zero(),
        )
        .unwrap();
        let path = EnvPath::zero(0.1, 10).unwrap();
        let mut rng = crate::rng::stream(6, 1);
        let traj =
            simulate_quenched(&path, &mech, &no_imm(), Vec2::new(1.0, 0.0), 1.0, &mut rng).unwrap();
        assert!(traj.rate_warnings() > 0);
    }

    #[test]
    fn csv_formats() {
        let mech = BranchingMechanism::linear(Mat2::identity());
        let model = ModelSpec::new(mech, no_imm(), EnvSpec::still(), None);
        let set = simulate_annealed(&model, Vec2::new(1.0, 0.0), 0.2, 2, 0.1, 1).unwrap();
        let csv = set.to_csv();
        assert!(csv.starts_with("path,t,x1,x2\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 3);

        let samples =
            simulate_coupled(&model, Vec2::new(1.0, 0.0), Vec2::zero(), 0.2, 2, 0.1, 1).unwrap();
        let csv = coupled_to_csv(&samples);
        assert!(csv.starts_with("path,sigma1_1,sigma1_2,sigma2_1,sigma2_2\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn measure_extraction_at_interior_times() {
        let mech = BranchingMechanism::linear(Mat2::identity());
        let model = ModelSpec::new(mech, no_imm(), EnvSpec::still(), None);
        let set = simulate_annealed(&model, Vec2::new(1.0, 0.0), 1.0, 3, 0.25, 1).unwrap();
        let m = set.measure_at(0.5).unwrap();
        assert_eq!(m.len(), 3);
        let expected = (-0.5f64).exp();
        for p in m.points() {
            assert_relative_eq!(p.x1, expected, max_relative = 1e-12);
        }
        assert_eq!(set.final_measure().unwrap().len(), 3);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let mech = BranchingMechanism::linear(Mat2::identity());
        let model = ModelSpec::new(mech.clone(), no_imm(), EnvSpec::still(), None);
        let path = EnvPath::zero(0.1, 10).unwrap();
        let mut rng = crate::rng::stream(1, 1);
        assert!(
            simulate_quenched(&path, &mech, &no_imm(), Vec2::new(-1.0, 0.0), 1.0, &mut rng)
                .is_err()
        );
        assert!(simulate_quenched(&path, &mech, &no_imm(), Vec2::zero(), 2.0, &mut rng).is_err());
        assert!(simulate_annealed(&model, Vec2::zero(), 0.0, 10, 0.01, 1).is_err());
        assert!(simulate_coupled(&model, Vec2::zero(), Vec2::zero(), 1.0, 0, 0.01, 1).is_err());
        assert!(sample_stationary(&model, Vec2::zero(), -1.0, 10, 0.5, 0.01, 1).is_err());
        assert!(sample_stationary(&model, Vec2::zero(), 1.0, 10, 0.001, 0.01, 1).is_err());
    }
}
