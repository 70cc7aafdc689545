//! Branching and immigration mechanisms.
//!
//! A two-type branching mechanism is the pair `phi = (phi_1, phi_2)` with
//!
//! ```text
//! phi_i(l) = b_i1 l_1 + b_i2 l_2 + c_i l_i^2
//!            + integral (e^{-<l,z>} - 1 + <l,z>) m_i(dz),
//! ```
//!
//! where `b` mixes the types linearly, `c_i >= 0` scales the continuous
//! branching fluctuation, and `m_i` is a finite measure on the nonnegative
//! quadrant describing reproduction jumps. Immigration enters through
//!
//! ```text
//! psi(l) = <h, l> + integral (1 - e^{-<l,z>}) n(dz).
//! ```
//!
//! Jump measures are finite-activity by construction: a list of weighted
//! atoms plus product-exponential components, so every integral used by the
//! solvers has a closed form evaluated here.

use rand::RngExt;
use rand_distr::Exp1;

use crate::linalg::{Mat2, Vec2};
use crate::scalar::Real;
use crate::{Error, Result};

/// Weighted point mass of a jump measure.
#[derive(Clone, Copy, Debug)]
pub struct Atom<F> {
    pub point: Vec2<F>,
    pub weight: F,
}

/// Product-exponential component with density
/// `mass * r_1 r_2 * e^{-r_1 z_1 - r_2 z_2}` on the open quadrant.
#[derive(Clone, Copy, Debug)]
pub struct ExpComponent<F> {
    pub rates: Vec2<F>,
    pub mass: F,
}

/// Finite measure on the nonnegative quadrant minus the origin, stored as
/// atoms plus product-exponential components.
#[derive(Clone, Debug, Default)]
pub struct JumpMeasure<F> {
    atoms: Vec<Atom<F>>,
    exp_components: Vec<ExpComponent<F>>,
}

impl<F: Real> JumpMeasure<F> {
    /// Builds a measure, rejecting non-finite data, negative weights,
    /// points outside the quadrant, the origin atom, and nonpositive rates.
    pub fn new(atoms: Vec<Atom<F>>, exp_components: Vec<ExpComponent<F>>) -> Result<Self> {
        for a in &atoms {
            if !a.point.is_finite() || !a.weight.is_finite() {
                return Err(Error::InvalidInput("jump atom must be finite".into()));
            }
            if a.weight < F::zero() {
                return Err(Error::InvalidInput(format!(
                    "jump atom weight must be nonnegative, got {}",
                    a.weight
                )));
            }
            if !a.point.is_nonnegative() {
                return Err(Error::InvalidInput(format!(
                    "jump atom must lie in the nonnegative quadrant, got ({}, {})",
                    a.point.x1, a.point.x2
                )));
            }
            if a.point.x1 == F::zero() && a.point.x2 == F::zero() {
                return Err(Error::InvalidInput(
                    "jump atom at the origin carries no jump".into(),
                ));
            }
        }
        for e in &exp_components {
            if !e.rates.is_finite() || !e.mass.is_finite() {
                return Err(Error::InvalidInput(
                    "exponential component must be finite".into(),
                ));
            }
            if e.mass < F::zero() {
                return Err(Error::InvalidInput(format!(
                    "exponential component mass must be nonnegative, got {}",
                    e.mass
                )));
            }
            if e.rates.x1 <= F::zero() || e.rates.x2 <= F::zero() {
                return Err(Error::InvalidInput(format!(
                    "exponential component rates must be positive, got ({}, {})",
                    e.rates.x1, e.rates.x2
                )));
            }
        }
        Ok(Self {
            atoms,
            exp_components,
        })
    }

    /// The zero measure.
    pub fn zero() -> Self {
        Self {
            atoms: Vec::new(),
            exp_components: Vec::new(),
        }
    }

    pub fn atoms(&self) -> &[Atom<F>] {
        &self.atoms
    }

    pub fn exp_components(&self) -> &[ExpComponent<F>] {
        &self.exp_components
    }

    pub fn is_zero(&self) -> bool {
        self.total_mass() == F::zero()
    }

    /// Total mass of the measure.
    pub fn total_mass(&self) -> F {
        let atoms = self.atoms.iter().map(|a| a.weight).sum::<F>();
        let exps = self.exp_components.iter().map(|e| e.mass).sum::<F>();
        atoms + exps
    }

    /// First moment vector `integral z dm`.
    pub fn first_moment(&self) -> Vec2<F> {
        let mut m = Vec2::zero();
        for a in &self.atoms {
            m += a.point * a.weight;
        }
        for e in &self.exp_components {
            m += Vec2::new(e.mass / e.rates.x1, e.mass / e.rates.x2);
        }
        m
    }

    /// Compensated integral `integral (e^{-<l,z>} - 1 + <l,z>) dm` for
    /// `l` in the nonnegative quadrant.
    ///
    /// Atoms use `expm1`; exponential components use the cancellation-free
    /// rational form, so small arguments keep full relative accuracy.
    pub fn compensated_integral(&self, l: Vec2<F>) -> F {
        debug_assert!(l.is_nonnegative(), "Laplace argument must be nonnegative");
        let mut total = F::zero();
        for a in &self.atoms {
            let s = l.dot(a.point);
            total += a.weight * ((-s).exp_m1() + s);
        }
        for e in &self.exp_components {
            // With S = r2 l1 + r1 l2 and Q = l1 l2:
            //   p - 1 + l1/r1 + l2/r2 = (S(S + Q) - r1 r2 Q) / (r1 r2 D),
            // where p = r1 r2 / D and D = (r1 + l1)(r2 + l2). The numerator
            // expands to r2^2 l1^2 + r1^2 l2^2 + r1 r2 l1 l2 + S Q >= 0.
            let (r1, r2) = (e.rates.x1, e.rates.x2);
            let s = r2 * l.x1 + r1 * l.x2;
            let q = l.x1 * l.x2;
            let d = (r1 + l.x1) * (r2 + l.x2);
            total += e.mass * (s * (s + q) - r1 * r2 * q) / (r1 * r2 * d);
        }
        total
    }

    /// Marginal compensated integral
    /// `integral (e^{-x z_i} - 1 + x z_i) dm` for the 0-based type `i`.
    pub fn marginal_compensated_integral(&self, i: usize, x: F) -> F {
        debug_assert!(x >= F::zero(), "Laplace argument must be nonnegative");
        let mut total = F::zero();
        for a in &self.atoms {
            let s = x * a.point.get(i);
            total += a.weight * ((-s).exp_m1() + s);
        }
        for e in &self.exp_components {
            // r/(r+x) - 1 + x/r simplifies to x^2 / (r (r + x)).
            let r = e.rates.get(i);
            total += e.mass * x * x / (r * (r + x));
        }
        total
    }

    /// Immigration-style integral `integral (1 - e^{-<l,z>}) dm`.
    pub fn immigration_integral(&self, l: Vec2<F>) -> F {
        debug_assert!(l.is_nonnegative(), "Laplace argument must be nonnegative");
        let mut total = F::zero();
        for a in &self.atoms {
            let s = l.dot(a.point);
            total += a.weight * (-(-s).exp_m1());
        }
        for e in &self.exp_components {
            // 1 - p = (S + Q) / D with the notation of compensated_integral.
            let (r1, r2) = (e.rates.x1, e.rates.x2);
            let s = r2 * l.x1 + r1 * l.x2;
            let q = l.x1 * l.x2;
            let d = (r1 + l.x1) * (r2 + l.x2);
            total += e.mass * (s + q) / d;
        }
        total
    }

    /// Draws a jump from the normalised measure. Requires positive total
    /// mass; callers gate on [`JumpMeasure::total_mass`].
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec2<F> {
        let total = self.total_mass();
        debug_assert!(total > F::zero(), "cannot sample the zero measure");
        let mut pick = F::of(rng.random::<f64>()) * total;
        for a in &self.atoms {
            if pick < a.weight {
                return a.point;
            }
            pick -= a.weight;
        }
        for e in &self.exp_components {
            if pick < e.mass {
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                return Vec2::new(F::of(e1) / e.rates.x1, F::of(e2) / e.rates.x2);
            }
            pick -= e.mass;
        }
        // Rounding pushed the pick past the last component; reuse it.
        if let Some(e) = self.exp_components.last() {
            let e1: f64 = rng.sample(Exp1);
            let e2: f64 = rng.sample(Exp1);
            return Vec2::new(F::of(e1) / e.rates.x1, F::of(e2) / e.rates.x2);
        }
        self.atoms
            .last()
            .expect("nonzero measure has a component")
            .point
    }
}

/// Two-type branching mechanism `(b, c, m_1, m_2)`.
#[derive(Clone, Debug)]
pub struct BranchingMechanism<F> {
    pub b: Mat2<F>,
    pub c: Vec2<F>,
    pub m1: JumpMeasure<F>,
    pub m2: JumpMeasure<F>,
}

impl<F: Real> BranchingMechanism<F> {
    /// Builds a mechanism from finite data. Sign conditions are left to
    /// [`crate::config::validate`], which reports instead of refusing, so
    /// out-of-regime parameter studies stay expressible.
    pub fn new(b: Mat2<F>, c: Vec2<F>, m1: JumpMeasure<F>, m2: JumpMeasure<F>) -> Result<Self> {
        if !b.is_finite() || !c.is_finite() {
            return Err(Error::InvalidInput(
                "branching mechanism entries must be finite".into(),
            ));
        }
        Ok(Self { b, c, m1, m2 })
    }

    /// Purely linear mechanism, handy in tests and closed-form checks.
    pub fn linear(b: Mat2<F>) -> Self {
        Self {
            b,
            c: Vec2::zero(),
            m1: JumpMeasure::zero(),
            m2: JumpMeasure::zero(),
        }
    }

    fn measure(&self, i: usize) -> &JumpMeasure<F> {
        match i {
            0 => &self.m1,
            1 => &self.m2,
            _ => panic!("type index out of range: {i}"),
        }
    }

    /// Evaluates `(phi_1(l), phi_2(l))` for `l` in the nonnegative quadrant.
    pub fn phi(&self, l: Vec2<F>) -> Vec2<F> {
        let linear = self.b.mul_vec(l);
        Vec2::new(
            linear.x1 + self.c.x1 * l.x1 * l.x1 + self.m1.compensated_integral(l),
            linear.x2 + self.c.x2 * l.x2 * l.x2 + self.m2.compensated_integral(l),
        )
    }

    /// Evaluates the marginal-kernel variant: the jump integral of type `i`
    /// only sees `z_i l_i` in the exponent, which lowers each component, so
    /// this mechanism dominates from below: `phi_tilde <= phi` pointwise.
    pub fn phi_tilde(&self, l: Vec2<F>) -> Vec2<F> {
        let linear = self.b.mul_vec(l);
        Vec2::new(
            linear.x1 + self.c.x1 * l.x1 * l.x1 + self.m1.marginal_compensated_integral(0, l.x1),
            linear.x2 + self.c.x2 * l.x2 * l.x2 + self.m2.marginal_compensated_integral(1, l.x2),
        )
    }

    /// Diagonal restriction `phi_star_i(x) = phi_tilde_i(x, x)`:
    /// row sum of `b` times `x`, plus `c_i x^2`, plus the marginal integral.
    pub fn phi_star(&self, i: usize, x: F) -> F {
        let row = match i {
            0 => self.b.a11 + self.b.a12,
            1 => self.b.a21 + self.b.a22,
            _ => panic!("type index out of range: {i}"),
        };
        let ci = self.c.get(i);
        row * x + ci * x * x + self.measure(i).marginal_compensated_integral(i, x)
    }

    /// Cross-interaction gaps `(b12 + integral z_2 m_1, b21 + integral z_1 m_2)`;
    /// both must be nonpositive for the mechanism to be admissible.
    pub fn admissibility_gaps(&self) -> Vec2<F> {
        Vec2::new(
            self.b.a12 + self.m1.first_moment().x2,
            self.b.a21 + self.m2.first_moment().x1,
        )
    }

    /// Matrix of jump first moments, row `i` holding `integral z m_i(dz)`.
    /// The simulator uses its transpose as the jump compensation drift.
    pub fn jump_moment_matrix(&self) -> Mat2<F> {
        let r1 = self.m1.first_moment();
        let r2 = self.m2.first_moment();
        Mat2::new(r1.x1, r1.x2, r2.x1, r2.x2)
    }
}

/// Immigration mechanism `(h, n)`.
#[derive(Clone, Debug)]
pub struct ImmigrationMechanism<F> {
    pub h: Vec2<F>,
    pub n: JumpMeasure<F>,
}

impl<F: Real> ImmigrationMechanism<F> {
    pub fn new(h: Vec2<F>, n: JumpMeasure<F>) -> Result<Self> {
        if !h.is_finite() {
            return Err(Error::InvalidInput(
                "immigration drift must be finite".into(),
            ));
        }
        Ok(Self { h, n })
    }

    /// No immigration at all.
    pub fn none() -> Self {
        Self {
            h: Vec2::zero(),
            n: JumpMeasure::zero(),
        }
    }

    pub fn is_none(&self) -> bool {
        self.h == Vec2::zero() && self.n.is_zero()
    }

    /// Evaluates `psi(l)` for `l` in the nonnegative quadrant.
    pub fn psi(&self, l: Vec2<F>) -> F {
        self.h.dot(l) + self.n.immigration_integral(l)
    }
}

/// Single-type branching mechanism used as a dominating envelope:
/// `varphi(x) = b0 x + c0 x^2 + sum_k w_k (e^{-x s_k} - 1 + x s_k)`.
#[derive(Clone, Debug)]
pub struct ScalarMechanism<F> {
    pub b0: F,
    pub c0: F,
    /// Jump atoms `(size, weight)` with positive sizes and weights.
    pub atoms: Vec<(F, F)>,
}

impl<F: Real> ScalarMechanism<F> {
    pub fn new(b0: F, c0: F, atoms: Vec<(F, F)>) -> Result<Self> {
        if !b0.is_finite() || !c0.is_finite() {
            return Err(Error::InvalidInput(
                "scalar mechanism coefficients must be finite".into(),
            ));
        }
        for &(s, w) in &atoms {
            if !(s.is_finite() && w.is_finite()) || s <= F::zero() || w < F::zero() {
                return Err(Error::InvalidInput(format!(
                    "scalar mechanism atom must have positive size and nonnegative weight, got ({s}, {w})"
                )));
            }
        }
        Ok(Self { b0, c0, atoms })
    }

    pub fn eval(&self, x: F) -> F {
        debug_assert!(x >= F::zero(), "argument must be nonnegative");
        let mut v = self.b0 * x + self.c0 * x * x;
        for &(s, w) in &self.atoms {
            let a = x * s;
            v += w * ((-a).exp_m1() + a);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::adaptive_simpson;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn atom(p1: f64, p2: f64, w: f64) -> Atom<f64> {
        Atom {
            point: Vec2::new(p1, p2),
            weight: w,
        }
    }

    fn expc(r1: f64, r2: f64, mass: f64) -> ExpComponent<f64> {
        ExpComponent {
            rates: Vec2::new(r1, r2),
            mass,
        }
    }

    #[test]
    fn linear_part_only() {
        let mech = BranchingMechanism::linear(Mat2::diagonal(1.0, 2.0));
        let phi = mech.phi(Vec2::new(3.0, 4.0));
        assert_eq!(phi, Vec2::new(3.0, 8.0));
    }

    #[test]
    fn quadratic_part_only() {
        let mech = BranchingMechanism::new(
            Mat2::zero(),
            Vec2::new(1.0, 1.0),
            JumpMeasure::zero(),
            JumpMeasure::zero(),
        )
        .unwrap();
        assert_eq!(mech.phi(Vec2::new(2.0, 3.0)), Vec2::new(4.0, 9.0));
    }

    #[test]
    fn single_atom_jump_part() {
        let m1 = JumpMeasure::new(vec![atom(1.0, 1.0, 2.0)], vec![]).unwrap();
        let mech =
            BranchingMechanism::new(Mat2::zero(), Vec2::zero(), m1, JumpMeasure::zero()).unwrap();
        let phi = mech.phi(Vec2::new(1.0, 1.0));
        // 2 (e^{-2} - 1 + 2) = 2.27067...
        assert_relative_eq!(phi.x1, 2.0 * ((-2.0f64).exp() + 1.0), max_relative = 1e-14);
        assert_relative_eq!(phi.x1, 2.2706705664732256, max_relative = 1e-12);
        assert_eq!(phi.x2, 0.0);
    }

    #[test]
    fn psi_with_drift_and_atom() {
        let n = JumpMeasure::new(vec![atom(1.0, 0.0, 1.0)], vec![]).unwrap();
        let imm = ImmigrationMechanism::new(Vec2::new(1.0, 1.0), n).unwrap();
        let psi = imm.psi(Vec2::new(1.0, 2.0));
        // 1 + 2 + (1 - e^{-1}) = 3.63212...
        assert_relative_eq!(psi, 3.0 + 1.0 - (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(psi, 3.6321205588285577, max_relative = 1e-12);
    }

    #[test]
    fn compensated_integral_atom_value() {
        let m = JumpMeasure::new(vec![atom(1.0, 1.0, 1.0)], vec![]).unwrap();
        let v = m.compensated_integral(Vec2::new(1.0, 1.0));
        assert_relative_eq!(v, (-2.0f64).exp() + 1.0, max_relative = 1e-14);
        assert_relative_eq!(v, 1.1353352832366128, max_relative = 1e-12);
    }

    #[test]
    fn immigration_integral_exponential_value() {
        let m = JumpMeasure::new(vec![], vec![expc(1.0, 1.0, 1.0)]).unwrap();
        // 1 - r1/(r1 + l1) factor with l2 = 0: 1 - 1/2 = 0.5.
        assert_relative_eq!(
            m.immigration_integral(Vec2::new(1.0, 0.0)),
            0.5,
            max_relative = 1e-14
        );
    }

    #[test]
    fn phi_star_quadratic_example() {
        let mech = BranchingMechanism::new(
            Mat2::new(1.0, -1.0, 0.0, 1.0),
            Vec2::new(1.0, 0.0),
            JumpMeasure::zero(),
            JumpMeasure::zero(),
        )
        .unwrap();
        // Row sum of the first row vanishes, leaving x^2.
        assert_relative_eq!(mech.phi_star(0, 3.0), 9.0, max_relative = 1e-14);
    }

    #[test]
    fn phi_tilde_single_atom() {
        let m1 = JumpMeasure::new(vec![atom(1.0, 1.0, 2.0)], vec![]).unwrap();
        let mech =
            BranchingMechanism::new(Mat2::zero(), Vec2::zero(), m1, JumpMeasure::zero()).unwrap();
        let pt = mech.phi_tilde(Vec2::new(1.0, 1.0));
        // 2 (e^{-1} - 1 + 1) = 2 e^{-1} = 0.73575...
        assert_relative_eq!(pt.x1, 2.0 * (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(pt.x1, 0.7357588823428847, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_measure_data() {
        assert!(JumpMeasure::new(vec![atom(0.0, 0.0, 1.0)], vec![]).is_err());
        assert!(JumpMeasure::new(vec![atom(1.0, -0.5, 1.0)], vec![]).is_err());
        assert!(JumpMeasure::new(vec![atom(1.0, 1.0, -1.0)], vec![]).is_err());
        assert!(JumpMeasure::new(vec![], vec![expc(0.0, 1.0, 1.0)]).is_err());
        assert!(JumpMeasure::new(vec![], vec![expc(1.0, 1.0, f64::NAN)]).is_err());
    }

    #[test]
    fn first_moment_mixes_atoms_and_exponentials() {
        let m = JumpMeasure::new(vec![atom(0.5, 0.1, 0.2)], vec![expc(2.0, 4.0, 1.0)]).unwrap();
        let fm = m.first_moment();
        assert_relative_eq!(fm.x1, 0.1 + 0.5, max_relative = 1e-14);
        assert_relative_eq!(fm.x2, 0.02 + 0.25, max_relative = 1e-14);
    }

    /// Independent oracle: nested adaptive Simpson quadrature of the
    /// product-exponential density against the full 2-d kernel.
    fn quadrature_compensated(r1: f64, r2: f64, mass: f64, l: Vec2<f64>) -> f64 {
        let cut1 = 40.0 / r1;
        let cut2 = 40.0 / r2;
        let outer = |z1: f64| {
            adaptive_simpson(
                &|z2: f64| {
                    let s = l.x1 * z1 + l.x2 * z2;
                    ((-s).exp_m1() + s) * r1 * r2 * (-r1 * z1 - r2 * z2).exp()
                },
                0.0,
                cut2,
                1e-13,
            )
        };
        mass * adaptive_simpson(&outer, 0.0, cut1, 1e-12)
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let cases = [
            (1.0, 1.0, 1.0, Vec2::new(1.0, 0.5)),
            (2.0, 3.0, 0.7, Vec2::new(0.3, 1.7)),
            (0.5, 1.5, 2.0, Vec2::new(2.0, 0.0)),
            (4.0, 0.25, 1.3, Vec2::new(0.05, 0.8)),
        ];
        for (r1, r2, mass, l) in cases {
            let m = JumpMeasure::new(vec![], vec![expc(r1, r2, mass)]).unwrap();
            let closed = m.compensated_integral(l);
            let quad = quadrature_compensated(r1, r2, mass, l);
            assert_relative_eq!(closed, quad, max_relative = 1e-8);
        }
    }

    #[test]
    fn sampling_respects_component_weights() {
        let m = JumpMeasure::new(vec![atom(1.0, 0.0, 3.0)], vec![expc(1.0, 1.0, 1.0)]).unwrap();
        let mut rng = crate::rng::stream(11, 1);
        let n = 20_000;
        let mut atom_hits = 0usize;
        let mut mean = Vec2::zero();
        for _ in 0..n {
            let z = m.sample(&mut rng);
            if z == Vec2::new(1.0, 0.0) {
                atom_hits += 1;
            }
            mean += z * (1.0 / n as f64);
        }
        let frac = atom_hits as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.02, "atom fraction {frac}");
        // Mean of the normalised measure: (3*1 + 1*1)/4, (3*0 + 1*1)/4.
        assert!((mean.x1 - 1.0).abs() < 0.03, "mean.x1 = {}", mean.x1);
        assert!((mean.x2 - 0.25).abs() < 0.03, "mean.x2 = {}", mean.x2);
    }

    proptest! {
        #[test]
        fn phi_vanishes_at_zero(
            b11 in -2.0..2.0f64, b12 in -2.0..0.0f64,
            b21 in -2.0..0.0f64, b22 in -2.0..2.0f64,
            c1 in 0.0..2.0f64, c2 in 0.0..2.0f64,
        ) {
            let mech = BranchingMechanism::new(
                Mat2::new(b11, b12, b21, b22),
                Vec2::new(c1, c2),
                JumpMeasure::new(vec![atom(0.4, 0.1, 0.3)], vec![]).unwrap(),
                JumpMeasure::new(vec![], vec![expc(1.0, 2.0, 0.5)]).unwrap(),
            ).unwrap();
            let at_zero = mech.phi(Vec2::zero());
            prop_assert!(at_zero.l1() < 1e-14);
            prop_assert!(mech.phi_tilde(Vec2::zero()).l1() < 1e-14);
        }

        #[test]
        fn phi_tilde_below_phi_and_star_on_diagonal(
            l1 in 0.0..5.0f64, l2 in 0.0..5.0f64, x in 0.0..5.0f64,
            w in 0.01..2.0f64, p1 in 0.01..3.0f64, p2 in 0.01..3.0f64,
            r1 in 0.2..4.0f64, r2 in 0.2..4.0f64, mass in 0.01..2.0f64,
        ) {
            let m1 = JumpMeasure::new(vec![atom(p1, p2, w)], vec![expc(r1, r2, mass)]).unwrap();
            let m2 = JumpMeasure::new(vec![atom(p2, p1, w)], vec![]).unwrap();
            let mech = BranchingMechanism::new(
                Mat2::new(1.0, -0.5, -0.25, 2.0),
                Vec2::new(0.5, 1.0),
                m1,
                m2,
            ).unwrap();
            let l = Vec2::new(l1, l2);
            let phi = mech.phi(l);
            let tilde = mech.phi_tilde(l);
            prop_assert!(tilde.x1 <= phi.x1 + 1e-12 * phi.x1.abs().max(1.0));
            prop_assert!(tilde.x2 <= phi.x2 + 1e-12 * phi.x2.abs().max(1.0));
            // On the diagonal, the marginal mechanism collapses to phi_star.
            let diag = mech.phi_tilde(Vec2::splat(x));
            let scale1 = diag.x1.abs().max(1.0);
            let scale2 = diag.x2.abs().max(1.0);
            prop_assert!((diag.x1 - mech.phi_star(0, x)).abs() <= 1e-12 * scale1);
            prop_assert!((diag.x2 - mech.phi_star(1, x)).abs() <= 1e-12 * scale2);
        }

        #[test]
        fn psi_is_monotone_and_zero_at_zero(
            l1 in 0.0..4.0f64, l2 in 0.0..4.0f64, d1 in 0.0..2.0f64, d2 in 0.0..2.0f64,
        ) {
            let n = JumpMeasure::new(
                vec![atom(0.5, 0.25, 0.4)],
                vec![expc(2.0, 2.0, 0.5)],
            ).unwrap();
            let imm = ImmigrationMechanism::new(Vec2::new(0.3, 0.1), n).unwrap();
            prop_assert!(imm.psi(Vec2::zero()).abs() < 1e-14);
            let lo = imm.psi(Vec2::new(l1, l2));
            let hi = imm.psi(Vec2::new(l1 + d1, l2 + d2));
            prop_assert!(hi >= lo - 1e-12);
        }
    }
}
