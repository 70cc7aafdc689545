//! Exact first-moment and spectral computations.
//!
//! The annealed first moments of the process are carried by the matrix
//! exponential `e^{-bt}`: its row sums are the moment weights
//! `pi'_i(0,t)`, and `pi(0,t) = e^{beta t} pi'(0,t)` restores the
//! environment contribution. The spectral gap of `b`, shifted by `beta`,
//! gives the contraction rate `rho`, and the eigen-decomposition
//! coefficients give the metric tilt `theta` entering the weighted
//! distance `d^theta(x,y) = (1 + theta) |x - y|_1`.

use crate::linalg::{Mat2, Vec2};
use crate::mechanisms::ImmigrationMechanism;
use crate::scalar::Real;
use crate::stats::adaptive_simpson;
use crate::{Error, Result};

/// Matrix exponential `e^{-bt}` for a 2x2 matrix.
///
/// Distinct real eigenvalues use spectral projectors, complex pairs the
/// rotation closed form; spectra within roundoff of degenerate fall back
/// to scaling-and-squaring on the Taylor series.
pub fn mat_exp<F: Real>(b: Mat2<F>, t: F) -> Mat2<F> {
    let tr = b.trace();
    let delta = tr * tr - F::of(4.0) * b.det();
    let scale = F::one() + b.max_abs();
    let near_degenerate = delta.abs().sqrt() <= F::of(1e-6) * scale;
    if near_degenerate {
        return mat_exp_series(b.scale(-t));
    }
    if delta > F::zero() {
        let root = delta.sqrt();
        let two = F::of(2.0);
        let mu1 = (tr - root) / two;
        let mu2 = (tr + root) / two;
        let p1 = Mat2::diagonal(mu2, mu2)
            .add_mat(b.scale(-F::one()))
            .scale(F::one() / root);
        let p2 = b.add_mat(Mat2::diagonal(-mu1, -mu1)).scale(F::one() / root);
        p1.scale((-mu1 * t).exp())
            .add_mat(p2.scale((-mu2 * t).exp()))
    } else {
        let tau = tr / F::of(2.0);
        let omega = (-delta).sqrt() / F::of(2.0);
        let (s, c) = (omega * t).sin_cos();
        let radial = Mat2::identity().scale(c);
        let tangent = Mat2::diagonal(tau, tau)
            .add_mat(b.scale(-F::one()))
            .scale(s / omega);
        radial.add_mat(tangent).scale((-tau * t).exp())
    }
}

/// Scaling-and-squaring Taylor evaluation of `e^A`.
fn mat_exp_series<F: Real>(a: Mat2<F>) -> Mat2<F> {
    let norm = a.max_abs();
    let mut squarings = 0u32;
    let mut shrink = F::one();
    while norm * shrink > F::of(0.5) && squarings < 64 {
        shrink /= F::of(2.0);
        squarings += 1;
    }
    let small = a.scale(shrink);
    let mut sum = Mat2::identity();
    let mut term = Mat2::identity();
    for j in 1..=20 {
        term = term.mul_mat(small).scale(F::one() / F::of(j as f64));
        sum = sum.add_mat(term);
    }
    for _ in 0..squarings {
        sum = sum.mul_mat(sum);
    }
    sum
}

/// Environment-free moment weights: the row sums of `e^{-bt}`.
pub fn pi_prime<F: Real>(b: Mat2<F>, t: F) -> Vec2<F> {
    mat_exp(b, t).row_sums()
}

/// Full moment weights `pi(0,t) = e^{beta t} pi'(0,t)`.
pub fn pi<F: Real>(b: Mat2<F>, beta: F, t: F) -> Vec2<F> {
    pi_prime(b, t) * (beta * t).exp()
}

/// Regime of the spectral closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralCase {
    /// Both off-diagonal entries vanish.
    Diagonal,
    EpsNegative,
    EpsZero,
    EpsPositive,
}

/// Spectral quantities of `b` together with the derived decay rate.
///
/// `lambda1 > lambda2` are the eigenvalues of `-b`; the convex-combination
/// coefficients `theta_ij` are populated only in the regime where the
/// closed-form bounds use them, and `theta` is their maximum there (zero in
/// the diagonal and `eps = 0` regimes, where the plain L1 metric already
/// carries the decay bound).
#[derive(Clone, Copy, Debug)]
pub struct SpectralData<F> {
    pub b: Mat2<F>,
    pub beta: F,
    pub delta: F,
    pub sqrt_delta: F,
    pub lambda1: F,
    pub lambda2: F,
    pub eps: F,
    pub rho: F,
    pub case: SpectralCase,
    pub theta11: Option<F>,
    pub theta12: Option<F>,
    pub theta21: Option<F>,
    pub theta22: Option<F>,
    pub theta: F,
}

impl<F: Real> SpectralData<F> {
    /// Weighted distance `d^theta(x, y) = (1 + theta) |x - y|_1`.
    pub fn d_theta(&self, x: Vec2<F>, y: Vec2<F>) -> F {
        (F::one() + self.theta) * (x - y).l1()
    }

    /// Flat list of the scalar fields, for report metrics.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("delta", self.delta.as_f64()),
            ("lambda1", self.lambda1.as_f64()),
            ("lambda2", self.lambda2.as_f64()),
            ("eps", self.eps.as_f64()),
            ("rho", self.rho.as_f64()),
            ("theta", self.theta.as_f64()),
            ("beta", self.beta.as_f64()),
        ];
        for (name, v) in [
            ("theta11", self.theta11),
            ("theta12", self.theta12),
            ("theta21", self.theta21),
            ("theta22", self.theta22),
        ] {
            if let Some(v) = v {
                out.push((name, v.as_f64()));
            }
        }
        out
    }
}

/// Computes the spectral data of `b` under environment growth rate `beta`.
///
/// The eigen-coefficient of `e^{lambda1 t}` in the row-sum decomposition is
/// `(sqrt Delta + b22 - b11 - 2 b12) / (2 sqrt Delta)` for the first row
/// and the index-swapped expression for the second; the second-row
/// coefficient equals `(2 sqrt Delta - eps) / (2 sqrt Delta)`.
pub fn spectral<F: Real>(b: Mat2<F>, beta: F) -> Result<SpectralData<F>> {
    let tr = b.trace();
    let delta = tr * tr - F::of(4.0) * b.det();
    if !(delta > F::zero()) {
        return Err(Error::NonPositiveDiscriminant {
            delta: delta.as_f64(),
        });
    }
    let root = delta.sqrt();
    let two = F::of(2.0);
    let lambda1 = (-tr + root) / two;
    let lambda2 = lambda1 - root;
    let eps = root + b.a22 - b.a11 + two * b.a21;
    let rho = (tr - root) / two - beta;

    let coeff1 = (root + b.a22 - b.a11 - two * b.a12) / (two * root);
    let coeff2 = (root + b.a11 - b.a22 - two * b.a21) / (two * root);

    let diagonal = b.a12 == F::zero() && b.a21 == F::zero();
    let eps_tol = F::of(1e-14) * (F::one() + root);
    let (case, theta11, theta12, theta21, theta22, theta) = if diagonal {
        (SpectralCase::Diagonal, None, None, None, None, F::zero())
    } else if eps.abs() <= eps_tol {
        (SpectralCase::EpsZero, None, None, None, None, F::zero())
    } else if eps < F::zero() {
        (
            SpectralCase::EpsNegative,
            Some(coeff1),
            Some(coeff2),
            None,
            None,
            coeff2,
        )
    } else {
        (
            SpectralCase::EpsPositive,
            None,
            None,
            Some(coeff1),
            Some(coeff2),
            coeff1,
        )
    };

    Ok(SpectralData {
        b,
        beta,
        delta,
        sqrt_delta: root,
        lambda1,
        lambda2,
        eps,
        rho,
        case,
        theta11,
        theta12,
        theta21,
        theta22,
        theta,
    })
}

/// Convenience wrapper: spectral data of a full model.
pub fn spectral_of<F: Real>(model: &crate::config::ModelSpec<F>) -> Result<SpectralData<F>> {
    spectral(model.branching.b, model.env.beta())
}

/// Whether a closed-form moment weight is an equality or only dominates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PiBoundTag {
    Exact,
    UpperBound,
}

/// Closed-form evaluation of the moment weights.
#[derive(Clone, Copy, Debug)]
pub struct ClosedFormPi<F> {
    pub value: Vec2<F>,
    pub tags: [PiBoundTag; 2],
}

/// Closed-form moment weights per spectral regime.
///
/// Fully diagonal matrices give `(e^{-b11 t}, e^{-b22 t})` exactly. With
/// both off-diagonal entries nonzero the eigen-coefficient combinations
/// are returned, tagged exact on the component whose coefficient lies in
/// (0,1) (second for `eps > 0`, first for `eps < 0`) and as an upper bound
/// on the other. A matrix with exactly one vanishing off-diagonal entry
/// picks up a polynomial cross term that the per-component exponential
/// form cannot represent, so no closed form is offered there.
pub fn closed_form_pi_prime<F: Real>(spectral: &SpectralData<F>, t: F) -> Result<ClosedFormPi<F>> {
    let b = spectral.b;
    match spectral.case {
        SpectralCase::Diagonal => Ok(ClosedFormPi {
            value: Vec2::new((-b.a11 * t).exp(), (-b.a22 * t).exp()),
            tags: [PiBoundTag::Exact, PiBoundTag::Exact],
        }),
        _ if b.a12 * b.a21 == F::zero() => Err(Error::ClosedFormUnavailable(
            "one off-diagonal entry vanishes: row sums of the matrix exponential pick up \
             a polynomial factor with no per-component exponential form"
                .into(),
        )),
        SpectralCase::EpsZero => {
            let e1 = (spectral.lambda1 * t).exp();
            Ok(ClosedFormPi {
                value: Vec2::splat(e1),
                tags: [PiBoundTag::Exact, PiBoundTag::Exact],
            })
        }
        SpectralCase::EpsNegative | SpectralCase::EpsPositive => {
            let e1 = (spectral.lambda1 * t).exp();
            let e2 = (spectral.lambda2 * t).exp();
            let two = F::of(2.0);
            let root = spectral.sqrt_delta;
            let c1 = (root + b.a22 - b.a11 - two * b.a12) / (two * root);
            let c2 = (root + b.a11 - b.a22 - two * b.a21) / (two * root);
            let value = Vec2::new(
                c1 * e1 + (F::one() - c1) * e2,
                c2 * e1 + (F::one() - c2) * e2,
            );
            let tags = if spectral.case == SpectralCase::EpsNegative {
                [PiBoundTag::Exact, PiBoundTag::UpperBound]
            } else {
                [PiBoundTag::UpperBound, PiBoundTag::Exact]
            };
            Ok(ClosedFormPi { value, tags })
        }
    }
}

/// Total immigration pressure `gamma_i = h_i + integral of z_i n(dz)`.
pub fn gamma<F: Real>(imm: &ImmigrationMechanism<F>) -> Vec2<F> {
    imm.h + imm.n.first_moment()
}

/// Exact annealed mean of the total mass at time `t` started from `x`:
/// `<x, pi(0,t)> + integral_0^t <gamma, pi(0, t - s)> ds`.
pub fn mean_total_mass<F: Real>(
    b: Mat2<F>,
    beta: F,
    imm: &ImmigrationMechanism<F>,
    x: Vec2<F>,
    t: F,
) -> F {
    let from_x = x.dot(pi(b, beta, t));
    let g = gamma(imm);
    if g == Vec2::zero() || t == F::zero() {
        return from_x;
    }
    let integrand = |tau: F| g.dot(pi(b, beta, tau));
    let growth = (beta * t).exp().max(F::one());
    let tol = F::of(1e-12) * (F::one() + g.l1() * t * growth);
    from_x + adaptive_simpson(&integrand, F::zero(), t, tol)
}

/// Both sides of the moment decay bound:
/// `sum_i |x_i - y_i| pi'_i(0,t) <= d^theta(x,y) e^{lambda1 t}`.
pub fn decay_bound<F: Real>(spectral: &SpectralData<F>, x: Vec2<F>, y: Vec2<F>, t: F) -> (F, F) {
    let weights = pi_prime(spectral.b, t);
    let lhs = x.abs_diff(y).dot(weights);
    let rhs = spectral.d_theta(x, y) * (spectral.lambda1 * t).exp();
    (lhs, rhs)
}
