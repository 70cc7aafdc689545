//! Exact L1-Wasserstein distance between equal-weight empirical measures.
//!
//! Distances between two n-point clouds reduce to a linear assignment
//! problem: the optimal coupling of two uniform empirical measures of the
//! same size is supported on a permutation. The solver is the standard
//! Hungarian algorithm with row/column potentials and a virtual column 0,
//! cubic in n, with costs evaluated lazily from the point coordinates. A
//! factorial brute-force oracle covers tiny instances.

use crate::linalg::Vec2;
use crate::scalar::Real;
use crate::simulate::CoupledSample;
use crate::stats::McEstimate;
use crate::{Error, Result};

/// Hard size cap for the assignment solver.
const MAX_EXACT: usize = 4096;
/// Hard size cap for the factorial oracle.
const MAX_BRUTEFORCE: usize = 8;

/// Uniform empirical measure: n points in the nonnegative quadrant, each
/// carrying weight 1/n.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure<F> {
    points: Vec<Vec2<F>>,
}

impl<F: Real> EmpiricalMeasure<F> {
    pub fn new(points: Vec<Vec2<F>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "empirical measure needs at least one point".into(),
            ));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.is_finite() || !p.is_nonnegative() {
                return Err(Error::InvalidInput(format!(
                    "point {i} = ({}, {}) is not a finite nonnegative state",
                    p.x1, p.x2
                )));
            }
        }
        Ok(Self { points })
    }

    /// Dirac measure at `x`, replicated to size `n` so it can be compared
    /// against an n-point cloud by the assignment solver.
    pub fn dirac(x: Vec2<F>, n: usize) -> Result<Self> {
        Self::new(vec![x; n.max(1)])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Vec2<F>] {
        &self.points
    }

    pub fn mean(&self) -> Vec2<F> {
        let sum = self.points.iter().fold(Vec2::zero(), |acc, &p| acc + p);
        sum * (F::one() / F::of(self.points.len() as f64))
    }

    /// Splits into the first and second half; fails for odd sizes.
    pub fn halves(&self) -> Result<(Self, Self)> {
        let n = self.points.len();
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "cannot halve a measure of size {n}"
            )));
        }
        Ok((
            Self {
                points: self.points[..n / 2].to_vec(),
            },
            Self {
                points: self.points[n / 2..].to_vec(),
            },
        ))
    }
}

fn check_pair<F: Real>(
    p: &EmpiricalMeasure<F>,
    q: &EmpiricalMeasure<F>,
    limit: usize,
    what: &'static str,
) -> Result<usize> {
    let n = p.len();
    if q.len() != n {
        return Err(Error::SizeMismatch {
            left: n,
            right: q.len(),
        });
    }
    if n > limit {
        return Err(Error::TooLarge { what, n, limit });
    }
    Ok(n)
}

/// Minimum-cost assignment between the points of `p` and `q` under L1
/// ground cost. Returns the permutation (entry i is the `q`-index matched
/// to point i of `p`) and the total, un-normalized cost. Ties are broken
/// toward the lowest column index.
pub fn optimal_assignment<F: Real>(
    p: &EmpiricalMeasure<F>,
    q: &EmpiricalMeasure<F>,
) -> Result<(Vec<usize>, F)> {
    let n = check_pair(p, q, MAX_EXACT, "assignment instance")?;
    let cost = |i: usize, j: usize| (p.points[i] - q.points[j]).l1();

    let inf = F::infinity();
    let mut u = vec![F::zero(); n + 1];
    let mut v = vec![F::zero(); n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost(i, j))
        .fold(F::zero(), |a, c| a + c);
    Ok((assignment, total))
}

/// Exact L1-Wasserstein distance between equal-size uniform empirical
/// measures: the minimal average L1 matching cost.
pub fn w1_exact<F: Real>(p: &EmpiricalMeasure<F>, q: &EmpiricalMeasure<F>) -> Result<F> {
    let n = p.len();
    let (_, total) = optimal_assignment(p, q)?;
    Ok(total / F::of(n as f64))
}

/// Wasserstein distance under the tilted metric `d^theta`: a uniform
/// rescaling of the ground cost, so the optimal plan is unchanged.
pub fn w_dtheta<F: Real>(p: &EmpiricalMeasure<F>, q: &EmpiricalMeasure<F>, theta: F) -> Result<F> {
    if !(theta >= F::zero()) {
        return Err(Error::InvalidInput(format!(
            "theta must be nonnegative, got {theta}"
        )));
    }
    Ok(w1_exact(p, q)? * (F::one() + theta))
}

/// Exhaustive minimum over all assignments; oracle for tiny instances.
pub fn w1_bruteforce<F: Real>(p: &EmpiricalMeasure<F>, q: &EmpiricalMeasure<F>) -> Result<F> {
    let n = check_pair(p, q, MAX_BRUTEFORCE, "brute-force instance")?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = F::infinity();
    permute(&mut perm, 0, &mut |perm| {
        let total = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| (p.points[i] - q.points[j]).l1())
            .fold(F::zero(), |a, c| a + c);
        if total < best {
            best = total;
        }
    });
    Ok(best / F::of(n as f64))
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// Monte-Carlo mean and standard error of the coupled L1 gap
/// `|sigma1 - sigma2|_1`, an upper-bound estimator for the Wasserstein
/// distance between the two coupled laws.
pub fn coupling_cost<F: Real>(samples: &[CoupledSample<F>]) -> Result<McEstimate<F>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "coupling cost needs at least one sample".into(),
        ));
    }
    let gaps: Vec<F> = samples.iter().map(|s| (s.sigma1 - s.sigma2).l1()).collect();
    Ok(McEstimate::from_values(&gaps))
}
