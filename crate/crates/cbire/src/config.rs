//! Model configuration: the full model aggregate, its JSON document form,
//! and validation of the standing assumptions.
//!
//! A model is the quadruple (branching mechanism, immigration mechanism,
//! environment, optional dominating scalar mechanism). The JSON schema
//! mirrors the domain types field by field; matrices are row-major and jump
//! measures are lists of `{point, weight}` atoms and `{rates, mass}`
//! exponential components. Documents always carry `f64` numbers; generic
//! models convert on load.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::levy_env::{EnvJump, EnvSpec};
use crate::linalg::{Mat2, Vec2};
use crate::mechanisms::{
    Atom, BranchingMechanism, ExpComponent, ImmigrationMechanism, JumpMeasure, ScalarMechanism,
};
use crate::scalar::Real;
use crate::{Error, Result};

/// Complete model: everything the solvers, simulators, and experiments need.
#[derive(Clone, Debug)]
pub struct ModelSpec<F> {
    pub branching: BranchingMechanism<F>,
    pub immigration: ImmigrationMechanism<F>,
    pub env: EnvSpec<F>,
    /// Optional dominating scalar mechanism for the extinction comparison.
    pub dominating: Option<ScalarMechanism<F>>,
}

impl<F: Real> ModelSpec<F> {
    pub fn new(
        branching: BranchingMechanism<F>,
        immigration: ImmigrationMechanism<F>,
        env: EnvSpec<F>,
        dominating: Option<ScalarMechanism<F>>,
    ) -> Self {
        Self {
            branching,
            immigration,
            env,
            dominating,
        }
    }

    /// Scalar envelope built from the model itself: smallest row sum of `b`,
    /// smallest diffusion coefficient, no jumps. It sits below both local
    /// projections of the branching mechanism for every nonnegative
    /// argument, since the dropped jump integrals are nonnegative.
    pub fn default_dominating(&self) -> ScalarMechanism<F> {
        let b = &self.branching.b;
        let rows = b.row_sums();
        let b0 = rows.x1.min(rows.x2);
        let c0 = self.branching.c.x1.min(self.branching.c.x2);
        ScalarMechanism {
            b0,
            c0,
            atoms: Vec::new(),
        }
    }

    /// The configured dominating mechanism, or the default envelope.
    pub fn dominating_or_default(&self) -> ScalarMechanism<F> {
        self.dominating
            .clone()
            .unwrap_or_else(|| self.default_dominating())
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Self> {
        let b = doc.branching.b;
        let branching = BranchingMechanism::new(
            Mat2::from_rows([
                [F::of(b[0][0]), F::of(b[0][1])],
                [F::of(b[1][0]), F::of(b[1][1])],
            ]),
            Vec2::new(F::of(doc.branching.c[0]), F::of(doc.branching.c[1])),
            measure_from_doc(&doc.branching.m1)?,
            measure_from_doc(&doc.branching.m2)?,
        )?;
        let immigration = ImmigrationMechanism::new(
            Vec2::new(F::of(doc.immigration.h[0]), F::of(doc.immigration.h[1])),
            measure_from_doc(&doc.immigration.n)?,
        )?;
        let env = EnvSpec::new(
            F::of(doc.environment.drift),
            F::of(doc.environment.sigma),
            doc.environment
                .jumps
                .iter()
                .map(|j| EnvJump {
                    size: F::of(j.size),
                    rate: F::of(j.rate),
                })
                .collect(),
        )?;
        let dominating = doc
            .dominating
            .as_ref()
            .map(|d| {
                ScalarMechanism::new(
                    F::of(d.b0),
                    F::of(d.c0),
                    d.atoms
                        .iter()
                        .map(|a| (F::of(a.size), F::of(a.weight)))
                        .collect(),
                )
            })
            .transpose()?;
        Ok(Self::new(branching, immigration, env, dominating))
    }

    pub fn to_doc(&self) -> ModelDoc {
        let b = &self.branching.b;
        ModelDoc {
            branching: BranchingDoc {
                b: [
                    [b.a11.as_f64(), b.a12.as_f64()],
                    [b.a21.as_f64(), b.a22.as_f64()],
                ],
                c: [self.branching.c.x1.as_f64(), self.branching.c.x2.as_f64()],
                m1: measure_to_doc(&self.branching.m1),
                m2: measure_to_doc(&self.branching.m2),
            },
            immigration: ImmigrationDoc {
                h: [
                    self.immigration.h.x1.as_f64(),
                    self.immigration.h.x2.as_f64(),
                ],
                n: measure_to_doc(&self.immigration.n),
            },
            environment: EnvironmentDoc {
                drift: self.env.drift.as_f64(),
                sigma: self.env.sigma.as_f64(),
                jumps: self
                    .env
                    .jumps
                    .iter()
                    .map(|j| EnvJumpDoc {
                        size: j.size.as_f64(),
                        rate: j.rate.as_f64(),
                    })
                    .collect(),
            },
            dominating: self.dominating.as_ref().map(|d| DominatingDoc {
                b0: d.b0.as_f64(),
                c0: d.c0.as_f64(),
                atoms: d
                    .atoms
                    .iter()
                    .map(|&(s, w)| ScalarAtomDoc {
                        size: s.as_f64(),
                        weight: w.as_f64(),
                    })
                    .collect(),
            }),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_doc(&doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("model document serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Self::from_json(&json).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// SHA-256 of the compact document rendering. Field order is fixed by
    /// the document structs, so the hash is stable across runs.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(&self.to_doc()).expect("model document serializes");
        let digest = Sha256::digest(compact.as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            use std::fmt::Write as _;
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn measure_from_doc<F: Real>(doc: &JumpMeasureDoc) -> Result<JumpMeasure<F>> {
    JumpMeasure::new(
        doc.atoms
            .iter()
            .map(|a| Atom {
                point: Vec2::new(F::of(a.point[0]), F::of(a.point[1])),
                weight: F::of(a.weight),
            })
            .collect(),
        doc.exponentials
            .iter()
            .map(|e| ExpComponent {
                rates: Vec2::new(F::of(e.rates[0]), F::of(e.rates[1])),
                mass: F::of(e.mass),
            })
            .collect(),
    )
}

fn measure_to_doc<F: Real>(m: &JumpMeasure<F>) -> JumpMeasureDoc {
    JumpMeasureDoc {
        atoms: m
            .atoms()
            .iter()
            .map(|a| AtomDoc {
                point: [a.point.x1.as_f64(), a.point.x2.as_f64()],
                weight: a.weight.as_f64(),
            })
            .collect(),
        exponentials: m
            .exp_components()
            .iter()
            .map(|e| ExpDoc {
                rates: [e.rates.x1.as_f64(), e.rates.x2.as_f64()],
                mass: e.mass.as_f64(),
            })
            .collect(),
    }
}

/// JSON document for a full model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub branching: BranchingDoc,
    #[serde(default)]
    pub immigration: ImmigrationDoc,
    pub environment: EnvironmentDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominating: Option<DominatingDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchingDoc {
    /// Interaction matrix, row-major.
    pub b: [[f64; 2]; 2],
    /// Diffusion coefficients per type.
    pub c: [f64; 2],
    #[serde(default)]
    pub m1: JumpMeasureDoc,
    #[serde(default)]
    pub m2: JumpMeasureDoc,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpMeasureDoc {
    #[serde(default)]
    pub atoms: Vec<AtomDoc>,
    #[serde(default)]
    pub exponentials: Vec<ExpDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDoc {
    pub point: [f64; 2],
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpDoc {
    pub rates: [f64; 2],
    pub mass: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImmigrationDoc {
    #[serde(default)]
    pub h: [f64; 2],
    #[serde(default)]
    pub n: JumpMeasureDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentDoc {
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub jumps: Vec<EnvJumpDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvJumpDoc {
    pub size: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominatingDoc {
    pub b0: f64,
    pub c0: f64,
    #[serde(default)]
    pub atoms: Vec<ScalarAtomDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarAtomDoc {
    pub size: f64,
    pub weight: f64,
}

/// One named validation check with its outcome.
#[derive(Clone, Debug)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate`]: all standing assumptions, individually named.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_names(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks every standing assumption of the ergodicity theory:
/// nonpositive cross interactions, finite immigration first moment, finite
/// environment exponential moment, positive spectral discriminant, positive
/// decay rate, and nonnegative diffusion and immigration coefficients.
pub fn validate<F: Real>(model: &ModelSpec<F>) -> ValidationReport {
    let mut checks = Vec::new();
    let mech = &model.branching;

    let gaps = mech.admissibility_gaps();
    checks.push(ValidationCheck {
        name: "cross_interaction_nonpositive",
        passed: gaps.x1 <= F::zero() && gaps.x2 <= F::zero(),
        detail: format!(
            "b12 + first moment of z2 under m1 = {}, b21 + first moment of z1 under m2 = {} (both must be <= 0)",
            gaps.x1, gaps.x2
        ),
    });

    let gamma = model.immigration.h + model.immigration.n.first_moment();
    checks.push(ValidationCheck {
        name: "immigration_first_moment_finite",
        passed: gamma.is_finite(),
        detail: format!("gamma = ({}, {})", gamma.x1, gamma.x2),
    });

    let beta = model.env.beta();
    checks.push(ValidationCheck {
        name: "environment_exponential_moment_finite",
        passed: beta.is_finite(),
        detail: format!("beta = {beta}"),
    });

    let b = &mech.b;
    let delta = b.trace() * b.trace() - F::of(4.0) * b.det();
    checks.push(ValidationCheck {
        name: "spectral_discriminant_positive",
        passed: delta > F::zero(),
        detail: format!("delta = {delta}"),
    });

    let rho_detail;
    let rho_ok;
    if delta > F::zero() {
        let rho = (b.trace() - delta.sqrt()) / F::of(2.0) - beta;
        rho_ok = rho > F::zero();
        rho_detail = format!("rho = {rho} (must be > 0)");
    } else {
        rho_ok = false;
        rho_detail = "undefined: discriminant not positive".to_string();
    }
    checks.push(ValidationCheck {
        name: "decay_rate_positive",
        passed: rho_ok,
        detail: rho_detail,
    });

    checks.push(ValidationCheck {
        name: "branching_diffusion_nonnegative",
        passed: mech.c.x1 >= F::zero() && mech.c.x2 >= F::zero(),
        detail: format!("c = ({}, {})", mech.c.x1, mech.c.x2),
    });

    checks.push(ValidationCheck {
        name: "immigration_drift_nonnegative",
        passed: model.immigration.h.x1 >= F::zero() && model.immigration.h.x2 >= F::zero(),
        detail: format!(
            "h = ({}, {})",
            model.immigration.h.x1, model.immigration.h.x2
        ),
    });

    ValidationReport { checks }
}
