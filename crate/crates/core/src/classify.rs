//! Recurrence/transience decision for `X = G/H` with `H` given in the normal
//! form `A'N'`, from an estimate of the Lyapunov vector.

use serde::{Deserialize, Serialize};

use crate::decomp::AVector;
use crate::error::{Error, Result};
use crate::lyapunov::LyapunovEstimate;
use crate::subgroup::{dot, norm, orthonormalize, SubgroupSpec, UnipotentPart};

/// Default confidence multiplier for the membership test.
pub const DEFAULT_Z: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    Recurrent,
    Transient,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    ProperUnipotent,
    DriftOffAprime,
    CodimAtLeast3,
    CriterionMet,
    StatisticallyAmbiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub reason: Reason,
    /// Distance from the Lyapunov estimate to `a'`.
    pub distance_to_aprime: f64,
    pub threshold: f64,
    pub codim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `||v - P v||` where `P` projects orthogonally onto `span(basis)`.
pub fn distance_to_subspace(v: &AVector, basis: &[AVector]) -> Result<f64> {
    let vecs: Vec<Vec<f64>> = basis
        .iter()
        .map(|b| {
            if b.dim() != v.dim() {
                Err(Error::DimensionMismatch {
                    expected: v.dim(),
                    found: b.dim(),
                })
            } else {
                Ok(b.coords().to_vec())
            }
        })
        .collect::<Result<_>>()?;
    let on = orthonormalize(&vecs)?;
    Ok(residual(v.coords(), &on))
}

fn residual(v: &[f64], orthonormal: &[Vec<f64>]) -> f64 {
    let mut r = v.to_vec();
    for _ in 0..2 {
        for e in orthonormal {
            let c = dot(e, &r);
            for (ri, ei) in r.iter_mut().zip(e) {
                *ri -= c * ei;
            }
        }
    }
    norm(&r)
}

/// Decision tree:
///
/// * proper unipotent part: transient;
/// * `a' = a` with full `N`: recurrent (`E = 0`);
/// * otherwise with `D` the distance of the estimate to `a'` and
///   `T = z |stderr| + 1e-9`: codim at least 3 is transient; in codim 1 or 2,
///   `D <= T` is recurrent, `D > 2T` transient, and the band in between
///   indeterminate.
pub fn classify(spec: &SubgroupSpec, lyap: &LyapunovEstimate, z: f64) -> Result<Verdict> {
    if lyap.mean.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: lyap.mean.dim(),
        });
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::InvalidArgument(format!("z must be positive, got {z}")));
    }
    let distance = residual(lyap.mean.coords(), spec.a_prime_orthonormal());
    let threshold = z * lyap.stderr_norm() + 1e-9;
    let codim = spec.codim();
    let verdict = |kind, reason, note: Option<&str>| Verdict {
        kind,
        reason,
        distance_to_aprime: distance,
        threshold,
        codim,
        note: note.map(str::to_owned),
    };

    if spec.unipotent_part() == UnipotentPart::Proper {
        return Ok(verdict(VerdictKind::Transient, Reason::ProperUnipotent, None));
    }
    if codim == 0 {
        return Ok(verdict(
            VerdictKind::Recurrent,
            Reason::CriterionMet,
            Some("codimension 0: E = 0 and the fibres are compact"),
        ));
    }
    let v = if codim >= 3 {
        if distance > 2.0 * threshold {
            verdict(VerdictKind::Transient, Reason::DriftOffAprime, None)
        } else {
            verdict(VerdictKind::Transient, Reason::CodimAtLeast3, None)
        }
    } else if distance <= threshold {
        verdict(VerdictKind::Recurrent, Reason::CriterionMet, None)
    } else if distance > 2.0 * threshold {
        verdict(VerdictKind::Transient, Reason::DriftOffAprime, None)
    } else {
        verdict(VerdictKind::Indeterminate, Reason::StatisticallyAmbiguous, None)
    };
    Ok(v)
}
