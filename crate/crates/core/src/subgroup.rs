//! Normal form `A'N'` of a closed subgroup `H` and the quotient `E = a/a'`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO_SUM_TOL: f64 = 1e-9;
const INDEPENDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnipotentPart {
    /// `N' = N`, the full unipotent radical of the Borel subgroup.
    Full,
    /// `N'` strictly smaller than `N`.
    Proper,
}

/// `H` in standard position: `A' = exp(a')` with `a'` spanned by
/// `a_prime_basis`, and a unipotent part.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupSpec {
    dim: usize,
    a_prime_basis: Vec<Vec<f64>>,
    unipotent_part: UnipotentPart,
    /// Orthonormal basis of `a'` (Gram-Schmidt of `a_prime_basis`).
    a_prime_orthonormal: Vec<Vec<f64>>,
    /// Orthonormal basis of the orthogonal complement of `a'` in `a`,
    /// the model of `E`.
    quotient_basis: Vec<Vec<f64>>,
}

impl SubgroupSpec {
    pub fn new(
        dim: usize,
        a_prime_basis: Vec<Vec<f64>>,
        unipotent_part: UnipotentPart,
    ) -> Result<Self> {
        if !(crate::group::MIN_DIM..=crate::group::MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if a_prime_basis.len() > dim - 1 {
            return Err(Error::DependentBasis);
        }
        for v in &a_prime_basis {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
            let s: f64 = v.iter().sum();
            let scale = v.iter().map(|x| x.abs()).fold(1.0, f64::max);
            if s.abs() > ZERO_SUM_TOL * scale {
                return Err(Error::NotTraceless(s));
            }
        }
        let a_prime_orthonormal = orthonormalize(&a_prime_basis)?;
        let quotient_basis = complement_basis(dim, &a_prime_orthonormal);
        Ok(Self {
            dim,
            a_prime_basis,
            unipotent_part,
            a_prime_orthonormal,
            quotient_basis,
        })
    }

    /// `a' = {0}`, `N' = N`: the quotient `E` is all of `a`.
    pub fn trivial_a_prime(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), UnipotentPart::Full)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a_prime_basis(&self) -> &[Vec<f64>] {
        &self.a_prime_basis
    }

    pub fn a_prime_orthonormal(&self) -> &[Vec<f64>] {
        &self.a_prime_orthonormal
    }

    pub fn unipotent_part(&self) -> UnipotentPart {
        self.unipotent_part
    }

    /// Dimension of `E = a/a'`.
    pub fn codim(&self) -> usize {
        self.quotient_basis.len()
    }

    pub fn quotient_basis(&self) -> &[Vec<f64>] {
        &self.quotient_basis
    }

    /// Coordinates of `v` in the basis of `E`.
    #[inline]
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.codim()];
        self.project_into(v, &mut out);
        out
    }

    #[inline]
    pub fn project_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.quotient_basis) {
            *o = e.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// Lifts coordinates in `E` back to the corresponding vector of `a`.
    pub fn lift(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (c, e) in coords.iter().zip(&self.quotient_basis) {
            for (o, x) in out.iter_mut().zip(e) {
                *o += c * x;
            }
        }
        out
    }
}

/// Gram-Schmidt with one reorthogonalization pass.
pub(crate) fn orthonormalize(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = norm(v);
        if scale == 0.0 {
            return Err(Error::DependentBasis);
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for e in &out {
                let c = dot(e, &w);
                for (wi, ei) in w.iter_mut().zip(e) {
                    *wi -= c * ei;
                }
            }
        }
        let n = norm(&w);
        if n <= INDEPENDENCE_TOL * scale {
            return Err(Error::DependentBasis);
        }
        out.push(w.into_iter().map(|x| x / n).collect());
    }
    Ok(out)
}

/// Orthonormal basis of the complement of `span(on)` inside the zero-sum
/// hyperplane, from the fixed seed basis `e_i - e_{i+1}`.
fn complement_basis(dim: usize, on: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let target = dim - 1 - on.len();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(target);
    for i in 0..dim - 1 {
        if out.len() == target {
            break;
        }
        let mut w = vec![0.0; dim];
        w[i] = 1.0;
        w[i + 1] = -1.0;
        for _ in 0..2 {
            for e in on.iter().chain(out.iter()) {
                let c = dot(e, &w);
                for (wi, ei) in w.iter_mut().zip(e) {
                    *wi -= c * ei;
                }
            }
        }
        let n = norm(&w);
        if n > 1e-8 {
            out.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// JSON representation of a subgroup file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubgroupFile {
    pub dim: usize,
    #[serde(default)]
    pub a_prime_basis: Vec<Vec<f64>>,
    pub unipotent_part: UnipotentPart,
}

impl SubgroupFile {
    pub fn into_spec(self) -> Result<SubgroupSpec> {
        SubgroupSpec::new(self.dim, self.a_prime_basis, self.unipotent_part)
    }

    pub fn from_spec(s: &SubgroupSpec) -> Self {
        Self {
            dim: s.dim(),
            a_prime_basis: s.a_prime_basis().to_vec(),
            unipotent_part: s.unipotent_part(),
        }
    }
}

pub fn parse_subgroup(json: &str) -> Result<SubgroupSpec> {
    let f: SubgroupFile = serde_json::from_str(json)?;
    f.into_spec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotient_bases_are_orthonormal_and_orthogonal_to_a_prime() {
        let s = SubgroupSpec::new(4, vec![vec![1.0, 0.0, 0.0, -1.0]], UnipotentPart::Full).unwrap();
        assert_eq!(s.codim(), 2);
        for (i, e) in s.quotient_basis().iter().enumerate() {
            assert!((norm(e) - 1.0).abs() < 1e-14);
            assert!(e.iter().sum::<f64>().abs() < 1e-14);
            assert!(dot(e, &[1.0, 0.0, 0.0, -1.0]).abs() < 1e-14);
            for f in &s.quotient_basis()[i + 1..] {
                assert!(dot(e, f).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sl3_codim_one_quotient_is_middle_weight() {
        let s = SubgroupSpec::new(3, vec![vec![1.0, 0.0, -1.0]], UnipotentPart::Full).unwrap();
        let e = &s.quotient_basis()[0];
        let expect = [1.0, -2.0, 1.0].map(|x: f64| x / 6f64.sqrt());
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn validation() {
        assert_eq!(
            SubgroupSpec::new(3, vec![vec![1.0, 1.0, 1.0]], UnipotentPart::Full),
            Err(Error::NotTraceless(3.0))
        );
        assert_eq!(
            SubgroupSpec::new(
                3,
                vec![vec![1.0, -1.0, 0.0], vec![2.0, -2.0, 0.0]],
                UnipotentPart::Full
            ),
            Err(Error::DependentBasis)
        );
        assert!(matches!(
            SubgroupSpec::new(3, vec![vec![1.0, -1.0]], UnipotentPart::Full),
            Err(Error::DimensionMismatch { .. })
        ));
        let full = SubgroupSpec::new(
            3,
            vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0]],
            UnipotentPart::Full,
        )
        .unwrap();
        assert_eq!(full.codim(), 0);
    }

    #[test]
    fn spec_file_parses() {
        let s = parse_subgroup(r#"{"dim": 3, "a_prime_basis": [[1, 0, -1]], "unipotent_part": "proper"}"#)
            .unwrap();
        assert_eq!(s.unipotent_part(), UnipotentPart::Proper);
        assert_eq!(s.codim(), 1);
        let s = parse_subgroup(r#"{"dim": 2, "unipotent_part": "full"}"#).unwrap();
        assert_eq!(s.codim(), 1);
        assert!(parse_subgroup(r#"{"dim": 2, "unipotent_part": "half"}"#).is_err());
    }
}
