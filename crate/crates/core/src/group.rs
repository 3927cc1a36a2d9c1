//! Elements of SL(d,R), finitely supported probability measures on them, and
//! i.i.d. increment words drawn from such measures.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::RandomStream;

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

/// Accepted `|det - 1|` for user-supplied matrices before renormalization.
pub const INPUT_DET_TOL: f64 = 1e-6;

/// Products are rescaled only while the computed determinant stays within
/// this distance of 1.
const MUL_RENORM_WINDOW: f64 = 0.5;

/// A `d x d` real matrix with determinant 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    matrix: DMatrix<f64>,
    /// Factor `det^(1/d)` the raw input was divided by.
    renormalization: f64,
}

impl GroupElement {
    /// Accepts a matrix whose determinant is within [`INPUT_DET_TOL`] of 1
    /// and rescales it to determinant exactly 1 (up to rounding).
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(matrix, INPUT_DET_TOL)
    }

    pub fn with_tolerance(matrix: DMatrix<f64>, tol: f64) -> Result<Self> {
        check_shape(&matrix)?;
        let det = matrix.determinant();
        if !(det > 0.0) || (det - 1.0).abs() > tol {
            return Err(Error::BadDeterminant { det });
        }
        Ok(Self::rescale(matrix, det))
    }

    /// Rescales any matrix with positive determinant into SL(d,R).
    pub fn from_positive_det(matrix: DMatrix<f64>) -> Result<Self> {
        check_shape(&matrix)?;
        let det = matrix.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::BadDeterminant { det });
        }
        Ok(Self::rescale(matrix, det))
    }

    fn rescale(matrix: DMatrix<f64>, det: f64) -> Self {
        let d = matrix.nrows();
        let c = det.powf(1.0 / d as f64);
        Self {
            matrix: matrix / c,
            renormalization: c,
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            renormalization: 1.0,
        }
    }

    /// `diag(exp(a_1), ..., exp(a_d))` for a zero-sum `a`.
    pub fn diagonal_exp(a: &[f64]) -> Result<Self> {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            a.len(),
            a.iter().map(|x| x.exp()),
        ));
        Self::from_positive_det(m)
    }

    /// Rotation by `angle` in SO(2).
    pub fn rotation2(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            matrix: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            renormalization: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Column-major entries.
    pub fn as_col_major(&self) -> &[f64] {
        self.matrix.as_slice()
    }

    pub fn renormalization(&self) -> f64 {
        self.renormalization
    }

    pub fn det(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NumericalBreakdown("singular matrix".into()))?;
        Self::from_positive_det(inv)
    }

    /// `g^{-T}`, the image under the Cartan involution.
    pub fn inverse_transpose(&self) -> Result<Self> {
        Self::from_positive_det(self.inverse()?.matrix.transpose())
    }

    /// `self * other`, renormalized to determinant 1.
    pub fn mul(&self, other: &GroupElement) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let m = &self.matrix * &other.matrix;
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let det = m.determinant();
        // The exact determinant is 1; a computed value far from it only
        // reflects the conditioning of the product, so leave it alone.
        if det.is_finite() && (det - 1.0).abs() < MUL_RENORM_WINDOW {
            Ok(Self::rescale(m, det))
        } else {
            Ok(Self {
                matrix: m,
                renormalization: 1.0,
            })
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.matrix.row(i).iter().copied().collect())
            .collect()
    }
}

fn check_shape(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if !(MIN_DIM..=MAX_DIM).contains(&m.nrows()) {
        return Err(Error::UnsupportedDimension(m.nrows()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub element: GroupElement,
}

/// A finitely supported probability measure on SL(d,R).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
    cumulative: Vec<f64>,
}

/// Builds a measure from `(weight, matrix)` pairs, normalizing weights and
/// rescaling every matrix to determinant 1.
pub fn make_measure(atoms: Vec<(f64, DMatrix<f64>)>) -> Result<FiniteMeasure> {
    if atoms.is_empty() {
        return Err(Error::EmptySupport);
    }
    for (w, _) in &atoms {
        if !(*w > 0.0) || !w.is_finite() {
            return Err(Error::NegativeWeight { weight: *w });
        }
    }
    let dim = atoms[0].1.nrows();
    let mut elements = Vec::with_capacity(atoms.len());
    let mut weights = Vec::with_capacity(atoms.len());
    for (w, m) in atoms {
        if m.nrows() != m.ncols() {
            return Err(Error::NonSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.nrows(),
            });
        }
        elements.push(GroupElement::new(m)?);
        weights.push(w);
    }
    FiniteMeasure::from_elements(weights.into_iter().zip(elements).collect())
}

impl FiniteMeasure {
    /// Builds a measure from elements already in SL(d,R).
    pub fn from_elements(atoms: Vec<(f64, GroupElement)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptySupport);
        }
        let dim = atoms[0].1.dim();
        let mut total = 0.0;
        for (w, g) in &atoms {
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::NegativeWeight { weight: *w });
            }
            if g.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: g.dim(),
                });
            }
            total += w;
        }
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(w, element)| Atom {
                weight: w / total,
                element,
            })
            .collect();
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for a in &atoms {
            acc += a.weight;
            cumulative.push(acc);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self {
            dim,
            atoms,
            cumulative,
        })
    }

    pub fn point_mass(g: GroupElement) -> Self {
        Self::from_elements(vec![(1.0, g)]).expect("single positive atom")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    /// True when the support is a single point.
    pub fn is_deterministic(&self) -> bool {
        self.atoms.len() == 1
            || self
                .atoms
                .iter()
                .all(|a| (a.element.matrix() - self.atoms[0].element.matrix()).norm() == 0.0)
    }

    /// Draws an atom index.
    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.atoms.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.atoms.len() - 1)
    }

    /// Image measure under `g -> g^{-T}`.
    pub fn inverse_transpose(&self) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Ok((a.weight, a.element.inverse_transpose()?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_elements(atoms)
    }

    /// Largest operator norm among the atoms.
    pub fn max_atom_norm(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.element.matrix().clone().singular_values().max())
            .fold(0.0, f64::max)
    }
}

/// `n` i.i.d. draws from `measure`, in draw order `b_1, ..., b_n`.
pub fn sample_word(measure: &FiniteMeasure, stream: RandomStream, n: usize) -> Vec<GroupElement> {
    let mut rng = stream.rng();
    (0..n)
        .map(|_| measure.atoms[measure.sample_index(&mut rng)].element.clone())
        .collect()
}

/// The left product `b_n ... b_1` of a word `[b_1, ..., b_n]`, renormalized to
/// determinant 1 after every multiplication.
pub fn left_product(word: &[GroupElement]) -> Result<GroupElement> {
    let first = word
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty word".into()))?;
    let mut acc = first.clone();
    for g in &word[1..] {
        acc = g.mul(&acc)?;
    }
    Ok(acc)
}

/// JSON representation of a measure file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MeasureFile {
    pub dim: usize,
    pub atoms: Vec<AtomFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AtomFile {
    pub weight: f64,
    /// Row-major.
    pub matrix: Vec<Vec<f64>>,
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::NonSquare { rows: 0, cols: 0 });
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(n, m, &flat))
}

impl MeasureFile {
    pub fn into_measure(self) -> Result<FiniteMeasure> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Ok((a.weight, matrix_from_rows(&a.matrix)?)))
            .collect::<Result<Vec<_>>>()?;
        let m = make_measure(atoms)?;
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.dim(),
            });
        }
        Ok(m)
    }

    pub fn from_measure(m: &FiniteMeasure) -> Self {
        Self {
            dim: m.dim(),
            atoms: m
                .atoms()
                .iter()
                .map(|a| AtomFile {
                    weight: a.weight,
                    matrix: a.element.to_rows(),
                })
                .collect(),
        }
    }
}

pub fn parse_measure(json: &str) -> Result<FiniteMeasure> {
    let file: MeasureFile = serde_json::from_str(json)?;
    file.into_measure()
}
