//! Iwasawa and Cartan decompositions of SL(d,R), flags, and the Iwasawa
//! cocycle.
//!
//! Conventions: `K = SO(d)`, `A` the positive diagonal matrices, `N` the unit
//! upper-triangular matrices, `a_+` the decreasing traceless diagonals. A
//! flag is stored as an orthogonal frame whose first `j` columns span the
//! `j`-th subspace; frames differing by right multiplication with a diagonal
//! sign matrix are the same flag. For `g` and a flag with frame `k`, the
//! triangular factor of `g k = k' exp(s) n` determines the cocycle
//! `sigma(g, [k]) = s` and the image flag `g [k] = [k']`.

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::linalg::{self, idx, QrScratch};
use crate::subgroup::SubgroupSpec;

/// Condition-number bound below which `kappa` is read straight off an SVD;
/// beyond it the small singular values lose relative accuracy.
const DIRECT_SVD_RATIO: f64 = 1e-6;

/// Tolerance for the zero-sum invariant of [`AVector`].
pub const ZERO_SUM_TOL: f64 = 1e-9;

/// Element of the Cartan subalgebra `a`: traceless diagonal, stored as its
/// diagonal (nepers).
#[derive(Debug, Clone, PartialEq)]
pub struct AVector(Vec<f64>);

impl AVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let s: f64 = coords.iter().sum();
        let scale = coords.iter().map(|x| x.abs()).fold(1.0, f64::max);
        if s.abs() > ZERO_SUM_TOL * scale {
            return Err(Error::NotTraceless(s));
        }
        Ok(Self(coords))
    }

    /// Subtracts the mean so that the result is traceless.
    pub fn centered(mut coords: Vec<f64>) -> Self {
        let m = coords.iter().sum::<f64>() / coords.len() as f64;
        for c in &mut coords {
            *c -= m;
        }
        Self(coords)
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &AVector) -> AVector {
        AVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &AVector) -> AVector {
        AVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: f64) -> AVector {
        AVector(self.0.iter().map(|a| a * c).collect())
    }

    /// The opposition involution `-w_0`: negate and reverse.
    pub fn opposition(&self) -> AVector {
        AVector(self.0.iter().rev().map(|x| -x).collect())
    }

    pub fn is_dominant(&self, tol: f64) -> bool {
        self.0.windows(2).all(|w| w[0] + tol >= w[1])
    }
}

impl Serialize for AVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// A full flag in `R^d`.
#[derive(Debug, Clone)]
pub struct FlagPoint {
    frame: DMatrix<f64>,
}

impl FlagPoint {
    /// The standard flag `span(e_1) < span(e_1, e_2) < ...`.
    pub fn base(d: usize) -> Self {
        Self {
            frame: DMatrix::identity(d, d),
        }
    }

    /// A fixed flag in general position with respect to the coordinate
    /// axes, used as a second starting point.
    pub fn generic(d: usize) -> Self {
        let m = DMatrix::from_fn(d, d, |i, j| {
            ((i + 1) as f64 * 0.913 + (j + 1) as f64 * (i as f64 + 1.618)).sin() + if i == j { 0.5 } else { 0.0 }
        });
        Self::orthonormalized(&m).expect("fixed generic frame is invertible")
    }

    /// The line at angle `t` in `R^2`.
    pub fn from_angle(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        Self {
            frame: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
        }
    }

    /// Accepts an orthogonal frame (within 1e-9).
    pub fn from_frame(frame: DMatrix<f64>) -> Result<Self> {
        let d = frame.nrows();
        if frame.ncols() != d {
            return Err(Error::NonSquare {
                rows: d,
                cols: frame.ncols(),
            });
        }
        let err = (frame.transpose() * &frame - DMatrix::identity(d, d)).amax();
        if !(err <= 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "frame is not orthogonal (error {err:e})"
            )));
        }
        Ok(Self { frame })
    }

    /// The flag spanned by the columns of an invertible matrix.
    pub fn orthonormalized(m: &DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        let mut q = vec![0.0; d * d];
        let mut r = vec![0.0; d * d];
        let mut s = QrScratch::new(d);
        if !linalg::qr_positive(d, m.as_slice(), &mut q, &mut r, &mut s) {
            return Err(Error::NumericalBreakdown("singular frame".into()));
        }
        Ok(Self {
            frame: linalg::from_col_major(d, &q),
        })
    }

    pub(crate) fn from_col_major(d: usize, data: &[f64]) -> Self {
        Self {
            frame: linalg::from_col_major(d, data),
        }
    }

    pub fn dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Angle in `[0, pi)` of the line, for `d = 2`.
    pub fn angle(&self) -> f64 {
        let t = self.frame[(1, 0)].atan2(self.frame[(0, 0)]);
        t.rem_euclid(std::f64::consts::PI)
    }

    /// `g . eta`.
    pub fn act(&self, g: &GroupElement) -> Result<FlagPoint> {
        Ok(iwasawa_cocycle(g, self)?.1)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.frame.row(i).iter().copied().collect())
            .collect()
    }
}

impl Serialize for FlagPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

/// `g = k exp(sigma) n`.
#[derive(Debug, Clone)]
pub struct IwasawaTriple {
    pub k: DMatrix<f64>,
    pub sigma: AVector,
    pub n: DMatrix<f64>,
}

impl IwasawaTriple {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = self.k.nrows();
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            d,
            self.sigma.coords().iter().map(|x| x.exp()),
        ));
        &self.k * a * &self.n
    }
}

pub fn iwasawa_decompose(g: &GroupElement) -> Result<IwasawaTriple> {
    let d = g.dim();
    let mut q = vec![0.0; d * d];
    let mut r = vec![0.0; d * d];
    let mut s = QrScratch::new(d);
    if !linalg::qr_positive(d, g.as_col_major(), &mut q, &mut r, &mut s) {
        return Err(Error::NumericalBreakdown("vanishing pivot in QR".into()));
    }
    let (sigma, n) = split_triangular(d, &r);
    Ok(IwasawaTriple {
        k: linalg::from_col_major(d, &q),
        sigma: AVector::from_raw(sigma),
        n: linalg::from_col_major(d, &n),
    })
}

/// `R = diag(exp(sigma)) n` with `n` unit upper triangular.
fn split_triangular(d: usize, r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sigma = vec![0.0; d];
    let mut n = vec![0.0; d * d];
    for i in 0..d {
        let rii = r[idx(d, i, i)];
        sigma[i] = rii.ln();
        for j in i..d {
            n[idx(d, i, j)] = r[idx(d, i, j)] / rii;
        }
    }
    (sigma, n)
}

/// `kappa(g)`: log singular values in decreasing order.
pub fn cartan_projection(g: &GroupElement) -> Result<AVector> {
    let sv = g.matrix().clone().singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if hi.is_finite() && lo > hi * DIRECT_SVD_RATIO {
        let mut k: Vec<f64> = sv.iter().map(|s| s.ln()).collect();
        k.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        return Ok(AVector::centered(k));
    }
    let t = iwasawa_decompose(g)?;
    let d = g.dim();
    let kappa = kappa_of_triangular(d, t.sigma.coords(), t.n.as_slice())?;
    Ok(AVector::from_raw(kappa))
}

/// Log singular values of `diag(exp(sigma)) u` for `u` unit upper triangular
/// (column-major).
///
/// Works through exterior powers: the sum of the `k` largest log singular
/// values is `log ||wedge^k (diag(exp(sigma)) u)||`, and after factoring out
/// the largest diagonal entry of `wedge^k diag(exp(sigma))` the remaining
/// matrix has bounded entries and norm at least 1. Nothing overflows even
/// when `sigma` spans thousands of nepers.
pub fn kappa_of_triangular(d: usize, sigma: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let mut sorted = sigma.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut partial = vec![0.0; d + 1];
    let mut minor = Vec::with_capacity(d * d);
    for k in 1..d {
        let top: f64 = sorted[..k].iter().sum();
        let sets = linalg::subsets(d, k);
        let c = sets.len();
        let mut m = DMatrix::<f64>::zeros(c, c);
        for (a, rows) in sets.iter().enumerate() {
            let s: f64 = rows.iter().map(|&i| sigma[i]).sum();
            let scale = (s - top).exp();
            if scale == 0.0 {
                continue;
            }
            for (b, cols) in sets.iter().enumerate() {
                // minors of an upper-triangular matrix vanish unless
                // rows[i] <= cols[i] for every i
                if rows.iter().zip(cols).any(|(r, c)| r > c) {
                    continue;
                }
                minor.clear();
                for &ri in rows {
                    for &cj in cols {
                        minor.push(u[idx(d, ri, cj)]);
                    }
                }
                m[(a, b)] = scale * linalg::det_in_place(k, &mut minor);
            }
        }
        let sv = m.singular_values();
        let top_sv = sv.max();
        if !(top_sv.is_finite() && top_sv > 0.0) {
            return Err(Error::SvdFailure);
        }
        partial[k] = top + top_sv.ln();
    }
    partial[d] = sigma.iter().sum();
    Ok((1..=d).map(|k| partial[k] - partial[k - 1]).collect())
}

/// `sigma(g, eta)` and `g . eta`.
pub fn iwasawa_cocycle(g: &GroupElement, eta: &FlagPoint) -> Result<(AVector, FlagPoint)> {
    let d = g.dim();
    if eta.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: eta.dim(),
        });
    }
    let mut step = CocycleStepper::new(eta);
    let mut sigma = vec![0.0; d];
    if !step.step(g.as_col_major(), &mut sigma) {
        return Err(Error::NumericalBreakdown("vanishing pivot in QR".into()));
    }
    Ok((AVector::from_raw(sigma), step.flag()))
}

/// Carries a flag along a sequence of group elements, emitting the cocycle
/// increment of each step. Allocation-free per step.
#[derive(Debug, Clone)]
pub struct CocycleStepper {
    d: usize,
    frame: Vec<f64>,
    prod: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
    r_fix: Vec<f64>,
    scratch: QrScratch,
    steps: u64,
}

/// Steps between re-orthogonalizations of the carried frame.
pub const REORTHO_PERIOD: u64 = 64;

impl CocycleStepper {
    pub fn new(eta: &FlagPoint) -> Self {
        let d = eta.dim();
        Self {
            d,
            frame: linalg::to_col_major(eta.frame()),
            prod: vec![0.0; d * d],
            q: vec![0.0; d * d],
            r: vec![0.0; d * d],
            r_fix: vec![0.0; d * d],
            scratch: QrScratch::new(d),
            steps: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Applies `g` (column-major), writing `sigma(g, eta)` to `sigma_out` and
    /// replacing `eta` by `g eta`.
    #[inline]
    pub fn step(&mut self, g: &[f64], sigma_out: &mut [f64]) -> bool {
        let d = self.d;
        linalg::matmul(d, g, &self.frame, &mut self.prod);
        if !linalg::qr_positive(d, &self.prod, &mut self.q, &mut self.r, &mut self.scratch) {
            return false;
        }
        for i in 0..d {
            sigma_out[i] = self.r[idx(d, i, i)].ln();
        }
        std::mem::swap(&mut self.frame, &mut self.q);
        self.steps += 1;
        if self.steps.is_multiple_of(REORTHO_PERIOD) {
            self.reorthogonalize();
        }
        true
    }

    fn reorthogonalize(&mut self) {
        let d = self.d;
        self.prod.copy_from_slice(&self.frame);
        // separate buffer: `r` must keep the factor of the last step
        if linalg::qr_positive(d, &self.prod, &mut self.q, &mut self.r_fix, &mut self.scratch) {
            std::mem::swap(&mut self.frame, &mut self.q);
        }
    }

    /// Triangular factor of the last step, column-major.
    pub(crate) fn last_r(&self) -> &[f64] {
        &self.r
    }

    pub fn flag(&self) -> FlagPoint {
        FlagPoint::from_col_major(self.d, &self.frame)
    }
}

/// The running left product `p_n k = b_n ... b_1 k` held in Iwasawa
/// coordinates `K exp(sigma) U` so that neither `sigma` nor `kappa` ever
/// require forming `p_n` itself.
#[derive(Debug, Clone)]
pub struct RunningProduct {
    stepper: CocycleStepper,
    sigma: Vec<f64>,
    u: Vec<f64>,
    inc: Vec<f64>,
    t: Vec<f64>,
    tmp: Vec<f64>,
}

impl RunningProduct {
    /// Starts at the identity acting on the flag `eta`.
    pub fn new(eta: &FlagPoint) -> Self {
        let d = eta.dim();
        let mut u = vec![0.0; d * d];
        for i in 0..d {
            u[idx(d, i, i)] = 1.0;
        }
        Self {
            stepper: CocycleStepper::new(eta),
            sigma: vec![0.0; d],
            u,
            inc: vec![0.0; d],
            t: vec![0.0; d * d],
            tmp: vec![0.0; d * d],
        }
    }

    /// Left-multiplies by `g`; returns the cocycle increment `sigma(g, p_n eta)`.
    pub fn push(&mut self, g: &GroupElement) -> Result<&[f64]> {
        let d = self.stepper.dim();
        if g.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: g.dim(),
            });
        }
        if !self.stepper.step(g.as_col_major(), &mut self.inc) {
            return Err(Error::NumericalBreakdown("vanishing pivot in QR".into()));
        }
        // U <- (D^{-1} N' D) U with D = diag(exp(sigma_old))
        let r = self.stepper.last_r();
        self.t.fill(0.0);
        for j in 0..d {
            self.t[idx(d, j, j)] = 1.0;
            for i in 0..j {
                let nij = r[idx(d, i, j)] / r[idx(d, i, i)];
                if nij != 0.0 {
                    self.t[idx(d, i, j)] = nij * (self.sigma[j] - self.sigma[i]).exp();
                }
            }
        }
        linalg::matmul(d, &self.t, &self.u, &mut self.tmp);
        std::mem::swap(&mut self.u, &mut self.tmp);
        if self.u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalBreakdown("unipotent factor overflow".into()));
        }
        for (s, x) in self.sigma.iter_mut().zip(&self.inc) {
            *s += x;
        }
        Ok(&self.inc)
    }

    /// `sigma(p_n, eta)`.
    pub fn sigma(&self) -> AVector {
        AVector::from_raw(self.sigma.clone())
    }

    /// `kappa(p_n)`.
    pub fn kappa(&self) -> Result<AVector> {
        let d = self.stepper.dim();
        Ok(AVector::from_raw(kappa_of_triangular(d, &self.sigma, &self.u)?))
    }

    /// `p_n . eta`.
    pub fn flag(&self) -> FlagPoint {
        self.stepper.flag()
    }
}

/// `p(sigma)`: coordinates of `sigma` in the fixed orthonormal basis of the
/// complement of `a'`.
pub fn project_cocycle(sigma: &AVector, spec: &SubgroupSpec) -> Result<Vec<f64>> {
    if sigma.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: sigma.dim(),
        });
    }
    Ok(spec.project(sigma.coords()))
}

/// Maximum over `j = 1..d-1` of the sine of the largest principal angle
/// between the `j`-dimensional subspaces of two flags.
pub fn flag_distance(a: &FlagPoint, b: &FlagPoint) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: b.dim(),
        });
    }
    let mut worst: f64 = 0.0;
    for j in 1..d {
        let fa = a.frame.columns(0, j);
        let fb = b.frame.columns(0, j);
        // (I - P_A) B; its largest singular value is sin(theta_max)
        let resid = fb - fa * (fa.transpose() * fb);
        let s = resid.singular_values().max();
        worst = worst.max(s);
    }
    Ok(worst.clamp(0.0, 1.0))
}
