//! Transfer operators `P_theta` on the projective line (`d = 2`),
//! discretized on an equispaced angle grid with periodic linear
//! interpolation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::decomp::{iwasawa_cocycle, FlagPoint};
use crate::error::{Error, Result};
use crate::group::FiniteMeasure;
use crate::lyapunov::{boundary_point, CovarianceEstimate};
use crate::montecarlo::{map_trajectories, RandomStream};
use crate::subgroup::SubgroupSpec;

/// Largest grid accepted by the dense eigenvalue check.
pub const DENSE_LIMIT: usize = 512;

const BURN_IN: usize = 100;
const WINDOW: usize = 400;

/// Grid values indexed by the angles `i pi / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorGrid {
    pub values: Vec<Complex64>,
}

impl OperatorGrid {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        check_grid_size(values.len())?;
        Ok(Self { values })
    }

    pub fn constant(n_points: usize, c: Complex64) -> Result<Self> {
        Self::new(vec![c; n_points])
    }

    pub fn from_fn(n_points: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        check_grid_size(n_points)?;
        Ok(Self {
            values: grid_angles(n_points).into_iter().map(f).collect(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn angles(&self) -> Vec<f64> {
        grid_angles(self.values.len())
    }
}

impl Serialize for OperatorGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.values.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }
}

pub fn grid_angles(n_points: usize) -> Vec<f64> {
    let h = PI / n_points as f64;
    (0..n_points).map(|i| i as f64 * h).collect()
}

fn check_grid_size(n: usize) -> Result<()> {
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "grid size must be a power of two >= 16, got {n}"
        )));
    }
    Ok(())
}

fn sup(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    j0: u32,
    j1: u32,
    frac: f64,
    coef: Complex64,
}

/// `P_theta` on an `n`-point grid: row `i` holds, for each atom, the
/// interpolation stencil of `g . eta_i` scaled by `w exp(theta . sigma-bar)`.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    n: usize,
    atoms: usize,
    entries: Vec<Entry>,
}

impl TransferOperator {
    pub fn new(measure: &FiniteMeasure, spec: &SubgroupSpec, theta: &[Complex64], n_points: usize) -> Result<Self> {
        if measure.dim() != 2 {
            return Err(Error::UnsupportedDimension(measure.dim()));
        }
        if spec.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: spec.dim(),
            });
        }
        if theta.len() != spec.codim() {
            return Err(Error::DimensionMismatch {
                expected: spec.codim(),
                found: theta.len(),
            });
        }
        check_grid_size(n_points)?;
        let h = PI / n_points as f64;
        let mut entries = Vec::with_capacity(n_points * measure.len());
        for alpha in grid_angles(n_points) {
            let eta = FlagPoint::from_angle(alpha);
            for atom in measure.atoms() {
                let (sigma, image) = iwasawa_cocycle(&atom.element, &eta)?;
                let bar = spec.project(sigma.coords());
                let exponent: Complex64 = theta.iter().zip(&bar).map(|(t, s)| t * s).sum();
                let mut u = image.angle() / h;
                if u >= n_points as f64 {
                    u -= n_points as f64;
                }
                let j0 = (u.floor() as usize).min(n_points - 1);
                let frac = (u - j0 as f64).clamp(0.0, 1.0);
                entries.push(Entry {
                    j0: j0 as u32,
                    j1: ((j0 + 1) % n_points) as u32,
                    frac,
                    coef: exponent.exp() * atom.weight,
                });
            }
        }
        Ok(Self {
            n: n_points,
            atoms: measure.len(),
            entries,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    fn row(&self, i: usize) -> &[Entry] {
        &self.entries[i * self.atoms..(i + 1) * self.atoms]
    }

    /// `(P f)_i`.
    pub fn apply_slice(&self, f: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self
                .row(i)
                .iter()
                .map(|e| e.coef * (f[e.j0 as usize] * (1.0 - e.frac) + f[e.j1 as usize] * e.frac))
                .sum();
        }
    }

    /// `(psi P)_j = sum_i psi_i P_ij` (no conjugation).
    pub fn apply_transpose_slice(&self, psi: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for (i, p) in psi.iter().enumerate() {
            for e in self.row(i) {
                let c = e.coef * p;
                out[e.j0 as usize] += c * (1.0 - e.frac);
                out[e.j1 as usize] += c * e.frac;
            }
        }
    }

    pub fn apply(&self, f: &OperatorGrid) -> Result<OperatorGrid> {
        if f.n_points() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: f.n_points(),
            });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        self.apply_slice(&f.values, &mut out);
        Ok(OperatorGrid { values: out })
    }

    /// Row sums of the matrix, `P 1`.
    pub fn row_sums(&self) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|e| e.coef).sum())
            .collect()
    }

    pub fn dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(self.n, self.n, Complex64::new(0.0, 0.0));
        for i in 0..self.n {
            for e in self.row(i) {
                m[(i, e.j0 as usize)] += e.coef * (1.0 - e.frac);
                m[(i, e.j1 as usize)] += e.coef * e.frac;
            }
        }
        m
    }
}

/// `P_theta f` on the grid of `f`.
pub fn apply_transfer(
    measure: &FiniteMeasure,
    theta: &[Complex64],
    f: &OperatorGrid,
    spec: &SubgroupSpec,
) -> Result<OperatorGrid> {
    TransferOperator::new(measure, spec, theta, f.n_points())?.apply(f)
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    #[serde(serialize_with = "serialize_complex_vec")]
    pub theta: Vec<Complex64>,
    #[serde(serialize_with = "serialize_complex")]
    pub lambda: Complex64,
    /// Normalized so that its integral against the grid stationary measure
    /// is 1.
    pub eigenfunction: OperatorGrid,
    /// Growth rate of `P_theta` on the complement of the leading
    /// eigendirection.
    pub spectral_radius_rest: f64,
    pub iterations: usize,
    pub residual: f64,
}

fn serialize_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

fn serialize_complex_vec<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
    pairs.serialize(s)
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Power iteration for the dominant eigenpair of `apply`; returns
/// `(lambda, vector, iterations, relative residual)`.
fn power_iteration(
    n: usize,
    apply: impl Fn(&[Complex64], &mut [Complex64]),
    tol: f64,
    max_iter: usize,
) -> Result<(Complex64, Vec<Complex64>, usize, f64)> {
    let mut f = vec![Complex64::new(1.0, 0.0); n];
    let mut g = vec![Complex64::new(0.0, 0.0); n];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        apply(&f, &mut g);
        let (imax, _) = f
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        let lambda = g[imax] / f[imax];
        let fs = sup(&f);
        residual = g
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - lambda * b).norm())
            .fold(0.0, f64::max)
            / (fs * lambda.norm().max(f64::MIN_POSITIVE));
        let scale = g[imax];
        if scale.norm() == 0.0 || !scale.is_finite() {
            return Err(Error::NumericalBreakdown("power iteration collapsed".into()));
        }
        if residual < tol {
            return Ok((lambda, f, it, residual));
        }
        for (fi, gi) in f.iter_mut().zip(&g) {
            *fi = gi / scale;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Mean logarithmic growth of `apply` over a window after a burn-in, with
/// `project` applied after every step.
fn growth_rate(
    n: usize,
    apply: impl Fn(&[Complex64], &mut [Complex64]),
    project: impl Fn(&mut [Complex64]),
) -> f64 {
    // A fixed start with components on many Fourier modes.
    let mut f: Vec<Complex64> = grid_angles(n)
        .iter()
        .enumerate()
        .map(|(i, a)| Complex64::new((3.0 * a).cos() + 0.5 * (7.0 * a).sin() + 0.1 * ((i * 37) % 11) as f64, 0.0))
        .collect();
    project(&mut f);
    let mut g = vec![Complex64::new(0.0, 0.0); n];
    let mut log_growth = 0.0;
    for it in 0..BURN_IN + WINDOW {
        let before = sup(&f);
        if before == 0.0 {
            return 0.0;
        }
        apply(&f, &mut g);
        project(&mut g);
        let after = sup(&g);
        if after == 0.0 {
            return 0.0;
        }
        if it >= BURN_IN {
            log_growth += (after / before).ln();
        }
        for (fi, gi) in f.iter_mut().zip(&g) {
            *fi = gi / after;
        }
    }
    (log_growth / WINDOW as f64).exp()
}

/// Leading eigenpair of `P_theta` by power iteration, plus the spectral
/// radius of `P_theta` on the complement of the leading eigendirection.
pub fn leading_eigen(
    measure: &FiniteMeasure,
    theta: &[Complex64],
    spec: &SubgroupSpec,
    n_points: usize,
    tol: f64,
    max_iter: usize,
) -> Result<EigenReport> {
    let op = TransferOperator::new(measure, spec, theta, n_points)?;
    let n = op.n_points();
    let (lambda, mut phi, iterations, residual) =
        power_iteration(n, |f, g| op.apply_slice(f, g), tol, max_iter)?;
    let (_, psi, _, _) = power_iteration(n, |f, g| op.apply_transpose_slice(f, g), tol, max_iter)?;
    let psi_phi = dot(&psi, &phi);
    if psi_phi.norm() < 1e-300 {
        return Err(Error::NumericalBreakdown("left and right eigenvectors are orthogonal".into()));
    }
    let rest = growth_rate(
        n,
        |f, g| op.apply_slice(f, g),
        |f| {
            let c = dot(&psi, f) / psi_phi;
            for (fi, p) in f.iter_mut().zip(&phi) {
                *fi -= c * p;
            }
        },
    );
    let nu = stationary_measure(measure, n_points, tol.max(1e-12), max_iter)?;
    let integral: Complex64 = nu.iter().zip(&phi).map(|(w, p)| p * *w).sum();
    if integral.norm() > 1e-12 {
        for p in phi.iter_mut() {
            *p /= integral;
        }
    }
    Ok(EigenReport {
        theta: theta.to_vec(),
        lambda,
        eigenfunction: OperatorGrid { values: phi },
        spectral_radius_rest: rest,
        iterations,
        residual,
    })
}

/// Spectral radius of `P_theta` from the growth rate of its iterates.
pub fn spectral_radius(
    measure: &FiniteMeasure,
    theta: &[Complex64],
    spec: &SubgroupSpec,
    n_points: usize,
) -> Result<f64> {
    let op = TransferOperator::new(measure, spec, theta, n_points)?;
    Ok(growth_rate(op.n_points(), |f, g| op.apply_slice(f, g), |_| {}))
}

/// Eigenvalues of the dense grid matrix, by decreasing modulus. Real
/// `theta` only; grids up to [`DENSE_LIMIT`] points.
pub fn dense_spectrum(
    measure: &FiniteMeasure,
    theta: &[f64],
    spec: &SubgroupSpec,
    n_points: usize,
) -> Result<Vec<Complex64>> {
    if n_points > DENSE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "dense check limited to {DENSE_LIMIT} points"
        )));
    }
    let th: Vec<Complex64> = theta.iter().map(|t| Complex64::new(*t, 0.0)).collect();
    let op = TransferOperator::new(measure, spec, &th, n_points)?;
    let m = op.dense().map(|z| z.re);
    let mut ev: Vec<Complex64> = m
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    ev.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    Ok(ev)
}

/// Grid approximation of the stationary measure: the left fixed vector of
/// `P_0`, by power iteration from the uniform weights.
pub fn stationary_measure(measure: &FiniteMeasure, n_points: usize, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if measure.dim() != 2 {
        return Err(Error::UnsupportedDimension(measure.dim()));
    }
    let spec = SubgroupSpec::trivial_a_prime(2)?;
    let op = TransferOperator::new(measure, &spec, &[Complex64::new(0.0, 0.0)], n_points)?;
    let n = op.n_points();
    let mut nu = vec![Complex64::new(1.0 / n as f64, 0.0); n];
    let mut next = vec![Complex64::new(0.0, 0.0); n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        op.apply_transpose_slice(&nu, &mut next);
        let total: f64 = next.iter().map(|z| z.re).sum();
        for z in next.iter_mut() {
            *z /= total;
        }
        residual = nu.iter().zip(&next).map(|(a, b)| (a - b).norm()).sum();
        std::mem::swap(&mut nu, &mut next);
        if residual < tol {
            return Ok(nu.iter().map(|z| z.re.max(0.0)).collect());
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// `(second central difference of log lambda along e at 0, e^T C e)`.
///
/// The finite difference equals the second derivative of `log lambda`,
/// which is the limiting variance whether or not the walk is centered.
pub fn second_derivative_check(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    e: &[f64],
    t: f64,
    n_points: usize,
    covariance: &CovarianceEstimate,
) -> Result<(f64, f64)> {
    if !(1e-4..=1e-2).contains(&t) {
        return Err(Error::InvalidArgument(format!("t must lie in [1e-4, 1e-2], got {t}")));
    }
    let k = spec.codim();
    if e.len() != k || covariance.matrix.nrows() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: e.len(),
        });
    }
    let lam = |s: f64| -> Result<f64> {
        let theta: Vec<Complex64> = e.iter().map(|x| Complex64::new(s * x, 0.0)).collect();
        Ok(leading_eigen(measure, &theta, spec, n_points, 1e-14, 200_000)?.lambda.re)
    };
    let fd = (lam(t)?.ln() - 2.0 * lam(0.0)?.ln() + lam(-t)?.ln()) / (t * t);
    let mut mc = 0.0;
    for i in 0..k {
        for j in 0..k {
            mc += e[i] * covariance.matrix[(i, j)] * e[j];
        }
    }
    Ok((fd, mc))
}

/// `(lambda_{t e} - lambda_{-t e}) / (2t)`.
pub fn first_derivative(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    e: &[f64],
    t: f64,
    n_points: usize,
) -> Result<f64> {
    let lam = |s: f64| -> Result<f64> {
        let theta: Vec<Complex64> = e.iter().map(|x| Complex64::new(s * x, 0.0)).collect();
        Ok(leading_eigen(measure, &theta, spec, n_points, 1e-14, 200_000)?.lambda.re)
    };
    Ok((lam(t)? - lam(-t)?) / (2.0 * t))
}

/// Angles of `boundary_point` over trajectories `0..n_samples`.
pub fn boundary_angles(measure: &FiniteMeasure, n_steps: usize, n_samples: usize, master_seed: u64) -> Result<Vec<f64>> {
    if measure.dim() != 2 {
        return Err(Error::UnsupportedDimension(measure.dim()));
    }
    map_trajectories(n_samples, |t| {
        boundary_point(measure, n_steps, RandomStream::new(master_seed, t)).map(|b| b.flag.angle())
    })
    .into_iter()
    .collect()
}

/// 1-Wasserstein distance on the circle `[0, period)` between two
/// weighted point sets (weights are normalized).
pub fn circle_w1(a: &[(f64, f64)], b: &[(f64, f64)], period: f64) -> f64 {
    let ta: f64 = a.iter().map(|p| p.1).sum();
    let tb: f64 = b.iter().map(|p| p.1).sum();
    let mut pts: Vec<(f64, f64)> = a
        .iter()
        .map(|(x, w)| (x.rem_euclid(period), w / ta))
        .chain(b.iter().map(|(x, w)| (x.rem_euclid(period), -w / tb)))
        .collect();
    pts.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    // D is piecewise constant between consecutive points; the last piece
    // wraps around to the first point.
    let mut segs = Vec::with_capacity(pts.len());
    let mut d = 0.0;
    for (i, (x, w)) in pts.iter().enumerate() {
        d += w;
        let next = if i + 1 < pts.len() { pts[i + 1].0 } else { pts[0].0 + period };
        segs.push((d, next - x));
    }
    // The optimal shift is a weighted median of D.
    let mut sorted = segs.clone();
    sorted.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let half = period / 2.0;
    let mut acc = 0.0;
    let mut c = 0.0;
    for (v, len) in &sorted {
        acc += len;
        if acc >= half {
            c = *v;
            break;
        }
    }
    segs.iter().map(|(v, len)| (v - c).abs() * len).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;

    fn sl2_dense() -> FiniteMeasure {
        let a = GroupElement::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        let b = GroupElement::rotation2(std::f64::consts::FRAC_PI_3).mul(&a).unwrap();
        FiniteMeasure::from_elements(vec![(0.5, a), (0.5, b)]).unwrap()
    }

    fn spec() -> SubgroupSpec {
        SubgroupSpec::trivial_a_prime(2).unwrap()
    }

    #[test]
    fn p0_preserves_constants() {
        let one = OperatorGrid::constant(64, Complex64::new(1.0, 0.0)).unwrap();
        let out = apply_transfer(&sl2_dense(), &[Complex64::new(0.0, 0.0)], &one, &spec()).unwrap();
        assert!(out.values.iter().all(|z| (z - 1.0).norm() < 1e-12));
    }

    #[test]
    fn identity_measure_acts_trivially() {
        let m = FiniteMeasure::point_mass(GroupElement::identity(2));
        let f = OperatorGrid::from_fn(32, |a| Complex64::new(a.sin(), (2.0 * a).cos())).unwrap();
        let out = apply_transfer(&m, &[Complex64::new(0.3, -1.2)], &f, &spec()).unwrap();
        for (x, y) in out.values.iter().zip(&f.values) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let op = TransferOperator::new(&sl2_dense(), &spec(), &[Complex64::new(0.2, 0.7)], 64).unwrap();
        let f: Vec<Complex64> = (0..64).map(|i| Complex64::new((i as f64).sin(), 0.1 * i as f64)).collect();
        let g: Vec<Complex64> = (0..64).map(|i| Complex64::new((i as f64 * 0.3).cos(), 1.0)).collect();
        let mut pf = vec![Complex64::new(0.0, 0.0); 64];
        let mut gp = vec![Complex64::new(0.0, 0.0); 64];
        op.apply_slice(&f, &mut pf);
        op.apply_transpose_slice(&g, &mut gp);
        assert!((dot(&g, &pf) - dot(&gp, &f)).norm() < 1e-10);
    }

    #[test]
    fn rejects_other_dimensions_and_grids() {
        let m = FiniteMeasure::point_mass(GroupElement::identity(3));
        let s = SubgroupSpec::trivial_a_prime(3).unwrap();
        assert_eq!(
            TransferOperator::new(&m, &s, &[Complex64::new(0.0, 0.0); 2], 32).unwrap_err(),
            Error::UnsupportedDimension(3)
        );
        assert!(OperatorGrid::constant(24, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn diagonal_measure_concentrates_at_attracting_line() {
        let g = GroupElement::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        let nu = stationary_measure(&FiniteMeasure::point_mass(g), 128, 1e-12, 100_000).unwrap();
        let near: f64 = nu[..3].iter().sum::<f64>() + nu[126..].iter().sum::<f64>();
        assert!(near >= 0.99, "{near}");
    }

    #[test]
    fn rotation_measure_is_uniform() {
        let m = FiniteMeasure::point_mass(GroupElement::rotation2(2f64.sqrt()));
        let nu = stationary_measure(&m, 128, 1e-12, 10_000).unwrap();
        assert!(nu.iter().all(|w| (w - 1.0 / 128.0).abs() < 1e-3 / 128.0));
    }

    #[test]
    fn w1_on_circle() {
        let a = [(0.1, 1.0)];
        let b = [(0.3, 1.0)];
        assert!((circle_w1(&a, &b, PI) - 0.2).abs() < 1e-12);
        // the short way round
        let b = [(PI - 0.1, 1.0)];
        assert!((circle_w1(&a, &b, PI) - 0.2).abs() < 1e-12);
        assert!(circle_w1(&a, &a, PI) < 1e-15);
    }
}
