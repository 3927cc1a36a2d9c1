//! Monte Carlo estimation of the Lyapunov vector, the limiting covariance of
//! the projected cocycle, CLT diagnostics, the sigma-kappa gap, and boundary
//! points of the random walk.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomp::{flag_distance, AVector, CocycleStepper, FlagPoint, RunningProduct};
use crate::error::{Error, Result};
use crate::group::FiniteMeasure;
use crate::montecarlo::{derive_seed, map_trajectories, CompensatedSum, RandomStream};
use crate::stats;
use crate::subgroup::SubgroupSpec;

/// How increments of a trajectory are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IncrementMode {
    /// `sigma(b_k, eta_{k-1})` exactly as the walk produces it.
    #[default]
    Genuine,
    /// Each increment multiplied by an independent fair sign. The flag is
    /// still carried by the genuine walk. The result is an exactly centered
    /// cocycle with the same increment magnitudes; used to isolate the
    /// dimension effect in transience demonstrations.
    Antithetic,
}

/// Draws increments `b_k` from a measure and carries the flag along.
pub(crate) struct CocycleWalker<'a> {
    measure: &'a FiniteMeasure,
    stepper: CocycleStepper,
    rng: ChaCha8Rng,
    mode: IncrementMode,
    inc: Vec<f64>,
}

impl<'a> CocycleWalker<'a> {
    pub(crate) fn new(
        measure: &'a FiniteMeasure,
        eta: &FlagPoint,
        stream: RandomStream,
        mode: IncrementMode,
    ) -> Self {
        Self {
            measure,
            stepper: CocycleStepper::new(eta),
            rng: stream.rng(),
            mode,
            inc: vec![0.0; measure.dim()],
        }
    }

    /// Next cocycle increment (an element of `a`).
    #[inline]
    pub(crate) fn next_increment(&mut self) -> Result<&[f64]> {
        let i = self.measure.sample_index(&mut self.rng);
        let g = self.measure.atoms()[i].element.as_col_major();
        if !self.stepper.step(g, &mut self.inc) {
            return Err(Error::NumericalBreakdown("vanishing pivot in QR".into()));
        }
        if self.mode == IncrementMode::Antithetic && self.rng.random::<bool>() {
            for x in &mut self.inc {
                *x = -*x;
            }
        }
        Ok(&self.inc)
    }
}

fn check_flag(measure: &FiniteMeasure, eta: &FlagPoint) -> Result<()> {
    if eta.dim() != measure.dim() {
        return Err(Error::DimensionMismatch {
            expected: measure.dim(),
            found: eta.dim(),
        });
    }
    Ok(())
}

/// `sigma(b_n ... b_1, eta)` accumulated step by step.
pub(crate) fn cocycle_endpoint(
    measure: &FiniteMeasure,
    eta: &FlagPoint,
    mode: IncrementMode,
    n_steps: usize,
    stream: RandomStream,
) -> Result<Vec<f64>> {
    let d = measure.dim();
    let mut w = CocycleWalker::new(measure, eta, stream, mode);
    let mut acc = vec![CompensatedSum::default(); d];
    for _ in 0..n_steps {
        let inc = w.next_increment()?;
        for (a, x) in acc.iter_mut().zip(inc) {
            a.add(*x);
        }
    }
    Ok(acc.iter().map(|a| a.value()).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    pub mean: AVector,
    pub stderr: Vec<f64>,
    pub n_steps: usize,
    pub n_trajectories: usize,
}

impl LyapunovEstimate {
    /// Builds an estimate from given values (for synthetic or external
    /// inputs).
    pub fn from_parts(mean: AVector, stderr: Vec<f64>, n_steps: usize, n_trajectories: usize) -> Result<Self> {
        if stderr.len() != mean.dim() {
            return Err(Error::DimensionMismatch {
                expected: mean.dim(),
                found: stderr.len(),
            });
        }
        if stderr.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("stderr entries must be nonnegative".into()));
        }
        Ok(Self {
            mean,
            stderr,
            n_steps,
            n_trajectories,
        })
    }

    pub fn stderr_norm(&self) -> f64 {
        self.stderr.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Lyapunov vector from the base flag.
pub fn estimate_lyapunov(
    measure: &FiniteMeasure,
    n_steps: usize,
    n_trajectories: usize,
    master_seed: u64,
) -> Result<LyapunovEstimate> {
    estimate_lyapunov_from(
        measure,
        &FlagPoint::base(measure.dim()),
        IncrementMode::Genuine,
        n_steps,
        n_trajectories,
        master_seed,
    )
}

/// Average over trajectories of `sigma(p_n, eta)/n`, with the standard error
/// from the across-trajectory spread.
pub fn estimate_lyapunov_from(
    measure: &FiniteMeasure,
    eta: &FlagPoint,
    mode: IncrementMode,
    n_steps: usize,
    n_trajectories: usize,
    master_seed: u64,
) -> Result<LyapunovEstimate> {
    if n_steps == 0 || n_trajectories == 0 {
        return Err(Error::InvalidArgument(
            "n_steps and n_trajectories must be positive".into(),
        ));
    }
    check_flag(measure, eta)?;
    let d = measure.dim();
    let per_traj = map_trajectories(n_trajectories, |t| {
        cocycle_endpoint(measure, eta, mode, n_steps, RandomStream::new(master_seed, t))
            .map(|v| v.into_iter().map(|x| x / n_steps as f64).collect::<Vec<_>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut mean = vec![0.0; d];
    let mut stderr = vec![0.0; d];
    for i in 0..d {
        let col: Vec<f64> = per_traj.iter().map(|v| v[i]).collect();
        mean[i] = stats::mean(&col);
        stderr[i] = if n_trajectories > 1 {
            (stats::variance(&col) / n_trajectories as f64).sqrt()
        } else {
            0.0
        };
    }
    Ok(LyapunovEstimate {
        mean: AVector::centered(mean),
        stderr,
        n_steps,
        n_trajectories,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceEstimate {
    /// Row-major `k x k` matrix in the basis of `E`.
    #[serde(serialize_with = "serialize_matrix")]
    pub matrix: DMatrix<f64>,
    pub n_samples: usize,
}

impl CovarianceEstimate {
    pub fn matrix_rows(&self) -> Vec<Vec<f64>> {
        (0..self.matrix.nrows())
            .map(|i| self.matrix.row(i).iter().copied().collect())
            .collect()
    }
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

/// Projected endpoints `sigma-bar(p_n, eta)` for trajectories `0..n`.
fn projected_endpoints(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    eta: &FlagPoint,
    n_steps: usize,
    n_samples: usize,
    master_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    map_trajectories(n_samples, |t| {
        cocycle_endpoint(
            measure,
            eta,
            IncrementMode::Genuine,
            n_steps,
            RandomStream::new(master_seed, t),
        )
        .map(|v| spec.project(&v))
    })
    .into_iter()
    .collect()
}

fn check_spec(measure: &FiniteMeasure, spec: &SubgroupSpec) -> Result<()> {
    if spec.dim() != measure.dim() {
        return Err(Error::DimensionMismatch {
            expected: measure.dim(),
            found: spec.dim(),
        });
    }
    if spec.codim() == 0 {
        return Err(Error::DegenerateQuotient);
    }
    Ok(())
}

/// Sample covariance of `sigma-bar(p_n, eta_0)/sqrt(n)`; centering by
/// `n sigma-bar_mu` does not change it.
pub fn estimate_covariance(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    n_steps: usize,
    n_trajectories: usize,
    master_seed: u64,
) -> Result<CovarianceEstimate> {
    check_spec(measure, spec)?;
    if n_steps == 0 || n_trajectories < 2 {
        return Err(Error::InvalidArgument(
            "need n_steps >= 1 and at least two trajectories".into(),
        ));
    }
    let eta = FlagPoint::base(measure.dim());
    let samples = projected_endpoints(measure, spec, &eta, n_steps, n_trajectories, master_seed)?;
    let k = spec.codim();
    let scale = 1.0 / (n_steps as f64).sqrt();
    let ys: Vec<Vec<f64>> = samples
        .iter()
        .map(|v| v.iter().map(|x| x * scale).collect())
        .collect();
    let means: Vec<f64> = (0..k)
        .map(|i| stats::mean(&ys.iter().map(|y| y[i]).collect::<Vec<_>>()))
        .collect();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut s = CompensatedSum::default();
            for y in &ys {
                s.add((y[i] - means[i]) * (y[j] - means[j]));
            }
            let c = s.value() / (ys.len() - 1) as f64;
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    Ok(CovarianceEstimate {
        matrix: m,
        n_samples: n_trajectories,
    })
}

/// Normality statistics of one coordinate of the normalized cocycle.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalStats {
    pub variance: f64,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    /// KS distance to `N(0, variance)`; `None` for a degenerate marginal.
    pub ks: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagCltStats {
    /// Drift estimate `sigma-bar_mu` used for centering, in `E` coordinates.
    pub drift: Vec<f64>,
    pub marginals: Vec<MarginalStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CltReport {
    pub n_steps: usize,
    pub n_samples: usize,
    /// 1% critical value of the KS statistic at this sample size.
    pub ks_band: f64,
    /// True when some marginal has zero spread (deterministic law).
    pub degenerate: bool,
    /// Statistics from the base flag and from a second, generic flag.
    pub base: FlagCltStats,
    pub second: FlagCltStats,
    /// Per-coordinate `|ks_base - ks_second|`.
    pub ks_flag_gap: Vec<Option<f64>>,
}

impl CltReport {
    pub fn all_marginals(&self) -> impl Iterator<Item = &MarginalStats> {
        self.base.marginals.iter().chain(self.second.marginals.iter())
    }
}

fn flag_clt_stats(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    eta: &FlagPoint,
    n_steps: usize,
    n_samples: usize,
    master_seed: u64,
    drift: Option<&[f64]>,
) -> Result<(FlagCltStats, bool)> {
    let samples = projected_endpoints(measure, spec, eta, n_steps, n_samples, master_seed)?;
    let n = n_steps as f64;
    let k = spec.codim();
    let drift: Vec<f64> = match drift {
        Some(d) => d.to_vec(),
        None => (0..k)
            .map(|i| stats::mean(&samples.iter().map(|s| s[i] / n).collect::<Vec<_>>()))
            .collect(),
    };
    let mut degenerate = false;
    let mut marginals = Vec::with_capacity(k);
    for i in 0..k {
        let ys: Vec<f64> = samples
            .iter()
            .map(|s| (s[i] - n * drift[i]) / n.sqrt())
            .collect();
        let var = stats::variance(&ys);
        let mean = stats::mean(&ys);
        let tiny = var <= 1e-20 * (1.0 + mean * mean);
        degenerate |= tiny;
        let (skewness, excess_kurtosis, ks) = if tiny {
            (None, None, None)
        } else {
            let (s, kurt) = stats::skewness_kurtosis(&ys).unwrap_or((f64::NAN, f64::NAN));
            (Some(s), Some(kurt), Some(stats::ks_normal(&ys, 0.0, var)))
        };
        marginals.push(MarginalStats {
            variance: var,
            skewness,
            excess_kurtosis,
            ks,
        });
    }
    Ok((FlagCltStats { drift, marginals }, degenerate))
}

/// Skewness, excess kurtosis and KS distance to the fitted centered normal of
/// each marginal of `(sigma-bar(p_n, eta) - n sigma-bar_mu)/sqrt(n)`, from the
/// base flag and from a generic second flag.
///
/// When `drift` is `None` each flag is centered with its own in-sample
/// estimate of `sigma-bar_mu`.
pub fn clt_diagnostics(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    n_steps: usize,
    n_samples: usize,
    master_seed: u64,
    drift: Option<&[f64]>,
) -> Result<CltReport> {
    check_spec(measure, spec)?;
    if n_steps == 0 || n_samples < 2 {
        return Err(Error::InvalidArgument(
            "need n_steps >= 1 and at least two samples".into(),
        ));
    }
    if let Some(d) = drift {
        if d.len() != spec.codim() {
            return Err(Error::DimensionMismatch {
                expected: spec.codim(),
                found: d.len(),
            });
        }
    }
    let d = measure.dim();
    let (base, deg0) = flag_clt_stats(
        measure,
        spec,
        &FlagPoint::base(d),
        n_steps,
        n_samples,
        master_seed,
        drift,
    )?;
    let (second, deg1) = flag_clt_stats(
        measure,
        spec,
        &FlagPoint::generic(d),
        n_steps,
        n_samples,
        derive_seed(master_seed, 1),
        drift,
    )?;
    let ks_flag_gap = base
        .marginals
        .iter()
        .zip(&second.marginals)
        .map(|(a, b)| match (a.ks, b.ks) {
            (Some(x), Some(y)) => Some((x - y).abs()),
            _ => None,
        })
        .collect();
    Ok(CltReport {
        n_steps,
        n_samples,
        ks_band: stats::ks_critical_1pct(n_samples),
        degenerate: deg0 || deg1,
        base,
        second,
        ks_flag_gap,
    })
}

/// The vectors `sigma(p_n, eta) - kappa(p_n)` for `n = 1..=n_steps`.
pub fn sigma_kappa_gap_vectors(
    measure: &FiniteMeasure,
    eta: &FlagPoint,
    n_steps: usize,
    stream: RandomStream,
) -> Result<Vec<AVector>> {
    check_flag(measure, eta)?;
    let mut rng = stream.rng();
    let mut prod = RunningProduct::new(eta);
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let i = measure.sample_index(&mut rng);
        prod.push(&measure.atoms()[i].element)?;
        out.push(prod.sigma().sub(&prod.kappa()?));
    }
    Ok(out)
}

/// `||sigma(p_n, eta) - kappa(p_n)||` for `n = 1..=n_steps`.
pub fn sigma_kappa_gap(
    measure: &FiniteMeasure,
    eta: &FlagPoint,
    n_steps: usize,
    stream: RandomStream,
) -> Result<Vec<f64>> {
    if n_steps < 2 {
        return Err(Error::InvalidArgument("n_steps must be at least 2".into()));
    }
    Ok(sigma_kappa_gap_vectors(measure, eta, n_steps, stream)?
        .iter()
        .map(AVector::norm)
        .collect())
}

/// `max - min` of `seq[n-1]` over `n` in `[len/2, len]`.
pub fn late_window_oscillation(seq: &[f64]) -> f64 {
    if seq.is_empty() {
        return 0.0;
    }
    let start = (seq.len() / 2).max(1) - 1;
    let w = &seq[start..];
    let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// The flag `b_1 ... b_n eta_0` and a contraction certificate.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryPoint {
    pub flag: FlagPoint,
    /// Distance between the images of two distinct starting flags.
    pub certificate: f64,
}

impl BoundaryPoint {
    pub fn contracted(&self) -> bool {
        self.certificate <= 0.1
    }

    /// `Err(NoContraction)` when the certificate exceeds 0.1.
    pub fn check(&self) -> Result<()> {
        if self.contracted() {
            Ok(())
        } else {
            Err(Error::NoContraction {
                certificate: self.certificate,
            })
        }
    }
}

/// Applies the forward product `b_1 ... b_n` to the base flag and to a
/// generic flag.
pub fn boundary_point(measure: &FiniteMeasure, n_steps: usize, stream: RandomStream) -> Result<BoundaryPoint> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be positive".into()));
    }
    let d = measure.dim();
    let mut rng = stream.rng();
    let word: Vec<usize> = (0..n_steps).map(|_| measure.sample_index(&mut rng)).collect();
    let mut a = CocycleStepper::new(&FlagPoint::base(d));
    let mut b = CocycleStepper::new(&FlagPoint::generic(d));
    let mut scratch = vec![0.0; d];
    for &i in word.iter().rev() {
        let g = measure.atoms()[i].element.as_col_major();
        if !a.step(g, &mut scratch) || !b.step(g, &mut scratch) {
            return Err(Error::NumericalBreakdown("vanishing pivot in QR".into()));
        }
    }
    let flag = a.flag();
    let certificate = flag_distance(&flag, &b.flag())?;
    Ok(BoundaryPoint { flag, certificate })
}

/// Non-binding warnings when the support looks degenerate: bounded growth of
/// `kappa` along a sampled product, or a line (or hyperplane) invariant under
/// every atom. Zariski density itself is not decided.
pub fn zariski_warnings(measure: &FiniteMeasure, master_seed: u64) -> Result<Vec<String>> {
    let d = measure.dim();
    let mut warnings = Vec::new();

    let max_atom_kappa = measure
        .atoms()
        .iter()
        .map(|a| crate::decomp::cartan_projection(&a.element).map(|k| k.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mut prod = RunningProduct::new(&FlagPoint::base(d));
    let mut rng = RandomStream::new(master_seed, 0).rng();
    for _ in 0..1000 {
        let i = measure.sample_index(&mut rng);
        prod.push(&measure.atoms()[i].element)?;
    }
    let k = prod.kappa()?.norm();
    if k <= 5.0 * max_atom_kappa + 1e-9 {
        warnings.push(format!(
            "kappa stays bounded over 1000 sampled steps (|kappa| = {k:.3e}); the support may lie in a compact or amenable subgroup"
        ));
    }

    for (label, m) in [("line", measure.clone()), ("hyperplane", measure.inverse_transpose()?)] {
        if let Some(v) = common_eigenline(&m) {
            warnings.push(format!(
                "all atoms preserve a common {label} (direction {v:?}); the measure is not Zariski dense"
            ));
        }
    }
    Ok(warnings)
}

fn common_eigenline(measure: &FiniteMeasure) -> Option<Vec<f64>> {
    let atoms = measure.atoms();
    let g0 = atoms[0].element.matrix();
    let d = g0.nrows();
    for ev in g0.complex_eigenvalues().iter() {
        if ev.im.abs() > 1e-9 {
            continue;
        }
        let shifted = g0 - DMatrix::identity(d, d) * ev.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
        let v = vt.row(imin).transpose();
        let invariant = atoms.iter().all(|a| {
            let gv = a.element.matrix() * &v;
            let lambda = v.dot(&gv);
            (gv - &v * lambda).norm() < 1e-8 * (1.0 + a.element.matrix().norm())
        });
        if invariant {
            return Some(v.iter().copied().collect());
        }
    }
    None
}
