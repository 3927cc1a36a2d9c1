//! The projected cocycle walk `t + sigma-bar(b_n ... b_1, eta)` on `E`:
//! trajectories, return statistics, empirical Green functions and a
//! large-deviation diagnostic.

use rayon::prelude::*;
use serde::Serialize;

use crate::decomp::{cartan_projection, FlagPoint};
use crate::error::{Error, Result};
use crate::group::FiniteMeasure;
use crate::lyapunov::{CocycleWalker, IncrementMode};
use crate::montecarlo::{map_trajectories, RandomStream};
use crate::stats;
use crate::subgroup::{norm, SubgroupSpec};

/// Relative last-quarter change of a Green curve below which it counts as
/// saturated.
pub const SATURATION_CHANGE: f64 = 0.01;
/// Relative last-quarter change above which it counts as growing.
pub const GROWTH_CHANGE: f64 = 0.2;
/// Default quantile for ball radii.
pub const DEFAULT_QUANTILE: f64 = 0.9;

/// Where a walk starts and how its increments are generated.
#[derive(Debug, Clone)]
pub struct WalkStart {
    pub eta: FlagPoint,
    pub t0: Vec<f64>,
    pub mode: IncrementMode,
}

impl WalkStart {
    /// Base flag, origin of `E`, genuine increments.
    pub fn origin(spec: &SubgroupSpec) -> Self {
        Self {
            eta: FlagPoint::base(spec.dim()),
            t0: vec![0.0; spec.codim()],
            mode: IncrementMode::Genuine,
        }
    }

    pub fn with_flag(mut self, eta: FlagPoint) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_mode(mut self, mode: IncrementMode) -> Self {
        self.mode = mode;
        self
    }

    fn check(&self, measure: &FiniteMeasure, spec: &SubgroupSpec) -> Result<()> {
        if spec.dim() != measure.dim() {
            return Err(Error::DimensionMismatch {
                expected: measure.dim(),
                found: spec.dim(),
            });
        }
        if self.eta.dim() != measure.dim() {
            return Err(Error::DimensionMismatch {
                expected: measure.dim(),
                found: self.eta.dim(),
            });
        }
        if self.t0.len() != spec.codim() {
            return Err(Error::DimensionMismatch {
                expected: spec.codim(),
                found: self.t0.len(),
            });
        }
        Ok(())
    }
}

/// Streams the positions `t_1, t_2, ...` of one walk on `E`.
struct EWalker<'a> {
    walker: CocycleWalker<'a>,
    spec: &'a SubgroupSpec,
    pos: Vec<f64>,
    inc: Vec<f64>,
}

impl<'a> EWalker<'a> {
    fn new(measure: &'a FiniteMeasure, spec: &'a SubgroupSpec, start: &WalkStart, stream: RandomStream) -> Self {
        Self {
            walker: CocycleWalker::new(measure, &start.eta, stream, start.mode),
            spec,
            pos: start.t0.clone(),
            inc: vec![0.0; spec.codim()],
        }
    }

    #[inline]
    fn step(&mut self) -> Result<&[f64]> {
        let s = self.walker.next_increment()?;
        self.spec.project_into(s, &mut self.inc);
        for (p, x) in self.pos.iter_mut().zip(&self.inc) {
            *p += x;
        }
        Ok(&self.pos)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WalkTrajectory {
    /// `n_steps + 1` points of `E`, starting at `t0`.
    pub points: Vec<Vec<f64>>,
    pub start_flag: FlagPoint,
    pub stream_id: u64,
    pub mode: IncrementMode,
}

impl WalkTrajectory {
    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    /// CSV with columns `step, coord_1, ..., coord_k`.
    pub fn to_csv(&self) -> String {
        let k = self.points.first().map_or(0, Vec::len);
        let mut out = String::from("step");
        for i in 1..=k {
            out.push_str(&format!(",coord_{i}"));
        }
        out.push('\n');
        for (n, p) in self.points.iter().enumerate() {
            out.push_str(&n.to_string());
            for x in p {
                out.push_str(&format!(",{x:e}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn simulate_walk(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    start: &WalkStart,
    n_steps: usize,
    stream: RandomStream,
) -> Result<WalkTrajectory> {
    start.check(measure, spec)?;
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be positive".into()));
    }
    let mut w = EWalker::new(measure, spec, start, stream);
    let mut points = Vec::with_capacity(n_steps + 1);
    points.push(start.t0.clone());
    for _ in 0..n_steps {
        points.push(w.step()?.to_vec());
    }
    Ok(WalkTrajectory {
        points,
        start_flag: start.eta.clone(),
        stream_id: stream.trajectory_index,
        mode: start.mode,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReturnStats {
    pub radius: f64,
    /// Steps `n >= 1` with `|t_n| <= radius`.
    pub return_times: Vec<usize>,
    /// Last return time, 0 if none.
    pub last_exit: usize,
    /// `green_partial[n]` = number of returns at steps `<= n`.
    pub green_partial: Vec<u64>,
}

pub fn return_stats(traj: &WalkTrajectory, radius: f64) -> Result<ReturnStats> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let mut return_times = Vec::new();
    let mut green_partial = Vec::with_capacity(traj.points.len());
    green_partial.push(0);
    let mut count = 0u64;
    for (n, p) in traj.points.iter().enumerate().skip(1) {
        if norm(p) <= radius {
            return_times.push(n);
            count += 1;
        }
        green_partial.push(count);
    }
    Ok(ReturnStats {
        radius,
        last_exit: return_times.last().copied().unwrap_or(0),
        return_times,
        green_partial,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenCurve {
    pub radius: f64,
    pub n_trajectories: usize,
    /// Mean number of returns at steps `<= n`, for `n = 0..=n_steps`.
    pub values: Vec<f64>,
    /// Fraction of trajectories with a return after step `n_steps/2`.
    pub late_return_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GreenGrowth {
    Saturating,
    Growing,
    Unclear,
}

impl GreenCurve {
    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    /// `(G(N) - G(3N/4)) / G(N)`; zero for an identically zero curve.
    pub fn last_quarter_change(&self) -> f64 {
        let n = self.n_steps();
        let end = self.values[n];
        if end == 0.0 {
            return 0.0;
        }
        (end - self.values[3 * n / 4]) / end
    }

    pub fn growth(&self) -> GreenGrowth {
        let c = self.last_quarter_change();
        if c < SATURATION_CHANGE {
            GreenGrowth::Saturating
        } else if c > GROWTH_CHANGE {
            GreenGrowth::Growing
        } else {
            GreenGrowth::Unclear
        }
    }
}

/// Across-trajectory mean of `green_partial`, computed from integer return
/// counts so the result does not depend on the reduction order.
#[allow(clippy::too_many_arguments)]
pub fn empirical_green(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    start: &WalkStart,
    radius: f64,
    n_steps: usize,
    n_trajectories: usize,
    master_seed: u64,
) -> Result<GreenCurve> {
    start.check(measure, spec)?;
    if n_steps == 0 || n_trajectories == 0 {
        return Err(Error::InvalidArgument(
            "n_steps and n_trajectories must be positive".into(),
        ));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let half = n_steps / 2;
    let r2 = radius * radius;
    let (counts, late) = (0..n_trajectories as u64)
        .into_par_iter()
        .map(|t| -> Result<(Vec<u32>, u64)> {
            let mut hits = vec![0u32; n_steps + 1];
            let mut w = EWalker::new(measure, spec, start, RandomStream::new(master_seed, t));
            let mut late = 0;
            for n in 1..=n_steps {
                let p = w.step()?;
                if p.iter().map(|x| x * x).sum::<f64>() <= r2 {
                    hits[n] = 1;
                    if n > half {
                        late = 1;
                    }
                }
            }
            Ok((hits, late))
        })
        .try_reduce(
            || (vec![0u32; n_steps + 1], 0),
            |(mut a, la), (b, lb)| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                Ok((a, la + lb))
            },
        )?;
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut acc = 0u64;
    for c in counts {
        acc += u64::from(c);
        values.push(acc as f64 / n_trajectories as f64);
    }
    Ok(GreenCurve {
        radius,
        n_trajectories,
        values,
        late_return_fraction: late as f64 / n_trajectories as f64,
    })
}

/// The `quantile` of `|t_n|` pooled over trajectories and over `n` in the
/// last quarter of the horizon.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_radius(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    start: &WalkStart,
    n_steps: usize,
    n_trajectories: usize,
    master_seed: u64,
    quantile: f64,
) -> Result<f64> {
    start.check(measure, spec)?;
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile must lie in (0, 1), got {quantile}"
        )));
    }
    if n_steps == 0 || n_trajectories == 0 {
        return Err(Error::InvalidArgument(
            "n_steps and n_trajectories must be positive".into(),
        ));
    }
    let from = (3 * n_steps / 4).max(1);
    let pooled = map_trajectories(n_trajectories, |t| -> Result<Vec<f64>> {
        let mut w = EWalker::new(measure, spec, start, RandomStream::new(master_seed, t));
        let mut out = Vec::with_capacity(n_steps - from + 1);
        for n in 1..=n_steps {
            let p = w.step()?;
            if n >= from {
                out.push(norm(p));
            }
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut all: Vec<f64> = pooled.into_iter().flatten().collect();
    Ok(stats::quantile(&mut all, quantile))
}

/// Fraction of trajectories whose visited set comes within `eps` of every
/// point of `grid`.
#[allow(clippy::too_many_arguments)]
pub fn density_probe(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    start: &WalkStart,
    grid: &[Vec<f64>],
    eps: f64,
    n_steps: usize,
    n_trajectories: usize,
    master_seed: u64,
) -> Result<f64> {
    start.check(measure, spec)?;
    if grid.iter().any(|g| g.len() != spec.codim()) {
        return Err(Error::DimensionMismatch {
            expected: spec.codim(),
            found: grid.iter().map(Vec::len).find(|&l| l != spec.codim()).unwrap_or(0),
        });
    }
    let eps2 = eps * eps;
    let hits = map_trajectories(n_trajectories, |t| -> Result<bool> {
        let mut seen = vec![false; grid.len()];
        let mut missing = grid.len();
        let mut w = EWalker::new(measure, spec, start, RandomStream::new(master_seed, t));
        for _ in 0..n_steps {
            let p = w.step()?;
            for (s, g) in seen.iter_mut().zip(grid) {
                if !*s && g.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= eps2 {
                    *s = true;
                    missing -= 1;
                }
            }
            if missing == 0 {
                return Ok(true);
            }
        }
        Ok(missing == 0)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / n_trajectories as f64)
}

/// Root-mean-square deviation of single projected increments from their
/// mean, sampled along one trajectory after a burn-in of 100 steps.
pub fn increment_spread(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    n_steps: usize,
    master_seed: u64,
) -> Result<f64> {
    let start = WalkStart::origin(spec);
    start.check(measure, spec)?;
    let k = spec.codim();
    let mut w = CocycleWalker::new(measure, &start.eta, RandomStream::new(master_seed, 0), start.mode);
    let mut inc = vec![0.0; k];
    for _ in 0..100 {
        w.next_increment()?;
    }
    let mut samples = vec![Vec::with_capacity(n_steps); k];
    for _ in 0..n_steps {
        spec.project_into(w.next_increment()?, &mut inc);
        for (s, x) in samples.iter_mut().zip(&inc) {
            s.push(*x);
        }
    }
    Ok(samples.iter().map(|s| stats::variance(s)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct LargeDeviationReport {
    pub threshold: f64,
    /// `(k, log frequency)`, `-inf` where no sample exceeded `k M`.
    pub points: Vec<(usize, f64)>,
    /// Least-squares fit over the finite points.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Empirical `log P(|sigma-bar(p_k, eta) - k drift| >= k M)` for
/// `k = 1..=k_max`.
///
/// `M` must be below the almost-sure bound `max |kappa(g)| + |drift|` on
/// the normalized increments, otherwise every frequency is zero.
#[allow(clippy::too_many_arguments)]
pub fn large_deviation_decay(
    measure: &FiniteMeasure,
    spec: &SubgroupSpec,
    eta: &FlagPoint,
    drift: &[f64],
    threshold: f64,
    k_max: usize,
    n_samples: usize,
    master_seed: u64,
) -> Result<LargeDeviationReport> {
    let start = WalkStart::origin(spec).with_flag(eta.clone());
    start.check(measure, spec)?;
    if drift.len() != spec.codim() {
        return Err(Error::DimensionMismatch {
            expected: spec.codim(),
            found: drift.len(),
        });
    }
    if k_max < 10 || n_samples == 0 {
        return Err(Error::InvalidArgument(
            "need k_max >= 10 and a positive sample count".into(),
        ));
    }
    let bound = measure
        .atoms()
        .iter()
        .map(|a| cartan_projection(&a.element).map(|k| k.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max)
        + norm(drift);
    if !(threshold > 0.0 && threshold < bound) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, {bound:.6}), got {threshold}"
        )));
    }
    let counts = (0..n_samples as u64)
        .into_par_iter()
        .map(|t| -> Result<Vec<u32>> {
            let mut hits = vec![0u32; k_max];
            let mut w = EWalker::new(measure, spec, &start, RandomStream::new(master_seed, t));
            for (k, h) in hits.iter_mut().enumerate() {
                let p = w.step()?;
                let kk = (k + 1) as f64;
                let dev: f64 = p
                    .iter()
                    .zip(drift)
                    .map(|(x, m)| (x - kk * m).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if dev >= kk * threshold {
                    *h = 1;
                }
            }
            Ok(hits)
        })
        .try_reduce(
            || vec![0u32; k_max],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    let points: Vec<(usize, f64)> = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let lf = if c == 0 {
                f64::NEG_INFINITY
            } else {
                (c as f64 / n_samples as f64).ln()
            };
            (k + 1, lf)
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(_, y)| y.is_finite())
        .map(|(k, y)| (*k as f64, *y))
        .unzip();
    let (intercept, slope, r2) = if xs.len() >= 2 {
        stats::linear_fit(&xs, &ys)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(LargeDeviationReport {
        threshold,
        points,
        slope,
        intercept,
        r2,
    })
}
