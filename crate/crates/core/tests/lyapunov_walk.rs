use nalgebra::DMatrix;
use proptest::prelude::*;

use homwalk::decomp::{iwasawa_cocycle, FlagPoint};
use homwalk::group::{left_product, make_measure, parse_measure, sample_word, FiniteMeasure, GroupElement};
use homwalk::lyapunov::{
    boundary_point, clt_diagnostics, estimate_covariance, estimate_lyapunov, estimate_lyapunov_from,
    late_window_oscillation, sigma_kappa_gap_vectors, zariski_warnings, IncrementMode,
};
use homwalk::montecarlo::RandomStream;
use homwalk::subgroup::{parse_subgroup, SubgroupSpec, UnipotentPart};
use homwalk::walk::{
    calibrate_radius, density_probe, empirical_green, large_deviation_decay, return_stats, simulate_walk,
    WalkStart, WalkTrajectory,
};
use homwalk::Error;

const SL2_DENSE: &str = include_str!("../configs/sl2_dense.json");
const SL3_DRIFT: &str = include_str!("../configs/sl3_drift.json");
const SL3_SYMMETRIC: &str = include_str!("../configs/sl3_symmetric.json");
const SL4_DENSE: &str = include_str!("../configs/sl4_dense.json");
const SL3_CODIM1: &str = include_str!("../configs/sl3_codim1.spec.json");

/// Two atoms close to the identity, so that direct products of length 1000
/// stay well conditioned.
fn mild_sl3() -> FiniteMeasure {
    let a = GroupElement::diagonal_exp(&[0.01, 0.0, -0.01]).unwrap();
    let x = DMatrix::from_row_slice(3, 3, &[0.0, 0.04, -0.01, -0.04, 0.0, 0.03, 0.01, -0.03, 0.0]).exp();
    let b = GroupElement::from_positive_det(x * a.matrix()).unwrap();
    make_measure(vec![(0.4, a.matrix().clone()), (0.6, b.matrix().clone())]).unwrap()
}

fn direct_sigma(mu: &FiniteMeasure, eta: &FlagPoint, stream: RandomStream, n: usize) -> Vec<f64> {
    let p = left_product(&sample_word(mu, stream, n)).unwrap();
    iwasawa_cocycle(&p, eta).unwrap().0.into_vec()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn estimate_matches_direct_products() {
    let mu = mild_sl3();
    let eta = FlagPoint::base(3);
    for n in [10, 100, 1000] {
        let est = estimate_lyapunov(&mu, n, 2, 17).unwrap();
        let s0 = direct_sigma(&mu, &eta, RandomStream::new(17, 0), n);
        let s1 = direct_sigma(&mu, &eta, RandomStream::new(17, 1), n);
        let mean: Vec<f64> = s0.iter().zip(&s1).map(|(a, b)| (a + b) / (2.0 * n as f64)).collect();
        assert!(max_diff(est.mean.coords(), &mean) * n as f64 <= 1e-6, "n = {n}");
    }
}

#[test]
fn walk_matches_direct_products() {
    let mu = mild_sl3();
    for spec in [
        SubgroupSpec::trivial_a_prime(3).unwrap(),
        parse_subgroup(SL3_CODIM1).unwrap(),
    ] {
        let eta = FlagPoint::generic(3);
        let start = WalkStart::origin(&spec).with_flag(eta.clone());
        let traj = simulate_walk(&mu, &spec, &start, 1000, RandomStream::new(5, 3)).unwrap();
        for n in [10, 100, 1000] {
            let s = direct_sigma(&mu, &eta, RandomStream::new(5, 3), n);
            assert!(max_diff(&traj.points[n], &spec.project(&s)) < 1e-6, "n = {n}");
        }
    }
}

#[test]
fn trivial_aprime_walk_is_an_isometric_copy_of_the_cocycle() {
    let mu = mild_sl3();
    let spec = SubgroupSpec::trivial_a_prime(3).unwrap();
    let traj = simulate_walk(&mu, &spec, &WalkStart::origin(&spec), 200, RandomStream::new(1, 0)).unwrap();
    let s = direct_sigma(&mu, &FlagPoint::base(3), RandomStream::new(1, 0), 200);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm(&traj.points[200]) - norm(&s)).abs() < 1e-8);
    assert_eq!(traj.points.len(), 201);
    assert!(traj.points[0].iter().all(|x| *x == 0.0));
}

#[test]
fn independent_of_worker_count() {
    let mu = parse_measure(SL3_DRIFT).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_lyapunov(&mu, 500, 37, 99).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.mean.coords(), b.mean.coords());
    assert_eq!(a.stderr, b.stderr);

    let spec = SubgroupSpec::trivial_a_prime(3).unwrap();
    let start = WalkStart::origin(&spec);
    let green = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| empirical_green(&mu, &spec, &start, 3.0, 300, 29, 5).unwrap().values)
    };
    assert_eq!(green(1), green(3));
}

#[test]
fn exponent_independent_of_start_flag() {
    for cfg in [SL2_DENSE, SL3_DRIFT, SL4_DENSE] {
        let mu = parse_measure(cfg).unwrap();
        let d = mu.dim();
        let a = estimate_lyapunov_from(&mu, &FlagPoint::base(d), IncrementMode::Genuine, 2000, 64, 3).unwrap();
        let b = estimate_lyapunov_from(&mu, &FlagPoint::generic(d), IncrementMode::Genuine, 2000, 64, 3).unwrap();
        for i in 0..d {
            let band = 2.0 * (a.stderr[i].powi(2) + b.stderr[i].powi(2)).sqrt();
            assert!((a.mean.coords()[i] - b.mean.coords()[i]).abs() <= band, "d = {d}, i = {i}");
        }
    }
}

#[test]
fn exponent_lies_in_the_weyl_chamber() {
    for cfg in [SL2_DENSE, SL3_DRIFT, SL3_SYMMETRIC, SL4_DENSE] {
        let mu = parse_measure(cfg).unwrap();
        let est = estimate_lyapunov(&mu, 2000, 64, 8).unwrap();
        let m = est.mean.coords();
        for i in 0..m.len() - 1 {
            let tol = 3.0 * (est.stderr[i] + est.stderr[i + 1]);
            assert!(m[i] + tol >= m[i + 1], "{cfg}");
        }
        assert!(m.iter().sum::<f64>().abs() < 1e-12);
    }
}

#[test]
fn symmetric_measure_has_antisymmetric_exponent() {
    let mu = parse_measure(SL3_SYMMETRIC).unwrap();
    let est = estimate_lyapunov(&mu, 5000, 100, 12).unwrap();
    let m = est.mean.coords();
    assert!(m[1].abs() < 4.0 * est.stderr[1]);
    assert!((m[0] + m[2]).abs() < 4.0 * (est.stderr[0] + est.stderr[2]));
}

#[test]
fn antithetic_stream_is_centered() {
    let mu = parse_measure(SL4_DENSE).unwrap();
    let est = estimate_lyapunov_from(&mu, &FlagPoint::base(4), IncrementMode::Antithetic, 2000, 100, 4).unwrap();
    for (m, s) in est.mean.coords().iter().zip(&est.stderr) {
        assert!(m.abs() < 4.0 * s);
    }
}

#[test]
fn covariance_stable_in_horizon() {
    let mu = parse_measure(SL2_DENSE).unwrap();
    let spec = SubgroupSpec::trivial_a_prime(2).unwrap();
    let v: Vec<f64> = [500, 1000, 2000]
        .iter()
        .map(|&n| estimate_covariance(&mu, &spec, n, 2000, 21).unwrap().matrix[(0, 0)])
        .collect();
    for w in v.windows(2) {
        assert!(((w[0] - w[1]) / w[1]).abs() < 0.15, "{v:?}");
    }
    let codim0 = SubgroupSpec::new(2, vec![vec![1.0, -1.0]], UnipotentPart::Full).unwrap();
    assert!(matches!(
        estimate_covariance(&mu, &codim0, 10, 10, 0),
        Err(Error::DegenerateQuotient)
    ));
}

#[test]
fn gap_limit_independent_of_start_flag() {
    let mu = parse_measure(SL3_DRIFT).unwrap();
    let a = sigma_kappa_gap_vectors(&mu, &FlagPoint::base(3), 400, RandomStream::new(2, 0)).unwrap();
    let b = sigma_kappa_gap_vectors(&mu, &FlagPoint::generic(3), 400, RandomStream::new(2, 0)).unwrap();
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.sub(y).norm()).collect();
    assert!(late_window_oscillation(&diff) < 1e-3);
    assert!(late_window_oscillation(&a.iter().map(|v| v.norm()).collect::<Vec<_>>()) < 1e-3);
}

#[test]
fn boundary_points() {
    let mu = parse_measure(SL2_DENSE).unwrap();
    let b = boundary_point(&mu, 200, RandomStream::new(0, 0)).unwrap();
    assert!(b.certificate < 1e-6);
    b.check().unwrap();

    let rot = FiniteMeasure::point_mass(GroupElement::rotation2(0.3));
    let b = boundary_point(&rot, 200, RandomStream::new(0, 0)).unwrap();
    assert!(matches!(b.check(), Err(Error::NoContraction { .. })));

    let diag = FiniteMeasure::point_mass(GroupElement::diagonal_exp(&[0.5, -0.5]).unwrap());
    let b = boundary_point(&diag, 100, RandomStream::new(0, 0)).unwrap();
    assert!(b.flag.angle().min(std::f64::consts::PI - b.flag.angle()) < 1e-12);
}

#[test]
fn zariski_heuristics() {
    let dense = parse_measure(SL2_DENSE).unwrap();
    assert!(zariski_warnings(&dense, 0).unwrap().is_empty());
    let diag = make_measure(vec![
        (0.5, GroupElement::diagonal_exp(&[0.3, -0.3]).unwrap().matrix().clone()),
        (0.5, GroupElement::diagonal_exp(&[-0.1, 0.1]).unwrap().matrix().clone()),
    ])
    .unwrap();
    assert!(!zariski_warnings(&diag, 0).unwrap().is_empty());
    let compact = FiniteMeasure::point_mass(GroupElement::rotation2(1.0));
    assert!(!zariski_warnings(&compact, 0).unwrap().is_empty());
}

#[test]
fn clt_flags_deterministic_measures() {
    let diag = FiniteMeasure::point_mass(GroupElement::diagonal_exp(&[0.5, -0.5]).unwrap());
    let spec = SubgroupSpec::trivial_a_prime(2).unwrap();
    let r = clt_diagnostics(&diag, &spec, 50, 200, 0, None).unwrap();
    assert!(r.degenerate);
}

#[test]
fn zero_quotient_green_curve_is_linear() {
    let mu = parse_measure(SL2_DENSE).unwrap();
    let spec = SubgroupSpec::new(2, vec![vec![1.0, -1.0]], UnipotentPart::Full).unwrap();
    let g = empirical_green(&mu, &spec, &WalkStart::origin(&spec), 1.0, 50, 4, 0).unwrap();
    for (n, v) in g.values.iter().enumerate() {
        assert_eq!(*v, n as f64);
    }
    assert_eq!(g.late_return_fraction, 1.0);
}

#[test]
fn drift_walk_escapes_linearly() {
    let mu = parse_measure(SL3_DRIFT).unwrap();
    let spec = SubgroupSpec::trivial_a_prime(3).unwrap();
    let lyap = estimate_lyapunov(&mu, 5000, 64, 30).unwrap();
    let speed = lyap.mean.norm();
    let n = 10_000;
    for t in 0..8 {
        let traj = simulate_walk(&mu, &spec, &WalkStart::origin(&spec), n, RandomStream::new(31, t)).unwrap();
        let r = traj.points[n].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((r / n as f64 - speed).abs() < 0.05 * speed);
    }
    let g = empirical_green(&mu, &spec, &WalkStart::origin(&spec), 5.0, 2000, 50, 32).unwrap();
    assert_eq!(g.values[1000], g.values[2000]);
    assert_eq!(g.late_return_fraction, 0.0);
}

#[test]
fn recurrent_walk_visits_the_whole_ball() {
    let mu = parse_measure(SL3_SYMMETRIC).unwrap();
    let spec = parse_subgroup(SL3_CODIM1).unwrap();
    let grid: Vec<Vec<f64>> = (-4..=4).map(|i| vec![0.5 * i as f64]).collect();
    let frac = density_probe(&mu, &spec, &WalkStart::origin(&spec), &grid, 0.5, 100_000, 50, 40).unwrap();
    assert!(frac >= 0.9, "{frac}");
}

#[test]
fn recurrence_evidence_independent_of_start_flag() {
    let mu = parse_measure(SL3_SYMMETRIC).unwrap();
    let spec = parse_subgroup(SL3_CODIM1).unwrap();
    let a = WalkStart::origin(&spec);
    let b = WalkStart::origin(&spec).with_flag(FlagPoint::generic(3));
    let r = calibrate_radius(&mu, &spec, &a, 5000, 100, 50, 0.9).unwrap();
    let ga = empirical_green(&mu, &spec, &a, r, 5000, 200, 51).unwrap();
    let gb = empirical_green(&mu, &spec, &b, r, 5000, 200, 52).unwrap();
    let (ea, eb) = (ga.values[5000], gb.values[5000]);
    assert!(((ea - eb) / ea).abs() < 0.1, "{ea} vs {eb}");
    assert!((ga.late_return_fraction - gb.late_return_fraction).abs() < 0.1);
}

#[test]
fn calibration_matches_pooled_quantile() {
    let mu = parse_measure(SL3_DRIFT).unwrap();
    let spec = SubgroupSpec::trivial_a_prime(3).unwrap();
    let start = WalkStart::origin(&spec);
    let r = calibrate_radius(&mu, &spec, &start, 40, 6, 3, 0.5).unwrap();
    let mut norms = Vec::new();
    for t in 0..6 {
        let traj = simulate_walk(&mu, &spec, &start, 40, RandomStream::new(3, t)).unwrap();
        norms.extend(traj.points[30..].iter().map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt()));
    }
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = norms.len();
    let median = 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
    assert!((r - median).abs() < 1e-12);
}

#[test]
fn large_deviation_frequencies_shrink_with_threshold() {
    let mu = parse_measure(SL2_DENSE).unwrap();
    let spec = SubgroupSpec::trivial_a_prime(2).unwrap();
    let drift = spec.project(estimate_lyapunov(&mu, 5000, 64, 60).unwrap().mean.coords());
    let eta = FlagPoint::base(2);
    let lo = large_deviation_decay(&mu, &spec, &eta, &drift, 0.2, 20, 5000, 61).unwrap();
    let hi = large_deviation_decay(&mu, &spec, &eta, &drift, 0.4, 20, 5000, 61).unwrap();
    for ((k, a), (_, b)) in lo.points.iter().zip(&hi.points) {
        assert!(b <= a, "k = {k}");
    }
    assert!(lo.slope < 0.0);
    let too_big = 10.0 * mu.max_atom_norm();
    assert!(large_deviation_decay(&mu, &spec, &eta, &drift, too_big, 20, 100, 0).is_err());
}

#[test]
fn trajectory_csv() {
    let mu = parse_measure(SL3_DRIFT).unwrap();
    let spec = parse_subgroup(SL3_CODIM1).unwrap();
    let traj = simulate_walk(&mu, &spec, &WalkStart::origin(&spec), 5, RandomStream::new(0, 0)).unwrap();
    let csv = traj.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,coord_1");
    assert_eq!(lines.len(), 7);
    assert!(lines[6].starts_with("5,"));
}

fn synthetic(points: Vec<Vec<f64>>) -> WalkTrajectory {
    WalkTrajectory {
        points,
        start_flag: FlagPoint::base(2),
        stream_id: 0,
        mode: IncrementMode::Genuine,
    }
}

proptest! {
    #[test]
    fn return_statistics_invariants(xs in prop::collection::vec(-3.0..3.0f64, 1..200), radius in 0.1..3.0f64) {
        let mut points = vec![vec![0.0]];
        points.extend(xs.iter().map(|x| vec![*x]));
        let rs = return_stats(&synthetic(points), radius).unwrap();
        prop_assert!(rs.return_times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(rs.green_partial.windows(2).all(|w| w[0] <= w[1]));
        let expect: Vec<usize> = (1..=xs.len()).filter(|&n| xs[n - 1].abs() <= radius).collect();
        prop_assert_eq!(&rs.return_times, &expect);
        prop_assert_eq!(rs.last_exit, expect.last().copied().unwrap_or(0));
        prop_assert_eq!(*rs.green_partial.last().unwrap() as usize, expect.len());
    }
}

#[test]
fn return_statistics_examples() {
    let rs = return_stats(&synthetic(vec![vec![0.0]; 11]), 1.0).unwrap();
    assert_eq!(rs.return_times, (1..=10).collect::<Vec<_>>());
    assert_eq!(rs.green_partial[10], 10);
    assert!(return_stats(&synthetic(vec![vec![0.0]; 3]), 0.0).is_err());
}
