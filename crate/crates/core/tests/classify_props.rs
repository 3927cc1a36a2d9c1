use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use homwalk::classify::{classify, distance_to_subspace, Reason, VerdictKind, DEFAULT_Z};
use homwalk::decomp::AVector;
use homwalk::lyapunov::LyapunovEstimate;
use homwalk::subgroup::{SubgroupSpec, UnipotentPart};
use homwalk::Error;

fn traceless(v: Vec<f64>) -> Vec<f64> {
    AVector::centered(v).into_vec()
}

fn estimate(mean: Vec<f64>, se: Vec<f64>) -> LyapunovEstimate {
    LyapunovEstimate::from_parts(AVector::centered(mean), se, 1000, 100).unwrap()
}

fn rank(k: VerdictKind) -> u8 {
    match k {
        VerdictKind::Recurrent => 0,
        VerdictKind::Indeterminate => 1,
        VerdictKind::Transient => 2,
    }
}

/// `(d, basis of a', mean, stderr)` with `dim a' = k`.
fn setup() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (2usize..=6)
        .prop_flat_map(|d| (Just(d), 0..d))
        .prop_flat_map(|(d, k)| {
            (
                Just(d),
                prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), k),
                prop::collection::vec(-1.0..1.0f64, d),
                prop::collection::vec(1e-4..0.05f64, d),
            )
        })
        .prop_filter_map("dependent basis", |(d, b, m, s)| {
            let b: Vec<Vec<f64>> = b.into_iter().map(traceless).collect();
            let spec = SubgroupSpec::new(d, b.clone(), UnipotentPart::Full).ok()?;
            let mat = DMatrix::from_fn(d, b.len(), |i, j| b[j][i]);
            let ok = b.is_empty() || mat.singular_values().min() > 1e-3;
            ok.then_some((spec.dim(), b, m, s))
        })
}

/// Least-squares oracle: `min_x |B x - v|` through nalgebra's SVD solve.
fn ls_distance(v: &[f64], basis: &[Vec<f64>]) -> f64 {
    let d = v.len();
    let vv = DVector::from_column_slice(v);
    if basis.is_empty() {
        return vv.norm();
    }
    let b = DMatrix::from_fn(d, basis.len(), |i, j| basis[j][i]);
    let x = b.clone().svd(true, true).solve(&vv, 1e-14).unwrap();
    (b * x - vv).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn distance_matches_least_squares((_d, b, m, _s) in setup()) {
        let v = AVector::centered(m);
        let basis: Vec<AVector> = b.iter().map(|x| AVector::centered(x.clone())).collect();
        let got = distance_to_subspace(&v, &basis).unwrap();
        prop_assert!((got - ls_distance(v.coords(), &b)).abs() < 1e-10);
    }

    #[test]
    fn verdict_ignores_choice_of_basis((d, b, m, s) in setup(), mix in prop::collection::vec(-1.0..1.0f64, 36)) {
        let k = b.len();
        let mut t = DMatrix::from_fn(k, k, |i, j| mix[i * 6 + j]);
        t += DMatrix::identity(k, k) * 3.0;
        let b2: Vec<Vec<f64>> = (0..k)
            .map(|j| (0..d).map(|i| (0..k).map(|l| b[l][i] * t[(l, j)]).sum()).collect())
            .collect();
        let s1 = SubgroupSpec::new(d, b, UnipotentPart::Full).unwrap();
        let s2 = SubgroupSpec::new(d, b2, UnipotentPart::Full).unwrap();
        let est = estimate(m, s);
        let v1 = classify(&s1, &est, DEFAULT_Z).unwrap();
        let v2 = classify(&s2, &est, DEFAULT_Z).unwrap();
        prop_assert!((v1.distance_to_aprime - v2.distance_to_aprime).abs() < 1e-10);
        let margin = (v1.distance_to_aprime - v1.threshold).abs().min((v1.distance_to_aprime - 2.0 * v1.threshold).abs());
        if margin > 1e-9 {
            prop_assert_eq!(v1.kind, v2.kind);
            prop_assert_eq!(v1.reason, v2.reason);
        }
    }

    #[test]
    fn moving_off_aprime_never_helps_recurrence((d, b, m, s) in setup(), c in 1.0..10.0f64) {
        let spec = SubgroupSpec::new(d, b.clone(), UnipotentPart::Full).unwrap();
        let mean = AVector::centered(m);
        // split the mean into its a' part and the rest, then stretch the rest
        let basis: Vec<AVector> = b.iter().map(|x| AVector::centered(x.clone())).collect();
        let on = spec.a_prime_orthonormal();
        let mut inside = vec![0.0; d];
        for u in on {
            let p: f64 = u.iter().zip(mean.coords()).map(|(a, b)| a * b).sum();
            for (x, y) in inside.iter_mut().zip(u) {
                *x += p * y;
            }
        }
        let far: Vec<f64> = mean.coords().iter().zip(&inside).map(|(m, i)| i + c * (m - i)).collect();
        let v1 = classify(&spec, &estimate(mean.coords().to_vec(), s.clone()), DEFAULT_Z).unwrap();
        let v2 = classify(&spec, &estimate(far.clone(), s), DEFAULT_Z).unwrap();
        prop_assert!(v2.distance_to_aprime >= v1.distance_to_aprime - 1e-12);
        prop_assert!(rank(v2.kind) >= rank(v1.kind));
        let d2 = distance_to_subspace(&AVector::centered(far), &basis).unwrap();
        prop_assert!((d2 - v2.distance_to_aprime).abs() < 1e-10);
    }

    #[test]
    fn structural_rules((d, b, m, s) in setup()) {
        let est = estimate(m, s);
        let proper = SubgroupSpec::new(d, b.clone(), UnipotentPart::Proper).unwrap();
        let v = classify(&proper, &est, DEFAULT_Z).unwrap();
        prop_assert_eq!((v.kind, v.reason), (VerdictKind::Transient, Reason::ProperUnipotent));

        let spec = SubgroupSpec::new(d, b, UnipotentPart::Full).unwrap();
        let v = classify(&spec, &est, DEFAULT_Z).unwrap();
        prop_assert_eq!(v.codim, spec.codim());
        if v.codim >= 3 {
            prop_assert_eq!(v.kind, VerdictKind::Transient);
        }
        prop_assert_eq!(&v, &classify(&spec, &est, DEFAULT_Z).unwrap());
    }
}

#[test]
fn examples() {
    let codim1 = SubgroupSpec::new(3, vec![vec![1.0, 0.0, -1.0]], UnipotentPart::Full).unwrap();
    let on_line = estimate(vec![0.5, 0.0, -0.5], vec![0.01; 3]);
    let v = classify(&codim1, &on_line, DEFAULT_Z).unwrap();
    assert_eq!((v.kind, v.reason), (VerdictKind::Recurrent, Reason::CriterionMet));
    assert!(v.distance_to_aprime < 1e-12);

    let off = estimate(vec![0.6, -0.25, -0.35], vec![0.001; 3]);
    let v = classify(&codim1, &off, DEFAULT_Z).unwrap();
    assert_eq!((v.kind, v.reason), (VerdictKind::Transient, Reason::DriftOffAprime));

    // distance just above the threshold: ambiguous band
    let e = (1.0f64 / 6.0).sqrt();
    let se: f64 = 0.01;
    let t = DEFAULT_Z * (3.0 * se * se).sqrt() + 1e-9;
    let dist = 1.5 * t;
    let mean = vec![dist * e, -2.0 * dist * e, dist * e];
    let v = classify(&codim1, &estimate(mean, vec![se; 3]), DEFAULT_Z).unwrap();
    assert_eq!((v.kind, v.reason), (VerdictKind::Indeterminate, Reason::StatisticallyAmbiguous));

    let trivial4 = SubgroupSpec::trivial_a_prime(4).unwrap();
    let v = classify(&trivial4, &estimate(vec![0.0; 4], vec![0.01; 4]), DEFAULT_Z).unwrap();
    assert_eq!((v.kind, v.reason), (VerdictKind::Transient, Reason::CodimAtLeast3));
}

#[test]
fn rejects_bad_input() {
    let spec = SubgroupSpec::trivial_a_prime(3).unwrap();
    let est = estimate(vec![1.0, 0.0, -1.0, 0.0], vec![0.1; 4]);
    assert!(matches!(classify(&spec, &est, DEFAULT_Z), Err(Error::DimensionMismatch { .. })));
    let est = estimate(vec![1.0, 0.0, -1.0], vec![0.1; 3]);
    assert!(classify(&spec, &est, 0.0).is_err());
    let dup = vec![AVector::centered(vec![1.0, -1.0, 0.0]), AVector::centered(vec![2.0, -2.0, 0.0])];
    assert!(matches!(
        distance_to_subspace(&AVector::zeros(3), &dup),
        Err(Error::DependentBasis)
    ));
    assert!(matches!(
        SubgroupSpec::new(3, vec![vec![1.0, 1.0, 1.0]], UnipotentPart::Full),
        Err(Error::NotTraceless(_))
    ));
}
