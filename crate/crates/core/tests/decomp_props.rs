use nalgebra::DMatrix;
use proptest::prelude::*;

use homwalk::decomp::{
    cartan_projection, flag_distance, iwasawa_cocycle, iwasawa_decompose, kappa_of_triangular, FlagPoint, RunningProduct,
};
use homwalk::group::{left_product, make_measure, sample_word, GroupElement};
use homwalk::montecarlo::RandomStream;
use homwalk::Error;

fn sl_from(d: usize, entries: &[f64]) -> Option<GroupElement> {
    let mut m = DMatrix::from_row_slice(d, d, &entries[..d * d]);
    let det = m.determinant();
    if det.abs() < 1e-2 {
        return None;
    }
    if det < 0.0 {
        m.row_mut(0).neg_mut();
    }
    GroupElement::from_positive_det(m).ok()
}

fn element(d: usize, scale: f64) -> impl Strategy<Value = GroupElement> {
    prop::collection::vec(-scale..scale, d * d).prop_filter_map("singular", move |v| sl_from(d, &v))
}

fn flag(d: usize) -> impl Strategy<Value = FlagPoint> {
    prop::collection::vec(-1.0..1.0f64, d * d).prop_filter_map("singular", move |v| {
        let m = DMatrix::from_row_slice(d, d, &v);
        if m.determinant().abs() < 1e-2 {
            return None;
        }
        FlagPoint::orthonormalized(&m).ok()
    })
}

fn sized<S: Strategy, F: Fn(usize) -> S>(f: F) -> impl Strategy<Value = (usize, S::Value)> {
    (2usize..=5).prop_flat_map(move |d| (Just(d), f(d)))
}

/// Independent oracle: nalgebra QR of `g F`, with signs read off `diag R`.
fn oracle_sigma(g: &GroupElement, eta: &FlagPoint) -> (Vec<f64>, DMatrix<f64>) {
    let gf = g.matrix() * eta.frame();
    let qr = gf.qr();
    let r = qr.r();
    let mut q = qr.q();
    let d = g.dim();
    let sigma = (0..d).map(|i| r[(i, i)].abs().ln()).collect();
    for i in 0..d {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    (sigma, q)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cocycle_matches_reference_qr((d, (g, eta)) in sized(|d| (element(d, 3.0), flag(d)))) {
        let _ = d;
        let (s, f) = iwasawa_cocycle(&g, &eta).unwrap();
        let (s_ref, q) = oracle_sigma(&g, &eta);
        prop_assert!(max_diff(s.coords(), &s_ref) < 1e-9);
        let f_ref = FlagPoint::from_frame(q).unwrap();
        prop_assert!(flag_distance(&f, &f_ref).unwrap() < 1e-9);
    }

    #[test]
    fn cocycle_identity((_d, (g, h, eta)) in sized(|d| (element(d, 2.0), element(d, 2.0), flag(d)))) {
        let (s_gh, f_gh) = iwasawa_cocycle(&g.mul(&h).unwrap(), &eta).unwrap();
        let (s_h, f_h) = iwasawa_cocycle(&h, &eta).unwrap();
        let (s_g, f_g) = iwasawa_cocycle(&g, &f_h).unwrap();
        prop_assert!(max_diff(s_gh.coords(), s_g.add(&s_h).coords()) < 1e-9);
        prop_assert!(flag_distance(&f_gh, &f_g).unwrap() < 1e-9);
    }

    #[test]
    fn iwasawa_round_trip((_d, g) in (2usize..=8).prop_flat_map(|d| (Just(d), element(d, 10.0)))) {
        let t = iwasawa_decompose(&g).unwrap();
        prop_assert!((t.reconstruct() - g.matrix()).norm() < 1e-10);
        prop_assert!(t.sigma.coords().iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn cartan_matches_singular_values((_d, g) in (2usize..=8).prop_flat_map(|d| (Just(d), element(d, 10.0)))) {
        let k = cartan_projection(&g).unwrap();
        let mut sv: Vec<f64> = g.matrix().clone().singular_values().iter().map(|s| s.ln()).collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert!(max_diff(k.coords(), &sv) < 1e-9);
        prop_assert!(k.is_dominant(1e-12));
    }

    #[test]
    fn exterior_power_kappa_matches_svd((d, g) in (2usize..=8).prop_flat_map(|d| (Just(d), element(d, 10.0)))) {
        let t = iwasawa_decompose(&g).unwrap();
        let k = kappa_of_triangular(d, t.sigma.coords(), t.n.as_slice()).unwrap();
        let mut sv: Vec<f64> = g.matrix().clone().singular_values().iter().map(|s| s.ln()).collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert!(max_diff(&k, &sv) < 1e-9);
    }

    #[test]
    fn cartan_inverse_symmetry((_d, g) in (2usize..=8).prop_flat_map(|d| (Just(d), element(d, 10.0)))) {
        let k = cartan_projection(&g).unwrap();
        let ki = cartan_projection(&g.inverse().unwrap()).unwrap();
        prop_assert!(max_diff(ki.coords(), k.opposition().coords()) < 1e-9);
    }

    #[test]
    fn top_kappa_is_log_operator_norm((_d, g) in sized(|d| element(d, 5.0))) {
        let op = g.matrix().clone().singular_values().max();
        prop_assert!((cartan_projection(&g).unwrap().coords()[0] - op.ln()).abs() < 1e-9);
    }

    #[test]
    fn kappa_subadditive((_d, (g, h)) in sized(|d| (element(d, 3.0), element(d, 3.0)))) {
        let k = cartan_projection(&g.mul(&h).unwrap()).unwrap();
        let kg = cartan_projection(&g).unwrap();
        let kh = cartan_projection(&h).unwrap();
        prop_assert!(k.norm() <= kg.norm() + kh.norm() + 1e-9);
    }

    #[test]
    fn sl2_sigma_is_log_stretch(g in element(2, 5.0), a in 0.0..std::f64::consts::PI) {
        let v = nalgebra::DVector::from_vec(vec![a.cos(), a.sin()]);
        let (s, f) = iwasawa_cocycle(&g, &FlagPoint::from_angle(a)).unwrap();
        prop_assert!((s.coords()[0] - (g.matrix() * &v).norm().ln()).abs() < 1e-9);
        let w = g.matrix() * &v;
        let expect = w[1].atan2(w[0]).rem_euclid(std::f64::consts::PI);
        let diff = (f.angle() - expect).rem_euclid(std::f64::consts::PI);
        prop_assert!(diff.min(std::f64::consts::PI - diff) < 1e-9);
    }

    #[test]
    fn flag_distance_is_symmetric((_d, (a, b)) in sized(|d| (flag(d), flag(d)))) {
        let ab = flag_distance(&a, &b).unwrap();
        prop_assert!((ab - flag_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!(flag_distance(&a, &a).unwrap() < 1e-12);
    }
}

#[test]
fn examples() {
    let d = GroupElement::diagonal_exp(&[1.0, -1.0]).unwrap();
    let (s, f) = iwasawa_cocycle(&d, &FlagPoint::base(2)).unwrap();
    assert!((s.coords()[0] - 1.0).abs() < 1e-12 && (s.coords()[1] + 1.0).abs() < 1e-12);
    assert!(flag_distance(&f, &FlagPoint::base(2)).unwrap() < 1e-12);

    let u = GroupElement::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
    let k = cartan_projection(&u).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((k.coords()[0] - phi.ln()).abs() < 1e-12);

    let r = GroupElement::rotation2(0.7);
    assert!(cartan_projection(&r).unwrap().norm() < 1e-12);
    let (s, f) = iwasawa_cocycle(&r, &FlagPoint::from_angle(0.2)).unwrap();
    assert!(s.norm() < 1e-12);
    assert!((f.angle() - 0.9).abs() < 1e-12);
}

#[test]
fn rejects_bad_input() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
    assert!(matches!(GroupElement::new(m), Err(Error::BadDeterminant { .. })));
    let g = GroupElement::identity(3);
    assert!(matches!(
        iwasawa_cocycle(&g, &FlagPoint::base(2)),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn running_product_matches_direct_product() {
    let a = GroupElement::diagonal_exp(&[0.01, 0.0, -0.01]).unwrap();
    let x = DMatrix::from_row_slice(3, 3, &[0.0, 0.04, -0.01, -0.04, 0.0, 0.03, 0.01, -0.03, 0.0]).exp();
    let b = GroupElement::from_positive_det(x * a.matrix()).unwrap();
    let mu = make_measure(vec![(0.5, a.matrix().clone()), (0.5, b.matrix().clone())]).unwrap();
    let eta = FlagPoint::generic(3);
    for n in [10, 100, 1000] {
        let word = sample_word(&mu, RandomStream::new(9, 0), n);
        let mut rp = RunningProduct::new(&eta);
        for g in &word {
            rp.push(g).unwrap();
        }
        let p = left_product(&word).unwrap();
        let (s_ref, f_ref) = iwasawa_cocycle(&p, &eta).unwrap();
        assert!(max_diff(rp.sigma().coords(), s_ref.coords()) < 1e-6, "n = {n}");
        assert!(flag_distance(&rp.flag(), &f_ref).unwrap() < 1e-6);
        let k_ref = cartan_projection(&p).unwrap();
        let kk = rp.kappa().unwrap();
        assert!(max_diff(kk.coords(), k_ref.coords()) < 1e-6, "n = {n}: {kk:?} vs {k_ref:?}");
    }
}

#[test]
fn left_product_order() {
    let a = GroupElement::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
    let b = GroupElement::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])).unwrap();
    let p = left_product(&[a.clone(), b.clone()]).unwrap();
    assert!((p.matrix() - b.matrix() * a.matrix()).norm() < 1e-14);
}

#[test]
fn sampling_frequencies() {
    let mu = make_measure(vec![
        (0.2, DMatrix::identity(2, 2)),
        (0.8, GroupElement::rotation2(1.0).matrix().clone()),
    ])
    .unwrap();
    let n = 100_000;
    let word = sample_word(&mu, RandomStream::new(3, 0), n);
    let k = word.iter().filter(|g| (g.matrix()[(0, 0)] - 1.0).abs() < 1e-12).count() as f64;
    let p = k / n as f64;
    let se = (0.2 * 0.8 / n as f64).sqrt();
    assert!((p - 0.2).abs() < 4.0 * se, "{p}");

    let again = sample_word(&mu, RandomStream::new(3, 0), 1000);
    assert!(again.iter().zip(&word).all(|(a, b)| a.matrix() == b.matrix()));
}
