use gramctl::linalg::*;
use gramctl::random;
use gramctl::{Error, RankPolicy, SymmetricPsd};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn low_rank(seed: u64) -> DMatrix<f64> {
    let mut rng = random::rng(seed);
    let rows = rng.gen_range(1..=7);
    let cols = rng.gen_range(1..=7);
    let rank = rng.gen_range(0..=rows.min(cols));
    random::uniform_matrix(&mut rng, rows, rank) * random::uniform_matrix(&mut rng, rank, cols)
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    max_abs(&(a - b)) <= tol * max_abs(a).max(max_abs(b)).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn penrose_identities(seed in any::<u64>()) {
        let m = low_rank(seed);
        let p = pinv(&m, RankPolicy::default());
        prop_assert!(close(&(&m * &p * &m), &m, 1e-9));
        prop_assert!(close(&(&p * &m * &p), &p, 1e-9));
        let mp = &m * &p;
        let pm = &p * &m;
        prop_assert!(close(&mp, &mp.transpose(), 1e-9));
        prop_assert!(close(&pm, &pm.transpose(), 1e-9));
    }

    #[test]
    fn range_inclusion_biconditional(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let n = rng.gen_range(2..=7);
        let r = rng.gen_range(1..n);
        let policy = RankPolicy::default();
        let a2 = random::uniform_matrix(&mut rng, n, r) * random::uniform_matrix(&mut rng, r, n);
        let c = random::uniform_matrix(&mut rng, n, n);
        let inside = &a2 * &c;
        let inc = range_inclusion(&inside, &a2, policy).unwrap();
        prop_assert!(inc.included, "defect {}", inc.defect);
        // adjoint bound |A1* x| <= k |A2* x|
        for _ in 0..10 {
            let x = random::uniform_vector(&mut rng, n);
            let lhs = (inside.transpose() * &x).norm();
            let rhs = inc.constant_k * (a2.transpose() * &x).norm();
            prop_assert!(lhs <= rhs * (1.0 + 1e-8) + 1e-10 * x.norm());
        }
        // a direction orthogonal to R(A2) breaks both sides
        let proj = range_projector(&a2, policy);
        let mut w = random::uniform_vector(&mut rng, n);
        w = &w - &proj * &w;
        w /= w.norm();
        let z = random::uniform_vector(&mut rng, n);
        let outside = &inside + &w * z.transpose();
        let inc = range_inclusion(&outside, &a2, policy).unwrap();
        prop_assert!(!inc.included);
        prop_assert!((a2.transpose() * &w).norm() < 1e-10);
        prop_assert!((outside.transpose() * &w).norm() > 1e-3);
    }

    #[test]
    fn semigroup_law(seed in any::<u64>(), s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let mut rng = random::rng(seed);
        let n = rng.gen_range(1..=8);
        let a = random::uniform_matrix(&mut rng, n, n) * 2.0;
        let lhs = expm(&a, s + t).unwrap();
        let rhs = expm(&a, s).unwrap() * expm(&a, t).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-11));
        prop_assert_eq!(expm(&a, 0.0).unwrap(), DMatrix::identity(n, n));
    }

    #[test]
    fn stable_systems_have_negative_type(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let sys = random::stable_system_sized(&mut rng, 8, 3);
        let w = sys.stability_margin();
        prop_assert!(w > 0.0);
        let m = sys.growth_constant().unwrap();
        prop_assert!(m >= 1.0 && m.is_finite());
        for k in 1..=8 {
            let t = k as f64 * 0.125;
            prop_assert!(op_norm(&expm(sys.a(), t).unwrap()) <= m * (-w * t).exp() * (1.0 + 1e-12));
        }
        prop_assert!(op_norm(&expm(sys.a(), 60.0 / w).unwrap()) < 1e-6 * m);
    }

    #[test]
    fn psd_sqrt_squares_back(seed in any::<u64>()) {
        let m = low_rank(seed);
        let psd = SymmetricPsd::from_symmetrized(&(&m * m.transpose()), RankPolicy::default()).unwrap();
        let r = psd_sqrt(&psd);
        prop_assert!(close(&(r.matrix() * r.matrix()), psd.matrix(), 1e-9));
        prop_assert_eq!(r.rank(), psd.rank());
        prop_assert!(r.eigenvalues().iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn rank_one_sqrt_oracle() {
    let v = DVector::from_vec(vec![1.0, -2.0, 2.0]);
    let m = SymmetricPsd::new(&v * v.transpose(), RankPolicy::default()).unwrap();
    let expect = &v * v.transpose() / v.norm();
    assert!(close(psd_sqrt(&m).matrix(), &expect, 1e-14));
    assert_eq!(m.rank(), 1);
    assert!(close(&m.pinv(), &(&v * v.transpose() / v.norm().powi(4)), 1e-14));
}

#[test]
fn psd_validation() {
    let p = RankPolicy::default();
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(matches!(SymmetricPsd::new(asym, p), Err(Error::NotSymmetric { .. })));
    let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(matches!(SymmetricPsd::new(neg, p), Err(Error::NotPsd { .. })));
    let nan = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
    assert!(SymmetricPsd::new(nan, p).is_err());
    assert!(RankPolicy::new(0.0).is_err());
    assert!(RankPolicy::new(1.5).is_err());
}

#[test]
fn pinv_of_zero_and_diagonal() {
    let p = RankPolicy::default();
    assert_eq!(pinv(&DMatrix::zeros(2, 3), p), DMatrix::zeros(3, 2));
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0, 4.0]));
    let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0, 0.25]));
    assert!(close(&pinv(&d, p), &want, 1e-15));
}

#[test]
fn commuting_composition() {
    let p = RankPolicy::default();
    let mut rng = random::rng(7);
    let v = random::orthogonal(&mut rng, 4);
    let a1 = &v * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0])) * v.transpose();
    let a2 = SymmetricPsd::from_symmetrized(
        &(&v * DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 3.0, 0.0])) * v.transpose()),
        p,
    )
    .unwrap();
    let c = commuting_pinv_compose(&a1, &a2, p).unwrap();
    let want = &v * DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 2.0, 0.0, 0.0])) * v.transpose();
    assert!(close(&c, &want, 1e-12));
    assert!(close(&c, &(&a1 * a2.pinv()), 1e-12));
    let other = random::uniform_matrix(&mut rng, 4, 4);
    assert!(commuting_pinv_compose(&other, &a2, p).is_err());
}
