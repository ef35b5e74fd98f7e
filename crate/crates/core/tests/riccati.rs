use gramctl::energy::HGeometry;
use gramctl::gramian::{gramian_algebraic, gramian_infinite};
use gramctl::models::SpectralPreset;
use gramctl::random;
use gramctl::riccati::*;
use gramctl::{LinearSystem, RankPolicy};
use nalgebra::{DMatrix, DVector};

fn seeded_contexts(count: usize, seed: u64) -> Vec<RiccatiContext> {
    let mut rng = random::rng(seed);
    let mut out = Vec::new();
    let mut draws = 0;
    while out.len() < count {
        draws += 1;
        assert!(draws < 10 * count, "too many poorly conditioned draws");
        let sys = random::stable_system_sized(&mut rng, 6, 3);
        let w = sys.stability_margin();
        // shortest horizon at which Q_t is comfortably invertible; finite
        // differences of Q_t⁺ lose about cond(Q_t)·ε
        if let Some(ctx) = [0.25, 0.5, 1.0, 2.0].iter().find_map(|c| {
            let ctx = RiccatiContext::new(&sys, c / w, RankPolicy::default()).ok()?;
            let ev = ctx.q_t(ctx.t0()).ok()?.eigenvalues().clone();
            (ev.min() >= 1e-6 * ev.max()).then_some(ctx)
        }) {
            out.push(ctx);
        }
    }
    out
}

fn horizon_grid(ctx: &RiccatiContext, points: usize) -> Vec<f64> {
    let lo = ctx.t0();
    let hi = 4.0 / ctx.system().stability_margin();
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

#[test]
fn pv_solves_riccati_in_h_and_x() {
    let cfg = ResidualConfig::default();
    for (i, ctx) in seeded_contexts(20, 11).iter().enumerate() {
        let times = horizon_grid(ctx, 6);
        let h = riccati_residual_h(ctx, &ctx.pv_family(), &times, &cfg).unwrap();
        assert!(h.passed, "system {i}: H residual {:e}", h.max_relative);
        let x = riccati_residual_x(ctx, &ctx.rv_family(), &times, &cfg).unwrap();
        assert!(x.passed, "system {i}: X residual {:e}", x.max_relative);
        let d = pv_derivative_identity(ctx, &times, &cfg).unwrap();
        assert!(d.passed, "system {i}: derivative identity {:e}", d.max_relative);
    }
}

#[test]
fn shifted_family_is_rejected() {
    let cfg = ResidualConfig::default();
    for ctx in seeded_contexts(10, 12) {
        let times = horizon_grid(&ctx, 4);
        let r = riccati_residual_h(&ctx, &ctx.pv_family().shifted(1.0), &times, &cfg).unwrap();
        assert!(r.max_relative >= 1e-2, "{:e}", r.max_relative);
    }
}

#[test]
fn residual_against_wrong_system_is_positive() {
    let cfg = ResidualConfig::default();
    let ctxs = seeded_contexts(2, 13);
    let wrong = ctxs[1].clone();
    let n = ctxs[0].system().dim();
    if wrong.system().dim() == n {
        let r = riccati_residual_x(&ctxs[0], &wrong.rv_family(), &horizon_grid(&ctxs[0], 3), &cfg).unwrap();
        assert!(!r.passed);
    }
    let sys = LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -2.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
    )
    .unwrap();
    let other = LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[-1.5, 0.0, 0.4, -0.7]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
    )
    .unwrap();
    let ctx = RiccatiContext::new(&sys, 0.2, RankPolicy::default()).unwrap();
    let octx = RiccatiContext::new(&other, 0.2, RankPolicy::default()).unwrap();
    let r = riccati_residual_x(&ctx, &octx.rv_family(), &[0.5, 1.0, 2.0], &cfg).unwrap();
    assert!(!r.passed && r.max_relative > 1e-2);
}

#[test]
fn pv_norm_is_non_increasing_and_h_symmetric() {
    for ctx in seeded_contexts(20, 14) {
        let times = horizon_grid(&ctx, 10);
        assert!(pv_norm_monotonicity(&ctx, &times).unwrap().non_increasing);
        let s = h_symmetry_check(&ctx, &ctx.pv_family(), &times).unwrap();
        assert!(s.symmetric && s.nonnegative, "{s:?}");
    }
}

#[test]
fn pv_factored_form_agrees() {
    for ctx in seeded_contexts(10, 15) {
        for t in horizon_grid(&ctx, 3) {
            let a = build_pv(&ctx, t).unwrap();
            let b = build_pv_factored(&ctx, t).unwrap();
            let scale = ctx.geometry().op_norm(&a);
            assert!(ctx.geometry().op_norm(&(a - b)) <= 1e-8 * scale);
        }
    }
}

#[test]
fn pv_blows_up_near_zero() {
    for ctx in seeded_contexts(10, 16) {
        let r = pv_blowup_check(&ctx, 50.0).unwrap();
        assert!(r.diverging, "{r:?}");
    }
}

#[test]
fn pv_tends_to_identity_on_h() {
    for ctx in seeded_contexts(5, 17) {
        let t = 40.0 / ctx.system().stability_margin();
        let p = build_pv(&ctx, t).unwrap();
        let n = p.nrows();
        let gap = ctx.geometry().op_norm(&(p - DMatrix::identity(n, n)));
        assert!(gap < 1e-8, "{gap:e}");
    }
}

#[test]
fn reconstruction_accepts_pv_and_rejects_doubled() {
    for ctx in seeded_contexts(5, 18) {
        let grid = horizon_grid(&ctx, 5);
        let t0 = grid[0];
        let r = uniqueness_reconstruction(&ctx, &ctx.pv_family(), t0, &grid, 1e-4).unwrap();
        assert!(r.passed, "{r:?}");
        let bad = uniqueness_reconstruction(&ctx, &ctx.pv_family().scaled(2.0), t0, &grid, 1e-4).unwrap();
        assert!(!bad.passed);
        assert!(bad.entries.iter().skip(1).all(|e| e.gramian_error > 1e-3));
    }
}

#[test]
fn lyapunov_family_and_uniqueness() {
    let mut rng = random::rng(19);
    for _ in 0..20 {
        let sys = random::stable_system_sized(&mut rng, 6, 3);
        let qi = gramian_infinite(&sys, RankPolicy::default()).unwrap();
        let alg = lyapunov_residual_algebraic(&sys, qi.matrix(), 1e-10).unwrap();
        assert!(alg.passed, "{alg:?}");
        let s = sys.clone();
        let q = qi.clone();
        let fam = move |t: f64| Ok(gramian_algebraic(&s, &q, t)?.matrix().clone());
        let w = sys.stability_margin();
        let d = lyapunov_residual_differential(&sys, fam, &[0.1 / w, 1.0 / w, 4.0 / w], 1e-4, 1e-7).unwrap();
        assert!(d.passed, "{d:?}");
        let u = lyapunov_uniqueness(&sys, qi.matrix(), 5, 1e-3, 1e-10, 3).unwrap();
        assert!(u.passed, "{u:?}");
    }
}

fn spectral_ctx(order: usize) -> RiccatiContext {
    let sys = SpectralPreset::LandauGinzburg
        .build(order)
        .unwrap()
        .to_linear_system()
        .unwrap();
    RiccatiContext::new(&sys, 0.05, RankPolicy::default()).unwrap()
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(v))
}

#[test]
fn commuting_family_random_diagonal_k() {
    let ctx = spectral_ctx(6);
    let cfg = ResidualConfig::default();
    let mut rng = random::rng(20);
    for _ in 0..20 {
        let k: Vec<f64> = (0..6).map(|_| 3.0 * random::uniform_vector(&mut rng, 1)[0].abs()).collect();
        let fam = commuting_family(&ctx, &diag(&k), 1e-6).unwrap();
        let t1 = fam.t1();
        let times: Vec<f64> = [0.05, 0.2, 0.6, 1.5].iter().map(|d| t1 + d).collect();
        let r = riccati_residual_commuting(&ctx, &fam.candidate(), &times, &cfg).unwrap();
        assert!(r.residual.passed && r.consistent, "{:e} {:e}", r.residual.max_relative, r.rhs_consistency);
        let t_star = t1 + 0.3;
        let rl = recover_l(&ctx, &fam.candidate(), t_star, &[0.0, 0.2, 0.5, 1.0, 2.0], &cfg).unwrap();
        assert!(rl.passed, "{rl:?}");
        let e = gramctl::linalg::expm(ctx.system().a(), t_star).unwrap();
        let expect = &e * fam.k() * &e;
        assert!((&rl.l - &expect).abs().max() < 1e-6 * expect.abs().max().max(1.0));
    }
}

#[test]
fn pv_is_the_commuting_family_with_identity() {
    let ctx = spectral_ctx(6);
    let fam = commuting_family(&ctx, &DMatrix::identity(6, 6), 1e-6).unwrap();
    for t in [0.1, 0.5, 2.0] {
        let a = fam.eval(t).unwrap();
        let b = build_pv(&ctx, t).unwrap();
        assert!((a - b).abs().max() < 1e-10);
    }
}

#[test]
fn projection_biconditional() {
    let ctx = spectral_ctx(4);
    let cfg = ResidualConfig::default();
    let geom: &HGeometry = ctx.geometry();
    let q_inf = geom.q_inf().matrix().clone();
    let mut rng = random::rng(21);
    let masks: [[f64; 4]; 5] = [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 1.0],
    ];
    let mut pairs = 0;
    let mut failures = 0;
    for mask in masks {
        let p = diag(&mask);
        for mixing in [false, true] {
            for _ in 0..2 {
                let k = if mixing {
                    // Q_∞M with M symmetric PSD coupling the first two modes is
                    // H-symmetric and non-negative but not diagonal
                    let r: Vec<f64> = (0..4).map(|_| 1.0 + random::uniform_vector(&mut rng, 1)[0].abs()).collect();
                    let mut m = diag(&r);
                    m[(0, 1)] = 0.8;
                    m[(1, 0)] = 0.8;
                    &q_inf * m
                } else {
                    diag(&(0..4).map(|_| random::uniform_vector(&mut rng, 1)[0].abs()).collect::<Vec<_>>())
                };
                let fam = commuting_family(&ctx, &k, 1e-6).unwrap();
                let times: Vec<f64> = [0.02, 0.1, 0.4].iter().map(|d| fam.t1().max(0.01) + d).collect();
                let r = projected_solution_check(&ctx, &fam.candidate(), &p, &times, &cfg).unwrap();
                assert!(r.consistent, "mask {mask:?} mixing {mixing}: {r:?}");
                pairs += 1;
                if !r.is_solution {
                    failures += 1;
                    assert!(r.witness.is_some());
                }
            }
        }
    }
    assert_eq!(pairs, 20);
    assert!(failures >= 1);
}

#[test]
fn projection_rejects_bad_operators() {
    let ctx = spectral_ctx(3);
    let cfg = ResidualConfig::default();
    let s = ctx.pv_family();
    let not_proj = diag(&[2.0, 0.0, 1.0]);
    assert!(projected_solution_check(&ctx, &s, &not_proj, &[1.0], &cfg).is_err());
    let rot = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
    assert!(projected_solution_check(&ctx, &s, &rot, &[1.0], &cfg).is_err());
}
