use ivkp::akp::{conditional_cv, AkpGeometry, CriticalValueTable};
use ivkp::arar::{draw_zeta, ArArMoments};
use ivkp::dist::{chi2_cdf, chi2_quantile};
use ivkp::linalg::{nearest_kp, rearrange, vec, SymMatrix};
use ivkp::model::{build_scores, IvDataset, NullProblem};
use ivkp::selection::kp_distance_stat;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn pd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let b = normal(rng, d, d);
    &b * b.transpose() + DMatrix::identity(d, d) * 0.2
}

fn dataset(seed: u64, n: usize, k: usize, m_w: usize) -> IvDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zbar = normal(&mut rng, n, k);
    let mut e = normal(&mut rng, n, 2 + m_w);
    for i in 0..n {
        let s = 0.5 + zbar.row(i).norm() * rng.random::<f64>();
        e.row_mut(i).scale_mut(s);
    }
    let w = &zbar * normal(&mut rng, k, m_w) * 0.4 + e.columns(2, m_w);
    let yt = &zbar * normal(&mut rng, k, 1) * 0.4 + e.columns(1, 1);
    let y = (&yt * 0.5 + &w * DVector::from_element(m_w, 0.1)).column(0) + e.column(0);
    IvDataset::new(y, yt, w, zbar).unwrap()
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=3, 2usize..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rearranged_kronecker_is_rank_one((p, k) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = normal(&mut rng, p, p);
        let h = normal(&mut rng, k, k);
        let r = rearrange(&g.kronecker(&h), p, k).unwrap();
        let outer = vec(&g) * vec(&h).transpose();
        prop_assert!((r - outer).amax() < 1e-12);
    }

    #[test]
    fn nearest_kp_recovers_exact_products((p, k) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = pd(&mut rng, p);
        let h = pd(&mut rng, k);
        let a = g.kronecker(&h);
        let kp = nearest_kp(&SymMatrix::new(a.clone()).unwrap(), p, k).unwrap();
        prop_assert!((kp.kron() - &a).norm() < 1e-9 * a.norm());
        prop_assert!((kp.g.matrix()[(0, 0)] - 1.0).abs() < 1e-12);
        prop_assert!(kp.g.is_positive_definite() && kp.h.is_positive_definite());
    }

    #[test]
    fn nearest_kp_residual_is_tail_energy((p, k) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = SymMatrix::new(pd(&mut rng, p * k)).unwrap();
        let kp = nearest_kp(&a, p, k).unwrap();
        let tail: f64 = kp.sigma[1..].iter().map(|s| s * s).sum();
        prop_assert!((kp.residual.powi(2) - tail).abs() <= 1e-9 * a.matrix().norm_squared());
        let direct = (a.matrix() - kp.kron()).norm();
        prop_assert!((direct - kp.residual).abs() <= 1e-9 * (1.0 + direct));
    }

    #[test]
    fn conditional_cv_is_monotone_and_bounded(a in 0.0f64..2000.0, b in 0.0f64..2000.0) {
        let t = CriticalValueTable::embedded_alpha05_df4();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (qa, qb) = (conditional_cv(&t, lo).unwrap(), conditional_cv(&t, hi).unwrap());
        prop_assert!(qa <= qb);
        prop_assert!((0.0..=9.48).contains(&qa) && qb <= 9.48);
    }

    #[test]
    fn table_csv_round_trips(steps in prop::collection::vec((0.01f64..5.0, 0.0f64..0.5), 1..30)) {
        // Build a valid df=1 table ending at the chi-square quantile.
        let mut rows = Vec::new();
        let (mut k, mut q) = (0.0, 0.0);
        for (dk, dq) in steps {
            k += dk;
            q = f64::min(q + dq, 3.84);
            rows.push((k, q));
        }
        rows.push((k + 1.0, 3.8415));
        let t = CriticalValueTable::new(0.05, 1, rows).unwrap();
        let back = CriticalValueTable::from_csv_str(&t.to_csv_string()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn chi2_quantile_inverts_cdf(prob in 0.001f64..0.999, df in 1usize..30) {
        let x = chi2_quantile(prob, df).unwrap();
        prop_assert!((chi2_cdf(x, df).unwrap() - prob).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smallest_root_bounds_the_profile(seed in any::<u64>(), k in 2usize..=4, gamma in -20.0f64..20.0) {
        let data = dataset(seed, 60, k, 1);
        let scores = build_scores(&NullProblem::new(data, DVector::zeros(1), 0.05).unwrap()).unwrap();
        let geo = AkpGeometry::new(&scores).unwrap();
        let roots = geo.roots().unwrap();
        prop_assert!(roots.iter().all(|r| *r >= 0.0));
        prop_assert!(roots.windows(2).all(|w| w[0] >= w[1]));
        let profile = geo.profile(&DVector::from_element(1, gamma)).unwrap();
        prop_assert!(profile >= roots[roots.len() - 1] * (1.0 - 1e-10) - 1e-12);
        prop_assert!(profile <= roots[0] * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn kp_distance_is_nonnegative_and_scale_free(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let data = dataset(seed, 60, 3, 1);
        let scaled = IvDataset::new(
            data.y() * scale,
            data.y_tested() * scale,
            data.w() * scale,
            data.zbar().clone(),
        ).unwrap();
        let s1 = build_scores(&NullProblem::new(data, DVector::zeros(1), 0.05).unwrap()).unwrap();
        let s2 = build_scores(&NullProblem::new(scaled, DVector::zeros(1), 0.05).unwrap()).unwrap();
        let (k1, k2) = (kp_distance_stat(&s1).unwrap(), kp_distance_stat(&s2).unwrap());
        prop_assert!(k1 >= 0.0);
        prop_assert!((k1 - k2).abs() <= 1e-7 * (1.0 + k1));
    }

    #[test]
    fn har_beta_is_a_projection_of_har_full(
        seed in any::<u64>(),
        k in 2usize..=5,
        gamma in -10.0f64..10.0,
        a in 0.0f64..1.0,
        zeta_seed in any::<u64>(),
    ) {
        let data = dataset(seed, 50, k, 1);
        let mom = ArArMoments::new(&data, &DVector::from_element(1, 0.2)).unwrap();
        let full = mom.har_full(&[gamma]).unwrap();
        let beta = mom.har_beta(&[gamma], a, &draw_zeta(zeta_seed, k, 1)).unwrap();
        prop_assert!(beta >= 0.0);
        prop_assert!(beta <= full * (1.0 + 1e-10) + 1e-10);
    }

    #[test]
    fn moment_covariance_is_psd(seed in any::<u64>(), gamma in -10.0f64..10.0, m_w in 1usize..=2) {
        let data = dataset(seed, 40, 3, m_w);
        let mom = ArArMoments::new(&data, &DVector::zeros(1)).unwrap();
        let g = vec![gamma; m_w];
        let (_, sigma) = mom.gbar_sigma(&g).unwrap();
        prop_assert!(sigma.min_eigenvalue() >= -1e-10 * (1.0 + sigma.matrix().trace()));
    }
}
