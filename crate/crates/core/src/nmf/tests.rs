use super::*;
use alloc::string::ToString;
use proptest::prelude::*;
use rand::Rng as _;

use crate::rng;

fn mixture(user: &str, quarter: u32, theta: &[f64]) -> RoleMixture {
    RoleMixture {
        user: user.into(),
        quarter,
        theta: theta.to_vec(),
    }
}

fn random_matrix(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut r = rng::seeded(seed);
    DMatrix::from_fn(n, d, |_, _| r.random::<f64>())
}

fn assert_monotone(trace: &[f64]) {
    for pair in trace.windows(2) {
        assert!(pair[1] <= pair[0], "objective increased: {pair:?}");
    }
}

#[test]
fn short_lived_users_are_excluded() {
    let th = [0.5, 0.5];
    let ms = vec![mixture("a", 0, &th), mixture("a", 1, &th), mixture("a", 2, &th)];
    let built = build_profile_matrix(&ms, 4, 5, 2).unwrap();
    assert!(built.matrix.users.is_empty());
}

#[test]
fn single_quarter_row_is_unit_vector() {
    let built = build_profile_matrix(&[mixture("u", 0, &[1.0, 0.0, 0.0])], 1, 2, 3).unwrap();
    let row: Vec<f64> = built.matrix.values.row(0).iter().copied().collect();
    assert_eq!(row, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn quarter_major_layout_and_normalisation() {
    let ms = vec![mixture("u", 1, &[0.6, 0.4]), mixture("u", 0, &[0.2, 0.8])];
    let built = build_profile_matrix(&ms, 1, 3, 2).unwrap();
    let m = &built.matrix;
    let norm = math::sqrt(0.2f64 * 0.2 + 0.8 * 0.8 + 0.6 * 0.6 + 0.4 * 0.4);
    assert!((m.values[(0, m.column(1, 0))] - 0.6 / norm).abs() < 1e-15);
    assert!((m.values[(0, m.column(0, 1))] - 0.8 / norm).abs() < 1e-15);
    assert_eq!(m.values[(0, m.column(2, 0))], 0.0);
}

#[test]
fn all_zero_trajectory_is_excluded() {
    let built = build_profile_matrix(&[mixture("z", 0, &[0.0, 0.0])], 1, 1, 2).unwrap();
    assert_eq!(built.excluded, vec!["z".to_string()]);
    assert_eq!(built.matrix.values.nrows(), 0);
}

#[test]
fn out_of_range_quarter_rejected() {
    assert!(build_profile_matrix(&[mixture("u", 3, &[1.0])], 1, 3, 1).is_err());
    assert!(build_profile_matrix(&[mixture("u", 0, &[1.0, 0.0])], 1, 3, 1).is_err());
}

#[test]
fn zero_row_rejected_at_construction() {
    let values = DMatrix::zeros(1, 2);
    assert!(ProfileMatrix::new(vec!["u".into()], 1, 2, values).is_err());
}

#[test]
fn nndsvd_diagonal_aligns_with_dominant_direction() {
    let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let (w, h) = nndsvd_init(&m, 1).unwrap();
    assert!(w[(0, 0)] > 0.0);
    assert_eq!(w[(1, 0)], 0.0);
    assert_eq!(h[(0, 1)], 0.0);
    // The rank-1 product reproduces the dominant entry.
    assert!(((&w * &h)[(0, 0)] - 2.0).abs() < 1e-12);
}

#[test]
fn nndsvd_rejects_bad_input() {
    assert!(nndsvd_init(&DMatrix::zeros(3, 3), 1).is_err());
    assert!(nndsvd_init(&random_matrix(1, 3, 2), 3).is_err());
    assert!(nndsvd_init(&random_matrix(1, 3, 2), 0).is_err());
    let mut neg = random_matrix(1, 3, 2);
    neg[(0, 0)] = -1.0;
    assert!(nndsvd_init(&neg, 1).is_err());
}

#[test]
fn nndsvd_is_deterministic_and_nonnegative() {
    for (n, d) in [(30, 12), (12, 30)] {
        let m = random_matrix(7, n, d);
        let a = nndsvd_init(&m, 5).unwrap();
        let b = nndsvd_init(&m, 5).unwrap();
        let bits = |x: &DMatrix<f64>| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.0), bits(&b.0));
        assert_eq!(bits(&a.1), bits(&b.1));
        assert!(a.0.iter().chain(a.1.iter()).all(|&x| x >= 0.0));
    }
}

#[test]
fn rank_one_recovered() {
    let w = DVector::from_fn(40, |i, _| 0.5 + (i % 7) as f64 * 0.3);
    let h = DVector::from_fn(15, |j, _| 1.0 + (j % 4) as f64 * 0.25);
    let m = &w * h.transpose();
    let params = NmfParams {
        tol: 0.0,
        ..NmfParams::default()
    };
    let model = fit_nmf(&m, 1, &params, None).unwrap();
    let rel = (&m - &model.w * &model.h).norm() / m.norm();
    assert!(rel <= 1e-6, "relative error {rel}");
    assert_monotone(&model.objective);
}

#[test]
fn overcomplete_exact_fit() {
    let mut m = random_matrix(3, 12, 4);
    for mut row in m.row_iter_mut() {
        let n = row.norm();
        row /= n;
    }
    let params = NmfParams {
        max_iter: 2000,
        tol: 0.0,
        ..NmfParams::default()
    };
    let model = fit_nmf(&m, 4, &params, None).unwrap();
    let last = *model.objective.last().unwrap();
    assert!(last <= 1e-8, "objective {last}");
    assert_monotone(&model.objective);
}

#[test]
fn zero_iterations_return_init() {
    let m = random_matrix(5, 6, 4);
    let init = nndsvd_init(&m, 2).unwrap();
    let params = NmfParams {
        max_iter: 0,
        tol: 0.0,
        ..NmfParams::default()
    };
    let model = fit_nmf(&m, 2, &params, Some(init.clone())).unwrap();
    assert_eq!((model.w, model.h), init);
    assert_eq!(model.objective.len(), 1);
}

#[test]
fn non_finite_input_rejected() {
    let mut m = random_matrix(5, 4, 4);
    m[(1, 1)] = f64::NAN;
    assert_eq!(
        fit_nmf(&m, 2, &NmfParams::default(), None),
        Err(Error::NonFinite("NMF input"))
    );
}

#[test]
fn cluster_sweep_keeps_invariants() {
    let m = random_matrix(11, 60, 21);
    for kc in 4..=10 {
        let model = fit_nmf(&m, kc, &NmfParams::default(), None).unwrap();
        assert!(model.w.iter().chain(model.h.iter()).all(|&x| x >= 0.0));
        assert_monotone(&model.objective);
        let (clusters, _) = discretize(&model.w);
        assert_eq!(clusters.len(), 60);
        assert!(clusters.iter().all(|&c| c < kc));
    }
}

#[test]
fn planted_blocks_separate() {
    // Two user groups active in disjoint quarter ranges.
    let mut ms = Vec::new();
    for i in 0..20 {
        let range = if i < 10 { 0..4 } else { 4..8 };
        for q in range {
            ms.push(mixture(&alloc::format!("u{i:02}"), q, &[0.7, 0.3]));
        }
    }
    let built = build_profile_matrix(&ms, 4, 8, 2).unwrap();
    let model = fit_nmf(&built.matrix.values, 2, &NmfParams::default(), None).unwrap();
    let (clusters, _) = discretize(&model.w);
    assert!(clusters[..10].iter().all(|&c| c == clusters[0]));
    assert!(clusters[10..].iter().all(|&c| c == clusters[10]));
    assert_ne!(clusters[0], clusters[10]);
}

#[test]
fn discretize_examples() {
    let w = DMatrix::from_row_slice(3, 2, &[0.1, 0.9, 0.5, 0.5, 0.0, 0.0]);
    let (clusters, zero) = discretize(&w);
    assert_eq!(clusters, vec![1, 0, 0]);
    assert_eq!(zero, vec![2]);
}

fn records_for(user: &str, quarters: &[u32]) -> Vec<ActivityRecord> {
    quarters
        .iter()
        .map(|&q| ActivityRecord {
            user: user.into(),
            quarter: q,
            counts: vec![1, 0],
        })
        .collect()
}

#[test]
fn summary_statistics() {
    let mut records = records_for("a", &[0, 1, 2, 3]);
    records.extend(records_for("b", &[2, 3, 4, 5, 6, 7]));
    records.extend(records_for("c", &[1, 2, 3]));
    let mixtures: Vec<RoleMixture> = records
        .iter()
        .map(|r| {
            let th = if r.user == "c" { [0.1, 0.9] } else { [0.9, 0.1] };
            mixture(&r.user, r.quarter, &th)
        })
        .collect();
    let assignment = ClusterAssignment {
        users: vec!["a".into(), "b".into(), "c".into()],
        clusters: vec![0, 0, 1],
        num_clusters: 3,
    };
    let s = cluster_summary(&assignment, &records, &mixtures, 2, 0.15).unwrap();
    assert_eq!(s[0].size, 2);
    assert!((s[0].fraction - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!((s[0].min_active, s[0].max_active), (Some(4), Some(6)));
    assert_eq!(s[0].median_active, Some(5.0));
    assert_eq!(s[0].mean_active, Some(5.0));
    assert_eq!(s[0].dominant_roles, vec![0]);
    // Peak of 2 members in quarters 2..=3, half-max level 1 spans 0..=7.
    assert_eq!(s[0].dominant_quarters, Some((0, 7)));

    assert_eq!((s[1].min_active, s[1].max_active), (Some(3), Some(3)));
    assert_eq!(s[1].median_active, Some(3.0));
    assert_eq!(s[1].mean_active, Some(3.0));
    assert_eq!(s[1].dominant_roles, vec![1]);

    assert_eq!(s[2].size, 0);
    assert_eq!(s[2].mean_active, None);
    assert_eq!(s[2].dominant_quarters, None);
}

#[test]
fn summary_requires_records() {
    let assignment = ClusterAssignment {
        users: vec!["ghost".into()],
        clusters: vec![0],
        num_clusters: 1,
    };
    assert!(cluster_summary(&assignment, &[], &[], 2, 0.15).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn objective_never_increases(seed in any::<u64>(), n in 5usize..25, d in 3usize..12, kc in 1usize..4) {
        let m = random_matrix(seed, n, d);
        let model = fit_nmf(&m, kc.min(d), &NmfParams { tol: 0.0, max_iter: 60, ..NmfParams::default() }, None).unwrap();
        for pair in model.objective.windows(2) {
            prop_assert!(pair[1] <= pair[0]);
        }
        prop_assert!(model.w.iter().chain(model.h.iter()).all(|&x| x >= 0.0));
    }

    #[test]
    fn discretize_scale_invariant(seed in any::<u64>(), scales in prop::collection::vec(0.01f64..100.0, 8)) {
        let w = random_matrix(seed, 8, 4);
        let mut scaled = w.clone();
        for (i, s) in scales.iter().enumerate() {
            let mut row = scaled.row_mut(i);
            row *= *s;
        }
        prop_assert_eq!(discretize(&w).0, discretize(&scaled).0);
    }
}
