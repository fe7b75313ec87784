//! Property tests for the crate-wide invariants.

use num_complex::Complex64;
use proptest::prelude::*;

use cckit::channel::{steering_vector, ArrayGeometry, CsiMatrix};
use cckit::constraints::{penalty, penalty_gradient, Constraint, ConstraintKind};
use cckit::features::{extract_features, ScalingMode};
use cckit::mat::{norm, Mat};
use cckit::metrics::{continuity, kruskal_stress, neighbor_ranks, trustworthiness};
use cckit::scenario::{generate_trajectory, ScenarioConfig, TrajectoryConfig};

fn points_strategy(n: usize, d: usize) -> impl Strategy<Value = Mat> {
    proptest::collection::vec(-100.0f64..100.0, n * d)
        .prop_map(move |v| Mat::from_fn(n, d, |r, c| v[r * d + c]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_vector_entries_are_unit_modulus(
        sin_angle in -1.0f64..=1.0,
        m in 1usize..24,
        spacing in 0.1f64..2.0,
    ) {
        let geometry = ArrayGeometry { num_antennas: m, element_spacing: spacing, ..ArrayGeometry::default() };
        let v = steering_vector(sin_angle, &geometry).unwrap();
        for c in v {
            prop_assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn features_are_unit_norm_nonnegative_and_scale_invariant(
        rows in proptest::collection::vec(
            proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 8),
            1..6
        ),
        scale_re in -4.0f64..4.0,
        scale_im in -4.0f64..4.0,
    ) {
        let c = Complex64::new(scale_re, scale_im);
        prop_assume!(c.norm() > 1e-3);
        let mut nonzero = Vec::new();
        for row in &rows {
            let r: Vec<Complex64> = row.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            if r.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-12 {
                nonzero.push(r);
            }
        }
        prop_assume!(!nonzero.is_empty());
        let n = nonzero.len();
        let mut csi = CsiMatrix::zeros(n, 8);
        let mut scaled = CsiMatrix::zeros(n, 8);
        for (i, row) in nonzero.iter().enumerate() {
            csi.row_mut(i).copy_from_slice(row);
            let s: Vec<Complex64> = row.iter().map(|&z| c * z).collect();
            scaled.row_mut(i).copy_from_slice(&s);
        }
        let fs = extract_features(&csi, ScalingMode::UnitNorm).unwrap();
        let fs_scaled = extract_features(&scaled, ScalingMode::UnitNorm).unwrap();
        for i in 0..n {
            prop_assert!((norm(fs.entries.row(i)) - 1.0).abs() < 1e-9);
            prop_assert!(fs.entries.row(i).iter().all(|&v| v >= 0.0));
            for (a, b) in fs.entries.row(i).iter().zip(fs_scaled.entries.row(i)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_rows_are_permutations(pts in points_strategy(12, 2)) {
        let table = neighbor_ranks(&pts).unwrap();
        for i in 0..12 {
            let mut sorted = table.order[i].clone();
            sorted.sort_unstable();
            let expected: Vec<u32> = (0..12u32).filter(|&j| j != i as u32).collect();
            prop_assert_eq!(sorted, expected);
            for (pos, &j) in table.order[i].iter().enumerate() {
                prop_assert_eq!(table.rank[i][j as usize] as usize, pos + 1);
            }
        }
    }

    #[test]
    fn tw_ct_bounded_and_dual(
        reference in points_strategy(14, 2),
        embedding in points_strategy(14, 2),
        k in 1usize..=6,
    ) {
        // K <= (N-1)/2 keeps the normalizer equal to the exact maximum.
        let tw = trustworthiness(&reference, &embedding, k).unwrap();
        let ct = continuity(&reference, &embedding, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&tw));
        prop_assert!((0.0..=1.0).contains(&ct));
        let dual = trustworthiness(&embedding, &reference, k).unwrap();
        prop_assert_eq!(ct, dual);
    }

    #[test]
    fn kruskal_stress_is_scale_invariant(
        reference in points_strategy(10, 3),
        embedding in points_strategy(10, 2),
        c in 0.01f64..100.0,
    ) {
        let spread: f64 = (0..10)
            .flat_map(|i| (0..10).map(move |j| (i, j)))
            .map(|(i, j)| cckit::mat::dist_sq(reference.row(i), reference.row(j)))
            .sum();
        prop_assume!(spread > 1e-9);
        let base = kruskal_stress(&reference, &embedding).unwrap();
        let mut scaled = embedding.clone();
        scaled.scale(c);
        let after = kruskal_stress(&reference, &scaled).unwrap();
        prop_assert!((base - after).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn penalties_are_nonnegative_and_max_kinds_gate_on_the_bound(
        yi in proptest::collection::vec(-10.0f64..10.0, 2),
        yj in proptest::collection::vec(-10.0f64..10.0, 2),
        target in 0.0f64..8.0,
    ) {
        let frd = Constraint::relative(ConstraintKind::Frd, 0, 1, target, 1.0).unwrap();
        let mrd = Constraint::relative(ConstraintKind::Mrd, 0, 1, target, 1.0).unwrap();
        let p_frd = penalty(&frd, &yi, Some(&yj)).unwrap();
        let p_mrd = penalty(&mrd, &yi, Some(&yj)).unwrap();
        prop_assert!(p_frd >= 0.0);
        prop_assert!(p_mrd >= 0.0);
        let dist = ((yi[0] - yj[0]).powi(2) + (yi[1] - yj[1]).powi(2)).sqrt();
        prop_assert_eq!(p_mrd == 0.0, dist <= target);

        // antisymmetry holds bit-exactly for relative kinds
        let (gi, gj) = penalty_gradient(&frd, &yi, Some(&yj)).unwrap();
        let gj = gj.unwrap();
        for (a, b) in gi.iter().zip(&gj) {
            prop_assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn trajectory_steps_are_exact(
        heading in -3.1f64..3.1,
        amplitude in 0.0f64..1.5,
        period in 4.0f64..40.0,
        step in 0.5f64..8.0,
        num_points in 2usize..40,
    ) {
        let cfg = ScenarioConfig {
            area_x_min: -10_000.0,
            area_x_max: 10_000.0,
            area_y_min: -10_000.0,
            area_y_max: 10_000.0,
            trajectory: Some(TrajectoryConfig {
                start: [0.0, 0.0],
                heading,
                step_length: step,
                num_points,
                turn_amplitude: amplitude,
                turn_period: period,
            }),
            ..ScenarioConfig::default()
        };
        let pts = generate_trajectory(&cfg).unwrap();
        prop_assert_eq!(pts.len(), num_points);
        for w in pts.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            prop_assert!((d - step).abs() < 1e-9);
        }
    }
}
