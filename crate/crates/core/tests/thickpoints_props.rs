use lqg_core::formulas::SQRT_8_3;
use lqg_core::metric::{build_weights, metric_ball, shortest_distances};
use lqg_core::stats::geomspace;
use lqg_core::thickpoints::*;
use lqg_core::{DGammaModel, FieldGrid, GammaParams, Normalization, Sampler};
use proptest::prelude::*;

fn params() -> GammaParams {
    GammaParams::new(SQRT_8_3, DGammaModel::ExactSqrt83).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn circle_thickness_is_linear_in_the_field(seed in 0u64..500, a in -2.0f64..2.0, b in -2.0f64..2.0, k in 0.5f64..4.0) {
        let f = Sampler::calibrated(64).unwrap().sample(seed, Normalization::RawZeroBoundary).unwrap();
        let g = FieldGrid::zero(64).add_function(|(x, y)| a * x + b * (k * y).sin() + (x * x + y * y).sqrt());
        let sum = FieldGrid::from_values(64, f.values().iter().zip(g.values()).map(|(u, v)| u + v).collect()).unwrap();
        let geom = f.geometry();
        let cells: Vec<usize> = [(0.0, 0.0), (0.2, -0.15), (-0.3, 0.25)].iter().map(|&p| geom.cell_at(p).unwrap()).collect();
        let radii = geomspace(0.08, 0.3, 5);
        let fa = classify_alpha(&f, &cells, &radii).unwrap();
        let ga = classify_alpha(&g, &cells, &radii).unwrap();
        let sa = classify_alpha(&sum, &cells, &radii).unwrap();
        for i in 0..cells.len() {
            let lhs = sa[i].alpha_circle.unwrap();
            let rhs = fa[i].alpha_circle.unwrap() + ga[i].alpha_circle.unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn brackets_nest_in_zeta(
        dist in 0.0f64..2.0,
        log_diam in -8.0f64..0.0,
        eps in 0.001f64..0.5,
        alpha in -1.0f64..2.0,
        zeta in 0.0f64..0.5,
        extra in 0.0f64..0.5,
        s in 0.0f64..2.0,
    ) {
        let p = params();
        if one_point_brackets(dist, log_diam, &p, eps, alpha, zeta, s) {
            prop_assert!(one_point_brackets(dist, log_diam, &p, eps, alpha, zeta + extra, s));
        }
    }

    #[test]
    fn bins_partition_the_values(values in prop::collection::vec(-3.0f64..3.0, 1..400), width in 0.01f64..1.0, anchor in -2.0f64..2.0) {
        let tagged: Vec<(usize, f64)> = values.iter().cloned().enumerate().collect();
        let (centers, members) = bin_alphas(&tagged, anchor, width);
        prop_assert_eq!(centers.len(), members.len());
        prop_assert_eq!(members.iter().map(Vec::len).sum::<usize>(), values.len());
        for (c, m) in centers.iter().zip(&members) {
            for &i in m {
                prop_assert!((values[i] - c).abs() <= width / 2.0 + 1e-12);
            }
        }
    }
}

#[test]
fn metric_thickness_is_shift_invariant_exactly() {
    let p = params();
    let f = Sampler::calibrated(256).unwrap().sample(4, Normalization::RawZeroBoundary).unwrap();
    let geom = f.geometry();
    let cells: Vec<usize> = typical_points(geom, 5, 1);
    let radii = geomspace(0.04, 0.16, 4);
    // Every log-diameter moves by ξc, so slopes agree up to rounding.
    let c = 0.7;
    let w1 = build_weights(&f, &p).unwrap();
    let w2 = build_weights(&f.add_constant(c), &p).unwrap();
    let a1 = classify_metric_alpha(&w1, &p, &cells, &radii, Recentering::NONE).unwrap();
    let a2 = classify_metric_alpha(&w2, &p, &cells, &radii, Recentering::NONE).unwrap();
    for (x, y) in a1.iter().zip(&a2) {
        let (x, y) = (x.alpha_metric.unwrap(), y.alpha_metric.unwrap());
        assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
    }
}

#[test]
fn spectrum_counts_sum_to_classified_cells() {
    let p = params();
    for seed in 0..3 {
        let f = Sampler::calibrated(256).unwrap().sample(seed, Normalization::RawZeroBoundary).unwrap();
        let w = build_weights(&f, &p).unwrap();
        let geom = f.geometry();
        let d = shortest_distances(&w, &[geom.center_cell()], None).unwrap();
        let ball = metric_ball(&d, 0.3 * d.min_over(&geom.frame_cells()));
        let opts = SpectrumOptions::from_window(0.0625, 0.25, 16);
        let sp = match boundary_spectrum(&f, &p, &ball, &opts) {
            Ok(sp) => sp,
            Err(ThickError::SmallBoundary { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        assert_eq!(sp.classified() + sp.unclassified, ball.boundary.len());
        assert_eq!(sp.counts.iter().sum::<usize>(), sp.classified());
        for (count, dim) in sp.counts.iter().zip(&sp.bin_dims) {
            assert!(dim.is_none() || *count >= MIN_BIN_CELLS);
        }
    }
}
