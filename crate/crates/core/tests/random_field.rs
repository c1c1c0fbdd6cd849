use proptest::prelude::*;

use migr_scatter::analysis::fit_decay_slope;
use migr_scatter::random_field::{
    estimate_covariance_symbol, normality_stats, sample_white_noise, synthesize_migr, synthesize_migr_tagged,
    Bump, RoughnessSpec, StrengthProfile,
};
use migr_scatter::rng::tag;
use migr_scatter::Grid3;

#[test]
fn white_noise_mean_and_variance() {
    let grid = Grid3::new(64, 2.0).unwrap();
    let w = sample_white_noise(&grid, 11, 0);
    let h3 = grid.cell_volume();
    let n = grid.len() as f64;
    let mean = w.values().iter().map(|v| v.re).sum::<f64>() / n;
    let var = w.values().iter().map(|v| (v.re - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 4.0 * h3.powf(-0.5) / 64f64.powf(1.5));
    assert!((var * h3 - 1.0).abs() < 0.05);
    assert_eq!(sample_white_noise::<f64>(&grid, 7, 3).values(), sample_white_noise::<f64>(&grid, 7, 3).values());
}

#[test]
fn flat_spectrum_without_roughness() {
    let grid = Grid3::new(32, 1.0).unwrap();
    let h = grid.spacing();
    let spec = RoughnessSpec::new(0.0, StrengthProfile::bump([0.0; 3], 0.5, 1.0).unwrap());
    let bins = estimate_covariance_symbol(&spec, &grid, 5, 200, [0.0; 3]).unwrap();
    let pts: Vec<(f64, f64)> = bins.iter().map(|b| (b.xi, b.power)).collect();
    let band = (0.6 * std::f64::consts::PI / h, 0.95 * std::f64::consts::PI / h);
    let fit = fit_decay_slope(&pts, band).unwrap();
    assert!(fit.slope.abs() <= 0.1, "{fit:?}");
}

#[test]
fn ensemble_at_a_cell_is_gaussian() {
    let grid = Grid3::new(16, 1.0).unwrap();
    let spec = RoughnessSpec::new(3.0, StrengthProfile::bump([0.0; 3], 0.6, 1.0).unwrap());
    let probe = grid.nearest_index([0.1, 0.0, 0.0]).unwrap();
    let samples: Vec<f64> = (0..200)
        .map(|i| synthesize_migr(&spec, &grid, 42, i).unwrap().values.values()[probe].re)
        .collect();
    let st = normality_stats(&samples);
    assert!(st.skewness.abs() < 0.35, "{st:?}");
    assert!(st.excess_kurtosis.abs() < 0.7, "{st:?}");
}

#[test]
fn distinct_tags_give_independent_fields() {
    let grid = Grid3::new(16, 1.0).unwrap();
    let spec = RoughnessSpec::new(3.0, StrengthProfile::bump([0.0; 3], 0.6, 1.0).unwrap());
    let a = synthesize_migr_tagged(&spec, &grid, 1, 0, tag::SOURCE).unwrap().values;
    let b = synthesize_migr_tagged(&spec, &grid, 1, 0, tag::POTENTIAL).unwrap().values;
    let corr: f64 = a.bilinear(&b).unwrap().re / (a.euclidean_norm() * b.euclidean_norm());
    assert!(corr.abs() < 0.3, "{corr}");
}

fn profile_strategy() -> impl Strategy<Value = StrengthProfile<f64>> {
    prop::collection::vec(
        (-0.4f64..0.4, -0.4f64..0.4, -0.4f64..0.4, 0.15f64..0.5, 0.1f64..3.0),
        1..3,
    )
    .prop_map(|v| {
        StrengthProfile::sum_of_bumps(
            v.into_iter()
                .map(|(x, y, z, r, a)| Bump::new([x, y, z], r, a).unwrap())
                .collect(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn support_containment_and_realness(profile in profile_strategy(), seed in any::<u64>(), m in 0.0f64..4.0) {
        let grid = Grid3::new(16, 1.0).unwrap();
        let spec = RoughnessSpec::new(m, profile.clone());
        let f = synthesize_migr(&spec, &grid, seed, 0).unwrap();
        for (idx, v) in f.values.values().iter().enumerate() {
            if !profile.in_support(grid.point(idx)) || profile.eval(grid.point(idx)) == 0.0 {
                prop_assert_eq!(v.re, 0.0);
            }
            prop_assert_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn synthesis_is_reproducible(seed in any::<u64>(), index in 0u64..1000) {
        let grid = Grid3::new(8, 1.0).unwrap();
        let spec = RoughnessSpec::new(3.0, StrengthProfile::bump([0.0; 3], 0.5, 1.0).unwrap());
        let a = synthesize_migr(&spec, &grid, seed, index).unwrap();
        let b = synthesize_migr(&spec, &grid, seed, index).unwrap();
        prop_assert_eq!(a.values.values(), b.values.values());
    }
}
