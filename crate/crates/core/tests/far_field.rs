use num_complex::Complex;

use migr_scatter::archive::SweepMode;
use migr_scatter::far_field::{
    assemble_far_field, born_far_field_terms, far_field_project, solve_far_field, sweep_band, BandSpec,
    ForwardModel, Scene,
};
use migr_scatter::forward::{estimate_contraction, IncidentWave, ResolventKernel, SolverOptions};
use migr_scatter::random_field::{synthesize_migr_tagged, FieldRealization, RoughnessSpec, StrengthProfile};
use migr_scatter::rng::tag;
use migr_scatter::{ComplexField3, Grid3};

fn c(x: f64) -> Complex<f64> {
    Complex::new(x, 0.0)
}

fn draw(grid: &Grid3<f64>, m: f64, center: [f64; 3], radius: f64, stream: u64) -> FieldRealization<f64> {
    let spec = RoughnessSpec::new(m, StrengthProfile::bump(center, radius, 1.0).unwrap());
    synthesize_migr_tagged(&spec, grid, 17, 0, stream).unwrap()
}

fn scene(grid: Grid3<f64>, model: ForwardModel) -> Scene<f64> {
    let f = draw(&grid, 3.0, [-0.25, 0.0, 0.0], 0.2, tag::SOURCE);
    let q = draw(&grid, 3.2, [0.25, 0.0, 0.0], 0.2, tag::POTENTIAL);
    Scene {
        source: f,
        potential: q,
        seed: 17,
        solver: SolverOptions::default(),
        model,
    }
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[test]
fn projection_is_linear() {
    let grid = Grid3::new(16, 1.0).unwrap();
    let u = draw(&grid, 3.0, [0.0; 3], 0.6, 1).values;
    let v = draw(&grid, 2.0, [0.1, 0.1, 0.0], 0.5, 2).values;
    let (a, b) = (Complex::new(1.5, -0.2), Complex::new(-0.3, 2.0));
    let d = unit([1.0, 2.0, -0.5]);
    let lhs = far_field_project(&u.scaled(a).add(&v.scaled(b)).unwrap(), d, 9.0);
    let rhs = far_field_project(&u, d, 9.0) * a + far_field_project(&v, d, 9.0) * b;
    assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
}

#[test]
fn zero_wavenumber_projection_is_the_bump_integral() {
    let radius = 0.8;
    let grid = Grid3::new(96, 1.0).unwrap();
    let profile = StrengthProfile::bump([0.0; 3], radius, 1.0).unwrap();
    let field = ComplexField3::from_real(grid, &profile.sample(&grid)).unwrap();
    let got = far_field_project(&field, [0.0, 0.0, 1.0], 0.0);
    // 4π ∫_0^R e^{1 - 1/(1 - r²/R²)} r² dr by composite Simpson on a fine mesh.
    let steps = 20_000;
    let w = radius / steps as f64;
    let g = |r: f64| {
        let t = 1.0 - (r / radius).powi(2);
        if t <= 0.0 {
            0.0
        } else {
            (1.0 - 1.0 / t).exp() * r * r
        }
    };
    let mut acc = g(0.0) + g(radius);
    for i in 1..steps {
        acc += g(i as f64 * w) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let oracle = 4.0 * std::f64::consts::PI * acc * w / 3.0;
    assert!((got.re - oracle).abs() <= 1e-6 * oracle && got.im.abs() <= 1e-12, "{got} vs {oracle}");
}

#[test]
fn bump_projection_stays_bounded_across_wavenumbers() {
    let grid = Grid3::new(32, 1.0).unwrap();
    let profile = StrengthProfile::bump([0.1, -0.2, 0.0], 0.5, 1.0).unwrap();
    let field = ComplexField3::from_real(grid, &profile.sample(&grid)).unwrap();
    let d = unit([0.3, -1.0, 0.4]);
    let at_one = far_field_project(&field, d, 1.0).norm();
    for k in 1..=32 {
        let v = far_field_project(&field, d, k as f64).norm();
        assert!(v <= 2.0 * at_one, "k = {k}: {v} vs {at_one}");
    }
}

#[test]
fn born_terms_without_potential() {
    let grid = Grid3::new(16, 1.0).unwrap();
    let k = 5.0;
    let kernel = ResolventKernel::new(grid, k).unwrap();
    let f = draw(&grid, 3.0, [0.0; 3], 0.6, 3).values;
    let zero = ComplexField3::zeros(grid);
    let inc = IncidentWave::new(1, [0.0, 0.0, 1.0], k).unwrap();
    let d = unit([1.0, 1.0, 0.0]);
    let terms = born_far_field_terms(&kernel, &zero, &f, &inc, d, 2, SolverOptions::default()).unwrap();
    let p = far_field_project(&f, d, k);
    assert!((terms.f_terms[0] + p).norm() <= 1e-12 * p.norm());
    assert!(terms.f_terms[1..].iter().all(|v| v.norm() == 0.0));
    assert!(terms.g_terms.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn backscatter_g0_probes_twice_the_wavenumber() {
    let grid = Grid3::new(24, 1.0).unwrap();
    let k = 4.0;
    let kernel = ResolventKernel::new(grid, k).unwrap();
    let q = draw(&grid, 3.2, [0.2, 0.0, 0.0], 0.4, 4).values;
    let q = q.scaled(c(0.3 / estimate_contraction(&kernel, &q).unwrap()));
    let zero = ComplexField3::zeros(grid);
    let x = unit([0.2, 0.9, -0.3]);
    let inc = IncidentWave::new(1, [-x[0], -x[1], -x[2]], k).unwrap();
    let terms = born_far_field_terms(&kernel, &q, &zero, &inc, x, 2, SolverOptions::default()).unwrap();
    let oracle = far_field_project(&q, x, 2.0 * k);
    assert!((terms.g_terms[0] - oracle).norm() <= 1e-12 * oracle.norm());
    assert!(terms.f_terms.iter().all(|v| v.norm() < 1e-300));
}

#[test]
fn born_terms_add_up_to_the_solve() {
    let grid = Grid3::new(24, 1.0).unwrap();
    let k = 6.0;
    let s = scene(grid, ForwardModel::Full);
    let kernel = ResolventKernel::new(grid, k).unwrap();
    let q = s.potential.values.scaled(c(0.4 / estimate_contraction(&kernel, &s.potential.values).unwrap()));
    let f = &s.source.values;
    let options = SolverOptions { tol: 1e-12, max_iter: 200 };
    let x = unit([1.0, 0.3, 0.2]);
    for alpha in [0u8, 1] {
        let inc = IncidentWave::new(alpha, [-x[0], -x[1], -x[2]], k).unwrap();
        let terms = born_far_field_terms(&kernel, &q, f, &inc, x, 2, options).unwrap();
        let total = assemble_far_field(&terms.f_terms, &terms.g_terms, alpha);
        let direct = solve_far_field(&kernel, &q, f, &inc, x, options).unwrap();
        assert!((total - direct).norm() <= 1e-9 * direct.norm(), "alpha {alpha}: {total} vs {direct}");
    }
}

#[test]
fn sweep_sample_counts() {
    let grid = Grid3::new(16, 0.6).unwrap();
    let s = scene(grid, ForwardModel::Born);
    let dirs = [[1.0, 0.0, 0.0]];
    let band = |taus: Vec<f64>| BandSpec {
        k_min: 4.0,
        dk: 0.5,
        n_k: 1,
        taus,
    };
    let count = |taus: Vec<f64>| sweep_band(&s, &dirs, &band(taus), SweepMode::Passive).unwrap().samples().len();
    assert_eq!(count(vec![]), 1);
    assert_eq!(count(vec![0.0]), 1);
    assert_eq!(count(vec![0.0, 0.5, 1.0]), 3);
    assert_eq!(count(vec![1.0, 1.0]), 2);
    assert!(sweep_band(&s, &dirs, &band(vec![0.3]), SweepMode::Passive).is_err());
}

#[test]
fn sweeps_are_deterministic_and_backscatter_is_monostatic() {
    let grid = Grid3::new(16, 0.6).unwrap();
    let mut s = scene(grid, ForwardModel::Full);
    let kernel = ResolventKernel::new(grid, 3.0).unwrap();
    s.potential.values = s
        .potential
        .values
        .scaled(c(0.3 / estimate_contraction(&kernel, &s.potential.values).unwrap()));
    let dirs = vec![unit([1.0, 0.0, 0.0]), unit([1.0, 1.0, 1.0]), unit([0.2, -1.0, 0.5])];
    let band = BandSpec {
        k_min: 3.0,
        dk: 0.5,
        n_k: 3,
        taus: vec![0.0, 1.0],
    };
    for mode in [SweepMode::Passive, SweepMode::Backscatter] {
        let a = sweep_band(&s, &dirs, &band, mode).unwrap();
        let b = sweep_band(&s, &dirs, &band, mode).unwrap();
        assert_eq!(a, b);
        for smp in a.samples() {
            match mode {
                SweepMode::Passive => assert!(smp.incident.is_none()),
                SweepMode::Backscatter => {
                    let d = smp.incident.unwrap();
                    let x = smp.direction;
                    assert!(d[0] == -x[0] && d[1] == -x[1] && d[2] == -x[2]);
                }
            }
        }
    }
}

#[test]
fn passive_born_sweep_is_the_source_projection() {
    let grid = Grid3::new(16, 0.6).unwrap();
    let s = scene(grid, ForwardModel::Born);
    let d = unit([0.0, 1.0, 1.0]);
    let band = BandSpec {
        k_min: 2.0,
        dk: 1.0,
        n_k: 4,
        taus: vec![],
    };
    let archive = sweep_band(&s, &[d], &band, SweepMode::Passive).unwrap();
    for smp in archive.samples() {
        let expect = -far_field_project(&s.source.values, d, smp.k) / (4.0 * std::f64::consts::PI);
        assert!((smp.value - expect).norm() <= 1e-14 * expect.norm());
    }
}
