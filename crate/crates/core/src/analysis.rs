//! Diagnostics: weighted Sobolev norms, power-law fits and Monte Carlo moments.

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier_table, ComplexField3, Fft3Plan};
use crate::rng::{tag, NoiseKey};
use crate::scalar::{vec3, Scalar};

/// Order `s` and weight exponent `delta` of the norm `‖<x>^delta (I - Δ)^{s/2} f‖₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedNormSpec<T> {
    pub s: T,
    pub delta: T,
}

impl<T: Scalar> WeightedNormSpec<T> {
    pub fn new(s: T, delta: T) -> Self {
        Self { s, delta }
    }

    /// Weight exponent `-1/2 - eps` with the fixed choice `eps = 1/2`.
    pub fn resolvent_decay(s: T) -> Self {
        Self {
            s,
            delta: -T::one(),
        }
    }
}

#[inline]
fn bracket<T: Scalar>(v: [T; 3]) -> T {
    (T::one() + vec3::dot(v, v)).sqrt()
}

/// Discrete `‖<x>^delta (I - Δ)^{s/2} f‖₂` with the continuum scaling `sqrt(h^3 Σ|.|^2)`.
pub fn weighted_sobolev_norm<T: Scalar>(field: &ComplexField3<T>, spec: WeightedNormSpec<T>) -> T {
    let grid = *field.grid();
    let smoothed = if spec.s == T::zero() {
        field.clone()
    } else {
        let lattice = grid.frequencies();
        let table: Vec<Complex<T>> = (0..grid.len())
            .map(|idx| Complex::new(bracket(lattice.xi(idx)).powf(spec.s), T::zero()))
            .collect();
        apply_multiplier_table(field, &table, &Fft3Plan::new(grid.n()))
    };
    let sum = if spec.delta == T::zero() {
        smoothed.values().iter().map(|v| v.norm_sqr()).fold(T::zero(), |a, b| a + b)
    } else {
        let two_delta = spec.delta + spec.delta;
        smoothed
            .values()
            .iter()
            .enumerate()
            .map(|(idx, v)| v.norm_sqr() * bracket(grid.point(idx)).powf(two_delta))
            .fold(T::zero(), |a, b| a + b)
    };
    (sum * grid.cell_volume()).sqrt()
}

/// Least-squares fit of `log value = intercept + slope * log k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub band: (f64, f64),
    pub n_points: usize,
}

/// Fits a power law to the points with `k` in the closed `band`.
pub fn fit_decay_slope(points: &[(f64, f64)], band: (f64, f64)) -> Result<SlopeFit> {
    let sel: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(k, _)| k >= band.0 && k <= band.1)
        .collect();
    if sel.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "{} points in band [{}, {}]; at least 4 are needed",
            sel.len(),
            band.0,
            band.1
        )));
    }
    if let Some(&(k, v)) = sel.iter().find(|&&(k, v)| !(v > 0.0 && k > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "non-positive point ({k}, {v}) in band"
        )));
    }
    let n = sel.len() as f64;
    let xs: Vec<f64> = sel.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = sel.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all in-band k are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        band,
        n_points: sel.len(),
    })
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// Estimates `E statistic(generator(key_i))` over `n_samples` independent
/// streams derived from `master_seed`. Samples may run in parallel; the
/// reduction order is fixed, so the result is bit-reproducible.
pub fn monte_carlo_moment<S, G, F>(
    master_seed: u64,
    n_samples: usize,
    generator: G,
    statistic: F,
) -> Result<MomentEstimate>
where
    G: Fn(NoiseKey) -> S + Sync,
    F: Fn(&S) -> f64 + Sync,
{
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_samples = {n_samples}; at least 2 are needed"
        )));
    }
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| statistic(&generator(NoiseKey::new(master_seed, i, tag::MONTE_CARLO))))
        .collect();
    Ok(moment_of(&values))
}

/// Mean and standard error of a fixed sample.
pub fn moment_of(values: &[f64]) -> MomentEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    MomentEstimate {
        mean,
        stderr: (var / n).sqrt(),
        n_samples: values.len(),
    }
}

/// Writes `k,value,fit` rows; `fit` is the fitted power law when given.
pub fn write_decay_csv<W: Write>(out: &mut W, points: &[(f64, f64)], fit: Option<&SlopeFit>) -> Result<()> {
    writeln!(out, "k,value,fit")?;
    for &(k, v) in points {
        match fit {
            Some(f) => writeln!(out, "{k:e},{v:e},{:e}", (f.intercept + f.slope * k.ln()).exp())?,
            None => writeln!(out, "{k:e},{v:e},")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{dft_forward, Grid3};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_field(n: usize, l: f64, seed: u64) -> ComplexField3<f64> {
        let grid = Grid3::new(n, l).unwrap();
        let mut rng = NoiseKey::new(seed, 0, 0).rng(0);
        let v = (0..grid.len())
            .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexField3::from_values(grid, v).unwrap()
    }

    #[test]
    fn plain_norm_when_s_and_delta_vanish() {
        let f = random_field(16, 1.0, 1);
        let n = weighted_sobolev_norm(&f, WeightedNormSpec::new(0.0, 0.0));
        assert!((n - f.l2_norm()).abs() <= 1e-14 * n);
    }

    #[test]
    fn weight_bounds_on_unit_support() {
        let grid = Grid3::new(32, 4.0).unwrap();
        let f = ComplexField3::from_fn(grid, |x| {
            if vec3::norm(x) <= 1.0 {
                Complex::new(1.0 + x[0], x[1])
            } else {
                Complex::new(0.0, 0.0)
            }
        });
        let n = weighted_sobolev_norm(&f, WeightedNormSpec::new(0.0, -1.0));
        let l2 = f.l2_norm();
        assert!(n >= l2 / 2f64.sqrt() && n <= l2);
    }

    #[test]
    fn unweighted_norm_matches_spectral_side() {
        let f = random_field(16, 1.5, 2);
        let s = 0.8;
        let spec = dft_forward(&f);
        let lattice = f.grid().frequencies();
        let sum: f64 = spec
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v.norm_sqr() * bracket(lattice.xi(i)).powf(2.0 * s))
            .sum();
        let direct = (sum * f.grid().cell_volume()).sqrt();
        let n = weighted_sobolev_norm(&f, WeightedNormSpec::new(s, 0.0));
        assert!((n - direct).abs() <= 1e-12 * n);
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..=20).map(|i| (i as f64, (i as f64).powi(-4))).collect();
        let fit = fit_decay_slope(&pts, (1.0, 20.0)).unwrap();
        assert!((fit.slope + 4.0).abs() < 1e-10);
        let flat: Vec<(f64, f64)> = (1..=8).map(|i| (i as f64, 3.0)).collect();
        assert!(fit_decay_slope(&flat, (0.0, 10.0)).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = NoiseKey::new(5, 0, 0).rng(0);
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let k = 2.0 + i as f64;
                let e: f64 = StandardNormal.sample(&mut rng);
                (k, 7.0 * k.powi(-4) * (1.0 + 0.05 * e))
            })
            .collect();
        let fit = fit_decay_slope(&pts, (2.0, 41.0)).unwrap();
        assert!((fit.slope + 4.0).abs() < 0.2);
    }

    #[test]
    fn fit_rejects_short_or_nonpositive_input() {
        assert!(fit_decay_slope(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)], (0.0, 5.0)).is_err());
        assert!(fit_decay_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)], (0.0, 5.0)).is_err());
    }

    #[test]
    fn constant_statistic_has_zero_error() {
        let m = monte_carlo_moment(1, 10, |_| (), |_| 2.5).unwrap();
        assert_eq!((m.mean, m.stderr), (2.5, 0.0));
    }

    #[test]
    fn gaussian_moment_and_determinism() {
        let gen = |k: NoiseKey| -> f64 { StandardNormal.sample(&mut k.rng(0)) };
        let a = monte_carlo_moment(9, 10_000, gen, |x| *x).unwrap();
        let b = monte_carlo_moment(9, 10_000, gen, |x| *x).unwrap();
        assert_eq!(a, b);
        assert!(a.mean.abs() < 4.0 * a.stderr);
        assert!((a.stderr - 0.01).abs() < 0.002);
    }
}
