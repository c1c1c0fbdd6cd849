//! Microlocally isotropic Gaussian random fields.
//!
//! A realization is `f = sqrt(mu(x)) * |D|^{-m/2} w` with `w` continuum white
//! noise on the grid (cell variance `1/h^3`). Its covariance operator then has
//! principal symbol `mu(x) |xi|^{-m}`. The DC mode of the multiplier is set to
//! zero, which only touches the lowest-order part of the symbol.

use num_complex::Complex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier_table, ComplexField3, Fft3Plan, Grid3};
use crate::rng::{tag, NoiseKey};
use crate::scalar::{vec3, Scalar};

/// One smooth bump `amp * exp(1 - 1/(1 - |x-c|^2/r^2))` supported in the closed ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump<T> {
    pub center: [T; 3],
    pub radius: T,
    pub amplitude: T,
}

impl<T: Scalar> Bump<T> {
    pub fn new(center: [T; 3], radius: T, amplitude: T) -> Result<Self> {
        if !(radius > T::zero() && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bump radius {radius} must be positive"
            )));
        }
        if !(amplitude >= T::zero() && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bump amplitude {amplitude} must be non-negative"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("bump center is not finite".into()));
        }
        Ok(Self {
            center,
            radius,
            amplitude,
        })
    }

    #[inline]
    pub fn eval(&self, x: [T; 3]) -> T {
        let d = vec3::sub(x, self.center);
        let t = vec3::dot(d, d) / (self.radius * self.radius);
        if t < T::one() {
            self.amplitude * (T::one() - T::one() / (T::one() - t)).exp()
        } else {
            T::zero()
        }
    }
}

/// Rough strength `mu(x)`: a non-negative sum of bumps.
#[derive(Clone, Debug, PartialEq)]
pub struct StrengthProfile<T> {
    bumps: Vec<Bump<T>>,
}

impl<T: Scalar> StrengthProfile<T> {
    pub fn bump(center: [T; 3], radius: T, amplitude: T) -> Result<Self> {
        Ok(Self {
            bumps: vec![Bump::new(center, radius, amplitude)?],
        })
    }

    pub fn sum_of_bumps(bumps: Vec<Bump<T>>) -> Self {
        Self { bumps }
    }

    /// The identically zero profile.
    pub fn zero() -> Self {
        Self { bumps: Vec::new() }
    }

    pub fn bumps(&self) -> &[Bump<T>] {
        &self.bumps
    }

    pub fn is_zero(&self) -> bool {
        self.bumps.iter().all(|b| b.amplitude == T::zero())
    }

    pub fn eval(&self, x: [T; 3]) -> T {
        self.bumps.iter().map(|b| b.eval(x)).fold(T::zero(), |a, b| a + b)
    }

    /// `true` when `x` lies in the open support of some bump with positive amplitude.
    pub fn in_support(&self, x: [T; 3]) -> bool {
        self.eval(x) > T::zero()
    }

    /// Returns a copy with every amplitude multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            bumps: self
                .bumps
                .iter()
                .map(|b| Bump {
                    amplitude: b.amplitude * s,
                    ..*b
                })
                .collect(),
        }
    }

    /// Fails unless every bump ball sits strictly inside the grid box.
    pub fn check_inside(&self, grid: &Grid3<T>) -> Result<()> {
        let l = grid.half_width();
        for b in &self.bumps {
            for a in 0..3 {
                if b.center[a] - b.radius <= -l || b.center[a] + b.radius >= l {
                    return Err(Error::Geometry(format!(
                        "bump at ({}, {}, {}) with radius {} touches the box [-{l}, {l})^3",
                        b.center[0], b.center[1], b.center[2], b.radius
                    )));
                }
            }
        }
        Ok(())
    }

    /// `mu` sampled on the grid.
    pub fn sample(&self, grid: &Grid3<T>) -> Vec<T> {
        (0..grid.len())
            .into_par_iter()
            .map(|idx| self.eval(grid.point(idx)))
            .collect()
    }

    /// Riemann sum of `mu` on the grid.
    pub fn integral_on(&self, grid: &Grid3<T>) -> T {
        self.sample(grid).into_iter().fold(T::zero(), |a, b| a + b) * grid.cell_volume()
    }
}

/// Rough order and rough strength of one field.
#[derive(Clone, Debug, PartialEq)]
pub struct RoughnessSpec<T> {
    pub m: T,
    pub mu: StrengthProfile<T>,
}

impl<T: Scalar> RoughnessSpec<T> {
    pub fn new(m: T, mu: StrengthProfile<T>) -> Self {
        Self { m, mu }
    }
}

/// A sampled field together with the data that regenerates it.
#[derive(Clone, Debug)]
pub struct FieldRealization<T> {
    pub values: ComplexField3<T>,
    pub spec: RoughnessSpec<T>,
    pub seed: u64,
    pub sample_index: u64,
}

impl<T: Scalar> FieldRealization<T> {
    /// Identically zero field with an empty profile.
    pub fn zero(grid: Grid3<T>) -> Self {
        Self {
            values: ComplexField3::zeros(grid),
            spec: RoughnessSpec::new(T::zero(), StrengthProfile::zero()),
            seed: 0,
            sample_index: 0,
        }
    }

    pub fn grid(&self) -> &Grid3<T> {
        self.values.grid()
    }
}

/// I.i.d. Gaussian cells with mean 0 and variance `1/h^3`.
pub fn sample_white_noise<T: Scalar>(grid: &Grid3<T>, seed: u64, sample_index: u64) -> ComplexField3<T> {
    white_noise_with_key(grid, NoiseKey::new(seed, sample_index, tag::WHITE_NOISE))
}

/// White noise drawn from an explicit stream key. Each x-slab uses its own
/// sub-stream, so the result does not depend on the thread schedule.
pub fn white_noise_with_key<T: Scalar>(grid: &Grid3<T>, key: NoiseKey) -> ComplexField3<T> {
    let n = grid.n();
    let scale = T::one() / grid.cell_volume().sqrt();
    let mut values = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    values
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(i, slab)| {
            let mut rng = key.rng(i as u64);
            for v in slab.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = Complex::new(T::of(z) * scale, T::zero());
            }
        });
    ComplexField3::from_values(*grid, values).expect("length matches grid")
}

/// Multiplier table of `|xi|^{-m/2}` with zero at the origin.
fn rough_multiplier<T: Scalar>(grid: &Grid3<T>, m: T) -> Vec<Complex<T>> {
    let lattice = grid.frequencies();
    let p = -m / T::of(2.0);
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if idx == 0 {
                Complex::new(T::zero(), T::zero())
            } else {
                Complex::new(vec3::norm(lattice.xi(idx)).powf(p), T::zero())
            }
        })
        .collect()
}

/// Draws one realization with the default white-noise stream.
pub fn synthesize_migr<T: Scalar>(
    spec: &RoughnessSpec<T>,
    grid: &Grid3<T>,
    seed: u64,
    sample_index: u64,
) -> Result<FieldRealization<T>> {
    synthesize_migr_tagged(spec, grid, seed, sample_index, tag::WHITE_NOISE)
}

/// Draws one realization from the stream `(seed, sample_index, stream_tag)`.
/// Use distinct tags for fields that must be independent under one seed.
pub fn synthesize_migr_tagged<T: Scalar>(
    spec: &RoughnessSpec<T>,
    grid: &Grid3<T>,
    seed: u64,
    sample_index: u64,
    stream_tag: u64,
) -> Result<FieldRealization<T>> {
    let plan = Fft3Plan::new(grid.n());
    let table = rough_multiplier(grid, spec.m);
    synthesize_with(spec, grid, &plan, &table, NoiseKey::new(seed, sample_index, stream_tag))
}

fn synthesize_with<T: Scalar>(
    spec: &RoughnessSpec<T>,
    grid: &Grid3<T>,
    plan: &Fft3Plan<T>,
    table: &[Complex<T>],
    key: NoiseKey,
) -> Result<FieldRealization<T>> {
    if !(spec.m >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "rough order m = {} must be non-negative",
            spec.m
        )));
    }
    spec.mu.check_inside(grid)?;
    let mut values = if spec.mu.is_zero() {
        ComplexField3::zeros(*grid)
    } else {
        let w = white_noise_with_key(grid, key);
        apply_multiplier_table(&w, table, plan)
    };
    let mu = spec.mu.sample(grid);
    values
        .values_mut()
        .par_iter_mut()
        .zip(mu.par_iter())
        .for_each(|(v, &m)| {
            // Real input and an even real symbol: drop the rounding-level imaginary part.
            *v = if m > T::zero() {
                Complex::new(v.re * m.sqrt(), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            };
        });
    Ok(FieldRealization {
        values,
        spec: spec.clone(),
        seed: key.seed,
        sample_index: key.sample_index,
    })
}

/// Width of the Gaussian analysis window used by [`estimate_covariance_symbol`].
pub const SYMBOL_WINDOW_SIGMA: f64 = 0.3;

/// One radial bin of an empirical symbol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumBin<T> {
    /// Mean `|xi|` of the lattice points in the bin.
    pub xi: T,
    pub power: T,
    pub count: usize,
}

/// Windowed-periodogram estimate of the local covariance symbol at `probe`.
///
/// With `W` a Gaussian window centred on `probe` and `g = W f`, the returned
/// power is `mu(probe) * E|g^(xi)|^2 / (h^3 Σ W^2 mu)` averaged over radial
/// bins of width `π/L`, where `g^(xi) = h^3 Σ g e^{-i xi.x}`. For a field
/// whose symbol is exactly `mu(x)|xi|^{-m}` this tends to `mu(probe)|xi|^{-m}`
/// away from the lowest frequencies. Bins with fewer than 4 lattice points
/// are dropped.
pub fn estimate_covariance_symbol<T: Scalar>(
    spec: &RoughnessSpec<T>,
    grid: &Grid3<T>,
    seed: u64,
    n_samples: usize,
    probe: [T; 3],
) -> Result<Vec<SpectrumBin<T>>> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_samples = {n_samples}; at least 2 are needed"
        )));
    }
    if !spec.mu.in_support(probe) {
        return Err(Error::Geometry(format!(
            "probe point ({}, {}, {}) is outside the support of mu",
            probe[0], probe[1], probe[2]
        )));
    }
    spec.mu.check_inside(grid)?;

    let plan = Fft3Plan::new(grid.n());
    let table = rough_multiplier(grid, spec.m);
    let sigma = T::of(SYMBOL_WINDOW_SIGMA);
    let two_s2 = T::of(2.0) * sigma * sigma;
    let window: Vec<T> = (0..grid.len())
        .map(|idx| {
            let d = vec3::sub(grid.point(idx), probe);
            (-vec3::dot(d, d) / two_s2).exp()
        })
        .collect();
    let mu = spec.mu.sample(grid);
    let h3 = grid.cell_volume();
    let w2mu = window
        .iter()
        .zip(&mu)
        .fold(T::zero(), |a, (&w, &m)| a + w * w * m);
    let norm = spec.mu.eval(probe) / w2mu;

    let lattice = grid.frequencies();
    let dk = lattice.step();
    let bin_of: Vec<usize> = (0..grid.len())
        .map(|idx| {
            (vec3::norm(lattice.xi(idx)) / dk)
                .round()
                .to_usize()
                .unwrap_or(0)
        })
        .collect();
    let n_bins = bin_of.iter().copied().max().unwrap_or(0) + 1;

    let per_sample: Vec<Vec<T>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| -> Result<Vec<T>> {
            let key = NoiseKey::new(seed, s, tag::WHITE_NOISE);
            let f = synthesize_with(spec, grid, &plan, &table, key)?;
            let mut g: Vec<Complex<T>> = f
                .values
                .values()
                .iter()
                .zip(&window)
                .map(|(&v, &w)| v * w)
                .collect();
            plan.forward(&mut g);
            let mut sums = vec![T::zero(); n_bins];
            for (v, &b) in g.iter().zip(&bin_of) {
                sums[b] += v.norm_sqr();
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![0usize; n_bins];
    let mut xi_sum = vec![T::zero(); n_bins];
    for idx in 0..grid.len() {
        counts[bin_of[idx]] += 1;
        xi_sum[bin_of[idx]] += vec3::norm(lattice.xi(idx));
    }
    let mut total = vec![T::zero(); n_bins];
    for sums in &per_sample {
        for (t, &s) in total.iter_mut().zip(sums) {
            *t += s;
        }
    }
    let inv_samples = T::one() / T::of_usize(n_samples);
    Ok((1..n_bins)
        .filter(|&b| counts[b] >= 4)
        .map(|b| {
            let c = T::of_usize(counts[b]);
            SpectrumBin {
                xi: xi_sum[b] / c,
                // |h^3 FFT|^2 = h^6 |FFT|^2; one h^3 cancels against the denominator.
                power: total[b] * inv_samples / c * h3 * norm,
                count: counts[b],
            }
        })
        .collect())
}

/// Sample skewness and excess kurtosis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalityStats {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn normality_stats(samples: &[f64]) -> NormalityStats {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    NormalityStats {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}
