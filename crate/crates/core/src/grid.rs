//! Uniform 3D grids, complex fields and the discrete Fourier machinery.
//!
//! Storage order is fixed: the flat index of cell `(i, j, l)` is
//! `(i * n + j) * n + l`, so the x index varies slowest and the z index
//! fastest. Cell `(i, j, l)` sits at `(-L + i h, -L + j h, -L + l h)`.
//!
//! [`dft_forward`] and [`dft_inverse`] are unitary (`n^{-3/2}` each way) so
//! the discrete Parseval identity holds without extra constants. Frequencies
//! follow the usual signed FFT ordering with spacing `2π / (n h) = π / L`.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::{vec3, Scalar};

/// Smallest admissible samples-per-axis count.
pub const MIN_POINTS_PER_AXIS: usize = 8;

/// Cube `[-L, L)^3` sampled with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid3<T> {
    n: usize,
    half_width: T,
}

impl<T: Scalar> Grid3<T> {
    pub fn new(n: usize, half_width: T) -> Result<Self> {
        if n < MIN_POINTS_PER_AXIS {
            return Err(Error::InvalidGrid(format!(
                "n = {n} is below the minimum of {MIN_POINTS_PER_AXIS}"
            )));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n = {n} must be even")));
        }
        if !(half_width > T::zero() && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "half width {half_width} must be positive and finite"
            )));
        }
        Ok(Self { n, half_width })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_width(&self) -> T {
        self.half_width
    }

    /// Cell spacing `h = 2L / n`, always derived.
    #[inline]
    pub fn spacing(&self) -> T {
        (self.half_width + self.half_width) / T::of_usize(self.n)
    }

    #[inline]
    pub fn cell_volume(&self) -> T {
        let h = self.spacing();
        h * h * h
    }

    /// Number of cells, `n^3`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of sample `i` along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> T {
        -self.half_width + T::of_usize(i) * self.spacing()
    }

    /// Axis coordinates `-L + i h` for `i = 0..n`.
    pub fn axis(&self) -> Vec<T> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.n + j) * self.n + l
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [T; 3] {
        let (i, j, l) = self.unravel(idx);
        [self.coord(i), self.coord(j), self.coord(l)]
    }

    /// Index of the cell whose lower corner is nearest to `x`, if inside the box.
    pub fn nearest_index(&self, x: [T; 3]) -> Option<usize> {
        let h = self.spacing();
        let mut ijk = [0usize; 3];
        for (a, slot) in ijk.iter_mut().enumerate() {
            let t = ((x[a] + self.half_width) / h).round();
            if t < T::zero() || t >= T::of_usize(self.n) {
                return None;
            }
            *slot = t.to_usize()?;
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }

    /// `true` when `x` lies strictly inside the open box, at least `margin` from each face.
    pub fn contains_with_margin(&self, x: [T; 3], margin: T) -> bool {
        let lo = -self.half_width + margin;
        let hi = self.half_width - self.spacing() - margin;
        x.iter().all(|&c| c > lo && c < hi)
    }

    pub fn frequencies(&self) -> FrequencyLattice<T> {
        FrequencyLattice { grid: *self }
    }

    pub(crate) fn same_as(&self, other: &Self) -> Result<()> {
        if self.n == other.n && self.half_width == other.half_width {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected_n: self.n,
                expected_l: self.half_width.to_f64_lossy(),
                found_n: other.n,
                found_l: other.half_width.to_f64_lossy(),
            })
        }
    }
}

/// Frequency vectors of the unitary DFT on a [`Grid3`].
#[derive(Clone, Copy, Debug)]
pub struct FrequencyLattice<T> {
    grid: Grid3<T>,
}

impl<T: Scalar> FrequencyLattice<T> {
    /// Spacing of the frequency lattice, `2π / (n h) = π / L`.
    #[inline]
    pub fn step(&self) -> T {
        T::PI() / self.grid.half_width
    }

    /// Signed mode number of DFT index `p` (`p >= n/2` wraps to `p - n`).
    #[inline]
    pub fn signed_mode(&self, p: usize) -> i64 {
        let n = self.grid.n as i64;
        let p = p as i64;
        if p >= n / 2 {
            p - n
        } else {
            p
        }
    }

    #[inline]
    pub fn axis_frequency(&self, p: usize) -> T {
        T::of(self.signed_mode(p) as f64) * self.step()
    }

    /// Frequency vector of flat spectral index `idx`.
    #[inline]
    pub fn xi(&self, idx: usize) -> [T; 3] {
        let (i, j, l) = self.grid.unravel(idx);
        [
            self.axis_frequency(i),
            self.axis_frequency(j),
            self.axis_frequency(l),
        ]
    }

    /// Flat index of the mode with signed numbers `(a, b, c)`.
    pub fn index_of_mode(&self, mode: [i64; 3]) -> usize {
        let n = self.grid.n as i64;
        let wrap = |m: i64| -> usize { m.rem_euclid(n) as usize };
        self.grid.index(wrap(mode[0]), wrap(mode[1]), wrap(mode[2]))
    }

    /// Nyquist frequency `π / h`.
    pub fn nyquist(&self) -> T {
        T::PI() / self.grid.spacing()
    }
}

/// Complex samples on a [`Grid3`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField3<T> {
    grid: Grid3<T>,
    values: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexField3<T> {
    pub fn zeros(grid: Grid3<T>) -> Self {
        Self {
            grid,
            values: vec![Complex::new(T::zero(), T::zero()); grid.len()],
        }
    }

    pub fn from_values(grid: Grid3<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::FieldLength {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_real(grid: Grid3<T>, values: &[T]) -> Result<Self> {
        Self::from_values(
            grid,
            values.iter().map(|&v| Complex::new(v, T::zero())).collect(),
        )
    }

    /// Samples `f` at every cell position.
    pub fn from_fn(grid: Grid3<T>, f: impl Fn([T; 3]) -> Complex<T> + Sync) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|idx| f(grid.point(idx)))
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid3<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    /// Plain Euclidean norm of the sample vector, `sqrt(Σ|v|^2)`.
    pub fn euclidean_norm(&self) -> T {
        self.values
            .iter()
            .map(|v| v.norm_sqr())
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    /// Discrete continuum L2 norm, `sqrt(h^3 Σ|v|^2)`.
    pub fn l2_norm(&self) -> T {
        self.euclidean_norm() * self.grid.cell_volume().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn max_imag(&self) -> T {
        self.values
            .iter()
            .map(|v| v.im.abs())
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn is_zero(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re == T::zero() && v.im == T::zero())
    }

    /// Real parts as a plain vector.
    pub fn real_parts(&self) -> Vec<T> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn scaled(&self, s: Complex<T>) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.same_as(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.grid.same_as(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.grid.same_as(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a * b)
                .collect(),
        })
    }

    /// Bilinear (unconjugated) pairing `Σ a b h^3`.
    pub fn bilinear(&self, other: &Self) -> Result<Complex<T>> {
        self.grid.same_as(&other.grid)?;
        let s = self
            .values
            .iter()
            .zip(&other.values)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (&a, &b)| acc + a * b);
        Ok(s * self.grid.cell_volume())
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Unnormalised 3D FFT plan for cubes of side `n`.
#[derive(Clone)]
pub struct Fft3Plan<T: Scalar> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> std::fmt::Debug for Fft3Plan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3Plan").field("n", &self.n).finish()
    }
}

impl<T: Scalar> Fft3Plan<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.forward, self.n, true);
    }

    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.inverse, self.n, false);
    }

    /// Forward transform of data that is zero outside the corner block `[0, nz)^3`.
    pub fn forward_pruned(&self, data: &mut [Complex<T>], nz: usize) {
        self.transform(data, &self.forward, nz, true);
    }

    /// Inverse transform whose result is only needed on the corner block `[0, nz)^3`.
    /// Values outside the block are left in an unspecified state.
    pub fn inverse_pruned(&self, data: &mut [Complex<T>], nz: usize) {
        self.transform(data, &self.inverse, nz, false);
    }

    fn transform(&self, data: &mut [Complex<T>], fft: &Arc<dyn Fft<T>>, nz: usize, forward: bool) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "FFT buffer does not match plan size");
        let all = 0..n;
        let block = 0..nz.min(n);
        if forward {
            fft_lines(data, n, 2, fft, [block.clone(), block.clone(), all.clone()]);
            fft_lines(data, n, 1, fft, [block, all.clone(), all.clone()]);
            fft_lines(data, n, 0, fft, [all.clone(), all.clone(), all]);
        } else {
            fft_lines(data, n, 0, fft, [all.clone(), all.clone(), all.clone()]);
            fft_lines(data, n, 1, fft, [block.clone(), all.clone(), all]);
            fft_lines(data, n, 2, fft, [block.clone(), block, 0..n]);
        }
    }
}

/// Transforms every line along `axis` whose two other coordinates fall in `ranges`.
fn fft_lines<T: Scalar>(
    data: &mut [Complex<T>],
    n: usize,
    axis: usize,
    fft: &Arc<dyn Fft<T>>,
    ranges: [Range<usize>; 3],
) {
    let plane = n * n;
    let zero = Complex::new(T::zero(), T::zero());
    match axis {
        2 => {
            let r1 = ranges[1].clone();
            data.par_chunks_mut(plane)
                .enumerate()
                .filter(|(i, _)| ranges[0].contains(i))
                .for_each(|(_, slab)| {
                    let mut scratch = vec![zero; fft.get_inplace_scratch_len()];
                    let lines = &mut slab[r1.start * n..r1.end * n];
                    fft.process_with_scratch(lines, &mut scratch);
                });
        }
        1 => {
            let r2 = ranges[2].clone();
            let width = r2.len();
            data.par_chunks_mut(plane)
                .enumerate()
                .filter(|(i, _)| ranges[0].contains(i))
                .for_each(|(_, slab)| {
                    let mut scratch = vec![zero; fft.get_inplace_scratch_len()];
                    let mut buf = vec![zero; n * width];
                    for j in 0..n {
                        for (c, l) in r2.clone().enumerate() {
                            buf[c * n + j] = slab[j * n + l];
                        }
                    }
                    fft.process_with_scratch(&mut buf, &mut scratch);
                    for j in 0..n {
                        for (c, l) in r2.clone().enumerate() {
                            slab[j * n + l] = buf[c * n + j];
                        }
                    }
                });
        }
        _ => {
            let r2 = ranges[2].clone();
            let width = r2.len();
            let mut scratch = vec![zero; fft.get_inplace_scratch_len()];
            let mut buf = vec![zero; n * width];
            for j in ranges[1].clone() {
                for i in 0..n {
                    let row = (i * n + j) * n;
                    for (c, l) in r2.clone().enumerate() {
                        buf[c * n + i] = data[row + l];
                    }
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for i in 0..n {
                    let row = (i * n + j) * n;
                    for (c, l) in r2.clone().enumerate() {
                        data[row + l] = buf[c * n + i];
                    }
                }
            }
        }
    }
}

/// Unitary forward DFT of a field; the result lives on the same grid in
/// spectral index order (see [`FrequencyLattice`]).
pub fn dft_forward<T: Scalar>(field: &ComplexField3<T>) -> ComplexField3<T> {
    let n = field.grid.n;
    let plan = Fft3Plan::new(n);
    let mut values = field.values.clone();
    plan.forward(&mut values);
    let s = T::one() / T::of_usize(n * n * n).sqrt();
    values.iter_mut().for_each(|v| *v = *v * s);
    ComplexField3 {
        grid: field.grid,
        values,
    }
}

/// Unitary inverse of [`dft_forward`].
pub fn dft_inverse<T: Scalar>(spectrum: &ComplexField3<T>) -> ComplexField3<T> {
    let n = spectrum.grid.n;
    let plan = Fft3Plan::new(n);
    let mut values = spectrum.values.clone();
    plan.inverse(&mut values);
    let s = T::one() / T::of_usize(n * n * n).sqrt();
    values.iter_mut().for_each(|v| *v = *v * s);
    ComplexField3 {
        grid: spectrum.grid,
        values,
    }
}

/// Tabulates `symbol` on the frequency lattice, rejecting non-finite values.
pub fn tabulate_symbol<T: Scalar>(
    grid: &Grid3<T>,
    symbol: impl Fn([T; 3]) -> Complex<T> + Sync,
) -> Result<Vec<Complex<T>>> {
    let lattice = grid.frequencies();
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let xi = lattice.xi(idx);
            let s = symbol(xi);
            if s.re.is_finite() && s.im.is_finite() {
                Ok(s)
            } else {
                Err(Error::SingularSymbol {
                    xi: vec3::to_f64(xi),
                })
            }
        })
        .collect()
}

/// Applies the Fourier multiplier `symbol(ξ)`:
/// `dft_inverse(symbol · dft_forward(field))`.
///
/// The caller decides the value at `ξ = 0` for symbols singular there.
pub fn spectral_multiply<T: Scalar>(
    field: &ComplexField3<T>,
    symbol: impl Fn([T; 3]) -> Complex<T> + Sync,
) -> Result<ComplexField3<T>> {
    let table = tabulate_symbol(&field.grid, symbol)?;
    Ok(apply_multiplier_table(field, &table, &Fft3Plan::new(field.grid.n)))
}

/// Real-valued symbol convenience wrapper around [`spectral_multiply`].
pub fn spectral_multiply_real<T: Scalar>(
    field: &ComplexField3<T>,
    symbol: impl Fn([T; 3]) -> T + Sync,
) -> Result<ComplexField3<T>> {
    spectral_multiply(field, |xi| Complex::new(symbol(xi), T::zero()))
}

/// Multiplier application with a pre-tabulated symbol and plan.
pub(crate) fn apply_multiplier_table<T: Scalar>(
    field: &ComplexField3<T>,
    table: &[Complex<T>],
    plan: &Fft3Plan<T>,
) -> ComplexField3<T> {
    let n = field.grid.n;
    let mut values = field.values.clone();
    plan.forward(&mut values);
    let s = T::one() / T::of_usize(n * n * n);
    values
        .iter_mut()
        .zip(table)
        .for_each(|(v, &m)| *v = *v * m * s);
    plan.inverse(&mut values);
    ComplexField3 {
        grid: field.grid,
        values,
    }
}
