//! Outgoing resolvent and the Lippmann–Schwinger fixed point.
//!
//! `R_k φ(x) = ∫ Φ_k(x - y) φ(y) dy` with `Φ_k(r) = e^{ik|r|} / (4π|r|)` is
//! evaluated as a discrete aperiodic convolution: the kernel is tabulated on
//! the offsets `s h`, `s ∈ [-N, N)^3`, and both operands are zero-padded to a
//! `(2N)^3` periodic grid, so no periodic image ever reaches the box.
//!
//! The self cell uses the mean of `Φ_k` over the ball of volume `h^3`
//! (radius `a = (3/(4π))^{1/3} h`):
//!
//! ```text
//! h^3 * mean = ∫_0^a r e^{ikr} dr = (e^{ika} (1 - ika) - 1) / k^2
//! ```
//!
//! which tends to `a^2 / 2` as `k → 0`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ComplexField3, Fft3Plan, Grid3};
use crate::rng::splitmix;
use crate::scalar::{cis, vec3, Scalar};

/// Largest admissible `k h`.
pub const RESOLUTION_LIMIT: f64 = 0.6;

/// Number of power iterations used by [`estimate_contraction`].
pub const POWER_ITERATIONS: usize = 30;

/// Plane wave `e^{ik d.x}`, switched on (`alpha = 1`) or off (`alpha = 0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncidentWave<T> {
    alpha: u8,
    direction: [T; 3],
    k: T,
}

impl<T: Scalar> IncidentWave<T> {
    pub fn new(alpha: u8, direction: [T; 3], k: T) -> Result<Self> {
        if alpha > 1 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be 0 or 1, got {alpha}"
            )));
        }
        let tol = if std::mem::size_of::<T>() == 4 { 1e-6 } else { 1e-12 };
        if (vec3::norm(direction) - T::one()).abs() > T::of(tol) {
            return Err(Error::InvalidArgument(format!(
                "incident direction is not a unit vector (|d| = {})",
                vec3::norm(direction)
            )));
        }
        if !(k > T::zero() && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("wavenumber {k} must be positive")));
        }
        Ok(Self {
            alpha,
            direction,
            k,
        })
    }

    /// No incident wave; `direction` and `k` are still carried for the G terms.
    pub fn off(direction: [T; 3], k: T) -> Result<Self> {
        Self::new(0, direction, k)
    }

    pub fn alpha(&self) -> u8 {
        self.alpha
    }

    pub fn direction(&self) -> [T; 3] {
        self.direction
    }

    pub fn k(&self) -> T {
        self.k
    }

    /// `e^{ik d.x}` on the grid, regardless of `alpha`.
    pub fn field(&self, grid: &Grid3<T>) -> ComplexField3<T> {
        let kd = vec3::scale(self.direction, self.k);
        ComplexField3::from_fn(*grid, |x| cis(vec3::dot(kd, x)))
    }
}

/// Checks `k h <= RESOLUTION_LIMIT`.
pub fn check_resolution<T: Scalar>(grid: &Grid3<T>, k: T) -> Result<()> {
    let kh = (k * grid.spacing()).to_f64_lossy();
    if kh > RESOLUTION_LIMIT + 1e-12 {
        return Err(Error::Resolution {
            k: k.to_f64_lossy(),
            kh,
            limit: RESOLUTION_LIMIT,
        });
    }
    Ok(())
}

/// Spectral table of the truncated outgoing kernel for one grid and wavenumber.
pub struct ResolventKernel<T: Scalar> {
    grid: Grid3<T>,
    k: T,
    plan: Fft3Plan<T>,
    table: Vec<Complex<T>>,
}

impl<T: Scalar> std::fmt::Debug for ResolventKernel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResolventKernel")
            .field("grid", &self.grid)
            .field("k", &self.k)
            .finish()
    }
}

/// Cell-integrated self term `(e^{ika}(1 - ika) - 1) / k^2`.
pub fn self_cell_weight<T: Scalar>(k: T, h: T) -> Complex<T> {
    let a = (T::of(3.0) / (T::of(4.0) * T::PI())).cbrt() * h;
    let x = k * a;
    if x.abs() < T::of(0.05) {
        // (e^{ix}(1 - ix) - 1) / x^2 = Σ_{n≥2} i^n x^{n-2} (1 - n) / n!
        let mut sum = Complex::new(T::zero(), T::zero());
        let mut power = Complex::new(-T::one(), T::zero());
        let mut fact = T::of(2.0);
        for n in 2..=10usize {
            if n > 2 {
                power = power * Complex::new(T::zero(), x);
                fact = fact * T::of_usize(n);
            }
            sum = sum + power * (T::of(1.0 - n as f64) / fact);
        }
        sum * (a * a)
    } else {
        let e = cis(x);
        (e * Complex::new(T::one(), -x) - T::one()) / (k * k)
    }
}

impl<T: Scalar> ResolventKernel<T> {
    pub fn new(grid: Grid3<T>, k: T) -> Result<Self> {
        if !(k > T::zero() && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("wavenumber {k} must be positive")));
        }
        let n = grid.n();
        let m = 2 * n;
        let h = grid.spacing();
        let h3 = grid.cell_volume();
        let four_pi = T::of(4.0) * T::PI();
        let signed = |p: usize| -> T {
            if p >= n {
                T::of(p as f64 - m as f64)
            } else {
                T::of_usize(p)
            }
        };
        let mut table = vec![Complex::new(T::zero(), T::zero()); m * m * m];
        table.par_chunks_mut(m * m).enumerate().for_each(|(i, slab)| {
            let x = signed(i) * h;
            for j in 0..m {
                let y = signed(j) * h;
                for l in 0..m {
                    let z = signed(l) * h;
                    let r = (x * x + y * y + z * z).sqrt();
                    slab[j * m + l] = if r == T::zero() {
                        self_cell_weight(k, h)
                    } else {
                        cis(k * r) * (h3 / (four_pi * r))
                    };
                }
            }
        });
        let plan = Fft3Plan::new(m);
        plan.forward(&mut table);
        let scale = T::one() / T::of_usize(m * m * m);
        table.iter_mut().for_each(|v| *v = *v * scale);
        Ok(Self {
            grid,
            k,
            plan,
            table,
        })
    }

    pub fn grid(&self) -> &Grid3<T> {
        &self.grid
    }

    pub fn k(&self) -> T {
        self.k
    }
}

/// Discrete `R_k φ` on the kernel's grid.
pub fn resolvent_apply<T: Scalar>(kernel: &ResolventKernel<T>, phi: &ComplexField3<T>) -> Result<ComplexField3<T>> {
    kernel.grid.same_as(phi.grid())?;
    let n = kernel.grid.n();
    let m = 2 * n;
    let zero = Complex::new(T::zero(), T::zero());
    if phi.is_zero() {
        return Ok(ComplexField3::zeros(kernel.grid));
    }
    let mut buf = vec![zero; m * m * m];
    let src = phi.values();
    buf.par_chunks_mut(m * m).take(n).enumerate().for_each(|(i, slab)| {
        for j in 0..n {
            let from = (i * n + j) * n;
            slab[j * m..j * m + n].copy_from_slice(&src[from..from + n]);
        }
    });
    kernel.plan.forward_pruned(&mut buf, n);
    buf.par_iter_mut()
        .zip(kernel.table.par_iter())
        .for_each(|(v, &t)| *v = *v * t);
    kernel.plan.inverse_pruned(&mut buf, n);
    let mut out = ComplexField3::zeros(kernel.grid);
    out.values_mut()
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(i, slab)| {
            for j in 0..n {
                let from = (i * m + j) * m;
                slab[j * n..j * n + n].copy_from_slice(&buf[from..from + n]);
            }
        });
    Ok(out)
}

/// `q * R_k v`.
fn q_resolvent<T: Scalar>(kernel: &ResolventKernel<T>, q: &ComplexField3<T>, v: &ComplexField3<T>) -> Result<ComplexField3<T>> {
    resolvent_apply(kernel, v)?.mul(q)
}

/// Born iterates `(q R_k)^j seed` for `j = 0..=j_max`.
pub fn born_iterate<T: Scalar>(
    kernel: &ResolventKernel<T>,
    q: &ComplexField3<T>,
    seed: &ComplexField3<T>,
    j_max: usize,
) -> Result<Vec<ComplexField3<T>>> {
    kernel.grid.same_as(q.grid())?;
    kernel.grid.same_as(seed.grid())?;
    let mut terms = Vec::with_capacity(j_max + 1);
    terms.push(seed.clone());
    for j in 0..j_max {
        let next = q_resolvent(kernel, q, &terms[j])?;
        terms.push(next);
    }
    Ok(terms)
}

/// Largest singular value of `v ↦ R_k(q v)` by power iteration on `A* A`.
///
/// The returned value is the square root of the last Rayleigh quotient,
/// `‖A v‖ / ‖v‖`. Returns exactly zero when `q` vanishes.
pub fn estimate_contraction<T: Scalar>(kernel: &ResolventKernel<T>, q: &ComplexField3<T>) -> Result<T> {
    estimate_contraction_with(kernel, q, POWER_ITERATIONS).map(|h| *h.last().unwrap_or(&T::zero()))
}

/// Like [`estimate_contraction`] but returns the estimate after every iteration.
pub fn estimate_contraction_with<T: Scalar>(
    kernel: &ResolventKernel<T>,
    q: &ComplexField3<T>,
    iterations: usize,
) -> Result<Vec<T>> {
    kernel.grid.same_as(q.grid())?;
    if q.is_zero() {
        return Ok(vec![T::zero(); iterations.max(1)]);
    }
    // Deterministic start: pseudo-random signs on the support of q.
    let mut v = q.clone();
    for (idx, x) in v.values_mut().iter_mut().enumerate() {
        let bits = splitmix(idx as u64 ^ 0x636f_6e74_7261_6374);
        let re = if bits & 1 == 0 { T::one() } else { -T::one() };
        let im = if bits & 2 == 0 { T::one() } else { -T::one() };
        *x = if x.norm_sqr() > T::zero() {
            Complex::new(re, im)
        } else {
            Complex::new(T::zero(), T::zero())
        };
    }
    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations.max(1) {
        let vn = v.euclidean_norm();
        v = v.scaled(Complex::new(T::one() / vn, T::zero()));
        let av = resolvent_apply(kernel, &v.mul(q)?)?;
        history.push(av.euclidean_norm());
        // A* w = q * conj(R(conj w)), using the symmetry of the kernel.
        let conj = av.map(|c| c.conj());
        v = resolvent_apply(kernel, &conj)?.map(|c| c.conj()).mul(q)?;
        if v.is_zero() {
            break;
        }
    }
    Ok(history)
}

/// Solver knobs shared by every solve in a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-8),
            max_iter: 200,
        }
    }
}

/// Converged scattered field.
#[derive(Clone, Debug)]
pub struct ScatterSolution<T> {
    pub u_sc: ComplexField3<T>,
    pub iterations: usize,
    pub residual: T,
    pub contraction_estimate: T,
}

/// Solves `(I - R_k q) u = alpha R_k(q u^i) - R_k f` by fixed-point iteration.
///
/// The contraction of `R_k q` is estimated first; a value `>= 1` is refused.
pub fn solve_lippmann_schwinger<T: Scalar>(
    kernel: &ResolventKernel<T>,
    q: &ComplexField3<T>,
    f: Option<&ComplexField3<T>>,
    incident: &IncidentWave<T>,
    tol: T,
    max_iter: usize,
) -> Result<ScatterSolution<T>> {
    let contraction = estimate_contraction(kernel, q)?;
    solve_with_contraction(kernel, q, f, incident, SolverOptions { tol, max_iter }, contraction)
}

/// [`solve_lippmann_schwinger`] with a contraction estimate computed elsewhere.
pub fn solve_with_contraction<T: Scalar>(
    kernel: &ResolventKernel<T>,
    q: &ComplexField3<T>,
    f: Option<&ComplexField3<T>>,
    incident: &IncidentWave<T>,
    options: SolverOptions<T>,
    contraction: T,
) -> Result<ScatterSolution<T>> {
    let grid = kernel.grid;
    grid.same_as(q.grid())?;
    if let Some(f) = f {
        grid.same_as(f.grid())?;
    }
    if (incident.k - kernel.k).abs() > T::of(1e-12) * kernel.k {
        return Err(Error::InvalidArgument(format!(
            "incident wavenumber {} differs from kernel wavenumber {}",
            incident.k, kernel.k
        )));
    }
    if contraction >= T::one() {
        return Err(Error::NonContractive {
            estimate: contraction.to_f64_lossy(),
        });
    }

    let mut source = ComplexField3::zeros(grid);
    if incident.alpha == 1 && !q.is_zero() {
        source = incident.field(&grid).mul(q)?;
    }
    if let Some(f) = f {
        source = source.sub(f)?;
    }
    let rhs = resolvent_apply(kernel, &source)?;
    let rhs_norm = rhs.euclidean_norm();
    if rhs_norm == T::zero() {
        return Ok(ScatterSolution {
            u_sc: rhs,
            iterations: 0,
            residual: T::zero(),
            contraction_estimate: contraction,
        });
    }

    let mut u = rhs.clone();
    let mut residual = T::infinity();
    for it in 1..=options.max_iter {
        let next = rhs.add(&resolvent_apply(kernel, &u.mul(q)?)?)?;
        residual = u.sub(&next)?.euclidean_norm() / rhs_norm;
        if residual <= options.tol {
            return Ok(ScatterSolution {
                u_sc: u,
                iterations: it,
                residual,
                contraction_estimate: contraction,
            });
        }
        u = next;
    }
    Err(Error::NotConverged {
        iterations: options.max_iter,
        residual: residual.to_f64_lossy(),
    })
}
