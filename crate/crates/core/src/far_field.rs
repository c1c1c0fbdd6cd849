//! Far-field patterns, their Born decomposition and wavenumber sweeps.
//!
//! With `u_sc = R_k ρ`, the far-field pattern is
//! `u^∞(x̂) = (4π)^{-1} ∫ e^{-ik x̂.z} ρ(z) dz`, where
//! `ρ = -f + q (u_sc + alpha u^i)`. The Born terms split `ρ` into
//! `-(qR)^j f` (the `F_j`) and `(qR)^j q u^i` (the `G_j`).

use num_complex::Complex;
use rayon::prelude::*;

use crate::archive::{ArchiveMeta, FarFieldArchive, FarFieldSample, SweepMode};
use crate::error::{Error, Result};
use crate::forward::{
    born_iterate, check_resolution, estimate_contraction, solve_lippmann_schwinger,
    solve_with_contraction, IncidentWave, ResolventKernel, SolverOptions,
};
use crate::grid::{ComplexField3, Grid3};
use crate::random_field::FieldRealization;
use crate::scalar::{cis, vec3, Scalar};

/// Direct quadrature `Σ e^{-ik x̂.z} field(z) h^3` at an arbitrary `k x̂`.
///
/// The phase factorises over the axes, so the sum costs `3n` exponentials
/// and `n^3` multiply-adds. The reduction order is fixed.
pub fn far_field_project<T: Scalar>(field: &ComplexField3<T>, direction: [T; 3], k: T) -> Complex<T> {
    let grid = field.grid();
    let n = grid.n();
    let axis = grid.axis();
    let phases: Vec<Vec<Complex<T>>> = (0..3)
        .map(|a| axis.iter().map(|&x| cis(-k * direction[a] * x)).collect())
        .collect();
    let values = field.values();
    let zero = Complex::new(T::zero(), T::zero());
    let partial: Vec<Complex<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc_i = zero;
            for j in 0..n {
                let row = &values[(i * n + j) * n..(i * n + j + 1) * n];
                let mut acc_l = zero;
                for (v, p) in row.iter().zip(&phases[2]) {
                    acc_l += v * p;
                }
                acc_i += acc_l * phases[1][j];
            }
            acc_i * phases[0][i]
        })
        .collect();
    partial.into_iter().fold(zero, |a, b| a + b) * grid.cell_volume()
}

/// Far-field Born terms at one direction and wavenumber.
#[derive(Clone, Debug, PartialEq)]
pub struct BornTerms<T> {
    /// `F_0 .. F_{j_max}`; the last entry is the remainder of the series.
    pub f_terms: Vec<Complex<T>>,
    /// `G_0 .. G_{j_max}`; the last entry is the remainder of the series.
    pub g_terms: Vec<Complex<T>>,
}

/// `F_j = -∫ e^{-ik x̂.z} (qR)^j f` and `G_j = ∫ e^{-ik x̂.z} (qR)^j q u^i`.
///
/// Entries below `j_max` are single terms. Entry `j_max` is the tail
/// `Σ_{j ≥ j_max}`, obtained from a converged solve minus the partial sum.
/// The G terms are computed from the incident direction whatever its alpha.
#[allow(clippy::too_many_arguments)]
pub fn born_far_field_terms<T: Scalar>(
    kernel: &ResolventKernel<T>,
    q: &ComplexField3<T>,
    f: &ComplexField3<T>,
    incident: &IncidentWave<T>,
    direction: [T; 3],
    j_max: usize,
    options: SolverOptions<T>,
) -> Result<BornTerms<T>> {
    let grid = *kernel.grid();
    let k = kernel.k();
    let proj = |field: &ComplexField3<T>| far_field_project(field, direction, k);
    let zero = Complex::new(T::zero(), T::zero());

    if q.is_zero() {
        let mut f_terms = vec![zero; j_max + 1];
        f_terms[0] = -proj(f);
        return Ok(BornTerms {
            f_terms,
            g_terms: vec![zero; j_max + 1],
        });
    }

    let contraction = estimate_contraction(kernel, q)?;
    let u_i = incident.field(&grid);
    let seed_g = u_i.mul(q)?;

    let mut f_terms = Vec::with_capacity(j_max + 1);
    let f_iter = born_iterate(kernel, q, f, j_max.saturating_sub(1))?;
    for term in f_iter.iter().take(j_max) {
        f_terms.push(-proj(term));
    }
    let source_only = IncidentWave::off(incident.direction(), k)?;
    let u_f = solve_with_contraction(kernel, q, Some(f), &source_only, options, contraction)?;
    // Σ_j (qR)^j f = f - q u_f
    let total_f = -proj(&f.sub(&u_f.u_sc.mul(q)?)?);
    f_terms.push(total_f - f_terms.iter().fold(zero, |a, &b| a + b));

    let mut g_terms = Vec::with_capacity(j_max + 1);
    let g_iter = born_iterate(kernel, q, &seed_g, j_max.saturating_sub(1))?;
    for term in g_iter.iter().take(j_max) {
        g_terms.push(proj(term));
    }
    let lit = IncidentWave::new(1, incident.direction(), k)?;
    let u_q = solve_with_contraction(kernel, q, None, &lit, options, contraction)?;
    // Σ_j (qR)^j q u^i = q (u^i + u_q)
    let total_g = proj(&u_i.add(&u_q.u_sc)?.mul(q)?);
    g_terms.push(total_g - g_terms.iter().fold(zero, |a, &b| a + b));

    Ok(BornTerms { f_terms, g_terms })
}

/// `u^∞ = (4π)^{-1} (Σ F_j + alpha Σ G_j)`.
pub fn assemble_far_field<T: Scalar>(f_terms: &[Complex<T>], g_terms: &[Complex<T>], alpha: u8) -> Complex<T> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut total = f_terms.iter().fold(zero, |a, &b| a + b);
    if alpha == 1 {
        total += g_terms.iter().fold(zero, |a, &b| a + b);
    }
    total / (T::of(4.0) * T::PI())
}

/// How far-field data are produced in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardModel {
    /// First Born terms only: `u^∞ = (F_0 + alpha G_0) / 4π`. No solves.
    Born,
    /// Converged Lippmann–Schwinger solve per wavenumber (and direction when lit).
    Full,
}

/// One fixed realization of the medium and the solver settings.
#[derive(Clone, Debug)]
pub struct Scene<T> {
    pub source: FieldRealization<T>,
    pub potential: FieldRealization<T>,
    pub seed: u64,
    pub solver: SolverOptions<T>,
    pub model: ForwardModel,
}

impl<T: Scalar> Scene<T> {
    pub fn grid(&self) -> &Grid3<T> {
        self.source.grid()
    }
}

/// Wavenumber band of a sweep: base points `k_min + i dk`, `i < n_k`, plus shifts.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSpec {
    pub k_min: f64,
    pub dk: f64,
    pub n_k: usize,
    pub taus: Vec<f64>,
}

impl BandSpec {
    /// Lattice steps of the shift `tau` consumed by the estimator in `mode`.
    pub fn shift_steps(&self, tau: f64, mode: SweepMode) -> Result<i64> {
        let shift = match mode {
            SweepMode::Passive => tau,
            SweepMode::Backscatter => tau / 2.0,
        };
        lattice_steps(shift, self.dk)
    }

    /// Sorted lattice indices needed by every base point and shift.
    pub fn lattice_indices(&self, mode: SweepMode) -> Result<Vec<i64>> {
        if !(self.dk > 0.0 && self.k_min > 0.0) || self.n_k == 0 {
            return Err(Error::InvalidArgument(format!(
                "band needs k_min > 0, dk > 0 and n_k >= 1 (got {}, {}, {})",
                self.k_min, self.dk, self.n_k
            )));
        }
        let mut steps = vec![0i64];
        for &t in &self.taus {
            steps.push(self.shift_steps(t, mode)?);
        }
        let mut idx: Vec<i64> = steps
            .iter()
            .flat_map(|&s| (0..self.n_k as i64).map(move |i| i + s))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }
}

/// Number of `dk` steps in `shift`; fails unless it is an integer multiple.
pub fn lattice_steps(shift: f64, dk: f64) -> Result<i64> {
    let t = shift / dk;
    let r = t.round();
    if shift < 0.0 || (t - r).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(Error::ShiftLattice { shift, dk });
    }
    Ok(r as i64)
}

/// Generates the far-field archive of one realization over a band.
///
/// Passive mode needs one solve per wavenumber (no incident wave, so every
/// direction shares it); backscatter mode lights the medium from `-x̂` and
/// solves once per direction and wavenumber. Under [`ForwardModel::Full`] the
/// contraction is estimated once at the lowest wavenumber and reused.
pub fn sweep_band<T: Scalar>(
    scene: &Scene<T>,
    directions: &[[T; 3]],
    band: &BandSpec,
    mode: SweepMode,
) -> Result<FarFieldArchive> {
    let grid = *scene.grid();
    grid.same_as(scene.potential.grid())?;
    for d in directions {
        if (vec3::norm(*d) - T::one()).abs() > T::of(1e-9) {
            return Err(Error::InvalidArgument("sweep direction is not a unit vector".into()));
        }
    }
    let meta = ArchiveMeta {
        alpha: mode.alpha(),
        mode,
        dk: band.dk,
        k_min: band.k_min,
        n_k: band.n_k,
        seed: scene.seed,
        grid_n: grid.n() as u32,
        half_width: grid.half_width().to_f64_lossy(),
        m_f: scene.source.spec.m.to_f64_lossy(),
        m_q: scene.potential.spec.m.to_f64_lossy(),
        directions: directions.iter().map(|d| vec3::to_f64(*d)).collect(),
        taus: band.taus.clone(),
    };
    let indices = band.lattice_indices(mode)?;
    let k_top = meta.lattice_k(*indices.last().expect("band is non-empty"));
    check_resolution(&grid, T::of(k_top))?;

    let f = &scene.source.values;
    let q = &scene.potential.values;
    let lit = mode == SweepMode::Backscatter;
    let full = scene.model == ForwardModel::Full && !q.is_zero();

    let mut contraction = T::zero();
    if full {
        let kernel = ResolventKernel::new(grid, T::of(meta.lattice_k(indices[0])))?;
        contraction = estimate_contraction(&kernel, q)?;
        if contraction >= T::one() {
            return Err(Error::NonContractive {
                estimate: contraction.to_f64_lossy(),
            });
        }
    }

    let four_pi = T::of(4.0) * T::PI();
    let mut samples = Vec::with_capacity(indices.len() * directions.len());
    for &idx in &indices {
        let k64 = meta.lattice_k(idx);
        let k = T::of(k64);
        let values: Vec<Complex<T>> = if !full {
            directions
                .par_iter()
                .map(|&d| {
                    let mut v = -far_field_project(f, d, k);
                    if lit {
                        // q e^{-ik x̂.z} projected at k x̂ combines to the phase 2k.
                        v += far_field_project(q, d, k + k);
                    }
                    v / four_pi
                })
                .collect()
        } else {
            let kernel = ResolventKernel::new(grid, k)?;
            if lit {
                let mut out = Vec::with_capacity(directions.len());
                for &d in directions {
                    let inc = IncidentWave::new(1, vec3::neg(d), k)?;
                    let sol = solve_with_contraction(&kernel, q, Some(f), &inc, scene.solver, contraction)?;
                    let rho = sol.u_sc.add(&inc.field(&grid))?.mul(q)?.sub(f)?;
                    out.push(far_field_project(&rho, d, k) / four_pi);
                }
                out
            } else {
                let inc = IncidentWave::off([T::zero(), T::zero(), T::one()], k)?;
                let sol = solve_with_contraction(&kernel, q, Some(f), &inc, scene.solver, contraction)?;
                let rho = sol.u_sc.mul(q)?.sub(f)?;
                directions
                    .par_iter()
                    .map(|&d| far_field_project(&rho, d, k) / four_pi)
                    .collect()
            }
        };
        for (di, v) in values.into_iter().enumerate() {
            let d = meta.directions[di];
            samples.push(FarFieldSample {
                dir_index: di as u32,
                direction: d,
                k: k64,
                incident: lit.then_some([-d[0], -d[1], -d[2]]),
                value: Complex::new(v.re.to_f64_lossy(), v.im.to_f64_lossy()),
                realization_seed: scene.seed,
            });
        }
    }
    FarFieldArchive::new(meta, samples)
}

/// Far field of one converged solve, `(4π)^{-1} ∫ e^{-ik x̂.z} ρ`.
pub fn solve_far_field<T: Scalar>(
    kernel: &ResolventKernel<T>,
    q: &ComplexField3<T>,
    f: &ComplexField3<T>,
    incident: &IncidentWave<T>,
    direction: [T; 3],
    options: SolverOptions<T>,
) -> Result<Complex<T>> {
    let grid = *kernel.grid();
    let sol = solve_lippmann_schwinger(kernel, q, Some(f), incident, options.tol, options.max_iter)?;
    let mut total = sol.u_sc;
    if incident.alpha() == 1 {
        total = total.add(&incident.field(&grid))?;
    }
    let rho = total.mul(q)?.sub(f)?;
    Ok(far_field_project(&rho, direction, kernel.k()) / (T::of(4.0) * T::PI()))
}

/// `n` quasi-uniform unit vectors on the sphere (Fibonacci lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// `n` quasi-uniform unit vectors on the open half-sphere `x̂.normal > 0`.
///
/// The first point is `normal` itself; the rest spiral outwards with equal
/// area per point.
pub fn fibonacci_hemisphere(n: usize, normal: [f64; 3]) -> Result<Vec<[f64; 3]>> {
    let e3 = vec3::normalized(normal)
        .ok_or_else(|| Error::InvalidArgument("hemisphere normal is zero".into()))?;
    let helper = if e3[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = vec3::normalized(vec3::cross(helper, e3)).expect("helper is not parallel");
    let e2 = vec3::cross(e3, e1);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    Ok((0..n)
        .map(|i| {
            if i == 0 {
                return e3;
            }
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            let (s, c) = phi.sin_cos();
            let v = vec3::add(
                vec3::add(vec3::scale(e1, r * c), vec3::scale(e2, r * s)),
                vec3::scale(e3, z),
            );
            vec3::normalized(v).expect("unit combination")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_single_cell_projection() {
        let grid = Grid3::new(16, 1.0).unwrap();
        let d = [0.0, 0.6, 0.8];
        assert_eq!(
            far_field_project(&ComplexField3::zeros(grid), d, 3.0),
            Complex::new(0.0, 0.0)
        );
        let mut f = ComplexField3::zeros(grid);
        f.values_mut()[grid.nearest_index([0.0; 3]).unwrap()] = Complex::new(1.0 / grid.cell_volume(), 0.0);
        let v = far_field_project(&f, d, 0.6 / grid.spacing());
        assert!((v - Complex::new(1.0, 0.0)).norm() < 0.02);
    }

    #[test]
    fn projection_matches_brute_force() {
        let grid = Grid3::new(8, 1.0).unwrap();
        let f = ComplexField3::from_fn(grid, |x| Complex::new(x[0] + 0.3, x[1] * x[2]));
        let d = [0.48, 0.6, 0.64];
        let k = 2.5;
        let mut brute = Complex::new(0.0, 0.0);
        for (idx, v) in f.values().iter().enumerate() {
            brute += v * cis(-k * vec3::dot(d, grid.point(idx)));
        }
        brute *= grid.cell_volume();
        assert!((far_field_project(&f, d, k) - brute).norm() < 1e-13 * brute.norm());
    }

    #[test]
    fn assembly_rules() {
        let z = Complex::new(0.0, 0.0);
        assert_eq!(assemble_far_field::<f64>(&[z, z], &[z, z], 1), z);
        let f = [Complex::new(4.0 * std::f64::consts::PI, 0.0)];
        let g = [Complex::new(3.0, -1.0)];
        assert_eq!(assemble_far_field(&f, &g, 0), assemble_far_field(&f, &[], 0));
        assert!((assemble_far_field(&f, &[], 0) - Complex::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn lattice_steps_contract() {
        assert_eq!(lattice_steps(0.5, 0.0625).unwrap(), 8);
        assert!(matches!(lattice_steps(0.3, 0.25), Err(Error::ShiftLattice { .. })));
        let band = BandSpec {
            k_min: 8.0,
            dk: 0.25,
            n_k: 1,
            taus: vec![0.0, 0.5],
        };
        assert_eq!(band.lattice_indices(SweepMode::Passive).unwrap(), vec![0, 2]);
        assert_eq!(band.lattice_indices(SweepMode::Backscatter).unwrap(), vec![0, 1]);
    }

    #[test]
    fn hemisphere_points_are_unit_and_on_the_right_side() {
        let n = [0.3, -0.4, 0.5];
        let pts = fibonacci_hemisphere(64, n).unwrap();
        assert_eq!(pts.len(), 64);
        let nn = vec3::normalized(n).unwrap();
        for p in &pts {
            assert!((vec3::norm(*p) - 1.0).abs() < 1e-12);
            assert!(vec3::dot(*p, nn) > 0.0);
        }
        assert_eq!(pts[0], nn);
        let sphere = fibonacci_sphere(100);
        assert!(sphere.iter().all(|p| (vec3::norm(*p) - 1.0).abs() < 1e-12));
    }
}
