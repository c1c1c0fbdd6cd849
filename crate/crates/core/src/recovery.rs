//! Single-realization recovery of rough strengths from far-field archives.
//!
//! For a measured direction `x̂` (on the side `x̂.n >= 0` of the separating
//! plane) the band correlation
//!
//! ```text
//! (4 sqrt(2π) / K) ∫_K^{2K} k^m conj(u^∞(x̂, k)) u^∞(x̂, k + s) dk
//! ```
//!
//! estimates `μ̂_f(τ x̂)` from passive data with `s = τ`, and a multiple of
//! `μ̂_q(τ x̂)` from backscatter data with `s = τ / 2`. Under the first Born
//! approximation the backscatter limit is `2^{-m_q} μ̂_q(τ x̂)`, because the
//! potential is probed at frequency `2k`. The opposite half-sphere follows
//! from `μ̂(-ξ) = conj(μ̂(ξ))`.

use std::io::Write;

use num_complex::Complex;

use crate::archive::{FarFieldArchive, SweepMode};
use crate::error::{Error, Result};
use crate::far_field::lattice_steps;
use crate::grid::{dft_inverse, ComplexField3, Grid3};
use crate::random_field::{Bump, StrengthProfile};
use crate::scalar::{vec3, Scalar};

/// Plane `{x.n = offset}` strictly separating the two supports.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationGeometry {
    /// Unit normal pointing from the source support to the potential support.
    pub normal: [f64; 3],
    pub offset: f64,
    /// Distance between the convex hulls.
    pub gap: f64,
    pub source_balls: Vec<([f64; 3], f64)>,
    pub potential_balls: Vec<([f64; 3], f64)>,
}

fn balls_of<T: Scalar>(profile: &StrengthProfile<T>) -> Vec<([f64; 3], f64)> {
    profile
        .bumps()
        .iter()
        .filter(|b| b.amplitude > T::zero())
        .map(|b| (vec3::to_f64(b.center), b.radius.to_f64_lossy()))
        .collect()
}

/// Support point of a ball union's hull in direction `u` (unit).
fn support(balls: &[([f64; 3], f64)], u: [f64; 3]) -> [f64; 3] {
    let mut best = f64::NEG_INFINITY;
    let mut point = [0.0; 3];
    for &(c, r) in balls {
        let v = vec3::dot(c, u) + r;
        if v > best {
            best = v;
            point = vec3::add(c, vec3::scale(u, r));
        }
    }
    point
}

/// Max-margin plane between the hulls of two ball unions.
///
/// The closest hull points are found by Frank–Wolfe iterations on the
/// Minkowski difference; the plane bisects the segment between them.
pub fn separating_normal<T: Scalar>(
    source: &StrengthProfile<T>,
    potential: &StrengthProfile<T>,
) -> Result<SeparationGeometry> {
    let fb = balls_of(source);
    let qb = balls_of(potential);
    if fb.is_empty() || qb.is_empty() {
        return Err(Error::Geometry("both supports must be non-empty".into()));
    }
    let mut x = fb[0].0;
    let mut y = qb[0].0;
    for _ in 0..100_000 {
        let v = vec3::sub(y, x);
        let vn = vec3::norm(v);
        if vn <= 1e-12 {
            break;
        }
        let u = vec3::scale(v, 1.0 / vn);
        let sy = support(&qb, vec3::neg(u));
        let sx = support(&fb, u);
        let s = vec3::sub(sy, sx);
        // Lower bound on the distance from the supporting half-space.
        if vec3::dot(u, s) <= 1e-12 {
            return Err(Error::Geometry(
                "source and potential supports touch or overlap".into(),
            ));
        }
        let step = vec3::sub(s, v);
        let gap = -vec3::dot(v, step);
        if gap <= 1e-15 * vn * vn {
            break;
        }
        let lam = (gap / vec3::dot(step, step)).clamp(0.0, 1.0);
        x = vec3::add(x, vec3::scale(vec3::sub(sx, x), lam));
        y = vec3::add(y, vec3::scale(vec3::sub(sy, y), lam));
    }
    let v = vec3::sub(y, x);
    let gap = vec3::norm(v);
    if gap <= 1e-9 {
        return Err(Error::Geometry(
            "source and potential supports touch or overlap".into(),
        ));
    }
    let normal = vec3::scale(v, 1.0 / gap);
    let offset = vec3::dot(normal, vec3::scale(vec3::add(x, y), 0.5));
    Ok(SeparationGeometry {
        normal,
        offset,
        gap,
        source_balls: fb,
        potential_balls: qb,
    })
}

/// Which strength an estimate targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Source,
    Potential,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Source => "source",
            Target::Potential => "potential",
        }
    }
}

/// One band-correlation estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationEstimate {
    pub direction: [f64; 3],
    pub tau: f64,
    pub k_min: f64,
    /// Number of trapezoid intervals on `[K, 2K]`.
    pub n_k: usize,
    pub value: Complex<f64>,
    pub target: Target,
}

/// `4 sqrt(2π)`, the normalisation of the band average.
pub fn band_constant() -> f64 {
    4.0 * (2.0 * std::f64::consts::PI).sqrt()
}

/// First-Born factor relating the backscatter estimate to `μ̂_q`.
pub fn born_potential_factor(m_q: f64) -> f64 {
    2f64.powf(-m_q)
}

fn band_correlation(
    archive: &FarFieldArchive,
    direction: [f64; 3],
    shift: f64,
    k_min: f64,
    m: f64,
) -> Result<(Complex<f64>, usize)> {
    let meta = archive.meta();
    let dir = meta
        .direction_index(direction)
        .ok_or(Error::MissingDirection { direction })?;
    let steps = lattice_steps(shift, meta.dk)?;
    let n_k = lattice_steps(k_min, meta.dk)? as usize;
    let i0 = meta.lattice_index(k_min).ok_or(Error::ShiftLattice {
        shift: k_min - meta.k_min,
        dk: meta.dk,
    })?;
    if n_k == 0 {
        return Err(Error::InvalidArgument("band [K, 2K] holds no interval".into()));
    }
    let mut acc = Complex::new(0.0, 0.0);
    for j in 0..=n_k as i64 {
        let k = meta.lattice_k(i0 + j);
        let a = archive.value_at_index(dir, i0 + j)?;
        let g = if steps == 0 {
            Complex::new(a.norm_sqr(), 0.0)
        } else {
            a.conj() * archive.value_at_index(dir, i0 + j + steps)?
        };
        let w = if j == 0 || j == n_k as i64 { 0.5 } else { 1.0 };
        acc += g * (w * k.powf(m));
    }
    Ok((acc * (band_constant() * meta.dk / k_min), n_k))
}

fn require_mode(archive: &FarFieldArchive, mode: SweepMode, target: Target) -> Result<()> {
    if archive.mode() != mode {
        return Err(Error::WrongMode {
            expected: target.name(),
            expected_mode: mode.name(),
            found_mode: archive.mode().name(),
        });
    }
    Ok(())
}

/// Band estimate of `μ̂_f(τ x̂)` from passive data.
pub fn estimate_mu_f_hat(
    archive: &FarFieldArchive,
    direction: [f64; 3],
    tau: f64,
    k_min: f64,
    m_f: f64,
) -> Result<CorrelationEstimate> {
    require_mode(archive, SweepMode::Passive, Target::Source)?;
    let (value, n_k) = band_correlation(archive, direction, tau, k_min, m_f)?;
    Ok(CorrelationEstimate {
        direction,
        tau,
        k_min,
        n_k,
        value,
        target: Target::Source,
    })
}

/// Band estimate proportional to `μ̂_q(τ x̂)` from backscatter data (shift `τ/2`).
pub fn estimate_mu_q_hat(
    archive: &FarFieldArchive,
    direction: [f64; 3],
    tau: f64,
    k_min: f64,
    m_q: f64,
) -> Result<CorrelationEstimate> {
    require_mode(archive, SweepMode::Backscatter, Target::Potential)?;
    let (value, n_k) = band_correlation(archive, direction, tau / 2.0, k_min, m_q)?;
    Ok(CorrelationEstimate {
        direction,
        tau,
        k_min,
        n_k,
        value,
        target: Target::Potential,
    })
}

/// Writes `dir_x,dir_y,dir_z,tau,K,n_k,re,im,target` rows.
pub fn write_estimates_csv<W: Write>(out: &mut W, estimates: &[CorrelationEstimate]) -> Result<()> {
    let mut text = String::from("dir_x,dir_y,dir_z,tau,K,n_k,re,im,target\n");
    for e in estimates {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            e.direction[0],
            e.direction[1],
            e.direction[2],
            e.tau,
            e.k_min,
            e.n_k,
            e.value.re,
            e.value.im,
            e.target.name()
        ));
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Samples of `μ̂` on rays `τ x̂`: `values[d * taus.len() + t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarLattice {
    pub directions: Vec<[f64; 3]>,
    pub taus: Vec<f64>,
    pub values: Vec<Complex<f64>>,
}

impl PolarLattice {
    pub fn new(directions: Vec<[f64; 3]>, taus: Vec<f64>, values: Vec<Complex<f64>>) -> Result<Self> {
        if values.len() != directions.len() * taus.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} directions x {} shifts",
                values.len(),
                directions.len(),
                taus.len()
            )));
        }
        Ok(Self {
            directions,
            taus,
            values,
        })
    }

    /// Tabulates `f(τ x̂)` on every ray.
    pub fn from_fn(directions: Vec<[f64; 3]>, taus: Vec<f64>, f: impl Fn([f64; 3]) -> Complex<f64>) -> Self {
        let values = directions
            .iter()
            .flat_map(|d| taus.iter().map(|&t| f(vec3::scale(*d, t))).collect::<Vec<_>>())
            .collect();
        Self {
            directions,
            taus,
            values,
        }
    }

    /// Lattice holding the values of a set of estimates, one per (direction, τ).
    pub fn from_estimates(directions: Vec<[f64; 3]>, taus: Vec<f64>, estimates: &[CorrelationEstimate]) -> Result<Self> {
        let mut values = vec![Complex::new(0.0, 0.0); directions.len() * taus.len()];
        let mut seen = vec![false; values.len()];
        for e in estimates {
            let d = directions
                .iter()
                .position(|x| vec3::norm(vec3::sub(*x, e.direction)) <= 1e-12)
                .ok_or(Error::MissingDirection {
                    direction: e.direction,
                })?;
            let t = taus
                .iter()
                .position(|&t| t == e.tau)
                .ok_or_else(|| Error::InvalidArgument(format!("shift {} not in lattice", e.tau)))?;
            values[d * taus.len() + t] = e.value;
            seen[d * taus.len() + t] = true;
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "no estimate for direction {} shift {}",
                p / taus.len(),
                taus[p % taus.len()]
            )));
        }
        Self::new(directions, taus, values)
    }

    #[inline]
    pub fn value(&self, dir: usize, tau: usize) -> Complex<f64> {
        self.values[dir * self.taus.len() + tau]
    }

    fn ray(&self, dir: usize) -> &[Complex<f64>] {
        let nt = self.taus.len();
        &self.values[dir * nt..(dir + 1) * nt]
    }

    /// Index of the direction `-directions[i]`, if present.
    fn partner(&self, i: usize) -> Option<usize> {
        let m = vec3::neg(self.directions[i]);
        self.directions
            .iter()
            .position(|d| vec3::norm(vec3::sub(*d, m)) <= 1e-12)
    }

    /// Largest `|v(-ξ) - conj(v(ξ))|`, or `None` when a ray has no opposite.
    pub fn hermitian_defect(&self) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..self.directions.len() {
            let j = self.partner(i)?;
            for (a, b) in self.ray(i).iter().zip(self.ray(j)) {
                worst = worst.max((a.conj() - b).norm());
            }
        }
        Some(worst)
    }
}

/// `true` when direction `a` is the measured member of the pair `(a, -a)`.
fn measured_first(a: [f64; 3], b: [f64; 3], normal: [f64; 3]) -> bool {
    let (sa, sb) = (vec3::dot(a, normal), vec3::dot(b, normal));
    if sa != sb {
        return sa > sb;
    }
    // Rays on the plane itself: fixed lexicographic tie-break.
    for c in 0..3 {
        if a[c] != b[c] {
            return a[c] > b[c];
        }
    }
    true
}

/// Completes half-sphere data to the whole sphere by `μ̂(-ξ) = conj(μ̂(ξ))`.
///
/// Rays without an opposite get one appended. When both rays of a pair are
/// present, the one with the larger `x̂.n` is kept and the other overwritten,
/// so the result is exactly Hermitian and completing twice changes nothing.
pub fn complete_by_symmetry(half: &PolarLattice, normal: [f64; 3]) -> PolarLattice {
    let mut out = half.clone();
    let nt = half.taus.len();
    let n0 = half.directions.len();
    for i in 0..n0 {
        match half.partner(i) {
            Some(j) => {
                if j != i && measured_first(half.directions[i], half.directions[j], normal) {
                    for t in 0..nt {
                        out.values[j * nt + t] = half.values[i * nt + t].conj();
                    }
                }
            }
            None => {
                out.directions.push(vec3::neg(half.directions[i]));
                out.values.extend(half.ray(i).iter().map(|v| v.conj()));
            }
        }
    }
    out
}

/// Number of nearest rays blended when resampling onto the Cartesian lattice.
pub const RESAMPLE_NEIGHBOURS: usize = 4;

/// Real-space strength recovered from a polar lattice.
#[derive(Clone, Debug)]
pub struct StrengthReconstruction {
    pub lattice: PolarLattice,
    /// Real part of the inverse transform.
    pub mu_grid: ComplexField3<f64>,
    /// `max|Im| / max|Re|` before the real part was taken.
    pub imag_ratio: f64,
}

/// Interpolates one ray linearly in `τ`, clamping beyond the first sample.
fn ray_at(taus: &[f64], ray: &[Complex<f64>], r: f64) -> Complex<f64> {
    if r <= taus[0] {
        return ray[0];
    }
    let p = taus.partition_point(|&t| t <= r);
    if p >= taus.len() {
        return ray[taus.len() - 1];
    }
    let (t0, t1) = (taus[p - 1], taus[p]);
    let w = (r - t0) / (t1 - t0);
    ray[p - 1] * (1.0 - w) + ray[p] * w
}

/// Band-limited reconstruction of `μ` on `grid`.
///
/// Each Cartesian frequency `ξ` with `|ξ| <= τ_max` gathers the
/// [`RESAMPLE_NEIGHBOURS`] nearest rays with inverse-distance weights and
/// interpolates linearly in `τ`; frequencies beyond `τ_max` and on the
/// Nyquist planes are zero. Opposite frequencies see mirrored neighbour sets
/// and weights, so the resampled spectrum stays exactly Hermitian.
pub fn reconstruct_mu(lattice: &PolarLattice, grid: &Grid3<f64>) -> Result<StrengthReconstruction> {
    if lattice.directions.is_empty() || lattice.taus.is_empty() {
        return Err(Error::EmptyLattice);
    }
    if lattice.taus.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("shifts must be strictly increasing".into()));
    }
    let scale = lattice.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    match lattice.hermitian_defect() {
        None => return Err(Error::NotHermitian("a ray has no opposite ray".into())),
        Some(d) if d > 1e-10 * scale.max(f64::MIN_POSITIVE) => {
            return Err(Error::NotHermitian(format!("defect {d:.3e}")))
        }
        _ => {}
    }
    let nd = lattice.directions.len();
    let pair_id: Vec<usize> = (0..nd)
        .map(|i| i.min(lattice.partner(i).expect("checked above")))
        .collect();
    let tau_max = *lattice.taus.last().expect("non-empty");
    let n = grid.n();
    let freq = grid.frequencies();

    let origin = {
        let mut s = 0.0;
        for d in 0..nd {
            s += ray_at(&lattice.taus, lattice.ray(d), 0.0).re;
        }
        s / nd as f64
    };

    let mut spectrum = ComplexField3::zeros(*grid);
    let k = RESAMPLE_NEIGHBOURS.min(nd);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(nd);
    for (idx, slot) in spectrum.values_mut().iter_mut().enumerate() {
        let (i, j, l) = grid.unravel(idx);
        if i == n / 2 || j == n / 2 || l == n / 2 {
            continue;
        }
        let xi = freq.xi(idx);
        let r = vec3::norm(xi);
        if r > tau_max {
            continue;
        }
        let value = if r == 0.0 {
            Complex::new(origin, 0.0)
        } else {
            let u = vec3::scale(xi, 1.0 / r);
            order.clear();
            order.extend(lattice.directions.iter().enumerate().map(|(d, dir)| (vec3::dot(u, *dir), d)));
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(pair_id[a.1].cmp(&pair_id[b.1])));
            let mut acc = Complex::new(0.0, 0.0);
            let mut wsum = 0.0;
            let mut exact = None;
            for &(dot, d) in order.iter().take(k) {
                let dist = (2.0 - 2.0 * dot).max(0.0).sqrt();
                let v = ray_at(&lattice.taus, lattice.ray(d), r);
                if dist < 1e-12 {
                    exact = Some(v);
                    break;
                }
                acc += v / dist;
                wsum += 1.0 / dist;
            }
            exact.unwrap_or(acc / wsum)
        };
        // Shift from the box corner to the origin: e^{-iLξ} = (-1)^{p_x + p_y + p_z}.
        let parity = freq.signed_mode(i) + freq.signed_mode(j) + freq.signed_mode(l);
        *slot = if parity.rem_euclid(2) == 0 { value } else { -value };
    }
    // Continuous inverse transform: (2π)^{-3/2} (π/L)^3 Σ_p e^{i x.ξ_p} μ̂(ξ_p);
    // dft_inverse already carries n^{-3/2}.
    let dxi = freq.step();
    let norm = (2.0 * std::f64::consts::PI).powf(-1.5) * dxi.powi(3) * (n as f64).powf(1.5);
    let field = dft_inverse(&spectrum);
    let max_re = field.values().iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let max_im = field.max_imag();
    let imag_ratio = if max_re > 0.0 { max_im / max_re } else { 0.0 };
    let mu_grid = field.map(|v| Complex::new(v.re * norm, 0.0));
    Ok(StrengthReconstruction {
        lattice: lattice.clone(),
        mu_grid,
        imag_ratio,
    })
}

/// `(2π)^{-3/2} ∫ e^{-iξ.x} b(x) dx` for one bump, by radial quadrature.
pub fn bump_transform(bump: &Bump<f64>, xi: [f64; 3]) -> Complex<f64> {
    let r = bump.radius;
    let s = vec3::norm(xi);
    let n = 4096;
    let dr = r / n as f64;
    let mut acc = 0.0;
    // The integrand vanishes to all orders at both ends, so the plain
    // trapezoid rule converges spectrally.
    for i in 1..n {
        let rho = i as f64 * dr;
        let t = rho * rho / (r * r);
        let b = (1.0 - 1.0 / (1.0 - t)).exp();
        let sinc = if s * rho == 0.0 { 1.0 } else { (s * rho).sin() / (s * rho) };
        acc += b * sinc * rho * rho;
    }
    let radial = bump.amplitude * 4.0 * std::f64::consts::PI * acc * dr;
    let phase = -vec3::dot(xi, bump.center);
    Complex::new(phase.cos(), phase.sin()) * (radial * (2.0 * std::f64::consts::PI).powf(-1.5))
}

/// Transform of a whole profile, `Σ` over its bumps.
pub fn profile_transform(profile: &StrengthProfile<f64>, xi: [f64; 3]) -> Complex<f64> {
    profile
        .bumps()
        .iter()
        .map(|b| bump_transform(b, xi))
        .fold(Complex::new(0.0, 0.0), |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{ArchiveMeta, FarFieldSample};

    fn profile(c: [f64; 3], r: f64) -> StrengthProfile<f64> {
        StrengthProfile::bump(c, r, 1.0).unwrap()
    }

    #[test]
    fn symmetric_pair_of_balls() {
        let g = separating_normal(&profile([-1.0, 0.0, 0.0], 0.4), &profile([1.0, 0.0, 0.0], 0.4)).unwrap();
        assert!(vec3::norm(vec3::sub(g.normal, [1.0, 0.0, 0.0])) < 1e-9);
        assert!(g.offset.abs() < 1e-9);
        assert!((g.gap - 1.2).abs() < 1e-9);
    }

    #[test]
    fn diagonal_pair_of_balls() {
        let g = separating_normal(&profile([-1.0, 0.0, 0.0], 0.4), &profile([0.0, 1.0, 0.0], 0.4)).unwrap();
        let s = 0.5f64.sqrt();
        assert!(vec3::norm(vec3::sub(g.normal, [s, s, 0.0])) < 1e-9);
        assert!((g.gap - (2f64.sqrt() - 0.8)).abs() < 1e-9);
    }

    #[test]
    fn touching_and_overlapping_balls_are_rejected() {
        let f = profile([-0.4, 0.0, 0.0], 0.4);
        assert!(matches!(separating_normal(&f, &profile([0.4, 0.0, 0.0], 0.4)), Err(Error::Geometry(_))));
        assert!(matches!(separating_normal(&f, &profile([0.2, 0.0, 0.0], 0.4)), Err(Error::Geometry(_))));
    }

    fn archive(mode: SweepMode, values: impl Fn(f64) -> Complex<f64>) -> FarFieldArchive {
        let meta = ArchiveMeta {
            alpha: mode.alpha(),
            mode,
            dk: 0.25,
            k_min: 4.0,
            n_k: 24,
            seed: 1,
            grid_n: 16,
            half_width: 1.0,
            m_f: 3.0,
            m_q: 3.2,
            directions: vec![[1.0, 0.0, 0.0]],
            taus: vec![0.0, 1.0],
        };
        let samples = (0..24)
            .map(|i| {
                let k = meta.lattice_k(i);
                FarFieldSample {
                    dir_index: 0,
                    direction: [1.0, 0.0, 0.0],
                    k,
                    incident: (mode == SweepMode::Backscatter).then_some([-1.0, 0.0, 0.0]),
                    value: values(k),
                    realization_seed: 1,
                }
            })
            .collect();
        FarFieldArchive::new(meta, samples).unwrap()
    }

    #[test]
    fn zero_shift_is_real_and_nonnegative_and_sesquilinear() {
        let a = archive(SweepMode::Passive, |k| Complex::new(k.sin(), (2.0 * k).cos()) / k);
        let e = estimate_mu_f_hat(&a, [1.0, 0.0, 0.0], 0.0, 4.0, 3.0).unwrap();
        assert_eq!(e.value.im, 0.0);
        assert!(e.value.re >= 0.0);
        assert_eq!(e.n_k, 16);
        let c = Complex::new(0.3, -2.0);
        let s = estimate_mu_f_hat(&a.scaled(c), [1.0, 0.0, 0.0], 1.0, 4.0, 3.0).unwrap();
        let b = estimate_mu_f_hat(&a, [1.0, 0.0, 0.0], 1.0, 4.0, 3.0).unwrap();
        assert!((s.value - b.value * c.norm_sqr()).norm() < 1e-12 * s.value.norm());
    }

    #[test]
    fn constant_integrand_gives_closed_form() {
        // u = k^{-m/2}: the band average is exactly 4 sqrt(2π).
        let a = archive(SweepMode::Passive, |k| Complex::new(k.powf(-1.5), 0.0));
        let e = estimate_mu_f_hat(&a, [1.0, 0.0, 0.0], 0.0, 4.0, 3.0).unwrap();
        assert!((e.value.re - band_constant()).abs() < 1e-12);
    }

    #[test]
    fn mode_and_lattice_errors() {
        let p = archive(SweepMode::Passive, |_| Complex::new(1.0, 0.0));
        let b = archive(SweepMode::Backscatter, |_| Complex::new(1.0, 0.0));
        assert!(matches!(estimate_mu_q_hat(&p, [1.0, 0.0, 0.0], 0.0, 4.0, 3.0), Err(Error::WrongMode { .. })));
        assert!(matches!(estimate_mu_f_hat(&b, [1.0, 0.0, 0.0], 0.0, 4.0, 3.0), Err(Error::WrongMode { .. })));
        assert!(matches!(estimate_mu_f_hat(&p, [1.0, 0.0, 0.0], 0.3, 4.0, 3.0), Err(Error::ShiftLattice { .. })));
        assert!(matches!(estimate_mu_f_hat(&p, [1.0, 0.0, 0.0], 4.0, 4.0, 3.0), Err(Error::MissingSample { .. })));
        assert!(matches!(estimate_mu_f_hat(&p, [0.0, 1.0, 0.0], 0.0, 4.0, 3.0), Err(Error::MissingDirection { .. })));
        assert!(estimate_mu_q_hat(&b, [1.0, 0.0, 0.0], 0.5, 4.0, 3.0).is_ok());
    }

    #[test]
    fn completion_mirrors_single_ray() {
        let half = PolarLattice::new(
            vec![[1.0, 0.0, 0.0]],
            vec![0.0, 1.0],
            vec![Complex::new(2.0, 0.0), Complex::new(1.0, 0.5)],
        )
        .unwrap();
        let full = complete_by_symmetry(&half, [1.0, 0.0, 0.0]);
        assert_eq!(full.directions[1], [-1.0, -0.0, -0.0]);
        assert_eq!(full.value(1, 1), Complex::new(1.0, -0.5));
        assert_eq!(complete_by_symmetry(&full, [1.0, 0.0, 0.0]), full);
        assert_eq!(full.hermitian_defect(), Some(0.0));
    }

    #[test]
    fn reconstruction_of_zero_and_empty() {
        let grid = Grid3::new(16, 2.0).unwrap();
        let dirs = vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
        let zero = PolarLattice::from_fn(dirs, vec![0.0, 1.0], |_| Complex::new(0.0, 0.0));
        assert!(reconstruct_mu(&zero, &grid).unwrap().mu_grid.is_zero());
        let empty = PolarLattice::new(vec![], vec![0.0], vec![]).unwrap();
        assert!(matches!(reconstruct_mu(&empty, &grid), Err(Error::EmptyLattice)));
        let lop = PolarLattice::new(vec![[1.0, 0.0, 0.0]], vec![0.0], vec![Complex::new(1.0, 0.0)]).unwrap();
        assert!(matches!(reconstruct_mu(&lop, &grid), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn radial_transform_matches_grid_quadrature() {
        let grid = Grid3::new(96, 1.0).unwrap();
        let b = Bump::new([0.1, -0.2, 0.05], 0.6, 1.3).unwrap();
        let mu = StrengthProfile::sum_of_bumps(vec![b]);
        let field = ComplexField3::from_real(grid, &mu.sample(&grid)).unwrap();
        for xi in [[0.0, 0.0, 0.0], [2.0, -1.0, 0.5], [0.0, 6.0, 3.0]] {
            let r = vec3::norm(xi);
            let dir = if r > 0.0 { vec3::scale(xi, 1.0 / r) } else { [1.0, 0.0, 0.0] };
            let q = crate::far_field::far_field_project(&field, dir, r) * (2.0 * std::f64::consts::PI).powf(-1.5);
            let o = bump_transform(&b, xi);
            assert!((q - o).norm() < 1e-6 * o.norm().max(1e-3), "xi={xi:?} {q} {o}");
        }
    }
}
