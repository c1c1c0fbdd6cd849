//! Stage runner. Every stage reads its inputs from the output directory, so
//! stages can be run one at a time or all together.

use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex;

use migr_scatter::archive::{FarFieldArchive, SweepMode};
use migr_scatter::far_field::{
    born_far_field_terms, far_field_project, fibonacci_hemisphere, fibonacci_sphere, sweep_band, Scene,
};
use migr_scatter::forward::{solve_lippmann_schwinger, IncidentWave, ResolventKernel};
use migr_scatter::random_field::{synthesize_migr_tagged, FieldRealization, RoughnessSpec};
use migr_scatter::recovery::{
    born_potential_factor, complete_by_symmetry, estimate_mu_f_hat, estimate_mu_q_hat, profile_transform,
    reconstruct_mu, write_estimates_csv, CorrelationEstimate, PolarLattice,
};
use migr_scatter::rng::tag;
use migr_scatter::volume::{read_volume, write_volume};
use migr_scatter::{ComplexField3, Error as ModelError, Grid3};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::manifest::{sha256_hex, DirLock, RunManifest, TOOL_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Forward,
    Sweep,
    Recover,
    Verify,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Synth,
        Stage::Forward,
        Stage::Sweep,
        Stage::Recover,
        Stage::Verify,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Forward => "forward",
            Stage::Sweep => "sweep",
            Stage::Recover => "recover",
            Stage::Verify => "verify",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| format!("unknown stage `{s}` (expected one of synth, forward, sweep, recover, verify, report)"))
    }
}

/// Parses `a,b,c`, returning the stages in pipeline order without repeats.
pub fn parse_stages(list: &str) -> std::result::Result<Vec<Stage>, String> {
    let mut v = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Stage::from_str)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    v.sort();
    v.dedup();
    if v.is_empty() {
        return Err("no stages given".into());
    }
    Ok(v)
}

/// Paths of every artifact, relative to the output directory.
pub mod paths {
    pub const SOURCE_VOLUME: &str = "fields/source.vol";
    pub const POTENTIAL_VOLUME: &str = "fields/potential.vol";
    pub const SCATTERED_VOLUME: &str = "forward/scattered.vol";
    pub const SOLVE_CSV: &str = "forward/solve.csv";
    pub const BORN_TERMS_CSV: &str = "forward/born_terms.csv";
    pub const SOURCE_ESTIMATES: &str = "estimates/source.csv";
    pub const POTENTIAL_ESTIMATES: &str = "estimates/potential.csv";
    pub const SOURCE_RECON: &str = "recon/source_mu.vol";
    pub const POTENTIAL_RECON: &str = "recon/potential_mu.vol";
    pub const VERIFY_CSV: &str = "verify/estimates.csv";
    pub const RECON_ERROR_CSV: &str = "verify/reconstruction.csv";
    pub const SUMMARY_CSV: &str = "report/summary.csv";
    pub const PLOT_SCRIPT: &str = "report/plot.py";

    pub fn archive(mode: migr_scatter::archive::SweepMode) -> String {
        format!("archives/{}.ffar", mode.name())
    }

    pub fn archive_csv(mode: migr_scatter::archive::SweepMode) -> String {
        format!("archives/{}.csv", mode.name())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Run despite precondition violations (they are recorded in the manifest).
    pub force: bool,
}

/// Hash of the configuration, independent of where the outputs go.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.output.dir = PathBuf::new();
    sha256_hex(c.to_toml_string().as_bytes())
}

/// Runs `stages` in order under `out`, then writes the manifest.
///
/// A failing stage stops the run; outputs written so far are kept and the
/// manifest records the failure.
pub fn run_pipeline(config: &ExperimentConfig, out: &Path, stages: &[Stage], options: RunOptions) -> Result<RunManifest> {
    let violations = config.validate();
    if !violations.is_empty() && !options.force {
        return Err(HarnessError::Validation(violations));
    }
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let _lock = DirLock::acquire(out)?;

    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config_hash(config),
        seed: config.run.seed,
        stages: stages.iter().map(|s| s.name().to_string()).collect(),
        violations: violations.iter().map(|v| v.to_string()).collect(),
        ..Default::default()
    };
    let ctx = Context { config, out };
    let mut failure = None;
    for &stage in &stages {
        let t0 = Instant::now();
        let r = ctx.run(stage);
        manifest.timings.push((stage.name().to_string(), t0.elapsed().as_secs_f64()));
        if let Err(e) = r {
            manifest.failed_stage = Some(stage.name().to_string());
            manifest.error = Some(e.to_string());
            failure = Some(HarnessError::Stage {
                stage: stage.name(),
                source: Box::new(e),
            });
            break;
        }
    }
    manifest.complete = failure.is_none();
    manifest.record_files(out)?;
    manifest.write(out)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    out: &'a Path,
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(|e| HarnessError::io(p, e))?;
    }
    Ok(())
}

impl Context<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn run(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Synth => self.synth(),
            Stage::Forward => self.forward(),
            Stage::Sweep => self.sweep(),
            Stage::Recover => self.recover(),
            Stage::Verify => self.verify(),
            Stage::Report => self.report(),
        }
    }

    /// Writes `rel` through a buffered writer.
    fn emit<F>(&self, rel: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<fs::File>) -> std::result::Result<(), ModelError>,
    {
        let path = self.path(rel);
        create_parent(&path)?;
        let file = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| match e {
            ModelError::Io(source) => HarnessError::io(&path, source),
            other => HarnessError::Model(other),
        })?;
        w.flush().map_err(|e| HarnessError::io(&path, e))
    }

    fn emit_text(&self, rel: &str, text: &str) -> Result<()> {
        let path = self.path(rel);
        create_parent(&path)?;
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    }

    fn open_input(&self, rel: &str, producer: &'static str) -> Result<BufReader<fs::File>> {
        let path = self.path(rel);
        match fs::File::open(&path) {
            Ok(f) => Ok(BufReader::new(f)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(HarnessError::MissingInput { path, producer })
            }
            Err(e) => Err(HarnessError::io(&path, e)),
        }
    }

    fn read_input_text(&self, rel: &str, producer: &'static str) -> Result<String> {
        let mut r = self.open_input(rel, producer)?;
        let mut s = String::new();
        std::io::Read::read_to_string(&mut r, &mut s).map_err(|e| HarnessError::io(&self.path(rel), e))?;
        Ok(s)
    }

    fn load_volume(&self, rel: &str, producer: &'static str, grid: &Grid3<f64>) -> Result<ComplexField3<f64>> {
        let mut r = self.open_input(rel, producer)?;
        let (header, field) = read_volume::<f64, _>(&mut r).map_err(|e| HarnessError::Artifact {
            path: self.path(rel),
            detail: e.to_string(),
        })?;
        if header.n as usize != grid.n() || header.half_width != grid.half_width() {
            return Err(HarnessError::Artifact {
                path: self.path(rel),
                detail: format!(
                    "volume grid {}^3 on [-{}, {}] does not match the configured grid",
                    header.n, header.half_width, header.half_width
                ),
            });
        }
        Ok(field)
    }

    fn scene(&self) -> Result<Scene<f64>> {
        let c = self.config;
        let grid = c.grid()?;
        let realization = |rel: &str, spec: RoughnessSpec<f64>| -> Result<FieldRealization<f64>> {
            Ok(FieldRealization {
                values: self.load_volume(rel, "synth", &grid)?,
                spec,
                seed: c.run.seed,
                sample_index: 0,
            })
        };
        Ok(Scene {
            source: realization(paths::SOURCE_VOLUME, c.source_spec()?)?,
            potential: realization(paths::POTENTIAL_VOLUME, c.potential_spec()?)?,
            seed: c.run.seed,
            solver: c.solver_options(),
            model: c.model(),
        })
    }

    fn directions(&self) -> Result<Vec<[f64; 3]>> {
        let d = &self.config.directions;
        if d.half_sphere {
            Ok(fibonacci_hemisphere(d.count, self.config.measurement_normal()?)?)
        } else {
            Ok(fibonacci_sphere(d.count))
        }
    }

    fn synth(&self) -> Result<()> {
        let c = self.config;
        let grid = c.grid()?;
        let seed = c.run.seed;
        let f = synthesize_migr_tagged(&c.source_spec()?, &grid, seed, 0, tag::SOURCE)?;
        let q = synthesize_migr_tagged(&c.potential_spec()?, &grid, seed, 0, tag::POTENTIAL)?;
        self.emit(paths::SOURCE_VOLUME, |w| write_volume(w, &f.values, c.source.m, seed, 0, false))?;
        self.emit(paths::POTENTIAL_VOLUME, |w| write_volume(w, &q.values, c.potential.m, seed, 0, false))
    }

    /// One solve at `k_min` along the measurement normal, plus its Born terms.
    fn forward(&self) -> Result<()> {
        let c = self.config;
        let scene = self.scene()?;
        let grid = *scene.grid();
        let k = c.band.k_min;
        let normal = self.directions()?[0];
        let alpha = u8::from(c.run.mode.modes().contains(&SweepMode::Backscatter));
        let incoming = [-normal[0], -normal[1], -normal[2]];
        let kernel = ResolventKernel::new(grid, k)?;
        let q = &scene.potential.values;
        let f = &scene.source.values;
        let incident = IncidentWave::new(alpha, incoming, k)?;
        let sol = solve_lippmann_schwinger(&kernel, q, Some(f), &incident, c.solver.tol, c.solver.max_iter)?;

        let mut total = sol.u_sc.clone();
        if alpha == 1 {
            total = total.add(&incident.field(&grid))?;
        }
        let rho = total.mul(q)?.sub(f)?;
        let far = far_field_project(&rho, normal, k) / (4.0 * std::f64::consts::PI);

        let lit = IncidentWave::new(1, incoming, k)?;
        let terms = born_far_field_terms(&kernel, q, f, &lit, normal, c.solver.j_max, c.solver_options())?;

        self.emit(paths::SCATTERED_VOLUME, |w| write_volume(w, &sol.u_sc, c.source.m, c.run.seed, 0, true))?;
        let mut text = String::from("k,alpha,dir_x,dir_y,dir_z,iterations,residual,contraction,far_re,far_im\n");
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            k, alpha, normal[0], normal[1], normal[2], sol.iterations, sol.residual, sol.contraction_estimate, far.re, far.im
        ));
        self.emit_text(paths::SOLVE_CSV, &text)?;
        // The last index of each series is the remainder of the tail.
        let mut text = String::from("series,j,re,im\n");
        for (name, series) in [("F", &terms.f_terms), ("G", &terms.g_terms)] {
            for (j, v) in series.iter().enumerate() {
                text.push_str(&format!("{name},{j},{},{}\n", v.re, v.im));
            }
        }
        self.emit_text(paths::BORN_TERMS_CSV, &text)
    }

    fn sweep(&self) -> Result<()> {
        let scene = self.scene()?;
        let directions = self.directions()?;
        let band = self.config.band_spec();
        for mode in self.config.run.mode.modes() {
            let archive = sweep_band(&scene, &directions, &band, mode)?;
            self.emit(&paths::archive(mode), |w| archive.write_to(w))?;
            self.emit(&paths::archive_csv(mode), |w| archive.write_csv(w))?;
        }
        Ok(())
    }

    fn load_archive(&self, mode: SweepMode) -> Result<FarFieldArchive> {
        let rel = paths::archive(mode);
        let mut r = self.open_input(&rel, "sweep")?;
        FarFieldArchive::read_from(&mut r).map_err(|e| HarnessError::Artifact {
            path: self.path(&rel),
            detail: e.to_string(),
        })
    }

    fn recover(&self) -> Result<()> {
        let c = self.config;
        let normal = c.measurement_normal()?;
        let recon_grid = c.recon_grid()?;
        for mode in c.run.mode.modes() {
            let archive = self.load_archive(mode)?;
            let meta = archive.meta().clone();
            let (m, estimates_rel, recon_rel, factor) = match mode {
                SweepMode::Passive => (c.source.m, paths::SOURCE_ESTIMATES, paths::SOURCE_RECON, 1.0),
                SweepMode::Backscatter => (
                    c.potential.m,
                    paths::POTENTIAL_ESTIMATES,
                    paths::POTENTIAL_RECON,
                    born_potential_factor(c.potential.m),
                ),
            };
            let estimate_all = |k_min: f64| -> std::result::Result<Vec<CorrelationEstimate>, ModelError> {
                let mut v = Vec::with_capacity(meta.directions.len() * meta.taus.len());
                for &d in &meta.directions {
                    for &t in &meta.taus {
                        v.push(match mode {
                            SweepMode::Passive => estimate_mu_f_hat(&archive, d, t, k_min, m)?,
                            SweepMode::Backscatter => estimate_mu_q_hat(&archive, d, t, k_min, m)?,
                        });
                    }
                }
                Ok(v)
            };
            let base = estimate_all(meta.k_min)?;
            let mut all = base.clone();
            // The doubled band is reported when the archive reaches far enough.
            match estimate_all(2.0 * meta.k_min) {
                Ok(v) => all.extend(v),
                Err(ModelError::MissingSample { .. }) => {}
                Err(e) => return Err(e.into()),
            }
            self.emit(estimates_rel, |w| write_estimates_csv(w, &all))?;

            let scaled: Vec<CorrelationEstimate> = base
                .iter()
                .map(|e| CorrelationEstimate {
                    value: e.value / factor,
                    ..*e
                })
                .collect();
            let half = PolarLattice::from_estimates(meta.directions.clone(), meta.taus.clone(), &scaled)?;
            let full = complete_by_symmetry(&half, normal);
            let rec = reconstruct_mu(&full, &recon_grid)?;
            self.emit(recon_rel, |w| write_volume(w, &rec.mu_grid, m, c.run.seed, 0, false))?;
        }
        Ok(())
    }

    fn verify(&self) -> Result<()> {
        let c = self.config;
        let recon_grid = c.recon_grid()?;
        let mut rows = String::from(
            "target,K,dir_index,dir_x,dir_y,dir_z,tau,est_re,est_im,oracle_re,oracle_im,abs_err,rel_err\n",
        );
        let mut recon_rows = String::from("target,rel_l2_error\n");
        for mode in c.run.mode.modes() {
            let (target, spec, rel, recon_rel, factor) = match mode {
                SweepMode::Passive => ("source", c.source_spec()?, paths::SOURCE_ESTIMATES, paths::SOURCE_RECON, 1.0),
                SweepMode::Backscatter => (
                    "potential",
                    c.potential_spec()?,
                    paths::POTENTIAL_ESTIMATES,
                    paths::POTENTIAL_RECON,
                    born_potential_factor(c.potential.m),
                ),
            };
            let text = self.read_input_text(rel, "recover")?;
            let parsed = parse_estimates(&text).map_err(|detail| HarnessError::Artifact {
                path: self.path(rel),
                detail,
            })?;
            let mut seen: Vec<[f64; 3]> = Vec::new();
            for e in parsed {
                let di = match seen.iter().position(|d| *d == e.direction) {
                    Some(i) => i,
                    None => {
                        seen.push(e.direction);
                        seen.len() - 1
                    }
                };
                let xi = [e.direction[0] * e.tau, e.direction[1] * e.tau, e.direction[2] * e.tau];
                let oracle = profile_transform(&spec.mu, xi) * factor;
                let err = (e.value - oracle).norm();
                rows.push_str(&format!(
                    "{target},{},{di},{},{},{},{},{},{},{},{},{},{}\n",
                    e.k_min,
                    e.direction[0],
                    e.direction[1],
                    e.direction[2],
                    e.tau,
                    e.value.re,
                    e.value.im,
                    oracle.re,
                    oracle.im,
                    err,
                    err / oracle.norm()
                ));
            }
            let rec = self.load_volume(recon_rel, "recover", &recon_grid)?;
            let truth = ComplexField3::from_real(recon_grid, &spec.mu.sample(&recon_grid))?;
            let rel_l2 = rec.sub(&truth)?.euclidean_norm() / truth.euclidean_norm();
            recon_rows.push_str(&format!("{target},{rel_l2}\n"));
        }
        self.emit_text(paths::VERIFY_CSV, &rows)?;
        self.emit_text(paths::RECON_ERROR_CSV, &recon_rows)
    }

    fn report(&self) -> Result<()> {
        let text = self.read_input_text(paths::VERIFY_CSV, "verify")?;
        let table = summarize(&text).map_err(|detail| HarnessError::Artifact {
            path: self.path(paths::VERIFY_CSV),
            detail,
        })?;
        self.emit_text(paths::SUMMARY_CSV, &table)?;
        self.emit_text(paths::PLOT_SCRIPT, PLOT_SCRIPT)
    }
}

fn field<T: FromStr>(cols: &[&str], i: usize, line: usize) -> std::result::Result<T, String> {
    cols.get(i)
        .ok_or_else(|| format!("line {line}: missing column {i}"))?
        .parse()
        .map_err(|_| format!("line {line}: bad value in column {i}"))
}

/// Reads the rows written by `write_estimates_csv`.
pub fn parse_estimates(text: &str) -> std::result::Result<Vec<CorrelationEstimate>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let n = i + 1;
        let target = match cols.get(8).copied() {
            Some("source") => migr_scatter::recovery::Target::Source,
            Some("potential") => migr_scatter::recovery::Target::Potential,
            _ => return Err(format!("line {n}: unknown target")),
        };
        out.push(CorrelationEstimate {
            direction: [field(&cols, 0, n)?, field(&cols, 1, n)?, field(&cols, 2, n)?],
            tau: field(&cols, 3, n)?,
            k_min: field(&cols, 4, n)?,
            n_k: field(&cols, 5, n)?,
            value: Complex::new(field(&cols, 6, n)?, field(&cols, 7, n)?),
            target,
        });
    }
    Ok(out)
}

/// Mean and max relative error per (target, K, τ) and per (target, K, direction).
pub fn summarize(verify_csv: &str) -> std::result::Result<String, String> {
    use std::collections::BTreeMap;
    // Keys keep the float text so groups sort and print exactly as read.
    let mut groups: BTreeMap<(String, String, &'static str, String), (usize, f64, f64)> = BTreeMap::new();
    for (i, line) in verify_csv.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 13 {
            return Err(format!("line {}: expected 13 columns", i + 1));
        }
        let rel: f64 = field(&cols, 12, i + 1)?;
        for (group, key) in [("tau", cols[6]), ("direction", cols[2])] {
            let e = groups
                .entry((cols[0].to_string(), cols[1].to_string(), group, key.to_string()))
                .or_insert((0, 0.0, 0.0));
            e.0 += 1;
            e.1 += rel;
            e.2 = e.2.max(rel);
        }
    }
    let mut out = String::from("target,K,group,key,count,mean_rel_err,max_rel_err\n");
    for ((target, k, group, key), (n, sum, max)) in groups {
        out.push_str(&format!("{target},{k},{group},{key},{n},{},{max}\n", sum / n as f64));
    }
    Ok(out)
}

const PLOT_SCRIPT: &str = r#"# Plots the recovery errors of a run. Usage: python plot.py <output dir>
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

root = Path(sys.argv[1] if len(sys.argv) > 1 else "..")
rows = list(csv.DictReader(open(root / "verify" / "estimates.csv")))
fig, ax = plt.subplots()
for target in sorted({r["target"] for r in rows}):
    for k in sorted({r["K"] for r in rows if r["target"] == target}, key=float):
        sel = [r for r in rows if r["target"] == target and r["K"] == k]
        ax.scatter([float(r["tau"]) for r in sel], [float(r["rel_err"]) for r in sel], s=8, label=f"{target} K={k}")
ax.set_xlabel("tau")
ax.set_ylabel("relative error")
ax.set_yscale("log")
ax.legend()
fig.savefig(root / "report" / "errors.png", dpi=150)
"#;
