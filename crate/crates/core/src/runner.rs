//! Experiment orchestration: runs a validated config and writes reports,
//! CSV tables and a manifest into the output directory.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::breather::{sample_omega, shift_all, MeasureSpec, Model, OmegaSample};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::eigen::{dense_spectrum, eigen_lowest};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::ssf::{
    hs_majorization, invariance_check, k1, krein_check, singular_bound, spectral_shift, ssf_ft_integral,
    veff_singular_values, weyl_lower_bound, write_singular_csv, TestFunction,
};
use crate::ucp::{fit_ucp_exponents, lifting_check, margin_tolerance, ucp_sample, UcpConstants};
use crate::wegner::{hoelder_fit, ids_estimate, wegner_expectation, with_pool, WegnerParams, WegnerReport};

pub const MANIFEST: &str = "manifest.json";
pub const PARTIAL_MARKER: &str = "PARTIAL";

/// `t` in the `F_t` bounds.
const FT_T: f64 = 1.0 / 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let marker = dir.join(PARTIAL_MARKER);
        if marker.exists() {
            std::fs::remove_file(marker)?;
        }
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<String> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(FileEntry { path: name.into(), sha256: sha256_hex(bytes) });
        Ok(name.into())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<String> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(name, &bytes)
    }
}

/// Reusable output of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub kind: ExperimentKind,
    pub files: Vec<FileEntry>,
}

fn manifest(cfg: &ExperimentConfig, kind: ExperimentKind, files: &[FileEntry], partial: Option<&str>) -> Result<serde_json::Value> {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(json!({
        "experiment": kind.name(),
        "config_sha256": sha256_hex(cfg.to_toml()?.as_bytes()),
        "version": env!("CARGO_PKG_VERSION"),
        "master_seed": cfg.run.master_seed,
        "timestamp_unix": stamp,
        "partial": partial,
        "files": files,
    }))
}

/// Runs the experiment named in `cfg`, writing every artifact plus a
/// manifest. On failure a `PARTIAL` marker with the error is left behind.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let kind = cfg.kind()?;
    let mut out = Outputs::new(&opts.out_dir)?;
    let result = match kind {
        ExperimentKind::Spectrum => run_spectrum(cfg, &mut out),
        ExperimentKind::Ucp => run_ucp(cfg, opts.threads, &mut out).map(|_| ()),
        ExperimentKind::Lifting => run_lifting(cfg, opts.threads, &mut out),
        ExperimentKind::Ssf => run_ssf(cfg, opts.threads, &mut out),
        ExperimentKind::Wegner => run_wegner(cfg, opts.threads, &mut out),
        ExperimentKind::Ids => run_ids(cfg, opts.threads, &mut out),
    };
    let partial = result.as_ref().err().map(|e| e.to_string());
    let m = manifest(cfg, kind, &out.files, partial.as_deref())?;
    let mut bytes = serde_json::to_vec_pretty(&m)?;
    bytes.push(b'\n');
    std::fs::write(opts.out_dir.join(MANIFEST), bytes)?;
    if let Some(msg) = &partial {
        std::fs::write(opts.out_dir.join(PARTIAL_MARKER), format!("{msg}\n"))?;
    }
    result.map(|_| RunOutcome { kind, files: out.files })
}

fn omega_for(cfg: &ExperimentConfig, measure: &MeasureSpec, box_side: usize, sample: u64) -> Result<(u64, OmegaSample)> {
    let seed = derive_seed(cfg.run.master_seed, sample);
    Ok((seed, sample_omega(measure, cfg.model.dim, box_side, seed)?))
}

fn run_spectrum(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let b = cfg.require_b()?;
    let measure = cfg.measure()?;
    let mut entries = Vec::new();
    for l in cfg.box_sides() {
        let model = cfg.model_for(l)?;
        let (seed, omega) = omega_for(cfg, &measure, l, 1)?;
        let spec = eigen_lowest(&model.hamiltonian(&omega)?, b)?;
        let mut csv = Vec::new();
        spec.write_csv(&mut csv)?;
        let csv_path = out.write(&format!("spectrum_L{l}.csv"), &csv)?;
        let omega_path = out.json(&format!("omega_L{l}.json"), &omega)?;
        let cutoff = model.grid.converged_cutoff();
        let converged = spec.converged(cutoff);
        let vol = model.grid.volume();
        let violations = converged
            .iter()
            .enumerate()
            .filter(|&(i, &e)| weyl_lower_bound(i + 1, vol, model.grid.dim).map(|w| e < w).unwrap_or(true))
            .count();
        entries.push(json!({
            "L": l,
            "seed_derived": seed,
            "count": spec.eigenvalues.len(),
            "converged_cutoff": cutoff,
            "n_converged": converged.len(),
            "weyl_violations": violations,
            "spectrum_csv_path": csv_path,
            "omega_path": omega_path,
        }));
    }
    out.json(
        "spectrum_report.json",
        &json!({
            "experiment": "spectrum",
            "d": cfg.model.dim,
            "mesh_per_unit": cfg.grid.mesh_per_unit,
            "b": b,
            "master_seed": cfg.run.master_seed,
            "entries": entries,
        }),
    )?;
    Ok(())
}

struct UcpJob {
    box_side: usize,
    sample: u64,
    seed: u64,
    delta: f64,
}

fn ucp_jobs(cfg: &ExperimentConfig) -> Result<Vec<UcpJob>> {
    let n = cfg.require_samples()?;
    let deltas = cfg.require_deltas()?;
    let mut jobs = Vec::new();
    for l in cfg.box_sides() {
        for s in 1..=n as u64 {
            for &delta in &deltas {
                jobs.push(UcpJob { box_side: l, sample: s, seed: derive_seed(cfg.run.master_seed, s), delta });
            }
        }
    }
    Ok(jobs)
}

fn job_model_omega(cfg: &ExperimentConfig, measure: &MeasureSpec, job: &UcpJob) -> Result<(Model, OmegaSample)> {
    Ok((cfg.model_for(job.box_side)?, sample_omega(measure, cfg.model.dim, job.box_side, job.seed)?))
}

fn run_ucp(cfg: &ExperimentConfig, threads: usize, out: &mut Outputs) -> Result<UcpConstants> {
    let b = cfg.require_b()?;
    let measure = cfg.measure()?;
    let jobs = ucp_jobs(cfg)?;
    let values: Vec<Option<(f64, f64)>> = with_pool(threads, || {
        jobs.par_iter()
            .map(|j| {
                let (model, omega) = job_model_omega(cfg, &measure, j)?;
                ucp_sample(&model, &omega, j.delta, b)
            })
            .collect::<Result<_>>()
    })??;
    out.csv(
        "ucp_samples.csv",
        &["L", "sample_index", "seed_derived", "delta", "radius", "constant"],
        jobs.iter().zip(&values).map(|(j, v)| {
            vec![
                j.box_side.to_string(),
                j.sample.to_string(),
                j.seed.to_string(),
                j.delta.to_string(),
                v.map(|p| p.0.to_string()).unwrap_or_default(),
                v.map(|p| p.1.to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    let samples: Vec<(f64, f64)> = values.into_iter().flatten().collect();
    let fit = fit_ucp_exponents(&samples, b)?;
    out.json("ucp_fit.json", &fit)?;
    Ok(fit)
}

fn run_lifting(cfg: &ExperimentConfig, threads: usize, out: &mut Outputs) -> Result<()> {
    let b = cfg.require_b()?;
    let constants = match cfg.constants()? {
        Some(c) => UcpConstants { b, ..c },
        None => run_ucp(cfg, threads, out)?,
    };
    let measure = cfg.measure()?;
    let jobs = ucp_jobs(cfg)?;
    let reports = with_pool(threads, || {
        jobs.par_iter()
            .map(|j| {
                let (model, omega) = job_model_omega(cfg, &measure, j)?;
                lifting_check(&model, &omega, j.delta, &constants, b)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let tol = margin_tolerance(b);
    let mut rows = Vec::new();
    let (mut total, mut lifted, mut monotone_violations) = (0usize, 0usize, 0usize);
    let mut min_mono = f64::INFINITY;
    for (j, r) in jobs.iter().zip(&reports) {
        for e in &r.entries {
            total += 1;
            lifted += usize::from(e.lifting_margin >= -tol);
            monotone_violations += usize::from(e.monotonicity_margin < -tol);
            min_mono = min_mono.min(e.monotonicity_margin);
            rows.push(vec![
                j.box_side.to_string(),
                j.sample.to_string(),
                j.delta.to_string(),
                e.index.to_string(),
                e.lambda.to_string(),
                e.lambda_shifted.to_string(),
                e.lifting_margin.to_string(),
                e.monotonicity_margin.to_string(),
            ]);
        }
    }
    out.csv(
        "lifting.csv",
        &["L", "sample_index", "delta", "index", "lambda", "lambda_shifted", "lifting_margin", "monotonicity_margin"],
        rows,
    )?;
    out.json(
        "lifting_report.json",
        &json!({
            "experiment": "lifting",
            "constants": constants,
            "b": b,
            "triples": total,
            "nonnegative_lifting": lifted,
            "fraction_nonnegative": if total == 0 { 1.0 } else { lifted as f64 / total as f64 },
            "monotonicity_violations": monotone_violations,
            "min_monotonicity_margin": if total == 0 { None } else { Some(min_mono) },
            "tolerance": tol,
        }),
    )?;
    Ok(())
}

fn run_ssf(cfg: &ExperimentConfig, threads: usize, out: &mut Outputs) -> Result<()> {
    let b = cfg.require_b()?;
    let energy = cfg.require_energy()?;
    let eps = *cfg.eps_values().first().ok_or_else(|| Error::Config { key: "experiment.eps".into(), message: "ssf needs eps".into() })?;
    let delta = cfg.require_deltas()?[0];
    let n = cfg.require_samples()?;
    let measure = cfg.measure()?;
    let d = cfg.model.dim;
    let mut rows = Vec::new();
    for l in cfg.box_sides() {
        let model = cfg.model_for(l)?;
        let results = with_pool(threads, || {
            (1..=n as u64)
                .into_par_iter()
                .map(|s| {
                    let (seed, omega) = omega_for(cfg, &measure, l, s)?;
                    let h0 = model.hamiltonian(&omega)?;
                    let h1 = model.hamiltonian(&shift_all(&omega, delta)?)?;
                    let (s0, s1) = (dense_spectrum(&h0, false)?, dense_spectrum(&h1, false)?);
                    let xi = spectral_shift(&s0, &s1)?;
                    let g = TestFunction::switch(eps, energy)?;
                    let krein = krein_check(&s0, &s1, &g)?;
                    let mut lambdas: Vec<f64> = s0.eigenvalues.iter().chain(&s1.eigenvalues).copied().filter(|&x| x <= b).collect();
                    lambdas.sort_by(f64::total_cmp);
                    lambdas.dedup();
                    let mut invariance_failures = 0;
                    for w in lambdas.windows(2) {
                        let (lhs, rhs) = invariance_check(&s0, &s1, 0.5 * (w[0] + w[1]))?;
                        invariance_failures += usize::from(lhs != rhs);
                    }
                    let ft = ssf_ft_integral(&xi, b, FT_T, d)?;
                    let mu = veff_singular_values(&h0, &h1, 1.0)?;
                    let threshold = 4usize.pow(d as u32);
                    let worst_ratio = mu
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i + 1 > threshold)
                        .map(|(i, m)| singular_bound(i + 1, d).map(|bd| m / bd))
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .fold(0.0, f64::max);
                    let (hs_lhs, hs_rhs) = hs_majorization(&s0, &s1, &mu, FT_T, d)?;
                    Ok((s, seed, xi, mu, krein, invariance_failures, lambdas.len().saturating_sub(1), ft, worst_ratio, hs_lhs, hs_rhs))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        for (s, seed, xi, mu, krein, inv_fail, inv_total, ft, ratio, hs_lhs, hs_rhs) in results {
            if s == 1 {
                let mut buf = Vec::new();
                xi.write_csv(&mut buf)?;
                out.write(&format!("ssf_L{l}.csv"), &buf)?;
                let mut buf = Vec::new();
                write_singular_csv(&mu, &mut buf)?;
                out.write(&format!("singular_L{l}.csv"), &buf)?;
            }
            rows.push(json!({
                "L": l,
                "sample_index": s,
                "seed_derived": seed,
                "krein_lhs": krein.lhs,
                "krein_rhs": krein.rhs,
                "krein_gap": krein.gap,
                "invariance_points": inv_total,
                "invariance_failures": inv_fail,
                "ft_integral": ft,
                "ft_bound": k1(d) * b.exp(),
                "singular_worst_ratio": ratio,
                "hs_lhs": hs_lhs,
                "hs_rhs": hs_rhs,
            }));
        }
    }
    out.json(
        "ssf_report.json",
        &json!({ "experiment": "ssf", "d": d, "b": b, "E": energy, "eps": eps, "delta": delta, "t": FT_T, "samples": rows }),
    )?;
    Ok(())
}

/// Largest `|a − b| / √(σ_a² + σ_b²)` over all pairs.
pub fn max_pairwise_z(values: &[(f64, f64)]) -> f64 {
    let mut z: f64 = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            let s = (a.1 * a.1 + b.1 * b.1).sqrt();
            let d = (a.0 - b.0).abs();
            z = z.max(if s == 0.0 { if d == 0.0 { 0.0 } else { f64::INFINITY } } else { d / s });
        }
    }
    z
}

fn run_wegner(cfg: &ExperimentConfig, threads: usize, out: &mut Outputs) -> Result<()> {
    let b = cfg.require_b()?;
    let energy = cfg.require_energy()?;
    let n = cfg.require_samples()?;
    let measure = cfg.measure()?;
    let constants = cfg.constants()?.map(|c| UcpConstants { b, ..c });
    let eps_values = cfg.eps_values();
    if eps_values.is_empty() {
        return Err(Error::Config { key: "experiment.eps".into(), message: "wegner needs eps or eps_list".into() });
    }
    let mut cells = Vec::new();
    let mut reports: Vec<WegnerReport> = Vec::new();
    for l in cfg.box_sides() {
        for &eps in &eps_values {
            let params = WegnerParams {
                model: cfg.model_for(l)?,
                measure,
                energy,
                epsilon: eps,
                b,
                constants: constants.clone(),
                n_samples: n,
                master_seed: cfg.run.master_seed,
            };
            let r = wegner_expectation(&params, threads)?;
            let mut buf = Vec::new();
            r.write_samples_csv(&mut buf)?;
            let path = out.write(&format!("wegner_L{l}_eps{eps}.csv"), &buf)?;
            let mut v = serde_json::to_value(&r)?;
            v["per_sample_csv_path"] = json!(path);
            v["bound_holds"] = json!(r.rhs_bound.map(|rhs| r.mean <= rhs));
            cells.push(v);
            reports.push(r);
        }
    }
    let scaling: Vec<_> = eps_values
        .iter()
        .map(|&eps| {
            let per_l: Vec<(usize, f64, f64)> = reports
                .iter()
                .filter(|r| r.epsilon == eps)
                .map(|r| {
                    let (m, s) = r.per_volume();
                    (r.box_side, m, s)
                })
                .collect();
            let z = max_pairwise_z(&per_l.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>());
            json!({
                "eps": eps,
                "per_L": per_l.iter().map(|p| json!({"L": p.0, "mean_per_volume": p.1, "stderr_per_volume": p.2})).collect::<Vec<_>>(),
                "max_pairwise_z": z,
                "within_3_stderr": z <= 3.0,
            })
        })
        .collect();
    out.json("wegner_report.json", &json!({ "experiment": "wegner", "cells": cells, "volume_scaling": scaling }))?;
    Ok(())
}

fn run_ids(cfg: &ExperimentConfig, threads: usize, out: &mut Outputs) -> Result<()> {
    let energies = cfg
        .experiment
        .energies
        .clone()
        .filter(|e| !e.is_empty())
        .ok_or_else(|| Error::Config { key: "experiment.E_list".into(), message: "ids needs E_list".into() })?;
    let n = cfg.require_samples()?;
    let measure = cfg.measure()?;
    let sides = cfg.box_sides();
    let mut all = Vec::new();
    let mut hoelder = Vec::new();
    for &l in &sides {
        let model = cfg.model_for(l)?;
        all.extend(ids_estimate(&model, &measure, &energies, n, cfg.run.master_seed, threads)?);
        if let (Some(e0), Some(eps_list)) = (cfg.experiment.energy, cfg.experiment.eps_list.as_ref()) {
            let inc = crate::wegner::ids_increments(&model, &measure, e0, eps_list, n, cfg.run.master_seed, threads)?;
            let slope = match hoelder_fit(&inc) {
                Ok(s) => json!(s),
                Err(Error::BelowResolution(m)) => json!(format!("below resolution: {m}")),
                Err(e) => return Err(e),
            };
            hoelder.push(json!({ "L": l, "E0": e0, "increments": inc, "slope": slope }));
        }
    }
    out.csv(
        "ids.csv",
        &["L", "E", "mean_count", "stderr_count", "ids", "ids_stderr"],
        all.iter().map(|r| {
            vec![
                r.box_side.to_string(),
                r.energy.to_string(),
                r.mean_count.to_string(),
                r.stderr_count.to_string(),
                r.ids.to_string(),
                r.ids_stderr.to_string(),
            ]
        }),
    )?;
    let mut header = vec!["E".to_string()];
    for l in &sides {
        header.push(format!("ids_L{l}"));
        header.push(format!("ids_stderr_L{l}"));
    }
    let wide: Vec<Vec<String>> = energies
        .iter()
        .map(|&e| {
            let mut row = vec![e.to_string()];
            for l in &sides {
                let r = all.iter().find(|r| r.box_side == *l && r.energy == e).expect("row for every (L, E)");
                row.push(r.ids.to_string());
                row.push(r.ids_stderr.to_string());
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("ids_scaling.csv", &header_refs, wide)?;
    let scaling: Vec<_> = energies
        .iter()
        .map(|&e| {
            let vals: Vec<(f64, f64)> = all.iter().filter(|r| r.energy == e).map(|r| (r.ids, r.ids_stderr)).collect();
            json!({ "E": e, "max_pairwise_z": max_pairwise_z(&vals) })
        })
        .collect();
    out.json("ids_report.json", &json!({ "experiment": "ids", "rows": all, "scaling": scaling, "hoelder": hoelder }))?;
    Ok(())
}
