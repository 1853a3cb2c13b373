//! One function per command-line subcommand. Each writes its tables into the
//! output directory and returns the written paths.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::converge::{diffusions, run_convergence, ConvergenceReport};
use super::output::{read_points, write_table, Cell, Meta, Table};
use crate::diagnostics::{
    loglog_slope, moment_table, uv_check, GkEstimate, MomentTable, UvOptions, UvReport,
};
use crate::eps::{run_eps_replica, scheme_for};
use crate::error::{Error, Result};
use crate::limit::{run_limit_replica, LimitScheme};
use crate::measure::EmpiricalMeasure;
use crate::par::map_indexed;
use crate::transport::{w2_auto, W2Result};

fn base_meta(cfg: &ExperimentConfig) -> Meta {
    vec![("config".into(), cfg.to_json_string())]
}

fn coord_columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("{prefix}_{k}")).collect()
}

fn with_columns(fixed: &[&str], extra: Vec<String>) -> Table {
    let mut t = Table::new(fixed);
    t.columns.extend(extra);
    t
}

pub fn converge(cfg: &ExperimentConfig, out: &Path) -> Result<(ConvergenceReport, PathBuf)> {
    let report = run_convergence(cfg)?;
    let path = write_table(
        out,
        "converge",
        cfg.format,
        &report.metadata(),
        &report.table(),
    )?;
    Ok((report, path))
}

pub fn simulate_eps(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let model = cfg.noise_model()?;
    let pot = cfg.potential()?;
    let d = cfg.dim;
    let mut terminal = with_columns(
        &["eps", "replica", "particle"],
        [coord_columns("x", d), coord_columns("y", d)].concat(),
    );
    let mut steps = Table::new(&[
        "eps",
        "step",
        "time",
        "forcing_norm",
        "max_speed",
        "energy_proxy",
    ]);
    let mut written = Vec::new();
    for (e, &eps) in cfg.eps_grid.iter().enumerate() {
        let rc = cfg.run_config(eps);
        let (scheme, n) = scheme_for(&rc, cfg.scheme, cfg.forcing);
        let k = rc.samples_per_replica;
        let results = map_indexed(rc.replicas, |r| {
            let mut reports = Vec::new();
            let mut traj = Vec::new();
            let ens = run_eps_replica(&rc, &model, &pot, scheme, n, e as u32, r as u32, |v| {
                if r == 0 {
                    reports.push(*v.report);
                    if cfg.trajectory && (v.index + 1) % cfg.dump_every as u64 == 0 {
                        traj.push((
                            v.ensemble.time,
                            v.ensemble.positions.as_flat().to_vec(),
                            v.ensemble.velocities.clone().unwrap_or_default(),
                        ));
                    }
                }
            })
            .map_err(|err| err.with_context(format!("eps={eps}")))?;
            Ok((ens, reports, traj))
        })?;
        for (r, (ens, reports, traj)) in results.into_iter().enumerate() {
            let vel = ens.velocities.as_deref().unwrap_or(&[]);
            for i in 0..k {
                let mut row = vec![Cell::Num(eps), Cell::from(r), Cell::from(i)];
                row.extend(ens.positions.point(i).iter().map(|&x| Cell::Num(x)));
                row.extend(vel[i * d..(i + 1) * d].iter().map(|&y| Cell::Num(y)));
                terminal.push(row);
            }
            for (s, rep) in reports.iter().enumerate() {
                steps.push(vec![
                    Cell::Num(eps),
                    Cell::from(s + 1),
                    Cell::Num(rep.time),
                    Cell::Num(rep.forcing_norm),
                    Cell::Num(rep.max_speed),
                    Cell::Num(rep.energy_proxy),
                ]);
            }
            if r == 0 && cfg.trajectory {
                let mut t = with_columns(
                    &["t", "i"],
                    [coord_columns("x", d), coord_columns("y", d)].concat(),
                );
                for (time, pos, vel) in &traj {
                    for i in 0..pos.len() / d {
                        let mut row = vec![Cell::Num(*time), Cell::from(i)];
                        row.extend(pos[i * d..(i + 1) * d].iter().map(|&x| Cell::Num(x)));
                        row.extend(vel[i * d..(i + 1) * d].iter().map(|&y| Cell::Num(y)));
                        t.push(row);
                    }
                }
                let mut meta = base_meta(cfg);
                meta.push(("eps".into(), eps.to_string()));
                written.push(write_table(
                    out,
                    &format!("trajectory_eps_{e}"),
                    cfg.format,
                    &meta,
                    &t,
                )?);
            }
        }
    }
    let meta = base_meta(cfg);
    written.insert(0, write_table(out, "eps_steps", cfg.format, &meta, &steps)?);
    written.insert(
        0,
        write_table(out, "simulate_eps", cfg.format, &meta, &terminal)?,
    );
    Ok(written)
}

pub fn simulate_limit(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let model = cfg.noise_model()?;
    let pot = cfg.potential()?;
    let d = cfg.dim;
    let rc = cfg.run_config(cfg.eps_grid[0]);
    let (specs, _) = diffusions(cfg, &model, &rc, &cfg.diffusion_modes)?;
    let (scheme, n) = LimitScheme::covering(rc.horizon, cfg.limit_h, &pot, rc.alpha);
    let mut terminal = with_columns(&["mode", "replica", "particle"], coord_columns("x", d));
    let mut meta = base_meta(cfg);
    let mut written = Vec::new();
    for spec in &specs {
        meta.push((
            format!("d_eff_{}", spec.mode.as_str()),
            serde_json::to_string(&spec.matrix).expect("json"),
        ));
        let results = map_indexed(rc.replicas, |r| {
            let mut traj = Vec::new();
            let ens = run_limit_replica(&rc, &pot, spec, scheme, n, 0, r as u32, |i, e| {
                if r == 0 && cfg.trajectory && (i + 1) % cfg.dump_every as u64 == 0 {
                    traj.push((e.time, e.positions.as_flat().to_vec()));
                }
            })?;
            Ok((ens, traj))
        })?;
        for (r, (ens, traj)) in results.iter().enumerate() {
            for i in 0..rc.samples_per_replica {
                let mut row = vec![Cell::from(spec.mode.as_str()), Cell::from(r), Cell::from(i)];
                row.extend(ens.positions.point(i).iter().map(|&x| Cell::Num(x)));
                terminal.push(row);
            }
            if r == 0 && cfg.trajectory {
                let mut t = with_columns(&["t", "i"], coord_columns("x", d));
                for (time, pos) in traj {
                    for i in 0..pos.len() / d {
                        let mut row = vec![Cell::Num(*time), Cell::from(i)];
                        row.extend(pos[i * d..(i + 1) * d].iter().map(|&x| Cell::Num(x)));
                        t.push(row);
                    }
                }
                let stem = format!("trajectory_limit_{}", spec.mode.as_str());
                written.push(write_table(out, &stem, cfg.format, &base_meta(cfg), &t)?);
            }
        }
    }
    written.insert(
        0,
        write_table(out, "simulate_limit", cfg.format, &meta, &terminal)?,
    );
    Ok(written)
}

fn gk_rows(t: &mut Table, g: &GkEstimate, module: &str) {
    let d = g.dim;
    let mut put = |key: String, v: f64| {
        t.push(vec![
            Cell::from(module),
            Cell::Missing,
            Cell::Text(key),
            Cell::Num(v),
        ])
    };
    for i in 0..d {
        for j in 0..d {
            put(format!("g_{}_{}", i + 1, j + 1), g.g[i * d + j]);
        }
    }
    put("truncation_lag".into(), g.truncation_lag);
    put("ci_fro".into(), g.ci_fro);
    put("horizon_fast".into(), g.horizon_fast);
    put("reps".into(), g.reps as f64);
}

pub fn estimate_gk(cfg: &ExperimentConfig, out: &Path) -> Result<(GkEstimate, PathBuf)> {
    cfg.validate()?;
    let model = cfg.noise_model()?;
    let rc = cfg.run_config(cfg.eps_grid[0]);
    let modes = [
        crate::limit::DiffusionMode::Paper,
        crate::limit::DiffusionMode::GreenKubo,
    ];
    let (specs, gk) = diffusions(cfg, &model, &rc, &modes)?;
    let gk = gk.expect("green-kubo mode requested");
    let mut t = Table::new(&["module", "eps", "key", "value"]);
    gk_rows(&mut t, &gk, "green_kubo");
    let d = cfg.dim;
    let a2 = cfg.alpha * cfg.alpha;
    for i in 0..d {
        for j in 0..d {
            // both modes on the same footing: alpha^2 D_eff
            t.push(vec![
                Cell::from("paper"),
                Cell::Missing,
                Cell::Text(format!("sigma_over_beta_{}_{}", i + 1, j + 1)),
                Cell::Num(a2 * specs[0].matrix[i * d + j]),
            ]);
        }
    }
    let path = write_table(out, "gk", cfg.format, &base_meta(cfg), &t)?;
    Ok((gk, path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseReport {
    pub moments: Vec<MomentTable>,
    pub uv: Vec<UvReport>,
    /// Log-log slope of `E|v(T)|^2` against eps.
    pub v_slope: f64,
    /// Largest over smallest `sup E|sqrt(eps) Y|^4` across the grid.
    pub y4_spread: f64,
    pub gk: Option<GkEstimate>,
}

pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<DiagnoseReport> {
    cfg.validate()?;
    let model = cfg.noise_model()?;
    let pot = cfg.potential()?;
    let opts = UvOptions {
        kind: cfg.scheme,
        quadrature: cfg.forcing,
        bm_interval: cfg.bm_interval,
    };
    let mut moments = Vec::new();
    let mut uv = Vec::new();
    for &eps in &cfg.eps_grid {
        let rc = cfg.run_config(eps);
        let ctx = |e: Error| e.with_context(format!("eps={eps}"));
        moments.push(moment_table(&rc, &model, &pot, cfg.scheme, cfg.forcing).map_err(ctx)?);
        uv.push(uv_check(&rc, &model, &pot, opts).map_err(ctx)?);
    }
    let eps: Vec<f64> = cfg.eps_grid.clone();
    let vs: Vec<f64> = uv.iter().map(|u| u.v_msq).collect();
    let v_slope = if eps.len() >= 2 && vs.iter().all(|&v| v > 0.0) {
        loglog_slope(&eps, &vs)
    } else {
        f64::NAN
    };
    let y4: Vec<f64> = moments.iter().map(|m| m.y4.sup).collect();
    let lo = y4.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y4.iter().copied().fold(0.0, f64::max);
    let y4_spread = if lo > 0.0 { hi / lo } else { f64::NAN };
    let gk = if cfg
        .diffusion_modes
        .contains(&crate::limit::DiffusionMode::GreenKubo)
    {
        let rc = cfg.run_config(cfg.eps_grid[0]);
        diffusions(cfg, &model, &rc, &[crate::limit::DiffusionMode::GreenKubo])?.1
    } else {
        None
    };
    Ok(DiagnoseReport {
        moments,
        uv,
        v_slope,
        y4_spread,
        gk,
    })
}

impl DiagnoseReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["module", "eps", "key", "value"]);
        let mut put = |module: &str, eps: Option<f64>, key: &str, v: f64| {
            t.push(vec![
                Cell::from(module),
                eps.into(),
                Cell::from(key),
                Cell::Num(v),
            ]);
        };
        for m in &self.moments {
            let e = Some(m.eps);
            for (name, s) in [("x2", m.x2), ("x4", m.x4), ("y2", m.y2), ("y4", m.y4)] {
                put("moment_table", e, &format!("{name}_sup"), s.sup);
                put("moment_table", e, &format!("{name}_ci"), s.ci);
                put("moment_table", e, &format!("{name}_time"), s.time);
            }
            put("moment_table", e, "energy_integral", m.energy_integral);
            put("moment_table", e, "replicas", m.replicas as f64);
        }
        for u in &self.uv {
            let e = Some(u.eps);
            put("uv_check", e, "v_msq", u.v_msq);
            put("uv_check", e, "v_msq_ci", u.v_msq_ci);
            for l in &u.u_increment_ratios {
                put("uv_check", e, &format!("ratio_lag_{}", l.lag), l.ratio);
            }
            put("uv_check", e, "max_ratio", u.max_ratio);
            put("uv_check", e, "median_ratio", u.median_ratio);
            if let Some(b) = &u.bm_stats {
                put("bm_proxy", e, "variance_slope", b.variance_slope);
                put(
                    "bm_proxy",
                    e,
                    "lag1_increment_corr",
                    b.lag1_increment_corr.unwrap_or(f64::NAN),
                );
                put("bm_proxy", e, "corr_se", b.corr_se);
                put(
                    "bm_proxy",
                    e,
                    "excess_kurtosis",
                    b.excess_kurtosis.unwrap_or(f64::NAN),
                );
                put("bm_proxy", e, "kurtosis_se", b.kurtosis_se);
            }
        }
        put("summary", None, "v_msq_loglog_slope", self.v_slope);
        put("summary", None, "y4_sup_spread", self.y4_spread);
        if let Some(g) = &self.gk {
            gk_rows(&mut t, g, "green_kubo");
        }
        t
    }
}

pub fn diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<(DiagnoseReport, PathBuf)> {
    let report = run_diagnostics(cfg)?;
    let path = write_table(
        out,
        "diagnose",
        cfg.format,
        &base_meta(cfg),
        &report.table(),
    )?;
    Ok((report, path))
}

/// W2 between two sample files. Points are compared in file order only
/// through their empirical laws.
pub fn w2_files(a: &Path, b: &Path) -> Result<W2Result> {
    let (da, xa) = read_points(a)?;
    let (db, xb) = read_points(b)?;
    if da != db {
        return Err(Error::usage(format!(
            "{} has {da} columns but {} has {db}",
            a.display(),
            b.display()
        )));
    }
    w2_auto(
        &EmpiricalMeasure::from_flat(da, xa)?,
        &EmpiricalMeasure::from_flat(db, xb)?,
        0,
    )
}

pub fn write_w2(result: &W2Result, a: &Path, b: &Path, out: &Path) -> Result<PathBuf> {
    let mut t = Table::new(&["w2", "method", "n_projections", "ci_halfwidth"]);
    t.push(vec![
        Cell::Num(result.value),
        Cell::from(result.method.as_str()),
        result.n_projections.map_or(Cell::Missing, Cell::from),
        result.ci_halfwidth.into(),
    ]);
    let meta = vec![
        ("file_a".into(), a.display().to_string()),
        ("file_b".into(), b.display().to_string()),
    ];
    write_table(out, "w2", super::config::OutputFormat::Csv, &meta, &t)
}
