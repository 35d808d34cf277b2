use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use twobubble_core::ansatz::{approx_params, b_initial, build_phi, CutoffChi, ParamState};
use twobubble_core::evolve::{evolve, EvolveConfig};
use twobubble_core::functionals::{build_q, QFamily};
use twobubble_core::grid::{make_grid, GridKind, RadialGrid};
use twobubble_core::linop::{build_z, negative_eigenpair};
use twobubble_core::model::{ModelId, ModelSpec};
use twobubble_core::modulation::track;
use twobubble_core::num::linear_fit;
use twobubble_core::profiles::build_profiles;
use twobubble_core::shooting::{
    bisect_seeded, run_candidate, Classification, ShootingContext, ShotConfig,
};
use twobubble_core::verify::run_verify;

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(cfg.out_dir.clone().unwrap_or_else(|| "out".into()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

// ------------------------------------------------------------------ verify

pub fn cmd_verify(cfg: RunConfig) -> ExitCode {
    let model = match cfg.model_spec() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_verify(&model, cfg.seed, cfg.inject_profile_error) {
        Ok(report) => {
            for c in &report.checks {
                println!(
                    "{:32} {:>12.4e}  <= {:>9.1e}  {}",
                    c.name,
                    c.value,
                    c.threshold,
                    if c.pass { "pass" } else { "FAIL" }
                );
            }
            let path = out_dir(&cfg).join("verify_report.json");
            if let Err(e) = write_json(&path, &report) {
                eprintln!("io error: {e}");
                return ExitCode::from(2);
            }
            if report.passed {
                println!("all checks passed ({})", report.model);
                ExitCode::SUCCESS
            } else {
                println!("failed checks: {:?}", report.failed_names());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("verification could not run: {e}");
            ExitCode::from(3)
        }
    }
}

// ------------------------------------------------------------------ evolve

#[derive(Serialize)]
struct Manifest {
    model: String,
    seed: u64,
    window_kt: (f64, f64),
    t_span: (f64, f64),
    grid_kind: String,
    grid_n: usize,
    grid_r_min: f64,
    grid_r_max: f64,
    dt_cfl: f64,
    energy: Vec<twobubble_core::evolve::EnergySample>,
    off_trajectory: Option<f64>,
    samples: usize,
}

fn evolution_grid(cfg: &RunConfig, model: &ModelSpec, t0: f64) -> Result<std::sync::Arc<RadialGrid>> {
    let (lam0, _) = approx_params(model, t0);
    let r_min = cfg.grid_r_min.unwrap_or(lam0 / cfg.core_pts);
    Ok(make_grid(cfg.grid_kind, r_min, cfg.grid_r_max, cfg.grid_n, model.dim)?)
}

pub fn cmd_evolve(cfg: RunConfig) -> ExitCode {
    match evolve_inner(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("evolve failed: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn evolve_inner(cfg: &RunConfig) -> Result<ExitCode> {
    let model = cfg.model_spec()?;
    let (t0, t1) = cfg.window(&model)?;
    let grid = evolution_grid(cfg, &model, t0)?;
    let spectral = match model.id {
        ModelId::Nlw6 => {
            let spgrid = make_grid(GridKind::Uniform, 2e-3, 50.0, 12000, 6)?;
            Some(negative_eigenpair(&model, &spgrid)?)
        }
        _ => None,
    };
    let z = build_z(&model, &grid, spectral.as_ref())?;
    let profiles = build_profiles(&model, &grid, &z, 1e-2)?;
    let (lam0, _) = approx_params(&model, t0);
    let p0 = ParamState {
        t: t0,
        lambda: lam0,
        mu: 1.0,
        b: b_initial(&model, lam0),
    };
    let phi0 = build_phi(&model, &grid, &p0, &profiles, &CutoffChi)?;
    let ecfg = EvolveConfig {
        cfl: cfg.cfl,
        t_start: t0,
        t_end: t1,
        output_stride: cfg.output_stride,
        boundary: cfg.boundary,
    };
    let out = evolve(&model, &phi0, &ecfg)?;
    let q = build_q(
        if model.dim == 6 { QFamily::D6 } else { QFamily::D2 },
        cfg.cutoff_c,
        cfg.cutoff_r,
    )?;
    let tr = track(
        &model,
        &out.snapshots,
        &profiles,
        spectral.as_ref(),
        &z,
        Some(&q),
        (lam0, 1.0),
    )?;
    let dir = out_dir(cfg);
    std::fs::create_dir_all(dir.join("tracks"))?;
    std::fs::create_dir_all(dir.join("fields"))?;
    std::fs::write(dir.join("tracks").join("track.csv"), tr.to_csv())?;
    let (_, first) = &out.snapshots[0];
    let (_, last) = out.snapshots.last().unwrap();
    std::fs::write(dir.join("fields").join("u_initial.csv"), first.u.to_csv())?;
    std::fs::write(dir.join("fields").join("u_final.csv"), last.u.to_csv())?;
    std::fs::write(dir.join("fields").join("v_final.csv"), last.v.to_csv())?;
    let manifest = Manifest {
        model: model.id.to_string(),
        seed: cfg.seed,
        window_kt: (cfg.window_kt_start, cfg.window_kt_end),
        t_span: (t0, t1),
        grid_kind: format!("{:?}", cfg.grid_kind).to_lowercase(),
        grid_n: grid.n(),
        grid_r_min: grid.r_min(),
        grid_r_max: grid.r_max(),
        dt_cfl: cfg.cfl * grid.min_spacing(),
        energy: out.energy,
        off_trajectory: tr.off_trajectory,
        samples: tr.samples.len(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!(
        "evolved {} over kappa|t| in [{}, {}]; {} samples written to {}",
        model.id,
        cfg.window_kt_start,
        cfg.window_kt_end,
        tr.samples.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

// ------------------------------------------------------------------- shoot

#[derive(Serialize)]
struct ShootManifest {
    model: String,
    seed: u64,
    window_kt: (f64, f64),
    interval: (f64, f64),
    selected: f64,
    classification: Classification,
    exit_time: f64,
    probes: Vec<(f64, Classification, f64)>,
    worst_g_ratio: f64,
}

pub fn cmd_shoot(cfg: RunConfig) -> ExitCode {
    match shoot_inner(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("shoot failed: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn shoot_inner(cfg: &RunConfig) -> Result<ExitCode> {
    let model = cfg.model_spec()?;
    if model.id == ModelId::Ym4 {
        eprintln!("ym4 has no linear instability and needs no shooting; use evolve");
        return Ok(ExitCode::from(2));
    }
    let (t0, t1) = cfg.window(&model)?;
    let ctx = ShootingContext::new(&model, t0, cfg.grid_r_max, cfg.grid_n)?;
    let interval = match cfg.shoot_interval {
        Some(iv) => iv,
        None => match model.id {
            ModelId::Nlw6 => {
                let env = (-1.5 * model.kappa * t0.abs()).exp();
                (-0.5 * env, 0.5 * env)
            }
            _ => (
                twobubble_core::shooting::wm_barrier(&model, t0, -1.0),
                twobubble_core::shooting::wm_barrier(&model, t0, 1.0),
            ),
        },
    };
    let shot = ShotConfig {
        t_start: t0,
        t_end: t1,
        interval,
        exit_margin: cfg.shoot_exit_margin,
        max_bisections: cfg.shoot_max_bisections,
        cfl: cfg.cfl,
        check_stride: cfg.shoot_check_stride,
    };
    shot.validate()?;
    // endpoint classification; independent candidates run in parallel when
    // the thread budget allows
    let (lo, hi) = interval;
    let (out_lo, out_hi) = if cfg.threads >= 2 {
        std::thread::scope(|scope| {
            let a = scope.spawn(|| run_candidate(&ctx, &shot, lo));
            let b = run_candidate(&ctx, &shot, hi);
            (a.join().expect("endpoint thread"), b)
        })
    } else {
        (run_candidate(&ctx, &shot, lo), run_candidate(&ctx, &shot, hi))
    };
    let outcome = bisect_seeded(&ctx, &shot, out_lo?, out_hi?)?;
    let dir = out_dir(cfg);
    std::fs::create_dir_all(dir.join("tracks"))?;
    let mut csv = String::from(
        "t,lambda,mu,b,a1_plus,a1_minus,a2_plus,a2_minus,g_norm,i_fun,j_fun,h_fun,z_pair,g_ratio\n",
    );
    for s in &outcome.outcome.samples {
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            s.t, s.lambda, s.mu, s.b, s.a1_plus, s.a1_minus, s.a2_plus, s.a2_minus,
            s.g_norm, s.i_fun, s.j_fun, s.h_fun, s.z_pair, s.g_ratio
        ));
    }
    std::fs::write(dir.join("tracks").join("selected.csv"), csv)?;
    let manifest = ShootManifest {
        model: model.id.to_string(),
        seed: cfg.seed,
        window_kt: (cfg.window_kt_start, cfg.window_kt_end),
        interval,
        selected: outcome.selected,
        classification: outcome.outcome.classification,
        exit_time: outcome.outcome.exit_time,
        probes: outcome.history.clone(),
        worst_g_ratio: outcome.outcome.worst_g_ratio,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!(
        "shooting {}: selected {} -> {:?} at t = {:.4} ({} probes)",
        model.id,
        outcome.selected,
        outcome.outcome.classification,
        outcome.outcome.exit_time,
        outcome.history.len()
    );
    if outcome.outcome.classification == Classification::Survived {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

// ------------------------------------------------------------------ report

#[derive(Serialize)]
struct Summary {
    model: String,
    kappa_fit: Option<f64>,
    kappa_theory: Option<f64>,
    kappa_rel_err: Option<f64>,
    power_fit: Option<f64>,
    power_theory: Option<f64>,
    samples: usize,
}

pub fn cmd_report(dir: &str) -> ExitCode {
    match report_inner(dir) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("report failed: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn report_inner(dir: &str) -> Result<ExitCode> {
    let dir = Path::new(dir);
    let manifest_text = std::fs::read_to_string(dir.join("manifest.json"))
        .with_context(|| format!("missing manifest in {}", dir.display()))?;
    let manifest: serde_json::Value = serde_json::from_str(&manifest_text)?;
    let model_id = manifest["model"]
        .as_str()
        .context("manifest lacks a model id")?
        .to_string();
    let model = ModelSpec::parse(&model_id)?;
    // first track csv found
    let mut track_path = None;
    for entry in std::fs::read_dir(dir.join("tracks"))? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            track_path = Some(p);
            break;
        }
    }
    let track_path = track_path.context("no track csv in tracks/")?;
    let text = std::fs::read_to_string(&track_path)?;
    let mut ts = Vec::new();
    let mut lams = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let mut cols = line.split(',');
        let t: f64 = cols.next().context("bad csv")?.parse()?;
        let lam: f64 = cols.next().context("bad csv")?.parse()?;
        ts.push(t);
        lams.push(lam);
    }
    if ts.len() < 4 {
        bail!("track too short to fit ({} samples)", ts.len());
    }
    // drop the initial transient
    let skip = ts.len() / 10;
    let summary = match model.id {
        ModelId::Wm(k) => {
            let xs: Vec<f64> = ts[skip..].iter().map(|t| t.abs().ln()).collect();
            let ys: Vec<f64> = lams[skip..].iter().map(|l| l.ln()).collect();
            let (_, slope) = linear_fit(&xs, &ys);
            Summary {
                model: model_id.clone(),
                kappa_fit: None,
                kappa_theory: None,
                kappa_rel_err: None,
                power_fit: Some(slope),
                power_theory: Some(-2.0 / (k as f64 - 2.0)),
                samples: ts.len(),
            }
        }
        _ => {
            let ys: Vec<f64> = lams[skip..].iter().map(|l| l.ln()).collect();
            let (_, slope) = linear_fit(&ts[skip..], &ys);
            Summary {
                model: model_id.clone(),
                kappa_fit: Some(slope),
                kappa_theory: Some(model.kappa),
                kappa_rel_err: Some((slope - model.kappa).abs() / model.kappa),
                power_fit: None,
                power_theory: None,
                samples: ts.len(),
            }
        }
    };
    write_json(&dir.join("summary.json"), &summary)?;
    println!("model      : {}", summary.model);
    if let (Some(fit), Some(th)) = (summary.kappa_fit, summary.kappa_theory) {
        println!("kappa_fit  : {fit:.6}");
        println!("kappa      : {th:.6}");
        println!(
            "rel error  : {:.2}%",
            100.0 * summary.kappa_rel_err.unwrap_or(f64::NAN)
        );
    }
    if let (Some(fit), Some(th)) = (summary.power_fit, summary.power_theory) {
        println!("power_fit  : {fit:.4}");
        println!("power      : {th:.4}");
    }
    println!("samples    : {}", summary.samples);
    Ok(ExitCode::SUCCESS)
}
