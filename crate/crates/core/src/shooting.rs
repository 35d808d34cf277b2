//! Topological selection of concentrating trajectories: bisection over the
//! unstable coefficient a0 (NLW6) or over the initial scale between power-law
//! barriers (wave maps). Yang-Mills has no linear instability and needs no
//! shooting; its two-bubble runs start straight from the ansatz.

use crate::ansatz::{approx_params, b_initial, b_rate, build_phi, error_rate, CutoffChi, ParamState};
use crate::error::{Error, Result};
use crate::evolve::{Boundary, Evolver};
use crate::grid::{Field, GridKind, RadialGrid, State};
use crate::linop::{build_z, pair_z, LocalizerZ, SpectralData};
use crate::model::{ModelId, ModelSpec};
use crate::modulation::{eigen_coeffs, extract_params, TrackSample};
use crate::num::solve_dense;
use crate::profiles::{build_profiles, ProfileSet};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    ExitHigh,
    ExitLow,
    Survived,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShotConfig {
    /// window [T, T0], both negative
    pub t_start: f64,
    pub t_end: f64,
    /// shooting interval (a0 for NLW6, lambda0 for WM)
    pub interval: (f64, f64),
    /// exit when the monitored quantity crosses margin * envelope
    pub exit_margin: f64,
    pub max_bisections: usize,
    pub cfl: f64,
    /// modulation checks every this many steps
    pub check_stride: usize,
}

impl ShotConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_start < self.t_end && self.t_end < 0.0) {
            return Err(Error::InvalidArgument("want T < T0 < 0".into()));
        }
        if !(self.interval.0 < self.interval.1) {
            return Err(Error::InvalidArgument("empty shooting interval".into()));
        }
        if !(self.exit_margin > 0.0) {
            return Err(Error::InvalidArgument("exit margin must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShotOutcome {
    pub classification: Classification,
    pub exit_time: f64,
    pub samples: Vec<TrackSample>,
    /// largest ||g||/rate seen while inside the envelope
    pub worst_g_ratio: f64,
}

/// Everything heavy a family of candidate runs shares.
pub struct ShootingContext {
    pub model: ModelSpec,
    pub grid: Arc<RadialGrid>,
    pub z: LocalizerZ,
    pub profiles: ProfileSet,
    pub spectral: Option<SpectralData>,
}

impl ShootingContext {
    /// Assemble grid, localizer, profiles and (for NLW6) spectral data for
    /// the given window. The grid resolves the smallest expected scale with
    /// about thirty nodes per core.
    pub fn new(model: &ModelSpec, t_start: f64, r_max: f64, n: usize) -> Result<Self> {
        let (lam_min, _) = approx_params(model, t_start);
        let r_min = (lam_min / 30.0).min(1e-3);
        let grid = crate::grid::make_grid(GridKind::Hybrid, r_min, r_max, n, model.dim)?;
        let spectral = match model.id {
            ModelId::Nlw6 => {
                let spgrid = crate::grid::make_grid(GridKind::Uniform, 2e-3, 50.0, 12000, 6)?;
                Some(crate::linop::negative_eigenpair(model, &spgrid)?)
            }
            _ => None,
        };
        let z = build_z(model, &grid, spectral.as_ref())?;
        // evolution grids carry larger discrete residuals than the
        // verification grids; profile identities are checked loosely here
        let profiles = build_profiles(model, &grid, &z, 1e-2)?;
        Ok(ShootingContext {
            model: model.clone(),
            grid,
            z,
            profiles,
            spectral,
        })
    }
}

/// Initial data for the NLW6 shooting: the two-bubble configuration plus
/// the six-direction corrector pinning the stable/unstable coefficients.
pub fn initial_data_nlw(
    ctx: &ShootingContext,
    t_start: f64,
    a0: f64,
) -> Result<(State, f64)> {
    let model = &ctx.model;
    if model.id != ModelId::Nlw6 {
        return Err(Error::UnsupportedModel(model.id.to_string()));
    }
    let envelope = (-1.5 * model.kappa * t_start.abs()).exp();
    if a0.abs() > envelope * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "|a0| = {} exceeds the instability envelope {envelope:.3e}",
            a0.abs()
        )));
    }
    let sp = ctx.spectral.as_ref().expect("NLW6 context has spectral data");
    let grid = &ctx.grid;
    let (lam, b) = approx_params(model, t_start);
    let mu = 1.0;

    // basis pairs
    let basis: Vec<State> = vec![
        sp.y_pair(model, grid, mu, 1.0),
        sp.y_pair(model, grid, mu, -1.0),
        State::new(
            Field::sample(grid, model.scaled_h(|r| model.lam_w(r), mu)),
            Field::zeros(grid),
        ),
        sp.y_pair(model, grid, lam, 1.0),
        sp.y_pair(model, grid, lam, -1.0),
        State::new(
            Field::sample(grid, model.scaled_h(|r| model.lam_w(r), lam)),
            Field::zeros(grid),
        ),
    ];
    let alpha_mu_p = sp.alpha_pair(model, grid, mu, 1.0);
    let alpha_mu_m = sp.alpha_pair(model, grid, mu, -1.0);
    let alpha_lam_p = sp.alpha_pair(model, grid, lam, 1.0);
    let alpha_lam_m = sp.alpha_pair(model, grid, lam, -1.0);
    let functional = |row: usize, h: &State| -> f64 {
        match row {
            0 => sp.pair_alpha(&alpha_mu_p, h),
            1 => sp.pair_alpha(&alpha_mu_m, h),
            2 => pair_z(model, &ctx.z, mu, &h.u),
            3 => sp.pair_alpha(&alpha_lam_p, h),
            4 => sp.pair_alpha(&alpha_lam_m, h),
            _ => pair_z(model, &ctx.z, lam, &h.u),
        }
    };
    let mut mat = vec![0.0; 36];
    for (j, e) in basis.iter().enumerate() {
        for i in 0..6 {
            mat[i * 6 + j] = functional(i, e);
        }
    }
    // strict diagonal dominance, scaled by rows
    for i in 0..6 {
        let diag = mat[i * 6 + i].abs();
        let off: f64 = (0..6).filter(|&j| j != i).map(|j| mat[i * 6 + j].abs()).sum();
        if diag <= off {
            return Err(Error::InitialDataDegenerate);
        }
    }
    let mut rhs = [0.0, 0.0, 0.0, a0, 0.0, 0.0];
    if !solve_dense(&mut mat, &mut rhs, 6) {
        return Err(Error::InitialDataDegenerate);
    }
    let n = grid.n();
    let mut h0 = State::zeros(grid);
    for (c, e) in rhs.iter().zip(&basis) {
        for i in 0..n {
            h0.u.values[i] += c * e.u.values[i];
            h0.v.values[i] += c * e.v.values[i];
        }
    }
    let h0_norm = model.norm(&h0);
    let bound_const = if a0 != 0.0 { h0_norm / a0.abs() } else { 0.0 };
    let wl = model.scaled_h(|r| model.w(r), lam);
    let lamw_uln = model.scaled_l2(|r| model.lam_w(r), lam);
    let u = Field::new(
        grid.clone(),
        grid.nodes()
            .iter()
            .enumerate()
            .map(|(i, &r)| model.w(r) + wl(r) + h0.u.values[i])
            .collect(),
    );
    let v = Field::new(
        grid.clone(),
        grid.nodes()
            .iter()
            .enumerate()
            .map(|(i, &r)| -b * lamw_uln(r) + h0.v.values[i])
            .collect(),
    );
    Ok((State::new(u, v), bound_const))
}

/// Wave-map barrier functions beta_j(t).
pub fn wm_barrier(model: &ModelSpec, t: f64, j: f64) -> f64 {
    let (lam_app, _) = approx_params(model, t);
    let k = match model.id {
        ModelId::Wm(k) => k as f64,
        _ => unreachable!("barriers are a wave-map construct"),
    };
    lam_app + j * t.abs().powf(-2.5 / (k - 2.0))
}

/// Initial data for a wave-map candidate at scale lambda0.
pub fn initial_data_wm(ctx: &ShootingContext, lambda0: f64) -> Result<State> {
    let model = &ctx.model;
    let grid = &ctx.grid;
    let b0 = b_initial(model, lambda0);
    let wl = model.scaled_h(|r| model.w(r), lambda0);
    let lamw_uln = model.scaled_l2(|r| model.lam_w(r), lambda0);
    Ok(State::new(
        Field::sample(grid, |r| -model.w(r) + wl(r)),
        Field::sample(grid, |r| -b0 * lamw_uln(r)),
    ))
}

/// Run one candidate to exit or survival.
pub fn run_candidate(ctx: &ShootingContext, cfg: &ShotConfig, param: f64) -> Result<ShotOutcome> {
    cfg.validate()?;
    let model = &ctx.model;
    let chi = CutoffChi;
    let (state0, lam0) = match model.id {
        ModelId::Nlw6 => {
            let (s, _) = initial_data_nlw(ctx, cfg.t_start, param)?;
            (s, approx_params(model, cfg.t_start).0)
        }
        ModelId::Wm(_) => (initial_data_wm(ctx, param)?, param),
        ModelId::Ym4 => {
            let (lam, b) = approx_params(model, cfg.t_start);
            let p = ParamState {
                t: cfg.t_start,
                lambda: lam,
                mu: 1.0,
                b,
            };
            (build_phi(model, &ctx.grid, &p, &ctx.profiles, &chi)?, lam)
        }
    };
    let mut ev = Evolver::new(model, &ctx.grid, Boundary::Frozen);
    let dt0 = cfg.cfl * ctx.grid.min_spacing();
    let span = cfg.t_end - cfg.t_start;
    let steps = (span / dt0).ceil() as usize;
    let dt = span / steps as f64;
    let mut u = state0.u.values.clone();
    let mut v = state0.v.values.clone();
    let mut guess = (lam0, 1.0);
    let mut b = b_initial(model, lam0);
    let mut prev: Option<(f64, f64, f64)> = None;
    let mut samples = Vec::new();
    let mut worst_ratio = 0.0f64;
    let check = |t: f64,
                     u: &[f64],
                     v: &[f64],
                     guess: &mut (f64, f64),
                     b: &mut f64,
                     prev: &mut Option<(f64, f64, f64)>,
                     samples: &mut Vec<TrackSample>,
                     worst_ratio: &mut f64|
     -> Result<Option<(Classification, f64)>> {
        let uf = Field::new(ctx.grid.clone(), u.to_vec());
        let (lam, mu) = extract_params(model, &uf, *guess, &ctx.z)?;
        *guess = (lam, mu);
        if let Some((tp, lp, mp)) = *prev {
            *b += 0.5 * (t - tp) * (b_rate(model, lp, mp) + b_rate(model, lam, mu));
        }
        *prev = Some((t, lam, mu));
        let p = ParamState {
            t,
            lambda: lam,
            mu,
            b: *b,
        };
        let phi = build_phi(model, &ctx.grid, &p, &ctx.profiles, &chi)?;
        let g = State::new(
            Field::new(
                ctx.grid.clone(),
                u.iter().zip(&phi.u.values).map(|(a, b)| a - b).collect(),
            ),
            Field::new(
                ctx.grid.clone(),
                v.iter().zip(&phi.v.values).map(|(a, b)| a - b).collect(),
            ),
        );
        let g_norm = model.norm(&g);
        let rate = error_rate(model, t);
        *worst_ratio = worst_ratio.max(g_norm / rate);
        let (a1p, a1m, a2p, a2m) = match &ctx.spectral {
            Some(sp) => eigen_coeffs(model, sp, &g, lam, mu),
            None => (0.0, 0.0, 0.0, 0.0),
        };
        samples.push(TrackSample {
            t,
            lambda: lam,
            mu,
            b: *b,
            a1_plus: a1p,
            a1_minus: a1m,
            a2_plus: a2p,
            a2_minus: a2m,
            g_norm,
            i_fun: 0.0,
            j_fun: 0.0,
            h_fun: 0.0,
            z_pair: pair_z(model, &ctx.z, lam, &g.u),
            g_ratio: g_norm / rate,
        });
        // exits
        match model.id {
            ModelId::Nlw6 => {
                let env = cfg.exit_margin * (-1.5 * model.kappa * t.abs()).exp();
                if a1p.abs() >= env {
                    return Ok(Some((
                        if a1p > 0.0 {
                            Classification::ExitHigh
                        } else {
                            Classification::ExitLow
                        },
                        t,
                    )));
                }
            }
            ModelId::Wm(_) => {
                if lam >= wm_barrier(model, t, 1.0) {
                    return Ok(Some((Classification::ExitHigh, t)));
                }
                if lam <= wm_barrier(model, t, -1.0) {
                    return Ok(Some((Classification::ExitLow, t)));
                }
            }
            ModelId::Ym4 => {}
        }
        Ok(None)
    };

    let mut outcome = check(
        cfg.t_start,
        &u,
        &v,
        &mut guess,
        &mut b,
        &mut prev,
        &mut samples,
        &mut worst_ratio,
    )?;
    let mut step_idx = 0usize;
    while outcome.is_none() && step_idx < steps {
        let todo = cfg.check_stride.min(steps - step_idx);
        for _ in 0..todo {
            ev.step_in_place(&mut u, &mut v, dt);
        }
        step_idx += todo;
        let t = cfg.t_start + dt * step_idx as f64;
        if u.iter().any(|x| !x.is_finite()) {
            // classify from the last sample if it already points outward
            let cls = samples
                .last()
                .map(|s| match model.id {
                    ModelId::Nlw6 => {
                        let env = 0.5 * cfg.exit_margin * (-1.5 * model.kappa * s.t.abs()).exp();
                        if s.a1_plus.abs() >= env {
                            if s.a1_plus > 0.0 {
                                Classification::ExitHigh
                            } else {
                                Classification::ExitLow
                            }
                        } else {
                            Classification::Inconclusive
                        }
                    }
                    _ => Classification::Inconclusive,
                })
                .unwrap_or(Classification::Inconclusive);
            return Ok(ShotOutcome {
                classification: cls,
                exit_time: t,
                samples,
                worst_g_ratio: worst_ratio,
            });
        }
        outcome = check(
            t,
            &u,
            &v,
            &mut guess,
            &mut b,
            &mut prev,
            &mut samples,
            &mut worst_ratio,
        )?;
    }
    let (classification, exit_time) = outcome.unwrap_or((Classification::Survived, cfg.t_end));
    Ok(ShotOutcome {
        classification,
        exit_time,
        samples,
        worst_g_ratio: worst_ratio,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BisectOutcome {
    pub selected: f64,
    pub outcome: ShotOutcome,
    /// (parameter, classification, exit time) per probe, in order
    pub history: Vec<(f64, Classification, f64)>,
}

/// Standard bisection on the exit classification. Returns the longest
/// surviving candidate (a survivor if one is found).
pub fn bisect(ctx: &ShootingContext, cfg: &ShotConfig) -> Result<BisectOutcome> {
    cfg.validate()?;
    let out_lo = run_candidate(ctx, cfg, cfg.interval.0)?;
    let out_hi = run_candidate(ctx, cfg, cfg.interval.1)?;
    bisect_seeded(ctx, cfg, out_lo, out_hi)
}

/// Bisection with the endpoint classifications already computed (they are
/// independent candidates and may have run in parallel).
pub fn bisect_seeded(
    ctx: &ShootingContext,
    cfg: &ShotConfig,
    out_lo: ShotOutcome,
    out_hi: ShotOutcome,
) -> Result<BisectOutcome> {
    cfg.validate()?;
    let (mut lo, mut hi) = cfg.interval;
    let mut history = vec![
        (lo, out_lo.classification, out_lo.exit_time),
        (hi, out_hi.classification, out_hi.exit_time),
    ];
    let ok = matches!(
        (out_lo.classification, out_hi.classification),
        (Classification::ExitLow, Classification::ExitHigh)
            | (Classification::ExitHigh, Classification::ExitLow)
    );
    if out_lo.classification == Classification::Survived {
        return Ok(BisectOutcome {
            selected: lo,
            outcome: out_lo,
            history,
        });
    }
    if out_hi.classification == Classification::Survived {
        return Ok(BisectOutcome {
            selected: hi,
            outcome: out_hi,
            history,
        });
    }
    if !ok {
        return Err(Error::ShootingBracket);
    }
    let high_is_up = out_hi.classification == Classification::ExitHigh;
    let mut best = if out_lo.exit_time >= out_hi.exit_time {
        (lo, out_lo)
    } else {
        (hi, out_hi)
    };
    let scale = lo.abs().max(hi.abs()).max(1e-300);
    for _ in 0..cfg.max_bisections {
        if hi - lo < 1e-14 * scale {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let out = run_candidate(ctx, cfg, mid)?;
        history.push((mid, out.classification, out.exit_time));
        match out.classification {
            Classification::Survived => {
                return Ok(BisectOutcome {
                    selected: mid,
                    outcome: out,
                    history,
                });
            }
            Classification::ExitHigh => {
                if high_is_up {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Classification::ExitLow => {
                if high_is_up {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Classification::Inconclusive => {
                // treat as the nearer endpoint's side to keep the bracket
                hi = mid;
            }
        }
        if out.exit_time >= best.1.exit_time {
            best = (mid, out);
        }
    }
    Ok(BisectOutcome {
        selected: best.0,
        outcome: best.1,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rel_err;

    fn nlw_ctx() -> (ModelSpec, ShootingContext, f64) {
        let model = ModelSpec::new(ModelId::Nlw6).unwrap();
        let t0 = -4.0 / model.kappa;
        let ctx = ShootingContext::new(&model, t0, 50.0, 2000).unwrap();
        (model, ctx, t0)
    }

    #[test]
    fn zero_a0_gives_pure_two_bubble_data() {
        let (model, ctx, t0) = nlw_ctx();
        let (state, c) = initial_data_nlw(&ctx, t0, 0.0).unwrap();
        assert_eq!(c, 0.0);
        let (lam, b) = approx_params(&model, t0);
        for (i, &r) in ctx.grid.nodes().iter().enumerate() {
            let expect_u = model.w(r) + model.scaled_h(|x| model.w(x), lam)(r);
            let expect_v = -b * model.scaled_l2(|x| model.lam_w(x), lam)(r);
            assert!((state.u.values[i] - expect_u).abs() < 1e-12, "u at {r}");
            assert!((state.v.values[i] - expect_v).abs() < 1e-12, "v at {r}");
        }
    }

    #[test]
    fn corrector_hits_prescribed_coefficients() {
        let (model, ctx, t0) = nlw_ctx();
        let a0 = 1e-5;
        let (state, c) = initial_data_nlw(&ctx, t0, a0).unwrap();
        assert!(c.is_finite() && c > 0.0 && c < 100.0, "bound constant {c}");
        // re-measure through the eigen-coefficient pairings
        let (lam, b) = approx_params(&model, t0);
        let grid = &ctx.grid;
        let h0 = State::new(
            Field::new(
                grid.clone(),
                grid.nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| {
                        state.u.values[i] - model.w(r) - model.scaled_h(|x| model.w(x), lam)(r)
                    })
                    .collect(),
            ),
            Field::new(
                grid.clone(),
                grid.nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| {
                        state.v.values[i] + b * model.scaled_l2(|x| model.lam_w(x), lam)(r)
                    })
                    .collect(),
            ),
        );
        let sp = ctx.spectral.as_ref().unwrap();
        let (a1p, a1m, a2p, a2m) = eigen_coeffs(&model, sp, &h0, lam, 1.0);
        assert!(rel_err(a1p, a0) < 1e-10, "a1+ = {a1p}");
        for (name, v) in [("a1-", a1m), ("a2+", a2p), ("a2-", a2m)] {
            assert!(v.abs() < 1e-10 * 1.0, "{name} = {v}");
        }
        let zl = pair_z(&model, &ctx.z, lam, &h0.u);
        let zm = pair_z(&model, &ctx.z, 1.0, &h0.u);
        assert!(zl.abs() < 1e-12 && zm.abs() < 1e-12, "z pairings {zl} {zm}");
    }

    #[test]
    fn oversized_a0_rejected() {
        let (model, ctx, t0) = nlw_ctx();
        let env = (-1.5 * model.kappa * t0.abs()).exp();
        assert!(initial_data_nlw(&ctx, t0, 2.0 * env).is_err());
    }

    #[test]
    fn wm_barrier_ordering() {
        let model = ModelSpec::new(ModelId::Wm(3)).unwrap();
        let t = -6.0 / model.kappa;
        let (lam_app, _) = approx_params(&model, t);
        assert!(wm_barrier(&model, t, -1.0) < lam_app);
        assert!(wm_barrier(&model, t, 1.0) > lam_app);
    }

    #[test]
    fn config_validation() {
        let cfg = ShotConfig {
            t_start: -1.0,
            t_end: -2.0,
            interval: (0.0, 1.0),
            exit_margin: 1.0,
            max_bisections: 10,
            cfl: 0.3,
            check_stride: 10,
        };
        assert!(cfg.validate().is_err());
    }
}
