//! Formal parameter flow, the two-bubble ansatz phi(t) and its error.

use crate::error::{Error, Result};
use crate::grid::{Field, RadialGrid, State};
use crate::linop::{laplacian, Bump};
use crate::model::{ModelId, ModelSpec};
use crate::profiles::ProfileSet;
use serde::Serialize;
use std::sync::Arc;

/// Modulation parameters at one time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ParamState {
    pub t: f64,
    pub lambda: f64,
    pub mu: f64,
    pub b: f64,
}

/// C^2 quintic cutoff: 1 on [0, 1], 0 on [2, inf), monotone between.
#[derive(Debug, Clone, Copy, Default)]
pub struct CutoffChi;

impl CutoffChi {
    pub fn eval(&self, x: f64) -> f64 {
        let s = x.abs() - 1.0;
        if s <= 0.0 {
            1.0
        } else if s >= 1.0 {
            0.0
        } else {
            1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
        }
    }

    pub fn eval_prime(&self, x: f64) -> f64 {
        let s = x.abs() - 1.0;
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            -(30.0 * s * s - 60.0 * s * s * s + 30.0 * s * s * s * s) * x.signum()
        }
    }

    pub fn eval_second(&self, x: f64) -> f64 {
        let s = x.abs() - 1.0;
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            -(60.0 * s - 180.0 * s * s + 120.0 * s * s * s)
        }
    }
}

/// b(T) compatible with the initial scale: the value of the b-integral at T.
pub fn b_initial(model: &ModelSpec, lambda_t: f64) -> f64 {
    match model.id {
        ModelId::Wm(k) => {
            let kf = k as f64;
            (2.0 * model.kappa / (kf - 2.0)).powf(kf / 2.0) * lambda_t.powf(kf / 2.0)
        }
        _ => model.kappa * lambda_t,
    }
}

/// Right-hand side of b' in the formal parameter system.
pub fn b_rate(model: &ModelSpec, lambda: f64, mu: f64) -> f64 {
    match model.id {
        ModelId::Wm(k) => {
            let kf = k as f64;
            kf / 2.0 * (2.0 * model.kappa / (kf - 2.0)).powf(kf) * lambda.powf(kf - 1.0)
                / mu.powf(kf)
        }
        _ => model.kappa * model.kappa * lambda / (mu * mu),
    }
}

/// Closed-form approximate trajectory (lambda_app, b_app) at time t < 0.
pub fn approx_params(model: &ModelSpec, t: f64) -> (f64, f64) {
    let kt = model.kappa * t.abs();
    match model.id {
        ModelId::Wm(k) => {
            let kf = k as f64;
            (
                (kf - 2.0) / (2.0 * model.kappa) * kt.powf(-2.0 / (kf - 2.0)),
                kt.powf(-kf / (kf - 2.0)),
            )
        }
        _ => ((-kt).exp() / model.kappa, (-kt).exp()),
    }
}

/// The corridor the scale is expected to stay inside along a trajectory.
pub fn lambda_corridor(model: &ModelSpec, t: f64) -> (f64, f64) {
    let (lam, _) = approx_params(model, t);
    match model.id {
        ModelId::Wm(_) => (0.5 * lam, 2.0 * lam),
        _ => (8.0 / 9.0 * lam, 9.0 / 8.0 * lam),
    }
}

/// Integrate the formal system lambda' = b, b' = b_rate from T to t_end
/// (RK4, step bounded by min(lambda, 1e-2)); mu stays frozen.
pub fn param_flow(
    model: &ModelSpec,
    t_start: f64,
    t_end: f64,
    lambda_t: f64,
    mu_t: f64,
) -> Result<ParamState> {
    if !(t_start <= t_end && t_end < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "want T <= t < 0, got [{t_start}, {t_end}]"
        )));
    }
    let mut t = t_start;
    let mut lam = lambda_t;
    let mut b = b_initial(model, lambda_t);
    while t < t_end {
        let dt = (t_end - t).min(lam.min(1e-2) * 0.5);
        let f = |l: f64, bb: f64| (bb, b_rate(model, l, mu_t));
        let (k1l, k1b) = f(lam, b);
        let (k2l, k2b) = f(lam + 0.5 * dt * k1l, b + 0.5 * dt * k1b);
        let (k3l, k3b) = f(lam + 0.5 * dt * k2l, b + 0.5 * dt * k2b);
        let (k4l, k4b) = f(lam + dt * k3l, b + dt * k3b);
        lam += dt / 6.0 * (k1l + 2.0 * k2l + 2.0 * k3l + k4l);
        b += dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        t += dt;
        if !(lam > 0.0 && lam.is_finite() && b.is_finite()) {
            return Err(Error::ParameterBlowup(t));
        }
    }
    Ok(ParamState {
        t,
        lambda: lam,
        mu: mu_t,
        b,
    })
}

/// The correction S(t) as a sampled field.
pub fn correction_s(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    p: &ParamState,
    profiles: &ProfileSet,
    chi: &CutoffChi,
) -> Field {
    let (lam, mu, b) = (p.lambda, p.mu, p.b);
    let (c_p, c_q, use_chi) = match model.id {
        ModelId::Nlw6 => (lam * lam / (mu * mu), b * b, true),
        ModelId::Ym4 => (0.0, b * b, true),
        ModelId::Wm(k) => ((lam / mu).powf(k as f64), b * b, false),
    };
    let a = model.scale_pow_h;
    let scale = lam.powf(-a);
    Field::sample(grid, |r| {
        let cut = if use_chi { chi.eval(r) } else { 1.0 };
        if cut == 0.0 {
            return 0.0;
        }
        let s = r / lam;
        let mut v = c_q * scale * profiles.q.eval(s);
        if c_p != 0.0 {
            if let Some(pp) = &profiles.p {
                v += c_p * scale * pp.eval(s);
            }
        }
        cut * v
    })
}

/// Time derivative of S given (lambda', mu', b').
fn correction_s_dt(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    p: &ParamState,
    dp: (f64, f64, f64),
    profiles: &ProfileSet,
    chi: &CutoffChi,
) -> Field {
    let (lam, mu, b) = (p.lambda, p.mu, p.b);
    let (dlam, dmu, db) = dp;
    let (c_p, dc_p, c_q, dc_q, use_chi) = match model.id {
        ModelId::Nlw6 => (
            lam * lam / (mu * mu),
            2.0 * lam * dlam / (mu * mu) - 2.0 * lam * lam * dmu / (mu * mu * mu),
            b * b,
            2.0 * b * db,
            true,
        ),
        ModelId::Ym4 => (0.0, 0.0, b * b, 2.0 * b * db, true),
        ModelId::Wm(k) => {
            let kf = k as f64;
            (
                (lam / mu).powf(kf),
                kf * lam.powf(kf - 1.0) * dlam / mu.powf(kf)
                    - kf * lam.powf(kf) * dmu / mu.powf(kf + 1.0),
                b * b,
                2.0 * b * db,
                false,
            )
        }
    };
    let a = model.scale_pow_h;
    let scale = lam.powf(-a);
    Field::sample(grid, |r| {
        let cut = if use_chi { chi.eval(r) } else { 1.0 };
        if cut == 0.0 {
            return 0.0;
        }
        let s = r / lam;
        // d/dt [c(t) l^-a P(r/l)] = c' l^-a P - c (l'/l) l^-a (a P + s P')
        let mut v = 0.0;
        let qv = profiles.q.eval(s);
        let qlam = a * qv + s * profiles.q.eval_prime(s);
        v += dc_q * scale * qv - c_q * dlam / lam * scale * qlam;
        if c_p != 0.0 || dc_p != 0.0 {
            if let Some(pp) = &profiles.p {
                let pv = pp.eval(s);
                let plam = a * pv + s * pp.eval_prime(s);
                v += dc_p * scale * pv - c_p * dlam / lam * scale * plam;
            }
        }
        cut * v
    })
}

/// Assemble the approximate solution phi = sigma W_mu + W_lambda + S with
/// velocity -b LamW at the companion scaling.
pub fn build_phi(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    p: &ParamState,
    profiles: &ProfileSet,
    chi: &CutoffChi,
) -> Result<State> {
    if p.lambda / p.mu >= 0.2 {
        return Err(Error::AnsatzOutOfRegime(p.lambda / p.mu));
    }
    let s = correction_s(model, grid, p, profiles, chi);
    let wmu = model.scaled_h(|r| model.w(r), p.mu);
    let wlam = model.scaled_h(|r| model.w(r), p.lambda);
    let u = Field::sample(grid, |r| model.sigma * wmu(r) + wlam(r));
    let u = Field::new(
        grid.clone(),
        u.values.iter().zip(&s.values).map(|(a, b)| a + b).collect(),
    );
    let lamw_uln = model.scaled_l2(|r| model.lam_w(r), p.lambda);
    let v = Field::sample(grid, |r| -p.b * lamw_uln(r));
    Ok(State::new(u, v))
}

#[derive(Debug, Clone, Serialize)]
pub struct AnsatzDiagnostics {
    /// reference decay rate at this time
    pub rate: f64,
    /// H-norm of the first error component after removing the modulation
    /// terms, divided by the rate
    pub h_part_ratio: f64,
    /// L2 norm of the second component after removing the scale-velocity
    /// term, divided by the rate
    pub l2_part_ratio: f64,
    /// dual-norm estimate of the linearized image of psi over the rate
    /// (bump-dictionary estimate, not an assertion)
    pub dual_estimate_ratio: f64,
    /// H-norm of the correction S
    pub s_norm: f64,
}

/// Decay rate the error bounds are measured against.
pub fn error_rate(model: &ModelSpec, t: f64) -> f64 {
    match model.id {
        ModelId::Wm(k) => {
            let kf = k as f64;
            t.abs().powf(-(2.0 * kf - 1.0) / (kf - 2.0))
        }
        _ => (-1.5 * model.kappa * t.abs()).exp(),
    }
}

/// Evaluate psi = d/dt phi - (phi_dot, Delta phi + f-term) for given
/// parameter derivatives, plus the diagnostics that mirror the error bounds.
pub fn ansatz_error(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    p: &ParamState,
    dp: (f64, f64, f64),
    profiles: &ProfileSet,
    chi: &CutoffChi,
) -> Result<(State, AnsatzDiagnostics)> {
    let (dlam, dmu, db) = dp;
    let phi = build_phi(model, grid, p, profiles, chi)?;

    // first component: d/dt phi - phi_dot
    let lamw_uln_mu = Field::sample(grid, model.scaled_l2(|r| model.lam_w(r), p.mu));
    let lamw_uln_lam = Field::sample(grid, model.scaled_l2(|r| model.lam_w(r), p.lambda));
    let s_dt = correction_s_dt(model, grid, p, dp, profiles, chi);
    let psi1 = Field::new(
        grid.clone(),
        (0..grid.n())
            .map(|i| {
                -model.sigma * dmu * lamw_uln_mu.values[i] - dlam * lamw_uln_lam.values[i]
                    + s_dt.values[i]
                    + p.b * lamw_uln_lam.values[i]
            })
            .collect(),
    );

    // second component: d/dt phi_dot - (Delta phi + f-term)
    let lam0_uln = Field::sample(grid, model.scaled_l2(|r| model.lam0_lam_w(r), p.lambda));
    let lap = laplacian(model, grid);
    let neg_lap_phi = lap.apply(&phi.u.values);
    let psi2 = Field::new(
        grid.clone(),
        (0..grid.n())
            .map(|i| {
                let r = grid.nodes()[i];
                let dphi_dot =
                    -db * lamw_uln_lam.values[i] + p.b * dlam / p.lambda * lam0_uln.values[i];
                let fterm = if model.dim == 6 {
                    model.f(phi.u.values[i])
                } else {
                    model.f(phi.u.values[i]) / (r * r)
                };
                dphi_dot - (-neg_lap_phi[i] + fterm)
            })
            .collect(),
    );

    let rate = error_rate(model, p.t);
    // modulation-cancelled combinations from the error bounds
    let h_res = Field::new(
        grid.clone(),
        (0..grid.n())
            .map(|i| {
                psi1.values[i]
                    + model.sigma * dmu * lamw_uln_mu.values[i]
                    + (dlam - p.b) * lamw_uln_lam.values[i]
            })
            .collect(),
    );
    let l2_res = Field::new(
        grid.clone(),
        (0..grid.n())
            .map(|i| psi2.values[i] - p.b / p.lambda * (dlam - p.b) * lam0_uln.values[i])
            .collect(),
    );
    let h_part_ratio = model.norm_h_sq(&h_res).sqrt() / rate;
    let l2_part_ratio = model.norm_l2_sq(&l2_res).sqrt() / rate;

    // dual estimate of (-Delta - f'(phi)) psi1 against a bump dictionary
    let lpsi = {
        let neg_lap = lap.apply(&psi1.values);
        Field::new(
            grid.clone(),
            (0..grid.n())
                .map(|i| {
                    let r = grid.nodes()[i];
                    let fp = if model.dim == 6 {
                        model.f_prime(phi.u.values[i])
                    } else {
                        model.f_prime(phi.u.values[i]) / (r * r)
                    };
                    neg_lap[i] - fp * psi1.values[i]
                })
                .collect(),
        )
    };
    let mut dual = 0.0f64;
    for c in [p.lambda, 3.0 * p.lambda, 0.3, 1.0, 3.0] {
        let bump = Bump { a: 0.5 * c, b: 2.0 * c };
        let bf = Field::sample(grid, |r| bump.eval(r));
        let bn = model.norm_h_sq(&bf).sqrt();
        if bn > 0.0 {
            dual = dual.max((lpsi.pair(&bf) / bn).abs());
        }
    }

    let s = correction_s(model, grid, p, profiles, chi);
    let diag = AnsatzDiagnostics {
        rate,
        h_part_ratio,
        l2_part_ratio,
        dual_estimate_ratio: dual / rate,
        s_norm: model.norm_h_sq(&s).sqrt(),
    };
    Ok((State::new(psi1, psi2), diag))
}
