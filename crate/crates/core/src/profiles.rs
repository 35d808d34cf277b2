//! Correction profiles P and Q.
//!
//! NLW6 and Yang-Mills have rational profiles written down in closed form;
//! the wave-map profiles come from inverting the linearized operator by
//! variation of constants, which is possible exactly when the right-hand
//! side is orthogonal to the kernel direction LamW.

use crate::error::{Error, Result};
use crate::grid::{Field, RadialGrid};
use crate::linop::{assemble_l, pair_z, LocalizerZ, RadialOp};
use crate::model::{ModelId, ModelSpec};
use crate::num::linear_fit;
use std::sync::Arc;

/// A correction profile: sampled values and first derivative on the build
/// grid. The derivative comes from the closed form (NLW6, YM) or from the
/// inversion itself (WM), never from finite differences.
#[derive(Debug, Clone)]
pub struct Profile {
    pub f: Field,
    pub df: Field,
}

impl Profile {
    pub fn eval(&self, r: f64) -> f64 {
        self.f.eval(r)
    }

    pub fn eval_prime(&self, r: f64) -> f64 {
        self.df.eval(r)
    }
}

#[derive(Debug, Clone)]
pub struct ProfileSet {
    /// absent for Yang-Mills, which only needs Q
    pub p: Option<Profile>,
    pub q: Profile,
    /// relative residuals of the defining identities under the assembled L
    pub res_p: f64,
    pub res_q: f64,
    /// localizer pairings after orthogonalization
    pub z_orth_p: f64,
    pub z_orth_q: f64,
}

fn interior_rel_residual(grid: &RadialGrid, res: &[f64], rhs: &[f64]) -> f64 {
    let w = grid.weights();
    let n = res.len();
    let num: f64 = (1..n - 1).map(|i| w[i] * res[i] * res[i]).sum();
    let den: f64 = (1..n - 1).map(|i| w[i] * rhs[i] * rhs[i]).sum();
    (num / den).sqrt()
}

fn check_identity(
    op: &RadialOp,
    profile: &[f64],
    rhs: &[f64],
    name: &'static str,
    tol: f64,
) -> Result<f64> {
    let lp = op.apply(profile);
    let res: Vec<f64> = lp.iter().zip(rhs).map(|(a, b)| a - b).collect();
    let rel = interior_rel_residual(&op.grid, &res, rhs);
    if rel > tol {
        return Err(Error::ProfileVerification {
            name,
            residual: rel,
            threshold: tol,
        });
    }
    Ok(rel)
}

// ---- closed forms for the NLW6 profiles, in the variable rho = r^2/24

fn nlw6_p_tilde(rho: f64) -> f64 {
    (1.0 + rho).powi(-3) * (1.0 - 10.0 * rho - 3.0 * rho * rho)
}

fn nlw6_p_tilde_drho(rho: f64) -> f64 {
    (1.0 + rho).powi(-4) * (3.0 * rho * rho + 14.0 * rho - 13.0)
}

fn nlw6_q_tilde(rho: f64) -> f64 {
    (1.0 + rho).powi(-3) * (1.0 + 11.0 * rho - 12.0 * rho * rho)
}

fn nlw6_q_tilde_drho(rho: f64) -> f64 {
    2.0 * (1.0 + rho).powi(-4) * (6.0 * rho * rho - 23.0 * rho + 4.0)
}

/// NLW6 correction profiles from the printed rational formulas, shifted by
/// multiples of LamW to satisfy the localizer orthogonality.
pub fn profiles_nlw6(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    z: &LocalizerZ,
    tol: f64,
) -> Result<ProfileSet> {
    if model.id != ModelId::Nlw6 {
        return Err(Error::UnsupportedModel(model.id.to_string()));
    }
    let op = assemble_l(model, grid);
    let lamw = Field::sample(grid, |r| model.lam_w(r));
    let lamw_p = Field::sample(grid, |r| model.lam_w_prime(r));
    let z_lamw = pair_z(model, z, 1.0, &lamw);

    let build = |val: fn(f64) -> f64, dval: fn(f64) -> f64| -> Profile {
        let f = Field::sample(grid, |r| val(r * r / 24.0));
        let df = Field::sample(grid, |r| dval(r * r / 24.0) * r / 12.0);
        Profile { f, df }
    };
    let mut p = build(nlw6_p_tilde, nlw6_p_tilde_drho);
    let mut q = build(nlw6_q_tilde, nlw6_q_tilde_drho);
    for (prof, _which) in [(&mut p, "P"), (&mut q, "Q")] {
        let c = pair_z(model, z, 1.0, &prof.f) / z_lamw;
        for i in 0..grid.n() {
            prof.f.values[i] -= c * lamw.values[i];
            prof.df.values[i] -= c * lamw_p.values[i];
        }
    }
    let kap2 = model.kappa * model.kappa;
    let rhs_p: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| kap2 * model.lam_w(r) + model.f_prime(model.w(r)))
        .collect();
    let rhs_q: Vec<f64> = grid.nodes().iter().map(|&r| -model.lam0_lam_w(r)).collect();
    let res_p = check_identity(&op, &p.f.values, &rhs_p, "resP", tol)?;
    let res_q = check_identity(&op, &q.f.values, &rhs_q, "resQ", tol)?;
    let z_orth_p = pair_z(model, z, 1.0, &p.f);
    let z_orth_q = pair_z(model, z, 1.0, &q.f);
    Ok(ProfileSet {
        p: Some(p),
        q,
        res_p,
        res_q,
        z_orth_p,
        z_orth_q,
    })
}

/// Yang-Mills Q profile from the rational seed r^4/(1+r^2)^2.
pub fn profile_ym(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    z: &LocalizerZ,
    tol: f64,
) -> Result<ProfileSet> {
    if model.id != ModelId::Ym4 {
        return Err(Error::UnsupportedModel(model.id.to_string()));
    }
    let op = assemble_l(model, grid);
    let lamw = Field::sample(grid, |r| model.lam_w(r));
    let lamw_p = Field::sample(grid, |r| model.lam_w_prime(r));
    let mut q = Profile {
        f: Field::sample(grid, |r| {
            let s = r * r / (1.0 + r * r);
            s * s
        }),
        df: Field::sample(grid, |r| 4.0 * r.powi(3) / (1.0 + r * r).powi(3)),
    };
    let c = pair_z(model, z, 1.0, &q.f) / pair_z(model, z, 1.0, &lamw);
    for i in 0..grid.n() {
        q.f.values[i] -= c * lamw.values[i];
        q.df.values[i] -= c * lamw_p.values[i];
    }
    let rhs_q: Vec<f64> = grid.nodes().iter().map(|&r| -model.lam0_lam_w(r)).collect();
    let res_q = check_identity(&op, &q.f.values, &rhs_q, "resQ", tol)?;
    let z_orth_q = pair_z(model, z, 1.0, &q.f);
    Ok(ProfileSet {
        p: None,
        q,
        res_p: 0.0,
        res_q,
        z_orth_p: 0.0,
        z_orth_q,
    })
}

/// Pointwise residual of the Yang-Mills seed identity, entirely in closed
/// form; vanishes to rounding.
pub fn ym_seed_identity_residual(r: f64) -> f64 {
    let one = 1.0 + r * r;
    let q = r.powi(4) / one.powi(2);
    let qp = 4.0 * r.powi(3) / one.powi(3);
    let qpp = 12.0 * r * r * (1.0 - r * r) / one.powi(4);
    let lamw = 4.0 * r * r / one.powi(2);
    let lq = -qpp - qp / r + (4.0 - 6.0 * lamw) * q / (r * r);
    let lam0 = 4.0 * r * r * (3.0 - r * r) / one.powi(3);
    lq + lam0
}

/// Pointwise residuals of the NLW6 profile identities in closed form.
pub fn nlw6_profile_identity_residuals(r: f64) -> (f64, f64) {
    let rho = r * r / 24.0;
    let w = (1.0 + rho).powi(-2);
    let lamw = 2.0 * (1.0 - rho) * (1.0 + rho).powi(-3);
    let lam0 = 2.0 * (rho * rho - 8.0 * rho + 3.0) * (1.0 + rho).powi(-4);
    // L g(rho) = -g'' rho/6 - g'/2 - 2 W g for radial profiles of rho
    let gpp_p = -6.0 * (1.0 + rho).powi(-5) * (rho * rho + 6.0 * rho - 11.0);
    let lp = -gpp_p * rho / 6.0 - nlw6_p_tilde_drho(rho) / 2.0 - 2.0 * w * nlw6_p_tilde(rho);
    let gpp_q = 2.0 * (1.0 + rho).powi(-5) * (-12.0 * rho * rho + 81.0 * rho - 39.0);
    let lq = -gpp_q * rho / 6.0 - nlw6_q_tilde_drho(rho) / 2.0 - 2.0 * w * nlw6_q_tilde(rho);
    (lp - (1.25 * lamw + 2.0 * w), lq + lam0)
}

// ------------------------------------------------------------ wave maps

/// Invert L U = V for the k-equivariant wave map by two nested variation-of-
/// constants integrals, then shift by LamW for localizer orthogonality.
/// Returns the profile (value and derivative) and leaves the Fredholm defect
/// check to the caller-facing wrapper below.
fn invert_once(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    z: &LocalizerZ,
    v: &Field,
) -> Result<Profile> {
    let lamw = Field::sample(grid, |r| model.lam_w(r));
    let lamw_p = Field::sample(grid, |r| model.lam_w_prime(r));
    // solvability gate, evaluated with the high-order quadrature
    let pairing: Vec<f64> = v.values.iter().zip(&lamw.values).map(|(a, b)| a * b).collect();
    let (ip, _) = grid.integrate_semi_infinite(&pairing);
    let defect = ip / (v.l2_norm() * lamw.l2_norm()).max(1e-300);
    if defect.abs() > 1e-8 {
        return Err(Error::FredholmCondition(defect));
    }
    // Remove the kernel component in the same quadrature the cumulative
    // integral uses, so the forward integral vanishes exactly at the far end
    // instead of feeding the growing branch of the homogeneous solution.
    let g_raw = grid.cumulative(&pairing);
    let kernel2: Vec<f64> = lamw.values.iter().map(|a| a * a).collect();
    let h_raw = grid.cumulative(&kernel2);
    let n = grid.n();
    let c = g_raw[n - 1] / h_raw[n - 1];
    let g: Vec<f64> = g_raw
        .iter()
        .zip(&h_raw)
        .map(|(a, b)| a - c * b)
        .collect();
    // first factor: (d/dr + 1/r + LamW'/LamW) U1 = -V, integrated exactly
    // against the r LamW weight; the minus makes the composition equal L
    let u1: Vec<f64> = g
        .iter()
        .zip(grid.nodes())
        .zip(&lamw.values)
        .map(|((gg, &r), lw)| -gg / (r * lw))
        .collect();
    if u1.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "variation-of-constants integrand overflowed".into(),
        ));
    }
    // T(r) = int_0^r U1/LamW d rho, plain dr integral with head completion
    let ratio: Vec<f64> = u1.iter().zip(&lamw.values).map(|(a, b)| a / b).collect();
    let r = grid.nodes();
    let mut t = vec![0.0; n];
    // head: ratio ~ C r near the origin
    t[0] = 0.5 * ratio[0] * r[0];
    for i in 0..n - 1 {
        t[i + 1] = t[i] + 0.5 * (r[i + 1] - r[i]) * (ratio[i] + ratio[i + 1]);
    }
    let uvals: Vec<f64> = t.iter().zip(&lamw.values).map(|(a, b)| a * b).collect();
    let duvals: Vec<f64> = (0..n)
        .map(|i| lamw_p.values[i] * t[i] + u1[i])
        .collect();
    let mut prof = Profile {
        f: Field::new(grid.clone(), uvals),
        df: Field::new(grid.clone(), duvals),
    };
    let zc = pair_z(model, z, 1.0, &prof.f) / pair_z(model, z, 1.0, &lamw);
    for i in 0..n {
        prof.f.values[i] -= zc * lamw.values[i];
        prof.df.values[i] -= zc * lamw_p.values[i];
    }
    Ok(prof)
}

/// Public Fredholm inversion for wave maps: checks the solvability condition,
/// inverts, orthogonalizes and verifies L U = V on the grid.
pub fn fredholm_invert_wm(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    z: &LocalizerZ,
    v: &Field,
    tol: f64,
) -> Result<(Profile, f64)> {
    let k = match model.id {
        ModelId::Wm(k) => k,
        _ => return Err(Error::UnsupportedModel(model.id.to_string())),
    };
    let _ = k;
    let prof = invert_once(model, grid, z, v)?;
    let op = assemble_l(model, grid);
    let lu = op.apply(&prof.f.values);
    let res: Vec<f64> = lu.iter().zip(&v.values).map(|(a, b)| a - b).collect();
    let rel = interior_rel_residual(grid, &res, &v.values);
    if rel > tol {
        return Err(Error::ProfileVerification {
            name: "fredholm",
            residual: rel,
            threshold: tol,
        });
    }
    Ok((prof, rel))
}

/// Both wave-map profiles: P for the interaction source, Q for the scale
/// acceleration source.
pub fn profiles_wm(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    z: &LocalizerZ,
    tol: f64,
) -> Result<ProfileSet> {
    let k = match model.id {
        ModelId::Wm(k) => k as f64,
        _ => return Err(Error::UnsupportedModel(model.id.to_string())),
    };
    let coeff = k / 2.0 * (2.0 * model.kappa / (k - 2.0)).powf(k);
    let v_p = Field::sample(grid, |r| {
        let t = if r <= 1.0 { r.powf(k) } else { r.powf(-k) };
        let s = t / (1.0 + t * t); // 1/(r^k + r^-k)
        coeff * model.lam_w(r) - 16.0 * k * k * r.powf(k - 2.0) * s * s
    });
    let v_q = Field::sample(grid, |r| -model.lam0_lam_w(r));
    let (p, res_p) = fredholm_invert_wm(model, grid, z, &v_p, tol)?;
    let (q, res_q) = fredholm_invert_wm(model, grid, z, &v_q, tol)?;
    let z_orth_p = pair_z(model, z, 1.0, &p.f);
    let z_orth_q = pair_z(model, z, 1.0, &q.f);
    Ok(ProfileSet {
        p: Some(p),
        q,
        res_p,
        res_q,
        z_orth_p,
        z_orth_q,
    })
}

/// Build the model's profile set.
pub fn build_profiles(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    z: &LocalizerZ,
    spectral_tol: f64,
) -> Result<ProfileSet> {
    match model.id {
        ModelId::Nlw6 => profiles_nlw6(model, grid, z, spectral_tol),
        ModelId::Ym4 => profile_ym(model, grid, z, spectral_tol),
        ModelId::Wm(_) => profiles_wm(model, grid, z, spectral_tol),
    }
}

/// Log-log slope of |f| over the radius window [a, b].
pub fn loglog_slope(f: &Field, a: f64, b: f64) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&r, &v) in f.grid.nodes().iter().zip(&f.values) {
        if r >= a && r <= b && v != 0.0 {
            xs.push(r.ln());
            ys.push(v.abs().ln());
        }
    }
    if xs.len() < 8 {
        return None;
    }
    Some(linear_fit(&xs, &ys).1)
}
