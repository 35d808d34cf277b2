//! Modulation: decompose an evolving state as phi(lambda, mu, b) + g with
//! the scales fixed by localizer orthogonality, and track the decomposition
//! along a run.

use crate::ansatz::{b_initial, b_rate, build_phi, error_rate, CutoffChi, ParamState};
use crate::error::{Error, Result};
use crate::functionals::{functionals_ijh, CutoffQ};
use crate::grid::{Field, State};
use crate::linop::{pair_z, pair_z_scale_derivative, LocalizerZ, SpectralData};
use crate::model::{ModelId, ModelSpec};
use crate::profiles::ProfileSet;
use serde::Serialize;
use std::fmt::Write as _;

/// Newton solve of the two orthogonality conditions
/// <Z_lambda, u - sigma W_mu - W_lambda> = <Z_mu, ...> = 0.
pub fn extract_params(
    model: &ModelSpec,
    u: &Field,
    guess: (f64, f64),
    z: &LocalizerZ,
) -> Result<(f64, f64)> {
    let grid = &u.grid;
    let (mut lam, mut mu) = guess;
    let mut converged = false;
    for _ in 0..20 {
        let wl = model.scaled_h(|r| model.w(r), lam);
        let wm = model.scaled_h(|r| model.w(r), mu);
        let h = Field::new(
            grid.clone(),
            grid.nodes()
                .iter()
                .zip(&u.values)
                .map(|(&r, &v)| v - model.sigma * wm(r) - wl(r))
                .collect(),
        );
        let r1 = pair_z(model, z, lam, &h);
        let r2 = pair_z(model, z, mu, &h);
        let lamw_l = Field::sample(grid, model.scaled_h(|r| model.lam_w(r), lam));
        let lamw_m = Field::sample(grid, model.scaled_h(|r| model.lam_w(r), mu));
        // d/d lambda of <Z_uln_lam, h>: localizer scale variation plus the
        // bubble moving inside h
        let j11 = pair_z(model, z, lam, &lamw_l) / lam - pair_z_scale_derivative(model, z, lam, &h);
        let j12 = model.sigma * pair_z(model, z, lam, &lamw_m) / mu;
        let j21 = pair_z(model, z, mu, &lamw_l) / lam;
        let j22 =
            model.sigma * pair_z(model, z, mu, &lamw_m) / mu - pair_z_scale_derivative(model, z, mu, &h);
        // diagonal dominance in the relative-change metric
        if (j11 * lam).abs() <= (j12 * mu).abs() || (j22 * mu).abs() <= (j21 * lam).abs() {
            return Err(Error::DegenerateModulation);
        }
        let det = j11 * j22 - j12 * j21;
        let dl = -(r1 * j22 - r2 * j12) / det;
        let dm = -(j11 * r2 - j21 * r1) / det;
        let step = 1.0f64.min(0.4 * lam / dl.abs().max(1e-300)).min(0.4 * mu / dm.abs().max(1e-300));
        lam += step * dl;
        mu += step * dm;
        if !(lam > 0.0 && mu > 0.0 && lam.is_finite() && mu.is_finite()) {
            return Err(Error::ModulationFailure(20));
        }
        if dl.abs() < 1e-12 * lam && dm.abs() < 1e-12 * mu {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ModulationFailure(20));
    }
    Ok((lam, mu))
}

/// Eigen-coefficients of the error pair against the rescaled covectors.
pub fn eigen_coeffs(
    model: &ModelSpec,
    spectral: &SpectralData,
    g: &State,
    lambda: f64,
    mu: f64,
) -> (f64, f64, f64, f64) {
    let grid = g.grid();
    let a1p = spectral.pair_alpha(&spectral.alpha_pair(model, grid, lambda, 1.0), g);
    let a1m = spectral.pair_alpha(&spectral.alpha_pair(model, grid, lambda, -1.0), g);
    let a2p = spectral.pair_alpha(&spectral.alpha_pair(model, grid, mu, 1.0), g);
    let a2m = spectral.pair_alpha(&spectral.alpha_pair(model, grid, mu, -1.0), g);
    (a1p, a1m, a2p, a2m)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrackSample {
    pub t: f64,
    pub lambda: f64,
    pub mu: f64,
    pub b: f64,
    pub a1_plus: f64,
    pub a1_minus: f64,
    pub a2_plus: f64,
    pub a2_minus: f64,
    pub g_norm: f64,
    pub i_fun: f64,
    pub j_fun: f64,
    pub h_fun: f64,
    /// localizer pairing against g at the small scale (zero by construction)
    pub z_pair: f64,
    /// ||g|| divided by the bootstrap rate
    pub g_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulationTrack {
    pub samples: Vec<TrackSample>,
    /// time at which the state left the eta-tube, if it did
    pub off_trajectory: Option<f64>,
}

impl ModulationTrack {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "t,lambda,mu,b,a1_plus,a1_minus,a2_plus,a2_minus,g_norm,i_fun,j_fun,h_fun,z_pair,g_ratio\n",
        );
        for x in &self.samples {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                x.t, x.lambda, x.mu, x.b, x.a1_plus, x.a1_minus, x.a2_plus, x.a2_minus,
                x.g_norm, x.i_fun, x.j_fun, x.h_fun, x.z_pair, x.g_ratio
            );
        }
        s
    }

    /// finite-difference lambda'(t) samples (midpoint times)
    pub fn lambda_rate(&self) -> Vec<(f64, f64)> {
        self.samples
            .windows(2)
            .map(|w| {
                let dt = w[1].t - w[0].t;
                (0.5 * (w[0].t + w[1].t), (w[1].lambda - w[0].lambda) / dt)
            })
            .collect()
    }
}

/// Off-trajectory tube width in the critical norm.
pub const ETA_TUBE: f64 = 0.2;

/// Drive the decomposition over recorded snapshots. b(t) is carried by
/// quadrature of the parameter equation, not extracted from data.
#[allow(clippy::too_many_arguments)]
pub fn track(
    model: &ModelSpec,
    snapshots: &[(f64, State)],
    profiles: &ProfileSet,
    spectral: Option<&SpectralData>,
    z: &LocalizerZ,
    q: Option<&CutoffQ>,
    guess0: (f64, f64),
) -> Result<ModulationTrack> {
    let chi = CutoffChi;
    let mut samples = Vec::with_capacity(snapshots.len());
    let mut guess = guess0;
    let mut b = f64::NAN;
    let mut prev: Option<(f64, f64, f64)> = None; // (t, lambda, mu)
    let mut off_trajectory = None;
    for (t, state) in snapshots {
        let (lam, mu) = extract_params(model, &state.u, guess, z)?;
        guess = (lam, mu);
        if b.is_nan() {
            b = b_initial(model, lam);
        } else if let Some((tp, lp, mp)) = prev {
            // trapezoid on b' = b_rate(lambda, mu)
            b += 0.5 * (t - tp) * (b_rate(model, lp, mp) + b_rate(model, lam, mu));
        }
        prev = Some((*t, lam, mu));
        let p = ParamState {
            t: *t,
            lambda: lam,
            mu,
            b,
        };
        let phi = build_phi(model, state.grid(), &p, profiles, &chi)?;
        let g = State::new(
            Field::new(
                state.grid().clone(),
                state
                    .u
                    .values
                    .iter()
                    .zip(&phi.u.values)
                    .map(|(a, b)| a - b)
                    .collect(),
            ),
            Field::new(
                state.grid().clone(),
                state
                    .v
                    .values
                    .iter()
                    .zip(&phi.v.values)
                    .map(|(a, b)| a - b)
                    .collect(),
            ),
        );
        let g_norm = model.norm(&g);
        // eta-tube check on the bubble part alone
        let tube = {
            let wl = model.scaled_h(|r| model.w(r), lam);
            let wm = model.scaled_h(|r| model.w(r), mu);
            let h = Field::new(
                state.grid().clone(),
                state
                    .grid()
                    .nodes()
                    .iter()
                    .zip(&state.u.values)
                    .map(|(&r, &v)| v - model.sigma * wm(r) - wl(r))
                    .collect(),
            );
            model.norm_h_sq(&h).sqrt()
        };
        let (a1p, a1m, a2p, a2m) = match spectral {
            Some(sp) if model.id == ModelId::Nlw6 => eigen_coeffs(model, sp, &g, lam, mu),
            _ => (0.0, 0.0, 0.0, 0.0),
        };
        let (i_fun, j_fun, h_fun) = match q {
            Some(qq) => {
                let f = functionals_ijh(model, &phi, &g, b, lam, qq);
                (f.i_fun, f.j_fun, f.h_fun)
            }
            None => (0.0, 0.0, 0.0),
        };
        samples.push(TrackSample {
            t: *t,
            lambda: lam,
            mu,
            b,
            a1_plus: a1p,
            a1_minus: a1m,
            a2_plus: a2p,
            a2_minus: a2m,
            g_norm,
            i_fun,
            j_fun,
            h_fun,
            z_pair: pair_z(model, z, lam, &g.u),
            g_ratio: g_norm / error_rate(model, *t),
        });
        if tube >= ETA_TUBE {
            off_trajectory = Some(*t);
            break;
        }
    }
    Ok(ModulationTrack {
        samples,
        off_trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridKind};
    use crate::linop::{build_z, negative_eigenpair, Bump};
    use crate::num::rel_err;
    use std::sync::Arc;

    fn d2_setup(id: ModelId) -> (ModelSpec, Arc<crate::grid::RadialGrid>, LocalizerZ) {
        let model = ModelSpec::new(id).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-5, 60.0, 6000, 2).unwrap();
        let z = build_z(&model, &grid, None).unwrap();
        (model, grid, z)
    }

    #[test]
    fn exact_two_bubble_recovered() {
        let (model, grid, z) = d2_setup(ModelId::Ym4);
        let (lam0, mu0) = (0.013, 1.07);
        let u = Field::sample(&grid, |r| {
            model.sigma * model.w(r / mu0) + model.w(r / lam0)
        });
        let (lam, mu) = extract_params(&model, &u, (0.02, 1.0), &z).unwrap();
        assert!((lam - lam0).abs() < 1e-10 * lam0, "lambda {lam}");
        assert!((mu - mu0).abs() < 1e-10 * mu0, "mu {mu}");
    }

    #[test]
    fn perturbation_shifts_parameters_proportionally() {
        let (model, grid, z) = d2_setup(ModelId::Ym4);
        let (lam0, mu0) = (0.01, 1.0);
        let bump = Bump { a: 0.004, b: 0.035 };
        let mk = |eps: f64| {
            Field::sample(&grid, |r| {
                model.sigma * model.w(r / mu0) + model.w(r / lam0) + eps * bump.eval(r)
            })
        };
        // finite-difference sensitivity of the extraction map
        let d = 1e-6;
        let (lp, _) = extract_params(&model, &mk(d), (lam0, mu0), &z).unwrap();
        let sens = (lp - lam0) / d;
        let eps = 1e-4;
        let (lam, _) = extract_params(&model, &mk(eps), (lam0, mu0), &z).unwrap();
        let predicted = lam0 + sens * eps;
        assert!(
            (lam - predicted).abs() < 0.3 * (lam - lam0).abs().max(1e-12),
            "lambda {lam} predicted {predicted}"
        );
        assert!((lam - lam0).abs() < 10.0 * eps * lam0 / lam0.max(1.0));
    }

    #[test]
    fn basin_tolerates_20_percent_guess_error() {
        let (model, grid, z) = d2_setup(ModelId::Wm(3));
        let (lam0, mu0) = (0.02, 1.0);
        let u = Field::sample(&grid, |r| {
            model.sigma * model.w((r / mu0).powf(1.0)) + model.w(r / lam0)
        });
        let got = extract_params(&model, &u, (1.2 * lam0, 0.8 * mu0), &z);
        // recorded, not asserted tightly: it should simply converge
        let (lam, mu) = got.unwrap();
        assert!(rel_err(lam, lam0) < 1e-8 && rel_err(mu, mu0) < 1e-8);
    }

    #[test]
    fn gauge_consistency_with_build_phi() {
        let (model, grid, z) = d2_setup(ModelId::Ym4);
        let profiles = crate::profiles::profile_ym(&model, &grid, &z, 1e-3).unwrap();
        // with b = 0 the correction vanishes and the identity is exact
        let p = ParamState {
            t: -1.5,
            lambda: 0.015,
            mu: 0.97,
            b: 0.0,
        };
        let phi = build_phi(&model, &grid, &p, &profiles, &CutoffChi).unwrap();
        let (lam, mu) = extract_params(&model, &phi.u, (0.012, 1.05), &z).unwrap();
        assert!((lam - p.lambda).abs() < 1e-9, "lambda {lam}");
        assert!((mu - p.mu).abs() < 1e-9, "mu {mu}");
        // with b > 0 the small-scale orthogonality still pins lambda, while
        // the large-scale equation sees the O(b^2) tail of the correction
        let p2 = ParamState { b: 0.02, ..p };
        let phi2 = build_phi(&model, &grid, &p2, &profiles, &CutoffChi).unwrap();
        let (lam2, mu2) = extract_params(&model, &phi2.u, (0.012, 1.05), &z).unwrap();
        assert!((lam2 - p2.lambda).abs() < 1e-7, "lambda {lam2}");
        assert!((mu2 - p2.mu).abs() < 20.0 * p2.b * p2.b, "mu {mu2}");
    }

    #[test]
    fn scaling_equivariance_of_extraction() {
        let (model, grid, z) = d2_setup(ModelId::Ym4);
        let (lam0, mu0) = (0.01, 1.0);
        let s = 1.7;
        let u1 = Field::sample(&grid, |r| {
            model.sigma * model.w(r / mu0) + model.w(r / lam0) + 1e-3 * (-(r - 0.5).powi(2) * 30.0).exp()
        });
        let us = Field::sample(&grid, |r| {
            model.sigma * model.w(r / (s * mu0))
                + model.w(r / (s * lam0))
                + 1e-3 * (-((r / s) - 0.5).powi(2) * 30.0).exp()
        });
        let (l1, m1) = extract_params(&model, &u1, (lam0, mu0), &z).unwrap();
        let (l2, m2) = extract_params(&model, &us, (s * lam0, s * mu0), &z).unwrap();
        assert!(rel_err(l2, s * l1) < 1e-7, "{l2} vs {}", s * l1);
        assert!(rel_err(m2, s * m1) < 1e-7, "{m2} vs {}", s * m1);
    }

    #[test]
    fn eigen_coeffs_reference_values() {
        let model = ModelSpec::new(ModelId::Nlw6).unwrap();
        let spgrid = make_grid(GridKind::Uniform, 2e-3, 50.0, 8000, 6).unwrap();
        let sp = negative_eigenpair(&model, &spgrid).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-5, 80.0, 8192, 6).unwrap();
        let lam = 0.5;
        // g = Y+_lambda gives a1+ = 1, a1- = 0
        let g = sp.y_pair(&model, &grid, lam, 1.0);
        let (a1p, a1m, _, _) = eigen_coeffs(&model, &sp, &g, lam, 4.0);
        assert!((a1p - 1.0).abs() < 1e-6, "a1+ = {a1p}");
        assert!(a1m.abs() < 1e-6, "a1- = {a1m}");
        // g = (LamW_lambda, 0) pairs to ~<Y, LamW> = 0
        let g2 = State::new(
            Field::sample(&grid, model.scaled_h(|r| model.lam_w(r), lam)),
            Field::zeros(&grid),
        );
        let (b1p, _, _, _) = eigen_coeffs(&model, &sp, &g2, lam, 4.0);
        let scale = model.norm(&g2);
        assert!(b1p.abs() < 1e-5 * scale, "a1+ on kernel direction = {b1p}");
        // zero error has zero coefficients
        let z = State::zeros(&grid);
        let (c1, c2, c3, c4) = eigen_coeffs(&model, &sp, &z, lam, 4.0);
        assert_eq!((c1, c2, c3, c4), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn track_on_synthetic_sequence() {
        let model = ModelSpec::new(ModelId::Ym4).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-5, 60.0, 12000, 2).unwrap();
        let z = build_z(&model, &grid, None).unwrap();
        let profiles = crate::profiles::profile_ym(&model, &grid, &z, 1e-3).unwrap();
        let kap = model.kappa;
        // deep enough that the O(b^2) gauge coupling of the large-scale
        // orthogonality sits below the stated floor
        let t0 = -7.5 / kap;
        // synthetic snapshots exactly on the ansatz
        let chi = CutoffChi;
        let snaps: Vec<(f64, State)> = (0..12)
            .map(|i| {
                let t = t0 + 0.02 * i as f64;
                let lam = (-kap * t.abs()).exp() / kap;
                let b = (-kap * t.abs()).exp();
                let p = ParamState {
                    t,
                    lambda: lam,
                    mu: 1.0,
                    b,
                };
                (t, build_phi(&model, &grid, &p, &profiles, &chi).unwrap())
            })
            .collect();
        let lam0 = (-kap * t0.abs()).exp() / kap;
        let tr = track(&model, &snaps, &profiles, None, &z, None, (lam0, 1.0)).unwrap();
        assert!(tr.off_trajectory.is_none());
        // the first sample sits at the decomposition floor (the large-scale
        // orthogonality sees the O(b^2) tail of the correction profile);
        // later samples add the quadrature error of the reconstructed b
        assert!(tr.samples[0].g_norm < 1e-5, "g_norm(T) {}", tr.samples[0].g_norm);
        for s in &tr.samples {
            let lam_exact = (-kap * s.t.abs()).exp() / kap;
            assert!(rel_err(s.lambda, lam_exact) < 1e-6, "lambda at t={}", s.t);
            // the pairing floor is the cross-scale quadrature defect of the
            // profile orthogonality, entering at order b^2 / lambda
            let floor = s.b * s.b / s.lambda * 1e-2 + 1e-10 / s.lambda;
            assert!(s.z_pair.abs() < floor, "z_pair {} vs floor {floor}", s.z_pair);
            assert!(s.g_norm < 1e-5, "g_norm {}", s.g_norm);
        }
        let csv = tr.to_csv();
        assert!(csv.lines().count() == tr.samples.len() + 1);
    }
}
