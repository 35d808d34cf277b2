//! The three models: nonlinearities, bubbles, scaling generators and energy.
//!
//! NLW6 is the focusing energy-critical wave equation in six space
//! dimensions, YM4 the radial Yang-Mills equation in four dimensions
//! (reduced to a 2d radial measure), WM(k) the k-equivariant wave map to the
//! sphere with k >= 3. Bubble derivatives are closed forms, not finite
//! differences: they enter near-cancelling identities downstream.

use crate::error::{Error, Result};
use crate::grid::{Field, RadialGrid, State};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelId {
    Nlw6,
    Ym4,
    Wm(u32),
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelId::Nlw6 => write!(f, "nlw6"),
            ModelId::Ym4 => write!(f, "ym4"),
            ModelId::Wm(k) => write!(f, "wm:{k}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub id: ModelId,
    /// Dimension of the radial measure (6 or 2).
    pub dim: usize,
    /// Sign of the large bubble in the two-bubble configuration.
    pub sigma: f64,
    /// Concentration rate constant.
    pub kappa: f64,
    /// Exponent of the energy-critical scaling v_l = l^-a v(r/l).
    pub scale_pow_h: f64,
    /// Exponent of the companion L2-critical scaling.
    pub scale_pow_l2: f64,
    /// Strength of the 1/r^2 angular term (None for NLW6).
    pub equivariance: Option<f64>,
}

/// stable 1/(r^k + r^-k)
fn inv_rk_sum(r: f64, k: f64) -> f64 {
    let t = if r <= 1.0 { r.powf(k) } else { r.powf(-k) };
    t / (1.0 + t * t)
}


impl ModelSpec {
    pub fn new(id: ModelId) -> Result<Self> {
        match id {
            ModelId::Nlw6 => Ok(ModelSpec {
                id,
                dim: 6,
                sigma: 1.0,
                kappa: (5.0f64 / 4.0).sqrt(),
                scale_pow_h: 2.0,
                scale_pow_l2: 3.0,
                equivariance: None,
            }),
            ModelId::Ym4 => Ok(ModelSpec {
                id,
                dim: 2,
                sigma: -1.0,
                kappa: 2.0 * 3.0f64.sqrt(),
                scale_pow_h: 0.0,
                scale_pow_l2: 1.0,
                equivariance: Some(2.0),
            }),
            ModelId::Wm(k) => {
                if k < 3 {
                    // the k = 2 class behaves like Yang-Mills and is not wired up
                    return Err(Error::UnsupportedModel(format!(
                        "wave maps need equivariance k >= 3 (got {k}); for k = 2 use ym4"
                    )));
                }
                let kf = k as f64;
                let kappa = (kf - 2.0) / 2.0 * (8.0 * kf / PI * (PI / kf).sin()).powf(1.0 / kf);
                Ok(ModelSpec {
                    id,
                    dim: 2,
                    sigma: -1.0,
                    kappa,
                    scale_pow_h: 0.0,
                    scale_pow_l2: 1.0,
                    equivariance: Some(kf),
                })
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "nlw6" => ModelSpec::new(ModelId::Nlw6),
            "ym4" => ModelSpec::new(ModelId::Ym4),
            _ => {
                if let Some(k) = s.strip_prefix("wm:") {
                    let k: u32 = k
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad model id {s}")))?;
                    ModelSpec::new(ModelId::Wm(k))
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown model id {s:?} (expected nlw6 | ym4 | wm:k)"
                    )))
                }
            }
        }
    }

    // ---- ground state and scaling generators (closed forms)

    pub fn w(&self, r: f64) -> f64 {
        match self.id {
            ModelId::Nlw6 => {
                let rho = r * r / 24.0;
                (1.0 + rho).powi(-2)
            }
            ModelId::Ym4 => 2.0 * r * r / (1.0 + r * r),
            ModelId::Wm(k) => 2.0 * r.powf(k as f64).atan(),
        }
    }

    pub fn w_prime(&self, r: f64) -> f64 {
        match self.id {
            ModelId::Nlw6 => {
                let rho = r * r / 24.0;
                -(r / 6.0) * (1.0 + rho).powi(-3)
            }
            ModelId::Ym4 => 4.0 * r / (1.0 + r * r).powi(2),
            // W' = LamW / r since LamW = r W'
            ModelId::Wm(k) => 2.0 * (k as f64) / r * inv_rk_sum(r, k as f64),
        }
    }

    /// Generator of the energy-critical scaling applied to W.
    pub fn lam_w(&self, r: f64) -> f64 {
        match self.id {
            ModelId::Nlw6 => {
                let rho = r * r / 24.0;
                2.0 * (1.0 - rho) * (1.0 + rho).powi(-3)
            }
            ModelId::Ym4 => {
                let s = r / (1.0 + r * r);
                4.0 * s * s
            }
            ModelId::Wm(k) => 2.0 * (k as f64) * inv_rk_sum(r, k as f64),
        }
    }

    pub fn lam_w_prime(&self, r: f64) -> f64 {
        match self.id {
            ModelId::Nlw6 => {
                let rho = r * r / 24.0;
                (r / 3.0) * (rho - 2.0) * (1.0 + rho).powi(-4)
            }
            ModelId::Ym4 => 8.0 * r * (1.0 - r * r) / (1.0 + r * r).powi(3),
            ModelId::Wm(k) => {
                let kf = k as f64;
                // d/dr 2k/(r^k+r^-k) = -(2k^2/r) (r^k - r^-k) / (r^k+r^-k)^2
                let t = if r <= 1.0 { r.powf(kf) } else { r.powf(-kf) };
                if t == 0.0 {
                    return 0.0;
                }
                // rises below the core radius, falls above it
                let sgn = if r <= 1.0 { 1.0 } else { -1.0 };
                // |r^k - r^-k| / (r^k + r^-k)^2 = t (1 - t^2) / (1 + t^2)^2
                let mag = t * (1.0 - t * t) / (1.0 + t * t).powi(2);
                sgn * 2.0 * kf * kf / r * mag
            }
        }
    }

    /// Composition of both scaling generators applied to W.
    pub fn lam0_lam_w(&self, r: f64) -> f64 {
        match self.id {
            ModelId::Nlw6 => {
                let rho = r * r / 24.0;
                2.0 * (rho * rho - 8.0 * rho + 3.0) * (1.0 + rho).powi(-4)
            }
            ModelId::Ym4 => 4.0 * r * r * (3.0 - r * r) / (1.0 + r * r).powi(3),
            ModelId::Wm(_) => self.lam_w(r) + r * self.lam_w_prime(r),
        }
    }

    // ---- nonlinearity

    pub fn f(&self, u: f64) -> f64 {
        match self.id {
            ModelId::Nlw6 => u.abs() * u,
            ModelId::Ym4 => -4.0 * u * (1.0 - u) * (1.0 - 0.5 * u),
            ModelId::Wm(k) => {
                let kf = k as f64;
                -0.5 * kf * kf * (2.0 * u).sin()
            }
        }
    }

    pub fn f_prime(&self, u: f64) -> f64 {
        match self.id {
            ModelId::Nlw6 => 2.0 * u.abs(),
            ModelId::Ym4 => 2.0 - 6.0 * (u - 1.0) * (u - 1.0),
            ModelId::Wm(k) => {
                let kf = k as f64;
                -kf * kf * (2.0 * u).cos()
            }
        }
    }

    /// Antiderivative F with F(0) = 0.
    pub fn big_f(&self, u: f64) -> f64 {
        match self.id {
            ModelId::Nlw6 => u.abs().powi(3) / 3.0,
            ModelId::Ym4 => -2.0 * u * u + 2.0 * u * u * u - 0.5 * u * u * u * u,
            ModelId::Wm(k) => {
                let kf = k as f64;
                let s = u.sin();
                -0.5 * kf * kf * s * s
            }
        }
    }

    /// Potential of the linearized operator L = -Delta + V around W.
    pub fn lin_potential(&self, r: f64) -> f64 {
        match self.id {
            ModelId::Nlw6 => -2.0 * self.w(r),
            // f'(W) = -4 + 6 LamW, so -f'(W)/r^2 = (4 - 6 LamW)/r^2
            ModelId::Ym4 => (4.0 - 6.0 * self.lam_w(r)) / (r * r),
            ModelId::Wm(k) => {
                let kf = k as f64;
                let s = inv_rk_sum(r, kf); // 1/(r^k+r^-k)
                kf * kf * (1.0 - 8.0 * s * s) / (r * r)
            }
        }
    }

    // ---- scalings

    /// Energy-critical rescaling of a profile: l^-a f(r/l).
    pub fn scaled_h<'a>(&self, f: impl Fn(f64) -> f64 + 'a, lambda: f64) -> impl Fn(f64) -> f64 + 'a {
        let a = self.scale_pow_h;
        move |r| lambda.powf(-a) * f(r / lambda)
    }

    /// Companion rescaling for velocities: l^-b f(r/l).
    pub fn scaled_l2<'a>(&self, f: impl Fn(f64) -> f64 + 'a, lambda: f64) -> impl Fn(f64) -> f64 + 'a {
        let b = self.scale_pow_l2;
        move |r| lambda.powf(-b) * f(r / lambda)
    }

    // ---- bubble sampling

    pub fn bubble(&self, grid: &Arc<RadialGrid>, lambda: f64) -> Result<Field> {
        self.check_scale(lambda)?;
        Ok(Field::sample(grid, self.scaled_h(|r| self.w(r), lambda)))
    }

    /// LamW at scale lambda with the energy-critical scaling.
    pub fn bubble_lam(&self, grid: &Arc<RadialGrid>, lambda: f64) -> Result<Field> {
        self.check_scale(lambda)?;
        Ok(Field::sample(grid, self.scaled_h(|r| self.lam_w(r), lambda)))
    }

    /// Lam0 LamW at scale lambda with the L2-critical scaling.
    pub fn bubble_lam0_lam(&self, grid: &Arc<RadialGrid>, lambda: f64) -> Result<Field> {
        self.check_scale(lambda)?;
        Ok(Field::sample(grid, self.scaled_l2(|r| self.lam0_lam_w(r), lambda)))
    }

    fn check_scale(&self, lambda: f64) -> Result<()> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("scale must be positive, got {lambda}")))
        }
    }

    // ---- energy and norms

    /// Energy density integrand (without the angular factor and measure).
    fn energy_density(&self, r: f64, u: f64, du: f64, v: f64) -> f64 {
        match self.dim {
            6 => 0.5 * v * v + 0.5 * du * du - self.big_f(u),
            _ => 0.5 * v * v + 0.5 * du * du - self.big_f(u) / (r * r),
        }
    }

    /// Conserved energy of a state by quadrature. The boolean flags a tail
    /// contribution above 1e-10 of the total (truncation-sensitive input).
    pub fn energy(&self, s: &State) -> (f64, bool) {
        let grid = s.grid();
        let du = grid.derivative(&s.u.values);
        let dens: Vec<f64> = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &r)| self.energy_density(r, s.u.values[i], du[i], s.v.values[i]))
            .collect();
        let (val, frac) = grid.integrate_semi_infinite(&dens);
        (val, frac > 1e-10)
    }

    /// Energy-space norm ||(u, v)||: the critical Sobolev part plus L2.
    pub fn norm(&self, s: &State) -> f64 {
        (self.norm_h_sq(&s.u) + self.norm_l2_sq(&s.v)).sqrt()
    }

    pub fn norm_h_sq(&self, u: &Field) -> f64 {
        let grid = &u.grid;
        let du = grid.derivative(&u.values);
        match self.equivariance {
            None => {
                let dens: Vec<f64> = du.iter().map(|d| d * d).collect();
                grid.integrate(&dens)
            }
            Some(k) => {
                let dens: Vec<f64> = grid
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| du[i] * du[i] + (k * u.values[i] / r).powi(2))
                    .collect();
                grid.integrate(&dens)
            }
        }
    }

    pub fn norm_l2_sq(&self, v: &Field) -> f64 {
        let dens: Vec<f64> = v.values.iter().map(|x| x * x).collect();
        v.grid.integrate(&dens)
    }

    /// Residual of the static equation for the sampled bubble, relative to
    /// the size of its stiffest term; uses analytic derivatives so it tests
    /// the closed forms, not the discretization.
    pub fn stationarity_residual(&self, r: f64) -> f64 {
        // second derivative of W, closed form via the first derivatives
        let h = r * 1e-5;
        let wpp = (self.w_prime(r + h) - self.w_prime(r - h)) / (2.0 * h);
        let lap = wpp + (self.dim as f64 - 1.0) / r * self.w_prime(r);
        let f = match self.dim {
            6 => self.f(self.w(r)),
            _ => self.f(self.w(r)) / (r * r),
        };
        lap + f
    }

    /// Rayleigh-type quotient defining kappa^2 for NLW6, by quadrature.
    pub fn kappa_from_fredholm(&self, grid: &Arc<RadialGrid>) -> Result<f64> {
        if self.id != ModelId::Nlw6 {
            return Err(Error::UnsupportedModel(self.id.to_string()));
        }
        if grid.r_max() < 50.0 {
            return Err(Error::InvalidArgument(
                "kappa quadrature wants r_max >= 50".into(),
            ));
        }
        let num: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&r| self.lam_w(r) * self.f_prime(self.w(r)))
            .collect();
        let den: Vec<f64> = grid.nodes().iter().map(|&r| self.lam_w(r).powi(2)).collect();
        let (n, _) = grid.integrate_semi_infinite(&num);
        let (d, _) = grid.integrate_semi_infinite(&den);
        Ok(-n / d)
    }

    /// Two routes to the wave-map bubble interaction integral; both equal
    /// 8 k^2 in closed form.
    pub fn wm_interaction_identity(k: u32, grid: &Arc<RadialGrid>) -> Result<(f64, f64)> {
        let model = ModelSpec::new(ModelId::Wm(k))?;
        let kf = k as f64;
        let lhs_int: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&r| {
                let s = inv_rk_sum(r, kf);
                model.lam_w(r) * 16.0 * kf * kf * r.powf(kf - 2.0) * s * s
            })
            .collect();
        let rhs_int: Vec<f64> = grid.nodes().iter().map(|&r| model.lam_w(r).powi(2)).collect();
        // plain radial integrals (no angular factor), tail-completed
        let (lhs, _) = grid.integrate_semi_infinite(&lhs_int);
        let (rhs, _) = grid.integrate_semi_infinite(&rhs_int);
        let lhs = lhs / grid.angular;
        let rhs = rhs / grid.angular * (4.0 * kf * kf / PI) * (PI / kf).sin();
        Ok((lhs, rhs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridKind};
    use crate::num::rel_err;

    fn fd_check(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, pts: &[f64], tol: f64) {
        for &r in pts {
            let h = 1e-5 * r.max(1e-3);
            let fd = (f(r + h) - f(r - h)) / (2.0 * h);
            assert!(
                (fd - df(r)).abs() <= tol * (1.0 + df(r).abs()),
                "derivative mismatch at r={r}: fd {fd} vs {}",
                df(r)
            );
        }
    }

    #[test]
    fn kappa_constants() {
        assert!(rel_err(ModelSpec::new(ModelId::Nlw6).unwrap().kappa, 1.25f64.sqrt()) < 1e-15);
        assert!(rel_err(ModelSpec::new(ModelId::Ym4).unwrap().kappa, 2.0 * 3.0f64.sqrt()) < 1e-15);
        let wm3 = ModelSpec::new(ModelId::Wm(3)).unwrap();
        let expect = 0.5 * (24.0 / PI * (PI / 3.0).sin()).powf(1.0 / 3.0);
        assert!(rel_err(wm3.kappa, expect) < 1e-15);
    }

    #[test]
    fn bubble_values_at_reference_points() {
        let nlw = ModelSpec::new(ModelId::Nlw6).unwrap();
        assert!(rel_err(nlw.w(1e-9), 1.0) < 1e-12);
        assert!(nlw.lam_w(24.0f64.sqrt()).abs() < 1e-14);

        let ym = ModelSpec::new(ModelId::Ym4).unwrap();
        assert!(rel_err(ym.w(1.0), 1.0) < 1e-15);
        assert!(rel_err(ym.lam_w(1.0), 1.0) < 1e-15);
        assert!(ym.lam0_lam_w(3.0f64.sqrt()).abs() < 1e-14);

        let wm = ModelSpec::new(ModelId::Wm(3)).unwrap();
        assert!(rel_err(wm.w(1.0), PI / 2.0) < 1e-15);
        assert!(rel_err(wm.lam_w(1.0), 3.0) < 1e-15);
    }

    #[test]
    fn nonlinearity_spot_values() {
        let nlw = ModelSpec::new(ModelId::Nlw6).unwrap();
        assert_eq!(nlw.f(-2.0), -4.0);
        assert_eq!(nlw.f_prime(-2.0), 4.0);
        let ym = ModelSpec::new(ModelId::Ym4).unwrap();
        // f'(W) + 4 = 6 LamW pointwise
        for r in [0.1, 0.7, 1.0, 2.5, 9.0] {
            assert!(
                (ym.f_prime(ym.w(r)) + 4.0 - 6.0 * ym.lam_w(r)).abs() < 1e-13,
                "at r={r}"
            );
        }
        let wm = ModelSpec::new(ModelId::Wm(4)).unwrap();
        for r in [0.2, 1.0, 3.0] {
            let k = 4.0f64;
            let s = inv_rk_sum(r, k);
            let expect = -k * k * (1.0 - 8.0 * s * s);
            assert!((wm.f_prime(wm.w(r)) - expect).abs() < 1e-12, "at r={r}");
        }
    }

    #[test]
    fn closed_form_derivatives_match_finite_differences() {
        let pts = [0.05, 0.3, 1.0, 2.4, 7.0, 20.0];
        for id in [ModelId::Nlw6, ModelId::Ym4, ModelId::Wm(3), ModelId::Wm(5)] {
            let m = ModelSpec::new(id).unwrap();
            fd_check(|r| m.w(r), |r| m.w_prime(r), &pts, 1e-7);
            fd_check(|r| m.lam_w(r), |r| m.lam_w_prime(r), &pts, 1e-7);
            // Lam0 LamW must match (c + r d/dr) LamW with c = 3 (d = 6) or 1 (d = 2)
            let c = if m.dim == 6 { 3.0 } else { 1.0 };
            for &r in &pts {
                let v = c * m.lam_w(r) + r * m.lam_w_prime(r);
                assert!((v - m.lam0_lam_w(r)).abs() < 1e-11, "{id:?} at {r}");
            }
        }
    }

    #[test]
    fn lam_w_is_minus_scale_derivative_of_bubble() {
        for id in [ModelId::Nlw6, ModelId::Ym4, ModelId::Wm(3)] {
            let m = ModelSpec::new(id).unwrap();
            let eps = 1e-6;
            for r in [0.3, 1.0, 4.0] {
                let wp = m.scaled_h(|x| m.w(x), 1.0 + eps)(r);
                let wmi = m.scaled_h(|x| m.w(x), 1.0 - eps)(r);
                let fd = -(wp - wmi) / (2.0 * eps);
                assert!((fd - m.lam_w(r)).abs() < 1e-6, "{id:?} r={r}: {fd}");
            }
        }
    }

    #[test]
    fn stationarity_residual_small() {
        for id in [ModelId::Nlw6, ModelId::Ym4, ModelId::Wm(3), ModelId::Wm(6)] {
            let m = ModelSpec::new(id).unwrap();
            for r in [0.2, 0.9, 1.7, 6.0] {
                assert!(m.stationarity_residual(r).abs() < 1e-5, "{id:?} r={r}");
            }
        }
    }

    #[test]
    fn wm_requires_k_at_least_3() {
        assert!(ModelSpec::new(ModelId::Wm(2)).is_err());
        assert!(ModelSpec::parse("wm:2").is_err());
        assert!(ModelSpec::parse("wm:3").is_ok());
    }

    #[test]
    fn parse_ids() {
        assert_eq!(ModelSpec::parse("nlw6").unwrap().id, ModelId::Nlw6);
        assert_eq!(ModelSpec::parse("ym4").unwrap().id, ModelId::Ym4);
        assert_eq!(ModelSpec::parse("wm:4").unwrap().id, ModelId::Wm(4));
        assert!(ModelSpec::parse("nlw5").is_err());
    }

    #[test]
    fn energy_scale_invariance() {
        let ym = ModelSpec::new(ModelId::Ym4).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-6, 100.0, 8192, 2).unwrap();
        let base = {
            let s = State::new(ym.bubble(&grid, 1.0).unwrap(), Field::zeros(&grid));
            ym.energy(&s).0
        };
        for lam in [0.25, 1.0, 4.0] {
            let s = State::new(ym.bubble(&grid, lam).unwrap(), Field::zeros(&grid));
            let (e, _) = ym.energy(&s);
            assert!(rel_err(e, base) < 1e-6, "lambda={lam}: {e} vs {base}");
        }
    }

    #[test]
    fn rejects_nonpositive_scale() {
        let ym = ModelSpec::new(ModelId::Ym4).unwrap();
        let grid = make_grid(GridKind::Uniform, 0.01, 10.0, 64, 2).unwrap();
        assert!(ym.bubble(&grid, 0.0).is_err());
        assert!(ym.bubble(&grid, -1.0).is_err());
    }

    #[test]
    fn kappa_quotient_homogeneous() {
        // scale invariance of the quotient: both slots scale together, so
        // doubling LamW leaves the value unchanged; spot check via direct sums
        let nlw = ModelSpec::new(ModelId::Nlw6).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-6, 100.0, 4096, 6).unwrap();
        let lam: Vec<f64> = grid.nodes().iter().map(|&r| nlw.lam_w(r)).collect();
        let fpw: Vec<f64> = grid.nodes().iter().map(|&r| nlw.f_prime(nlw.w(r))).collect();
        let q = |s: f64| {
            let num: Vec<f64> = lam.iter().zip(&fpw).map(|(a, b)| s * a * b).collect();
            let den: Vec<f64> = lam.iter().map(|a| (s * a) * (s * a)).collect();
            let (n, _) = grid.integrate_semi_infinite(&num);
            let (d, _) = grid.integrate_semi_infinite(&den);
            -n * s / d
        };
        assert!(rel_err(q(1.0), q(2.0)) < 1e-12);
    }
}
