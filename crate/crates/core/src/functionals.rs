//! The localized virial machinery: the cutoff q, the operators A and A0,
//! the Pohozaev identity, the mixed energy-virial functionals I, J, H, and
//! discrete coercivity checks.
//!
//! The cutoff agrees with |x|^2/2 out to the plateau radius and flattens to
//! a constant far out, with all derivative bounds audited numerically. The
//! d = 6 family is the explicit rational profile glued by bump polynomials;
//! the d = 2 family descends logarithmically (the slope bound forces the
//! flattening to stretch over e^(2/c) in radius, which is why its support
//! radius is astronomically large yet still representable).

use crate::error::{Error, Result};
use crate::grid::{Field, RadialGrid, State};
use crate::linop::{assemble, constrained_smallest, inner_bc_for, laplacian, log_forms, LocalizerZ};
use crate::model::ModelSpec;
use crate::num::{count_below_penalized, SymTridiag};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QFamily {
    D6,
    D2,
}

/// quintic smoothstep: 1 for y <= 1, 0 for y >= 2; derivatives up to 4
fn chi5(y: f64, der: usize) -> f64 {
    let s = y - 1.0;
    if !(0.0..1.0).contains(&s) {
        return if der == 0 && s < 0.0 { 1.0 } else { 0.0 };
    }
    match der {
        0 => 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
        1 => -(30.0 * s * s - 60.0 * s * s * s + 30.0 * s * s * s * s),
        2 => -(60.0 * s - 180.0 * s * s + 120.0 * s * s * s),
        3 => -(60.0 - 360.0 * s + 360.0 * s * s),
        4 => -(-360.0 + 720.0 * s),
        _ => 0.0,
    }
}

/// e_j(y) = y^j chi(y) / j!, m-th derivative (Leibniz)
fn e_fun(j: usize, y: f64, m: usize) -> f64 {
    let jf: f64 = (1..=j).product::<usize>() as f64;
    let mut total = 0.0;
    for i in 0..=m.min(j) {
        // C(m, i) * j!/(j-i)! * y^(j-i) * chi^(m-i)
        let binom: f64 = {
            let mut b = 1.0;
            for t in 0..i {
                b = b * (m - t) as f64 / (t + 1) as f64;
            }
            b
        };
        let fall: f64 = (0..i).map(|t| (j - t) as f64).product();
        total += binom * fall * y.powi((j - i) as i32) * chi5(y, m - i);
    }
    total / jf
}

#[derive(Debug, Clone, Serialize)]
pub struct QAudit {
    /// recorded constants of the gradient/Laplacian bounds
    pub grad_over_r: f64,
    pub lap_bound: f64,
    /// worst convexity defect (must be >= -c)
    pub convexity_min: f64,
    /// worst one-sided bi-Laplacian bound r^2 * Delta^2 q (must be <= c)
    pub bilap_max: f64,
    /// d2 only: worst |r (q'/r)'|
    pub slope_log_max: f64,
    pub samples: usize,
}

/// The localized virial weight q_{c,R}(r) = R^2 q(r/R).
#[derive(Debug, Clone, Serialize)]
pub struct CutoffQ {
    pub family: QFamily,
    pub c: f64,
    /// physical plateau radius
    pub big_r: f64,
    /// glue radius in the pre-scale variable
    pub r0: f64,
    /// pre-scale radius past which q is constant
    pub support: f64,
    /// d2 taper data: (c1, x0, width, hermite coefficients)
    d2: Option<(f64, f64, f64, [f64; 6])>,
    pub audit: QAudit,
}

// ---- d6 base profile: q0(s) on s >= 1

fn q0_d6(s: f64, der: usize) -> f64 {
    match der {
        0 => 1.6 * s - 1.5 + 0.5 / (s * s) - 0.1 / s.powi(4),
        1 => 1.6 - s.powi(-3) + 0.4 * s.powi(-5),
        2 => 3.0 * s.powi(-4) - 2.0 * s.powi(-6),
        3 => -12.0 * s.powi(-5) + 12.0 * s.powi(-7),
        4 => 60.0 * s.powi(-6) - 84.0 * s.powi(-8),
        _ => 0.0,
    }
}

impl CutoffQ {
    /// pre-scale derivatives (q', q'', q''', q'''') at s
    fn derivs(&self, s: f64) -> [f64; 4] {
        match self.family {
            QFamily::D6 => {
                if s <= 1.0 {
                    [s, 1.0, 0.0, 0.0]
                } else if s <= self.r0 {
                    [q0_d6(s, 1), q0_d6(s, 2), q0_d6(s, 3), q0_d6(s, 4)]
                } else {
                    let y = s / self.r0 - 1.0;
                    let mut out = [0.0; 4];
                    for j in 1..=3 {
                        let cj = q0_d6(self.r0, j) * self.r0.powi(j as i32);
                        for (m, o) in out.iter_mut().enumerate() {
                            *o += cj * e_fun(j, y, m + 1) / self.r0.powi(m as i32 + 1);
                        }
                    }
                    out
                }
            }
            QFamily::D2 => {
                // q' = s phi(x), x = ln s; recover r-derivatives from the
                // log-representation
                let x = s.ln();
                let f0 = self.phi(x, 0);
                let f1 = self.phi(x, 1);
                let f2 = self.phi(x, 2);
                let f3 = self.phi(x, 3);
                let qp = s * f0;
                let qpp = f0 + f1;
                let qppp = (f2 + f1) / s;
                let qpppp = (f3 - f1) / (s * s);
                [qp, qpp, qppp, qpppp]
            }
        }
    }

    /// d2 slope function phi(x) = q'(e^x)/e^x and its x-derivatives
    fn phi(&self, x: f64, der: usize) -> f64 {
        let (c1, x0, w, h) = self.d2.expect("phi only for the d2 family");
        if x <= 0.0 {
            return if der == 0 { 1.0 } else { 0.0 };
        }
        if x <= x0 {
            let e1 = (-x).exp();
            let e2 = (-2.0 * x).exp();
            return match der {
                0 => 1.0 - c1 * x / 2.0 + c1 * (0.75 - e1 + 0.25 * e2),
                1 => -c1 / 2.0 + c1 * (e1 - 0.5 * e2),
                2 => c1 * (-e1 + e2),
                3 => c1 * (e1 - 2.0 * e2),
                _ => 0.0,
            };
        }
        if x >= x0 + w {
            return 0.0;
        }
        let s = (x - x0) / w;
        let powv = [1.0, s, s * s, s.powi(3), s.powi(4), s.powi(5)];
        match der {
            0 => (0..6).map(|i| h[i] * powv[i]).sum(),
            1 => (1..6).map(|i| i as f64 * h[i] * powv[i - 1]).sum::<f64>() / w,
            2 => (2..6)
                .map(|i| (i * (i - 1)) as f64 * h[i] * powv[i - 2])
                .sum::<f64>()
                / (w * w),
            3 => (3..6)
                .map(|i| (i * (i - 1) * (i - 2)) as f64 * h[i] * powv[i - 3])
                .sum::<f64>()
                / (w * w * w),
            _ => 0.0,
        }
    }

    // ---- physical evaluations (argument r, overall scale big_r)

    /// q'(r)
    pub fn qp(&self, r: f64) -> f64 {
        let s = r / self.big_r;
        self.big_r * self.derivs(s)[0]
    }

    /// q''(r)
    pub fn qpp(&self, r: f64) -> f64 {
        self.derivs(r / self.big_r)[1]
    }

    /// radial Laplacian of q in the given dimension
    pub fn lap(&self, r: f64, dim: usize) -> f64 {
        let s = r / self.big_r;
        let d = self.derivs(s);
        d[1] + (dim as f64 - 1.0) * d[0] / s
    }

    /// radial bi-Laplacian of q
    pub fn bilap(&self, r: f64, dim: usize) -> f64 {
        let s = r / self.big_r;
        let d = self.derivs(s);
        let g = dim as f64 - 1.0;
        let v = match dim {
            6 => d[3] + 2.0 * g * d[2] / s + 15.0 * d[1] / (s * s) - 15.0 * d[0] / (s * s * s),
            _ => d[3] + 2.0 * d[2] / s - d[1] / (s * s) + d[0] / (s * s * s),
        };
        v / (self.big_r * self.big_r)
    }

    /// r (q'/r)' -- the d2 slope-variation bound
    pub fn slope_log(&self, r: f64) -> f64 {
        let s = r / self.big_r;
        let d = self.derivs(s);
        d[1] - d[0] / s
    }

    /// q(r) inside the plateau (only defined there; used by the audit)
    pub fn q_plateau(&self, r: f64) -> f64 {
        0.5 * r * r
    }
}

fn audit(q: &CutoffQ, dim: usize) -> Result<QAudit> {
    let c = q.c;
    let n = 10_000usize;
    let (lo, hi) = (1e-3f64, 3.3 * q.r0);
    let lr = (hi / lo).ln();
    let mut a = QAudit {
        grad_over_r: 0.0,
        lap_bound: 0.0,
        convexity_min: f64::INFINITY,
        bilap_max: f64::NEG_INFINITY,
        slope_log_max: 0.0,
        samples: n,
    };
    for i in 0..n {
        let s = lo * (lr * i as f64 / (n - 1) as f64).exp();
        let r = s * q.big_r;
        let d = q.derivs(s);
        // P1: exact plateau
        if s <= 1.0 && (d[0] - s).abs() > 1e-13 * s {
            return Err(Error::CutoffConstruction("P1"));
        }
        // P2: constant far out
        if s >= 3.2 * q.r0 && d[0] != 0.0 {
            return Err(Error::CutoffConstruction("P2"));
        }
        a.grad_over_r = a.grad_over_r.max((d[0] / s).abs());
        a.lap_bound = a.lap_bound.max(q.lap(r, dim).abs());
        a.convexity_min = a.convexity_min.min(d[1]).min(d[0] / s);
        a.bilap_max = a.bilap_max.max(q.bilap(r, dim) * r * r);
        if dim == 2 {
            a.slope_log_max = a.slope_log_max.max(q.slope_log(r).abs());
        }
    }
    if a.convexity_min < -c {
        return Err(Error::CutoffConstruction("P4"));
    }
    if a.bilap_max > c {
        return Err(Error::CutoffConstruction("P5"));
    }
    if dim == 2 && a.slope_log_max > c {
        return Err(Error::CutoffConstruction("P6"));
    }
    Ok(a)
}

/// Build and audit the cutoff for the model family.
pub fn build_q(family: QFamily, c: f64, big_r: f64) -> Result<CutoffQ> {
    if !(c > 0.0 && c <= 0.1) {
        return Err(Error::InvalidArgument(format!("cutoff wants c in (0, 0.1], got {c}")));
    }
    if big_r < 1.0 {
        return Err(Error::InvalidArgument(format!("cutoff wants R >= 1, got {big_r}")));
    }
    match family {
        QFamily::D6 => {
            // the one-sided bi-Laplacian bound in the glue sets the scale
            let mut r0 = 5.0e3 / c;
            for _ in 0..6 {
                let mut q = CutoffQ {
                    family,
                    c,
                    big_r,
                    r0,
                    support: 3.0 * r0,
                    d2: None,
                    audit: QAudit {
                        grad_over_r: 0.0,
                        lap_bound: 0.0,
                        convexity_min: 0.0,
                        bilap_max: 0.0,
                        slope_log_max: 0.0,
                        samples: 0,
                    },
                };
                match audit(&q, 6) {
                    Ok(a) => {
                        q.audit = a;
                        return Ok(q);
                    }
                    Err(_) => r0 *= 2.0,
                }
            }
            Err(Error::CutoffConstruction("P5"))
        }
        QFamily::D2 => {
            let c1 = c;
            if 2.0 / c1 > 600.0 {
                return Err(Error::InvalidArgument(
                    "d2 cutoff support e^(2/c) overflows below c ~ 0.0034".into(),
                ));
            }
            let x0 = 2.0 / c1;
            let w = 10.0;
            // endpoint data of the logarithmic descent at x0
            let e1 = (-x0).exp();
            let e2 = (-2.0 * x0).exp();
            let v = 1.0 - c1 * x0 / 2.0 + c1 * (0.75 - e1 + 0.25 * e2);
            let vp = (-c1 / 2.0 + c1 * (e1 - 0.5 * e2)) * w;
            let vpp = c1 * (-e1 + e2) * w * w;
            // quintic hermite to (0,0,0) at s=1
            let a0 = v;
            let a1 = vp;
            let a2 = 0.5 * vpp;
            let mut m = [1.0, 1.0, 1.0, 3.0, 4.0, 5.0, 6.0, 12.0, 20.0];
            let mut rhs = [
                -(a0 + a1 + a2),
                -(a1 + 2.0 * a2),
                -2.0 * a2,
            ];
            crate::num::solve_dense(&mut m, &mut rhs, 3);
            let h = [a0, a1, a2, rhs[0], rhs[1], rhs[2]];
            let mut q = CutoffQ {
                family,
                c,
                big_r,
                r0: x0.exp(),
                support: (x0 + w).exp(),
                d2: Some((c1, x0, w, h)),
                audit: QAudit {
                    grad_over_r: 0.0,
                    lap_bound: 0.0,
                    convexity_min: 0.0,
                    bilap_max: 0.0,
                    slope_log_max: 0.0,
                    samples: 0,
                },
            };
            q.audit = audit_d2(&q)?;
            Ok(q)
        }
    }
}

/// The d2 audit works in the log variable so the astronomically large
/// support costs nothing.
fn audit_d2(q: &CutoffQ) -> Result<QAudit> {
    let c = q.c;
    let (_, x0, w, _) = q.d2.unwrap();
    let n = 10_000usize;
    let (lo, hi) = (-8.0, x0 + w + 2.0);
    let mut a = QAudit {
        grad_over_r: 0.0,
        lap_bound: 0.0,
        convexity_min: f64::INFINITY,
        bilap_max: f64::NEG_INFINITY,
        slope_log_max: 0.0,
        samples: n,
    };
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let f0 = q.phi(x, 0);
        let f1 = q.phi(x, 1);
        let f2 = q.phi(x, 2);
        let f3 = q.phi(x, 3);
        if x <= 0.0 && (f0 - 1.0).abs() > 1e-14 {
            return Err(Error::CutoffConstruction("P1"));
        }
        if x >= x0 + w && f0 != 0.0 {
            return Err(Error::CutoffConstruction("P2"));
        }
        a.grad_over_r = a.grad_over_r.max(f0.abs());
        a.lap_bound = a.lap_bound.max((f1 + 2.0 * f0).abs());
        a.convexity_min = a.convexity_min.min(f0 + f1).min(f0);
        a.bilap_max = a.bilap_max.max(f3 + 2.0 * f2);
        a.slope_log_max = a.slope_log_max.max(f1.abs());
    }
    if a.convexity_min < -c {
        return Err(Error::CutoffConstruction("P4"));
    }
    if a.bilap_max > c {
        return Err(Error::CutoffConstruction("P5"));
    }
    if a.slope_log_max > c {
        return Err(Error::CutoffConstruction("P6"));
    }
    Ok(a)
}

// ------------------------------------------------------------- operators

/// [A(lambda) h](r): the virial vector field paired with the gradient, with
/// the dimension-specific zeroth-order coefficient.
pub fn apply_a(model: &ModelSpec, q: &CutoffQ, lambda: f64, h: &Field) -> Field {
    let grid = &h.grid;
    let dh = grid.derivative(&h.values);
    let vals = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let y = r / lambda;
            match model.dim {
                6 => q.lap(y, 6) / (3.0 * lambda) * h.values[i] + q.qp(y) * dh[i],
                _ => q.qp(y) * dh[i],
            }
        })
        .collect();
    Field::new(grid.clone(), vals)
}

/// [A0(lambda) h](r)
pub fn apply_a0(model: &ModelSpec, q: &CutoffQ, lambda: f64, h: &Field) -> Field {
    let grid = &h.grid;
    let dh = grid.derivative(&h.values);
    let vals = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let y = r / lambda;
            match model.dim {
                6 => q.lap(y, 6) / (2.0 * lambda) * h.values[i] + q.qp(y) * dh[i],
                _ => {
                    (q.qpp(y) / (2.0 * lambda) + q.qp(y) / (2.0 * r)) * h.values[i]
                        + q.qp(y) * dh[i]
                }
            }
        })
        .collect();
    Field::new(grid.clone(), vals)
}

/// Both sides of the localized Pohozaev identity for a compactly supported
/// field, by independent quadrature.
pub fn pohozaev_check(dim: usize, q: &CutoffQ, lambda: f64, h: &Field) -> (f64, f64) {
    let grid = &h.grid;
    let dh = grid.derivative(&h.values);
    let ddh = {
        let mut out = vec![0.0; grid.n()];
        let r = grid.nodes();
        for i in 1..grid.n() - 1 {
            let h0 = r[i] - r[i - 1];
            let h1 = r[i + 1] - r[i];
            out[i] = 2.0 * (h0 * h.values[i + 1] - (h0 + h1) * h.values[i] + h1 * h.values[i - 1])
                / (h0 * h1 * (h0 + h1));
        }
        out
    };
    let g = dim as f64 - 1.0;
    let lhs_d: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let y = r / lambda;
            let lap_h = ddh[i] + g / r * dh[i];
            lap_h * (q.lap(y, dim) / (2.0 * lambda) * h.values[i] + q.qp(y) * dh[i])
        })
        .collect();
    let rhs_d: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let y = r / lambda;
            -0.25 / lambda * q.bilap(y, dim) * h.values[i] * h.values[i]
                - 1.0 / lambda * q.qpp(y) * dh[i] * dh[i]
        })
        .collect();
    (grid.integrate(&lhs_d), grid.integrate(&rhs_d))
}

/// Pohozaev check with analytic derivatives of the test field, integrated
/// with the curvature-corrected rule; this is the high-accuracy oracle path.
pub fn pohozaev_check_analytic(
    dim: usize,
    q: &CutoffQ,
    lambda: f64,
    grid: &Arc<RadialGrid>,
    h: &dyn Fn(f64) -> f64,
    dh: &dyn Fn(f64) -> f64,
    ddh: &dyn Fn(f64) -> f64,
) -> (f64, f64) {
    let g = dim as f64 - 1.0;
    let di = dim as i32;
    let lhs_d: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| {
            let y = r / lambda;
            let lap_h = ddh(r) + g / r * dh(r);
            (lap_h * (q.lap(y, dim) / (2.0 * lambda) * h(r) + q.qp(y) * dh(r))) * r.powi(di - 1)
        })
        .collect();
    let rhs_d: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| {
            let y = r / lambda;
            (-0.25 / lambda * q.bilap(y, dim) * h(r) * h(r)
                - 1.0 / lambda * q.qpp(y) * dh(r) * dh(r))
                * r.powi(di - 1)
        })
        .collect();
    (
        grid.integrate_corrected_dr(&lhs_d) * grid.angular,
        grid.integrate_corrected_dr(&rhs_d) * grid.angular,
    )
}

// ------------------------------------------------------------ functionals

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FunctionalValues {
    pub i_fun: f64,
    pub j_fun: f64,
    pub h_fun: f64,
    /// half the quadratic form of the second variation at phi
    pub quad_proxy: f64,
    /// |I - quad_proxy|, controlled by ||g||^3
    pub cubic_defect: f64,
}

/// Nonlinear energy functional I, localized virial J and H = I + b J.
///
/// I is expanded in the discrete Hamiltonian of the semidiscretization, so
/// its quadratic part coincides exactly with the second-variation proxy and
/// the cubic defect is a pure nonlinear remainder.
pub fn functionals_ijh(
    model: &ModelSpec,
    phi: &State,
    g: &State,
    b: f64,
    lambda: f64,
    q: &CutoffQ,
) -> FunctionalValues {
    let grid = phi.grid();
    let lap = laplacian(model, grid);
    let mass = lap.mass();
    let ang = grid.angular;
    // I = 1/2 K(g,g) + 1/2 ||g_v||^2 - sum M [F(phi+g) - F(phi) - f(phi) g]
    let stiff = lap.bilinear(&g.u.values, &g.u.values);
    let mut kinetic = 0.0;
    let mut nonlin = 0.0;
    let mut quad_pot = 0.0;
    for (i, &r) in grid.nodes().iter().enumerate() {
        let w = mass[i] * ang;
        kinetic += w * g.v.values[i] * g.v.values[i];
        let inv = if model.dim == 6 { 1.0 } else { 1.0 / (r * r) };
        let (p, gg) = (phi.u.values[i], g.u.values[i]);
        nonlin += w * inv * (model.big_f(p + gg) - model.big_f(p) - model.f(p) * gg);
        quad_pot += w * inv * model.f_prime(p) * gg * gg;
    }
    let i_fun = 0.5 * stiff + 0.5 * kinetic - nonlin;
    let quad_proxy = 0.5 * stiff + 0.5 * kinetic - 0.5 * quad_pot;
    let a0g = apply_a0(model, q, lambda, &g.u);
    let j_fun = g.v.pair(&a0g);
    let h_fun = i_fun + b * j_fun;
    FunctionalValues {
        i_fun,
        j_fun,
        h_fun,
        quad_proxy,
        cubic_defect: (i_fun - quad_proxy).abs(),
    }
}

// ------------------------------------------------------------- coercivity

/// Smallest eigenvalue of the linearized operator restricted to the
/// complement of the given directions, in the L2 metric of the grid.
pub fn coercivity_l2(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    potential: Vec<f64>,
    directions: &[&Field],
) -> f64 {
    let op = assemble(grid, model.dim, inner_bc_for(model), potential);
    constrained_smallest(&op, directions)
}

/// Single-bubble linearized potential of the model.
pub fn linearized_potential(model: &ModelSpec, grid: &Arc<RadialGrid>) -> Vec<f64> {
    grid.nodes().iter().map(|&r| model.lin_potential(r)).collect()
}

/// Two-bubble potential: second variation at sigma W_mu + W_lambda.
pub fn two_bubble_potential(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    lambda: f64,
    mu: f64,
) -> Vec<f64> {
    let wl = model.scaled_h(|r| model.w(r), lambda);
    let wm = model.scaled_h(|r| model.w(r), mu);
    grid.nodes()
        .iter()
        .map(|&r| {
            let u = model.sigma * wm(r) + wl(r);
            match model.dim {
                6 => -model.f_prime(u),
                _ => -model.f_prime(u) / (r * r),
            }
        })
        .collect()
}

/// Coercivity of the d2 quadratic form against the H-norm, in the log
/// variable: smallest mu with form - mu * norm singular, constrained to the
/// complement of the localizer (the dr/r pairing is the flat pairing in x).
pub fn coercivity_d2_h_quotient(
    model: &ModelSpec,
    z: &LocalizerZ,
    x_lo: f64,
    x_hi: f64,
    n: usize,
) -> Result<f64> {
    let (a, bn) = log_forms(model, x_lo, x_hi, n)?;
    let h = (x_hi - x_lo) / (n - 1) as f64;
    let m = n - 2;
    let zcol: Vec<f64> = (0..m)
        .map(|j| {
            let x = x_lo + h * (j + 1) as f64;
            z.eval(x.exp()) * h
        })
        .collect();
    let znorm = zcol.iter().map(|v| v * v).sum::<f64>().sqrt();
    let zcol: Vec<f64> = zcol.iter().map(|v| v / znorm).collect();
    let tau = 1e9;
    let probe = |mu: f64| -> usize {
        let shifted = SymTridiag {
            diag: a
                .diag
                .iter()
                .zip(&bn.diag)
                .map(|(x, y)| x - mu * y)
                .collect(),
            off: a.off.iter().zip(&bn.off).map(|(x, y)| x - mu * y).collect(),
        };
        count_below_penalized(&shifted, std::slice::from_ref(&zcol), tau, 0.0)
    };
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    while probe(lo) > 0 {
        lo *= 2.0;
        if lo < -1e6 {
            break;
        }
    }
    while probe(hi) == 0 {
        hi *= 2.0;
        if hi > 1e6 {
            break;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if probe(mid) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridKind};
    use crate::linop::{build_z, negative_eigenpair, Bump};
    use crate::model::ModelId;
    use crate::num::rel_err;

    #[test]
    fn d6_cutoff_passes_audit_and_matches_printed_derivative() {
        let q = build_q(QFamily::D6, 0.01, 20.0).unwrap();
        // C1 matching at the plateau edge: q'(1+) = 8/5 - 1 + 2/5 = 1
        assert!(rel_err(q0_d6(1.0, 1), 1.0) < 1e-14);
        assert!(q.audit.convexity_min >= -0.01);
        assert!(q.audit.bilap_max <= 0.01);
        // plateau region exact
        for r in [0.5, 5.0, 19.99] {
            assert!(rel_err(q.qp(r), r) < 1e-13);
            assert!((q.qpp(r) - 1.0).abs() < 1e-13);
            assert!((q.q_plateau(r) - 0.5 * r * r).abs() < 1e-12);
        }
        // base region bi-Laplacian is the printed -24/s^3 (pre-scale)
        let s = 7.0;
        let bil = q.bilap(s * q.big_r, 6) * q.big_r * q.big_r;
        assert!(rel_err(bil, -24.0 / s.powi(3)) < 1e-10, "{bil}");
    }

    #[test]
    fn d2_cutoff_passes_audit_with_positive_base_convexity() {
        let q = build_q(QFamily::D2, 0.01, 20.0).unwrap();
        assert!(q.audit.convexity_min >= -0.01);
        assert!(q.audit.bilap_max <= 0.01);
        assert!(q.audit.slope_log_max <= 0.01);
        // convex before the glue: q'' > 0 on (1, r0)
        for x in [0.5f64, 2.0, 20.0, 150.0] {
            let s = x.exp();
            if s < q.r0 {
                assert!(q.qpp(s * q.big_r) > 0.0, "q'' at x={x}");
            }
        }
    }

    #[test]
    fn cutoff_rejects_bad_parameters() {
        assert!(build_q(QFamily::D6, 0.0, 20.0).is_err());
        assert!(build_q(QFamily::D6, 0.2, 20.0).is_err());
        assert!(build_q(QFamily::D2, 0.01, 0.5).is_err());
        assert!(build_q(QFamily::D2, 0.001, 20.0).is_err());
    }

    #[test]
    fn a_operator_kills_constants_in_d2() {
        let model = ModelSpec::new(ModelId::Ym4).unwrap();
        let q = build_q(QFamily::D2, 0.01, 20.0).unwrap();
        let grid = make_grid(GridKind::Uniform, 0.01, 30.0, 2000, 2).unwrap();
        let h = Field::sample(&grid, |_| 3.7);
        let ah = apply_a(&model, &q, 0.5, &h);
        let sup = ah.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(sup < 1e-9, "A const = {sup:.3e}");
    }

    #[test]
    fn a_scale_covariance() {
        // A(lambda)(h_lambda) = (A h)_uln_lambda, algebraic in the closed forms
        let q = build_q(QFamily::D6, 0.01, 20.0).unwrap();
        let lam = 0.37f64;
        let h = |r: f64| (-0.5 * (r - 2.0) * (r - 2.0)).exp();
        let dh = |r: f64| -(r - 2.0) * (-0.5 * (r - 2.0) * (r - 2.0)).exp();
        for r in [0.5, 1.0, 3.0, 8.0] {
            // left: A(lambda) applied to h_lambda at radius r
            let hl_prime = lam.powf(-3.0) * dh(r / lam);
            let hl = lam.powf(-2.0) * h(r / lam);
            let left = q.lap(r / lam, 6) / (3.0 * lam) * hl + q.qp(r / lam) * hl_prime;
            // right: (A h)(r/lam), underline-rescaled
            let ah = q.lap(r / lam, 6) / 3.0 * h(r / lam) + q.qp(r / lam) * dh(r / lam);
            let right = lam.powf(-3.0) * ah;
            assert!(rel_err(left, right) < 1e-12, "at r={r}");
        }
    }

    #[test]
    fn pohozaev_identity_both_dimensions() {
        for (dim, fam) in [(6usize, QFamily::D6), (2usize, QFamily::D2)] {
            let q = build_q(fam, 0.01, 20.0).unwrap();
            let grid = make_grid(GridKind::Uniform, 0.05, 12.0, 1 << 16, dim).unwrap();
            let bump = Bump { a: 1.0, b: 6.0 };
            let h = Field::sample(&grid, |r| bump.eval(r));
            for lam in [1.0, 2.0] {
                let (lhs, rhs) = pohozaev_check(dim, &q, lam, &h);
                assert!(
                    rel_err(lhs, rhs) < 1e-6,
                    "dim {dim} lam {lam}: {lhs} vs {rhs} rel {:.3e}",
                    rel_err(lhs, rhs)
                );
            }
        }
    }

    #[test]
    fn pohozaev_zero_field() {
        let q = build_q(QFamily::D2, 0.01, 20.0).unwrap();
        let grid = make_grid(GridKind::Uniform, 0.05, 10.0, 512, 2).unwrap();
        let h = Field::zeros(&grid);
        let (lhs, rhs) = pohozaev_check(2, &q, 1.0, &h);
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn ijh_vanish_at_zero_error() {
        let model = ModelSpec::new(ModelId::Ym4).unwrap();
        let q = build_q(QFamily::D2, 0.01, 20.0).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-5, 60.0, 2048, 2).unwrap();
        let phi = State::new(model.bubble(&grid, 0.02).unwrap(), Field::zeros(&grid));
        let g = State::zeros(&grid);
        let f = functionals_ijh(&model, &phi, &g, 0.01, 0.02, &q);
        assert_eq!(f.i_fun, 0.0);
        assert_eq!(f.j_fun, 0.0);
        assert_eq!(f.h_fun, 0.0);
    }

    #[test]
    fn cubic_defect_scales_cubically() {
        // NLW6: f''(W) keeps one sign, so the cubic term cannot cancel
        let model = ModelSpec::new(ModelId::Nlw6).unwrap();
        let q = build_q(QFamily::D6, 0.01, 20.0).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-5, 60.0, 4096, 6).unwrap();
        let phi = State::new(model.bubble(&grid, 1.0).unwrap(), Field::zeros(&grid));
        let bump = Bump { a: 0.5, b: 3.0 };
        let mk = |eps: f64| {
            State::new(
                Field::sample(&grid, |r| eps * bump.eval(r)),
                Field::sample(&grid, |r| 0.5 * eps * bump.eval(r * 0.8)),
            )
        };
        let d1 = functionals_ijh(&model, &phi, &mk(1e-1), 0.0, 1.0, &q).cubic_defect;
        let d2 = functionals_ijh(&model, &phi, &mk(1e-2), 0.0, 1.0, &q).cubic_defect;
        let ratio = d1 / d2;
        assert!(
            (ratio / 1000.0 - 1.0).abs() < 0.1,
            "cubic scaling ratio {ratio} (want ~1000)"
        );
    }

    #[test]
    fn j_is_quadratically_bounded() {
        let model = ModelSpec::new(ModelId::Ym4).unwrap();
        let q = build_q(QFamily::D2, 0.01, 20.0).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-5, 60.0, 4096, 2).unwrap();
        let bump = Bump { a: 0.5, b: 3.0 };
        let g = State::new(
            Field::sample(&grid, |r| 0.1 * bump.eval(r)),
            Field::sample(&grid, |r| 0.07 * bump.eval(1.3 * r)),
        );
        let f = functionals_ijh(
            &model,
            &State::new(model.bubble(&grid, 1.0).unwrap(), Field::zeros(&grid)),
            &g,
            0.0,
            1.0,
            &q,
        );
        let norm2 = model.norm(&g).powi(2);
        let c_q = f.j_fun.abs() / norm2;
        assert!(c_q.is_finite() && c_q < 100.0, "C_q = {c_q}");
    }

    #[test]
    fn nlw6_coercivity_with_and_without_unstable_mode() {
        let model = ModelSpec::new(ModelId::Nlw6).unwrap();
        let grid = make_grid(GridKind::Uniform, 2e-3, 50.0, 8000, 6).unwrap();
        let sp = negative_eigenpair(&model, &grid).unwrap();
        let z = build_z(&model, &grid, Some(&sp)).unwrap();
        let zf = z.sample(&grid);
        let pot = linearized_potential(&model, &grid);
        let with_y = coercivity_l2(&model, &grid, pot.clone(), &[&zf, &sp.y]);
        assert!(with_y > 0.0, "constrained minimum {with_y}");
        let without_y = coercivity_l2(&model, &grid, pot, &[&zf]);
        let nu2 = sp.nu * sp.nu;
        assert!(
            (without_y + nu2).abs() < 1e-3,
            "unconstrained-in-Y minimum {without_y} vs -nu^2 = {}",
            -nu2
        );
    }

    #[test]
    fn ym_h_quotient_coercive_under_localizer_constraint() {
        let model = ModelSpec::new(ModelId::Ym4).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-5, 50.0, 1024, 2).unwrap();
        let z = build_z(&model, &grid, None).unwrap();
        let cmin = coercivity_d2_h_quotient(&model, &z, -9.0, 9.0, 6000).unwrap();
        assert!(cmin > 0.01, "constrained quotient {cmin}");
    }
}
