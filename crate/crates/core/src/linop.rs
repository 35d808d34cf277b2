//! Discrete radial operators L = -Delta + V, their spectra, and the
//! compactly supported localizers used for orthogonality conditions.
//!
//! Assembly is P1 Galerkin with lumped mass against the r^(d-1) dr measure,
//! so every operator is self-adjoint in the discrete inner product by
//! construction. For the d = 2 models an alternative assembly in x = log r
//! turns the quadratic forms into classical one-dimensional Schroedinger
//! forms with sech^2 wells.

use crate::error::{Error, Result};
use crate::grid::{Field, RadialGrid, State};
use crate::model::{ModelId, ModelSpec};
use crate::num::{count_below_penalized, solve_dense, SymTridiag};
use serde::Serialize;
use std::sync::Arc;

/// Self-adjoint second-order radial operator with lumped mass.
#[derive(Debug, Clone)]
pub struct RadialOp {
    pub grid: Arc<RadialGrid>,
    /// interval stiffness coefficients: k_i couples nodes i and i+1
    stiff: Vec<f64>,
    /// diagonal spring at the first node (inner boundary model)
    inner_spring: f64,
    /// lumped mass, including the origin cell contribution
    mass: Vec<f64>,
    /// sampled potential
    pot: Vec<f64>,
}

impl RadialOp {
    /// strong-form application (K u)/M + V u
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let mut out = vec![0.0; n];
        out[0] = self.inner_spring * u[0];
        for i in 0..n - 1 {
            let f = self.stiff[i] * (u[i] - u[i + 1]);
            out[i] += f;
            out[i + 1] -= f;
        }
        for i in 0..n {
            out[i] = out[i] / self.mass[i] + self.pot[i] * u[i];
        }
        out
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// <L u, v> in the discrete measure; symmetric by construction.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = self.inner_spring * u[0] * v[0];
        for i in 0..u.len() - 1 {
            s += self.stiff[i] * (u[i] - u[i + 1]) * (v[i] - v[i + 1]);
        }
        for i in 0..u.len() {
            s += self.pot[i] * u[i] * v[i] * self.mass[i];
        }
        s * self.grid.angular
    }

    /// Symmetric tridiagonal form of the interior (Dirichlet) problem in the
    /// mass inner product: C = M^-1/2 (K + M V) M^-1/2 restricted to nodes
    /// 1..n-1.
    pub fn interior_tridiag(&self) -> SymTridiag {
        let n = self.grid.n();
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m - 1];
        for j in 0..m {
            let i = j + 1;
            diag[j] = (self.stiff[i - 1] + self.stiff[i]) / self.mass[i] + self.pot[i];
        }
        for j in 0..m - 1 {
            let i = j + 1;
            off[j] = -self.stiff[i] / (self.mass[i] * self.mass[i + 1]).sqrt();
        }
        SymTridiag { diag, off }
    }

    /// Smallest Dirichlet eigenvalue and its eigenfunction, normalized to
    /// unit L2 norm in the model measure and positive at its peak.
    pub fn smallest_eigenpair(&self) -> (f64, Field) {
        let t = self.interior_tridiag();
        let lam = t.eigenvalue(0, 1e-14);
        let (glo, ghi) = t.gershgorin();
        let sigma = lam - 1e-10 * (ghi - glo).max(1.0);
        let m = t.n();
        let mut x = vec![1.0; m];
        let mut y = vec![0.0; m];
        for _ in 0..4 {
            t.solve_shifted(sigma, &x, &mut y);
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in y.iter_mut() {
                *v /= norm;
            }
            std::mem::swap(&mut x, &mut y);
        }
        let n = self.grid.n();
        let mut vals = vec![0.0; n];
        for j in 0..m {
            vals[j + 1] = x[j] / self.mass[j + 1].sqrt();
        }
        let mut f = Field::new(self.grid.clone(), vals);
        let peak = f
            .values
            .iter()
            .cloned()
            .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        // normalize under the corrected rule so smooth rescaled pairings of
        // the eigenfunction see a unit norm to matching accuracy
        let norm = f.pair_corrected(&f).sqrt() * peak.signum();
        for v in f.values.iter_mut() {
            *v /= norm;
        }
        (lam, f)
    }
}

/// Inner boundary model for the first node.
#[derive(Debug, Clone, Copy)]
pub enum InnerBc {
    /// even reflection through the origin: zero flux, origin cell mass
    Even,
    /// power decay u ~ u(r1) (r/r1)^k: diagonal flux spring
    Power(f64),
}

pub fn inner_bc_for(model: &ModelSpec) -> InnerBc {
    match model.equivariance {
        None => InnerBc::Even,
        Some(k) => InnerBc::Power(k),
    }
}

/// Assemble -(1/w)(w u')' + V on the grid, w = r^(d-1).
pub fn assemble(grid: &Arc<RadialGrid>, dim: usize, inner: InnerBc, pot: Vec<f64>) -> RadialOp {
    let r = grid.nodes();
    let n = r.len();
    let di = dim as i32;
    let mut stiff = vec![0.0; n - 1];
    for i in 0..n - 1 {
        let (a, b) = (r[i], r[i + 1]);
        let h = b - a;
        stiff[i] = (b.powi(di) - a.powi(di)) / (dim as f64) / (h * h);
    }
    let mut mass = grid.weights().to_vec();
    let mut inner_spring = 0.0;
    match inner {
        InnerBc::Even => {
            mass[0] += r[0].powi(di) / dim as f64;
        }
        InnerBc::Power(k) => {
            let rg = (2.0 * r[0] - r[1]).max(0.0);
            let rm = 0.5 * (rg + r[0]);
            // flux of u1 (r/r1)^k through the sphere at rm, divided by u1
            inner_spring = k * (rm / r[0]).powf(k) * rm.powi(di - 2);
            mass[0] += {
                // mass of the inner stub [rg, r1] with the hat extended by the
                // power profile; a plain measure integral is adequate here
                (r[0].powi(di) - rg.powi(di)) / (dim as f64 * (k + 1.0))
            };
        }
    }
    RadialOp {
        grid: grid.clone(),
        stiff,
        inner_spring,
        mass,
        pot,
    }
}

/// The linearized operator around the bubble for a model.
pub fn assemble_l(model: &ModelSpec, grid: &Arc<RadialGrid>) -> RadialOp {
    let pot: Vec<f64> = grid.nodes().iter().map(|&r| model.lin_potential(r)).collect();
    assemble(grid, model.dim, inner_bc_for(model), pot)
}

/// Pure radial Laplacian (negated): -Delta on the grid.
pub fn laplacian(model: &ModelSpec, grid: &Arc<RadialGrid>) -> RadialOp {
    assemble(grid, model.dim, inner_bc_for(model), vec![0.0; grid.n()])
}

// ---------------------------------------------------------------- log form

/// Quadratic forms of the d = 2 linearized operator in x = log r on a
/// uniform x-grid: returns (form, h_norm) as interior tridiagonal matrices,
/// where form represents the operator -d^2/dx^2 + e^(2x) V(e^x) and h_norm
/// the squared H-norm density g_x^2 + keff^2 g^2.
pub fn log_forms(model: &ModelSpec, x_lo: f64, x_hi: f64, n: usize) -> Result<(SymTridiag, SymTridiag)> {
    let keff = model
        .equivariance
        .ok_or_else(|| Error::UnsupportedModel(model.id.to_string()))?;
    let h = (x_hi - x_lo) / (n - 1) as f64;
    let m = n - 2;
    let mut fd = vec![0.0; m];
    let mut fo = vec![-1.0 / h; m - 1];
    let mut bd = vec![0.0; m];
    let mut bo = vec![-1.0 / h; m - 1];
    for j in 0..m {
        let x = x_lo + h * (j + 1) as f64;
        let r = x.exp();
        fd[j] = 2.0 / h + h * (r * r * model.lin_potential(r));
        bd[j] = 2.0 / h + h * keff * keff;
    }
    // keep the mass scaling identical on both sides
    for v in fo.iter_mut() {
        *v = -1.0 / h;
    }
    for v in bo.iter_mut() {
        *v = -1.0 / h;
    }
    Ok((
        SymTridiag { diag: fd, off: fo },
        SymTridiag { diag: bd, off: bo },
    ))
}

// ---------------------------------------------------------------- spectrum

/// Negative eigenpair of the NLW6 linearized operator.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// sqrt of minus the negative eigenvalue
    pub nu: f64,
    /// Richardson-extrapolated value from the coarsened grid
    pub nu_extrapolated: f64,
    /// relative shift between the two resolutions
    pub nu_grid_shift: f64,
    /// positive L2-normalized eigenfunction
    pub y: Field,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub nu: f64,
    pub nu_extrapolated: f64,
    pub nu_grid_shift: f64,
    pub y_lamw_orth: f64,
    pub grid_n: usize,
    pub grid_r_max: f64,
}

/// Compute the single negative eigenvalue of L for NLW6 with a coarse-grid
/// cross check. Errors for the d = 2 models, whose operators are nonnegative.
pub fn negative_eigenpair(model: &ModelSpec, grid: &Arc<RadialGrid>) -> Result<SpectralData> {
    if model.id != ModelId::Nlw6 {
        return Err(Error::UnsupportedModel(model.id.to_string()));
    }
    let op = assemble_l(model, grid);
    let (lam, y) = op.smallest_eigenpair();
    if lam >= 0.0 {
        return Err(Error::SpectralAnomaly(lam));
    }
    // coarsen by dropping every other node
    let coarse_nodes: Vec<f64> = grid.nodes().iter().step_by(2).cloned().collect();
    let coarse = crate::grid::grid_from_nodes(grid.kind, coarse_nodes, grid.dim)?;
    let opc = assemble_l(model, &coarse);
    let (lam_c, _) = opc.smallest_eigenpair();
    if lam_c >= 0.0 {
        return Err(Error::SpectralAnomaly(lam_c));
    }
    let nu = (-lam).sqrt();
    let nu_c = (-lam_c).sqrt();
    let nu_ext = nu + (nu - nu_c) / 3.0;
    Ok(SpectralData {
        nu,
        nu_extrapolated: nu_ext,
        nu_grid_shift: (nu - nu_c).abs() / nu,
        y,
    })
}

impl SpectralData {
    /// Pair (Y_l / nu, +-Y_uln_l) sampled on a grid.
    pub fn y_pair(&self, model: &ModelSpec, grid: &Arc<RadialGrid>, lambda: f64, sign: f64) -> State {
        let y = |r: f64| self.y.eval(r);
        let u = Field::sample(grid, model.scaled_h(&y, lambda));
        let v = Field::sample(grid, model.scaled_l2(&y, lambda));
        let nu = self.nu;
        State::new(
            Field::new(grid.clone(), u.values.iter().map(|x| x / nu).collect()),
            Field::new(grid.clone(), v.values.iter().map(|x| sign * x).collect()),
        )
    }

    /// Linear form alpha^(sign) at scale lambda, as a pair to integrate against.
    pub fn alpha_pair(&self, model: &ModelSpec, grid: &Arc<RadialGrid>, lambda: f64, sign: f64) -> State {
        let y = |r: f64| self.y.eval(r);
        let v = Field::sample(grid, model.scaled_l2(&y, lambda));
        let nu = self.nu;
        State::new(
            Field::new(
                grid.clone(),
                v.values.iter().map(|x| 0.5 * nu / lambda * x).collect(),
            ),
            Field::new(grid.clone(), v.values.iter().map(|x| 0.5 * sign * x).collect()),
        )
    }

    /// <alpha, h> with the L2 x L2 pairing.
    pub fn pair_alpha(&self, alpha: &State, h: &State) -> f64 {
        alpha.u.pair_corrected(&h.u) + alpha.v.pair_corrected(&h.v)
    }
}

// ---------------------------------------------------------------- localizer

/// Smooth bump supported on [a, b].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bump {
    pub a: f64,
    pub b: f64,
}

impl Bump {
    pub fn eval(&self, r: f64) -> f64 {
        let s = (2.0 * r - self.a - self.b) / (self.b - self.a);
        if s.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - s * s)).exp()
        }
    }

    pub fn eval_prime(&self, r: f64) -> f64 {
        let w = 2.0 / (self.b - self.a);
        let s = (2.0 * r - self.a - self.b) / (self.b - self.a);
        if s.abs() >= 1.0 {
            0.0
        } else {
            let q = 1.0 - s * s;
            (-1.0 / q).exp() * (-2.0 * s / (q * q)) * w
        }
    }

    pub fn eval_second(&self, r: f64) -> f64 {
        let w = 2.0 / (self.b - self.a);
        let s = (2.0 * r - self.a - self.b) / (self.b - self.a);
        if s.abs() >= 1.0 {
            0.0
        } else {
            let q = 1.0 - s * s;
            // d/ds of -2s/q^2 e^{-1/q}: e^{-1/q} (4s^2/q^4 - (2q + 8s^2)/q^3)
            (-1.0 / q).exp() * (4.0 * s * s / q.powi(4) - (2.0 * q + 8.0 * s * s) / q.powi(3))
                * w
                * w
        }
    }
}

/// Compactly supported localizer defining the orthogonality conditions.
#[derive(Debug, Clone, Serialize)]
pub struct LocalizerZ {
    pub bumps: [Bump; 2],
    pub coeffs: [f64; 2],
    pub support: (f64, f64),
}

impl LocalizerZ {
    pub fn eval(&self, r: f64) -> f64 {
        self.coeffs[0] * self.bumps[0].eval(r) + self.coeffs[1] * self.bumps[1].eval(r)
    }

    pub fn eval_prime(&self, r: f64) -> f64 {
        self.coeffs[0] * self.bumps[0].eval_prime(r) + self.coeffs[1] * self.bumps[1].eval_prime(r)
    }

    pub fn sample(&self, grid: &Arc<RadialGrid>) -> Field {
        Field::sample(grid, |r| self.eval(r))
    }
}

/// Build the localizer. NLW6 takes a two-bump combination orthogonal to the
/// unstable mode and normalized against LamW; the d = 2 models take a single
/// positive bump normalized in the dr/r pairing.
pub fn build_z(
    model: &ModelSpec,
    grid: &Arc<RadialGrid>,
    spectral: Option<&SpectralData>,
) -> Result<LocalizerZ> {
    let b1 = Bump { a: 0.5, b: 1.0 };
    let b2 = Bump { a: 1.0, b: 2.0 };
    match model.id {
        ModelId::Nlw6 => {
            let sp = spectral.ok_or_else(|| {
                Error::InvalidArgument("NLW6 localizer needs spectral data".into())
            })?;
            let f1 = Field::sample(grid, |r| b1.eval(r));
            let f2 = Field::sample(grid, |r| b2.eval(r));
            let lamw = Field::sample(grid, |r| model.lam_w(r));
            // rows: <Z, Y> = 0, <Z, LamW> = 1
            let mut a = [
                f1.pair(&sp.y),
                f2.pair(&sp.y),
                f1.pair(&lamw),
                f2.pair(&lamw),
            ];
            let mut rhs = [0.0, 1.0];
            if !solve_dense(&mut a, &mut rhs, 2) {
                return Err(Error::DegenerateLocalizer);
            }
            if !(rhs[0].is_finite() && rhs[1].is_finite()) {
                return Err(Error::DegenerateLocalizer);
            }
            Ok(LocalizerZ {
                bumps: [b1, b2],
                coeffs: [rhs[0], rhs[1]],
                support: (0.5, 2.0),
            })
        }
        _ => {
            // positivity of int Z LamW dr/r is automatic for a positive bump
            let quad: f64 = grid
                .nodes()
                .iter()
                .zip(grid.weights())
                .map(|(&r, &w)| b1.eval(r) * model.lam_w(r) * w / (r * r))
                .sum();
            if quad <= 0.0 {
                return Err(Error::DegenerateLocalizer);
            }
            Ok(LocalizerZ {
                bumps: [b1, b2],
                coeffs: [1.0 / quad, 0.0],
                support: (0.5, 1.0),
            })
        }
    }
}

/// Pairing of the rescaled localizer against a field, in the convention of
/// each model family: L2(R^6) for NLW6, dr/r for d = 2. The localizer is
/// rescaled with the L2-critical exponent. Uses the curvature-corrected
/// quadrature so orthogonality conditions transported across scales stay
/// consistent to well below the Newton tolerances.
pub fn pair_z(model: &ModelSpec, z: &LocalizerZ, lambda: f64, f: &Field) -> f64 {
    let grid = &f.grid;
    let di = grid.dim as i32;
    match model.dim {
        6 => {
            let a = model.scale_pow_l2;
            let g: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(&f.values)
                .map(|(&r, &v)| lambda.powf(-a) * z.eval(r / lambda) * v * r.powi(di - 1))
                .collect();
            grid.integrate_corrected_dr(&g) * grid.angular
        }
        _ => {
            let g: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(&f.values)
                .map(|(&r, &v)| z.eval(r / lambda) / lambda * v / r)
                .collect();
            grid.integrate_corrected_dr(&g)
        }
    }
}

/// Same pairing against (1/lambda) (Lam0 Z)_uln_lambda, the scale derivative
/// of the localizer; needed for the modulation Jacobian.
pub fn pair_z_scale_derivative(model: &ModelSpec, z: &LocalizerZ, lambda: f64, f: &Field) -> f64 {
    let grid = &f.grid;
    let c0 = model.scale_pow_l2;
    let di = grid.dim as i32;
    match model.dim {
        6 => {
            let a = model.scale_pow_l2;
            let g: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(&f.values)
                .map(|(&r, &v)| {
                    let s = r / lambda;
                    lambda.powf(-a) * (c0 * z.eval(s) + s * z.eval_prime(s)) * v * r.powi(di - 1)
                })
                .collect();
            grid.integrate_corrected_dr(&g) * grid.angular / lambda
        }
        _ => {
            let g: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(&f.values)
                .map(|(&r, &v)| {
                    let s = r / lambda;
                    (c0 * z.eval(s) + s * z.eval_prime(s)) / lambda * v / r
                })
                .collect();
            grid.integrate_corrected_dr(&g) / lambda
        }
    }
}

// ------------------------------------------------------------- eigen check

#[derive(Debug, Clone, Serialize)]
pub struct EigenActionReport {
    pub deviation_minus: Vec<(f64, f64)>,
    pub deviation_plus: Vec<(f64, f64)>,
    pub alpha_pairings: Vec<(f64, f64, f64)>,
}

/// Apply the linearized flow generator to the eigenpairs at several scales
/// and measure the deviation from the exact eigen-relations. Each scale is
/// evaluated on the spectral grid rescaled by lambda, so the eigenfunction
/// is sampled at exact nodes; an interpolated fixed-grid evaluation would
/// drown the check in the interpolant's curvature noise.
pub fn eigen_action_check(
    model: &ModelSpec,
    spectral: &SpectralData,
    scales: &[f64],
) -> EigenActionReport {
    let mut report = EigenActionReport {
        deviation_minus: Vec::new(),
        deviation_plus: Vec::new(),
        alpha_pairings: Vec::new(),
    };
    for &lam in scales {
        let nodes: Vec<f64> = spectral
            .y
            .grid
            .nodes()
            .iter()
            .map(|&x| lam * x)
            .collect();
        let grid = &crate::grid::grid_from_nodes(spectral.y.grid.kind, nodes, model.dim)
            .expect("rescaled grid is valid");
        let pot: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&r| {
                let wl = model.scaled_h(|x| model.w(x), lam)(r);
                -model.f_prime(wl)
            })
            .collect();
        let op = assemble(grid, model.dim, inner_bc_for(model), pot);
        for sign in [-1.0, 1.0] {
            let yp = spectral.y_pair(model, grid, lam, sign);
            // J D^2E (u, v) = (v, -L u)
            let img_u = yp.v.clone();
            let mut neg_l = op.apply(&yp.u.values);
            // the end rows are Dirichlet bookkeeping, not operator rows
            let nn = neg_l.len();
            neg_l[0] = sign * spectral.nu / lam * yp.v.values[0] * -1.0;
            neg_l[nn - 1] = sign * spectral.nu / lam * yp.v.values[nn - 1] * -1.0;
            let img_v = Field::new(grid.clone(), neg_l.iter().map(|x| -x).collect());
            let rate = sign * spectral.nu / lam;
            let res = State::new(
                Field::new(
                    grid.clone(),
                    img_u
                        .values
                        .iter()
                        .zip(&yp.u.values)
                        .map(|(a, b)| a - rate * b)
                        .collect(),
                ),
                Field::new(
                    grid.clone(),
                    img_v
                        .values
                        .iter()
                        .zip(&yp.v.values)
                        .map(|(a, b)| a - rate * b)
                        .collect(),
                ),
            );
            let scaled = State::new(
                Field::new(grid.clone(), yp.u.values.iter().map(|x| rate * x).collect()),
                Field::new(grid.clone(), yp.v.values.iter().map(|x| rate * x).collect()),
            );
            let dev = model.norm(&res) / model.norm(&scaled);
            if sign < 0.0 {
                report.deviation_minus.push((lam, dev));
            } else {
                report.deviation_plus.push((lam, dev));
            }
        }
        let ap = spectral.alpha_pair(model, grid, lam, 1.0);
        let ypp = spectral.y_pair(model, grid, lam, 1.0);
        let ypm = spectral.y_pair(model, grid, lam, -1.0);
        report
            .alpha_pairings
            .push((lam, spectral.pair_alpha(&ap, &ypp), spectral.pair_alpha(&ap, &ypm)));
    }
    report
}

// ----------------------------------------------------- constrained spectra

/// Smallest eigenvalue of the interior operator restricted (by a large
/// penalty) to the orthogonal complement of the given directions, in the
/// discrete L2 metric. Directions are given as plain nodal fields.
pub fn constrained_smallest(op: &RadialOp, directions: &[&Field]) -> f64 {
    let t = op.interior_tridiag();
    let n = op.grid.n();
    // constraint functionals in the similarity variables: c_i = sqrt(m_i) d_i
    let cols: Vec<Vec<f64>> = directions
        .iter()
        .map(|d| {
            let mut c: Vec<f64> = (1..n - 1)
                .map(|i| d.values[i] * (op.mass[i] * op.grid.angular).sqrt())
                .collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in c.iter_mut() {
                    *v /= norm;
                }
            }
            c
        })
        .collect();
    let (lo0, hi0) = t.gershgorin();
    let tau = 1e8 * (hi0 - lo0).max(1.0);
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if count_below_penalized(&t, &cols, tau, mid) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 * (hi0 - lo0).max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridKind};
    use crate::num::rel_err;

    fn l2_interior(grid: &RadialGrid, f: &[f64]) -> f64 {
        let w = grid.weights();
        (1..f.len() - 1).map(|i| w[i] * f[i] * f[i]).sum::<f64>().sqrt()
    }

    #[test]
    fn kernel_residual_small_on_fine_grid() {
        // L(LamW) = 0; the discrete residual must vanish to quadrature order
        for id in [ModelId::Nlw6, ModelId::Ym4, ModelId::Wm(3)] {
            let model = ModelSpec::new(id).unwrap();
            // the wave-map core is sharper by a factor k in log r
            let n = if matches!(id, ModelId::Wm(_)) { 131072 } else { 32768 };
            let grid = make_grid(GridKind::Hybrid, 1e-6, 100.0, n, model.dim).unwrap();
            let op = assemble_l(&model, &grid);
            let lamw: Vec<f64> = grid.nodes().iter().map(|&r| model.lam_w(r)).collect();
            let res = op.apply(&lamw);
            let rel = l2_interior(&grid, &res) / l2_interior(&grid, &lamw);
            assert!(rel < 1e-6, "{id:?}: kernel residual {rel:.3e}");
        }
    }

    #[test]
    fn operator_symmetry_exact() {
        let model = ModelSpec::new(ModelId::Ym4).unwrap();
        let grid = make_grid(GridKind::Hybrid, 1e-5, 50.0, 512, 2).unwrap();
        let op = assemble_l(&model, &grid);
        let u = Field::sample(&grid, |r| (-(r - 1.0) * (r - 1.0)).exp());
        let v = Field::sample(&grid, |r| r * (-(r - 2.0) * (r - 2.0) * 0.5).exp());
        let luv = op.bilinear(&u.values, &v.values);
        let lvu = op.bilinear(&v.values, &u.values);
        assert!(rel_err(luv, lvu) < 1e-14);
        // and the strong form agrees with the bilinear form in the mass metric
        let lu = op.apply(&u.values);
        let pair: f64 = lu
            .iter()
            .zip(&v.values)
            .zip(op.mass())
            .map(|((a, b), m)| a * b * m)
            .sum::<f64>()
            * grid.angular;
        assert!(rel_err(pair, luv) < 1e-12);
    }

    #[test]
    fn free_log_operator_bottom_is_the_mass_term() {
        // potential zeroed: -d^2/dx^2 + 4 on the log grid; spectrum bottom 4
        let model = ModelSpec::new(ModelId::Ym4).unwrap();
        let n = 4000;
        let (x_lo, x_hi) = (-9.0f64, 9.0f64);
        let h = (x_hi - x_lo) / (n - 1) as f64;
        let m = n - 2;
        let keff = model.equivariance.unwrap();
        let diag = vec![2.0 / h + h * keff * keff; m];
        let off = vec![-1.0 / h; m - 1];
        let a = SymTridiag { diag, off };
        let b = SymTridiag {
            diag: vec![h; m],
            off: vec![0.0; m - 1],
        };
        let pencil = crate::num::Pencil { a: &a, b: &b };
        let bottom = pencil.smallest(0.0, 10.0, 1e-12);
        assert!((bottom - 4.0).abs() < 0.05, "bottom {bottom}");
    }

    #[test]
    fn nlw6_negative_eigenpair_properties() {
        let model = ModelSpec::new(ModelId::Nlw6).unwrap();
        let grid = make_grid(GridKind::Uniform, 2e-3, 50.0, 12000, 6).unwrap();
        let sp = negative_eigenpair(&model, &grid).unwrap();
        assert!(sp.nu > 0.0 && sp.nu < 1.0, "nu = {}", sp.nu);
        assert!((sp.nu - 0.531).abs() < 0.01, "nu = {}", sp.nu);
        // positivity and normalization
        assert!(sp.y.values[1..grid.n() - 1].iter().all(|&v| v > -1e-12));
        assert!(rel_err(sp.y.pair_corrected(&sp.y).sqrt(), 1.0) < 1e-12);
        assert!(rel_err(sp.y.l2_norm(), 1.0) < 1e-5);
        // orthogonality to the kernel direction
        let lamw = Field::sample(&grid, |r| model.lam_w(r));
        let ip = sp.y.pair(&lamw) / lamw.l2_norm();
        assert!(ip.abs() < 1e-5, "<Y, LamW> = {ip:.3e}");
    }

    #[test]
    fn negative_eigenpair_rejects_d2_models() {
        let model = ModelSpec::new(ModelId::Ym4).unwrap();
        let grid = make_grid(GridKind::Uniform, 1e-3, 30.0, 2000, 2).unwrap();
        assert!(matches!(
            negative_eigenpair(&model, &grid),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn localizer_constraints_hold() {
        let model = ModelSpec::new(ModelId::Nlw6).unwrap();
        let grid = make_grid(GridKind::Uniform, 2e-3, 50.0, 12000, 6).unwrap();
        let sp = negative_eigenpair(&model, &grid).unwrap();
        let z = build_z(&model, &grid, Some(&sp)).unwrap();
        let zf = z.sample(&grid);
        let lamw = Field::sample(&grid, |r| model.lam_w(r));
        assert!(zf.pair(&sp.y).abs() < 1e-10);
        assert!(rel_err(zf.pair(&lamw), 1.0) < 1e-10);
        // support confined to [1/2, 2]
        for (&r, &v) in grid.nodes().iter().zip(&zf.values) {
            if !(0.5..=2.0).contains(&r) {
                assert_eq!(v, 0.0, "support leak at r = {r}");
            }
        }
    }

    #[test]
    fn localizer_positive_pairing_for_d2() {
        for id in [ModelId::Ym4, ModelId::Wm(3)] {
            let model = ModelSpec::new(id).unwrap();
            let grid = make_grid(GridKind::Hybrid, 1e-5, 50.0, 2048, 2).unwrap();
            let z = build_z(&model, &grid, None).unwrap();
            let quad: f64 = grid
                .nodes()
                .iter()
                .zip(grid.weights())
                .map(|(&r, &w)| z.eval(r) * model.lam_w(r) * w / (r * r))
                .sum();
            assert!(quad > 0.0);
            assert!(rel_err(quad, 1.0) < 1e-10);
        }
    }
}
