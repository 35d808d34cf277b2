//! Radial grids, measure-weighted quadrature and sampled fields.
//!
//! Everything downstream integrates against `r^(d-1) dr` for d = 6 (the
//! six-dimensional radial measure) or d = 2 (equivariant problems). Grids
//! exclude r = 0; regular behaviour at the origin is recovered analytically
//! where it matters.

use crate::error::{Error, Result};
use crate::num::linear_fit;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Uniform,
    Geometric,
    /// Uniform inner block (spacing r_min), geometric mid-section with ratio
    /// 1 + alpha, spacing capped outside so the node budget reaches r_max.
    /// At least half the nodes land below r = 1.
    Hybrid,
}

#[derive(Debug)]
pub struct RadialGrid {
    pub kind: GridKind,
    /// Dimension of the radial measure r^(d-1) dr.
    pub dim: usize,
    /// Total measure of the angular factor (pi^3 for d = 6, 2 pi for d = 2).
    pub angular: f64,
    nodes: Vec<f64>,
    /// Hat-function weights against r^(d-1) dr over [r_1, r_n]; the weighted
    /// sum integrates the piecewise-linear interpolant exactly.
    weights: Vec<f64>,
}

pub fn angular_measure(dim: usize) -> f64 {
    match dim {
        6 => std::f64::consts::PI.powi(3),
        2 => 2.0 * std::f64::consts::PI,
        d => panic!("unsupported measure dimension {d}"),
    }
}

/// integral of r^(d-1) over [a, b]
fn seg_measure(a: f64, b: f64, d: usize) -> f64 {
    (b.powi(d as i32) - a.powi(d as i32)) / d as f64
}

/// integral of r^d over [a, b]
fn seg_moment(a: f64, b: f64, d: usize) -> f64 {
    (b.powi(d as i32 + 1) - a.powi(d as i32 + 1)) / (d as f64 + 1.0)
}

/// First-derivative weights at `z` for an arbitrary stencil (Fornberg).
fn fornberg_first_derivative(z: f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut c0 = vec![0.0; n]; // value weights
    let mut c1 = vec![0.0; n]; // first-derivative weights
    c0[0] = 1.0;
    let mut prod_prev = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mut prod = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            prod *= c3;
            if j == i - 1 {
                c1[i] = prod_prev * (c0[i - 1] - c5 * c1[i - 1]) / prod;
                c0[i] = -prod_prev * c5 * c0[i - 1] / prod;
            }
            c1[j] = (c4 * c1[j] - c0[j]) / c3;
            c0[j] = c4 * c0[j] / c3;
        }
        prod_prev = prod;
    }
    c1
}

fn hat_weights(nodes: &[f64], d: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let h = b - a;
        let m0 = seg_measure(a, b, d);
        let m1 = seg_moment(a, b, d);
        w[i] += (b * m0 - m1) / h;
        w[i + 1] += (m1 - a * m0) / h;
    }
    w
}

impl RadialGrid {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Plain measure-weighted quadrature of nodal values over [r_1, r_n],
    /// multiplied by the angular factor.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.angular * self.integrate_radial(values)
    }

    /// Same without the angular factor.
    pub fn integrate_radial(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum::<f64>()
    }

    /// Quadrature of `g(r) dr` (the measure already folded into `g`) with a
    /// curvature end correction per interval; one order better than the
    /// trapezoid rule wherever g is smooth.
    pub fn integrate_corrected_dr(&self, g: &[f64]) -> f64 {
        let r = &self.nodes;
        let n = r.len();
        let mut d2 = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = r[i] - r[i - 1];
            let h1 = r[i + 1] - r[i];
            d2[i] = 2.0 * (h0 * g[i + 1] - (h0 + h1) * g[i] + h1 * g[i - 1])
                / (h0 * h1 * (h0 + h1));
        }
        d2[0] = d2[1];
        d2[n - 1] = d2[n - 2];
        let mut total = 0.0;
        for i in 0..n - 1 {
            let h = r[i + 1] - r[i];
            total += 0.5 * h * (g[i] + g[i + 1]);
            total -= h * h * h / 24.0 * (d2[i] + d2[i + 1]);
        }
        total
    }

    /// Quadrature of f against the radial measure over (0, infinity):
    /// corrected rule on [r_1, r_n] plus analytic power-law completions of
    /// the truncated head and tail. Returns (value, tail_fraction).
    pub fn integrate_semi_infinite(&self, f: &[f64]) -> (f64, f64) {
        let r = &self.nodes;
        let d = self.dim as f64;
        let g: Vec<f64> = f
            .iter()
            .zip(r)
            .map(|(v, rr)| v * rr.powi(self.dim as i32 - 1))
            .collect();
        let core = self.integrate_corrected_dr(&g);

        // head: f ~ f(r1) (r/r1)^p below r1
        let mut head = 0.0;
        if f[0] != 0.0 && f[1] != 0.0 && (f[0] > 0.0) == (f[1] > 0.0) {
            let p = (f[1] / f[0]).abs().ln() / (r[1] / r[0]).ln();
            if p > -0.5 * d && p < 40.0 {
                head = f[0] * r[0].powi(self.dim as i32) / (p + d);
            }
        }

        // tail: least-squares fit c0 r^-p + c1 r^-(p+2) + c2 r^-(p+4) on the
        // outer stretch, p the rounded log-log slope
        let tail = self.tail_completion(f);
        let total = core + head + tail;
        let frac = if total.abs() > 0.0 {
            (tail.abs() + head.abs()) / total.abs()
        } else {
            0.0
        };
        (self.angular * total, frac)
    }

    fn tail_completion(&self, f: &[f64]) -> f64 {
        let r = &self.nodes;
        let n = r.len();
        let d = self.dim as i32;
        let rmax = r[n - 1];
        let lo = rmax * 0.85;
        let start = r.partition_point(|&x| x < lo);
        if n - start < 12 {
            return 0.0;
        }
        let seg = &f[start..];
        let sgn = if seg.iter().all(|&v| v > 0.0) {
            1.0
        } else if seg.iter().all(|&v| v < 0.0) {
            -1.0
        } else {
            return 0.0;
        };
        let xs: Vec<f64> = r[start..].iter().map(|&x| x.ln()).collect();
        let ys: Vec<f64> = seg.iter().map(|&v| (sgn * v).ln()).collect();
        let (_, slope) = linear_fit(&xs, &ys);
        if !slope.is_finite() || -slope < d as f64 + 0.5 {
            return 0.0;
        }
        // try nearby integer leading powers and keep the best-fitting series
        // f ~ c0 r^-p + c1 r^-(p+2) + c2 r^-(p+4); columns normalized at rmax
        let fscale = seg.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let mut best: Option<(f64, f64)> = None; // (residual, tail)
        for p in [(-slope).floor(), (-slope).round(), (-slope).ceil(), (-slope).round() + 1.0] {
            if (p as i32) < d + 1 {
                continue;
            }
            let basis = |rr: f64, j: usize| (rr / rmax).powf(-(p + 2.0 * j as f64));
            let mut ata = [0.0; 9];
            let mut atb = [0.0; 3];
            for (idx, &rr) in r[start..].iter().enumerate() {
                let row = [basis(rr, 0), basis(rr, 1), basis(rr, 2)];
                for i in 0..3 {
                    for j in 0..3 {
                        ata[i * 3 + j] += row[i] * row[j];
                    }
                    atb[i] += row[i] * seg[idx];
                }
            }
            if !crate::num::solve_dense(&mut ata, &mut atb, 3) {
                continue;
            }
            let mut res = 0.0f64;
            for (idx, &rr) in r[start..].iter().enumerate() {
                let fit = atb[0] * basis(rr, 0) + atb[1] * basis(rr, 1) + atb[2] * basis(rr, 2);
                res += (fit - seg[idx]).powi(2);
            }
            let res = (res / seg.len() as f64).sqrt() / fscale.max(1e-300);
            // analytic continuation: with basis (r/rmax)^-q, the integral of
            // r^(d-1) (r/rmax)^-q over [rmax, inf) is rmax^d/(q - d)
            let mut tail = 0.0;
            for (j, &c) in atb.iter().enumerate() {
                let q = p + 2.0 * j as f64;
                if q - d as f64 > 0.5 {
                    tail += c * rmax.powi(d) / (q - d as f64);
                }
            }
            if best.map_or(true, |(r0, _)| res < r0) {
                best = Some((res, tail));
            }
        }
        match best {
            Some((res, tail)) if res < 1e-2 => tail,
            _ => 0.0,
        }
    }

    /// First derivative by centered five-point differences on the (possibly
    /// nonuniform) grid (Fornberg weights); shorter stencils at the ends.
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let r = &self.nodes;
        let n = r.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let lo = i.saturating_sub(2).min(n.saturating_sub(5));
            let sten = &r[lo..(lo + 5).min(n)];
            let w = fornberg_first_derivative(r[i], sten);
            out[i] = w
                .iter()
                .zip(&values[lo..lo + sten.len()])
                .map(|(a, b)| a * b)
                .sum();
        }
        out
    }

    /// Running integral of `f` against the radial measure from r_1 to each
    /// node (trapezoid on the measure-weighted integrand), head-corrected by
    /// the leading power below r_1. No angular factor.
    pub fn cumulative(&self, f: &[f64]) -> Vec<f64> {
        let r = &self.nodes;
        let n = r.len();
        let di = self.dim as i32;
        let mut acc = vec![0.0; n];
        // head completion as in integrate_semi_infinite
        if f[0] != 0.0 && f[1] != 0.0 && (f[0] > 0.0) == (f[1] > 0.0) {
            let p = (f[1] / f[0]).abs().ln() / (r[1] / r[0]).ln();
            if p > -0.5 * self.dim as f64 && p < 40.0 {
                acc[0] = f[0] * r[0].powi(di) / (p + self.dim as f64);
            }
        }
        for i in 0..n - 1 {
            let g0 = f[i] * r[i].powi(di - 1);
            let g1 = f[i + 1] * r[i + 1].powi(di - 1);
            acc[i + 1] = acc[i] + 0.5 * (r[i + 1] - r[i]) * (g0 + g1);
        }
        acc
    }
}

fn solve_inner_alpha(r_min: f64, n_below: f64) -> f64 {
    // block of spacing r_min up to r* = r_min/alpha, then ratio 1+alpha to 1
    let count = |a: f64| {
        let rstar = (r_min / a).min(1.0);
        (rstar - r_min) / r_min + if rstar < 1.0 { (1.0 / rstar).ln() / a.ln_1p() } else { 0.0 }
    };
    let (mut lo, mut hi) = (1e-9f64, 1.0f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if count(mid) > n_below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Build a radial grid. `kind` controls node placement; weights always
/// follow the r^(d-1) dr measure.
pub fn make_grid(kind: GridKind, r_min: f64, r_max: f64, n: usize, dim: usize) -> Result<Arc<RadialGrid>> {
    if !(r_min > 0.0 && r_min < r_max && r_min.is_finite() && r_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < r_min < r_max, got [{r_min}, {r_max}]"
        )));
    }
    if n < 16 {
        return Err(Error::InvalidArgument(format!("need n >= 16, got {n}")));
    }
    if dim != 2 && dim != 6 {
        return Err(Error::InvalidArgument(format!("measure dimension {dim} not supported")));
    }
    let nodes = match kind {
        GridKind::Uniform => {
            let h = (r_max - r_min) / (n - 1) as f64;
            (0..n).map(|i| r_min + h * i as f64).collect::<Vec<_>>()
        }
        GridKind::Geometric => {
            let q = (r_max / r_min).powf(1.0 / (n - 1) as f64);
            let mut v: Vec<f64> = (0..n).map(|i| r_min * q.powi(i as i32)).collect();
            v[n - 1] = r_max;
            v
        }
        GridKind::Hybrid => {
            if r_min >= 1.0 || r_max <= 1.0 {
                return Err(Error::InvalidArgument(
                    "hybrid grid expects r_min < 1 < r_max".into(),
                ));
            }
            let alpha = solve_inner_alpha(r_min, (n / 2) as f64);
            // inner part: uniform block of spacing r_min, then ratio 1+alpha
            let mut v = vec![r_min];
            let mut r = r_min;
            while r < 1.0 - 1e-12 && v.len() < n {
                let h = (alpha * r).max(r_min).min(1.0 - r + 1e-15 * r);
                r += h;
                v.push(r);
            }
            let i1 = v.len() - 1;
            v[i1] = 1.0;
            let n_rest = n - v.len();
            if n_rest < 8 {
                return Err(Error::InvalidArgument(
                    "hybrid grid: node budget exhausted below r = 1".into(),
                ));
            }
            // outer part: geometric ramp h_{i+1} = q h_i from h1 = alpha,
            // with q solved so the budget lands exactly on r_max
            let h1 = alpha;
            let reach = |q: f64| -> f64 {
                if (q - 1.0).abs() < 1e-14 {
                    h1 * n_rest as f64
                } else {
                    h1 * (q.powi(n_rest as i32) - 1.0) / (q - 1.0)
                }
            };
            let span = r_max - 1.0;
            let q_max = 1.025;
            if reach(q_max) < span {
                return Err(Error::InvalidArgument(format!(
                    "hybrid grid: {n} nodes cannot reach r_max = {r_max} \
                     with bounded grading; increase n or shrink the domain"
                )));
            }
            let q = if reach(1.0) >= span {
                // budget rich enough for a uniform outer finer than h1
                1.0
            } else {
                let (mut lo, mut hi) = (1.0, q_max);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if reach(mid) < span {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            let scale = span / reach(q);
            let mut h = h1 * scale;
            let mut r = 1.0;
            for _ in 0..n_rest {
                r += h;
                h *= q;
                v.push(r);
            }
            *v.last_mut().unwrap() = r_max;
            v
        }
    };
    let weights = hat_weights(&nodes, dim);
    Ok(Arc::new(RadialGrid {
        kind,
        dim,
        angular: angular_measure(dim),
        nodes,
        weights,
    }))
}

/// Grid over an explicit node list (used for coarsened companions).
pub fn grid_from_nodes(kind: GridKind, nodes: Vec<f64>, dim: usize) -> Result<Arc<RadialGrid>> {
    if nodes.len() < 16 {
        return Err(Error::InvalidArgument("need at least 16 nodes".into()));
    }
    if !nodes.windows(2).all(|w| w[1] > w[0] && w[0] > 0.0) {
        return Err(Error::InvalidArgument("nodes must be positive and increasing".into()));
    }
    let weights = hat_weights(&nodes, dim);
    Ok(Arc::new(RadialGrid {
        kind,
        dim,
        angular: angular_measure(dim),
        nodes,
        weights,
    }))
}

/// A sampled radial function.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        assert_eq!(grid.n(), values.len(), "field length must match grid");
        Field { grid, values }
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![0.0; grid.n()],
        }
    }

    pub fn sample(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        Field {
            grid: grid.clone(),
            values: grid.nodes().iter().map(|&r| f(r)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// L2 norm against the model measure (angular factor included).
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(self.grid.weights())
            .map(|(v, w)| v * v * w)
            .sum();
        (s * self.grid.angular).sqrt()
    }

    /// Pairing with the curvature-corrected rule; one order more accurate
    /// than `pair` on smooth integrands.
    pub fn pair_corrected(&self, other: &Field) -> f64 {
        let di = self.grid.dim as i32;
        let g: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .zip(&other.values)
            .map(|((&r, &a), &b)| a * b * r.powi(di - 1))
            .collect();
        self.grid.integrate_corrected_dr(&g) * self.grid.angular
    }

    /// Pairing <f, g> against the measure, angular factor included.
    pub fn pair(&self, other: &Field) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.grid.weights())
            .map(|((a, b), w)| a * b * w)
            .sum();
        s * self.grid.angular
    }

    /// Cubic Hermite interpolation at radius `r`, clamped to the end values
    /// outside the grid range.
    pub fn eval(&self, r: f64) -> f64 {
        let nodes = self.grid.nodes();
        let n = nodes.len();
        if r >= nodes[n - 1] {
            return self.values[n - 1];
        }
        if r <= nodes[0] {
            return self.values[0];
        }
        let j = nodes.partition_point(|&x| x <= r) - 1;
        let j = j.min(n - 2);
        let (x0, x1) = (nodes[j], nodes[j + 1]);
        let h = x1 - x0;
        let t = (r - x0) / h;
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        // finite-difference slopes
        let m0 = if j == 0 {
            (y1 - y0) / h
        } else {
            let hm = x0 - nodes[j - 1];
            let ym = self.values[j - 1];
            ((y1 - y0) / h * hm + (y0 - ym) / hm * h) / (h + hm)
        };
        let m1 = if j + 2 >= n {
            (y1 - y0) / h
        } else {
            let hp = nodes[j + 2] - x1;
            let yp = self.values[j + 2];
            ((yp - y1) / hp * h + (y1 - y0) / h * hp) / (h + hp)
        };
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * h * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * h * (t3 - t2)
    }

    /// CSV with columns r,value at 17 significant digits (round-trip exact).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,value\n");
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(s, "{:.16e},{:.16e}", r, v);
        }
        s
    }

    pub fn values_from_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rs = Vec::new();
        let mut vs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line.starts_with('r') {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let r = parts
                .next()
                .and_then(|x| x.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("bad csv line {i}")))?;
            let v = parts
                .next()
                .and_then(|x| x.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("bad csv line {i}")))?;
            rs.push(r);
            vs.push(v);
        }
        Ok((rs, vs))
    }

    /// Flat JSON array of values.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.values).expect("vec serializes")
    }
}

/// Position-velocity pair in the energy space.
#[derive(Debug, Clone)]
pub struct State {
    pub u: Field,
    pub v: Field,
}

impl State {
    pub fn new(u: Field, v: Field) -> Self {
        assert!(
            Arc::ptr_eq(&u.grid, &v.grid),
            "state components must share a grid"
        );
        State { u, v }
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        State {
            u: Field::zeros(grid),
            v: Field::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.u.grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rel_err;

    #[test]
    fn uniform_grid_spacing() {
        let g = make_grid(GridKind::Uniform, 0.01, 10.0, 1000, 2).unwrap();
        assert_eq!(g.n(), 1000);
        let h = g.nodes()[1] - g.nodes()[0];
        assert!((h - 9.99 / 999.0).abs() < 1e-12);
        assert!((h - 0.01).abs() < 2e-5);
    }

    #[test]
    fn geometric_grid_constant_ratio() {
        let g = make_grid(GridKind::Geometric, 1e-5, 50.0, 4096, 6).unwrap();
        let nodes = g.nodes();
        let q0 = nodes[1] / nodes[0];
        for w in nodes.windows(2).take(4000) {
            assert!(rel_err(w[1] / w[0], q0) < 1e-12);
        }
    }

    #[test]
    fn quadrature_of_constant_is_exact_annulus_measure() {
        for (dim, lo, hi) in [(2usize, 1.0, 2.0), (6, 0.5, 3.0)] {
            let g = make_grid(GridKind::Uniform, lo, hi, 64, dim).unwrap();
            let ones = vec![1.0; g.n()];
            let exact = seg_measure(lo, hi, dim);
            assert!(rel_err(g.integrate_radial(&ones), exact) < 1e-12);
        }
        // spec example: d = 2 on [1, 2] gives (4 - 1)/2 = 1.5 per unit angular factor
        let g = make_grid(GridKind::Uniform, 1.0, 2.0, 128, 2).unwrap();
        assert!(rel_err(g.integrate_radial(&vec![1.0; 128]), 1.5) < 1e-12);
    }

    #[test]
    fn quadrature_exact_for_linear() {
        let g = make_grid(GridKind::Geometric, 0.3, 7.0, 200, 6).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| 2.0 - 3.0 * r).collect();
        let exact = 2.0 * seg_measure(0.3, 7.0, 6) - 3.0 * seg_moment(0.3, 7.0, 6);
        assert!(rel_err(g.integrate_radial(&f), exact) < 1e-12);
    }

    #[test]
    fn hybrid_grid_shape() {
        let g = make_grid(GridKind::Hybrid, 1e-6, 100.0, 8192, 6).unwrap();
        assert_eq!(g.n(), 8192);
        let nodes = g.nodes();
        assert!(nodes[0] == 1e-6);
        assert!((nodes.last().unwrap() - 100.0).abs() < 1e-12);
        let below = nodes.iter().filter(|&&r| r < 1.0).count();
        assert!(below >= 4096 - 1, "want >= n/2 below 1, got {below}");
        // monotone, bounded grading
        for w in nodes.windows(2) {
            assert!(w[1] > w[0]);
        }
        let hs: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        for w in hs.windows(2) {
            let ratio = w[1] / w[0];
            assert!(ratio < 1.0211 && ratio > 0.97, "grading ratio {ratio}");
        }
    }

    #[test]
    fn integrate_zero_is_zero() {
        let g = make_grid(GridKind::Uniform, 0.1, 5.0, 64, 2).unwrap();
        assert_eq!(g.integrate(&vec![0.0; 64]), 0.0);
    }

    #[test]
    fn refinement_order_of_integrate() {
        // self-convergence of the plain weighted rule at order >= 1.9 against
        // the closed-form truncated integral of (1+r^2)^-2 r dr
        let f = |r: f64| (1.0 + r * r).powi(-2);
        let (a, b) = (1e-4f64, 40.0f64);
        let exact = 0.5 * (1.0 / (1.0 + a * a) - 1.0 / (1.0 + b * b));
        let errs: Vec<f64> = [1001usize, 2001, 4001]
            .iter()
            .map(|&n| {
                let g = make_grid(GridKind::Uniform, a, b, n, 2).unwrap();
                let vals: Vec<f64> = g.nodes().iter().map(|&r| f(r)).collect();
                (g.integrate_radial(&vals) - exact).abs()
            })
            .collect();
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(order1 > 1.9 && order2 > 1.9, "orders {order1} {order2}");
    }

    #[test]
    fn non_monotone_parameters_rejected() {
        assert!(make_grid(GridKind::Uniform, 2.0, 1.0, 64, 2).is_err());
        assert!(make_grid(GridKind::Uniform, -1.0, 1.0, 64, 2).is_err());
        assert!(make_grid(GridKind::Uniform, 0.1, 1.0, 4, 2).is_err());
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let g = make_grid(GridKind::Geometric, 0.17, 9.3, 33, 2).unwrap();
        let f = Field::sample(&g, |r| (r.sin() * 1e-7 + r.powi(3)).exp() * 0.123456789012345);
        let text = f.to_csv();
        let (rs, vs) = Field::values_from_csv(&text).unwrap();
        assert_eq!(rs.len(), 33);
        for i in 0..33 {
            assert_eq!(rs[i].to_bits(), g.nodes()[i].to_bits());
            assert_eq!(vs[i].to_bits(), f.values[i].to_bits());
        }
    }

    #[test]
    fn hermite_interpolation_accuracy() {
        // finite-difference slopes give a third-order interpolant
        let mut errs = Vec::new();
        for n in [400usize, 800] {
            let g = make_grid(GridKind::Uniform, 0.5, 10.0, n, 2).unwrap();
            let f = Field::sample(&g, |r| (-r).exp() * r * r);
            let e = [0.87f64, 2.3, 5.55, 9.1]
                .iter()
                .map(|&r| (f.eval(r) - (-r).exp() * r * r).abs())
                .fold(0.0f64, f64::max);
            errs.push(e);
        }
        assert!(errs[0] < 1e-6, "coarse error {}", errs[0]);
        assert!(errs[1] < 1e-6, "fine error {}", errs[1]);
    }
}
