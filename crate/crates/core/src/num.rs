//! Small numerical kernels: tridiagonal algebra, low-rank updates, fits.

/// Symmetric tridiagonal matrix given by its diagonal and off-diagonal.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            out[i] = v;
        }
    }

    /// Number of eigenvalues strictly below `sigma`, by the Sturm sequence
    /// (count of negative pivots of the LDL^T factorization of A - sigma I).
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.n();
        let mut count = 0;
        let mut d = self.diag[0] - sigma;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let e = self.off[i - 1];
            let mut dd = self.diag[i] - sigma - e * e / d;
            if dd == 0.0 {
                dd = f64::EPSILON * (self.diag[i].abs() + e.abs() + 1.0);
            }
            if dd < 0.0 {
                count += 1;
            }
            d = dd;
        }
        count
    }

    /// Gershgorin bounds on the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut rad = 0.0;
            if i > 0 {
                rad += self.off[i - 1].abs();
            }
            if i + 1 < n {
                rad += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - rad);
            hi = hi.max(self.diag[i] + rad);
        }
        (lo, hi)
    }

    /// k-th smallest eigenvalue (k = 0 is the bottom) by bisection on the
    /// Sturm count, to relative tolerance `tol` of the spectral width.
    pub fn eigenvalue(&self, k: usize, tol: f64) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let width = (hi - lo).max(1e-300);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < tol * width {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solve (A - sigma I) x = b by LU with partial pivoting specialized to
    /// tridiagonal structure (fill-in limited to a second superdiagonal).
    pub fn solve_shifted(&self, sigma: f64, b: &[f64], x: &mut [f64]) {
        let n = self.n();
        // U stored as (diag, sup, sup2) per pivot row
        let mut ud = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        x.copy_from_slice(b);
        // rolling partially-eliminated row: entries at columns (k, k+1, k+2)
        let mut cur = (
            self.diag[0] - sigma,
            if n > 1 { self.off[0] } else { 0.0 },
            0.0,
        );
        for k in 0..n.saturating_sub(1) {
            let mut inc = (
                self.off[k],
                self.diag[k + 1] - sigma,
                if k + 2 < n { self.off[k + 1] } else { 0.0 },
            );
            if inc.0.abs() > cur.0.abs() {
                std::mem::swap(&mut cur, &mut inc);
                x.swap(k, k + 1);
            }
            let piv = if cur.0 == 0.0 { f64::EPSILON } else { cur.0 };
            let m = inc.0 / piv;
            let r1 = inc.1 - m * cur.1;
            let r2 = inc.2 - m * cur.2;
            x[k + 1] -= m * x[k];
            ud[k] = piv;
            u1[k] = cur.1;
            u2[k] = cur.2;
            cur = (r1, r2, 0.0);
        }
        ud[n - 1] = if cur.0 == 0.0 { f64::EPSILON } else { cur.0 };
        // back substitution
        x[n - 1] /= ud[n - 1];
        if n >= 2 {
            x[n - 2] = (x[n - 2] - u1[n - 2] * x[n - 1]) / ud[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (x[i] - u1[i] * x[i + 1] - u2[i] * x[i + 2]) / ud[i];
        }
    }
}

/// Pencil A - mu B with A, B symmetric tridiagonal and B positive definite.
/// `count_below(mu)` counts pencil eigenvalues below mu.
pub struct Pencil<'a> {
    pub a: &'a SymTridiag,
    pub b: &'a SymTridiag,
}

impl Pencil<'_> {
    fn shifted(&self, mu: f64) -> SymTridiag {
        let diag = self
            .a
            .diag
            .iter()
            .zip(&self.b.diag)
            .map(|(x, y)| x - mu * y)
            .collect();
        let off = self
            .a
            .off
            .iter()
            .zip(&self.b.off)
            .map(|(x, y)| x - mu * y)
            .collect();
        SymTridiag { diag, off }
    }

    pub fn count_below(&self, mu: f64) -> usize {
        self.shifted(mu).count_below(0.0)
    }

    /// Smallest generalized eigenvalue by bisection.
    pub fn smallest(&self, lo0: f64, hi0: f64, tol: f64) -> f64 {
        let (mut lo, mut hi) = (lo0, hi0);
        // widen until the bracket actually contains the bottom eigenvalue
        let mut spread = hi - lo;
        while self.count_below(lo) > 0 {
            lo -= spread;
            spread *= 2.0;
        }
        let mut spread = hi - lo;
        while self.count_below(hi) == 0 {
            hi += spread;
            spread *= 2.0;
        }
        let width = hi - lo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > 0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < tol * width.max(1e-30) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Count of eigenvalues of T + tau U U^T strictly below sigma, where U holds
/// k penalty columns. By the Haynsworth inertia additivity,
/// neg(T - s + tau UU^T) = neg(T - s) + neg(-I/tau - U^T (T-s)^{-1} U) - k.
pub fn count_below_penalized(t: &SymTridiag, cols: &[Vec<f64>], tau: f64, sigma: f64) -> usize {
    let base = t.count_below(sigma);
    let k = cols.len();
    if k == 0 {
        return base;
    }
    let n = t.n();
    let mut cap = vec![0.0; k * k];
    let mut sol = vec![0.0; n];
    for (j, u) in cols.iter().enumerate() {
        t.solve_shifted(sigma, u, &mut sol);
        for (i, v) in cols.iter().enumerate() {
            let dot: f64 = v.iter().zip(&sol).map(|(x, y)| x * y).sum();
            cap[i * k + j] = -dot;
        }
    }
    for i in 0..k {
        cap[i * k + i] -= 1.0 / tau;
    }
    (base + dense_negative_inertia(&mut cap, k)).saturating_sub(k)
}

/// Negative inertia of a small symmetric matrix via symmetric pivoting-free
/// LDL^T (adequate for the well-scaled capacitance matrices we build).
fn dense_negative_inertia(m: &mut [f64], k: usize) -> usize {
    let mut neg = 0;
    for p in 0..k {
        let piv = m[p * k + p];
        if piv < 0.0 {
            neg += 1;
        }
        let piv = if piv == 0.0 { f64::EPSILON } else { piv };
        for i in p + 1..k {
            let f = m[i * k + p] / piv;
            for j in p + 1..k {
                m[i * k + j] -= f * m[p * k + j];
            }
        }
    }
    neg
}

/// Dense solve for small systems (Gaussian elimination, partial pivoting).
pub fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for p in 0..n {
        let mut best = p;
        for i in p + 1..n {
            if a[i * n + p].abs() > a[best * n + p].abs() {
                best = i;
            }
        }
        if a[best * n + p].abs() < 1e-300 {
            return false;
        }
        if best != p {
            for j in 0..n {
                a.swap(p * n + j, best * n + j);
            }
            b.swap(p, best);
        }
        for i in p + 1..n {
            let f = a[i * n + p] / a[p * n + p];
            for j in p..n {
                a[i * n + j] -= f * a[p * n + j];
            }
            b[i] -= f * b[p];
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i * n + j] * b[j];
        }
        b[i] = s / a[i * n + i];
    }
    true
}

/// Least-squares straight line y = a + b x. Returns (a, b).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| u * v).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return (sy / n, 0.0);
    }
    let b = (n * sxy - sx * sy) / det;
    let a = (sy - b * sx) / n;
    (a, b)
}

/// Relative difference |a - b| / max(|a|, |b|, floor).
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-300);
    (a - b).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sturm_count_matches_known_spectrum() {
        // -d^2/dx^2 on 5 interior points of [0, 6] (h = 1): eigs 2 - 2 cos(k pi / 6)
        let t = SymTridiag {
            diag: vec![2.0; 5],
            off: vec![-1.0; 4],
        };
        let exact: Vec<f64> = (1..=5)
            .map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / 6.0).cos())
            .collect();
        for (k, e) in exact.iter().enumerate() {
            let v = t.eigenvalue(k, 1e-14);
            assert!((v - e).abs() < 1e-10, "eig {k}: {v} vs {e}");
        }
        assert_eq!(t.count_below(exact[2] + 1e-9), 3);
    }

    #[test]
    fn shifted_solve_inverts() {
        let t = SymTridiag {
            diag: vec![3.0, 4.0, 5.0, 4.0],
            off: vec![1.0, -2.0, 0.5],
        };
        let b = vec![1.0, -1.0, 2.0, 0.5];
        let mut x = vec![0.0; 4];
        t.solve_shifted(0.7, &b, &mut x);
        let mut ax = vec![0.0; 4];
        t.apply(&x, &mut ax);
        for i in 0..4 {
            assert!((ax[i] - 0.7 * x[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn penalized_count_pushes_constrained_direction_up() {
        let t = SymTridiag {
            diag: vec![-1.0, 1.0, 2.0],
            off: vec![0.0, 0.0],
        };
        // one negative eigenvalue; penalizing its eigenvector removes it
        assert_eq!(t.count_below(0.0), 1);
        let cols = vec![vec![1.0, 0.0, 0.0]];
        assert_eq!(count_below_penalized(&t, &cols, 1e12, 0.0), 0);
    }

    #[test]
    fn dense_solve_small() {
        let mut a = vec![2.0, 1.0, -1.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(solve_dense(&mut a, &mut b, 2));
        assert!((2.0 * b[0] + b[1] - 1.0).abs() < 1e-14);
        assert!((-b[0] + 4.0 * b[1] - 2.0).abs() < 1e-14);
    }
}
