//! Second-order finite-difference solvers for elliptic problems with zero
//! Dirichlet boundaries.
//!
//! Both solvers discretize `−c ∇·(k ∇u) = f` in flux form with half-node
//! coefficients taken as arithmetic means of the neighbouring nodal values.

use crate::error::{Error, Result};
use crate::gp::{FieldSample, Grid};

/// Relative residual at which conjugate gradient stops.
pub const CG_TOLERANCE: f64 = 1e-10;

fn check_positive(k: &FieldSample) -> Result<()> {
    if let Some((i, v)) = k.values.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "coefficient must be strictly positive, found {v} at node {i}"
        )));
    }
    Ok(())
}

fn check_same_grid(a: &FieldSample, b: &FieldSample) -> Result<()> {
    if a.grid != b.grid || a.values.len() != b.values.len() {
        return Err(Error::Shape("coefficient and source live on different grids".into()));
    }
    Ok(())
}

/// Tridiagonal solve for `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`.
pub fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let a = if i > 0 { sub[i] } else { 0.0 };
        let denom = diag[i] - if i > 0 { a * c[i - 1] } else { 0.0 };
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Numerical(format!("singular tridiagonal system at row {i}")));
        }
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - if i > 0 { a * d[i - 1] } else { 0.0 }) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Tridiagonal coefficients `(sub, diag, sup)` of the interior system for
/// `−c (k u′)′` on a 1D grid.
pub fn assemble_1d(c: f64, k: &FieldSample) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let Grid::D1 { a, b, n } = k.grid else {
        return Err(Error::Shape("1D solver given a 2D grid".into()));
    };
    if n < 3 {
        return Err(Error::Shape("need at least one interior node".into()));
    }
    check_positive(k)?;
    let h = (b - a) / (n - 1) as f64;
    let s = c / (h * h);
    let kv = &k.values;
    let m = n - 2;
    let (mut sub, mut diag, mut sup) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for r in 0..m {
        let i = r + 1;
        let kw = 0.5 * (kv[i - 1] + kv[i]);
        let ke = 0.5 * (kv[i] + kv[i + 1]);
        sub[r] = -s * kw;
        diag[r] = s * (kw + ke);
        sup[r] = -s * ke;
    }
    Ok((sub, diag, sup))
}

/// Solves `−c (k u′)′ = f` on the grid of `k`, with `u = 0` at both ends.
pub fn solve_diffusion_1d_scaled(c: f64, k: &FieldSample, f: &FieldSample) -> Result<FieldSample> {
    check_same_grid(k, f)?;
    let (sub, diag, sup) = assemble_1d(c, k)?;
    let n = f.values.len();
    let inner = thomas(&sub, &diag, &sup, &f.values[1..n - 1])?;
    let mut u = vec![0.0; n];
    u[1..n - 1].copy_from_slice(&inner);
    FieldSample::new(k.grid, u)
}

/// `−(1/10)(k u′)′ = f`, `u(a) = u(b) = 0`.
pub fn solve_diffusion_1d(k: &FieldSample, f: &FieldSample) -> Result<FieldSample> {
    solve_diffusion_1d_scaled(0.1, k, f)
}

/// Matrix-free interior operator of `−c ∇·(k∇u)` on a tensor grid.
struct Stencil2d {
    nx: usize,
    ny: usize,
    /// Face coefficients already scaled by `c/h²`: east face of node (i, j)
    /// lives at `i * ny + j`, north face likewise.
    east: Vec<f64>,
    north: Vec<f64>,
    diag: Vec<f64>,
}

impl Stencil2d {
    fn new(c: f64, grid: Grid, k: Option<&[f64]>) -> Result<Self> {
        let Grid::D2 {
            x0,
            x1,
            nx,
            y0,
            y1,
            ny,
        } = grid
        else {
            return Err(Error::Shape("2D solver given a 1D grid".into()));
        };
        if nx < 3 || ny < 3 {
            return Err(Error::Shape("need at least one interior node".into()));
        }
        let hx = (x1 - x0) / (nx - 1) as f64;
        let hy = (y1 - y0) / (ny - 1) as f64;
        let (sx, sy) = (c / (hx * hx), c / (hy * hy));
        let kv = |i: usize, j: usize| k.map_or(1.0, |k| k[i * ny + j]);
        let mut east = vec![0.0; nx * ny];
        let mut north = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                if i + 1 < nx {
                    east[i * ny + j] = sx * 0.5 * (kv(i, j) + kv(i + 1, j));
                }
                if j + 1 < ny {
                    north[i * ny + j] = sy * 0.5 * (kv(i, j) + kv(i, j + 1));
                }
            }
        }
        let mut diag = vec![0.0; nx * ny];
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                let id = i * ny + j;
                diag[id] = east[id] + east[id - ny] + north[id] + north[id - 1];
            }
        }
        Ok(Self {
            nx,
            ny,
            east,
            north,
            diag,
        })
    }

    /// `out = A u` on interior nodes; boundary entries of `u` are ignored and
    /// those of `out` are zero.
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        out.fill(0.0);
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                let id = i * ny + j;
                let mut v = self.diag[id] * u[id];
                if i + 1 < nx - 1 {
                    v -= self.east[id] * u[id + ny];
                }
                if i > 1 {
                    v -= self.east[id - ny] * u[id - ny];
                }
                if j + 1 < ny - 1 {
                    v -= self.north[id] * u[id + 1];
                }
                if j > 1 {
                    v -= self.north[id - 1] * u[id - 1];
                }
                out[id] = v;
            }
        }
    }

    fn is_interior(&self, id: usize) -> bool {
        let (i, j) = (id / self.ny, id % self.ny);
        i > 0 && j > 0 && i + 1 < self.nx && j + 1 < self.ny
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient on the interior nodes.
fn cg_solve(op: &Stencil2d, f: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    let mut b = vec![0.0; n];
    let mut interior = 0usize;
    for (id, bi) in b.iter_mut().enumerate() {
        if op.is_interior(id) {
            *bi = f[id];
            interior += 1;
        }
    }
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = op
        .diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let mut r = b;
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let max_iter = 10 * interior;
    for _ in 0..max_iter {
        op.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= CG_TOLERANCE * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numerical(format!(
        "conjugate gradient did not reach relative residual {CG_TOLERANCE:e} in {max_iter} iterations"
    )))
}

/// Solves `−c ∇·(k∇u) = f` with `u = 0` on the boundary; `k = None` means `k ≡ 1`.
pub fn solve_elliptic_2d_scaled(c: f64, k: Option<&FieldSample>, f: &FieldSample) -> Result<FieldSample> {
    if let Some(k) = k {
        check_same_grid(k, f)?;
        check_positive(k)?;
    }
    let op = Stencil2d::new(c, f.grid, k.map(|k| k.values.as_slice()))?;
    let u = cg_solve(&op, &f.values)?;
    FieldSample::new(f.grid, u)
}

/// `−(1/10) Δu = f` on the grid of `f`.
pub fn solve_poisson_2d(f: &FieldSample) -> Result<FieldSample> {
    solve_elliptic_2d_scaled(0.1, None, f)
}

/// `−∇·(k∇u) = f`.
pub fn solve_elliptic_2d(k: &FieldSample, f: &FieldSample) -> Result<FieldSample> {
    solve_elliptic_2d_scaled(1.0, Some(k), f)
}

/// Solves `−c ∇·(k∇u) = f` in whichever dimension the grid has.
pub fn solve(c: f64, k: &FieldSample, f: &FieldSample) -> Result<FieldSample> {
    match f.grid.dim() {
        1 => solve_diffusion_1d_scaled(c, k, f),
        _ => solve_elliptic_2d_scaled(c, Some(k), f),
    }
}

/// Max-norm error against an exact solution.
pub fn max_error(u: &FieldSample, exact: impl Fn([f64; 2]) -> f64) -> f64 {
    u.values
        .iter()
        .enumerate()
        .map(|(i, v)| (v - exact(u.grid.point(i))).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize) -> Grid {
        Grid::line(-1.0, 1.0, n)
    }

    #[test]
    fn zero_source_gives_zero() {
        let g = line(41);
        let k = FieldSample::from_fn(g, |p| 1.0 + p[0] * p[0]);
        let f = FieldSample::from_fn(g, |_| 0.0);
        assert!(solve_diffusion_1d(&k, &f).unwrap().values.iter().all(|&v| v == 0.0));

        let g2 = Grid::unit_square(11);
        let f2 = FieldSample::from_fn(g2, |_| 0.0);
        assert!(solve_poisson_2d(&f2).unwrap().values.iter().all(|&v| v == 0.0));
        let k2 = FieldSample::from_fn(g2, |p| 2.0 + p[0]);
        assert!(solve_elliptic_2d(&k2, &f2).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_positive_coefficient() {
        let g = line(11);
        let k = FieldSample::from_fn(g, |p| p[0]);
        let f = FieldSample::from_fn(g, |_| 1.0);
        assert!(matches!(solve_diffusion_1d(&k, &f), Err(Error::Domain(_))));
        let g2 = Grid::unit_square(6);
        let k2 = FieldSample::from_fn(g2, |p| p[0] - 0.5);
        let f2 = FieldSample::from_fn(g2, |_| 1.0);
        assert!(matches!(solve_elliptic_2d(&k2, &f2), Err(Error::Domain(_))));
    }

    #[test]
    fn thomas_tiny_system() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] -> x = [1 1 1]
        let x = thomas(&[0.0, -1.0, -1.0], &[2.0; 3], &[-1.0, -1.0, 0.0], &[1.0, 0.0, 1.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert!(thomas(&[0.0], &[0.0], &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn assembled_1d_matrix_is_symmetric_and_dominant() {
        let g = line(31);
        let k = FieldSample::from_fn(g, |p| (2.0 * p[0]).exp());
        let (sub, diag, sup) = assemble_1d(0.1, &k).unwrap();
        for r in 0..diag.len() - 1 {
            assert_eq!(sup[r], sub[r + 1]);
        }
        for r in 0..diag.len() {
            assert!(diag[r] >= sub[r].abs() + sup[r].abs() - 1e-12);
        }
    }

    #[test]
    fn diffusion_1d_linearity() {
        let g = line(101);
        let k = FieldSample::from_fn(g, |p| 1.5 + p[0].sin());
        let f1 = FieldSample::from_fn(g, |p| p[0].cos());
        let f2 = FieldSample::from_fn(g, |p| (3.0 * p[0]).sin());
        let mix = FieldSample::from_fn(g, |p| 2.0 * p[0].cos() - 0.5 * (3.0 * p[0]).sin());
        let (u1, u2, um) = (
            solve_diffusion_1d(&k, &f1).unwrap(),
            solve_diffusion_1d(&k, &f2).unwrap(),
            solve_diffusion_1d(&k, &mix).unwrap(),
        );
        for i in 0..101 {
            assert!((um.values[i] - (2.0 * u1.values[i] - 0.5 * u2.values[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_sign_flip_and_cross_check() {
        let g = Grid::unit_square(21);
        let f = FieldSample::from_fn(g, |p| (3.0 * p[0]).sin() + p[1]);
        let neg = FieldSample::from_fn(g, |p| -((3.0 * p[0]).sin() + p[1]));
        let u = solve_poisson_2d(&f).unwrap();
        let un = solve_poisson_2d(&neg).unwrap();
        let scale = u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in u.values.iter().zip(&un.values) {
            assert!((a + b).abs() <= 1e-8 * scale);
        }
        // −∇·(1·∇w) = f is the Poisson problem with u = w / 10.
        let ones = FieldSample::from_fn(g, |_| 1.0);
        let w = solve_elliptic_2d(&ones, &f).unwrap();
        for (a, b) in u.values.iter().zip(&w.values) {
            assert!((a - 10.0 * b).abs() <= 1e-7 * scale);
        }
    }

    #[test]
    fn diffusion_1d_second_order() {
        let exact = |p: [f64; 2]| (PI * p[0]).sin();
        let mut errs = vec![];
        for n in [101, 201, 401] {
            let g = line(n);
            let k = FieldSample::from_fn(g, |_| 1.0);
            let f = FieldSample::from_fn(g, |p| PI * PI / 10.0 * (PI * p[0]).sin());
            errs.push(max_error(&solve_diffusion_1d(&k, &f).unwrap(), exact));
        }
        let h = 2.0 / 400.0;
        assert!(errs[2] < 1.0 * h * h, "{errs:?}");
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "{ratio}");
        }
    }
}
