//! Gaussian-process random fields on rectangular grids.
//!
//! Grids include their endpoints. Two-dimensional grids are tensor products
//! stored row-major with `y` varying fastest: the value at `(x_i, y_j)` lives
//! at index `i * ny + j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, Matrix};
use crate::rng::Rng;

use std::f64::consts::PI;

/// `σ² exp(−(x − x′)² / l²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel1D {
    pub amplitude: f64,
    pub length: f64,
}

impl Kernel1D {
    pub fn new(amplitude: f64, length: f64) -> Result<Self> {
        let k = Self { amplitude, length };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::validation("sigma", "amplitude must be finite and >= 0"));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::validation("length", "correlation length must be > 0"));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        self.amplitude * self.amplitude * (-(d * d) / (self.length * self.length)).exp()
    }
}

/// `σ² exp(−(x − x′)² / 2l1² − (y − y′)² / 2l2²)`; σ is 1 in every experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel2D {
    pub amplitude: f64,
    pub l1: f64,
    pub l2: f64,
}

impl Kernel2D {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        let k = Self {
            amplitude: 1.0,
            l1,
            l2,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::validation("sigma", "amplitude must be finite and >= 0"));
        }
        for (key, l) in [("l1", self.l1), ("l2", self.l2)] {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::validation(key, "correlation length must be > 0"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        self.amplitude * self.amplitude * self.axis_x(p[0] - q[0]) * self.axis_y(p[1] - q[1])
    }

    /// Unit-amplitude factor along x.
    pub fn axis_x(&self, d: f64) -> f64 {
        (-(d * d) / (2.0 * self.l1 * self.l1)).exp()
    }

    pub fn axis_y(&self, d: f64) -> f64 {
        (-(d * d) / (2.0 * self.l2 * self.l2)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Se1d(Kernel1D),
    Se2d(Kernel2D),
}

impl Kernel {
    pub fn eval(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        match self {
            Kernel::Se1d(k) => k.eval(p[0], q[0]),
            Kernel::Se2d(k) => k.eval(p, q),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Se1d(k) => k.validate(),
            Kernel::Se2d(k) => k.validate(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Kernel::Se1d(_) => 1,
            Kernel::Se2d(_) => 2,
        }
    }

    /// Prior variance at any point.
    pub fn variance(&self) -> f64 {
        self.eval([0.0; 2], [0.0; 2])
    }
}

/// Closed-form mean functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeanFunction {
    Zero,
    Constant { value: f64 },
    /// `amp · sin(freq · π · x + phase) + offset`
    Sine {
        amp: f64,
        freq: f64,
        phase: f64,
        offset: f64,
    },
    /// `amp · (sin(freq · π · x) + sin(freq · π · y))`
    SineSum2d { amp: f64, freq: f64 },
}

impl MeanFunction {
    /// `sin(2πx)`
    pub fn sin_2pi() -> Self {
        MeanFunction::Sine {
            amp: 1.0,
            freq: 2.0,
            phase: 0.0,
            offset: 0.0,
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match *self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant { value } => value,
            MeanFunction::Sine {
                amp,
                freq,
                phase,
                offset,
            } => amp * (freq * PI * p[0] + phase).sin() + offset,
            MeanFunction::SineSum2d { amp, freq } => {
                amp * ((freq * PI * p[0]).sin() + (freq * PI * p[1]).sin())
            }
        }
    }
}

/// Equispaced grid, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Grid {
    D1 {
        a: f64,
        b: f64,
        n: usize,
    },
    D2 {
        x0: f64,
        x1: f64,
        nx: usize,
        y0: f64,
        y1: f64,
        ny: usize,
    },
}

fn axis(a: f64, b: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        b
    } else {
        a + (b - a) * i as f64 / (n - 1) as f64
    }
}

impl Grid {
    pub fn line(a: f64, b: f64, n: usize) -> Self {
        Grid::D1 { a, b, n }
    }

    /// `n × n` grid on the unit square.
    pub fn unit_square(n: usize) -> Self {
        Grid::D2 {
            x0: 0.0,
            x1: 1.0,
            nx: n,
            y0: 0.0,
            y1: 1.0,
            ny: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Grid::D1 { a, b, n } => n >= 2 && a < b,
            Grid::D2 {
                x0,
                x1,
                nx,
                y0,
                y1,
                ny,
            } => nx >= 2 && ny >= 2 && x0 < x1 && y0 < y1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation("grid", format!("degenerate grid {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Grid::D1 { .. } => 1,
            Grid::D2 { .. } => 2,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Grid::D1 { n, .. } => n,
            Grid::D2 { nx, ny, .. } => nx * ny,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point `idx` in storage order; 1D points carry `0.0` as the second coordinate.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match *self {
            Grid::D1 { a, b, n } => [axis(a, b, n, idx), 0.0],
            Grid::D2 {
                x0,
                x1,
                nx,
                y0,
                y1,
                ny,
            } => [axis(x0, x1, nx, idx / ny), axis(y0, y1, ny, idx % ny)],
        }
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Coordinates along x (and y) as separate axes.
    pub fn axes(&self) -> (Vec<f64>, Vec<f64>) {
        match *self {
            Grid::D1 { a, b, n } => ((0..n).map(|i| axis(a, b, n, i)).collect(), vec![0.0]),
            Grid::D2 {
                x0,
                x1,
                nx,
                y0,
                y1,
                ny,
            } => (
                (0..nx).map(|i| axis(x0, x1, nx, i)).collect(),
                (0..ny).map(|j| axis(y0, y1, ny, j)).collect(),
            ),
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Grid::D1 { a, b, .. } => p[0] >= a && p[0] <= b,
            Grid::D2 { x0, x1, y0, y1, .. } => p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1,
        }
    }

    /// Cell index and local coordinate in `[0, 1]` along one axis.
    fn locate(a: f64, b: f64, n: usize, x: f64) -> (usize, f64) {
        let h = (b - a) / (n - 1) as f64;
        let s = ((x - a) / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    }
}

/// Values of a function on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl FieldSample {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "grid holds {} points, got {} values",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    /// Piecewise-linear (1D) or bilinear (2D) interpolation; points outside
    /// the grid are clamped to it.
    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        match self.grid {
            Grid::D1 { a, b, n } => {
                let (i, t) = Grid::locate(a, b, n, p[0]);
                if t == 0.0 {
                    return self.values[i];
                }
                (1.0 - t) * self.values[i] + t * self.values[i + 1]
            }
            Grid::D2 {
                x0,
                x1,
                nx,
                y0,
                y1,
                ny,
            } => {
                let (i, tx) = Grid::locate(x0, x1, nx, p[0]);
                let (j, ty) = Grid::locate(y0, y1, ny, p[1]);
                let v = |a: usize, b: usize| self.values[a * ny + b];
                (1.0 - tx) * ((1.0 - ty) * v(i, j) + ty * v(i, j + 1))
                    + tx * ((1.0 - ty) * v(i + 1, j) + ty * v(i + 1, j + 1))
            }
        }
    }

    /// Samples this field onto another grid by interpolation.
    pub fn resample(&self, target: Grid) -> FieldSample {
        FieldSample::from_fn(target, |p| self.interpolate(p))
    }
}

/// Symmetric Gram matrix; the lower triangle is a bitwise mirror of the upper.
pub fn gram_matrix(points: &[[f64; 2]], kernel: &Kernel) -> Matrix {
    let n = points.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(points[i], points[j]);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// Cross-covariance `K(a_i, b_j)`.
pub fn cross_covariance(a: &[[f64; 2]], b: &[[f64; 2]], kernel: &Kernel) -> Matrix {
    Matrix::from_fn(a.len(), b.len(), |i, j| kernel.eval(a[i], b[j]))
}

/// A Gaussian field, optionally exponentiated (log-normal field).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpField {
    pub mean: MeanFunction,
    pub kernel: Kernel,
    /// When set, the Gaussian process models `log` of the field.
    pub log_normal: bool,
}

impl GpField {
    pub fn transform(&self, v: f64) -> f64 {
        if self.log_normal {
            v.exp()
        } else {
            v
        }
    }
}

#[derive(Clone, Debug)]
enum Factor {
    Dense(Matrix),
    /// `L = Lx ⊗ Ly` for a separable kernel on a tensor grid.
    Kron { lx: Matrix, ly: Matrix },
}

/// Reusable sampler: mean on the grid plus a square-root factor of the Gram
/// matrix. Samples are `μ + L ξ` with `ξ` standard normal.
#[derive(Clone, Debug)]
pub struct GpSampler {
    grid: Grid,
    mean: Vec<f64>,
    factor: Factor,
    jitter: f64,
}

impl GpSampler {
    pub fn new(mean: &MeanFunction, kernel: &Kernel, grid: Grid) -> Result<Self> {
        kernel.validate()?;
        grid.validate()?;
        if kernel.dim() != grid.dim() {
            return Err(Error::Config(format!(
                "{}D kernel on a {}D grid",
                kernel.dim(),
                grid.dim()
            )));
        }
        let mean_values = grid.points().iter().map(|&p| mean.eval(p)).collect();
        let (factor, jitter) = match (kernel, grid) {
            (Kernel::Se2d(k), Grid::D2 { .. }) => {
                let (xs, ys) = grid.axes();
                let s = k.amplitude;
                let kx = Matrix::from_fn(xs.len(), xs.len(), |i, j| s * k.axis_x(xs[i] - xs[j]));
                let ky = Matrix::from_fn(ys.len(), ys.len(), |i, j| s * k.axis_y(ys[i] - ys[j]));
                let (lx, jx) = cholesky_jitter(&kx)?;
                let (ly, jy) = cholesky_jitter(&ky)?;
                (Factor::Kron { lx, ly }, jx.max(jy))
            }
            _ => {
                let (l, j) = cholesky_jitter(&gram_matrix(&grid.points(), kernel))?;
                (Factor::Dense(l), j)
            }
        };
        Ok(Self {
            grid,
            mean: mean_values,
            factor,
            jitter,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Jitter added to the diagonal (per axis factor for separable kernels).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// One draw of the Gaussian values on the grid.
    pub fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        let n = self.mean.len();
        let xi = rng.normal_vec(n);
        let mut out = self.mean.clone();
        match &self.factor {
            Factor::Dense(l) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &l.row(i)[..=i];
                    *o += row.iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Factor::Kron { lx, ly } => {
                // (Lx ⊗ Ly) vec(Ξ) = vec(Lx Ξ Lyᵀ) with Ξ stored nx × ny.
                let (nx, ny) = (lx.rows, ly.rows);
                let xi = Matrix {
                    rows: nx,
                    cols: ny,
                    data: xi,
                };
                let prod = lx.matmul(&xi).matmul(&ly.transpose());
                for (o, v) in out.iter_mut().zip(&prod.data) {
                    *o += v;
                }
            }
        }
        out
    }
}

/// `n` independent samples of a Gaussian process on `grid`.
pub fn sample_gp(
    mean: &MeanFunction,
    kernel: &Kernel,
    grid: Grid,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<FieldSample>> {
    let sampler = GpSampler::new(mean, kernel, grid)?;
    Ok((0..n)
        .map(|_| FieldSample {
            grid,
            values: sampler.draw(rng),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k1(s: f64, l: f64) -> Kernel {
        Kernel::Se1d(Kernel1D::new(s, l).unwrap())
    }

    #[test]
    fn kernel_1d_values() {
        let k = Kernel1D::new(0.5, 0.1).unwrap();
        assert_eq!(k.eval(0.3, 0.3), 0.25);
        assert_eq!(k.eval(0.1, 0.73), k.eval(0.73, 0.1));
        let expected = 0.25 * (-1.0f64).exp();
        assert!((k.eval(0.0, 0.1) - expected).abs() < 1e-15);
        assert!((k.eval(0.0, 0.1) - 0.0919699).abs() < 1e-7);
    }

    #[test]
    fn kernel_2d_values() {
        let k = Kernel2D::new(0.1, 0.1).unwrap();
        assert_eq!(k.eval([0.4, 0.2], [0.4, 0.2]), 1.0);
        assert!((k.eval([0.0, 0.0], [0.1, 0.0]) - 0.606531).abs() < 1e-6);
        let (p, q) = ([0.2, 0.7], [0.35, 0.61]);
        let sep = k.eval(p, [q[0], p[1]]) * k.eval(p, [p[0], q[1]]);
        assert!((k.eval(p, q) - sep).abs() < 1e-15);
    }

    #[test]
    fn kernel_validation() {
        assert!(Kernel1D::new(-1.0, 0.1).is_err());
        assert!(Kernel1D::new(1.0, 0.0).is_err());
        assert!(Kernel2D::new(0.1, -0.1).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let one = gram_matrix(&[[0.3, 0.0]], &k1(0.5, 0.1));
        assert_eq!(one.data, vec![0.25]);

        let dup = gram_matrix(&[[0.3, 0.0], [0.3, 0.0]], &k1(1.0, 0.2));
        assert!(dup.data.iter().all(|&v| v == 1.0));

        let kern = k1(1.0, 1.0);
        let pts = [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]];
        let g = gram_matrix(&pts, &kern);
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = pts[i][0] - pts[j][0];
                assert!((g.get(i, j) - (-d * d).exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let mut rng = Rng::seeded(4);
        let pts: Vec<[f64; 2]> = (0..40).map(|_| [rng.uniform(), rng.uniform()]).collect();
        let k = Kernel::Se2d(Kernel2D::new(0.1, 0.2).unwrap());
        let g = gram_matrix(&pts, &k);
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn experiment_kernels_factor_accurately() {
        for (s, l, n) in [(0.5, 0.1, 401), (0.3, 0.05, 401), (0.1, 0.1, 401)] {
            let grid = Grid::line(-1.0, 1.0, n);
            let k = gram_matrix(&grid.points(), &k1(s, l));
            let (l, jitter) = cholesky_jitter(&k).unwrap();
            let mut kj = k.clone();
            kj.add_diagonal(jitter);
            let resid = l.matmul(&l.transpose()).sub(&kj).max_abs();
            assert!(resid < 1e-9, "residual {resid}");
        }
    }

    #[test]
    fn zero_amplitude_returns_mean() {
        let grid = Grid::line(-1.0, 1.0, 51);
        let mean = MeanFunction::sin_2pi();
        let samples = sample_gp(&mean, &k1(0.0, 0.1), grid, 3, &mut Rng::seeded(1)).unwrap();
        for s in samples {
            for (i, v) in s.values.iter().enumerate() {
                assert_eq!(*v, mean.eval(grid.point(i)));
            }
        }
    }

    #[test]
    fn monte_carlo_moments() {
        let grid = Grid::line(0.0, 0.1, 2);
        let kern = k1(0.5, 0.1);
        let mean = MeanFunction::Sine {
            amp: 1.0,
            freq: 1.0,
            phase: 1.0,
            offset: 0.0,
        };
        let n = 10_000;
        let s = sample_gp(&mean, &kern, grid, n, &mut Rng::seeded(11)).unwrap();
        let m0 = s.iter().map(|f| f.values[0]).sum::<f64>() / n as f64;
        let m1 = s.iter().map(|f| f.values[1]).sum::<f64>() / n as f64;
        let cov = s
            .iter()
            .map(|f| (f.values[0] - m0) * (f.values[1] - m1))
            .sum::<f64>()
            / (n - 1) as f64;
        let target = kern.eval(grid.point(0), grid.point(1));
        assert!((cov - target).abs() / target < 0.05, "{cov} vs {target}");
        let se = (kern.variance() / n as f64).sqrt();
        assert!((m0 - mean.eval(grid.point(0))).abs() < 3.0 * se);
        assert!((m1 - mean.eval(grid.point(1))).abs() < 3.0 * se);
    }

    #[test]
    fn separable_sampler_matches_covariance() {
        let grid = Grid::unit_square(6);
        let k = Kernel::Se2d(Kernel2D::new(0.3, 0.2).unwrap());
        let sampler = GpSampler::new(&MeanFunction::Zero, &k, grid).unwrap();
        let mut rng = Rng::seeded(5);
        let n = 20_000;
        let (a, b) = (7, 8);
        let mut acc = 0.0;
        for _ in 0..n {
            let v = sampler.draw(&mut rng);
            acc += v[a] * v[b];
        }
        let cov = acc / n as f64;
        let target = k.eval(grid.point(a), grid.point(b));
        assert!((cov - target).abs() / target < 0.05, "{cov} vs {target}");

        let Factor::Kron { lx, ly } = &sampler.factor else { panic!() };
        let gram = gram_matrix(&grid.points(), &k);
        for r in 0..36 {
            for c in 0..36 {
                let (i, j, p, q) = (r / 6, r % 6, c / 6, c % 6);
                let mut kx = 0.0;
                let mut ky = 0.0;
                for t in 0..6 {
                    kx += lx.get(i, t) * lx.get(p, t);
                    ky += ly.get(j, t) * ly.get(q, t);
                }
                assert!((kx * ky - gram.get(r, c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let grid = Grid::line(-1.0, 1.0, 101);
        let k = k1(0.5, 0.1);
        let a = sample_gp(&MeanFunction::sin_2pi(), &k, grid, 4, &mut Rng::seeded(9)).unwrap();
        let b = sample_gp(&MeanFunction::sin_2pi(), &k, grid, 4, &mut Rng::seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(a[0].values.iter().all(|v| v.exp() > 0.0));
    }

    #[test]
    fn grid_ordering_and_interpolation() {
        let g = Grid::D2 {
            x0: 0.0,
            x1: 1.0,
            nx: 3,
            y0: 0.0,
            y1: 2.0,
            ny: 5,
        };
        assert_eq!(g.point(1), [0.0, 0.5]);
        assert_eq!(g.point(5), [0.5, 0.0]);
        assert_eq!(g.point(14), [1.0, 2.0]);
        let f = FieldSample::from_fn(g, |p| 2.0 * p[0] - 3.0 * p[1] + 1.0);
        let v = f.interpolate([0.37, 1.21]);
        assert!((v - (2.0 * 0.37 - 3.0 * 1.21 + 1.0)).abs() < 1e-12);

        let line = FieldSample::from_fn(Grid::line(-1.0, 1.0, 11), |p| p[0] * 4.0);
        assert!((line.interpolate([0.33, 0.0]) - 1.32).abs() < 1e-12);
        assert_eq!(line.interpolate([1.0, 0.0]), 4.0);
        assert_eq!(line.interpolate([-1.0, 0.0]), -4.0);
    }
}
