//! Exact Gaussian-process conditioning and reference ensembles pushed through
//! the PDE solvers.

use serde::Serialize;

use crate::dataset::{restrict, DatasetHeader, FieldDrawer, FieldLaw, OperatorDataset, ProblemSpec, ProblemTag};
use crate::error::{Error, Result};
use crate::gp::{cross_covariance, gram_matrix, FieldSample, GpField, Grid, Kernel, MeanFunction};
use crate::linalg::{cholesky, cholesky_jitter, cholesky_solve, solve_lower_in_place, Matrix};
use crate::pde;
use crate::rng::Rng;
use crate::set_embed::Sensor;
use crate::train::{Ensemble, NoiseSpec};

/// Posterior mean and covariance of a GP on a set of target points.
#[derive(Clone, Debug, PartialEq)]
pub struct GpPosterior {
    pub points: Vec<[f64; 2]>,
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub noise_var: f64,
    pub observations: Vec<Sensor>,
}

impl GpPosterior {
    pub fn variance(&self) -> Vec<f64> {
        self.cov.diag()
    }
}

/// Factor of `K(x_obs, x_obs) + σ² I`.
fn observation_factor(obs: &[Sensor], kernel: &Kernel, noise_var: f64) -> Result<Matrix> {
    let locs: Vec<[f64; 2]> = obs.iter().map(|s| s.loc).collect();
    let mut k = gram_matrix(&locs, kernel);
    k.add_diagonal(noise_var);
    cholesky(&k).map_err(|_| {
        Error::Numerical(format!(
            "observation Gram ({n}×{n}) is singular at noise variance {noise_var}; \
             sensors may be duplicated, add jitter or observation noise",
            n = obs.len()
        ))
    })
}

/// Conditions the prior `(mean, kernel)` on `obs` with i.i.d. Gaussian noise
/// of variance `noise_var` and evaluates the posterior at `points`.
pub fn gp_posterior(
    mean: &MeanFunction,
    kernel: &Kernel,
    obs: &[Sensor],
    noise_var: f64,
    points: &[[f64; 2]],
) -> Result<GpPosterior> {
    kernel.validate()?;
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::validation("noise_var", "must be finite and >= 0"));
    }
    let prior_mean: Vec<f64> = points.iter().map(|&p| mean.eval(p)).collect();
    let mut cov = gram_matrix(points, kernel);
    if obs.is_empty() {
        return Ok(GpPosterior {
            points: points.to_vec(),
            mean: prior_mean,
            cov,
            noise_var,
            observations: vec![],
        });
    }
    let l = observation_factor(obs, kernel, noise_var)?;
    let locs: Vec<[f64; 2]> = obs.iter().map(|s| s.loc).collect();
    let resid: Vec<f64> = obs.iter().map(|s| s.value - mean.eval(s.loc)).collect();
    let alpha = cholesky_solve(&l, &resid);
    // A = L⁻¹ K(x_obs, x), one column per target point.
    let k_og = cross_covariance(&locs, points, kernel);
    let (m, n) = (obs.len(), points.len());
    let mut a = Matrix::zeros(n, m);
    let mut col = vec![0.0; m];
    for j in 0..n {
        for i in 0..m {
            col[i] = k_og.get(i, j);
        }
        solve_lower_in_place(&l, &mut col);
        a.data[j * m..(j + 1) * m].copy_from_slice(&col);
    }
    let post_mean: Vec<f64> = (0..n)
        .map(|j| prior_mean[j] + (0..m).map(|i| k_og.get(i, j) * alpha[i]).sum::<f64>())
        .collect();
    for r in 0..n {
        for c in 0..=r {
            let dot: f64 = a.row(r).iter().zip(a.row(c)).map(|(x, y)| x * y).sum();
            let v = cov.get(r, c) - dot;
            cov.set(r, c, v);
            cov.set(c, r, v);
        }
    }
    Ok(GpPosterior {
        points: points.to_vec(),
        mean: post_mean,
        cov,
        noise_var,
        observations: obs.to_vec(),
    })
}

/// `n` draws `μ + L ξ` with `L Lᵀ = Σ + jitter·I`.
pub fn sample_posterior(post: &GpPosterior, n: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    let (l, _) = cholesky_jitter(&post.cov)?;
    let d = post.mean.len();
    Ok((0..n)
        .map(|_| {
            let xi = rng.normal_vec(d);
            (0..d)
                .map(|i| post.mean[i] + l.row(i)[..=i].iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        })
        .collect())
}

/// Pathwise posterior sampler for a separable 2D kernel on a tensor grid.
///
/// Prior draws are taken on the tensor grid whose axes are augmented with the
/// sensor coordinates, so the grid values and the values at the sensors are
/// jointly exact; each draw is then updated with
/// `g + K(x, x_obs)(K_obs + σ² I)⁻¹(y − g(x_obs) − ε)`.
struct PathwiseSampler {
    lx: Matrix,
    ly: Matrix,
    ny_aug: usize,
    mean_aug: Vec<f64>,
    /// Augmented-grid indices of the original grid points and the sensors.
    grid_idx: Vec<usize>,
    obs_idx: Vec<usize>,
    /// `K(x, x_obs)`, `n_grid × m`.
    k_go: Matrix,
    l_obs: Matrix,
    values: Vec<f64>,
    noise_sd: f64,
}

fn merge_axis(base: &[f64], extra: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut axis = base.to_vec();
    for v in extra {
        if !axis.contains(&v) {
            axis.push(v);
        }
    }
    axis
}

impl PathwiseSampler {
    fn new(mean: &MeanFunction, kernel: &Kernel, grid: Grid, obs: &[Sensor], noise_var: f64) -> Result<Self> {
        let Kernel::Se2d(k) = kernel else {
            return Err(Error::Contract("pathwise sampling needs a separable 2D kernel".into()));
        };
        let (xs, ys) = grid.axes();
        let ax = merge_axis(&xs, obs.iter().map(|s| s.loc[0]));
        let ay = merge_axis(&ys, obs.iter().map(|s| s.loc[1]));
        let kx = Matrix::from_fn(ax.len(), ax.len(), |i, j| k.amplitude * k.axis_x(ax[i] - ax[j]));
        let ky = Matrix::from_fn(ay.len(), ay.len(), |i, j| k.axis_y(ay[i] - ay[j]));
        let (lx, _) = cholesky_jitter(&kx)?;
        let (ly, _) = cholesky_jitter(&ky)?;
        let ny_aug = ay.len();
        let mut mean_aug = Vec::with_capacity(ax.len() * ny_aug);
        for &x in &ax {
            for &y in &ay {
                mean_aug.push(mean.eval([x, y]));
            }
        }
        let pos = |axis: &[f64], v: f64| axis.iter().position(|&a| a == v).expect("merged axis");
        let grid_idx = (0..xs.len())
            .flat_map(|i| (0..ys.len()).map(move |j| i * ny_aug + j))
            .collect();
        let obs_idx = obs
            .iter()
            .map(|s| pos(&ax, s.loc[0]) * ny_aug + pos(&ay, s.loc[1]))
            .collect();
        let locs: Vec<[f64; 2]> = obs.iter().map(|s| s.loc).collect();
        Ok(Self {
            lx,
            ly,
            ny_aug,
            mean_aug,
            grid_idx,
            obs_idx,
            k_go: cross_covariance(&grid.points(), &locs, kernel),
            l_obs: observation_factor(obs, kernel, noise_var)?,
            values: obs.iter().map(|s| s.value).collect(),
            noise_sd: noise_var.sqrt(),
        })
    }

    fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        let nx = self.lx.rows;
        let xi = Matrix {
            rows: nx,
            cols: self.ny_aug,
            data: rng.normal_vec(nx * self.ny_aug),
        };
        let prod = self.lx.matmul(&xi).matmul(&self.ly.transpose());
        let g: Vec<f64> = prod.data.iter().zip(&self.mean_aug).map(|(a, b)| a + b).collect();
        let resid: Vec<f64> = self
            .obs_idx
            .iter()
            .zip(&self.values)
            .map(|(&i, y)| y - g[i] - self.noise_sd * rng.normal())
            .collect();
        let w = cholesky_solve(&self.l_obs, &resid);
        self.grid_idx
            .iter()
            .enumerate()
            .map(|(r, &i)| g[i] + self.k_go.row(r).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// Observation-space noise variance of the GP, given the sensor noise.
fn native_noise_var(field: &GpField, noise: &NoiseSpec) -> Result<f64> {
    match (*noise, field.log_normal) {
        (NoiseSpec::None, _) => Ok(0.0),
        // κ e^ε with ε ~ N(0, σ²) is log κ + ε.
        (NoiseSpec::Multiplicative { sigma }, true) | (NoiseSpec::Additive { sigma }, false) => Ok(sigma * sigma),
        (NoiseSpec::Multiplicative { .. }, false) => Err(Error::Contract(
            "multiplicative noise on a Gaussian field has no Gaussian posterior".into(),
        )),
        (NoiseSpec::Additive { .. }, true) => Err(Error::Contract(
            "additive noise on a log-normal field has no Gaussian posterior".into(),
        )),
    }
}

/// Sensor values mapped into the space where the GP lives.
fn native_observations(field: &GpField, obs: &[Sensor]) -> Result<Vec<Sensor>> {
    obs.iter()
        .map(|s| {
            if field.log_normal {
                if !(s.value > 0.0) {
                    return Err(Error::Domain(format!(
                        "log-normal field observed at non-positive value {}",
                        s.value
                    )));
                }
                Ok(Sensor {
                    loc: s.loc,
                    value: s.value.ln(),
                })
            } else {
                Ok(*s)
            }
        })
        .collect()
}

/// Conditioned input fields and the resulting solutions.
#[derive(Clone, Debug)]
pub struct ReferenceEnsemble {
    pub input_grid: Grid,
    pub output_grid: Grid,
    /// Observed-field samples on the input grid, after the transform.
    pub inputs: Vec<Vec<f64>>,
    pub solutions: Ensemble,
}

/// Monte Carlo reference law of `u` given the observations: condition the
/// observed field's GP in its own space, transform, draw the hidden field
/// from its prior, solve.
pub fn reference_ensemble(
    spec: &ProblemSpec,
    obs: &[Sensor],
    noise: &NoiseSpec,
    n: usize,
    rng: &mut Rng,
) -> Result<ReferenceEnsemble> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::validation("n_reference", "must be at least 1"));
    }
    let FieldLaw::Random { field } = *spec.observed_law() else {
        return Err(Error::Contract("observed field must be random".into()));
    };
    let noise_var = native_noise_var(&field, noise)?;
    let native = native_observations(&field, obs)?;
    let grid = spec.input_grid;
    let draws: Vec<Vec<f64>> = match (field.kernel, grid) {
        (Kernel::Se2d(_), Grid::D2 { .. }) if !native.is_empty() => {
            let sampler = PathwiseSampler::new(&field.mean, &field.kernel, grid, &native, noise_var)?;
            (0..n).map(|_| sampler.draw(rng)).collect()
        }
        _ => {
            let post = gp_posterior(&field.mean, &field.kernel, &native, noise_var, &grid.points())?;
            sample_posterior(&post, n, rng)?
        }
    };
    let drawer = FieldDrawer::new(spec)?;
    let mut inputs = Vec::with_capacity(n);
    let mut solutions = Vec::with_capacity(n);
    for mut v in draws {
        v.iter_mut().for_each(|x| *x = field.transform(*x));
        let observed = FieldSample::new(grid, v)?;
        let (k, f) = match spec.observed {
            crate::dataset::Observed::Coefficient => (
                observed,
                FieldSample::new(grid, drawer.draw_source(rng))?,
            ),
            crate::dataset::Observed::Source => (
                FieldSample::new(grid, drawer.draw_coefficient(rng))?,
                observed,
            ),
        };
        let u = pde::solve(spec.scale, &k, &f)?;
        solutions.push(restrict(&u, spec.output_grid).values);
        inputs.push(match spec.observed {
            crate::dataset::Observed::Coefficient => k.values,
            crate::dataset::Observed::Source => f.values,
        });
    }
    Ok(ReferenceEnsemble {
        input_grid: grid,
        output_grid: spec.output_grid,
        inputs,
        solutions: Ensemble::from_samples(solutions)?,
    })
}

#[derive(Serialize)]
struct ReferenceMeta<'a> {
    spec: &'a ProblemSpec,
    observations: &'a [Sensor],
    noise: &'a NoiseSpec,
}

/// Reference ensemble as a dataset tagged `reference`.
pub fn reference_to_dataset(
    reference: &ReferenceEnsemble,
    spec: &ProblemSpec,
    obs: &[Sensor],
    noise: &NoiseSpec,
    seed: u64,
) -> Result<OperatorDataset> {
    let n = reference.inputs.len();
    let header = DatasetHeader {
        problem: ProblemTag::Reference,
        n,
        seed,
        input_grid: reference.input_grid,
        output_grid: reference.output_grid,
        metadata: serde_json::to_value(ReferenceMeta {
            spec,
            observations: obs,
            noise,
        })
        .expect("metadata serializes"),
    };
    OperatorDataset::new(
        header,
        reference.inputs.concat(),
        reference.solutions.samples.concat(),
    )
}
