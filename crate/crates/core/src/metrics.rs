//! Distributional comparison of predicted and reference ensembles.

use crate::error::{Error, Result};
use crate::gp::{FieldSample, Grid};
use crate::linalg::{sqrtm_psd, Matrix};

/// Gaussian fitted to an ensemble: sample mean and unbiased covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl EnsembleStats {
    pub fn std(&self) -> Vec<f64> {
        self.cov.diag().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_gaussian(samples: &[Vec<f64>]) -> Result<EnsembleStats> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Contract(format!("need at least 2 samples to fit a covariance, got {n}")));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::Shape("ensemble members differ in length".into()));
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Matrix::zeros(d, d);
    let mut c = vec![0.0; d];
    for s in samples {
        for (ci, (v, m)) in c.iter_mut().zip(s.iter().zip(&mean)) {
            *ci = v - m;
        }
        for i in 0..d {
            let row = &mut cov.data[i * d..i * d + i + 1];
            for (r, cj) in row.iter_mut().zip(&c) {
                *r += c[i] * cj;
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok(EnsembleStats { mean, cov })
}

/// Wasserstein-2 distance between the Gaussians
/// `√(‖μa − μb‖² + tr(Ca + Cb − 2 (Cb^½ Ca Cb^½)^½))`.
pub fn w2_gaussian(a: &EnsembleStats, b: &EnsembleStats) -> Result<f64> {
    if a.dim() != b.dim() || a.cov.rows != a.dim() || b.cov.rows != b.dim() {
        return Err(Error::Shape(format!("W2 between dimensions {} and {}", a.dim(), b.dim())));
    }
    let dmu: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let (rb, clip_b) = sqrtm_psd(&b.cov)?;
    let inner = rb.matmul(&a.cov).matmul(&rb);
    let inner = Matrix::from_fn(inner.rows, inner.cols, |i, j| 0.5 * (inner.get(i, j) + inner.get(j, i)));
    let (root, clip_i) = sqrtm_psd(&inner)?;
    if clip_b > 0.0 || clip_i > 0.0 {
        log::debug!("w2_gaussian clipped negative eigenvalues of magnitude {:.3e}", clip_b.max(clip_i));
    }
    let tr = |m: &Matrix| m.diag().iter().sum::<f64>();
    let bures = tr(&a.cov) + tr(&b.cov) - 2.0 * tr(&root);
    Ok((dmu + bures.max(0.0)).sqrt())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel(reference: &[f64], predicted: &[f64], what: &str) -> Result<f64> {
    if reference.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{what}: reference has {} points, prediction {}",
            reference.len(),
            predicted.len()
        )));
    }
    let denom = norm(reference);
    if denom == 0.0 {
        return Err(Error::Contract(format!("{what}: reference has zero norm")));
    }
    let diff: Vec<f64> = reference.iter().zip(predicted).map(|(r, p)| r - p).collect();
    Ok(norm(&diff) / denom)
}

/// Relative L2 errors `(err_E, err_σ)` of mean and standard deviation.
pub fn relative_errors(
    ref_mean: &[f64],
    ref_std: &[f64],
    pred_mean: &[f64],
    pred_std: &[f64],
) -> Result<(f64, f64)> {
    Ok((rel(ref_mean, pred_mean, "mean")?, rel(ref_std, pred_std, "std")?))
}

pub fn relative_errors_stats(reference: &EnsembleStats, predicted: &EnsembleStats) -> Result<(f64, f64)> {
    relative_errors(&reference.mean, &reference.std(), &predicted.mean, &predicted.std())
}

/// Grid line on which 2D errors are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slice {
    Full,
    /// The line `x = value`.
    X(f64),
    /// The line `y = value`.
    Y(f64),
}

impl Slice {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s == "full" {
            return Some(Slice::Full);
        }
        let (axis, v) = s.split_once('=')?;
        let v: f64 = v.trim().parse().ok()?;
        match axis.trim() {
            "x" => Some(Slice::X(v)),
            "y" => Some(Slice::Y(v)),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Slice::Full => "full".into(),
            Slice::X(v) => format!("x={v}"),
            Slice::Y(v) => format!("y={v}"),
        }
    }

    /// Values along the slice; 1D grids only accept `Full`.
    pub fn extract(&self, grid: Grid, values: &[f64]) -> Result<Vec<f64>> {
        if let Slice::Full = self {
            return Ok(values.to_vec());
        }
        let Grid::D2 { .. } = grid else {
            return Err(Error::Contract("slices need a 2D grid".into()));
        };
        let (xs, ys) = grid.axes();
        let field = FieldSample::new(grid, values.to_vec())?;
        let pts: Vec<[f64; 2]> = match *self {
            Slice::X(x) => ys.iter().map(|&y| [x, y]).collect(),
            Slice::Y(y) => xs.iter().map(|&x| [x, y]).collect(),
            Slice::Full => unreachable!(),
        };
        if pts.iter().any(|&p| !grid.contains(p)) {
            return Err(Error::Domain(format!("slice {} lies outside the grid", self.label())));
        }
        Ok(pts.iter().map(|&p| field.interpolate(p)).collect())
    }
}

/// Errors of every trial for one sensor count.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub m: usize,
    /// `(err_E, err_σ)` per trial.
    pub trials: Vec<(f64, f64)>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub const REPORT_HEADER: &str = "m,err_E_mean,err_E_std,err_sigma_mean,err_sigma_std";

/// CSV of per-`m` trial means and sample standard deviations. With
/// `percent` the values are multiplied by 100 and a note line precedes the
/// header.
pub fn report_table(cases: &[Case], percent: bool) -> Result<String> {
    let mut out = String::new();
    if percent {
        out.push_str("# values are x1e-2\n");
    }
    out.push_str(REPORT_HEADER);
    out.push('\n');
    let scale = if percent { 100.0 } else { 1.0 };
    for case in cases {
        if case.trials.is_empty() {
            return Err(Error::Contract(format!("no trials for m = {}", case.m)));
        }
        let e: Vec<f64> = case.trials.iter().map(|t| t.0 * scale).collect();
        let s: Vec<f64> = case.trials.iter().map(|t| t.1 * scale).collect();
        let (em, es) = mean_std(&e);
        let (sm, ss) = mean_std(&s);
        out.push_str(&format!("{},{em},{es},{sm},{ss}\n", case.m));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn diag_stats(mean: &[f64], var: &[f64]) -> EnsembleStats {
        let mut cov = Matrix::zeros(var.len(), var.len());
        for (i, v) in var.iter().enumerate() {
            cov.set(i, i, *v);
        }
        EnsembleStats { mean: mean.to_vec(), cov }
    }

    fn random_stats(d: usize, rng: &mut Rng) -> EnsembleStats {
        let a = Matrix::from_fn(d, d, |_, _| rng.normal());
        let mut cov = a.matmul(&a.transpose());
        cov.add_diagonal(0.1);
        EnsembleStats {
            mean: rng.normal_vec(d),
            cov,
        }
    }

    #[test]
    fn fit_needs_two_samples() {
        assert!(matches!(fit_gaussian(&[vec![1.0]]), Err(Error::Contract(_))));
    }

    #[test]
    fn fit_antithetic_pair() {
        let u = vec![1.0, -2.0, 0.5];
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let s = fit_gaussian(&[u.clone(), neg]).unwrap();
        assert_eq!(s.mean, vec![0.0; 3]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s.cov.get(i, j), 2.0 * u[i] * u[j]);
            }
        }
    }

    #[test]
    fn fit_is_unbiased() {
        let mut rng = Rng::seeded(0);
        let n = 20_000;
        let samples: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0 + 2.0 * rng.normal(), rng.normal()]).collect();
        let s = fit_gaussian(&samples).unwrap();
        assert!((s.cov.get(0, 0) - 4.0).abs() < 0.15);
        assert!(s.cov.get(0, 1).abs() < 0.05);
        assert!((s.mean[0] - 1.0).abs() < 0.05);
    }

    #[test]
    fn w2_examples() {
        let a = diag_stats(&[0.0], &[1.0]);
        let b = diag_stats(&[1.0], &[4.0]);
        assert!((w2_gaussian(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(w2_gaussian(&a, &a).unwrap() < 1e-8);
        let c = diag_stats(&[3.0, 4.0], &[2.0, 0.5]);
        let d = diag_stats(&[0.0, 0.0], &[2.0, 0.5]);
        assert!((w2_gaussian(&c, &d).unwrap() - 5.0).abs() < 1e-8);
    }

    #[test]
    fn w2_symmetric_and_triangle() {
        let mut rng = Rng::seeded(1);
        for _ in 0..20 {
            let (a, b, c) = (random_stats(4, &mut rng), random_stats(4, &mut rng), random_stats(4, &mut rng));
            let ab = w2_gaussian(&a, &b).unwrap();
            assert!((ab - w2_gaussian(&b, &a).unwrap()).abs() < 1e-8);
            let ac = w2_gaussian(&a, &c).unwrap();
            let cb = w2_gaussian(&c, &b).unwrap();
            assert!(ab <= ac + cb + 1e-6);
            assert!(w2_gaussian(&a, &a).unwrap() < 1e-6);
        }
    }

    #[test]
    fn relative_error_cases() {
        let r = [1.0, -2.0, 2.0];
        let s = [0.5, 0.5, 0.5];
        assert_eq!(relative_errors(&r, &s, &r, &s).unwrap(), (0.0, 0.0));
        let scaled: Vec<f64> = r.iter().map(|x| 1.1 * x).collect();
        let (e, sd) = relative_errors(&r, &s, &scaled, &s).unwrap();
        assert!((e - 0.1).abs() < 1e-12 && sd == 0.0);
        // ‖(1,-2,2) − (1,-1,2)‖ / 3 = 1/3; ‖(0.5,0.5,0.5) − (0.5,0.5,1.5)‖ / √0.75
        let (e, sd) = relative_errors(&r, &s, &[1.0, -1.0, 2.0], &[0.5, 0.5, 1.5]).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-15);
        assert!((sd - 1.0 / 0.75f64.sqrt()).abs() < 1e-15);
        assert!(matches!(relative_errors(&[0.0; 3], &s, &r, &s), Err(Error::Contract(_))));
    }

    #[test]
    fn permuting_points_keeps_errors() {
        let mut rng = Rng::seeded(2);
        let (rm, rs, pm, ps): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) =
            (rng.normal_vec(9), rng.normal_vec(9), rng.normal_vec(9), rng.normal_vec(9));
        let mut idx: Vec<usize> = (0..9).collect();
        rng.shuffle(&mut idx);
        let p = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let (a, b) = relative_errors(&rm, &rs, &pm, &ps).unwrap();
        let (c, d) = relative_errors(&p(&rm), &p(&rs), &p(&pm), &p(&ps)).unwrap();
        assert!((a - c).abs() < 1e-14 && (b - d).abs() < 1e-14);
    }

    #[test]
    fn report_rows() {
        let one = report_table(&[Case { m: 3, trials: vec![(0.05, 0.08)] }], false).unwrap();
        assert_eq!(one, format!("{REPORT_HEADER}\n3,0.05,0,0.08,0\n"));
        let five = Case {
            m: 1,
            trials: vec![(1.0, 2.0), (2.0, 2.0), (3.0, 2.0), (4.0, 2.0), (5.0, 2.0)],
        };
        let csv = report_table(&[five], false).unwrap();
        let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row, vec![1.0, 3.0, 2.5f64.sqrt(), 2.0, 0.0]);
        let pct = report_table(&[Case { m: 2, trials: vec![(0.0481, 0.0857)] }], true).unwrap();
        assert!(pct.starts_with("# "));
        assert!(pct.contains("2,4.81,0,8.57,0"));
        assert!(report_table(&[Case { m: 2, trials: vec![] }], false).is_err());
    }

    #[test]
    fn slices() {
        let grid = Grid::unit_square(11);
        let f = FieldSample::from_fn(grid, |p| p[0] + 10.0 * p[1]);
        let x = Slice::X(0.5).extract(grid, &f.values).unwrap();
        assert_eq!(x.len(), 11);
        assert!((x[10] - 10.5).abs() < 1e-12);
        let y = Slice::Y(0.7).extract(grid, &f.values).unwrap();
        assert!((y[0] - 7.0).abs() < 1e-12);
        assert_eq!(Slice::parse("x = 0.7"), Some(Slice::X(0.7)));
        assert_eq!(Slice::parse("full"), Some(Slice::Full));
        assert!(Slice::X(0.5).extract(Grid::line(0.0, 1.0, 5), &[0.0; 5]).is_err());
    }
}
