//! Conditional VAE around a branch–trunk operator network.
//!
//! The decoder predicts `Σ_n b_n([h ∥ z]) t_n(y)` at output points `y`; the
//! encoder maps `[h ∥ ū]` to the mean and log-variance of a diagonal Gaussian
//! over `z`. With `d_z = 0` there is no latent channel and no encoder, which
//! gives the deterministic VIDON baseline.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mlp, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::set_embed::{EmbedConfig, SensorSet, SetEmbedder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed: EmbedConfig,
    /// Number of branch/trunk basis functions.
    pub p: usize,
    /// Latent dimension; 0 selects the deterministic mode.
    pub d_z: usize,
    /// Output-domain dimension (trunk input width).
    pub out_dim: usize,
    /// Number of output grid points `M` seen by the encoder.
    pub m_out: usize,
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    /// Artificial output-noise variance `σ_u²`.
    pub sigma_u2: f64,
    /// KL weight; 1 gives the plain ELBO.
    pub beta: f64,
    /// Fixed factor on the decoder output. The encoder sees targets divided
    /// by it, so the networks work at unit scale when outputs are small.
    #[serde(default = "unit")]
    pub output_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        if self.p == 0 {
            return Err(Error::validation("p", "must be at least 1"));
        }
        if self.out_dim == 0 || self.out_dim > 2 {
            return Err(Error::validation("out_dim", "must be 1 or 2"));
        }
        if self.d_z > 0 && self.m_out == 0 {
            return Err(Error::validation("m_out", "encoder needs at least one output point"));
        }
        if !(self.sigma_u2 > 0.0) || !self.sigma_u2.is_finite() {
            return Err(Error::validation("sigma_u2", "must be positive"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::validation("beta", "must be non-negative"));
        }
        if !(self.output_scale > 0.0) || !self.output_scale.is_finite() {
            return Err(Error::validation("output_scale", "must be positive"));
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.d_z == 0
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UqSonet {
    pub config: ModelConfig,
    pub embed: SetEmbedder,
    pub branch: Mlp,
    pub trunk: Mlp,
    pub encoder: Option<Mlp>,
}

/// Inputs of one training step.
#[derive(Clone, Debug)]
pub struct Batch {
    pub sets: Vec<SensorSet>,
    /// `B × M` target values on the output points.
    pub targets: Tensor,
}

/// Value of the loss together with its two terms.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub loss: Var,
    pub kl: f64,
    pub recon: f64,
}

impl UqSonet {
    /// Builds every network; parameters land in `store` in a fixed order.
    pub fn new(store: &mut ParamStore, config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let embed = SetEmbedder::new(store, &config.embed, rng)?;
        let code = embed.code_dim();
        let branch = Mlp::new(store, "branch", &sizes(code + config.d_z, &config.branch_hidden, config.p), rng)?;
        let trunk = Mlp::new(store, "trunk", &sizes(config.out_dim, &config.trunk_hidden, config.p), rng)?;
        let encoder = if config.d_z > 0 {
            Some(Mlp::new(
                store,
                "encoder",
                &sizes(code + config.m_out, &config.encoder_hidden, 2 * config.d_z),
                rng,
            )?)
        } else {
            None
        };
        Ok(Self {
            config,
            embed,
            branch,
            trunk,
            encoder,
        })
    }

    pub fn d_z(&self) -> usize {
        self.config.d_z
    }

    pub fn code_dim(&self) -> usize {
        self.embed.code_dim()
    }

    /// Trunk features `[M, p]` at the given points.
    pub fn trunk_features(&self, g: &mut Graph, store: &ParamStore, points: &[[f64; 2]]) -> Result<Var> {
        let d = self.config.out_dim;
        let mut data = Vec::with_capacity(points.len() * d);
        for p in points {
            data.extend_from_slice(&p[..d]);
        }
        let y = g.constant(Tensor::matrix(points.len(), d, data)?);
        self.trunk.forward(g, store, y)
    }

    /// Predictions `[S, M]` from codes `h: [S, code]`, latents `z: [S, d_z]`
    /// and trunk features `[M, p]`.
    pub fn decode(&self, g: &mut Graph, store: &ParamStore, h: Var, z: Option<Var>, trunk: Var) -> Result<Var> {
        if g.value(h).cols() != self.code_dim() {
            return Err(Error::Config(format!(
                "code has {} values, branch expects {}",
                g.value(h).cols(),
                self.code_dim()
            )));
        }
        let input = match (z, self.d_z()) {
            (None, 0) => h,
            (Some(z), d) if d > 0 => {
                let zv = g.value(z);
                if zv.cols() != d || zv.rows() != g.value(h).rows() {
                    return Err(Error::Config(format!(
                        "latent of shape {:?} for d_z = {d}",
                        zv.shape()
                    )));
                }
                g.concat_cols(&[h, z])?
            }
            (None, d) => return Err(Error::Config(format!("decoder needs a latent of size {d}"))),
            (Some(_), _) => return Err(Error::Config("deterministic decoder takes no latent".into())),
        };
        let b = self.branch.forward(g, store, input)?;
        let out = g.matmul_nt(b, trunk)?;
        Ok(match self.config.output_scale {
            s if s == 1.0 => out,
            s => g.scale(out, s),
        })
    }

    /// `(μ_z, log σ², σ²)` for codes `h` and targets `u_bar: [S, M]`.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, h: Var, u_bar: Var) -> Result<(Var, Var, Var)> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::Config("deterministic model has no encoder".into()))?;
        let m = g.value(u_bar).cols();
        if m != self.config.m_out {
            return Err(Error::Config(format!(
                "encoder expects {} output values, got {m}",
                self.config.m_out
            )));
        }
        let u_bar = match self.config.output_scale {
            s if s == 1.0 => u_bar,
            s => g.scale(u_bar, 1.0 / s),
        };
        let input = g.concat_cols(&[h, u_bar])?;
        let out = enc.forward(g, store, input)?;
        let d = self.d_z();
        let mu = g.slice_cols(out, 0, d)?;
        let logvar = g.slice_cols(out, d, 2 * d)?;
        let var = g.exp(logvar);
        Ok((mu, logvar, var))
    }

    /// Mean loss over the batch. Draws one latent per sample from `rng`.
    pub fn elbo_loss(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &Batch,
        points: &[[f64; 2]],
        rng: &mut Rng,
    ) -> Result<LossParts> {
        let refs: Vec<&SensorSet> = batch.sets.iter().collect();
        let h = self.embed.forward(g, store, &refs)?;
        let trunk = self.trunk_features(g, store, points)?;
        let target = g.constant(batch.targets.clone());
        if self.d_z() == 0 {
            let pred = self.decode(g, store, h, None, trunk)?;
            let loss = mse(g, pred, target)?;
            let recon = g.value(loss).item()?;
            return Ok(LossParts { loss, kl: 0.0, recon });
        }
        let b = batch.sets.len();
        let (mu, logvar, var) = self.encode(g, store, h, target)?;
        let xi = Tensor::matrix(b, self.d_z(), rng.normal_vec(b * self.d_z()))?;
        let z = reparam(g, mu, var, xi)?;
        let pred = self.decode(g, store, h, Some(z), trunk)?;
        let kl = kl_gauss(g, mu, logvar, var)?;
        let recon = recon_term(g, pred, target, self.config.sigma_u2)?;
        let kl_w = if self.config.beta == 1.0 { kl } else { g.scale(kl, self.config.beta) };
        let loss = g.add(kl_w, recon)?;
        Ok(LossParts {
            loss,
            kl: g.value(kl).item()?,
            recon: g.value(recon).item()?,
        })
    }

    /// Deterministic-mode predictions `[S, M]`.
    pub fn vidon_forward(&self, g: &mut Graph, store: &ParamStore, sets: &[&SensorSet], points: &[[f64; 2]]) -> Result<Var> {
        let h = self.embed.forward(g, store, sets)?;
        let trunk = self.trunk_features(g, store, points)?;
        self.decode(g, store, h, None, trunk)
    }

    /// Predictions for one code and several latent draws, `[n, M]`.
    pub fn predict_with_latents(
        &self,
        store: &ParamStore,
        code: &[f64],
        latents: &[Vec<f64>],
        points: &[[f64; 2]],
    ) -> Result<Tensor> {
        let mut g = Graph::new();
        let trunk = self.trunk_features(&mut g, store, points)?;
        let n = latents.len().max(1);
        let mut hdata = Vec::with_capacity(n * code.len());
        for _ in 0..n {
            hdata.extend_from_slice(code);
        }
        let h = g.constant(Tensor::matrix(n, code.len(), hdata)?);
        let z = if self.d_z() == 0 {
            None
        } else {
            if latents.is_empty() {
                return Err(Error::Contract("need at least one latent draw".into()));
            }
            let zdata: Vec<f64> = latents.iter().flatten().copied().collect();
            Some(g.constant(Tensor::matrix(n, self.d_z(), zdata)?))
        };
        let pred = self.decode(&mut g, store, h, z, trunk)?;
        Ok(g.value(pred).clone())
    }
}

/// `z = μ + √σ² ⊙ ξ`.
pub fn reparam(g: &mut Graph, mu: Var, var: Var, xi: Tensor) -> Result<Var> {
    let xi = g.constant(xi);
    let sd = g.sqrt(var);
    let noise = g.mul(sd, xi)?;
    g.add(mu, noise)
}

/// Batch mean of `½(−Σ log σ² + Σ σ² + ‖μ‖² − d_z)`.
pub fn kl_gauss(g: &mut Graph, mu: Var, logvar: Var, var: Var) -> Result<Var> {
    let (b, d) = (g.value(mu).rows(), g.value(mu).cols());
    let s_var = g.sum(var);
    let s_log = g.sum(logvar);
    let mu2 = g.square(mu);
    let s_mu = g.sum(mu2);
    let t = g.sub(s_var, s_log)?;
    let t = g.add(t, s_mu)?;
    let dz = g.constant(Tensor::scalar((b * d) as f64));
    let t = g.sub(t, dz)?;
    Ok(g.scale(t, 0.5 / b as f64))
}

/// `½(−Σ log σ² + Σ σ² + ‖μ‖² − d_z)` for one Gaussian.
pub fn kl_gauss_value(mu: &[f64], var: &[f64]) -> f64 {
    let mut s = 0.0;
    for (m, v) in mu.iter().zip(var) {
        s += v - v.ln() + m * m;
    }
    0.5 * (s - mu.len() as f64)
}

/// Mean of squared differences over every entry, summed in storage order.
pub fn mse(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let n = g.value(pred).len();
    let diff = g.sub(pred, target)?;
    let sq = g.square(diff);
    let s = g.sum(sq);
    Ok(g.div_const(s, n as f64))
}

/// `Σ_{i,j} (Ĝ_ij − u_ij)² / (2 B M σ_u²)`, evaluated as the grid mean
/// squared error divided by `2σ_u²`.
pub fn recon_term(g: &mut Graph, pred: Var, target: Var, sigma_u2: f64) -> Result<Var> {
    let m = mse(g, pred, target)?;
    Ok(g.div_const(m, 2.0 * sigma_u2))
}

/// Grid-mean squared error of two equally shaped buffers, same summation order
/// as the loss.
pub fn mse_value(pred: &[f64], target: &[f64]) -> f64 {
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            d * d
        })
        .sum();
    s / pred.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::set_embed::Sensor;

    pub(crate) fn tiny_config(d_z: usize) -> ModelConfig {
        ModelConfig {
            embed: EmbedConfig {
                dim: 1,
                heads: 2,
                d_emb: 8,
                q: 4,
                lambda_hidden: vec![6],
                head_hidden: vec![6],
            },
            p: 5,
            d_z,
            out_dim: 1,
            m_out: 6,
            branch_hidden: vec![7],
            trunk_hidden: vec![7],
            encoder_hidden: vec![7],
            sigma_u2: 1e-3,
            beta: 1.0,
            output_scale: 1.0,
        }
    }

    fn points(m: usize) -> Vec<[f64; 2]> {
        (0..m).map(|i| [-1.0 + 2.0 * i as f64 / (m - 1) as f64, 0.0]).collect()
    }

    fn batch(rng: &mut Rng, b: usize, m: usize, mo: usize) -> Batch {
        let sets = (0..b)
            .map(|_| {
                SensorSet::new((0..m).map(|_| Sensor::new_1d(rng.uniform_in(-1.0, 1.0), rng.normal())).collect())
                    .unwrap()
            })
            .collect();
        Batch {
            sets,
            targets: Tensor::matrix(b, mo, rng.normal_vec(b * mo)).unwrap(),
        }
    }

    fn zero_mlp(store: &mut ParamStore, m: &Mlp) {
        for (w, b) in m.layers() {
            store.get_mut(*w).data_mut().fill(0.0);
            store.get_mut(*b).data_mut().fill(0.0);
        }
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_gauss_value(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        assert!((kl_gauss_value(&[1.0], &[1.0]) - 0.5).abs() < 1e-15);
        assert!((kl_gauss_value(&[0.0, 0.0], &[2.0, 2.0]) - (1.0 - 2f64.ln())).abs() < 1e-15);

        let mut g = Graph::new();
        let mu = g.constant(Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap());
        let lv = g.constant(Tensor::matrix(2, 1, vec![0.0, 2f64.ln()]).unwrap());
        let var = g.exp(lv);
        let kl = kl_gauss(&mut g, mu, lv, var).unwrap();
        let expected = 0.5 * (kl_gauss_value(&[1.0], &[1.0]) + kl_gauss_value(&[0.0], &[2.0]));
        assert!((g.value(kl).item().unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn kl_is_non_negative() {
        let mut rng = Rng::seeded(8);
        for _ in 0..1000 {
            let mu: Vec<f64> = rng.normal_vec(3);
            let var: Vec<f64> = (0..3).map(|_| (2.0 * rng.normal()).exp()).collect();
            assert!(kl_gauss_value(&mu, &var) >= 0.0);
        }
    }

    #[test]
    fn reparam_limits_and_moments() {
        let mut g = Graph::new();
        let mu = g.constant(Tensor::matrix(1, 2, vec![0.3, -1.2]).unwrap());
        let var = g.constant(Tensor::matrix(1, 2, vec![1e-30, 1e-30]).unwrap());
        let z = reparam(&mut g, mu, var, Tensor::matrix(1, 2, vec![2.0, -3.0]).unwrap()).unwrap();
        let zv = g.value(z).data();
        assert!((zv[0] - 0.3).abs() < 1e-14 && (zv[1] + 1.2).abs() < 1e-14);

        let n = 10_000;
        let mut rng = Rng::seeded(3);
        let mut g = Graph::new();
        let mu = g.constant(Tensor::filled(&[n, 1], 2.0));
        let var = g.constant(Tensor::filled(&[n, 1], 1.5));
        let xi = Tensor::matrix(n, 1, rng.normal_vec(n)).unwrap();
        let z = reparam(&mut g, mu, var, xi).unwrap();
        let d = g.value(z).data();
        let m = d.iter().sum::<f64>() / n as f64;
        let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m - 2.0).abs() / 2.0 < 0.05, "{m}");
        assert!((v - 1.5).abs() / 1.5 < 0.05, "{v}");
    }

    #[test]
    fn zero_encoder_gives_prior() {
        let mut store = ParamStore::new();
        let model = UqSonet::new(&mut store, tiny_config(2), &mut Rng::seeded(1)).unwrap();
        zero_mlp(&mut store, model.encoder.as_ref().unwrap());
        let mut rng = Rng::seeded(2);
        let b = batch(&mut rng, 3, 2, 6);
        let mut g = Graph::new();
        let refs: Vec<&SensorSet> = b.sets.iter().collect();
        let h = model.embed.forward(&mut g, &store, &refs).unwrap();
        let u = g.constant(b.targets.clone());
        let (mu, _, var) = model.encode(&mut g, &store, h, u).unwrap();
        assert!(g.value(mu).data().iter().all(|&v| v == 0.0));
        assert!(g.value(var).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn encoder_width_mismatch_is_config_error() {
        let mut store = ParamStore::new();
        let model = UqSonet::new(&mut store, tiny_config(2), &mut Rng::seeded(1)).unwrap();
        let mut g = Graph::new();
        let h = g.constant(Tensor::zeros(&[1, model.code_dim()]));
        let u = g.constant(Tensor::zeros(&[1, 5]));
        assert!(matches!(model.encode(&mut g, &store, h, u), Err(Error::Config(_))));
        let trunk = model.trunk_features(&mut g, &store, &points(6)).unwrap();
        assert!(matches!(model.decode(&mut g, &store, h, None, trunk), Err(Error::Config(_))));
    }

    #[test]
    fn hand_set_encoder() {
        let mut cfg = tiny_config(1);
        cfg.encoder_hidden.clear();
        cfg.embed.heads = 1;
        cfg.embed.q = 1;
        cfg.m_out = 1;
        let mut store = ParamStore::new();
        let model = UqSonet::new(&mut store, cfg, &mut Rng::seeded(0)).unwrap();
        let (w, b) = model.encoder.as_ref().unwrap().layers()[0];
        // input [h, u] -> [μ, log σ²]
        store.get_mut(w).data_mut().copy_from_slice(&[1.0, 0.5, 2.0, -1.0]);
        store.get_mut(b).data_mut().copy_from_slice(&[0.1, 0.2]);
        let mut g = Graph::new();
        let h = g.constant(Tensor::matrix(1, 1, vec![0.4]).unwrap());
        let u = g.constant(Tensor::matrix(1, 1, vec![-0.3]).unwrap());
        let (mu, lv, var) = model.encode(&mut g, &store, h, u).unwrap();
        let mu_e = 0.4 * 1.0 + (-0.3) * 2.0 + 0.1;
        let lv_e = 0.4 * 0.5 + (-0.3) * -1.0 + 0.2;
        assert!((g.value(mu).item().unwrap() - mu_e).abs() < 1e-15);
        assert!((g.value(lv).item().unwrap() - lv_e).abs() < 1e-15);
        assert!((g.value(var).item().unwrap() - f64::exp(lv_e)).abs() < 1e-15);
    }

    #[test]
    fn decode_matches_dense_product_and_is_bilinear() {
        let mut store = ParamStore::new();
        let model = UqSonet::new(&mut store, tiny_config(2), &mut Rng::seeded(5)).unwrap();
        let mut rng = Rng::seeded(6);
        let code: Vec<f64> = rng.normal_vec(model.code_dim());
        let z = rng.normal_vec(2);
        let pts = points(6);
        let pred = model.predict_with_latents(&store, &code, &[z.clone()], &pts).unwrap();

        let mut input = code.clone();
        input.extend_from_slice(&z);
        let b = model.branch.apply(&store, &Tensor::matrix(1, input.len(), input).unwrap()).unwrap();
        let y = Tensor::matrix(6, 1, pts.iter().map(|p| p[0]).collect()).unwrap();
        let t = model.trunk.apply(&store, &y).unwrap();
        for j in 0..6 {
            let dot: f64 = (0..5).map(|n| b.data()[n] * t.get(j, n)).sum();
            assert!((pred.data()[j] - dot).abs() < 1e-12);
        }

        // Doubling the branch output layer doubles the prediction.
        let (w, bias) = *model.branch.layers().last().unwrap();
        store.get_mut(w).data_mut().iter_mut().for_each(|v| *v *= 2.0);
        store.get_mut(bias).data_mut().iter_mut().for_each(|v| *v *= 2.0);
        let doubled = model.predict_with_latents(&store, &code, &[z], &pts).unwrap();
        for (a, b) in pred.data().iter().zip(doubled.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn unit_branch_identity_trunk_reproduces_points() {
        let mut cfg = tiny_config(0);
        cfg.p = 1;
        cfg.branch_hidden.clear();
        cfg.trunk_hidden.clear();
        let mut store = ParamStore::new();
        let model = UqSonet::new(&mut store, cfg, &mut Rng::seeded(0)).unwrap();
        let (bw, bb) = model.branch.layers()[0];
        store.get_mut(bw).data_mut().fill(0.0);
        store.get_mut(bb).data_mut().fill(1.0);
        let (tw, tb) = model.trunk.layers()[0];
        store.get_mut(tw).data_mut().fill(1.0);
        store.get_mut(tb).data_mut().fill(0.0);
        let pts = points(6);
        let pred = model.predict_with_latents(&store, &vec![0.3; 8], &[], &pts).unwrap();
        for (p, y) in pred.data().iter().zip(&pts) {
            assert_eq!(*p, y[0]);
        }
    }

    #[test]
    fn deterministic_mse_of_zero_model_on_unit_data() {
        let mut store = ParamStore::new();
        let model = UqSonet::new(&mut store, tiny_config(0), &mut Rng::seeded(0)).unwrap();
        zero_mlp(&mut store, &model.branch);
        let mut rng = Rng::seeded(1);
        let mut b = batch(&mut rng, 2, 3, 6);
        b.targets = Tensor::filled(&[2, 6], 1.0);
        let mut g = Graph::new();
        let parts = model.elbo_loss(&mut g, &store, &b, &points(6), &mut rng).unwrap();
        assert_eq!(parts.recon, 1.0);
        assert_eq!(parts.kl, 0.0);
    }

    #[test]
    fn perfect_decoder_at_prior_gives_zero_loss() {
        let mut cfg = tiny_config(1);
        cfg.p = 1;
        let mut store = ParamStore::new();
        let model = UqSonet::new(&mut store, cfg, &mut Rng::seeded(0)).unwrap();
        zero_mlp(&mut store, model.encoder.as_ref().unwrap());
        // Encoder at the prior (μ = 0, σ² = 1), branch constant 1, trunk constant c.
        zero_mlp(&mut store, &model.branch);
        let (_, bb) = *model.branch.layers().last().unwrap();
        store.get_mut(bb).data_mut().fill(1.0);
        zero_mlp(&mut store, &model.trunk);
        let (_, tb) = *model.trunk.layers().last().unwrap();
        store.get_mut(tb).data_mut().fill(0.75);
        let mut rng = Rng::seeded(4);
        let mut b = batch(&mut rng, 2, 3, 6);
        b.targets = Tensor::filled(&[2, 6], 0.75);
        let mut g = Graph::new();
        let parts = model.elbo_loss(&mut g, &store, &b, &points(6), &mut rng).unwrap();
        assert_eq!(parts.kl, 0.0);
        assert_eq!(parts.recon, 0.0);
        assert_eq!(g.value(parts.loss).item().unwrap(), 0.0);
    }

    #[test]
    fn elbo_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let model = UqSonet::new(&mut store, tiny_config(2), &mut Rng::seeded(10)).unwrap();
        let mut rng = Rng::seeded(11);
        let b = batch(&mut rng, 2, 3, 6);
        let pts = points(6);
        let check = grad_check(&store, 1e-5, |g, s| {
            let mut r = Rng::seeded(12);
            Ok(model.elbo_loss(g, s, &b, &pts, &mut r)?.loss)
        })
        .unwrap();
        assert!(check.max_rel_error < 1e-4, "{check:?}");
    }

    #[test]
    fn output_scale_is_a_change_of_units() {
        let s = 0.1;
        let mut store = ParamStore::new();
        let scaled = UqSonet::new(
            &mut store,
            ModelConfig {
                output_scale: s,
                ..tiny_config(2)
            },
            &mut Rng::seeded(10),
        )
        .unwrap();
        let unit = UqSonet::new(
            &mut ParamStore::new(),
            ModelConfig {
                sigma_u2: 1e-3 / (s * s),
                ..tiny_config(2)
            },
            &mut Rng::seeded(10),
        )
        .unwrap();
        let mut rng = Rng::seeded(11);
        let b_unit = batch(&mut rng, 2, 3, 6);
        let mut b = b_unit.clone();
        b.targets.data_mut().iter_mut().for_each(|v| *v *= s);
        let pts = points(6);
        let loss = |m: &UqSonet, b: &Batch| {
            let mut g = Graph::new();
            let l = m.elbo_loss(&mut g, &store, b, &pts, &mut Rng::seeded(12)).unwrap().loss;
            g.value(l).item().unwrap()
        };
        let (a, u) = (loss(&scaled, &b), loss(&unit, &b_unit));
        assert!((a - u).abs() <= 1e-10 * a.abs(), "{a} vs {u}");
        let check = grad_check(&store, 1e-5, |g, st| {
            let mut r = Rng::seeded(12);
            Ok(scaled.elbo_loss(g, st, &b, &pts, &mut r)?.loss)
        })
        .unwrap();
        assert!(check.max_rel_error < 1e-4, "{check:?}");
    }

    #[test]
    fn loss_ignores_sensor_order() {
        let mut store = ParamStore::new();
        let model = UqSonet::new(&mut store, tiny_config(2), &mut Rng::seeded(10)).unwrap();
        let mut rng = Rng::seeded(11);
        let b = batch(&mut rng, 2, 4, 6);
        let mut shuffled = b.clone();
        for s in &mut shuffled.sets {
            s.sensors.reverse();
        }
        let pts = points(6);
        let v = |batch: &Batch| {
            let mut g = Graph::new();
            let p = model.elbo_loss(&mut g, &store, batch, &pts, &mut Rng::seeded(1)).unwrap();
            g.value(p.loss).item().unwrap()
        };
        assert_eq!(v(&b).to_bits(), v(&shuffled).to_bits());
    }
}
