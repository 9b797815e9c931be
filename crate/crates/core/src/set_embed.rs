//! Set-transformer embedding of a variable-size observation set.
//!
//! Each sensor `(x_i, κ(x_i))` is embedded as `Λ_i = Λ_x(x_i) + Λ_κ(κ(x_i))`.
//! Head `l` scores every sensor with `w_l(Λ_i) / √d_emb`, takes a softmax over
//! the set and pools `v_l(Λ_i)` with those weights. The code is the
//! concatenation of the `H` head outputs.
//!
//! Sensors are sorted by a canonical key before embedding, so the code is
//! bit-identical under any permutation of the input list.

use std::cmp::Ordering;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mlp, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    /// Location; the second coordinate is unused for 1D problems.
    pub loc: [f64; 2],
    pub value: f64,
}

impl Sensor {
    pub fn new_1d(x: f64, value: f64) -> Self {
        Self {
            loc: [x, 0.0],
            value,
        }
    }

    fn canonical_cmp(&self, other: &Sensor) -> Ordering {
        self.loc[0]
            .total_cmp(&other.loc[0])
            .then(self.loc[1].total_cmp(&other.loc[1]))
            .then(self.value.total_cmp(&other.value))
    }
}

/// Observations of the input function, `m ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSet {
    pub sensors: Vec<Sensor>,
}

impl SensorSet {
    pub fn new(sensors: Vec<Sensor>) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::Contract("observation set is empty".into()));
        }
        Ok(Self { sensors })
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// Copy sorted by (location, value).
    pub fn canonical(&self) -> Vec<Sensor> {
        let mut s = self.sensors.clone();
        s.sort_by(Sensor::canonical_cmp);
        s
    }

    pub fn locations(&self) -> Vec<[f64; 2]> {
        self.sensors.iter().map(|s| s.loc).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.sensors.iter().map(|s| s.value).collect()
    }
}

/// Shapes of the embedding networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    /// Location dimension (1 or 2).
    pub dim: usize,
    pub heads: usize,
    pub d_emb: usize,
    pub q: usize,
    /// Hidden widths of Λ_x and Λ_κ.
    pub lambda_hidden: Vec<usize>,
    /// Hidden widths of every w_l and v_l.
    pub head_hidden: Vec<usize>,
}

impl EmbedConfig {
    pub fn code_dim(&self) -> usize {
        self.heads * self.q
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("dim", self.dim),
            ("heads", self.heads),
            ("d_emb", self.d_emb),
            ("q", self.q),
        ] {
            if v == 0 {
                return Err(Error::validation(key, "must be at least 1"));
            }
        }
        if self.dim > 2 {
            return Err(Error::validation("dim", "locations are 1D or 2D"));
        }
        Ok(())
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SetEmbedder {
    pub lambda_x: Mlp,
    pub lambda_k: Mlp,
    pub w: Vec<Mlp>,
    pub v: Vec<Mlp>,
    dim: usize,
    d_emb: usize,
    q: usize,
}

impl SetEmbedder {
    pub fn new(store: &mut ParamStore, cfg: &EmbedConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let lambda_x = Mlp::new(store, "embed.lambda_x", &sizes(cfg.dim, &cfg.lambda_hidden, cfg.d_emb), rng)?;
        let lambda_k = Mlp::new(store, "embed.lambda_k", &sizes(1, &cfg.lambda_hidden, cfg.d_emb), rng)?;
        let mut w = Vec::with_capacity(cfg.heads);
        let mut v = Vec::with_capacity(cfg.heads);
        for l in 0..cfg.heads {
            w.push(Mlp::new(store, &format!("embed.w{l}"), &sizes(cfg.d_emb, &cfg.head_hidden, 1), rng)?);
            v.push(Mlp::new(store, &format!("embed.v{l}"), &sizes(cfg.d_emb, &cfg.head_hidden, cfg.q), rng)?);
        }
        Self::from_parts(lambda_x, lambda_k, w, v)
    }

    /// Assembles an embedder from existing networks, checking that they chain.
    pub fn from_parts(lambda_x: Mlp, lambda_k: Mlp, w: Vec<Mlp>, v: Vec<Mlp>) -> Result<Self> {
        let d_emb = lambda_x.output_dim();
        if lambda_k.output_dim() != d_emb {
            return Err(Error::Config(format!(
                "Λ_x emits {d_emb} values but Λ_κ emits {}",
                lambda_k.output_dim()
            )));
        }
        if lambda_k.input_dim() != 1 {
            return Err(Error::Config("Λ_κ must take one value".into()));
        }
        if w.is_empty() || w.len() != v.len() {
            return Err(Error::Config(format!("{} score heads vs {} value heads", w.len(), v.len())));
        }
        let q = v[0].output_dim();
        for (wl, vl) in w.iter().zip(&v) {
            if wl.input_dim() != d_emb || vl.input_dim() != d_emb || wl.output_dim() != 1 || vl.output_dim() != q {
                return Err(Error::Config("head networks do not match the embedding width".into()));
            }
        }
        Ok(Self {
            dim: lambda_x.input_dim(),
            lambda_x,
            lambda_k,
            w,
            v,
            d_emb,
            q,
        })
    }

    pub fn heads(&self) -> usize {
        self.w.len()
    }

    pub fn code_dim(&self) -> usize {
        self.heads() * self.q
    }

    pub fn d_emb(&self) -> usize {
        self.d_emb
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Λ = Λ_x(locs) + Λ_κ(values)` row by row.
    pub fn embed_sensors(&self, g: &mut Graph, store: &ParamStore, locs: Var, values: Var) -> Result<Var> {
        let ex = self.lambda_x.forward(g, store, locs)?;
        let ek = self.lambda_k.forward(g, store, values)?;
        g.add(ex, ek)
    }

    /// Attention pooling of the rows of `lambda` within each segment.
    pub fn pool(&self, g: &mut Graph, store: &ParamStore, lambda: Var, offsets: Rc<[usize]>) -> Result<Var> {
        let inv = 1.0 / (self.d_emb as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads());
        for (wl, vl) in self.w.iter().zip(&self.v) {
            let score = wl.forward(g, store, lambda)?;
            let score = g.scale(score, inv);
            let alpha = g.segment_softmax(score, offsets.clone())?;
            let values = vl.forward(g, store, lambda)?;
            heads.push(g.segment_weighted_sum(alpha, values, offsets.clone())?);
        }
        if heads.len() == 1 {
            Ok(heads[0])
        } else {
            g.concat_cols(&heads)
        }
    }

    /// Codes of several sets, one row per set.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, sets: &[&SensorSet]) -> Result<Var> {
        let (locs, values, offsets) = self.stack(sets)?;
        let locs = g.constant(locs);
        let values = g.constant(values);
        let lambda = self.embed_sensors(g, store, locs, values)?;
        self.pool(g, store, lambda, offsets)
    }

    /// Canonically ordered sensor matrices and segment offsets.
    pub fn stack(&self, sets: &[&SensorSet]) -> Result<(Tensor, Tensor, Rc<[usize]>)> {
        if sets.is_empty() {
            return Err(Error::Contract("no observation sets".into()));
        }
        let total: usize = sets.iter().map(|s| s.len()).sum();
        let mut locs = Vec::with_capacity(total * self.dim);
        let mut values = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(sets.len() + 1);
        offsets.push(0);
        for set in sets {
            if set.is_empty() {
                return Err(Error::Contract("observation set is empty".into()));
            }
            for s in set.canonical() {
                locs.extend_from_slice(&s.loc[..self.dim]);
                values.push(s.value);
            }
            offsets.push(values.len());
        }
        Ok((
            Tensor::matrix(total, self.dim, locs)?,
            Tensor::matrix(total, 1, values)?,
            offsets.into(),
        ))
    }

    /// The code `h(𝒪)` of one set.
    pub fn embed(&self, store: &ParamStore, set: &SensorSet) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let h = self.forward(&mut g, store, &[set])?;
        Ok(g.value(h).data().to_vec())
    }
}
