//! Sensor sampling, observation corruption, batch pregeneration, the training
//! loop and ensemble inference.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, Graph, ParamStore, Tensor};
use crate::cvae::{Batch, UqSonet};
use crate::dataset::OperatorDataset;
use crate::error::{Error, Result};
use crate::gp::FieldSample;
use crate::rng::Rng;
use crate::set_embed::{Sensor, SensorSet};

/// Observation noise applied to sensor values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    /// `κ ← κ · exp(ε)`, `ε ~ N(0, σ²)`
    Multiplicative { sigma: f64 },
    /// `κ ← κ + ε`, `ε ~ N(0, σ²)`
    Additive { sigma: f64 },
}

impl NoiseSpec {
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Multiplicative { sigma } | NoiseSpec::Additive { sigma } => sigma,
        }
    }
}

/// Where sensors are placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocationLaw {
    /// i.i.d. uniform on `[a, b]`.
    Uniform1d { a: f64, b: f64 },
    /// Regular-space selection from a shuffled `n × n` grid on `[lo, hi]²`.
    /// `d_min[m - 1]` is the spacing used for `m` sensors; 0 means none.
    RegSpace { n: usize, lo: f64, hi: f64, d_min: Vec<f64> },
}

impl LocationLaw {
    pub fn regspace_default() -> Self {
        LocationLaw::RegSpace {
            n: 81,
            lo: 0.1,
            hi: 0.9,
            d_min: vec![0.0, 0.8, 0.5, 0.5],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            LocationLaw::Uniform1d { a, b } => p[0] >= a && p[0] <= b,
            LocationLaw::RegSpace { lo, hi, .. } => (lo..=hi).contains(&p[0]) && (lo..=hi).contains(&p[1]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorPolicy {
    /// Allowed sensor counts `ℳ`.
    pub counts: Vec<usize>,
    pub locations: LocationLaw,
    pub noise: NoiseSpec,
    /// Share one set of locations across each batch.
    pub consistent_locations: bool,
}

impl SensorPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() || self.counts.contains(&0) {
            return Err(Error::validation("counts", "need a nonempty set of positive sensor counts"));
        }
        if self.noise.sigma() < 0.0 || !self.noise.sigma().is_finite() {
            return Err(Error::validation("noise_sigma", "must be finite and >= 0"));
        }
        match &self.locations {
            LocationLaw::Uniform1d { a, b } if !(a < b) => {
                Err(Error::validation("domain", "empty sensor domain"))
            }
            LocationLaw::RegSpace { n, lo, hi, d_min } => {
                if *n == 0 || !(lo <= hi) {
                    return Err(Error::validation("candidates", "empty candidate grid"));
                }
                if d_min.iter().any(|d| !(*d >= 0.0)) {
                    return Err(Error::validation("d_min", "spacings must be >= 0"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Uniform draw from `ℳ`.
pub fn sample_sensor_count(policy: &SensorPolicy, rng: &mut Rng) -> usize {
    policy.counts[rng.below(policy.counts.len())]
}

pub fn sample_locations_1d(a: f64, b: f64, m: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    (0..m).map(|_| [rng.uniform_in(a, b), 0.0]).collect()
}

/// Shuffled `n × n` grid on `[lo, hi]²`.
pub fn regspace_candidates(n: usize, lo: f64, hi: f64, rng: &mut Rng) -> Vec<[f64; 2]> {
    let at = |i: usize| {
        if n == 1 {
            lo
        } else if i + 1 == n {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let mut pts: Vec<[f64; 2]> = (0..n * n).map(|k| [at(k / n), at(k % n)]).collect();
    rng.shuffle(&mut pts);
    pts
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Scans `candidates` in order, accepting a point when it is at least `d_min`
/// from every accepted point, until `m` are accepted.
pub fn regspace_select(candidates: &[[f64; 2]], d_min: f64, m: usize) -> Result<Vec<[f64; 2]>> {
    if candidates.is_empty() {
        return Err(Error::Contract("no candidate points".into()));
    }
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(m);
    for &c in candidates {
        if centers.len() == m {
            break;
        }
        if centers.iter().all(|&a| dist(a, c) >= d_min) {
            centers.push(c);
        }
    }
    if centers.len() < m {
        return Err(Error::SensorPlacement {
            requested: m,
            achieved: centers.len(),
        });
    }
    Ok(centers)
}

/// Attempts with fresh shuffles before giving up on regular-space placement.
const REGSPACE_ATTEMPTS: usize = 100;

/// Locations for `m` sensors under the policy's law.
pub fn sample_locations(law: &LocationLaw, m: usize, rng: &mut Rng) -> Result<Vec<[f64; 2]>> {
    match law {
        LocationLaw::Uniform1d { a, b } => Ok(sample_locations_1d(*a, *b, m, rng)),
        LocationLaw::RegSpace { n, lo, hi, d_min } => {
            let d = d_min.get(m - 1).copied().unwrap_or_else(|| d_min.last().copied().unwrap_or(0.0));
            let mut last = Err(Error::SensorPlacement {
                requested: m,
                achieved: 0,
            });
            for _ in 0..REGSPACE_ATTEMPTS {
                let cands = regspace_candidates(*n, *lo, *hi, rng);
                last = regspace_select(&cands, d, m);
                if last.is_ok() {
                    break;
                }
            }
            last
        }
    }
}

/// Sensor readings of a gridded field at the given locations.
pub fn observe(field: &FieldSample, locations: &[[f64; 2]]) -> Result<SensorSet> {
    SensorSet::new(
        locations
            .iter()
            .map(|&loc| Sensor {
                loc,
                value: field.interpolate(loc),
            })
            .collect(),
    )
}

/// Applies observation noise; locations are untouched.
pub fn corrupt_observations(obs: &SensorSet, noise: &NoiseSpec, rng: &mut Rng) -> SensorSet {
    let mut out = obs.clone();
    match *noise {
        NoiseSpec::None => {}
        NoiseSpec::Multiplicative { sigma } => {
            if sigma > 0.0 {
                for s in &mut out.sensors {
                    s.value *= (sigma * rng.normal()).exp();
                }
            }
        }
        NoiseSpec::Additive { sigma } => {
            if sigma > 0.0 {
                for s in &mut out.sensors {
                    s.value += sigma * rng.normal();
                }
            }
        }
    }
    out
}

/// Draws the observation set of sample `field` under `policy` with `m` sensors,
/// optionally at given locations.
pub fn draw_observations(
    field: &FieldSample,
    policy: &SensorPolicy,
    m: usize,
    locations: Option<&[[f64; 2]]>,
    rng: &mut Rng,
) -> Result<SensorSet> {
    let owned;
    let locs = match locations {
        Some(l) => l,
        None => {
            owned = sample_locations(&policy.locations, m, rng)?;
            &owned
        }
    };
    let clean = observe(field, locs)?;
    Ok(corrupt_observations(&clean, &policy.noise, rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub iterations: usize,
    pub n_batches: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Learning rate reached at the last iteration; the rate decays
    /// geometrically from `adam.lr`. `None` keeps it constant.
    #[serde(default)]
    pub lr_final: Option<f64>,
    /// Checkpoint every this many iterations (the final state is always saved).
    pub checkpoint_every: usize,
    /// Redraw observations for every batch after each pass over the batches.
    pub regenerate_every_epoch: bool,
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::validation("iterations", "must be at least 1"));
        }
        if self.n_batches == 0 {
            return Err(Error::validation("n_batches", "must be at least 1"));
        }
        if !(self.adam.lr >= 0.0) {
            return Err(Error::validation("lr", "must be non-negative"));
        }
        if let Some(f) = self.lr_final {
            if !(f > 0.0 && f.is_finite() && self.adam.lr > 0.0) {
                return Err(Error::validation("lr_final", "needs positive lr and lr_final"));
            }
        }
        Ok(())
    }

    /// Learning rate used for the step taken at iteration `it` (0-based).
    pub fn lr_at(&self, it: usize) -> f64 {
        match self.lr_final {
            Some(f) if self.iterations > 1 => {
                let t = it.min(self.iterations - 1) as f64 / (self.iterations - 1) as f64;
                self.adam.lr * (f / self.adam.lr).powf(t)
            }
            _ => self.adam.lr,
        }
    }

    /// Default cadence: every tenth of the budget.
    pub fn default_checkpoint_every(iterations: usize) -> usize {
        (iterations / 10).max(1)
    }
}

/// Random streams derived from the plan seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const BATCH_PICK: u64 = 1;
    pub const LATENT: u64 = 2;
    pub const OBSERVE: u64 = 3;
}

/// Splits the dataset into `n_batches` consecutive batches and draws their
/// observation sets. Each batch gets one sensor count.
pub fn pregenerate_batches(
    ds: &OperatorDataset,
    policy: &SensorPolicy,
    n_batches: usize,
    rng: &mut Rng,
) -> Result<Vec<Batch>> {
    policy.validate()?;
    let n = ds.len();
    if n_batches == 0 || n % n_batches != 0 {
        return Err(Error::Config(format!(
            "{n} samples cannot be split evenly into {n_batches} batches"
        )));
    }
    let size = n / n_batches;
    let width = ds.header.output_grid.len();
    let mut batches = Vec::with_capacity(n_batches);
    for bi in 0..n_batches {
        let m = sample_sensor_count(policy, rng);
        let shared = if policy.consistent_locations {
            Some(sample_locations(&policy.locations, m, rng)?)
        } else {
            None
        };
        let mut sets = Vec::with_capacity(size);
        let mut targets = Vec::with_capacity(size * width);
        for i in bi * size..(bi + 1) * size {
            let field = ds.input_field(i);
            sets.push(draw_observations(&field, policy, m, shared.as_deref(), rng)?);
            targets.extend_from_slice(ds.output(i));
        }
        batches.push(Batch {
            sets,
            targets: Tensor::matrix(size, width, targets)?,
        });
    }
    Ok(batches)
}

/// One row of the loss trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub kl: f64,
    pub recon: f64,
    pub wall_ms: u64,
}

pub const TRACE_HEADER: &str = "iteration,loss,kl_term,recon_term,wall_ms";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::with_capacity(rows.len() * 64);
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{:e},{:e},{:e},{}\n",
            r.iteration, r.loss, r.kl, r.recon, r.wall_ms
        ));
    }
    s
}

/// What the loop hands to the checkpoint sink.
pub struct Snapshot<'a> {
    pub iteration: usize,
    pub store: &'a ParamStore,
    pub adam: &'a AdamState,
}

pub struct TrainOutcome {
    pub trace: Vec<TraceRow>,
    pub adam: AdamState,
}

/// Options that do not affect the numerics.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions {
    /// Record elapsed milliseconds in the trace instead of zeros.
    pub record_wall_time: bool,
    /// Log progress every this many iterations (0 = never).
    pub log_every: usize,
}

/// The optimization loop: pick a batch, evaluate the loss, step Adam.
///
/// `resume` continues from a saved optimizer state. On a non-finite loss or
/// gradient the loop stops with a training error naming the iteration; the
/// sink has already received every earlier checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn train<F>(
    model: &UqSonet,
    store: &mut ParamStore,
    batches: &mut Vec<Batch>,
    regenerate: Option<&dyn Fn(&mut Rng) -> Result<Vec<Batch>>>,
    points: &[[f64; 2]],
    plan: &TrainPlan,
    resume: Option<AdamState>,
    options: TrainOptions,
    mut sink: F,
) -> Result<TrainOutcome>
where
    F: FnMut(Snapshot<'_>) -> Result<()>,
{
    plan.validate()?;
    if batches.is_empty() {
        return Err(Error::Config("no training batches".into()));
    }
    let mut adam = resume.unwrap_or_else(|| AdamState::new(store, plan.adam));
    let start = adam.step_count() as usize;
    let mut pick = Rng::derive(plan.seed, streams::BATCH_PICK);
    let mut latent = Rng::derive(plan.seed, streams::LATENT);
    let mut regen_rng = Rng::derive(plan.seed, streams::OBSERVE + 1);
    // Replay the streams so a resumed run continues the same sequence.
    if start > 0 {
        let probe = batches[0].sets.len() * model.d_z();
        for _ in 0..start {
            pick.below(batches.len());
            for _ in 0..probe {
                latent.normal();
            }
        }
    }
    let clock = std::time::Instant::now();
    let mut trace = Vec::with_capacity(plan.iterations.saturating_sub(start));
    for it in start..plan.iterations {
        if plan.regenerate_every_epoch && it > 0 && it % batches.len() == 0 {
            if let Some(regen) = regenerate {
                *batches = regen(&mut regen_rng)?;
            }
        }
        let batch = &batches[pick.below(batches.len())];
        let mut g = Graph::new();
        let parts = model.elbo_loss(&mut g, store, batch, points, &mut latent)?;
        let loss = g.value(parts.loss).item()?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step: it + 1,
                msg: format!("loss became {loss}"),
            });
        }
        let grads = g.backward(parts.loss, store)?;
        adam.config.lr = plan.lr_at(it);
        adam.step(store, &grads).map_err(|e| match e {
            Error::Training { msg, .. } => Error::Training { step: it + 1, msg },
            other => other,
        })?;
        trace.push(TraceRow {
            iteration: it + 1,
            loss,
            kl: parts.kl,
            recon: parts.recon,
            wall_ms: if options.record_wall_time {
                clock.elapsed().as_millis() as u64
            } else {
                0
            },
        });
        if options.log_every > 0 && (it + 1) % options.log_every == 0 {
            log::info!(
                "iteration {} loss {:.6e} kl {:.4e} recon {:.4e}",
                it + 1,
                loss,
                parts.kl,
                parts.recon
            );
        }
        let done = it + 1 == plan.iterations;
        if done || (plan.checkpoint_every > 0 && (it + 1) % plan.checkpoint_every == 0) {
            sink(Snapshot {
                iteration: it + 1,
                store,
                adam: &adam,
            })?;
        }
    }
    Ok(TrainOutcome { trace, adam })
}

/// Predicted functions for one observation set plus pointwise statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    /// `n × M`, one function per row.
    pub samples: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Ensemble {
    pub fn from_samples(samples: Vec<Vec<f64>>) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::Contract("empty ensemble".into()));
        }
        let m = samples[0].len();
        let mut mean = vec![0.0; m];
        for s in &samples {
            for (a, v) in mean.iter_mut().zip(s) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= n as f64);
        let mut var = vec![0.0; m];
        if n > 1 {
            for s in &samples {
                for ((a, v), mu) in var.iter_mut().zip(s).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
            var.iter_mut().for_each(|a| *a /= (n - 1) as f64);
        }
        Ok(Self {
            samples,
            std: var.iter().map(|v| v.sqrt()).collect(),
            mean,
        })
    }
}

/// Pushes `n_samples` prior latent draws through the decoder for one set.
pub fn predict_ensemble(
    model: &UqSonet,
    store: &ParamStore,
    obs: &SensorSet,
    points: &[[f64; 2]],
    n_samples: usize,
    trained_counts: Option<&[usize]>,
    rng: &mut Rng,
) -> Result<Ensemble> {
    if n_samples == 0 {
        return Err(Error::Contract("need at least one sample".into()));
    }
    if let Some(counts) = trained_counts {
        if !counts.contains(&obs.len()) {
            log::warn!("{} sensors lie outside the trained counts {counts:?}", obs.len());
        }
    }
    let code = model.embed.embed(store, obs)?;
    let latents: Vec<Vec<f64>> = if model.d_z() == 0 {
        vec![]
    } else {
        (0..n_samples).map(|_| rng.normal_vec(model.d_z())).collect()
    };
    let pred = model.predict_with_latents(store, &code, &latents, points)?;
    let m = points.len();
    let rows = if model.d_z() == 0 { 1 } else { n_samples };
    let mut samples: Vec<Vec<f64>> = (0..rows).map(|i| pred.data()[i * m..(i + 1) * m].to_vec()).collect();
    if model.d_z() == 0 {
        samples = vec![samples[0].clone(); n_samples];
    }
    Ensemble::from_samples(samples)
}
