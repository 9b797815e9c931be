//! Experiment configuration: a small `key = value` format with `[sections]`
//! and `#` comments, resolved against per-problem defaults.
//!
//! ```text
//! problem = diffusion1d
//!
//! [model]
//! d_z = 10
//!
//! [sensors]
//! counts = 1..10
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::AdamConfig;
use crate::cvae::ModelConfig;
use crate::dataset::{FieldLaw, ProblemSpec, ProblemTag};
use crate::error::{Error, Result};
use crate::gp::{Grid, Kernel};
use crate::metrics::Slice;
use crate::set_embed::EmbedConfig;
use crate::train::{LocationLaw, NoiseSpec, SensorPolicy, TrainPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Multiplicative,
    Additive,
}

/// Every knob of an experiment, fully resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemTag,

    // [data]
    /// Amplitude of the observed field's kernel.
    pub sigma: f64,
    /// 1D correlation length.
    pub length: f64,
    pub l1: f64,
    pub l2: f64,
    /// Points per axis of the grid on which fields live and equations are solved.
    pub input_n: usize,
    /// Points per axis of the training output grid.
    pub output_n: usize,
    /// Points per axis of the evaluation grid.
    pub eval_n: usize,
    pub n_samples: usize,
    pub data_seed: u64,

    // [sensors]
    pub counts: Vec<usize>,
    pub d_min: Vec<f64>,
    pub noise: NoiseKind,
    pub noise_sigma: f64,
    pub consistent_locations: bool,

    // [model]
    pub heads: usize,
    pub d_emb: usize,
    pub q: usize,
    pub p: usize,
    pub d_z: usize,
    pub lambda_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub sigma_u2: f64,
    pub beta: f64,
    pub output_scale: f64,

    // [train]
    pub lr: f64,
    /// Final learning rate of a geometric decay; 0 keeps `lr` constant.
    pub lr_final: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// 0 selects a tenth of the budget.
    pub checkpoint_every: usize,
    pub regenerate: bool,
    pub log_every: usize,

    // [eval]
    pub n_reference: usize,
    pub n_predict: usize,
    pub n_test: usize,
    pub eval_seed: u64,
    pub percent: bool,
    pub slices: Vec<Slice>,
}

impl ExperimentConfig {
    /// Published settings for each generated problem.
    pub fn defaults(problem: ProblemTag) -> Result<Self> {
        let one_d = |sigma: f64, length: f64, sigma_u2: f64| ExperimentConfig {
            problem,
            sigma,
            length,
            l1: 0.1,
            l2: 0.1,
            input_n: 401,
            output_n: 101,
            eval_n: 401,
            n_samples: 10_000,
            data_seed: 0,
            counts: (1..=10).collect(),
            d_min: vec![],
            noise: NoiseKind::None,
            noise_sigma: 0.0,
            consistent_locations: false,
            heads: 2,
            d_emb: 40,
            q: 40,
            p: 100,
            d_z: 10,
            lambda_hidden: vec![40, 40],
            head_hidden: vec![32; 4],
            branch_hidden: vec![64; 4],
            trunk_hidden: vec![64; 4],
            encoder_hidden: vec![64; 4],
            sigma_u2,
            beta: 1.0,
            output_scale: 1.0,
            lr: 1e-4,
            lr_final: 0.0,
            batch_size: 1000,
            iterations: 100_000,
            seed: 0,
            checkpoint_every: 0,
            regenerate: false,
            log_every: 1000,
            n_reference: 1000,
            n_predict: 1000,
            n_test: 10,
            eval_seed: 1,
            percent: true,
            slices: vec![Slice::Full],
        };
        let two_d = |iterations: usize| ExperimentConfig {
            sigma: 1.0,
            input_n: 101,
            output_n: 51,
            eval_n: 101,
            n_samples: 80_000,
            counts: (1..=4).collect(),
            d_min: vec![0.0, 0.8, 0.5, 0.5],
            heads: 3,
            d_z: 100,
            lambda_hidden: vec![40; 4],
            head_hidden: vec![64; 4],
            branch_hidden: vec![128; 4],
            trunk_hidden: vec![128; 4],
            encoder_hidden: vec![128; 4],
            batch_size: 20_000,
            iterations,
            slices: vec![Slice::X(0.5), Slice::X(0.7), Slice::Y(0.5), Slice::Y(0.7)],
            ..one_d(1.0, 0.1, 1e-4)
        };
        match problem {
            ProblemTag::Diffusion1d => Ok(one_d(0.5, 0.1, 1e-3)),
            ProblemTag::Elliptic1dStochastic => Ok(one_d(0.3, 0.05, 1e-4)),
            ProblemTag::Poisson2d => Ok(two_d(20_000)),
            ProblemTag::Elliptic2dStochastic => Ok(two_d(50_000)),
            ProblemTag::External | ProblemTag::Reference => Err(Error::validation(
                "problem",
                format!("`{}` has no experiment defaults", problem.as_str()),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.problem.dim().unwrap_or(1)
    }

    fn grid(&self, n: usize) -> Grid {
        if self.dim() == 1 {
            Grid::line(-1.0, 1.0, n)
        } else {
            Grid::unit_square(n)
        }
    }

    pub fn input_grid(&self) -> Grid {
        self.grid(self.input_n)
    }

    pub fn output_grid(&self) -> Grid {
        self.grid(self.output_n)
    }

    pub fn eval_grid(&self) -> Grid {
        self.grid(self.eval_n)
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let mut spec = ProblemSpec::defaults(self.problem)?;
        spec.input_grid = self.input_grid();
        spec.output_grid = self.output_grid();
        let observed = match spec.observed {
            crate::dataset::Observed::Coefficient => &mut spec.coefficient,
            crate::dataset::Observed::Source => &mut spec.source,
        };
        if let FieldLaw::Random { field } = observed {
            match &mut field.kernel {
                Kernel::Se1d(k) => {
                    k.amplitude = self.sigma;
                    k.length = self.length;
                }
                Kernel::Se2d(k) => {
                    k.amplitude = self.sigma;
                    k.l1 = self.l1;
                    k.l2 = self.l2;
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// The same problem with solutions stored on the evaluation grid.
    pub fn eval_spec(&self) -> Result<ProblemSpec> {
        let mut spec = self.problem_spec()?;
        spec.output_grid = self.eval_grid();
        Ok(spec)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embed: EmbedConfig {
                dim: self.dim(),
                heads: self.heads,
                d_emb: self.d_emb,
                q: self.q,
                lambda_hidden: self.lambda_hidden.clone(),
                head_hidden: self.head_hidden.clone(),
            },
            p: self.p,
            d_z: self.d_z,
            out_dim: self.dim(),
            m_out: self.output_grid().len(),
            branch_hidden: self.branch_hidden.clone(),
            trunk_hidden: self.trunk_hidden.clone(),
            encoder_hidden: self.encoder_hidden.clone(),
            sigma_u2: self.sigma_u2,
            beta: self.beta,
            output_scale: self.output_scale,
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        match self.noise {
            NoiseKind::None => NoiseSpec::None,
            NoiseKind::Multiplicative => NoiseSpec::Multiplicative { sigma: self.noise_sigma },
            NoiseKind::Additive => NoiseSpec::Additive { sigma: self.noise_sigma },
        }
    }

    pub fn sensor_policy(&self) -> SensorPolicy {
        let locations = if self.dim() == 1 {
            LocationLaw::Uniform1d { a: -1.0, b: 1.0 }
        } else {
            LocationLaw::RegSpace {
                n: 81,
                lo: 0.1,
                hi: 0.9,
                d_min: self.d_min.clone(),
            }
        };
        SensorPolicy {
            counts: self.counts.clone(),
            locations,
            noise: self.noise_spec(),
            consistent_locations: self.consistent_locations,
        }
    }

    pub fn n_batches(&self) -> usize {
        self.n_samples / self.batch_size.max(1)
    }

    pub fn train_plan(&self) -> TrainPlan {
        TrainPlan {
            iterations: self.iterations,
            n_batches: self.n_batches(),
            seed: self.seed,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            lr_final: (self.lr_final > 0.0).then_some(self.lr_final),
            checkpoint_every: if self.checkpoint_every == 0 {
                TrainPlan::default_checkpoint_every(self.iterations)
            } else {
                self.checkpoint_every
            },
            regenerate_every_epoch: self.regenerate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(key, "must be positive"))
            }
        };
        let at_least = |key: &str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(Error::validation(key, format!("must be at least {min}")))
            }
        };
        if self.problem.dim().is_none() {
            return Err(Error::validation("problem", "not a generated problem"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::validation("sigma", "must be finite and >= 0"));
        }
        positive("length", self.length)?;
        positive("l1", self.l1)?;
        positive("l2", self.l2)?;
        at_least("input_n", self.input_n, 3)?;
        at_least("output_n", self.output_n, 2)?;
        at_least("eval_n", self.eval_n, 2)?;
        at_least("n_samples", self.n_samples, 1)?;
        if self.counts.is_empty() || self.counts.contains(&0) {
            return Err(Error::validation("counts", "need positive sensor counts"));
        }
        if self.d_min.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::validation("d_min", "spacings must be >= 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::validation("noise_sigma", "must be finite and >= 0"));
        }
        at_least("heads", self.heads, 1)?;
        at_least("d_emb", self.d_emb, 1)?;
        at_least("q", self.q, 1)?;
        at_least("p", self.p, 1)?;
        positive("sigma_u2", self.sigma_u2)?;
        positive("output_scale", self.output_scale)?;
        if !(self.beta >= 0.0) {
            return Err(Error::validation("beta", "must be >= 0"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("lr", "must be finite and >= 0"));
        }
        if !(self.lr_final >= 0.0 && self.lr_final.is_finite()) {
            return Err(Error::validation("lr_final", "must be finite and >= 0"));
        }
        at_least("batch_size", self.batch_size, 1)?;
        if self.n_samples % self.batch_size != 0 {
            return Err(Error::validation(
                "batch_size",
                format!("must divide n_samples = {}", self.n_samples),
            ));
        }
        at_least("iterations", self.iterations, 1)?;
        at_least("n_reference", self.n_reference, 2)?;
        at_least("n_predict", self.n_predict, 2)?;
        at_least("n_test", self.n_test, 1)?;
        if self.dim() == 1 && self.slices.iter().any(|s| *s != Slice::Full) {
            return Err(Error::validation("slices", "1D problems only support `full`"));
        }
        if self.slices.is_empty() {
            return Err(Error::validation("slices", "need at least one slice"));
        }
        self.model_config().validate()
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::validation(key, format!("expected a non-negative integer, got `{v}`")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| Error::validation(key, format!("expected a non-negative integer, got `{v}`")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::validation(key, format!("expected a number, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::validation(key, format!("expected true or false, got `{v}`"))),
    }
}

/// Comma-separated integers; `a..b` spans are inclusive.
fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    let mut out = vec![];
    if v.is_empty() {
        return Ok(out);
    }
    for part in v.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (parse_usize(key, a.trim())?, parse_usize(key, b.trim())?);
            if a > b {
                return Err(Error::validation(key, format!("empty range `{part}`")));
            }
            out.extend(a..=b);
        } else {
            out.push(parse_usize(key, part)?);
        }
    }
    Ok(out)
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(vec![]);
    }
    v.split(',').map(|p| parse_f64(key, p.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

type Setter = fn(&mut ExperimentConfig, &str, &str) -> Result<()>;
type Getter = fn(&ExperimentConfig) -> String;

struct Key {
    section: &'static str,
    name: &'static str,
    set: Setter,
    get: Getter,
}

macro_rules! key {
    ($section:literal, $name:ident, $parse:ident) => {
        Key {
            section: $section,
            name: stringify!($name),
            set: |c, k, v| {
                c.$name = $parse(k, v)?;
                Ok(())
            },
            get: |c| c.$name.to_string(),
        }
    };
    ($section:literal, $name:ident, list $parse:ident) => {
        Key {
            section: $section,
            name: stringify!($name),
            set: |c, k, v| {
                c.$name = $parse(k, v)?;
                Ok(())
            },
            get: |c| join(&c.$name),
        }
    };
}

const SECTIONS: [&str; 5] = ["data", "sensors", "model", "train", "eval"];

fn keys() -> Vec<Key> {
    vec![
        key!("data", sigma, parse_f64),
        key!("data", length, parse_f64),
        key!("data", l1, parse_f64),
        key!("data", l2, parse_f64),
        key!("data", input_n, parse_usize),
        key!("data", output_n, parse_usize),
        key!("data", eval_n, parse_usize),
        key!("data", n_samples, parse_usize),
        key!("data", data_seed, parse_u64),
        key!("sensors", counts, list parse_usize_list),
        key!("sensors", d_min, list parse_f64_list),
        Key {
            section: "sensors",
            name: "noise",
            set: |c, k, v| {
                c.noise = match v {
                    "none" => NoiseKind::None,
                    "multiplicative" => NoiseKind::Multiplicative,
                    "additive" => NoiseKind::Additive,
                    _ => return Err(Error::validation(k, "expected none, multiplicative or additive")),
                };
                Ok(())
            },
            get: |c| {
                match c.noise {
                    NoiseKind::None => "none",
                    NoiseKind::Multiplicative => "multiplicative",
                    NoiseKind::Additive => "additive",
                }
                .into()
            },
        },
        key!("sensors", noise_sigma, parse_f64),
        key!("sensors", consistent_locations, parse_bool),
        key!("model", heads, parse_usize),
        key!("model", d_emb, parse_usize),
        key!("model", q, parse_usize),
        key!("model", p, parse_usize),
        key!("model", d_z, parse_usize),
        key!("model", lambda_hidden, list parse_usize_list),
        key!("model", head_hidden, list parse_usize_list),
        key!("model", branch_hidden, list parse_usize_list),
        key!("model", trunk_hidden, list parse_usize_list),
        key!("model", encoder_hidden, list parse_usize_list),
        key!("model", sigma_u2, parse_f64),
        key!("model", beta, parse_f64),
        key!("model", output_scale, parse_f64),
        key!("train", lr, parse_f64),
        key!("train", lr_final, parse_f64),
        key!("train", batch_size, parse_usize),
        key!("train", iterations, parse_usize),
        key!("train", seed, parse_u64),
        key!("train", checkpoint_every, parse_usize),
        key!("train", regenerate, parse_bool),
        key!("train", log_every, parse_usize),
        key!("eval", n_reference, parse_usize),
        key!("eval", n_predict, parse_usize),
        key!("eval", n_test, parse_usize),
        key!("eval", eval_seed, parse_u64),
        key!("eval", percent, parse_bool),
        Key {
            section: "eval",
            name: "slices",
            set: |c, k, v| {
                c.slices = v
                    .split(';')
                    .map(|s| Slice::parse(s).ok_or_else(|| Error::validation(k, format!("bad slice `{}`", s.trim()))))
                    .collect::<Result<_>>()?;
                Ok(())
            },
            get: |c| c.slices.iter().map(Slice::label).collect::<Vec<_>>().join("; "),
        },
    ]
}

struct Entry<'a> {
    line: usize,
    section: Option<&'a str>,
    key: &'a str,
    value: &'a str,
}

fn tokenize(text: &str) -> Result<Vec<Entry<'_>>> {
    let mut section = None;
    let mut out: Vec<Entry> = vec![];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                line,
                msg: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown section `[{name}]`"),
                });
            }
            section = Some(name);
            continue;
        }
        let (key, value) = s.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `key = value`, got `{s}`"),
        })?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Parse {
                line,
                msg: format!("bad key `{key}`"),
            });
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::Parse {
                line,
                msg: format!("`{key}` already set on line {}", prev.line),
            });
        }
        out.push(Entry {
            line,
            section,
            key,
            value: value.trim(),
        });
    }
    Ok(out)
}

/// Parses configuration text. Keys outside any section may be any known key;
/// keys inside a section must belong to it.
pub fn config_parse(text: &str) -> Result<ExperimentConfig> {
    let entries = tokenize(text)?;
    let problem = entries
        .iter()
        .find(|e| e.key == "problem")
        .ok_or_else(|| Error::validation("problem", "required"))?;
    if problem.section.is_some() {
        return Err(Error::validation("problem", "must appear before any section"));
    }
    let tag = ProblemTag::parse(problem.value)
        .ok_or_else(|| Error::validation("problem", format!("unknown problem `{}`", problem.value)))?;
    let mut cfg = ExperimentConfig::defaults(tag)?;
    let table = keys();
    for e in entries.iter().filter(|e| e.key != "problem") {
        let k = table.iter().find(|k| k.name == e.key).ok_or_else(|| {
            Error::validation(e.key, format!("unknown key (line {})", e.line))
        })?;
        if let Some(s) = e.section {
            if s != k.section {
                return Err(Error::validation(
                    e.key,
                    format!("belongs in [{}], found in [{s}] (line {})", k.section, e.line),
                ));
            }
        }
        (k.set)(&mut cfg, e.key, e.value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn config_load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    config_parse(&text)
}

/// Every key with its resolved value; parsing the echo gives back the same
/// configuration.
pub fn config_echo(cfg: &ExperimentConfig) -> String {
    let mut out = format!("problem = {}\n", cfg.problem.as_str());
    let table = keys();
    for section in SECTIONS {
        let _ = write!(out, "\n[{section}]\n");
        for k in table.iter().filter(|k| k.section == section) {
            let _ = writeln!(out, "{} = {}", k.name, (k.get)(cfg));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diffusion_defaults() {
        let c = config_parse("problem = diffusion1d\n").unwrap();
        assert_eq!((c.length, c.sigma), (0.1, 0.5));
        assert_eq!((c.n_samples, c.output_n, c.p, c.d_z), (10_000, 101, 100, 10));
        assert_eq!((c.sigma_u2, c.lr), (1e-3, 1e-4));
        assert_eq!(c.model_config().m_out, 101);
        assert_eq!(c.n_batches(), 10);
    }

    #[test]
    fn two_d_defaults() {
        let c = config_parse("problem = poisson2d").unwrap();
        assert_eq!((c.heads, c.d_z, c.sigma_u2), (3, 100, 1e-4));
        assert_eq!(c.counts, vec![1, 2, 3, 4]);
        assert_eq!(c.n_batches(), 4);
        assert_eq!(c.output_grid().len(), 51 * 51);
    }

    #[test]
    fn negative_latent_dim_names_key() {
        let err = config_parse("problem = diffusion1d\n[model]\nd_z = -1\n").unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "d_z"));
    }

    #[test]
    fn errors_carry_lines_and_keys() {
        let err = config_parse("problem = diffusion1d\n\n[model]\nbogus line\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
        let err = config_parse("problem = diffusion1d\nfoo = 1\n").unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "foo"));
        let err = config_parse("problem = diffusion1d\n[train]\nd_z = 3\n").unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "d_z"));
        let err = config_parse("problem = diffusion1d\n[nope]\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = config_parse("problem = diffusion1d\np = 3\np = 4\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(matches!(config_parse("[model]\np = 3\n"), Err(Error::Validation { .. })));
        let err = config_parse("problem = diffusion1d\nbatch_size = 3000\n").unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "batch_size"));
    }

    #[test]
    fn comments_lists_and_overrides() {
        let text = "# header\nproblem = diffusion1d # inline\n[sensors]\ncounts = 1..3, 7\nnoise = multiplicative\nnoise_sigma = 0.5\n[model]\nlambda_hidden = 8, 8\n";
        let c = config_parse(text).unwrap();
        assert_eq!(c.counts, vec![1, 2, 3, 7]);
        assert_eq!(c.lambda_hidden, vec![8, 8]);
        assert_eq!(c.noise_spec(), NoiseSpec::Multiplicative { sigma: 0.5 });
    }

    #[test]
    fn echo_round_trips() {
        for tag in ["diffusion1d", "elliptic1d-stochastic", "poisson2d", "elliptic2d-stochastic"] {
            let a = config_parse(&format!("problem = {tag}\nlr = 0.00031\nsigma_u2 = 3.3e-5\n")).unwrap();
            let echo = config_echo(&a);
            let b = config_parse(&echo).unwrap();
            assert_eq!(a, b);
            assert_eq!(echo, config_echo(&b));
        }
    }

    #[test]
    fn spec_follows_config() {
        let c = config_parse("problem = diffusion1d\nlength = 0.2\ninput_n = 81\noutput_n = 41\n").unwrap();
        let spec = c.problem_spec().unwrap();
        assert_eq!(spec.input_grid.len(), 81);
        let FieldLaw::Random { field } = spec.coefficient else { panic!() };
        assert_eq!(field.kernel, Kernel::Se1d(crate::gp::Kernel1D { amplitude: 0.5, length: 0.2 }));
    }
}
