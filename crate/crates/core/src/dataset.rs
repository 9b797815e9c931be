//! Paired input/output datasets and their on-disk format.
//!
//! File layout: the four bytes `UQDS`, a little-endian `u32` format version, a
//! little-endian `u32` byte length followed by that many bytes of UTF-8 JSON
//! header, then `n · |input grid|` little-endian `f64` input values and
//! `n · |output grid|` output values, sample-major.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{FieldSample, GpField, GpSampler, Grid, Kernel, Kernel1D, Kernel2D, MeanFunction};
use crate::pde;
use crate::rng::Rng;

pub const DATASET_MAGIC: &[u8; 4] = b"UQDS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemTag {
    Diffusion1d,
    Poisson2d,
    Elliptic1dStochastic,
    Elliptic2dStochastic,
    External,
    Reference,
}

impl ProblemTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemTag::Diffusion1d => "diffusion1d",
            ProblemTag::Poisson2d => "poisson2d",
            ProblemTag::Elliptic1dStochastic => "elliptic1d-stochastic",
            ProblemTag::Elliptic2dStochastic => "elliptic2d-stochastic",
            ProblemTag::External => "external",
            ProblemTag::Reference => "reference",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ProblemTag::Diffusion1d,
            ProblemTag::Poisson2d,
            ProblemTag::Elliptic1dStochastic,
            ProblemTag::Elliptic2dStochastic,
            ProblemTag::External,
            ProblemTag::Reference,
        ]
        .into_iter()
        .find(|t| t.as_str() == s)
    }

    /// Spatial dimension of the generated problems.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ProblemTag::Diffusion1d | ProblemTag::Elliptic1dStochastic => Some(1),
            ProblemTag::Poisson2d | ProblemTag::Elliptic2dStochastic => Some(2),
            _ => None,
        }
    }
}

/// A coefficient or source that is either a fixed closed form or random.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum FieldLaw {
    Fixed { function: MeanFunction },
    Random { field: GpField },
}

impl FieldLaw {
    pub fn is_random(&self) -> bool {
        matches!(self, FieldLaw::Random { .. })
    }
}

/// Which of the two fields the model observes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observed {
    Coefficient,
    Source,
}

/// Everything needed to regenerate a dataset for `−c ∇·(k∇u) = f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub problem: ProblemTag,
    /// The scalar `c` in front of the operator.
    pub scale: f64,
    pub coefficient: FieldLaw,
    pub source: FieldLaw,
    pub observed: Observed,
    /// Grid on which fields are sampled and the equation is solved.
    pub input_grid: Grid,
    /// Coarser grid on which solutions are stored.
    pub output_grid: Grid,
}

impl ProblemSpec {
    /// Defaults for each generated problem.
    pub fn defaults(problem: ProblemTag) -> Result<Self> {
        let gp1 = |sigma, l, mean| GpField {
            mean,
            kernel: Kernel::Se1d(Kernel1D {
                amplitude: sigma,
                length: l,
            }),
            log_normal: false,
        };
        let gp2 = |mean| GpField {
            mean,
            kernel: Kernel::Se2d(Kernel2D {
                amplitude: 1.0,
                l1: 0.1,
                l2: 0.1,
            }),
            log_normal: false,
        };
        let sine_sum = MeanFunction::SineSum2d { amp: 4.0, freq: 2.0 };
        let spec = match problem {
            ProblemTag::Diffusion1d => ProblemSpec {
                problem,
                scale: 0.1,
                coefficient: FieldLaw::Random {
                    field: GpField {
                        log_normal: true,
                        ..gp1(0.5, 0.1, MeanFunction::sin_2pi())
                    },
                },
                source: FieldLaw::Fixed {
                    function: MeanFunction::Sine {
                        amp: 2.0,
                        freq: 2.0,
                        phase: 0.0,
                        offset: 0.0,
                    },
                },
                observed: Observed::Coefficient,
                input_grid: Grid::line(-1.0, 1.0, 401),
                output_grid: Grid::line(-1.0, 1.0, 101),
            },
            ProblemTag::Poisson2d => ProblemSpec {
                problem,
                scale: 0.1,
                coefficient: FieldLaw::Fixed {
                    function: MeanFunction::Constant { value: 1.0 },
                },
                source: FieldLaw::Random {
                    field: gp2(sine_sum),
                },
                observed: Observed::Source,
                input_grid: Grid::unit_square(101),
                output_grid: Grid::unit_square(51),
            },
            ProblemTag::Elliptic1dStochastic => ProblemSpec {
                problem,
                scale: 0.1,
                coefficient: FieldLaw::Random {
                    field: GpField {
                        log_normal: true,
                        ..gp1(
                            0.3,
                            0.05,
                            MeanFunction::Sine {
                                amp: 1.0,
                                freq: 1.0,
                                phase: 1.0,
                                offset: 0.0,
                            },
                        )
                    },
                },
                source: FieldLaw::Random {
                    field: gp1(
                        0.1,
                        0.1,
                        MeanFunction::Sine {
                            amp: 1.0,
                            freq: 2.0,
                            phase: 0.0,
                            offset: 0.1,
                        },
                    ),
                },
                observed: Observed::Coefficient,
                input_grid: Grid::line(-1.0, 1.0, 401),
                output_grid: Grid::line(-1.0, 1.0, 101),
            },
            ProblemTag::Elliptic2dStochastic => ProblemSpec {
                problem,
                scale: 1.0,
                coefficient: FieldLaw::Random {
                    field: GpField {
                        log_normal: true,
                        ..gp2(MeanFunction::Zero)
                    },
                },
                source: FieldLaw::Random {
                    field: gp2(sine_sum),
                },
                observed: Observed::Source,
                input_grid: Grid::unit_square(101),
                output_grid: Grid::unit_square(51),
            },
            ProblemTag::External | ProblemTag::Reference => {
                return Err(Error::Config(format!(
                    "problem `{}` cannot be generated",
                    problem.as_str()
                )))
            }
        };
        Ok(spec)
    }

    pub fn observed_law(&self) -> &FieldLaw {
        match self.observed {
            Observed::Coefficient => &self.coefficient,
            Observed::Source => &self.source,
        }
    }

    pub fn hidden_law(&self) -> &FieldLaw {
        match self.observed {
            Observed::Coefficient => &self.source,
            Observed::Source => &self.coefficient,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.input_grid.validate()?;
        self.output_grid.validate()?;
        if self.input_grid.dim() != self.output_grid.dim() {
            return Err(Error::validation("output_grid", "dimension differs from the input grid"));
        }
        if !(self.scale > 0.0) {
            return Err(Error::validation("scale", "must be positive"));
        }
        if !self.observed_law().is_random() {
            return Err(Error::validation("observed", "the observed field must be random"));
        }
        for law in [&self.coefficient, &self.source] {
            if let FieldLaw::Random { field } = law {
                field.kernel.validate()?;
                if field.kernel.dim() != self.input_grid.dim() {
                    return Err(Error::validation("kernel", "dimension differs from the grid"));
                }
            }
        }
        Ok(())
    }
}

/// Draws and evaluates both fields of a problem on its input grid.
pub struct FieldDrawer {
    grid: Grid,
    coefficient: Law,
    source: Law,
}

enum Law {
    Fixed(Vec<f64>),
    Random { sampler: GpSampler, log: bool },
}

impl Law {
    fn new(law: &FieldLaw, grid: Grid) -> Result<Self> {
        Ok(match law {
            FieldLaw::Fixed { function } => {
                Law::Fixed(grid.points().iter().map(|&p| function.eval(p)).collect())
            }
            FieldLaw::Random { field } => Law::Random {
                sampler: GpSampler::new(&field.mean, &field.kernel, grid)?,
                log: field.log_normal,
            },
        })
    }

    fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Law::Fixed(v) => v.clone(),
            Law::Random { sampler, log } => {
                let mut v = sampler.draw(rng);
                if *log {
                    v.iter_mut().for_each(|x| *x = x.exp());
                }
                v
            }
        }
    }
}

impl FieldDrawer {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        Ok(Self {
            grid: spec.input_grid,
            coefficient: Law::new(&spec.coefficient, spec.input_grid)?,
            source: Law::new(&spec.source, spec.input_grid)?,
        })
    }

    /// `(k, f)` on the input grid; the coefficient is drawn first.
    pub fn draw(&self, rng: &mut Rng) -> (FieldSample, FieldSample) {
        let k = self.coefficient.draw(rng);
        let f = self.source.draw(rng);
        (
            FieldSample {
                grid: self.grid,
                values: k,
            },
            FieldSample {
                grid: self.grid,
                values: f,
            },
        )
    }

    pub fn draw_source(&self, rng: &mut Rng) -> Vec<f64> {
        self.source.draw(rng)
    }

    pub fn draw_coefficient(&self, rng: &mut Rng) -> Vec<f64> {
        self.coefficient.draw(rng)
    }
}

/// Restriction of a fine-grid field to a coarser grid: exact subsampling when
/// the grids nest, interpolation otherwise.
pub fn restrict(u: &FieldSample, target: Grid) -> FieldSample {
    let nested = |nf: usize, nc: usize| (nf - 1) % (nc - 1) == 0;
    match (u.grid, target) {
        (Grid::D1 { a, b, n }, Grid::D1 { a: ta, b: tb, n: tn }) if a == ta && b == tb && nested(n, tn) => {
            let step = (n - 1) / (tn - 1);
            FieldSample {
                grid: target,
                values: (0..tn).map(|i| u.values[i * step]).collect(),
            }
        }
        (
            Grid::D2 {
                x0,
                x1,
                nx,
                y0,
                y1,
                ny,
            },
            Grid::D2 {
                x0: tx0,
                x1: tx1,
                nx: tnx,
                y0: ty0,
                y1: ty1,
                ny: tny,
            },
        ) if (x0, x1, y0, y1) == (tx0, tx1, ty0, ty1) && nested(nx, tnx) && nested(ny, tny) => {
            let (sx, sy) = ((nx - 1) / (tnx - 1), (ny - 1) / (tny - 1));
            let mut values = Vec::with_capacity(tnx * tny);
            for i in 0..tnx {
                for j in 0..tny {
                    values.push(u.values[i * sx * ny + j * sy]);
                }
            }
            FieldSample { grid: target, values }
        }
        _ => u.resample(target),
    }
}

/// Header of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub problem: ProblemTag,
    pub n: usize,
    pub seed: u64,
    pub input_grid: Grid,
    pub output_grid: Grid,
    /// Generation metadata (the problem spec for generated sets).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// `n` paired input and output fields on shared grids.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorDataset {
    pub header: DatasetHeader,
    /// `n × |input grid|`, sample-major.
    pub inputs: Vec<f64>,
    /// `n × |output grid|`, sample-major.
    pub outputs: Vec<f64>,
}

impl OperatorDataset {
    pub fn new(header: DatasetHeader, inputs: Vec<f64>, outputs: Vec<f64>) -> Result<Self> {
        let ds = Self {
            header,
            inputs,
            outputs,
        };
        ds.check()?;
        Ok(ds)
    }

    fn check(&self) -> Result<()> {
        let h = &self.header;
        if h.n == 0 {
            return Err(Error::Shape("dataset holds no samples".into()));
        }
        let (ni, no) = (h.input_grid.len(), h.output_grid.len());
        if self.inputs.len() != h.n * ni || self.outputs.len() != h.n * no {
            return Err(Error::Shape(format!(
                "{} samples need {}+{} values, have {}+{}",
                h.n,
                h.n * ni,
                h.n * no,
                self.inputs.len(),
                self.outputs.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.header.n
    }

    pub fn is_empty(&self) -> bool {
        self.header.n == 0
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let w = self.header.input_grid.len();
        &self.inputs[i * w..(i + 1) * w]
    }

    pub fn output(&self, i: usize) -> &[f64] {
        let w = self.header.output_grid.len();
        &self.outputs[i * w..(i + 1) * w]
    }

    pub fn input_field(&self, i: usize) -> FieldSample {
        FieldSample {
            grid: self.header.input_grid,
            values: self.input(i).to_vec(),
        }
    }

    pub fn output_field(&self, i: usize) -> FieldSample {
        FieldSample {
            grid: self.header.output_grid,
            values: self.output(i).to_vec(),
        }
    }

    /// The generating spec, if the metadata holds one.
    pub fn spec(&self) -> Option<ProblemSpec> {
        serde_json::from_value(self.header.metadata.clone()).ok()
    }

    /// Samples `range` as a new dataset.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let (wi, wo) = (self.header.input_grid.len(), self.header.output_grid.len());
        if range.end > self.len() || range.is_empty() {
            return Err(Error::Shape(format!("subset {range:?} of {} samples", self.len())));
        }
        let header = DatasetHeader {
            n: range.len(),
            ..self.header.clone()
        };
        Self::new(
            header,
            self.inputs[range.start * wi..range.end * wi].to_vec(),
            self.outputs[range.start * wo..range.end * wo].to_vec(),
        )
    }
}

/// Solves one pair and restricts the solution to the output grid.
pub fn solve_pair(spec: &ProblemSpec, k: &FieldSample, f: &FieldSample) -> Result<FieldSample> {
    let u = pde::solve(spec.scale, k, f)?;
    Ok(restrict(&u, spec.output_grid))
}

/// Generates `n` pairs; sample `i` uses the stream `(seed, i)`.
pub fn generate_dataset(spec: &ProblemSpec, n: usize, seed: u64) -> Result<OperatorDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::validation("n_samples", "must be at least 1"));
    }
    let drawer = FieldDrawer::new(spec)?;
    let (wi, wo) = (spec.input_grid.len(), spec.output_grid.len());
    let mut inputs = Vec::with_capacity(n * wi);
    let mut outputs = Vec::with_capacity(n * wo);
    for i in 0..n {
        let mut rng = Rng::derive(seed, i as u64);
        let (k, f) = drawer.draw(&mut rng);
        let u = solve_pair(spec, &k, &f)?;
        let observed = match spec.observed {
            Observed::Coefficient => k,
            Observed::Source => f,
        };
        inputs.extend_from_slice(&observed.values);
        outputs.extend_from_slice(&u.values);
    }
    let header = DatasetHeader {
        problem: spec.problem,
        n,
        seed,
        input_grid: spec.input_grid,
        output_grid: spec.output_grid,
        metadata: serde_json::to_value(spec).expect("spec serializes"),
    };
    OperatorDataset::new(header, inputs, outputs)
}

fn push_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialized bytes of a dataset.
pub fn dataset_to_bytes(ds: &OperatorDataset) -> Vec<u8> {
    let header = serde_json::to_vec(&ds.header).expect("header serializes");
    let mut buf = Vec::with_capacity(12 + header.len() + 8 * (ds.inputs.len() + ds.outputs.len()));
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    push_f64s(&mut buf, &ds.inputs);
    push_f64s(&mut buf, &ds.outputs);
    buf
}

pub fn dataset_write(ds: &OperatorDataset, path: &Path) -> Result<()> {
    let bytes = dataset_to_bytes(ds);
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Splits a `magic | version | len | json` preamble, returning the JSON bytes
/// and the remaining payload.
pub(crate) fn split_container<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    version: u32,
    path: &Path,
) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            expected: 12,
            found: bytes.len(),
        });
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if found != version {
        return Err(Error::VersionMismatch {
            found,
            expected: version,
        });
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + len {
        return Err(Error::Truncated {
            expected: 12 + len,
            found: bytes.len(),
        });
    }
    Ok((&bytes[12..12 + len], &bytes[12 + len..]))
}

pub(crate) fn read_f64s(payload: &[u8]) -> Vec<f64> {
    payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn dataset_from_bytes(bytes: &[u8], path: &Path) -> Result<OperatorDataset> {
    let (json, payload) = split_container(bytes, DATASET_MAGIC, DATASET_VERSION, path)?;
    let header: DatasetHeader =
        serde_json::from_slice(json).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    header
        .input_grid
        .validate()
        .and_then(|_| header.output_grid.validate())
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.n == 0 {
        return Err(Error::MalformedHeader("dataset declares zero samples".into()));
    }
    let ni = header.n * header.input_grid.len();
    let no = header.n * header.output_grid.len();
    let expected = 8 * (ni + no);
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected: bytes.len() - payload.len() + expected,
            found: bytes.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after the declared payload",
            payload.len() - expected
        )));
    }
    let values = read_f64s(payload);
    let outputs = values[ni..].to_vec();
    let mut inputs = values;
    inputs.truncate(ni);
    OperatorDataset::new(header, inputs, outputs)
}

pub fn dataset_read(path: &Path) -> Result<OperatorDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    dataset_from_bytes(&bytes, path)
}

/// Manufactured forcing for `−c (k u′)′` with `k = eˣ`, `u = 1 − x²`.
pub fn manufactured_exp_source(c: f64, x: f64) -> f64 {
    2.0 * c * x.exp() * (x + 1.0)
}

/// Manufactured forcing for `−c Δu` with `u = sin(πx) sin(πy)`.
pub fn manufactured_poisson_source(c: f64, p: [f64; 2]) -> f64 {
    2.0 * c * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin()
}
