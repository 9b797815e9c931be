//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration, 3 IO/format, 4 numerical.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checkpoint::{checkpoint_read, checkpoint_write, ModelCheckpoint};
use crate::config::{config_echo, config_load, config_parse, ExperimentConfig};
use crate::cvae::UqSonet;
use crate::autodiff::ParamStore;
use crate::dataset::{dataset_from_bytes, dataset_read, dataset_write, generate_dataset, OperatorDataset, DATASET_MAGIC};
use crate::error::{Error, Result};
use crate::gp::Grid;
use crate::metrics::{fit_gaussian, relative_errors, report_table, w2_gaussian, Case, Slice};
use crate::oracle::{reference_ensemble, reference_to_dataset};
use crate::rng::Rng;
use crate::set_embed::{Sensor, SensorSet};
use crate::train::{
    draw_observations, predict_ensemble, pregenerate_batches, sample_sensor_count, streams, trace_csv, train,
    Ensemble, TrainOptions,
};

#[derive(Parser, Debug)]
#[command(name = "uqsonet", version, about = "Permutation-invariant operator learning with uncertainty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample input fields, solve, and write a dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `n_samples`.
        #[arg(long)]
        n: Option<usize>,
        /// Overrides `data_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; writes the config echo, loss trace and checkpoints to `--out`.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint with optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Record elapsed time in the loss trace (makes it run-dependent).
        #[arg(long)]
        wall_time: bool,
    },
    /// Draw sensor observations of one dataset sample under the configured policy.
    Observe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Number of sensors; drawn from the configured counts when absent.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Conditional-GP reference ensemble for one observation set.
    Reference {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write mean/std on the evaluation grid as CSV.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Model ensemble for one observation set.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        /// Mean/std CSV on the evaluation grid.
        #[arg(long)]
        out: PathBuf,
        /// Also write every ensemble member as CSV.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Relative-error table (and optionally W2 series) over reference/prediction pairs.
    Evaluate {
        /// Reference files (dataset or CSV), paired in order with `--prediction`.
        #[arg(long, required = true)]
        reference: Vec<PathBuf>,
        #[arg(long, required = true)]
        prediction: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// W2 distance per pair; needs ensembles on both sides.
        #[arg(long)]
        w2: Option<PathBuf>,
        /// `full`, `x=0.5`, `y=0.7`, ... (repeatable).
        #[arg(long)]
        slice: Vec<String>,
        /// Report raw values instead of ×1e-2 units.
        #[arg(long)]
        raw: bool,
    },
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out, n, seed } => gen_data(&config, &out, n, seed),
        Command::Train {
            config,
            data,
            out,
            resume,
            wall_time,
        } => train_cmd(&config, &data, &out, resume.as_deref(), wall_time),
        Command::Observe {
            config,
            data,
            index,
            m,
            seed,
            out,
        } => observe_cmd(&config, &data, index, m, seed, &out),
        Command::Reference {
            config,
            obs,
            out,
            stats,
            n,
            seed,
        } => reference_cmd(&config, &obs, &out, stats.as_deref(), n, seed),
        Command::Predict {
            checkpoint,
            obs,
            out,
            ensemble,
            n,
            seed,
        } => predict_cmd(&checkpoint, &obs, &out, ensemble.as_deref(), n, seed),
        Command::Evaluate {
            reference,
            prediction,
            out,
            w2,
            slice,
            raw,
        } => evaluate_cmd(&reference, &prediction, &out, w2.as_deref(), &slice, raw),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn gen_data(config: &Path, out: &Path, n: Option<usize>, seed: Option<u64>) -> Result<()> {
    let cfg = config_load(config)?;
    let spec = cfg.problem_spec()?;
    let ds = generate_dataset(&spec, n.unwrap_or(cfg.n_samples), seed.unwrap_or(cfg.data_seed))?;
    dataset_write(&ds, out)
}

fn check_grids(cfg: &ExperimentConfig, ds: &OperatorDataset) -> Result<()> {
    if ds.header.input_grid != cfg.input_grid() || ds.header.output_grid != cfg.output_grid() {
        return Err(Error::Config(format!(
            "dataset grids ({} / {} points) do not match the configuration ({} / {})",
            ds.header.input_grid.len(),
            ds.header.output_grid.len(),
            cfg.input_grid().len(),
            cfg.output_grid().len()
        )));
    }
    Ok(())
}

/// Fresh model with the configured initialization.
pub fn build_model(cfg: &ExperimentConfig) -> Result<(UqSonet, ParamStore)> {
    let mut store = ParamStore::new();
    let model = UqSonet::new(&mut store, cfg.model_config(), &mut Rng::derive(cfg.seed, streams::INIT))?;
    Ok((model, store))
}

/// Model and parameters saved in a checkpoint, with its configuration.
pub fn load_model(ckpt: &ModelCheckpoint) -> Result<(ExperimentConfig, UqSonet, ParamStore)> {
    let cfg = config_parse(&ckpt.config_text)?;
    let mut store = ParamStore::new();
    let model = UqSonet::new(&mut store, ckpt.model.clone(), &mut Rng::seeded(0))?;
    ckpt.restore(&mut store)?;
    Ok((cfg, model, store))
}

fn train_cmd(config: &Path, data: &Path, out: &Path, resume: Option<&Path>, wall_time: bool) -> Result<()> {
    let cfg = config_load(config)?;
    let ds = dataset_read(data)?;
    check_grids(&cfg, &ds)?;
    if ds.len() != cfg.n_samples {
        return Err(Error::Config(format!(
            "dataset holds {} samples, configuration expects {}",
            ds.len(),
            cfg.n_samples
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let echo = config_echo(&cfg);
    write_file(&out.join("config.cfg"), echo.as_bytes())?;
    let (model, mut store) = build_model(&cfg)?;
    let mut adam = None;
    if let Some(path) = resume {
        let ckpt = checkpoint_read(path)?;
        ckpt.restore(&mut store)?;
        adam = Some(
            ckpt.adam_state()
                .ok_or_else(|| Error::Config("checkpoint has no optimizer state to resume".into()))?,
        );
    }
    let policy = cfg.sensor_policy();
    let plan = cfg.train_plan();
    let mut batches = pregenerate_batches(&ds, &policy, plan.n_batches, &mut Rng::derive(cfg.seed, streams::OBSERVE))?;
    let regen = |rng: &mut Rng| pregenerate_batches(&ds, &policy, plan.n_batches, rng);
    let points = cfg.output_grid().points();
    let clock = std::time::Instant::now();
    let mut timing = String::new();
    let options = TrainOptions {
        record_wall_time: wall_time,
        log_every: cfg.log_every,
    };
    let outcome = train(
        &model,
        &mut store,
        &mut batches,
        Some(&regen),
        &points,
        &plan,
        adam,
        options,
        |snap| {
            let ckpt = ModelCheckpoint::capture(echo.clone(), &model.config, snap.store, Some(snap.adam), snap.iteration);
            checkpoint_write(&ckpt, &out.join(format!("ckpt-{:08}.uqso", snap.iteration)))?;
            let _ = writeln!(timing, "iteration {} at {} ms", snap.iteration, clock.elapsed().as_millis());
            if snap.iteration == plan.iterations {
                checkpoint_write(&ckpt, &out.join("final.uqso"))?;
            }
            Ok(())
        },
    );
    write_file(&out.join("timing.log"), timing.as_bytes())?;
    let outcome = outcome?;
    write_file(&out.join("loss.csv"), trace_csv(&outcome.trace).as_bytes())
}

/// Reads an observation CSV with columns `x, value` or `x, y, value`.
pub fn read_observations(path: &Path) -> Result<SensorSet> {
    let text = read_text(path)?;
    parse_observations(&text)
}

pub fn parse_observations(text: &str) -> Result<SensorSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let (_, header) = lines.next().ok_or_else(|| Error::MalformedHeader("empty observation file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let two_d = match cols.as_slice() {
        ["x", "value"] => false,
        ["x", "y", "value"] => true,
        _ => {
            return Err(Error::MalformedHeader(format!(
                "observation header must be `x,value` or `x,y,value`, got `{header}`"
            )))
        }
    };
    let mut sensors = vec![];
    for (i, line) in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedHeader(format!("line {}: {e}", i + 1)))?;
        if vals.len() != cols.len() {
            return Err(Error::MalformedHeader(format!("line {}: expected {} columns", i + 1, cols.len())));
        }
        sensors.push(if two_d {
            Sensor {
                loc: [vals[0], vals[1]],
                value: vals[2],
            }
        } else {
            Sensor::new_1d(vals[0], vals[1])
        });
    }
    SensorSet::new(sensors)
}

pub fn observations_csv(obs: &SensorSet, dim: usize) -> String {
    let mut s = String::from(if dim == 1 { "x,value\n" } else { "x,y,value\n" });
    for o in &obs.sensors {
        if dim == 1 {
            let _ = writeln!(s, "{},{}", o.loc[0], o.value);
        } else {
            let _ = writeln!(s, "{},{},{}", o.loc[0], o.loc[1], o.value);
        }
    }
    s
}

fn observe_cmd(config: &Path, data: &Path, index: usize, m: Option<usize>, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = config_load(config)?;
    let ds = dataset_read(data)?;
    if index >= ds.len() {
        return Err(Error::Config(format!("index {index} out of range for {} samples", ds.len())));
    }
    let policy = cfg.sensor_policy();
    let mut rng = Rng::derive(seed.unwrap_or(cfg.eval_seed), index as u64);
    let m = m.unwrap_or_else(|| sample_sensor_count(&policy, &mut rng));
    let obs = draw_observations(&ds.input_field(index), &policy, m, None, &mut rng)?;
    write_file(out, observations_csv(&obs, ds.header.input_grid.dim()).as_bytes())
}

/// `# sensors = m`, then `x[,y],mean,std` rows.
pub fn stats_csv(grid: Grid, m: usize, mean: &[f64], std: &[f64]) -> String {
    let mut s = format!("# sensors = {m}\n");
    s.push_str(if grid.dim() == 1 { "x,mean,std\n" } else { "x,y,mean,std\n" });
    for (i, p) in grid.points().iter().enumerate() {
        if grid.dim() == 1 {
            let _ = writeln!(s, "{},{:e},{:e}", p[0], mean[i], std[i]);
        } else {
            let _ = writeln!(s, "{},{},{:e},{:e}", p[0], p[1], mean[i], std[i]);
        }
    }
    s
}

/// `# sensors = m`, a `sample,u0,u1,...` header, then one row per member.
pub fn ensemble_csv(m: usize, ensemble: &Ensemble) -> String {
    let width = ensemble.mean.len();
    let mut s = format!("# sensors = {m}\nsample");
    for j in 0..width {
        let _ = write!(s, ",u{j}");
    }
    s.push('\n');
    for (i, row) in ensemble.samples.iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in row {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
    }
    s
}

fn reference_cmd(
    config: &Path,
    obs_path: &Path,
    out: &Path,
    stats: Option<&Path>,
    n: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = config_load(config)?;
    let obs = read_observations(obs_path)?;
    let spec = cfg.eval_spec()?;
    let seed = seed.unwrap_or(cfg.eval_seed);
    let noise = cfg.noise_spec();
    let reference = reference_ensemble(&spec, &obs.sensors, &noise, n.unwrap_or(cfg.n_reference), &mut Rng::seeded(seed))?;
    let ds = reference_to_dataset(&reference, &spec, &obs.sensors, &noise, seed)?;
    dataset_write(&ds, out)?;
    if let Some(path) = stats {
        let e = &reference.solutions;
        write_file(path, stats_csv(spec.output_grid, obs.len(), &e.mean, &e.std).as_bytes())?;
    }
    Ok(())
}

fn predict_cmd(
    checkpoint: &Path,
    obs_path: &Path,
    out: &Path,
    ensemble: Option<&Path>,
    n: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let ckpt = checkpoint_read(checkpoint)?;
    let (cfg, model, store) = load_model(&ckpt)?;
    let obs = read_observations(obs_path)?;
    let grid = cfg.eval_grid();
    let mut rng = Rng::seeded(seed.unwrap_or(cfg.eval_seed));
    let pred = predict_ensemble(
        &model,
        &store,
        &obs,
        &grid.points(),
        n.unwrap_or(cfg.n_predict),
        Some(&cfg.counts),
        &mut rng,
    )?;
    write_file(out, stats_csv(grid, obs.len(), &pred.mean, &pred.std).as_bytes())?;
    if let Some(path) = ensemble {
        write_file(path, ensemble_csv(obs.len(), &pred).as_bytes())?;
    }
    Ok(())
}

/// One side of an evaluation pair.
struct Side {
    m: usize,
    grid: Grid,
    mean: Vec<f64>,
    std: Vec<f64>,
    samples: Option<Vec<Vec<f64>>>,
}

fn grid_from_points(points: &[[f64; 2]], two_d: bool) -> Result<Grid> {
    let n = points.len();
    let bad = || Error::MalformedHeader("points do not form a uniform grid".into());
    if !two_d {
        if n < 2 {
            return Err(bad());
        }
        return Ok(Grid::line(points[0][0], points[n - 1][0], n));
    }
    let k = (n as f64).sqrt().round() as usize;
    if k * k != n || k < 2 {
        return Err(bad());
    }
    let g = Grid::D2 {
        x0: points[0][0],
        x1: points[n - 1][0],
        nx: k,
        y0: points[0][1],
        y1: points[n - 1][1],
        ny: k,
    };
    Ok(g)
}

fn sensors_comment(text: &str) -> Result<usize> {
    text.lines()
        .find_map(|l| l.trim().strip_prefix("# sensors =").map(|v| v.trim().parse::<usize>()))
        .ok_or_else(|| Error::MalformedHeader("missing `# sensors = m` line".into()))?
        .map_err(|e| Error::MalformedHeader(e.to_string()))
}

fn data_rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::MalformedHeader(format!("line {}: {e}", lineno + 1)))
}

fn load_side(path: &Path) -> Result<Side> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(DATASET_MAGIC) {
        let ds = dataset_from_bytes(&bytes, path)?;
        let m = ds
            .header
            .metadata
            .get("observations")
            .and_then(|o| o.as_array())
            .map(|a| a.len())
            .ok_or_else(|| Error::MalformedHeader("reference metadata lacks observations".into()))?;
        let samples: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.output(i).to_vec()).collect();
        let e = Ensemble::from_samples(samples)?;
        return Ok(Side {
            m,
            grid: ds.header.output_grid,
            mean: e.mean,
            std: e.std,
            samples: Some(e.samples),
        });
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::MalformedHeader(format!("{} is not UTF-8", path.display())))?;
    let m = sensors_comment(&text)?;
    let mut rows = data_rows(&text);
    let (_, header) = rows.next().ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let header = header.trim();
    if header.starts_with("sample") {
        return Err(Error::Usage(format!(
            "{}: ensemble CSVs carry no grid; pair them through --w2 with a dataset reference",
            path.display()
        )));
    }
    let two_d = match header {
        "x,mean,std" => false,
        "x,y,mean,std" => true,
        _ => return Err(Error::MalformedHeader(format!("unexpected header `{header}`"))),
    };
    let (mut pts, mut mean, mut std) = (vec![], vec![], vec![]);
    for (i, line) in rows {
        let v = parse_row(line, i)?;
        let w = if two_d { 4 } else { 3 };
        if v.len() != w {
            return Err(Error::MalformedHeader(format!("line {}: expected {w} columns", i + 1)));
        }
        pts.push(if two_d { [v[0], v[1]] } else { [v[0], 0.0] });
        mean.push(v[w - 2]);
        std.push(v[w - 1]);
    }
    Ok(Side {
        m,
        grid: grid_from_points(&pts, two_d)?,
        mean,
        std,
        samples: None,
    })
}

/// Members of an ensemble CSV written by `predict --ensemble`.
fn load_ensemble_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rows = data_rows(&text);
    rows.next();
    rows.map(|(i, l)| parse_row(l, i).map(|mut v| v.split_off(1.min(v.len())))).collect()
}

fn evaluate_cmd(
    references: &[PathBuf],
    predictions: &[PathBuf],
    out: &Path,
    w2: Option<&Path>,
    slices: &[String],
    raw: bool,
) -> Result<()> {
    if references.len() != predictions.len() {
        return Err(Error::Usage("--reference and --prediction must pair up".into()));
    }
    let slices: Vec<Slice> = if slices.is_empty() {
        vec![Slice::Full]
    } else {
        slices
            .iter()
            .map(|s| Slice::parse(s).ok_or_else(|| Error::Usage(format!("bad slice `{s}`"))))
            .collect::<Result<_>>()?
    };
    let mut per_slice: Vec<Vec<Case>> = vec![vec![]; slices.len()];
    let mut w2_rows = String::from("pair,m,w2\n");
    for (k, (rp, pp)) in references.iter().zip(predictions).enumerate() {
        let r = load_side(rp)?;
        let is_ensemble_csv = read_text(pp).map(|t| data_rows(&t).next().is_some_and(|(_, h)| h.starts_with("sample"))).unwrap_or(false);
        let p = if is_ensemble_csv {
            let samples = load_ensemble_csv(pp)?;
            let e = Ensemble::from_samples(samples)?;
            Side {
                m: r.m,
                grid: r.grid,
                mean: e.mean,
                std: e.std,
                samples: Some(e.samples),
            }
        } else {
            load_side(pp)?
        };
        if r.mean.len() != p.mean.len() || r.grid != p.grid {
            return Err(Error::Shape(format!("pair {k}: reference and prediction grids differ")));
        }
        for (si, s) in slices.iter().enumerate() {
            let e = relative_errors(
                &s.extract(r.grid, &r.mean)?,
                &s.extract(r.grid, &r.std)?,
                &s.extract(p.grid, &p.mean)?,
                &s.extract(p.grid, &p.std)?,
            )?;
            match per_slice[si].iter_mut().find(|c| c.m == r.m) {
                Some(c) => c.trials.push(e),
                None => per_slice[si].push(Case { m: r.m, trials: vec![e] }),
            }
        }
        if w2.is_some() {
            let (Some(rs), Some(ps)) = (&r.samples, &p.samples) else {
                return Err(Error::Usage(format!("pair {k}: --w2 needs ensembles on both sides")));
            };
            let d = w2_gaussian(&fit_gaussian(rs)?, &fit_gaussian(ps)?)?;
            let _ = writeln!(w2_rows, "{k},{},{d:e}", r.m);
        }
    }
    let mut body = String::new();
    for (s, cases) in slices.iter().zip(per_slice.iter_mut()) {
        cases.sort_by_key(|c| c.m);
        if slices.len() > 1 || *s != Slice::Full {
            let _ = writeln!(body, "# slice {}", s.label());
        }
        body.push_str(&report_table(cases, !raw)?);
    }
    write_file(out, body.as_bytes())?;
    if let Some(path) = w2 {
        write_file(path, w2_rows.as_bytes())?;
    }
    Ok(())
}
