//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use tqs_core::estimator::{predict as predict_couplings, MeasurementSet};
use tqs_core::family::Interval;
use tqs_core::observables::{find_crossing, fss_fit, Summary};
use tqs_core::oracle::{ed_ground_state, ff_tfi_energy, generate_measurements};
use tqs_core::rng::{derive_seed, stream};
use tqs_core::trainer::{self, Checkpoint, Mode, StepLog, TrainState};
use tqs_core::{CouplingVector, HamiltonianFamily, ModelKind, SamplerConfig, SymmetrizedModel, TqsModel};

use crate::analysis::{reference_energy, relative_error, Evaluator, PointEstimates};
use crate::checkpoint;
use crate::cli::{FineTuneArgs, FssArgs, MeasureArgs, OracleArgs, PredictArgs, ScanArgs, TrainArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::measurements;
use crate::output::{ensure_dir, num, opt_num, parse_grid, parse_list, CsvOut, Provenance};

pub const CHECKPOINT_FILE: &str = "checkpoint.tqs";
pub const CONFIG_ECHO: &str = "config.toml";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const FINETUNE_LOG: &str = "finetune_log.csv";
pub const SCAN_CSV: &str = "scan.csv";
pub const PREDICT_CSV: &str = "predict.csv";
pub const FSS_CURVES_CSV: &str = "fss_curves.csv";
pub const FSS_SUMMARY_CSV: &str = "fss_summary.csv";
pub const SCAN_N_BATCH: u64 = 1_000_000;
pub const SCAN_N_UNIQUE: usize = 1000;
pub const PREDICT_SUBSAMPLES: usize = 10;

const OBSERVABLE_HEADER: [&str; 11] = [
    "n",
    "h",
    "observable",
    "value",
    "p10",
    "p90",
    "n_batch",
    "n_unique",
    "seed",
    "reference",
    "extrapolated",
];

fn read_config(path: &Path) -> CliResult<(String, RunConfig)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&text).map_err(|e| e.context(path.display()))?;
    Ok((text, cfg))
}

fn output_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    flag.clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::usage("no output directory: pass --out or set output_dir"))
}

/// The single varying coupling that grid commands sweep.
fn grid_coupling(family: &HamiltonianFamily) -> CliResult<&'static str> {
    match family.coupling_names().as_slice() {
        [name] => Ok(name),
        names => Err(CliError::usage(format!(
            "grid commands need exactly one varying parameter, the family has {}",
            names.len()
        ))),
    }
}

fn log_header(family: &HamiltonianFamily) -> Vec<String> {
    let mut h = vec!["step".to_string(), "n".to_string()];
    h.extend(family.coupling_names().iter().map(|s| s.to_string()));
    h.extend(["energy", "scale", "lr", "seconds"].map(String::from));
    h
}

fn log_row(log: &StepLog, start: Option<Instant>) -> Vec<String> {
    let mut r = vec![log.step.to_string(), log.couplings.n.to_string()];
    r.extend(log.couplings.values.iter().map(|&v| num(v)));
    r.push(num(log.energy.re));
    r.push(num(log.scale));
    r.push(num(log.lr));
    r.push(start.map(|t| num(t.elapsed().as_secs_f64())).unwrap_or_default());
    r
}

fn open_log(path: &Path, prov: &Provenance, family: &HamiltonianFamily) -> CliResult<CsvOut<std::io::BufWriter<fs::File>>> {
    let header = log_header(family);
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    CsvOut::create(path, prov, &refs)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let (text, cfg) = read_config(&a.config)?;
    let family = cfg.family()?;
    let model_config = cfg.model_config(family.n_couplings())?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let sampler = cfg.sampler(a.sampling.n_batch, a.sampling.n_unique, seed)?;
    let tcfg = cfg.train_config(sampler)?;
    let symmetries = cfg.symmetry_kinds()?;
    let out = output_dir(&a.out, &cfg)?;

    let mut ckpt = match &a.checkpoint {
        Some(path) => {
            let c = checkpoint::load(path)?;
            if c.family != family || c.model_config != model_config || c.symmetries != symmetries || c.u1 != cfg.u1 {
                return Err(CliError::usage("checkpoint does not match the config"));
            }
            if c.state.mode != Mode::Pretrain {
                return Err(CliError::usage("cannot resume pretraining from a fine-tuned checkpoint"));
            }
            c
        }
        None => {
            let model = TqsModel::new(model_config, seed)?;
            let params = model.into_params();
            Checkpoint {
                model_config,
                family: family.clone(),
                symmetries,
                u1: cfg.u1,
                state: TrainState::new(&params, Mode::Pretrain),
                params,
                seeds: Vec::new(),
            }
        }
    };
    ckpt.group()?;

    ensure_dir(&out)?;
    fs::write(out.join(CONFIG_ECHO), &text)?;
    let prov = Provenance::new(&[text.as_bytes(), &a.sampling_key()], seed);
    let mut log = open_log(&out.join(TRAIN_LOG), &prov, &family)?;
    let start = a.timing.then(Instant::now);
    let every = cfg.checkpoint_every();
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let mut snapshot = ckpt.clone();
    if snapshot.state.step == 0 {
        snapshot.seeds.push(seed);
    }
    trainer::pretrain(&mut ckpt, &tcfg, seed, |step, model, state| {
        log.row(&log_row(step, start)).map_err(|e| tqs_core::Error::Config(e.message))?;
        if every > 0 && step.step % every == 0 {
            snapshot.params = model.params().clone();
            snapshot.state = state.clone();
            checkpoint::save(&ckpt_path, &snapshot).map_err(|e| tqs_core::Error::Config(e.message))?;
        }
        Ok(())
    })?;
    log.finish()?;
    checkpoint::save(&ckpt_path, &ckpt)
}

impl TrainArgs {
    fn sampling_key(&self) -> Vec<u8> {
        format!("n_batch={:?} n_unique={:?}", self.sampling.n_batch, self.sampling.n_unique).into_bytes()
    }
}

pub fn fine_tune(a: &FineTuneArgs) -> CliResult<()> {
    let (text, cfg) = read_config(&a.config)?;
    let mut ckpt = checkpoint::load(&a.checkpoint)?;
    let ckpt_bytes = checkpoint::encode(&ckpt);
    let j = cfg.fine_tune_point(&ckpt.family)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let sampler = cfg.sampler(a.sampling.n_batch, a.sampling.n_unique, seed)?;
    let tcfg = cfg.train_config(sampler)?;
    let out = output_dir(&a.out, &cfg)?;

    ensure_dir(&out)?;
    fs::write(out.join(CONFIG_ECHO), &text)?;
    let key = format!("n_batch={:?} n_unique={:?}", a.sampling.n_batch, a.sampling.n_unique);
    let prov = Provenance::new(&[text.as_bytes(), &ckpt_bytes, key.as_bytes()], seed);
    let family = ckpt.family.clone();
    let mut log = open_log(&out.join(FINETUNE_LOG), &prov, &family)?;
    let start = a.timing.then(Instant::now);
    trainer::fine_tune(&mut ckpt, &j, &tcfg, seed, |step, _, _| {
        log.row(&log_row(step, start)).map_err(|e| tqs_core::Error::Config(e.message))
    })?;
    log.finish()?;
    checkpoint::save(&out.join(CHECKPOINT_FILE), &ckpt)
}

fn sampler_for(s: &crate::cli::SamplingArgs) -> CliResult<SamplerConfig> {
    Ok(SamplerConfig::new(
        s.n_batch.unwrap_or(SCAN_N_BATCH),
        s.n_unique.unwrap_or(SCAN_N_UNIQUE),
        0,
    )?)
}

fn load_for_analysis(path: &Path) -> CliResult<(Checkpoint, TqsModel, Vec<u8>)> {
    let ckpt = checkpoint::load(path)?;
    let model = ckpt.model()?;
    let bytes = checkpoint::encode(&ckpt);
    Ok((ckpt, model, bytes))
}

fn observable_row(
    j: &CouplingVector,
    name: &str,
    values: &[f64],
    sampler: &SamplerConfig,
    seed: u64,
    reference: Option<f64>,
    extrapolated: bool,
) -> CliResult<Vec<String>> {
    let s = Summary::of(values)?;
    Ok(vec![
        j.n.to_string(),
        num(j.values[0]),
        name.to_string(),
        num(s.median),
        num(s.p10),
        num(s.p90),
        sampler.n_batch.to_string(),
        sampler.n_unique.to_string(),
        seed.to_string(),
        opt_num(reference),
        extrapolated.to_string(),
    ])
}

pub fn scan(a: &ScanArgs) -> CliResult<()> {
    let (ckpt, model, bytes) = load_for_analysis(&a.checkpoint)?;
    let family = &ckpt.family;
    grid_coupling(family)?;
    let sizes: Vec<usize> = parse_list(&a.sizes, "sizes")?;
    let grid = parse_grid(&a.h_grid)?;
    let sampler = sampler_for(&a.sampling)?;
    if a.repeats == 0 {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    let eval = Evaluator {
        model: &model,
        group: ckpt.group()?,
        mask: ckpt.mask(),
        family,
    };
    ensure_dir(&a.out)?;
    let key = format!("scan sizes={:?} grid={:?} sampler={:?} repeats={}", sizes, grid, (sampler.n_batch, sampler.n_unique), a.repeats);
    let prov = Provenance::new(&[&bytes, key.as_bytes()], a.seed);
    let mut csv = CsvOut::create(&a.out.join(SCAN_CSV), &prov, &OBSERVABLE_HEADER)?;
    let mut index = 0u64;
    for &n in &sizes {
        for &h in &grid {
            let j = family.couplings(n, vec![h])?;
            let extrapolated = !family.contains(&j);
            let est = eval.estimate(&j, &sampler, a.repeats, a.seed, &[index])?;
            index += 1;
            let reference = reference_energy(family, &j)?;
            if reference.is_none() {
                eprintln!("warning: no exact reference for n={n} h={h}");
            }
            let row = |name: &str, v: &[f64], r: Option<f64>| observable_row(&j, name, v, &sampler, a.seed, r, extrapolated);
            csv.row(&row("energy", &est.energy, reference)?)?;
            if let Some(e0) = reference {
                let de: Vec<f64> = est.energy.iter().map(|&e| relative_error(e, e0)).collect();
                csv.row(&row("delta_e", &de, reference)?)?;
            }
            csv.row(&row("abs_m", &est.abs_m, None)?)?;
            csv.row(&row("m2", &est.m2, None)?)?;
            if let Ok(u) = est.binder() {
                csv.row(&row("binder", &u, None)?)?;
            }
        }
    }
    csv.finish()?;
    Ok(())
}

fn parse_box(s: &str, family: &HamiltonianFamily) -> CliResult<Vec<Interval>> {
    let boxes: Vec<Interval> = s
        .split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| CliError::usage(format!("invalid box {part:?}; use lo:hi")))?;
            let p = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::usage(format!("invalid box bound {x:?}")))
            };
            Ok(Interval::new(p(lo)?, p(hi)?)?)
        })
        .collect::<CliResult<_>>()?;
    if boxes.len() != family.n_couplings() {
        return Err(CliError::usage(format!(
            "box has {} intervals, the family has {} varying parameters",
            boxes.len(),
            family.n_couplings()
        )));
    }
    Ok(boxes)
}

/// `k` records drawn without replacement, in file order.
fn subsample(set: &MeasurementSet, k: usize, seed: u64) -> MeasurementSet {
    let mut idx = sample_indices(&mut stream(seed, &[]), set.records.len(), k).into_vec();
    idx.sort_unstable();
    MeasurementSet {
        n: set.n,
        records: idx.iter().map(|&i| set.records[i].clone()).collect(),
        note: set.note.clone(),
    }
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let (ckpt, model, bytes) = load_for_analysis(&a.checkpoint)?;
    let family = &ckpt.family;
    let file = measurements::read(&a.measurements)?;
    if file.model != family.kind {
        return Err(CliError::usage(format!(
            "measurements come from model {}, the checkpoint describes {}",
            file.model.name(),
            family.kind.name()
        )));
    }
    let search_box = match &a.search_box {
        Some(s) => parse_box(s, family)?,
        None => family.priors().collect(),
    };
    let sweep: Option<Vec<usize>> = a.sweep.as_deref().map(|s| parse_list(s, "sweep")).transpose()?;
    if let Some(&k) = sweep.iter().flatten().find(|&&k| k == 0 || k > file.set.records.len()) {
        return Err(CliError::usage(format!(
            "sweep size {k} outside 1..={}",
            file.set.records.len()
        )));
    }
    let sym = SymmetrizedModel::new(&model, ckpt.group()?, ckpt.mask());
    ensure_dir(&a.out)?;
    let meas_text = fs::read(&a.measurements)?;
    let key = format!("predict box={:?} sweep={:?}", search_box, sweep);
    let prov = Provenance::new(&[&bytes, &meas_text, key.as_bytes()], a.seed);
    let mut header = vec!["n_measure".to_string()];
    header.extend(family.coupling_names().iter().map(|c| format!("{c}_hat")));
    header.extend(["loglik", "converged", "seed"].map(String::from));
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvOut::create(&a.out.join(PREDICT_CSV), &prov, &refs)?;
    let mut emit = |set: &MeasurementSet, seed: u64| -> CliResult<()> {
        let r = predict_couplings(&sym, family, set, &search_box)?;
        let mut row = vec![r.n_measure.to_string()];
        row.extend(r.j_hat.values.iter().map(|&v| num(v)));
        row.push(num(r.log_likelihood));
        row.push(r.converged.to_string());
        row.push(seed.to_string());
        csv.row(&row)
    };
    match &sweep {
        None => emit(&file.set, a.seed)?,
        Some(sizes) => {
            for &k in sizes {
                for rep in 0..PREDICT_SUBSAMPLES {
                    let s = derive_seed(a.seed, &[k as u64, rep as u64]);
                    emit(&subsample(&file.set, k, s), s)?;
                }
            }
        }
    }
    csv.finish()?;
    Ok(())
}

/// Binder curves, their crossing and the √⟨m²⟩ scaling fit at the crossing.
pub struct FssResult {
    pub curves: Vec<(usize, Vec<(f64, f64)>)>,
    pub crossing: tqs_core::observables::Crossing,
    pub rms_at_crossing: Vec<f64>,
    pub fit: tqs_core::observables::FssFit,
}

/// Curve point (size i, grid k) uses path [i, k]; the crossing evaluation
/// for size i uses [i, grid.len()].
pub fn fss_analysis(
    eval: &Evaluator<'_>,
    sizes: &[usize],
    grid: &[f64],
    sampler: &SamplerConfig,
    repeats: usize,
    seed: u64,
    mut on_point: impl FnMut(&CouplingVector, &PointEstimates) -> CliResult<()>,
) -> CliResult<FssResult> {
    let mut curves = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        let mut curve = Vec::with_capacity(grid.len());
        for (k, &h) in grid.iter().enumerate() {
            let j = eval.family.couplings(n, vec![h])?;
            let est = eval.estimate(&j, sampler, repeats, seed, &[i as u64, k as u64])?;
            on_point(&j, &est)?;
            curve.push((h, Summary::of(&est.binder()?)?.median));
        }
        curves.push((n, curve));
    }
    let crossing = find_crossing(&curves).map_err(|e| match e {
        tqs_core::Error::NoCrossing => CliError::analysis("Binder curves do not cross on the grid"),
        other => other.into(),
    })?;
    let mut rms = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        let j = eval.family.couplings(n, vec![crossing.h_c])?;
        let est = eval.estimate(&j, sampler, repeats, seed, &[i as u64, grid.len() as u64])?;
        rms.push(Summary::of(&est.rms_m())?.median);
    }
    let fit = fss_fit(sizes, &rms)?;
    Ok(FssResult {
        curves,
        crossing,
        rms_at_crossing: rms,
        fit,
    })
}

pub fn fss(a: &FssArgs) -> CliResult<()> {
    let (ckpt, model, bytes) = load_for_analysis(&a.checkpoint)?;
    let family = &ckpt.family;
    grid_coupling(family)?;
    let sizes: Vec<usize> = parse_list(&a.sizes, "sizes")?;
    if sizes.len() < 2 {
        return Err(CliError::usage("finite-size scaling needs at least two sizes"));
    }
    let grid = parse_grid(&a.h_grid)?;
    if grid.len() < 2 {
        return Err(CliError::usage("finite-size scaling needs at least two grid points"));
    }
    if a.repeats == 0 {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    let sampler = sampler_for(&a.sampling)?;
    let eval = Evaluator {
        model: &model,
        group: ckpt.group()?,
        mask: ckpt.mask(),
        family,
    };
    ensure_dir(&a.out)?;
    let key = format!("fss sizes={:?} grid={:?} sampler={:?} repeats={}", sizes, grid, (sampler.n_batch, sampler.n_unique), a.repeats);
    let prov = Provenance::new(&[&bytes, key.as_bytes()], a.seed);
    let mut curves_csv = CsvOut::create(&a.out.join(FSS_CURVES_CSV), &prov, &OBSERVABLE_HEADER)?;
    let result = fss_analysis(&eval, &sizes, &grid, &sampler, a.repeats, a.seed, |j, est| {
        let extrapolated = !family.contains(j);
        curves_csv.row(&observable_row(j, "binder", &est.binder()?, &sampler, a.seed, None, extrapolated)?)?;
        curves_csv.row(&observable_row(j, "rms_m", &est.rms_m(), &sampler, a.seed, None, extrapolated)?)
    });
    curves_csv.finish()?;
    let result = result?;
    let mut csv = CsvOut::create(
        &a.out.join(FSS_SUMMARY_CSV),
        &prov,
        &["h_c", "spread", "beta_over_nu", "beta_over_nu_err", "sizes", "excluded_pairs"],
    )?;
    let excluded: Vec<String> = result
        .crossing
        .pairs
        .iter()
        .filter(|p| p.2.is_none())
        .map(|p| format!("{}-{}", p.0, p.1))
        .collect();
    let sizes_text: Vec<String> = sizes.iter().map(|n| n.to_string()).collect();
    csv.row(&[
        num(result.crossing.h_c),
        num(result.crossing.spread),
        num(-result.fit.slope),
        num(result.fit.slope_std_error),
        sizes_text.join(";"),
        excluded.join(";"),
    ])?;
    csv.finish()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    Ed,
    Ff,
}

fn oracle_points(a: &OracleArgs) -> CliResult<(String, HamiltonianFamily, Vec<CouplingVector>)> {
    let (text, cfg) = read_config(&a.config)?;
    let family = cfg.family()?;
    grid_coupling(&family)?;
    let sizes: Vec<usize> = match &a.sizes {
        Some(s) => parse_list(s, "sizes")?,
        None => family.sizes.clone(),
    };
    let grid = parse_grid(&a.h_grid)?;
    let mut points = Vec::new();
    for &n in &sizes {
        for &h in &grid {
            points.push(family.couplings(n, vec![h])?);
        }
    }
    Ok((text, family, points))
}

pub fn oracle_energies(a: &OracleArgs, solver: Solver) -> CliResult<()> {
    let (text, family, points) = oracle_points(a)?;
    if solver == Solver::Ff && family.kind != ModelKind::Tfi {
        return Err(CliError::usage("the free-fermion oracle covers the tfi model only"));
    }
    ensure_dir(&a.out)?;
    let (name, file) = match solver {
        Solver::Ed => ("ed", "oracle_ed.csv"),
        Solver::Ff => ("ff", "oracle_ff.csv"),
    };
    let key = format!("oracle {name} points={:?}", points.iter().map(|j| (j.n, j.values[0])).collect::<Vec<_>>());
    let prov = Provenance::new(&[text.as_bytes(), key.as_bytes()], 0);
    let mut csv = CsvOut::create(&a.out.join(file), &prov, &["n", "h", "energy", "method"])?;
    for j in &points {
        let e = match solver {
            Solver::Ed => ed_ground_state(&family.hamiltonian(j)?)?.energy,
            Solver::Ff => {
                let p = family.full_params(j)?;
                ff_tfi_energy(j.n, p[0], p[1])?
            }
        };
        csv.row(&[j.n.to_string(), num(j.values[0]), num(e), name.to_string()])?;
    }
    csv.finish()?;
    Ok(())
}

pub fn measurement_file_name(j: &CouplingVector) -> String {
    format!("measurements_n{}_h{}.txt", j.n, num(j.values[0]))
}

pub fn oracle_measure(a: &MeasureArgs) -> CliResult<()> {
    let (_, family, points) = oracle_points(&a.oracle)?;
    if a.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    ensure_dir(&a.oracle.out)?;
    for (i, j) in points.iter().enumerate() {
        let state = ed_ground_state(&family.hamiltonian(j)?)?;
        let set = generate_measurements(&state, a.count, derive_seed(a.seed, &[i as u64]))?;
        let text = measurements::render(family.kind, &family.full_params(j)?, &set);
        fs::write(a.oracle.out.join(measurement_file_name(j)), text)?;
    }
    Ok(())
}
