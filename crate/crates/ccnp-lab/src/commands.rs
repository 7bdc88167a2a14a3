//! Subcommand implementations. Config problems surface as `CmdError::Config`
//! (exit 2); failures during otherwise valid work as `CmdError::Run` (exit 1).

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use ccnp_core::datagen::{
    make_meta_dataset, store_dataset, CacheMeta, DatasetSpec, FunctionFamily, FunctionFamilySpec,
    GpKernel, GpKernelSpec, LvMode, LvSampling, MetaDataset,
};
use ccnp_core::eval::{aggregate_metrics, coefficient_inference, evaluate, CoeffProbeConfig,
    EvalMetrics, MetricReport};
use ccnp_core::model::ModelVariant;
use ccnp_core::tensor::gradcheck::run_suite;
use ccnp_core::training::{build_variant, csv_float, load_checkpoint};

use crate::config::{load_config, ExperimentConfig};
use crate::data::{cache_root, load_or_generate};

#[derive(Debug)]
pub enum CmdError {
    /// Bad or inconsistent user input; nothing was attempted.
    Config(anyhow::Error),
    /// A runtime failure while executing valid work.
    Run(anyhow::Error),
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Config(e) => write!(f, "config error: {e:#}"),
            CmdError::Run(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Run(_) => 1,
        }
    }
}

type CmdResult = Result<(), CmdError>;

fn config_err(e: anyhow::Error) -> CmdError {
    CmdError::Config(e)
}

fn run_err(e: anyhow::Error) -> CmdError {
    CmdError::Run(e)
}

/// Observation dimensionality implied by a dataset spec.
fn expected_y_dim(spec: &DatasetSpec) -> usize {
    match spec {
        DatasetSpec::Lv { .. } => 2,
        _ => 1,
    }
}

fn load_experiment(path: &Path) -> Result<ExperimentConfig, CmdError> {
    let config = load_config(path).map_err(config_err)?;
    let want = expected_y_dim(&config.data.spec);
    if config.model.y_dim != want {
        return Err(config_err(anyhow!(
            "model.y_dim = {} but the dataset produces {}-dimensional observations",
            config.model.y_dim,
            want
        )));
    }
    Ok(config)
}

fn fetch_dataset(config: &ExperimentConfig, out_root: &Path) -> Result<MetaDataset, CmdError> {
    let root = cache_root(&out_root.join("datasets"));
    load_or_generate(&root, &config.data).map_err(run_err)
}

// ---------------------------------------------------------------------------
// run

#[derive(Debug, Serialize)]
struct TaskFailure {
    variant: String,
    seed: u64,
    stage: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct CellReport {
    variant: String,
    shots: usize,
    report: MetricReport,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    name: String,
    cells: Vec<CellReport>,
    failures: Vec<TaskFailure>,
}

struct TrainOutcome {
    variant: ModelVariant,
    seed: u64,
    result: anyhow::Result<PathBuf>,
}

/// Train every (variant, seed) pair, evaluate the best checkpoints on the
/// test split for each shot count, and write table.csv + summary.json.
pub fn cmd_run(config_path: &Path, out_root: &Path, jobs: usize) -> CmdResult {
    if jobs == 0 {
        return Err(config_err(anyhow!("--jobs must be >= 1")));
    }
    let config = load_experiment(config_path)?;
    let dataset = fetch_dataset(&config, out_root)?;
    let exp_dir = out_root.join(&config.name);
    std::fs::create_dir_all(&exp_dir)
        .with_context(|| format!("creating {}", exp_dir.display()))
        .map_err(run_err)?;

    let mut tasks: Vec<(ModelVariant, u64)> = Vec::new();
    for &variant in &config.eval.variants {
        for &seed in &config.eval.seeds {
            tasks.push((variant, seed));
        }
    }

    let outcomes = Mutex::new(Vec::<TrainOutcome>::new());
    std::thread::scope(|scope| {
        for worker in 0..jobs.min(tasks.len()) {
            let tasks = &tasks;
            let outcomes = &outcomes;
            let config = &config;
            let dataset = &dataset;
            let exp_dir = &exp_dir;
            scope.spawn(move || {
                for (variant, seed) in tasks.iter().copied().skip(worker).step_by(jobs) {
                    let dir = exp_dir
                        .join("runs")
                        .join(variant.name())
                        .join(format!("seed{seed}"));
                    let result = train_one(config, dataset, variant, seed, &dir);
                    outcomes.lock().unwrap().push(TrainOutcome {
                        variant,
                        seed,
                        result,
                    });
                }
            });
        }
    });
    let outcomes = outcomes.into_inner().unwrap();

    let mut failures = Vec::new();
    let mut cells = Vec::new();
    for &variant in &config.eval.variants {
        // Per-shot accumulation across the seeds that trained successfully.
        let mut per_shot: Vec<Vec<(u64, EvalMetrics)>> =
            vec![Vec::new(); config.eval.shots.len()];
        for &seed in &config.eval.seeds {
            let outcome = outcomes
                .iter()
                .find(|o| o.variant == variant && o.seed == seed)
                .expect("every task produces an outcome");
            let run_dir = match &outcome.result {
                Ok(dir) => dir.clone(),
                Err(e) => {
                    failures.push(TaskFailure {
                        variant: variant.name().into(),
                        seed,
                        stage: "train".into(),
                        error: format!("{e:#}"),
                    });
                    continue;
                }
            };
            match eval_checkpoint(&run_dir.join("ckpt_best.bin"), &dataset.test, &config, seed) {
                Ok(metrics) => {
                    for (slot, m) in per_shot.iter_mut().zip(metrics) {
                        slot.push((seed, m));
                    }
                }
                Err(e) => failures.push(TaskFailure {
                    variant: variant.name().into(),
                    seed,
                    stage: "eval".into(),
                    error: format!("{e:#}"),
                }),
            }
        }
        for (&shots, per_seed) in config.eval.shots.iter().zip(per_shot) {
            if per_seed.is_empty() {
                continue;
            }
            cells.push(CellReport {
                variant: variant.name().into(),
                shots,
                report: aggregate_metrics(per_seed, config.eval.ll_scale, config.eval.mse_scale),
            });
        }
    }

    write_table(&exp_dir.join("table.csv"), &cells).map_err(run_err)?;
    let summary = RunSummary {
        name: config.name.clone(),
        cells,
        failures,
    };
    std::fs::write(
        exp_dir.join("summary.json"),
        serde_json::to_vec_pretty(&summary).map_err(|e| run_err(e.into()))?,
    )
    .context("writing summary.json")
    .map_err(run_err)?;

    println!(
        "run '{}': {} table rows, {} failures -> {}",
        summary.name,
        summary.cells.len(),
        summary.failures.len(),
        exp_dir.display()
    );
    for f in &summary.failures {
        eprintln!("failed [{}/{} seed {}]: {}", f.variant, f.stage, f.seed, f.error);
    }
    if summary.failures.is_empty() {
        Ok(())
    } else {
        Err(run_err(anyhow!(
            "{} task(s) failed; partial results written to {}",
            summary.failures.len(),
            exp_dir.display()
        )))
    }
}

fn train_one(
    config: &ExperimentConfig,
    dataset: &MetaDataset,
    variant: ModelVariant,
    seed: u64,
    dir: &Path,
) -> anyhow::Result<PathBuf> {
    let mut train = config.train.clone();
    train.seed = seed;
    let mut trainer = build_variant(variant, config.model.clone(), train)
        .with_context(|| format!("building {} (seed {seed})", variant.name()))?;
    trainer
        .train_run(dataset, Some(dir))
        .with_context(|| format!("training {} (seed {seed})", variant.name()))?;
    Ok(dir.to_path_buf())
}

fn eval_checkpoint(
    ckpt_path: &Path,
    test: &[ccnp_core::datagen::Instantiation],
    config: &ExperimentConfig,
    seed: u64,
) -> anyhow::Result<Vec<EvalMetrics>> {
    let ckpt = load_checkpoint(ckpt_path)
        .with_context(|| format!("loading {}", ckpt_path.display()))?;
    let (model, store) = ckpt.instantiate().context("instantiating checkpoint")?;
    config
        .eval
        .shots
        .iter()
        .map(|&shots| {
            evaluate(&model, &store, test, shots, seed)
                .with_context(|| format!("{shots}-shot evaluation"))
        })
        .collect()
}

fn opt_float(v: Option<f64>) -> String {
    v.map(|v| csv_float(v)).unwrap_or_default()
}

/// RFC 4180 CSV (CRLF rows) with one row per (variant, shots) cell.
fn write_table(path: &Path, cells: &[CellReport]) -> anyhow::Result<()> {
    let mut out = String::from("variant,shots,ll_mean,ll_std,mse_mean,mse_std\r\n");
    for cell in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{}\r\n",
            cell.variant,
            cell.shots,
            csv_float(cell.report.ll_mean),
            opt_float(cell.report.ll_std),
            csv_float(cell.report.mse_mean),
            opt_float(cell.report.mse_std),
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// datagen

fn parse_family(s: &str) -> anyhow::Result<FunctionFamily> {
    Ok(match s {
        "sinusoid" => FunctionFamily::Sinusoid,
        "exponential" => FunctionFamily::Exponential,
        "oscillator" => FunctionFamily::Oscillator,
        "line" => FunctionFamily::Line,
        other => bail!("unknown family '{other}' (sinusoid|exponential|oscillator|line)"),
    })
}

fn parse_kernel(s: &str) -> anyhow::Result<GpKernel> {
    Ok(match s {
        "rbf" => GpKernel::Rbf,
        "periodic" => GpKernel::Periodic,
        "noisy_matern" => GpKernel::NoisyMatern,
        other => bail!("unknown kernel '{other}' (rbf|periodic|noisy_matern)"),
    })
}

fn parse_lv_mode(s: &str) -> anyhow::Result<LvMode> {
    Ok(match s {
        "greek" => LvMode::Greek,
        "population" => LvMode::Population,
        other => bail!("unknown LV mode '{other}' (greek|population)"),
    })
}

pub struct DatagenArgs {
    pub family: Option<String>,
    pub kernel: Option<String>,
    pub lv: Option<String>,
    pub count: usize,
    pub n_points: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Generate one dataset from CLI flags and store it at `--out` (cache
/// format: <out>.bin + <out>.meta.json).
pub fn cmd_datagen(args: &DatagenArgs) -> CmdResult {
    let chosen =
        args.family.is_some() as u8 + args.kernel.is_some() as u8 + args.lv.is_some() as u8;
    if chosen != 1 {
        return Err(config_err(anyhow!(
            "exactly one of --family, --kernel, --lv is required"
        )));
    }
    let spec = if let Some(f) = &args.family {
        DatasetSpec::Family {
            spec: FunctionFamilySpec::standard(parse_family(f).map_err(config_err)?),
            n_points: args.n_points,
        }
    } else if let Some(k) = &args.kernel {
        DatasetSpec::Gp {
            spec: GpKernelSpec::standard(parse_kernel(k).map_err(config_err)?),
            x_range: (-2.0, 2.0),
            n_points: args.n_points,
        }
    } else {
        DatasetSpec::Lv {
            sampling: LvSampling::standard(
                parse_lv_mode(args.lv.as_deref().unwrap()).map_err(config_err)?,
            ),
        }
    };
    let ratio = (9, 1, 1);
    let dataset = make_meta_dataset(&spec, args.count, ratio, args.seed)
        .context("generating dataset")
        .map_err(run_err)?;
    let meta = CacheMeta {
        spec,
        seed: args.seed,
        count: args.count,
        split_ratio: ratio,
        split_sizes: (dataset.train.len(), dataset.val.len(), dataset.test.len()),
    };
    store_dataset(&args.out, &dataset, &meta)
        .context("storing dataset")
        .map_err(run_err)?;
    println!(
        "wrote {} instantiations (train {}, val {}, test {}) to {}",
        dataset.total(),
        dataset.train.len(),
        dataset.val.len(),
        dataset.test.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

/// Evaluate one checkpoint on the experiment's test split; JSON to stdout.
pub fn cmd_eval(ckpt_path: &Path, config_path: &Path, out_root: &Path) -> CmdResult {
    let config = load_experiment(config_path)?;
    let dataset = fetch_dataset(&config, out_root)?;
    let metrics = eval_checkpoint(ckpt_path, &dataset.test, &config, config.train.seed)
        .map_err(run_err)?;
    let per_shot: Vec<_> = config
        .eval
        .shots
        .iter()
        .zip(&metrics)
        .map(|(&shots, m)| serde_json::json!({ "shots": shots, "metrics": m }))
        .collect();
    let report = serde_json::json!({
        "checkpoint": ckpt_path.display().to_string(),
        "per_shot": per_shot,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

// ---------------------------------------------------------------------------
// probe

/// Coefficient-inference probe on a frozen checkpoint; JSON to stdout.
pub fn cmd_probe(ckpt_path: &Path, config_path: &Path, out_root: &Path) -> CmdResult {
    let config = load_experiment(config_path)?;
    let dataset = fetch_dataset(&config, out_root)?;
    let ckpt = load_checkpoint(ckpt_path)
        .with_context(|| format!("loading {}", ckpt_path.display()))
        .map_err(run_err)?;
    let (model, store) = ckpt
        .instantiate()
        .context("instantiating checkpoint")
        .map_err(run_err)?;
    let probe_config = CoeffProbeConfig {
        seed: config.train.seed,
        ..CoeffProbeConfig::default()
    };
    let report = coefficient_inference(&model, &store, &dataset.train, &dataset.test, &probe_config)
        .context("running coefficient probe")
        .map_err(run_err)?;
    if report.non_sinusoid_warning {
        eprintln!("warning: probe data is not from the sinusoid family; coefficient MSE may not be comparable");
    }
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-proj

/// Sweep the contrastive projection dimension for the CCNP variant and report
/// probe MSE per dimension as CSV (dim,mse_mean,mse_std).
pub fn cmd_sweep_proj(config_path: &Path, out_root: &Path, dims: &[usize]) -> CmdResult {
    let config = load_experiment(config_path)?;
    let dataset = fetch_dataset(&config, out_root)?;
    let mut out = String::from("dim,mse_mean,mse_std\r\n");
    for &dim in dims {
        let mut mses = Vec::new();
        for &seed in &config.eval.seeds {
            let mut model = config.model.clone();
            model.proj_dim = dim;
            let mut train = config.train.clone();
            train.seed = seed;
            let mut trainer = build_variant(ModelVariant::Ccnp, model, train)
                .with_context(|| format!("building ccnp (proj_dim {dim})"))
                .map_err(run_err)?;
            trainer
                .train_run(&dataset, None)
                .with_context(|| format!("training ccnp (proj_dim {dim}, seed {seed})"))
                .map_err(run_err)?;
            let probe_config = CoeffProbeConfig {
                seed,
                ..CoeffProbeConfig::default()
            };
            let report = coefficient_inference(
                &trainer.model,
                &trainer.store,
                &dataset.train,
                &dataset.test,
                &probe_config,
            )
            .context("running coefficient probe")
            .map_err(run_err)?;
            mses.push((seed, report.mse_combined));
        }
        let vals: Vec<f64> = mses.iter().map(|&(_, m)| m).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = if vals.len() > 1 {
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (vals.len() - 1) as f64;
            Some(var.sqrt())
        } else {
            None
        };
        out.push_str(&format!(
            "{dim},{},{}\r\n",
            csv_float(mean),
            opt_float(std)
        ));
    }
    print!("{out}");
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck

/// Finite-difference gradient verification across all ops; one line per op.
pub fn cmd_gradcheck(seed: u64, cases: usize) -> CmdResult {
    if cases == 0 {
        return Err(config_err(anyhow!("--cases must be >= 1")));
    }
    let reports = run_suite(seed, cases)
        .context("running gradient checks")
        .map_err(run_err)?;
    let mut all_ok = true;
    for r in &reports {
        println!(
            "{:<12} {:>4} cases  max rel err {:>12.3e}  {}",
            r.op,
            r.cases,
            r.max_rel_err,
            if r.passed { "PASS" } else { "FAIL" }
        );
        all_ok &= r.passed;
    }
    if all_ok {
        Ok(())
    } else {
        Err(run_err(anyhow!("one or more gradient checks failed")))
    }
}
