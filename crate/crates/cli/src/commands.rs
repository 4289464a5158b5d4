use std::fmt;
use std::path::{Path, PathBuf};

use anchorloc::checkpoint::Checkpoint;
use anchorloc::config::RunConfig;
use anchorloc::data::{assemble, assemble_with_map, RawDataset};
use anchorloc::eval::evaluate;
use anchorloc::experiment::{sweep_anchor_interval, sweep_csv, sweep_svg};
use anchorloc::optim::{check_compatible, lr_at, train_from, write_log_csv, TrainState};
use anchorloc::simworld::{generate, to_raw};
use anchorloc::Error;

use crate::{Cli, Command, EvalArgs, GenWorldArgs, SweepArgs, TrainArgs};

pub const WORLD_FILE: &str = "world.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.json";
pub const EVAL_SAMPLES_FILE: &str = "eval_per_sample.csv";
pub const SWEEP_CSV_FILE: &str = "sweep.csv";
pub const SWEEP_PLOT_FILE: &str = "sweep.svg";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(Error::Divergence { .. } | Error::DegenerateOrientation { .. }) => 3,
            CliError::Run(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.paths.out = Some(out);
    }
    match cli.command {
        Command::GenWorld(args) => gen_world(cfg, args),
        Command::Train(args) => train(cfg, args),
        Command::Eval(args) => eval(cfg, args),
        Command::SweepAnchors(args) => sweep(cfg, args),
    }
}

fn validated(cfg: RunConfig) -> Result<RunConfig> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.paths
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set paths.out".into()))
}

fn dataset_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.paths
        .dataset
        .clone()
        .ok_or_else(|| CliError::Usage("no dataset: pass --dataset or set paths.dataset".into()))
}

/// Refuses to write into an input directory.
fn check_out_differs(out: &Path, inputs: &[&Path]) -> Result<()> {
    let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    for input in inputs {
        if canon(out) == canon(input) {
            return Err(CliError::Usage(format!(
                "output directory {} is an input directory",
                out.display()
            )));
        }
    }
    Ok(())
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Run(e.into()))
}

fn gen_world(mut cfg: RunConfig, args: GenWorldArgs) -> Result<()> {
    if let Some(n) = args.n_train {
        cfg.data.n_train = n;
    }
    if let Some(n) = args.n_test {
        cfg.data.n_test = n;
    }
    let cfg = validated(cfg)?;
    let out = out_dir(&cfg)?;
    let (train, test) = generate(&cfg.world, cfg.data.n_train, cfg.data.n_test)?;
    let raw = to_raw(&train, &test, &cfg.world);
    raw.save(&out)?;
    std::fs::write(out.join(WORLD_FILE), cfg.world.to_toml()?).map_err(Error::from)?;
    cfg.write_snapshot(&out)?;
    println!(
        "wrote {} train and {} test frames to {}",
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn train(mut cfg: RunConfig, args: TrainArgs) -> Result<()> {
    if let Some(d) = args.dataset {
        cfg.paths.dataset = Some(d);
    }
    if let Some(k) = args.k {
        cfg.data.k = k;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.train.lr = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.train.batch_size = b;
    }
    if args.cross_entropy {
        cfg.loss.use_cross_entropy = true;
    }
    if args.no_cross_entropy {
        cfg.loss.use_cross_entropy = false;
    }
    if let Some(r) = args.resume {
        cfg.paths.checkpoint = Some(r);
    }
    let cfg = validated(cfg)?;
    let out = out_dir(&cfg)?;
    let data_dir = dataset_dir(&cfg)?;
    check_out_differs(&out, &[&data_dir])?;
    let raw = RawDataset::load(&data_dir)?;

    let (dataset, state) = match &cfg.paths.checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let state = ckpt.train_state().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "checkpoint {} has no optimizer state to resume from",
                    path.display()
                ))
            })?;
            let dataset = match ckpt.anchor_map {
                Some(map) => assemble_with_map(&cfg.data.name, &raw, map)?,
                None => assemble(&cfg.data.name, &raw, cfg.data.k)?,
            };
            (dataset, state)
        }
        None => {
            let dataset = assemble(&cfg.data.name, &raw, cfg.data.k)?;
            let state = TrainState::fresh(&cfg.network.spec_for(&dataset))?;
            (dataset, state)
        }
    };
    let train_cfg = cfg.train_config();
    eprintln!(
        "training on {} frames, {} anchors, {} parameters",
        dataset.train.len(),
        dataset.num_anchors(),
        state.params.len()
    );
    let report = train_from(&dataset, state, &train_cfg, |log, _| {
        eprintln!(
            "epoch {:>4}  lr {:.3e}  loss {:.6}  offset {:.6}  absolute {:.6}  ce {:.6}",
            log.epoch + 1,
            lr_at(log.epoch, &train_cfg),
            log.total,
            log.offset,
            log.absolute,
            log.ce
        );
        Ok(())
    })?;

    create_out(&out)?;
    Checkpoint::from_state(&report.state, Some(dataset.anchor_map.clone())).save(&out.join(CHECKPOINT_FILE))?;
    write_log_csv(&out.join(TRAIN_LOG_FILE), &report.epochs)?;
    cfg.write_snapshot(&out)?;
    println!("wrote {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

fn eval(mut cfg: RunConfig, args: EvalArgs) -> Result<()> {
    if let Some(c) = args.checkpoint {
        cfg.paths.checkpoint = Some(c);
    }
    if let Some(d) = args.dataset {
        cfg.paths.dataset = Some(d);
    }
    if let Some(k) = args.k {
        cfg.data.k = k;
    }
    let cfg = validated(cfg)?;
    let out = out_dir(&cfg)?;
    let data_dir = dataset_dir(&cfg)?;
    let ckpt_path = cfg
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::Usage("no checkpoint: pass --checkpoint or set paths.checkpoint".into()))?;
    let ckpt_dir = match ckpt_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    check_out_differs(&out, &[&data_dir, ckpt_dir])?;

    let raw = RawDataset::load(&data_dir)?;
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let dataset = match ckpt.anchor_map.clone() {
        Some(map) => assemble_with_map(&cfg.data.name, &raw, map)?,
        None => assemble(&cfg.data.name, &raw, cfg.data.k)?,
    };
    check_compatible(&dataset, ckpt.params.spec()).map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!(
            "checkpoint {} does not fit dataset {}: {m}",
            ckpt_path.display(),
            data_dir.display()
        )),
        other => other,
    })?;
    let report = evaluate(&ckpt.params, &dataset.test, &dataset.anchor_map)?;

    create_out(&out)?;
    std::fs::write(out.join(EVAL_SUMMARY_FILE), report.summary_json()).map_err(Error::from)?;
    std::fs::write(out.join(EVAL_SAMPLES_FILE), report.per_sample_csv()).map_err(Error::from)?;
    cfg.write_snapshot(&out)?;
    print!("{}", report.headline());
    Ok(())
}

fn sweep(mut cfg: RunConfig, args: SweepArgs) -> Result<()> {
    if let Some(d) = args.dataset {
        cfg.paths.dataset = Some(d);
    }
    if let Some(k) = args.k {
        cfg.data.sweep_k = k;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if cfg.data.sweep_k.is_empty() {
        return Err(CliError::Usage("sweep needs at least one frame interval".into()));
    }
    let cfg = validated(cfg)?;
    let out = out_dir(&cfg)?;
    let data_dir = dataset_dir(&cfg)?;
    check_out_differs(&out, &[&data_dir])?;
    let raw = RawDataset::load(&data_dir)?;

    let rows = sweep_anchor_interval(
        &cfg.data.name,
        &raw,
        &cfg.data.sweep_k,
        &cfg.network,
        &cfg.train_config(),
    )?;
    create_out(&out)?;
    let csv = sweep_csv(&rows);
    std::fs::write(out.join(SWEEP_CSV_FILE), &csv).map_err(Error::from)?;
    std::fs::write(out.join(SWEEP_PLOT_FILE), sweep_svg(&rows)).map_err(Error::from)?;
    cfg.write_snapshot(&out)?;
    print!("{csv}");
    Ok(())
}
