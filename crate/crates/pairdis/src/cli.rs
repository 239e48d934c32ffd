//! Command-line pipeline: data/label generation, training, beta
//! cross-validation, evaluation, latent traversal grids, and sweeps.
//!
//! Every command writes its artifacts plus a `manifest.json` (config
//! snapshot, seed, content hashes of inputs, output names) into a run
//! directory. A flat key=value file passed via `--config` supplies flag
//! defaults; explicit flags win. The PAIRDIS_SEED environment variable
//! overrides `--seed` when set.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::datasets::{
    self, gen_synthetic, inject_noise, make_binary_labels, make_rbf_labels, FactorKind,
    FactorTable, LabelGenConfig,
};
use crate::error::{Error, Result};
use crate::experiment::{flatten_images, run_experiment, ExperimentSpec};
use crate::io;
use crate::metrics::{
    cohens_kappa, knn_predict, mig, r_squared, rank_latents_by_mi, reorder_columns, MigConfig,
};
use crate::model::{ModelConfig, VaeModel};
use crate::similarity::{LabelKind, PairBatch, SimilarityParams};
use crate::tensor::{sigmoid, Tensor};
use crate::trainer::{crossval_beta, train, write_loss_history, OptimizerKind, TrainConfig};

#[derive(Parser)]
#[command(name = "pairdis", version, about = "Weakly-supervised disentanglement from pairwise similarity labels")]
pub struct Cli {
    /// Flat key=value file supplying flag defaults (flags win on conflict).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Generate a synthetic factor-labeled image dataset.
    GenData(GenDataArgs),
    /// Fabricate pairwise similarity labels from a factor table.
    GenPairs(GenPairsArgs),
    /// Train the proposed model or the beta-VAE baseline.
    Train(TrainArgs),
    /// K-fold cross-validation over beta on held-out joint log-likelihood.
    XvalBeta(XvalArgs),
    /// Mutual information gap of a checkpoint's latent codes.
    EvalMig(EvalMigArgs),
    /// 5-NN prediction quality (Cohen's kappa / R^2) from z^(u).
    EvalKnn(EvalKnnArgs),
    /// Latent traversal image grid over z^(u), z^(v) held fixed.
    Traverse(TraverseArgs),
    /// Train+evaluate over a grid of label proportions or noise levels.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenPairsArgs {
    /// Factor table CSV produced by gen-data.
    #[arg(long)]
    factors: Option<PathBuf>,
    /// binary | real
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    proportion: Option<f64>,
    #[arg(long)]
    rbf_sigma: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ModelFlags {
    #[arg(long)]
    d_u: Option<usize>,
    #[arg(long)]
    d_v: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    /// binary | real
    #[arg(long)]
    kind: Option<String>,
}

#[derive(Args)]
pub struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    pairs_per_step: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// plain-sgd | adaptive-moment
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// "beta-vae" trains the unsupervised baseline (no pairs needed).
    #[arg(long)]
    baseline: Option<String>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct XvalArgs {
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Comma-separated beta grid.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalMigArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    factors: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    /// Rank latent dims by MI with the factor before the z^(u)/z^(v)
    /// split (the protocol for unsupervised baselines).
    #[arg(long)]
    rank_dims: bool,
    /// Dataset name for the metrics report.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalKnnArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_factors: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_factors: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    rank_dims: bool,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TraverseArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    /// Which image provides the fixed z^(v).
    #[arg(long)]
    index: Option<usize>,
    /// Lattice points per traversed dimension.
    #[arg(long)]
    grid_size: Option<usize>,
    /// Lattice extent in prior standard deviations.
    #[arg(long)]
    extent: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// proportion | gamma
    #[arg(long)]
    sweep: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long)]
    values: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    proportion: Option<f64>,
    #[arg(long)]
    rbf_sigma: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Resolved key=value defaults from --config.
struct Ctx {
    cfg: BTreeMap<String, String>,
    /// Settings actually used, recorded into the manifest.
    snapshot: std::cell::RefCell<BTreeMap<String, String>>,
    inputs: std::cell::RefCell<BTreeMap<String, String>>,
}

impl Ctx {
    fn new(config: Option<&Path>) -> Result<Self> {
        let mut cfg = BTreeMap::new();
        if let Some(p) = config {
            for (lineno, line) in fs::read_to_string(p)?.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!("{}:{}: expected key=value", p.display(), lineno + 1))
                })?;
                cfg.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Ctx {
            cfg,
            snapshot: Default::default(),
            inputs: Default::default(),
        })
    }

    fn resolve<T: std::str::FromStr + std::fmt::Display + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => match self.cfg.get(key) {
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::Config(format!("bad value for {}: {:?}", key, s)))?,
                None => default,
            },
        };
        self.snapshot
            .borrow_mut()
            .insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn resolve_req<T: std::str::FromStr + std::fmt::Display + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => {
                let s = self
                    .cfg
                    .get(key)
                    .ok_or_else(|| Error::Config(format!("missing required --{}", key)))?;
                s.parse()
                    .map_err(|_| Error::Config(format!("bad value for {}: {:?}", key, s)))?
            }
        };
        self.snapshot
            .borrow_mut()
            .insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn resolve_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let v = match flag {
            Some(v) => v,
            None => PathBuf::from(self.cfg.get(key).ok_or_else(|| {
                Error::Config(format!("missing required --{}", key.replace('_', "-")))
            })?),
        };
        self.snapshot
            .borrow_mut()
            .insert(key.to_string(), v.display().to_string());
        Ok(v)
    }

    /// Seed resolution with the PAIRDIS_SEED environment override.
    fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Ok(s) = std::env::var("PAIRDIS_SEED") {
            let v = s
                .parse()
                .map_err(|_| Error::Config(format!("bad PAIRDIS_SEED {:?}", s)))?;
            self.snapshot
                .borrow_mut()
                .insert("seed".into(), format!("{}", v));
            return Ok(v);
        }
        self.resolve(flag, "seed", 0)
    }

    fn record_input(&self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let hash = hex(&Sha256::digest(&bytes));
        self.inputs
            .borrow_mut()
            .insert(path.display().to_string(), hash);
        Ok(())
    }

    fn write_manifest(&self, dir: &Path, command: &str, outputs: &[&str]) -> Result<()> {
        #[derive(serde::Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            seed: Option<u64>,
            config: &'a BTreeMap<String, String>,
            inputs: &'a BTreeMap<String, String>,
            outputs: &'a [&'a str],
        }
        let snapshot = self.snapshot.borrow();
        let m = Manifest {
            command,
            seed: snapshot.get("seed").and_then(|s| s.parse().ok()),
            config: &snapshot,
            inputs: &self.inputs.borrow(),
            outputs,
        };
        let json = serde_json::to_string_pretty(&m)
            .map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

fn run_dir(out: Option<PathBuf>, seed: u64) -> Result<PathBuf> {
    let dir = match out {
        Some(d) => d,
        None => {
            let ts = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_secs();
            PathBuf::from("runs").join(format!("{}-seed{}", ts, seed))
        }
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad {} entry {:?}", what, p)))
        })
        .collect()
}

fn load_factor_table(path: &Path) -> Result<FactorTable> {
    let (kind, values) = io::read_factors_csv(path)?;
    FactorTable::new(kind.parse()?, values)
}

fn model_config_from_flags(ctx: &Ctx, m: &ModelFlags) -> Result<ModelConfig> {
    let d_u = ctx.resolve(m.d_u, "d_u", 2)?;
    let d_v = ctx.resolve(m.d_v, "d_v", 8)?;
    let hidden = ctx.resolve(m.hidden.clone(), "hidden", "256,128".to_string())?;
    let beta = ctx.resolve(m.beta, "beta", 4.0)?;
    let eta1 = ctx.resolve(m.eta1, "eta1", 1e3)?;
    let eta2 = ctx.resolve(m.eta2, "eta2", 2.0)?;
    let kind: String = ctx.resolve(m.kind.clone(), "kind", "binary".to_string())?;
    let cfg = ModelConfig {
        d_u,
        d_v,
        hidden_sizes: parse_list(&hidden, "hidden")?,
        beta,
        sim: SimilarityParams::new(eta1, eta2, kind.parse()?)?,
        input_shape: (datasets::IMAGE_SIDE, datasets::IMAGE_SIDE),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_config_from_flags(ctx: &Ctx, t: &TrainFlags) -> Result<TrainConfig> {
    let optimizer: String =
        ctx.resolve(t.optimizer.clone(), "optimizer", "adaptive-moment".to_string())?;
    Ok(TrainConfig {
        epochs: ctx.resolve(t.epochs, "epochs", 30)?,
        batch_size: ctx.resolve(t.batch_size, "batch_size", 128)?,
        pairs_per_step: ctx.resolve(t.pairs_per_step, "pairs_per_step", 32)?,
        learning_rate: ctx.resolve(t.lr, "lr", 1e-3)?,
        optimizer_kind: optimizer.parse::<OptimizerKind>()?,
        seed: ctx.resolve_seed(t.seed)?,
        ..Default::default()
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::GenData(a) => cmd_gen_data(&ctx, a),
        Cmd::GenPairs(a) => cmd_gen_pairs(&ctx, a),
        Cmd::Train(a) => cmd_train(&ctx, a),
        Cmd::XvalBeta(a) => cmd_xval(&ctx, a),
        Cmd::EvalMig(a) => cmd_eval_mig(&ctx, a),
        Cmd::EvalKnn(a) => cmd_eval_knn(&ctx, a),
        Cmd::Traverse(a) => cmd_traverse(&ctx, a),
        Cmd::Sweep(a) => cmd_sweep(&ctx, a),
    }
}

fn cmd_gen_data(ctx: &Ctx, a: GenDataArgs) -> Result<()> {
    let dataset: String = ctx.resolve_req(a.dataset, "dataset")?;
    let n = ctx.resolve(a.n, "n", 5000)?;
    let seed = ctx.resolve_seed(a.seed)?;
    let dir = run_dir(a.out, seed)?;
    let (images, factors) = gen_synthetic(&dataset, n, seed)?;
    io::write_tensor(&dir.join("images.pdt"), &images)?;
    io::write_factors_csv(&dir.join("factors.csv"), &factors.kind.to_string(), &factors.values)?;
    ctx.write_manifest(&dir, "gen-data", &["images.pdt", "factors.csv"])?;
    println!("wrote {} instances to {}", n, dir.display());
    Ok(())
}

fn cmd_gen_pairs(ctx: &Ctx, a: GenPairsArgs) -> Result<()> {
    let factors_path: PathBuf = ctx.resolve_path(a.factors, "factors")?;
    let kind: String = ctx.resolve(a.kind, "kind", "binary".to_string())?;
    let cfg = LabelGenConfig {
        proportion: ctx.resolve(a.proportion, "proportion", 1e-4)?,
        rbf_sigma: ctx.resolve(a.rbf_sigma, "rbf_sigma", 30.0)?,
        noise_gamma: ctx.resolve(a.gamma, "gamma", 0.0)?,
        kind: kind.parse()?,
        seed: ctx.resolve_seed(a.seed)?,
    };
    let dir = run_dir(a.out, cfg.seed)?;
    ctx.record_input(&factors_path)?;
    let table = load_factor_table(&factors_path)?;
    let pairs = match cfg.kind {
        LabelKind::Binary => make_binary_labels(&table, &cfg)?,
        LabelKind::Real => make_rbf_labels(&table, &cfg)?,
    };
    let pairs = inject_noise(&pairs, &cfg)?;
    io::write_pairs_csv(&dir.join("pairs.csv"), &pairs.rows())?;
    ctx.write_manifest(&dir, "gen-pairs", &["pairs.csv"])?;
    println!("wrote {} pairs to {}", pairs.len(), dir.display());
    Ok(())
}

fn load_flat_images(ctx: &Ctx, path: &Path) -> Result<Tensor> {
    ctx.record_input(path)?;
    let t = io::read_tensor(path)?;
    flatten_images(&t)
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let images_path: PathBuf = ctx.resolve_path(a.images, "images")?;
    let baseline = match ctx.resolve(a.baseline, "baseline", "none".to_string())?.as_str() {
        "none" => false,
        "beta-vae" => true,
        other => return Err(Error::Config(format!("unknown baseline {:?}", other))),
    };
    let mcfg = model_config_from_flags(ctx, &a.model)?;
    let tcfg = train_config_from_flags(ctx, &a.train)?;
    let dir = run_dir(a.out, tcfg.seed)?;

    let images = load_flat_images(ctx, &images_path)?;
    let pairs = if baseline {
        None
    } else {
        let pairs_path: PathBuf = ctx.resolve_path(a.pairs, "pairs")?;
        ctx.record_input(&pairs_path)?;
        let pb = PairBatch::from_rows(&io::read_pairs_csv(&pairs_path)?)?;
        pb.check_labels(mcfg.sim.label_kind)?;
        Some(pb)
    };

    let mut model = VaeModel::new(mcfg, tcfg.seed)?;
    let history = train(&mut model, &images, pairs.as_ref(), &tcfg)?;
    model.save(&dir.join("checkpoint"))?;
    write_loss_history(&dir.join("loss.csv"), &history)?;
    ctx.write_manifest(&dir, "train", &["checkpoint", "loss.csv"])?;
    println!(
        "trained {} epochs, final loss {:.4}, checkpoint at {}",
        history.len(),
        history.last().map(|s| s.total).unwrap_or(f64::NAN),
        dir.join("checkpoint").display()
    );
    Ok(())
}

fn cmd_xval(ctx: &Ctx, a: XvalArgs) -> Result<()> {
    let images_path: PathBuf = ctx.resolve_path(a.images, "images")?;
    let pairs_path: PathBuf = ctx.resolve_path(a.pairs, "pairs")?;
    let grid: String = ctx.resolve(a.grid, "grid", "1,2,4,8,16".to_string())?;
    let folds = ctx.resolve(a.folds, "folds", 5)?;
    let mcfg = model_config_from_flags(ctx, &a.model)?;
    let mut tcfg = train_config_from_flags(ctx, &a.train)?;
    tcfg.beta_grid = parse_list(&grid, "grid")?;
    tcfg.folds = folds;
    let dir = run_dir(a.out, tcfg.seed)?;

    let images = load_flat_images(ctx, &images_path)?;
    ctx.record_input(&pairs_path)?;
    let pairs = PairBatch::from_rows(&io::read_pairs_csv(&pairs_path)?)?;

    let res = crossval_beta(&mcfg, &images, &pairs, &tcfg)?;
    let mut out = String::from("beta,mean_joint_ll\n");
    for row in &res.rows {
        out.push_str(&format!(
            "{},{}\n",
            io::fmt_f64(row.beta),
            io::fmt_f64(row.mean_joint_ll)
        ));
        println!("beta {:>8}: mean held-out joint ll {:.4}", row.beta, row.mean_joint_ll);
    }
    fs::write(dir.join("xval.csv"), out)?;
    fs::write(dir.join("selected_beta.txt"), format!("{}\n", res.selected_beta))?;
    ctx.write_manifest(&dir, "xval-beta", &["xval.csv", "selected_beta.txt"])?;
    println!("selected beta: {}", res.selected_beta);
    Ok(())
}

fn write_metrics_csv(path: &Path, rows: &[(String, String, u64, f64)]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "metric,dataset,seed,value")?;
    for (metric, dataset, seed, value) in rows {
        writeln!(w, "{},{},{},{}", metric, dataset, seed, io::fmt_f64(*value))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_eval_mig(ctx: &Ctx, a: EvalMigArgs) -> Result<()> {
    let ckpt: PathBuf = ctx.resolve_path(a.checkpoint, "checkpoint")?;
    let images_path: PathBuf = ctx.resolve_path(a.images, "images")?;
    let factors_path: PathBuf = ctx.resolve_path(a.factors, "factors")?;
    let bins = ctx.resolve(a.bins, "bins", 20)?;
    let dataset: String = ctx.resolve(a.dataset, "dataset", "unknown".to_string())?;
    let seed = ctx.resolve_seed(a.seed)?;
    let dir = run_dir(a.out, seed)?;

    let model = VaeModel::load(&ckpt)?;
    let images = load_flat_images(ctx, &images_path)?;
    ctx.record_input(&factors_path)?;
    let factors = load_factor_table(&factors_path)?;

    let mut codes = model.posterior_means(&images)?;
    if a.rank_dims {
        let order = rank_latents_by_mi(&codes, &factors, bins)?;
        codes = reorder_columns(&codes, &order)?;
    }
    let cfg = MigConfig::new(bins, model.cfg.d_u)?;
    if model.cfg.d_u >= 2 {
        let cells = bins.pow(model.cfg.d_u as u32);
        if images.rows() < 10 * cells {
            eprintln!(
                "warning: {} samples for a {}-cell joint alphabet; MIG estimate may be biased",
                images.rows(),
                cells
            );
        }
    }
    let value = mig(&codes, &factors, &cfg)?;
    write_metrics_csv(
        &dir.join("metrics.csv"),
        &[("mig".to_string(), dataset, seed, value)],
    )?;
    ctx.write_manifest(&dir, "eval-mig", &["metrics.csv"])?;
    println!("mig {:.4}", value);
    Ok(())
}

fn cmd_eval_knn(ctx: &Ctx, a: EvalKnnArgs) -> Result<()> {
    let ckpt: PathBuf = ctx.resolve_path(a.checkpoint, "checkpoint")?;
    let train_images: PathBuf = ctx.resolve_path(a.train_images, "train_images")?;
    let train_factors: PathBuf = ctx.resolve_path(a.train_factors, "train_factors")?;
    let test_images: PathBuf = ctx.resolve_path(a.test_images, "test_images")?;
    let test_factors: PathBuf = ctx.resolve_path(a.test_factors, "test_factors")?;
    let k = ctx.resolve(a.k, "k", 5)?;
    let dataset: String = ctx.resolve(a.dataset, "dataset", "unknown".to_string())?;
    let seed = ctx.resolve_seed(a.seed)?;
    let dir = run_dir(a.out, seed)?;

    let model = VaeModel::load(&ckpt)?;
    let tr_x = load_flat_images(ctx, &train_images)?;
    let te_x = load_flat_images(ctx, &test_images)?;
    ctx.record_input(&train_factors)?;
    ctx.record_input(&test_factors)?;
    let tr_t = load_factor_table(&train_factors)?;
    let te_t = load_factor_table(&test_factors)?;

    let mut tr_codes = model.posterior_means(&tr_x)?;
    let mut te_codes = model.posterior_means(&te_x)?;
    if a.rank_dims {
        let order = rank_latents_by_mi(&te_codes, &te_t, 20)?;
        tr_codes = reorder_columns(&tr_codes, &order)?;
        te_codes = reorder_columns(&te_codes, &order)?;
    }
    let d_u = model.cfg.d_u;
    let slice = |codes: &Tensor| -> Result<Tensor> {
        let n = codes.rows();
        let mut out = Tensor::zeros(&[n, d_u]);
        for r in 0..n {
            out.data_mut()[r * d_u..(r + 1) * d_u].copy_from_slice(&codes.row(r)[..d_u]);
        }
        Ok(out)
    };
    let preds = knn_predict(&slice(&tr_codes)?, &tr_t, &slice(&te_codes)?, k)?;

    let mut rows = Vec::new();
    match te_t.kind {
        FactorKind::Discrete => {
            let p: Vec<usize> = preds.iter().map(|&v| v as usize).collect();
            let t: Vec<usize> = te_t.values.iter().map(|&v| v as usize).collect();
            let kappa = cohens_kappa(&p, &t)?;
            rows.push(("kappa".to_string(), dataset.clone(), seed, kappa));
            println!("kappa {:.4}", kappa);
        }
        FactorKind::Cyclic => {
            let r2 = r_squared(&preds, &te_t.values, FactorKind::Cyclic)?;
            rows.push(("r2".to_string(), dataset.clone(), seed, r2));
            println!("r2 {:.4}", r2);
        }
    }
    write_metrics_csv(&dir.join("metrics.csv"), &rows)?;
    ctx.write_manifest(&dir, "eval-knn", &["metrics.csv"])?;
    Ok(())
}

fn cmd_traverse(ctx: &Ctx, a: TraverseArgs) -> Result<()> {
    let ckpt: PathBuf = ctx.resolve_path(a.checkpoint, "checkpoint")?;
    let images_path: PathBuf = ctx.resolve_path(a.images, "images")?;
    let index = ctx.resolve(a.index, "index", 0)?;
    let grid_size = ctx.resolve(a.grid_size, "grid_size", 9)?;
    let extent = ctx.resolve(a.extent, "extent", 3.0)?;
    let seed = ctx.resolve_seed(a.seed)?;
    let dir = run_dir(a.out, seed)?;

    let model = VaeModel::load(&ckpt)?;
    if model.cfg.d_u > 2 {
        return Err(Error::Config(format!(
            "traverse supports d_u <= 2, checkpoint has d_u = {}",
            model.cfg.d_u
        )));
    }
    let images = load_flat_images(ctx, &images_path)?;
    if index >= images.rows() {
        return Err(Error::Config(format!(
            "index {} out of range for {} images",
            index,
            images.rows()
        )));
    }
    let one = Tensor::new(vec![1, images.cols()], images.row(index).to_vec())?;
    let code = model.posterior_means(&one)?;
    let zv_fixed: Vec<f64> = code.row(0)[model.cfg.d_u..].to_vec();

    let lattice: Vec<f64> = (0..grid_size)
        .map(|g| -extent + 2.0 * extent * g as f64 / (grid_size - 1).max(1) as f64)
        .collect();
    let (rows_n, cols_n) = if model.cfg.d_u == 1 {
        (1, grid_size)
    } else {
        (grid_size, grid_size)
    };

    let mut zs = Vec::new();
    for r in 0..rows_n {
        for c in 0..cols_n {
            if model.cfg.d_u == 1 {
                zs.push(lattice[c]);
            } else {
                zs.push(lattice[c]);
                zs.push(lattice[rows_n - 1 - r]); // image row 0 at top
            }
            zs.extend_from_slice(&zv_fixed);
        }
    }
    let z = Tensor::new(vec![rows_n * cols_n, model.cfg.d_z()], zs)?;
    let mut tape = crate::tape::Tape::new();
    let b = model.bind(&mut tape, false);
    let zv = tape.constant(z);
    let logits = model.decode(&mut tape, &b, zv)?;
    let probs = tape.value(logits).map(sigmoid);

    let (h, w) = model.cfg.input_shape;
    let mut canvas = vec![0.0; rows_n * h * cols_n * w];
    for r in 0..rows_n {
        for c in 0..cols_n {
            let tile = probs.row(r * cols_n + c);
            for py in 0..h {
                for px in 0..w {
                    canvas[(r * h + py) * (cols_n * w) + c * w + px] = tile[py * w + px];
                }
            }
        }
    }
    io::write_pgm(&dir.join("traverse.pgm"), cols_n * w, rows_n * h, &canvas)?;
    ctx.write_manifest(&dir, "traverse", &["traverse.pgm"])?;
    println!("wrote {}x{} traversal grid", cols_n, rows_n);
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let sweep: String = ctx.resolve_req(a.sweep, "sweep")?;
    if sweep != "proportion" && sweep != "gamma" {
        return Err(Error::Config(format!("unknown sweep {:?}", sweep)));
    }
    let values: Vec<f64> = parse_list(&ctx.resolve_req::<String>(a.values, "values")?, "values")?;
    let seeds: Vec<u64> = parse_list(
        &ctx.resolve(a.seeds, "seeds", "1,2,3".to_string())?,
        "seeds",
    )?;
    let dataset: String = ctx.resolve(a.dataset, "dataset", "blobs".to_string())?;
    let n = ctx.resolve(a.n, "n", 5000)?;
    let holdout = ctx.resolve(a.holdout, "holdout", 0.2)?;
    let base_proportion = ctx.resolve(a.proportion, "proportion", 1e-4)?;
    let rbf_sigma = ctx.resolve(a.rbf_sigma, "rbf_sigma", 30.0)?;
    let jobs = ctx.resolve(a.jobs, "jobs", 1)?.max(1);
    let mcfg = model_config_from_flags(ctx, &a.model)?;
    let tcfg = train_config_from_flags(ctx, &a.train)?;
    let dir = run_dir(a.out, tcfg.seed)?;

    let mut tasks = Vec::new();
    for &value in &values {
        for &seed in &seeds {
            let mut labels = LabelGenConfig {
                proportion: base_proportion,
                rbf_sigma,
                noise_gamma: 0.0,
                kind: mcfg.sim.label_kind,
                seed,
            };
            if sweep == "proportion" {
                labels.proportion = value;
            } else {
                labels.noise_gamma = value;
            }
            let mut train_cfg = tcfg.clone();
            train_cfg.seed = seed;
            tasks.push((
                value,
                seed,
                ExperimentSpec {
                    dataset: dataset.clone(),
                    n,
                    holdout,
                    labels,
                    model: mcfg.clone(),
                    train: train_cfg,
                    baseline: false,
                },
            ));
        }
    }

    // per-seed jobs run concurrently up to the --jobs limit
    let mut results: Vec<(f64, u64, crate::experiment::ExperimentOutcome)> = Vec::new();
    for chunk in tasks.chunks(jobs) {
        let handles: Vec<_> = chunk
            .iter()
            .map(|(value, seed, spec)| {
                let (value, seed, spec) = (*value, *seed, spec.clone());
                std::thread::spawn(move || {
                    run_experiment(&spec).map(|(_, outcome)| (value, seed, outcome))
                })
            })
            .collect();
        for h in handles {
            let r = h
                .join()
                .map_err(|_| Error::Contract("sweep worker panicked".into()))??;
            results.push(r);
        }
    }

    // long format, one row per (value, seed) run
    let mut out = String::from("sweep_param,sweep_value,seed,metric,value\n");
    for (value, seed, outcome) in &results {
        out.push_str(&format!(
            "{},{},{},mig,{}\n",
            sweep,
            io::fmt_f64(*value),
            seed,
            io::fmt_f64(outcome.mig)
        ));
    }
    fs::write(dir.join("sweep.csv"), out)?;
    ctx.write_manifest(&dir, "sweep", &["sweep.csv"])?;
    println!("{} runs written to {}", results.len(), dir.join("sweep.csv").display());
    Ok(())
}
