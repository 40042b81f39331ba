//! `gridseq` command-line tool: dataset generation, pre-training, the two
//! fine-tuning stages, evaluation, ablation, few-shot transfer and
//! representation diagnostics.
//!
//! Every command reads an optional JSON experiment config and writes under
//! `--out` (default `runs/`):
//!
//! ```text
//! data/{source,harder,target}/   TSATRAJ1 splits + manifest.json
//! pretrain/                      model.ckpt, log.jsonl, report.json
//! teaf/                          model.ckpt, hard_cases.json, log.jsonl, summary.json
//! schs/                          model.ckpt, log.jsonl, summary.json
//! eval/                          <set>.json, <set>.csv, <set>_trajectories.csv
//! ablate/                        ablation.csv, ablation.json
//! fewshot/                       fewshot.csv, fewshot.json
//! diagnose/                      diagnostics.csv, summary.json, features_<n>.csv
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridseq::evaluation::MetricsReport;
use gridseq::evaluation::CO_DIRECTION_THRESHOLD;
use gridseq::experiment::{
    ablate, diagnose, evaluate, fewshot, harder_set, schs_config, source_splits, target_splits, teaf_config, Ablation,
    Diagnostics, ExperimentConfig, FewShotCurve, Splits,
};
use gridseq::model::Model;
use gridseq::simulator::{read_dataset, write_dataset};
use gridseq::training::{schs_train, surrogate_pretrain, teaf_train, HardCase, HardCaseSet, TrainLog};
use gridseq::{Error, Result};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "gridseq", version, about = "Transient trajectory forecasting experiments")]
struct Cli {
    /// Experiment config (JSON); omitted fields keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Model profile.
    #[arg(long, global = true, value_parser = ["desk", "full"])]
    profile: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the source, harder-contingency and cross-system datasets.
    Generate,
    /// Pre-train on the synthetic corpus and freeze the blocks.
    Pretrain,
    /// Teacher-forced fine-tuning followed by hard-case mining.
    FinetuneTeaf {
        /// Starting checkpoint [default: <out>/pretrain/model.ckpt].
        #[arg(long)]
        init: Option<PathBuf>,
        /// Directory with train/val splits [default: <out>/data/source].
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Scheduled-sampling fine-tuning on the mined hard cases.
    FinetuneSchs {
        /// Starting checkpoint [default: <out>/teaf/model.ckpt].
        #[arg(long)]
        init: Option<PathBuf>,
        /// Hard-case manifest [default: <out>/teaf/hard_cases.json].
        #[arg(long)]
        hard: Option<PathBuf>,
        /// Directory with train/val splits [default: <out>/data/source].
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Roll out a checkpoint on test sets and report categorized errors.
    Evaluate {
        /// Checkpoint [default: <out>/schs/model.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset files to evaluate; defaults to the generated source,
        /// harder and target test sets that exist.
        #[arg(long = "dataset")]
        datasets: Vec<PathBuf>,
    },
    /// Full, w/o TeaF, w/o SchS and w/o patch across the configured seeds.
    Ablate {
        /// Directory with the source splits [default: <out>/data/source].
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fine-tune on growing fractions of the target training split.
    Fewshot {
        /// Source checkpoint [default: <out>/schs/model.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory with the target splits [default: <out>/data/target].
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated fractions overriding the config.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Feature stability, co-direction and alignment diagnostics.
    Diagnose {
        /// Checkpoints to compare [default: <out>/schs/model.ckpt].
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Dataset file [default: <out>/data/source/test.tsa].
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Cosine threshold of the co-direction ratio.
        #[arg(long, default_value_t = CO_DIRECTION_THRESHOLD)]
        threshold: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn experiment(cli: &Cli) -> Result<ExperimentConfig> {
    let mut exp = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        exp.seed = s;
    }
    if let Some(p) = &cli.profile {
        exp.profile = p.clone();
    }
    exp.validate()?;
    Ok(exp)
}

fn stage_dir(out: &Path, name: &str) -> Result<PathBuf> {
    let dir = out.join(name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    write_text(path, &text)
}

fn load_model(path: &Path, exp: &ExperimentConfig) -> Result<Model<f64>> {
    let model = Model::load(path)?;
    let want = exp.model_config()?;
    if (model.config.l_seq, model.config.l_pred) != (want.l_seq, want.l_pred) {
        return Err(Error::Config(format!(
            "checkpoint {} has L_seq = {}, L_pred = {} but the config asks for {}, {}",
            path.display(),
            model.config.l_seq,
            model.config.l_pred,
            want.l_seq,
            want.l_pred
        )));
    }
    Ok(model)
}

fn run(cli: &Cli) -> Result<()> {
    let exp = experiment(cli)?;
    let out = cli.out.as_path();
    let source_dir = || out.join("data").join("source");
    match &cli.command {
        Command::Generate => cmd_generate(&exp, out),
        Command::Pretrain => cmd_pretrain(&exp, out),
        Command::FinetuneTeaf { init, data } => cmd_teaf(
            &exp,
            out,
            &init.clone().unwrap_or_else(|| out.join("pretrain/model.ckpt")),
            &data.clone().unwrap_or_else(source_dir),
        ),
        Command::FinetuneSchs { init, hard, data } => cmd_schs(
            &exp,
            out,
            &init.clone().unwrap_or_else(|| out.join("teaf/model.ckpt")),
            &hard.clone().unwrap_or_else(|| out.join("teaf/hard_cases.json")),
            &data.clone().unwrap_or_else(source_dir),
        ),
        Command::Evaluate { checkpoint, datasets } => {
            cmd_evaluate(&exp, out, &checkpoint.clone().unwrap_or_else(|| out.join("schs/model.ckpt")), datasets)
        }
        Command::Ablate { data } => cmd_ablate(&exp, out, &data.clone().unwrap_or_else(source_dir)),
        Command::Fewshot { checkpoint, data, fractions } => {
            let mut exp = exp.clone();
            if let Some(f) = fractions {
                exp.fractions = f.clone();
                exp.validate()?;
            }
            cmd_fewshot(
                &exp,
                out,
                &checkpoint.clone().unwrap_or_else(|| out.join("schs/model.ckpt")),
                &data.clone().unwrap_or_else(|| out.join("data/target")),
            )
        }
        Command::Diagnose { checkpoints, dataset, threshold } => {
            let checkpoints =
                if checkpoints.is_empty() { vec![out.join("schs/model.ckpt")] } else { checkpoints.clone() };
            cmd_diagnose(
                &exp,
                out,
                &checkpoints,
                &dataset.clone().unwrap_or_else(|| source_dir().join("test.tsa")),
                *threshold,
            )
        }
    }
}

fn write_splits(
    dir: &Path,
    splits: &Splits,
    system: &str,
    exp: &ExperimentConfig,
    order: usize,
    n: usize,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    splits.write(dir)?;
    write_json(&dir.join("manifest.json"), &splits.manifest(system, exp.seed, order, n))
}

fn cmd_generate(exp: &ExperimentConfig, out: &Path) -> Result<()> {
    let data = stage_dir(out, "data")?;
    let source = source_splits(exp)?;
    write_splits(&data.join("source"), &source, &exp.system, exp, exp.contingency_order, exp.scenarios)?;
    log::info!("source: {} / {} / {} trajectories", source.train.len(), source.val.len(), source.test.len());

    let harder = Splits { train: Vec::new(), val: Vec::new(), test: harder_set(exp)? };
    let dir = data.join("harder");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_dataset(&dir.join("test.tsa"), &harder.test)?;
    write_json(
        &dir.join("manifest.json"),
        &harder.manifest(&exp.system, exp.seed, exp.harder_order, exp.harder_scenarios),
    )?;
    log::info!("harder: {} trajectories", harder.test.len());

    let target = target_splits(exp)?;
    write_splits(&data.join("target"), &target, &exp.target_system, exp, exp.contingency_order, exp.target_scenarios)?;
    log::info!("target: {} / {} / {} trajectories", target.train.len(), target.val.len(), target.test.len());
    Ok(())
}

fn cmd_pretrain(exp: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = stage_dir(out, "pretrain")?;
    let cfg = exp.model_config()?;
    let mut log = TrainLog::to_file(&dir.join("log.jsonl"))?;
    let (model, report) = surrogate_pretrain::<f64>(&cfg, &exp.surrogate, exp.seed, &mut log)?;
    model.save(&dir.join("model.ckpt"))?;
    write_json(&dir.join("report.json"), &report)
}

fn cmd_teaf(exp: &ExperimentConfig, out: &Path, init: &Path, data: &Path) -> Result<()> {
    let dir = stage_dir(out, "teaf")?;
    let mut model = load_model(init, exp)?;
    model.freeze_blocks();
    let splits = Splits::read(data)?;
    let mut log = TrainLog::to_file(&dir.join("log.jsonl"))?;
    let outcome = teaf_train(&mut model, &splits.train, &splits.val, &teaf_config(exp, exp.seed), &mut log)?;
    model.save(&dir.join("model.ckpt"))?;
    write_json(
        &dir.join("hard_cases.json"),
        &json!({
            "k": exp.teaf.hard_cases,
            "ids": outcome.hard_cases.ids(),
            "cases": outcome.hard_cases.cases,
        }),
    )?;
    write_json(&dir.join("summary.json"), &outcome.summary)
}

fn read_hard_cases(path: &Path, train_len: usize) -> Result<HardCaseSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::corrupt(path, e.to_string()))?;
    let cases: Vec<HardCase> = serde_json::from_value(value.get("cases").cloned().unwrap_or_default())
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    if let Some(c) = cases.iter().find(|c| c.trajectory >= train_len) {
        return Err(Error::Validation(format!(
            "hard case {} is outside the {train_len}-trajectory training split",
            c.trajectory
        )));
    }
    Ok(HardCaseSet { cases })
}

fn cmd_schs(exp: &ExperimentConfig, out: &Path, init: &Path, hard: &Path, data: &Path) -> Result<()> {
    let dir = stage_dir(out, "schs")?;
    let mut model = load_model(init, exp)?;
    model.freeze_blocks();
    let splits = Splits::read(data)?;
    let hard = read_hard_cases(hard, splits.train.len())?;
    let mut log = TrainLog::to_file(&dir.join("log.jsonl"))?;
    let outcome =
        schs_train(&mut model, &hard.select(&splits.train), &splits.val, &schs_config(exp, exp.seed), &mut log)?;
    model.save(&dir.join("model.ckpt"))?;
    write_json(&dir.join("summary.json"), &outcome)
}

fn cmd_evaluate(exp: &ExperimentConfig, out: &Path, checkpoint: &Path, datasets: &[PathBuf]) -> Result<()> {
    let model = load_model(checkpoint, exp)?;
    let sets: Vec<(String, PathBuf)> = if datasets.is_empty() {
        ["source", "harder", "target"]
            .iter()
            .map(|s| (s.to_string(), out.join("data").join(s).join("test.tsa")))
            .filter(|(_, p)| p.exists())
            .collect()
    } else {
        datasets
            .iter()
            .map(|p| (p.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned()), p.clone()))
            .collect()
    };
    if sets.is_empty() {
        return Err(Error::Config("no test sets found; run `generate` or pass --dataset".into()));
    }
    let dir = stage_dir(out, "eval")?;
    for (name, path) in sets {
        let trajectories = read_dataset(&path)?;
        if trajectories.is_empty() {
            return Err(Error::Validation(format!("{} holds no trajectories", path.display())));
        }
        let eval = evaluate(&model, &trajectories)?;
        write_json(&dir.join(format!("{name}.json")), &eval.report)?;
        write_csv(&dir.join(format!("{name}.csv")), MetricsReport::CSV_HEADER, &eval.report.csv_rows())?;
        let rows: Vec<String> = eval
            .per_trajectory
            .iter()
            .map(|t| format!("{},{},{:e},{:e},{}", t.trajectory, t.unstable as u8, t.mae, t.mse, t.divergent_channels))
            .collect();
        write_csv(
            &dir.join(format!("{name}_trajectories.csv")),
            "trajectory,unstable,mae,mse,divergent_channels",
            &rows,
        )?;
        for c in &eval.report.categories {
            log::info!(
                "{name} {:?}: MAE {:.4e} MSE {:.4e} ({} trajectories)",
                c.category,
                c.mae,
                c.mse,
                c.trajectories
            );
        }
    }
    Ok(())
}

fn cmd_ablate(exp: &ExperimentConfig, out: &Path, data: &Path) -> Result<()> {
    let splits = Splits::read(data)?;
    let result = ablate(exp, &splits)?;
    let dir = stage_dir(out, "ablate")?;
    write_csv(&dir.join("ablation.csv"), Ablation::CSV_HEADER, &result.csv_rows())?;
    write_json(&dir.join("ablation.json"), &result)
}

fn cmd_fewshot(exp: &ExperimentConfig, out: &Path, checkpoint: &Path, data: &Path) -> Result<()> {
    let source = load_model(checkpoint, exp)?;
    let target = Splits::read(data)?;
    let curve = fewshot(&source, &target, exp)?;
    let dir = stage_dir(out, "fewshot")?;
    write_csv(&dir.join("fewshot.csv"), FewShotCurve::CSV_HEADER, &curve.csv_rows())?;
    write_json(&dir.join("fewshot.json"), &curve)
}

fn features_csv(d: &Diagnostics) -> String {
    let width = d.features.first().map_or(0, |f| f.values.len());
    let mut text = String::from("trajectory,channel,patch");
    for k in 0..width {
        let _ = write!(text, ",f{k}");
    }
    text.push('\n');
    for f in &d.features {
        let _ = write!(text, "{},{},{}", f.trajectory, f.channel, f.patch);
        for v in &f.values {
            let _ = write!(text, ",{v:e}");
        }
        text.push('\n');
    }
    text
}

fn cmd_diagnose(
    exp: &ExperimentConfig,
    out: &Path,
    checkpoints: &[PathBuf],
    dataset: &Path,
    threshold: f64,
) -> Result<()> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} is not a cosine")));
    }
    let trajectories = read_dataset(dataset)?;
    let dir = stage_dir(out, "diagnose")?;
    let mut merged =
        String::from("checkpoint,traces,feature_stability,co_direction,threshold,layer,self_sum,cross_sum,bound\n");
    let mut summaries = Vec::new();
    for (k, path) in checkpoints.iter().enumerate() {
        let model = load_model(path, exp)?;
        let d = diagnose(&model, &trajectories, threshold)?;
        write_text(&dir.join(format!("features_{k}.csv")), &features_csv(&d))?;
        for a in &d.alignment {
            let _ = writeln!(
                merged,
                "{},{},{:e},{:e},{},{},{:e},{:e},{:e}",
                path.display(),
                d.traces,
                d.feature_stability,
                d.co_direction,
                d.threshold,
                a.layer,
                a.self_sum,
                a.cross_sum,
                a.bound
            );
        }
        log::info!(
            "{}: feature stability {:.4}, co-direction {:.4}",
            path.display(),
            d.feature_stability,
            d.co_direction
        );
        summaries.push(json!({ "checkpoint": path, "features": format!("features_{k}.csv"), "diagnostics": d }));
    }
    write_text(&dir.join("diagnostics.csv"), &merged)?;
    write_json(&dir.join("summary.json"), &summaries)
}
