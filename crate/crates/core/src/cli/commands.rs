//! Subcommand implementations.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config_file::{DataSection, RunConfigFile};
use super::{
    AttnArgs, BaselineArgs, CliError, Command, Common, DataArgs, EvalArgs, FamilyArg, GenArgs,
    MethodArg, NormArg, PredictArgs, TrainArgs, EXIT_SHAPE,
};
use crate::baseline::{idw, idw_predict_task, rbf, rbf_fit_task};
use crate::error::{NiertError, Result};
use crate::model::{forward, AttentionMode, Checkpoint, LossScope, ModelConfig};
use crate::numerics::ErrorNorm;
use crate::taskgen::dataset::dataset_to_string;
use crate::taskgen::{generate_tasks, read_dataset, Family, InterpolationTask, TaskGenConfig};
use crate::trainer::eval::predictions_to_jsonl;
use crate::trainer::{
    evaluate_with, oracle_predict, predict_points, train_with, AffineNormalization, EvalOptions,
    MetricTable, TaskSource, TrainConfig, TrainOptions,
};

type CliResult<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Attn(a) => cmd_attn(&a),
        Command::Baseline(a) => cmd_baseline(&a),
    }
}

fn load_file(common: &Common) -> CliResult<RunConfigFile> {
    let file = match &common.config {
        Some(path) => RunConfigFile::load(path)?,
        None => RunConfigFile::default(),
    };
    Ok(file)
}

fn echo(label: &str, value: &serde_json::Value) {
    eprintln!("# {label}: {value}");
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| NiertError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| NiertError::io("<stdout>", e)),
    }
}

/// Generator config from flags over file values over defaults.
pub fn resolve_generator(
    file: &DataSection,
    flags: &DataArgs,
    seed: Option<u64>,
) -> CliResult<TaskGenConfig> {
    let family = match (flags.family, file.family.as_deref()) {
        (Some(FamilyArg::Expr), _) | (None, Some("expr")) => FamilyArg::Expr,
        (Some(FamilyArg::Gaussian), _) | (None, Some("gaussian")) => FamilyArg::Gaussian,
        (None, Some(other)) => {
            return Err(CliError::usage(format!(
                "unknown family {other:?}; expected expr or gaussian"
            )))
        }
        (None, None) => return Err(CliError::usage("--family is required")),
    };
    let d_x = flags.d_x.or(file.d_x).unwrap_or(1);
    let seed = seed.or(file.seed).unwrap_or(0);
    let sigma_base = flags.sigma_base.or(file.sigma_base);
    let mut cfg = match family {
        FamilyArg::Expr => TaskGenConfig::expr(d_x, seed),
        FamilyArg::Gaussian => TaskGenConfig::gaussian(d_x, sigma_base, seed),
    };
    if let (Family::Gaussian { components, .. }, Some(k)) =
        (&mut cfg.family, flags.components.or(file.components))
    {
        *components = k;
    }
    if let Some(n) = flags.total_points.or(file.total_points) {
        cfg.total_points = n;
    }
    let n_min = flags.n_min.or(file.n_min).unwrap_or(cfg.n_range.0);
    let n_max = flags.n_max.or(file.n_max).unwrap_or(cfg.n_range.1.max(n_min));
    cfg.n_range = (n_min, n_max);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let file = load_file(&args.common)?;
    let mut cfg = resolve_generator(&file.data, &args.data, args.common.seed)?;
    cfg.stream = args.stream;
    echo("config", &json!({ "generator": cfg, "count": args.count, "first": args.first }));
    let (tasks, summary) = generate_tasks(&cfg, args.first, args.count)?;
    let tasks: Vec<InterpolationTask> = tasks.into_iter().map(|g| g.task).collect();
    write_output(args.common.out.as_deref(), &dataset_to_string(&tasks)?)?;
    eprintln!(
        "generated {} tasks: family={} d_x={} d_y=1 N={} n in [{}, {}], rejection rate {:.4}",
        summary.count,
        cfg.family.name(),
        cfg.d_x,
        cfg.total_points,
        cfg.n_range.0,
        cfg.n_range.1,
        summary.rejection_rate()
    );
    Ok(())
}

fn parse_normalization(value: &str, train: Option<&[InterpolationTask]>) -> CliResult<AffineNormalization> {
    if value == "auto" {
        let tasks = train.ok_or_else(|| CliError::usage("--normalize auto needs --train-data"))?;
        return Ok(AffineNormalization::fit(tasks)?);
    }
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::usage(format!("--normalize {value:?}: {e}")))?;
    match parts.as_slice() {
        [scale, shift] => Ok(AffineNormalization::new(vec![*scale], vec![*shift])?),
        _ => Err(CliError::usage("--normalize expects SCALE,SHIFT or auto")),
    }
}

/// Effective model and training configuration of a `train` invocation.
pub fn resolve_train(
    file: &RunConfigFile,
    args: &TrainArgs,
) -> CliResult<(ModelConfig, TrainConfig, Option<TaskGenConfig>)> {
    let t = &file.train;
    let seed = args.common.seed.or(t.seed).unwrap_or(0);
    let train_path = args.train_data.clone().or_else(|| file.data.train_path.clone());
    let generator = match &train_path {
        Some(_) => None,
        None => Some(resolve_generator(&file.data, &args.data, Some(seed))?),
    };
    let source = match (&train_path, &generator) {
        (Some(p), _) => TaskSource::Dataset(p.clone()),
        (None, Some(g)) => TaskSource::Generator(g.clone()),
        (None, None) => unreachable!(),
    };
    let mut tc = match t.preset.as_deref() {
        None | Some("desk") => TrainConfig::desk(source),
        Some("constant_rate") => TrainConfig::constant_rate(source),
        Some(other) => {
            return Err(CliError::usage(format!(
                "unknown preset {other:?}; expected desk or constant_rate"
            )))
        }
    };
    tc.seed = seed;
    macro_rules! pick {
        ($field:ident, $flag:expr) => {
            if let Some(v) = $flag.or(t.$field) {
                tc.$field = v;
            }
        };
    }
    pick!(epochs, args.epochs);
    pick!(batch_size, args.batch_size);
    pick!(tasks_per_epoch, args.tasks_per_epoch);
    pick!(lr, args.lr);
    pick!(lr_decay, args.lr_decay);
    pick!(eval_every, args.eval_every);
    let flag_norm = args.loss.map(|n| match n {
        NormArg::L1 => ErrorNorm::L1,
        NormArg::L2 => ErrorNorm::L2,
    });
    pick!(loss_norm, flag_norm);
    let flag_scope = args.loss_targets_only.then_some(LossScope::TargetsOnly);
    pick!(loss_scope, flag_scope);
    tc.validate()?;

    let d_x = match (&generator, &train_path) {
        (Some(g), _) => g.d_x,
        (None, Some(p)) => {
            let tasks = read_dataset(p)?;
            tasks.first().map_or(args.data.d_x.or(file.data.d_x).unwrap_or(1), |t| t.d_x)
        }
        (None, None) => unreachable!(),
    };
    let m = &file.model;
    let layers = args.layers.or(m.num_layers).unwrap_or(3);
    let d_model = args.d_model.or(m.d_model).unwrap_or(64);
    let heads = args.heads.or(m.num_heads).unwrap_or(4);
    let mut mc = ModelConfig::sized(d_x, 1, layers, d_model, heads);
    if let Some(v) = m.d_xemb {
        mc.d_xemb = v;
    }
    if let Some(v) = m.d_yemb {
        mc.d_yemb = v;
    }
    if let Some(v) = m.d_ff {
        mc.d_ff = v;
    }
    mc.attention = if args.vanilla_attention {
        AttentionMode::Vanilla
    } else {
        m.attention.unwrap_or_default()
    };
    mc.loss_norm = tc.loss_norm;
    mc.validate()?;
    Ok((mc, tc, generator))
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let file = load_file(&args.common)?;
    let out = args
        .common
        .out
        .clone()
        .ok_or_else(|| CliError::usage("train needs --out <checkpoint>"))?;
    let (mut mc, tc, generator) = resolve_train(&file, args)?;
    let init_path = args.init.clone().or_else(|| file.train.init.clone());
    let init = init_path.as_deref().map(Checkpoint::load).transpose()?;
    if let Some(ck) = &init {
        let mut expected = ck.config.clone();
        expected.attention = mc.attention;
        expected.loss_norm = mc.loss_norm;
        if mc.d_x != ck.config.d_x {
            return Err(NiertError::CheckpointMismatch(format!(
                "checkpoint d_x = {}, data d_x = {}",
                ck.config.d_x, mc.d_x
            ))
            .into());
        }
        mc = expected;
    }

    let train_tasks = match &tc.source {
        TaskSource::Dataset(p) => Some(read_dataset(p)?),
        TaskSource::Generator(_) => None,
    };
    let normalization = args
        .normalize
        .as_deref()
        .map(|s| parse_normalization(s, train_tasks.as_deref()))
        .transpose()?;
    let eval_tasks = match (args.eval_data.clone().or_else(|| file.data.eval_path.clone()), &generator) {
        (Some(p), _) => Some(read_dataset(p)?),
        (None, Some(g)) if tc.eval_every > 0 => {
            let mut held_out = g.clone();
            held_out.stream = g.stream + 1;
            let count = file.data.eval_count.unwrap_or(128);
            Some(generate_tasks(&held_out, 0, count)?.0.into_iter().map(|t| t.task).collect())
        }
        _ => None,
    };

    let effective = json!({
        "model": mc,
        "train": tc,
        "init": init_path,
        "normalization": normalization,
        "loss_targets_only": tc.loss_scope == LossScope::TargetsOnly,
    });
    echo("config", &effective);
    eprintln!("epoch,train_loss,lr,batches,tasks");
    let mut print_epoch = |r: &crate::trainer::EpochRecord| {
        eprintln!("{},{:.10e},{:.6e},{},{}", r.epoch, r.train_loss, r.lr, r.batches, r.tasks);
    };
    let options = TrainOptions {
        eval_tasks: eval_tasks.as_deref(),
        normalization: normalization.clone(),
        on_epoch: Some(&mut print_epoch),
    };
    let (params, mut report) = train_with(&mc, &tc, init.as_ref(), options)?;

    let mut ck = Checkpoint::new(mc.clone(), params)?;
    ck.metadata.insert("effective_config".into(), effective.clone());
    ck.save(&out)?;
    report.checkpoint_path = Some(out.clone());
    report.metadata.insert(
        "loss_targets_only".into(),
        json!(tc.loss_scope == LossScope::TargetsOnly),
    );
    report.metadata.insert("effective_config".into(), effective);
    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    write_output(Some(&report_path), &report.to_json())?;
    eprintln!(
        "wrote {} and {} ({:.1}s)",
        out.display(),
        report_path.display(),
        report.wall_time_secs
    );
    Ok(())
}

fn check_dims(tasks: &[InterpolationTask], config: &ModelConfig) -> Result<()> {
    if let Some(t) = tasks.iter().find(|t| t.d_x != config.d_x || t.d_y != config.d_y) {
        return Err(NiertError::shape(format!(
            "task {} has dims ({}, {}), checkpoint expects ({}, {})",
            t.source_id, t.d_x, t.d_y, config.d_x, config.d_y
        )));
    }
    Ok(())
}

fn eval_options(file: &RunConfigFile, bin_width: Option<usize>) -> EvalOptions {
    let mut opts = EvalOptions::default();
    if let Some(w) = bin_width.or(file.eval.bin_width) {
        opts.bin_width = w;
    }
    opts.region = file.eval.region.clone();
    opts
}

fn emit_metrics(
    common: &Common,
    table: &MetricTable,
    preds: &[crate::trainer::TaskPrediction],
    dump: Option<&Path>,
) -> Result<()> {
    if let Some(p) = dump {
        write_output(Some(p), &predictions_to_jsonl(preds))?;
    }
    write_output(common.out.as_deref(), &table.to_csv())
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let file = load_file(&args.common)?;
    let opts = eval_options(&file, args.bin_width);
    let tasks = read_dataset(&args.data)?;
    echo(
        "config",
        &json!({ "data": args.data, "checkpoint": args.checkpoint, "oracle": args.oracle, "eval": opts }),
    );
    let (table, preds) = if args.oracle {
        evaluate_with(&tasks, oracle_predict, &opts)?
    } else {
        let path = args
            .checkpoint
            .as_deref()
            .ok_or_else(|| CliError::usage("eval needs --checkpoint or --oracle"))?;
        let ck = Checkpoint::load(path)?;
        check_dims(&tasks, &ck.config)?;
        evaluate_with(&tasks, |t| predict_points(t, &ck.params, &ck.config), &opts)?
    };
    emit_metrics(&args.common, &table, &preds, args.dump_predictions.as_deref())?;
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let tasks = read_dataset(&args.data)?;
    check_dims(&tasks, &ck.config)?;
    echo("config", &json!({ "data": args.data, "checkpoint": args.checkpoint }));
    let (_, preds) = evaluate_with(
        &tasks,
        |t| predict_points(t, &ck.params, &ck.config),
        &EvalOptions::default(),
    )?;
    write_output(args.common.out.as_deref(), &predictions_to_jsonl(&preds))?;
    Ok(())
}

/// Attention of `head` in `layer` as CSV rows
/// `observed,target,x0..x{d-1},weight`, one row per (observed, target) pair.
pub fn attention_csv(
    task: &InterpolationTask,
    ck: &Checkpoint,
    layer: usize,
    head: usize,
    observed: &[usize],
) -> Result<String> {
    let cfg = &ck.config;
    if layer >= cfg.num_layers || head >= cfg.num_heads {
        return Err(NiertError::InvalidConfig(format!(
            "layer {layer} / head {head} out of range for {} layers, {} heads",
            cfg.num_layers, cfg.num_heads
        )));
    }
    if let Some(j) = observed.iter().find(|&&j| j >= task.n()) {
        return Err(NiertError::InvalidConfig(format!(
            "observed index {j} out of range for n = {}",
            task.n()
        )));
    }
    let out = forward(task, &ck.params, cfg, true)?;
    let map = out
        .attention
        .unwrap_or_default()
        .into_iter()
        .find(|a| a.layer == layer && a.head == head)
        .ok_or_else(|| NiertError::InvalidConfig("attention not captured".into()))?;
    let all: Vec<usize> = (0..task.n()).collect();
    let js = if observed.is_empty() { &all[..] } else { observed };
    let mut csv = String::from("observed,target");
    for d in 0..task.d_x {
        csv.push_str(&format!(",x{d}"));
    }
    csv.push_str(",weight\n");
    for &j in js {
        for (t, p) in task.targets.iter().enumerate() {
            csv.push_str(&format!("{j},{t}"));
            for v in &p.x {
                csv.push_str(&format!(",{v:.17e}"));
            }
            csv.push_str(&format!(",{:.17e}\n", map.weights[(task.n() + t, j)]));
        }
    }
    Ok(csv)
}

fn cmd_attn(args: &AttnArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let tasks = read_dataset(&args.task)?;
    if tasks.len() != 1 {
        return Err(CliError {
            code: EXIT_SHAPE,
            message: format!("attn expects one task, {} holds {}", args.task.display(), tasks.len()),
        });
    }
    check_dims(&tasks, &ck.config)?;
    let layer = args.layer.unwrap_or(ck.config.num_layers.saturating_sub(1));
    echo("config", &json!({ "checkpoint": args.checkpoint, "layer": layer, "head": args.head }));
    let csv = attention_csv(&tasks[0], &ck, layer, args.head, &args.observed)?;
    write_output(args.common.out.as_deref(), &csv)?;
    Ok(())
}

fn cmd_baseline(args: &BaselineArgs) -> CliResult<()> {
    let file = load_file(&args.common)?;
    let opts = eval_options(&file, args.bin_width);
    let tasks = read_dataset(&args.data)?;
    let ridge = args.ridge.unwrap_or(0.0);
    let shape_c = args.shape_c.unwrap_or(rbf::DEFAULT_SHAPE);
    let power = args.power.unwrap_or(idw::DEFAULT_POWER);
    echo(
        "config",
        &json!({ "data": args.data, "method": format!("{:?}", args.method).to_lowercase(),
                 "ridge": ridge, "shape_c": shape_c, "power": power, "eval": opts }),
    );
    let result = match args.method {
        MethodArg::Rbf => evaluate_with(
            &tasks,
            |t| {
                let model = rbf_fit_task(t, shape_c, ridge)?;
                t.observed
                    .iter()
                    .chain(&t.targets)
                    .map(|p| model.eval(&p.x))
                    .collect()
            },
            &opts,
        ),
        MethodArg::Idw => evaluate_with(
            &tasks,
            |t| {
                let mut rows: Vec<Vec<f64>> = (0..t.n()).map(|i| t.observed_y(i).to_vec()).collect();
                rows.extend(idw_predict_task(t, power));
                Ok(rows)
            },
            &opts,
        ),
    };
    let (table, preds) = match result {
        Err(e @ NiertError::SingularSystem { .. }) => {
            return Err(CliError {
                code: EXIT_SHAPE,
                message: format!("{e}; retry with --ridge"),
            })
        }
        r => r?,
    };
    emit_metrics(&args.common, &table, &preds, args.dump_predictions.as_deref())?;
    Ok(())
}
