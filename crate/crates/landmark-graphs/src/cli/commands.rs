//! Subcommand implementations.

use super::{Cli, Command, FileConfig, ModelArgs, DEFAULT_SEED, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE};
use crate::corpus::{
    generate_synthetic, load_corpus, load_embeddings, make_folds, parse_record_line, save_corpus,
    Corpus, Vocabulary,
};
use crate::graphgen::{build_graph_padded, stitch_route, to_dot, LandmarkGraph};
use crate::metrics::report::{evaluate, render_text};
use crate::metrics::DEFAULT_GED_NODE_LIMIT;
use crate::model::{
    check_shapes, predict, run_gradcheck, train, ModelConfig, PredictionRecord, TrainOptions,
    GRADCHECK_TOLERANCE,
};
use crate::numerics::{load_checkpoint, ExpDecay};
use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config file {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("bad config file {}", p.display()))
        }
    }
}

fn resolve_model(file: &FileConfig, args: &ModelArgs) -> ModelConfig {
    let mut cfg = ModelConfig::default();
    macro_rules! pick {
        ($field:ident) => {
            if let Some(v) = file.$field.clone() {
                cfg.$field = v;
            }
            if let Some(v) = args.$field.clone() {
                cfg.$field = v;
            }
        };
    }
    pick!(char_filter_sizes);
    pick!(char_feature_dim);
    pick!(word_embed_dim);
    pick!(encoder_hidden);
    pick!(decoder_hidden);
    pick!(attention_dim);
    pick!(dropout_in);
    pick!(dropout_out);
    pick!(epochs);
    pick!(max_decode_len);
    cfg
}

fn resolve_schedule(file: &FileConfig, args: &ModelArgs) -> ExpDecay {
    let mut s = ExpDecay::default();
    if let Some(v) = file.lr_init.or(args.lr_init) {
        s.init = v;
    }
    if let Some(v) = args.lr_init {
        s.init = v;
    }
    if let Some(v) = file.lr_rate {
        s.rate = v;
    }
    if let Some(v) = args.lr_rate {
        s.rate = v;
    }
    if let Some(v) = file.lr_steps {
        s.steps = v;
    }
    if let Some(v) = args.lr_steps {
        s.steps = v;
    }
    s
}

/// The fully-resolved settings of a run, echoed beside its outputs.
#[derive(Debug, Serialize)]
struct ResolvedConfig<'a> {
    command: &'a str,
    corpus: Option<&'a Path>,
    embeddings: Option<&'a Path>,
    checkpoint: Option<&'a Path>,
    predictions: Option<&'a Path>,
    seed: u64,
    fold: Option<usize>,
    ged_limit: Option<usize>,
    model: &'a ModelConfig,
    lr_init: f64,
    lr_rate: f64,
    lr_steps: f64,
}

fn write_config_echo(dir: &Path, resolved: &ResolvedConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = toml::to_string_pretty(resolved).context("serializing resolved config")?;
    std::fs::write(dir.join("config_resolved.toml"), text)?;
    Ok(())
}

fn required<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("missing required option --{what} (or config key `{what}`)"))
}

fn load_corpus_checked(path: &Path) -> Result<Corpus> {
    if !path.exists() {
        bail!("corpus file {} does not exist", path.display());
    }
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn build_vocab(corpus: &Corpus, embeddings: &Option<PathBuf>, seed: u64) -> Result<Vocabulary> {
    let vocab = Vocabulary::from_corpus(corpus, seed);
    match embeddings {
        None => Ok(vocab),
        Some(path) => {
            if !path.exists() {
                bail!("embeddings file {} does not exist", path.display());
            }
            load_embeddings(path, &vocab)
                .with_context(|| format!("loading embeddings {}", path.display()))
        }
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

pub fn dispatch(cli: Cli) -> Result<i32> {
    let file = load_file_config(&cli.config)?;
    match cli.command {
        Command::Train {
            corpus,
            embeddings,
            out_dir,
            seed,
            fold,
            all_data,
            model,
        } => cmd_train(&file, corpus, embeddings, out_dir, seed, fold, all_data, &model),
        Command::Predict {
            corpus,
            embeddings,
            checkpoint,
            out_dir,
            seed,
            fold,
            model,
        } => cmd_predict(&file, corpus, embeddings, checkpoint, out_dir, seed, fold, &model),
        Command::Evaluate {
            corpus,
            predictions,
            out_dir,
            seed,
            ged_limit,
        } => cmd_evaluate(&file, corpus, predictions, out_dir, seed, ged_limit),
        Command::Gradcheck { seed } => cmd_gradcheck(seed.or(file.seed).unwrap_or(DEFAULT_SEED)),
        Command::ExportDot { records, out_dir } => cmd_export_dot(&file, records, out_dir),
        Command::Synth { routes, seed, out } => cmd_synth(&file, routes, seed, out),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    file: &FileConfig,
    corpus: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    fold: Option<usize>,
    all_data: bool,
    model: &ModelArgs,
) -> Result<i32> {
    let corpus_path = required(corpus.or_else(|| file.corpus.clone()), "corpus")?;
    let embeddings = embeddings.or_else(|| file.embeddings.clone());
    let out_dir = required(out_dir.or_else(|| file.out_dir.clone()), "out-dir")?;
    let seed = seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let fold = fold.or(file.fold).unwrap_or(0);
    let all_data = all_data || file.all_data.unwrap_or(false);
    let config = resolve_model(file, model);
    let schedule = resolve_schedule(file, model);

    let corpus = load_corpus_checked(&corpus_path)?;
    let vocab = build_vocab(&corpus, &embeddings, seed)?;

    let (corpus, indices) = if all_data {
        let indices: Vec<usize> = (0..corpus.len()).collect();
        (corpus, indices)
    } else {
        let corpus = make_folds(corpus, seed).context(
            "fold split failed (use --all-data to train on everything)",
        )?;
        let split = corpus
            .folds
            .get(fold)
            .ok_or_else(|| anyhow!("fold {fold} out of range"))?;
        // Train on train + dev; test stays held out.
        let mut indices = split.train.clone();
        indices.extend_from_slice(&split.dev);
        indices.sort_unstable();
        (corpus.clone(), indices)
    };

    std::fs::create_dir_all(&out_dir)?;
    write_config_echo(
        &out_dir,
        &ResolvedConfig {
            command: "train",
            corpus: Some(&corpus_path),
            embeddings: embeddings.as_deref(),
            checkpoint: None,
            predictions: None,
            seed,
            fold: (!all_data).then_some(fold),
            ged_limit: None,
            model: &config,
            lr_init: schedule.init,
            lr_rate: schedule.rate,
            lr_steps: schedule.steps,
        },
    )?;

    let options = TrainOptions {
        out_dir: Some(out_dir.clone()),
        schedule,
    };
    let (_, log) = train(&corpus, &indices, &vocab, &config, seed, &options)?;
    let log_json = serde_json::to_string_pretty(&log)?;
    std::fs::write(out_dir.join("train_log.json"), log_json)?;
    println!(
        "trained {} epochs on {} sentences; final mean loss {:.6}",
        config.epochs,
        indices.len(),
        log.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_predict(
    file: &FileConfig,
    corpus: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    fold: Option<usize>,
    model: &ModelArgs,
) -> Result<i32> {
    let corpus_path = required(corpus.or_else(|| file.corpus.clone()), "corpus")?;
    let embeddings = embeddings.or_else(|| file.embeddings.clone());
    let checkpoint_path = required(checkpoint.or_else(|| file.checkpoint.clone()), "checkpoint")?;
    let out_dir = required(out_dir.or_else(|| file.out_dir.clone()), "out-dir")?;
    let seed = seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let fold = fold.or(file.fold);
    let config = resolve_model(file, model);

    let corpus = load_corpus_checked(&corpus_path)?;
    let vocab = build_vocab(&corpus, &embeddings, seed)?;
    let ckpt = load_checkpoint(&checkpoint_path)
        .with_context(|| format!("loading checkpoint {}", checkpoint_path.display()))?;
    check_shapes(&ckpt.store, &config)?;
    let expected_hash = config.config_hash(&vocab);
    if ckpt.config_hash != expected_hash {
        bail!(
            "checkpoint was trained under config hash {} but the current config/vocabulary \
             hashes to {expected_hash}; pass the training corpus, embeddings, seed and model \
             flags used at training time",
            ckpt.config_hash
        );
    }

    let indices: Vec<usize> = match fold {
        Some(k) => {
            let folded = make_folds(corpus.clone(), seed)?;
            folded
                .folds
                .get(k)
                .ok_or_else(|| anyhow!("fold {k} out of range"))?
                .test
                .clone()
        }
        None => (0..corpus.len()).collect(),
    };

    std::fs::create_dir_all(&out_dir)?;
    write_config_echo(
        &out_dir,
        &ResolvedConfig {
            command: "predict",
            corpus: Some(&corpus_path),
            embeddings: embeddings.as_deref(),
            checkpoint: Some(&checkpoint_path),
            predictions: None,
            seed,
            fold,
            ged_limit: None,
            model: &config,
            lr_init: ExpDecay::default().init,
            lr_rate: ExpDecay::default().rate,
            lr_steps: ExpDecay::default().steps,
        },
    )?;

    let mut records = Vec::new();
    let mut by_route: BTreeMap<String, Vec<(u32, LandmarkGraph)>> = BTreeMap::new();
    let mut out = std::fs::File::create(out_dir.join("predictions.jsonl"))?;
    for &i in &indices {
        let ins = &corpus.instructions[i];
        let prediction = predict(ins, &ckpt.store, &config, &vocab)?;
        let record = PredictionRecord::from_prediction(ins, &prediction);

        let graph = build_graph_padded(&prediction.actions, &prediction.states, &record.tokens)?;
        let dot_name = format!("{}_{:03}.dot", sanitize(&ins.route_id), ins.sentence_id);
        std::fs::write(out_dir.join(dot_name), to_dot(&graph))?;
        by_route
            .entry(ins.route_id.clone())
            .or_default()
            .push((ins.sentence_id, graph));

        writeln!(out, "{}", serde_json::to_string(&record)?)?;
        records.push(record);
    }
    for (route_id, mut graphs) in by_route {
        if graphs.len() < 2 {
            continue;
        }
        graphs.sort_by_key(|(sid, _)| *sid);
        let parts: Vec<LandmarkGraph> = graphs.into_iter().map(|(_, g)| g).collect();
        let stitched = stitch_route(&parts)?;
        let name = format!("{}__route.dot", sanitize(&route_id));
        std::fs::write(out_dir.join(name), to_dot(&stitched))?;
    }
    println!("wrote {} prediction records to {}", records.len(), out_dir.display());
    Ok(EXIT_OK)
}

fn cmd_evaluate(
    file: &FileConfig,
    corpus: Option<PathBuf>,
    predictions: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    ged_limit: Option<usize>,
) -> Result<i32> {
    let corpus_path = required(corpus.or_else(|| file.corpus.clone()), "corpus")?;
    let predictions_path = required(
        predictions.or_else(|| file.predictions.clone()),
        "predictions",
    )?;
    let out_dir = out_dir.or_else(|| file.out_dir.clone());
    let seed = seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let ged_limit = ged_limit.or(file.ged_limit).unwrap_or(DEFAULT_GED_NODE_LIMIT);

    let corpus = load_corpus_checked(&corpus_path)?;
    // Per-fold blocks need the same fold split the training run used.
    let corpus = make_folds(corpus.clone(), seed).unwrap_or(corpus);

    let reader = BufReader::new(
        std::fs::File::open(&predictions_path)
            .with_context(|| format!("cannot open predictions {}", predictions_path.display()))?,
    );
    let mut records: Vec<PredictionRecord> = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .with_context(|| format!("bad prediction record at line {}", no + 1))?,
        );
    }
    if records.is_empty() {
        bail!("prediction file {} is empty", predictions_path.display());
    }

    let report = evaluate(&corpus, &records, seed, ged_limit);
    let text = render_text(&report);
    print!("{text}");
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        std::fs::write(dir.join("report.txt"), &text)?;
        write_config_echo(
            dir,
            &ResolvedConfig {
                command: "evaluate",
                corpus: Some(&corpus_path),
                embeddings: None,
                checkpoint: None,
                predictions: Some(&predictions_path),
                seed,
                fold: None,
                ged_limit: Some(ged_limit),
                model: &ModelConfig::default(),
                lr_init: ExpDecay::default().init,
                lr_rate: ExpDecay::default().rate,
                lr_steps: ExpDecay::default().steps,
            },
        )?;
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(seed: u64) -> Result<i32> {
    let report = run_gradcheck(seed, None)?;
    for (name, err) in &report.groups {
        println!("{name:<24} max rel err {err:.3e}");
    }
    println!(
        "gradcheck: max relative error {:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})",
        report.max_relative_error
    );
    if report.passed() {
        println!("gradcheck: PASS");
        Ok(EXIT_OK)
    } else {
        println!("gradcheck: FAIL");
        Ok(EXIT_CHECK_FAILED)
    }
}

fn cmd_export_dot(
    file: &FileConfig,
    records: Option<PathBuf>,
    out_dir: Option<PathBuf>,
) -> Result<i32> {
    let records_path = required(records.or_else(|| file.records.clone()), "records")?;
    let out_dir = required(out_dir.or_else(|| file.out_dir.clone()), "out-dir")?;
    std::fs::create_dir_all(&out_dir)?;

    let reader = BufReader::new(
        std::fs::File::open(&records_path)
            .with_context(|| format!("cannot open records {}", records_path.display()))?,
    );
    let mut by_route: BTreeMap<String, Vec<(u32, LandmarkGraph)>> = BTreeMap::new();
    let mut count = 0usize;
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (route_id, sentence_id, graph) =
            if let Ok(rec) = serde_json::from_str::<PredictionRecord>(&line) {
                let graph = build_graph_padded(&rec.action_seq()?, &rec.state_seq()?, &rec.tokens)?;
                (rec.route_id, rec.sentence_id, graph)
            } else {
                let ins = parse_record_line(&line, no + 1).with_context(|| {
                    format!("line {}: neither a prediction nor a corpus record", no + 1)
                })?;
                let (Some(actions), Some(states)) = (&ins.gold_actions, &ins.gold_states) else {
                    bail!(
                        "line {}: corpus record {}/{} has no gold actions/states to draw",
                        no + 1,
                        ins.route_id,
                        ins.sentence_id
                    );
                };
                let graph = build_graph_padded(actions, states, &ins.token_texts())?;
                (ins.route_id, ins.sentence_id, graph)
            };
        let name = format!("{}_{:03}.dot", sanitize(&route_id), sentence_id);
        std::fs::write(out_dir.join(name), to_dot(&graph))?;
        by_route.entry(route_id).or_default().push((sentence_id, graph));
        count += 1;
    }
    for (route_id, mut graphs) in by_route {
        if graphs.len() < 2 {
            continue;
        }
        graphs.sort_by_key(|(sid, _)| *sid);
        let parts: Vec<LandmarkGraph> = graphs.into_iter().map(|(_, g)| g).collect();
        let stitched = stitch_route(&parts)?;
        std::fs::write(
            out_dir.join(format!("{}__route.dot", sanitize(&route_id))),
            to_dot(&stitched),
        )?;
    }
    println!("exported {count} graphs to {}", out_dir.display());
    Ok(EXIT_OK)
}

fn cmd_synth(
    file: &FileConfig,
    routes: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<i32> {
    let routes = routes.or(file.routes).unwrap_or(100);
    let seed = seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let out = required(out.or_else(|| file.out.clone()), "out")?;
    if routes == 0 {
        eprintln!("--routes must be at least 1");
        return Ok(EXIT_USAGE);
    }
    let corpus = generate_synthetic(routes, seed)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_corpus(&corpus, &out)?;
    println!(
        "wrote {} sentences over {routes} routes to {}",
        corpus.len(),
        out.display()
    );
    Ok(EXIT_OK)
}
