use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use log::info;
use serde_json::json;

use spfd::critique::Lexicon;
use spfd::dataset::{load_dataset, write_dataset, Dataset};
use spfd::parallel::Parallelism;
use spfd::scorer::ParamVector;
use spfd::search::{Lambda, SearchConfig};
use spfd::synth::{ambiguity, generate, write_gold_programs, SynthConfig};
use spfd::trainer::{
    evaluate, predict, spurious_audit, train, training_beams, AuditConfig, TrainConfig, TrainHistory,
};
use spfd::updates::UpdateSpec;

use crate::config::{Cmd, Settings};

pub const CHECKPOINT: &str = "model.tsv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

pub fn run(s: &Settings) -> Result<()> {
    match s.cmd {
        Cmd::Train => cmd_train(s),
        Cmd::Eval => cmd_eval(s),
        Cmd::Audit => cmd_audit(s),
        Cmd::Synth => cmd_synth(s),
        Cmd::DumpBeams => cmd_dump_beams(s),
    }
}

fn parallelism(s: &Settings) -> Result<Parallelism> {
    match s.raw("parallelism") {
        Some("auto") => Ok(Parallelism::Auto),
        Some("sequential") => Ok(Parallelism::Sequential),
        other => anyhow::bail!("bad value for parallelism: {other:?} (expected auto or sequential)"),
    }
}

fn search_config(s: &Settings) -> Result<SearchConfig> {
    let lambda = match s.raw("lambda") {
        Some("inf" | "infinite") => Lambda::Infinite,
        _ => Lambda::Finite(s.parse("lambda")?),
    };
    let shaping = match s.cmd {
        Cmd::Train | Cmd::DumpBeams => s.flag("shaping")?,
        _ => false,
    };
    let config = SearchConfig {
        beam_size: s.parse("beam-size")?,
        max_actions: s.parse("max-actions")?,
        max_conditions: s.parse("max-conditions")?,
        lambda,
        shaping,
        eta: s.parse("eta")?,
        model_shaping: s.flag("model-shaping")?,
    };
    config.validate().map_err(anyhow::Error::msg)?;
    Ok(config)
}

fn lexicon(s: &Settings) -> Result<Lexicon> {
    match s.path("lexicon") {
        Some(p) => Ok(Lexicon::load(&p)?),
        None => Ok(Lexicon::default_pairs()),
    }
}

fn dataset(s: &Settings) -> Result<Dataset> {
    let data = s.required_path("data")?;
    let tables = s.required_path("tables")?;
    let d = load_dataset(&data, &tables)?;
    info!("{}: {} sequences, {} examples", data.display(), d.sequences.len(), d.num_examples());
    Ok(d)
}

fn checkpoint(s: &Settings) -> Result<ParamVector> {
    let p = s.required_path("checkpoint")?;
    Ok(ParamVector::load(&p)?)
}

fn audit_config(s: &Settings) -> Result<AuditConfig> {
    Ok(AuditConfig {
        sample_size: s.parse("audit-sample")?,
        trials: s.parse("audit-trials")?,
        seed: s.parse("audit-seed")?,
    })
}

pub fn train_config(s: &Settings) -> Result<TrainConfig> {
    let config = TrainConfig {
        learning_rate: s.parse("lr")?,
        epochs: s.parse("epochs")?,
        update: s.parse::<UpdateSpec>("algo")?,
        search: search_config(s)?,
        seed: s.parse("seed")?,
        dev_fraction: s.parse("dev-fraction")?,
        refit: s.flag("refit")?,
        clip: s.optional_f64("clip")?,
        softening: s.parse("softening")?,
        parallelism: parallelism(s)?,
    };
    config.validate()?;
    Ok(config)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn history_csv(h: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_accuracy,dev_accuracy,empty_candidates,no_compatible,no_violation,wall_seconds\n");
    for e in &h.epochs {
        let dev = e.dev_accuracy.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{dev},{},{},{},{:.3}",
            e.epoch, e.train_accuracy, e.skips.empty_candidates, e.skips.no_compatible, e.skips.no_violation, e.wall_seconds
        )
        .unwrap();
    }
    out
}

fn cmd_train(s: &Settings) -> Result<()> {
    let config = train_config(s)?;
    let out = s.required_path("out")?;
    let lex = lexicon(s)?;
    let data = dataset(s)?;
    let test = match s.path("test-data") {
        Some(q) => {
            let tables = s.path("test-tables").map_or_else(|| s.required_path("tables"), Ok)?;
            Some(load_dataset(&q, &tables)?)
        }
        None => None,
    };
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;

    let (params, history) = train(&data, &lex, &config)?;
    params.save(&out.join(CHECKPOINT))?;

    let test_accuracy = match &test {
        Some(t) => Some(evaluate(t, &params, &lex, &config.search, config.parallelism)?),
        None => None,
    };
    let audit = spurious_audit(&data, &params, &lex, &config.search, &audit_config(s)?, config.parallelism);
    let stability = history.stability().ok();
    let report = json!({
        "config": s.to_json(),
        "update": config.update,
        "history": history,
        "best_epoch": history.best_epoch,
        "stability": stability,
        "skips": history.total_skips(),
        "test_accuracy": test_accuracy,
        "spurious_audit": audit,
        "features": params.len(),
    });
    write(&out.join(METRICS_JSON), &serde_json::to_string_pretty(&report)?)?;
    write(&out.join(METRICS_CSV), &history_csv(&history))?;

    let last = history.epochs.last();
    println!("algo {}", config.update);
    println!("epochs {} best_epoch {}", history.epochs.len(), history.best_epoch);
    if let Some(e) = last {
        println!("train_accuracy {:.4}", e.train_accuracy);
        if let Some(d) = e.dev_accuracy {
            println!("dev_accuracy {d:.4}");
        }
    }
    if let Some(st) = stability {
        println!("stability {st:.4}");
    }
    if let Some(t) = test_accuracy {
        println!("test_accuracy {t:.4}");
    }
    println!("spurious {}/{}", audit.spurious, audit.total);
    println!("checkpoint {}", out.join(CHECKPOINT).display());
    Ok(())
}

fn cmd_eval(s: &Settings) -> Result<()> {
    let params = checkpoint(s)?;
    let lex = lexicon(s)?;
    let data = dataset(s)?;
    let search = search_config(s)?;
    let keep_beams = s.path("dump-beams").is_some();
    let preds = predict(&data, &params, &lex, &search, parallelism(s)?, keep_beams);
    anyhow::ensure!(!preds.is_empty(), "no examples in {}", s.required_path("data")?.display());
    if let Some(p) = s.path("predictions") {
        let mut text = String::new();
        for pred in &preds {
            text.push_str(&serde_json::to_string(pred)?);
            text.push('\n');
        }
        write(&p, &text)?;
    }
    if let Some(p) = s.path("dump-beams") {
        let text: String = preds.iter().filter_map(|p| p.beam.as_ref()).map(|b| format!("{b}\n")).collect();
        write(&p, &text)?;
    }
    let correct = preds.iter().filter(|p| p.correct).count();
    println!("accuracy {:.4} ({correct}/{})", correct as f64 / preds.len() as f64, preds.len());
    Ok(())
}

fn cmd_audit(s: &Settings) -> Result<()> {
    let params = checkpoint(s)?;
    let lex = lexicon(s)?;
    let data = dataset(s)?;
    let search = search_config(s)?;
    let r = spurious_audit(&data, &params, &lex, &search, &audit_config(s)?, parallelism(s)?);
    println!("spurious {}/{} (no compatible program: {})", r.spurious, r.total, r.no_compatible);
    Ok(())
}

fn cmd_dump_beams(s: &Settings) -> Result<()> {
    let params = match s.path("checkpoint") {
        Some(p) => ParamVector::load(&p)?,
        None => ParamVector::new(),
    };
    let lex = lexicon(s)?;
    let data = dataset(s)?;
    let search = search_config(s)?;
    let lines = training_beams(&data, &params, &lex, &search, parallelism(s)?);
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    match s.path("beams-out") {
        Some(p) => write(&p, &text)?,
        None => {
            let mut out = std::io::stdout().lock();
            if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                // a closed pipe (e.g. `| head`) is not an error
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e).context("cannot write to stdout");
                }
            }
        }
    }
    Ok(())
}

fn cmd_synth(s: &Settings) -> Result<()> {
    let out = s.required_path("out")?;
    let config = SynthConfig {
        sequences: s.parse("sequences")?,
        seed: s.parse("seed")?,
        min_rows: s.parse("min-rows")?,
        max_rows: s.parse("max-rows")?,
        planted_extreme_rate: s.parse("planted-rate")?,
    };
    let corpus = generate(&config)?;
    let tables = out.join("tables");
    fs::create_dir_all(&tables).with_context(|| format!("cannot create {}", tables.display()))?;
    write_dataset(&corpus.dataset, &out.join("questions.tsv"), &tables)?;
    write_gold_programs(&corpus, &out.join("gold_programs.tsv"))?;
    let amb = ambiguity(&corpus.dataset, 1, parallelism(s)?)?;
    println!(
        "sequences {} examples {} tables {}",
        corpus.dataset.sequences.len(),
        corpus.dataset.num_examples(),
        corpus.dataset.tables.len()
    );
    println!("ambiguous {}/{} ({:.3})", amb.ambiguous, amb.examples, amb.rate());
    println!("wrote {}", out.display());
    Ok(())
}
