//! Command-line front end.

use std::io::{BufRead, IsTerminal, Write};
use std::path::PathBuf;

use anyhow::Context;
use bubblekg_core::corpus::{annotate_vad, ingest, parse_corpus};
use bubblekg_core::embedding::train;
use bubblekg_core::recommend::link_bubbles;
use bubblekg_core::{EmbeddingSpace, IngestStats, Lexicon, Store};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::EngineConfig;
use crate::engine::{Engine, EngineError};
use crate::eval::evaluate;

#[derive(Debug, Parser)]
#[command(name = "bubblekg", version, about = "Bubble-structured conversational knowledge graph engine")]
pub struct Cli {
    /// key = value engine configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON instead of text
    #[arg(long, global = true)]
    pub json: bool,
    /// Store file (overrides the config)
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Embeddings file (overrides the config)
    #[arg(long, global = true)]
    pub emb: Option<PathBuf>,
    /// VAD lexicon TSV (overrides the config)
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an annotated corpus into the store
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train embeddings for every entity in the store
    Train {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recommend knowledge for a piece of user text
    Recommend {
        #[arg(long)]
        text: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Read user turns from standard input, one per line
    Chat,
    /// Add relevant_to edges between members of similar bubbles
    LinkBubbles {
        #[arg(long)]
        tau1: Option<f64>,
        #[arg(long)]
        tau2: Option<f64>,
    },
    /// Filtered link-prediction metrics on a held-out split
    Eval {
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve the JSON HTTP API
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

fn engine_config(cli: &Cli) -> anyhow::Result<EngineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => EngineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => EngineConfig::default(),
    };
    if let Some(p) = &cli.store {
        cfg.store = p.clone();
    }
    if let Some(p) = &cli.emb {
        cfg.embeddings = p.clone();
    }
    if let Some(p) = &cli.lexicon {
        cfg.lexicon = Some(p.clone());
    }
    Ok(cfg)
}

fn emit<T: Serialize>(out: &mut dyn Write, json: bool, value: &T, text: impl FnOnce() -> String) -> anyhow::Result<()> {
    if json {
        writeln!(out, "{}", serde_json::to_string(value)?)?;
    } else {
        writeln!(out, "{}", text())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct IngestOutput {
    #[serde(flatten)]
    stats: IngestStats,
    annotated: usize,
}

/// Runs one command. `input` feeds `chat`; everything user-facing goes to
/// `out`.
pub fn run(cli: &Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut cfg = engine_config(cli)?;
    match &cli.command {
        Command::Ingest { corpus } => {
            let text = std::fs::read_to_string(corpus).with_context(|| format!("reading {}", corpus.display()))?;
            let drafts = parse_corpus(&text).map_err(EngineError::from)?;
            let mut graph = if cfg.store.exists() {
                Store::load(&cfg.store).map_err(EngineError::from)?
            } else {
                Store::new()
            };
            let stats = ingest(&mut graph, &drafts).map_err(EngineError::from)?;
            let annotated = match &cfg.lexicon {
                Some(path) => annotate_vad(&mut graph, &Lexicon::load(path).map_err(EngineError::from)?),
                None => 0,
            };
            graph.save(&cfg.store).map_err(EngineError::from)?;
            emit(out, cli.json, &IngestOutput { stats, annotated }, || {
                format!(
                    "{} bubbles, {} entities, {} triples created; {} entities scored",
                    stats.bubbles, stats.entities, stats.triples, annotated
                )
            })
        }
        Command::Train {
            dim,
            epochs,
            lr,
            margin,
            seed,
        } => {
            if let Some(d) = dim {
                cfg.dim = *d;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(l) = lr {
                cfg.train.learning_rate = *l;
            }
            if let Some(m) = margin {
                cfg.train.margin = *m;
            }
            if let Some(s) = seed {
                cfg.train.seed = *s;
            }
            cfg.validate()?;
            let graph = Store::load(&cfg.store).map_err(EngineError::from)?;
            let mut space = EmbeddingSpace::init(&graph, cfg.dim, cfg.train.seed).map_err(EngineError::from)?;
            let report = train(&graph, &mut space, &cfg.train).map_err(EngineError::from)?;
            space.save(&cfg.embeddings).map_err(EngineError::from)?;
            emit(out, cli.json, &report, || {
                format!(
                    "{} epochs over {} triples; loss {:.4} -> {:.4}",
                    report.epoch_losses.len(),
                    graph.triple_count(),
                    report.first_loss().unwrap_or(0.0),
                    report.final_loss().unwrap_or(0.0)
                )
            })
        }
        Command::Recommend { text, k, alpha } => {
            if let Some(k) = k {
                cfg.recommend.k = *k;
            }
            if let Some(a) = alpha {
                cfg.recommend.alpha = *a;
            }
            let rcfg = cfg.recommend.clone();
            let mut engine = Engine::open(cfg)?;
            let rec = engine.recommend(text, &rcfg)?;
            engine.save()?;
            emit(out, cli.json, &rec, || {
                rec.items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| format!("{}. {:.4}  {}", i + 1, item.blended, item.verbalization))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Chat => {
            let mut engine = Engine::open(cfg)?;
            let interactive = std::io::stdin().is_terminal() && !cli.json;
            let mut line = String::new();
            loop {
                if interactive {
                    write!(out, "> ")?;
                    out.flush()?;
                }
                line.clear();
                if input.read_line(&mut line)? == 0 {
                    break;
                }
                let turn = line.trim();
                if turn.is_empty() {
                    eprintln!("type a message, or end input to quit");
                    continue;
                }
                match engine.chat_turn(turn) {
                    Ok(trace) => emit(out, cli.json, &trace, || trace.final_text.clone())?,
                    Err(e) => eprintln!("error: {e}"),
                }
            }
            engine.save()?;
            Ok(())
        }
        Command::LinkBubbles { tau1, tau2 } => {
            if let Some(t) = tau1 {
                cfg.recommend.tau_summary = *t;
            }
            if let Some(t) = tau2 {
                cfg.recommend.tau_member = *t;
            }
            let mut engine = Engine::open(cfg)?;
            let rcfg = engine.config.recommend.clone();
            let added = link_bubbles(&mut engine.graph, &engine.space, &rcfg).map_err(EngineError::from)?;
            engine.save()?;
            emit(out, cli.json, &added, || {
                let mut lines = vec![format!("{} relevant_to edges added", added.len())];
                lines.extend(added.iter().filter_map(|t| engine.graph.verbalize(t).ok()));
                lines.join("\n")
            })
        }
        Command::Eval { holdout, seed } => {
            let seed = seed.unwrap_or(cfg.train.seed);
            let graph = Store::load(&cfg.store).map_err(EngineError::from)?;
            let report = evaluate(&graph, cfg.dim, &cfg.train, *holdout, seed)?;
            emit(out, cli.json, &report, || {
                format!(
                    "MRR {:.4}  Hits@1 {:.4}  Hits@3 {:.4}  Hits@10 {:.4}  ({} held-out triples, seed {})",
                    report.mrr, report.hits_at[&1], report.hits_at[&3], report.hits_at[&10], report.n_test, report.seed
                )
            })
        }
        Command::Serve { bind } => {
            let engine = Engine::open(cfg)?;
            let runtime = tokio::runtime::Runtime::new()?;
            eprintln!("listening on {bind}");
            runtime
                .block_on(crate::service::serve(engine, bind))
                .with_context(|| format!("serving on {bind}"))
        }
    }
}
