use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use layerprune::corpus::{
    filter_corpus, generate_synthetic_corpus, read_jsonl, split_corpus_with_held_out, write_jsonl,
    SyntheticLanguage,
};
use layerprune::distill::{
    filter_kd_data, generate_kd_data, rewrite_corpus, HttpRewriter, MockRewriter, PromptTemplate,
    RewriteParams, RewriterClient,
};
use layerprune::harness::{benchmark_decode, rerender, run_pipeline, ExperimentConfig, TeacherSpec};
use layerprune::metrics::{default_semantic_scorer, LexiconClassifier, MetricReport};
use layerprune::model::{
    fingerprint, init_model, load_model, save_model, translate_all, DecodeConfig, ModelTranslator,
    PromptEncoder, Translate,
};
use layerprune::pruner::{greedy_prune, importance_profile_report, PruneConfig};
use layerprune::quantizer::{load_quantized, quantize_model, save_quantized, MemoryFootprint};
use layerprune::trainer::{train_on_pairs, DevSet};
use layerprune::{Error, Model, QuantModel, Result};

const REWRITER_URL_VAR: &str = "LAYERPRUNE_REWRITER_URL";

#[derive(Parser)]
#[command(name = "layerprune", version, about = "Layer pruning and compression workbench for toy translation models")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Settings {
    /// Flat `section.key = value` experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.learning_rate=0.001`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, filter and split a synthetic corpus.
    Corpus {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score hypotheses against references (one segment per line).
    Score {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Sources, enabling the semantic score.
        #[arg(long)]
        src: Option<PathBuf>,
    },
    /// Write a freshly initialised model.
    Init {
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate sources (one per line) with a model.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        quantized: bool,
    },
    /// Print configuration, size and fingerprint of a model file.
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        quantized: bool,
    },
    /// Train or fine-tune a model with early stopping on a dev set.
    Train {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Use the `finetune` section instead of `train`.
        #[arg(long)]
        finetune: bool,
    },
    /// Greedily remove layers by dev chrF++.
    Prune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        removals: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate and filter distilled pairs.
    Distill {
        /// `oracle` or a model path.
        #[arg(long, default_value = "oracle")]
        teacher: String,
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        authentic: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite targets through a text-generation service.
    Rewrite {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Endpoint; defaults to the LAYERPRUNE_REWRITER_URL variable.
        #[arg(long)]
        url: Option<String>,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
        #[arg(long)]
        template: Option<PathBuf>,
        /// Use the offline identity rewriter.
        #[arg(long)]
        mock: bool,
    },
    /// Quantize a model's projections.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time greedy decoding over the sources of a JSONL file.
    Benchmark {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        quantized: bool,
    },
    /// Run the whole experiment.
    Pipeline {
        /// Print the effective config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Re-render the report of a finished run.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Corpus { .. } => "corpus",
            Command::Score { .. } => "score",
            Command::Init { .. } => "init",
            Command::Decode { .. } => "decode",
            Command::Inspect { .. } => "inspect",
            Command::Train { .. } => "train",
            Command::Prune { .. } => "prune",
            Command::Distill { .. } => "distill",
            Command::Rewrite { .. } => "rewrite",
            Command::Quantize { .. } => "quantize",
            Command::Benchmark { .. } => "benchmark",
            Command::Pipeline { .. } => "pipeline",
            Command::Report { .. } => "report",
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ExperimentConfig::load(cli.settings.config.as_deref(), &cli.settings.overrides)?;
    let language = SyntheticLanguage::new(cfg.corpus.task);
    let encoder = PromptEncoder::for_language(&language);
    let decode: DecodeConfig = cfg.eval.decode;
    match cli.command {
        Command::Corpus { out_dir } => {
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let pairs = generate_synthetic_corpus(cfg.corpus.seed, cfg.corpus.size, cfg.corpus.task)?;
            let (kept, stats) = filter_corpus(
                &pairs,
                &cfg.filter,
                &LexiconClassifier::for_language(&language),
                &default_semantic_scorer(language.clone()),
            );
            let split = split_corpus_with_held_out(&kept, &cfg.filter)?;
            write_jsonl(out_dir.join("corpus.jsonl"), &pairs)?;
            write_jsonl(out_dir.join("train.jsonl"), &split.train)?;
            write_jsonl(out_dir.join("test.jsonl"), &split.test)?;
            write_jsonl(out_dir.join("held_out.jsonl"), &split.held_out)?;
            write_text(&out_dir.join("filter_stats.json"), &serde_json::to_string_pretty(&stats)?)?;
            println!("{stats}");
        }
        Command::Score { hyp, reference, src } => {
            let hyps = read_lines(&hyp)?;
            let refs = read_lines(&reference)?;
            let scorer = default_semantic_scorer(language);
            let sources = src.map(|p| read_lines(&p)).transpose()?;
            let report = MetricReport::compute(&hyps, &refs, sources.as_deref().map(|s| (s, &scorer as _)))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Init { out } => {
            let model: Model = init_model(cfg.model, cfg.train.seed)?;
            save_model(&model, &out)?;
            println!("{}", fingerprint(&model));
        }
        Command::Decode { model, input, quantized } => {
            let sources = read_lines(&input)?;
            let outputs = if quantized {
                let q: QuantModel = load_quantized(&model)?;
                translate_all(&ModelTranslator::new(&q, &encoder, decode), &sources)?
            } else {
                let m: Model = load_model(&model)?;
                translate_all(&ModelTranslator::new(&m, &encoder, decode), &sources)?
            };
            for line in outputs {
                println!("{line}");
            }
        }
        Command::Inspect { model, quantized } => {
            if quantized {
                let q: QuantModel = load_quantized(&model)?;
                println!("{:?}\nlayer_ids {:?}\nquant {:?}", q.config, q.layer_ids, q.quant);
                println!("{}", q.memory_report());
            } else {
                let m: Model = load_model(&model)?;
                println!("{:?}\nlayer_ids {:?}\nparams {:?}", m.config, m.layer_ids, m.param_count());
                println!("fingerprint {}", fingerprint(&m));
                println!("{}", m.memory_report());
            }
        }
        Command::Train { model, train, dev, out, log, finetune } => {
            let m: Model = load_model(&model)?;
            let dev_set = DevSet::new(&read_jsonl(&dev)?, encoder.clone(), decode);
            let tc = if finetune { &cfg.finetune } else { &cfg.train };
            let (best, train_log) = train_on_pairs(&m, &read_jsonl(&train)?, &encoder, &dev_set, tc)?;
            save_model(&best, &out)?;
            if let Some(p) = log {
                write_text(&p, &train_log.to_csv())?;
            }
            println!(
                "best step {} dev chrF++ {:.2} ({:?})",
                train_log.best_step, train_log.best_score, train_log.stop_reason
            );
        }
        Command::Prune { model, dev, removals, out, trace, report } => {
            let m: Model = load_model(&model)?;
            let dev_set = DevSet::new(&read_jsonl(&dev)?, encoder, decode);
            let pc = PruneConfig {
                target_removals: removals,
                parallel_candidates: cfg.prune.parallel_candidates,
                ..PruneConfig::default()
            };
            let (pruned, t) = greedy_prune(&m, &pc, &dev_set)?;
            save_model(&pruned, &out)?;
            if let Some(p) = trace {
                write_text(&p, &serde_json::to_string_pretty(&t)?)?;
            }
            let table = importance_profile_report(&t)?;
            match report {
                Some(p) => write_text(&p, &table)?,
                None => print!("{table}"),
            }
        }
        Command::Distill { teacher, sources, authentic, out } => {
            let kd_cfg = cfg.kd.config(decode.max_new_tokens);
            let src: Vec<String> = read_jsonl(&sources)?.into_iter().map(|p| p.source).collect();
            let file_model: Model;
            let oracle_or_model: Box<dyn Translate + '_> = match TeacherSpec::parse(&teacher) {
                TeacherSpec::Oracle => Box::new(language.clone()),
                TeacherSpec::Baseline => {
                    return Err(Error::Config("`baseline` teacher exists only inside the pipeline".into()))
                }
                TeacherSpec::Path(p) => {
                    file_model = load_model(&p)?;
                    Box::new(ModelTranslator::new(&file_model, &encoder, decode))
                }
            };
            let (generated, gen) = generate_kd_data(oracle_or_model.as_ref(), &src, &kd_cfg)?;
            let scorer = default_semantic_scorer(language);
            let (kept, stats) = filter_kd_data(&generated, &read_jsonl(&authentic)?, &scorer, &kd_cfg)?;
            write_jsonl(&out, &kept)?;
            println!("{gen:?}\n{stats:?}");
        }
        Command::Rewrite { input, out, url, timeout_secs, template, mock } => {
            let template = match template {
                Some(p) => PromptTemplate::new(fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?,
                None => PromptTemplate::default(),
            };
            let client: Box<dyn RewriterClient> = if mock {
                Box::new(MockRewriter::identity())
            } else {
                let url = url
                    .or_else(|| std::env::var(REWRITER_URL_VAR).ok())
                    .ok_or_else(|| Error::Config(format!("no rewriter URL (--url or {REWRITER_URL_VAR})")))?;
                Box::new(HttpRewriter::new(url, Duration::from_secs(timeout_secs)))
            };
            let params = RewriteParams {
                max_words: cfg.filter.max_words,
                max_length_ratio: cfg.filter.max_length_ratio,
                ..RewriteParams::default()
            };
            let (pairs, stats) = rewrite_corpus(&read_jsonl(&input)?, client.as_ref(), &template, &params)?;
            write_jsonl(&out, &pairs)?;
            println!("{stats:?}");
        }
        Command::Quantize { model, out } => {
            let m: Model = load_model(&model)?;
            let q = quantize_model(&m, &cfg.quant.config())?;
            save_quantized(&q, &out)?;
            let (full, small) = (m.memory_report().total, q.memory_report().total);
            println!("{full} -> {small} bytes (ratio {:.3})", small as f64 / full as f64);
        }
        Command::Benchmark { model, prompts, quantized } => {
            let prompts: Vec<Vec<u32>> = read_jsonl(&prompts)?
                .iter()
                .take(cfg.bench.prompts)
                .map(|p| encoder.prompt(&p.source))
                .collect();
            let reps = cfg.bench.repetitions;
            let label = model.display().to_string();
            let result = if quantized {
                let q: QuantModel = load_quantized(&model)?;
                benchmark_decode(&label, &q, &prompts, &decode, reps, q.memory_report().total)?
            } else {
                let m: Model = load_model(&model)?;
                benchmark_decode(&label, &m, &prompts, &decode, reps, m.memory_report().total)?
            };
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Pipeline { print_config } => {
            if print_config {
                print!("{}", cfg.to_flat_text());
                return Ok(());
            }
            run_pipeline(&cfg)?;
            print!("{}", rerender(&cfg.output_dir)?);
        }
        Command::Report { dir } => print!("{}", rerender(&dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e = match e {
                stage @ Error::Stage { .. } => stage,
                other => other.in_stage(name),
            };
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
