use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::bench::{benchmark_interleaved, BenchTarget, BenchmarkResult};
use super::config::{ExperimentConfig, TeacherSpec};
use super::report::{
    render_report, ExperimentReport, KdRow, KdSummary, ModelRow, QuantRow, SplitSizes, TrainSummary,
};
use crate::corpus::{
    filter_corpus, generate_synthetic_corpus, split_corpus_with_held_out, write_jsonl, SegmentPair,
    SyntheticLanguage,
};
use crate::distill::{filter_kd_data, generate_kd_data, mix_training_data};
use crate::error::{Error, Result};
use crate::metrics::{default_semantic_scorer, LexiconClassifier, MetricReport, SemanticScorer};
use crate::model::{
    generate, init_model, load_model, save_model, translate_all, Backbone, DecodeConfig, ModelTranslator,
    PromptEncoder, Translate, TransformerModel,
};
use crate::pruner::{greedy_prune, greedy_prune_with, importance_profile_report, PruneConfig, PruneTrace};
use crate::quantizer::{quantize_model, save_quantized, MemoryFootprint, QuantizedModel};
use crate::trainer::{train_on_pairs, DevSet, TrainConfig, TrainLog};

/// Files written under the output directory, for the manifest.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    status: String,
    files: Vec<ManifestEntry>,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        self.record(name);
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    pub fn jsonl(&mut self, name: &str, pairs: &[SegmentPair]) -> Result<()> {
        write_jsonl(self.path(name), pairs)?;
        self.record(name);
        Ok(())
    }

    pub fn model(&mut self, name: &str, model: &TransformerModel<f32>) -> Result<()> {
        save_model(model, self.path(name))?;
        self.record(name);
        Ok(())
    }

    pub fn quantized(&mut self, name: &str, model: &QuantizedModel<f32>) -> Result<()> {
        save_quantized(model, self.path(name))?;
        self.record(name);
        Ok(())
    }

    /// Writes `manifest.json` listing every recorded file with its SHA-256.
    pub fn write_manifest(&self, status: &str) -> Result<()> {
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let p = self.path(name);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            files.push(ManifestEntry {
                path: name.clone(),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let manifest = Manifest {
            status: status.to_string(),
            files,
        };
        let p = self.path("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&p, e))
    }
}

fn stage<R>(name: &str, f: impl FnOnce() -> Result<R>) -> Result<R> {
    f().map_err(|e| e.in_stage(name))
}

fn sources(pairs: &[SegmentPair]) -> Vec<String> {
    pairs.iter().map(|p| p.source.clone()).collect()
}

fn score(
    translator: &dyn Translate,
    test: &[SegmentPair],
    scorer: &dyn SemanticScorer,
) -> Result<MetricReport> {
    let src = sources(test);
    let refs: Vec<String> = test.iter().map(|p| p.target.clone()).collect();
    let hyps = translate_all(translator, &src)?;
    MetricReport::compute(&hyps, &refs, Some((&src, scorer)))
}

/// Share of positions where two models emit the same greedy token, over
/// the longer of the two outputs per prompt.
pub fn token_agreement<A, B>(a: &A, b: &B, prompts: &[Vec<u32>], decode: &DecodeConfig) -> Result<f64>
where
    A: Backbone<f32> + ?Sized,
    B: Backbone<f32> + ?Sized,
{
    let (mut same, mut total) = (0usize, 0usize);
    for p in prompts {
        let x = generate(a, p, decode)?.tokens;
        let y = generate(b, p, decode)?.tokens;
        same += x.iter().zip(&y).filter(|(u, v)| u == v).count();
        total += x.len().max(y.len());
    }
    Ok(if total == 0 { 1.0 } else { same as f64 / total as f64 })
}

fn summary(label: &str, log: &TrainLog) -> TrainSummary {
    TrainSummary {
        label: label.to_string(),
        steps: log.records.last().map_or(0, |r| r.step),
        best_step: log.best_step,
        initial_dev_chrf_pp: log.initial().dev_chrf_pp,
        best_dev_chrf_pp: log.best_score,
        stop_reason: log.stop_reason,
    }
}

struct Pruned {
    layers: usize,
    tuned: TransformerModel<f32>,
    untuned: TransformerModel<f32>,
}

/// Runs every stage and writes its artifacts under `cfg.output_dir`. On
/// failure the manifest still lists what was written, and the error names
/// the failing stage.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut art = Artifacts::new(&cfg.output_dir)?;
    match run_stages(cfg, &mut art) {
        Ok(report) => {
            art.write_manifest("complete")?;
            Ok(report)
        }
        Err(e) => {
            let _ = art.write_manifest(&format!("failed: {e}"));
            Err(e)
        }
    }
}

fn run_stages(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<ExperimentReport> {
    art.json("config.json", cfg)?;
    let language = SyntheticLanguage::new(cfg.corpus.task);
    let scorer = default_semantic_scorer(language.clone());
    let decode = cfg.eval.decode;

    let corpus = stage("corpus", || {
        let pairs = generate_synthetic_corpus(cfg.corpus.seed, cfg.corpus.size, cfg.corpus.task)?;
        art.jsonl("corpus.jsonl", &pairs)?;
        Ok(pairs)
    })?;

    let (filtered, filter_stats) = stage("filter", || {
        let classifier = LexiconClassifier::for_language(&language);
        let (kept, stats) = filter_corpus(&corpus, &cfg.filter, &classifier, &scorer);
        art.jsonl("filtered.jsonl", &kept)?;
        art.json("filter_stats.json", &stats)?;
        Ok((kept, stats))
    })?;

    let split = stage("split", || {
        let split = split_corpus_with_held_out(&filtered, &cfg.filter)?;
        art.jsonl("train.jsonl", &split.train)?;
        art.jsonl("test.jsonl", &split.test)?;
        art.jsonl("held_out.jsonl", &split.held_out)?;
        Ok(split)
    })?;
    let dev_pairs = &split.test[..cfg.eval.dev_size];
    let encoder = PromptEncoder::for_language(&language);
    let dev = DevSet::new(dev_pairs, encoder.clone(), decode);
    let mut training = Vec::new();

    let baseline = stage("train", || {
        if encoder.vocab.len() > cfg.model.vocab_size {
            return Err(Error::Config(format!(
                "model.vocab_size {} is smaller than the task vocabulary {}",
                cfg.model.vocab_size,
                encoder.vocab.len()
            )));
        }
        let init: TransformerModel<f32> = init_model(cfg.model, cfg.train.seed)?;
        let (model, log) = train_on_pairs(&init, &split.train, &encoder, &dev, &cfg.train)?;
        art.model("baseline.model", &model)?;
        art.text("baseline_train_log.csv", &log.to_csv())?;
        training.push(summary("baseline", &log));
        Ok(model)
    })?;

    let finetune = |model: &TransformerModel<f32>, pairs: &[SegmentPair], tc: &TrainConfig| {
        train_on_pairs(model, pairs, &encoder, &dev, tc)
    };

    let (trace, pruned) = stage("prune", || {
        let Some(&deepest) = cfg.prune.targets.last() else {
            return Ok((None, Vec::new()));
        };
        let pc = PruneConfig {
            target_removals: deepest,
            parallel_candidates: cfg.prune.parallel_candidates,
            finetune_between_steps: cfg.prune.finetune_between_steps,
            ..PruneConfig::default()
        };
        let mut snapshots = Vec::new();
        let (_, trace): (_, PruneTrace) = if pc.finetune_between_steps {
            let mut hook = |m: TransformerModel<f32>| {
                let (tuned, _) = finetune(&m, &split.train, &cfg.finetune)?;
                snapshots.push(tuned.clone());
                Ok(tuned)
            };
            greedy_prune_with(&baseline, &pc, &dev, &mut hook)?
        } else {
            greedy_prune(&baseline, &pc, &dev)?
        };
        art.json("prune_trace.json", &trace)?;
        art.text("importance_profile.md", &importance_profile_report(&trace)?)?;
        let mut out = Vec::new();
        for &k in &cfg.prune.targets {
            let untuned = if pc.finetune_between_steps {
                snapshots[k - 1].clone()
            } else {
                trace.replay(&baseline, k)?
            };
            let layers = untuned.n_layers();
            let (tuned, log) = finetune(&untuned, &split.train, &cfg.finetune)?;
            art.model(&format!("pruned_{layers}.model"), &tuned)?;
            art.text(&format!("pruned_{layers}_train_log.csv"), &log.to_csv())?;
            training.push(summary(&format!("pruned {layers}"), &log));
            out.push(Pruned { layers, tuned, untuned });
        }
        Ok((Some(trace), out))
    })?;

    let (kd_summary, kd_models) = stage("distill", || {
        if !cfg.kd.enabled || pruned.is_empty() {
            return Ok((None, Vec::new()));
        }
        let kd_cfg = cfg.kd.config(decode.max_new_tokens);
        let pool = if split.held_out.is_empty() { &split.train } else { &split.held_out };
        let src: Vec<String> = pool.iter().take(cfg.kd.max_sources).map(|p| p.source.clone()).collect();
        let file_teacher;
        let (generated, gen_stats) = match cfg.kd.teacher() {
            TeacherSpec::Oracle => generate_kd_data(&language, &src, &kd_cfg)?,
            TeacherSpec::Baseline => {
                let t = ModelTranslator::new(&baseline, &encoder, decode);
                generate_kd_data(&t, &src, &kd_cfg)?
            }
            TeacherSpec::Path(p) => {
                file_teacher = load_model::<f32>(&p)?;
                let t = ModelTranslator::new(&file_teacher, &encoder, decode);
                generate_kd_data(&t, &src, &kd_cfg)?
            }
        };
        let (kept, filter_stats) = filter_kd_data(&generated, &split.train, &scorer, &kd_cfg)?;
        art.jsonl("kd_generated.jsonl", &generated)?;
        art.jsonl("kd_kept.jsonl", &kept)?;
        let mixed = mix_training_data(&split.train, &kept, cfg.kd.seed)?;
        let mut models = Vec::new();
        for p in &pruned {
            let (tuned, log) = finetune(&p.untuned, &mixed, &cfg.finetune)?;
            art.model(&format!("pruned_{}_kd.model", p.layers), &tuned)?;
            art.text(&format!("pruned_{}_kd_train_log.csv", p.layers), &log.to_csv())?;
            training.push(summary(&format!("pruned {} + KD", p.layers), &log));
            models.push((p.layers, mixed.len(), tuned));
        }
        let summary = KdSummary {
            teacher: cfg.kd.teacher.clone(),
            generation: gen_stats,
            filter: filter_stats,
        };
        art.json("kd_stats.json", &summary)?;
        Ok((Some(summary), models))
    })?;

    let mut named: Vec<(String, &TransformerModel<f32>)> = vec![("baseline".to_string(), &baseline)];
    named.extend(pruned.iter().map(|p| (format!("pruned {}", p.layers), &p.tuned)));

    let metrics = stage("evaluate", || {
        named
            .iter()
            .map(|(_, m)| score(&ModelTranslator::new(*m, &encoder, decode), &split.test, &scorer))
            .collect::<Result<Vec<_>>>()
    })?;

    let table2 = stage("evaluate", || {
        let mut rows = Vec::new();
        for (i, (layers, n, m)) in kd_models.iter().enumerate() {
            let base = &metrics[1 + i];
            rows.push(KdRow {
                layers: *layers,
                kd: false,
                train_pairs: split.train.len(),
                chrf_pp: base.chrf_pp,
                bleu: base.bleu,
                semantic: base.semantic.unwrap_or(0.0),
            });
            let r = score(&ModelTranslator::new(m, &encoder, decode), &split.test, &scorer)?;
            rows.push(KdRow {
                layers: *layers,
                kd: true,
                train_pairs: *n,
                chrf_pp: r.chrf_pp,
                bleu: r.bleu,
                semantic: r.semantic.unwrap_or(0.0),
            });
        }
        Ok(rows)
    })?;

    let quantized = stage("quantize", || {
        if !cfg.quant.enabled {
            return Ok(Vec::new());
        }
        let qc = cfg.quant.config();
        let mut out = Vec::new();
        for (label, m) in &named {
            let q = quantize_model(*m, &qc)?;
            art.quantized(&format!("{}.qmodel", label.replace(' ', "_")), &q)?;
            out.push(q);
        }
        Ok(out)
    })?;

    let bench_prompts: Vec<Vec<u32>> = split
        .test
        .iter()
        .take(cfg.bench.prompts)
        .map(|p| encoder.prompt(&p.source))
        .collect();
    let reps = cfg.bench.repetitions;
    let benchmarks: Vec<BenchmarkResult> = stage("benchmark", || {
        if bench_prompts.is_empty() {
            return Err(Error::Config("bench.prompts must be at least 1".into()));
        }
        let mut targets: Vec<BenchTarget> = named
            .iter()
            .map(|(label, m)| BenchTarget::new(label, *m, &bench_prompts, &decode, m.memory_report().total))
            .collect();
        for ((label, _), q) in named.iter().zip(&quantized) {
            let name = format!("{label} 4-bit");
            targets.push(BenchTarget::new(&name, q, &bench_prompts, &decode, q.memory_report().total));
        }
        let out = benchmark_interleaved(&targets, reps)?;
        art.json("benchmarks.json", &out)?;
        Ok(out)
    })?;

    let table1: Vec<ModelRow> = named
        .iter()
        .zip(&metrics)
        .zip(&benchmarks)
        .map(|(((label, m), r), b)| ModelRow {
            label: label.clone(),
            layers: m.n_layers(),
            params: m.param_count().total,
            chrf_pp: r.chrf_pp,
            bleu: r.bleu,
            semantic: r.semantic.unwrap_or(0.0),
            median_seconds: b.median_seconds,
            throughput: b.throughput,
        })
        .collect();

    let table3 = stage("quantize", || {
        let dev_prompts: Vec<Vec<u32>> = dev_pairs.iter().map(|p| encoder.prompt(&p.source)).collect();
        let mut rows = Vec::new();
        for (i, q) in quantized.iter().enumerate() {
            let (label, m) = &named[i];
            let full = &benchmarks[i];
            let qb = &benchmarks[named.len() + i];
            let qr = score(&ModelTranslator::new(q, &encoder, decode), &split.test, &scorer)?;
            rows.push(QuantRow {
                label: label.clone(),
                layers: m.n_layers(),
                quantized: false,
                memory_bytes: full.payload_bytes,
                chrf_pp: metrics[i].chrf_pp,
                token_agreement: 1.0,
                median_seconds: full.median_seconds,
                throughput: full.throughput,
            });
            rows.push(QuantRow {
                label: label.clone(),
                layers: m.n_layers(),
                quantized: true,
                memory_bytes: qb.payload_bytes,
                chrf_pp: qr.chrf_pp,
                token_agreement: token_agreement(*m, q, &dev_prompts, &decode)?,
                median_seconds: qb.median_seconds,
                throughput: qb.throughput,
            });
        }
        Ok(rows)
    })?;

    stage("report", || {
        let report = ExperimentReport {
            config: cfg.clone(),
            filter: filter_stats,
            split: SplitSizes {
                train: split.train.len(),
                test: split.test.len(),
                dev: dev_pairs.len(),
                held_out: split.held_out.len(),
            },
            training,
            prune_trace: trace,
            kd: kd_summary,
            table1,
            table2,
            table3,
        };
        write_report(art, &report)?;
        Ok(report)
    })
}

/// Writes `results.json`, `report.md` and one Markdown and CSV file per table.
pub fn write_report(art: &mut Artifacts, report: &ExperimentReport) -> Result<()> {
    art.json("results.json", report)?;
    let (md, tables) = render_report(report)?;
    art.text("report.md", &md)?;
    for (name, t) in tables {
        art.text(&format!("{name}.md"), &t.markdown)?;
        art.text(&format!("{name}.csv"), &t.csv)?;
    }
    Ok(())
}

/// Re-renders the report files of a finished run from its `results.json`.
pub fn rerender(dir: &Path) -> Result<String> {
    let p = dir.join("results.json");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let report: ExperimentReport = serde_json::from_str(&text)?;
    let (md, _) = render_report(&report)?;
    Ok(md)
}
