use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use form_core::data::{label_counts, load_corpus, make_folds_n, read_fold_file, write_fold_file, ConversationThread};
use form_core::synthetic::{self, SyntheticSpec};
use form_core::training::checkpoint;
use form_core::training::{
    cross_validate, evaluate, per_fold_csv, run_ablations, summary_csv, sweep_csv, sweep_top_k, CvReport,
};
use form_core::{Adapter, AdapterKind, EncodedCorpus, FeatureCache, FoldSplit, FormModel, RumorLabel, TrainConfig};
use serde_json::{json, Value};

use crate::args::SynthArgs;
use crate::config::RunConfig;

pub const FOLDS_FILE: &str = "folds.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn load_threads(cfg: &RunConfig) -> Result<Vec<ConversationThread>> {
    Ok(load_corpus(&cfg.data_root, cfg.dataset.name())?)
}

fn build_adapter(cfg: &RunConfig) -> Result<Adapter> {
    Ok(match cfg.adapter {
        AdapterKind::Toy => Adapter::toy(cfg.toy_text_dim, cfg.toy_image_dim),
        AdapterKind::Pretrained => Adapter::pretrained(cfg.adapter_dir.as_deref().expect("validated"))?,
    })
}

struct Encoded {
    threads: Vec<ConversationThread>,
    corpus: EncodedCorpus,
    adapter: Adapter,
    cache_hits: usize,
}

fn encode_corpus(cfg: &RunConfig) -> Result<Encoded> {
    let threads = load_threads(cfg)?;
    let adapter = build_adapter(cfg)?;
    let policy = cfg.policy()?;
    let cache = FeatureCache::new(&cfg.cache_dir)?;
    let mut encoded = Vec::with_capacity(threads.len());
    let mut cache_hits = 0;
    for thread in &threads {
        match cache.get(thread.id(), adapter.id(), &policy)? {
            Some(e) => {
                cache_hits += 1;
                encoded.push(e);
            }
            None => {
                let e = adapter.encode_conversation(thread, &policy)?;
                cache.put(&e, adapter.id(), &policy)?;
                encoded.push(e);
            }
        }
    }
    log::info!("encoded {} threads ({cache_hits} from cache)", threads.len());
    Ok(Encoded {
        threads,
        corpus: EncodedCorpus::new(encoded),
        adapter,
        cache_hits,
    })
}

fn folds_for(cfg: &RunConfig, threads: &[ConversationThread]) -> Result<Vec<FoldSplit>> {
    match &cfg.fold_file {
        Some(path) => Ok(read_fold_file(path)?.1),
        None => Ok(make_folds_n(threads, cfg.folds, cfg.seed)?),
    }
}

fn train_config(cfg: &RunConfig, adapter: &Adapter) -> TrainConfig {
    cfg.train_config(adapter.text_dim(), adapter.image_dim())
}

fn report_summary(report: &CvReport) -> Value {
    let f1: serde_json::Map<String, Value> = RumorLabel::ALL
        .into_iter()
        .map(|l| (l.as_str().to_string(), json!(report.mean_f1[&l])))
        .collect();
    json!({
        "mean_accuracy": report.mean_accuracy,
        "pooled_accuracy": report.pooled.accuracy,
        "mean_f1": f1,
    })
}

fn checkpoint_path(dir: &Path, fold: usize) -> PathBuf {
    dir.join(format!("fold{fold}.ckpt"))
}

pub fn prepare(cfg: &RunConfig) -> Result<Value> {
    let threads = load_threads(cfg)?;
    let folds = folds_for(cfg, &threads)?;
    let path = cfg.out.join(FOLDS_FILE);
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write_fold_file(&path, cfg.seed, &folds)?;
    let counts = label_counts(&threads);
    let per_label: serde_json::Map<String, Value> = RumorLabel::ALL
        .into_iter()
        .map(|l| (l.as_str().to_string(), json!(counts[l.index()])))
        .collect();
    Ok(json!({
        "threads": threads.len(),
        "per_label": per_label,
        "responses": threads.iter().map(|t| t.responses.len()).sum::<usize>(),
        "folds": folds.iter().map(|f| f.test_ids.len()).collect::<Vec<_>>(),
        "fold_file": path,
    }))
}

pub fn encode(cfg: &RunConfig) -> Result<Value> {
    let e = encode_corpus(cfg)?;
    Ok(json!({
        "threads": e.corpus.len(),
        "cache_hits": e.cache_hits,
        "adapter": e.adapter.id(),
        "cache_dir": cfg.cache_dir,
    }))
}

pub fn train(cfg: &RunConfig) -> Result<Value> {
    let e = encode_corpus(cfg)?;
    let folds = folds_for(cfg, &e.threads)?;
    let config = train_config(cfg, &e.adapter);
    let run = cross_validate(&e.corpus, &folds, &config)?;
    let dir = cfg.out.join(CHECKPOINT_DIR);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for (fold, model) in folds.iter().zip(&run.models) {
        checkpoint::save(&checkpoint_path(&dir, fold.fold_index), model)?;
    }
    write_json(&cfg.out.join("report.json"), &run.report)?;
    write(
        &cfg.out.join("per_fold.csv"),
        per_fold_csv(cfg.ablation.as_str(), &run.report),
    )?;
    let mut out = report_summary(&run.report);
    out["best_epochs"] = json!(run.report.best_epochs);
    out["checkpoints"] = json!(dir);
    Ok(out)
}

pub fn evaluate_checkpoints(cfg: &RunConfig, checkpoint_dir: Option<&Path>) -> Result<Value> {
    let e = encode_corpus(cfg)?;
    let folds = folds_for(cfg, &e.threads)?;
    let config = train_config(cfg, &e.adapter);
    let dir = checkpoint_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out.join(CHECKPOINT_DIR));
    let mut reports = Vec::with_capacity(folds.len());
    for fold in &folds {
        let model = checkpoint::load_for(&checkpoint_path(&dir, fold.fold_index), &config.model)?;
        let test = e.corpus.indices_of(&fold.test_ids)?;
        reports.push(evaluate(&model, &e.corpus, &test, Some(fold.fold_index)));
    }
    let report = CvReport::from_folds(reports, Vec::new());
    write_json(&cfg.out.join("evaluation.json"), &report)?;
    write(
        &cfg.out.join("evaluation.csv"),
        per_fold_csv(cfg.ablation.as_str(), &report),
    )?;
    Ok(report_summary(&report))
}

pub fn ablate(cfg: &RunConfig) -> Result<Value> {
    let e = encode_corpus(cfg)?;
    let folds = folds_for(cfg, &e.threads)?;
    let rows = run_ablations(&e.corpus, &folds, &train_config(cfg, &e.adapter))?;
    write(
        &cfg.out.join("ablation.csv"),
        summary_csv(rows.iter().map(|(a, r)| (a.as_str(), r))),
    )?;
    let mut per_variant = serde_json::Map::new();
    for (ablation, report) in &rows {
        write(
            &cfg.out.join(format!("ablation_{}.csv", ablation.as_str())),
            per_fold_csv(ablation.as_str(), report),
        )?;
        per_variant.insert(ablation.as_str().to_string(), report_summary(report));
    }
    write_json(&cfg.out.join("ablation.json"), &rows)?;
    Ok(Value::Object(per_variant))
}

pub fn sweep(cfg: &RunConfig, k_values: &[usize]) -> Result<Value> {
    let e = encode_corpus(cfg)?;
    let folds = folds_for(cfg, &e.threads)?;
    let rows = sweep_top_k(&e.corpus, &folds, &train_config(cfg, &e.adapter), k_values)?;
    let path = cfg.out.join("sweep_k.csv");
    write(&path, sweep_csv(&rows))?;
    write_json(&cfg.out.join("sweep_k.json"), &rows)?;
    let ks: Vec<Value> = rows
        .iter()
        .map(|(k, r)| {
            let mut v = report_summary(r);
            v["k"] = json!(k);
            v
        })
        .collect();
    Ok(json!({ "rows": ks, "csv": path }))
}

fn explain_thread(model: &FormModel, thread: &ConversationThread, corpus: &EncodedCorpus, i: usize) -> Value {
    let p = model.predict(corpus.input(i));
    let selected: Vec<Value> = p
        .selected
        .iter()
        .map(|&slot| {
            let r = &thread.responses[slot];
            json!({ "index": slot, "id": r.id, "text": r.text, "score": p.alpha[slot] })
        })
        .collect();
    let per_node: Vec<Value> = p
        .per_node_probs
        .iter()
        .zip(&p.node_significance)
        .zip(&p.selected)
        .map(|((probs, sig), &slot)| json!({ "index": slot, "probs": probs, "significance": sig }))
        .collect();
    json!({
        "thread_id": thread.id(),
        "label": thread.label.as_str(),
        "predicted": p.label().as_str(),
        "probs": p.probs,
        "alpha": p.alpha,
        "selected": selected,
        "per_node": per_node,
    })
}

/// Returns one JSON object per thread, also written as JSON lines.
pub fn explain(cfg: &RunConfig, checkpoint_path: &Path, only: &[String]) -> Result<Vec<Value>> {
    let e = encode_corpus(cfg)?;
    let model = checkpoint::load_for(checkpoint_path, &train_config(cfg, &e.adapter).model)?;
    let indices = if only.is_empty() {
        e.corpus.all_indices()
    } else {
        e.corpus.indices_of(only)?
    };
    let lines: Vec<Value> = indices
        .iter()
        .map(|&i| explain_thread(&model, &e.threads[i], &e.corpus, i))
        .collect();
    let mut text = String::new();
    for line in &lines {
        text.push_str(&serde_json::to_string(line)?);
        text.push('\n');
    }
    write(&cfg.out.join("explain.jsonl"), text)?;
    Ok(lines)
}

pub fn synth(cfg: &RunConfig, args: &SynthArgs) -> Result<Value> {
    let spec = SyntheticSpec {
        n_threads: args.threads,
        responses_per_thread: args.responses,
        n_signal_responses: args.signal_responses,
        signal_strength: args.signal_strength,
        vocab_size: args.vocab,
        tokens_per_response: args.tokens,
        seed: cfg.seed,
        ..SyntheticSpec::default()
    };
    let corpus = synthetic::generate(&spec)?;
    let dir = cfg.dataset.thread_dir(&cfg.data_root);
    synthetic::write_corpus(&dir, &spec, &corpus)?;
    write_json(&cfg.out.join("synth_spec.json"), &spec)?;
    Ok(json!({
        "threads": corpus.threads.len(),
        "dir": dir,
        "seed": spec.seed,
    }))
}
