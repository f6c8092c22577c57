use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use auxnet::analysis::{
    export_filters, filters_csv, roc_csv, roc_curve, sparsity_csv, sparsity_histogram_csv, sparsity_report, Metrics,
};
use auxnet::data::{
    build_datasets, build_datasets_with_stats, read_events, read_store, synth_generate, write_events, write_store,
    DatasetCounts, DatasetSplits, EventList, Ranges, WindowedDataset,
};
use auxnet::kvconfig::KvConfig;
use auxnet::models::predict;
use auxnet::sparsity::GroupView;
use auxnet::training::{evaluate, grid_search, train as train_model, TrainHistory};
use auxnet::{ArchitectureSpec, ChannelStore64, Checkpoint, Error, ModelParams64};

use crate::config::Resolver;
use crate::rundir::{self, write};
use crate::{Common, Failure};

type CmdResult = std::result::Result<(), Failure>;

const DEFAULT_TOP_K: usize = 9;

fn resolver(c: &Common, extra: &[(&str, String)]) -> std::result::Result<Resolver, Failure> {
    let mut src = match &c.config {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::default(),
    };
    for pair in &c.set {
        src.set_pair(pair)?;
    }
    if let Some(seed) = c.seed {
        src.set("seed", seed);
    }
    for (k, v) in extra {
        src.set(k, v);
    }
    Ok(Resolver::new(src)?)
}

fn json<T: serde::Serialize>(value: &T) -> std::result::Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::runtime(format!("serialising output: {e}")))
}

struct Inputs {
    store: ChannelStore64,
    events: EventList,
}

fn load_inputs(r: &mut Resolver) -> std::result::Result<Inputs, Failure> {
    let store = read_store::<f64>(&r.path("store")?)?;
    let events = read_events(&r.path("events")?)?;
    Ok(Inputs { store, events })
}

fn ranges_and_counts(r: &mut Resolver, store: &ChannelStore64) -> std::result::Result<(Ranges, DatasetCounts), Failure> {
    Ok((r.ranges(store.start(), store.end())?, r.counts()?))
}

fn write_history(dir: &Path, h: &TrainHistory) -> CmdResult {
    write(&dir.join("history.csv"), h.to_csv())?;
    write(&dir.join("history.json"), h.to_json())?;
    Ok(())
}

/// Saves the checkpoint and returns the parameters as read back from disk, so
/// that reported metrics match what `eval` will later compute.
fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> std::result::Result<ModelParams64, Failure> {
    let bytes = ckpt.to_bytes()?;
    write(path, &bytes)?;
    Ok(Checkpoint::from_bytes(&bytes)?.params)
}

fn probabilities(spec: &ArchitectureSpec, params: &ModelParams64, data: &WindowedDataset<f64>) -> Result<Vec<f64>, Error> {
    predict(spec, params, &data.windows)
}

fn write_roc(dir: &Path, spec: &ArchitectureSpec, params: &ModelParams64, data: &WindowedDataset<f64>) -> CmdResult {
    let probs = probabilities(spec, params, data)?;
    let roc = roc_curve(&probs, &data.labels)?;
    write(&dir.join("roc.csv"), roc_csv(&roc))?;
    Ok(())
}

fn summary(name: &str, m: &Metrics) -> String {
    format!(
        "{name}: loss {:.4} accuracy {:.4} tpr {:.4} tnr {:.4} (n={})",
        m.loss,
        m.accuracy,
        m.tpr,
        m.tnr,
        m.total()
    )
}

pub fn gen_data(c: &Common) -> CmdResult {
    let mut r = resolver(c, &[])?;
    let seed = r.seed()?;
    let cfg = r.gen_config()?;
    let dir = rundir::create(&c.out, "gen-data", r.resolved())?;
    let (store, events, meta) = synth_generate::<f64>(&cfg, seed)?;
    write_store(&dir.join("store.auxc"), &store)?;
    write_events(&dir.join("events.txt"), &events)?;
    write(&dir.join("meta.json"), json(&meta)?)?;
    println!(
        "generated {} channels x {} samples, {} events; informative channels {:?}",
        store.n_channels(),
        store.n_samples(),
        events.times().len(),
        meta.informative
    );
    Ok(())
}

pub fn train(c: &Common) -> CmdResult {
    let mut r = resolver(c, &[])?;
    let seed = r.seed()?;
    let Inputs { store, events } = load_inputs(&mut r)?;
    let spec = r.spec(store.n_channels())?;
    let cfg = r.train_config(seed)?;
    let (ranges, counts) = ranges_and_counts(&mut r, &store)?;
    let dir = rundir::create(&c.out, "train", r.resolved())?;

    let data = build_datasets(&store, &events, &ranges, spec.input_len, &counts, seed)?;
    drop(store);
    let out = match train_model(&spec, &data.train, &data.val_in_training, &cfg) {
        Ok(o) => o,
        Err(Error::Diverged {
            iteration,
            reason,
            history,
        }) => {
            write_history(&dir, &history)?;
            return Err(Failure::runtime(format!(
                "training diverged at iteration {iteration}: {reason}; history written to {}",
                dir.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_history(&dir, &out.history)?;
    let ckpt = Checkpoint {
        spec: spec.clone(),
        params: out.params,
        norm_stats: Some(data.norm_stats.clone()),
        penalty: Some(out.penalty),
    };
    let params = save_checkpoint(&dir.join("checkpoint.bin"), &ckpt)?;

    let groups = GroupView::for_spec(&spec)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("val_ranking", evaluate(&spec, &params, &data.val_ranking)?);
    metrics.insert("test", evaluate(&spec, &params, &data.test)?);
    write(&dir.join("metrics.json"), json(&metrics)?)?;
    write_roc(&dir, &spec, &params, &data.test)?;

    println!(
        "stopped after {} iterations ({:?}); best iteration {}; nonzero groups {}/{}",
        out.history.iterations,
        out.history.stop_reason,
        out.history.best_iteration,
        auxnet::training::count_nonzero_groups(&params, &groups),
        groups.len()
    );
    for (k, m) in &metrics {
        println!("{}", summary(k, m));
    }
    Ok(())
}

pub fn grid(c: &Common, parallel: usize) -> CmdResult {
    if parallel == 0 {
        return Err(Failure::usage("--parallel must be at least 1"));
    }
    let mut r = resolver(c, &[])?;
    let seed = r.seed()?;
    let Inputs { store, events } = load_inputs(&mut r)?;
    let spec = r.spec(store.n_channels())?;
    let base = r.train_config(seed)?;
    let (ranges, counts) = ranges_and_counts(&mut r, &store)?;
    let grid = r.grid(&base, spec.input_len)?;
    let dir = rundir::create(&c.out, "grid", r.resolved())?;

    let datasets = |t: usize| build_datasets(&store, &events, &ranges, t, &counts, seed);
    let outcome = grid_search::<f64, _>(&spec, datasets, &grid, &base, parallel)?;

    let mut table =
        String::from("rank,index,input_len,init_lr,lambda,alpha,val_loss,val_acc,nonzero_groups,n_groups,nonzero_fraction,status\n");
    for (rank, &i) in outcome.ranking.iter().enumerate() {
        let res = &outcome.results[i];
        let s = res.setting;
        let run = res.run.as_ref().expect("ranked runs succeeded");
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{},{},{},{},ok",
            rank + 1,
            s.index,
            s.input_len,
            s.init_lr,
            s.lambda,
            s.alpha,
            run.ranking.loss,
            run.ranking.accuracy,
            run.nonzero_groups,
            run.n_groups,
            run.nonzero_groups as f64 / run.n_groups as f64
        );
    }
    let mut failed = 0;
    for res in &outcome.results {
        let s = res.setting;
        let sdir = dir.join(format!("setting-{:03}", s.index));
        std::fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        match &res.run {
            Ok(run) => {
                write_history(&sdir, run.history())?;
                let ckpt = Checkpoint {
                    spec: run.spec.clone(),
                    params: run.outcome.params.clone(),
                    norm_stats: None,
                    penalty: Some(run.outcome.penalty.clone()),
                };
                save_checkpoint(&sdir.join("checkpoint.bin"), &ckpt)?;
            }
            Err(msg) => {
                failed += 1;
                write(&sdir.join("error.txt"), format!("{msg}\n"))?;
                let _ = writeln!(
                    table,
                    ",{},{},{},{},{},,,,,,failed",
                    s.index, s.input_len, s.init_lr, s.lambda, s.alpha
                );
            }
        }
    }
    write(&dir.join("ranking.csv"), &table)?;

    let Some(best) = outcome.best() else {
        return Err(Failure::runtime(format!("all {} grid settings failed", outcome.results.len())));
    };
    let run = best.run.as_ref().expect("best run succeeded");
    let data = build_datasets(&store, &events, &ranges, run.spec.input_len, &counts, seed)?;
    let ckpt = Checkpoint {
        spec: run.spec.clone(),
        params: run.outcome.params.clone(),
        norm_stats: Some(data.norm_stats.clone()),
        penalty: Some(run.outcome.penalty.clone()),
    };
    let params = save_checkpoint(&dir.join("best_checkpoint.bin"), &ckpt)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("val_ranking", evaluate(&run.spec, &params, &data.val_ranking)?);
    metrics.insert("test", evaluate(&run.spec, &params, &data.test)?);
    write(&dir.join("best_metrics.json"), json(&metrics)?)?;

    println!(
        "{} settings, {} failed; best index {} (T={}, lr={}, lambda={}, alpha={}), nonzero groups {}/{}",
        outcome.results.len(),
        failed,
        best.setting.index,
        best.setting.input_len,
        best.setting.init_lr,
        best.setting.lambda,
        best.setting.alpha,
        run.nonzero_groups,
        run.n_groups
    );
    for (k, m) in &metrics {
        println!("{}", summary(k, m));
    }
    Ok(())
}

fn load_checkpoint(r: &mut Resolver) -> std::result::Result<Checkpoint, Failure> {
    Ok(Checkpoint::load(&r.path("checkpoint")?)?)
}

fn checkpoint_extra(flag: Option<PathBuf>) -> Vec<(&'static str, String)> {
    flag.map(|p| vec![("checkpoint", p.display().to_string())]).unwrap_or_default()
}

/// Datasets for a stored model, normalised with its own statistics when present.
fn datasets_for(
    r: &mut Resolver,
    ckpt: &Checkpoint,
    inputs: &Inputs,
    seed: u64,
) -> std::result::Result<DatasetSplits<f64>, Failure> {
    let spec = &ckpt.spec;
    if inputs.store.n_channels() != spec.n_channels {
        return Err(Failure::usage(format!(
            "checkpoint expects {} channels, store has {}",
            spec.n_channels,
            inputs.store.n_channels()
        )));
    }
    let (ranges, counts) = ranges_and_counts(r, &inputs.store)?;
    let t = spec.input_len;
    Ok(match &ckpt.norm_stats {
        Some(stats) => build_datasets_with_stats(&inputs.store, &inputs.events, &ranges, t, &counts, seed, stats.clone())?,
        None => build_datasets(&inputs.store, &inputs.events, &ranges, t, &counts, seed)?,
    })
}

/// Rejects configs that name an architecture different from the checkpoint's.
fn check_arch(r: &mut Resolver, ckpt: &Checkpoint) -> CmdResult {
    if !["model", "input_len", "hidden_maps"].iter().any(|k| r.has(k)) {
        return Ok(());
    }
    let spec = r.spec(ckpt.spec.n_channels)?;
    if spec.kind != ckpt.spec.kind || spec.input_len != ckpt.spec.input_len || spec.hidden_maps != ckpt.spec.hidden_maps
    {
        return Err(Failure::usage(format!(
            "config architecture {} (T={}) does not match checkpoint {} (T={})",
            spec.kind, spec.input_len, ckpt.spec.kind, ckpt.spec.input_len
        )));
    }
    Ok(())
}

pub fn eval(c: &Common, checkpoint: Option<PathBuf>) -> CmdResult {
    let mut r = resolver(c, &checkpoint_extra(checkpoint))?;
    let seed = r.seed()?;
    let ckpt = load_checkpoint(&mut r)?;
    check_arch(&mut r, &ckpt)?;
    let inputs = load_inputs(&mut r)?;
    let split = r.get("eval.split", "test".to_string())?;
    let data = datasets_for(&mut r, &ckpt, &inputs, seed)?;
    let set = match split.as_str() {
        "train" => &data.train,
        "val" | "val-ranking" => &data.val_ranking,
        "val-in-training" => &data.val_in_training,
        "test" => &data.test,
        other => return Err(Failure::usage(format!("eval.split: unknown split {other:?}"))),
    };
    let dir = rundir::create(&c.out, "eval", r.resolved())?;
    let m = evaluate(&ckpt.spec, &ckpt.params, set)?;
    let mut metrics = BTreeMap::new();
    metrics.insert(split.as_str(), m);
    write(&dir.join("metrics.json"), json(&metrics)?)?;
    write_roc(&dir, &ckpt.spec, &ckpt.params, set)?;
    println!("{}", summary(&split, &m));
    Ok(())
}

pub fn report(c: &Common, checkpoint: Option<PathBuf>, top_k: Option<usize>) -> CmdResult {
    let mut extra = checkpoint_extra(checkpoint);
    if let Some(k) = top_k {
        extra.push(("report.top_k", k.to_string()));
    }
    let mut r = resolver(c, &extra)?;
    let seed = r.seed()?;
    let ckpt = load_checkpoint(&mut r)?;
    let top_k = r.get("report.top_k", DEFAULT_TOP_K)?;
    let probe_default = if r.has("store") { "train" } else { "none" };
    let probe_kind = r.get("report.probe", probe_default.to_string())?;
    let (probe, sample_rate) = match probe_kind.as_str() {
        "none" => (None, 16.0),
        "train" => {
            let inputs = load_inputs(&mut r)?;
            let fs = inputs.store.sample_rate();
            let data = datasets_for(&mut r, &ckpt, &inputs, seed)?;
            (Some(data.train.windows), fs)
        }
        other => return Err(Failure::usage(format!("report.probe: expected train or none, got {other:?}"))),
    };
    let dir = rundir::create(&c.out, "report", r.resolved())?;

    let groups = GroupView::for_spec(&ckpt.spec)?;
    let rep = sparsity_report(&ckpt.spec, &ckpt.params, &groups, probe.as_ref())?;
    let traces = export_filters(&ckpt.params, &groups, top_k);
    write(&dir.join("sparsity.json"), json(&rep)?)?;
    write(&dir.join("sparsity.csv"), sparsity_csv(&rep, &groups))?;
    write(&dir.join("sparsity_histogram.csv"), sparsity_histogram_csv(&rep))?;
    write(&dir.join("filters.csv"), filters_csv(&traces, sample_rate))?;
    write(&dir.join("filters.json"), json(&traces)?)?;

    println!(
        "{} of {} groups nonzero ({:.2}%), {} channels in use, {} filters exported",
        rep.nonzero_groups,
        rep.n_groups,
        100.0 * rep.fraction_nonzero,
        rep.nonzero_channels.len(),
        traces.len()
    );
    if let Some(dead) = rep.dead_maps {
        println!("dead hidden maps on the probe set: {dead}");
    }
    Ok(())
}
