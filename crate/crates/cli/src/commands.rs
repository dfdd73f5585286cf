use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redtide::config::{RunConfig, SplitChoice};
use redtide::data::dataset::Dataset;
use redtide::data::hsi::{load_hsi_benchmark, HsiName};
use redtide::data::labels::LabelSet;
use redtide::data::patch::{extract_patch, Patch, PATCH_HALF};
use redtide::data::raster::{normalize, Raster};
use redtide::data::synth::generate_benchmark;
use redtide::evaluation::{export_features as layer8_features, features_to_columns, hsi_accuracy, roc_variation_curve, FeatureGroup};
use redtide::inference::{sliding_window_infer, tiling_plan, ScoreMap};
use redtide::training::{
    evaluate_hsi, generate_negatives, load_checkpoint, run, train_detection, train_hsi, HsiData, RunOptions,
    RunOutcome, TrainMode, TrainState, TrainingData,
};
use redtide::{Error, Result};

pub const OUT_ENV: &str = "REDTIDE_OUT";

pub struct Context {
    pub out_flag: Option<PathBuf>,
    pub workers: usize,
}

impl Context {
    /// Output directory: flag, then config, then `$REDTIDE_OUT/<command>`,
    /// then `redtide-out/<command>`. Relative paths go under `$REDTIDE_OUT`.
    fn out_dir(&self, cfg: &RunConfig, command: &str) -> Result<PathBuf> {
        let root = std::env::var_os(OUT_ENV).map(PathBuf::from);
        let chosen = self.out_flag.clone().or_else(|| cfg.output.clone());
        let dir = match (chosen, root) {
            (Some(p), Some(root)) if p.is_relative() => root.join(p),
            (Some(p), _) => p,
            (None, Some(root)) => root.join(command),
            (None, None) => PathBuf::from("redtide-out").join(command),
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} given (use {flag} or set it in the config)")))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn synth(cfg: &RunConfig, ctx: &Context) -> Result<()> {
    let out = ctx.out_dir(cfg, "synth")?;
    let ds = generate_benchmark(&cfg.synth.benchmark, cfg.synth.seed)?;
    ds.write(&out, cfg.synth.format)?;
    log::info!(
        "wrote {} rasters ({} train positives, {} test positives) to {}",
        ds.rasters.len(),
        ds.train.positive_count(),
        ds.test.positive_count(),
        out.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, ctx: &Context, resume: Option<&Path>, max_iterations: Option<usize>) -> Result<()> {
    let out = ctx.out_dir(cfg, "train")?;
    write_file(&out.join("config.toml"), cfg.to_toml())?;
    if cfg.train.mode == TrainMode::Hsi {
        if resume.is_some() {
            return Err(Error::Config("--resume is not supported for HSI runs".into()));
        }
        return train_hsi_splits(cfg, &out, max_iterations);
    }
    let ds = Dataset::load(required(&cfg.data, "dataset directory", "--data")?)?;
    let data = TrainingData::from_dataset(&ds)?;
    let opts = RunOptions {
        out_dir: Some(out.clone()),
        max_iterations,
    };
    let (state, outcome) = match resume {
        Some(path) => {
            let mut state = load_checkpoint(path)?;
            if state.config.mode == TrainMode::Hsi {
                return Err(Error::Config(format!("{} is an HSI checkpoint", path.display())));
            }
            if state.config != cfg.train {
                log::warn!("resuming with the configuration stored in {}", path.display());
            }
            let outcome = run(&mut state, &data, &opts)?;
            (state, outcome)
        }
        None => train_detection(&data, &cfg.train, &opts)?,
    };
    report(&state, outcome, &out);
    Ok(())
}

fn report(state: &TrainState, outcome: RunOutcome, out: &Path) {
    match outcome {
        RunOutcome::Finished => log::info!(
            "training finished after {} logged iterations; outputs in {}",
            state.telemetry.len(),
            out.display()
        ),
        RunOutcome::Interrupted => log::info!(
            "stopped in {} at iteration {}; resume from {}",
            state.stage.name(),
            state.iteration,
            out.join("interrupted.ckpt").display()
        ),
    }
}

fn train_hsi_splits(cfg: &RunConfig, out: &Path, max_iterations: Option<usize>) -> Result<()> {
    let name: HsiName = cfg.hsi.name.parse()?;
    let dir = cfg.hsi.dir.as_ref().or(cfg.data.as_ref());
    let dir = required(&dir.cloned(), "HSI data directory", "--data or hsi.dir")?.to_path_buf();
    if cfg.hsi.splits == 0 {
        return Err(Error::Config("hsi.splits must be at least 1".into()));
    }
    let (raster, labels) = load_hsi_benchmark(name, &dir)?;
    let mut runs = Vec::new();
    for k in 0..cfg.hsi.splits {
        let seed = cfg.train.seed + k as u64;
        let data = HsiData::new(&raster, &labels, cfg.train.hsi_per_class, seed)?;
        for w in &data.warnings {
            log::warn!("{w}");
        }
        let split_dir = out.join(format!("split-{k}"));
        let opts = RunOptions {
            out_dir: Some(split_dir.clone()),
            max_iterations,
        };
        let mut train = cfg.train.clone();
        train.seed = seed;
        let (state, outcome) = train_hsi(&data, &train, &opts)?;
        report(&state, outcome, &split_dir);
        if outcome == RunOutcome::Interrupted {
            return Ok(());
        }
        let r = evaluate_hsi(&state, &data)?;
        log::info!("split {k}: overall accuracy {:.2}%", 100.0 * r.overall_accuracy);
        runs.push((r.predictions, r.labels));
    }
    let acc = hsi_accuracy(&runs)?;
    log::info!("{}: mean overall accuracy {:.2} ± {:.2}", name.id(), acc.mean, acc.std);
    write_file(&out.join("accuracy.json"), to_json(&acc))
}

/// Raster ids of a split, in sorted order.
fn split_ids(ds: &Dataset, split: SplitChoice) -> Vec<String> {
    let ids_of = |l: &LabelSet| -> BTreeSet<String> {
        l.positives.keys().chain(&l.negative_raster_ids).cloned().collect()
    };
    let ids = match split {
        SplitChoice::Train => ids_of(&ds.train),
        SplitChoice::Test => ids_of(&ds.test),
        SplitChoice::All => ds.rasters.keys().cloned().collect(),
    };
    ids.into_iter().collect()
}

fn checkpoint_state(path: &Option<PathBuf>, key: &str) -> Result<TrainState> {
    let path = required(path, "checkpoint", &format!("--checkpoint or {key}"))?;
    let state = load_checkpoint(path)?;
    if state.detector_spec.output_units != 1 {
        return Err(Error::Config(format!("{} is not a binary detector checkpoint", path.display())));
    }
    Ok(state)
}

pub fn infer(cfg: &RunConfig, ctx: &Context) -> Result<()> {
    let state = checkpoint_state(&cfg.infer.checkpoint, "infer.checkpoint")?;
    let ds = Dataset::load(required(&cfg.data, "dataset directory", "--data")?)?;
    let out = ctx.out_dir(cfg, "infer")?;
    let scores_dir = out.join("scores");
    std::fs::create_dir_all(&scores_dir).map_err(|e| Error::io(&scores_dir, e))?;
    let ids = split_ids(&ds, cfg.infer.split);
    let window = (cfg.infer.window, cfg.infer.window);

    let mut plan_text = String::from("# raster height width window_h window_w stride_h stride_w windows\n");
    for id in &ids {
        let r = &ds.rasters[id];
        let p = tiling_plan(r.height, r.width, window)?;
        writeln!(
            plan_text,
            "{id} {} {} {} {} {} {} {}",
            r.height,
            r.width,
            p.window.0,
            p.window.1,
            p.stride.0,
            p.stride.1,
            p.window_count()
        )
        .expect("string write");
    }
    write_file(&out.join("plan.txt"), &plan_text)?;

    // Rasters are independent, so splitting them across workers cannot
    // change any score.
    let score_one = |id: &String| -> Result<()> {
        let raster = normalize(&ds.rasters[id], &state.stats)?;
        let map = sliding_window_infer(&raster, &state.detector_spec, &state.detector, window)?;
        map.save(&scores_dir.join(format!("{id}.rtr")))
    };
    let per_worker = ids.len().div_ceil(ctx.workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = ids
            .chunks(per_worker)
            .map(|chunk| s.spawn(move || chunk.iter().try_for_each(score_one)))
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("inference worker panicked"))
    })?;
    log::info!("scored {} rasters into {}", ids.len(), scores_dir.display());
    Ok(())
}

pub fn eval(cfg: &RunConfig, ctx: &Context) -> Result<()> {
    let ds = Dataset::load(required(&cfg.data, "dataset directory", "--data")?)?;
    let labels = match cfg.infer.split {
        SplitChoice::Train => &ds.train,
        SplitChoice::Test => &ds.test,
        SplitChoice::All => return Err(Error::Config("evaluation needs the train or test split".into())),
    };
    let out = ctx.out_dir(cfg, "eval")?;
    let scores_dir = cfg.eval.scores.clone().unwrap_or_else(|| out.join("scores"));
    let mut maps = Vec::new();
    for id in split_ids(&ds, cfg.infer.split) {
        maps.push(ScoreMap::load(&id, &scores_dir.join(format!("{id}.rtr")))?);
    }
    let curve = roc_variation_curve(&maps, labels)?;
    let negatives: usize = labels
        .negative_raster_ids
        .iter()
        .filter_map(|id| maps.iter().find(|m| &m.id == id))
        .map(|m| m.evaluable_count())
        .sum();
    let summary = curve.summary(labels.positive_count(), negatives, maps.len());
    curve.write(&out.join("curve.txt"))?;
    write_file(&out.join("summary.json"), to_json(&summary))?;
    log::info!("AUC {:.4} over {} rasters", summary.auc, summary.rasters);
    for (dr, ndpi) in &summary.ndpi_at {
        match ndpi {
            Some(v) => log::info!("ndpi@dr={dr}: {v:.2}"),
            None => log::info!("ndpi@dr={dr}: not reached"),
        }
    }
    Ok(())
}

/// `n` random evaluable centers of `rasters` that are not labeled positive.
fn random_negatives(rasters: &[Raster], labels: &LabelSet, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Patch>> {
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 100 * n + 1000 {
            return Err(Error::Unsatisfiable("too few evaluable negative pixels".into()));
        }
        let r = &rasters[rng.random_range(0..rasters.len())];
        let row = rng.random_range(PATCH_HALF..r.height - PATCH_HALF);
        let col = rng.random_range(PATCH_HALF..r.width - PATCH_HALF);
        let labeled = labels.positives.get(&r.id).is_some_and(|v| v.contains(&(row, col)));
        if r.is_evaluable(row, col) && !labeled {
            out.push(extract_patch(r, row, col)?);
        }
    }
    Ok(out)
}

pub fn export_features(cfg: &RunConfig, ctx: &Context) -> Result<()> {
    let state = checkpoint_state(&cfg.features.checkpoint, "features.checkpoint")?;
    let ds = Dataset::load(required(&cfg.data, "dataset directory", "--data")?)?;
    let labels = match cfg.features.split {
        SplitChoice::Train => &ds.train,
        SplitChoice::Test => &ds.test,
        SplitChoice::All => return Err(Error::Config("feature export needs the train or test split".into())),
    };
    let n = cfg.features.per_group;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let rasters: Vec<Raster> = split_ids(&ds, cfg.features.split)
        .iter()
        .map(|id| normalize(&ds.rasters[id], &state.stats))
        .collect::<Result<_>>()?;

    let mut positives = Vec::new();
    for r in &rasters {
        for (row, col) in labels.usable_positives(&r.id, r) {
            positives.push(extract_patch(r, row, col)?);
        }
    }
    if positives.is_empty() {
        return Err(Error::UndefinedMetric("no labeled positives to export".into()));
    }
    positives.shuffle(&mut rng);
    positives.truncate(n);

    let negative_rasters: Vec<Raster> = rasters
        .iter()
        .filter(|r| labels.negative_raster_ids.contains(&r.id))
        .cloned()
        .collect();
    let pool = if negative_rasters.is_empty() { rasters.clone() } else { negative_rasters };
    let real = random_negatives(&pool, labels, n, &mut rng)?;
    let sources = random_negatives(&pool, labels, n, &mut rng)?;
    let generated = generate_negatives(&state.generator_spec, &state.generator, &sources)?;

    let tagged: Vec<(Patch, FeatureGroup)> = positives
        .into_iter()
        .map(|p| (p, FeatureGroup::Positive))
        .chain(real.into_iter().map(|p| (p, FeatureGroup::RealNegative)))
        .chain(generated.into_iter().map(|p| (p, FeatureGroup::GeneratedNegative)))
        .collect();
    let rows = layer8_features(&state.detector_spec, &state.detector, &tagged)?;
    let out = ctx.out_dir(cfg, "features")?;
    let path = out.join("features.txt");
    write_file(&path, features_to_columns(&rows))?;
    log::info!("wrote {} feature rows to {}", rows.len(), path.display());
    Ok(())
}
