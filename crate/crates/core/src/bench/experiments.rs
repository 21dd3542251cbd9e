use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::heads_with_seed;
use super::report::*;
use super::workspace::{SplitFeatures, Workspace};
use crate::error::{Error, Result};
use crate::heads::{
    fit_forest_with, importance, Classifier, FeatureMatrix, FittedHead, ForestConfig, HeadKind, HeadsConfig,
};
use crate::nn::{model_accuracy, Tap};
use crate::parallel::Execution;
use crate::scope::{
    channel_purity, export_gallery, geometry_at, rank_channels, score_patches, suggest_tags, ChannelPurity,
    ChannelRanking, ChannelScore, ChannelTag, GalleryManifest, GallerySpec, LayerGeometry, MotifIndex, TagFile,
};
use crate::synth::MotifClass;

pub const TAGS_FILE: &str = "tags.json";
/// Tap name recorded in suggested tag files: channels index the reduced
/// model's pooled features.
pub const TAG_TAP: &str = "gap";

pub fn head_label(kind: HeadKind) -> &'static str {
    match kind {
        HeadKind::Logistic => "CNN + Logistic Regression",
        HeadKind::Svm => "CNN + SVM",
        HeadKind::Forest => "CNN + Random Forest",
    }
}

pub const CNN_LABEL: &str = "CNN end-to-end";

struct Measured {
    in_sample: f64,
    out_sample: f64,
    seconds: f64,
    head: FittedHead,
}

fn fit_and_score(kind: HeadKind, f: &SplitFeatures, cfg: &HeadsConfig, exec: Execution) -> Result<Measured> {
    let start = Instant::now();
    let head = FittedHead::fit(kind, &f.train, cfg, exec)?;
    let in_sample = head.accuracy(&f.train)?;
    let out_sample = head.accuracy(&f.test)?;
    Ok(Measured {
        in_sample,
        out_sample,
        seconds: start.elapsed().as_secs_f64(),
        head,
    })
}

fn cnn_row(ws: &Workspace) -> Result<(AccuracyRow, f64)> {
    let model = ws.model()?;
    let data = ws.datasets()?;
    let start = Instant::now();
    let in_sample = model_accuracy(model, &data.train, ws.exec())?;
    let out_sample = model_accuracy(model, &data.test, ws.exec())?;
    Ok((
        AccuracyRow {
            structure: CNN_LABEL.to_string(),
            dim: model.tap_point(Tap::FlatConv)?.dim(),
            in_sample,
            out_sample,
        },
        start.elapsed().as_secs_f64(),
    ))
}

/// End-to-end network against classical heads on the configured tap.
pub fn run_exp1(ws: &Workspace) -> Result<AccuracyReport> {
    let cfg = ws.config();
    let (cnn, cnn_seconds) = cnn_row(ws)?;
    let mut rows = vec![cnn];
    let mut seconds = vec![cnn_seconds];
    let features = ws.features(cfg.tap)?;
    let dir = ws.experiment_dir("exp1")?;
    fs::create_dir_all(dir.join("heads"))?;
    for &kind in &cfg.heads {
        let m = fit_and_score(kind, &features, &cfg.head_config, ws.exec())?;
        m.head.save(dir.join("heads").join(format!("{kind}.json")))?;
        rows.push(AccuracyRow {
            structure: head_label(kind).to_string(),
            dim: features.train.d(),
            in_sample: m.in_sample,
            out_sample: m.out_sample,
        });
        seconds.push(m.seconds);
    }
    let report = AccuracyReport {
        experiment: "exp1".into(),
        title: format!("Classifier comparison on `{}` features", cfg.tap),
        seed: cfg.seed,
        rows,
        reference: exp1_reference(),
        reduction: None,
        reference_speedup: None,
        notes: vec!["CNN seconds cover evaluation only".into()],
        timing: Timing { seconds, speedup: None },
    };
    write_report(&report, &report.to_text(), &dir)?;
    Ok(report)
}

/// Channel rankings at the assigned layer with motif purity and the tags
/// that purity suggests.
pub struct ChannelAnalysis {
    pub layer: usize,
    pub geometry: LayerGeometry,
    pub scores: Vec<Vec<ChannelScore>>,
    pub rankings: Vec<ChannelRanking>,
    pub index: MotifIndex,
    pub purity: Vec<ChannelPurity>,
    pub tags: Vec<ChannelTag>,
}

/// Scores every test patch, ranks the top `k` per channel and measures
/// motif purity against the scene inventories.
pub fn analyze_channels(ws: &Workspace, k: usize) -> Result<ChannelAnalysis> {
    let model = ws.model()?;
    let data = ws.datasets()?;
    let layer = model
        .assigned_layer()
        .ok_or_else(|| Error::InvalidArgument(format!("model `{}` has no assigned layer", model.name())))?;
    let geometry = geometry_at(model, layer)?;
    let channels = model.shapes()[layer][0];
    let patch = (data.test.patch_size, data.test.patch_size);
    let scores = score_patches(model, layer, &data.test, ws.exec())?;
    let rankings = rank_channels(&scores, channels, k, &geometry, patch, ws.exec())?;
    let index = MotifIndex::new(&data.test, ws.scenes()?)?;
    let purity = channel_purity(&rankings, &index)?;
    let tags = suggest_tags(&purity, &index.base_rates(), &ws.config().tag_rule);
    Ok(ChannelAnalysis {
        layer,
        geometry,
        scores,
        rankings,
        index,
        purity,
        tags,
    })
}

/// Tags suggested from motif purity, as a tag file.
pub fn suggested_tags(ws: &Workspace) -> Result<TagFile> {
    let a = analyze_channels(ws, ws.config().k)?;
    Ok(TagFile::new(ws.model()?.name(), TAG_TAP, &a.tags))
}

/// Writes the top-`k` gallery of the test split into `dir`.
pub fn export_channel_gallery(
    ws: &Workspace,
    analysis: &ChannelAnalysis,
    k: usize,
    dir: &Path,
) -> Result<GalleryManifest> {
    let model = ws.model()?;
    let spec = GallerySpec {
        model,
        layer: analysis.layer,
        geometry: analysis.geometry,
        tap: &format!("layer{}", analysis.layer),
        k,
        mode: ws.config().upsample,
        purity: Some(&analysis.purity),
    };
    export_gallery(&spec, &analysis.rankings, &ws.datasets()?.test, dir, ws.exec())
}

/// Top-`k` gallery under `<root>/gallery`.
pub fn run_viz(ws: &Workspace, k: usize) -> Result<GalleryManifest> {
    let analysis = analyze_channels(ws, k)?;
    export_channel_gallery(ws, &analysis, k, &ws.experiment_dir("gallery")?)
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Gallery, per-channel motif purity and suggested tags.
pub fn run_exp2(ws: &Workspace) -> Result<GalleryReport> {
    let start = Instant::now();
    let cfg = ws.config();
    let dir = ws.experiment_dir("exp2")?;
    let analysis = analyze_channels(ws, cfg.k)?;
    export_channel_gallery(ws, &analysis, cfg.k, &dir.join("gallery"))?;
    let model = ws.model()?;
    TagFile::new(model.name(), TAG_TAP, &analysis.tags).save(dir.join(TAGS_FILE))?;

    let best = |class: MotifClass| {
        let mut best = (0u32, f64::NEG_INFINITY);
        for p in &analysis.purity {
            if p.purity.get(class) > best.1 {
                best = (p.channel, p.purity.get(class));
            }
        }
        best
    };
    let (best_tumor_channel, best_tumor_purity) = best(MotifClass::TumorBlob);
    let (dot_channel, _) = best(MotifClass::LymphocyteDot);
    let idx = &analysis.index;
    let dot_scores = analysis
        .scores
        .iter()
        .enumerate()
        .map(|(p, s)| (p, s[dot_channel as usize].score as f64));
    let dot_score_mean = mean(
        dot_scores
            .clone()
            .filter(|&(p, _)| idx.contains(p, MotifClass::LymphocyteDot))
            .map(|(_, s)| s),
    );
    let background_score_mean = mean(
        dot_scores
            .filter(|&(p, _)| MotifClass::PLANTED.iter().all(|&c| !idx.contains(p, c)))
            .map(|(_, s)| s),
    );
    let report = GalleryReport {
        experiment: "exp2".into(),
        title: "Channel galleries and motif purity".into(),
        seed: cfg.seed,
        model_name: model.name().to_string(),
        layer: analysis.layer,
        k: cfg.k,
        ranked_patches: analysis.scores.len(),
        base_rates: idx.base_rates(),
        channels: analysis
            .purity
            .iter()
            .zip(&analysis.tags)
            .map(|(p, &t)| ChannelSummary {
                channel: p.channel,
                purity: p.purity,
                suggested: t,
            })
            .collect(),
        best_tumor_channel,
        best_tumor_purity,
        dot_channel,
        dot_score_mean,
        background_score_mean,
        timing: Timing {
            seconds: vec![start.elapsed().as_secs_f64()],
            speedup: None,
        },
    };
    write_report(&report, &report.to_text(), &dir)?;
    Ok(report)
}

/// Heads on full flattened conv features against globally average-pooled
/// ones.
pub fn run_exp3(ws: &Workspace) -> Result<AccuracyReport> {
    let cfg = ws.config();
    let full = ws.features(Tap::FlatConv)?;
    let reduced = ws.features(Tap::Gap)?;
    let (before, after) = (full.train.d(), reduced.train.d());
    let (cnn, cnn_seconds) = cnn_row(ws)?;
    let mut rows = vec![cnn];
    let mut seconds = vec![cnn_seconds];
    let (mut full_seconds, mut reduced_seconds) = (0.0, 0.0);
    let mut max_drop = f64::NEG_INFINITY;
    for &kind in &cfg.heads {
        let a = fit_and_score(kind, &full, &cfg.head_config, ws.exec())?;
        let b = fit_and_score(kind, &reduced, &cfg.head_config, ws.exec())?;
        max_drop = max_drop.max(a.out_sample - b.out_sample);
        full_seconds += a.seconds;
        reduced_seconds += b.seconds;
        for (m, d) in [(&a, before), (&b, after)] {
            rows.push(AccuracyRow {
                structure: format!("{} ({d})", head_label(kind)),
                dim: d,
                in_sample: m.in_sample,
                out_sample: m.out_sample,
            });
            seconds.push(m.seconds);
        }
    }
    let report = AccuracyReport {
        experiment: "exp3".into(),
        title: "Feature reduction by global average pooling".into(),
        seed: cfg.seed,
        rows,
        reference: exp3_reference(),
        reduction: Some(Reduction {
            dim_before: before,
            dim_after: after,
            ratio: before / after.max(1),
            max_out_sample_drop: max_drop,
        }),
        reference_speedup: Some(REFERENCE_SPEEDUP),
        notes: vec!["speedup covers head training and evaluation only".into()],
        timing: Timing {
            seconds,
            speedup: Some(full_seconds / reduced_seconds.max(f64::MIN_POSITIVE)),
        },
    };
    write_report(&report, &report.to_text(), ws.experiment_dir("exp3")?)?;
    Ok(report)
}

fn forest_accuracy(
    f: &SplitFeatures,
    columns: &[usize],
    cfg: &ForestConfig,
    exec: Execution,
) -> Result<(f64, f64, crate::heads::ForestModel)> {
    let train = f.train.select_columns(columns)?;
    let test = f.test.select_columns(columns)?;
    let forest = fit_forest_with(&train, cfg, exec)?;
    Ok((forest.accuracy(&train)?, forest.accuracy(&test)?, forest))
}

/// Column of each channel in a pooled feature matrix.
fn channel_columns(m: &FeatureMatrix) -> Vec<usize> {
    let mut cols = vec![usize::MAX; m.d()];
    for (j, &(ch, _)) in m.provenance().iter().enumerate() {
        if let Some(slot) = cols.get_mut(ch as usize) {
            *slot = j;
        }
    }
    cols
}

/// Random forests on three equal-size channel sets of the reduced
/// features: tagged cell channels, random unrecognizable channels and the
/// forest's own top-importance channels.
pub fn run_exp4(ws: &Workspace, tags: &TagFile) -> Result<SelectionReport> {
    let start = Instant::now();
    let cfg = ws.config();
    let features = ws.features(Tap::Gap)?;
    let channels = features.train.d();
    let resolved = tags.resolve(channels)?;
    let mut warnings = resolved.warnings.clone();
    if tags.tap != TAG_TAP {
        warnings.push(format!("tag file tap `{}` differs from `{TAG_TAP}`", tags.tap));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let cell = resolved.channels_where(ChannelTag::is_cell);
    let unrecognizable = resolved.channels_where(|t| t == ChannelTag::Unrecognizable);
    let k = cfg.selection_size.unwrap_or(cell.len());
    if k == 0 || cell.len() < k || unrecognizable.len() < k {
        return Err(Error::InsufficientChannels {
            wanted: k,
            tagged: cell.len(),
            unrecognizable: unrecognizable.len(),
        });
    }
    let column = channel_columns(&features.train);
    let to_columns = |chs: &[usize]| chs.iter().map(|&c| column[c]).collect::<Vec<_>>();
    let all: Vec<usize> = (0..channels).collect();

    let names = [SET_ALL, SET_TAGGED, SET_RANDOM, SET_IMPORTANT];
    let mut rows: Vec<SelectionRow> = names
        .iter()
        .map(|&name| SelectionRow {
            name: name.to_string(),
            size: if name == SET_ALL { channels } else { k },
            in_sample: Vec::new(),
            out_sample: Vec::new(),
            mean_in_sample: 0.0,
            mean_out_sample: 0.0,
            channels: Vec::new(),
        })
        .collect();
    let mut composition = Vec::new();
    for &seed in &cfg.seeds {
        let forest_cfg = heads_with_seed(&cfg.head_config, seed).forest;
        let (all_in, all_out, forest) = forest_accuracy(&features, &to_columns(&all), &forest_cfg, ws.exec())?;
        let ranked_columns = importance(&forest)?.top_k(k);
        let mut important: Vec<usize> = ranked_columns
            .iter()
            .map(|&j| features.train.provenance()[j].0 as usize)
            .collect();
        important.sort_unstable();
        let tagged = cell[..k].to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random: Vec<usize> = unrecognizable.choose_multiple(&mut rng, k).copied().collect();
        random.sort_unstable();
        composition.push(Composition::of(
            &important.iter().map(|&c| c as u32).collect::<Vec<_>>(),
            &resolved.tags,
        ));
        let mut record = |i: usize, chs: &[usize], acc: (f64, f64)| {
            rows[i].in_sample.push(acc.0);
            rows[i].out_sample.push(acc.1);
            rows[i].channels.push(chs.iter().map(|&c| c as u32).collect());
        };
        record(0, &all, (all_in, all_out));
        for (i, chs) in [(1, &tagged), (2, &random), (3, &important)] {
            let (a, b, _) = forest_accuracy(&features, &to_columns(chs), &forest_cfg, ws.exec())?;
            record(i, chs, (a, b));
        }
    }
    for r in &mut rows {
        r.mean_in_sample = mean(r.in_sample.iter().copied());
        r.mean_out_sample = mean(r.out_sample.iter().copied());
    }
    let report = SelectionReport {
        experiment: "exp4".into(),
        title: "Feature selection on pooled channels".into(),
        seed: cfg.seed,
        seeds: cfg.seeds.clone(),
        k,
        rows,
        composition,
        tag_counts: Composition::of(&(0..channels as u32).collect::<Vec<_>>(), &resolved.tags),
        reference: exp4_reference(),
        reference_composition: REFERENCE_COMPOSITION,
        warnings,
        timing: Timing {
            seconds: vec![start.elapsed().as_secs_f64()],
            speedup: None,
        },
    };
    write_report(&report, &report.to_text(), ws.experiment_dir("exp4")?)?;
    Ok(report)
}

/// Loads the configured tag file, or falls back to purity-suggested tags.
pub fn resolve_tag_file(ws: &Workspace, path: Option<&Path>) -> Result<TagFile> {
    match path.or(ws.config().tags.as_deref()) {
        Some(p) => TagFile::load(p),
        None => {
            log::info!("no tag file given, using purity-suggested tags");
            let tags = suggested_tags(ws)?;
            tags.save(ws.experiment_dir("exp4")?.join(TAGS_FILE))?;
            Ok(tags)
        }
    }
}

/// Concatenates every experiment's `report.txt` under `root` into
/// `<root>/report.txt`. Returns the experiments found.
pub fn write_summary(root: impl AsRef<Path>) -> Result<Vec<String>> {
    let root = root.as_ref();
    let mut found = Vec::new();
    let mut text = String::new();
    for name in ["exp1", "exp2", "exp3", "exp4"] {
        let path: PathBuf = root.join(name).join(REPORT_TXT);
        if path.exists() {
            text.push_str(&format!("== {name} ==\n"));
            text.push_str(&fs::read_to_string(&path)?);
            text.push('\n');
            found.push(name.to_string());
        }
    }
    if found.is_empty() {
        return Err(Error::MissingFile(root.join("exp1").join(REPORT_TXT)));
    }
    fs::write(root.join(REPORT_TXT), text)?;
    Ok(found)
}
