use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use activscope::bench::{
    heads_with_seed, read_report, run_exp1, run_exp2, run_exp3, run_exp4, strip_timing_json, strip_timing_text,
    write_summary, ExperimentConfig, SelectionReport, Workspace, REPORT_JSON, REPORT_TXT, SET_ALL, SET_IMPORTANT,
};
use activscope::heads::{fit_forest_with, importance, Classifier};
use activscope::nn::{Preset, Tap};
use activscope::parallel::Execution;
use activscope::scope::{ChannelTag, TagFile};
use activscope::Error;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Preset::MiniAlex);
    cfg.dataset.train_scenes = 2;
    cfg.dataset.test_scenes = 1;
    cfg.dataset.train_per_class = 40;
    cfg.dataset.test_per_class = 20;
    cfg.train.epochs = 1;
    cfg.k = 10;
    cfg.seeds = vec![1, 2];
    cfg.selection_size = Some(3);
    cfg.head_config.forest.n_trees = 20;
    cfg.seed = 7;
    cfg
}

fn hand_tags() -> TagFile {
    let tags: Vec<ChannelTag> = (0..32)
        .map(|c| match c {
            0..=3 => ChannelTag::Tumor,
            4 | 5 => ChannelTag::Lymphocyte,
            6 => ChannelTag::Collagen,
            _ => ChannelTag::Unrecognizable,
        })
        .collect();
    TagFile::new("mini_alex", "gap", &tags)
}

fn run_all(root: &Path, exec: Execution) -> Workspace {
    let ws = Workspace::open(root, &small_config(), exec).unwrap();
    run_exp1(&ws).unwrap();
    run_exp2(&ws).unwrap();
    run_exp3(&ws).unwrap();
    run_exp4(&ws, &hand_tags()).unwrap();
    write_summary(root).unwrap();
    ws
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// File contents with timing fields removed.
fn comparable(path: &Path, bytes: &[u8]) -> Option<Vec<u8>> {
    let name = path.file_name()?.to_str()?;
    if path.ends_with("model/timing.json") {
        return None;
    }
    if name == REPORT_JSON {
        return Some(serde_json::to_vec(&strip_timing_json(bytes).unwrap()).unwrap());
    }
    if name == REPORT_TXT {
        let text = std::str::from_utf8(bytes).unwrap();
        let kept: String = text.split("== ").map(strip_timing_text).collect::<Vec<_>>().join("== ");
        return Some(kept.into_bytes());
    }
    Some(bytes.to_vec())
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_modes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path(), Execution::Parallel);
    run_all(b.path(), Execution::Sequential);
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for name in [
        "features/train_gap.afm",
        "data/train/manifest.jsonl",
        "model/cnn.asm",
        "exp4/report.json",
    ] {
        assert!(fa.contains_key(Path::new(name)), "{name} missing");
    }
    for (path, bytes) in &fa {
        assert_eq!(
            comparable(path, bytes),
            comparable(path, &fb[path]),
            "{} differs",
            path.display()
        );
    }
}

#[test]
fn importance_subset_matches_direct_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let ws = Workspace::open(dir.path(), &cfg, Execution::Parallel).unwrap();
    let report = run_exp4(&ws, &hand_tags()).unwrap();
    assert_eq!(read_report::<SelectionReport>(dir.path().join("exp4")).unwrap(), report);
    let f = ws.features(Tap::Gap).unwrap();
    let important = report.rows.iter().find(|r| r.name == SET_IMPORTANT).unwrap();
    let all = report.rows.iter().find(|r| r.name == SET_ALL).unwrap();
    for (i, &seed) in cfg.seeds.iter().enumerate() {
        let forest_cfg = heads_with_seed(&cfg.head_config, seed).forest;
        let forest = fit_forest_with(&f.train, &forest_cfg, Execution::Sequential).unwrap();
        assert_eq!(forest.accuracy(&f.test).unwrap(), all.out_sample[i]);
        let imp = importance(&forest).unwrap();
        assert!((imp.sum() - 1.0).abs() <= 1e-6);
        let mut top: Vec<u32> = imp.top_k(3).into_iter().map(|j| f.train.provenance()[j].0).collect();
        top.sort_unstable();
        assert_eq!(important.channels[i], top);
        let cols: Vec<usize> = top.iter().map(|&c| c as usize).collect();
        let (train, test) = (
            f.train.select_columns(&cols).unwrap(),
            f.test.select_columns(&cols).unwrap(),
        );
        let sub = fit_forest_with(&train, &forest_cfg, Execution::Sequential).unwrap();
        assert_eq!(sub.accuracy(&train).unwrap(), important.in_sample[i]);
        assert_eq!(sub.accuracy(&test).unwrap(), important.out_sample[i]);
    }
}

#[test]
fn selection_needs_enough_channels() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.selection_size = None;
    let ws = Workspace::open(dir.path(), &cfg, Execution::Parallel).unwrap();
    let tags = TagFile::new("mini_alex", "gap", &[ChannelTag::Tumor; 32]);
    match run_exp4(&ws, &tags) {
        Err(Error::InsufficientChannels {
            wanted: 32,
            tagged: 32,
            unrecognizable: 0,
        }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn workspace_rejects_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    Workspace::open(dir.path(), &cfg, Execution::Parallel).unwrap();
    Workspace::open(dir.path(), &cfg, Execution::Sequential).unwrap();
    let mut other = cfg.clone();
    other.train.epochs = 2;
    assert!(matches!(
        Workspace::open(dir.path(), &other, Execution::Parallel),
        Err(Error::Config(_))
    ));
    assert!(Workspace::open(dir.path(), &cfg.with_seed(8), Execution::Parallel).is_err());
}
