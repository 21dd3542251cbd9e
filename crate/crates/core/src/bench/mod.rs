//! Experiment harness: configs, cached pipeline stages, the four
//! experiments and their reports.

mod config;
mod experiments;
mod report;
mod workspace;

pub use config::{heads_with_seed, DatasetConfig, ExperimentConfig};
pub use experiments::{
    analyze_channels, export_channel_gallery, head_label, resolve_tag_file, run_exp1, run_exp2, run_exp3, run_exp4,
    run_viz, suggested_tags, write_summary, ChannelAnalysis, CNN_LABEL, TAGS_FILE, TAG_TAP,
};
pub use report::{
    exp1_reference, exp3_reference, exp4_reference, pct, read_report, strip_timing_json, strip_timing_text,
    write_report, AccuracyReport, AccuracyRow, ChannelSummary, Composition, CompositionReference, GalleryReport,
    Reduction, ReferenceRow, SelectionReport, SelectionRow, TextTable, Timing, REFERENCE_COMPOSITION,
    REFERENCE_SPEEDUP, REPORT_JSON, REPORT_TXT, SET_ALL, SET_IMPORTANT, SET_RANDOM, SET_TAGGED, TIMING_MARKER,
};
pub use workspace::{Datasets, SplitFeatures, TrainingLog, Workspace};
