use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::jsonio::{load_json, save_json};
use crate::scope::{ChannelTag, MotifFractions};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
/// Marks the start of the wall-clock section of `report.txt`.
pub const TIMING_MARKER: &str = "-- timing --";

/// A reference accuracy row, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub structure: String,
    pub in_sample: f64,
    pub out_sample: f64,
}

fn reference(rows: &[(&str, f64, f64)]) -> Vec<ReferenceRow> {
    rows.iter()
        .map(|&(s, i, o)| ReferenceRow {
            structure: s.to_string(),
            in_sample: i,
            out_sample: o,
        })
        .collect()
}

/// Reference accuracies: end-to-end network against three classical heads.
pub fn exp1_reference() -> Vec<ReferenceRow> {
    reference(&[
        ("AlexNet", 0.9987, 0.978),
        ("CNN + Logistic Regression", 1.0, 0.98),
        ("CNN + SVM", 1.0, 0.974),
        ("CNN + Random Forest", 1.0, 0.966),
    ])
}

/// Reference accuracies: heads before and after average-pool reduction.
pub fn exp3_reference() -> Vec<ReferenceRow> {
    reference(&[
        ("AlexNet (4096)", 0.9987, 0.978),
        ("CNN + Logistic Regression (4096)", 1.0, 0.98),
        ("CNN + Logistic Regression (256)", 0.9854, 0.979),
        ("CNN + SVM (4096)", 1.0, 0.974),
        ("CNN + SVM (256)", 0.99, 0.9755),
        ("CNN + Random Forest (4096)", 1.0, 0.966),
        ("CNN + Random Forest (256)", 1.0, 0.978),
    ])
}

/// Reference accuracies: random forests on selected feature subsets.
pub fn exp4_reference() -> Vec<ReferenceRow> {
    reference(&[
        ("AlexNet (4096)", 0.9987, 0.978),
        ("CNN + Random Forest (4096)", 1.0, 0.966),
        ("CNN + Random Forest (256)", 1.0, 0.978),
        ("CNN + Random Forest (43) tagged cell", 1.0, 0.961),
        ("CNN + Random Forest (43) random unrecognizable", 1.0, 0.947),
        ("CNN + Random Forest (*43) top importance", 1.0, 0.974),
    ])
}

/// Reference execution speedup after reduction.
pub const REFERENCE_SPEEDUP: f64 = 1.23;

/// Reference make-up of the top-43 importance set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionReference {
    pub size: usize,
    pub recognizable: usize,
    pub cell: usize,
    pub unrecognizable: usize,
}

pub const REFERENCE_COMPOSITION: CompositionReference = CompositionReference {
    size: 43,
    recognizable: 33,
    cell: 14,
    unrecognizable: 10,
};

/// Column-aligned plain-text table.
pub struct TextTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new(header: &[&str]) -> Self {
        TextTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) -> &mut Self {
        self.rows.push(cells);
        self
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, c) in cells.iter().enumerate().take(cols) {
                let pad = widths[i] - c.chars().count();
                if i == 0 {
                    s.push_str(c);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str("  ");
                    s.push_str(&" ".repeat(pad));
                    s.push_str(c);
                }
            }
            s.trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

pub fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

/// One measured structure: a network or a head on a feature tap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub structure: String,
    pub dim: usize,
    pub in_sample: f64,
    pub out_sample: f64,
}

/// Wall-clock measurements, kept apart from the deterministic fields.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    /// Train plus eval seconds, aligned with the report rows.
    pub seconds: Vec<f64>,
    /// Summed head seconds on full features over reduced features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
}

/// Dimension bookkeeping of the reduction experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub dim_before: usize,
    pub dim_after: usize,
    pub ratio: usize,
    /// Largest out-sample accuracy loss of any head after reduction.
    pub max_out_sample_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub experiment: String,
    pub title: String,
    pub seed: u64,
    pub rows: Vec<AccuracyRow>,
    pub reference: Vec<ReferenceRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<Reduction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_speedup: Option<f64>,
    pub notes: Vec<String>,
    pub timing: Timing,
}

impl AccuracyReport {
    /// Largest minus smallest out-sample accuracy over the rows.
    pub fn out_sample_spread(&self) -> f64 {
        let it = self.rows.iter().map(|r| r.out_sample);
        it.clone().fold(f64::NEG_INFINITY, f64::max) - it.fold(f64::INFINITY, f64::min)
    }

    pub fn row(&self, structure: &str) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.structure == structure)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} (seed {})\n\n", self.title, self.seed);
        let mut t = TextTable::new(&["structure", "dim", "in-sample", "out-sample"]);
        for r in &self.rows {
            t.row(vec![
                r.structure.clone(),
                r.dim.to_string(),
                pct(r.in_sample),
                pct(r.out_sample),
            ]);
        }
        out.push_str(&t.render());
        if let Some(red) = &self.reduction {
            let _ = writeln!(
                out,
                "\nfeature dim {} -> {} (ratio {}), largest out-sample drop {}",
                red.dim_before,
                red.dim_after,
                red.ratio,
                pct(red.max_out_sample_drop)
            );
        }
        out.push_str("\nreference values\n");
        let mut t = TextTable::new(&["structure", "in-sample", "out-sample"]);
        for r in &self.reference {
            t.row(vec![r.structure.clone(), pct(r.in_sample), pct(r.out_sample)]);
        }
        out.push_str(&t.render());
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(out, "\n{TIMING_MARKER}");
        let mut t = TextTable::new(&["structure", "seconds"]);
        for (r, s) in self.rows.iter().zip(&self.timing.seconds) {
            t.row(vec![r.structure.clone(), format!("{s:.3}")]);
        }
        out.push_str(&t.render());
        if let Some(s) = self.timing.speedup {
            let _ = writeln!(out, "head train+eval speedup {s:.2}x");
        }
        if let Some(s) = self.reference_speedup {
            let _ = writeln!(out, "reference speedup {s:.2}x");
        }
        out
    }
}

/// Accuracy of one feature set, per seed and averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub name: String,
    pub size: usize,
    pub in_sample: Vec<f64>,
    pub out_sample: Vec<f64>,
    pub mean_in_sample: f64,
    pub mean_out_sample: f64,
    /// Selected channels, per seed.
    pub channels: Vec<Vec<u32>>,
}

/// Tag make-up of a feature set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Composition {
    pub tumor: usize,
    pub lymphocyte: usize,
    pub collagen: usize,
    pub other_structure: usize,
    pub unrecognizable: usize,
}

impl Composition {
    pub fn of(channels: &[u32], tags: &[ChannelTag]) -> Self {
        let mut c = Composition::default();
        for &ch in channels {
            match tags[ch as usize] {
                ChannelTag::Tumor => c.tumor += 1,
                ChannelTag::Lymphocyte => c.lymphocyte += 1,
                ChannelTag::Collagen => c.collagen += 1,
                ChannelTag::OtherStructure => c.other_structure += 1,
                ChannelTag::Unrecognizable => c.unrecognizable += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.recognizable() + self.unrecognizable
    }

    pub fn recognizable(&self) -> usize {
        self.tumor + self.lymphocyte + self.collagen + self.other_structure
    }

    pub fn cell(&self) -> usize {
        self.tumor + self.lymphocyte
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub experiment: String,
    pub title: String,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub k: usize,
    /// Forest on every reduced feature, then the three selected sets.
    pub rows: Vec<SelectionRow>,
    /// Make-up of the top-importance set, per seed.
    pub composition: Vec<Composition>,
    pub tag_counts: Composition,
    pub reference: Vec<ReferenceRow>,
    pub reference_composition: CompositionReference,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

pub const SET_ALL: &str = "all";
pub const SET_TAGGED: &str = "tagged_cell";
pub const SET_RANDOM: &str = "random_unrecognizable";
pub const SET_IMPORTANT: &str = "top_importance";

impl SelectionReport {
    pub fn set(&self, name: &str) -> Option<&SelectionRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} (seed {}, k = {}, seeds {:?})\n\n",
            self.title, self.seed, self.k, self.seeds
        );
        let mut t = TextTable::new(&["feature set", "size", "mean in-sample", "mean out-sample"]);
        for r in &self.rows {
            t.row(vec![
                r.name.clone(),
                r.size.to_string(),
                pct(r.mean_in_sample),
                pct(r.mean_out_sample),
            ]);
        }
        out.push_str(&t.render());
        let c = &self.tag_counts;
        let _ = writeln!(
            out,
            "\nchannel tags: tumor {}, lymphocyte {}, collagen {}, other_structure {}, unrecognizable {}",
            c.tumor, c.lymphocyte, c.collagen, c.other_structure, c.unrecognizable
        );
        out.push_str("\ntop-importance set make-up per seed\n");
        let mut t = TextTable::new(&["seed", "recognizable", "cell", "unrecognizable"]);
        for (s, c) in self.seeds.iter().zip(&self.composition) {
            t.row(vec![
                s.to_string(),
                c.recognizable().to_string(),
                c.cell().to_string(),
                c.unrecognizable.to_string(),
            ]);
        }
        out.push_str(&t.render());
        let r = &self.reference_composition;
        let _ = writeln!(
            out,
            "reference: {} of the top {} recognizable ({} cell), {} unrecognizable",
            r.recognizable, r.size, r.cell, r.unrecognizable
        );
        out.push_str("\nreference values\n");
        let mut t = TextTable::new(&["structure", "in-sample", "out-sample"]);
        for r in &self.reference {
            t.row(vec![r.structure.clone(), pct(r.in_sample), pct(r.out_sample)]);
        }
        out.push_str(&t.render());
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(out, "\n{TIMING_MARKER}");
        let _ = writeln!(out, "total seconds {:.3}", self.timing.seconds.iter().sum::<f64>());
        out
    }
}

/// Motif purity of one channel and the tag it suggests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channel: u32,
    pub purity: MotifFractions,
    pub suggested: ChannelTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryReport {
    pub experiment: String,
    pub title: String,
    pub seed: u64,
    pub model_name: String,
    pub layer: usize,
    pub k: usize,
    pub ranked_patches: usize,
    pub base_rates: MotifFractions,
    pub channels: Vec<ChannelSummary>,
    pub best_tumor_channel: u32,
    pub best_tumor_purity: f64,
    /// Channel with the highest lymphocyte purity.
    pub dot_channel: u32,
    /// Its mean score over patches holding a lymphocyte.
    pub dot_score_mean: f64,
    /// Its mean score over patches holding no planted motif.
    pub background_score_mean: f64,
    pub timing: Timing,
}

impl GalleryReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} (seed {}, model {}, layer {}, top {} of {} patches)\n\n",
            self.title, self.seed, self.model_name, self.layer, self.k, self.ranked_patches
        );
        let mut t = TextTable::new(&["channel", "tumor", "lymphocyte", "collagen", "lumen", "suggested tag"]);
        let f = |v: f64| format!("{v:.2}");
        let b = &self.base_rates;
        t.row(vec![
            "base".into(),
            f(b.tumor_blob),
            f(b.lymphocyte_dot),
            f(b.collagen_stripe),
            f(b.lumen_hole),
            String::new(),
        ]);
        for c in &self.channels {
            let p = &c.purity;
            t.row(vec![
                c.channel.to_string(),
                f(p.tumor_blob),
                f(p.lymphocyte_dot),
                f(p.collagen_stripe),
                f(p.lumen_hole),
                c.suggested.to_string(),
            ]);
        }
        out.push_str(&t.render());
        let _ = writeln!(
            out,
            "\nbest tumor channel {} (purity {:.2})",
            self.best_tumor_channel, self.best_tumor_purity
        );
        let _ = writeln!(
            out,
            "lymphocyte channel {}: mean score {:.4} with a dot, {:.4} on background",
            self.dot_channel, self.dot_score_mean, self.background_score_mean
        );
        let _ = writeln!(out, "\n{TIMING_MARKER}");
        let _ = writeln!(out, "total seconds {:.3}", self.timing.seconds.iter().sum::<f64>());
        out
    }
}

/// Writes `report.json` and `report.txt` into `dir`.
pub fn write_report<T: Serialize>(report: &T, text: &str, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_json(report, dir.join(REPORT_JSON))?;
    fs::write(dir.join(REPORT_TXT), text)?;
    Ok(())
}

pub fn read_report<T: DeserializeOwned>(dir: impl AsRef<Path>) -> Result<T> {
    load_json(dir.as_ref().join(REPORT_JSON))
}

/// `report.json` contents without the `timing` field.
pub fn strip_timing_json(bytes: &[u8]) -> Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_slice(bytes)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timing");
    }
    Ok(v)
}

/// `report.txt` contents up to the timing section.
pub fn strip_timing_text(text: &str) -> &str {
    text.find(TIMING_MARKER).map_or(text, |i| &text[..i])
}
