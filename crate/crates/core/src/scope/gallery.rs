use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::{FovBox, LayerGeometry};
use super::heatmap::{draw_box, overlay, render_heatmap, Upsample};
use super::purity::{ChannelPurity, MotifFractions};
use super::ranking::{layer_map, ChannelRanking};
use crate::error::{Error, Result};
use crate::jsonio::{load_json, save_json};
use crate::nn::Model;
use crate::parallel::{try_map_range, Execution};
use crate::synth::DatasetManifest;

pub const GALLERY_FILE: &str = "gallery.json";
const HEATMAP_ALPHA: f32 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub patch: u32,
    pub score: f64,
    #[serde(rename = "box")]
    pub fov: FovBox,
    /// Patch with its FOV box, relative to the gallery directory.
    pub image: String,
    /// Heatmap overlay, relative to the gallery directory.
    pub heatmap: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryChannel {
    pub index: u32,
    pub entries: Vec<GalleryEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity: Option<MotifFractions>,
}

/// `gallery.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryManifest {
    pub model_name: String,
    pub tap: String,
    pub k: usize,
    pub layer: usize,
    pub patch_size: [usize; 2],
    pub geometry: LayerGeometry,
    pub channels: Vec<GalleryChannel>,
}

impl GalleryManifest {
    pub fn validate(&self) -> Result<()> {
        let [ph, pw] = self.patch_size;
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.index as usize != i {
                return Err(Error::InvalidArgument(format!(
                    "channel entry {i} has index {}",
                    ch.index
                )));
            }
            if ch.entries.len() > self.k {
                return Err(Error::InvalidArgument(format!(
                    "channel {i} lists {} entries, k = {}",
                    ch.entries.len(),
                    self.k
                )));
            }
            for e in &ch.entries {
                let b = e.fov;
                if b.h == 0 || b.w == 0 || b.y + b.h > ph || b.x + b.w > pw {
                    return Err(Error::InvalidArgument(format!(
                        "channel {i} patch {} has box {b:?} outside {ph}x{pw}",
                        e.patch
                    )));
                }
            }
            if ch.entries.windows(2).any(|w| w[1].score > w[0].score) {
                return Err(Error::InvalidArgument(format!("channel {i} scores increase")));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        save_json(self, dir.as_ref().join(GALLERY_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<GalleryManifest> {
        let path = dir.as_ref().join(GALLERY_FILE);
        let m: GalleryManifest = load_json(&path)?;
        m.validate().map_err(|e| Error::format(&path, e.to_string()))?;
        Ok(m)
    }
}

/// What to render and how.
pub struct GallerySpec<'a> {
    pub model: &'a Model<f32>,
    pub layer: usize,
    pub geometry: LayerGeometry,
    pub tap: &'a str,
    pub k: usize,
    pub mode: Upsample,
    pub purity: Option<&'a [ChannelPurity]>,
}

/// Writes, per channel, each ranked patch with its yellow FOV box and a
/// heatmap overlay, then `gallery.json` and a static `index.html`.
pub fn export_gallery(
    spec: &GallerySpec<'_>,
    rankings: &[ChannelRanking],
    dataset: &DatasetManifest,
    out_dir: impl AsRef<Path>,
    exec: Execution,
) -> Result<GalleryManifest> {
    let out_dir = out_dir.as_ref();
    let shape = &spec.model.shapes()[spec.layer];
    let channels = shape[0];
    let map_dims = (shape[1], shape[2]);
    if rankings.len() != channels || rankings.iter().enumerate().any(|(i, r)| r.channel as usize != i) {
        return Err(Error::InvalidArgument(format!(
            "rankings must cover all {channels} channels in order"
        )));
    }
    let patch = (dataset.patch_size, dataset.patch_size);
    fs::create_dir_all(out_dir.join("channels"))?;

    let built = try_map_range(exec, channels, |c| -> Result<GalleryChannel> {
        let rel_dir = format!("channels/{c:03}");
        fs::create_dir_all(out_dir.join(&rel_dir))?;
        let mut entries = Vec::with_capacity(rankings[c].entries.len());
        for (rank, e) in rankings[c].entries.iter().enumerate() {
            let record = dataset
                .records
                .get(e.patch as usize)
                .ok_or_else(|| Error::InvalidArgument(format!("ranked patch {} not in the dataset", e.patch)))?;
            let map = layer_map(spec.model, spec.layer, &record.to_tensor())?;
            let heat = render_heatmap(map.channel(c), map_dims, patch, spec.mode)?;
            let mut boxed = record.image.clone();
            draw_box(&mut boxed, &e.fov);
            let image = format!("{rel_dir}/{rank:03}_p{}.png", e.patch);
            let heatmap = format!("{rel_dir}/{rank:03}_p{}_heat.png", e.patch);
            boxed.save(out_dir.join(&image))?;
            overlay(&record.image, &heat, HEATMAP_ALPHA)?.save(out_dir.join(&heatmap))?;
            entries.push(GalleryEntry {
                patch: e.patch,
                score: e.score as f64,
                fov: e.fov,
                image,
                heatmap,
            });
        }
        Ok(GalleryChannel {
            index: c as u32,
            entries,
            purity: spec
                .purity
                .and_then(|p| p.iter().find(|p| p.channel as usize == c))
                .map(|p| p.purity),
        })
    })?;

    let manifest = GalleryManifest {
        model_name: spec.model.name().to_string(),
        tap: spec.tap.to_string(),
        k: spec.k,
        layer: spec.layer,
        patch_size: [patch.0, patch.1],
        geometry: spec.geometry,
        channels: built,
    };
    manifest.validate()?;
    manifest.save(out_dir)?;
    fs::write(out_dir.join("index.html"), index_html(&manifest))?;
    Ok(manifest)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn index_html(m: &GalleryManifest) -> String {
    let mut html = String::new();
    let title = format!("{} / layer {} / top {}", escape(&m.model_name), m.layer, m.k);
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{title}</title>\n\
         <style>body{{font-family:sans-serif}}img{{width:64px;height:64px;image-rendering:pixelated;margin:1px}}\
         section{{margin-bottom:1.5em}}</style></head><body>\n<h1>{title}</h1>\n"
    );
    html.push_str("<nav>");
    for ch in &m.channels {
        let _ = write!(html, "<a href=\"#c{0}\">{0}</a> ", ch.index);
    }
    html.push_str("</nav>\n");
    for ch in &m.channels {
        let _ = writeln!(html, "<section id=\"c{0}\"><h2>Channel {0}</h2>", ch.index);
        if let Some(p) = ch.purity {
            let _ = writeln!(
                html,
                "<p>tumor {:.2} &middot; lymphocyte {:.2} &middot; collagen {:.2} &middot; lumen {:.2}</p>",
                p.tumor_blob, p.lymphocyte_dot, p.collagen_stripe, p.lumen_hole
            );
        }
        html.push_str("<div>");
        for e in &ch.entries {
            let _ = write!(
                html,
                "<img src=\"{}\" title=\"patch {} score {:.4}\">",
                escape(&e.image),
                e.patch,
                e.score
            );
        }
        html.push_str("</div>\n<div>");
        for e in &ch.entries {
            let _ = write!(html, "<img src=\"{}\">", escape(&e.heatmap));
        }
        html.push_str("</div></section>\n");
    }
    html.push_str("</body></html>\n");
    html
}
