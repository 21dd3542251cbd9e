//! On-disk layout of datasets and scenes.
//!
//! A dataset directory holds one PNG per patch named
//! `<scene>_<y>_<x>_<label>.png`, a `manifest.jsonl` with one object per
//! patch, and a `dataset.json` summary carrying the manifest checksum.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::motif::Motif;
use super::sampling::{ClassCounts, DatasetManifest, Label, PatchRecord, Split};
use super::scene::AnnotatedScene;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SUMMARY_FILE: &str = "dataset.json";
pub const SCENES_FILE: &str = "scenes.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    scene_id: u32,
    y: usize,
    x: usize,
    label: Label,
    overlap: f64,
    split: Split,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    tau: f64,
    seed: u64,
    counts: ClassCounts,
    patch_size: usize,
    grid_stride: usize,
    split: Split,
    manifest_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_dataset(manifest: &DatasetManifest, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut lines = Vec::new();
    for r in &manifest.records {
        let line = ManifestLine {
            scene_id: r.scene_id,
            y: r.y,
            x: r.x,
            label: r.label,
            overlap: r.overlap,
            split: r.split,
        };
        serde_json::to_writer(&mut lines, &line)?;
        lines.push(b'\n');
        r.image.save(dir.join(r.file_name()))?;
    }
    fs::write(dir.join(MANIFEST_FILE), &lines)?;
    let summary = Summary {
        tau: manifest.tau,
        seed: manifest.seed,
        counts: manifest.counts(),
        patch_size: manifest.patch_size,
        grid_stride: manifest.grid_stride,
        split: manifest.split,
        manifest_sha256: sha256_hex(&lines),
    };
    let mut f = fs::File::create(dir.join(SUMMARY_FILE))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let summary_path = dir.join(SUMMARY_FILE);
    let summary: Summary = serde_json::from_slice(&read_file(&summary_path)?)
        .map_err(|e| Error::format(&summary_path, format!("malformed summary: {e}")))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = read_file(&manifest_path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(&manifest_path, "manifest is not UTF-8"))?;

    let mut lines = Vec::new();
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let line_no = i + 1;
        let parse_err = |reason: String| Error::Parse {
            path: manifest_path.display().to_string(),
            line: line_no,
            reason,
        };
        if !raw.ends_with('\n') {
            return Err(parse_err("line is not newline-terminated (truncated file?)".into()));
        }
        let line: ManifestLine = serde_json::from_str(raw.trim_end()).map_err(|e| parse_err(e.to_string()))?;
        let consistent = match line.label {
            Label::Positive => line.overlap >= summary.tau,
            Label::Negative => line.overlap == 0.0,
        };
        if !consistent {
            return Err(parse_err(format!(
                "label {} inconsistent with overlap {} at tau {}",
                line.label, line.overlap, summary.tau
            )));
        }
        lines.push((line_no, line));
    }
    if sha256_hex(&bytes) != summary.manifest_sha256 {
        return Err(Error::Checksum(manifest_path.display().to_string()));
    }

    let mut records = Vec::with_capacity(lines.len());
    for (line_no, l) in lines {
        let name = format!("{}_{}_{}_{}.png", l.scene_id, l.y, l.x, l.label);
        let path = dir.join(&name);
        let image = image::open(read_existing(&path)?)?.to_rgb8();
        if image.width() as usize != summary.patch_size || image.height() as usize != summary.patch_size {
            return Err(Error::Parse {
                path: manifest_path.display().to_string(),
                line: line_no,
                reason: format!(
                    "{name} is {}x{}, expected {}",
                    image.width(),
                    image.height(),
                    summary.patch_size
                ),
            });
        }
        records.push(PatchRecord {
            scene_id: l.scene_id,
            y: l.y,
            x: l.x,
            label: l.label,
            overlap: l.overlap,
            split: l.split,
            image,
        });
    }
    let manifest = DatasetManifest {
        records,
        split: summary.split,
        tau: summary.tau,
        seed: summary.seed,
        patch_size: summary.patch_size,
        grid_stride: summary.grid_stride,
    };
    if manifest.counts() != summary.counts {
        return Err(Error::format(
            &summary_path,
            format!(
                "summary counts {:?} disagree with manifest {:?}",
                summary.counts,
                manifest.counts()
            ),
        ));
    }
    Ok(manifest)
}

fn read_existing(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneEntry {
    id: u32,
    height: usize,
    width: usize,
    image: String,
    mask: String,
    inventory: Vec<Motif>,
}

/// Writes scene images, masks (0/255 PNG) and a `scenes.json` inventory.
pub fn write_scenes(scenes: &[AnnotatedScene], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for s in scenes {
        let image = format!("scene_{}.png", s.id);
        let mask = format!("scene_{}_mask.png", s.id);
        s.image.save(dir.join(&image))?;
        let mut visible = s.mask.clone();
        visible.pixels_mut().for_each(|p| p.0[0] *= 255);
        visible.save(dir.join(&mask))?;
        entries.push(SceneEntry {
            id: s.id,
            height: s.height(),
            width: s.width(),
            image,
            mask,
            inventory: s.inventory.clone(),
        });
    }
    write_inventories(scenes, dir)?;
    let f = fs::File::create(dir.join(SCENES_FILE))?;
    serde_json::to_writer_pretty(f, &entries)?;
    Ok(())
}

/// Inventory-only sidecar used by the visualization stage.
pub fn write_inventories(scenes: &[AnnotatedScene], dir: impl AsRef<Path>) -> Result<()> {
    let inv: Vec<(u32, &Vec<Motif>)> = scenes.iter().map(|s| (s.id, &s.inventory)).collect();
    let f = fs::File::create(dir.as_ref().join("inventory.json"))?;
    serde_json::to_writer(f, &inv)?;
    Ok(())
}

pub fn read_inventories(dir: impl AsRef<Path>) -> Result<Vec<(u32, Vec<Motif>)>> {
    let path = dir.as_ref().join("inventory.json");
    Ok(serde_json::from_slice(&read_file(&path)?)?)
}

pub fn read_scenes(dir: impl AsRef<Path>) -> Result<Vec<AnnotatedScene>> {
    let dir = dir.as_ref();
    let path = dir.join(SCENES_FILE);
    let entries: Vec<SceneEntry> = serde_json::from_slice(&read_file(&path)?)
        .map_err(|e| Error::format(&path, format!("malformed scene index: {e}")))?;
    entries
        .into_iter()
        .map(|e| {
            let image = image::open(read_existing(&dir.join(&e.image))?)?.to_rgb8();
            let mut mask = image::open(read_existing(&dir.join(&e.mask))?)?.to_luma8();
            mask.pixels_mut().for_each(|p| p.0[0] = (p.0[0] > 127) as u8);
            if image.dimensions() != (e.width as u32, e.height as u32) || mask.dimensions() != image.dimensions() {
                return Err(Error::format(
                    &path,
                    format!("scene {} has inconsistent dimensions", e.id),
                ));
            }
            Ok(AnnotatedScene {
                id: e.id,
                image,
                mask,
                inventory: e.inventory,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sampling::{sample_patches, PatchRequest};
    use crate::synth::scene::{generate_scene, SceneSpec};

    fn small_dataset() -> DatasetManifest {
        let scene = generate_scene(&SceneSpec::default(), 0).unwrap();
        let req = PatchRequest {
            patch_size: 64,
            n_pos: 3,
            n_neg: 3,
            tau: 0.8,
            grid_stride: 8,
            seed: 9,
            split: Split::Train,
        };
        sample_patches(&scene, &req).unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_dataset();
        write_dataset(&m, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), m);
        let first = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let v: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        let mut expected = vec!["scene_id", "y", "x", "label", "overlap", "split"];
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
    }

    #[test]
    fn corrupted_manifest_names_line() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small_dataset(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = lines[2].replace("\"y\"", "\"why\"");
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        match read_dataset(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small_dataset(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn edited_manifest_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small_dataset(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replacen("\"split\":\"train\"", "\"split\":\"test\"", 1)).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Checksum(_))));
    }

    #[test]
    fn missing_patch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_dataset();
        write_dataset(&m, dir.path()).unwrap();
        fs::remove_file(dir.path().join(m.records[0].file_name())).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::MissingFile(_))));
    }

    #[test]
    fn scenes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scene = generate_scene(&SceneSpec::default(), 3).unwrap();
        write_scenes(std::slice::from_ref(&scene), dir.path()).unwrap();
        let back = read_scenes(dir.path()).unwrap();
        assert_eq!(back, vec![scene]);
    }
}
