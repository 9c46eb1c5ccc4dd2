//! Scene persistence: one flat little-endian f64 binary per image plus a
//! single annotation text file (`scene-id x1 y1 x2 y2 category` per line).

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use crate::assign::GtObject;
use crate::geometry::BoundingBox;

use super::scene::SyntheticScene;

pub const ANNOTATION_FILE: &str = "annotations.txt";

fn scene_file_name(index: usize) -> String {
    format!("scene_{index:06}.img")
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:06}")
}

/// Writes scenes as `scene_NNNNNN.img` binaries plus `annotations.txt`.
pub fn save_dataset(dir: &Path, scenes: &[SyntheticScene]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut ann = BufWriter::new(fs::File::create(dir.join(ANNOTATION_FILE))?);
    for (i, scene) in scenes.iter().enumerate() {
        let mut bytes = Vec::with_capacity(scene.image.len() * 8);
        for v in &scene.image {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(scene_file_name(i)), bytes)?;
        for obj in &scene.objects {
            // shortest round-trip decimal keeps coordinates exact
            writeln!(
                ann,
                "{} {} {} {} {} {}",
                scene_id(i),
                obj.bbox.x1,
                obj.bbox.y1,
                obj.bbox.x2,
                obj.bbox.y2,
                obj.category
            )?;
        }
    }
    ann.flush()
}

/// A scene loaded back from disk.
#[derive(Debug, Clone)]
pub struct StoredScene {
    pub id: String,
    pub image: Vec<f64>,
    pub size: usize,
    pub objects: Vec<GtObject>,
}

fn data_err(detail: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, detail)
}

/// Loads every `scene_*.img` (square images) and its annotations.
pub fn load_dataset(dir: &Path) -> io::Result<Vec<StoredScene>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("scene_") && n.ends_with(".img"))
        .collect();
    names.sort();

    let mut scenes: Vec<StoredScene> = Vec::with_capacity(names.len());
    for name in &names {
        let bytes = fs::read(dir.join(name))?;
        if bytes.len() % 8 != 0 {
            return Err(data_err(format!("{name}: not a multiple of 8 bytes")));
        }
        let image: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let size = (image.len() as f64).sqrt().round() as usize;
        if size * size != image.len() {
            return Err(data_err(format!(
                "{name}: image is not square ({} values)",
                image.len()
            )));
        }
        scenes.push(StoredScene {
            id: name.trim_end_matches(".img").to_string(),
            image,
            size,
            objects: Vec::new(),
        });
    }

    let ann_path = dir.join(ANNOTATION_FILE);
    if ann_path.exists() {
        let by_id: std::collections::BTreeMap<String, usize> = scenes
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        for (ln, line) in io::BufReader::new(fs::File::open(ann_path)?)
            .lines()
            .enumerate()
        {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(data_err(format!(
                    "annotation line {}: expected 6 fields",
                    ln + 1
                )));
            }
            let idx = *by_id.get(fields[0]).ok_or_else(|| {
                data_err(format!(
                    "annotation line {}: unknown scene {}",
                    ln + 1,
                    fields[0]
                ))
            })?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| data_err(format!("annotation line {}: {e}", ln + 1)))
            };
            let bbox = BoundingBox::new(
                num(fields[1])?,
                num(fields[2])?,
                num(fields[3])?,
                num(fields[4])?,
            )
            .map_err(|e| data_err(format!("annotation line {}: {e}", ln + 1)))?;
            let category = fields[5]
                .parse::<usize>()
                .map_err(|e| data_err(format!("annotation line {}: {e}", ln + 1)))?;
            scenes[idx].objects.push(GtObject { bbox, category });
        }
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toydet::scene::{generate_scene, CategorySpec, SceneGenConfig, ShapeKind};

    fn cfg() -> SceneGenConfig {
        SceneGenConfig {
            image_size: 32,
            categories: vec![CategorySpec {
                kind: ShapeKind::FilledRect,
                size_min: 8.0,
                size_max: 14.0,
                offset_x: 0.0,
                offset_y: 0.0,
                intensity: 1.0,
                evidence_scale: 1.0,
            }],
            objects_min: 0,
            objects_max: 2,
            noise_std: 0.05,
            max_overlap_iou: 0.3,
            placement_retries: 16,
        }
    }

    #[test]
    fn dataset_round_trips_exactly() {
        let dir = std::env::temp_dir().join(format!("aa_dataset_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let scenes: Vec<_> = (0..4).map(|s| generate_scene(&cfg(), s)).collect();
        save_dataset(&dir, &scenes).unwrap();
        let loaded = load_dataset(&dir).unwrap();
        assert_eq!(loaded.len(), scenes.len());
        for (stored, original) in loaded.iter().zip(&scenes) {
            assert_eq!(stored.image, original.image);
            assert_eq!(stored.size, original.size);
            assert_eq!(stored.objects.len(), original.objects.len());
            for (a, b) in stored.objects.iter().zip(&original.objects) {
                assert_eq!(a.bbox, b.bbox);
                assert_eq!(a.category, b.category);
            }
        }
        fs::remove_dir_all(&dir).unwrap();
    }
}
