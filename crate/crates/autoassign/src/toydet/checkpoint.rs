//! Checkpoints: all named parameters as one flat little-endian f64 binary
//! plus a text manifest (`name offset count dims...` per line).

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use crate::assign::CenterPrior;

use super::model::DetectorModel;

pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";

fn data_err(detail: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, detail)
}

/// Writes model and prior parameters under `dir`.
pub fn save_checkpoint(dir: &Path, model: &DetectorModel, prior: &CenterPrior) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0usize;

    let all = model.params.iter().chain([&prior.mu, &prior.sigma]);
    for p in all {
        let dims: Vec<String> = p.shape.iter().map(|d| d.to_string()).collect();
        writeln!(
            manifest,
            "{} {} {} {}",
            p.name,
            offset,
            p.len(),
            dims.join(" ")
        )?;
        for v in &p.values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += p.len();
    }
    fs::write(dir.join(PARAMS_FILE), blob)?;
    fs::write(dir.join(MANIFEST_FILE), manifest)
}

/// Restores parameters saved by `save_checkpoint` into a model and prior of
/// the same architecture. Names and shapes must match exactly.
pub fn load_checkpoint(
    dir: &Path,
    model: &mut DetectorModel,
    prior: &mut CenterPrior,
) -> io::Result<()> {
    let blob = fs::read(dir.join(PARAMS_FILE))?;
    if blob.len() % 8 != 0 {
        return Err(data_err("params.bin is not a multiple of 8 bytes".into()));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let manifest = fs::File::open(dir.join(MANIFEST_FILE))?;
    let mut entries = Vec::new();
    for (ln, line) in io::BufReader::new(manifest).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(data_err(format!(
                "manifest line {}: expected name offset count dims",
                ln + 1
            )));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| data_err(format!("manifest line {}: {e}", ln + 1)))
        };
        let offset = parse(fields[1])?;
        let count = parse(fields[2])?;
        let shape: Vec<usize> = fields[3..]
            .iter()
            .map(|s| parse(s))
            .collect::<io::Result<_>>()?;
        entries.push((fields[0].to_string(), offset, count, shape));
    }

    let mut targets: Vec<&mut crate::diffcore::Parameter> = model.params.iter_mut().collect();
    targets.push(&mut prior.mu);
    targets.push(&mut prior.sigma);

    if entries.len() != targets.len() {
        return Err(data_err(format!(
            "manifest has {} parameters, model expects {}",
            entries.len(),
            targets.len()
        )));
    }
    for (param, (name, offset, count, shape)) in targets.into_iter().zip(entries) {
        if param.name != name {
            return Err(data_err(format!(
                "parameter order mismatch: {name} vs {}",
                param.name
            )));
        }
        if param.shape != shape || param.len() != count {
            return Err(data_err(format!(
                "{name}: shape {shape:?} does not match {:?}",
                param.shape
            )));
        }
        let end = offset + count;
        if end > values.len() {
            return Err(data_err(format!(
                "{name}: data range {offset}..{end} out of bounds"
            )));
        }
        param.values.copy_from_slice(&values[offset..end]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::PriorMode;
    use crate::toydet::model::DetectorConfig;

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = std::env::temp_dir().join(format!("aa_ckpt_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);

        let model = DetectorModel::new(DetectorConfig::tiny(2), 3).unwrap();
        let prior = CenterPrior::with_init(PriorMode::Category, 2, 0.25, 1.5);
        save_checkpoint(&dir, &model, &prior).unwrap();

        let mut restored_model = DetectorModel::new(DetectorConfig::tiny(2), 999).unwrap();
        let mut restored_prior = CenterPrior::new(PriorMode::Category, 2);
        load_checkpoint(&dir, &mut restored_model, &mut restored_prior).unwrap();

        for (a, b) in model.params.iter().zip(&restored_model.params) {
            assert_eq!(a.values, b.values, "{}", a.name);
        }
        assert_eq!(prior.mu.values, restored_prior.mu.values);
        assert_eq!(prior.sigma.values, restored_prior.sigma.values);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn architecture_mismatch_rejected() {
        let dir = std::env::temp_dir().join(format!("aa_ckpt_bad_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let model = DetectorModel::new(DetectorConfig::tiny(2), 3).unwrap();
        let prior = CenterPrior::new(PriorMode::Category, 2);
        save_checkpoint(&dir, &model, &prior).unwrap();

        let mut other = DetectorModel::new(DetectorConfig::tiny(3), 3).unwrap();
        let mut other_prior = CenterPrior::new(PriorMode::Category, 3);
        assert!(load_checkpoint(&dir, &mut other, &mut other_prior).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }
}
