//! Directory layout: `images/<id>.ppm` paired with `masks/<id>.pgm`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::netpbm::{read_image, read_mask, write_pgm, write_ppm};
use crate::data::sample::Sample;
use crate::error::{Error, Result};

pub fn image_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("images").join(format!("{id}.ppm"))
}

pub fn mask_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("masks").join(format!("{id}.pgm"))
}

/// Sorted stems of the files with extension `ext` in `dir`.
pub fn list_stems(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::InvalidArgument(format!("{}: {e}", dir.display())))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

pub fn save_dataset(dir: &Path, samples: &[Sample]) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    for s in samples {
        write_ppm(&s.image, &image_path(dir, &s.id))?;
        write_pgm(&s.mask, &mask_path(dir, &s.id))?;
    }
    Ok(())
}

/// Loads every image with its mask, ordered by id. An image without a mask
/// or a mask without an image is an error.
pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let ids = list_stems(&dir.join("images"), "ppm")?;
    let masks = list_stems(&dir.join("masks"), "pgm")?;
    if let Some(orphan) = masks.iter().find(|m| ids.binary_search(m).is_err()) {
        return Err(Error::InvalidArgument(format!(
            "{}: mask {orphan}.pgm has no matching image",
            dir.display()
        )));
    }
    if ids.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: no images found", dir.display())));
    }
    ids.iter()
        .map(|id| {
            let mp = mask_path(dir, id);
            if !mp.exists() {
                return Err(Error::InvalidArgument(format!("{}: missing mask", mp.display())));
            }
            Sample::new(read_image(&image_path(dir, id))?, read_mask(&mp)?, id.clone())
        })
        .collect()
}
