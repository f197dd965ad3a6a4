use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use difs::Tensor3;

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// `<dir>/<frame:06>.<png|jpg|jpeg>`, first match wins.
pub fn frame_path(dir: &Path, frame: u32) -> Result<PathBuf> {
    for ext in EXTENSIONS {
        let p = dir.join(format!("{frame:06}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    bail!("no image for frame {frame} in {} (expected {frame:06}.png or .jpg)", dir.display())
}

/// Frame ids of every `<digits>.<png|jpg|jpeg>` file in `dir`, ascending.
pub fn list_frames(dir: &Path) -> Result<Vec<u32>> {
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading image directory {}", dir.display()))? {
        let path = entry?.path();
        let (Some(stem), Some(ext)) = (path.file_stem().and_then(|s| s.to_str()), path.extension().and_then(|s| s.to_str()))
        else {
            continue;
        };
        if EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()) && !stem.is_empty() && stem.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(f) = stem.parse::<u32>() {
                frames.push(f);
            }
        }
    }
    frames.sort_unstable();
    frames.dedup();
    Ok(frames)
}

/// Loads an image as a `3 x H x W` tensor on a `[0, 1]` scale.
pub fn load_rgb(path: &Path) -> Result<Tensor3> {
    let img = image::open(path).with_context(|| format!("decoding {}", path.display()))?.to_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Tensor3::from_fn(3, h, w, |c, y, x| img.get_pixel(x as u32, y as u32)[c])?)
}

/// Writes a `3 x H x W` `[0, 1]` tensor as an 8-bit PNG.
pub fn save_png(path: &Path, t: &Tensor3) -> Result<()> {
    let (c, h, w) = t.shape();
    if c != 3 {
        bail!("expected 3 channels, got {c}");
    }
    let img = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch| (t.get(ch, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    });
    img.save(path).with_context(|| format!("writing {}", path.display()))
}
