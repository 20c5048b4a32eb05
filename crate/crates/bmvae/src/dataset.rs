//! Image datasets with named binary attributes.
//!
//! Two sources: IDX files (the classic big-endian digit format, labels
//! becoming one-vs-rest attributes `digit_0`..`digit_9`) and a synthetic
//! bar/box corpus whose attributes are known by construction, used for
//! controlled conditioning experiments.

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<Vec<f64>>,
    width: usize,
    height: usize,
    channels: usize,
    attributes: BTreeMap<String, Vec<u8>>,
}

impl Dataset {
    pub fn new(
        images: Vec<Vec<f64>>,
        width: usize,
        height: usize,
        channels: usize,
        attributes: BTreeMap<String, Vec<u8>>,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("dataset with no images".into()));
        }
        let dim = width * height * channels;
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-sized image shape".into()));
        }
        for (i, img) in images.iter().enumerate() {
            if img.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "image {i} has {} pixels, shape says {dim}",
                    img.len()
                )));
            }
            if img.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument(format!("image {i} has pixels outside [0, 1]")));
            }
        }
        for (name, flags) in &attributes {
            if flags.len() != images.len() {
                return Err(Error::DimensionMismatch(format!(
                    "attribute {name:?} has {} flags for {} images",
                    flags.len(),
                    images.len()
                )));
            }
            if flags.iter().any(|&f| f > 1) {
                return Err(Error::InvalidArgument(format!("attribute {name:?} must be 0/1")));
            }
        }
        Ok(Self { images, width, height, channels, attributes })
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn image_dim(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn image(&self, index: usize) -> &[f64] {
        &self.images[index]
    }

    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn attribute_names(&self) -> Vec<&str> {
        self.attributes.keys().map(String::as_str).collect()
    }

    pub fn attribute(&self, name: &str) -> Result<&[u8]> {
        self.attributes
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attribute {name:?}")))
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format { offset, message: "truncated header".into() });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Loads an IDX image/label pair. Pixels are scaled to [0, 1]; each digit
/// class becomes a binary attribute `digit_0`..`digit_9`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = std::fs::read(images_path).map_err(|e| crate::error::io_at(images_path, e))?;
    let lbl_bytes = std::fs::read(labels_path).map_err(|e| crate::error::io_at(labels_path, e))?;

    let magic = read_u32_be(&img_bytes, 0)?;
    if magic != 0x0000_0803 {
        return Err(Error::Format {
            offset: 0,
            message: format!("image magic {magic:#010x}, expected 0x00000803"),
        });
    }
    let count = read_u32_be(&img_bytes, 4)? as usize;
    let rows = read_u32_be(&img_bytes, 8)? as usize;
    let cols = read_u32_be(&img_bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if img_bytes.len() != expected {
        return Err(Error::Format {
            offset: img_bytes.len().min(expected),
            message: format!("image payload is {} bytes, header implies {expected}", img_bytes.len()),
        });
    }

    let magic = read_u32_be(&lbl_bytes, 0)?;
    if magic != 0x0000_0801 {
        return Err(Error::Format {
            offset: 0,
            message: format!("label magic {magic:#010x}, expected 0x00000801"),
        });
    }
    let lbl_count = read_u32_be(&lbl_bytes, 4)? as usize;
    if lbl_count != count {
        return Err(Error::Format {
            offset: 4,
            message: format!("{lbl_count} labels for {count} images"),
        });
    }
    if lbl_bytes.len() != 8 + count {
        return Err(Error::Format {
            offset: lbl_bytes.len().min(8 + count),
            message: format!("label payload is {} bytes, header implies {}", lbl_bytes.len(), 8 + count),
        });
    }

    let dim = rows * cols;
    let images: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            img_bytes[16 + i * dim..16 + (i + 1) * dim]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect()
        })
        .collect();

    let mut attributes: BTreeMap<String, Vec<u8>> =
        (0..10).map(|d| (format!("digit_{d}"), vec![0u8; count])).collect();
    for (i, &label) in lbl_bytes[8..].iter().enumerate() {
        if label > 9 {
            return Err(Error::Format {
                offset: 8 + i,
                message: format!("label {label} out of digit range"),
            });
        }
        attributes.get_mut(&format!("digit_{label}")).unwrap()[i] = 1;
    }
    Dataset::new(images, cols, rows, 1, attributes)
}

/// Recipe for the synthetic bar/box corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_images: usize,
    /// Square image side, at least 8.
    pub side: usize,
    pub seed: u64,
    /// Probability each attribute is present; 0.5 by default.
    pub attr_probability: f64,
}

impl SynthSpec {
    pub fn new(num_images: usize, side: usize, seed: u64) -> Self {
        Self { num_images, side, seed, attr_probability: 0.5 }
    }
}

pub const SYNTH_ATTRIBUTES: [&str; 5] =
    ["bottom_bar", "center_box", "left_bar", "right_bar", "top_bar"];

/// Region covered by a synthetic attribute, as (row range, col range).
/// Bars are `side/8` pixels thick; the center box spans the middle quarter.
fn synth_region(name: &str, side: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let t = side / 8;
    match name {
        "top_bar" => (0..t, 0..side),
        "bottom_bar" => (side - t..side, 0..side),
        "left_bar" => (0..side, 0..t),
        "right_bar" => (0..side, side - t..side),
        "center_box" => (side / 2 - t..side / 2 + t, side / 2 - t..side / 2 + t),
        other => unreachable!("not a synthetic attribute: {other}"),
    }
}

/// Deterministic synthetic dataset: each attribute appears independently
/// with `attr_probability`, painting its region at intensity 1.0 over a
/// zero background; uniform noise in [0, 0.05] is added and the result is
/// clamped to [0, 1].
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    if spec.num_images == 0 {
        return Err(Error::InvalidArgument("synthetic dataset needs at least one image".into()));
    }
    if spec.side < 8 {
        return Err(Error::InvalidArgument(format!("side {} below the minimum of 8", spec.side)));
    }
    if !(0.0..=1.0).contains(&spec.attr_probability) {
        return Err(Error::InvalidArgument(format!(
            "attribute probability {} outside [0, 1]",
            spec.attr_probability
        )));
    }
    let s = spec.side;
    let mut rng = rng::stream(spec.seed, 0);
    let mut images = Vec::with_capacity(spec.num_images);
    let mut attributes: BTreeMap<String, Vec<u8>> = SYNTH_ATTRIBUTES
        .iter()
        .map(|&n| (n.to_string(), Vec::with_capacity(spec.num_images)))
        .collect();
    for _ in 0..spec.num_images {
        let mut image = vec![0.0f64; s * s];
        for &name in &SYNTH_ATTRIBUTES {
            let present = rng.gen::<f64>() < spec.attr_probability;
            attributes.get_mut(name).unwrap().push(u8::from(present));
            if present {
                let (rows, cols) = synth_region(name, s);
                for r in rows {
                    for c in cols.clone() {
                        image[r * s + c] = 1.0;
                    }
                }
            }
        }
        for p in &mut image {
            *p = (*p + rng.gen::<f64>() * 0.05).min(1.0);
        }
        images.push(image);
    }
    Dataset::new(images, s, s, 1, attributes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_is_deterministic_and_shaped() {
        let spec = SynthSpec::new(20, 16, 7);
        let a = synth_dataset(&spec).unwrap();
        let b = synth_dataset(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_images(), 20);
        assert_eq!(a.image_dim(), 256);
        assert_eq!(a.attribute_names(), SYNTH_ATTRIBUTES.to_vec());
    }

    #[test]
    fn synth_regions_light_up_for_active_attributes() {
        let mut spec = SynthSpec::new(50, 16, 3);
        spec.attr_probability = 0.6;
        let ds = synth_dataset(&spec).unwrap();
        let top = ds.attribute("top_bar").unwrap().to_vec();
        assert!(top.iter().any(|&f| f == 1) && top.iter().any(|&f| f == 0));
        for (i, &on) in top.iter().enumerate() {
            let img = ds.image(i);
            let t = 16 / 8;
            let mean: f64 = img[..t * 16].iter().sum::<f64>() / (t * 16) as f64;
            if on == 1 {
                assert!(mean >= 0.95, "image {i}: top rows at {mean}");
            } else {
                // interior columns only: the side bars overlap the corners
                let interior: Vec<f64> = (0..t)
                    .flat_map(|r| (t..16 - t).map(move |c| (r, c)))
                    .map(|(r, c)| img[r * 16 + c])
                    .collect();
                let mean = interior.iter().sum::<f64>() / interior.len() as f64;
                assert!(mean <= 0.05 + 1e-12, "image {i}: interior top rows at {mean} despite top_bar off");
            }
        }
    }

    #[test]
    fn synth_probability_zero_yields_pure_noise() {
        let mut spec = SynthSpec::new(5, 8, 4);
        spec.attr_probability = 0.0;
        let ds = synth_dataset(&spec).unwrap();
        for name in SYNTH_ATTRIBUTES {
            assert!(ds.attribute(name).unwrap().iter().all(|&f| f == 0));
        }
        let max = ds.images().iter().flatten().cloned().fold(0.0, f64::max);
        assert!(max <= 0.05, "background stays below the noise cap, got {max}");
    }

    #[test]
    fn synth_rejects_tiny_sides() {
        assert!(synth_dataset(&SynthSpec::new(1, 7, 0)).is_err());
    }

    #[test]
    fn idx_round_trip_and_attributes() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images.idx");
        let labels = dir.path().join("labels.idx");
        // two 2x3 images with labels 7 and 0
        let mut img = Vec::new();
        img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&3u32.to_be_bytes());
        img.extend_from_slice(&[0, 51, 102, 153, 204, 255, 255, 204, 153, 102, 51, 0]);
        std::fs::write(&images, img).unwrap();
        let mut lbl = Vec::new();
        lbl.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        lbl.extend_from_slice(&2u32.to_be_bytes());
        lbl.extend_from_slice(&[7, 0]);
        std::fs::write(&labels, lbl).unwrap();

        let ds = load_idx(&images, &labels).unwrap();
        assert_eq!(ds.num_images(), 2);
        assert_eq!((ds.width(), ds.height(), ds.channels()), (3, 2, 1));
        assert_eq!(ds.image(0)[1], 51.0 / 255.0);
        assert_eq!(ds.image(1)[5], 0.0);
        assert_eq!(ds.attribute("digit_7").unwrap(), &[1, 0]);
        assert_eq!(ds.attribute("digit_0").unwrap(), &[0, 1]);
        assert_eq!(ds.attribute("digit_3").unwrap(), &[0, 0]);
    }

    #[test]
    fn idx_errors_carry_byte_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("bad.idx");
        let labels = dir.path().join("labels.idx");
        std::fs::write(&images, 0x0000_0801u32.to_be_bytes()).unwrap();
        std::fs::write(&labels, 0x0000_0801u32.to_be_bytes()).unwrap();
        match load_idx(&images, &labels) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("0x00000801"), "message names the magic: {message}");
            }
            other => panic!("expected a format error, got {other:?}"),
        }

        // valid image header, truncated pixel payload
        let mut img = Vec::new();
        img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        img.extend_from_slice(&1u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&[9, 9]);
        std::fs::write(&images, img).unwrap();
        let mut lbl = Vec::new();
        lbl.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        lbl.extend_from_slice(&1u32.to_be_bytes());
        lbl.push(3);
        std::fs::write(&labels, lbl).unwrap();
        assert!(matches!(load_idx(&images, &labels), Err(Error::Format { offset: 18, .. })));
    }

    #[test]
    fn unknown_attribute_lookup_fails() {
        let ds = synth_dataset(&SynthSpec::new(2, 8, 0)).unwrap();
        assert!(ds.attribute("no_such_attribute").is_err());
    }
}
