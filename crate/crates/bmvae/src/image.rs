//! Binary PGM/PPM output for sample grids.
//!
//! Images are laid out on a light-gray canvas in row-major cell order with
//! a two-pixel separator between neighboring cells, so a 2x2 grid of
//! side-`s` images renders as a `(2s + 2) x (2s + 2)` file. One channel
//! writes `P5` (PGM), three channels write `P6` (PPM) with interleaved
//! RGB; intensities in [0, 1] quantize as `round(v * 255)`.

use crate::error::{Error, Result};
use std::io::Write as _;
use std::path::Path;

/// Gap between grid cells, in pixels.
pub const SEPARATOR_WIDTH: usize = 2;

/// Fill value for separators and unused cells.
pub const SEPARATOR_GRAY: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
}

impl GridLayout {
    /// Smallest near-square layout with at least `count` cells.
    pub fn square(count: usize) -> Self {
        let cols = (count.max(1) as f64).sqrt().ceil() as usize;
        let rows = count.max(1).div_ceil(cols);
        Self { rows, cols }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
}

/// `round(v * 255)` with clamping; inputs are expected in [0, 1].
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Composes the grid into raw bytes. Returns `(width, height, pixels)`
/// where `pixels` holds `channels` bytes per pixel.
pub fn render_grid(
    images: &[Vec<f64>],
    width: usize,
    height: usize,
    channels: usize,
    layout: GridLayout,
) -> Result<(usize, usize, Vec<u8>)> {
    if !(channels == 1 || channels == 3) {
        return Err(Error::InvalidArgument(format!(
            "{channels} channels: only grayscale (1) and rgb (3) render"
        )));
    }
    if width == 0 || height == 0 || layout.rows == 0 || layout.cols == 0 {
        return Err(Error::InvalidArgument("empty image or grid".into()));
    }
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images to render".into()));
    }
    if images.len() > layout.cells() {
        return Err(Error::Capacity(format!(
            "{} images do not fit a {}x{} grid",
            images.len(),
            layout.rows,
            layout.cols
        )));
    }
    let per_image = width * height * channels;
    for (i, img) in images.iter().enumerate() {
        if img.len() != per_image {
            return Err(Error::DimensionMismatch(format!(
                "image {i} holds {} values, expected {per_image}",
                img.len()
            )));
        }
        if img.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange(format!("image {i} has intensities outside [0, 1]")));
        }
    }

    let grid_w = layout.cols * width + (layout.cols - 1) * SEPARATOR_WIDTH;
    let grid_h = layout.rows * height + (layout.rows - 1) * SEPARATOR_WIDTH;
    let mut pixels = vec![SEPARATOR_GRAY; grid_w * grid_h * channels];
    for (index, img) in images.iter().enumerate() {
        let cell_r = index / layout.cols;
        let cell_c = index % layout.cols;
        let top = cell_r * (height + SEPARATOR_WIDTH);
        let left = cell_c * (width + SEPARATOR_WIDTH);
        for y in 0..height {
            for x in 0..width {
                for ch in 0..channels {
                    let src = (y * width + x) * channels + ch;
                    let dst = ((top + y) * grid_w + left + x) * channels + ch;
                    pixels[dst] = quantize(img[src]);
                }
            }
        }
    }
    Ok((grid_w, grid_h, pixels))
}

/// Renders and writes the grid as binary PGM (1 channel) or PPM (3).
pub fn write_image_grid(
    path: &Path,
    images: &[Vec<f64>],
    width: usize,
    height: usize,
    channels: usize,
    layout: GridLayout,
) -> Result<()> {
    let (grid_w, grid_h, pixels) = render_grid(images, width, height, channels, layout)?;
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut file = std::fs::File::create(path)?;
    write!(file, "{magic}\n{grid_w} {grid_h}\n255\n")?;
    file.write_all(&pixels)?;
    Ok(())
}

/// Reads a binary PGM/PPM written by this module (or any maxval-255 file).
/// Returns `(width, height, channels, pixels)`.
pub fn read_image(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| crate::error::io_at(path, e))?;
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => {
            return Err(Error::Format { offset: 0, message: "not a binary PGM/PPM file".into() })
        }
    };
    let mut at = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // skip whitespace and # comments between header fields
        loop {
            match bytes.get(at) {
                Some(b) if b.is_ascii_whitespace() => at += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(at), None | Some(b'\n')) {
                        at += 1;
                    }
                }
                _ => break,
            }
        }
        let start = at;
        while bytes.get(at).is_some_and(|b| b.is_ascii_digit()) {
            at += 1;
        }
        *field = std::str::from_utf8(&bytes[start..at])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::Format { offset: start, message: "bad header field".into() })?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format { offset: at, message: format!("unsupported maxval {maxval}") });
    }
    // exactly one whitespace byte separates the header from the raster
    at += 1;
    let want = width * height * channels;
    let pixels = bytes
        .get(at..at + want)
        .ok_or(Error::Format { offset: at, message: "truncated raster".into() })?
        .to_vec();
    Ok((width, height, channels, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_endpoints_and_rounding() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5), 128); // 127.5 rounds away from zero
        assert_eq!(quantize(1.0 / 255.0), 1);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
    }

    #[test]
    fn square_layout_covers_the_count() {
        for count in 1..=26 {
            let l = GridLayout::square(count);
            assert!(l.cells() >= count);
            assert!(l.cols >= l.rows);
            assert!((l.cols - 1) * l.rows < count, "layout {l:?} wastes a column for {count}");
        }
        assert_eq!(GridLayout::square(4), GridLayout { rows: 2, cols: 2 });
        assert_eq!(GridLayout::square(5), GridLayout { rows: 2, cols: 3 });
    }

    #[test]
    fn two_by_two_grid_dimensions_and_separators() {
        let s = 3;
        let images: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 / 4.0; s * s]).collect();
        let layout = GridLayout { rows: 2, cols: 2 };
        let (w, h, px) = render_grid(&images, s, s, 1, layout).unwrap();
        assert_eq!((w, h), (2 * s + 2, 2 * s + 2));
        // separator rows/columns sit between the cells
        for y in 0..h {
            assert_eq!(px[y * w + s], SEPARATOR_GRAY);
            assert_eq!(px[y * w + s + 1], SEPARATOR_GRAY);
        }
        for x in 0..w {
            assert_eq!(px[s * w + x], SEPARATOR_GRAY);
            assert_eq!(px[(s + 1) * w + x], SEPARATOR_GRAY);
        }
        // each cell keeps its own intensity
        assert_eq!(px[0], quantize(0.0));
        assert_eq!(px[s + 2], quantize(0.25));
        assert_eq!(px[(s + 2) * w], quantize(0.5));
        assert_eq!(px[(s + 2) * w + s + 2], quantize(0.75));
    }

    #[test]
    fn unused_cells_stay_gray() {
        let images: Vec<Vec<f64>> = (0..3).map(|_| vec![1.0; 4]).collect();
        let (w, _, px) = render_grid(&images, 2, 2, 1, GridLayout { rows: 2, cols: 2 }).unwrap();
        // bottom-right cell was never drawn
        let top = 2 + SEPARATOR_WIDTH;
        let left = 2 + SEPARATOR_WIDTH;
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(px[(top + y) * w + left + x], SEPARATOR_GRAY);
            }
        }
    }

    #[test]
    fn grayscale_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pgm");
        let images: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 / 3.0; 9]).collect();
        let layout = GridLayout { rows: 2, cols: 2 };
        write_image_grid(&path, &images, 3, 3, 1, layout).unwrap();
        let (w, h, ch, px) = read_image(&path).unwrap();
        let (ew, eh, epx) = render_grid(&images, 3, 3, 1, layout).unwrap();
        assert_eq!((w, h, ch), (ew, eh, 1));
        assert_eq!(px, epx);
    }

    #[test]
    fn rgb_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.ppm");
        let image = vec![
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, 0.5, 0.5, 0.5,
        ];
        write_image_grid(&path, &[image.clone()], 2, 2, 3, GridLayout { rows: 1, cols: 1 }).unwrap();
        let (w, h, ch, px) = read_image(&path).unwrap();
        assert_eq!((w, h, ch), (2, 2, 3));
        assert_eq!(px[..3], [255, 0, 0]);
        assert_eq!(px[9..12], [128, 128, 128]);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let ok = vec![vec![0.5; 4]];
        let layout = GridLayout { rows: 1, cols: 1 };
        assert!(render_grid(&ok, 2, 2, 2, layout).is_err(), "two channels");
        assert!(render_grid(&ok, 3, 2, 1, layout).is_err(), "wrong length");
        assert!(render_grid(&[vec![1.5; 4]], 2, 2, 1, layout).is_err(), "out of range");
        assert!(render_grid(&[], 2, 2, 1, layout).is_err(), "no images");
        let two = vec![vec![0.5; 4], vec![0.5; 4]];
        assert!(render_grid(&two, 2, 2, 1, layout).is_err(), "overfull grid");
    }
}
