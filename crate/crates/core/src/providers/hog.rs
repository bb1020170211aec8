//! Histogram-of-oriented-gradients global descriptor.
//!
//! The image is resized to a fixed raster, gradients come from centred
//! differences with replicated borders, and each pixel votes its gradient
//! magnitude into one unsigned orientation bin (0..180 degrees) of its cell.
//! Blocks of `block × block` cells slide with a one-cell stride and are
//! L2-normalized with an epsilon guard.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pgm::GrayImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HogError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("invalid HOG configuration: {0}")]
    InvalidConfig(String),
    #[error("a {cells_x}x{cells_y} cell grid cannot hold one {block}x{block} block")]
    ImageTooSmall {
        cells_x: usize,
        cells_y: usize,
        block: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogConfig {
    pub resize: (usize, usize),
    pub cell: usize,
    pub bins: usize,
    pub block: usize,
    pub epsilon: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            resize: (128, 128),
            cell: 8,
            bins: 9,
            block: 2,
            epsilon: 1e-5,
        }
    }
}

/// Columns and rows.
type Grid = (usize, usize);

impl HogConfig {
    /// Returns the cell grid and the block grid.
    fn grids(&self) -> Result<(Grid, Grid), HogError> {
        let (w, h) = self.resize;
        if self.cell == 0 || self.bins == 0 || self.block == 0 || w == 0 || h == 0 {
            return Err(HogError::InvalidConfig(
                "resize, cell, bins and block must all be positive".into(),
            ));
        }
        if w % self.cell != 0 || h % self.cell != 0 {
            return Err(HogError::InvalidConfig(format!(
                "resize {w}x{h} is not divisible by cell size {}",
                self.cell
            )));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(HogError::InvalidConfig("epsilon must be >= 0".into()));
        }
        let (cx, cy) = (w / self.cell, h / self.cell);
        if cx < self.block || cy < self.block {
            return Err(HogError::ImageTooSmall {
                cells_x: cx,
                cells_y: cy,
                block: self.block,
            });
        }
        Ok(((cx, cy), (cx - self.block + 1, cy - self.block + 1)))
    }

    pub fn descriptor_len(&self) -> Result<usize, HogError> {
        let (_, (bx, by)) = self.grids()?;
        Ok(bx * by * self.block * self.block * self.bins)
    }
}

/// Bilinear resample to `w × h` using pixel-centre alignment.
fn resize_bilinear(img: &GrayImage, w: usize, h: usize) -> Vec<f64> {
    let sx = img.width() as f64 / w as f64;
    let sy = img.height() as f64 / h as f64;
    let max_x = img.width() - 1;
    let max_y = img.height() - 1;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(max_y);
        let ty = fy - y0 as f64;
        for x in 0..w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(max_x);
            let tx = fx - x0 as f64;
            let p = |xx, yy| f64::from(img.get(xx, yy));
            let top = p(x0, y0) * (1.0 - tx) + p(x1, y0) * tx;
            let bottom = p(x0, y1) * (1.0 - tx) + p(x1, y1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Per-cell orientation histograms, laid out `[cell_y][cell_x][bin]`.
fn cell_histograms(pix: &[f64], w: usize, h: usize, cfg: &HogConfig) -> Vec<f64> {
    let (cx, cy) = (w / cfg.cell, h / cfg.cell);
    let mut hist = vec![0.0; cx * cy * cfg.bins];
    let bin_width = std::f64::consts::PI / cfg.bins as f64;
    let at = |x: usize, y: usize| pix[y * w + x];
    for y in 0..h {
        for x in 0..w {
            let gx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
            let gy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += std::f64::consts::PI;
            }
            let bin = ((angle / bin_width) as usize) % cfg.bins;
            let cell = (y / cfg.cell) * cx + x / cfg.cell;
            hist[cell * cfg.bins + bin] += mag;
        }
    }
    hist
}

pub fn hog_descriptor(image: &GrayImage, cfg: &HogConfig) -> Result<Vec<f32>, HogError> {
    if image.is_empty() {
        return Err(HogError::EmptyImage);
    }
    let ((cx, _), (bx, by)) = cfg.grids()?;
    let (w, h) = cfg.resize;
    let pix = resize_bilinear(image, w, h);
    let hist = cell_histograms(&pix, w, h, cfg);

    let block_len = cfg.block * cfg.block * cfg.bins;
    let mut out = Vec::with_capacity(bx * by * block_len);
    let mut block = Vec::with_capacity(block_len);
    for by0 in 0..by {
        for bx0 in 0..bx {
            block.clear();
            for dy in 0..cfg.block {
                for dx in 0..cfg.block {
                    let cell = (by0 + dy) * cx + bx0 + dx;
                    block.extend_from_slice(&hist[cell * cfg.bins..(cell + 1) * cfg.bins]);
                }
            }
            let norm =
                (block.iter().map(|v| v * v).sum::<f64>() + cfg.epsilon * cfg.epsilon).sqrt();
            if norm == 0.0 {
                out.extend(std::iter::repeat_n(0.0, block_len));
            } else {
                out.extend(block.iter().map(|v| (v / norm) as f32));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_length() {
        assert_eq!(
            HogConfig::default().descriptor_len().unwrap(),
            15 * 15 * 4 * 9
        );
    }

    #[test]
    fn constant_image_gives_zero_descriptor() {
        let img = GrayImage::from_fn(40, 30, |_, _| 77);
        let d = hog_descriptor(&img, &HogConfig::default()).unwrap();
        assert_eq!(d.len(), 8100);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_votes_horizontal_gradient_bin() {
        let img = GrayImage::from_fn(64, 64, |x, _| if x < 32 { 20 } else { 220 });
        let cfg = HogConfig::default();
        let d = hog_descriptor(&img, &cfg).unwrap();
        let mut per_bin = vec![0.0f64; cfg.bins];
        for (i, v) in d.iter().enumerate() {
            per_bin[i % cfg.bins] += f64::from(*v);
        }
        let total: f64 = per_bin.iter().sum();
        assert!(total > 0.0);
        // A step along x has a purely horizontal gradient: angle 0, bin 0.
        assert!((per_bin[0] - total).abs() < 1e-9 * total);
    }

    #[test]
    fn config_errors() {
        let img = GrayImage::from_fn(8, 8, |x, _| x as u8);
        let bad = HogConfig {
            resize: (30, 32),
            ..HogConfig::default()
        };
        assert!(matches!(
            hog_descriptor(&img, &bad),
            Err(HogError::InvalidConfig(_))
        ));
        let tiny = HogConfig {
            resize: (8, 16),
            ..HogConfig::default()
        };
        assert_eq!(
            hog_descriptor(&img, &tiny),
            Err(HogError::ImageTooSmall {
                cells_x: 1,
                cells_y: 2,
                block: 2
            })
        );
        assert_eq!(
            hog_descriptor(&GrayImage::new(0, 0, vec![]), &HogConfig::default()),
            Err(HogError::EmptyImage)
        );
    }

    #[test]
    fn blocks_are_unit_norm() {
        let img = GrayImage::from_fn(50, 70, |x, y| ((x * 7 + y * 13) % 251) as u8);
        let cfg = HogConfig::default();
        let d = hog_descriptor(&img, &cfg).unwrap();
        for block in d.chunks(cfg.block * cfg.block * cfg.bins) {
            let n: f64 = block
                .iter()
                .map(|&v| f64::from(v).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-4, "block norm {n}");
        }
    }
}
