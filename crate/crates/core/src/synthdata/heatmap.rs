use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::Array;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    pub height: usize,
    pub width: usize,
    pub sigma: f64,
    pub keypoints: usize,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            sigma: 4.0,
            keypoints: 4,
        }
    }
}

impl HeatmapConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::Domain {
                op: "render_heatmap",
                detail: format!("sigma must be positive, got {}", self.sigma),
            });
        }
        if self.height == 0 || self.width == 0 || self.keypoints == 0 {
            return Err(Error::Config("heatmap extents must be positive".into()));
        }
        Ok(())
    }
}

/// Renders `points[t][k] = [x, y]` as `[T × H × W × K]` Gaussian maps, where
/// cell `(i, j)` holds `exp(−((i − x)² + (j − y)²) / 2σ²)`. Points outside
/// the canvas are allowed.
pub fn render_heatmap(points: &[Vec<[f64; 2]>], cfg: &HeatmapConfig) -> Result<Array> {
    cfg.validate()?;
    let (h, w, k) = (cfg.height, cfg.width, cfg.keypoints);
    let denom = 2.0 * cfg.sigma * cfg.sigma;
    let mut data = Vec::with_capacity(points.len() * h * w * k);
    for (t, frame) in points.iter().enumerate() {
        if frame.len() != k {
            return Err(Error::shape(
                "render_heatmap",
                format!("frame {t} has {} points, expected {k}", frame.len()),
            ));
        }
        if frame.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { op: "render_heatmap" });
        }
        for i in 0..h {
            for j in 0..w {
                for &[x, y] in frame {
                    let (di, dj) = (i as f64 - x, j as f64 - y);
                    data.push((-(di * di + dj * dj) / denom).exp());
                }
            }
        }
    }
    Array::new(&[points.len(), h, w, k], data)
}

/// Top-left corner and extents of a spatial crop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// `⌈scale·n⌉`, tolerant of `0.7 · 10 = 7.000000000000001`.
fn scaled_side(scale: f64, n: usize) -> usize {
    ((scale * n as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Draws a window of side `⌈scale·H⌉ × ⌈scale·W⌉` uniformly inside the canvas.
pub fn crop_window<R: Rng + ?Sized>(height: usize, width: usize, scale: f64, rng: &mut R) -> Result<CropWindow> {
    if scale.is_nan() || scale <= 0.0 || scale > 1.0 {
        return Err(Error::Domain {
            op: "spatial_crop",
            detail: format!("scale {scale} leaves a window larger than the canvas or empty"),
        });
    }
    let (ch, cw) = (scaled_side(scale, height), scaled_side(scale, width));
    Ok(CropWindow {
        top: rng.random_range(0..=height - ch),
        left: rng.random_range(0..=width - cw),
        height: ch,
        width: cw,
    })
}

/// Cuts the same window out of every frame and channel of `[T × H × W × K]`.
pub fn spatial_crop(heatmaps: &Array, win: &CropWindow) -> Result<Array> {
    let s = heatmaps.shape();
    if s.len() != 4 {
        return Err(Error::shape("spatial_crop", format!("expected [T×H×W×K], got {s:?}")));
    }
    let (t, h, w, k) = (s[0], s[1], s[2], s[3]);
    if win.top + win.height > h || win.left + win.width > w || win.height == 0 || win.width == 0 {
        return Err(Error::shape("spatial_crop", format!("window {win:?} exceeds {h}×{w}")));
    }
    let src = heatmaps.data();
    let mut out = Vec::with_capacity(t * win.height * win.width * k);
    for f in 0..t {
        for i in win.top..win.top + win.height {
            let start = ((f * h + i) * w + win.left) * k;
            out.extend_from_slice(&src[start..start + win.width * k]);
        }
    }
    Array::new(&[t, win.height, win.width, k], out)
}

pub fn spatial_crop_augment<R: Rng + ?Sized>(heatmaps: &Array, scale: f64, rng: &mut R) -> Result<(Array, CropWindow)> {
    let s = heatmaps.shape();
    if s.len() != 4 {
        return Err(Error::shape("spatial_crop", format!("expected [T×H×W×K], got {s:?}")));
    }
    let win = crop_window(s[1], s[2], scale, rng)?;
    Ok((spatial_crop(heatmaps, &win)?, win))
}

/// Nearest-neighbour resize of `[T × h × w × K]` to `[T × height × width × K]`.
pub fn resize_nearest(heatmaps: &Array, height: usize, width: usize) -> Result<Array> {
    let s = heatmaps.shape();
    if s.len() != 4 {
        return Err(Error::shape("resize_nearest", format!("expected [T×H×W×K], got {s:?}")));
    }
    let (t, h, w, k) = (s[0], s[1], s[2], s[3]);
    let src = heatmaps.data();
    let mut out = Vec::with_capacity(t * height * width * k);
    for f in 0..t {
        for i in 0..height {
            let si = (i * h) / height;
            for j in 0..width {
                let sj = (j * w) / width;
                let start = ((f * h + si) * w + sj) * k;
                out.extend_from_slice(&src[start..start + k]);
            }
        }
    }
    Array::new(&[t, height, width, k], out)
}
