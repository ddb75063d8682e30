//! Screenshot preprocessing: web crops, element highlighting and mobile
//! downsizing. All functions are pure; randomness comes only from the
//! seed in [`CropSpec`].

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::IngestError;
use crate::model::Rect;

pub const WEB_CROP_WIDTH: u32 = 1280;
pub const WEB_CROP_HEIGHT: u32 = 768;
pub const HIGHLIGHT_STROKE: u32 = 4;
pub const ANDROID_DOWNSIZE_FACTOR: u32 = 4;
pub const HIGHLIGHT_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
pub const PAD_COLOR: Rgb<u8> = Rgb([128, 128, 128]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropSpec {
    pub target_width: u32,
    pub target_height: u32,
    pub margin_seed: u64,
}

impl CropSpec {
    pub fn web(margin_seed: u64) -> Self {
        Self {
            target_width: WEB_CROP_WIDTH,
            target_height: WEB_CROP_HEIGHT,
            margin_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropOutcome {
    pub image: RgbImage,
    /// Crop window in source-image coordinates.
    pub window: Rect,
    /// The interaction box in crop coordinates, clipped to the crop.
    pub bbox_in_crop: Rect,
    pub warnings: Vec<String>,
}

fn image_rect(img: &RgbImage) -> Rect {
    Rect::new(0, 0, img.width() as i64, img.height() as i64)
}

/// Chooses the window start along one axis.
fn place_axis(rng: &mut ChaCha8Rng, image_len: i64, window_len: i64, start: i64, len: i64) -> i64 {
    if image_len <= window_len {
        return 0;
    }
    let max_start = image_len - window_len;
    if len >= window_len {
        return (start + len / 2 - window_len / 2).clamp(0, max_start);
    }
    let lo = (start + len - window_len).max(0);
    let hi = start.min(max_start);
    rng.random_range(lo..=hi)
}

/// Crops a fixed-size window that contains `bbox` with random margins.
///
/// Boxes larger than the window are centred and clipped. Images smaller
/// than the window are padded with neutral gray.
pub fn crop_for_web(image: &RgbImage, bbox: Rect, spec: &CropSpec) -> Result<CropOutcome, IngestError> {
    let bounds = image_rect(image);
    let clamped = bounds.intersection(&bbox).ok_or(IngestError::DisjointBox(bbox))?;
    let (w, h) = (spec.target_width as i64, spec.target_height as i64);
    let mut warnings = Vec::new();
    if clamped != bbox {
        warnings.push(format!("interaction box {bbox:?} clipped to image bounds"));
    }
    if bounds.width < w || bounds.height < h {
        warnings.push(format!(
            "image {}x{} smaller than crop {w}x{h}; padded with gray",
            bounds.width, bounds.height
        ));
    }
    if clamped.width > w || clamped.height > h {
        warnings.push(format!("interaction box {clamped:?} larger than crop window; centred and clipped"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.margin_seed);
    let x = place_axis(&mut rng, bounds.width, w, clamped.x, clamped.width);
    let y = place_axis(&mut rng, bounds.height, h, clamped.y, clamped.height);
    let window = Rect::new(x, y, w, h);

    let mut out = RgbImage::from_pixel(spec.target_width, spec.target_height, PAD_COLOR);
    if let Some(visible) = window.intersection(&bounds) {
        let (src_stride, dst_stride) = (bounds.width as usize * 3, w as usize * 3);
        let len = visible.width as usize * 3;
        let src = image.as_raw();
        let dst: &mut [u8] = &mut out;
        for sy in visible.y..visible.bottom() {
            let s = sy as usize * src_stride + visible.x as usize * 3;
            let d = (sy - y) as usize * dst_stride + (visible.x - x) as usize * 3;
            dst[d..d + len].copy_from_slice(&src[s..s + len]);
        }
    }
    let in_window = window.intersection(&clamped).unwrap_or(Rect::new(x, y, 0, 0));
    let bbox_in_crop = Rect::new(in_window.x - x, in_window.y - y, in_window.width, in_window.height);
    Ok(CropOutcome {
        image: out,
        window,
        bbox_in_crop,
        warnings,
    })
}

/// Draws a red outline of [`HIGHLIGHT_STROKE`] px on the inside of `bbox`,
/// clipped to the image.
pub fn highlight_element(image: &RgbImage, bbox: Rect) -> Result<RgbImage, IngestError> {
    highlight_with_stroke(image, bbox, HIGHLIGHT_STROKE)
}

pub fn highlight_with_stroke(image: &RgbImage, bbox: Rect, stroke: u32) -> Result<RgbImage, IngestError> {
    let visible = image_rect(image)
        .intersection(&bbox)
        .ok_or(IngestError::DisjointBox(bbox))?;
    let s = stroke as i64;
    let mut out = image.clone();
    // Top, bottom, left and right strips; overlaps are painted twice.
    let strips = [
        Rect::new(bbox.x, bbox.y, bbox.width, s),
        Rect::new(bbox.x, bbox.bottom() - s, bbox.width, s),
        Rect::new(bbox.x, bbox.y, s, bbox.height),
        Rect::new(bbox.right() - s, bbox.y, s, bbox.height),
    ];
    for strip in strips.iter().filter_map(|r| r.intersection(&visible)) {
        for y in strip.y..strip.bottom() {
            for x in strip.x..strip.right() {
                out.put_pixel(x as u32, y as u32, HIGHLIGHT_COLOR);
            }
        }
    }
    Ok(out)
}

/// Shrinks each dimension by `factor` (rounding up) with area averaging.
/// Edge blocks that extend past the image average only the pixels present.
pub fn downsize(image: &RgbImage, factor: u32) -> Result<RgbImage, IngestError> {
    let (w, h) = image.dimensions();
    if factor == 0 || w < factor || h < factor {
        return Err(IngestError::TooSmall {
            width: w,
            height: h,
            factor,
        });
    }
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut out = RgbImage::new(ow, oh);
    for oy in 0..oh {
        for ox in 0..ow {
            let (x0, y0) = (ox * factor, oy * factor);
            let (x1, y1) = ((x0 + factor).min(w), (y0 + factor).min(h));
            let mut sum = [0u64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = image.get_pixel(x, y);
                    for c in 0..3 {
                        sum[c] += p[c] as u64;
                    }
                }
            }
            let n = ((x1 - x0) * (y1 - y0)) as u64;
            let avg = sum.map(|s| ((s + n / 2) / n) as u8);
            out.put_pixel(ox, oy, Rgb(avg));
        }
    }
    Ok(out)
}

pub fn downsize_android(image: &RgbImage) -> Result<RgbImage, IngestError> {
    downsize(image, ANDROID_DOWNSIZE_FACTOR)
}

/// Maps a box through a downsizing by `factor`, covering every output
/// pixel the original box touched.
pub fn scale_rect_down(r: Rect, factor: u32) -> Rect {
    let f = factor as i64;
    let x0 = r.x.div_euclid(f);
    let y0 = r.y.div_euclid(f);
    let x1 = (r.right() + f - 1).div_euclid(f);
    let y1 = (r.bottom() + f - 1).div_euclid(f);
    Rect::new(x0, y0, x1 - x0, y1 - y0)
}
