use crate::geometry::BBox;
use crate::tensor::Tensor3;

/// Gray used outside the resized content, on a `[0, 1]` intensity scale.
pub const PAD_VALUE: f32 = 0.5;

/// Aspect-preserving fit of a `W x H` image into an `S x S` network input.
///
/// Content is `floor(W * S / max)` by `floor(H * S / max)` pixels, centred,
/// with the odd remainder on the bottom/right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LetterboxTransform {
    /// `S / max(W, H)`
    pub scale: f64,
    pub pad_x: u32,
    pub pad_y: u32,
}

impl LetterboxTransform {
    pub fn compute(image_width: usize, image_height: usize, side: usize) -> Self {
        let (cw, ch) = content_size(image_width, image_height, side);
        Self {
            scale: side as f64 / image_width.max(image_height) as f64,
            pad_x: ((side - cw) / 2) as u32,
            pad_y: ((side - ch) / 2) as u32,
        }
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            pad_x: 0,
            pad_y: 0,
        }
    }

    /// Image pixels to network-input pixels.
    pub fn to_network(&self, b: &BBox) -> BBox {
        BBox {
            x1: b.x1 * self.scale + f64::from(self.pad_x),
            y1: b.y1 * self.scale + f64::from(self.pad_y),
            x2: b.x2 * self.scale + f64::from(self.pad_x),
            y2: b.y2 * self.scale + f64::from(self.pad_y),
        }
    }

    /// Network-input pixels back to image pixels.
    pub fn to_image(&self, b: &BBox) -> BBox {
        BBox {
            x1: (b.x1 - f64::from(self.pad_x)) / self.scale,
            y1: (b.y1 - f64::from(self.pad_y)) / self.scale,
            x2: (b.x2 - f64::from(self.pad_x)) / self.scale,
            y2: (b.y2 - f64::from(self.pad_y)) / self.scale,
        }
    }
}

/// Resized content dimensions `(width, height)`, each at least one pixel.
pub fn content_size(image_width: usize, image_height: usize, side: usize) -> (usize, usize) {
    let longest = image_width.max(image_height);
    let cw = (image_width * side / longest).max(1);
    let ch = (image_height * side / longest).max(1);
    (cw, ch)
}

/// Resizes an RGB `3 x H x W` image into the centre of a gray `3 x S x S`
/// canvas using bilinear sampling with pixel-centre alignment.
pub fn letterbox(image: &Tensor3, side: usize) -> (Tensor3, LetterboxTransform) {
    let (channels, h, w) = image.shape();
    let transform = LetterboxTransform::compute(w, h, side);
    let (cw, ch) = content_size(w, h, side);
    let px = transform.pad_x as usize;
    let py = transform.pad_y as usize;
    let mut out = Tensor3::filled(channels, side, side, PAD_VALUE).expect("side is positive");

    if cw == w && ch == h {
        for c in 0..channels {
            for y in 0..h {
                for x in 0..w {
                    out.set(c, y + py, x + px, image.get(c, y, x));
                }
            }
        }
        return (out, transform);
    }

    let sx = w as f64 / cw as f64;
    let sy = h as f64 / ch as f64;
    let taps = |dst: usize, ratio: f64, len: usize| {
        let pos = ((dst as f64 + 0.5) * ratio - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, (pos - lo as f64) as f32)
    };
    let xs: Vec<_> = (0..cw).map(|x| taps(x, sx, w)).collect();
    for y in 0..ch {
        let (y0, y1, fy) = taps(y, sy, h);
        for c in 0..channels {
            for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = image.get(c, y0, x0) * (1.0 - fx) + image.get(c, y0, x1) * fx;
                let bottom = image.get(c, y1, x0) * (1.0 - fx) + image.get(c, y1, x1) * fx;
                out.set(c, y + py, x + px, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    (out, transform)
}
