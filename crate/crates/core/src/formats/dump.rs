//! `DIFD` activation dumps: feature maps exported per frame by any network,
//! plus the letterbox that produced the network input.
//!
//! ```text
//! magic "DIFD" | u32 version = 1 | u32 S | u32 image W | u32 image H
//! f64 letterbox scale | u32 pad_x | u32 pad_y | u32 frame count
//! per frame: u32 frame id | u32 layer count
//!   per layer: u32 layer id | u32 c | u32 h | u32 w | c*h*w f32
//! ```
//!
//! All little-endian. Layers are written in ascending id order.

use std::path::Path;

use super::{read_file, FormatError};
use crate::binio::{write_atomic, ByteReader, Eof, PutLe};
use crate::net::{FeatureCache, LayerId, LetterboxTransform};
use crate::tensor::Tensor3;

pub const DUMP_MAGIC: &[u8; 4] = b"DIFD";
const VERSION: u32 = 1;
const FORMAT: &str = "activation dump";

#[derive(Debug, Clone, PartialEq)]
pub struct DumpFrame {
    pub frame: u32,
    pub layers: FeatureCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub side: u32,
    pub image_width: u32,
    pub image_height: u32,
    pub transform: LetterboxTransform,
    pub frames: Vec<DumpFrame>,
}

impl ActivationDump {
    /// Empty dump whose letterbox is derived from the image size.
    pub fn new(side: u32, image_width: u32, image_height: u32) -> Self {
        Self {
            side,
            image_width,
            image_height,
            transform: LetterboxTransform::compute(image_width as usize, image_height as usize, side as usize),
            frames: Vec::new(),
        }
    }

    pub fn frame(&self, id: u32) -> Option<&DumpFrame> {
        self.frames.iter().find(|f| f.frame == id)
    }

    /// Layer ids present in every frame (all frames carry the same set).
    pub fn layer_ids(&self) -> Vec<LayerId> {
        self.frames.first().map(|f| f.layers.layer_ids().collect()).unwrap_or_default()
    }

    /// Checks the recorded letterbox and the per-frame layer shapes.
    pub fn validate(&self) -> Result<(), FormatError> {
        let invalid = |reason: String| FormatError::Invalid { format: FORMAT, reason };
        if self.side == 0 || self.image_width == 0 || self.image_height == 0 {
            return Err(invalid(format!(
                "side {} and image {}x{} must be positive",
                self.side, self.image_width, self.image_height
            )));
        }
        let expected = LetterboxTransform::compute(self.image_width as usize, self.image_height as usize, self.side as usize);
        let t = &self.transform;
        let scale_ok = (t.scale - expected.scale).abs() <= 1e-9 * expected.scale;
        if !scale_ok || t.pad_x != expected.pad_x || t.pad_y != expected.pad_y {
            return Err(invalid(format!(
                "letterbox (scale {}, pad {},{}) inconsistent with {}x{} image at side {} (expected scale {}, pad {},{})",
                t.scale, t.pad_x, t.pad_y, self.image_width, self.image_height, self.side, expected.scale, expected.pad_x, expected.pad_y
            )));
        }
        let Some(first) = self.frames.first() else {
            return Ok(());
        };
        let shapes = |f: &DumpFrame| f.layers.iter().map(|(id, t)| (id, t.shape())).collect::<Vec<_>>();
        let reference = shapes(first);
        for f in &self.frames[1..] {
            if shapes(f) != reference {
                return Err(invalid(format!(
                    "frame {} layer shapes {:?} differ from frame {} {:?}",
                    f.frame,
                    shapes(f),
                    first.frame,
                    reference
                )));
            }
        }
        let mut ids: Vec<u32> = self.frames.iter().map(|f| f.frame).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("frame {} appears twice", w[0])));
        }
        Ok(())
    }
}

pub fn serialize_dump(dump: &ActivationDump) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DUMP_MAGIC);
    out.put_u32(VERSION);
    out.put_u32(dump.side);
    out.put_u32(dump.image_width);
    out.put_u32(dump.image_height);
    out.put_f64(dump.transform.scale);
    out.put_u32(dump.transform.pad_x);
    out.put_u32(dump.transform.pad_y);
    out.put_u32(dump.frames.len() as u32);
    for f in &dump.frames {
        out.put_u32(f.frame);
        out.put_u32(f.layers.len() as u32);
        for (id, t) in f.layers.iter() {
            out.put_u32(id as u32);
            out.put_u32(t.channels() as u32);
            out.put_u32(t.height() as u32);
            out.put_u32(t.width() as u32);
            out.put_f32s(t.data());
        }
    }
    out
}

pub fn save_dump(path: impl AsRef<Path>, dump: &ActivationDump) -> Result<(), FormatError> {
    dump.validate()?;
    write_atomic(path.as_ref(), &serialize_dump(dump)).map_err(|e| FormatError::io(path.as_ref(), e))
}

pub fn load_dump(path: impl AsRef<Path>) -> Result<ActivationDump, FormatError> {
    parse_dump(&read_file(path.as_ref())?)
}

fn trunc(context: &str) -> impl Fn(Eof) -> FormatError + '_ {
    move |_| FormatError::Truncated {
        format: FORMAT,
        context: context.to_string(),
    }
}

pub fn parse_dump(bytes: &[u8]) -> Result<ActivationDump, FormatError> {
    let mut r = ByteReader::new(bytes);
    match r.take(4) {
        Ok(m) if m == DUMP_MAGIC => {}
        Err(_) if DUMP_MAGIC.starts_with(bytes) => return Err(trunc("magic")(Eof)),
        _ => return Err(FormatError::BadMagic { format: FORMAT }),
    }
    let version = r.u32().map_err(trunc("header"))?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { format: FORMAT, version });
    }
    let side = r.u32().map_err(trunc("header"))?;
    let image_width = r.u32().map_err(trunc("header"))?;
    let image_height = r.u32().map_err(trunc("header"))?;
    let scale = r.f64().map_err(trunc("header"))?;
    let pad_x = r.u32().map_err(trunc("header"))?;
    let pad_y = r.u32().map_err(trunc("header"))?;
    let frame_count = r.u32().map_err(trunc("header"))?;

    let mut frames = Vec::new();
    for fi in 0..frame_count {
        let ctx = format!("frame #{fi}");
        let frame = r.u32().map_err(trunc(&ctx))?;
        let layer_count = r.u32().map_err(trunc(&ctx))?;
        let mut layers = FeatureCache::new();
        for _ in 0..layer_count {
            let id = r.u32().map_err(trunc(&ctx))? as LayerId;
            let lctx = format!("frame {frame} layer {id}");
            let c = r.u32().map_err(trunc(&lctx))? as usize;
            let h = r.u32().map_err(trunc(&lctx))? as usize;
            let w = r.u32().map_err(trunc(&lctx))? as usize;
            let n = c
                .checked_mul(h)
                .and_then(|v| v.checked_mul(w))
                .ok_or_else(|| trunc(&lctx)(Eof))?;
            let data = r.f32_vec(n).map_err(trunc(&lctx))?;
            let t = Tensor3::new(c, h, w, data).map_err(|e| FormatError::Invalid {
                format: FORMAT,
                reason: format!("{lctx}: {e}"),
            })?;
            if layers.contains(id) {
                return Err(FormatError::Invalid {
                    format: FORMAT,
                    reason: format!("{lctx} appears twice"),
                });
            }
            layers.insert(id, t);
        }
        frames.push(DumpFrame { frame, layers });
    }
    if r.remaining() > 0 {
        return Err(FormatError::Invalid {
            format: FORMAT,
            reason: format!("{} trailing bytes", r.remaining()),
        });
    }
    let dump = ActivationDump {
        side,
        image_width,
        image_height,
        transform: LetterboxTransform { scale, pad_x, pad_y },
        frames,
    };
    dump.validate()?;
    Ok(dump)
}
