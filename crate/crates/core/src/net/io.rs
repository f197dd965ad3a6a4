//! `MFCN` weight files.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic "MFCN" | u32 version = 1 | u32 layer count
//! per layer: u32 layer id | u8 kind tag | u32 fields... | f32 blob
//! ```
//!
//! | tag | kind        | u32 fields                                          | f32 blob                        |
//! |-----|-------------|-----------------------------------------------------|---------------------------------|
//! | 0   | conv        | kernel, in, out                                     | out*in*k*k weights, out biases  |
//! | 1   | leaky       | -                                                   | -                               |
//! | 2   | downsample  | in, out                                             | out*in*9 weights, out biases    |
//! | 3   | residual    | source layer id                                     | -                               |
//! | 4   | upsample    | -                                                   | -                               |
//! | 5   | concat      | source layer id                                     | -                               |
//! | 6   | head        | scale, in, classes, anchor count, input side        | anchors (w,h), weights, biases  |
//!
//! Every head repeats the class count and input side; they must agree.

use std::path::Path;

use super::{ConvWeights, LayerKind, LayerSpec, MicroFcn, NetworkDef, NetworkError, Scale};
use crate::binio::{write_atomic, ByteReader, Eof, PutLe};

pub const MAGIC: &[u8; 4] = b"MFCN";
pub const VERSION: u32 = 1;

pub fn load_network(path: impl AsRef<Path>) -> Result<MicroFcn, NetworkError> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| NetworkError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_network(&bytes)
}

pub fn save_network(path: impl AsRef<Path>, net: &MicroFcn) -> Result<(), NetworkError> {
    write_atomic(path.as_ref(), &serialize_network(net)).map_err(|e| NetworkError::Io(e.to_string()))
}

pub fn serialize_network(net: &MicroFcn) -> Vec<u8> {
    let def = net.def();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.put_u32(VERSION);
    out.put_u32(def.layer_count() as u32);
    for spec in def.layers() {
        out.put_u32(spec.id as u32);
        out.put_u8(spec.kind.tag());
        match &spec.kind {
            LayerKind::Conv {
                kernel,
                in_channels,
                out_channels,
            } => {
                out.put_u32(*kernel as u32);
                out.put_u32(*in_channels as u32);
                out.put_u32(*out_channels as u32);
            }
            LayerKind::Downsample {
                in_channels,
                out_channels,
            } => {
                out.put_u32(*in_channels as u32);
                out.put_u32(*out_channels as u32);
            }
            LayerKind::ResidualAdd { source } | LayerKind::Concat { source } => out.put_u32(*source as u32),
            LayerKind::Leaky | LayerKind::Upsample => {}
            LayerKind::DetectionHead {
                scale,
                in_channels,
                anchors,
            } => {
                out.put_u32(u32::from(scale.id()));
                out.put_u32(*in_channels as u32);
                out.put_u32(def.class_count() as u32);
                out.put_u32(anchors.len() as u32);
                out.put_u32(def.input_side() as u32);
                let flat: Vec<f32> = anchors.iter().flat_map(|&(w, h)| [w, h]).collect();
                out.put_f32s(&flat);
            }
        }
        if let Some(w) = net.weights(spec.id) {
            out.put_f32s(&w.weights);
            out.put_f32s(&w.bias);
        }
    }
    out
}

struct Layered<'a> {
    r: ByteReader<'a>,
    layer: Option<usize>,
}

impl Layered<'_> {
    fn trunc(&self) -> NetworkError {
        NetworkError::Truncated { layer: self.layer }
    }

    fn u32(&mut self) -> Result<u32, NetworkError> {
        self.r.u32().map_err(|Eof| self.trunc())
    }

    fn usize(&mut self) -> Result<usize, NetworkError> {
        self.u32().map(|v| v as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, NetworkError> {
        self.r.f32_vec(n).map_err(|Eof| self.trunc())
    }
}

pub fn parse_network(bytes: &[u8]) -> Result<MicroFcn, NetworkError> {
    let mut rd = Layered {
        r: ByteReader::new(bytes),
        layer: None,
    };
    match rd.r.take(4) {
        Ok(m) if m == MAGIC => {}
        Ok(_) => return Err(NetworkError::BadMagic),
        Err(Eof) => return Err(if MAGIC.starts_with(bytes) { rd.trunc() } else { NetworkError::BadMagic }),
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(NetworkError::UnsupportedVersion(version));
    }
    let count = rd.usize()?;
    let mut layers = Vec::new();
    // (weights, bias) lengths are only known after the whole topology is read
    let mut blobs: Vec<Option<(Vec<f32>, Vec<f32>)>> = Vec::new();
    let mut globals: Option<(usize, usize)> = None;

    for expected in 0..count {
        rd.layer = Some(expected);
        let id = rd.usize()?;
        if id != expected {
            return Err(NetworkError::LayerOrder { expected, found: id });
        }
        let tag = rd.r.u8().map_err(|Eof| rd.trunc())?;
        let read_conv = |rd: &mut Layered, out: usize, n_weights: Option<usize>| {
            let n = n_weights.ok_or_else(|| NetworkError::ShapeMismatch {
                layer: id,
                detail: "parameter count overflows".into(),
            })?;
            let w = rd.f32s(n)?;
            let b = rd.f32s(out)?;
            Ok::<_, NetworkError>(Some((w, b)))
        };
        let (kind, blob) = match tag {
            0 => {
                let kernel = rd.usize()?;
                let in_channels = rd.usize()?;
                let out_channels = rd.usize()?;
                let n = out_channels
                    .checked_mul(in_channels)
                    .and_then(|v| v.checked_mul(kernel))
                    .and_then(|v| v.checked_mul(kernel));
                let blob = read_conv(&mut rd, out_channels, n)?;
                (
                    LayerKind::Conv {
                        kernel,
                        in_channels,
                        out_channels,
                    },
                    blob,
                )
            }
            1 => (LayerKind::Leaky, None),
            2 => {
                let in_channels = rd.usize()?;
                let out_channels = rd.usize()?;
                let n = out_channels.checked_mul(in_channels).and_then(|v| v.checked_mul(9));
                let blob = read_conv(&mut rd, out_channels, n)?;
                (
                    LayerKind::Downsample {
                        in_channels,
                        out_channels,
                    },
                    blob,
                )
            }
            3 => (LayerKind::ResidualAdd { source: rd.usize()? }, None),
            4 => (LayerKind::Upsample, None),
            5 => (LayerKind::Concat { source: rd.usize()? }, None),
            6 => {
                let scale_id = rd.u32()?;
                let scale = Scale::from_id(scale_id).ok_or_else(|| NetworkError::ShapeMismatch {
                    layer: id,
                    detail: format!("scale id {scale_id} not in 0..=2"),
                })?;
                let in_channels = rd.usize()?;
                let classes = rd.usize()?;
                let n_anchors = rd.usize()?;
                let side = rd.usize()?;
                match globals {
                    None => globals = Some((classes, side)),
                    Some(g) if g != (classes, side) => {
                        return Err(NetworkError::ShapeMismatch {
                            layer: id,
                            detail: format!("head declares classes/side {:?}, earlier head {:?}", (classes, side), g),
                        })
                    }
                    Some(_) => {}
                }
                let flat = rd.f32s(n_anchors.checked_mul(2).ok_or_else(|| rd.trunc())?)?;
                let anchors = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
                let out = classes
                    .checked_add(5)
                    .and_then(|c| c.checked_mul(n_anchors))
                    .ok_or_else(|| rd.trunc())?;
                let blob = read_conv(&mut rd, out, out.checked_mul(in_channels))?;
                (
                    LayerKind::DetectionHead {
                        scale,
                        in_channels,
                        anchors,
                    },
                    blob,
                )
            }
            tag => return Err(NetworkError::UnknownKind { layer: id, tag }),
        };
        layers.push(LayerSpec { id, kind });
        blobs.push(blob);
    }
    if rd.r.remaining() > 0 {
        return Err(NetworkError::TrailingBytes(rd.r.remaining()));
    }
    let (classes, side) = globals.ok_or_else(|| NetworkError::Topology("no detection heads".into()))?;
    let def = NetworkDef::new(layers, side, classes)?;
    let weights = blobs
        .into_iter()
        .map(|b| b.map(|(weights, bias)| ConvWeights { weights, bias }))
        .collect();
    MicroFcn::new(def, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::reference;

    #[test]
    fn wrong_magic() {
        let mut bytes = serialize_network(&reference::reference_network(64, 1));
        bytes[0] = b'X';
        assert_eq!(parse_network(&bytes).unwrap_err(), NetworkError::BadMagic);
        assert_eq!(parse_network(b"nope").unwrap_err(), NetworkError::BadMagic);
    }

    #[test]
    fn version_and_truncation() {
        let bytes = serialize_network(&reference::reference_network(64, 1));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert_eq!(parse_network(&v2).unwrap_err(), NetworkError::UnsupportedVersion(2));
        assert_eq!(parse_network(&bytes[..10]).unwrap_err(), NetworkError::Truncated { layer: None });
        assert!(matches!(
            parse_network(&bytes[..bytes.len() - 1]),
            Err(NetworkError::Truncated { layer: Some(_) })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(parse_network(&long).unwrap_err(), NetworkError::TrailingBytes(1));
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let net = reference::reference_network(64, 3);
        let bytes = serialize_network(&net);
        let back = parse_network(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(serialize_network(&back), bytes);
    }

    #[test]
    fn channel_mismatch_names_layer() {
        let net = reference::reference_network(64, 1);
        let mut bytes = serialize_network(&net);
        // layer 0 is a 3x3 conv: header 12 bytes, then id(4) tag(1) kernel(4) in(4)
        let in_pos = 12 + 4 + 1 + 4;
        bytes[in_pos..in_pos + 4].copy_from_slice(&4u32.to_le_bytes());
        // the blob now reads 3 extra kernels, so pad to keep the stream length consistent
        let extra = 8 * 9 * 4;
        let layer0_end = 12 + 4 + 1 + 12 + (8 * 3 * 9 + 8) * 4;
        bytes.splice(layer0_end..layer0_end, std::iter::repeat_n(0u8, extra));
        assert!(matches!(parse_network(&bytes), Err(NetworkError::ShapeMismatch { layer: 0, .. })));
    }
}
