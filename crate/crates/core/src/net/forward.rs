use rayon::prelude::*;

use super::{FeatureCache, LayerId, LayerKind, MicroFcn, NetworkError, Scale, LEAKY_SLOPE};
use crate::tensor::Tensor3;

/// Raw head tensors (coarse, medium, fine) and the retained feature maps.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub heads: [Tensor3; 3],
    pub cache: FeatureCache,
}

impl ForwardOutput {
    pub fn head(&self, scale: Scale) -> &Tensor3 {
        &self.heads[scale as usize]
    }
}

impl MicroFcn {
    /// Runs the network on a `3 x S x S` input, keeping the outputs of the
    /// layers listed in `retain`.
    pub fn forward(&self, input: &Tensor3, retain: &[LayerId]) -> Result<ForwardOutput, NetworkError> {
        let side = self.input_side();
        if input.shape() != (3, side, side) {
            return Err(NetworkError::InputShape {
                got: input.shape(),
                side,
            });
        }
        if let Some(&bad) = retain.iter().find(|&&id| id >= self.def.layer_count()) {
            return Err(NetworkError::NoSuchLayer(bad));
        }

        let n = self.def.layer_count();
        let mut outputs: Vec<Option<Tensor3>> = vec![None; n];
        let mut current: Option<LayerId> = None;
        for spec in self.def.layers() {
            let id = spec.id;
            let x = match current {
                Some(c) => outputs[c].as_ref().expect("current output present"),
                None => input,
            };
            let out = match &spec.kind {
                LayerKind::Conv {
                    kernel, out_channels, ..
                } => conv2d(x, self.weights(id).expect("validated"), *kernel, 1, *out_channels),
                LayerKind::Downsample { out_channels, .. } => {
                    conv2d(x, self.weights(id).expect("validated"), 3, 2, *out_channels)
                }
                LayerKind::Leaky => leaky(x),
                LayerKind::ResidualAdd { source } => {
                    let src = outputs[*source].as_ref().expect("source computed");
                    add(x, src)
                }
                LayerKind::Upsample => upsample2x(x),
                LayerKind::Concat { source } => {
                    let src = outputs[*source].as_ref().expect("source computed");
                    concat(x, src)
                }
                LayerKind::DetectionHead { .. } => {
                    let head_channels = self.def.layer_shape(id).expect("validated").channels;
                    let out = conv2d(x, self.weights(id).expect("validated"), 1, 1, head_channels);
                    outputs[id] = Some(out);
                    continue;
                }
            };
            outputs[id] = Some(out);
            current = Some(id);
        }

        let cache: FeatureCache = retain
            .iter()
            .map(|&id| (id, outputs[id].clone().expect("every layer computed")))
            .collect();
        let mut take_head = |s: Scale| outputs[self.def.head_layer(s)].take().expect("head computed");
        let heads = [take_head(Scale::Coarse), take_head(Scale::Medium), take_head(Scale::Fine)];
        Ok(ForwardOutput { heads, cache })
    }
}

/// Zero-padded "same" convolution. Output channels run in parallel; each one
/// accumulates in a fixed order, so results do not depend on thread count.
fn conv2d(input: &Tensor3, w: &super::ConvWeights, kernel: usize, stride: usize, out_channels: usize) -> Tensor3 {
    let (in_c, h, wd) = input.shape();
    let pad = kernel / 2;
    let out_h = (h + 2 * pad - kernel) / stride + 1;
    let out_w = (wd + 2 * pad - kernel) / stride + 1;
    let plane = out_h * out_w;
    let mut data = vec![0.0f32; out_channels * plane];
    data.par_chunks_mut(plane).enumerate().for_each(|(o, out)| {
        out.fill(w.bias[o]);
        for i in 0..in_c {
            let src = input.channel(i);
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let wv = w.weights[((o * in_c + i) * kernel + ky) * kernel + kx];
                    // ox range whose input column ox*stride + kx - pad lands in [0, wd)
                    let ox_lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(stride) };
                    if wd + pad < kx + 1 {
                        continue;
                    }
                    let ox_hi = ((wd + pad - kx - 1) / stride + 1).min(out_w);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in 0..out_h {
                        let iy = oy * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let row = &src[(iy - pad) * wd..(iy - pad + 1) * wd];
                        let dst = &mut out[oy * out_w + ox_lo..oy * out_w + ox_hi];
                        let first = ox_lo * stride + kx - pad;
                        if stride == 1 {
                            for (d, s) in dst.iter_mut().zip(&row[first..]) {
                                *d += wv * s;
                            }
                        } else {
                            for (j, d) in dst.iter_mut().enumerate() {
                                *d += wv * row[first + j * stride];
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor3::new(out_channels, out_h, out_w, data).expect("conv output shape")
}

fn leaky(x: &Tensor3) -> Tensor3 {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v *= LEAKY_SLOPE;
        }
    }
    out
}

fn add(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    out
}

fn upsample2x(x: &Tensor3) -> Tensor3 {
    let (c, h, w) = x.shape();
    Tensor3::from_fn(c, h * 2, w * 2, |ch, y, xx| x.get(ch, y / 2, xx / 2)).expect("upsample shape")
}

fn concat(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let (ca, h, w) = a.shape();
    let mut data = Vec::with_capacity((ca + b.channels()) * h * w);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor3::new(ca + b.channels(), h, w, data).expect("concat shape")
}

#[cfg(test)]
mod tests {
    use super::super::{ConvWeights, LayerSpec, NetworkDef};
    use super::*;

    fn identity_conv_net() -> MicroFcn {
        // 1x1 identity conv in front of a minimal three-head trunk
        let mut layers = vec![LayerSpec {
            id: 0,
            kind: LayerKind::Conv {
                kernel: 1,
                in_channels: 3,
                out_channels: 3,
            },
        }];
        let mut id = 1;
        let mut push = |kind| {
            layers.push(LayerSpec { id, kind });
            id += 1;
        };
        for _ in 0..3 {
            push(LayerKind::Downsample {
                in_channels: 3,
                out_channels: 3,
            });
        }
        for (scale, extra_down) in [(Scale::Fine, true), (Scale::Medium, true), (Scale::Coarse, false)] {
            push(LayerKind::DetectionHead {
                scale,
                in_channels: 3,
                anchors: vec![(8.0, 8.0)],
            });
            if extra_down {
                push(LayerKind::Downsample {
                    in_channels: 3,
                    out_channels: 3,
                });
            }
        }
        let def = NetworkDef::new(layers, 32, 1).unwrap();
        let weights = (0..def.layer_count())
            .map(|id| {
                let n = def.parameter_count(id);
                if n == 0 {
                    return None;
                }
                let out = def.layer_shape(id).unwrap().channels;
                let mut w = vec![0.0f32; n - out];
                if id == 0 {
                    for c in 0..3 {
                        w[c * 3 + c] = 1.0;
                    }
                }
                Some(ConvWeights {
                    weights: w,
                    bias: vec![0.0; out],
                })
            })
            .collect();
        MicroFcn::new(def, weights).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let net = identity_conv_net();
        let input = Tensor3::from_fn(3, 32, 32, |c, y, x| (c * 1000 + y * 32 + x) as f32 * 0.01 - 3.0).unwrap();
        let out = net.forward(&input, &[0]).unwrap();
        assert_eq!(out.cache.get(0).unwrap(), &input);
    }

    #[test]
    fn zero_weights_give_zero_heads() {
        let net = identity_conv_net();
        let input = Tensor3::filled(3, 32, 32, 0.7).unwrap();
        let out = net.forward(&input, &[]).unwrap();
        assert_eq!(out.head(Scale::Coarse).shape(), (6, 1, 1));
        assert_eq!(out.head(Scale::Fine).shape(), (6, 4, 4));
        for h in &out.heads {
            assert!(h.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_wrong_input_and_unknown_retain() {
        let net = identity_conv_net();
        let bad = Tensor3::zeros(3, 16, 32).unwrap();
        assert!(matches!(net.forward(&bad, &[]), Err(NetworkError::InputShape { .. })));
        let ok = Tensor3::zeros(3, 32, 32).unwrap();
        assert_eq!(net.forward(&ok, &[99]).unwrap_err(), NetworkError::NoSuchLayer(99));
    }

    #[test]
    fn stride2_conv_matches_direct_formula() {
        let input = Tensor3::from_fn(2, 6, 6, |c, y, x| ((c + 1) * (y * 7 + x) % 11) as f32 - 5.0).unwrap();
        let w = ConvWeights {
            weights: (0..2 * 2 * 9).map(|i| (i % 5) as f32 - 2.0).collect(),
            bias: vec![0.5, -1.0],
        };
        let out = conv2d(&input, &w, 3, 2, 2);
        assert_eq!(out.shape(), (2, 3, 3));
        for o in 0..2 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut acc = f64::from(w.bias[o]);
                    for i in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if (0..6).contains(&iy) && (0..6).contains(&ix) {
                                    acc += f64::from(w.weights[((o * 2 + i) * 3 + ky) * 3 + kx])
                                        * f64::from(input.get(i, iy as usize, ix as usize));
                                }
                            }
                        }
                    }
                    assert!((f64::from(out.get(o, oy, ox)) - acc).abs() < 1e-4);
                }
            }
        }
    }
}
