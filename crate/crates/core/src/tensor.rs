//! Dense activation volumes, integer regions and per-channel region sums.
//!
//! A [`Tensor3`] is stored channel-major, then row-major within a channel.
//! Region sums are accumulated in `f64` and emitted as `f32`.
//! [`IntegralTensor`] turns each sum into four lookups per channel, so one
//! integral volume per layer serves every detection in a frame.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("tensor dimensions must be positive, got {channels}x{height}x{width}")]
    EmptyShape {
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("tensor data length {actual} does not match {channels}x{height}x{width}")]
    DataLength {
        channels: usize,
        height: usize,
        width: usize,
        actual: usize,
    },
    #[error("degenerate region ({x1},{y1},{x2},{y2}): need x1 < x2 and y1 < y2")]
    DegenerateRegion {
        x1: usize,
        y1: usize,
        x2: usize,
        y2: usize,
    },
    #[error("region coordinate {coord}={value} exceeds limit {limit}")]
    OutOfBounds {
        coord: &'static str,
        value: usize,
        limit: usize,
    },
}

/// A `channels x height x width` block of `f32` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, TensorError> {
        check_shape(channels, height, width)?;
        let expected = channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width));
        if expected != Some(data.len()) {
            return Err(TensorError::DataLength {
                channels,
                height,
                width,
                actual: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self, TensorError> {
        check_shape(channels, height, width)?;
        Ok(Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self, TensorError> {
        Self::filled(channels, height, width, 0.0)
    }

    /// Builds a tensor by evaluating `f(c, y, x)` for every cell.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, TensorError> {
        check_shape(channels, height, width)?;
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f32) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    /// The region covering the whole spatial extent.
    pub fn full_region(&self) -> RegionI {
        RegionI {
            x1: 0,
            y1: 0,
            x2: self.width,
            y2: self.height,
        }
    }
}

fn check_shape(channels: usize, height: usize, width: usize) -> Result<(), TensorError> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(TensorError::EmptyShape {
            channels,
            height,
            width,
        });
    }
    Ok(())
}

/// Half-open integer rectangle `[x1, x2) x [y1, y2)` in feature-map cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegionI {
    x1: usize,
    y1: usize,
    x2: usize,
    y2: usize,
}

impl RegionI {
    pub fn new(x1: usize, y1: usize, x2: usize, y2: usize) -> Result<Self, TensorError> {
        if x1 >= x2 || y1 >= y2 {
            return Err(TensorError::DegenerateRegion { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> usize {
        self.x1
    }

    pub fn y1(&self) -> usize {
        self.y1
    }

    pub fn x2(&self) -> usize {
        self.x2
    }

    pub fn y2(&self) -> usize {
        self.y2
    }

    pub fn width(&self) -> usize {
        self.x2 - self.x1
    }

    pub fn height(&self) -> usize {
        self.y2 - self.y1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    /// Checks that the region fits inside a `height x width` plane.
    pub fn check_within(&self, height: usize, width: usize) -> Result<(), TensorError> {
        if self.x2 > width {
            return Err(TensorError::OutOfBounds {
                coord: "x2",
                value: self.x2,
                limit: width,
            });
        }
        if self.y2 > height {
            return Err(TensorError::OutOfBounds {
                coord: "y2",
                value: self.y2,
                limit: height,
            });
        }
        Ok(())
    }
}

/// Per-channel sum over `region`, visiting every cell.
pub fn region_sum_naive(t: &Tensor3, region: &RegionI) -> Result<Vec<f32>, TensorError> {
    region.check_within(t.height, t.width)?;
    let mut out = Vec::with_capacity(t.channels);
    for c in 0..t.channels {
        let plane = t.channel(c);
        let mut acc = 0.0f64;
        for y in region.y1..region.y2 {
            let row = &plane[y * t.width..(y + 1) * t.width];
            for &v in &row[region.x1..region.x2] {
                acc += f64::from(v);
            }
        }
        out.push(acc as f32);
    }
    Ok(out)
}

/// Per-channel summed-area table with a zero top row and left column.
///
/// Cell `(c, y, x)` holds the sum of source channel `c` over rows `[0, y)`
/// and columns `[0, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl IntegralTensor {
    pub fn build(t: &Tensor3) -> Self {
        let (channels, height, width) = t.shape();
        let stride = width + 1;
        let plane = (height + 1) * stride;
        let mut data = vec![0.0f64; channels * plane];
        for c in 0..channels {
            let src = t.channel(c);
            let dst = &mut data[c * plane..(c + 1) * plane];
            for y in 0..height {
                let mut row_acc = 0.0f64;
                for x in 0..width {
                    row_acc += f64::from(src[y * width + x]);
                    dst[(y + 1) * stride + x + 1] = dst[y * stride + x + 1] + row_acc;
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Height of the source tensor (the table itself has one more row).
    pub fn source_height(&self) -> usize {
        self.height
    }

    /// Width of the source tensor (the table itself has one more column).
    pub fn source_width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        let stride = self.width + 1;
        self.data[(c * (self.height + 1) + y) * stride + x]
    }

    pub fn region_sum(&self, region: &RegionI) -> Result<Vec<f32>, TensorError> {
        let mut out = vec![0.0f32; self.channels];
        self.region_sum_into(region, &mut out)?;
        Ok(out)
    }

    /// Writes the per-channel sums into `out`, which must hold `channels` values.
    pub fn region_sum_into(&self, region: &RegionI, out: &mut [f32]) -> Result<(), TensorError> {
        region.check_within(self.height, self.width)?;
        assert_eq!(out.len(), self.channels, "output buffer length must equal channel count");
        let stride = self.width + 1;
        let plane = (self.height + 1) * stride;
        let top_left = region.y1 * stride + region.x1;
        let top_right = region.y1 * stride + region.x2;
        let bottom_left = region.y2 * stride + region.x1;
        let bottom_right = region.y2 * stride + region.x2;
        for (c, slot) in out.iter_mut().enumerate() {
            let p = &self.data[c * plane..(c + 1) * plane];
            *slot = (p[bottom_right] - p[top_right] - p[bottom_left] + p[top_left]) as f32;
        }
        Ok(())
    }
}

/// Sum over `region` using a prebuilt integral volume.
pub fn region_sum_fast(it: &IntegralTensor, region: &RegionI) -> Result<Vec<f32>, TensorError> {
    it.region_sum(region)
}
