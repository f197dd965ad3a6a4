//! Procedurally rendered traffic scenes with known vehicle identities.
//!
//! Each vehicle has its own body color, stripe pattern and window band.
//! Vehicles are split into groups of four; every frame shows one group, one
//! vehicle per quadrant, with the quadrant assignment, position and size
//! jittered per frame. Frame ids run group by group.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formats::AnnotationRecord;
use crate::geometry::BBox;
use crate::tensor::Tensor3;

const PER_FRAME: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub vehicles: usize,
    pub frames_per_vehicle: usize,
    pub width: usize,
    pub height: usize,
    /// Vehicle body width range in pixels; height is a fixed fraction of it.
    pub min_width: f64,
    pub max_width: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            vehicles: 12,
            frames_per_vehicle: 20,
            width: 384,
            height: 216,
            min_width: 60.0,
            max_width: 90.0,
            seed: 0x7AC0_5CE2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Appearance {
    body: [f32; 3],
    stripe: [f32; 3],
    /// Stripe period in body-relative units; zero means a plain body.
    stripe_period: f32,
    vertical_stripes: bool,
    window_depth: f32,
}

fn hsv(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn appearances(n: usize, rng: &mut ChaCha8Rng) -> Vec<Appearance> {
    (0..n)
        .map(|i| {
            let hue = i as f32 / n as f32 + rng.gen_range(-0.02..0.02);
            let value = if i % 2 == 0 { 0.9 } else { 0.6 };
            Appearance {
                body: hsv(hue, rng.gen_range(0.6..0.95), value),
                stripe: hsv(hue + 0.5, 0.8, 1.0 - value * 0.5),
                stripe_period: [0.0, 0.25, 0.4][i % 3],
                vertical_stripes: (i / 3) % 2 == 1,
                window_depth: rng.gen_range(0.2..0.4),
            }
        })
        .collect()
}

impl Appearance {
    /// Color at body-relative coordinates `(u, v)` in `[0, 1)`.
    fn color(&self, u: f32, v: f32) -> [f32; 3] {
        if v < self.window_depth && (0.15..0.85).contains(&u) {
            return [0.1, 0.12, 0.18];
        }
        if self.stripe_period > 0.0 {
            let t = if self.vertical_stripes { u } else { v };
            if (t / self.stripe_period).fract() < 0.5 {
                return self.stripe;
            }
        }
        self.body
    }
}

/// One rendered sequence: RGB frames on a `[0, 1]` scale plus one
/// annotation per visible vehicle, labeled `veh_NN`.
#[derive(Debug, Clone)]
pub struct Scene {
    pub frames: Vec<(u32, Tensor3)>,
    pub annotations: Vec<AnnotationRecord>,
}

impl Scene {
    pub fn annotations_for(&self, frame: u32) -> impl Iterator<Item = &AnnotationRecord> {
        self.annotations.iter().filter(move |a| a.frame == frame)
    }
}

pub fn vehicle_label(i: usize) -> String {
    format!("veh_{i:02}")
}

/// Renders the scene. Deterministic in `cfg`.
///
/// # Panics
/// If `vehicles` is not a positive multiple of four or the frame cannot hold
/// a vehicle of `max_width` in each quadrant.
pub fn render_scene(cfg: &SceneConfig) -> Scene {
    assert!(cfg.vehicles > 0 && cfg.vehicles.is_multiple_of(PER_FRAME), "vehicles must be a positive multiple of 4");
    let (qw, qh) = (cfg.width as f64 / 2.0, cfg.height as f64 / 2.0);
    assert!(cfg.max_width < qw && cfg.max_width * 0.6 < qh, "vehicles do not fit in a quadrant");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let looks = appearances(cfg.vehicles, &mut rng);
    let mut frames = Vec::new();
    let mut annotations = Vec::new();
    for group in 0..cfg.vehicles / PER_FRAME {
        for t in 0..cfg.frames_per_vehicle {
            let frame = (group * cfg.frames_per_vehicle + t) as u32;
            let mut img = background(cfg, &mut rng);
            let mut quadrants = [0usize, 1, 2, 3];
            quadrants.shuffle(&mut rng);
            for (slot, &q) in quadrants.iter().enumerate() {
                let vehicle = group * PER_FRAME + slot;
                let w = rng.gen_range(cfg.min_width..=cfg.max_width);
                let h = w * 0.6;
                let x0 = (q % 2) as f64 * qw + rng.gen_range(0.0..qw - w);
                let y0 = (q / 2) as f64 * qh + rng.gen_range(0.0..qh - h);
                let bbox = BBox::new(x0, y0, x0 + w, y0 + h).expect("positive size");
                paint(&mut img, &bbox, &looks[vehicle]);
                annotations.push(AnnotationRecord {
                    frame,
                    track: vehicle_label(vehicle),
                    object_type: "Car".into(),
                    bbox,
                });
            }
            frames.push((frame, img));
        }
    }
    Scene { frames, annotations }
}

fn background(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Tensor3 {
    let shade: f32 = rng.gen_range(0.3..0.45);
    let noise: Vec<f32> = (0..cfg.width * cfg.height).map(|_| rng.gen_range(-0.03..0.03)).collect();
    let h = cfg.height;
    let w = cfg.width;
    Tensor3::from_fn(3, h, w, |c, y, x| {
        let gradient = 0.15 * y as f32 / h as f32;
        shade + gradient + noise[y * w + x] + 0.02 * c as f32
    })
    .expect("positive size")
}

fn paint(img: &mut Tensor3, bbox: &BBox, look: &Appearance) {
    let (_, h, w) = img.shape();
    let ys = bbox.y1.floor().max(0.0) as usize..(bbox.y2.ceil() as usize).min(h);
    let xs = bbox.x1.floor().max(0.0) as usize..(bbox.x2.ceil() as usize).min(w);
    for y in ys {
        let v = ((y as f64 + 0.5 - bbox.y1) / bbox.height()) as f32;
        if !(0.0..1.0).contains(&v) {
            continue;
        }
        for x in xs.clone() {
            let u = ((x as f64 + 0.5 - bbox.x1) / bbox.width()) as f32;
            if !(0.0..1.0).contains(&u) {
                continue;
            }
            let rgb = look.color(u, v);
            for (c, value) in rgb.into_iter().enumerate() {
                img.set(c, y, x, value);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scene_shape() {
        let scene = render_scene(&SceneConfig::default());
        assert_eq!(scene.frames.len(), 60);
        assert_eq!(scene.annotations.len(), 240);
        for i in 0..12 {
            let n = scene.annotations.iter().filter(|a| a.track == vehicle_label(i)).count();
            assert_eq!(n, 20);
        }
        for (frame, img) in &scene.frames {
            assert_eq!(img.shape(), (3, 216, 384));
            let boxes: Vec<BBox> = scene.annotations_for(*frame).map(|a| a.bbox).collect();
            assert_eq!(boxes.len(), 4);
            for (i, a) in boxes.iter().enumerate() {
                assert!(a.x1 >= 0.0 && a.y1 >= 0.0 && a.x2 <= 384.0 && a.y2 <= 216.0);
                for b in &boxes[i + 1..] {
                    assert_eq!(a.iou(b), 0.0);
                }
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let cfg = SceneConfig {
            vehicles: 4,
            frames_per_vehicle: 2,
            ..SceneConfig::default()
        };
        let a = render_scene(&cfg);
        let b = render_scene(&cfg);
        assert_eq!(a.annotations, b.annotations);
        for ((fa, ia), (fb, ib)) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa, fb);
            assert_eq!(ia, ib);
        }
    }

    #[test]
    fn painted_pixels_take_the_body_color() {
        let look = appearances(12, &mut ChaCha8Rng::seed_from_u64(1))[0];
        let mut img = Tensor3::zeros(3, 40, 40).unwrap();
        paint(&mut img, &BBox::new(10.0, 10.0, 30.0, 22.0).unwrap(), &look);
        assert_eq!(img.get(0, 0, 0), 0.0);
        let bottom = [img.get(0, 21, 20), img.get(1, 21, 20), img.get(2, 21, 20)];
        assert_eq!(bottom, look.body);
    }
}
