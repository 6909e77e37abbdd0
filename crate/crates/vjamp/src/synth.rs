//! Seeded procedural data: face windows, clutter backgrounds, one-face
//! scenes and random layered task graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use vjamp_core::amp::{TaskGraph, TaskKind, TaskNode};
use vjamp_core::{GrayImage, Rect};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Randomized face layout in unit coordinates of its bounding box.
#[derive(Debug, Clone)]
pub struct FaceStyle {
    skin: f64,
    eye_depth: f64,
    mouth_depth: f64,
    eye_dx: f64,
    eye_y: f64,
    mouth_y: f64,
    brow: f64,
    tilt: (f64, f64),
    center: (f64, f64),
    noise: f64,
}

impl FaceStyle {
    pub fn random(rng: &mut impl Rng) -> Self {
        FaceStyle {
            skin: rng.gen_range(120.0..215.0),
            eye_depth: rng.gen_range(55.0..105.0),
            mouth_depth: rng.gen_range(30.0..75.0),
            eye_dx: rng.gen_range(0.17..0.22),
            eye_y: rng.gen_range(0.35..0.42),
            mouth_y: rng.gen_range(0.72..0.79),
            brow: rng.gen_range(0.0..40.0),
            tilt: (rng.gen_range(-35.0..35.0), rng.gen_range(-25.0..25.0)),
            center: (rng.gen_range(0.47..0.53), rng.gen_range(0.0..0.03)),
            noise: rng.gen_range(2.0..9.0),
        }
    }

    /// Face intensity at unit position `(u, v)`, or `None` outside the head.
    fn shade(&self, u: f64, v: f64) -> Option<f64> {
        let (cx, dy) = self.center;
        let hx = (u - cx) / 0.44;
        let hy = (v - 0.52 - dy) / 0.54;
        if hx * hx + hy * hy > 1.0 {
            return None;
        }
        let blob = |x0: f64, y0: f64, rx: f64, ry: f64| {
            let d = ((u - x0) / rx).powi(2) + ((v - y0) / ry).powi(2);
            (1.0 - d).max(0.0).sqrt()
        };
        let mut s = self.skin + self.tilt.0 * (u - 0.5) + self.tilt.1 * (v - 0.5);
        let ey = self.eye_y + dy;
        s -= self.eye_depth * (blob(cx - self.eye_dx, ey, 0.11, 0.07) + blob(cx + self.eye_dx, ey, 0.11, 0.07));
        s -= self.brow * (blob(cx - self.eye_dx, ey - 0.1, 0.13, 0.035) + blob(cx + self.eye_dx, ey - 0.1, 0.13, 0.035));
        s += 18.0 * blob(cx, 0.55 + dy, 0.06, 0.16);
        s -= self.mouth_depth * blob(cx, self.mouth_y + dy, 0.17, 0.05);
        Some(s)
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Paints a face into `img` over `(x, y, size, size)`, keeping the
/// background outside the head outline.
pub fn paint_face(img: &mut GrayImage, r: Rect, style: &FaceStyle, rng: &mut impl Rng) {
    let noise = Normal::new(0.0, style.noise).expect("finite sigma");
    for py in r.y..r.bottom() {
        for px in r.x..r.right() {
            let u = (px - r.x) as f64 / r.w as f64 + 0.5 / r.w as f64;
            let v = (py - r.y) as f64 / r.h as f64 + 0.5 / r.h as f64;
            if let Some(s) = style.shade(u, v) {
                img.set(px, py, to_u8(s + noise.sample(rng)));
            }
        }
    }
}

/// Bilinear value noise with cells of `cell` pixels.
fn value_noise(rng: &mut impl Rng, w: usize, h: usize, cell: f64) -> Vec<f64> {
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / cell;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / cell;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(x0, y0) * (1.0 - tx) + g(x0 + 1, y0) * tx;
            let bot = g(x0, y0 + 1) * (1.0 - tx) + g(x0 + 1, y0 + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Face-free clutter: layered value noise, gradients, boxes, discs and
/// stripes.
pub fn background(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    let base = rng.gen_range(40.0..210.0);
    let mut acc = vec![base; w * h];
    for (cell, amp) in [(48.0, 60.0), (12.0, 30.0), (3.0, 12.0)] {
        let a = amp * rng.gen_range(0.3..1.2);
        for (p, n) in acc.iter_mut().zip(value_noise(rng, w, h, cell)) {
            *p += a * n;
        }
    }
    let (gx, gy) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    for y in 0..h {
        for x in 0..w {
            acc[y * w + x] += gx * x as f64 + gy * y as f64 - gx * w as f64 / 2.0 - gy * h as f64 / 2.0;
        }
    }
    let n_shapes = (w * h) / 900 + rng.gen_range(0..6);
    for _ in 0..n_shapes {
        let tone = rng.gen_range(0.0..255.0);
        let sw = rng.gen_range(3..(w / 3).max(4));
        let sh = rng.gen_range(3..(h / 3).max(4));
        let x0 = rng.gen_range(0..w);
        let y0 = rng.gen_range(0..h);
        let kind = rng.gen_range(0..3);
        let period = rng.gen_range(2..8);
        for y in y0..(y0 + sh).min(h) {
            for x in x0..(x0 + sw).min(w) {
                let (dx, dy) = ((x - x0) as f64 / sw as f64 - 0.5, (y - y0) as f64 / sh as f64 - 0.5);
                let inside = match kind {
                    0 => true,
                    1 => dx * dx + dy * dy <= 0.25,
                    _ => (x + y) / period % 2 == 0,
                };
                if inside {
                    acc[y * w + x] = tone;
                }
            }
        }
    }
    let noise = Normal::new(0.0, rng.gen_range(2.0..8.0)).expect("finite sigma");
    GrayImage::new(w, h, acc.into_iter().map(|v| to_u8(v + noise.sample(rng))).collect()).expect("sized buffer")
}

/// A `size`×`size` window holding one face over a random background.
/// A face painted at a larger size, slightly off-centre, then reduced to
/// `size`×`size` the way the detector's pyramid reduces scenes.
pub fn face_window(rng: &mut impl Rng, size: usize) -> GrayImage {
    let painted = rng.gen_range(size..=size * 2);
    let slack = painted / 8;
    let canvas = painted + 2 * slack;
    let mut img = background(rng, canvas, canvas);
    let face = rng.gen_range(painted * 7 / 8..=painted);
    let lo = slack / 2;
    let hi = slack + painted - face + slack / 2;
    let (dx, dy) = (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi));
    let style = FaceStyle::random(rng);
    paint_face(&mut img, Rect::new(dx, dy, face, face), &style, rng);
    let crop = img.crop(Rect::new(slack, slack, painted, painted)).expect("crop inside canvas");
    vjamp_core::image::downscale_nearest(&crop, size, size).expect("non-empty")
}

/// A `w`×`h` scene with exactly one face; returns the scene and its box.
pub fn face_scene(rng: &mut impl Rng, w: usize, h: usize, min_face: usize, max_face: usize) -> (GrayImage, Rect) {
    let mut img = background(rng, w, h);
    let size = rng.gen_range(min_face..=max_face.min(w).min(h));
    let r = Rect::new(rng.gen_range(0..=w - size), rng.gen_range(0..=h - size), size, size);
    let style = FaceStyle::random(rng);
    paint_face(&mut img, r, &style, rng);
    (img, r)
}

/// Random window crops from freshly generated backgrounds.
pub fn negative_windows(rng: &mut impl Rng, n: usize, size: usize) -> Vec<GrayImage> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let bg = background(rng, 96, 96);
        for _ in 0..8.min(n - out.len()) {
            let s = rng.gen_range(size..=48);
            let r = Rect::new(rng.gen_range(0..=96 - s), rng.gen_range(0..=96 - s), s, s);
            let crop = bg.crop(r).expect("crop inside background");
            out.push(vjamp_core::image::downscale_nearest(&crop, size, size).expect("non-empty"));
        }
    }
    out
}

/// Layered random DAG: `layers` layers of 1..=`max_width` tasks, each task
/// depending on 1..=3 tasks of the previous layer, plus occasional skip
/// edges. Works are uniform in `work_range`.
pub fn random_layered_dag(rng: &mut impl Rng, layers: usize, max_width: usize, work_range: (f64, f64)) -> TaskGraph {
    let mut nodes: Vec<TaskNode> = Vec::new();
    let mut prev: Vec<usize> = Vec::new();
    let mut older: Vec<usize> = Vec::new();
    for _ in 0..layers {
        let width = rng.gen_range(1..=max_width);
        let mut cur = Vec::with_capacity(width);
        for _ in 0..width {
            let id = nodes.len();
            let mut deps = Vec::new();
            if !prev.is_empty() {
                for _ in 0..rng.gen_range(1..=3.min(prev.len())) {
                    let d = prev[rng.gen_range(0..prev.len())];
                    if !deps.contains(&d) {
                        deps.push(d);
                    }
                }
                if !older.is_empty() && rng.gen_bool(0.2) {
                    let d = older[rng.gen_range(0..older.len())];
                    if !deps.contains(&d) {
                        deps.push(d);
                    }
                }
            }
            deps.sort_unstable();
            nodes.push(TaskNode {
                id,
                kind: TaskKind::ScanBlock,
                level: 0,
                work: rng.gen_range(work_range.0..work_range.1),
                deps,
            });
            cur.push(id);
        }
        older.extend(prev);
        prev = cur;
    }
    TaskGraph::new(nodes).expect("layered construction is acyclic")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = face_scene(&mut rng(3), 120, 90, 30, 60);
        let b = face_scene(&mut rng(3), 120, 90, 30, 60);
        assert_eq!(a, b);
        assert_ne!(a.0, face_scene(&mut rng(4), 120, 90, 30, 60).0);
    }

    #[test]
    fn scene_face_inside() {
        let mut r = rng(9);
        for _ in 0..50 {
            let (img, face) = face_scene(&mut r, 100, 80, 24, 80);
            assert!(face.fits(img.width(), img.height()));
            assert!(face.w >= 24 && face.w <= 80);
        }
    }

    #[test]
    fn face_windows_have_dark_eyes() {
        // placement is jittered, so compare averages over many windows
        let mut r = rng(1);
        let mean = |g: &GrayImage| g.as_raw().iter().map(|&p| f64::from(p)).sum::<f64>() / g.as_raw().len() as f64;
        let (mut eyes, mut cheeks) = (0.0, 0.0);
        for _ in 0..40 {
            let w = face_window(&mut r, 24);
            assert_eq!(w.dims(), (24, 24));
            eyes += mean(&w.crop(Rect::new(4, 8, 16, 3)).unwrap());
            cheeks += mean(&w.crop(Rect::new(4, 12, 16, 3)).unwrap());
        }
        assert!(eyes < cheeks);
    }

    #[test]
    fn dag_shape() {
        let mut r = rng(2);
        for _ in 0..50 {
            let g = random_layered_dag(&mut r, 4, 3, (1.0, 10.0));
            assert!(g.len() >= 4 && g.len() <= 12);
            assert!(g.topo_order().is_ok());
            assert!(g.nodes().iter().all(|n| n.deps.iter().all(|&d| d < n.id)));
        }
    }

    #[test]
    fn negatives_sized() {
        let n = negative_windows(&mut rng(0), 13, 24);
        assert_eq!(n.len(), 13);
        assert!(n.iter().all(|w| w.dims() == (24, 24)));
    }
}
