use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vjamp_core::detect::detect;
use vjamp_core::train::{enumerate_features, train_cascade, Sample, StageTargets};
use vjamp_core::{DetectParams, GrayImage, Rect};

/// Noisy bright block with a dark square in its middle third.
fn paint_target(img: &mut GrayImage, r: Rect, rng: &mut ChaCha8Rng) {
    for y in r.y..r.bottom() {
        for x in r.x..r.right() {
            let (u, v) = ((x - r.x) * 3 / r.w, (y - r.y) * 3 / r.h);
            let base = if (u, v) == (1, 1) { 40 } else { 190 };
            img.set(x, y, base + rng.gen_range(0..25));
        }
    }
}

fn clutter(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    let (a, b) = (rng.gen_range(30..120), rng.gen_range(0..100));
    GrayImage::from_fn(w, h, |x, _| (a + x * b / w + rng.gen_range(0..60)) as u8)
}

#[test]
fn trained_cascade_finds_the_pattern_in_a_scene() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pos: Vec<Sample> = (0..60)
        .map(|_| {
            let mut w = GrayImage::filled(24, 24, 0);
            paint_target(&mut w, Rect::new(0, 0, 24, 24), &mut rng);
            Sample::new(&w, true)
        })
        .collect();
    // plain clutter plus windows that catch the target well off-centre
    let neg: Vec<Sample> = (0..240)
        .map(|i| {
            let mut w = clutter(&mut rng, 24, 24);
            if i % 2 == 1 {
                let mut big = clutter(&mut rng, 48, 48);
                paint_target(&mut big, Rect::new(12, 12, 24, 24), &mut rng);
                let (ox, oy) = loop {
                    let o = (rng.gen_range(0..=24usize), rng.gen_range(0..=24usize));
                    if o.0.abs_diff(12).max(o.1.abs_diff(12)) >= 6 {
                        break o;
                    }
                };
                w = big.crop(Rect::new(ox, oy, 24, 24)).unwrap();
            }
            Sample::new(&w, false)
        })
        .collect();
    let features = enumerate_features((24, 24), 4, 4).unwrap();
    let targets = StageTargets {
        d_min: 0.99,
        f_max: 0.5,
        max_stages: 6,
    };
    let trained = train_cascade(&pos, &neg, &targets, &features).unwrap();
    let c = trained.cascade.unwrap();
    assert!(!c.stages.is_empty());

    let mut scene = clutter(&mut rng, 120, 90);
    let truth = Rect::new(50, 30, 24, 24);
    paint_target(&mut scene, truth, &mut rng);
    let out = detect(&scene, &c, &DetectParams::default()).unwrap();
    assert!(out.detections.iter().any(|d| d.rect().iou(&truth) >= 0.4), "{:?}", out.detections);
}
