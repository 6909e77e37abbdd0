use proptest::prelude::*;

use vjamp::netpbm::{decode, encode_pgm, encode_ppm, luma};
use vjamp::platform::{parse_platform, serialize_platform};
use vjamp::vjc::{parse_cascade, serialize_cascade};
use vjamp_core::amp::PlatformModel;
use vjamp_core::{Cascade, GrayImage, HaarFeature, Stage, WeakClassifier, WeightedRect};

fn rect() -> impl Strategy<Value = WeightedRect> {
    (0usize..24, 0usize..24, -4i32..=4).prop_flat_map(|(x, y, wt)| {
        (1..=24 - x, 1..=24 - y).prop_map(move |(w, h)| WeightedRect::new(x, y, w, h, wt))
    })
}

fn cascade() -> impl Strategy<Value = Cascade> {
    let weak = (rect(), rect(), proptest::option::of(rect()), any::<i32>(), any::<i32>(), any::<i32>()).prop_map(
        |(a, b, c, threshold, left, right)| WeakClassifier {
            feature: match c {
                Some(c) => HaarFeature::three(a, b, c),
                None => HaarFeature::two(a, b),
            },
            threshold,
            left,
            right,
        },
    );
    let stage = (proptest::collection::vec(weak, 1..6), any::<i32>()).prop_map(|(weak, threshold)| Stage { weak, threshold });
    proptest::collection::vec(stage, 1..5).prop_map(|stages| Cascade::new(24, 24, stages).unwrap())
}

fn gray() -> impl Strategy<Value = GrayImage> {
    (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h).prop_map(move |d| GrayImage::new(w, h, d).unwrap())
    })
}

proptest! {
    #[test]
    fn cascade_text_round_trips(c in cascade()) {
        let text = serialize_cascade(&c);
        let back = parse_cascade(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(serialize_cascade(&back), text);
    }

    #[test]
    fn pgm_round_trips(img in gray()) {
        prop_assert_eq!(decode(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn ppm_decodes_to_luma(w in 1usize..8, h in 1usize..8, seed in any::<u64>()) {
        let rgb: Vec<u8> = (0..w * h * 3).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
        let img = decode(&encode_ppm(w, h, &rgb)).unwrap();
        for (i, px) in rgb.chunks(3).enumerate() {
            prop_assert_eq!(img.as_raw()[i], luma(px[0], px[1], px[2]));
        }
    }
}

#[test]
fn gray_pixels_keep_their_value_through_rgb() {
    for v in 0..=255u8 {
        assert_eq!(luma(v, v, v), v);
    }
}

#[test]
fn platform_presets_survive_text() {
    for p in [PlatformModel::odroid_xu4(), PlatformModel::rpi3()] {
        assert_eq!(parse_platform(&serialize_platform(&p)).unwrap(), p);
    }
}
