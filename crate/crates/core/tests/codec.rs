//! Codec checks against an independent decoder (`jpeg-decoder`).

use qopt::codec::{decode_baseline, encode_jpeg, QuantTableSet};
use qopt::image::{ColorSpace, ImagePlanes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Raw component planes from the reference decoder, without color conversion.
fn reference_planes(bytes: &[u8]) -> (usize, usize, Vec<Vec<u8>>) {
    let mut dec = jpeg_decoder::Decoder::new(bytes);
    dec.set_color_transform(jpeg_decoder::ColorTransform::None);
    let out = dec.decode().expect("reference decoder accepts our file");
    let info = dec.info().unwrap();
    let (w, h) = (info.width as usize, info.height as usize);
    let n = out.len() / (w * h);
    let mut planes = vec![Vec::with_capacity(w * h); n];
    // rows come back as [comp0 row][comp1 row]...
    for row in out.chunks_exact(w * n) {
        for (c, comp_row) in row.chunks_exact(w).enumerate() {
            planes[c].extend_from_slice(comp_row);
        }
    }
    (w, h, planes)
}

pub fn assert_matches_reference(bytes: &[u8]) {
    let ours = decode_baseline(bytes).unwrap();
    let (w, h, planes) = reference_planes(bytes);
    assert_eq!((w, h), (ours.width(), ours.height()));
    assert_eq!(planes.len(), ours.channels());
    for (c, plane) in planes.iter().enumerate() {
        for (i, (&r, &o)) in plane.iter().zip(ours.plane(c)).enumerate() {
            assert_eq!(r as f64, o, "channel {c} sample {i}");
        }
    }
}

fn noise_image(rng: &mut ChaCha8Rng, w: usize, h: usize, color: bool) -> ImagePlanes {
    let n = w * h * if color { 3 } else { 1 };
    // smooth base plus noise so every quantizer setting leaves AC energy
    let data: Vec<u8> = (0..n)
        .map(|i| {
            let x = (i % w) as f64;
            let base = 128.0 + 90.0 * (x * 0.21).sin();
            (base + rng.random_range(-40.0..40.0)).clamp(0.0, 255.0) as u8
        })
        .collect();
    if color {
        ImagePlanes::from_rgb8(w, h, &data).unwrap().to_codec_space()
    } else {
        ImagePlanes::from_gray8(w, h, &data).unwrap()
    }
}

#[test]
fn decodes_identically_to_reference_decoder() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (w, h, color) in [(8, 8, false), (37, 19, true), (64, 48, true), (33, 65, false)] {
        let img = noise_image(&mut rng, w, h, color);
        let channels = img.channels();
        for quality in [5u8, 50, 75, 95, 100] {
            for count in 1..=3 {
                let t = QuantTableSet::standard(quality, channels, count).unwrap();
                assert_matches_reference(&encode_jpeg(&img, &t).unwrap().bytes);
            }
        }
        // random integer tables
        for _ in 0..5 {
            let tables = (0..2)
                .map(|_| std::array::from_fn(|_| rng.random_range(1..=255)))
                .collect();
            let assignment = (0..channels).map(|c| c.min(1)).collect();
            let t = QuantTableSet::from_integer(tables, assignment).unwrap();
            assert_matches_reference(&encode_jpeg(&img, &t).unwrap().bytes);
        }
    }
}

#[test]
fn constant_gray_with_unit_tables_is_exact() {
    for v in [0u8, 17, 128, 254] {
        let img = ImagePlanes::from_gray8(8, 8, &[v; 64]).unwrap();
        let t = QuantTableSet::standard(100, 1, 1).unwrap();
        let bytes = encode_jpeg(&img, &t).unwrap().bytes;
        let (_, _, planes) = reference_planes(&bytes);
        assert!(planes[0].iter().all(|&p| p == v));
        assert_eq!(decode_baseline(&bytes).unwrap(), img);
    }
}

#[test]
fn reference_decoder_sees_our_colorspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = noise_image(&mut rng, 16, 16, true);
    assert_eq!(img.colorspace(), ColorSpace::YCbCr);
    let t = QuantTableSet::standard(90, 3, 2).unwrap();
    let bytes = encode_jpeg(&img, &t).unwrap().bytes;
    let mut dec = jpeg_decoder::Decoder::new(bytes.as_slice());
    dec.decode().unwrap();
    assert_eq!(dec.info().unwrap().pixel_format, jpeg_decoder::PixelFormat::RGB24);
}
