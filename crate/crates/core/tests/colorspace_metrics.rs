//! Color conversions and quality metrics checked against published and
//! independently computed reference values.

use chromacodec::color::{
    ciede2000, ciede2000_image, ciede2000_var, ms_ssim, ms_ssim_db, ms_ssim_var, psnr, rgb_to_yuv, srgb_to_lab,
    yuv_to_rgb, ImageRGB, ImageYUV, MetricReport,
};
use chromacodec::tensor::{GradCheck, Tape, Tensor, Var};
use chromacodec::Error;
use proptest::prelude::*;

mod common;

use common::reference::*;

const LAB_REFERENCE: [([u8; 3], [f64; 3]); 24] = [
    ([115, 82, 68], [38.016817, 11.796021, 13.666053]),
    ([194, 150, 130], [65.667342, 13.673255, 16.901213]),
    ([98, 122, 157], [50.627605, 0.368658, -21.596885]),
    ([87, 108, 67], [42.998129, -15.876622, 20.452840]),
    ([133, 128, 177], [55.683696, 12.761172, -25.165849]),
    ([103, 189, 170], [70.993962, -30.639599, 1.540632]),
    ([214, 126, 44], [61.136152, 28.103800, 56.131392]),
    ([80, 91, 166], [41.120261, 17.406736, -41.877990]),
    ([193, 90, 99], [51.328733, 42.095098, 14.885003]),
    ([94, 60, 108], [31.100499, 24.353415, -22.096434]),
    ([157, 188, 64], [71.896342, -28.104643, 56.958352]),
    ([224, 163, 46], [71.037914, 12.601834, 64.915559]),
    ([56, 61, 150], [30.350156, 26.431485, -49.666349]),
    ([70, 148, 73], [55.033158, -40.137760, 32.298382]),
    ([175, 54, 60], [41.345033, 49.302573, 24.661175]),
    ([231, 199, 31], [80.704335, -3.664490, 77.547991]),
    ([187, 86, 149], [51.143312, 48.146300, -15.280022]),
    ([8, 133, 161], [51.149477, -19.732321, -23.369643]),
    ([243, 243, 242], [95.816746, -0.178573, 0.485091]),
    ([200, 200, 200], [80.604083, -0.002044, 0.003875]),
    ([160, 160, 160], [65.867813, -0.001733, 0.003284]),
    ([122, 122, 121], [51.194753, -0.201202, 0.548632]),
    ([85, 85, 85], [36.145851, -0.001104, 0.002092]),
    ([52, 52, 52], [21.704276, -0.000798, 0.001513]),
];

fn random_image(width: usize, height: usize, seed: u64) -> ImageRGB {
    let mut rng = SplitMix64(seed);
    let planes = (0..3 * width * height).map(|_| rng.uniform()).collect();
    ImageRGB::new(width, height, planes).unwrap()
}

fn add_noise(img: &ImageRGB, amp: f64, seed: u64) -> ImageRGB {
    let mut rng = SplitMix64(seed);
    let planes = img.planes().iter().map(|v| (v + amp * (2.0 * rng.uniform() - 1.0)).clamp(0.0, 1.0)).collect();
    ImageRGB::new(img.width(), img.height(), planes).unwrap()
}

/// Plain nested-loop single-channel MS-SSIM with a full 2-D window.
fn ms_ssim_loop_oracle(x: &ImageRGB, y: &ImageRGB, scales: usize) -> f64 {
    let w5 = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let total_w: f64 = if scales == 5 { 1.0 } else { w5[..scales].iter().sum() };
    let weights: Vec<f64> = w5[..scales].iter().map(|w| w / total_w).collect();
    let g1: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let norm: f64 = g1.iter().sum::<f64>().powi(2);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for c in 0..3 {
        let plane = |img: &ImageRGB| -> Vec<Vec<f64>> {
            (0..img.height()).map(|r| (0..img.width()).map(|col| img.pixel(col, r)[c]).collect()).collect()
        };
        let (mut a, mut b) = (plane(x), plane(y));
        let mut score = 1.0;
        for (s, w) in weights.iter().enumerate() {
            if s > 0 {
                let down = |p: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                    let (h, wd) = (p.len(), p[0].len());
                    let at = |r: usize, q: usize| p[r.min(h - 1)][q.min(wd - 1)];
                    (0..h.div_ceil(2))
                        .map(|r| {
                            (0..wd.div_ceil(2))
                                .map(|q| {
                                    0.25 * (at(2 * r, 2 * q) + at(2 * r + 1, 2 * q) + at(2 * r, 2 * q + 1) + at(2 * r + 1, 2 * q + 1))
                                })
                                .collect()
                        })
                        .collect()
                };
                a = down(&a);
                b = down(&b);
            }
            let (h, wd) = (a.len(), a[0].len());
            let (mut cs_sum, mut ssim_sum) = (0.0, 0.0);
            for r in 0..h - 10 {
                for q in 0..wd - 10 {
                    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..11 {
                        for j in 0..11 {
                            let g = g1[i] * g1[j] / norm;
                            let (u, v) = (a[r + i][q + j], b[r + i][q + j]);
                            mx += g * u;
                            my += g * v;
                            sxx += g * u * u;
                            syy += g * v * v;
                            sxy += g * u * v;
                        }
                    }
                    let cs = (2.0 * (sxy - mx * my) + c2) / (sxx - mx * mx + syy - my * my + c2);
                    cs_sum += cs;
                    ssim_sum += cs * (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
                }
            }
            let count = ((h - 10) * (wd - 10)) as f64;
            let term = if s + 1 == weights.len() { ssim_sum } else { cs_sum } / count;
            score *= term.max(0.0).powf(*w);
        }
        total += score;
    }
    total / 3.0
}

#[test]
fn ciede2000_matches_published_pairs() {
    for (i, p) in CIEDE2000_PAIRS.iter().enumerate() {
        let d = ciede2000([p[0], p[1], p[2]], [p[3], p[4], p[5]]);
        assert!((d - p[6]).abs() <= 1e-4, "pair {}: {d} vs {}", i + 1, p[6]);
        let r = ciede2000([p[3], p[4], p[5]], [p[0], p[1], p[2]]);
        assert!((r - p[6]).abs() <= 1e-4, "pair {} reversed: {r}", i + 1);
    }
}

#[test]
fn ciede2000_identical_is_zero() {
    for p in CIEDE2000_PAIRS {
        assert_eq!(ciede2000([p[0], p[1], p[2]], [p[0], p[1], p[2]]), 0.0);
    }
}

proptest! {
    #[test]
    fn ciede2000_is_symmetric_and_nonnegative(
        l1 in 0.0..100.0f64, a1 in -120.0..120.0f64, b1 in -120.0..120.0f64,
        l2 in 0.0..100.0f64, a2 in -120.0..120.0f64, b2 in -120.0..120.0f64,
    ) {
        let d = ciede2000([l1, a1, b1], [l2, a2, b2]);
        let r = ciede2000([l2, a2, b2], [l1, a1, b1]);
        prop_assert!(d >= 0.0);
        prop_assert!((d - r).abs() < 1e-9, "{} vs {}", d, r);
        if (l1, a1, b1) != (l2, a2, b2) {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn yuv_round_trip(r in 0.0..=1.0f64, g in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let img = ImageRGB::from_fn(1, 1, |_, _| [r, g, b]);
        let back = yuv_to_rgb(&rgb_to_yuv(&img));
        for (x, y) in img.planes().iter().zip(back.planes()) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn yuv_round_trip_on_large_image() {
    let img = random_image(1000, 1000, 7);
    let back = yuv_to_rgb(&rgb_to_yuv(&img));
    let worst = img.planes().iter().zip(back.planes()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn yuv_ranges_and_clamping() {
    let yuv = rgb_to_yuv(&random_image(64, 64, 8));
    assert!(yuv.y_plane.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    assert!(yuv.uv_planes.iter().all(|v| (-0.5 - 1e-12..=0.5 + 1e-12).contains(v)));
    let wild = ImageYUV { width: 1, height: 1, y_plane: vec![1.5], uv_planes: vec![0.9, -0.9] };
    assert!(yuv_to_rgb(&wild).planes().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn lab_matches_reference_conversion() {
    for (rgb, expected) in LAB_REFERENCE {
        let lab = srgb_to_lab(rgb.map(|v| v as f64 / 255.0));
        for c in 0..3 {
            assert!((lab[c] - expected[c]).abs() < 0.05, "{rgb:?}: {lab:?} vs {expected:?}");
        }
    }
}

#[test]
fn lab_white_and_black() {
    let white = srgb_to_lab([1.0; 3]);
    assert!((white[0] - 100.0).abs() < 1e-4 && white[1].abs() < 0.01 && white[2].abs() < 0.01, "{white:?}");
    assert_eq!(srgb_to_lab([0.0; 3]), [0.0; 3]);
}

#[test]
fn ciede2000_image_matches_pixel_loop() {
    let (x, y) = (random_image(23, 17, 11), random_image(23, 17, 12));
    let mut total = 0.0;
    for r in 0..17 {
        for c in 0..23 {
            total += ciede2000(srgb_to_lab(x.pixel(c, r)), srgb_to_lab(y.pixel(c, r)));
        }
    }
    let oracle = total / (23.0 * 17.0);
    assert!((ciede2000_image(&x, &y).unwrap() - oracle).abs() < 1e-8);
    assert_eq!(ciede2000_image(&x, &x).unwrap(), 0.0);
}

#[test]
fn ciede2000_image_of_constant_shift_is_single_pixel_value() {
    let (p, q) = ([0.2, 0.5, 0.7], [0.25, 0.45, 0.72]);
    let x = ImageRGB::from_fn(9, 5, |_, _| p);
    let y = ImageRGB::from_fn(9, 5, |_, _| q);
    let single = ciede2000(srgb_to_lab(p), srgb_to_lab(q));
    assert!((ciede2000_image(&x, &y).unwrap() - single).abs() < 1e-12);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let (x, y) = (random_image(8, 8, 1), random_image(8, 9, 2));
    assert!(matches!(ciede2000_image(&x, &y), Err(Error::Dimension(_))));
    assert!(matches!(psnr(&x, &y), Err(Error::Dimension(_))));
}

#[test]
fn ms_ssim_matches_reference_implementation() {
    for (k, expected) in MS_SSIM_REFERENCE.iter().enumerate() {
        let (x, y) = reference_pair(k);
        let v = ms_ssim(&x, &y).unwrap();
        assert!((v - expected).abs() < 1e-4, "pair {k}: {v} vs {expected}");
    }
}

#[test]
fn ms_ssim_matches_loop_oracle() {
    let (x, y) = reference_pair(3);
    for (w, h, scales) in [(180, 190, 5), (20, 20, 1), (40, 30, 2), (64, 64, 3)] {
        let (x, y) = (x.crop(0, 0, w, h).unwrap(), y.crop(0, 0, w, h).unwrap());
        let oracle = ms_ssim_loop_oracle(&x, &y, scales);
        let v = ms_ssim(&x, &y).unwrap();
        assert!((v - oracle).abs() < 1e-10, "{w}x{h}: {v} vs {oracle}");
    }
}

#[test]
fn ms_ssim_identity_and_small_images() {
    let x = random_image(40, 33, 3);
    assert_eq!(ms_ssim(&x, &x).unwrap(), 1.0);
    let tiny = random_image(10, 10, 4);
    assert!(matches!(ms_ssim(&tiny, &tiny), Err(Error::Usage(_))));
}

#[test]
fn ms_ssim_decreases_with_noise_amplitude() {
    let (x, _) = reference_pair(0);
    let scores: Vec<f64> = [0.01, 0.05, 0.1].iter().map(|&a| ms_ssim(&x, &add_noise(&x, a, 99)).unwrap()).collect();
    assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
}

#[test]
fn psnr_matches_formula() {
    let (x, y) = (random_image(16, 16, 5), random_image(16, 16, 6));
    let mse: f64 = x.planes().iter().zip(y.planes()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (3.0 * 256.0);
    assert!((psnr(&x, &y).unwrap() - 10.0 * (1.0 / mse).log10()).abs() < 1e-12);
    assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    let gray = ImageRGB::from_fn(4, 4, |_, _| [0.5; 3]);
    let shifted = ImageRGB::from_fn(4, 4, |_, _| [0.6; 3]);
    assert!((psnr(&gray, &shifted).unwrap() - 20.0).abs() < 1e-9);
}

#[test]
fn metric_report_identities() {
    let (x, y) = reference_pair(5);
    let m = MetricReport::compute(&x, &y).unwrap();
    assert_eq!(m.psnr, 10.0 * (1.0 / m.mse).log10());
    assert_eq!(m.ms_ssim_db, -10.0 * (1.0 - m.ms_ssim).log10());
    assert_eq!(m.ms_ssim_db, ms_ssim_db(m.ms_ssim));
    assert!(m.ciede2000 > 0.0);
}

fn hr<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> chromacodec::Result<Var<'t>>,
{
    f
}

#[test]
fn ciede2000_var_gradient_and_value() {
    let reference = random_image(5, 4, 21).to_tensor();
    let recon = random_image(5, 4, 22);
    let tape = Tape::new();
    let v = ciede2000_var(&reference, tape.constant(recon.to_tensor())).unwrap();
    let direct = ciede2000_image(&ImageRGB::from_tensor(&reference, 0).unwrap(), &recon).unwrap();
    assert!((v.item() - direct).abs() < 1e-12);

    let r2 = reference.clone();
    let f = hr(move |_, v| ciede2000_var(&r2, v[0]));
    let err = GradCheck { h: 1e-6, ..Default::default() }.run(f, &[recon.to_tensor()]).unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn ms_ssim_var_gradient() {
    let x = random_image(24, 24, 31).to_tensor();
    let y = add_noise(&random_image(24, 24, 31), 0.2, 32).to_tensor();
    let f = hr(|_, v| ms_ssim_var(v[0], v[1]));
    let err = GradCheck { h: 1e-5, ..Default::default() }.run(f, &[x, y]).unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn from_tensor_round_trip() {
    let x = random_image(6, 3, 40);
    let t: Tensor = x.to_tensor();
    assert_eq!(ImageRGB::from_tensor(&t, 0).unwrap(), x);
}
