//! Published and independently generated reference values.

use chromacodec::color::ImageRGB;

/// Sharma, Wu and Dalal CIEDE2000 test pairs: (L1, a1, b1, L2, a2, b2, dE00).
pub const CIEDE2000_PAIRS: [[f64; 7]; 34] = [
    [50.0, 2.6772, -79.7751, 50.0, 0.0, -82.7485, 2.0425],
    [50.0, 3.1571, -77.2803, 50.0, 0.0, -82.7485, 2.8615],
    [50.0, 2.8361, -74.0200, 50.0, 0.0, -82.7485, 3.4412],
    [50.0, -1.3802, -84.2814, 50.0, 0.0, -82.7485, 1.0000],
    [50.0, -1.1848, -84.8006, 50.0, 0.0, -82.7485, 1.0000],
    [50.0, -0.9009, -85.5211, 50.0, 0.0, -82.7485, 1.0000],
    [50.0, 0.0, 0.0, 50.0, -1.0, 2.0, 2.3669],
    [50.0, -1.0, 2.0, 50.0, 0.0, 0.0, 2.3669],
    [50.0, 2.49, -0.001, 50.0, -2.49, 0.0009, 7.1792],
    [50.0, 2.49, -0.001, 50.0, -2.49, 0.001, 7.1792],
    [50.0, 2.49, -0.001, 50.0, -2.49, 0.0011, 7.2195],
    [50.0, 2.49, -0.001, 50.0, -2.49, 0.0012, 7.2195],
    [50.0, -0.001, 2.49, 50.0, 0.0009, -2.49, 4.8045],
    [50.0, -0.001, 2.49, 50.0, 0.001, -2.49, 4.8045],
    [50.0, -0.001, 2.49, 50.0, 0.0011, -2.49, 4.7461],
    [50.0, 2.5, 0.0, 50.0, 0.0, -2.5, 4.3065],
    [50.0, 2.5, 0.0, 73.0, 25.0, -18.0, 27.1492],
    [50.0, 2.5, 0.0, 61.0, -5.0, 29.0, 22.8977],
    [50.0, 2.5, 0.0, 56.0, -27.0, -3.0, 31.9030],
    [50.0, 2.5, 0.0, 58.0, 24.0, 15.0, 19.4535],
    [50.0, 2.5, 0.0, 50.0, 3.1736, 0.5854, 1.0000],
    [50.0, 2.5, 0.0, 50.0, 3.2972, 0.0, 1.0000],
    [50.0, 2.5, 0.0, 50.0, 1.8634, 0.5757, 1.0000],
    [50.0, 2.5, 0.0, 50.0, 3.2592, 0.3350, 1.0000],
    [60.2574, -34.0099, 36.2677, 60.4626, -34.1751, 39.4387, 1.2644],
    [63.0109, -31.0961, -5.8663, 62.8187, -29.7946, -4.0864, 1.2630],
    [61.2901, 3.7196, -5.3901, 61.4292, 2.2480, -4.9620, 1.8731],
    [35.0831, -44.1164, 3.7933, 35.0232, -40.0716, 1.5901, 1.8645],
    [22.7233, 20.0904, -46.6940, 23.0331, 14.9730, -42.5619, 2.0373],
    [36.4612, 47.8580, 18.3852, 36.2715, 50.5065, 21.2231, 1.4146],
    [90.8027, -2.0831, 1.4410, 91.1528, -1.6435, 0.0447, 1.4441],
    [90.9257, -0.5406, -0.9208, 88.6381, -0.8985, -0.7239, 1.5381],
    [6.7747, -0.2908, -2.4247, 5.8714, -0.0985, -2.2286, 0.6377],
    [2.0776, 0.0795, -1.1350, 0.9033, -0.0636, -0.5514, 0.9082],
];

// Frozen output of tools/oracles/gen_color_oracles.py (tf.image.ssim_multiscale
// and skimage.color.rgb2lab).
pub const MS_SSIM_REFERENCE: [f64; 10] = [
    0.99915057, 0.99651426, 0.99255490, 0.98655051, 0.97924185, 0.97042012, 0.96020842, 0.94917369, 0.93610173,
    0.91983533,
];

/// Same generator as the Python oracle script.
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (-53f64).exp2()
    }
}

/// Pair `k` of the MS-SSIM reference set (values drawn in row-major HWC order).
pub fn reference_pair(k: usize) -> (ImageRGB, ImageRGB) {
    let size = 256;
    let mut rng = SplitMix64(1000 + k as u64);
    let n = size * size * 3;
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let noise: Vec<f64> = (0..n).map(|_| rng.uniform() - 0.5).collect();
    let hwc = |x: usize, y: usize, c: usize| (y * size + x) * 3 + c;
    let base = |x: usize, y: usize, c: usize| 0.5 * raw[hwc(x, y, c)] + 0.5 * raw[hwc((x + size - 1) % size, y, c)];
    let amp = 0.04 * (k + 1) as f64;
    let a = ImageRGB::from_fn(size, size, |x, y| [0, 1, 2].map(|c| base(x, y, c)));
    let b = ImageRGB::from_fn(size, size, |x, y| {
        [0, 1, 2].map(|c| (base(x, y, c) + amp * noise[hwc(x, y, c)]).clamp(0.0, 1.0))
    });
    (a, b)
}
