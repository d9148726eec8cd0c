"""Regenerates the frozen reference values used by crates/core/tests/colorspace_metrics.rs.

MS-SSIM references come from TensorFlow's tf.image.ssim_multiscale and Lab
references from scikit-image's rgb2lab; neither shares code with the crate.
"""
import numpy as np
import tensorflow as tf
from skimage.color import rgb2lab

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next_u64() >> 11) * 2.0**-53


def pair(k, size=256):
    """Image pair k, drawn in row-major HWC order: x then a noise field."""
    rng = SplitMix64(1000 + k)
    n = size * size * 3
    x = np.array([rng.uniform() for _ in range(n)]).reshape(size, size, 3)
    noise = np.array([rng.uniform() - 0.5 for _ in range(n)]).reshape(size, size, 3)
    # Smooth the base so the pair looks more like image content than white noise.
    x = 0.5 * x + 0.5 * np.roll(x, 1, axis=1)
    amp = 0.04 * (k + 1)
    y = np.clip(x + amp * noise, 0.0, 1.0)
    return x, y


COLORCHECKER = [
    (115, 82, 68), (194, 150, 130), (98, 122, 157), (87, 108, 67), (133, 128, 177), (103, 189, 170),
    (214, 126, 44), (80, 91, 166), (193, 90, 99), (94, 60, 108), (157, 188, 64), (224, 163, 46),
    (56, 61, 150), (70, 148, 73), (175, 54, 60), (231, 199, 31), (187, 86, 149), (8, 133, 161),
    (243, 243, 242), (200, 200, 200), (160, 160, 160), (122, 122, 121), (85, 85, 85), (52, 52, 52),
]


def main():
    print("const MS_SSIM_REFERENCE: [f64; 10] = [")
    for k in range(10):
        x, y = pair(k)
        v = tf.image.ssim_multiscale(tf.constant(x[None]), tf.constant(y[None]), max_val=1.0)
        # TensorFlow evaluates in float32, so only ~7 digits are meaningful.
        print(f"    {float(v.numpy()[0]):.8f},")
    print("];")
    print()
    print("const LAB_REFERENCE: [([u8; 3], [f64; 3]); 24] = [")
    for rgb in COLORCHECKER:
        lab = rgb2lab(np.array([[rgb]], dtype=np.float64) / 255.0, illuminant="D65", observer="2")[0, 0]
        print(f"    ({list(rgb)}, [{lab[0]:.6f}, {lab[1]:.6f}, {lab[2]:.6f}]),")
    print("];")


if __name__ == "__main__":
    main()
