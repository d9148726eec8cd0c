//! sRGB to CIELAB conversion and the CIEDE2000 colour difference.

use super::real::Real;

/// CIELAB triple `(L, a, b)`.
pub type Lab = [f64; 3];

/// D65 reference white in XYZ.
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

/// Linear sRGB to XYZ (IEC 61966-2-1).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn srgb_eotf<T: Real>(c: T) -> T {
    if c.val() <= 0.04045 {
        c / T::cst(12.92)
    } else {
        ((c + T::cst(0.055)) / T::cst(1.055)).powf(2.4)
    }
}

fn lab_f<T: Real>(t: T) -> T {
    const DELTA: f64 = 6.0 / 29.0;
    if t.val() > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / T::cst(3.0 * DELTA * DELTA) + T::cst(4.0 / 29.0)
    }
}

/// sRGB (unit range, D65) to CIELAB, generic over the scalar type.
pub fn srgb_to_lab_generic<T: Real>(rgb: [T; 3]) -> [T; 3] {
    let lin = rgb.map(srgb_eotf);
    let xyz: [T; 3] = std::array::from_fn(|r| {
        lin[0] * T::cst(RGB_TO_XYZ[r][0]) + lin[1] * T::cst(RGB_TO_XYZ[r][1]) + lin[2] * T::cst(RGB_TO_XYZ[r][2])
    });
    let f: [T; 3] = std::array::from_fn(|i| lab_f(xyz[i] / T::cst(WHITE[i])));
    [
        T::cst(116.0) * f[1] - T::cst(16.0),
        T::cst(500.0) * (f[0] - f[1]),
        T::cst(200.0) * (f[1] - f[2]),
    ]
}

pub fn srgb_to_lab(rgb: [f64; 3]) -> Lab {
    srgb_to_lab_generic(rgb)
}

fn deg<T: Real>(rad: T) -> T {
    rad * T::cst(180.0 / std::f64::consts::PI)
}

fn rad<T: Real>(deg: T) -> T {
    deg * T::cst(std::f64::consts::PI / 180.0)
}

/// Hue angle in degrees in `[0, 360)`; zero for the achromatic case.
fn hue_deg<T: Real>(b: T, a: T) -> T {
    if b.val() == 0.0 && a.val() == 0.0 {
        return T::cst(0.0);
    }
    let h = deg(b.atan2(a));
    if h.val() < 0.0 {
        h + T::cst(360.0)
    } else {
        h
    }
}

/// CIEDE2000 with unit parametric weights, generic over the scalar type.
///
/// The hue difference and mean hue use the explicit degree case analysis of
/// the reference formulation; at case boundaries the first matching branch
/// wins.
pub fn ciede2000_generic<T: Real>(lab1: [T; 3], lab2: [T; 3]) -> T {
    let [l1, a1, b1] = lab1;
    let [l2, a2, b2] = lab2;
    let pow25_7 = 25f64.powi(7);

    let c1 = (a1 * a1 + b1 * b1).sqrt();
    let c2 = (a2 * a2 + b2 * b2).sqrt();
    let c_bar = (c1 + c2) / T::cst(2.0);
    let c_bar7 = c_bar.powf(7.0);
    let g = T::cst(0.5) * (T::cst(1.0) - (c_bar7 / (c_bar7 + T::cst(pow25_7))).sqrt());
    let a1p = (T::cst(1.0) + g) * a1;
    let a2p = (T::cst(1.0) + g) * a2;
    let c1p = (a1p * a1p + b1 * b1).sqrt();
    let c2p = (a2p * a2p + b2 * b2).sqrt();
    let h1p = hue_deg(b1, a1p);
    let h2p = hue_deg(b2, a2p);

    let dl = l2 - l1;
    let dc = c2p - c1p;
    let chroma_product = c1p * c2p;
    let dh_angle = if chroma_product.val() == 0.0 {
        T::cst(0.0)
    } else {
        let diff = h2p - h1p;
        if diff.val().abs() <= 180.0 {
            diff
        } else if diff.val() > 180.0 {
            diff - T::cst(360.0)
        } else {
            diff + T::cst(360.0)
        }
    };
    let dh = T::cst(2.0) * chroma_product.sqrt() * rad(dh_angle / T::cst(2.0)).sin();

    let l_bar = (l1 + l2) / T::cst(2.0);
    let c_bar_p = (c1p + c2p) / T::cst(2.0);
    let h_bar = if chroma_product.val() == 0.0 {
        h1p + h2p
    } else {
        let sum = h1p + h2p;
        if (h1p - h2p).val().abs() <= 180.0 {
            sum / T::cst(2.0)
        } else if sum.val() < 360.0 {
            (sum + T::cst(360.0)) / T::cst(2.0)
        } else {
            (sum - T::cst(360.0)) / T::cst(2.0)
        }
    };

    let t = T::cst(1.0) - T::cst(0.17) * rad(h_bar - T::cst(30.0)).cos()
        + T::cst(0.24) * rad(T::cst(2.0) * h_bar).cos()
        + T::cst(0.32) * rad(T::cst(3.0) * h_bar + T::cst(6.0)).cos()
        - T::cst(0.20) * rad(T::cst(4.0) * h_bar - T::cst(63.0)).cos();
    let x = (h_bar - T::cst(275.0)) / T::cst(25.0);
    let d_theta = T::cst(30.0) * (-(x * x)).exp();
    let c_bar_p7 = c_bar_p.powf(7.0);
    let r_c = T::cst(2.0) * (c_bar_p7 / (c_bar_p7 + T::cst(pow25_7))).sqrt();
    let l50 = (l_bar - T::cst(50.0)) * (l_bar - T::cst(50.0));
    let s_l = T::cst(1.0) + T::cst(0.015) * l50 / (T::cst(20.0) + l50).sqrt();
    let s_c = T::cst(1.0) + T::cst(0.045) * c_bar_p;
    let s_h = T::cst(1.0) + T::cst(0.015) * c_bar_p * t;
    let r_t = -(rad(T::cst(2.0) * d_theta).sin()) * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = dh / s_h;
    let sq = tl * tl + tc * tc + th * th + r_t * tc * th;
    if sq.val() <= 0.0 {
        // Identical colours (up to rounding); subgradient zero.
        return T::cst(0.0);
    }
    sq.sqrt()
}

/// CIEDE2000 colour difference (kL = kC = kH = 1).
pub fn ciede2000(lab1: Lab, lab2: Lab) -> f64 {
    ciede2000_generic(lab1, lab2)
}
