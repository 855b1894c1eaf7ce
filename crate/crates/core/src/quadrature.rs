//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used as an independent oracle for normalization, moments and transform values.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 48;

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kron += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> f64 {
    let (value, err) = whole;
    let roundoff = 50.0 * f64::EPSILON * value.abs();
    if err <= tol || err <= roundoff || depth >= MAX_DEPTH || (b - a).abs() <= 1e-15 * a.abs().max(b.abs()) {
        return value;
    }
    let mid = 0.5 * (a + b);
    let left = kronrod(f, a, mid);
    let right = kronrod(f, mid, b);
    adapt(f, a, mid, left, 0.5 * tol, depth + 1) + adapt(f, mid, b, right, 0.5 * tol, depth + 1)
}

/// ∫ₐᵇ f with absolute error target `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = kronrod(&f, a, b);
    adapt(&f, a, b, whole, tol, 0)
}

/// ∫ₐ^∞ f via the map `t = a + x/(1−x)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> f64 {
    let mapped = |x: f64| {
        let one_minus = 1.0 - x;
        let t = a + x / one_minus;
        let v = f(t);
        if v == 0.0 {
            0.0
        } else {
            v / (one_minus * one_minus)
        }
    };
    integrate(mapped, 0.0, 1.0, tol)
}

/// ∫ₐ^∞ f for integrands whose mass sits on the scale `scale` beyond `a`.
/// Splits at a few multiples of the scale so narrow peaks are not missed.
pub fn integrate_scaled<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64, tol: f64) -> f64 {
    let cuts = [0.0, 0.25, 1.0, 4.0, 16.0];
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += integrate(&f, a + w[0] * scale, a + w[1] * scale, tol / 8.0);
    }
    total + integrate_to_infinity(&f, a + 16.0 * scale, tol / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        assert!((integrate(|x| x * x, 0.0, 3.0, 1e-14) - 9.0).abs() < 1e-13);
        assert!((integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-14) - 1.0).abs() < 1e-12);
        assert!((integrate_scaled(|x| 1e3 * (-1e3 * x).exp(), 0.0, 1e-3, 1e-14) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_weights_sum_to_two() {
        let g: f64 = 2.0 * (WG[0] + WG[1] + WG[2]) + WG[3];
        let k: f64 = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        assert!((g - 2.0).abs() < 1e-15);
        assert!((k - 2.0).abs() < 1e-15);
    }
}
