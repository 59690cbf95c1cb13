//! Special functions needed by the propagators and initial states.

const RESCALE_ABOVE: f64 = 1e250;

fn miller_start(x: f64, n_max: usize, margin: f64) -> usize {
    let top = (n_max as f64).max(x);
    let m = top + 30.0 + (margin * top.max(1.0)).sqrt();
    // even start keeps the normalization sum bookkeeping simple
    2 * ((m as usize + 1) / 2)
}

/// `J_0(x) … J_{n_max}(x)` by Miller's backward recurrence, normalized
/// with `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_sequence(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let start = miller_start(x, n_max, 60.0);
    let mut next = 0.0; // J_{k+1}
    let mut curr = 1e-30; // J_k
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        if k <= n_max {
            out[k] = curr;
        }
        if k % 2 == 0 {
            sum += 2.0 * curr;
        }
        let prev = 2.0 * k as f64 / x * curr - next;
        next = curr;
        curr = prev;
        if curr.abs() > RESCALE_ABOVE {
            curr /= RESCALE_ABOVE;
            next /= RESCALE_ABOVE;
            sum /= RESCALE_ABOVE;
            for v in out.iter_mut() {
                *v /= RESCALE_ABOVE;
            }
        }
    }
    out[0] = curr;
    sum += curr;
    for (k, v) in out.iter_mut().enumerate() {
        *v /= sum;
        if sign < 0.0 && k % 2 == 1 {
            *v = -*v;
        }
    }
    out
}

/// Exponentially scaled modified Bessel functions `e^{-x} I_k(x)` for
/// `k = 0..=n_max`, `x ≥ 0`.
pub fn bessel_i_scaled_sequence(x: f64, n_max: usize) -> Vec<f64> {
    assert!(x >= 0.0, "scaled I_n requires a non-negative argument");
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = miller_start(x, n_max, 200.0);
    let mut next = 0.0;
    let mut curr = 1e-30;
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        if k <= n_max {
            out[k] = curr;
        }
        sum += 2.0 * curr;
        let prev = 2.0 * k as f64 / x * curr + next;
        next = curr;
        curr = prev;
        if curr > RESCALE_ABOVE {
            curr /= RESCALE_ABOVE;
            next /= RESCALE_ABOVE;
            sum /= RESCALE_ABOVE;
            for v in out.iter_mut() {
                *v /= RESCALE_ABOVE;
            }
        }
    }
    out[0] = curr;
    sum += curr;
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Generalized Laguerre polynomial `L_n^{(a)}(z)`.
pub fn laguerre(n: usize, a: f64, z: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut curr = 1.0 + a - z;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + a - z) * curr - (k + a) * prev) / (k + 1.0);
        prev = curr;
        curr = next;
    }
    curr
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
