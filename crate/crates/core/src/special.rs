//! Special functions needed by the regularized log potentials.

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `Ein(z) = int_0^z (1 - e^{-t}) / t dt`, the entire part of the exponential
/// integral: `E1(z) = Ein(z) - gamma - ln z` for `z > 0`.
pub fn ein(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z <= 1.0 {
        // Alternating series, converges fast on [0, 1].
        let mut term = z;
        let mut sum = z;
        for k in 2..60 {
            let kf = k as f64;
            term *= -z * (kf - 1.0) / (kf * kf);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        expint_e1(z) + EULER_GAMMA + z.ln()
    }
}

/// Exponential integral `E1(z) = int_z^inf e^{-t}/t dt` for `z > 0`.
pub fn expint_e1(z: f64) -> f64 {
    debug_assert!(z > 0.0);
    if z <= 1.0 {
        return ein(z) - EULER_GAMMA - z.ln();
    }
    if z > 700.0 {
        return 0.0;
    }
    // Modified Lentz evaluation of the continued fraction
    // E1(z) = e^{-z} / (z + 1 - 1/(z + 3 - 4/(z + 5 - ...)))
    let tiny = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..200 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn e1_reference_values() {
        // Abramowitz & Stegun table 5.1
        assert!((expint_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((expint_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((expint_e1(2.0) - 0.048_900_510_708_061_1).abs() < 1e-14);
        assert!((expint_e1(10.0) - 4.156_968_929_685_324e-6).abs() < 1e-18);
    }

    #[test]
    fn ein_matches_quadrature() {
        for &z in &[0.01, 0.3, 1.0, 1.7, 4.0, 12.0] {
            let q = simpson(|t| if t == 0.0 { 1.0 } else { (1.0 - (-t).exp()) / t }, 0.0, z, 20_000);
            assert!((ein(z) - q).abs() < 1e-11, "z={z}: {} vs {q}", ein(z));
        }
    }

    #[test]
    fn ein_is_continuous_across_branch() {
        let lo = ein(1.0 - 1e-12);
        let hi = ein(1.0 + 1e-12);
        assert!((lo - hi).abs() < 1e-11);
    }
}
