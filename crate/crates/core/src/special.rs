// SPDX-License-Identifier: Apache-2.0

//! Spherical Bessel functions, Legendre polynomials and sinc.

/// sin(x)/x with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 * (1.0 - x2 / 20.0)
    } else {
        x.sin() / x
    }
}

/// j_0 .. j_lmax at x > 0.
///
/// Ratios j_l/j_{l-1} come from a backward continued fraction, which is
/// stable for every l; the values are then anchored on j_0 or j_1.
pub fn spherical_jn(lmax: usize, x: f64) -> Vec<f64> {
    assert!(x > 0.0, "spherical_jn needs x > 0");
    let mut out = vec![0.0; lmax + 1];
    let j0 = x.sin() / x;
    out[0] = if x < 1e-4 { sinc(x) } else { j0 };
    if lmax == 0 {
        return out;
    }
    let top = lmax + x.ceil() as usize + 40;
    let mut ratios = vec![0.0; top + 2];
    let mut r = 0.0;
    for l in (1..=top).rev() {
        r = x / ((2 * l + 1) as f64 - x * r);
        ratios[l] = r;
    }
    out[1] = if x < 1.0 {
        ratios[1] * out[0]
    } else {
        x.sin() / (x * x) - x.cos() / x
    };
    for l in 2..=lmax {
        out[l] = ratios[l] * out[l - 1];
    }
    out
}

/// y_0 .. y_lmax at x > 0 by upward recurrence (stable for y_l).
pub fn spherical_yn(lmax: usize, x: f64) -> Vec<f64> {
    assert!(x > 0.0, "spherical_yn needs x > 0");
    let mut out = vec![0.0; lmax + 1];
    out[0] = -x.cos() / x;
    if lmax == 0 {
        return out;
    }
    out[1] = -x.cos() / (x * x) - x.sin() / x;
    for l in 2..=lmax {
        out[l] = (2 * l - 1) as f64 / x * out[l - 1] - out[l - 2];
    }
    out
}

/// P_0(c) .. P_lmax(c).
pub fn legendre_p(lmax: usize, c: f64) -> Vec<f64> {
    let mut out = vec![0.0; lmax + 1];
    out[0] = 1.0;
    if lmax >= 1 {
        out[1] = c;
    }
    for l in 2..=lmax {
        let lf = l as f64;
        out[l] = ((2.0 * lf - 1.0) * c * out[l - 1] - (lf - 1.0) * out[l - 2]) / lf;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn bessel_low_orders_match_closed_forms() {
        for &x in &[1e-3, 0.5, 1.0, 3.0, std::f64::consts::PI, 7.5, 20.0] {
            let j = spherical_jn(3, x);
            let y = spherical_yn(3, x);
            let (s, c) = (x.sin(), x.cos());
            let j2 = (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x);
            let y2 = -(3.0 / (x * x) - 1.0) * c / x - 3.0 * s / (x * x);
            assert!(close(j[0], s / x, 1e-14));
            if x > 0.1 {
                assert!(close(j[2], j2, 1e-11), "x={x} {} {}", j[2], j2);
            }
            assert!(close(y[2], y2, 1e-12), "x={x}");
        }
    }

    #[test]
    fn small_argument_asymptotics() {
        let x = 1e-4;
        let j = spherical_jn(5, x);
        // j_l ≈ x^l / (2l+1)!!
        let dfact = [1.0, 3.0, 15.0, 105.0, 945.0, 10395.0];
        for l in 0..=5 {
            assert!(close(j[l], x.powi(l as i32) / dfact[l], 1e-7), "l={l}");
        }
    }

    #[test]
    fn wronskian_holds() {
        // j_{l+1} y_l − j_l y_{l+1} = 1/x²
        for &x in &[0.1, 1.0, 5.0, 30.0] {
            let j = spherical_jn(25, x);
            let y = spherical_yn(25, x);
            for l in 0..25 {
                let w = j[l + 1] * y[l] - j[l] * y[l + 1];
                assert!(close(w, 1.0 / (x * x), 1e-9), "x={x} l={l}");
            }
        }
    }

    #[test]
    fn legendre_values() {
        let p = legendre_p(4, 0.5);
        assert!((p[2] - (-0.125)).abs() < 1e-15);
        assert!((p[4] - (35.0 * 0.0625 - 30.0 * 0.25 + 3.0) / 8.0).abs() < 1e-15);
        assert!(legendre_p(10, 1.0).iter().all(|v| (v - 1.0).abs() < 1e-14));
    }
}
