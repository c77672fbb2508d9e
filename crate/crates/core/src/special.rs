//! Bessel functions of integer order 0 and 1.
//!
//! Values come from `libm` (a port of the FreeBSD msun routines). The tests
//! check them against the integral representations, evaluated by quadrature,
//! on the interval the exponential-decay solver uses.

pub fn j0(z: f64) -> f64 {
    libm::j0(z)
}

pub fn j1(z: f64) -> f64 {
    libm::j1(z)
}

/// Second-kind `Y_0`; `-inf` at 0, NaN for negative arguments.
pub fn y0(z: f64) -> f64 {
    libm::y0(z)
}

/// Second-kind `Y_1`; `-inf` at 0, NaN for negative arguments.
pub fn y1(z: f64) -> f64 {
    libm::y1(z)
}

/// `J_{-1} = -J_1`.
pub fn j_minus1(z: f64) -> f64 {
    -libm::j1(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `J_n(z) = (1/π) ∫_0^π cos(nτ − z sin τ) dτ`; the trapezoid rule is
    /// spectrally accurate for this periodic integrand.
    fn j_integral(n: i32, z: f64) -> f64 {
        let m = 4000;
        let h = PI / m as f64;
        let f = |t: f64| (n as f64 * t - z * t.sin()).cos();
        let mut s = 0.5 * (f(0.0) + f(PI));
        for i in 1..m {
            s += f(i as f64 * h);
        }
        s * h / PI
    }

    /// Composite Simpson on `[a, b]` with `m` (even) panels.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// `Y_n(z) = (1/π)∫_0^π sin(z sin τ − nτ)dτ − (1/π)∫_0^∞ (e^{nt} + (−1)^n e^{−nt}) e^{−z sinh t} dt`.
    fn y_integral(n: i32, z: f64) -> f64 {
        let nf = n as f64;
        let first = simpson(|t| (z * t.sin() - nf * t).sin(), 0.0, PI, 20_000);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        // the tail beyond t where z sinh t > 745 is below double precision
        let upper = (760.0 / z).asinh() + 1.0;
        let second = simpson(
            |t| ((nf * t).exp() + sign * (-nf * t).exp()) * (-z * t.sinh()).exp(),
            0.0,
            upper,
            200_000,
        );
        (first - second) / PI
    }

    #[test]
    fn first_kind_matches_integral() {
        for i in 1..=50 {
            let z = i as f64 * 0.37;
            assert!((j0(z) - j_integral(0, z)).abs() < 1e-12, "J0({z})");
            assert!((j1(z) - j_integral(1, z)).abs() < 1e-12, "J1({z})");
        }
    }

    #[test]
    fn second_kind_matches_integral() {
        for &z in &[0.05, 0.3, 1.0, 2.2, 3.7, 6.0, 11.0, 25.0, 49.0] {
            assert!((y0(z) - y_integral(0, z)).abs() < 1e-10, "Y0({z})");
            assert!((y1(z) - y_integral(1, z)).abs() < 1e-10, "Y1({z})");
        }
    }

    #[test]
    fn frozen_reference_values() {
        // reference values from an independent arbitrary-precision evaluation
        let table = [
            (0.5, 0.242_268_457_674_873_9, -1.471_472_392_670_243),
            (1.0, 0.440_050_585_744_933_5, -0.781_212_821_300_288_7),
            (2.0, 0.576_724_807_756_873_4, -0.107_032_431_540_937_5),
            (10.0, 0.043_472_746_168_861_44, 0.249_015_424_206_953_9),
        ];
        for (z, jv, yv) in table {
            assert!((j1(z) - jv).abs() < 1e-14, "J1({z})");
            assert!((y1(z) - yv).abs() < 1e-14, "Y1({z})");
        }
    }

    #[test]
    fn wronskian() {
        for i in 1..=100 {
            let z = i as f64 * 0.5;
            let w = j1(z) * y0(z) - j0(z) * y1(z);
            assert!((w - 2.0 / (PI * z)).abs() < 1e-14, "z = {z}");
        }
    }

    #[test]
    fn order_minus_one_is_dependent() {
        assert_eq!(j_minus1(1.3), -j1(1.3));
    }
}
