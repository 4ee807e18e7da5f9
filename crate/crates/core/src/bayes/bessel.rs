//! Modified Bessel function of the second kind, orders 0 to 2.

use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const EPS: f64 = 1e-16;

/// `(K0(x), K1(x))` for `x > 0`.
pub fn bessel_k01(x: f64) -> (f64, f64) {
    debug_assert!(x > 0.0);
    if x <= 2.0 {
        small_x(x)
    } else {
        steed(x)
    }
}

/// `K2(x)` for `x > 0`, via the recurrence `K2 = K0 + (2/x) K1`.
pub fn bessel_k2(x: f64) -> f64 {
    let (k0, k1) = bessel_k01(x);
    k0 + 2.0 * k1 / x
}

// Power series for I0, I1 and K0; K1 from the Wronskian I0 K1 + I1 K0 = 1/x.
fn small_x(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let (mut i0, mut i1, mut k0s) = (1.0, 0.5 * x, 0.0);
    let (mut term0, mut term1, mut harmonic) = (1.0, 0.5 * x, 0.0);
    for k in 1..60 {
        let kf = k as f64;
        term0 *= q / (kf * kf);
        term1 *= q / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        i0 += term0;
        i1 += term1;
        k0s += term0 * harmonic;
        if term0 < EPS * i0 && term1 < EPS * i1 {
            break;
        }
    }
    let k0 = -((0.5 * x).ln() + EULER_GAMMA) * i0 + k0s;
    let k1 = (1.0 / x - i1 * k0) / i0;
    (k0, k1)
}

// Steed's continued fraction CF2 for order zero.
fn steed(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let (mut q1, mut q2) = (0.0, 1.0);
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - a1 * h) / x;
    (k0, k1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // K_nu(x) = ∫_0^∞ exp(-x cosh u) cosh(nu u) du; the trapezoid rule is
    // spectrally accurate for this doubly-exponentially decaying integrand.
    fn quadrature(nu: f64, x: f64) -> f64 {
        let h = 1e-3;
        let mut sum = 0.5 * (-x).exp();
        let mut u: f64 = h;
        loop {
            let f = (-x * u.cosh()).exp() * (nu * u).cosh();
            sum += f;
            if f < 1e-300 || u > 40.0 {
                break;
            }
            u += h;
        }
        sum * h
    }

    #[test]
    fn matches_quadrature_across_branch() {
        for &x in &[0.05, 0.3, 1.0, 1.9, 2.0, 2.1, 3.7, 8.0, 25.0] {
            let (k0, k1) = bessel_k01(x);
            assert_relative_eq!(k0, quadrature(0.0, x), max_relative = 1e-10);
            assert_relative_eq!(k1, quadrature(1.0, x), max_relative = 1e-10);
            assert_relative_eq!(bessel_k2(x), quadrature(2.0, x), max_relative = 1e-10);
        }
    }

    #[test]
    fn small_argument_limit() {
        // K2(x) ~ 2/x² − 1/2 as x → 0.
        let x = 1e-4;
        assert_relative_eq!(bessel_k2(x), 2.0 / (x * x) - 0.5, max_relative = 1e-12);
    }

    #[test]
    fn continuous_at_branch_point() {
        let below = bessel_k2(2.0);
        let above = bessel_k2(2.0 + 1e-12);
        assert_relative_eq!(below, above, max_relative = 1e-11);
    }
}
