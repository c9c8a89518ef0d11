//! Special functions.

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln(1 + a) / a`, continuous at `a = 0`.
pub fn log1p_over(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        1.0 - a / 2.0 + a * a / 3.0 - a * a * a / 4.0
    } else {
        a.ln_1p() / a
    }
}

/// First derivative of [`log1p_over`].
pub fn log1p_over_d1(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        -0.5 + 2.0 * a / 3.0 - 0.75 * a * a + 0.8 * a * a * a
    } else {
        (a / (1.0 + a) - a.ln_1p()) / (a * a)
    }
}

/// Second derivative of [`log1p_over`].
pub fn log1p_over_d2(a: f64) -> f64 {
    if a.abs() < 1e-3 {
        2.0 / 3.0 - 1.5 * a + 2.4 * a * a - 10.0 / 3.0 * a * a * a
    } else {
        let h = a / (1.0 + a) - a.ln_1p();
        -1.0 / (a * (1.0 + a) * (1.0 + a)) - 2.0 * h / (a * a * a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..30u32 {
            fact *= n as f64;
            let got = ln_gamma(n as f64 + 1.0);
            assert!((got - fact.ln()).abs() < 1e-10 * fact.ln().max(1.0), "n={n}");
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn log1p_over_derivatives_match_finite_differences() {
        for &a in &[1e-6f64, 5e-4, 2e-3, 0.1, 1.0, 1.92, 10.0] {
            let h = 1e-5 * a.max(1e-2);
            let d1 = (log1p_over(a + h) - log1p_over(a - h)) / (2.0 * h);
            let d2 = (log1p_over_d1(a + h) - log1p_over_d1(a - h)) / (2.0 * h);
            assert!((d1 - log1p_over_d1(a)).abs() < 1e-6, "a={a}");
            assert!((d2 - log1p_over_d2(a)).abs() < 1e-5, "a={a}");
        }
    }
}
