//! Bessel functions needed by the step-index mode solver.
//!
//! `J0`/`J1` come from `libm`. The modified functions `K0`/`K1` use the
//! Abramowitz & Stegun rational approximations 9.8.1-9.8.8 (relative error
//! below 2e-7 on the positive axis).

pub fn j0(x: f64) -> f64 {
    libm::j0(x)
}

pub fn j1(x: f64) -> f64 {
    libm::j1(x)
}

fn poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn i0(x: f64) -> f64 {
    let t = (x / 3.75).powi(2);
    poly(
        &[1.0, 3.5156229, 3.0899424, 1.2067492, 0.2659732, 0.0360768, 0.0045813],
        t,
    )
}

fn i1(x: f64) -> f64 {
    let t = (x / 3.75).powi(2);
    x * poly(
        &[0.5, 0.87890594, 0.51498869, 0.15084934, 0.02658733, 0.00301532, 0.00032411],
        t,
    )
}

/// Modified Bessel function of the second kind, order 0. Defined for `x > 0`.
pub fn k0(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 2.0 {
        let t = (x / 2.0).powi(2);
        -(x / 2.0).ln() * i0(x)
            + poly(
                &[-0.57721566, 0.42278420, 0.23069756, 0.03488590, 0.00262698, 0.00010750, 0.0000074],
                t,
            )
    } else {
        let t = 2.0 / x;
        (-x).exp() / x.sqrt()
            * poly(
                &[1.25331414, -0.07832358, 0.02189568, -0.01062446, 0.00587872, -0.00251540, 0.00053208],
                t,
            )
    }
}

/// Modified Bessel function of the second kind, order 1. Defined for `x > 0`.
pub fn k1(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 2.0 {
        let t = (x / 2.0).powi(2);
        (x * (x / 2.0).ln() * i1(x)
            + poly(
                &[1.0, 0.15443144, -0.67278579, -0.18156897, -0.01919402, -0.00110404, -0.00004686],
                t,
            ))
            / x
    } else {
        let t = 2.0 / x;
        (-x).exp() / x.sqrt()
            * poly(
                &[1.25331414, 0.23498619, -0.03655620, 0.01504268, -0.00780353, 0.00325614, -0.00068245],
                t,
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from an independent double-precision implementation.
    const K_TABLE: &[(f64, f64, f64)] = &[
        (0.1, 2.4270690247020164, 9.853844780870606),
        (0.5, 0.9244190712276656, 1.6564411200033007),
        (1.0, 0.42102443824070823, 0.6019072301972346),
        (1.4, 0.243655061181542, 0.3208359022298758),
        (2.0, 0.1138938727495334, 0.13986588181652246),
        (2.5, 0.062347553200366196, 0.07389081634774705),
        (5.0, 0.0036910983340425942, 0.004044613445452163),
        (12.0, 2.2008253973114916e-06, 2.290757464767188e-06),
    ];

    #[test]
    fn modified_bessel_matches_reference() {
        for &(x, k0_ref, k1_ref) in K_TABLE {
            assert!((k0(x) / k0_ref - 1.0).abs() < 1e-6, "k0({x})");
            assert!((k1(x) / k1_ref - 1.0).abs() < 1e-6, "k1({x})");
        }
    }

    #[test]
    fn bessel_j_first_zero() {
        assert!(j0(2.404825557695773).abs() < 1e-12);
        assert!((j1(1.0) - 0.44005058574493355).abs() < 1e-12);
    }
}
