//! Small special-function helpers: unit-sphere areas and the Bessel function J₀.

use crate::{Error, Result};

/// Surface area of the unit sphere S^{n-1} in R^n: 2·π^{n/2}/Γ(n/2).
/// `n = 1` gives 2 (two endpoints), matching the convention
/// ∫_{R} g(|x|) dx = 2∫₀^∞ g(r) dr.
pub fn sphere_area(n: u32) -> Result<f64> {
    use std::f64::consts::PI;
    match n {
        1 => Ok(2.0),
        2 => Ok(2.0 * PI),
        3 => Ok(4.0 * PI),
        4 => Ok(2.0 * PI * PI),
        5 => Ok(8.0 * PI * PI / 3.0),
        6 => Ok(PI.powi(3)),
        _ => Err(Error::UnsupportedDimension(format!(
            "sphere_area: n = {n} (supported: 1..=6)"
        ))),
    }
}

/// Bessel function of the first kind J₀(x).
///
/// Rational approximations (Abramowitz & Stegun 9.4.1 / 9.4.3): absolute error
/// below ~1e-7, plenty for the dim-2 radial Fourier transforms whose only
/// downstream consumer is a 5%-tolerance growth-rate fit.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 8.0 {
        let y = x * x;
        let p1 = 57_568_490_574.0
            + y * (-13_362_590_354.0 + y * (651_619_640.7 + y * (-11_214_424.18 + y * (77_392.330_17 + y * (-184.905_245_6)))));
        let p2 = 57_568_490_410.0
            + y * (1_029_532_985.0 + y * (9_494_680.718 + y * (59_272.648_53 + y * (267.853_271_2 + y))));
        p1 / p2
    } else {
        let z = 8.0 / ax;
        let y = z * z;
        let xx = ax - 0.785_398_163_397_448_3;
        let p1 = 1.0
            + y * (-0.109_862_862_7e-2 + y * (0.273_451_040_7e-4 + y * (-0.207_337_063_9e-5 + y * 0.209_388_721_1e-6)));
        let p2 = -0.156_249_999_5e-1
            + y * (0.143_048_848_5e-3 + y * (-0.691_114_765_1e-5 + y * (0.762_109_516_1e-6 + y * (-0.934_935_152e-7))));
        (2.0 / (std::f64::consts::PI * ax)).sqrt() * (xx.cos() * p1 - z * xx.sin() * p2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::simpson;

    #[test]
    fn j0_matches_integral_representation() {
        // J₀(x) = (1/π) ∫₀^π cos(x sin θ) dθ
        for &x in &[0.0, 0.5, 1.0, 2.404_825_557_695_773, 7.5, 11.0, 40.0] {
            let reference = simpson(
                |t| (x * t.sin()).cos(),
                0.0,
                std::f64::consts::PI,
                4096,
            ) / std::f64::consts::PI;
            let v = bessel_j0(x);
            assert!((v - reference).abs() < 5e-7, "x={x}: {v} vs {reference}");
        }
    }

    #[test]
    fn sphere_areas_low_dims() {
        assert_eq!(sphere_area(1).unwrap(), 2.0);
        assert!((sphere_area(2).unwrap() - 6.283_185_307_179_586).abs() < 1e-14);
        assert!((sphere_area(3).unwrap() - 12.566_370_614_359_172).abs() < 1e-14);
        assert!(sphere_area(9).is_err());
    }
}
