//! Scalar abstraction for the geometry core.
//!
//! The closed-form coordinate transforms are generic over the float width:
//! f64 everywhere angles and tolerances matter, f32 available for bulk
//! per-pixel work. Concrete f64 aliases for the geometry types live at the
//! crate root.

/// Floating-point scalar accepted by the coordinate transforms.
pub trait Real: num_traits::Float + num_traits::FloatConst + std::fmt::Debug {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> f64 {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Wraps an angle into [-pi, pi).
pub fn wrap_angle<R: Real>(a: R) -> R {
    let pi = R::PI();
    let two_pi = pi + pi;
    let turns = ((a + pi) / two_pi).floor();
    let w = a - turns * two_pi;
    // Guard the half-open upper bound against rounding in the subtraction.
    if w >= pi {
        w - two_pi
    } else if w < -pi {
        w + two_pi
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_half_open_range() {
        assert_eq!(wrap_angle(std::f64::consts::PI), -std::f64::consts::PI);
        assert_eq!(wrap_angle(-std::f64::consts::PI), -std::f64::consts::PI);
        assert!((wrap_angle(3.0 * std::f64::consts::PI / 2.0) + std::f64::consts::PI / 2.0).abs() < 1e-12);
        for k in -8i32..=8 {
            let a = 0.7 + f64::from(k) * 2.0 * std::f64::consts::PI;
            assert!((wrap_angle(a) - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn wrap_angle_f32_matches_f64_coarsely() {
        let w = wrap_angle(10.0f32);
        assert!((f64::from(w) - wrap_angle(10.0f64)).abs() < 1e-5);
    }
}
