//! Thin wrappers over `libm` so the rest of the crate stays `no_std`.

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

pub fn cosh(x: f64) -> f64 {
    libm::cosh(x)
}

pub fn sinh(x: f64) -> f64 {
    libm::sinh(x)
}

pub fn acosh(x: f64) -> f64 {
    libm::acosh(x)
}

pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

/// Upper clamp for arcosh arguments; keeps distances finite under overflow.
pub const ACOSH_ARG_MAX: f64 = 1e15;

/// arcosh with its argument clamped to `[1, ACOSH_ARG_MAX]`.
pub fn acosh_clamped(x: f64) -> f64 {
    acosh(x.clamp(1.0, ACOSH_ARG_MAX))
}

/// Derivative of [`acosh_clamped`]; zero outside the open clamp interval.
pub fn acosh_clamped_deriv(x: f64) -> f64 {
    if x <= 1.0 || x >= ACOSH_ARG_MAX {
        0.0
    } else {
        1.0 / sqrt(x * x - 1.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acosh_clamp_lower() {
        assert_eq!(acosh_clamped(0.5), 0.0);
        assert_eq!(acosh_clamped(1.0), 0.0);
        assert!(acosh_clamped(2.0) > 0.0);
    }

    #[test]
    fn acosh_deriv_zero_at_clamp() {
        assert_eq!(acosh_clamped_deriv(1.0), 0.0);
        assert_eq!(acosh_clamped_deriv(0.3), 0.0);
        let x = 2.0;
        assert!((acosh_clamped_deriv(x) - 1.0 / (x * x - 1.0f64).sqrt()).abs() < 1e-15);
    }
}
