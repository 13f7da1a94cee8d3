//! `f64` helpers routed through `libm` so results do not depend on `std`.

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Clamps a real coordinate to `[0, len - 1]` and rounds to the nearest cell.
#[inline]
pub(crate) fn clamp_index(v: f64, len: usize) -> usize {
    let hi = (len - 1) as f64;
    round(v.clamp(0.0, hi)) as usize
}

/// Clamps a signed integer index to `[0, len - 1]`.
#[inline]
pub(crate) fn clamp_int(v: i64, len: usize) -> usize {
    v.clamp(0, len as i64 - 1) as usize
}
