//! Fixed float formatting for report files.

/// 17 significant digits in scientific notation; round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Shortest decimal that round-trips, used for tick prices.
pub fn fmt_price(x: f64) -> String {
    format!("{x}")
}
