//! Single rounding and number-formatting policy shared by every report path.
//!
//! Displayed percents are integers rounded half away from zero; displayed
//! means carry one decimal under the same rule. Full precision is kept
//! everywhere else.

/// Round half away from zero to the nearest integer.
pub fn round_half_away(x: f64) -> i64 {
    // f64::round already rounds ties away from zero.
    x.round() as i64
}

/// Round half away from zero at `places` decimal places.
pub fn round_to(x: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    (x * scale).round() / scale
}

/// Integer percent of a ratio, e.g. `percent(0.51) == 51`.
pub fn percent(ratio: f64) -> i64 {
    round_half_away(100.0 * ratio)
}

/// Fixed-point rendering after applying [`round_to`].
pub fn fmt_fixed(x: f64, places: u32) -> String {
    let r = round_to(x, places);
    // avoid "-0.0"
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{:.*}", places as usize, r)
}

/// A mean rating as displayed in profile tables (one decimal).
pub fn fmt_mean(x: f64) -> String {
    fmt_fixed(x, 1)
}
