/// Real number with 17 significant digits in scientific notation.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    format!("{x:.16e}")
}
