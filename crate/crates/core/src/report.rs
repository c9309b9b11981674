//! Output formatting shared by reports.

/// Significant digits kept for probabilities in printed reports.
pub const REPORT_DIGITS: i32 = 12;

/// `x` rounded to `digits` significant decimal digits. Non-finite values
/// and zero pass through.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    // format-and-parse rounds once in decimal, unlike scaling by 10^shift
    let s = format!("{:.*e}", (digits - 1).max(0) as usize, x);
    s.parse().unwrap_or(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_significant_digits() {
        assert_eq!(round_sig(0.123_456_789_012_345, 12), 0.123_456_789_012);
        assert_eq!(round_sig(3_022.806_147_249_624, 6), 3022.81);
        assert_eq!(round_sig(-1.26e-200, 2), -1.3e-200);
        assert_eq!(round_sig(0.0, 12), 0.0);
        assert!(round_sig(f64::NAN, 12).is_nan());
        assert_eq!(round_sig(0.1, 12), 0.1);
    }
}
