//! Number formatting shared by the table writers.

/// `1234567` -> `"1,234,567"`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// `count / total` as a percentage to one decimal, rounded half-up, in exact
/// integer arithmetic. `None` when `total` is zero.
pub fn percent_1dp(count: u64, total: u64) -> Option<f64> {
    if total == 0 {
        return None;
    }
    let tenths = (count as u128 * 2000 + total as u128) / (2 * total as u128);
    Some(tenths as f64 / 10.0)
}

/// `"2,783 (3.5%)"`.
pub fn count_with_percent(count: u64, total: u64) -> String {
    match percent_1dp(count, total) {
        Some(p) => format!("{} ({:.1}%)", thousands(count), p),
        None => thousands(count),
    }
}
