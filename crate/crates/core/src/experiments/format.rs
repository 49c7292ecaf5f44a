//! Number formatting for tables and CSV files.

/// Four significant digits with a two-digit exponent, e.g. `8.895e-04`.
pub fn sci4(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.3e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Order cell: two decimals, `--` when undefined.
pub fn order_cell(order: Option<f64>) -> String {
    order.map_or_else(|| "--".to_string(), |o| format!("{o:.2}"))
}

/// Shortest round-trip representation, empty when undefined.
pub fn csv_cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:e}"))
}
