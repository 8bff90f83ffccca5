//! CSV formatting shared by trajectory and estimator exports.

/// 15 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.14e}")
}

pub fn csv_row(values: &[f64]) -> String {
    values.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(",")
}

/// Header row plus data rows, comma separated, LF line endings.
pub fn csv_text(header: &[String], rows: impl Iterator<Item = String>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}
