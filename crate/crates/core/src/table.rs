//! Number formatting and plain-text table layout shared by the reports.

/// `value × 100` rounded half-up (toward +∞ on ties) to two decimals.
///
/// The scaled value is first snapped to 1e-6 so that decimal inputs such as
/// 0.70565, whose binary form sits just below the tie, still round up.
pub fn round_x100(value: f64) -> f64 {
    let scaled = value * 10_000.0;
    let snapped = (scaled * 1e6).round() / 1e6;
    (snapped + 0.5).floor() / 100.0
}

pub fn format_x100(value: f64) -> String {
    if !value.is_finite() {
        return "--".to_string();
    }
    let r = round_x100(value);
    // Avoid "-0.00".
    if r == 0.0 {
        return "0.00".to_string();
    }
    format!("{r:.2}")
}

pub fn format_2dp(value: f64) -> String {
    if !value.is_finite() {
        return "--".to_string();
    }
    let r = ((value * 100.0 * 1e6).round() / 1e6 + 0.5).floor() / 100.0;
    if r == 0.0 {
        return "0.00".to_string();
    }
    format!("{r:.2}")
}

/// Left-aligns the first column and right-aligns the rest.
pub fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let ncol = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(ncol) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .take(ncol)
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * ncol.saturating_sub(1));
    let mut out = String::new();
    out.push_str(&line(header));
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}
