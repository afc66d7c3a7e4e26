use crate::error::{Error, Result};

/// Holm step-down adjusted p-values, in the input order.
///
/// With p-values sorted ascending, the i-th adjusted value is
/// `max_{j <= i} min(1, (m - j + 1) * p_(j))` (1-based), which makes the
/// adjusted sequence monotone in sorted order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(&p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::OutOfRangeP(p));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (pos, &idx) in order.iter().enumerate() {
        let scaled = ((m - pos) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}
