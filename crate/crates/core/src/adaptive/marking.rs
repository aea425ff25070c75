use crate::estimator::IndicatorField;
use crate::mesh::MarkedSet;

/// Dörfler marking: the shortest prefix of the triangles sorted by
/// decreasing indicator (ties by index) whose squared indicators sum to at
/// least `theta` times the total. Empty when the total vanishes.
pub fn doerfler_mark(indicators: &IndicatorField, theta: f64) -> MarkedSet {
    let values = indicators.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&t| values[t]).sum();
    if total == 0.0 {
        return MarkedSet::empty();
    }
    let goal = theta * total;
    let mut partial = 0.0;
    let mut count = 0;
    for &t in &order {
        partial += values[t];
        count += 1;
        if partial >= goal {
            break;
        }
    }
    order.truncate(count);
    MarkedSet::new(order, values.len()).expect("indices in range")
}
