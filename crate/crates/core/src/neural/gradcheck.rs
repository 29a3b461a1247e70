/// Result of comparing an analytic gradient against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub numeric: Vec<f64>,
}

/// Relative errors are `|a - n| / max(|a|, |n|, 1e-3)`, so entries with a
/// tiny true gradient are compared absolutely. Below that floor the rounding
/// noise of a central difference at `h = 1e-5` is of the same order as the
/// gradient itself.
const REL_FLOOR: f64 = 1e-3;

/// Central-difference check of `analytic` against `f` at `x`.
pub fn finite_diff_check<F>(mut f: F, x: &[f64], analytic: &[f64], h: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let mut numeric = Vec::with_capacity(x.len());
    let mut max_rel_error = 0.0;
    let mut worst_index = None;
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        let n = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
        if rel > max_rel_error || rel.is_nan() {
            max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
            worst_index = Some(i);
        }
        numeric.push(n);
    }
    GradCheck {
        max_rel_error,
        worst_index,
        numeric,
    }
}
