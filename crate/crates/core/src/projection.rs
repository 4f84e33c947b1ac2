//! Euclidean projections onto the feasible sets of the relaxed problem.

/// Projects `v` onto `{u : u >= 0, sum(u) = 1}` restricted to entries where
/// `mask` is true; masked-out entries become zero. With an empty mask every
/// entry becomes zero.
pub fn project_simplex(v: &mut [f64], mask: Option<&[bool]>) {
    let on = |i: usize| mask.map_or(true, |m| m[i]);
    let mut vals: Vec<f64> = (0..v.len()).filter(|&i| on(i)).map(|i| v[i]).collect();
    if vals.is_empty() {
        v.fill(0.0);
        return;
    }
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in vals.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    for (i, e) in v.iter_mut().enumerate() {
        *e = if on(i) { (*e - tau).max(0.0) } else { 0.0 };
    }
}

pub fn project_box(v: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((e, &l), &h) in v.iter_mut().zip(lo).zip(hi) {
        *e = e.clamp(l, h);
    }
}
