/// Proximal map of `t·‖·‖₁`: `sign(vᵢ)·max(|vᵢ| − t, 0)`.
pub fn soft_threshold(v: &[f64], t: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    soft_threshold_in_place(&mut out, t);
    out
}

#[inline]
pub fn soft_threshold_in_place(v: &mut [f64], t: f64) {
    debug_assert!(t >= 0.0);
    for x in v.iter_mut() {
        let a = x.abs() - t;
        *x = if a > 0.0 { a.copysign(*x) } else { 0.0 };
    }
}
