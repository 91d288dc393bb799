//! Sharpness score used for keyframe selection when the stream carries no
//! detector scores.

/// Variance of the 3×3 Laplacian response over a row-major image.
///
/// Neighborhoods touching a non-finite pixel are skipped. Returns 0 for
/// images too small to hold a full neighborhood.
pub fn laplacian_variance(width: usize, height: usize, pixels: &[f64]) -> f64 {
    assert_eq!(pixels.len(), width * height, "image size mismatch");
    if width < 3 || height < 3 {
        return 0.0;
    }
    let at = |u: usize, v: usize| pixels[v * width + u];
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in 1..height - 1 {
        for u in 1..width - 1 {
            let c = at(u, v);
            let (l, r, t, b) = (at(u - 1, v), at(u + 1, v), at(u, v - 1), at(u, v + 1));
            if ![c, l, r, t, b].iter().all(|x| x.is_finite()) {
                continue;
            }
            let lap = l + r + t + b - 4.0 * c;
            // Welford
            n += 1;
            let delta = lap - mean;
            mean += delta / n as f64;
            m2 += delta * (lap - mean);
        }
    }
    if n == 0 { 0.0 } else { (m2 / n as f64).max(0.0) }
}
