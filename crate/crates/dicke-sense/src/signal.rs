//! Small helpers for sampled curves: extrema, parabolic refinement and
//! oscillation frequencies.

/// Vertex offset (in grid steps, within [-1, 1]) of the parabola through
/// three equally spaced samples.
fn vertex(a: f64, b: f64, c: f64) -> (f64, f64) {
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        return (0.0, b);
    }
    let s = (0.5 * (a - c) / den).clamp(-1.0, 1.0);
    (s, b - 0.25 * (a - c) * s)
}

fn refine(xs: &[f64], ys: &[f64], k: usize) -> (f64, f64) {
    if k == 0 || k + 1 >= ys.len() {
        return (xs[k], ys[k]);
    }
    let (s, v) = vertex(ys[k - 1], ys[k], ys[k + 1]);
    let h = if s >= 0.0 { xs[k + 1] - xs[k] } else { xs[k] - xs[k - 1] };
    (xs[k] + s * h, v)
}

/// Index of the maximum (first on ties) and its parabolic refinement
/// `(index, x, y)`.
pub fn refined_max(xs: &[f64], ys: &[f64]) -> (usize, f64, f64) {
    let mut k = 0;
    for i in 1..ys.len() {
        if ys[i] > ys[k] {
            k = i;
        }
    }
    let (x, y) = refine(xs, ys, k);
    (k, x, y.max(ys[k]))
}

/// Index of the minimum and its parabolic refinement.
pub fn refined_min(xs: &[f64], ys: &[f64]) -> (usize, f64, f64) {
    let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
    let (k, x, y) = refined_max(xs, &neg);
    (k, x, -y)
}

/// Interior strict local maxima, refined: `(x, y)`.
pub fn local_maxima(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    (1..ys.len().saturating_sub(1))
        .filter(|&k| ys[k] > ys[k - 1] && ys[k] >= ys[k + 1])
        .map(|k| refine(xs, ys, k))
        .collect()
}

pub fn local_minima(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
    local_maxima(xs, &neg).into_iter().map(|(x, y)| (x, -y)).collect()
}

/// Angular frequency from the mean spacing of successive local maxima.
pub fn oscillation_frequency(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let m = local_maxima(xs, ys);
    if m.len() < 2 {
        return None;
    }
    let span = m.last().unwrap().0 - m[0].0;
    Some(2.0 * std::f64::consts::PI * (m.len() - 1) as f64 / span)
}

/// Root-mean-square of `a - b` relative to the RMS of `b`.
pub fn relative_rms(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_of_damped_cosine() {
        let xs: Vec<f64> = (0..3000).map(|k| k as f64 * 1e-3).collect();
        let ys: Vec<f64> = xs.iter().map(|t| (7.0 * t).cos() * (-0.3 * t).exp()).collect();
        let w = oscillation_frequency(&xs, &ys).unwrap();
        assert!((w - 7.0).abs() < 0.05, "{w}");
    }

    #[test]
    fn parabola_vertex() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| -(x - 1.3f64).powi(2) + 2.0).collect();
        let (k, x, y) = refined_max(&xs, &ys);
        assert_eq!(k, 1);
        assert!((x - 1.3).abs() < 1e-12 && (y - 2.0).abs() < 1e-12);
    }
}
