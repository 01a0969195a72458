/// Relative error with the floor `max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Central-difference check of `analytic` against `f` at `point`, over every
/// coordinate. Returns the maximum relative error.
pub fn finite_difference_check<F>(f: F, point: &[f64], analytic: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    finite_difference_check_coords(f, point, analytic, h, &coords)
}

/// As [`finite_difference_check`], restricted to `coords`.
pub fn finite_difference_check_coords<F>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    h: f64,
    coords: &[usize],
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(
        point.len(),
        analytic.len(),
        "gradient length must match the point"
    );
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_at_three() {
        let err = finite_difference_check(|x| x[0] * x[0], &[3.0], &[6.0], 1e-4);
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn linear_is_exact() {
        let err = finite_difference_check(
            |x| 2.0 * x[0] - 0.5 * x[1] + 1.0,
            &[0.3, -1.2],
            &[2.0, -0.5],
            1e-3,
        );
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let err = finite_difference_check(|x| x[0] * x[0], &[3.0], &[5.0], 1e-4);
        assert!(err > 0.1);
    }
}
