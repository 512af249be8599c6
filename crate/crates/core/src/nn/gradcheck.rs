//! Central finite-difference gradient checking.

/// Denominator floor; keeps relative error meaningful for gradients that are
/// numerically zero.
const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    pub non_finite: usize,
}

impl GradCheck {
    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            checked: self.checked + other.checked,
            non_finite: self.non_finite + other.non_finite,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against `(f(p + h e_i) - f(p - h e_i)) / 2h` for every
/// coordinate `i`.
pub fn check(
    params: &[f64],
    analytic: &[f64],
    step: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> GradCheck {
    assert_eq!(params.len(), analytic.len());
    let mut p = params.to_vec();
    let mut out = GradCheck::default();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = loss(&p);
        p[i] = orig - step;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            out.non_finite += 1;
            continue;
        }
        out.max_abs_error = out.max_abs_error.max((analytic[i] - numeric).abs());
        out.max_rel_error = out.max_rel_error.max(relative_error(analytic[i], numeric));
        out.checked += 1;
    }
    out
}
