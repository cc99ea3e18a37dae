//! Real branches of the Lambert W function, `W(x) e^{W(x)} = x`.
//!
//! Both branches are refined by Halley iteration from series or asymptotic
//! starting points and accepted only when the relative residual is below
//! [`RESIDUAL_TOL`].

use std::f64::consts::E;

pub const RESIDUAL_TOL: f64 = 1e-12;
const BRANCH_POINT: f64 = -1.0 / E;
const MAX_ITER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `W_0`, values in `[-1, inf)`.
    Principal,
    /// `W_{-1}`, values in `(-inf, -1]` for `x` in `[-1/e, 0)`.
    Lower,
}

/// Evaluate `W_branch(x)`. Returns `None` outside the real domain of the
/// branch or if the iteration fails to reach the residual tolerance.
pub fn lambert_w(x: f64, branch: Branch) -> Option<f64> {
    if !x.is_finite() || x < BRANCH_POINT - 1e-15 {
        return None;
    }
    if (x - BRANCH_POINT).abs() <= 1e-15 {
        return Some(-1.0);
    }
    match branch {
        Branch::Principal => {
            if x == 0.0 {
                return Some(0.0);
            }
            halley(x, principal_guess(x))
        }
        Branch::Lower => {
            if x >= 0.0 {
                return None;
            }
            halley(x, lower_guess(x)).filter(|w| *w <= -1.0 + 1e-9)
        }
    }
}

pub fn w0(x: f64) -> Option<f64> {
    lambert_w(x, Branch::Principal)
}

pub fn wm1(x: f64) -> Option<f64> {
    lambert_w(x, Branch::Lower)
}

fn branch_series(p: f64) -> f64 {
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn principal_guess(x: f64) -> f64 {
    if x < -0.25 {
        branch_series((2.0 * (1.0 + E * x)).max(0.0).sqrt())
    } else if x < 3.0 {
        // W(x) ~ ln(1 + x) is a good start on this stretch
        (1.0 + x).ln() * (1.0 - (1.0 + x).ln() / (2.0 + (1.0 + x).ln()))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

fn lower_guess(x: f64) -> f64 {
    if x < -0.25 {
        branch_series(-(2.0 * (1.0 + E * x)).max(0.0).sqrt())
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    }
}

fn halley(x: f64, mut w: f64) -> Option<f64> {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(1.0) {
            break;
        }
    }
    let residual = (w * w.exp() - x).abs();
    (w.is_finite() && residual <= RESIDUAL_TOL * x.abs().max(f64::MIN_POSITIVE)).then_some(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        // omega constant and W(e) = 1
        assert_relative_eq!(w0(1.0).unwrap(), 0.567_143_290_409_783_8, max_relative = 1e-15);
        assert_relative_eq!(w0(E).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(w0(0.0), Some(0.0));
        assert_eq!(w0(BRANCH_POINT), Some(-1.0));
        assert_eq!(wm1(BRANCH_POINT), Some(-1.0));
        // W_{-1}(-0.1) = -3.577152063957297..., frozen from a 50-digit evaluation
        assert_relative_eq!(wm1(-0.1).unwrap(), -3.577_152_063_957_297, max_relative = 1e-14);
    }

    #[test]
    fn out_of_domain() {
        assert_eq!(w0(-0.5), None);
        assert_eq!(wm1(0.5), None);
        assert_eq!(wm1(0.0), None);
        assert_eq!(w0(f64::NAN), None);
    }

    #[test]
    fn trivial_and_nontrivial_roots_of_gamma_form() {
        // -g e^{-g} has preimages -g and the other real branch
        for &g in &[1e-8f64, 1e-3, 0.2, 0.7, 0.999, 1.5, 4.0] {
            let x = -g * (-g).exp();
            let (a, b) = (w0(x).unwrap(), wm1(x).unwrap());
            let trivial = if g < 1.0 { a } else { b };
            assert_relative_eq!(trivial, -g, max_relative = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn principal_branch_inverts(w in -1.0f64..50.0) {
            let x = w * w.exp();
            let got = w0(x).unwrap();
            prop_assert!((got * got.exp() - x).abs() <= 1e-12 * x.abs().max(1e-300));
        }

        #[test]
        fn lower_branch_inverts(w in -700.0f64..-1.0) {
            let x = w * w.exp();
            prop_assume!(x < 0.0);
            let got = wm1(x).unwrap();
            prop_assert!((got - w).abs() <= 1e-9 * w.abs());
        }
    }
}
