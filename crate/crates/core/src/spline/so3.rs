//! Right Jacobian of SO(3) in rotation-vector coordinates.
//!
//! For `R(t) = exp(φ(t))` the body angular velocity is `ω = J_r(φ)·φ̇` with
//! `J_r(φ) = I − a(θ)[φ]× + b(θ)[φ]×²`, `a = (1 − cos θ)/θ²`,
//! `b = (θ − sin θ)/θ³`.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::skew;

/// Below this angle the coefficients use their Taylor series.
const SMALL_ANGLE: f64 = 0.05;

/// `(a, b, a'/θ, b'/θ)` where primes are derivatives with respect to θ.
fn coefficients(theta: f64) -> (f64, f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        (
            0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362_880.0,
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0,
            -1.0 / 60.0 + t2 / 1260.0 - t4 / 60480.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let a = (1.0 - c) / t2;
        let b = (theta - s) / t3;
        let da = (theta * s - 2.0 * (1.0 - c)) / t3;
        let db = ((1.0 - c) * theta - 3.0 * (theta - s)) / (t3 * theta);
        (a, b, da / theta, db / theta)
    }
}

pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, _, _) = coefficients(phi.norm());
    let k = skew(phi);
    Matrix3::identity() - k * a + k * k * b
}

/// Time derivative of `J_r(φ(t))` given `φ̇`.
pub fn right_jacobian_rate(phi: &Vector3<f64>, dphi: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, da_t, db_t) = coefficients(phi.norm());
    // dθ/dt = φ·φ̇/θ, so d(a)/dt = (a'/θ)·(φ·φ̇).
    let rate = phi.dot(dphi);
    let k = skew(phi);
    let dk = skew(dphi);
    -(k * (da_t * rate) + dk * a) + k * k * (db_t * rate) + (dk * k + k * dk) * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        let below = coefficients(SMALL_ANGLE * (1.0 - 1e-12));
        let above = coefficients(SMALL_ANGLE * (1.0 + 1e-12));
        for (x, y) in [(below.0, above.0), (below.1, above.1), (below.2, above.2), (below.3, above.3)] {
            assert!((x - y).abs() < 1e-11, "{x} vs {y}");
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let phi = Vector3::new(0.7, -1.1, 0.4);
        let dphi = Vector3::new(0.3, 0.2, -0.5);
        let h = 1e-6;
        let r0 = UnitQuaternion::from_scaled_axis(phi);
        let r1 = UnitQuaternion::from_scaled_axis(phi + dphi * h);
        let omega_fd = (r0.inverse() * r1).scaled_axis() / h;
        let omega = right_jacobian(&phi) * dphi;
        assert!((omega - omega_fd).norm() < 1e-5 * omega.norm());
    }

    #[test]
    fn jacobian_rate_matches_finite_difference() {
        for phi in [Vector3::new(0.7, -1.1, 0.4), Vector3::new(0.01, 0.02, -0.015)] {
            let dphi = Vector3::new(0.3, 0.2, -0.5);
            let h = 1e-6;
            let fd = (right_jacobian(&(phi + dphi * h)) - right_jacobian(&(phi - dphi * h))) / (2.0 * h);
            assert!((right_jacobian_rate(&phi, &dphi) - fd).norm() < 1e-8);
        }
    }
}
