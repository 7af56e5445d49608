//! l_p norms, their duals, and the gradient map of the squared norm.
//!
//! The map `tp_map` is half the gradient of the squared norm,
//!
//! ```text
//!     T_p(v) = ||v||_p^(2-p) * sgn(v) .* |v|^(p-1),      1 < p < inf,
//! ```
//!
//! and satisfies `||T_p(v)||_q = ||v||_p` and `v . T_p(v) = ||v||_p^2`
//! with q the dual exponent. Both identities are exercised by the
//! property suite. For p = 2 it is the identity map.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NormError {
    #[error("norm exponent must satisfy p >= 1, got {0}")]
    ExponentOutOfRange(f64),
    #[error("exponent {0} has no finite gradient map; tp_map needs 1 < p < inf")]
    GradientUndefined(f64),
}

/// A validated l_p exponent together with its dual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    p: f64,
    q: f64,
}

impl NormSpec {
    /// Builds from the primal exponent. `f64::INFINITY` selects the max
    /// norm. Rejects NaN and p < 1.
    pub fn from_p(p: f64) -> Result<Self, NormError> {
        if !(p >= 1.0) {
            return Err(NormError::ExponentOutOfRange(p));
        }
        Ok(Self {
            p,
            q: dual_exponent(p),
        })
    }

    /// Builds from the dual exponent, so `from_q(q).p()` is the primal
    /// norm whose dual ball uses q.
    pub fn from_q(q: f64) -> Result<Self, NormError> {
        if !(q >= 1.0) {
            return Err(NormError::ExponentOutOfRange(q));
        }
        Ok(Self {
            p: dual_exponent(q),
            q,
        })
    }

    #[inline]
    pub fn p(&self) -> f64 {
        self.p
    }

    #[inline]
    pub fn q(&self) -> f64 {
        self.q
    }

    #[inline]
    pub fn norm(&self, v: &[f64]) -> f64 {
        lp_norm(v, self.p)
    }

    #[inline]
    pub fn dual_norm(&self, v: &[f64]) -> f64 {
        lp_norm(v, self.q)
    }
}

/// The conjugate exponent q with 1/p + 1/q = 1.
#[inline]
pub fn dual_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// ||v||_p, scaled by the max entry first so large exponents on large
/// entries cannot overflow.
pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    debug_assert!(p >= 1.0);
    let m = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if m == 0.0 || p.is_infinite() {
        return m;
    }
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if p == 2.0 {
        return m * v.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt();
    }
    let s: f64 = v.iter().map(|x| (x.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// T_p(v), computed as t * sgn(v_i) * (|v_i| / t)^(p-1) with t = ||v||_p
/// so intermediate powers stay bounded by 1. Returns the zero vector at
/// v = 0. Errors for p = 1 and p = inf, where the squared norm is not
/// differentiable everywhere.
pub fn tp_map(v: &[f64], p: f64) -> Result<Vec<f64>, NormError> {
    if !(p > 1.0) || p.is_infinite() {
        return Err(NormError::GradientUndefined(p));
    }
    if p == 2.0 {
        return Ok(v.to_vec());
    }
    let t = lp_norm(v, p);
    if t == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    Ok(v
        .iter()
        .map(|&x| {
            if x == 0.0 {
                0.0
            } else {
                t * x.signum() * (x.abs() / t).powf(p - 1.0)
            }
        })
        .collect())
}

/// k unit vectors in the plane at evenly spaced angles starting from
/// (1, 0).
pub fn circle_directions(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * (i as f64) / (k as f64);
            vec![theta.cos(), theta.sin()]
        })
        .collect()
}

/// k unit vectors in dimension d, gaussian draws normalized to length 1.
pub fn random_unit_directions(rng: &mut crate::rng::CounterRng, k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let v: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let n = crate::linalg::norm2(&v);
        if n > 1e-8 {
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}

/// True when the point lies in every halfspace {x : dir . x <= value},
/// up to `tol` of slack. Convex sets are compared to their support
/// functions through this.
pub fn in_halfspace_envelope(
    point: &[f64],
    directions: &[Vec<f64>],
    support_values: &[f64],
    tol: f64,
) -> bool {
    debug_assert_eq!(directions.len(), support_values.len());
    directions
        .iter()
        .zip(support_values)
        .all(|(dir, &h)| crate::linalg::dot(dir, point) <= h + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    // ==== exponents ====

    #[test]
    fn dual_exponent_pairs() {
        assert_eq!(dual_exponent(2.0), 2.0);
        assert_eq!(dual_exponent(1.0), f64::INFINITY);
        assert_eq!(dual_exponent(f64::INFINITY), 1.0);
        assert!((dual_exponent(1.5) - 3.0).abs() < 1e-15);
        assert!((dual_exponent(3.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn norm_spec_rejects_bad_exponents() {
        assert!(NormSpec::from_p(0.5).is_err());
        assert!(NormSpec::from_p(f64::NAN).is_err());
        assert!(NormSpec::from_p(-1.0).is_err());
        assert!(NormSpec::from_p(1.0).is_ok());
        assert!(NormSpec::from_p(f64::INFINITY).is_ok());
    }

    #[test]
    fn norm_spec_from_q_inverts_from_p() {
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let a = NormSpec::from_p(p).unwrap();
            let b = NormSpec::from_q(a.q()).unwrap();
            assert_eq!(a.p(), b.p(), "round trip through q failed at p = {p}");
        }
    }

    // ==== norm values ====

    #[test]
    fn lp_norm_known_values() {
        let v = [3.0, -4.0];
        assert!((lp_norm(&v, 2.0) - 5.0).abs() < 1e-15);
        assert!((lp_norm(&v, 1.0) - 7.0).abs() < 1e-15);
        assert!((lp_norm(&v, f64::INFINITY) - 4.0).abs() < 1e-15);
        // p = 4: (81 + 256)^(1/4)
        assert!((lp_norm(&v, 4.0) - 337.0f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_survives_huge_entries() {
        let v = [1e300, 1e300];
        let n = lp_norm(&v, 10.0);
        assert!(n.is_finite(), "max scaling failed, got {n}");
        assert!((n / 1e300 - 2.0f64.powf(0.1)).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_monotone_in_p() {
        // For fixed v, p -> ||v||_p is nonincreasing.
        let mut rng = CounterRng::new(11);
        for _ in 0..100 {
            let v: Vec<f64> = (0..4).map(|_| rng.next_gaussian()).collect();
            let ps = [1.0, 1.2, 1.5, 2.0, 3.0, 8.0, f64::INFINITY];
            let norms: Vec<f64> = ps.iter().map(|&p| lp_norm(&v, p)).collect();
            for w in norms.windows(2) {
                assert!(w[0] >= w[1] - 1e-12, "norms not nonincreasing: {norms:?}");
            }
        }
    }

    // ==== gradient map ====

    #[test]
    fn tp_map_identities_hold() {
        let mut rng = CounterRng::new(12);
        for p in [1.2, 1.5, 2.0, 3.0, 6.0] {
            let spec = NormSpec::from_p(p).unwrap();
            for _ in 0..200 {
                let v: Vec<f64> = (0..3).map(|_| rng.next_gaussian()).collect();
                let t = tp_map(&v, p).unwrap();
                let np = lp_norm(&v, p);
                let dual = lp_norm(&t, spec.q());
                assert!(
                    (dual - np).abs() <= 1e-10 * np.max(1.0),
                    "||T_p(v)||_q = {dual} but ||v||_p = {np} at p = {p}"
                );
                let inner = crate::linalg::dot(&v, &t);
                assert!(
                    (inner - np * np).abs() <= 1e-10 * (np * np).max(1.0),
                    "v.T_p(v) = {inner} but ||v||_p^2 = {}",
                    np * np
                );
            }
        }
    }

    #[test]
    fn tp_map_is_identity_at_p_two() {
        let v = [0.3, -1.7, 2.0];
        assert_eq!(tp_map(&v, 2.0).unwrap(), v.to_vec());
    }

    #[test]
    fn tp_map_zero_vector_and_bad_exponents() {
        assert_eq!(tp_map(&[0.0, 0.0], 1.5).unwrap(), vec![0.0, 0.0]);
        assert_eq!(tp_map(&[1.0], 1.0), Err(NormError::GradientUndefined(1.0)));
        assert_eq!(
            tp_map(&[1.0], f64::INFINITY),
            Err(NormError::GradientUndefined(f64::INFINITY))
        );
    }

    #[test]
    fn tp_map_matches_finite_difference_gradient() {
        // T_p(v) = grad of (1/2)||v||_p^2.
        let v = [0.8, -0.4, 1.3];
        for p in [1.5, 2.5, 4.0] {
            let t = tp_map(&v, p).unwrap();
            let h = 1e-6;
            for k in 0..v.len() {
                let mut plus = v;
                plus[k] += h;
                let mut minus = v;
                minus[k] -= h;
                let fd = (lp_norm(&plus, p).powi(2) - lp_norm(&minus, p).powi(2)) / (4.0 * h);
                assert!(
                    (fd - t[k]).abs() < 1e-5,
                    "fd {fd} vs tp {t:?} at p = {p}, coord {k}"
                );
            }
        }
    }

    // ==== directions and envelopes ====

    #[test]
    fn circle_directions_are_unit_and_spread() {
        let dirs = circle_directions(8);
        assert_eq!(dirs.len(), 8);
        for d in &dirs {
            assert!((crate::linalg::norm2(d) - 1.0).abs() < 1e-12);
        }
        assert!((dirs[0][0] - 1.0).abs() < 1e-12);
        assert!((dirs[2][1] - 1.0).abs() < 1e-12, "quarter turn should hit (0,1)");
    }

    #[test]
    fn random_unit_directions_are_unit() {
        let mut rng = CounterRng::new(13);
        for d in random_unit_directions(&mut rng, 50, 3) {
            assert!((crate::linalg::norm2(&d) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn halfspace_envelope_accepts_inside_rejects_outside() {
        // Unit square via 4 axis-aligned halfspaces.
        let dirs = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let support = vec![1.0, 1.0, 1.0, 1.0];
        assert!(in_halfspace_envelope(&[0.2, -0.9], &dirs, &support, 0.0));
        assert!(!in_halfspace_envelope(&[1.2, 0.0], &dirs, &support, 0.0));
        assert!(in_halfspace_envelope(&[1.2, 0.0], &dirs, &support, 0.3));
    }
}
