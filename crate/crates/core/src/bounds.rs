//! Closed-form convergence envelopes.
//!
//! Every envelope is a function of the iteration `k` and a [`BoundConstants`]
//! computed once per problem/config pair. A valid run's measurements must stay
//! under these curves at every `k`.

use serde::{Deserialize, Serialize};

use crate::engine::RunConfig;
use crate::error::{Error, Result};
use crate::problem::{CoupledProblem, LipschitzData};
use crate::reference::ReferenceSolution;
use crate::subproblem::evaluate_dual;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub alpha: f64,
    /// `1/alpha - (2k0 + 1/2) L_D`.
    pub gamma_alpha: f64,
    pub eps_d: f64,
    pub k0: usize,
    pub l_d: f64,
    pub d_star: f64,
    /// `D(lambda^0)`, from exact solves.
    pub d_zero: f64,
    pub lambda_star_norm: f64,
    pub lambda_zero_norm: f64,
    /// `||lambda^0 - lambda*||`.
    pub lambda_diff_norm: f64,
    pub c_f: f64,
    pub m_half: f64,
    pub m_one: f64,
    pub n_zero: f64,
    pub n_half: f64,
    pub n_one: f64,
    pub n_one_prime: f64,
}

pub fn compute_constants(
    problem: &CoupledProblem,
    lips: &LipschitzData,
    config: &RunConfig,
    reference: &ReferenceSolution,
) -> Result<BoundConstants> {
    let alpha = config.alpha;
    let limit = lips.max_step_size(config.k0);
    if !(alpha > 0.0) || alpha >= limit {
        return Err(Error::StepSize {
            alpha,
            limit,
            k0: config.k0,
            lipschitz: lips.dual,
        });
    }
    let lambda0 = config.lambda0_vector(problem.m())?;
    let d_zero = evaluate_dual(problem, &lambda0)?.value;
    // the reference is accurate to ~1e-12; never let rounding flip the sign
    let drop = (reference.d_star - d_zero).max(0.0);

    let k0 = config.k0 as f64;
    let l_d = lips.dual;
    let eps_d = config.eps_total();
    let gamma = 1.0 / alpha - (2.0 * k0 + 0.5) * l_d;
    let ls = reference.lambda_star.norm();
    let l0 = lambda0.norm();
    let ldiff = (&lambda0 - &reference.lambda_star).norm();

    let m_half = 2.0 * (alpha * eps_d).sqrt() + 2.0 * (k0 * l_d * eps_d).sqrt() / gamma;
    let m_one = (k0 + 1.0) / alpha * (2.0 * ls + l0 + 2.0 * (2.0 * k0 * drop / gamma).sqrt());
    let n_zero = 2.0 * eps_d + 2.0 * k0 * (k0 + 1.0) * l_d * eps_d / (alpha * gamma * gamma);
    let n_half =
        4.0 * k0 * (k0 + 1.0) * (2.0 * l_d * eps_d * drop).sqrt() / (alpha * gamma.powf(1.5));
    let n_one = (k0 + 1.0) / (2.0 * alpha) * (l0 * l0 + 8.0 * k0 * drop / gamma);
    let n_one_prime = (k0 + 1.0) / (2.0 * alpha) * (ldiff * ldiff + 8.0 * k0 * drop / gamma);

    Ok(BoundConstants {
        alpha,
        gamma_alpha: gamma,
        eps_d,
        k0: config.k0,
        l_d,
        d_star: reference.d_star,
        d_zero,
        lambda_star_norm: ls,
        lambda_zero_norm: l0,
        lambda_diff_norm: ldiff,
        c_f: lips.c_f,
        m_half,
        m_one,
        n_zero,
        n_half,
        n_one,
        n_one_prime,
    })
}

fn root(k: usize) -> f64 {
    ((k + 1) as f64).sqrt()
}

fn inv(k: usize) -> f64 {
    1.0 / (k + 1) as f64
}

/// Bound on `sqrt(S^k)`.
pub fn envelope_s(c: &BoundConstants, k: usize) -> f64 {
    let drop = (c.d_star - c.d_zero).max(0.0);
    (2.0 * c.l_d * c.eps_d).sqrt() / c.gamma_alpha * root(k) + 2.0 * (drop / c.gamma_alpha).sqrt()
}

/// Bound on `||lambda^{k+1}||` given `S^k` (measured, or `envelope_s(k)^2`).
pub fn envelope_lambda_norm(c: &BoundConstants, s_k: f64, k: usize) -> f64 {
    2.0 * c.lambda_star_norm
        + c.lambda_zero_norm
        + 2.0 * (c.alpha * c.eps_d).sqrt() * root(k)
        + (2.0 * c.k0 as f64).sqrt() * s_k.max(0.0).sqrt()
}

/// Bound on `||[A x_bar^k - b]^+||`.
pub fn envelope_violation(c: &BoundConstants, k: usize) -> f64 {
    c.m_half / root(k) + c.m_one * inv(k)
}

/// `(lower, upper)` bounds on `F(x_bar^k) - F*`.
pub fn envelope_primal(c: &BoundConstants, k: usize) -> (f64, f64) {
    let lower = -c.lambda_star_norm * envelope_violation(c, k);
    let upper = c.n_zero + c.n_half / root(k) + c.n_one * inv(k);
    (lower, upper)
}

/// Bound on `D* - D(lambda_bar^{k+1})`.
pub fn envelope_dual(c: &BoundConstants, k: usize) -> f64 {
    c.n_zero + c.n_half / root(k) + c.n_one_prime * inv(k)
}

/// Bound on `||x_bar^k - x*||^2`.
pub fn envelope_xdev(c: &BoundConstants, k: usize) -> f64 {
    let ls = c.lambda_star_norm;
    2.0 * c.n_zero / c.c_f
        + 2.0 * (c.n_half + ls * c.m_half) / (c.c_f * root(k))
        + 2.0 * (c.n_one + ls * c.m_one) / (c.c_f * (k + 1) as f64)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::num::{build_num, Scenario};
    use crate::reference::solve_reference;

    fn num_constants(sc: Scenario) -> (BoundConstants, ReferenceSolution) {
        let p = build_num();
        let lips = p.lipschitz_data();
        let r = solve_reference(&p, &lips).unwrap();
        (
            compute_constants(&p, &lips, &sc.config_for(6), &r).unwrap(),
            r,
        )
    }

    #[test]
    fn exact_async_has_no_eps_terms() {
        let (c, _) = num_constants(Scenario::AsyncExact);
        assert_eq!((c.m_half, c.n_zero, c.n_half), (0.0, 0.0, 0.0));
        assert!(c.m_one > 0.0 && c.n_one > 0.0 && c.n_one_prime > 0.0);
        for k in [0, 10, 999] {
            assert_eq!(envelope_violation(&c, k), c.m_one / (k + 1) as f64);
        }
    }

    #[test]
    fn sync_exact_keeps_only_k0_free_terms() {
        let (c, r) = num_constants(Scenario::SyncExact);
        assert_eq!((c.m_half, c.n_zero, c.n_half), (0.0, 0.0, 0.0));
        assert_relative_eq!(
            c.m_one,
            2.0 * r.lambda_star.norm() / 0.004,
            max_relative = 1e-14
        );
        assert_eq!(c.n_one, 0.0);
        assert_relative_eq!(
            c.n_one_prime,
            r.lambda_star.norm_squared() / 0.008,
            max_relative = 1e-14
        );
        assert_eq!(envelope_lambda_norm(&c, 123.0, 5), 2.0 * c.lambda_star_norm);
    }

    #[test]
    fn sync_inexact_has_no_half_order_plateau_coupling() {
        let (c, _) = num_constants(Scenario::SyncInexact);
        assert_eq!(c.n_half, 0.0);
        assert_relative_eq!(c.n_zero, 60.0, epsilon = 1e-12);
        assert_relative_eq!(c.m_half, 2.0 * (0.004f64 * 30.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn num_async_inexact_constants_rederived() {
        let (c, r) = num_constants(Scenario::AsyncInexact);
        assert_relative_eq!(c.gamma_alpha, 63.0, epsilon = 1e-9);

        // second, term-by-term evaluation with everything written out
        let (a, k0, ld, eps, g) = (0.004f64, 4.0f64, 22.0f64, 30.0f64, 63.0f64);
        let centers_value = -458.802;
        let drop = r.d_star - centers_value;
        let ls = r.lambda_star.norm();
        assert_relative_eq!(c.d_zero, centers_value, epsilon = 1e-9);
        let m_half = 2.0 * (a * eps).sqrt() + 2.0 * (k0 * ld * eps).sqrt() / g;
        let m_one = 5.0 / a * (2.0 * ls + 2.0 * (8.0 * drop / g).sqrt());
        let n_zero = 2.0 * eps + 40.0 * ld * eps / (a * g * g);
        let n_half = 80.0 * (2.0 * ld * eps * drop).sqrt() / (a * g * g.sqrt());
        let n_one = 5.0 / (2.0 * a) * (32.0 * drop / g);
        let n_one_prime = 5.0 / (2.0 * a) * (ls * ls + 32.0 * drop / g);
        for (got, want) in [
            (c.m_half, m_half),
            (c.m_one, m_one),
            (c.n_zero, n_zero),
            (c.n_half, n_half),
            (c.n_one, n_one),
            (c.n_one_prime, n_one_prime),
        ] {
            assert_relative_eq!(got, want, max_relative = 1e-9);
        }
        assert!(c.d_star >= c.d_zero);
    }

    #[test]
    fn sqrt_scaling_between_k_and_4k_plus_3() {
        let (c, _) = num_constants(Scenario::AsyncInexact);
        let drop = (c.d_star - c.d_zero).max(0.0);
        let constant = 2.0 * (drop / c.gamma_alpha).sqrt();
        for k in [0usize, 7, 100, 2500] {
            let grow_k = envelope_s(&c, k) - constant;
            let grow_4k = envelope_s(&c, 4 * k + 3) - constant;
            assert_relative_eq!(grow_4k, 2.0 * grow_k, max_relative = 1e-12);

            let half_k = envelope_violation(&c, k) - c.m_one / (k + 1) as f64;
            let half_4k = envelope_violation(&c, 4 * k + 3) - c.m_one / (4 * k + 4) as f64;
            assert_relative_eq!(half_4k, 0.5 * half_k, max_relative = 1e-9);
        }
    }

    #[test]
    fn primal_upper_decreases_to_plateau() {
        let (c, _) = num_constants(Scenario::AsyncInexact);
        let mut prev = f64::INFINITY;
        for k in (0..1_000_000).step_by(997) {
            let (_, up) = envelope_primal(&c, k);
            assert!(up <= prev && up >= c.n_zero);
            prev = up;
        }
        assert!(envelope_primal(&c, usize::MAX / 2).1 - c.n_zero < 1e-3);
    }

    #[test]
    fn exact_envelopes_monotone() {
        for sc in [Scenario::SyncExact, Scenario::AsyncExact] {
            let (c, _) = num_constants(sc);
            for k in 0..5000 {
                assert!(envelope_violation(&c, k + 1) <= envelope_violation(&c, k));
                assert!(envelope_xdev(&c, k + 1) <= envelope_xdev(&c, k));
            }
        }
    }

    #[test]
    fn rejects_step_outside_condition() {
        let p = build_num();
        let lips = p.lipschitz_data();
        let r = solve_reference(&p, &lips).unwrap();
        let cfg = RunConfig {
            alpha: 0.01,
            ..Scenario::AsyncExact.config_for(6)
        };
        assert!(matches!(
            compute_constants(&p, &lips, &cfg, &r),
            Err(Error::StepSize { .. })
        ));
    }

    #[test]
    fn all_constants_nonnegative() {
        for sc in Scenario::ALL {
            let (c, _) = num_constants(sc);
            assert!(c.gamma_alpha > 0.0);
            for v in [
                c.m_half,
                c.m_one,
                c.n_zero,
                c.n_half,
                c.n_one,
                c.n_one_prime,
            ] {
                assert!(v >= 0.0 && v.is_finite());
            }
        }
    }
}
