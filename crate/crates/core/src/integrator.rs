//! Fixed-step RK4 propagation of `i dU/dt = H(t) U` with step-halving
//! convergence control.

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

/// Propagator from `t0` to `t1` using `steps` RK4 steps, starting at `U = 1`.
pub fn propagate<H>(dim: usize, t0: f64, t1: f64, steps: usize, hamiltonian: H) -> CMatrix
where
    H: Fn(f64) -> CMatrix,
{
    let minus_i = C64::new(0.0, -1.0);
    let h = (t1 - t0) / steps as f64;
    let half = C64::from(0.5 * h);
    let full = C64::from(h);
    let sixth = C64::from(h / 6.0);
    let two = C64::from(2.0);

    let mut u = CMatrix::identity(dim);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let h0 = hamiltonian(t).scale(minus_i);
        let hm = hamiltonian(t + 0.5 * h).scale(minus_i);
        let h1 = hamiltonian(t + h).scale(minus_i);

        let k1 = h0 * u;
        let k2 = hm * (u + k1.scale(half));
        let k3 = hm * (u + k2.scale(half));
        let k4 = h1 * (u + k3.scale(full));
        u = u + (k1 + k2.scale(two) + k3.scale(two) + k4).scale(sixth);
    }
    u
}

/// Result of a converged propagation.
#[derive(Clone, Copy, Debug)]
pub struct Converged {
    pub propagator: CMatrix,
    pub steps: usize,
    /// Frobenius distance between the last two resolutions.
    pub change: f64,
}

/// Doubles the step count from `initial_steps` until two successive results
/// agree to `tol` (Frobenius), giving up after `max_doublings`.
pub fn propagate_converged<H>(
    dim: usize,
    t0: f64,
    t1: f64,
    initial_steps: usize,
    tol: f64,
    max_doublings: u32,
    hamiltonian: H,
) -> Result<Converged>
where
    H: Fn(f64) -> CMatrix,
{
    let mut steps = initial_steps.max(1);
    let mut coarse = propagate(dim, t0, t1, steps, &hamiltonian);
    let mut last_change = f64::INFINITY;
    for _ in 0..=max_doublings {
        let fine = propagate(dim, t0, t1, 2 * steps, &hamiltonian);
        last_change = fine.distance(&coarse);
        if last_change < tol {
            return Ok(Converged { propagator: fine, steps: 2 * steps, change: last_change });
        }
        coarse = fine;
        steps *= 2;
    }
    Err(Error::IntegrationFailure(format!(
        "step halving still changes the propagator by {last_change:.3e} at {steps} steps"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{exp_i_sigma_x, pauli_x};

    #[test]
    fn constant_hamiltonian_matches_closed_form() {
        // H = 0.7 σ_x for t ∈ [0, 2] → exp(−1.4 i σ_x)
        let u = propagate(2, 0.0, 2.0, 400, |_| pauli_x().scale(C64::from(0.7)));
        let exact = exp_i_sigma_x(-1.4);
        assert!(u.distance(exact.matrix()) < 1e-10);
    }

    #[test]
    fn convergence_failure_is_reported() {
        let r = propagate_converged(2, 0.0, 50.0, 1, 1e-14, 0, |t| pauli_x().scale(C64::from((10.0 * t).sin() * 5.0)));
        assert!(matches!(r, Err(Error::IntegrationFailure(_))));
    }
}
