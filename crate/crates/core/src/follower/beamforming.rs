use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{state_rate_surrogate, FollowerState};
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::metrics::{effective_channels, Beamformers};
use crate::scenario::Scenario;

const MAX_BISECTION_STEPS: usize = 400;

/// Beamformer block of the alternating optimization.
///
/// Sets `beta` to the quadratic-transform optimum at the current beamformers,
/// then maximizes the resulting concave quadratic under the power budget:
/// `w_k = sqrt(1 + alpha_k) beta_k (lambda0 I + sum_i |beta_i|^2 h_i^H h_i)^-1 h_k^H`
/// with `lambda0` bisected until the budget binds (or zero if it is slack).
/// The new beamformers are kept only if the surrogate does not drop.
pub fn update_beamformers(state: &mut FollowerState, channels: &ChannelSet, scenario: &Scenario) -> Result<()> {
    let noise = scenario.noise_power.watts();
    let budget = scenario.power_budget.watts();
    let effective = effective_channels(channels, &state.phase)?;
    let (k, m) = effective.shape();
    let received = &effective * &state.beamformers.0;

    let weights: Vec<f64> = state.alpha.iter().map(|a| (1.0 + a).sqrt()).collect();
    for user in 0..k {
        let denom: f64 = received.row(user).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise;
        state.beta[user] = received[(user, user)] * (weights[user] / denom);
    }

    if budget <= 0.0 {
        state.beamformers = Beamformers::zeros(m, k);
        state.lambda0 = 0.0;
        return Ok(());
    }

    let mut gram = DMatrix::<Complex64>::zeros(m, m);
    let mut rhs = DMatrix::<Complex64>::zeros(m, k);
    for user in 0..k {
        let h: DVector<Complex64> = effective.row(user).adjoint();
        let b2 = state.beta[user].norm_sqr();
        if b2 > 0.0 {
            gram += &h * h.adjoint() * Complex64::from(b2);
        }
        rhs.set_column(user, &(&h * (state.beta[user] * weights[user])));
    }
    if rhs.iter().all(|z| z.norm_sqr() == 0.0) {
        state.lambda0 = 0.0;
        return Ok(());
    }

    let eig = gram.symmetric_eigen();
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&d| d.max(0.0)).collect();
    let projected = eig.eigenvectors.adjoint() * &rhs;
    let row_energy: Vec<f64> = (0..m)
        .map(|i| projected.row(i).iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let power_at = |lambda: f64| -> f64 {
        eigenvalues
            .iter()
            .zip(&row_energy)
            .map(|(&d, &e)| if e == 0.0 { 0.0 } else { e / (d + lambda).powi(2) })
            .sum()
    };

    let largest = eigenvalues.iter().cloned().fold(0.0, f64::max);
    let smallest = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda = if smallest > 1e-12 * largest && power_at(0.0) <= budget {
        0.0
    } else {
        // (lambda I + gram)^-1 has norm at most 1/lambda, so this end is feasible
        let mut hi = (rhs.norm_squared() / budget).sqrt();
        let mut lo = 0.0;
        let mut steps = 0;
        while hi - lo > 1e-15 * hi {
            if steps == MAX_BISECTION_STEPS {
                return Err(Error::Solver(format!(
                    "power multiplier bisection stalled in [{lo:e}, {hi:e}], power {:e} vs budget {budget:e}",
                    power_at(hi)
                )));
            }
            let mid = 0.5 * (lo + hi);
            if power_at(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
            steps += 1;
        }
        if !power_at(hi).is_finite() {
            return Err(Error::Solver(
                "power multiplier bisection produced a non-finite power".into(),
            ));
        }
        hi
    };
    state.lambda0 = lambda;

    let mut scaled = projected;
    for (i, &d) in eigenvalues.iter().enumerate() {
        let inv = if row_energy[i] == 0.0 { 0.0 } else { 1.0 / (d + lambda) };
        scaled.row_mut(i).scale_mut(inv);
    }
    let candidate = &eig.eigenvectors * scaled;

    let before = state_rate_surrogate(state, channels, scenario);
    let previous = std::mem::replace(&mut state.beamformers, Beamformers(candidate));
    let after = state_rate_surrogate(state, channels, scenario);
    if !(after >= before) {
        state.beamformers = previous;
    }
    Ok(())
}
