use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{state_rate_surrogate, FollowerState};
use crate::channel::ChannelSet;
use crate::error::Result;
use crate::scenario::Scenario;

const MAX_SWEEPS: usize = 25;

/// Concave quadratic `-x^H U x + 2 Re(v^H x)` over the purchased elements.
struct PhaseQuadratic {
    u: DMatrix<Complex64>,
    v: DVector<Complex64>,
}

impl PhaseQuadratic {
    fn value(&self, x: &DVector<Complex64>) -> f64 {
        let ux = &self.u * x;
        -x.dotc(&ux).re + 2.0 * self.v.dotc(x).re
    }

    /// Regularized stationary point `(U + mu I)^-1 v`, projected onto unit modulus.
    /// Entries that vanish keep the phase from `fallback`.
    fn projected_stationary_point(&self, fallback: &DVector<Complex64>) -> Option<DVector<Complex64>> {
        let n = self.v.len();
        let trace: f64 = (0..n).map(|i| self.u[(i, i)].re).sum();
        let mu = 1e-9 * trace / n as f64 + f64::MIN_POSITIVE;
        let mut reg = self.u.clone();
        for i in 0..n {
            reg[(i, i)] += Complex64::from(mu);
        }
        let solution = reg.cholesky()?.solve(&self.v);
        Some(DVector::from_fn(n, |i, _| unit(solution[i]).unwrap_or(fallback[i])))
    }

    /// Element-wise exact maximization over the unit circle, repeated until
    /// a sweep no longer improves the objective.
    fn coordinate_ascent(&self, mut x: DVector<Complex64>) -> DVector<Complex64> {
        let n = x.len();
        let mut ux = &self.u * &x;
        let mut value = self.value(&x);
        for _ in 0..MAX_SWEEPS {
            for l in 0..n {
                let c = self.v[l] - (ux[l] - self.u[(l, l)] * x[l]);
                if let Some(next) = unit(c) {
                    let delta = next - x[l];
                    if delta != Complex64::new(0.0, 0.0) {
                        ux += self.u.column(l) * delta;
                        x[l] = next;
                    }
                }
            }
            let next_value = self.value(&x);
            if next_value - value <= 1e-13 * next_value.abs() {
                break;
            }
            value = next_value;
        }
        x
    }
}

fn unit(z: Complex64) -> Option<Complex64> {
    let r = z.norm();
    (r > 0.0 && r.is_finite()).then(|| z / r)
}

/// Phase block of the alternating optimization.
///
/// Sets `theta` to the quadratic-transform optimum at the current phases and
/// maximizes the resulting quadratic over the purchased elements. The
/// projected stationary point of the quadratic and the current phases both
/// seed an element-wise ascent; the better end point is kept if the
/// surrogate does not drop. Idle RISs are left untouched.
pub fn update_phases(state: &mut FollowerState, channels: &ChannelSet, scenario: &Scenario) -> Result<()> {
    let active = state.phase.active_elements();
    if active.is_empty() {
        return Ok(());
    }
    let noise = scenario.noise_power.watts();
    let w = &state.beamformers.0;
    let (k_users, n) = (scenario.num_users, active.len());

    // received[k][i] = direct[k][i] + cascade[k][i]^T x
    let steered = &channels.bs_ris * w; // L x K
    let x: DVector<Complex64> = DVector::from_fn(n, |j, _| state.phase.phases[active[j]]);

    let mut cascade: Vec<DMatrix<Complex64>> = Vec::with_capacity(k_users);
    let mut direct = DMatrix::<Complex64>::zeros(k_users, k_users);
    let mut received = DMatrix::<Complex64>::zeros(k_users, k_users);
    for k in 0..k_users {
        let g = &channels.ris_user[k];
        let a = DMatrix::from_fn(n, k_users, |j, i| g[active[j]].conj() * steered[(active[j], i)]);
        for i in 0..k_users {
            let d = channels.h_direct[k].dotc(&w.column(i));
            direct[(k, i)] = d;
            received[(k, i)] = d + a.column(i).dot(&x);
        }
        cascade.push(a);
    }

    let weights: Vec<f64> = state.alpha.iter().map(|a| (1.0 + a).sqrt()).collect();
    for k in 0..k_users {
        let denom: f64 = received.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise;
        state.theta[k] = received[(k, k)] * (weights[k] / denom);
    }

    let mut u = DMatrix::<Complex64>::zeros(n, n);
    let mut v = DVector::<Complex64>::zeros(n);
    for k in 0..k_users {
        let t2 = state.theta[k].norm_sqr();
        let a = &cascade[k];
        let conj_a = a.map(|z| z.conj());
        u += &conj_a * conj_a.adjoint() * Complex64::from(t2);
        v += conj_a.column(k) * (state.theta[k] * weights[k]);
        for i in 0..k_users {
            v -= conj_a.column(i) * (direct[(k, i)] * t2);
        }
    }
    let quad = PhaseQuadratic { u, v };

    let mut start = x.clone();
    if let Some(candidate) = quad.projected_stationary_point(&x) {
        if quad.value(&candidate) > quad.value(&x) {
            start = candidate;
        }
    }
    let refined = quad.coordinate_ascent(start);

    let gradient = &quad.v - &quad.u * &refined;
    let mut duals = vec![0.0; scenario.num_ris()];
    for s in 0..scenario.num_ris() {
        let members: Vec<usize> = (0..n).filter(|&j| state.phase.block(s).contains(&active[j])).collect();
        if !members.is_empty() {
            duals[s] = members
                .iter()
                .map(|&j| (refined[j].conj() * gradient[j]).re)
                .sum::<f64>()
                / members.len() as f64;
        }
    }
    state.reflection_duals = duals;

    let before = state_rate_surrogate(state, channels, scenario);
    let previous = state.phase.phases.clone();
    for (j, &l) in active.iter().enumerate() {
        state.phase.phases[l] = refined[j];
    }
    let after = state_rate_surrogate(state, channels, scenario);
    if !(after >= before) {
        state.phase.phases = previous;
    }
    Ok(())
}
