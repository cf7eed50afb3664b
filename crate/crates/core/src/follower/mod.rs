//! Base-station best response: beamforming, RIS phases and RIS purchases.
//!
//! For a fixed purchase set the sum-rate term is handled with the Lagrangian
//! dual transform (auxiliary SINRs `alpha`), which leaves a sum of ratios. The
//! beamformer and phase blocks are then each solved through a quadratic
//! transform (`beta` for the beamformers, `theta` for the phases) and the three
//! blocks are updated in turn until the objective settles.
//!
//! The sum rate for a purchase set does not depend on prices, so a solve for
//! one set can be reused under any price vector; [`ResponseTable`] caches them.

mod beamforming;
mod phases;
mod purchase;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::Result;
use crate::metrics::{effective_channels, purchase_cost, sinrs_from_effective, Beamformers, PhaseConfig, PriceVector};
use crate::rng::{substream, Stream};
use crate::scenario::Scenario;

pub use beamforming::update_beamformers;
pub use phases::update_phases;
pub use purchase::{purchase_decision, ResponseTable, SearchMode};

/// One completed alternating-optimization pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub surrogate: f64,
    pub power_used: f64,
    pub max_alpha_gap: f64,
}

/// Base-station strategy together with the solver's auxiliary variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerState {
    pub beamformers: Beamformers,
    pub phase: PhaseConfig,
    /// Auxiliary SINRs of the Lagrangian dual transform.
    pub alpha: Vec<f64>,
    /// Quadratic-transform variables of the beamformer block.
    pub beta: Vec<Complex64>,
    /// Quadratic-transform variables of the phase block.
    pub theta: Vec<Complex64>,
    /// Power-budget multiplier.
    pub lambda0: f64,
    /// Unit-modulus multipliers averaged per RIS; diagnostics only.
    pub reflection_duals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Surrogate value after every accepted block update.
    pub trace: Vec<f64>,
    pub records: Vec<IterationRecord>,
}

impl FollowerState {
    /// Matched-filter beamformers with an equal power split and zero RIS phases.
    pub fn initial(channels: &ChannelSet, purchased: Vec<bool>, scenario: &Scenario) -> Result<Self> {
        let phase = PhaseConfig::new(scenario, purchased);
        let effective = effective_channels(channels, &phase)?;
        let beamformers = matched_filter(&effective, scenario.power_budget.watts());
        Ok(Self::assemble(channels, beamformers, phase, scenario))
    }

    /// Random unit-modulus phases and random beamformers scaled to the budget.
    pub fn random<R: Rng + ?Sized>(
        channels: &ChannelSet,
        purchased: Vec<bool>,
        scenario: &Scenario,
        rng: &mut R,
    ) -> Self {
        let mut phase = PhaseConfig::new(scenario, purchased);
        for z in phase.phases.iter_mut() {
            *z = Complex64::from_polar(1.0, std::f64::consts::TAU * rng.random::<f64>());
        }
        let (m, k) = (scenario.num_antennas, scenario.num_users);
        let mut w = DMatrix::from_fn(m, k, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let norm = w.norm();
        if norm > 0.0 {
            w *= Complex64::from(scenario.power_budget.watts().sqrt() / norm);
        }
        Self::assemble(channels, Beamformers(w), phase, scenario)
    }

    pub(crate) fn assemble(
        channels: &ChannelSet,
        beamformers: Beamformers,
        phase: PhaseConfig,
        scenario: &Scenario,
    ) -> Self {
        let k = scenario.num_users;
        let mut state = FollowerState {
            beamformers,
            phase,
            alpha: vec![0.0; k],
            beta: vec![Complex64::new(0.0, 0.0); k],
            theta: vec![Complex64::new(0.0, 0.0); k],
            lambda0: 0.0,
            reflection_duals: vec![0.0; scenario.num_ris()],
            iterations: 0,
            converged: false,
            trace: Vec::new(),
            records: Vec::new(),
        };
        update_alpha(&mut state, channels, scenario);
        state
    }

    pub fn sinrs(&self, channels: &ChannelSet, scenario: &Scenario) -> Vec<f64> {
        let effective = effective_channels(channels, &self.phase).expect("state matches channels");
        sinrs_from_effective(&effective, &self.beamformers, scenario.noise_power.watts())
    }

    pub fn sum_rate(&self, channels: &ChannelSet, scenario: &Scenario) -> f64 {
        crate::metrics::sum_rate(&self.sinrs(channels, scenario), scenario)
    }

    pub fn utility(&self, channels: &ChannelSet, prices: &PriceVector, scenario: &Scenario) -> f64 {
        self.sum_rate(channels, scenario) - purchase_cost(&self.phase.purchased, prices, scenario)
    }

    pub fn power_used(&self) -> f64 {
        self.beamformers.total_power()
    }

    pub fn max_alpha_gap(&self, channels: &ChannelSet, scenario: &Scenario) -> f64 {
        self.sinrs(channels, scenario)
            .iter()
            .zip(&self.alpha)
            .map(|(g, a)| (g - a).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn matched_filter(effective: &DMatrix<Complex64>, power: f64) -> Beamformers {
    let (k, m) = effective.shape();
    let per_user = (power / k as f64).sqrt();
    let mut w = DMatrix::zeros(m, k);
    for user in 0..k {
        let h = effective.row(user).adjoint();
        let norm = h.norm();
        if norm > 0.0 {
            w.set_column(user, &(h * Complex64::from(per_user / norm)));
        } else {
            w[(0, user)] = Complex64::from(per_user);
        }
    }
    Beamformers(w)
}

/// Lagrangian-dual-transform surrogate of the sum rate (no purchase cost),
/// for auxiliary SINRs `alpha` and actual SINRs `gammas`.
pub(crate) fn rate_surrogate(alpha: &[f64], gammas: &[f64], scenario: &Scenario) -> f64 {
    scenario.log_base.scale()
        * alpha
            .iter()
            .zip(gammas)
            .map(|(&a, &g)| a.ln_1p() - a + (1.0 + a) * g / (1.0 + g))
            .sum::<f64>()
}

pub(crate) fn state_rate_surrogate(state: &FollowerState, channels: &ChannelSet, scenario: &Scenario) -> f64 {
    rate_surrogate(&state.alpha, &state.sinrs(channels, scenario), scenario)
}

/// Transformed base-station objective at the state's current variables.
pub fn surrogate_objective(
    state: &FollowerState,
    channels: &ChannelSet,
    prices: &PriceVector,
    scenario: &Scenario,
) -> f64 {
    state_rate_surrogate(state, channels, scenario) - purchase_cost(&state.phase.purchased, prices, scenario)
}

/// Sets every auxiliary SINR to the current SINR, where the transform is tight.
pub fn update_alpha(state: &mut FollowerState, channels: &ChannelSet, scenario: &Scenario) {
    state.alpha = state.sinrs(channels, scenario);
}

/// Alternating optimization of the sum rate for the state's purchase set,
/// starting from the given state. The trace excludes purchase cost.
pub(crate) fn optimize_rate(
    mut state: FollowerState,
    channels: &ChannelSet,
    scenario: &Scenario,
) -> Result<FollowerState> {
    update_alpha(&mut state, channels, scenario);
    let mut previous = state_rate_surrogate(&state, channels, scenario);
    state.trace.push(previous);
    state.converged = false;
    for iter in 1..=scenario.max_inner_iters {
        update_beamformers(&mut state, channels, scenario)?;
        state.trace.push(state_rate_surrogate(&state, channels, scenario));
        update_phases(&mut state, channels, scenario)?;
        let before_alpha = state_rate_surrogate(&state, channels, scenario);
        state.trace.push(before_alpha);
        let max_alpha_gap = state.max_alpha_gap(channels, scenario);
        update_alpha(&mut state, channels, scenario);
        let current = state_rate_surrogate(&state, channels, scenario);
        state.trace.push(current);
        state.iterations = iter;
        state.records.push(IterationRecord {
            iter,
            surrogate: current,
            power_used: state.power_used(),
            max_alpha_gap,
        });
        let change = (current - previous).abs();
        if change <= scenario.inner_tolerance * previous.abs() || change == 0.0 {
            state.converged = true;
            break;
        }
        previous = current;
    }
    Ok(state)
}

/// Best sum-rate solution for a purchase set over the deterministic start,
/// one start per warm state, and `follower_restarts` random starts.
pub(crate) fn best_rate_solution(
    channels: &ChannelSet,
    purchased: &[bool],
    scenario: &Scenario,
    warm_starts: &[&FollowerState],
) -> Result<FollowerState> {
    let mut best = optimize_rate(
        FollowerState::initial(channels, purchased.to_vec(), scenario)?,
        channels,
        scenario,
    )?;
    let consider = |candidate: FollowerState, best: &mut FollowerState| {
        if candidate.sum_rate(channels, scenario) > best.sum_rate(channels, scenario) {
            *best = candidate;
        }
    };
    for warm in warm_starts {
        let mut phase = PhaseConfig::new(scenario, purchased.to_vec());
        for s in 0..scenario.num_ris() {
            if purchased[s] && warm.phase.purchased[s] {
                for l in phase.block(s) {
                    phase.phases[l] = warm.phase.phases[l];
                }
            }
        }
        let start = FollowerState::assemble(channels, warm.beamformers.clone(), phase, scenario);
        consider(optimize_rate(start, channels, scenario)?, &mut best);
    }
    for restart in 0..scenario.follower_restarts {
        let mut rng = substream(scenario.rng_seed, Stream::FollowerRestart { restart });
        let start = FollowerState::random(channels, purchased.to_vec(), scenario, &mut rng);
        consider(optimize_rate(start, channels, scenario)?, &mut best);
    }
    Ok(best)
}

/// Solves the base-station problem for a fixed purchase set and prices.
///
/// Runs alpha, beamformer and phase updates in turn until the relative change
/// of the objective drops below `inner_tolerance`. If `max_inner_iters` runs
/// out first the state is returned with `converged = false`.
pub fn solve_p1(
    channels: &ChannelSet,
    prices: &PriceVector,
    purchased: &[bool],
    scenario: &Scenario,
) -> Result<FollowerState> {
    channels.check(scenario)?;
    prices.validate(scenario).or_else(|e| match e {
        // prices above the cap are still meaningful to the follower
        crate::Error::Validation { .. } => Ok(()),
        other => Err(other),
    })?;
    let start = FollowerState::initial(channels, purchased.to_vec(), scenario)?;
    let mut state = optimize_rate(start, channels, scenario)?;
    shift_trace(&mut state, -purchase_cost(purchased, prices, scenario));
    Ok(state)
}

pub(crate) fn shift_trace(state: &mut FollowerState, offset: f64) {
    state.trace.iter_mut().for_each(|v| *v += offset);
    state.records.iter_mut().for_each(|r| r.surrogate += offset);
}
