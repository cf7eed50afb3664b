//! Effective channels, SINRs and the two sides' utilities.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PricingScheme {
    /// One price shared by every RIS.
    Uniform,
    /// Each holder sets its own price.
    NonUniform,
}

/// Per-element use prices, one per RIS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceVector {
    prices: Vec<f64>,
    scheme: PricingScheme,
}

impl PriceVector {
    pub fn uniform(price: f64, num_ris: usize) -> Self {
        PriceVector {
            prices: vec![price; num_ris],
            scheme: PricingScheme::Uniform,
        }
    }

    pub fn non_uniform(prices: Vec<f64>) -> Self {
        PriceVector {
            prices,
            scheme: PricingScheme::NonUniform,
        }
    }

    pub fn scheme(&self) -> PricingScheme {
        self.scheme
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.prices
    }

    pub fn get(&self, s: usize) -> f64 {
        self.prices[s]
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Copy with RIS `s` repriced. Under uniform pricing every RIS moves together.
    pub fn with_price(&self, s: usize, price: f64) -> Self {
        let mut next = self.clone();
        match self.scheme {
            PricingScheme::Uniform => next.prices.iter_mut().for_each(|q| *q = price),
            PricingScheme::NonUniform => next.prices[s] = price,
        }
        next
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.prices.len() != scenario.num_ris() {
            return Err(Error::Dimension(format!(
                "{} prices for {} RISs",
                self.prices.len(),
                scenario.num_ris()
            )));
        }
        if let Some(q) = self.prices.iter().find(|&&q| !(0.0..=scenario.price_cap).contains(&q)) {
            return Err(Error::validation(
                "prices",
                format!("{q} outside [0, {}]", scenario.price_cap),
            ));
        }
        if self.scheme == PricingScheme::Uniform && self.prices.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::validation("prices", "uniform scheme with unequal prices"));
        }
        Ok(())
    }
}

/// Purchase indicators and the reflection coefficients of every element.
///
/// Elements of RISs that were not bought keep their stored phase but reflect nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub purchased: Vec<bool>,
    pub phases: DVector<Complex64>,
    blocks: Vec<usize>,
}

impl PhaseConfig {
    /// Zero phase on every element.
    pub fn new(scenario: &Scenario, purchased: Vec<bool>) -> Self {
        let l = scenario.total_elements();
        PhaseConfig {
            purchased,
            phases: DVector::from_element(l, Complex64::new(1.0, 0.0)),
            blocks: scenario.elements_per_ris.clone(),
        }
    }

    pub fn idle(scenario: &Scenario) -> Self {
        Self::new(scenario, vec![false; scenario.num_ris()])
    }

    pub fn num_ris(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, s: usize) -> std::ops::Range<usize> {
        let start: usize = self.blocks[..s].iter().sum();
        start..start + self.blocks[s]
    }

    pub fn elements_per_ris(&self) -> &[usize] {
        &self.blocks
    }

    /// Indices of elements that belong to purchased RISs.
    pub fn active_elements(&self) -> Vec<usize> {
        (0..self.num_ris())
            .filter(|&s| self.purchased[s])
            .flat_map(|s| self.block(s))
            .collect()
    }

    /// Diagonal of the reflection matrix: the phase where purchased, zero elsewhere.
    pub fn reflection(&self) -> DVector<Complex64> {
        let mut r = DVector::zeros(self.phases.len());
        for s in 0..self.num_ris() {
            if self.purchased[s] {
                for l in self.block(s) {
                    r[l] = self.phases[l];
                }
            }
        }
        r
    }

    pub fn check(&self, channels: &ChannelSet) -> Result<()> {
        if self.phases.len() != channels.num_elements()
            || self.blocks.iter().sum::<usize>() != self.phases.len()
            || self.purchased.len() != self.blocks.len()
        {
            return Err(Error::Dimension(format!(
                "phase config with {} elements over {} RISs, channels have {} elements",
                self.phases.len(),
                self.purchased.len(),
                channels.num_elements()
            )));
        }
        Ok(())
    }
}

/// Transmit beamformers, one column per user (M x K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beamformers(pub DMatrix<Complex64>);

impl Beamformers {
    pub fn zeros(num_antennas: usize, num_users: usize) -> Self {
        Beamformers(DMatrix::zeros(num_antennas, num_users))
    }

    pub fn total_power(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn column(&self, k: usize) -> DVector<Complex64> {
        self.0.column(k).into_owned()
    }
}

/// Effective downlink channel of user `k` as a row: `h_d^H + g^H diag(r) H`.
pub fn effective_channel(channels: &ChannelSet, phase: &PhaseConfig, k: usize) -> Result<RowDVector<Complex64>> {
    phase.check(channels)?;
    if k >= channels.num_users() {
        return Err(Error::Dimension(format!("user {k} out of range")));
    }
    Ok(effective_row(channels, &phase.reflection(), k))
}

pub(crate) fn effective_row(channels: &ChannelSet, reflection: &DVector<Complex64>, k: usize) -> RowDVector<Complex64> {
    let mut row = channels.h_direct[k].adjoint();
    let weights: DVector<Complex64> = channels.ris_user[k].zip_map(reflection, |g, r| g.conj() * r);
    if weights.iter().any(|w| *w != Complex64::new(0.0, 0.0)) {
        row += weights.transpose() * &channels.bs_ris;
    }
    row
}

/// Stacked effective channels, K x M.
pub fn effective_channels(channels: &ChannelSet, phase: &PhaseConfig) -> Result<DMatrix<Complex64>> {
    phase.check(channels)?;
    let reflection = phase.reflection();
    let k = channels.num_users();
    let m = channels.num_antennas();
    let mut out = DMatrix::zeros(k, m);
    for user in 0..k {
        out.set_row(user, &effective_row(channels, &reflection, user));
    }
    Ok(out)
}

/// SINRs of all users given the stacked effective channels.
pub fn sinrs_from_effective(effective: &DMatrix<Complex64>, beamformers: &Beamformers, noise_power: f64) -> Vec<f64> {
    let received = effective * &beamformers.0;
    (0..received.nrows())
        .map(|k| {
            let signal = received[(k, k)].norm_sqr();
            let interference: f64 = (0..received.ncols())
                .filter(|&i| i != k)
                .map(|i| received[(k, i)].norm_sqr())
                .sum();
            signal / (interference + noise_power)
        })
        .collect()
}

pub fn sinrs(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    beamformers: &Beamformers,
    noise_power: f64,
) -> Result<Vec<f64>> {
    let effective = effective_channels(channels, phase)?;
    if beamformers.0.shape() != (channels.num_antennas(), channels.num_users()) {
        return Err(Error::Dimension(format!(
            "beamformers are {:?}, expected ({}, {})",
            beamformers.0.shape(),
            channels.num_antennas(),
            channels.num_users()
        )));
    }
    Ok(sinrs_from_effective(&effective, beamformers, noise_power))
}

/// SINR of user `k`.
pub fn sinr(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    beamformers: &Beamformers,
    k: usize,
    noise_power: f64,
) -> Result<f64> {
    if k >= channels.num_users() {
        return Err(Error::Dimension(format!("user {k} out of range")));
    }
    Ok(sinrs(channels, phase, beamformers, noise_power)?[k])
}

/// Sum rate in the scenario's log base.
pub fn sum_rate(sinrs: &[f64], scenario: &Scenario) -> f64 {
    scenario.log_base.scale() * sinrs.iter().map(|g| g.ln_1p()).sum::<f64>()
}

/// `delta * sum_s psi_s q_s L_s`.
pub fn purchase_cost(purchased: &[bool], prices: &PriceVector, scenario: &Scenario) -> f64 {
    scenario.cost_weight
        * purchased
            .iter()
            .enumerate()
            .filter(|(_, &bought)| bought)
            .map(|(s, _)| prices.get(s) * scenario.elements_per_ris[s] as f64)
            .sum::<f64>()
}

/// Base-station utility: sum rate minus the weighted RIS bill.
pub fn bs_utility(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    beamformers: &Beamformers,
    prices: &PriceVector,
    scenario: &Scenario,
) -> Result<f64> {
    let gammas = sinrs(channels, phase, beamformers, scenario.noise_power.watts())?;
    Ok(sum_rate(&gammas, scenario) - purchase_cost(&phase.purchased, prices, scenario))
}

/// Revenue of RIS `s`; an unsold RIS earns nothing.
pub fn ris_utility(prices: &PriceVector, phase: &PhaseConfig, s: usize, scenario: &Scenario) -> f64 {
    if phase.purchased[s] {
        prices.get(s) * scenario.elements_per_ris[s] as f64
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::realize;
    use crate::scenario::LogBase;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_scenario(num_users: usize) -> Scenario {
        let mut s = Scenario::default();
        s.num_antennas = 1;
        s.num_users = num_users;
        s.elements_per_ris = vec![1];
        s.ris_positions.truncate(1);
        s
    }

    #[test]
    fn idle_ris_reproduces_direct_channel_exactly() {
        let s = Scenario::default();
        let (_, ch) = realize(&s);
        let phase = PhaseConfig::idle(&s);
        for k in 0..s.num_users {
            let row = effective_channel(&ch, &phase, k).unwrap();
            assert_eq!(row, ch.h_direct[k].adjoint());
        }
    }

    #[test]
    fn single_element_cascade_convention() {
        let s = scalar_scenario(1);
        let theta = 0.7_f64;
        let ch = ChannelSet {
            h_direct: vec![dvector![c(0.0, 0.0)]],
            bs_ris: DMatrix::from_element(1, 1, c(1.0, 0.0)),
            ris_user: vec![dvector![c(1.0, 0.0)]],
        };
        let mut phase = PhaseConfig::new(&s, vec![true]);
        phase.phases[0] = Complex64::from_polar(1.0, theta);
        let row = effective_channel(&ch, &phase, 0).unwrap();
        // g^H diag(phi) H with g = H = 1 gives e^{+j theta}
        assert_relative_eq!(row[0].re, theta.cos(), epsilon = 1e-15);
        assert_relative_eq!(row[0].im, theta.sin(), epsilon = 1e-15);
    }

    #[test]
    fn cascade_is_linear_in_reflection() {
        let s = Scenario::default();
        let (_, ch) = realize(&s);
        let mut phase = PhaseConfig::new(&s, vec![true; 5]);
        let direct = effective_channel(&ch, &PhaseConfig::idle(&s), 1).unwrap();
        let once = effective_channel(&ch, &phase, 1).unwrap() - &direct;
        phase.phases *= c(2.0, 0.0);
        let twice = effective_channel(&ch, &phase, 1).unwrap() - &direct;
        assert!((twice - once * c(2.0, 0.0)).norm() < 1e-12 * direct.norm());
    }

    #[test]
    fn sinr_hand_values() {
        // one user: signal over noise
        let s = scalar_scenario(1);
        let ch = ChannelSet {
            h_direct: vec![dvector![c(2.0, 0.0)]],
            bs_ris: DMatrix::zeros(1, 1),
            ris_user: vec![dvector![c(0.0, 0.0)]],
        };
        let w = Beamformers(DMatrix::from_element(1, 1, c(0.0, 1.5)));
        let g = sinr(&ch, &PhaseConfig::idle(&s), &w, 0, 0.5).unwrap();
        assert_relative_eq!(g, 9.0 / 0.5);

        // M=1, K=2, unit channels, equal power p, noise p -> 0.5
        let s = scalar_scenario(2);
        let p: f64 = 0.3;
        let ch = ChannelSet {
            h_direct: vec![dvector![c(1.0, 0.0)], dvector![c(1.0, 0.0)]],
            bs_ris: DMatrix::zeros(1, 1),
            ris_user: vec![dvector![c(0.0, 0.0)], dvector![c(0.0, 0.0)]],
        };
        let w = Beamformers(DMatrix::from_element(1, 2, c(p.sqrt(), 0.0)));
        let g = sinrs(&ch, &PhaseConfig::idle(&s), &w, p).unwrap();
        assert_relative_eq!(g[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.5, epsilon = 1e-15);

        let zero = Beamformers::zeros(1, 2);
        assert_eq!(sinrs(&ch, &PhaseConfig::idle(&s), &zero, p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn utility_hand_values() {
        let mut s = Scenario::default();
        s.elements_per_ris = vec![20];
        s.ris_positions.truncate(1);
        s.num_users = 2;
        let prices = PriceVector::non_uniform(vec![0.05]);
        let u = sum_rate(&[1.0, 3.0], &s) - purchase_cost(&[true], &prices, &s);
        assert_relative_eq!(u, 2f64.ln() + 4f64.ln() - 1.0, epsilon = 1e-15);
        assert_relative_eq!(u, 1.0794415416798357, epsilon = 1e-12);

        s.cost_weight = 0.0;
        assert_relative_eq!(sum_rate(&[std::f64::consts::E - 1.0], &s), 1.0, epsilon = 1e-15);
        s.log_base = LogBase::Base2;
        assert_relative_eq!(sum_rate(&[1.0, 3.0], &s), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn null_strategy_has_zero_utility() {
        let s = Scenario::default();
        let (_, ch) = realize(&s);
        let w = Beamformers::zeros(4, 4);
        let prices = PriceVector::uniform(0.05, 5);
        let u = bs_utility(&ch, &PhaseConfig::idle(&s), &w, &prices, &s).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn ris_revenue_is_gated_on_sale() {
        let mut s = Scenario::default();
        s.elements_per_ris = vec![10, 20];
        s.ris_positions.truncate(2);
        let prices = PriceVector::non_uniform(vec![2.0, 1.5]);
        let mut phase = PhaseConfig::new(&s, vec![true, true]);
        assert_eq!(ris_utility(&prices, &phase, 0, &s), 20.0);
        assert_eq!(ris_utility(&prices, &phase, 1, &s), 30.0);
        phase.purchased[0] = false;
        assert_eq!(ris_utility(&prices, &phase, 0, &s), 0.0);
    }

    #[test]
    fn bs_utility_falls_at_rate_delta_l_in_price() {
        let s = Scenario::default();
        let (_, ch) = realize(&s);
        let phase = PhaseConfig::new(&s, vec![true, false, true, false, false]);
        let w = Beamformers(DMatrix::from_element(4, 4, c(0.02, 0.01)));
        let base = PriceVector::non_uniform(vec![0.01; 5]);
        let u0 = bs_utility(&ch, &phase, &w, &base, &s).unwrap();
        let u1 = bs_utility(&ch, &phase, &w, &base.with_price(2, 0.03), &s).unwrap();
        assert_relative_eq!(u0 - u1, s.cost_weight * 20.0 * 0.02, epsilon = 1e-12);
        let u2 = bs_utility(&ch, &phase, &w, &base.with_price(1, 0.03), &s).unwrap();
        assert_eq!(u0, u2);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = Scenario::default();
        let (_, ch) = realize(&s);
        let mut other = s.clone();
        other.elements_per_ris = vec![3; 5];
        let bad = PhaseConfig::idle(&other);
        assert!(matches!(effective_channel(&ch, &bad, 0), Err(Error::Dimension(_))));
    }
}
