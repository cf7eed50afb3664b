//! RIS holders' pricing and the outer Stackelberg loop.
//!
//! Revenue as a function of a holder's own price jumps to zero where the base
//! station stops buying, so prices are searched derivative-free: a fixed
//! geometric-plus-linear grid over `[0, price_cap]`, then golden-section
//! refinement inside the bracket around the best grid point.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::follower::{FollowerState, ResponseTable, SearchMode};
use crate::metrics::{bs_utility, ris_utility, PriceVector, PricingScheme};
use crate::rng::{substream, Stream};
use crate::scenario::Scenario;

/// Smallest nonzero grid price, as a fraction of the cap.
pub const GRID_FLOOR: f64 = 1e-6;
/// An equilibrium is accepted when no deviation gains more than this times `max(1, V_s)`.
pub const SE_TOLERANCE: f64 = 1e-3;
const GOLDEN_ITERS: usize = 200;

/// How prices are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    StackelbergUniform,
    #[serde(rename = "stackelberg-nonuniform")]
    StackelbergNonUniform,
    RandomUniform,
    #[serde(rename = "random")]
    RandomNonUniform,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::StackelbergUniform,
        Scheme::StackelbergNonUniform,
        Scheme::RandomUniform,
        Scheme::RandomNonUniform,
    ];

    pub fn pricing(self) -> PricingScheme {
        match self {
            Scheme::StackelbergUniform | Scheme::RandomUniform => PricingScheme::Uniform,
            Scheme::StackelbergNonUniform | Scheme::RandomNonUniform => PricingScheme::NonUniform,
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, Scheme::RandomUniform | Scheme::RandomNonUniform)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::StackelbergUniform => "stackelberg-uniform",
            Scheme::StackelbergNonUniform => "stackelberg-nonuniform",
            Scheme::RandomUniform => "random-uniform",
            Scheme::RandomNonUniform => "random",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stackelberg-uniform" | "uniform" => Ok(Scheme::StackelbergUniform),
            "stackelberg-nonuniform" | "nonuniform" | "non-uniform" => Ok(Scheme::StackelbergNonUniform),
            "random-uniform" => Ok(Scheme::RandomUniform),
            "random" | "random-nonuniform" => Ok(Scheme::RandomNonUniform),
            other => Err(Error::parse("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

/// Result of checking the equilibrium conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeVerification {
    /// Largest revenue gain from a unilateral price deviation, per leader.
    /// Under uniform pricing there is one entry, for the shared price.
    pub max_gain: Vec<f64>,
    /// Gain the base station could get by switching purchase set at the final prices.
    pub follower_gain: f64,
    pub grid_size: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub scheme: Scheme,
    pub prices: PriceVector,
    pub follower: FollowerState,
    pub ris_utilities: Vec<f64>,
    pub bs_utility: f64,
    pub rounds: usize,
    pub converged: bool,
    /// Prices after each round; the first entry is the starting point.
    pub price_trace: Vec<Vec<f64>>,
    pub verification: Option<SeVerification>,
}

impl EquilibriumReport {
    fn assemble(
        scheme: Scheme,
        prices: PriceVector,
        follower: FollowerState,
        rounds: usize,
        converged: bool,
        price_trace: Vec<Vec<f64>>,
        channels: &ChannelSet,
        scenario: &Scenario,
    ) -> Result<Self> {
        let bs_utility = bs_utility(channels, &follower.phase, &follower.beamformers, &prices, scenario)?;
        let ris_utilities = (0..scenario.num_ris())
            .map(|s| ris_utility(&prices, &follower.phase, s, scenario))
            .collect();
        Ok(EquilibriumReport {
            scheme,
            prices,
            follower,
            ris_utilities,
            bs_utility,
            rounds,
            converged,
            price_trace,
            verification: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// Candidate prices: zero, a geometric ladder from `GRID_FLOOR * cap` to the
/// cap, and an evenly spaced ladder, merged and sorted. `points` counts them all.
pub fn price_grid(cap: f64, points: usize) -> Vec<f64> {
    if cap <= 0.0 || points <= 1 {
        return vec![0.0];
    }
    let geometric = points / 2;
    let linear = points - geometric - 1;
    let mut grid = vec![0.0];
    let ratio = GRID_FLOOR.ln();
    for i in 0..geometric {
        let t = if geometric == 1 {
            1.0
        } else {
            i as f64 / (geometric - 1) as f64
        };
        grid.push(cap * (ratio * (1.0 - t)).exp());
    }
    for i in 1..=linear {
        grid.push(cap * i as f64 / (linear + 1) as f64);
    }
    grid.iter_mut().for_each(|q| *q = q.min(cap));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Evenly spaced deviation grid merged with the solver grid.
pub fn verification_grid(scenario: &Scenario, points: usize) -> Vec<f64> {
    let cap = scenario.price_cap;
    let mut grid = price_grid(cap, scenario.price_grid_points);
    if points >= 2 {
        grid.extend((0..points).map(|i| cap * i as f64 / (points - 1) as f64));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Maximizes `revenue` over the grid (plus `extra` candidates), then refines by
/// golden section inside the bracket around the best grid point. Ties go to the
/// lower price.
pub fn maximize_over_grid(
    grid: &[f64],
    extra: &[f64],
    mut revenue: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let mut best = (f64::NEG_INFINITY, 0.0);
    let consider = |q: f64, r: f64, best: &mut (f64, f64)| {
        if r > best.0 || (r == best.0 && q < best.1) {
            *best = (r, q);
        }
    };
    let mut best_index = 0;
    for (i, &q) in grid.iter().enumerate() {
        let r = revenue(q)?;
        if r > best.0 {
            best_index = i;
        }
        consider(q, r, &mut best);
    }
    for &q in extra {
        let r = revenue(q)?;
        consider(q, r, &mut best);
    }
    if grid.len() >= 2 {
        let mut a = grid[best_index.saturating_sub(1)];
        let mut b = grid[(best_index + 1).min(grid.len() - 1)];
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let mut f1 = revenue(x1)?;
        let mut f2 = revenue(x2)?;
        consider(x1, f1, &mut best);
        consider(x2, f2, &mut best);
        for _ in 0..GOLDEN_ITERS {
            if b - a <= 1e-13 * b.max(f64::MIN_POSITIVE) {
                break;
            }
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + ratio * (b - a);
                f2 = revenue(x2)?;
                consider(x2, f2, &mut best);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - ratio * (b - a);
                f1 = revenue(x1)?;
                consider(x1, f1, &mut best);
            }
        }
    }
    Ok((best.1, best.0))
}

/// Revenue of RIS `s` when the base station best-responds to `prices`.
pub fn leader_revenue(table: &ResponseTable, prices: &PriceVector, s: usize) -> Result<f64> {
    let bought = table.best_purchase(prices)?;
    Ok(if bought[s] {
        prices.get(s) * table.scenario().elements_per_ris[s] as f64
    } else {
        0.0
    })
}

/// Combined revenue of all holders at `prices`.
pub fn total_revenue(table: &ResponseTable, prices: &PriceVector) -> Result<f64> {
    let bought = table.best_purchase(prices)?;
    Ok((0..bought.len())
        .filter(|&s| bought[s])
        .map(|s| prices.get(s) * table.scenario().elements_per_ris[s] as f64)
        .sum())
}

/// Revenue-maximizing price of holder `s` with the other prices held fixed.
/// The holder's current price is always among the candidates.
pub fn price_best_response_with(table: &ResponseTable, s: usize, current: &PriceVector) -> Result<f64> {
    let scenario = table.scenario();
    if s >= scenario.num_ris() {
        return Err(Error::Dimension(format!("RIS index {s} out of range")));
    }
    let grid = price_grid(scenario.price_cap, scenario.price_grid_points);
    let (q, _) = maximize_over_grid(&grid, &[current.get(s)], |q| {
        leader_revenue(table, &current.with_price(s, q), s)
    })?;
    Ok(q)
}

fn new_table<'a>(channels: &'a ChannelSet, scenario: &'a Scenario) -> Result<ResponseTable<'a>> {
    let table = ResponseTable::new(channels, scenario)?;
    if table.mode() == SearchMode::Exhaustive {
        table.prefill()?;
    }
    Ok(table)
}

/// Best price for holder `s` (zero-based) given everyone else's current price.
pub fn price_best_response(s: usize, current: &PriceVector, channels: &ChannelSet, scenario: &Scenario) -> Result<f64> {
    price_best_response_with(&new_table(channels, scenario)?, s, current)
}

/// Solves the pricing game by backward induction on a prepared response table.
///
/// Non-uniform: holders best-respond in turn, starting from zero prices, until
/// no price moves by more than `outer_tolerance * price_cap` over a round or
/// `max_outer_iters` rounds pass. Uniform: one shared price maximizing the
/// holders' combined revenue.
pub fn stackelberg_solve_with(table: &ResponseTable, pricing: PricingScheme) -> Result<EquilibriumReport> {
    let scenario = table.scenario();
    let channels = table.channels();
    let num_ris = scenario.num_ris();
    let (prices, rounds, converged, trace, scheme) = match pricing {
        PricingScheme::Uniform => {
            let grid = price_grid(scenario.price_cap, scenario.price_grid_points);
            let (q, _) = maximize_over_grid(&grid, &[], |q| total_revenue(table, &PriceVector::uniform(q, num_ris)))?;
            let prices = PriceVector::uniform(q, num_ris);
            let trace = vec![vec![0.0; num_ris], prices.as_slice().to_vec()];
            (prices, 1, true, trace, Scheme::StackelbergUniform)
        }
        PricingScheme::NonUniform => {
            let mut prices = PriceVector::non_uniform(vec![0.0; num_ris]);
            let mut trace = vec![prices.as_slice().to_vec()];
            let mut converged = false;
            let mut rounds = 0;
            let threshold = scenario.outer_tolerance * scenario.price_cap;
            while rounds < scenario.max_outer_iters {
                rounds += 1;
                let mut largest_move: f64 = 0.0;
                for s in 0..num_ris {
                    let q = price_best_response_with(table, s, &prices)?;
                    largest_move = largest_move.max((q - prices.get(s)).abs());
                    prices = prices.with_price(s, q);
                }
                trace.push(prices.as_slice().to_vec());
                if largest_move < threshold {
                    converged = true;
                    break;
                }
            }
            (prices, rounds, converged, trace, Scheme::StackelbergNonUniform)
        }
    };
    let follower = table.best_response(&prices)?;
    let mut report =
        EquilibriumReport::assemble(scheme, prices, follower, rounds, converged, trace, channels, scenario)?;
    report.verification = Some(verify_se_with(&report, table, scenario.price_grid_points)?);
    Ok(report)
}

pub fn stackelberg_solve(
    channels: &ChannelSet,
    scenario: &Scenario,
    pricing: PricingScheme,
) -> Result<EquilibriumReport> {
    stackelberg_solve_with(&new_table(channels, scenario)?, pricing)
}

/// Checks the equilibrium conditions of `report` against unilateral price
/// deviations on [`verification_grid`], re-solving the follower at each one.
pub fn verify_se_with(report: &EquilibriumReport, table: &ResponseTable, grid_size: usize) -> Result<SeVerification> {
    let scenario = table.scenario();
    let grid = verification_grid(scenario, grid_size);
    let prices = &report.prices;
    let num_ris = scenario.num_ris();

    let max_gain: Vec<f64> = match prices.scheme() {
        PricingScheme::Uniform => {
            let current: f64 = report.ris_utilities.iter().sum();
            let mut best = f64::NEG_INFINITY;
            for &q in &grid {
                best = best.max(total_revenue(table, &PriceVector::uniform(q, num_ris))?);
            }
            vec![best - current]
        }
        PricingScheme::NonUniform => (0..num_ris)
            .map(|s| {
                let current = report.ris_utilities[s];
                let mut best = f64::NEG_INFINITY;
                for &q in &grid {
                    best = best.max(leader_revenue(table, &prices.with_price(s, q), s)?);
                }
                Ok(best - current)
            })
            .collect::<Result<_>>()?,
    };

    let chosen = table.utility(&report.follower.phase.purchased, prices)?;
    let best_set = table.best_purchase(prices)?;
    let follower_gain = table.utility(&best_set, prices)? - chosen;

    let accepted = match prices.scheme() {
        PricingScheme::Uniform => {
            let total: f64 = report.ris_utilities.iter().sum();
            max_gain[0] < SE_TOLERANCE * total.max(1.0)
        }
        PricingScheme::NonUniform => max_gain
            .iter()
            .zip(&report.ris_utilities)
            .all(|(g, v)| *g < SE_TOLERANCE * v.max(1.0)),
    } && follower_gain <= 0.0;

    Ok(SeVerification {
        max_gain,
        follower_gain,
        grid_size,
        accepted,
    })
}

pub fn verify_se(
    report: &EquilibriumReport,
    channels: &ChannelSet,
    scenario: &Scenario,
    grid_size: usize,
) -> Result<SeVerification> {
    verify_se_with(report, &new_table(channels, scenario)?, grid_size)
}

/// Baseline: prices drawn uniformly from `[0, price_cap]` (one shared draw under
/// uniform pricing) and a single follower best response.
pub fn random_pricing_with<R: Rng + ?Sized>(
    table: &ResponseTable,
    pricing: PricingScheme,
    rng: &mut R,
) -> Result<EquilibriumReport> {
    let scenario = table.scenario();
    let cap = scenario.price_cap;
    let num_ris = scenario.num_ris();
    let (prices, scheme) = match pricing {
        PricingScheme::Uniform => (
            PriceVector::uniform(cap * rng.random::<f64>(), num_ris),
            Scheme::RandomUniform,
        ),
        PricingScheme::NonUniform => (
            PriceVector::non_uniform((0..num_ris).map(|_| cap * rng.random::<f64>()).collect()),
            Scheme::RandomNonUniform,
        ),
    };
    let follower = table.best_response(&prices)?;
    let trace = vec![prices.as_slice().to_vec()];
    let mut report = EquilibriumReport::assemble(scheme, prices, follower, 0, true, trace, table.channels(), scenario)?;
    report.verification = Some(verify_se_with(&report, table, scenario.price_grid_points)?);
    Ok(report)
}

/// Random-pricing baseline drawn from the scenario seed's pricing stream.
pub fn random_pricing(channels: &ChannelSet, scenario: &Scenario, pricing: PricingScheme) -> Result<EquilibriumReport> {
    let mut rng = substream(scenario.rng_seed, Stream::Pricing);
    random_pricing_with(&new_table(channels, scenario)?, pricing, &mut rng)
}

/// Runs any scheme on a prepared table; random schemes draw from the scenario seed.
pub fn solve_scheme(table: &ResponseTable, scheme: Scheme) -> Result<EquilibriumReport> {
    if scheme.is_random() {
        let mut rng = substream(table.scenario().rng_seed, Stream::Pricing);
        random_pricing_with(table, scheme.pricing(), &mut rng)
    } else {
        stackelberg_solve_with(table, scheme.pricing())
    }
}

/// Builds the response table once and runs `scheme` on it.
pub fn solve(channels: &ChannelSet, scenario: &Scenario, scheme: Scheme) -> Result<EquilibriumReport> {
    solve_scheme(&new_table(channels, scenario)?, scheme)
}

pub fn response_table<'a>(channels: &'a ChannelSet, scenario: &'a Scenario) -> Result<ResponseTable<'a>> {
    new_table(channels, scenario)
}
