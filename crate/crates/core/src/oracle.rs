//! Brute-force reference solvers for small instances.
//!
//! The follower oracle enumerates every purchase set and runs multi-start
//! projected gradient ascent directly on the sum rate, with finite-difference
//! gradients and a backtracking step. It shares nothing with the
//! fractional-programming solver beyond the SINR evaluation itself.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{realize, ChannelDump, ChannelSet};
use crate::error::{Error, Result};
use crate::follower::{purchase_decision, ResponseTable};
use crate::leader::total_revenue;
use crate::metrics::{purchase_cost, sinrs, Beamformers, PhaseConfig, PriceVector};
use crate::rng::{substream, Stream};
use crate::scenario::{Scenario, ScenarioConfig};

pub const MAX_ORACLE_ANTENNAS: usize = 2;
pub const MAX_ORACLE_USERS: usize = 2;
pub const MAX_ORACLE_ELEMENTS: usize = 4;
/// Largest RIS count the oracle enumerates (2^12 purchase sets).
pub const MAX_ORACLE_SUBSETS: usize = 12;
pub const FIXTURE_SCHEMA_VERSION: u32 = 1;

const FD_STEP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBudget {
    /// Gradient steps per start.
    pub ascent_steps: usize,
    /// Random starts per purchase set.
    pub restarts: usize,
    /// Points of the dense price scan.
    pub price_grid: usize,
    /// Largest RIS count to enumerate.
    pub subset_cap: usize,
    pub seed: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            ascent_steps: 2000,
            restarts: 12,
            price_grid: 512,
            subset_cap: 3,
            seed: 0,
        }
    }
}

impl OracleBudget {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("ascent_steps", self.ascent_steps),
            ("restarts", self.restarts),
            ("price_grid", self.price_grid),
            ("subset_cap", self.subset_cap),
        ] {
            if value == 0 {
                return Err(Error::validation(field, "must be positive"));
            }
        }
        if self.subset_cap > MAX_ORACLE_SUBSETS {
            return Err(Error::validation(
                "subset_cap",
                format!("at most {MAX_ORACLE_SUBSETS}, got {}", self.subset_cap),
            ));
        }
        Ok(())
    }
}

/// Best base-station strategy found by the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub utility: f64,
    pub sum_rate: f64,
    pub purchased: Vec<bool>,
    /// Best utility per purchase set, indexed by the set's bit mask.
    pub set_utilities: Vec<f64>,
}

/// Real parametrization of (w, phi): beamformers normalized by sqrt(p_max)
/// first, then the active reflection coefficients.
struct Ascent<'a> {
    channels: &'a ChannelSet,
    scenario: &'a Scenario,
    phase: PhaseConfig,
    active: Vec<usize>,
    m: usize,
    k: usize,
}

impl Ascent<'_> {
    fn weights(&self) -> usize {
        2 * self.m * self.k
    }

    fn dim(&self) -> usize {
        self.weights() + 2 * self.active.len()
    }

    fn rate(&self, x: &[f64]) -> f64 {
        let amp = self.scenario.power_budget.watts().sqrt();
        let w = DMatrix::from_fn(self.m, self.k, |i, j| {
            let at = 2 * (j * self.m + i);
            Complex64::new(x[at], x[at + 1]) * amp
        });
        let mut phase = self.phase.clone();
        for (j, &l) in self.active.iter().enumerate() {
            let at = self.weights() + 2 * j;
            phase.phases[l] = Complex64::new(x[at], x[at + 1]);
        }
        let gammas = sinrs(
            self.channels,
            &phase,
            &Beamformers(w),
            self.scenario.noise_power.watts(),
        )
        .expect("oracle shapes match the channels");
        crate::metrics::sum_rate(&gammas, self.scenario)
    }

    fn project(&self, x: &mut [f64]) {
        let nw = self.weights();
        let norm = x[..nw].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            x[..nw].iter_mut().for_each(|v| *v /= norm);
        }
        for pair in x[nw..].chunks_mut(2) {
            let r = pair[0].hypot(pair[1]);
            if r > 0.0 {
                pair[0] /= r;
                pair[1] /= r;
            } else {
                pair[0] = 1.0;
            }
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                probe[i] = x[i] + FD_STEP;
                let up = self.rate(&probe);
                probe[i] = x[i] - FD_STEP;
                let down = self.rate(&probe);
                probe[i] = x[i];
                (up - down) / (2.0 * FD_STEP)
            })
            .collect()
    }

    fn climb(&self, mut x: Vec<f64>, steps: usize) -> (f64, Vec<f64>) {
        self.project(&mut x);
        let mut value = self.rate(&x);
        let mut step: f64 = 1.0;
        for _ in 0..steps {
            let g = self.gradient(&x);
            let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if g_norm == 0.0 || !g_norm.is_finite() {
                break;
            }
            let mut moved = false;
            step = (step * 2.0).min(1e6);
            while step * g_norm > 1e-14 {
                let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                self.project(&mut trial);
                let v = self.rate(&trial);
                if v > value {
                    moved = v - value > 1e-15 * value.abs();
                    x = trial;
                    value = v;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (value, x)
    }
}

fn check_size(scenario: &Scenario, channels: &ChannelSet, budget: &OracleBudget) -> Result<()> {
    channels.check(scenario)?;
    budget.validate()?;
    let limits = [
        ("antennas", scenario.num_antennas, MAX_ORACLE_ANTENNAS),
        ("users", scenario.num_users, MAX_ORACLE_USERS),
        ("RIS elements", scenario.total_elements(), MAX_ORACLE_ELEMENTS),
        ("RISs", scenario.num_ris(), budget.subset_cap),
    ];
    for (what, n, limit) in limits {
        if n > limit {
            return Err(Error::OracleSize(format!("{n} {what}, limit {limit}")));
        }
    }
    Ok(())
}

/// Highest sum rate the oracle finds for one purchase set.
pub fn oracle_rate(
    channels: &ChannelSet,
    purchased: &[bool],
    scenario: &Scenario,
    budget: &OracleBudget,
) -> Result<f64> {
    check_size(scenario, channels, budget)?;
    let phase = PhaseConfig::new(scenario, purchased.to_vec());
    let ascent = Ascent {
        channels,
        scenario,
        active: phase.active_elements(),
        phase,
        m: scenario.num_antennas,
        k: scenario.num_users,
    };
    let starts: Vec<f64> = (0..budget.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = substream(budget.seed, Stream::Oracle { restart });
            let x: Vec<f64> = (0..ascent.dim()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            ascent.climb(x, budget.ascent_steps).0
        })
        .collect();
    // max, earliest restart on ties
    Ok(starts.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Best base-station utility at `prices` by exhaustive purchase enumeration.
/// Ties go to more purchases, then to the set buying the lower-indexed RIS.
pub fn oracle_follower(
    channels: &ChannelSet,
    prices: &PriceVector,
    scenario: &Scenario,
    budget: &OracleBudget,
) -> Result<OracleSolution> {
    check_size(scenario, channels, budget)?;
    let n = scenario.num_ris();
    let mut best: Option<(f64, f64, Vec<bool>)> = None;
    let mut set_utilities = Vec::with_capacity(1 << n);
    for mask in 0u32..1 << n {
        let set: Vec<bool> = (0..n).map(|s| mask >> s & 1 == 1).collect();
        let rate = oracle_rate(channels, &set, scenario, budget)?;
        let utility = rate - purchase_cost(&set, prices, scenario);
        set_utilities.push(utility);
        let better = match &best {
            None => true,
            Some((u, _, b)) => {
                let count = |s: &[bool]| s.iter().filter(|&&x| x).count();
                utility > *u || (utility == *u && (count(&set), &set) > (count(b), b))
            }
        };
        if better {
            best = Some((utility, rate, set));
        }
    }
    let (utility, sum_rate, purchased) = best.expect("at least one set");
    Ok(OracleSolution {
        utility,
        sum_rate,
        purchased,
        set_utilities,
    })
}

/// Dense scan of a shared price over `grid`, re-solving the base station at
/// every point. Returns the revenue-maximizing price (lowest on ties) and revenue.
pub fn oracle_leader_grid(channels: &ChannelSet, scenario: &Scenario, grid: &[f64]) -> Result<(f64, f64)> {
    let table = ResponseTable::new(channels, scenario)?;
    let mut best = (0.0, f64::NEG_INFINITY);
    for &q in grid {
        let revenue = total_revenue(&table, &PriceVector::uniform(q, scenario.num_ris()))?;
        if revenue > best.1 {
            best = (q, revenue);
        }
    }
    Ok(best)
}

/// Evenly spaced prices over `[0, cap]`.
pub fn dense_grid(cap: f64, points: usize) -> Vec<f64> {
    if points < 2 || cap <= 0.0 {
        return vec![0.0];
    }
    (0..points).map(|i| cap * i as f64 / (points - 1) as f64).collect()
}

/// Seeded tiny follower instance: at most 2 antennas, 2 users, 3 RISs and 4
/// elements in total, with random power budget and prices.
pub fn tiny_instance(index: usize, seed: u64) -> (Scenario, ChannelSet, PriceVector) {
    let mut rng = substream(seed, Stream::TinyInstance { index });
    let m = rng.random_range(1..=MAX_ORACLE_ANTENNAS);
    let k = rng.random_range(1..=MAX_ORACLE_USERS);
    let elements = match rng.random_range(0..5) {
        0 => vec![4],
        1 => vec![2, 2],
        2 => vec![1, 3],
        3 => vec![1, 1, 2],
        _ => vec![2, 1, 1],
    };
    let mut scenario = Scenario::compact(m, k, elements).with_power_dbm(rng.random_range(0.0..20.0));
    scenario.rng_seed = rng.random();
    let prices = PriceVector::non_uniform(
        (0..scenario.num_ris())
            .map(|_| TINY_PRICE_SPAN * rng.random::<f64>())
            .collect(),
    );
    let (_, channels) = realize(&scenario);
    (scenario, channels, prices)
}

/// Upper end of the per-element prices drawn for tiny instances.
pub const TINY_PRICE_SPAN: f64 = 0.01;

/// One certified follower instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerFixture {
    pub index: usize,
    pub scenario: ScenarioConfig,
    pub channels: ChannelDump,
    pub prices: PriceVector,
    pub oracle: OracleSolution,
}

/// One certified uniform-price search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderFixture {
    pub index: usize,
    pub scenario: ScenarioConfig,
    pub channels: ChannelDump,
    pub grid_points: usize,
    pub price: f64,
    pub revenue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub schema_version: u32,
    pub budget: OracleBudget,
    pub follower: Vec<FollowerFixture>,
    pub leader: Vec<LeaderFixture>,
}

impl FixtureFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: FixtureFile = serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        if file.schema_version != FIXTURE_SCHEMA_VERSION {
            return Err(Error::validation(
                "schema_version",
                format!(
                    "fixture version {}, expected {FIXTURE_SCHEMA_VERSION}",
                    file.schema_version
                ),
            ));
        }
        Ok(file)
    }
}

/// Runs the oracles on `follower_instances` tiny instances and
/// `leader_instances` compact single-antenna-pair instances.
pub fn build_fixtures(
    budget: &OracleBudget,
    follower_instances: usize,
    leader_instances: usize,
) -> Result<FixtureFile> {
    budget.validate()?;
    let follower = (0..follower_instances)
        .map(|index| {
            let (scenario, channels, prices) = tiny_instance(index, budget.seed);
            let oracle = oracle_follower(&channels, &prices, &scenario, budget)?;
            Ok(FollowerFixture {
                index,
                scenario: scenario.to_config(),
                channels: channels.to_dump(),
                prices,
                oracle,
            })
        })
        .collect::<Result<_>>()?;
    let leader = (0..leader_instances)
        .map(|index| {
            let (scenario, channels) = leader_instance(index, budget.seed);
            let (price, revenue) =
                oracle_leader_grid(&channels, &scenario, &dense_grid(scenario.price_cap, budget.price_grid))?;
            Ok(LeaderFixture {
                index,
                scenario: scenario.to_config(),
                channels: channels.to_dump(),
                grid_points: budget.price_grid,
                price,
                revenue,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FixtureFile {
        schema_version: FIXTURE_SCHEMA_VERSION,
        budget: budget.clone(),
        follower,
        leader,
    })
}

/// Small instance for certifying the price search: 2 antennas, 2 users, 2 RISs of 8 elements.
pub fn leader_instance(index: usize, seed: u64) -> (Scenario, ChannelSet) {
    let mut rng = substream(
        seed,
        Stream::TinyInstance {
            index: index + (1 << 20),
        },
    );
    let mut scenario = Scenario::compact(2, 2, vec![8, 8]).with_power_dbm(rng.random_range(0.0..20.0));
    scenario.rng_seed = rng.random();
    let (_, channels) = realize(&scenario);
    (scenario, channels)
}

/// Main-solver utility at the oracle's instance, for comparisons.
pub fn main_follower_utility(
    channels: &ChannelSet,
    prices: &PriceVector,
    scenario: &Scenario,
) -> Result<(f64, Vec<bool>)> {
    let state = purchase_decision(channels, prices, scenario)?;
    Ok((state.utility(channels, prices, scenario), state.phase.purchased.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> OracleBudget {
        OracleBudget {
            ascent_steps: 500,
            restarts: 4,
            ..OracleBudget::default()
        }
    }

    #[test]
    fn single_user_without_ris_matches_closed_form() {
        let mut s = Scenario::compact(2, 1, vec![2]);
        s.rng_seed = 3;
        let (_, ch) = realize(&s);
        let rate = oracle_rate(&ch, &[false], &s, &quick()).unwrap();
        let expected = (s.power_budget.watts() * ch.h_direct[0].norm_squared() / s.noise_power.watts()).ln_1p();
        assert!((rate - expected).abs() <= 1e-6 * expected, "{rate} vs {expected}");
    }

    #[test]
    fn oversized_instances_are_refused() {
        let s = Scenario::compact(4, 2, vec![2]);
        let (_, ch) = realize(&s);
        let prices = PriceVector::non_uniform(vec![0.0]);
        assert!(matches!(
            oracle_follower(&ch, &prices, &s, &quick()),
            Err(Error::OracleSize(_))
        ));
        let s = Scenario::compact(2, 2, vec![4, 4]);
        let (_, ch) = realize(&s);
        let prices = PriceVector::non_uniform(vec![0.0; 2]);
        assert!(matches!(
            oracle_follower(&ch, &prices, &s, &quick()),
            Err(Error::OracleSize(_))
        ));
    }

    #[test]
    fn budget_limits_are_enforced() {
        let mut b = quick();
        b.subset_cap = 13;
        assert!(b.validate().is_err());
        b.subset_cap = 3;
        b.restarts = 0;
        assert!(b.validate().is_err());
    }

    #[test]
    fn oracle_is_deterministic() {
        let (s, ch, q) = tiny_instance(2, 0);
        let a = oracle_follower(&ch, &q, &s, &quick()).unwrap();
        let b = oracle_follower(&ch, &q, &s, &quick()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_instances_respect_the_limits() {
        for i in 0..50 {
            let (s, ch, q) = tiny_instance(i, 1);
            check_size(&s, &ch, &OracleBudget::default()).unwrap();
            assert_eq!(q.len(), s.num_ris());
        }
    }

    #[test]
    fn zero_cap_scan_is_free() {
        let (mut s, ch) = leader_instance(0, 0);
        s.price_cap = 0.0;
        let (q, r) = oracle_leader_grid(&ch, &s, &dense_grid(0.0, 512)).unwrap();
        assert_eq!((q, r), (0.0, 0.0));
    }

    #[test]
    fn scan_on_solver_grid_matches_solver_grid_search() {
        let (s, ch) = leader_instance(1, 0);
        let grid = crate::leader::price_grid(s.price_cap, s.price_grid_points);
        let (q, r) = oracle_leader_grid(&ch, &s, &grid).unwrap();
        let table = ResponseTable::new(&ch, &s).unwrap();
        let n = s.num_ris();
        let mut best = (0.0, f64::NEG_INFINITY);
        for &p in &grid {
            let v = total_revenue(&table, &PriceVector::uniform(p, n)).unwrap();
            if v > best.1 {
                best = (p, v);
            }
        }
        assert_eq!((q, r), best);
    }
}
