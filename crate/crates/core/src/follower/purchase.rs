use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::{best_rate_solution, shift_trace, FollowerState};
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::metrics::{purchase_cost, PriceVector};
use crate::scenario::Scenario;

/// Largest RIS count the exhaustive search will accept.
pub const MAX_EXHAUSTIVE_RIS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Every purchase set is evaluated.
    Exhaustive,
    /// Backward elimination starting from buying everything.
    Greedy,
}

/// Optimized sum rate for one purchase set.
#[derive(Debug, Clone)]
pub struct RateSolution {
    pub state: FollowerState,
    pub sum_rate: f64,
}

/// Per-purchase-set follower solutions for one channel realization.
///
/// The sum rate of a purchase set is independent of prices, so each set is
/// optimized at most once and the base station's best response to any price
/// vector is an argmax over cached rates minus the purchase bill.
/// Each set is also warm-started from the solutions of smaller sets (see
/// `parent_sets`), chosen so that cached values never depend on query order.
pub struct ResponseTable<'a> {
    channels: &'a ChannelSet,
    scenario: &'a Scenario,
    mode: SearchMode,
    solutions: Mutex<BTreeMap<Vec<bool>, Arc<RateSolution>>>,
}

impl<'a> ResponseTable<'a> {
    pub fn new(channels: &'a ChannelSet, scenario: &'a Scenario) -> Result<Self> {
        channels.check(scenario)?;
        let mode = if scenario.num_ris() <= scenario.exhaustive_cap.min(MAX_EXHAUSTIVE_RIS) {
            SearchMode::Exhaustive
        } else {
            SearchMode::Greedy
        };
        Ok(Self::with_mode(channels, scenario, mode))
    }

    pub fn with_mode(channels: &'a ChannelSet, scenario: &'a Scenario, mode: SearchMode) -> Self {
        ResponseTable {
            channels,
            scenario,
            mode,
            solutions: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn mode(&self) -> SearchMode {
        self.mode
    }

    pub fn channels(&self) -> &ChannelSet {
        self.channels
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn solution(&self, purchased: &[bool]) -> Result<Arc<RateSolution>> {
        if purchased.len() != self.scenario.num_ris() {
            return Err(Error::Dimension(format!(
                "purchase set of length {} for {} RISs",
                purchased.len(),
                self.scenario.num_ris()
            )));
        }
        if let Some(hit) = self.solutions.lock().expect("table lock").get(purchased) {
            return Ok(Arc::clone(hit));
        }
        let parents: Vec<Arc<RateSolution>> = self
            .parent_sets(purchased)
            .iter()
            .map(|p| self.solution(p))
            .collect::<Result<_>>()?;
        let warm: Vec<&FollowerState> = parents.iter().map(|p| &p.state).collect();
        let state = best_rate_solution(self.channels, purchased, self.scenario, &warm)?;
        let sum_rate = state.sum_rate(self.channels, self.scenario);
        let solved = Arc::new(RateSolution { state, sum_rate });
        let mut map = self.solutions.lock().expect("table lock");
        Ok(Arc::clone(map.entry(purchased.to_vec()).or_insert(solved)))
    }

    /// Sets used as warm starts: every one-smaller subset in exhaustive mode,
    /// only the set without the highest-indexed RIS in greedy mode.
    fn parent_sets(&self, purchased: &[bool]) -> Vec<Vec<bool>> {
        let mut bought = (0..purchased.len()).filter(|&s| purchased[s]);
        let drop = |s: usize| {
            let mut p = purchased.to_vec();
            p[s] = false;
            p
        };
        match self.mode {
            SearchMode::Exhaustive => bought.map(drop).collect(),
            SearchMode::Greedy => bought.next_back().map(drop).into_iter().collect(),
        }
    }

    pub fn sum_rate(&self, purchased: &[bool]) -> Result<f64> {
        Ok(self.solution(purchased)?.sum_rate)
    }

    pub fn utility(&self, purchased: &[bool], prices: &PriceVector) -> Result<f64> {
        Ok(self.sum_rate(purchased)? - purchase_cost(purchased, prices, self.scenario))
    }

    /// Solves every purchase set, one subset size at a time, in parallel.
    pub fn prefill(&self) -> Result<()> {
        let sets = all_sets(self.scenario.num_ris());
        for size in 0..=self.scenario.num_ris() {
            sets.par_iter()
                .filter(|p| p.iter().filter(|&&b| b).count() == size)
                .map(|p| self.solution(p).map(|_| ()))
                .collect::<Result<Vec<()>>>()?;
        }
        Ok(())
    }

    /// Purchase set maximizing the base-station utility at `prices`.
    pub fn best_purchase(&self, prices: &PriceVector) -> Result<Vec<bool>> {
        match self.mode {
            SearchMode::Exhaustive => self.best_exhaustive(prices),
            SearchMode::Greedy => self.best_greedy(prices),
        }
    }

    fn best_exhaustive(&self, prices: &PriceVector) -> Result<Vec<bool>> {
        let mut best: Option<(f64, Vec<bool>)> = None;
        for set in all_sets(self.scenario.num_ris()) {
            let u = self.utility(&set, prices)?;
            if best.as_ref().is_none_or(|(bu, bs)| prefer(u, &set, *bu, bs)) {
                best = Some((u, set));
            }
        }
        Ok(best.expect("at least the empty set").1)
    }

    fn best_greedy(&self, prices: &PriceVector) -> Result<Vec<bool>> {
        let mut current = vec![true; self.scenario.num_ris()];
        let mut current_u = self.utility(&current, prices)?;
        loop {
            let mut best: Option<(f64, Vec<bool>)> = None;
            for s in (0..current.len()).filter(|&s| current[s]) {
                let mut candidate = current.clone();
                candidate[s] = false;
                let u = self.utility(&candidate, prices)?;
                if best.as_ref().is_none_or(|(bu, bs)| prefer(u, &candidate, *bu, bs)) {
                    best = Some((u, candidate));
                }
            }
            match best {
                Some((u, set)) if u > current_u => {
                    current = set;
                    current_u = u;
                }
                _ => return Ok(current),
            }
        }
    }

    /// The base station's full best response at `prices`; its trace includes the purchase bill.
    pub fn best_response(&self, prices: &PriceVector) -> Result<FollowerState> {
        let set = self.best_purchase(prices)?;
        let solved = self.solution(&set)?;
        let mut state = solved.state.clone();
        shift_trace(&mut state, -purchase_cost(&set, prices, self.scenario));
        Ok(state)
    }
}

/// Higher utility wins; ties go to more purchases, then to the set that buys
/// the lower-indexed RIS.
fn prefer(u: f64, set: &[bool], best_u: f64, best_set: &[bool]) -> bool {
    match u.partial_cmp(&best_u) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) | None => false,
        Some(Ordering::Equal) => {
            let count = |s: &[bool]| s.iter().filter(|&&b| b).count();
            match count(set).cmp(&count(best_set)) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => set > best_set,
            }
        }
    }
}

pub(crate) fn all_sets(num_ris: usize) -> Vec<Vec<bool>> {
    (0u64..1 << num_ris)
        .map(|mask| (0..num_ris).map(|s| mask >> s & 1 == 1).collect())
        .collect()
}

/// Chooses which RISs to buy at `prices` and returns the corresponding
/// optimized base-station strategy. Exhaustive over all purchase sets when
/// there are at most `exhaustive_cap` RISs, greedy elimination otherwise.
pub fn purchase_decision(channels: &ChannelSet, prices: &PriceVector, scenario: &Scenario) -> Result<FollowerState> {
    let table = ResponseTable::new(channels, scenario)?;
    if table.mode() == SearchMode::Exhaustive {
        table.prefill()?;
    }
    table.best_response(prices)
}
