//! Problem instance: sizes, physical constants, node placement and solver knobs.
//!
//! Scenarios are read from a flat TOML document. Powers are written in dBm and
//! positions in meters; [`Scenario`] keeps the configured dBm figure alongside
//! the linear value so that serializing and reloading is exact.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

pub const SCHEMA_VERSION: u32 = 1;

/// Horizontal diagonal of the RIS diamond, meters.
pub const DIAMOND_WIDTH: f64 = 25.0;
/// Vertical diagonal of the RIS diamond, meters.
pub const DIAMOND_HEIGHT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn offset(&self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// A power figure configured in dBm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLevel {
    dbm: f64,
    watts: f64,
}

impl PowerLevel {
    pub fn from_dbm(dbm: f64) -> Self {
        PowerLevel {
            dbm,
            watts: dbm_to_watts(dbm),
        }
    }

    pub fn from_watts(watts: f64) -> Self {
        PowerLevel {
            dbm: watts_to_dbm(watts),
            watts,
        }
    }

    pub fn dbm(&self) -> f64 {
        self.dbm
    }

    pub fn watts(&self) -> f64 {
        self.watts
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Base2,
}

impl LogBase {
    /// Multiplier turning a natural logarithm into this base.
    pub fn scale(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Base2 => std::f64::consts::LOG2_E,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub num_antennas: usize,
    pub num_users: usize,
    /// One entry per RIS; its length is the number of RISs.
    pub elements_per_ris: Vec<usize>,
    pub power_budget: PowerLevel,
    pub noise_power: PowerLevel,
    pub cost_weight: f64,
    /// Attenuation at the 1 m reference distance, dB.
    pub pathloss_ref_db: f64,
    pub exponent_direct: f64,
    pub exponent_ris: f64,
    pub bs_position: Point,
    pub ris_positions: Vec<Point>,
    pub user_cluster_center: Point,
    pub user_cluster_radius: f64,
    pub rng_seed: u64,
    /// Relative change of the follower objective that ends the inner loop.
    pub inner_tolerance: f64,
    /// Price change, as a fraction of `price_cap`, that ends the outer loop.
    pub outer_tolerance: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    pub price_cap: f64,
    pub log_base: LogBase,
    pub price_grid_points: usize,
    /// Largest RIS count for which purchase sets are enumerated exhaustively.
    pub exhaustive_cap: usize,
    /// Extra randomly initialized follower runs per purchase set.
    pub follower_restarts: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        ScenarioConfig::default()
            .into_scenario()
            .expect("default config is valid")
    }
}

impl Scenario {
    pub fn num_ris(&self) -> usize {
        self.elements_per_ris.len()
    }

    pub fn total_elements(&self) -> usize {
        self.elements_per_ris.iter().sum()
    }

    /// Index range of RIS `s` inside the stacked element vector.
    pub fn element_range(&self, s: usize) -> std::ops::Range<usize> {
        let start: usize = self.elements_per_ris[..s].iter().sum();
        start..start + self.elements_per_ris[s]
    }

    /// Owning RIS of every element, in stacked order.
    pub fn element_owner(&self) -> Vec<usize> {
        self.elements_per_ris
            .iter()
            .enumerate()
            .flat_map(|(s, &n)| std::iter::repeat_n(s, n))
            .collect()
    }

    pub fn with_power_dbm(mut self, dbm: f64) -> Self {
        self.power_budget = PowerLevel::from_dbm(dbm);
        self
    }

    /// Rebuilds the five-RIS diamond around a new intersection point.
    pub fn with_diamond_center(mut self, center: Point) -> Result<Self> {
        if self.num_ris() != 5 {
            return Err(Error::validation(
                "diamond_center",
                format!("diamond layout needs exactly 5 RISs, scenario has {}", self.num_ris()),
            ));
        }
        self.ris_positions = place_diamond(center).to_vec();
        Ok(self)
    }

    /// Default scenario resized to `num_antennas` x `num_users` with the given
    /// RISs lined up just beside the user cluster.
    pub fn compact(num_antennas: usize, num_users: usize, elements_per_ris: Vec<usize>) -> Self {
        let center = Scenario::default().user_cluster_center;
        let ris_positions = (0..elements_per_ris.len())
            .map(|s| center.offset(-10.0 * s as f64, 15.0))
            .collect();
        Scenario {
            num_antennas,
            num_users,
            elements_per_ris,
            ris_positions,
            ..Scenario::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, count) in [
            ("num_antennas", self.num_antennas),
            ("num_users", self.num_users),
            ("num_ris", self.num_ris()),
        ] {
            if count == 0 {
                return Err(Error::validation(field, "must be at least 1"));
            }
        }
        if let Some(s) = self.elements_per_ris.iter().position(|&n| n == 0) {
            return Err(Error::validation(
                "elements_per_ris",
                format!("RIS {} has no elements", s + 1),
            ));
        }
        if self.ris_positions.len() != self.num_ris() {
            return Err(Error::validation(
                "ris_positions",
                format!(
                    "{} positions given for {} RISs",
                    self.ris_positions.len(),
                    self.num_ris()
                ),
            ));
        }
        let positive = [
            ("power_budget_dbm", self.power_budget.watts()),
            ("noise_power_dbm", self.noise_power.watts()),
            ("price_cap", self.price_cap),
            ("inner_tolerance", self.inner_tolerance),
            ("outer_tolerance", self.outer_tolerance),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::validation(
                    field,
                    format!("must be positive and finite, got {value}"),
                ));
            }
        }
        let non_negative = [
            ("cost_weight", self.cost_weight),
            ("user_cluster_radius", self.user_cluster_radius),
            ("exponent_direct", self.exponent_direct),
            ("exponent_ris", self.exponent_ris),
        ];
        for (field, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::validation(
                    field,
                    format!("must be non-negative and finite, got {value}"),
                ));
            }
        }
        if !self.pathloss_ref_db.is_finite() {
            return Err(Error::validation("pathloss_ref_db", "must be finite"));
        }
        for (field, count) in [
            ("max_inner_iters", self.max_inner_iters),
            ("max_outer_iters", self.max_outer_iters),
            ("price_grid_points", self.price_grid_points),
        ] {
            if count == 0 {
                return Err(Error::validation(field, "must be at least 1"));
            }
        }
        // RIS-to-BS coincidence is tolerated: path loss clamps at the 1 m reference.
        for (i, a) in self.ris_positions.iter().enumerate() {
            for (j, b) in self.ris_positions.iter().enumerate().skip(i + 1) {
                if a.distance(b) <= 0.0 {
                    return Err(Error::validation(
                        "ris_positions",
                        format!("RIS {} and RIS {} coincide", i + 1, j + 1),
                    ));
                }
            }
        }
        if self.bs_position.distance(&self.user_cluster_center) <= self.user_cluster_radius {
            return Err(Error::validation(
                "user_cluster_center",
                "base station lies inside the user cluster",
            ));
        }
        Ok(())
    }

    pub fn to_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            num_antennas: self.num_antennas,
            num_users: self.num_users,
            num_ris: Some(self.num_ris()),
            elements_per_ris: ElementCounts::PerRis(self.elements_per_ris.clone()),
            power_budget_dbm: self.power_budget.dbm(),
            noise_power_dbm: self.noise_power.dbm(),
            cost_weight: self.cost_weight,
            pathloss_ref_db: self.pathloss_ref_db,
            exponent_direct: self.exponent_direct,
            exponent_ris: self.exponent_ris,
            bs_position: self.bs_position,
            diamond_center: None,
            ris_positions: Some(self.ris_positions.clone()),
            user_cluster_center: self.user_cluster_center,
            user_cluster_radius: self.user_cluster_radius,
            rng_seed: self.rng_seed,
            inner_tolerance: self.inner_tolerance,
            outer_tolerance: self.outer_tolerance,
            max_inner_iters: self.max_inner_iters,
            max_outer_iters: self.max_outer_iters,
            price_cap: self.price_cap,
            log_base: self.log_base,
            price_grid_points: self.price_grid_points,
            exhaustive_cap: self.exhaustive_cap,
            follower_restarts: self.follower_restarts,
        }
    }

    /// Serializes to the same TOML schema [`load_scenario`] reads.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_config()).map_err(|e| Error::Serde(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElementCounts {
    Uniform(usize),
    PerRis(Vec<usize>),
}

/// On-disk scenario schema. Every field is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub num_antennas: usize,
    pub num_users: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_ris: Option<usize>,
    pub elements_per_ris: ElementCounts,
    pub power_budget_dbm: f64,
    pub noise_power_dbm: f64,
    pub cost_weight: f64,
    pub pathloss_ref_db: f64,
    pub exponent_direct: f64,
    pub exponent_ris: f64,
    pub bs_position: Point,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diamond_center: Option<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ris_positions: Option<Vec<Point>>,
    pub user_cluster_center: Point,
    pub user_cluster_radius: f64,
    pub rng_seed: u64,
    pub inner_tolerance: f64,
    pub outer_tolerance: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    pub price_cap: f64,
    pub log_base: LogBase,
    pub price_grid_points: usize,
    pub exhaustive_cap: usize,
    pub follower_restarts: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            num_antennas: 4,
            num_users: 4,
            num_ris: None,
            elements_per_ris: ElementCounts::Uniform(20),
            power_budget_dbm: 10.0,
            noise_power_dbm: -80.0,
            cost_weight: 1.0,
            pathloss_ref_db: 30.0,
            exponent_direct: 3.5,
            exponent_ris: 2.0,
            bs_position: Point::new(0.0, 0.0),
            diamond_center: None,
            ris_positions: None,
            user_cluster_center: Point::new(200.0, 0.0),
            user_cluster_radius: 10.0,
            rng_seed: 0,
            inner_tolerance: 1e-4,
            outer_tolerance: 1e-3,
            max_inner_iters: 200,
            max_outer_iters: 50,
            price_cap: 0.1,
            log_base: LogBase::Natural,
            price_grid_points: 64,
            exhaustive_cap: 5,
            follower_restarts: 0,
        }
    }
}

/// Intersection of the diamond when neither positions nor a center are given.
pub const DEFAULT_DIAMOND_CENTER: Point = Point::new(50.0, 0.0);

impl ScenarioConfig {
    pub fn into_scenario(self) -> Result<Scenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let num_ris = match (&self.elements_per_ris, self.num_ris, &self.ris_positions) {
            (ElementCounts::PerRis(v), _, _) => v.len(),
            (_, Some(n), _) => n,
            (_, None, Some(p)) => p.len(),
            (_, None, None) => 5,
        };
        let elements_per_ris = match self.elements_per_ris {
            ElementCounts::Uniform(n) => vec![n; num_ris],
            ElementCounts::PerRis(v) => v,
        };
        if let Some(n) = self.num_ris {
            if n != elements_per_ris.len() {
                return Err(Error::validation(
                    "elements_per_ris",
                    format!("{} entries for num_ris = {n}", elements_per_ris.len()),
                ));
            }
        }
        let ris_positions = match (self.ris_positions, self.diamond_center) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "diamond_center",
                    "give either ris_positions or diamond_center, not both",
                ))
            }
            (Some(p), None) => p,
            (None, center) => {
                if num_ris != 5 {
                    return Err(Error::validation(
                        "ris_positions",
                        format!("required when num_ris = {num_ris} (the diamond layout holds 5)"),
                    ));
                }
                place_diamond(center.unwrap_or(DEFAULT_DIAMOND_CENTER)).to_vec()
            }
        };
        if !self.power_budget_dbm.is_finite() {
            return Err(Error::validation("power_budget_dbm", "must be finite"));
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(Error::validation("noise_power_dbm", "must be finite"));
        }
        let scenario = Scenario {
            num_antennas: self.num_antennas,
            num_users: self.num_users,
            elements_per_ris,
            power_budget: PowerLevel::from_dbm(self.power_budget_dbm),
            noise_power: PowerLevel::from_dbm(self.noise_power_dbm),
            cost_weight: self.cost_weight,
            pathloss_ref_db: self.pathloss_ref_db,
            exponent_direct: self.exponent_direct,
            exponent_ris: self.exponent_ris,
            bs_position: self.bs_position,
            ris_positions,
            user_cluster_center: self.user_cluster_center,
            user_cluster_radius: self.user_cluster_radius,
            rng_seed: self.rng_seed,
            inner_tolerance: self.inner_tolerance,
            outer_tolerance: self.outer_tolerance,
            max_inner_iters: self.max_inner_iters,
            max_outer_iters: self.max_outer_iters,
            price_cap: self.price_cap,
            log_base: self.log_base,
            price_grid_points: self.price_grid_points,
            exhaustive_cap: self.exhaustive_cap,
            follower_restarts: self.follower_restarts,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Parses TOML config text into a table, reporting the offending field on type errors.
pub fn parse_config_table(text: &str) -> Result<toml::Table> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::parse("<document>", e.message().to_string()))?;
    for (key, value) in &table {
        let mut single = toml::Table::new();
        single.insert(key.clone(), value.clone());
        if let Err(e) = toml::Value::Table(single).try_into::<ScenarioConfig>() {
            return Err(Error::parse(key.clone(), e.message().to_string()));
        }
    }
    Ok(table)
}

/// Applies a `key=value` override; the value is read as a TOML literal,
/// falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::parse(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut single = toml::Table::new();
    single.insert(key.to_string(), value.clone());
    if let Err(e) = toml::Value::Table(single).try_into::<ScenarioConfig>() {
        return Err(Error::parse(key, e.message().to_string()));
    }
    table.insert(key.to_string(), value);
    Ok(())
}

pub fn scenario_from_table(table: toml::Table) -> Result<Scenario> {
    let config: ScenarioConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::parse("<document>", e.message().to_string()))?;
    config.into_scenario()
}

/// Parses and validates a scenario, converting dBm figures to watts and
/// filling omitted fields with defaults.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    scenario_from_table(parse_config_table(text)?)
}

/// RIS positions for the diamond layout, in RIS index order:
/// top, left, bottom, right (counterclockwise from the top), then the intersection.
pub fn place_diamond(center: Point) -> [Point; 5] {
    let half_w = DIAMOND_WIDTH / 2.0;
    let half_h = DIAMOND_HEIGHT / 2.0;
    [
        center.offset(0.0, half_h),
        center.offset(-half_w, 0.0),
        center.offset(0.0, -half_h),
        center.offset(half_w, 0.0),
        center,
    ]
}

/// Draws `num_users` points uniformly (by area) over the user disk.
pub fn sample_users<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Vec<Point> {
    let center = scenario.user_cluster_center;
    let radius = scenario.user_cluster_radius;
    (0..scenario.num_users)
        .map(|_| {
            let u: f64 = rng.random();
            let angle = 2.0 * PI * rng.random::<f64>();
            let r = radius * u.sqrt();
            center.offset(r * angle.cos(), r * angle.sin())
        })
        .collect()
}

/// Resolved node positions for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: Point,
    pub ris: Vec<Point>,
    pub users: Vec<Point>,
}

impl Geometry {
    /// Places users with the scenario's seed; RIS positions come from the scenario.
    pub fn resolve(scenario: &Scenario) -> Geometry {
        let mut rng = substream(scenario.rng_seed, Stream::UserPlacement);
        Geometry {
            bs: scenario.bs_position,
            ris: scenario.ris_positions.clone(),
            users: sample_users(scenario, &mut rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ten_dbm_is_ten_milliwatts() {
        let s = load_scenario("power_budget_dbm = 10").unwrap();
        assert_relative_eq!(s.power_budget.watts(), 0.01, max_relative = 1e-15);
        assert_eq!(s.power_budget.dbm(), 10.0);
    }

    #[test]
    fn defaults_fill_omitted_fields() {
        let s = load_scenario("").unwrap();
        assert_eq!(s.cost_weight, 1.0);
        assert_eq!(s.elements_per_ris, vec![20; 5]);
        assert_eq!(s.num_antennas, 4);
        assert_eq!(s.num_users, 4);
        assert_relative_eq!(s.noise_power.watts(), 1e-11, max_relative = 1e-12);
        assert_eq!(s.ris_positions[4], Point::new(50.0, 0.0));
        assert_eq!(s, Scenario::default());
    }

    #[test]
    fn zero_users_is_a_validation_error() {
        match load_scenario("num_users = 0") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "num_users"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn type_errors_name_the_field() {
        match load_scenario("num_antennas = \"four\"") {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "num_antennas"),
            other => panic!("expected parse error, got {other:?}"),
        }
        match load_scenario("no_such_knob = 3") {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "no_such_knob"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_ris_lists_are_rejected() {
        let err = load_scenario("num_ris = 3\nelements_per_ris = [4, 4]").unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
        let err = load_scenario("elements_per_ris = [4, 4]").unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "ris_positions"));
    }

    #[test]
    fn overrides_parse_as_toml_literals() {
        let mut table = parse_config_table("num_users = 2").unwrap();
        apply_override(&mut table, "power_budget_dbm=20").unwrap();
        apply_override(&mut table, "diamond_center=[100, 0]").unwrap();
        apply_override(&mut table, "log_base=base2").unwrap();
        let s = scenario_from_table(table).unwrap();
        assert_eq!(s.power_budget.dbm(), 20.0);
        assert_eq!(s.ris_positions[4], Point::new(100.0, 0.0));
        assert_eq!(s.log_base, LogBase::Base2);
        let mut table = toml::Table::new();
        assert!(matches!(
            apply_override(&mut table, "num_users=many"),
            Err(Error::Parse { ref field, .. }) if field == "num_users"
        ));
    }

    #[test]
    fn diamond_has_intersection_and_counterclockwise_order() {
        let d = place_diamond(Point::new(50.0, 0.0));
        assert_eq!(d[4], Point::new(50.0, 0.0));
        assert_eq!(d[0], Point::new(50.0, 25.0));
        assert_eq!(d[1], Point::new(37.5, 0.0));
        let d = place_diamond(Point::new(12.5, 0.0));
        assert_eq!(d[3], Point::new(25.0, 0.0));
        assert_eq!(d[1], Point::new(0.0, 0.0));
    }

    #[test]
    fn zero_radius_puts_everyone_at_the_center() {
        let mut s = Scenario::default();
        s.user_cluster_radius = 0.0;
        let users = Geometry::resolve(&s).users;
        assert!(users.iter().all(|u| *u == s.user_cluster_center));
    }

    #[test]
    fn area_uniform_mean_radius() {
        let mut s = Scenario::default();
        s.num_users = 100_000;
        let users = Geometry::resolve(&s).users;
        let mean = users.iter().map(|u| u.distance(&s.user_cluster_center)).sum::<f64>() / users.len() as f64;
        // E[r] = 2R/3 for a disk of radius R
        assert!((mean - 20.0 / 3.0).abs() < 0.05, "mean radius {mean}");
    }

    #[test]
    fn with_diamond_center_requires_five_ris() {
        let mut s = Scenario::default();
        s.elements_per_ris = vec![8, 8];
        s.ris_positions.truncate(2);
        assert!(s.with_diamond_center(Point::new(10.0, 0.0)).is_err());
    }
}
