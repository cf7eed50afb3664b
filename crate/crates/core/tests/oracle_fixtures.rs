use std::path::PathBuf;

use ris_pricing::leader::{response_table, stackelberg_solve_with};
use ris_pricing::oracle::{main_follower_utility, oracle_follower, tiny_instance, FixtureFile};
use ris_pricing::{realize, PricingScheme};

fn fixtures() -> FixtureFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/oracle.json");
    FixtureFile::load(&path).unwrap()
}

#[test]
fn fixture_instances_regenerate_from_their_seed() {
    let file = fixtures();
    for f in &file.follower {
        let (scenario, channels, prices) = tiny_instance(f.index, file.budget.seed);
        assert_eq!(scenario.to_config(), f.scenario);
        assert_eq!(channels.to_dump(), f.channels);
        assert_eq!(prices, f.prices);
    }
}

#[test]
fn oracle_reproduces_a_stored_value() {
    let file = fixtures();
    let f = &file.follower[0];
    let scenario = f.scenario.clone().into_scenario().unwrap();
    let channels = f.channels.clone().into_channels().unwrap();
    let again = oracle_follower(&channels, &f.prices, &scenario, &file.budget).unwrap();
    assert_eq!(again, f.oracle);
}

#[test]
fn main_follower_sits_inside_the_oracle_band() {
    let file = fixtures();
    let mut same_set = 0;
    for f in &file.follower {
        let scenario = f.scenario.clone().into_scenario().unwrap();
        let channels = f.channels.clone().into_channels().unwrap();
        let (u, set) = main_follower_utility(&channels, &f.prices, &scenario).unwrap();
        let o = f.oracle.utility;
        assert!(u <= o + 1e-6, "instance {}: {u} above oracle {o}", f.index);
        assert!(u >= o - 0.05 * o.abs(), "instance {}: {u} below oracle {o}", f.index);
        same_set += (set == f.oracle.purchased) as usize;
    }
    assert!(
        same_set * 5 >= file.follower.len() * 4,
        "{same_set} matching purchase sets"
    );
}

#[test]
fn uniform_price_search_is_within_one_percent_of_the_dense_scan() {
    let file = fixtures();
    for f in &file.leader {
        let scenario = f.scenario.clone().into_scenario().unwrap();
        let channels = f.channels.clone().into_channels().unwrap();
        assert_eq!(channels.to_dump(), realize(&scenario).1.to_dump());
        let table = response_table(&channels, &scenario).unwrap();
        let report = stackelberg_solve_with(&table, PricingScheme::Uniform).unwrap();
        let revenue: f64 = report.ris_utilities.iter().sum();
        assert!(
            revenue >= 0.99 * f.revenue,
            "instance {}: {revenue} vs {}",
            f.index,
            f.revenue
        );
    }
}
