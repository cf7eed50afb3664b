//! Stackelberg pricing of reconfigurable intelligent surfaces (RIS).
//!
//! RIS holders (leaders) post per-element use prices; a multi-antenna base
//! station (follower) answers by choosing which surfaces to rent together with
//! its transmit beamformers and the rented surfaces' phase shifts. The
//! equilibrium is computed by backward induction: the follower's best
//! response is solved for every candidate price and the leaders optimize
//! their revenue against it.

pub mod channel;
pub mod error;
pub mod follower;
pub mod harness;
pub mod leader;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod scenario;

pub use channel::{generate, path_loss_db, realize, ChannelSet};
pub use error::{Error, Result};
pub use follower::{
    purchase_decision, solve_p1, surrogate_objective, update_alpha, update_beamformers, update_phases, FollowerState,
    ResponseTable, SearchMode,
};
pub use leader::{
    price_best_response, random_pricing, stackelberg_solve, verify_se, EquilibriumReport, Scheme, SeVerification,
};
pub use metrics::{
    bs_utility, effective_channel, ris_utility, sinr, Beamformers, PhaseConfig, PriceVector, PricingScheme,
};
pub use scenario::{load_scenario, place_diamond, sample_users, Geometry, LogBase, Point, Scenario};
