//! Channel realizations: log-distance path loss with i.i.d. Rayleigh fading.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::scenario::{Geometry, Scenario};

pub const CHANNEL_SCHEMA_VERSION: u32 = 1;

/// Reference distance of the path-loss model, meters.
pub const REFERENCE_DISTANCE: f64 = 1.0;

/// Path loss in dB. Distances under the reference distance are clamped to it.
pub fn path_loss_db(distance: f64, exponent: f64, ref_db: f64) -> f64 {
    let d = distance.max(REFERENCE_DISTANCE);
    ref_db + 10.0 * exponent * d.log10()
}

/// Linear power gain for a link of the given length.
pub fn path_gain(distance: f64, exponent: f64, ref_db: f64) -> f64 {
    10f64.powf(-path_loss_db(distance, exponent, ref_db) / 10.0)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One realization of every channel in the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS -> user `k`, length M.
    pub h_direct: Vec<DVector<Complex64>>,
    /// BS -> all RIS elements, L x M, row blocks ordered by RIS index.
    pub bs_ris: DMatrix<Complex64>,
    /// All RIS elements -> user `k`, length L.
    pub ris_user: Vec<DVector<Complex64>>,
}

impl ChannelSet {
    pub fn num_antennas(&self) -> usize {
        self.bs_ris.ncols()
    }

    pub fn num_users(&self) -> usize {
        self.h_direct.len()
    }

    pub fn num_elements(&self) -> usize {
        self.bs_ris.nrows()
    }

    /// Checks the dimensions against `scenario` and that every entry is finite.
    pub fn check(&self, scenario: &Scenario) -> Result<()> {
        let m = scenario.num_antennas;
        let l = scenario.total_elements();
        if self.h_direct.len() != scenario.num_users || self.ris_user.len() != scenario.num_users {
            return Err(Error::Dimension(format!(
                "channels for {} users, scenario has {}",
                self.h_direct.len(),
                scenario.num_users
            )));
        }
        if self.bs_ris.shape() != (l, m) {
            return Err(Error::Dimension(format!(
                "BS-RIS matrix is {:?}, expected ({l}, {m})",
                self.bs_ris.shape()
            )));
        }
        if self.h_direct.iter().any(|h| h.len() != m) || self.ris_user.iter().any(|g| g.len() != l) {
            return Err(Error::Dimension("per-user channel length mismatch".into()));
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        let all_finite = self.bs_ris.iter().all(finite)
            && self.h_direct.iter().all(|h| h.iter().all(finite))
            && self.ris_user.iter().all(|g| g.iter().all(finite));
        if !all_finite {
            return Err(Error::Dimension("non-finite channel entry".into()));
        }
        Ok(())
    }

    pub fn to_dump(&self) -> ChannelDump {
        ChannelDump {
            schema_version: CHANNEL_SCHEMA_VERSION,
            num_antennas: self.num_antennas(),
            num_elements: self.num_elements(),
            h_direct: self.h_direct.iter().map(|h| h.iter().copied().collect()).collect(),
            bs_ris: self.bs_ris.row_iter().map(|r| r.iter().copied().collect()).collect(),
            ris_user: self.ris_user.iter().map(|g| g.iter().copied().collect()).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_dump()).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ChannelSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dump: ChannelDump = serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        dump.into_channels()
    }
}

/// Text dump of a [`ChannelSet`]. Complex numbers are `[re, im]` pairs and the
/// BS-RIS matrix is stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDump {
    pub schema_version: u32,
    pub num_antennas: usize,
    pub num_elements: usize,
    pub h_direct: Vec<Vec<Complex64>>,
    pub bs_ris: Vec<Vec<Complex64>>,
    pub ris_user: Vec<Vec<Complex64>>,
}

impl ChannelDump {
    pub fn into_channels(self) -> Result<ChannelSet> {
        if self.schema_version != CHANNEL_SCHEMA_VERSION {
            return Err(Error::validation(
                "schema_version",
                format!("unsupported channel dump version {}", self.schema_version),
            ));
        }
        let (m, l) = (self.num_antennas, self.num_elements);
        if self.bs_ris.len() != l || self.bs_ris.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("BS-RIS rows do not match header".into()));
        }
        let bs_ris = DMatrix::from_fn(l, m, |i, j| self.bs_ris[i][j]);
        Ok(ChannelSet {
            h_direct: self.h_direct.into_iter().map(DVector::from_vec).collect(),
            bs_ris,
            ris_user: self.ris_user.into_iter().map(DVector::from_vec).collect(),
        })
    }
}

/// Draws one realization. Each link's fading comes from its own keyed stream,
/// so moving a node only rescales that node's links.
pub fn generate(scenario: &Scenario, geometry: &Geometry) -> ChannelSet {
    let m = scenario.num_antennas;
    let seed = scenario.rng_seed;
    let ref_db = scenario.pathloss_ref_db;

    let h_direct = geometry
        .users
        .iter()
        .enumerate()
        .map(|(k, user)| {
            let amp = path_gain(geometry.bs.distance(user), scenario.exponent_direct, ref_db).sqrt();
            let mut rng = substream(seed, Stream::DirectLink { user: k });
            DVector::from_fn(m, |_, _| complex_gaussian(&mut rng) * amp)
        })
        .collect();

    let l = scenario.total_elements();
    let mut bs_ris = DMatrix::zeros(l, m);
    for (s, ris) in geometry.ris.iter().enumerate() {
        let amp = path_gain(geometry.bs.distance(ris), scenario.exponent_ris, ref_db).sqrt();
        let mut rng = substream(seed, Stream::BsRisLink { ris: s });
        for row in scenario.element_range(s) {
            for col in 0..m {
                bs_ris[(row, col)] = complex_gaussian(&mut rng) * amp;
            }
        }
    }

    let ris_user = geometry
        .users
        .iter()
        .enumerate()
        .map(|(k, user)| {
            let mut g = DVector::zeros(l);
            for (s, ris) in geometry.ris.iter().enumerate() {
                let amp = path_gain(ris.distance(user), scenario.exponent_ris, ref_db).sqrt();
                let mut rng = substream(seed, Stream::RisUserLink { ris: s, user: k });
                for idx in scenario.element_range(s) {
                    g[idx] = complex_gaussian(&mut rng) * amp;
                }
            }
            g
        })
        .collect();

    ChannelSet {
        h_direct,
        bs_ris,
        ris_user,
    }
}

/// Convenience: resolve the geometry and draw the channels in one go.
pub fn realize(scenario: &Scenario) -> (Geometry, ChannelSet) {
    let geometry = Geometry::resolve(scenario);
    let channels = generate(scenario, &geometry);
    (geometry, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Point;
    use approx::assert_relative_eq;

    #[test]
    fn path_loss_values() {
        assert_relative_eq!(path_loss_db(1.0, 3.5, 30.0), 30.0);
        assert_relative_eq!(path_loss_db(10.0, 2.0, 30.0), 50.0);
        assert_relative_eq!(path_loss_db(100.0, 3.5, 30.0), 100.0, epsilon = 1e-12);
        // clamped below the reference distance
        assert_relative_eq!(path_loss_db(0.0, 3.5, 30.0), 30.0);
        assert_relative_eq!(path_loss_db(0.3, 2.0, 30.0), 30.0);
    }

    #[test]
    fn generation_is_deterministic_and_well_shaped() {
        let s = Scenario::default();
        let (_, a) = realize(&s);
        let (_, b) = realize(&s);
        assert_eq!(a, b);
        a.check(&s).unwrap();
        assert_eq!(a.bs_ris.shape(), (100, 4));
    }

    #[test]
    fn moving_users_leaves_bs_ris_fading_unchanged() {
        let s = Scenario::default();
        let mut g = Geometry::resolve(&s);
        let a = generate(&s, &g);
        g.users[0] = Point::new(150.0, 3.0);
        let b = generate(&s, &g);
        assert_eq!(a.bs_ris, b.bs_ris);
        assert_eq!(a.h_direct[1], b.h_direct[1]);
        assert_ne!(a.h_direct[0], b.h_direct[0]);
    }

    fn second_moment(distance: f64, exponent: f64, realizations: u64) -> f64 {
        let mut s = Scenario::default();
        s.num_users = 1;
        s.exponent_direct = exponent;
        let geometry = Geometry {
            bs: Point::new(0.0, 0.0),
            ris: s.ris_positions.clone(),
            users: vec![Point::new(distance, 0.0)],
        };
        let mut acc = 0.0;
        for seed in 0..realizations {
            s.rng_seed = seed;
            let c = generate(&s, &geometry);
            acc += c.h_direct[0][0].norm_sqr();
        }
        acc / realizations as f64
    }

    #[test]
    fn direct_link_second_moment_matches_path_gain() {
        for (d, exp) in [(150.0, 3.5), (40.0, 2.0)] {
            let mean = second_moment(d, exp, 10_000);
            let gain = path_gain(d, exp, 30.0);
            assert!((mean / gain - 1.0).abs() < 0.03, "d={d}: {mean} vs {gain}");
        }
        let at_reference = second_moment(1.0, 3.5, 10_000);
        assert!((at_reference / 1e-3 - 1.0).abs() < 0.03);
    }

    #[test]
    fn ris_link_second_moment_matches_path_gain() {
        let s = Scenario::default();
        let geometry = Geometry::resolve(&s);
        let d = geometry.bs.distance(&geometry.ris[0]);
        let (_, c) = realize(&s);
        let rows = s.element_range(0);
        let n = (rows.len() * s.num_antennas) as f64;
        let mut acc = 0.0;
        let mut total = 0.0;
        for seed in 0..500 {
            let mut s = s.clone();
            s.rng_seed = seed;
            let c = generate(&s, &geometry);
            acc += c
                .bs_ris
                .rows(rows.start, rows.len())
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>();
            total += n;
        }
        let gain = path_gain(d, 2.0, 30.0);
        assert!((acc / total / gain - 1.0).abs() < 0.03);
        assert!(c.bs_ris.iter().all(|z| z.re.is_finite()));
    }

    #[test]
    fn dump_round_trips() {
        let s = Scenario::default();
        let (_, c) = realize(&s);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("channels.json");
        c.save(&path).unwrap();
        assert_eq!(ChannelSet::load(&path).unwrap(), c);
    }
}
