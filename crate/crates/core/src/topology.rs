//! Two-network geometry on a wrapped grid and the resulting link gains.
//!
//! The primary network is a square grid of access points on a torus (edges
//! wrap, so there are no border cells). A subset of APs is active, each
//! serving one receiver inside its coverage radius. Cognitive-radio
//! transmitters are dropped anywhere on the torus with their receivers
//! nearby. Every transmitter-to-receiver pair gets a log-distance path loss
//! plus a frozen log-normal shadowing draw.

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::{Error, Result};

/// Fixed penetration loss in the link budget (dB).
pub const PENETRATION_LOSS_DB: f64 = 10.0;

/// Upper bound on geometry redraws before giving up on a seed.
const MAX_GEOMETRY_ATTEMPTS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    /// meters
    pub x: f64,
    /// meters
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Square torus of side `width_m` meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Torus {
    pub width_m: f64,
}

impl Torus {
    pub fn new(width_m: f64) -> Self {
        Self { width_m }
    }

    /// Reduces a point into `[0, width)` on both axes.
    pub fn wrap(&self, p: Position) -> Position {
        let w = self.width_m;
        let mut x = p.x.rem_euclid(w);
        let mut y = p.y.rem_euclid(w);
        // rem_euclid can round up to exactly `w` for tiny negative inputs
        if x >= w {
            x = 0.0;
        }
        if y >= w {
            y = 0.0;
        }
        Position { x, y }
    }

    /// Minimum-image Euclidean distance in kilometers.
    pub fn distance_km(&self, a: Position, b: Position) -> f64 {
        let w = self.width_m;
        let axis = |u: f64, v: f64| {
            let d = (u - v).abs().rem_euclid(w);
            d.min(w - d)
        };
        let dx = axis(a.x, b.x);
        let dy = axis(a.y, b.y);
        dx.hypot(dy) / 1_000.0
    }
}

/// Received-power gain in dB for a link of `d_km` kilometers with shadowing
/// loss `shadow_db`. Add to a transmit power in dBm to get the received power.
pub fn link_gain_db(d_km: f64, shadow_db: f64) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(Error::ZeroDistance);
    }
    Ok(-128.1 - 37.6 * d_km.log10() - PENETRATION_LOSS_DB - shadow_db)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// One sampled Monte Carlo world.
///
/// Transmitter ids: `0..num_aps` are the APs (active or not), followed by the
/// CR transmitters. Receiver ids: `0..active_aps.len()` are the PN receivers
/// (in `active_aps` order), followed by the CR receivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRealization {
    pub torus: Torus,
    pub ap_positions: Vec<Position>,
    /// Sorted ascending.
    pub active_aps: Vec<usize>,
    pub pn_rx_positions: Vec<Position>,
    pub cr_tx_positions: Vec<Position>,
    pub cr_rx_positions: Vec<Position>,
    /// Linear power gain, `gain[tx][rx]`.
    pub gain: Vec<Vec<f64>>,
    pub shadowing_db: Vec<Vec<f64>>,
    /// Linear gain from each AP to each CR transmitter's position, used to
    /// decide which PN link a CR considers its nearest.
    pub ap_to_cr_tx_gain: Vec<Vec<f64>>,
    pub ap_to_cr_tx_shadowing_db: Vec<Vec<f64>>,
}

impl NetworkRealization {
    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_pn_links(&self) -> usize {
        self.active_aps.len()
    }

    pub fn num_crs(&self) -> usize {
        self.cr_tx_positions.len()
    }

    pub fn num_transmitters(&self) -> usize {
        self.num_aps() + self.num_crs()
    }

    pub fn num_receivers(&self) -> usize {
        self.num_pn_links() + self.num_crs()
    }

    pub fn ap_tx(&self, ap: usize) -> usize {
        ap
    }

    pub fn cr_tx(&self, cr: usize) -> usize {
        self.num_aps() + cr
    }

    pub fn pn_rx(&self, link: usize) -> usize {
        link
    }

    pub fn cr_rx(&self, cr: usize) -> usize {
        self.num_pn_links() + cr
    }

    /// Transmitter whose signal is the desired one at receiver `rx`.
    pub fn serving_tx(&self, rx: usize) -> usize {
        if rx < self.num_pn_links() {
            self.active_aps[rx]
        } else {
            self.cr_tx(rx - self.num_pn_links())
        }
    }

    pub fn gain(&self, tx: usize, rx: usize) -> f64 {
        self.gain[tx][rx]
    }

    pub fn gain_db(&self, tx: usize, rx: usize) -> f64 {
        linear_to_db(self.gain[tx][rx])
    }

    fn receiver_positions(&self) -> Vec<Position> {
        self.pn_rx_positions.iter().chain(self.cr_rx_positions.iter()).copied().collect()
    }

    fn transmitter_positions(&self) -> Vec<Position> {
        self.ap_positions.iter().chain(self.cr_tx_positions.iter()).copied().collect()
    }

    /// Checks the structural invariants of a realization against its scenario.
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidRealization(msg));
        if self.num_aps() != scenario.grid_size * scenario.grid_size {
            return bad(format!("expected {} APs", scenario.grid_size.pow(2)));
        }
        if self.active_aps.len() != scenario.active_aps {
            return bad(format!("expected {} active APs", scenario.active_aps));
        }
        if self.active_aps.windows(2).any(|w| w[0] >= w[1]) || self.active_aps.iter().any(|&a| a >= self.num_aps()) {
            return bad("active AP indices must be distinct, sorted and in range".into());
        }
        if self.num_crs() != scenario.num_crs || self.cr_rx_positions.len() != scenario.num_crs {
            return bad(format!("expected {} CR links", scenario.num_crs));
        }
        let radius_km = scenario.coverage_radius_m / 1_000.0;
        for (link, &ap) in self.active_aps.iter().enumerate() {
            let d = self.torus.distance_km(self.ap_positions[ap], self.pn_rx_positions[link]);
            if d > radius_km {
                return bad(format!("PN receiver {link} outside coverage ({d} km)"));
            }
        }
        let cr_km = scenario.cr_link_radius_m / 1_000.0;
        for cr in 0..self.num_crs() {
            let d = self.torus.distance_km(self.cr_tx_positions[cr], self.cr_rx_positions[cr]);
            if d > cr_km {
                return bad(format!("CR receiver {cr} too far from its transmitter ({d} km)"));
            }
        }
        if self.gain.len() != self.num_transmitters() || self.gain.iter().any(|row| row.len() != self.num_receivers()) {
            return bad("gain matrix has the wrong shape".into());
        }
        let all_gains = self.gain.iter().flatten().chain(self.ap_to_cr_tx_gain.iter().flatten());
        for &g in all_gains {
            if !(g > 0.0 && g < 1.0) {
                return bad(format!("gain {g} outside (0, 1)"));
            }
        }
        Ok(())
    }
}

/// AP grid positions: cell centers of a `grid_size` x `grid_size` grid.
pub fn ap_grid(scenario: &Scenario) -> Vec<Position> {
    let n = scenario.grid_size;
    let s = scenario.ap_spacing_m;
    (0..n)
        .flat_map(|row| (0..n).map(move |col| Position::new((col as f64 + 0.5) * s, (row as f64 + 0.5) * s)))
        .collect()
}

fn point_in_disk<R: Rng + ?Sized>(rng: &mut R, center: Position, radius_m: f64) -> Position {
    let r = radius_m * rng.gen::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.gen::<f64>();
    Position::new(center.x + r * theta.cos(), center.y + r * theta.sin())
}

/// Draws one realization from `rng`. Geometries with a zero-length link or a
/// gain that is not strictly inside (0, 1) are redrawn.
pub fn sample_with_rng<R: Rng + ?Sized>(rng: &mut R, scenario: &Scenario) -> Result<NetworkRealization> {
    scenario.validate()?;
    let torus = Torus::new(scenario.torus_width_m());
    let ap_positions = ap_grid(scenario);
    let shadow =
        Normal::new(0.0, scenario.shadowing_sigma_db).map_err(|e| Error::Config(format!("shadowing_sigma_db: {e}")))?;

    for _ in 0..MAX_GEOMETRY_ATTEMPTS {
        let mut active_aps = index::sample(rng, ap_positions.len(), scenario.active_aps).into_vec();
        active_aps.sort_unstable();

        let pn_rx_positions: Vec<Position> = active_aps
            .iter()
            .map(|&ap| torus.wrap(point_in_disk(rng, ap_positions[ap], scenario.coverage_radius_m)))
            .collect();
        let cr_tx_positions: Vec<Position> = (0..scenario.num_crs)
            .map(|_| torus.wrap(Position::new(rng.gen::<f64>() * torus.width_m, rng.gen::<f64>() * torus.width_m)))
            .collect();
        let cr_rx_positions: Vec<Position> =
            cr_tx_positions.iter().map(|&tx| torus.wrap(point_in_disk(rng, tx, scenario.cr_link_radius_m))).collect();

        let mut realization = NetworkRealization {
            torus,
            ap_positions: ap_positions.clone(),
            active_aps,
            pn_rx_positions,
            cr_tx_positions,
            cr_rx_positions,
            gain: Vec::new(),
            shadowing_db: Vec::new(),
            ap_to_cr_tx_gain: Vec::new(),
            ap_to_cr_tx_shadowing_db: Vec::new(),
        };

        let txs = realization.transmitter_positions();
        let rxs = realization.receiver_positions();
        let Some((gain, shadowing_db)) = gain_matrix(rng, &shadow, &torus, &txs, &rxs) else {
            continue;
        };
        let Some((ap_gain, ap_shadow)) =
            gain_matrix(rng, &shadow, &torus, &realization.ap_positions, &realization.cr_tx_positions)
        else {
            continue;
        };
        realization.gain = gain;
        realization.shadowing_db = shadowing_db;
        realization.ap_to_cr_tx_gain = ap_gain;
        realization.ap_to_cr_tx_shadowing_db = ap_shadow;
        return Ok(realization);
    }
    Err(Error::InvalidRealization("no non-degenerate geometry found".into()))
}

type GainDraw = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn gain_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    shadow: &Normal<f64>,
    torus: &Torus,
    txs: &[Position],
    rxs: &[Position],
) -> Option<GainDraw> {
    let mut gains = Vec::with_capacity(txs.len());
    let mut shadows = Vec::with_capacity(txs.len());
    for &tx in txs {
        let mut g_row = Vec::with_capacity(rxs.len());
        let mut s_row = Vec::with_capacity(rxs.len());
        for &rx in rxs {
            let s = shadow.sample(rng);
            let g = db_to_linear(link_gain_db(torus.distance_km(tx, rx), s).ok()?);
            if !(g > 0.0 && g < 1.0) {
                return None;
            }
            g_row.push(g);
            s_row.push(s);
        }
        gains.push(g_row);
        shadows.push(s_row);
    }
    Some((gains, shadows))
}

/// Topology RNG for `seed`; `attempt` selects an independent stream so that
/// rejected realizations can be redrawn deterministically.
pub fn topology_rng(seed: u64, attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt);
    rng
}

/// Deterministic realization for a seed.
pub fn sample_realization(seed: u64, scenario: &Scenario) -> Result<NetworkRealization> {
    sample_with_rng(&mut topology_rng(seed, 0), scenario)
}
