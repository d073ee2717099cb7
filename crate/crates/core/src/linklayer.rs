//! SINR, adaptive modulation and coding, and primary-network power control.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::topology::{db_to_linear, linear_to_db, NetworkRealization};

const LTE_AMC_CSV: &str = include_str!("../data/amc_lte.csv");

/// Number of modes in an AMC table.
pub const AMC_MODES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmcMode {
    pub sinr_threshold_db: f64,
    /// bits/s/Hz
    pub spectral_efficiency: f64,
}

/// SINR-threshold to spectral-efficiency mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmcTable {
    modes: Vec<AmcMode>,
}

#[derive(Debug, Deserialize)]
struct AmcRow {
    #[allow(dead_code)]
    mode: u32,
    threshold_db: f64,
    efficiency: f64,
}

impl AmcTable {
    pub fn new(modes: Vec<AmcMode>) -> Result<Self> {
        if modes.len() != AMC_MODES {
            return Err(Error::AmcTable(format!("expected {AMC_MODES} modes, got {}", modes.len())));
        }
        for w in modes.windows(2) {
            if !(w[1].sinr_threshold_db > w[0].sinr_threshold_db) {
                return Err(Error::AmcTable("thresholds must be strictly increasing".into()));
            }
            if !(w[1].spectral_efficiency > w[0].spectral_efficiency) {
                return Err(Error::AmcTable("efficiencies must be strictly increasing".into()));
            }
        }
        if !(modes[0].spectral_efficiency > 0.0) {
            return Err(Error::AmcTable("efficiencies must be positive".into()));
        }
        Ok(Self { modes })
    }

    /// The embedded LTE CQI table (10 % BLER thresholds).
    pub fn lte() -> Self {
        Self::from_csv_str(LTE_AMC_CSV).expect("embedded AMC table is valid")
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut modes = Vec::new();
        for row in reader.deserialize::<AmcRow>() {
            let row = row.map_err(|e| Error::AmcTable(e.to_string()))?;
            modes.push(AmcMode { sinr_threshold_db: row.threshold_db, spectral_efficiency: row.efficiency });
        }
        Self::new(modes)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    /// Table selected by a scenario: its CSV override or the embedded default.
    pub fn for_scenario(scenario: &Scenario) -> Result<Self> {
        match &scenario.amc_table_csv {
            Some(path) => Self::from_csv_path(Path::new(path)),
            None => Ok(Self::lte()),
        }
    }

    pub fn modes(&self) -> &[AmcMode] {
        &self.modes
    }

    /// Highest mode whose threshold is at or below `sinr_db`.
    pub fn mode_for(&self, sinr_db: f64) -> Option<usize> {
        self.modes.iter().rposition(|m| sinr_db >= m.sinr_threshold_db)
    }

    /// Lowest SINR that selects the top mode.
    pub fn top_threshold_db(&self) -> f64 {
        self.modes[self.modes.len() - 1].sinr_threshold_db
    }
}

/// Throughput in Mbps at `sinr_db` over `bandwidth_hz`; zero below the first mode.
pub fn throughput_mbps(sinr_db: f64, table: &AmcTable, bandwidth_hz: f64) -> f64 {
    match table.mode_for(sinr_db) {
        Some(m) => table.modes[m].spectral_efficiency * bandwidth_hz / 1e6,
        None => 0.0,
    }
}

/// Transmit power per transmitter in dBm; `None` is OFF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector(pub Vec<Option<f64>>);

impl PowerVector {
    pub fn silent(len: usize) -> Self {
        Self(vec![None; len])
    }

    pub fn get(&self, tx: usize) -> Option<f64> {
        self.0[tx]
    }

    pub fn set(&mut self, tx: usize, p_dbm: Option<f64>) {
        self.0[tx] = p_dbm;
    }

    /// Copies CR powers into the CR transmitter slots of `realization`.
    pub fn with_cr_powers(mut self, realization: &NetworkRealization, cr_powers: &[Option<f64>]) -> Self {
        for (cr, &p) in cr_powers.iter().enumerate() {
            self.0[realization.cr_tx(cr)] = p;
        }
        self
    }
}

/// Received power in mW at `rx` from `tx`.
pub fn received_mw(realization: &NetworkRealization, powers: &PowerVector, tx: usize, rx: usize) -> f64 {
    match powers.get(tx) {
        Some(p) => db_to_linear(p) * realization.gain(tx, rx),
        None => 0.0,
    }
}

/// Linear SINR at receiver `rx`; 0 when its serving transmitter is OFF.
pub fn sinr_linear(realization: &NetworkRealization, powers: &PowerVector, rx: usize, noise_dbm: f64) -> f64 {
    let serving = realization.serving_tx(rx);
    let desired = received_mw(realization, powers, serving, rx);
    if desired == 0.0 {
        return 0.0;
    }
    let interference: f64 = (0..realization.num_transmitters())
        .filter(|&tx| tx != serving)
        .map(|tx| received_mw(realization, powers, tx, rx))
        .sum();
    desired / (db_to_linear(noise_dbm) + interference)
}

/// SINR in dB at receiver `rx`; `-inf` when its serving transmitter is OFF.
pub fn sinr_db(realization: &NetworkRealization, powers: &PowerVector, rx: usize, noise_dbm: f64) -> f64 {
    linear_to_db(sinr_linear(realization, powers, rx, noise_dbm))
}

/// Parameters of the PN's distributed target-SINR power control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnPowerControl {
    pub target_sinr_db: f64,
    pub min_dbm: f64,
    pub max_dbm: f64,
    pub tolerance_db: f64,
    pub max_iterations: usize,
    pub noise_dbm: f64,
}

impl PnPowerControl {
    pub fn from_scenario(scenario: &Scenario, table: &AmcTable) -> Self {
        Self {
            target_sinr_db: scenario.pn_target_sinr_db.unwrap_or_else(|| table.top_threshold_db()),
            min_dbm: scenario.pn_power_min_dbm,
            max_dbm: scenario.pn_power_max_dbm,
            tolerance_db: scenario.pn_convergence_db,
            max_iterations: scenario.pn_max_iterations,
            noise_dbm: scenario.noise_dbm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnAllocation {
    /// Full power vector: PN entries set, CR entries as given.
    pub powers: PowerVector,
    pub iterations: usize,
    pub converged: bool,
}

/// Synchronous clipped target-SINR iteration over the active APs with the
/// CR powers held fixed. Each round every AP moves its power (dBm) by the
/// gap between target and measured SINR, then clips to its range.
pub fn pn_power_allocation(
    realization: &NetworkRealization,
    cr_powers: &[Option<f64>],
    ctl: &PnPowerControl,
) -> PnAllocation {
    let start = ctl.min_dbm.max(ctl.max_dbm.min(0.0));
    let mut powers = PowerVector::silent(realization.num_transmitters());
    for &ap in &realization.active_aps {
        powers.set(ap, Some(start));
    }
    pn_power_iterate(realization, powers.with_cr_powers(realization, cr_powers), ctl)
}

/// Runs the PN iteration from the PN powers already present in `powers`.
pub fn pn_power_iterate(
    realization: &NetworkRealization,
    mut powers: PowerVector,
    ctl: &PnPowerControl,
) -> PnAllocation {
    let links = realization.num_pn_links();
    let mut next = vec![0.0; links];
    for iteration in 1..=ctl.max_iterations {
        let mut max_change: f64 = 0.0;
        for (link, slot) in next.iter_mut().enumerate() {
            let ap = realization.active_aps[link];
            let current = powers.get(ap).expect("active AP has a power");
            let sinr = sinr_db(realization, &powers, realization.pn_rx(link), ctl.noise_dbm);
            let updated = (current + (ctl.target_sinr_db - sinr)).clamp(ctl.min_dbm, ctl.max_dbm);
            max_change = max_change.max((updated - current).abs());
            *slot = updated;
        }
        for (link, &p) in next.iter().enumerate() {
            powers.set(realization.active_aps[link], Some(p));
        }
        if max_change < ctl.tolerance_db {
            return PnAllocation { powers, iterations: iteration, converged: true };
        }
    }
    PnAllocation { powers, iterations: ctl.max_iterations, converged: false }
}
