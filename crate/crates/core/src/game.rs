//! Leader/follower power-control game over an uplink NOMA cell.
//!
//! The UAV (leader) fixes the RIS phases, the UEs (followers) then play best
//! responses in SIC decode order until no power moves by more than ε.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::ris::{self, PhaseShiftVector};
use crate::rng;
use crate::units::{dbm_to_watts, watts_to_dbm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    /// W (1 − e^{−aγ})^M / P.
    Proposed,
    /// W log2(1 + γ) / P.
    Literature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderRule {
    /// One phase per element from the sum of every UE's co-phasing phasor.
    AlignedCombination,
    /// Coordinate ascent on Σ P_i G_i with the initial powers as weights.
    CoordinateAscent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub alpha: f64,
    pub m_exponent: f64,
    pub p_min_watts: f64,
    pub p_max_watts: f64,
    pub p_tol_watts: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Divide the best-response target by W as well as by G.
    pub w_in_nash: bool,
    pub initial_power_range: [f64; 2],
    pub utility: UtilityKind,
    pub leader: LeaderRule,
}

impl Default for GameConfig {
    fn default() -> Self {
        let p_max = dbm_to_watts(23.0);
        Self {
            alpha: 0.3,
            m_exponent: 3.0,
            p_min_watts: dbm_to_watts(-120.0),
            p_max_watts: p_max,
            p_tol_watts: dbm_to_watts(-150.0),
            epsilon: 1e-4,
            max_iterations: 1000,
            w_in_nash: false,
            initial_power_range: [1e-5, p_max],
            utility: UtilityKind::Proposed,
            leader: LeaderRule::AlignedCombination,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGameConfig(m.into()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if !(self.m_exponent >= 1.0 && self.m_exponent.is_finite()) {
            return bad("m_exponent must be >= 1");
        }
        if !(self.p_min_watts > 0.0
            && self.p_min_watts <= self.p_max_watts
            && self.p_max_watts.is_finite())
        {
            return bad("power limits must satisfy 0 < p_min <= p_max");
        }
        if !(self.p_tol_watts >= 0.0 && self.p_tol_watts.is_finite()) {
            return bad("p_tol must be >= 0");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1");
        }
        let [lo, hi] = self.initial_power_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("initial power range must satisfy 0 < lo <= hi");
        }
        Ok(())
    }
}

/// Decode order: indices by gain descending, ties to the lower index.
pub fn sic_order(gains: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..gains.len()).collect();
    idx.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    idx
}

/// I at decode rank `rank`: Σ_{j < rank} G_j P_j + I_0, inputs in decode order.
pub fn interference(
    gains_sorted: &[f64],
    powers_sorted: &[f64],
    rank: usize,
    i0: f64,
) -> Result<f64> {
    let len = gains_sorted.len().min(powers_sorted.len());
    if rank >= len {
        return Err(Error::IndexOutOfRange { index: rank, len });
    }
    Ok(gains_sorted[..rank]
        .iter()
        .zip(&powers_sorted[..rank])
        .map(|(g, p)| g * p)
        .sum::<f64>()
        + i0)
}

pub fn sinr(p: f64, g: f64, i: f64) -> Result<f64> {
    if !(i > 0.0) {
        return Err(Error::ZeroInterference(i));
    }
    Ok(p * g / i)
}

pub fn utility_proposed(p: f64, gamma: f64, w: f64, a: f64, m: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::NonPositivePower(p));
    }
    Ok(w * (-(-a * gamma).exp_m1()).powf(m) / p)
}

pub fn utility_literature(p: f64, gamma: f64, w: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::NonPositivePower(p));
    }
    Ok(w * gamma.ln_1p() / std::f64::consts::LN_2 / p)
}

pub fn utility(config: &GameConfig, p: f64, gamma: f64, w: f64) -> Result<f64> {
    match config.utility {
        UtilityKind::Proposed => utility_proposed(p, gamma, w, config.alpha, config.m_exponent),
        UtilityKind::Literature => utility_literature(p, gamma, w),
    }
}

pub const GAMMA_BRACKET: [f64; 2] = [1e-9, 1e4];
pub const GAMMA_TOL: f64 = 1e-10;

/// Sign of f'(γ)γ − f(γ) for f = (1 − e^{−aγ})^M, with the positive factor
/// (1 − e^{−aγ})^{M−1} removed: M x e^{−x} − (1 − e^{−x}), x = aγ.
fn reduced_condition(x: f64, m: f64) -> f64 {
    m * x * (-x).exp() + (-x).exp_m1()
}

/// Unique positive root of f'(γ)γ = f(γ) by bisection.
pub fn gamma_star(a: f64, m: f64) -> Result<f64> {
    let [mut lo, mut hi] = GAMMA_BRACKET;
    if !(a > 0.0 && m >= 1.0 && a.is_finite() && m.is_finite()) {
        return Err(Error::BracketFailure { lo, hi });
    }
    let h = |g: f64| reduced_condition(a * g, m);
    let (h_lo, h_hi) = (h(lo), h(hi));
    if !(h_lo > 0.0 && h_hi < 0.0) {
        return Err(Error::BracketFailure { lo, hi });
    }
    while hi - lo > GAMMA_TOL {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Feasible power interval of the UE at decode `rank`: the SIC floor applies
/// to everyone but the first-decoded UE.
pub fn feasible_interval(
    gain: f64,
    interference: f64,
    rank: usize,
    config: &GameConfig,
) -> (f64, f64) {
    let floor = if rank > 0 {
        config
            .p_min_watts
            .max((interference + config.p_tol_watts) / gain)
    } else {
        config.p_min_watts
    };
    (floor, config.p_max_watts)
}

/// Utility-maximising power of one UE given the interference it senses.
///
/// Proposed utility: γ*·I/G (÷W with `w_in_nash`) clipped to the feasible
/// interval. Literature utility is strictly decreasing in P, so its best
/// response is the lower end of the interval.
pub fn best_response(
    gain: f64,
    interference: f64,
    rank: usize,
    gamma_star: f64,
    bandwidth_hz: f64,
    config: &GameConfig,
) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(Error::NonPositiveGain(gain));
    }
    let (lo, hi) = feasible_interval(gain, interference, rank, config);
    if lo > hi {
        return Err(Error::InfeasibleSic {
            ue: rank,
            required: lo,
            p_max: hi,
        });
    }
    Ok(match config.utility {
        UtilityKind::Proposed => {
            let mut target = gamma_star * interference / gain;
            if config.w_in_nash {
                target /= bandwidth_hz;
            }
            target.clamp(lo, hi)
        }
        UtilityKind::Literature => lo,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    /// UE indices in decode order.
    pub decode_order: Vec<usize>,
    /// Per-UE vectors below are indexed by UE, not by rank.
    pub powers: Vec<f64>,
    pub interference: Vec<f64>,
    pub sinr: Vec<f64>,
    pub utility: Vec<f64>,
    pub iteration: usize,
}

impl GameState {
    pub fn evaluate(
        gains: &[f64],
        powers: &[f64],
        decode_order: &[usize],
        i0: f64,
        bandwidth_hz: f64,
        config: &GameConfig,
        iteration: usize,
    ) -> Result<Self> {
        let n = gains.len();
        if powers.len() != n || decode_order.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: powers.len().min(decode_order.len()),
            });
        }
        let mut interference = vec![0.0; n];
        let mut sinr_v = vec![0.0; n];
        let mut util = vec![0.0; n];
        let mut acc = i0;
        for &ue in decode_order {
            interference[ue] = acc;
            sinr_v[ue] = sinr(powers[ue], gains[ue], acc)?;
            util[ue] = utility(config, powers[ue], sinr_v[ue], bandwidth_hz)?;
            acc += gains[ue] * powers[ue];
        }
        Ok(Self {
            decode_order: decode_order.to_vec(),
            powers: powers.to_vec(),
            interference,
            sinr: sinr_v,
            utility: util,
            iteration,
        })
    }

    pub fn rank_of(&self, ue: usize) -> usize {
        self.decode_order
            .iter()
            .position(|&u| u == ue)
            .expect("decode order is a permutation")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub powers: Vec<f64>,
    pub utilities: Vec<f64>,
    /// Σ_i P_i G_i.
    pub objective: f64,
    /// max_i |P_i(j) − P_i(j−1)|.
    pub max_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackelbergOutcome {
    pub phases: PhaseShiftVector,
    pub gains: Vec<f64>,
    pub initial_powers: Vec<f64>,
    pub state: GameState,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// UEs whose SIC floor exceeded P_max at the final round; clipped to P_max.
    pub sic_infeasible: Vec<usize>,
}

impl StackelbergOutcome {
    pub fn powers(&self) -> &[f64] {
        &self.state.powers
    }

    pub fn sum_power(&self) -> f64 {
        self.state.powers.iter().sum()
    }

    pub fn sum_utility(&self) -> f64 {
        self.state.utility.iter().sum()
    }
}

const GAME_STREAM: u64 = 0x6A3E;

/// Leader step followed by Gauss-Seidel best-response rounds in decode order.
pub fn run_stackelberg(
    channels: &ChannelSet,
    config: &GameConfig,
    seed: u64,
) -> Result<StackelbergOutcome> {
    config.validate()?;
    channels.validate()?;
    let n = channels.num_ues();
    if n == 0 {
        return Err(Error::NoActiveUsers);
    }
    let w = channels.band.bandwidth_hz;
    let i0 = channels.band.noise_ref_watts();
    let gs = match config.utility {
        UtilityKind::Proposed => gamma_star(config.alpha, config.m_exponent)?,
        UtilityKind::Literature => f64::NAN,
    };

    let mut rng = rng::stream(seed, &[GAME_STREAM]);
    let [lo, hi] = config.initial_power_range;
    let initial: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();

    let phases = if channels.ris_elements() == 0 {
        PhaseShiftVector::zeros(0)
    } else {
        match config.leader {
            LeaderRule::AlignedCombination => ris::aligned_combination_phases(channels)?,
            LeaderRule::CoordinateAscent => ris::optimize_phases_multi_ue(channels, &initial)?,
        }
    };
    let gains = ris::effective_gains(channels, &phases)?;
    let order = sic_order(&gains);

    let mut powers = initial.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut infeasible = Vec::new();
    for j in 1..=config.max_iterations {
        let prev = powers.clone();
        infeasible.clear();
        let mut acc = i0;
        for (rank, &ue) in order.iter().enumerate() {
            powers[ue] = match best_response(gains[ue], acc, rank, gs, w, config) {
                Ok(p) => p,
                Err(Error::InfeasibleSic { .. }) => {
                    infeasible.push(ue);
                    config.p_max_watts
                }
                Err(e) => return Err(e),
            };
            acc += gains[ue] * powers[ue];
        }
        let state = GameState::evaluate(&gains, &powers, &order, i0, w, config, j)?;
        let max_change = powers
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        trace.push(TraceRow {
            iteration: j,
            powers: powers.clone(),
            utilities: state.utility.clone(),
            objective: powers.iter().zip(&gains).map(|(p, g)| p * g).sum(),
            max_change,
        });
        if max_change <= config.epsilon {
            converged = true;
            break;
        }
    }

    let iteration = trace.len();
    let state = GameState::evaluate(&gains, &powers, &order, i0, w, config, iteration)?;
    let outcome = StackelbergOutcome {
        phases,
        gains,
        initial_powers: initial,
        state,
        trace,
        converged,
        sic_infeasible: infeasible,
    };
    if converged {
        Ok(outcome)
    } else {
        Err(Error::NonConvergence(Box::new(outcome)))
    }
}

/// Columns: iteration, p_dbm_<ue>..., u_<ue>..., objective.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let n = trace.first().map_or(0, |r| r.powers.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string()];
    header.extend((0..n).map(|i| format!("p_dbm_{i}")));
    header.extend((0..n).map(|i| format!("u_{i}")));
    header.push("objective".into());
    w.write_record(&header)?;
    for row in trace {
        let mut rec = vec![row.iteration.to_string()];
        rec.extend(
            row.powers
                .iter()
                .map(|&p| format!("{:.12e}", watts_to_dbm(p))),
        );
        rec.extend(row.utilities.iter().map(|u| format!("{u:.12e}")));
        rec.push(format!("{:.12e}", row.objective));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

pub const NASH_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashEntry {
    pub ue: usize,
    pub utility: f64,
    pub best_grid_utility: f64,
    pub best_grid_power: f64,
    /// (best grid utility − utility) / |utility|.
    pub relative_gain: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub entries: Vec<NashEntry>,
}

impl NashReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }
}

/// Log-spaced grid of `points` values over [lo, hi], endpoints included.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 || lo >= hi {
        return vec![lo.min(hi)];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| {
            if k == points - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// Unilateral-deviation check: each UE's utility over a grid of its feasible
/// powers, with everyone else held at the equilibrium.
pub fn nash_verify(
    state: &GameState,
    gains: &[f64],
    config: &GameConfig,
    bandwidth_hz: f64,
    grid_points: usize,
) -> Result<NashReport> {
    let mut entries = Vec::with_capacity(gains.len());
    for (rank, &ue) in state.decode_order.iter().enumerate() {
        let g = gains[ue];
        let i = state.interference[ue];
        let (lo, hi) = feasible_interval(g, i, rank, config);
        let u_star = utility(
            config,
            state.powers[ue],
            sinr(state.powers[ue], g, i)?,
            bandwidth_hz,
        )?;
        let mut best = (f64::NEG_INFINITY, lo.min(hi));
        for p in log_grid(lo, hi, grid_points) {
            let u = utility(config, p, sinr(p, g, i)?, bandwidth_hz)?;
            if u > best.0 {
                best = (u, p);
            }
        }
        let rel = (best.0 - u_star) / u_star.abs().max(f64::MIN_POSITIVE);
        entries.push(NashEntry {
            ue,
            utility: u_star,
            best_grid_utility: best.0,
            best_grid_power: best.1,
            relative_gain: rel,
            passed: rel <= NASH_REL_TOL,
        });
    }
    entries.sort_by_key(|e| e.ue);
    Ok(NashReport { entries })
}
