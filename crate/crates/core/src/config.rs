//! Experiment configuration (TOML).
//!
//! Every key is optional; an empty file yields the reference cell with the
//! default game, channel and slice settings. Unknown keys are rejected.
//!
//! ```toml
//! band = "sub6"                  # or "mmwave"; primary band for verify/export
//! ris_elements = [1, 10, 100, 1000]
//! realizations = 100
//! seeds = [0, 1, 2]
//! output_dir = "out"
//!
//! [topology]
//! uav = [25.0, 50.0, 25.0]
//! ris = [30.0, 40.0, 20.0]
//! ue_ris_distances = [20.0, 27.0, 37.0, 58.0, 66.0]
//! ue_height_m = 1.5
//! placement_seed = 3             # omit to re-place UEs with every run seed
//! # ue_positions = [[0.0, 0.0, 1.5], ...]   # replaces the distance list
//!
//! [bands.sub6]                   # same keys under [bands.mmwave]
//! carrier_frequency_hz = 5.9e9
//! bandwidth_hz = 10e6
//! noise_ref_dbm = -140.0
//! element_spacing_m = 0.0254     # default λ/2
//!
//! [channel]
//! k_factor_db = 9.0
//! rms_delay_spread_ns = 100.0
//! n_paths = 12
//!
//! [game]
//! alpha = 0.3
//! m_exponent = 3.0
//! p_min_dbm = -120.0
//! p_max_dbm = 23.0
//! p_tol_dbm = -150.0
//! epsilon = 1e-4
//! max_iterations = 1000
//! w_in_nash = false
//! initial_power_min_dbm = -20.0
//! utility = "proposed"           # or "literature"
//! leader = "aligned_combination" # or "coordinate_ascent"
//!
//! [slice]
//! setups = [1, 2, 3, 4]
//! duration_ttis = 10000
//! seeds = [0, 1, 2, 3, 4]
//! scenario_seed = 0
//! ris_elements = 100
//! tx_power_per_prb_dbm = -2.0
//! noise_figure_db = 9.0
//! embb_rate_bps = 4e6
//! urllc_rate_bps = 89.3e3
//! urllc_packet_bytes = 125
//! write_traces = false
//!
//! [utility_comparison]
//! ues = 4
//! bandwidth_hz = 5e6
//! ris_elements = [0, 100]
//!
//! [highway]
//! speed_kmh = 66.0
//! travel_m = 150.0
//! lane_offset_m = 4.0
//! antenna_height_m = 1.5
//! sample_interval_s = 0.1
//! path_loss_exponent = 2.0
//! carrier_frequency_hz = 5.9e9
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::game::{GameConfig, LeaderRule, UtilityKind};
use crate::geometry::{place_ues_around_ris, reference, BandConfig, Position3D, Topology};
use crate::slice::{setup_schedulers, DlBudget, TrafficProfile};
use crate::units::dbm_to_watts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BandName {
    Sub6,
    Mmwave,
}

impl BandName {
    pub const ALL: [BandName; 2] = [BandName::Sub6, BandName::Mmwave];

    pub fn as_str(self) -> &'static str {
        match self {
            BandName::Sub6 => "sub6",
            BandName::Mmwave => "mmwave",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sub6" => Ok(BandName::Sub6),
            "mmwave" => Ok(BandName::Mmwave),
            other => Err(Error::Schema(format!(
                "band: expected \"sub6\" or \"mmwave\", got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UePlacement {
    /// Seeded-random azimuths at fixed 3-D distances from the RIS.
    AroundRis {
        distances: Vec<f64>,
        height_m: f64,
        /// Pinned placement seed; `None` uses the run seed.
        seed: Option<u64>,
    },
    Explicit(Vec<Position3D>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub uav: Position3D,
    pub ris: Position3D,
    pub ues: UePlacement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSettings {
    pub setups: Vec<u8>,
    pub duration_ttis: u64,
    /// Traffic seeds.
    pub seeds: Vec<u64>,
    /// Seed of the single placement and channel draw shared by all campaigns.
    pub scenario_seed: u64,
    pub ris_elements: usize,
    pub budget: DlBudget,
    pub traffic: TrafficProfile,
    /// Also write per-TTI traces for the first traffic seed.
    pub write_traces: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityComparison {
    pub ues: usize,
    pub bandwidth_hz: f64,
    pub ris_elements: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighwaySettings {
    pub speed_kmh: f64,
    pub travel_m: f64,
    pub lane_offset_m: f64,
    pub antenna_height_m: f64,
    pub sample_interval_s: f64,
    pub path_loss_exponent: f64,
    pub carrier_frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub band: BandName,
    pub sub6: BandConfig,
    pub mmwave: BandConfig,
    pub ris_elements: Vec<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub topology: TopologySpec,
    pub channel: ChannelParams,
    pub game: GameConfig,
    pub slice: SliceSettings,
    pub utility_comparison: UtilityComparison,
    pub highway: HighwaySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_config("").expect("empty config is valid")
    }
}

impl ExperimentConfig {
    pub fn band_config(&self, band: BandName) -> BandConfig {
        match band {
            BandName::Sub6 => self.sub6,
            BandName::Mmwave => self.mmwave,
        }
    }

    pub fn primary_band(&self) -> BandConfig {
        self.band_config(self.band)
    }

    pub fn ue_positions(&self, run_seed: u64) -> Result<Vec<Position3D>> {
        match &self.topology.ues {
            UePlacement::AroundRis {
                distances,
                height_m,
                seed,
            } => place_ues_around_ris(
                &self.topology.ris,
                distances,
                *height_m,
                seed.unwrap_or(run_seed),
            ),
            UePlacement::Explicit(p) => Ok(p.clone()),
        }
    }

    pub fn topology(&self, band: BandName, ris_elements: usize, run_seed: u64) -> Result<Topology> {
        Topology::new(
            self.topology.uav,
            self.topology.ris,
            self.ue_positions(run_seed)?,
            ris_elements,
            self.band_config(band),
        )
    }
}

// ---------------------------------------------------------------------------
// Raw schema

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    band: Option<String>,
    ris_elements: Option<Vec<i64>>,
    realizations: Option<i64>,
    seeds: Option<Vec<i64>>,
    output_dir: Option<String>,
    topology: RawTopology,
    bands: RawBands,
    channel: RawChannel,
    game: RawGame,
    slice: RawSlice,
    utility_comparison: RawUtilityComparison,
    highway: RawHighway,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTopology {
    uav: Option<[f64; 3]>,
    ris: Option<[f64; 3]>,
    ue_ris_distances: Option<Vec<f64>>,
    ue_height_m: Option<f64>,
    placement_seed: Option<i64>,
    ue_positions: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawBands {
    sub6: RawBand,
    mmwave: RawBand,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawBand {
    carrier_frequency_hz: Option<f64>,
    bandwidth_hz: Option<f64>,
    noise_ref_dbm: Option<f64>,
    element_spacing_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawChannel {
    k_factor_db: Option<f64>,
    rms_delay_spread_ns: Option<f64>,
    n_paths: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGame {
    alpha: Option<f64>,
    m_exponent: Option<f64>,
    p_min_dbm: Option<f64>,
    p_max_dbm: Option<f64>,
    p_tol_dbm: Option<f64>,
    epsilon: Option<f64>,
    max_iterations: Option<i64>,
    w_in_nash: Option<bool>,
    initial_power_min_dbm: Option<f64>,
    utility: Option<String>,
    leader: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSlice {
    setups: Option<Vec<i64>>,
    duration_ttis: Option<i64>,
    seeds: Option<Vec<i64>>,
    scenario_seed: Option<i64>,
    ris_elements: Option<i64>,
    tx_power_per_prb_dbm: Option<f64>,
    noise_figure_db: Option<f64>,
    embb_rate_bps: Option<f64>,
    urllc_rate_bps: Option<f64>,
    urllc_packet_bytes: Option<i64>,
    write_traces: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawUtilityComparison {
    ues: Option<i64>,
    bandwidth_hz: Option<f64>,
    ris_elements: Option<Vec<i64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawHighway {
    speed_kmh: Option<f64>,
    travel_m: Option<f64>,
    lane_offset_m: Option<f64>,
    antenna_height_m: Option<f64>,
    sample_interval_s: Option<f64>,
    path_loss_exponent: Option<f64>,
    carrier_frequency_hz: Option<f64>,
}

// ---------------------------------------------------------------------------
// Validation

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn non_negative(key: &str, v: i64) -> Result<u64> {
    u64::try_from(v).map_err(|_| schema(format!("{key}: must be >= 0, got {v}")))
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(schema(format!(
            "{key}: must be a positive finite number, got {v}"
        )))
    }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(schema(format!("{key}: must be finite, got {v}")))
    }
}

fn seeds(key: &str, raw: Option<Vec<i64>>, default: std::ops::Range<u64>) -> Result<Vec<u64>> {
    match raw {
        None => Ok(default.collect()),
        Some(v) if v.is_empty() => Err(schema(format!("{key}: must not be empty"))),
        Some(v) => v.into_iter().map(|s| non_negative(key, s)).collect(),
    }
}

fn point(key: &str, p: [f64; 3]) -> Result<Position3D> {
    for c in p {
        finite(key, c)?;
    }
    Ok(p.into())
}

fn band(key: &str, raw: RawBand, default: BandConfig) -> Result<BandConfig> {
    let fc = positive(
        &format!("{key}.carrier_frequency_hz"),
        raw.carrier_frequency_hz
            .unwrap_or(default.carrier_frequency_hz),
    )?;
    let w = positive(
        &format!("{key}.bandwidth_hz"),
        raw.bandwidth_hz.unwrap_or(default.bandwidth_hz),
    )?;
    let i0 = finite(
        &format!("{key}.noise_ref_dbm"),
        raw.noise_ref_dbm.unwrap_or(default.noise_ref_dbm),
    )?;
    let b = BandConfig::new(fc, w, i0)?;
    match raw.element_spacing_m {
        Some(d) => b.with_element_spacing(positive(&format!("{key}.element_spacing_m"), d)?),
        None => Ok(b),
    }
}

fn element_list(key: &str, raw: Vec<i64>) -> Result<Vec<usize>> {
    if raw.is_empty() {
        return Err(schema(format!("{key}: must not be empty")));
    }
    raw.into_iter()
        .map(|m| Ok(non_negative(key, m)? as usize))
        .collect()
}

fn validate(raw: RawConfig) -> Result<ExperimentConfig> {
    let band_name = BandName::parse(raw.band.as_deref().unwrap_or("sub6"))?;
    let ris_elements = element_list(
        "ris_elements",
        raw.ris_elements.unwrap_or(vec![1, 10, 100, 1000]),
    )?;

    let t = raw.topology;
    let uav = point(
        "topology.uav",
        t.uav
            .unwrap_or([reference::UAV.x, reference::UAV.y, reference::UAV.z]),
    )?;
    let ris = point(
        "topology.ris",
        t.ris
            .unwrap_or([reference::RIS.x, reference::RIS.y, reference::RIS.z]),
    )?;
    let ues = match t.ue_positions {
        Some(list) => {
            if t.ue_ris_distances.is_some() || t.placement_seed.is_some() || t.ue_height_m.is_some()
            {
                return Err(schema(
                    "topology.ue_positions: cannot be combined with ue_ris_distances, ue_height_m or placement_seed",
                ));
            }
            if list.is_empty() {
                return Err(schema("topology.ue_positions: must not be empty"));
            }
            UePlacement::Explicit(
                list.into_iter()
                    .map(|p| point("topology.ue_positions", p))
                    .collect::<Result<_>>()?,
            )
        }
        None => {
            let distances = t
                .ue_ris_distances
                .unwrap_or(reference::UE_RIS_DISTANCES.to_vec());
            if distances.is_empty() {
                return Err(schema("topology.ue_ris_distances: must not be empty"));
            }
            for &d in &distances {
                positive("topology.ue_ris_distances", d)?;
            }
            UePlacement::AroundRis {
                distances,
                height_m: finite(
                    "topology.ue_height_m",
                    t.ue_height_m.unwrap_or(reference::UE_HEIGHT_M),
                )?,
                seed: t
                    .placement_seed
                    .map(|s| non_negative("topology.placement_seed", s))
                    .transpose()?,
            }
        }
    };

    let sub6 = band("bands.sub6", raw.bands.sub6, BandConfig::sub6())?;
    let mmwave = band("bands.mmwave", raw.bands.mmwave, BandConfig::mmwave())?;

    let c = raw.channel;
    let defaults = ChannelParams::default();
    let channel = ChannelParams {
        k_factor_db: c.k_factor_db.unwrap_or(defaults.k_factor_db),
        rms_delay_spread_s: positive(
            "channel.rms_delay_spread_ns",
            c.rms_delay_spread_ns.unwrap_or(100.0),
        )? / 1e9,
        n_paths: non_negative(
            "channel.n_paths",
            c.n_paths.unwrap_or(defaults.n_paths as i64),
        )? as usize,
        n_realizations: non_negative(
            "realizations",
            raw.realizations.unwrap_or(defaults.n_realizations as i64),
        )? as usize,
        ..defaults
    };
    channel.validate()?;

    let g = raw.game;
    let gd = GameConfig::default();
    let dbm = |key: &str, v: Option<f64>, default_w: f64| -> Result<f64> {
        match v {
            Some(x) => Ok(dbm_to_watts(finite(key, x)?)),
            None => Ok(default_w),
        }
    };
    let p_max = dbm("game.p_max_dbm", g.p_max_dbm, gd.p_max_watts)?;
    let game = GameConfig {
        alpha: g.alpha.unwrap_or(gd.alpha),
        m_exponent: g.m_exponent.unwrap_or(gd.m_exponent),
        p_min_watts: dbm("game.p_min_dbm", g.p_min_dbm, gd.p_min_watts)?,
        p_max_watts: p_max,
        p_tol_watts: dbm("game.p_tol_dbm", g.p_tol_dbm, gd.p_tol_watts)?,
        epsilon: g.epsilon.unwrap_or(gd.epsilon),
        max_iterations: non_negative(
            "game.max_iterations",
            g.max_iterations.unwrap_or(gd.max_iterations as i64),
        )? as usize,
        w_in_nash: g.w_in_nash.unwrap_or(gd.w_in_nash),
        initial_power_range: [
            dbm(
                "game.initial_power_min_dbm",
                g.initial_power_min_dbm,
                gd.initial_power_range[0],
            )?,
            p_max,
        ],
        utility: match g.utility.as_deref() {
            None | Some("proposed") => UtilityKind::Proposed,
            Some("literature") => UtilityKind::Literature,
            Some(o) => {
                return Err(schema(format!(
                    "game.utility: expected \"proposed\" or \"literature\", got {o:?}"
                )))
            }
        },
        leader: match g.leader.as_deref() {
            None => gd.leader,
            Some("aligned_combination") => LeaderRule::AlignedCombination,
            Some("coordinate_ascent") => LeaderRule::CoordinateAscent,
            Some(o) => {
                return Err(schema(format!(
                "game.leader: expected \"aligned_combination\" or \"coordinate_ascent\", got {o:?}"
            )))
            }
        },
    };
    game.validate().map_err(|e| schema(format!("game: {e}")))?;

    let s = raw.slice;
    let setups = s
        .setups
        .unwrap_or(vec![1, 2, 3, 4])
        .into_iter()
        .map(|v| {
            let id =
                u8::try_from(v).map_err(|_| schema(format!("slice.setups: invalid setup {v}")))?;
            setup_schedulers(id)
                .map_err(|_| schema(format!("slice.setups: setup must be 1..=4, got {v}")))?;
            Ok(id)
        })
        .collect::<Result<Vec<_>>>()?;
    if setups.is_empty() {
        return Err(schema("slice.setups: must not be empty"));
    }
    let td = TrafficProfile::default();
    let bd = DlBudget::default();
    let slice = SliceSettings {
        setups,
        duration_ttis: non_negative("slice.duration_ttis", s.duration_ttis.unwrap_or(10_000))?,
        seeds: seeds("slice.seeds", s.seeds, 0..5)?,
        scenario_seed: non_negative(
            "slice.scenario_seed",
            s.scenario_seed.unwrap_or(DEFAULT_SCENARIO_SEED as i64),
        )?,
        ris_elements: non_negative("slice.ris_elements", s.ris_elements.unwrap_or(100))? as usize,
        budget: DlBudget {
            tx_power_per_prb_dbm: finite(
                "slice.tx_power_per_prb_dbm",
                s.tx_power_per_prb_dbm.unwrap_or(bd.tx_power_per_prb_dbm),
            )?,
            noise_figure_db: finite(
                "slice.noise_figure_db",
                s.noise_figure_db.unwrap_or(bd.noise_figure_db),
            )?,
        },
        traffic: TrafficProfile {
            embb_rate_bps: positive(
                "slice.embb_rate_bps",
                s.embb_rate_bps.unwrap_or(td.embb_rate_bps),
            )?,
            urllc_rate_bps: positive(
                "slice.urllc_rate_bps",
                s.urllc_rate_bps.unwrap_or(td.urllc_rate_bps),
            )?,
            urllc_packet_bytes: match non_negative(
                "slice.urllc_packet_bytes",
                s.urllc_packet_bytes.unwrap_or(td.urllc_packet_bytes as i64),
            )? {
                0 => return Err(schema("slice.urllc_packet_bytes: must be >= 1")),
                n => n,
            },
        },
        write_traces: s.write_traces.unwrap_or(false),
    };

    let u = raw.utility_comparison;
    let utility_comparison = UtilityComparison {
        ues: match non_negative("utility_comparison.ues", u.ues.unwrap_or(4))? {
            0 => return Err(schema("utility_comparison.ues: must be >= 1")),
            n => n as usize,
        },
        bandwidth_hz: positive(
            "utility_comparison.bandwidth_hz",
            u.bandwidth_hz.unwrap_or(5e6),
        )?,
        ris_elements: element_list(
            "utility_comparison.ris_elements",
            u.ris_elements.unwrap_or(vec![0, 100]),
        )?,
    };
    if let UePlacement::AroundRis { distances, .. } = &ues {
        if utility_comparison.ues > distances.len() {
            return Err(schema(
                "utility_comparison.ues: exceeds the number of UEs in the topology",
            ));
        }
    }

    let h = raw.highway;
    let highway = HighwaySettings {
        speed_kmh: positive("highway.speed_kmh", h.speed_kmh.unwrap_or(66.0))?,
        travel_m: positive("highway.travel_m", h.travel_m.unwrap_or(150.0))?,
        lane_offset_m: positive("highway.lane_offset_m", h.lane_offset_m.unwrap_or(4.0))?,
        antenna_height_m: finite(
            "highway.antenna_height_m",
            h.antenna_height_m.unwrap_or(1.5),
        )?,
        sample_interval_s: positive(
            "highway.sample_interval_s",
            h.sample_interval_s.unwrap_or(0.1),
        )?,
        path_loss_exponent: positive(
            "highway.path_loss_exponent",
            h.path_loss_exponent.unwrap_or(2.0),
        )?,
        carrier_frequency_hz: positive(
            "highway.carrier_frequency_hz",
            h.carrier_frequency_hz.unwrap_or(5.9e9),
        )?,
    };

    Ok(ExperimentConfig {
        band: band_name,
        sub6,
        mmwave,
        ris_elements,
        seeds: seeds("seeds", raw.seeds, 0..20)?,
        output_dir: raw.output_dir.map(PathBuf::from),
        topology: TopologySpec { uav, ris, ues },
        channel,
        game,
        slice,
        utility_comparison,
        highway,
    })
}

/// Placement and channel seed of the slice campaigns.
pub const DEFAULT_SCENARIO_SEED: u64 = 0;

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let raw = RawConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| schema(e.message().to_string()))?;
    validate(raw)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
