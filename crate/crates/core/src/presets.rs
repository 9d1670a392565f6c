//! Preset campaigns. Each preset fans independent jobs out to the rayon pool,
//! collects results in job-key order and writes CSV files whose first lines
//! are `#` comments carrying the preset name and the generating seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::{
    average_channel, build_channel_set, ChannelParams, ChannelSet, Condition, LinkKind, LinkSpec,
    PathLossModel,
};
use crate::config::{BandName, ExperimentConfig};
use crate::error::{Error, Result};
use crate::game::{run_stackelberg, GameConfig, StackelbergOutcome, UtilityKind};
use crate::geometry::{euclidean_distance, time_of_arrival, Position3D, Topology};
use crate::slice::{self, default_slices, Campaign, KpmSummary, TraceWriter};
use crate::units::{linear_to_db, watts_to_dbm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Tables3And4,
    V2xHighway,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fig6,
        Preset::Fig7,
        Preset::Fig8,
        Preset::Fig9,
        Preset::Tables3And4,
        Preset::V2xHighway,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
            Preset::Fig9 => "fig9",
            Preset::Tables3And4 => "tables3and4",
            Preset::V2xHighway => "v2x_highway",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Game sweeps

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub band: BandName,
    pub ris_elements: usize,
    pub seed: u64,
    /// UE-RIS distances, by UE.
    pub distances: Vec<f64>,
    pub channels: ChannelSet,
    pub outcome: StackelbergOutcome,
}

impl SweepRun {
    pub fn path_gains_db(&self) -> Vec<f64> {
        self.outcome
            .gains
            .iter()
            .map(|&g| linear_to_db(g))
            .collect()
    }
}

/// Topology, channels and game for one (band, |M|, seed) job.
pub fn run_single(
    cfg: &ExperimentConfig,
    topology: &Topology,
    game: &GameConfig,
    seed: u64,
) -> Result<(ChannelSet, StackelbergOutcome)> {
    let channels = build_channel_set(topology, &cfg.channel, seed)?;
    let outcome = run_stackelberg(&channels, game, seed)?;
    Ok((channels, outcome))
}

/// Every (band, |M|, seed) combination, in that nesting order.
pub fn game_sweep(
    cfg: &ExperimentConfig,
    bands: &[BandName],
    elements: &[usize],
    seeds: &[u64],
) -> Result<Vec<SweepRun>> {
    let jobs: Vec<(BandName, usize, u64)> = bands
        .iter()
        .flat_map(|&b| {
            elements
                .iter()
                .flat_map(move |&m| seeds.iter().map(move |&s| (b, m, s)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(band, m, seed)| {
            let topology = cfg.topology(band, m, seed)?;
            let (channels, outcome) = run_single(cfg, &topology, &cfg.game, seed)?;
            Ok(SweepRun {
                band,
                ris_elements: m,
                seed,
                distances: topology
                    .ue_positions
                    .iter()
                    .map(|p| euclidean_distance(p, &topology.ris_ref))
                    .collect(),
                channels,
                outcome,
            })
        })
        .collect()
}

fn with_baseline(elements: &[usize]) -> Vec<usize> {
    let mut v = vec![0];
    v.extend(elements.iter().copied().filter(|&m| m != 0));
    v
}

// ---------------------------------------------------------------------------
// Utility comparison

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub ris_elements: usize,
    pub ue: usize,
    pub distance_m: f64,
    pub p_proposed_w: f64,
    pub p_literature_w: f64,
    /// W log2(1 + γ) / P for both equilibria, bits per joule.
    pub ee_proposed: f64,
    pub ee_literature: f64,
}

fn bits_per_joule(outcome: &StackelbergOutcome, bandwidth_hz: f64, ue: usize) -> f64 {
    bandwidth_hz * outcome.state.sinr[ue].ln_1p()
        / std::f64::consts::LN_2
        / outcome.state.powers[ue]
}

/// Proposed vs literature utility on the first `ues` UEs of the configured
/// layout, Sub-6 with the comparison bandwidth.
pub fn utility_comparison(cfg: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let uc = &cfg.utility_comparison;
    let mut band = cfg.band_config(BandName::Sub6);
    band.bandwidth_hz = uc.bandwidth_hz;
    let jobs: Vec<(usize, u64)> = uc
        .ris_elements
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let per_job = jobs
        .par_iter()
        .map(|&(m, seed)| {
            let mut ues = cfg.ue_positions(seed)?;
            ues.truncate(uc.ues);
            let topology = Topology::new(cfg.topology.uav, cfg.topology.ris, ues, m, band)?;
            let proposed = GameConfig {
                utility: UtilityKind::Proposed,
                ..cfg.game.clone()
            };
            let literature = GameConfig {
                utility: UtilityKind::Literature,
                ..cfg.game.clone()
            };
            let (_, a) = run_single(cfg, &topology, &proposed, seed)?;
            let (_, b) = run_single(cfg, &topology, &literature, seed)?;
            Ok((0..topology.num_ues())
                .map(|ue| ComparisonRow {
                    seed,
                    ris_elements: m,
                    ue,
                    distance_m: euclidean_distance(&topology.ue_positions[ue], &topology.ris_ref),
                    p_proposed_w: a.state.powers[ue],
                    p_literature_w: b.state.powers[ue],
                    ee_proposed: bits_per_joule(&a, band.bandwidth_hz, ue),
                    ee_literature: bits_per_joule(&b, band.bandwidth_hz, ue),
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Slice campaigns

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChannelMode {
    RisOff,
    RisOn(usize),
}

impl ChannelMode {
    pub fn label(self) -> String {
        match self {
            ChannelMode::RisOff => "ris_off".into(),
            ChannelMode::RisOn(m) => format!("ris_{m}"),
        }
    }
}

/// Downlink SNRs and slice layout inputs for the campaign scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceScenario {
    pub gains_off: Vec<f64>,
    pub gains_on: Vec<f64>,
    pub snr_off: Vec<f64>,
    pub snr_on: Vec<f64>,
}

impl SliceScenario {
    pub fn snr(&self, mode: ChannelMode) -> &[f64] {
        match mode {
            ChannelMode::RisOff => &self.snr_off,
            ChannelMode::RisOn(_) => &self.snr_on,
        }
    }
}

/// One placement and channel draw (the scenario seed), with and without the
/// RIS; RIS phases come from the game's leader step.
pub fn slice_scenario(cfg: &ExperimentConfig) -> Result<SliceScenario> {
    let s = &cfg.slice;
    let topology = cfg.topology(cfg.band, s.ris_elements, s.scenario_seed)?;
    let (channels, outcome) = run_single(cfg, &topology, &cfg.game, s.scenario_seed)?;
    let gains_off: Vec<f64> = channels.h_direct.iter().map(|h| h.norm_sqr()).collect();
    let gains_on = outcome.gains.clone();
    Ok(SliceScenario {
        snr_off: gains_off.iter().map(|&g| s.budget.snr(g)).collect(),
        snr_on: gains_on.iter().map(|&g| s.budget.snr(g)).collect(),
        gains_off,
        gains_on,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRow {
    pub setup: u8,
    pub mode: ChannelMode,
    pub seed: u64,
    pub kpm: KpmSummary,
}

pub fn campaign_for(
    cfg: &ExperimentConfig,
    scenario: &SliceScenario,
    setup: u8,
    mode: ChannelMode,
) -> Result<Campaign> {
    Ok(Campaign {
        slices: default_slices(&scenario.gains_off, setup)?,
        sinrs: scenario.snr(mode).to_vec(),
        traffic: cfg.slice.traffic,
    })
}

/// Setup × mode × traffic seed, in that nesting order.
pub fn slice_campaigns(
    cfg: &ExperimentConfig,
    scenario: &SliceScenario,
) -> Result<Vec<CampaignRow>> {
    let modes = [
        ChannelMode::RisOff,
        ChannelMode::RisOn(cfg.slice.ris_elements),
    ];
    let jobs: Vec<(u8, ChannelMode, u64)> = cfg
        .slice
        .setups
        .iter()
        .flat_map(|&st| {
            modes
                .iter()
                .flat_map(move |&m| cfg.slice.seeds.iter().map(move |&s| (st, m, s)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(setup, mode, seed)| {
            let c = campaign_for(cfg, scenario, setup, mode)?;
            Ok(CampaignRow {
                setup,
                mode,
                seed,
                kpm: slice::run_campaign(&c, cfg.slice.duration_ttis, seed)?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Highway trace

#[derive(Debug, Clone, PartialEq)]
pub struct HighwaySample {
    pub time_s: f64,
    pub distance_m: f64,
    pub toa_s: f64,
    /// Averaged over the configured realizations.
    pub path_gain_db: f64,
    /// One realization.
    pub path_gain_single_db: f64,
}

/// Two vehicles on adjacent lanes driving towards each other, each covering
/// `travel_m`; LOS link with log-distance path loss.
pub fn highway_trace(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<HighwaySample>> {
    let h = &cfg.highway;
    let v = h.speed_kmh / 3.6;
    let duration = h.travel_m / v;
    let steps = (duration / h.sample_interval_s + 1e-9).floor() as usize;
    let params = ChannelParams {
        los_model: PathLossModel::LogDistance {
            exponent: h.path_loss_exponent,
        },
        ..cfg.channel
    };
    (0..=steps)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 * h.sample_interval_s;
            let a = Position3D::new(v * t, 0.0, h.antenna_height_m);
            let b = Position3D::new(h.travel_m - v * t, h.lane_offset_m, h.antenna_height_m);
            let d = euclidean_distance(&a, &b);
            let link = LinkSpec::new(
                k as u64,
                LinkKind::Direct,
                Condition::Los,
                d,
                h.carrier_frequency_hz,
                &params,
            );
            let avg = average_channel(&link, params.n_paths, params.n_realizations, seed)?;
            let one = average_channel(&link, params.n_paths, 1, seed)?;
            Ok(HighwaySample {
                time_s: t,
                distance_m: d,
                toa_s: time_of_arrival(&a, &b),
                path_gain_db: linear_to_db(avg.norm_sqr()),
                path_gain_single_db: linear_to_db(one.norm_sqr()),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV output

fn f(x: f64) -> String {
    format!("{x:e}")
}

fn seed_list(seeds: &[u64]) -> String {
    seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

struct CsvFile {
    text: String,
}

impl CsvFile {
    fn new(preset: Preset, seeds: &[u64], extra: &[(&str, String)], header: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(
            text,
            "# preset={} generator={}",
            preset.name(),
            crate::scenario::GENERATOR
        );
        let _ = writeln!(text, "# seeds={}", seed_list(seeds));
        for (k, v) in extra {
            let _ = writeln!(text, "# {k}={v}");
        }
        let _ = writeln!(text, "{}", header.join(","));
        Self { text }
    }

    fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    fn write(self, dir: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, self.text).map_err(|e| Error::io(&path, e))?;
        out.push(path);
        Ok(())
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Runs a preset and writes its CSV files under `out_dir`, returning their paths.
pub fn run_preset(preset: Preset, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    match preset {
        Preset::Fig6 => {
            let elements = with_baseline(&cfg.ris_elements);
            let runs = game_sweep(cfg, &BandName::ALL, &elements, &cfg.seeds)?;
            let mut csv = CsvFile::new(
                preset,
                &cfg.seeds,
                &[],
                &[
                    "band",
                    "ris_elements",
                    "seed",
                    "ue",
                    "distance_m",
                    "power_dbm",
                    "utility",
                ],
            );
            for r in &runs {
                for ue in 0..r.distances.len() {
                    csv.row(&[
                        r.band.as_str().into(),
                        r.ris_elements.to_string(),
                        r.seed.to_string(),
                        ue.to_string(),
                        f(r.distances[ue]),
                        f(watts_to_dbm(r.outcome.state.powers[ue])),
                        f(r.outcome.state.utility[ue]),
                    ]);
                }
            }
            csv.write(out_dir, "fig6.csv", &mut written)?;
        }
        Preset::Fig7 => {
            let runs = game_sweep(cfg, &BandName::ALL, &cfg.ris_elements, &cfg.seeds)?;
            for band in BandName::ALL {
                let mut csv = CsvFile::new(
                    preset,
                    &cfg.seeds,
                    &[
                        ("band", band.as_str().into()),
                        ("aggregate", "median over seeds".into()),
                    ],
                    &[
                        "ris_elements",
                        "sum_power_w",
                        "sum_power_dbm",
                        "sum_utility",
                    ],
                );
                for &m in &cfg.ris_elements {
                    let sel: Vec<&SweepRun> = runs
                        .iter()
                        .filter(|r| r.band == band && r.ris_elements == m)
                        .collect();
                    let mut p: Vec<f64> = sel.iter().map(|r| r.outcome.sum_power()).collect();
                    let mut u: Vec<f64> = sel.iter().map(|r| r.outcome.sum_utility()).collect();
                    let p = slice::median(&mut p);
                    let u = slice::median(&mut u);
                    csv.row(&[m.to_string(), f(p), f(watts_to_dbm(p)), f(u)]);
                }
                csv.write(
                    out_dir,
                    &format!("fig7_{}.csv", band.as_str()),
                    &mut written,
                )?;
            }
        }
        Preset::Fig8 => {
            let elements = with_baseline(&cfg.ris_elements);
            let runs = game_sweep(cfg, &BandName::ALL, &elements, &cfg.seeds)?;
            let mut csv = CsvFile::new(
                preset,
                &cfg.seeds,
                &[("aggregate", "mean over seeds".into())],
                &[
                    "band",
                    "ris_elements",
                    "ue",
                    "distance_m",
                    "path_gain_db",
                    "improvement_db",
                ],
            );
            for band in BandName::ALL {
                for &m in &elements {
                    let sel: Vec<&SweepRun> = runs
                        .iter()
                        .filter(|r| r.band == band && r.ris_elements == m)
                        .collect();
                    let base: Vec<&SweepRun> = runs
                        .iter()
                        .filter(|r| r.band == band && r.ris_elements == 0)
                        .collect();
                    let n_ues = sel[0].distances.len();
                    for ue in 0..n_ues {
                        let pg = mean(sel.iter().map(|r| r.path_gains_db()[ue]));
                        let imp = mean(
                            sel.iter()
                                .zip(&base)
                                .map(|(r, b)| r.path_gains_db()[ue] - b.path_gains_db()[ue]),
                        );
                        csv.row(&[
                            band.as_str().into(),
                            m.to_string(),
                            ue.to_string(),
                            f(mean(sel.iter().map(|r| r.distances[ue]))),
                            f(pg),
                            f(imp),
                        ]);
                    }
                }
            }
            csv.write(out_dir, "fig8.csv", &mut written)?;
        }
        Preset::Fig9 => {
            let rows = utility_comparison(cfg)?;
            let mut csv = CsvFile::new(
                preset,
                &cfg.seeds,
                &[
                    ("band", "sub6".into()),
                    ("bandwidth_hz", f(cfg.utility_comparison.bandwidth_hz)),
                    (
                        "energy_efficiency",
                        "W log2(1+sinr)/P bits per joule".into(),
                    ),
                ],
                &[
                    "seed",
                    "ris_elements",
                    "ue",
                    "distance_m",
                    "p_proposed_dbm",
                    "p_literature_dbm",
                    "ee_proposed",
                    "ee_literature",
                ],
            );
            for r in &rows {
                csv.row(&[
                    r.seed.to_string(),
                    r.ris_elements.to_string(),
                    r.ue.to_string(),
                    f(r.distance_m),
                    f(watts_to_dbm(r.p_proposed_w)),
                    f(watts_to_dbm(r.p_literature_w)),
                    f(r.ee_proposed),
                    f(r.ee_literature),
                ]);
            }
            csv.write(out_dir, "fig9.csv", &mut written)?;
        }
        Preset::Tables3And4 => {
            let scenario = slice_scenario(cfg)?;
            let rows = slice_campaigns(cfg, &scenario)?;
            let s = &cfg.slice;
            let extra = [
                ("scenario_seed", s.scenario_seed.to_string()),
                ("duration_ttis", s.duration_ttis.to_string()),
                ("tx_power_per_prb_dbm", f(s.budget.tx_power_per_prb_dbm)),
                ("noise_per_prb_dbm", f(s.budget.noise_per_prb_dbm())),
            ];
            let mut csv = CsvFile::new(
                preset,
                &s.seeds,
                &extra,
                &[
                    "setup",
                    "embb_scheduler",
                    "urllc_scheduler",
                    "mode",
                    "seed",
                    "embb_throughput_mbps",
                    "urllc_buffer_bytes",
                ],
            );
            for r in &rows {
                let (e, u) = slice::setup_schedulers(r.setup)?;
                csv.row(&[
                    r.setup.to_string(),
                    e.label().into(),
                    u.label().into(),
                    r.mode.label(),
                    r.seed.to_string(),
                    f(r.kpm.embb_throughput_mbps),
                    f(r.kpm.urllc_buffer_bytes),
                ]);
            }
            csv.write(out_dir, "tables3and4.csv", &mut written)?;

            let mut summary = CsvFile::new(
                preset,
                &s.seeds,
                &[("aggregate", "median over seeds".into())],
                &[
                    "setup",
                    "mode",
                    "embb_throughput_mbps",
                    "urllc_buffer_bytes",
                ],
            );
            let mut keys: Vec<(u8, ChannelMode)> = rows.iter().map(|r| (r.setup, r.mode)).collect();
            keys.dedup();
            for (setup, mode) in keys {
                let sel: Vec<&CampaignRow> = rows
                    .iter()
                    .filter(|r| r.setup == setup && r.mode == mode)
                    .collect();
                let mut t: Vec<f64> = sel.iter().map(|r| r.kpm.embb_throughput_mbps).collect();
                let mut b: Vec<f64> = sel.iter().map(|r| r.kpm.urllc_buffer_bytes).collect();
                summary.row(&[
                    setup.to_string(),
                    mode.label(),
                    f(slice::median(&mut t)),
                    f(slice::median(&mut b)),
                ]);
            }
            summary.write(out_dir, "tables3and4_summary.csv", &mut written)?;

            let mut ues = CsvFile::new(
                preset,
                &s.seeds,
                &[("scenario_seed", s.scenario_seed.to_string())],
                &[
                    "ue",
                    "path_gain_off_db",
                    "path_gain_on_db",
                    "snr_off_db",
                    "snr_on_db",
                ],
            );
            for ue in 0..scenario.gains_off.len() {
                ues.row(&[
                    ue.to_string(),
                    f(linear_to_db(scenario.gains_off[ue])),
                    f(linear_to_db(scenario.gains_on[ue])),
                    f(linear_to_db(scenario.snr_off[ue])),
                    f(linear_to_db(scenario.snr_on[ue])),
                ]);
            }
            ues.write(out_dir, "tables3and4_links.csv", &mut written)?;

            if s.write_traces {
                let seed = s.seeds[0];
                for &setup in &s.setups {
                    for mode in [ChannelMode::RisOff, ChannelMode::RisOn(s.ris_elements)] {
                        let c = campaign_for(cfg, &scenario, setup, mode)?;
                        let path = out_dir.join(format!("trace_setup{setup}_{}.csv", mode.label()));
                        let mut buf = Vec::new();
                        let _ = writeln!(
                            &mut TextSink(&mut buf),
                            "# preset={} seeds={seed} setup={setup} mode={}",
                            preset.name(),
                            mode.label()
                        );
                        {
                            let mut w = TraceWriter::new(&mut buf, &c.slices, c.sinrs.len())?;
                            slice::run_campaign_with(&c, s.duration_ttis, seed, |r| w.write(r))?;
                            w.finish()?;
                        }
                        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
                        written.push(path);
                    }
                }
            }
        }
        Preset::V2xHighway => {
            let seed = cfg.seeds[0];
            let samples = highway_trace(cfg, seed)?;
            let h = &cfg.highway;
            let mut csv = CsvFile::new(
                preset,
                &[seed],
                &[
                    ("carrier_frequency_hz", f(h.carrier_frequency_hz)),
                    ("speed_kmh", f(h.speed_kmh)),
                    ("path_loss_exponent", f(h.path_loss_exponent)),
                    ("realizations", cfg.channel.n_realizations.to_string()),
                ],
                &[
                    "time_s",
                    "distance_m",
                    "toa_s",
                    "path_gain_db",
                    "path_gain_single_db",
                ],
            );
            for s in &samples {
                csv.row(&[
                    f(s.time_s),
                    f(s.distance_m),
                    f(s.toa_s),
                    f(s.path_gain_db),
                    f(s.path_gain_single_db),
                ]);
            }
            csv.write(out_dir, "v2x_highway.csv", &mut written)?;
        }
    }
    Ok(written)
}

/// `fmt::Write` adapter over a byte buffer.
struct TextSink<'a>(&'a mut Vec<u8>);

impl std::fmt::Write for TextSink<'_> {
    fn write_str(&mut self, s: &str) -> std::fmt::Result {
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}
