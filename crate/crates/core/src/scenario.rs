//! Emulator scenario files: one complex FIR tap and one ToA per node pair.
//!
//! Format (UTF-8 text, version 1):
//!
//! ```text
//! # ris-noma scenario
//! format_version = 1
//! generator = ris-noma-core 0.1.0
//! band = sub6
//! carrier_frequency_hz = 5.9000000000000000e9
//! seed = 7
//! ris_elements = 100
//! pairs = 21
//! pair_id,node_a,node_b,re,im,toa_s
//! 0,uav,ris,...
//! ```
//!
//! Nodes are `uav`, `ris` (only when the RIS has elements) and `ue0`, `ue1`, ...
//! Every unordered pair appears once. The `uav`-`ueN` tap is the effective
//! uplink channel with the RIS folded in; `ris`-`uav` and `ris`-`ueN` carry the
//! reference-element channel; `ueA`-`ueB` is an NLOS link drawn with the same
//! statistics as the direct links. Numbers use 17 significant digits, so a
//! write/read cycle is lossless.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::channel::{average_channel, ChannelParams, ChannelSet, Condition, LinkKind, LinkSpec};
use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, time_of_arrival, Position3D, Topology};
use crate::ris::{effective_channel, PhaseShiftVector};

pub const FORMAT_VERSION: u32 = 1;
pub const GENERATOR: &str = concat!("ris-noma-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub pair_id: usize,
    pub node_a: String,
    pub node_b: String,
    pub re: f64,
    pub im: f64,
    pub toa_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub generator: String,
    pub band: String,
    pub carrier_frequency_hz: f64,
    pub seed: u64,
    pub ris_elements: usize,
    pub pairs: Vec<PairRecord>,
}

const KIND_UE_UE: u64 = 4;

fn nodes(topology: &Topology) -> Vec<(String, Position3D)> {
    let mut v = vec![("uav".to_string(), topology.uav)];
    if topology.ris_elements > 0 {
        v.push(("ris".to_string(), topology.ris_ref));
    }
    v.extend(
        topology
            .ue_positions
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("ue{i}"), *p)),
    );
    v
}

fn ue_index(name: &str) -> Option<usize> {
    name.strip_prefix("ue").and_then(|s| s.parse().ok())
}

/// Builds the in-memory scenario. `params` and `seed` are those used for
/// `channels`; they also seed the UE-UE links.
pub fn build_scenario(
    topology: &Topology,
    channels: &ChannelSet,
    phases: &PhaseShiftVector,
    params: &ChannelParams,
    band: &str,
    seed: u64,
) -> Result<ScenarioFile> {
    topology.validate()?;
    channels.validate()?;
    if channels.num_ues() != topology.num_ues() {
        return Err(Error::DimensionMismatch {
            expected: topology.num_ues(),
            found: channels.num_ues(),
        });
    }
    if channels.ris_elements() != topology.ris_elements || phases.len() != topology.ris_elements {
        return Err(Error::DimensionMismatch {
            expected: topology.ris_elements,
            found: channels.ris_elements().max(phases.len()),
        });
    }
    let list = nodes(topology);
    let mut pairs = Vec::new();
    for a in 0..list.len() {
        for b in a + 1..list.len() {
            let (na, pa) = &list[a];
            let (nb, pb) = &list[b];
            let tap: Complex64 = match (na.as_str(), ue_index(na), ue_index(nb)) {
                ("uav", _, Some(i)) => effective_channel(channels, phases, i)?,
                ("uav", _, None) => channels.h_ris_uav[0],
                ("ris", _, Some(i)) => channels.h_ue_ris[i][0],
                (_, Some(i), Some(j)) => {
                    let id = (KIND_UE_UE << 32) | ((i as u64) << 16) | j as u64;
                    let link = LinkSpec::new(
                        id,
                        LinkKind::Direct,
                        Condition::Nlos,
                        euclidean_distance(pa, pb),
                        topology.band.carrier_frequency_hz,
                        params,
                    );
                    average_channel(&link, params.n_paths, params.n_realizations, seed)?
                }
                _ => unreachable!("node list is uav, ris, ue..."),
            };
            pairs.push(PairRecord {
                pair_id: pairs.len(),
                node_a: na.clone(),
                node_b: nb.clone(),
                re: tap.re,
                im: tap.im,
                toa_s: time_of_arrival(pa, pb),
            });
        }
    }
    Ok(ScenarioFile {
        format_version: FORMAT_VERSION,
        generator: GENERATOR.to_string(),
        band: band.to_string(),
        carrier_frequency_hz: topology.band.carrier_frequency_hz,
        seed,
        ris_elements: topology.ris_elements,
        pairs,
    })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl ScenarioFile {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# ris-noma scenario");
        let _ = writeln!(s, "format_version = {}", self.format_version);
        let _ = writeln!(s, "generator = {}", self.generator);
        let _ = writeln!(s, "band = {}", self.band);
        let _ = writeln!(
            s,
            "carrier_frequency_hz = {}",
            num(self.carrier_frequency_hz)
        );
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "ris_elements = {}", self.ris_elements);
        let _ = writeln!(s, "pairs = {}", self.pairs.len());
        let _ = writeln!(s, "pair_id,node_a,node_b,re,im,toa_s");
        for p in &self.pairs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                p.pair_id,
                p.node_a,
                p.node_b,
                num(p.re),
                num(p.im),
                num(p.toa_s)
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
        let perr = |line: usize, message: String| Error::Parse {
            line: line + 1,
            column: 1,
            message,
        };
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, l) = lines
                .next()
                .ok_or_else(|| perr(0, format!("missing `{key}`")))?;
            let (k, v) = l
                .split_once(" = ")
                .ok_or_else(|| perr(n, format!("expected `{key} = ...`")))?;
            if k != key {
                return Err(perr(n, format!("expected `{key}`, found `{k}`")));
            }
            Ok((n, v.to_string()))
        };
        fn parsed<T: std::str::FromStr>(n: usize, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Parse {
                line: n + 1,
                column: 1,
                message: format!("cannot parse `{v}`"),
            })
        }
        let (n, v) = header("format_version")?;
        let format_version: u32 = parsed(n, &v)?;
        if format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported scenario format version {format_version}"
            )));
        }
        let (_, generator) = header("generator")?;
        let (_, band) = header("band")?;
        let (n, v) = header("carrier_frequency_hz")?;
        let carrier_frequency_hz = parsed(n, &v)?;
        let (n, v) = header("seed")?;
        let seed = parsed(n, &v)?;
        let (n, v) = header("ris_elements")?;
        let ris_elements = parsed(n, &v)?;
        let (n, v) = header("pairs")?;
        let count: usize = parsed(n, &v)?;
        let (n, cols) = lines
            .next()
            .ok_or_else(|| perr(n, "missing column header".into()))?;
        if cols != "pair_id,node_a,node_b,re,im,toa_s" {
            return Err(perr(n, "unexpected column header".into()));
        }
        let mut pairs = Vec::with_capacity(count);
        for (n, l) in lines {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(perr(n, format!("expected 6 fields, found {}", f.len())));
            }
            let rec = PairRecord {
                pair_id: parsed(n, f[0])?,
                node_a: f[1].to_string(),
                node_b: f[2].to_string(),
                re: parsed(n, f[3])?,
                im: parsed(n, f[4])?,
                toa_s: parsed(n, f[5])?,
            };
            if !(rec.re.is_finite() && rec.im.is_finite() && rec.toa_s >= 0.0) {
                return Err(Error::Schema(format!(
                    "pair {}: non-finite tap or negative ToA",
                    rec.pair_id
                )));
            }
            pairs.push(rec);
        }
        if pairs.len() != count {
            return Err(Error::Schema(format!(
                "header announces {count} pairs, found {}",
                pairs.len()
            )));
        }
        Ok(Self {
            format_version,
            generator,
            band,
            carrier_frequency_hz,
            seed,
            ris_elements,
            pairs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn export_scenario(scenario: &ScenarioFile, path: &Path) -> Result<()> {
    scenario.write(path)
}

pub fn import_scenario(path: &Path) -> Result<ScenarioFile> {
    ScenarioFile::read(path)
}
