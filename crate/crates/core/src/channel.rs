//! GBSM-lite channel synthesis.
//!
//! Each link draws a set of multipath components, sums them coherently and
//! averages the complex result over independent realizations. LOS links are
//! Rician (deterministic direct ray plus scattered paths), NLOS links are
//! Rayleigh with an exponential power-delay profile. RIS links are then
//! multiplied by the array steering vector.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, BandConfig, Topology};
use crate::rng;
use crate::units::{db_to_linear, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathLossModel {
    /// Free-space loss at 1 m plus `10 n log10(d)`.
    LogDistance { exponent: f64 },
    /// 38.901 UMa LOS, pre-breakpoint branch.
    Uma38901Los,
    /// 38.901 UMa NLOS with a 1.5 m UT height.
    Uma38901Nlos,
}

pub fn path_loss_db(model: PathLossModel, d3d: f64, fc_hz: f64) -> Result<f64> {
    if !(d3d > 0.0) {
        return Err(Error::NonPositiveDistance(d3d));
    }
    if !(fc_hz > 0.0) {
        return Err(Error::InvalidTopology(format!(
            "carrier frequency must be positive, got {fc_hz}"
        )));
    }
    let fc_ghz = fc_hz / 1e9;
    let los = 28.0 + 22.0 * d3d.log10() + 20.0 * fc_ghz.log10();
    Ok(match model {
        PathLossModel::LogDistance { exponent } => {
            let fspl_1m = 20.0 * (4.0 * PI * fc_hz / SPEED_OF_LIGHT).log10();
            fspl_1m + 10.0 * exponent * d3d.log10()
        }
        PathLossModel::Uma38901Los => los,
        PathLossModel::Uma38901Nlos => {
            let nlos = 13.54 + 39.08 * d3d.log10() + 20.0 * fc_ghz.log10();
            los.max(nlos)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mpc {
    pub magnitude: f64,
    pub phase_rad: f64,
    pub delay_s: f64,
}

impl Mpc {
    pub fn gain(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase_rad)
    }
}

pub fn coherent_sum(mpcs: &[Mpc]) -> Result<Complex64> {
    if mpcs.is_empty() {
        return Err(Error::EmptyPathList);
    }
    Ok(mpcs.iter().map(Mpc::gain).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Direct,
    UeToRis,
    RisToUav,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Los,
    Nlos,
}

/// Statistical parameters shared by every link of a channel set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub los_model: PathLossModel,
    pub nlos_model: PathLossModel,
    /// Rician K-factor in dB; `f64::INFINITY` disables scattering on LOS links.
    pub k_factor_db: f64,
    pub rms_delay_spread_s: f64,
    pub n_paths: usize,
    pub n_realizations: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            los_model: PathLossModel::Uma38901Los,
            nlos_model: PathLossModel::Uma38901Nlos,
            k_factor_db: 9.0,
            rms_delay_spread_s: 100e-9,
            n_paths: 12,
            n_realizations: 100,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Schema("n_paths must be at least 1".into()));
        }
        if self.n_realizations == 0 {
            return Err(Error::Schema("realizations must be at least 1".into()));
        }
        if !(self.rms_delay_spread_s > 0.0 && self.rms_delay_spread_s.is_finite()) {
            return Err(Error::Schema("rms delay spread must be positive".into()));
        }
        // Keeps the direct ray dominant over any single scattered path.
        if !(self.k_factor_db >= 0.0) {
            return Err(Error::Schema("k_factor_db must be >= 0".into()));
        }
        Ok(())
    }
}

/// One propagation link between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    /// Stream coordinate; distinct per link of a channel set.
    pub link_id: u64,
    pub kind: LinkKind,
    pub condition: Condition,
    pub distance_m: f64,
    pub fc_hz: f64,
    pub path_loss: PathLossModel,
    pub k_factor_db: f64,
    pub rms_delay_spread_s: f64,
}

impl LinkSpec {
    pub fn new(
        link_id: u64,
        kind: LinkKind,
        condition: Condition,
        distance_m: f64,
        fc_hz: f64,
        params: &ChannelParams,
    ) -> Self {
        let path_loss = match condition {
            Condition::Los => params.los_model,
            Condition::Nlos => params.nlos_model,
        };
        Self {
            link_id,
            kind,
            condition,
            distance_m,
            fc_hz,
            path_loss,
            k_factor_db: params.k_factor_db,
            rms_delay_spread_s: params.rms_delay_spread_s,
        }
    }

    /// Mean received power implied by the path loss, linear.
    pub fn mean_power(&self) -> Result<f64> {
        Ok(db_to_linear(-path_loss_db(
            self.path_loss,
            self.distance_m,
            self.fc_hz,
        )?))
    }
}

/// Exponential power-delay profile: excess delays drawn from Exp(1/σ), powers
/// proportional to exp(-τ/σ) and normalised to `total_power`.
fn exponential_pdp<R: Rng>(
    rng: &mut R,
    count: usize,
    spread_s: f64,
    total_power: f64,
) -> Vec<(f64, f64)> {
    let exp = Exp::new(1.0 / spread_s).expect("spread is positive");
    let mut delays: Vec<f64> = (0..count).map(|_| exp.sample(rng)).collect();
    delays.sort_by(f64::total_cmp);
    let weights: Vec<f64> = delays.iter().map(|t| (-t / spread_s).exp()).collect();
    let sum: f64 = weights.iter().sum();
    delays
        .into_iter()
        .zip(weights)
        .map(|(t, w)| (t, total_power * w / sum))
        .collect()
}

pub fn generate_mpcs(link: &LinkSpec, seed: u64, n_paths: usize) -> Result<Vec<Mpc>> {
    if n_paths == 0 {
        return Err(Error::EmptyPathList);
    }
    let power = link.mean_power()?;
    let base_delay = link.distance_m / SPEED_OF_LIGHT;
    let mut rng = rng::stream(seed, &[]);
    let mut mpcs = Vec::with_capacity(n_paths);
    let scattered = match link.condition {
        Condition::Los => {
            let wavelength = SPEED_OF_LIGHT / link.fc_hz;
            mpcs.push(Mpc {
                magnitude: power.sqrt(),
                phase_rad: (TAU * link.distance_m / wavelength).rem_euclid(TAU),
                delay_s: base_delay,
            });
            (n_paths - 1, power / db_to_linear(link.k_factor_db))
        }
        Condition::Nlos => (n_paths, power),
    };
    let (count, scattered_power) = scattered;
    for (excess, p) in exponential_pdp(&mut rng, count, link.rms_delay_spread_s, scattered_power) {
        mpcs.push(Mpc {
            magnitude: p.sqrt(),
            phase_rad: rng.random_range(0.0..TAU),
            delay_s: base_delay + excess,
        });
    }
    Ok(mpcs)
}

pub fn average_channel(
    link: &LinkSpec,
    n_paths: usize,
    n_realizations: usize,
    seed: u64,
) -> Result<Complex64> {
    if n_realizations == 0 {
        return Err(Error::Schema("realizations must be at least 1".into()));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..n_realizations {
        let s = rng::derive_seed(seed, &[link.link_id, r as u64]);
        acc += coherent_sum(&generate_mpcs(link, s, n_paths)?)?;
    }
    Ok(acc / n_realizations as f64)
}

/// Entry m (0-based) is exp(-j 2π d m φ / λ).
pub fn steering_vector(
    m_count: usize,
    spacing_m: f64,
    wavelength_m: f64,
    cosine: f64,
) -> Vec<Complex64> {
    let k = TAU / wavelength_m * spacing_m * cosine;
    (0..m_count)
        .map(|m| Complex64::from_polar(1.0, -k * m as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// h_iU, one per UE.
    pub h_direct: Vec<Complex64>,
    /// h_iR, |M| entries per UE.
    pub h_ue_ris: Vec<Vec<Complex64>>,
    /// h_RU, |M| entries.
    pub h_ris_uav: Vec<Complex64>,
    pub band: BandConfig,
}

impl ChannelSet {
    pub fn num_ues(&self) -> usize {
        self.h_direct.len()
    }

    pub fn ris_elements(&self) -> usize {
        self.h_ris_uav.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.ris_elements();
        if self.h_ue_ris.len() != self.num_ues() {
            return Err(Error::DimensionMismatch {
                expected: self.num_ues(),
                found: self.h_ue_ris.len(),
            });
        }
        for row in &self.h_ue_ris {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: row.len(),
                });
            }
        }
        Ok(())
    }
}

const KIND_DIRECT: u64 = 1;
const KIND_UE_RIS: u64 = 2;
const KIND_RIS_UAV: u64 = 3;

fn link_id(kind: u64, index: usize) -> u64 {
    (kind << 32) | index as u64
}

/// Direct UE-UAV links are NLOS; UE-RIS and RIS-UAV links are LOS. The scalar
/// part of each RIS link does not depend on |M|, so channel sets built for
/// different element counts with the same seed share their direct channels
/// and per-link scalar gains.
pub fn build_channel_set(
    topology: &Topology,
    params: &ChannelParams,
    seed: u64,
) -> Result<ChannelSet> {
    topology.validate()?;
    params.validate()?;
    let band = topology.band;
    let fc = band.carrier_frequency_hz;
    let m = topology.ris_elements;
    let n_ues = topology.num_ues();

    let mut links = Vec::with_capacity(2 * n_ues + 1);
    for (i, ue) in topology.ue_positions.iter().enumerate() {
        let d = euclidean_distance(ue, &topology.uav);
        links.push(LinkSpec::new(
            link_id(KIND_DIRECT, i),
            LinkKind::Direct,
            Condition::Nlos,
            d,
            fc,
            params,
        ));
    }
    if m > 0 {
        for (i, ue) in topology.ue_positions.iter().enumerate() {
            let d = euclidean_distance(ue, &topology.ris_ref);
            links.push(LinkSpec::new(
                link_id(KIND_UE_RIS, i),
                LinkKind::UeToRis,
                Condition::Los,
                d,
                fc,
                params,
            ));
        }
        links.push(LinkSpec::new(
            link_id(KIND_RIS_UAV, 0),
            LinkKind::RisToUav,
            Condition::Los,
            topology.ris_uav_distance(),
            fc,
            params,
        ));
    }

    let scalars = links
        .par_iter()
        .map(|l| average_channel(l, params.n_paths, params.n_realizations, seed))
        .collect::<Result<Vec<_>>>()?;

    let h_direct = scalars[..n_ues].to_vec();
    let (h_ue_ris, h_ris_uav) = if m > 0 {
        let lambda = band.wavelength_m();
        let spacing = band.element_spacing_m;
        let h_ue_ris = (0..n_ues)
            .map(|i| {
                let phi = topology.ue_ris_cosine(i)?;
                let g = scalars[n_ues + i];
                Ok(steering_vector(m, spacing, lambda, phi)
                    .into_iter()
                    .map(|a| g * a)
                    .collect())
            })
            .collect::<Result<Vec<Vec<_>>>>()?;
        let phi_ru = topology.ris_uav_cosine()?;
        let g = scalars[2 * n_ues];
        let h_ris_uav = steering_vector(m, spacing, lambda, phi_ru)
            .into_iter()
            .map(|a| g * a)
            .collect();
        (h_ue_ris, h_ris_uav)
    } else {
        (vec![Vec::new(); n_ues], Vec::new())
    };

    Ok(ChannelSet {
        h_direct,
        h_ue_ris,
        h_ris_uav,
        band,
    })
}
