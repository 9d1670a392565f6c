//! Topology of the RIS-assisted cell and the purely geometric quantities
//! derived from it: distances, angle cosines, wavelengths and times of arrival.
//!
//! The RIS is modelled as a uniform linear array along the global +x axis,
//! with its reference (first) element at [`Topology::ris_ref`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::units::{dbm_to_watts, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn sub(&self, other: &Position3D) -> [f64; 3] {
        [self.x - other.x, self.y - other.y, self.z - other.z]
    }
}

impl From<[f64; 3]> for Position3D {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Array axis of the RIS ULA.
pub const RIS_AXIS: [f64; 3] = [1.0, 0.0, 0.0];

pub fn euclidean_distance(a: &Position3D, b: &Position3D) -> f64 {
    let d = a.sub(b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Cosine of the angle between `dst - src` and `array_axis` (assumed unit norm).
pub fn angle_cosine(src: &Position3D, dst: &Position3D, array_axis: [f64; 3]) -> Result<f64> {
    let d = dst.sub(src);
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroLengthVector);
    }
    let dot = d[0] * array_axis[0] + d[1] * array_axis[1] + d[2] * array_axis[2];
    Ok((dot / norm).clamp(-1.0, 1.0))
}

/// Line-of-sight propagation delay between two points, in seconds.
pub fn time_of_arrival(a: &Position3D, b: &Position3D) -> f64 {
    euclidean_distance(a, b) / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    /// Reference noise level I_0 added once to every UE's sensed interference.
    pub noise_ref_dbm: f64,
    pub element_spacing_m: f64,
}

impl BandConfig {
    /// Half-wavelength element spacing.
    pub fn new(carrier_frequency_hz: f64, bandwidth_hz: f64, noise_ref_dbm: f64) -> Result<Self> {
        if !(carrier_frequency_hz > 0.0 && carrier_frequency_hz.is_finite()) {
            return Err(Error::InvalidTopology(format!(
                "carrier frequency must be positive, got {carrier_frequency_hz}"
            )));
        }
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::InvalidTopology(format!(
                "bandwidth must be positive, got {bandwidth_hz}"
            )));
        }
        let spacing = SPEED_OF_LIGHT / carrier_frequency_hz / 2.0;
        Ok(Self {
            carrier_frequency_hz,
            bandwidth_hz,
            noise_ref_dbm,
            element_spacing_m: spacing,
        })
    }

    pub fn with_element_spacing(mut self, spacing_m: f64) -> Result<Self> {
        if !(spacing_m > 0.0 && spacing_m.is_finite()) {
            return Err(Error::InvalidTopology(format!(
                "element spacing must be positive, got {spacing_m}"
            )));
        }
        self.element_spacing_m = spacing_m;
        Ok(self)
    }

    /// 5.9 GHz, 10 MHz, I_0 = -140 dBm.
    pub fn sub6() -> Self {
        Self::new(5.9e9, 10e6, -140.0).expect("static band is valid")
    }

    /// 28 GHz, 10 MHz, I_0 = -160 dBm.
    pub fn mmwave() -> Self {
        Self::new(28e9, 10e6, -160.0).expect("static band is valid")
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn noise_ref_watts(&self) -> f64 {
        dbm_to_watts(self.noise_ref_dbm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub uav: Position3D,
    pub ris_ref: Position3D,
    pub ue_positions: Vec<Position3D>,
    /// Number of RIS elements; zero is the RIS-absent baseline.
    pub ris_elements: usize,
    pub band: BandConfig,
}

impl Topology {
    pub fn new(
        uav: Position3D,
        ris_ref: Position3D,
        ue_positions: Vec<Position3D>,
        ris_elements: usize,
        band: BandConfig,
    ) -> Result<Self> {
        let t = Self {
            uav,
            ris_ref,
            ue_positions,
            ris_elements,
            band,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ue_positions.is_empty() {
            return Err(Error::InvalidTopology("at least one UE is required".into()));
        }
        let mut nodes = vec![
            ("uav".to_string(), self.uav),
            ("ris".to_string(), self.ris_ref),
        ];
        nodes.extend(
            self.ue_positions
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("ue{i}"), *p)),
        );
        for (name, p) in &nodes {
            if !p.is_finite() {
                return Err(Error::InvalidTopology(format!(
                    "{name} has a non-finite coordinate"
                )));
            }
        }
        for (i, (na, pa)) in nodes.iter().enumerate() {
            for (nb, pb) in &nodes[i + 1..] {
                if euclidean_distance(pa, pb) == 0.0 {
                    return Err(Error::InvalidTopology(format!("{na} and {nb} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn with_ris_elements(&self, ris_elements: usize) -> Self {
        Self {
            ris_elements,
            ..self.clone()
        }
    }

    pub fn with_band(&self, band: BandConfig) -> Self {
        Self {
            band,
            ..self.clone()
        }
    }

    /// d_RU.
    pub fn ris_uav_distance(&self) -> f64 {
        euclidean_distance(&self.ris_ref, &self.uav)
    }

    /// φ_RU: cosine of the departure angle from the RIS towards the UAV.
    pub fn ris_uav_cosine(&self) -> Result<f64> {
        angle_cosine(&self.ris_ref, &self.uav, RIS_AXIS)
    }

    /// φ_iR: cosine of the arrival angle at the RIS from UE `ue`.
    pub fn ue_ris_cosine(&self, ue: usize) -> Result<f64> {
        angle_cosine(&self.ris_ref, &self.ue_positions[ue], RIS_AXIS)
    }
}

/// Places one UE per entry of `ris_distances` at a seeded-random azimuth around
/// the RIS reference point, at height `ue_height`, so that the 3-D UE-RIS
/// distance equals the requested value exactly.
pub fn place_ues_around_ris(
    ris_ref: &Position3D,
    ris_distances: &[f64],
    ue_height: f64,
    seed: u64,
) -> Result<Vec<Position3D>> {
    let dz = ris_ref.z - ue_height;
    let mut rng = rng::stream(seed, &[0x9E0_u64]);
    ris_distances
        .iter()
        .map(|&d| {
            if !(d.is_finite() && d > dz.abs()) {
                return Err(Error::InvalidTopology(format!(
                    "UE-RIS distance {d} m cannot be realised with a {} m height difference",
                    dz.abs()
                )));
            }
            let radius = (d * d - dz * dz).sqrt();
            let azimuth: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Ok(Position3D::new(
                ris_ref.x + radius * azimuth.cos(),
                ris_ref.y + radius * azimuth.sin(),
                ue_height,
            ))
        })
        .collect()
}

/// The evaluation cell: UAV at (25, 50, 25) m, RIS at (30, 40, 20) m, five UEs
/// at 20/27/37/58/66 m from the RIS.
pub mod reference {
    use super::Position3D;

    pub const UAV: Position3D = Position3D::new(25.0, 50.0, 25.0);
    pub const RIS: Position3D = Position3D::new(30.0, 40.0, 20.0);
    pub const UE_RIS_DISTANCES: [f64; 5] = [20.0, 27.0, 37.0, 58.0, 66.0];
    pub const UE_HEIGHT_M: f64 = 1.5;
}
