//! TTI-level downlink slice simulator: PRB-partitioned eMBB/URLLC slices,
//! round-robin and water-filling schedulers, CBR and Poisson sources.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::units::{db_to_linear, dbm_to_watts};

pub const PRB_BANDWIDTH_HZ: f64 = 180e3;
pub const TTI_S: f64 = 1e-3;
pub const LINK_EFFICIENCY: f64 = 0.75;
pub const MAX_SPECTRAL_EFFICIENCY: f64 = 6.0;
pub const TOTAL_PRBS: u32 = 50;
pub const EMBB_PRBS: u32 = 45;
pub const URLLC_PRBS: u32 = 5;

/// Servable bits in one PRB over one TTI.
pub fn link_rate_per_prb(sinr: f64) -> f64 {
    let se = (LINK_EFFICIENCY * sinr.max(0.0).log2_1p()).min(MAX_SPECTRAL_EFFICIENCY);
    PRB_BANDWIDTH_HZ * TTI_S * se
}

trait Log2p1 {
    fn log2_1p(self) -> f64;
}

impl Log2p1 for f64 {
    fn log2_1p(self) -> f64 {
        self.ln_1p() / std::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    Embb,
    Urllc,
}

impl SliceKind {
    pub fn label(self) -> &'static str {
        match self {
            SliceKind::Embb => "eMBB",
            SliceKind::Urllc => "URLLC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    RoundRobin,
    WaterFilling,
}

impl SchedulerKind {
    pub fn label(self) -> &'static str {
        match self {
            SchedulerKind::RoundRobin => "RR",
            SchedulerKind::WaterFilling => "WF",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    pub kind: SliceKind,
    pub prbs: u32,
    pub ue_ids: Vec<usize>,
    pub scheduler: SchedulerKind,
}

/// (eMBB, URLLC) schedulers of the four scheduling setups.
pub fn setup_schedulers(setup: u8) -> Result<(SchedulerKind, SchedulerKind)> {
    use SchedulerKind::*;
    Ok(match setup {
        1 => (RoundRobin, RoundRobin),
        2 => (RoundRobin, WaterFilling),
        3 => (WaterFilling, RoundRobin),
        4 => (WaterFilling, WaterFilling),
        other => {
            return Err(Error::Schema(format!(
                "scheduling setup must be 1..=4, got {other}"
            )))
        }
    })
}

/// Two strongest UEs (by `gains`) in a 45-PRB eMBB slice, the rest in a 5-PRB
/// URLLC slice. Ties go to the lower index.
pub fn default_slices(gains: &[f64], setup: u8) -> Result<Vec<SliceConfig>> {
    let (embb_s, urllc_s) = setup_schedulers(setup)?;
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let split = order.len().min(2);
    let mut embb = order[..split].to_vec();
    let mut urllc = order[split..].to_vec();
    embb.sort_unstable();
    urllc.sort_unstable();
    Ok(vec![
        SliceConfig {
            kind: SliceKind::Embb,
            prbs: EMBB_PRBS,
            ue_ids: embb,
            scheduler: embb_s,
        },
        SliceConfig {
            kind: SliceKind::Urllc,
            prbs: URLLC_PRBS,
            ue_ids: urllc,
            scheduler: urllc_s,
        },
    ])
}

/// A UE stays backlogged while its queue exceeds the bits already granted to
/// it in this TTI.
fn backlogged(queue_bytes: u64, granted_prbs: u32, rate: f64) -> bool {
    (queue_bytes as f64) * 8.0 > granted_prbs as f64 * rate
}

/// Round robin from a rotating pointer over the slice's UE list. Returns
/// PRB counts aligned with `slice.ue_ids`; `queues` and `rates` are indexed by
/// global UE id.
pub fn rr_allocate(
    slice: &SliceConfig,
    pointer: &mut usize,
    queues: &[u64],
    rates: &[f64],
) -> Vec<u32> {
    let n = slice.ue_ids.len();
    let mut grant = vec![0u32; n];
    if n == 0 {
        return grant;
    }
    *pointer %= n;
    for _ in 0..slice.prbs {
        let next = (0..n).map(|k| (*pointer + k) % n).find(|&k| {
            let ue = slice.ue_ids[k];
            backlogged(queues[ue], grant[k], rates[ue])
        });
        match next {
            Some(k) => {
                grant[k] += 1;
                *pointer = (k + 1) % n;
            }
            None => break,
        }
    }
    grant
}

/// Greedy water-filling: each PRB goes to the backlogged UE with the fewest
/// bits granted so far in this TTI, ties to the lower position.
pub fn wf_allocate(slice: &SliceConfig, queues: &[u64], rates: &[f64]) -> Vec<u32> {
    let n = slice.ue_ids.len();
    let mut grant = vec![0u32; n];
    for _ in 0..slice.prbs {
        let mut pick: Option<(usize, f64)> = None;
        for (k, &ue) in slice.ue_ids.iter().enumerate() {
            if !backlogged(queues[ue], grant[k], rates[ue]) {
                continue;
            }
            let bits = grant[k] as f64 * rates[ue];
            if pick.is_none_or(|(_, b)| bits < b) {
                pick = Some((k, bits));
            }
        }
        match pick {
            Some((k, _)) => grant[k] += 1,
            None => break,
        }
    }
    grant
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficSource {
    /// Constant bit rate; fractional bytes carry over between TTIs.
    Cbr { rate_bps: f64 },
    /// Poisson packet arrivals of fixed size with the given mean rate.
    Poisson { rate_bps: f64, packet_bytes: u64 },
}

impl TrafficSource {
    pub fn rate_bps(&self) -> f64 {
        match *self {
            TrafficSource::Cbr { rate_bps } | TrafficSource::Poisson { rate_bps, .. } => rate_bps,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rate_bps() > 0.0 && self.rate_bps().is_finite()) {
            return Err(Error::Schema("traffic rate must be positive".into()));
        }
        if let TrafficSource::Poisson {
            packet_bytes: 0, ..
        } = self
        {
            return Err(Error::Schema("packet size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtiRecord {
    pub tti: u64,
    /// Per-UE vectors, indexed by UE id.
    pub arrivals_bytes: Vec<u64>,
    pub served_bytes: Vec<u64>,
    pub queue_bytes: Vec<u64>,
    pub prbs: Vec<u32>,
    /// Per slice, in slice order.
    pub slice_throughput_bps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SliceSim {
    slices: Vec<SliceConfig>,
    slice_of: Vec<usize>,
    rates: Vec<f64>,
    traffic: Vec<TrafficSource>,
    queues: Vec<u64>,
    cbr_carry: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    rr_pointers: Vec<usize>,
    tti: u64,
}

const TRAFFIC_STREAM: u64 = 0x7AF;

impl SliceSim {
    /// `sinrs` and `traffic` are indexed by UE id; every UE belongs to exactly
    /// one slice.
    pub fn new(
        slices: Vec<SliceConfig>,
        sinrs: &[f64],
        traffic: Vec<TrafficSource>,
        seed: u64,
    ) -> Result<Self> {
        let n = sinrs.len();
        if traffic.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: traffic.len(),
            });
        }
        let quota: u32 = slices.iter().map(|s| s.prbs).sum();
        if quota > TOTAL_PRBS {
            return Err(Error::Schema(format!(
                "slice quotas sum to {quota} > {TOTAL_PRBS} PRBs"
            )));
        }
        let mut slice_of = vec![usize::MAX; n];
        for (s, cfg) in slices.iter().enumerate() {
            for &ue in &cfg.ue_ids {
                if ue >= n {
                    return Err(Error::IndexOutOfRange { index: ue, len: n });
                }
                if slice_of[ue] != usize::MAX {
                    return Err(Error::Schema(format!("UE {ue} is in more than one slice")));
                }
                slice_of[ue] = s;
            }
        }
        if let Some(ue) = slice_of.iter().position(|&s| s == usize::MAX) {
            return Err(Error::Schema(format!("UE {ue} is not in any slice")));
        }
        if sinrs.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Schema("SINR values must be >= 0".into()));
        }
        for t in &traffic {
            t.validate()?;
        }
        Ok(Self {
            rr_pointers: vec![0; slices.len()],
            slices,
            slice_of,
            rates: sinrs.iter().map(|&s| link_rate_per_prb(s)).collect(),
            traffic,
            queues: vec![0; n],
            cbr_carry: vec![0.0; n],
            rngs: (0..n)
                .map(|ue| rng::stream(seed, &[TRAFFIC_STREAM, ue as u64]))
                .collect(),
            tti: 0,
        })
    }

    pub fn slices(&self) -> &[SliceConfig] {
        &self.slices
    }

    pub fn slice_of(&self, ue: usize) -> &SliceConfig {
        &self.slices[self.slice_of[ue]]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn queues(&self) -> &[u64] {
        &self.queues
    }

    fn arrivals(&mut self, ue: usize) -> u64 {
        match self.traffic[ue] {
            TrafficSource::Cbr { rate_bps } => {
                let due = self.cbr_carry[ue] + rate_bps * TTI_S / 8.0;
                let whole = due.floor();
                self.cbr_carry[ue] = due - whole;
                whole as u64
            }
            TrafficSource::Poisson {
                rate_bps,
                packet_bytes,
            } => {
                let lambda = rate_bps * TTI_S / 8.0 / packet_bytes as f64;
                let k: f64 = Poisson::new(lambda)
                    .expect("positive rate")
                    .sample(&mut self.rngs[ue]);
                k as u64 * packet_bytes
            }
        }
    }

    /// Arrivals, per-slice allocation, then service of min(queue, capacity).
    pub fn step_tti(&mut self) -> TtiRecord {
        let n = self.queues.len();
        let arrivals: Vec<u64> = (0..n).map(|ue| self.arrivals(ue)).collect();
        for (q, a) in self.queues.iter_mut().zip(&arrivals) {
            *q += a;
        }
        let mut prbs = vec![0u32; n];
        for (s, slice) in self.slices.iter().enumerate() {
            let grant = match slice.scheduler {
                SchedulerKind::RoundRobin => {
                    rr_allocate(slice, &mut self.rr_pointers[s], &self.queues, &self.rates)
                }
                SchedulerKind::WaterFilling => wf_allocate(slice, &self.queues, &self.rates),
            };
            for (&ue, g) in slice.ue_ids.iter().zip(grant) {
                prbs[ue] = g;
            }
        }
        let mut served = vec![0u64; n];
        for ue in 0..n {
            let capacity = (prbs[ue] as f64 * self.rates[ue] / 8.0).floor() as u64;
            served[ue] = self.queues[ue].min(capacity);
            self.queues[ue] -= served[ue];
        }
        let slice_throughput_bps = self
            .slices
            .iter()
            .map(|s| {
                s.ue_ids
                    .iter()
                    .map(|&ue| served[ue] as f64 * 8.0 / TTI_S)
                    .sum()
            })
            .collect();
        let rec = TtiRecord {
            tti: self.tti,
            arrivals_bytes: arrivals,
            served_bytes: served,
            queue_bytes: self.queues.clone(),
            prbs,
            slice_throughput_bps,
        };
        self.tti += 1;
        rec
    }
}

/// Downlink SNR per PRB: transmit power per PRB over thermal noise in one PRB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlBudget {
    pub tx_power_per_prb_dbm: f64,
    pub noise_figure_db: f64,
}

impl Default for DlBudget {
    fn default() -> Self {
        Self {
            tx_power_per_prb_dbm: -2.0,
            noise_figure_db: 9.0,
        }
    }
}

impl DlBudget {
    pub fn noise_per_prb_dbm(&self) -> f64 {
        -174.0 + 10.0 * PRB_BANDWIDTH_HZ.log10() + self.noise_figure_db
    }

    pub fn snr(&self, gain: f64) -> f64 {
        dbm_to_watts(self.tx_power_per_prb_dbm) * gain / dbm_to_watts(self.noise_per_prb_dbm())
    }

    /// Link margin P_prb / N_prb in dB.
    pub fn margin_db(&self) -> f64 {
        self.tx_power_per_prb_dbm - self.noise_per_prb_dbm()
    }

    pub fn snr_from_db_gain(&self, gain_db: f64) -> f64 {
        db_to_linear(self.margin_db() + gain_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub embb_rate_bps: f64,
    pub urllc_rate_bps: f64,
    pub urllc_packet_bytes: u64,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        Self {
            embb_rate_bps: 4e6,
            urllc_rate_bps: 89.3e3,
            urllc_packet_bytes: 125,
        }
    }
}

impl TrafficProfile {
    pub fn sources(&self, slices: &[SliceConfig], n_ues: usize) -> Vec<TrafficSource> {
        let mut out = vec![
            TrafficSource::Cbr {
                rate_bps: self.embb_rate_bps
            };
            n_ues
        ];
        for s in slices.iter().filter(|s| s.kind == SliceKind::Urllc) {
            for &ue in &s.ue_ids {
                out[ue] = TrafficSource::Poisson {
                    rate_bps: self.urllc_rate_bps,
                    packet_bytes: self.urllc_packet_bytes,
                };
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpmSummary {
    /// Median over TTIs, then over the slice's UEs.
    pub embb_throughput_mbps: f64,
    pub urllc_buffer_bytes: f64,
    pub per_ue_throughput_mbps: Vec<f64>,
    pub per_ue_buffer_bytes: Vec<f64>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Campaign inputs: per-UE SINRs and the slice layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub slices: Vec<SliceConfig>,
    pub sinrs: Vec<f64>,
    pub traffic: TrafficProfile,
}

/// Runs `duration_ttis` TTIs and summarises the slice KPMs. `sink` receives
/// every record as it is produced.
pub fn run_campaign_with(
    campaign: &Campaign,
    duration_ttis: u64,
    seed: u64,
    mut sink: impl FnMut(&TtiRecord) -> Result<()>,
) -> Result<KpmSummary> {
    let n = campaign.sinrs.len();
    let sources = campaign.traffic.sources(&campaign.slices, n);
    let mut sim = SliceSim::new(campaign.slices.clone(), &campaign.sinrs, sources, seed)?;
    let mut tput: Vec<Vec<f64>> = vec![Vec::with_capacity(duration_ttis as usize); n];
    let mut buf: Vec<Vec<f64>> = vec![Vec::with_capacity(duration_ttis as usize); n];
    for _ in 0..duration_ttis {
        let rec = sim.step_tti();
        for ue in 0..n {
            tput[ue].push(rec.served_bytes[ue] as f64 * 8.0 / TTI_S / 1e6);
            buf[ue].push(rec.queue_bytes[ue] as f64);
        }
        sink(&rec)?;
    }
    let per_ue_throughput_mbps: Vec<f64> = tput.iter_mut().map(|v| median(v)).collect();
    let per_ue_buffer_bytes: Vec<f64> = buf.iter_mut().map(|v| median(v)).collect();
    let slice_median = |kind: SliceKind, per_ue: &[f64]| {
        let mut v: Vec<f64> = campaign
            .slices
            .iter()
            .filter(|s| s.kind == kind)
            .flat_map(|s| s.ue_ids.iter().map(|&ue| per_ue[ue]))
            .collect();
        median(&mut v)
    };
    Ok(KpmSummary {
        embb_throughput_mbps: slice_median(SliceKind::Embb, &per_ue_throughput_mbps),
        urllc_buffer_bytes: slice_median(SliceKind::Urllc, &per_ue_buffer_bytes),
        per_ue_throughput_mbps,
        per_ue_buffer_bytes,
    })
}

pub fn run_campaign(campaign: &Campaign, duration_ttis: u64, seed: u64) -> Result<KpmSummary> {
    run_campaign_with(campaign, duration_ttis, seed, |_| Ok(()))
}

/// Per-TTI trace writer with columns tti, ue_id, slice, queue_bytes, served_bytes.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    slice_labels: Vec<&'static str>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, slices: &[SliceConfig], n_ues: usize) -> Result<Self> {
        let mut labels = vec![""; n_ues];
        for s in slices {
            for &ue in &s.ue_ids {
                labels[ue] = s.kind.label();
            }
        }
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(["tti", "ue_id", "slice", "queue_bytes", "served_bytes"])?;
        Ok(Self {
            inner,
            slice_labels: labels,
        })
    }

    pub fn write(&mut self, rec: &TtiRecord) -> Result<()> {
        for ue in 0..rec.queue_bytes.len() {
            self.inner.write_record([
                rec.tti.to_string(),
                ue.to_string(),
                self.slice_labels[ue].to_string(),
                rec.queue_bytes[ue].to_string(),
                rec.served_bytes[ue].to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner
            .flush()
            .map_err(|e| Error::io("<slice trace>", e))
    }
}

/// Checks the three scheduler invariants on one record given the queues
/// before the TTI. Returns a description of the first violation.
pub fn check_record(
    sim_slices: &[SliceConfig],
    rates: &[f64],
    before: &[u64],
    rec: &TtiRecord,
) -> Option<String> {
    let mut quota = 0;
    for s in sim_slices {
        quota += s.prbs;
        let used: u32 = s.ue_ids.iter().map(|&ue| rec.prbs[ue]).sum();
        if used > s.prbs {
            return Some(format!(
                "tti {}: slice {:?} used {used} > {}",
                rec.tti, s.kind, s.prbs
            ));
        }
        if used < s.prbs {
            for &ue in &s.ue_ids {
                let q = before[ue] + rec.arrivals_bytes[ue];
                if backlogged(q, rec.prbs[ue], rates[ue]) {
                    return Some(format!(
                        "tti {}: idle PRB while UE {ue} backlogged",
                        rec.tti
                    ));
                }
            }
        }
    }
    if quota > TOTAL_PRBS {
        return Some(format!("slice quotas sum to {quota} > {TOTAL_PRBS}"));
    }
    for ue in 0..before.len() {
        if before[ue] + rec.arrivals_bytes[ue] != rec.queue_bytes[ue] + rec.served_bytes[ue] {
            return Some(format!(
                "tti {}: flow conservation broken for UE {ue}",
                rec.tti
            ));
        }
    }
    None
}

/// Random slice layouts, SINRs and loads for invariant sweeps.
pub fn random_instance<R: Rng>(rng: &mut R) -> (Vec<SliceConfig>, Vec<f64>, Vec<TrafficSource>) {
    let n = rng.random_range(1..=8usize);
    let split = rng.random_range(0..=n);
    let embb_prbs = rng.random_range(0..=TOTAL_PRBS);
    let sched = |r: &mut R| {
        if r.random_bool(0.5) {
            SchedulerKind::RoundRobin
        } else {
            SchedulerKind::WaterFilling
        }
    };
    let slices = vec![
        SliceConfig {
            kind: SliceKind::Embb,
            prbs: embb_prbs,
            ue_ids: (0..split).collect(),
            scheduler: sched(rng),
        },
        SliceConfig {
            kind: SliceKind::Urllc,
            prbs: TOTAL_PRBS - embb_prbs,
            ue_ids: (split..n).collect(),
            scheduler: sched(rng),
        },
    ];
    let sinrs = (0..n)
        .map(|_| db_to_linear(rng.random_range(-20.0..40.0)))
        .collect();
    let traffic = (0..n)
        .map(|_| {
            let rate = 10f64.powf(rng.random_range(4.0..7.5));
            if rng.random_bool(0.5) {
                TrafficSource::Cbr { rate_bps: rate }
            } else {
                TrafficSource::Poisson {
                    rate_bps: rate,
                    packet_bytes: rng.random_range(1..=1500),
                }
            }
        })
        .collect();
    (slices, sinrs, traffic)
}
