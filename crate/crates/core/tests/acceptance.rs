//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits non-zero if any failed. Runtime budgets are part of the
//! pass condition and assume the optimized test profile.

use std::f64::consts::{PI, TAU};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ris_noma::channel::ChannelSet;
use ris_noma::config::{parse_config, BandName, ExperimentConfig};
use ris_noma::game::{gamma_star, nash_verify};
use ris_noma::geometry::{reference, BandConfig};
use ris_noma::presets::{
    game_sweep, run_preset, slice_campaigns, slice_scenario, utility_comparison, ChannelMode,
    Preset, SweepRun,
};
use ris_noma::ris::{closed_form_phases, optimize_phases_multi_ue};
use ris_noma::slice::{random_instance, SliceSim, TOTAL_PRBS};
use ris_noma::units::{dbm_to_watts, linear_to_db};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(budget: Duration, t: Instant) -> Result<(), String> {
    let e = t.elapsed();
    if e <= budget {
        Ok(())
    } else {
        Err(format!("runtime {e:.2?} over budget {budget:?}"))
    }
}

fn cplx(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    Complex64::from_polar(
        scale * rng.random_range(0.05..1.0),
        rng.random_range(0.0..TAU),
    )
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ChannelSet {
    let h_direct = (0..n).map(|_| cplx(rng, 1.0)).collect();
    let h_ue_ris = (0..n)
        .map(|_| (0..m).map(|_| cplx(rng, 0.5)).collect())
        .collect();
    let h_ris_uav = (0..m).map(|_| cplx(rng, 0.5)).collect();
    ChannelSet {
        h_direct,
        h_ue_ris,
        h_ris_uav,
        band: BandConfig::sub6(),
    }
}

fn wrap_pi(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

/// Σ_i w_i |h_iU + Σ_m conj(h_RU,m) h_iR,m e^{jθ_m}|², written out directly.
fn objective_oracle(cs: &ChannelSet, w: &[f64], theta: &[f64]) -> f64 {
    (0..cs.h_direct.len())
        .map(|i| {
            let mut h = cs.h_direct[i];
            for (m, t) in theta.iter().enumerate() {
                h += cs.h_ris_uav[m].conj() * cs.h_ue_ris[i][m] * Complex64::from_polar(1.0, *t);
            }
            w[i] * h.norm_sqr()
        })
        .sum()
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_phase, mut worst_mag) = (0.0f64, 0.0f64);
    for k in 0..1000 {
        let m = [1, 10, 100][k % 3];
        let cs = random_set(&mut rng, 1, m);
        let theta = closed_form_phases(&cs, 0).map_err(|e| e.to_string())?;
        let mut cascaded = Complex64::new(0.0, 0.0);
        let mut bound = cs.h_direct[0].norm();
        for (j, th) in theta.as_slice().iter().enumerate() {
            let b = cs.h_ris_uav[j].conj() * cs.h_ue_ris[0][j];
            cascaded += b * Complex64::from_polar(1.0, *th);
            bound += cs.h_ris_uav[j].norm() * cs.h_ue_ris[0][j].norm();
        }
        worst_phase = worst_phase.max(wrap_pi(cascaded.arg() - cs.h_direct[0].arg()).abs());
        worst_mag = worst_mag.max(((cs.h_direct[0] + cascaded).norm() - bound).abs() / bound);
    }
    within(Duration::from_secs(10), t)?;
    check(
        worst_phase <= 1e-9 && worst_mag <= 1e-9,
        format!("1000 instances, max phase error {worst_phase:.2e} rad, max |h| rel error {worst_mag:.2e}"),
    )
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let step = TAU / 360.0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_gap = 0.0f64;
    for k in 0..100 {
        let n = 1 + k % 3;
        let m = 1 + (k / 3) % 2;
        let cs = random_set(&mut rng, n, m);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let phases = if n == 1 {
            closed_form_phases(&cs, 0)
        } else {
            optimize_phases_multi_ue(&cs, &w)
        }
        .map_err(|e| e.to_string())?;
        let best = objective_oracle(&cs, &w, phases.as_slice());

        let mut grid_max = f64::NEG_INFINITY;
        let mut theta = vec![0.0; m];
        for a in 0..360usize.pow(m as u32) {
            theta[0] = (a % 360) as f64 * step;
            if m == 2 {
                theta[1] = (a / 360) as f64 * step;
            }
            grid_max = grid_max.max(objective_oracle(&cs, &w, &theta));
        }
        // Largest objective change over half a grid step in every coordinate.
        let resolution: f64 = (0..m)
            .map(|j| {
                (0..n)
                    .map(|i| {
                        let b = cs.h_ris_uav[j].norm() * cs.h_ue_ris[i][j].norm();
                        let total = cs.h_direct[i].norm()
                            + (0..m)
                                .map(|l| cs.h_ris_uav[l].norm() * cs.h_ue_ris[i][l].norm())
                                .sum::<f64>();
                        2.0 * w[i] * total * b
                    })
                    .sum::<f64>()
                    * step
                    / 2.0
            })
            .sum();
        worst_excess = worst_excess.max((grid_max - best) / resolution);
        worst_gap = worst_gap.max((best - grid_max) / resolution);
    }
    within(Duration::from_secs(60), t)?;
    check(
        worst_excess <= 1.0 && worst_gap <= 1.0,
        format!(
            "100 instances, grid excess ≤ {worst_excess:.3} and optimizer lead ≤ {worst_gap:.3} grid resolutions"
        ),
    )
}

/// Root of e^x = 1 + M x on x > 0 by Newton from the right of the root.
fn gamma_oracle(a: f64, m: f64) -> f64 {
    let mut x = 2.0 * m.ln() + 2.0;
    for _ in 0..200 {
        let f = x.exp() - 1.0 - m * x;
        let d = x.exp() - m;
        let next = x - f / d;
        if (next - x).abs() < 1e-15 * x {
            break;
        }
        x = next;
    }
    x / a
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let g = gamma_star(0.3, 3.0).map_err(|e| e.to_string())?;
    let oracle = gamma_oracle(0.3, 3.0);
    let mut worst_scale = 0.0f64;
    for m in [1.5, 3.0, 5.0, 10.0] {
        let base = gamma_star(1.0, m).map_err(|e| e.to_string())?;
        for a in [0.1, 0.3, 1.0, 3.0] {
            let ga = gamma_star(a, m).map_err(|e| e.to_string())?;
            worst_scale = worst_scale.max((ga - base / a).abs() / (base / a));
        }
    }
    within(Duration::from_secs(1), t)?;
    check(
        (g - oracle).abs() <= 1e-6 && worst_scale <= 1e-9,
        format!(
            "gamma*(0.3,3) = {g:.9}, oracle {oracle:.9}, worst scaling error {worst_scale:.1e}"
        ),
    )
}

fn reference_sweep(cfg: &ExperimentConfig, elements: &[usize]) -> Result<Vec<SweepRun>, String> {
    game_sweep(cfg, &BandName::ALL, elements, &cfg.seeds)
        .map_err(|e| format!("{} error: {e}", e.category()))
}

fn reference_defaults(cfg: &ExperimentConfig) -> Result<(), String> {
    let g = &cfg.game;
    let ok = cfg.seeds.len() == 20
        && cfg.sub6.bandwidth_hz == 10e6
        && cfg.mmwave.bandwidth_hz == 10e6
        && g.alpha == 0.3
        && g.m_exponent == 3.0
        && (g.p_max_watts - dbm_to_watts(23.0)).abs() < 1e-15
        && g.epsilon == 1e-4
        && cfg.topology.uav == reference::UAV
        && cfg.topology.ris == reference::RIS;
    if ok {
        Ok(())
    } else {
        Err("default configuration differs from the reference setup".into())
    }
}

fn criteria_4_and_5(cfg: &ExperimentConfig) -> (Verdict, Verdict) {
    let t = Instant::now();
    let runs = match reference_defaults(cfg).and_then(|_| reference_sweep(cfg, &[0, 10, 100, 1000]))
    {
        Ok(r) => r,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let mut nash_fail = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for r in &runs {
        match nash_verify(
            &r.outcome.state,
            &r.outcome.gains,
            &cfg.game,
            r.channels.band.bandwidth_hz,
            10_000,
        ) {
            Ok(rep) => {
                worst = rep
                    .entries
                    .iter()
                    .map(|e| e.relative_gain)
                    .fold(worst, f64::max);
                if !rep.passed() {
                    nash_fail.push(format!("{}/{}/{}", r.band.as_str(), r.ris_elements, r.seed));
                }
            }
            Err(e) => nash_fail.push(e.to_string()),
        }
    }
    let c4 = within(Duration::from_secs(300), t).and_then(|_| {
        check(
            nash_fail.is_empty(),
            format!(
                "{} runs, {} failing {:?}, worst relative grid gain {worst:.2e}",
                runs.len(),
                nash_fail.len(),
                nash_fail
            ),
        )
    });

    let mut max_rounds = 0;
    let mut bad = Vec::new();
    for r in &runs {
        let tr = &r.outcome.trace;
        max_rounds = max_rounds.max(tr.len());
        let tail = &tr[tr.len().saturating_sub(10)..];
        let monotone = tail.windows(2).all(|w| w[1].max_change <= w[0].max_change);
        let last_ok = tr.last().is_some_and(|x| x.max_change <= 1e-4);
        if !(r.outcome.converged && tr.len() < 1000 && monotone && last_ok) {
            bad.push(format!("{}/{}/{}", r.band.as_str(), r.ris_elements, r.seed));
        }
    }
    let c5 = check(
        bad.is_empty(),
        format!(
            "{} runs, max {max_rounds} rounds, {} non-monotone or unconverged {bad:?}",
            runs.len(),
            bad.len()
        ),
    );
    (c4, c5)
}

fn find(runs: &[SweepRun], band: BandName, m: usize, seed: u64) -> &SweepRun {
    runs.iter()
        .find(|r| r.band == band && r.ris_elements == m && r.seed == seed)
        .expect("sweep covers every combination")
}

fn criterion_6(cfg: &ExperimentConfig) -> Verdict {
    let t = Instant::now();
    let elements = [1, 10, 100, 1000];
    let runs = reference_sweep(cfg, &elements)?;
    let mut parts = Vec::new();
    let mut ok = true;
    for band in BandName::ALL {
        let good = cfg
            .seeds
            .iter()
            .filter(|&&s| {
                let p: Vec<f64> = elements
                    .iter()
                    .map(|&m| find(&runs, band, m, s).outcome.sum_power())
                    .collect();
                let u: Vec<f64> = elements
                    .iter()
                    .map(|&m| find(&runs, band, m, s).outcome.sum_utility())
                    .collect();
                p.windows(2).all(|w| w[1] <= w[0]) && u.windows(2).all(|w| w[1] >= w[0])
            })
            .count();
        ok &= good >= 18;
        parts.push(format!("{} {good}/20 seeds", band.as_str()));
    }
    within(Duration::from_secs(300), t)?;
    check(ok, parts.join(", "))
}

fn mean_improvement_db(runs: &[SweepRun], seeds: &[u64], band: BandName, m: usize) -> f64 {
    let mut acc = Vec::new();
    for &s in seeds {
        let on = find(runs, band, m, s);
        let off = find(runs, band, 0, s);
        for (a, b) in on.outcome.gains.iter().zip(&off.outcome.gains) {
            acc.push(linear_to_db(*a) - linear_to_db(*b));
        }
    }
    acc.iter().sum::<f64>() / acc.len() as f64
}

fn criterion_7(cfg: &ExperimentConfig) -> Verdict {
    let runs = reference_sweep(cfg, &[0, 10, 100, 1000])?;
    let s10 = mean_improvement_db(&runs, &cfg.seeds, BandName::Sub6, 10);
    let s100 = mean_improvement_db(&runs, &cfg.seeds, BandName::Sub6, 100);
    let w100 = mean_improvement_db(&runs, &cfg.seeds, BandName::Mmwave, 100);
    let w1000 = mean_improvement_db(&runs, &cfg.seeds, BandName::Mmwave, 1000);
    check(
        s100 - s10 >= 2.0 && w1000 - w100 >= 2.0,
        format!(
            "sub6 +{s10:.2} dB (10) -> +{s100:.2} dB (100); mmwave +{w100:.2} dB (100) -> +{w1000:.2} dB (1000)"
        ),
    )
}

fn criterion_8(cfg: &ExperimentConfig) -> Verdict {
    let rows = utility_comparison(cfg).map_err(|e| e.to_string())?;
    let mut good = 0;
    let mut lower = 0;
    for &s in &cfg.seeds {
        let sel: Vec<_> = rows.iter().filter(|r| r.seed == s).collect();
        if sel
            .iter()
            .all(|r| r.p_proposed_w <= r.p_literature_w && r.ee_proposed >= r.ee_literature)
        {
            good += 1;
        }
        lower += sel
            .iter()
            .filter(|r| r.p_proposed_w < r.p_literature_w)
            .count();
    }
    check(
        good >= 18,
        format!(
            "{good}/20 seeds with proposed power <= literature power and EE >= for every UE; \
             {lower}/{} UE-runs strictly lower",
            rows.len()
        ),
    )
}

fn criterion_9(cfg: &ExperimentConfig) -> Verdict {
    let t = Instant::now();
    let s = &cfg.slice;
    if s.duration_ttis != 10_000
        || s.seeds.len() != 5
        || s.setups != [1, 2, 3, 4]
        || s.ris_elements != 100
    {
        return Err(
            "default slice campaign differs from 4 setups x 10^4 TTIs x 5 seeds at 100 elements"
                .into(),
        );
    }
    let scenario = slice_scenario(cfg).map_err(|e| e.to_string())?;
    let rows = slice_campaigns(cfg, &scenario).map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    let (mut tmin, mut tmax, mut off_min) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for r in &rows {
        let k = &r.kpm;
        tmin = tmin.min(k.embb_throughput_mbps);
        tmax = tmax.max(k.embb_throughput_mbps);
        let buffer_ok = match r.mode {
            ChannelMode::RisOff => {
                off_min = off_min.min(k.urllc_buffer_bytes);
                k.urllc_buffer_bytes > 0.0
            }
            ChannelMode::RisOn(_) => k.urllc_buffer_bytes == 0.0,
        };
        if !(buffer_ok && (3.6..=4.4).contains(&k.embb_throughput_mbps)) {
            bad.push(format!(
                "setup{}/{}/seed{}",
                r.setup,
                r.mode.label(),
                r.seed
            ));
        }
    }
    within(Duration::from_secs(120), t)?;
    check(
        bad.is_empty() && rows.len() == 40,
        format!(
            "{} campaigns, eMBB {tmin:.3}..{tmax:.3} Mbps, ris_off URLLC buffer >= {off_min} B, ris_100 buffer 0 B; failing {bad:?}",
            rows.len()
        ),
    )
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let p = e.expect("dir entry").path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).expect("csv"),
            )
        })
        .collect();
    v.sort();
    v
}

fn criterion_10(cfg: &ExperimentConfig) -> Verdict {
    let mut cfg = cfg.clone();
    cfg.slice.write_traces = true;
    let mut files = 0;
    for p in Preset::ALL {
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_preset(p, &cfg, a.path()).map_err(|e| e.to_string())?;
        run_preset(p, &cfg, b.path()).map_err(|e| e.to_string())?;
        let (x, y) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
        if x != y || x.is_empty() {
            return Err(format!("preset {} differs between runs", p.name()));
        }
        files += x.len();
    }
    Ok(format!(
        "{} presets, {files} CSV files byte-identical across reruns",
        Preset::ALL.len()
    ))
}

fn criterion_11() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ttis = 0u64;
    let mut violations = Vec::new();
    for inst in 0..1000u64 {
        let (slices, sinrs, traffic) = random_instance(&mut rng);
        if slices.iter().map(|s| s.prbs).sum::<u32>() != TOTAL_PRBS {
            violations.push(format!(
                "instance {inst}: quotas do not sum to {TOTAL_PRBS}"
            ));
        }
        let mut sim =
            SliceSim::new(slices.clone(), &sinrs, traffic, inst).map_err(|e| e.to_string())?;
        let rates = sim.rates().to_vec();
        for _ in 0..1000 {
            let before = sim.queues().to_vec();
            let rec = sim.step_tti();
            ttis += 1;
            for s in &slices {
                let used: u32 = s.ue_ids.iter().map(|&u| rec.prbs[u]).sum();
                if used > s.prbs {
                    violations.push(format!(
                        "instance {inst} tti {}: {used} PRBs > quota {}",
                        rec.tti, s.prbs
                    ));
                }
                if used < s.prbs {
                    for &u in &s.ue_ids {
                        let offered_bits = (before[u] + rec.arrivals_bytes[u]) as f64 * 8.0;
                        if offered_bits > rec.prbs[u] as f64 * rates[u] {
                            violations.push(format!(
                                "instance {inst} tti {}: UE {u} backlogged with idle PRBs",
                                rec.tti
                            ));
                        }
                    }
                }
            }
            for u in 0..before.len() {
                if before[u] + rec.arrivals_bytes[u] != rec.queue_bytes[u] + rec.served_bytes[u] {
                    violations.push(format!(
                        "instance {inst} tti {}: flow conservation, UE {u}",
                        rec.tti
                    ));
                }
            }
            if violations.len() > 5 {
                return Err(violations.join("; "));
            }
        }
    }
    check(
        violations.is_empty(),
        format!("{ttis} randomized TTIs, {} violations", violations.len()),
    )
}

fn run(name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let t = Instant::now();
    let verdict = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let (tag, detail, ok) = match verdict {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag} {name} [{:.2?}]: {detail}", t.elapsed());
    ok
}

fn main() -> ExitCode {
    let cfg = parse_config("").expect("defaults parse");
    let mut results = Vec::new();
    results.push(run("criterion 1 phase alignment", criterion_1));
    results.push(run("criterion 2 brute-force dominance", criterion_2));
    results.push(run("criterion 3 gamma* oracle and scaling", criterion_3));
    let mut c5 = None;
    results.push(run("criterion 4 Nash verification", || {
        let (c4, v) = criteria_4_and_5(&cfg);
        c5 = Some(v);
        c4
    }));
    results.push(run("criterion 5 convergence", || {
        c5.unwrap_or_else(|| Err("criterion 4 sweep did not complete".into()))
    }));
    results.push(run("criterion 6 sum power and utility trend", || {
        criterion_6(&cfg)
    }));
    results.push(run("criterion 7 path-gain improvement", || {
        criterion_7(&cfg)
    }));
    results.push(run("criterion 8 proposed vs literature utility", || {
        criterion_8(&cfg)
    }));
    results.push(run("criterion 9 slice KPMs", || criterion_9(&cfg)));
    results.push(run("criterion 10 preset determinism", || {
        criterion_10(&cfg)
    }));
    results.push(run("criterion 11 scheduler invariants", criterion_11));
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
