//! RIS reflection state and cascaded-channel algebra.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseShiftVector {
    theta: Vec<f64>,
}

fn wrap(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl PhaseShiftVector {
    /// Wraps every entry into [0, 2π).
    pub fn new(theta: impl IntoIterator<Item = f64>) -> Self {
        Self {
            theta: theta.into_iter().map(wrap).collect(),
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            theta: vec![0.0; m],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn reflections(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.theta.iter().map(|&t| Complex64::from_polar(1.0, t))
    }
}

fn check_ue(channels: &ChannelSet, ue: usize) -> Result<()> {
    if ue >= channels.num_ues() {
        return Err(Error::IndexOutOfRange {
            index: ue,
            len: channels.num_ues(),
        });
    }
    Ok(())
}

fn check_phases(channels: &ChannelSet, phases: &PhaseShiftVector) -> Result<()> {
    channels.validate()?;
    if phases.len() != channels.ris_elements() {
        return Err(Error::DimensionMismatch {
            expected: channels.ris_elements(),
            found: phases.len(),
        });
    }
    Ok(())
}

/// b_im = conj(h_RU,m) h_iR,m, the per-element cascade coefficient of UE i.
fn cascade_coefficients(channels: &ChannelSet, ue: usize) -> Vec<Complex64> {
    channels
        .h_ris_uav
        .iter()
        .zip(&channels.h_ue_ris[ue])
        .map(|(ru, ir)| ru.conj() * ir)
        .collect()
}

/// RIS contribution h_RU^H Θ h_iR.
pub fn cascade(channels: &ChannelSet, phases: &PhaseShiftVector, ue: usize) -> Result<Complex64> {
    check_phases(channels, phases)?;
    check_ue(channels, ue)?;
    Ok(cascade_coefficients(channels, ue)
        .iter()
        .zip(phases.reflections())
        .map(|(b, e)| b * e)
        .sum())
}

pub fn effective_channel(
    channels: &ChannelSet,
    phases: &PhaseShiftVector,
    ue: usize,
) -> Result<Complex64> {
    Ok(channels.h_direct[ue] + cascade(channels, phases, ue)?)
}

/// G_i = |h_iU + h_RU^H Θ h_iR|² for every UE.
pub fn effective_gains(channels: &ChannelSet, phases: &PhaseShiftVector) -> Result<Vec<f64>> {
    check_phases(channels, phases)?;
    (0..channels.num_ues())
        .map(|i| Ok(effective_channel(channels, phases, i)?.norm_sqr()))
        .collect()
}

/// Phases that co-phase every reflected path of UE `ue` with its direct link:
/// θ_m = ∠h_iU − ∠h_iR,m + ∠h_RU,m.
pub fn closed_form_phases(channels: &ChannelSet, ue: usize) -> Result<PhaseShiftVector> {
    channels.validate()?;
    check_ue(channels, ue)?;
    let h = channels.h_direct[ue];
    if h.norm() == 0.0 {
        return Err(Error::ZeroDirectChannel(ue));
    }
    let target = h.arg();
    Ok(PhaseShiftVector::new(
        cascade_coefficients(channels, ue)
            .iter()
            .map(|b| target - b.arg()),
    ))
}

/// Sum of per-UE unit phasors of the single-UE solutions, one phase per
/// element: θ_m = ∠ Σ_i exp(j θ*_i,m). UEs with a zero direct channel are
/// skipped.
pub fn aligned_combination_phases(channels: &ChannelSet) -> Result<PhaseShiftVector> {
    channels.validate()?;
    let m = channels.ris_elements();
    let mut acc = vec![Complex64::new(0.0, 0.0); m];
    let mut any = false;
    for ue in 0..channels.num_ues() {
        match closed_form_phases(channels, ue) {
            Ok(p) => {
                any = true;
                for (a, e) in acc.iter_mut().zip(p.reflections()) {
                    *a += e;
                }
            }
            Err(Error::ZeroDirectChannel(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if !any {
        return Err(Error::NoActiveUsers);
    }
    Ok(PhaseShiftVector::new(acc.iter().map(|z| {
        if z.norm() > 0.0 {
            z.arg()
        } else {
            0.0
        }
    })))
}

/// Σ_i w_i G_i(θ).
pub fn weighted_objective(
    channels: &ChannelSet,
    weights: &[f64],
    phases: &PhaseShiftVector,
) -> Result<f64> {
    if weights.len() != channels.num_ues() {
        return Err(Error::DimensionMismatch {
            expected: channels.num_ues(),
            found: weights.len(),
        });
    }
    Ok(effective_gains(channels, phases)?
        .iter()
        .zip(weights)
        .map(|(g, w)| g * w)
        .sum())
}

pub const ASCENT_REL_TOL: f64 = 1e-10;
pub const ASCENT_MAX_SWEEPS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct AscentReport {
    pub phases: PhaseShiftVector,
    /// Objective after each single-element update, starting with the initial value.
    pub history: Vec<f64>,
    pub sweeps: usize,
}

impl AscentReport {
    pub fn objective(&self) -> f64 {
        *self
            .history
            .last()
            .expect("history holds the initial value")
    }
}

/// Element-wise coordinate ascent on Σ_i w_i G_i starting from `init`.
///
/// With every other phase fixed, the objective in θ_m is
/// const + 2 Re(conj(z_m) e^{jθ_m}) with z_m = Σ_i w_i r_i conj(b_im), where r_i
/// is UE i's total channel without element m; θ_m = ∠z_m is optimal.
pub fn coordinate_ascent(
    channels: &ChannelSet,
    weights: &[f64],
    init: &PhaseShiftVector,
) -> Result<AscentReport> {
    check_phases(channels, init)?;
    let n = channels.num_ues();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidGameConfig(
            "phase weights must be finite and >= 0".into(),
        ));
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::NoActiveUsers);
    }
    let active: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    let coeffs: Vec<Vec<Complex64>> = (0..n).map(|i| cascade_coefficients(channels, i)).collect();
    let mut theta = init.as_slice().to_vec();
    let m = theta.len();

    let totals_for = |theta: &[f64]| -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                channels.h_direct[i]
                    + coeffs[i]
                        .iter()
                        .zip(theta)
                        .map(|(b, &t)| b * Complex64::from_polar(1.0, t))
                        .sum::<Complex64>()
            })
            .collect()
    };
    let objective_of = |totals: &[Complex64]| -> f64 {
        active
            .iter()
            .map(|&i| weights[i] * totals[i].norm_sqr())
            .sum()
    };

    let mut totals = totals_for(&theta);
    let mut history = vec![objective_of(&totals)];
    let mut sweeps = 0;
    while sweeps < ASCENT_MAX_SWEEPS && m > 0 {
        sweeps += 1;
        let start = *history.last().unwrap();
        for k in 0..m {
            let old = Complex64::from_polar(1.0, theta[k]);
            let mut z = Complex64::new(0.0, 0.0);
            for &i in &active {
                let rest = totals[i] - coeffs[i][k] * old;
                z += weights[i] * rest * coeffs[i][k].conj();
            }
            if z.norm() == 0.0 {
                history.push(*history.last().unwrap());
                continue;
            }
            let new_theta = wrap(z.arg());
            let new = Complex64::from_polar(1.0, new_theta);
            for &i in &active {
                totals[i] += coeffs[i][k] * (new - old);
            }
            theta[k] = new_theta;
            history.push(objective_of(&totals));
        }
        // Re-anchor the running totals to stop rounding drift.
        totals = totals_for(&theta);
        let end = objective_of(&totals);
        *history.last_mut().unwrap() = end;
        if end - start <= ASCENT_REL_TOL * end.abs() {
            break;
        }
    }
    Ok(AscentReport {
        phases: PhaseShiftVector::new(theta),
        history,
        sweeps,
    })
}

/// Leader problem max_θ Σ_i P_i G_i(θ) by coordinate ascent, started from each
/// UE's closed-form solution and from their aligned combination; the best
/// final objective wins, ties to the earliest start.
pub fn optimize_phases_multi_ue(channels: &ChannelSet, powers: &[f64]) -> Result<PhaseShiftVector> {
    Ok(optimize_phases_multi_ue_report(channels, powers)?.phases)
}

pub fn optimize_phases_multi_ue_report(
    channels: &ChannelSet,
    powers: &[f64],
) -> Result<AscentReport> {
    channels.validate()?;
    if powers.len() != channels.num_ues() {
        return Err(Error::DimensionMismatch {
            expected: channels.num_ues(),
            found: powers.len(),
        });
    }
    if !powers.iter().any(|&p| p > 0.0) {
        return Err(Error::NoActiveUsers);
    }
    let mut starts = Vec::new();
    for ue in (0..channels.num_ues()).filter(|&i| powers[i] > 0.0) {
        match closed_form_phases(channels, ue) {
            Ok(p) => starts.push(p),
            Err(Error::ZeroDirectChannel(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if starts.len() > 1 {
        starts.push(aligned_combination_phases(channels)?);
    }
    if starts.is_empty() {
        starts.push(PhaseShiftVector::zeros(channels.ris_elements()));
    }
    let mut best: Option<AscentReport> = None;
    for s in &starts {
        let r = coordinate_ascent(channels, powers, s)?;
        if best.as_ref().is_none_or(|b| r.objective() > b.objective()) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BandConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn set(
        h_direct: Vec<Complex64>,
        h_ue_ris: Vec<Vec<Complex64>>,
        h_ris_uav: Vec<Complex64>,
    ) -> ChannelSet {
        ChannelSet {
            h_direct,
            h_ue_ris,
            h_ris_uav,
            band: BandConfig::sub6(),
        }
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ChannelSet {
        let mut cplx = |s: f64| c(rng.random_range(-s..s), rng.random_range(-s..s));
        let h_direct = (0..n).map(|_| cplx(1.0)).collect();
        let h_ue_ris = (0..n)
            .map(|_| (0..m).map(|_| cplx(0.3)).collect())
            .collect();
        let h_ris_uav = (0..m).map(|_| cplx(0.3)).collect();
        set(h_direct, h_ue_ris, h_ris_uav)
    }

    #[test]
    fn cascade_examples() {
        let cs = set(vec![c(1.0, 0.0)], vec![vec![]], vec![]);
        assert_eq!(
            cascade(&cs, &PhaseShiftVector::zeros(0), 0).unwrap(),
            c(0.0, 0.0)
        );

        let cs = set(
            vec![c(1.0, 0.0)],
            vec![vec![c(1.0, 0.0)]],
            vec![c(1.0, 0.0)],
        );
        let v = cascade(&cs, &PhaseShiftVector::new([FRAC_PI_2]), 0).unwrap();
        assert!((v - c(0.0, 1.0)).norm() < 1e-15);

        let cs = set(
            vec![c(1.0, 0.0)],
            vec![vec![c(1.0, 0.0), c(-1.0, 0.0)]],
            vec![c(1.0, 0.0), c(1.0, 0.0)],
        );
        let v = cascade(&cs, &PhaseShiftVector::new([0.0, PI]), 0).unwrap();
        assert!((v - c(2.0, 0.0)).norm() < 1e-15);

        assert!(matches!(
            cascade(&cs, &PhaseShiftVector::zeros(3), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn closed_form_examples() {
        let cs = set(
            vec![c(1.0, 0.0)],
            vec![vec![c(1.0, 0.0); 3]],
            vec![c(1.0, 0.0); 3],
        );
        assert_eq!(
            closed_form_phases(&cs, 0).unwrap().as_slice(),
            &[0.0, 0.0, 0.0]
        );

        let cs = set(
            vec![c(1.0, 0.0)],
            vec![vec![Complex64::from_polar(1.0, FRAC_PI_4)]],
            vec![c(1.0, 0.0)],
        );
        let p = closed_form_phases(&cs, 0).unwrap();
        assert!((p.as_slice()[0] - 7.0 * FRAC_PI_4).abs() < 1e-12);
        let g = effective_gains(&cs, &p).unwrap()[0];
        assert!((g.sqrt() - 2.0).abs() < 1e-12);

        // Grid oracle over θ_1.
        let n = 1_000_000;
        let best = (0..n)
            .map(|k| {
                let t = TAU * k as f64 / n as f64;
                effective_gains(&cs, &PhaseShiftVector::new([t])).unwrap()[0].sqrt()
            })
            .fold(0.0, f64::max);
        assert!((best - 2.0).abs() < 1e-6);

        let zero = set(
            vec![c(0.0, 0.0)],
            vec![vec![c(1.0, 0.0)]],
            vec![c(1.0, 0.0)],
        );
        assert!(matches!(
            closed_form_phases(&zero, 0),
            Err(Error::ZeroDirectChannel(0))
        ));
    }

    #[test]
    fn closed_form_dominates_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let cs = random_set(&mut rng, 1, 8);
            let g = effective_gains(&cs, &closed_form_phases(&cs, 0).unwrap()).unwrap()[0];
            for _ in 0..1000 {
                let p = PhaseShiftVector::new((0..8).map(|_| rng.random_range(0.0..TAU)));
                assert!(effective_gains(&cs, &p).unwrap()[0] <= g * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn gains_examples() {
        let cs = set(vec![c(3.0, 4.0)], vec![vec![]], vec![]);
        assert_eq!(
            effective_gains(&cs, &PhaseShiftVector::zeros(0)).unwrap(),
            vec![25.0]
        );
        let cs = set(
            vec![c(1.0, 0.0)],
            vec![vec![c(-1.0, 0.0)]],
            vec![c(1.0, 0.0)],
        );
        assert_eq!(
            effective_gains(&cs, &PhaseShiftVector::zeros(1)).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn single_ue_ascent_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in [1, 4, 32] {
            let cs = random_set(&mut rng, 1, m);
            let cf = effective_gains(&cs, &closed_form_phases(&cs, 0).unwrap()).unwrap()[0];
            let opt = optimize_phases_multi_ue(&cs, &[0.7]).unwrap();
            let g = effective_gains(&cs, &opt).unwrap()[0];
            assert!((g - cf).abs() <= 1e-9 * cf);
        }
    }

    #[test]
    fn zero_weight_users_drop_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cs = random_set(&mut rng, 5, 12);
        let opt = optimize_phases_multi_ue(&cs, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let cf = closed_form_phases(&cs, 0).unwrap();
        let a = effective_gains(&cs, &opt).unwrap()[0];
        let b = effective_gains(&cs, &cf).unwrap()[0];
        assert!((a - b).abs() <= 1e-9 * b);
        assert!(matches!(
            optimize_phases_multi_ue(&cs, &[0.0; 5]),
            Err(Error::NoActiveUsers)
        ));
    }

    #[test]
    fn mirrored_users_get_equal_gains() {
        // UE 1's direct and reflected channels are UE 0's rotated by a common
        // phase, so the two gains coincide for every θ.
        let h_ru = vec![c(1.0, 0.0), c(1.0, 0.0)];
        let rot = Complex64::from_polar(1.0, 2.1);
        let a = vec![
            Complex64::from_polar(1.0, 0.9),
            Complex64::from_polar(1.0, -0.4),
        ];
        let b: Vec<_> = a.iter().map(|z| z * rot).collect();
        let cs = set(vec![c(0.5, 0.0), c(0.5, 0.0) * rot], vec![a, b], h_ru);
        let opt = optimize_phases_multi_ue(&cs, &[1.0, 1.0]).unwrap();
        let g = effective_gains(&cs, &opt).unwrap();
        assert!((g[0] - g[1]).abs() <= 1e-9 * g[0].max(g[1]));
    }

    #[test]
    fn ascent_history_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cs = random_set(&mut rng, 5, 40);
        let w = [0.2, 0.1, 0.05, 0.15, 0.01];
        let r = coordinate_ascent(&cs, &w, &PhaseShiftVector::zeros(40)).unwrap();
        for pair in r.history.windows(2) {
            assert!(pair[1] >= pair[0] * (1.0 - 1e-12));
        }
        let best_single = (0..5)
            .map(|i| weighted_objective(&cs, &w, &closed_form_phases(&cs, i).unwrap()).unwrap())
            .fold(0.0, f64::max);
        let full = optimize_phases_multi_ue_report(&cs, &w).unwrap();
        assert!(full.objective() >= best_single * (1.0 - 1e-12));
    }

    #[test]
    fn combination_of_one_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cs = random_set(&mut rng, 1, 6);
        let a = aligned_combination_phases(&cs).unwrap();
        let b = closed_form_phases(&cs, 0).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            let d = (x - y).rem_euclid(TAU);
            assert!(d.min(TAU - d) < 1e-12);
        }
    }

    #[test]
    fn aligned_elements_grow_superlinearly() {
        let g: f64 = 0.1;
        let mut prev = None;
        for m in [10usize, 100, 1000] {
            let cs = set(
                vec![c(1.0, 0.0)],
                vec![vec![c(g.sqrt(), 0.0); m]],
                vec![c(g.sqrt(), 0.0); m],
            );
            let gain = effective_gains(&cs, &closed_form_phases(&cs, 0).unwrap()).unwrap()[0];
            let expected = (1.0 + m as f64 * g).powi(2);
            assert!((gain - expected).abs() <= 1e-9 * expected);
            if let Some(p) = prev {
                assert!(gain / p > 10.0);
            }
            prev = Some(gain);
        }
    }

    proptest! {
        #[test]
        fn gains_are_2pi_periodic(seed in any::<u64>(), k in 0usize..6, turns in -3i32..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cs = random_set(&mut rng, 3, 6);
            let raw: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..TAU)).collect();
            let mut shifted = raw.clone();
            shifted[k] += TAU * turns as f64;
            let a = effective_gains(&cs, &PhaseShiftVector::new(raw)).unwrap();
            let b = effective_gains(&cs, &PhaseShiftVector::new(shifted)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * x.max(1e-12));
            }
        }

        #[test]
        fn phases_are_normalised(raw in prop::collection::vec(-100.0..100.0f64, 0..20)) {
            let p = PhaseShiftVector::new(raw);
            prop_assert!(p.as_slice().iter().all(|t| (0.0..TAU).contains(t)));
        }
    }
}
