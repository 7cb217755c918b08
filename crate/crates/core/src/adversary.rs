//! Channel attacks and their detection statistics.

use std::fmt;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::{insert_decoys, measure_decoys, verify_decoys, ProtocolError};
use crate::qudit_state::{self, Basis, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    InterceptResend,
    MeasureResend,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::None => "none",
            AttackKind::InterceptResend => "intercept-resend",
            AttackKind::MeasureResend => "measure-resend",
        })
    }
}

/// An attack on the quantum channel. The attacker picks V1 or V2 uniformly
/// and independently for every qudit it touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackStrategy {
    pub kind: AttackKind,
}

impl AttackStrategy {
    pub const NONE: AttackStrategy = AttackStrategy {
        kind: AttackKind::None,
    };

    pub fn new(kind: AttackKind) -> Self {
        Self { kind }
    }

    pub fn is_active(&self) -> bool {
        self.kind != AttackKind::None
    }
}

fn draw_basis<R: Rng + ?Sized>(rng: &mut R) -> Basis {
    if rng.gen_bool(0.5) {
        Basis::V2
    } else {
        Basis::V1
    }
}

/// Runs the attack on qudit `qudit` of an in-flight register.
///
/// The attacker only ever sees the register; it has no access to what the
/// sender recorded about it.
pub fn apply_attack<R: Rng + ?Sized>(
    strategy: &AttackStrategy,
    state: &StateVector,
    qudit: usize,
    rng: &mut R,
) -> qudit_state::Result<StateVector> {
    match strategy.kind {
        AttackKind::None => Ok(state.clone()),
        AttackKind::InterceptResend => {
            let basis = draw_basis(rng);
            let (_, collapsed) = qudit_state::measure_single_qudit(state, qudit, basis, rng)?;
            Ok(collapsed)
        }
        AttackKind::MeasureResend => {
            let basis = draw_basis(rng);
            let (value, collapsed) = qudit_state::measure_single_qudit(state, qudit, basis, rng)?;
            // Discard the intercepted qudit and put a freshly prepared one in its slot.
            let eigen = qudit_state::make_eigenstate(state.d(), basis, value)?;
            let rest = collapsed.reduce(&[qudit], &eigen)?;
            let rebuilt = rest.tensor(&eigen)?;
            let last = state.qudits() - 1;
            let order: Vec<usize> = (0..state.qudits())
                .map(|p| match p.cmp(&qudit) {
                    std::cmp::Ordering::Less => p,
                    std::cmp::Ordering::Equal => last,
                    std::cmp::Ordering::Greater => p - 1,
                })
                .collect();
            rebuilt.permute(&order)
        }
    }
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    // The bounds are exactly 0 and 1 at the extremes; avoid rounding residue.
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionStats {
    pub decoys_checked: u64,
    pub mismatches: u64,
    pub rate: f64,
    pub wilson_interval: (f64, f64),
}

impl DetectionStats {
    pub fn from_counts(decoys_checked: u64, mismatches: u64) -> Self {
        let rate = if decoys_checked == 0 {
            0.0
        } else {
            mismatches as f64 / decoys_checked as f64
        };
        Self {
            decoys_checked,
            mismatches,
            rate,
            wilson_interval: wilson_interval(mismatches, decoys_checked),
        }
    }
}

/// Per-decoy detection probability of an intercept/measure-resend attacker
/// with a uniform basis guess: a wrong guess (probability 1/2) leaves the
/// receiver with a uniform result, wrong with probability (d−1)/d.
pub fn expected_detection_rate(d: usize, kind: AttackKind) -> f64 {
    match kind {
        AttackKind::None => 0.0,
        AttackKind::InterceptResend | AttackKind::MeasureResend => (d - 1) as f64 / (2 * d) as f64,
    }
}

/// Parameters of a detection-rate experiment.
#[derive(Debug, Clone, Copy)]
pub struct DetectionExperiment {
    pub d: usize,
    pub decoys_per_trial: usize,
    pub trials: u64,
    pub seed: u64,
}

fn run_trial(
    exp: &DetectionExperiment,
    strategy: &AttackStrategy,
    trial: u64,
) -> Result<(u64, u64), ProtocolError> {
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    rng.set_stream(trial);
    let (protected, record) =
        insert_decoys(Vec::<()>::new(), exp.decoys_per_trial, exp.d, &mut rng);
    let mut in_flight = Vec::with_capacity(record.decoys.len());
    for decoy in &record.decoys {
        let state = decoy.prepare(exp.d)?;
        in_flight.push(apply_attack(strategy, &state, 0, &mut rng)?);
    }
    debug_assert_eq!(protected.len(), record.decoys.len());
    let results = measure_decoys(&record, &in_flight, &mut rng)?;
    let check = verify_decoys(&record, &results)?;
    Ok((record.decoys.len() as u64, check.mismatches as u64))
}

/// Runs the decoy-check subprotocol `trials` times under `strategy`.
///
/// Trial t uses its own RNG stream, so the result doesn't depend on how
/// trials are split across worker threads.
pub fn estimate_detection_rate(
    exp: &DetectionExperiment,
    strategy: &AttackStrategy,
) -> Result<DetectionStats, ProtocolError> {
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(16) as u64;
    let chunk = exp.trials.div_ceil(workers.max(1)).max(1);
    let partials: Vec<Result<(u64, u64), ProtocolError>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..exp.trials)
            .step_by(chunk as usize)
            .map(|start| {
                let end = (start + chunk).min(exp.trials);
                scope.spawn(move || {
                    let mut acc = (0, 0);
                    for t in start..end {
                        let (checked, missed) = run_trial(exp, strategy, t)?;
                        acc.0 += checked;
                        acc.1 += missed;
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut checked = 0;
    let mut mismatches = 0;
    for p in partials {
        let (c, m) = p?;
        checked += c;
        mismatches += m;
    }
    Ok(DetectionStats::from_counts(checked, mismatches))
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    pub strategy: AttackKind,
    pub d: usize,
    pub trials: u64,
    pub decoys_checked: u64,
    pub rate: f64,
    pub interval: (f64, f64),
    pub expected: f64,
}

impl AttackReport {
    pub fn new(
        exp: &DetectionExperiment,
        strategy: &AttackStrategy,
        stats: &DetectionStats,
    ) -> Self {
        Self {
            strategy: strategy.kind,
            d: exp.d,
            trials: exp.trials,
            decoys_checked: stats.decoys_checked,
            rate: stats.rate,
            interval: stats.wilson_interval,
            expected: expected_detection_rate(exp.d, strategy.kind),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qudit_state::{
        fidelity_up_to_phase, make_eigenstate, single_qudit_probabilities, TOL,
    };

    #[test]
    fn no_attack_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = qudit_state::make_cat(3, &[1, 2, 0]).unwrap();
        let out = apply_attack(&AttackStrategy::NONE, &s, 1, &mut rng).unwrap();
        assert!((fidelity_up_to_phase(&s, &out).unwrap() - 1.0).abs() < TOL);
    }

    /// Exact per-decoy detection probability by enumerating the attacker's
    /// basis guess and its measurement outcome with Born weights.
    fn enumerated_detection(d: usize) -> f64 {
        let mut total = 0.0;
        for decoy_basis in [Basis::V1, Basis::V2] {
            for value in 0..d {
                let decoy = make_eigenstate(d, decoy_basis, value).unwrap();
                for guess in [Basis::V1, Basis::V2] {
                    let probs = single_qudit_probabilities(&decoy, 0, guess).unwrap();
                    for (seen, p_seen) in probs.iter().enumerate() {
                        let resent = make_eigenstate(d, guess, seen).unwrap();
                        let recv = single_qudit_probabilities(&resent, 0, decoy_basis).unwrap();
                        let wrong: f64 = 1.0 - recv[value];
                        // decoy basis 1/2, value 1/d, guess 1/2
                        total += 0.25 / d as f64 * p_seen * wrong;
                    }
                }
            }
        }
        total
    }

    #[test]
    fn enumeration_agrees_with_closed_form() {
        for d in [2, 3, 5, 7] {
            let exact = enumerated_detection(d);
            assert!(
                (exact - expected_detection_rate(d, AttackKind::InterceptResend)).abs() < 1e-12
            );
        }
        assert!((enumerated_detection(2) - 0.25).abs() < 1e-12);
        assert!((enumerated_detection(5) - 0.40).abs() < 1e-12);
    }

    #[test]
    fn guessing_the_right_basis_is_invisible() {
        // Decoy |k⟩ intercepted in V1: the resent state is |k⟩ itself.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let decoy = make_eigenstate(3, Basis::V1, 2).unwrap();
            let (_, collapsed) =
                qudit_state::measure_single_qudit(&decoy, 0, Basis::V1, &mut rng).unwrap();
            assert!((fidelity_up_to_phase(&decoy, &collapsed).unwrap() - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn wrong_basis_on_qubit_fails_half_the_time() {
        // F|k⟩ collapsed in V1 to |k''⟩, then checked in V2: |⟨Fk|k''⟩|² = 1/2.
        for k in 0..2 {
            for seen in 0..2 {
                let resent = make_eigenstate(2, Basis::V1, seen).unwrap();
                let p = single_qudit_probabilities(&resent, 0, Basis::V2).unwrap();
                assert!((p[k] - 0.5).abs() < TOL);
            }
        }
    }

    #[test]
    fn measure_resend_keeps_register_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = qudit_state::make_cat(3, &[0, 1, 2]).unwrap();
        let strategy = AttackStrategy::new(AttackKind::MeasureResend);
        for q in 0..3 {
            let out = apply_attack(&strategy, &s, q, &mut rng).unwrap();
            assert_eq!(out.qudits(), 3);
            assert!((out.norm_sqr() - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn detection_rate_converges() {
        for (d, target) in [(2usize, 0.25), (5, 0.40)] {
            let exp = DetectionExperiment {
                d,
                decoys_per_trial: 10,
                trials: 2_000,
                seed: 17,
            };
            let stats =
                estimate_detection_rate(&exp, &AttackStrategy::new(AttackKind::InterceptResend))
                    .unwrap();
            assert_eq!(stats.decoys_checked, 20_000);
            assert!(
                (stats.rate - target).abs() < 0.02,
                "d={d} rate={}",
                stats.rate
            );
            let (lo, hi) = stats.wilson_interval;
            assert!(lo <= stats.rate && stats.rate <= hi);
        }
    }

    #[test]
    fn no_attack_detects_nothing() {
        let exp = DetectionExperiment {
            d: 3,
            decoys_per_trial: 8,
            trials: 500,
            seed: 1,
        };
        let stats = estimate_detection_rate(&exp, &AttackStrategy::NONE).unwrap();
        assert_eq!(stats.mismatches, 0);
        assert_eq!(stats.rate, 0.0);
    }

    #[test]
    fn detection_experiment_is_deterministic() {
        let exp = DetectionExperiment {
            d: 3,
            decoys_per_trial: 4,
            trials: 300,
            seed: 99,
        };
        let s = AttackStrategy::new(AttackKind::MeasureResend);
        assert_eq!(
            estimate_detection_rate(&exp, &s).unwrap(),
            estimate_detection_rate(&exp, &s).unwrap()
        );
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(25_000, 100_000);
        assert!(lo < 0.25 && hi > 0.25 && hi - lo < 0.01);
    }
}
