//! Certifies the symbolic swap rule against the dense oracle, branch by branch.

use serde::Serialize;

use crate::label_algebra::{swap, BellLabels, CatLabels, LabelError};
use crate::qudit_state::{self, fidelity_up_to_phase, RootsOfUnity, StateError, StateVector, TOL};

#[derive(Debug, thiserror::Error)]
pub enum EquivalenceError {
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Agreement between the symbolic and dense views of one branch.
#[derive(Debug, Clone, Serialize)]
pub struct BranchCheck {
    pub cat: Vec<usize>,
    pub bell: (usize, usize),
    pub position: usize,
    pub k: usize,
    pub l: usize,
    /// Fidelity of the oracle's collapsed state with the symbolic prediction.
    pub fidelity: f64,
    /// |⟨prediction|cat ⊗ Bell⟩ − ζ^{kl}/d|.
    pub amplitude_error: f64,
    /// Born probability of the measured labels, expected 1/d².
    pub probability: f64,
}

impl BranchCheck {
    pub fn matched(&self, d: usize) -> bool {
        self.fidelity >= 1.0 - TOL
            && self.amplitude_error < TOL
            && (self.probability - 1.0 / (d * d) as f64).abs() < TOL
    }
}

/// Joint register of a cat (qudits 0..n) followed by the Bell pair (s, s').
fn joint_state(cat: &CatLabels, bell: &BellLabels) -> Result<StateVector, StateError> {
    qudit_state::make_cat(cat.d(), &cat.labels())?
        .tensor(&qudit_state::make_bell(bell.d, bell.u, bell.v)?)
}

/// Builds the predicted branch state in the physical qudit order: new cat on
/// the cat slots with s' standing in at `position`, measured pair on (s, position).
fn predicted_state(
    new_cat: &CatLabels,
    measured: &BellLabels,
    position: usize,
) -> Result<StateVector, StateError> {
    let n = new_cat.n_particles();
    let built = qudit_state::make_cat(new_cat.d(), &new_cat.labels())?
        .tensor(&qudit_state::make_bell(measured.d, measured.u, measured.v)?)?;
    // `built` holds: new-cat slots 0..n (slot position-1 is physically s'),
    // then s at n and the measured cat particle at n + 1.
    let m = position - 1;
    let order: Vec<usize> = (0..n + 2)
        .map(|phys| match phys {
            p if p == m => n + 1,
            p if p == n => n,
            p if p == n + 1 => m,
            p => p,
        })
        .collect();
    built.permute(&order)
}

pub fn check_branch(
    cat: &CatLabels,
    bell: &BellLabels,
    position: usize,
    k: usize,
    l: usize,
) -> Result<BranchCheck, EquivalenceError> {
    let d = cat.d();
    let out = swap(cat, bell, position, k, l)?;
    let joint = joint_state(cat, bell)?;
    let s = cat.n_particles();
    let oracle = qudit_state::measure_bell_basis_forced(
        &joint,
        s,
        position - 1,
        out.measured.u,
        out.measured.v,
    )?;
    let predicted = predicted_state(&out.new_cat, &out.measured, position)?;
    let amplitude = predicted.inner(&joint)?;
    let expected = RootsOfUnity::new(d).pow((k * l) as i64) / d as f64;
    Ok(BranchCheck {
        cat: cat.labels(),
        bell: (bell.u, bell.v),
        position,
        k,
        l,
        fidelity: fidelity_up_to_phase(&oracle.post_state, &predicted)?,
        amplitude_error: (amplitude - expected).norm(),
        probability: oracle.probability,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub d: usize,
    pub n_particles: usize,
    pub branches: usize,
    pub matched: usize,
    pub worst_fidelity: f64,
    pub worst_amplitude_error: f64,
    pub mismatches: Vec<BranchCheck>,
}

impl EquivalenceReport {
    pub fn all_matched(&self) -> bool {
        self.matched == self.branches
    }
}

/// Every cat label tuple, Bell label pair, swap position and branch (k, l).
pub fn exhaustive_equivalence(
    d: usize,
    n_particles: usize,
) -> Result<EquivalenceReport, EquivalenceError> {
    let mut report = EquivalenceReport {
        d,
        n_particles,
        branches: 0,
        matched: 0,
        worst_fidelity: 1.0,
        worst_amplitude_error: 0.0,
        mismatches: Vec::new(),
    };
    let cat_count = d.pow(n_particles as u32);
    for idx in 0..cat_count {
        let labels: Vec<usize> = (0..n_particles)
            .map(|p| idx / d.pow((n_particles - 1 - p) as u32) % d)
            .collect();
        let cat = CatLabels::from_labels(d, &labels)?;
        for bu in 0..d {
            for bv in 0..d {
                let bell = BellLabels::new(d, bu, bv)?;
                for position in 2..=n_particles {
                    for k in 0..d {
                        for l in 0..d {
                            let check = check_branch(&cat, &bell, position, k, l)?;
                            report.branches += 1;
                            report.worst_fidelity = report.worst_fidelity.min(check.fidelity);
                            report.worst_amplitude_error =
                                report.worst_amplitude_error.max(check.amplitude_error);
                            if check.matched(d) {
                                report.matched += 1;
                            } else {
                                report.mismatches.push(check);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_branch_matches_oracle() {
        let cat = CatLabels::from_labels(3, &[0, 0, 0]).unwrap();
        let bell = BellLabels::new(3, 1, 1).unwrap();
        let check = check_branch(&cat, &bell, 2, 0, 0).unwrap();
        assert!(check.matched(3), "{check:?}");
    }

    #[test]
    fn a_wrong_rule_is_caught() {
        // Predict the phase label without the k shift and the oracle disagrees.
        let cat = CatLabels::from_labels(3, &[0, 1, 2]).unwrap();
        let bell = BellLabels::new(3, 2, 2).unwrap();
        let out = swap(&cat, &bell, 3, 1, 2).unwrap();
        let mut labels = out.new_cat.labels();
        labels[0] = cat.phase_label();
        let wrong = CatLabels::from_labels(3, &labels).unwrap();
        let joint = joint_state(&cat, &bell).unwrap();
        let oracle =
            qudit_state::measure_bell_basis_forced(&joint, 3, 2, out.measured.u, out.measured.v)
                .unwrap();
        let predicted = predicted_state(&wrong, &out.measured, 3).unwrap();
        assert!(fidelity_up_to_phase(&oracle.post_state, &predicted).unwrap() < 0.5);
    }

    #[test]
    fn small_exhaustive_run() {
        let report = exhaustive_equivalence(2, 3).unwrap();
        assert_eq!(report.branches, 256);
        assert!(report.all_matched());
    }
}
