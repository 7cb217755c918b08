//! Symbolic engine: cat and Bell states named by their Z_d labels.
//!
//! A swap between a cat state and a Bell state never leaves the family of
//! cat ⊗ Bell states, so the whole protocol can be tracked on label tuples
//! in O(1) per swap. Particle positions are 1-based as in the label tuple
//! (u_1, u_2, …, u_n); position 1 carries the phase label and can't be swapped.

use rand::Rng;
use thiserror::Error;

use crate::qudit_state::pick_index;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("label {label} out of range for d = {d}")]
    LabelOutOfRange { label: usize, d: usize },
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("a cat state needs at least 2 particles, got {0}")]
    TooFewParticles(usize),
    #[error("swap position {position} invalid for a {n_particles}-particle cat (allowed 2..={n_particles})")]
    InvalidPosition { position: usize, n_particles: usize },
    #[error("dimension mismatch: cat d = {cat}, Bell d = {bell}")]
    DimensionMismatch { cat: usize, bell: usize },
    #[error("position {0} swapped twice")]
    RepeatedPosition(usize),
    #[error("expected {expected} forced outcomes, got {got}")]
    OutcomeCount { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, LabelError>;

pub fn add_mod(a: usize, b: usize, d: usize) -> usize {
    (a + b) % d
}

pub fn sub_mod(a: usize, b: usize, d: usize) -> usize {
    (a + d - b % d) % d
}

fn check_label(label: usize, d: usize) -> Result<()> {
    if label >= d {
        return Err(LabelError::LabelOutOfRange { label, d });
    }
    Ok(())
}

/// Cat state |Ψ(u_1, u_2, …, u_n)⟩ by labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CatLabels {
    d: usize,
    phase: usize,
    offsets: Vec<usize>,
}

impl CatLabels {
    pub fn new(d: usize, phase: usize, offsets: Vec<usize>) -> Result<Self> {
        if d < 2 {
            return Err(LabelError::InvalidDimension(d));
        }
        if offsets.is_empty() {
            return Err(LabelError::TooFewParticles(offsets.len() + 1));
        }
        check_label(phase, d)?;
        for &u in &offsets {
            check_label(u, d)?;
        }
        Ok(Self { d, phase, offsets })
    }

    /// Builds from the full tuple (u_1, …, u_n).
    pub fn from_labels(d: usize, labels: &[usize]) -> Result<Self> {
        match labels.split_first() {
            Some((&phase, rest)) => Self::new(d, phase, rest.to_vec()),
            None => Err(LabelError::TooFewParticles(0)),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_particles(&self) -> usize {
        self.offsets.len() + 1
    }

    pub fn phase_label(&self) -> usize {
        self.phase
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Label of the particle at 1-based `position`.
    pub fn label(&self, position: usize) -> usize {
        if position == 1 {
            self.phase
        } else {
            self.offsets[position - 2]
        }
    }

    /// The full tuple (u_1, …, u_n).
    pub fn labels(&self) -> Vec<usize> {
        std::iter::once(self.phase)
            .chain(self.offsets.iter().copied())
            .collect()
    }

    fn check_position(&self, position: usize) -> Result<()> {
        if position < 2 || position > self.n_particles() {
            return Err(LabelError::InvalidPosition {
                position,
                n_particles: self.n_particles(),
            });
        }
        Ok(())
    }
}

/// Bell state |Ψ(u,v)⟩ by labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BellLabels {
    pub d: usize,
    pub u: usize,
    pub v: usize,
}

impl BellLabels {
    pub fn new(d: usize, u: usize, v: usize) -> Result<Self> {
        if d < 2 {
            return Err(LabelError::InvalidDimension(d));
        }
        check_label(u, d)?;
        check_label(v, d)?;
        Ok(Self { d, u, v })
    }
}

/// Result of one swap: the branch (k, l), its phase exponent k·l, the labels
/// of the measured pair and the cat that now contains the Bell partner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapOutcome {
    pub k: usize,
    pub l: usize,
    pub phase_exponent: usize,
    pub measured: BellLabels,
    pub new_cat: CatLabels,
}

/// Swaps `bell` into `cat` at `position` along branch (k, l).
///
/// The Bell-measured pair is (Bell first particle, cat particle), ending in
/// |Ψ(u−k, u_m−l)⟩; the Bell partner takes over `position` with label v+l and
/// the phase label advances by k.
pub fn swap(
    cat: &CatLabels,
    bell: &BellLabels,
    position: usize,
    k: usize,
    l: usize,
) -> Result<SwapOutcome> {
    if cat.d != bell.d {
        return Err(LabelError::DimensionMismatch {
            cat: cat.d,
            bell: bell.d,
        });
    }
    cat.check_position(position)?;
    let d = cat.d;
    check_label(k, d)?;
    check_label(l, d)?;
    let um = cat.label(position);
    let mut new_cat = cat.clone();
    new_cat.phase = add_mod(cat.phase, k, d);
    new_cat.offsets[position - 2] = add_mod(bell.v, l, d);
    Ok(SwapOutcome {
        k,
        l,
        phase_exponent: (k * l) % d,
        measured: BellLabels {
            d,
            u: sub_mod(bell.u, k, d),
            v: sub_mod(um, l, d),
        },
        new_cat,
    })
}

/// Chooses the branch from one uniform draw. Measured labels are ordered
/// lexicographically, matching the dense engine's outcome order.
pub fn sample_branch(d: usize, bell_u: usize, um: usize, r: f64) -> (usize, usize) {
    let weights = vec![1.0 / (d * d) as f64; d * d];
    let idx = pick_index(&weights, r);
    let (p, q) = (idx / d, idx % d);
    (sub_mod(bell_u, p, d), sub_mod(um, q, d))
}

/// [`swap`] with (k, l) drawn uniformly from Z_d × Z_d.
pub fn swap_sampled<R: Rng + ?Sized>(
    cat: &CatLabels,
    bell: &BellLabels,
    position: usize,
    rng: &mut R,
) -> Result<SwapOutcome> {
    cat.check_position(position)?;
    let (k, l) = sample_branch(cat.d, bell.u, cat.label(position), rng.gen());
    swap(cat, bell, position, k, l)
}

/// Recovers the branch from the measured pair and the original labels.
pub fn recover_kl(
    measured: &BellLabels,
    original_v: usize,
    original_um: usize,
) -> Result<(usize, usize)> {
    let d = measured.d;
    check_label(original_v, d)?;
    check_label(original_um, d)?;
    Ok((
        sub_mod(original_v, measured.u, d),
        sub_mod(original_um, measured.v, d),
    ))
}

fn check_distinct(cat: &CatLabels, bells: &[(BellLabels, usize)]) -> Result<()> {
    for (i, (_, pos)) in bells.iter().enumerate() {
        cat.check_position(*pos)?;
        if bells[..i].iter().any(|(_, p)| p == pos) {
            return Err(LabelError::RepeatedPosition(*pos));
        }
    }
    Ok(())
}

/// Applies one swap per (Bell, position) entry along the given branches.
pub fn sequential_swaps(
    cat: &CatLabels,
    bells: &[(BellLabels, usize)],
    outcomes: &[(usize, usize)],
) -> Result<(CatLabels, Vec<SwapOutcome>)> {
    check_distinct(cat, bells)?;
    if outcomes.len() != bells.len() {
        return Err(LabelError::OutcomeCount {
            expected: bells.len(),
            got: outcomes.len(),
        });
    }
    let mut current = cat.clone();
    let mut log = Vec::with_capacity(bells.len());
    for ((bell, pos), &(k, l)) in bells.iter().zip(outcomes) {
        let out = swap(&current, bell, *pos, k, l)?;
        current = out.new_cat.clone();
        log.push(out);
    }
    Ok((current, log))
}

pub fn sequential_swaps_sampled<R: Rng + ?Sized>(
    cat: &CatLabels,
    bells: &[(BellLabels, usize)],
    rng: &mut R,
) -> Result<(CatLabels, Vec<SwapOutcome>)> {
    check_distinct(cat, bells)?;
    let mut current = cat.clone();
    let mut log = Vec::with_capacity(bells.len());
    for (bell, pos) in bells {
        let out = swap_sampled(&current, bell, *pos, rng)?;
        current = out.new_cat.clone();
        log.push(out);
    }
    Ok((current, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cat(d: usize, labels: &[usize]) -> CatLabels {
        CatLabels::from_labels(d, labels).unwrap()
    }

    fn bell(d: usize, u: usize, v: usize) -> BellLabels {
        BellLabels::new(d, u, v).unwrap()
    }

    #[test]
    fn swap_example_d3() {
        let out = swap(&cat(3, &[0, 0, 0]), &bell(3, 1, 1), 2, 0, 0).unwrap();
        assert_eq!(out.new_cat.labels(), vec![0, 1, 0]);
        assert_eq!((out.measured.u, out.measured.v), (1, 0));
        assert_eq!(out.phase_exponent, 0);
    }

    #[test]
    fn label_rule_table() {
        let d = 7;
        let c = cat(d, &[3, 1, 4, 5, 2]);
        let b = bell(d, 6, 2);
        let out = swap(&c, &b, 4, 3, 5).unwrap();
        assert_eq!(out.measured.u, 3); // v → v − k
        assert_eq!(out.new_cat.phase_label(), 6); // u_1 → u_1 + k
        assert_eq!(out.new_cat.label(4), 0); // v' → v' + l
        assert_eq!(out.measured.v, 0); // u_m → u_m − l
        for pos in [2, 3, 5] {
            assert_eq!(out.new_cat.label(pos), c.label(pos));
        }
        assert_eq!(out.phase_exponent, 15 % 7);
    }

    #[test]
    fn swap_rejects_bad_inputs() {
        let c = cat(3, &[0, 1, 2]);
        assert_eq!(
            swap(&c, &bell(3, 0, 0), 1, 0, 0),
            Err(LabelError::InvalidPosition {
                position: 1,
                n_particles: 3
            })
        );
        assert!(swap(&c, &bell(3, 0, 0), 4, 0, 0).is_err());
        assert_eq!(
            swap(&c, &bell(4, 0, 0), 2, 0, 0),
            Err(LabelError::DimensionMismatch { cat: 3, bell: 4 })
        );
        assert!(CatLabels::from_labels(3, &[1]).is_err());
        assert!(BellLabels::new(3, 3, 0).is_err());
    }

    #[test]
    fn recover_examples() {
        assert_eq!(recover_kl(&bell(5, 3, 2), 3, 2).unwrap(), (0, 0));
        assert_eq!(recover_kl(&bell(5, 1, 4), 3, 2).unwrap(), (2, 3));
        let out = swap(&cat(5, &[0, 2]), &bell(5, 3, 3), 2, 2, 3).unwrap();
        assert_eq!((out.measured.u, out.measured.v), (1, 4));
    }

    #[test]
    fn sequential_swaps_examples() {
        let d = 4;
        let c = cat(d, &[2, 1, 3, 0]);
        let bells: Vec<_> = [(1, 2), (0, 3), (1, 4)]
            .iter()
            .map(|&(v, p)| (bell(d, v, v), p))
            .collect();
        let (fin, _) = sequential_swaps(&c, &bells, &[(0, 0); 3]).unwrap();
        assert_eq!(fin.labels(), vec![2, 1, 0, 1]);

        let repeated = vec![(bell(d, 0, 0), 2), (bell(d, 1, 1), 2)];
        assert_eq!(
            sequential_swaps(&c, &repeated, &[(0, 0); 2]).unwrap_err(),
            LabelError::RepeatedPosition(2)
        );
    }

    #[test]
    fn final_labels_follow_the_sum_rule() {
        let d = 5;
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let u: Vec<usize> = (0..=n).map(|_| rng.gen_range(0..d)).collect();
            let v: Vec<usize> = (0..n).map(|_| rng.gen_range(0..d)).collect();
            let c = cat(d, &u);
            let bells: Vec<_> = v
                .iter()
                .enumerate()
                .map(|(i, &vi)| (bell(d, vi, vi), i + 2))
                .collect();
            let (fin, log) = sequential_swaps_sampled(&c, &bells, &mut rng).unwrap();
            let sum_k: usize = log.iter().map(|o| o.k).sum();
            assert_eq!(fin.phase_label(), (u[0] + sum_k) % d);
            for (i, o) in log.iter().enumerate() {
                assert_eq!(fin.label(i + 2), (v[i] + o.l) % d);
            }
        }
    }

    #[test]
    fn swap_order_does_not_matter() {
        // Exhaustive over all 3! orders, d=3, n=3 parties, every cat label
        // tuple and a fixed outcome per party.
        let d: usize = 3;
        let outcomes = [(1, 2), (2, 0), (0, 1)];
        let v = [1, 0, 2];
        let orders = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for idx in 0..d.pow(4) {
            let labels: Vec<usize> = (0..4u32).map(|p| idx / d.pow(p) % d).collect();
            let c = cat(d, &labels);
            let mut finals = Vec::new();
            for order in &orders {
                let bells: Vec<_> = order
                    .iter()
                    .map(|&i| (bell(d, v[i], v[i]), i + 2))
                    .collect();
                let outs: Vec<_> = order.iter().map(|&i| outcomes[i]).collect();
                finals.push(sequential_swaps(&c, &bells, &outs).unwrap().0);
            }
            assert!(finals.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn sampled_outcomes_are_uniform() {
        let d = 3;
        let trials = 100_000;
        let c = cat(d, &[0, 1, 2]);
        let b = bell(d, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0usize; d * d];
        for _ in 0..trials {
            let out = swap_sampled(&c, &b, 3, &mut rng).unwrap();
            counts[out.k * d + out.l] += 1;
        }
        let p = 1.0 / (d * d) as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for &count in &counts {
            assert!((count as f64 - trials as f64 * p).abs() < 4.0 * sigma);
        }
    }

    proptest! {
        #[test]
        fn recover_inverts_swap(d in 2usize..9, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..6);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..d)).collect();
            let c = cat(d, &labels);
            let b = bell(d, rng.gen_range(0..d), rng.gen_range(0..d));
            let pos = rng.gen_range(2..=n);
            for k in 0..d {
                for l in 0..d {
                    let out = swap(&c, &b, pos, k, l).unwrap();
                    prop_assert_eq!(recover_kl(&out.measured, b.u, c.label(pos)).unwrap(), (k, l));
                }
            }
        }

        #[test]
        fn zero_branch_keeps_phase(d in 2usize..9, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..d)).collect();
            let c = cat(d, &labels);
            let b = bell(d, rng.gen_range(0..d), rng.gen_range(0..d));
            let out = swap(&c, &b, 3, 0, 0).unwrap();
            prop_assert_eq!(out.new_cat.phase_label(), c.phase_label());
            prop_assert_eq!(out.new_cat.label(3), b.v);
            prop_assert_eq!((out.measured.u, out.measured.v), (b.u, c.label(3)));
        }
    }
}
