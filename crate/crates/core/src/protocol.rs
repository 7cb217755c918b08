//! The comparison protocol: TP and party roles, decoy checks on both
//! transmissions, encoding, swapping, announcements and the verdict.
//!
//! Parties are numbered 1..=n. In every cat state particle 1 (label u_0)
//! stays with TP and particle i + 1 (label u_i) travels to party i.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{apply_attack, AttackStrategy};
use crate::label_algebra::{self, recover_kl, sub_mod, BellLabels, CatLabels, LabelError};
use crate::payload;
use crate::qudit_state::{self, Basis, StateError, StateVector};
use crate::transcript::{Actor, EventKind, Transcript};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("expected {expected} secrets, got {got}")]
    SecretCount { expected: usize, got: usize },
    #[error("secret of party {party} has {got} bits, expected {expected}")]
    SecretLength {
        party: usize,
        expected: usize,
        got: usize,
    },
    #[error("secret value {value} does not fit in {bits} bits")]
    SecretTooLarge { value: u64, bits: usize },
    #[error("secret bit {0} is not 0 or 1")]
    NotABit(usize),
    #[error("expected {expected} decoy results, got {got}")]
    DecoyResultCount { expected: usize, got: usize },
    #[error("party {0} did not report")]
    MissingParty(usize),
    #[error("forced outcome plan does not cover L = {secret_len}, n = {n}")]
    OutcomePlanShape { secret_len: usize, n: usize },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    Symbolic,
    Oracle,
}

/// How the aggregated S_L/S_K values are published.
///
/// `Residue` publishes Σ mod d. `Integer` publishes the plain integer sum of
/// canonical residues; TP can then count wrap-arounds against its measured
/// labels, which the leakage audit exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumMode {
    Residue,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub secret_len: usize,
    pub decoy_count: usize,
    pub strict: bool,
    pub seed: u64,
    pub engine: EngineKind,
    pub sums: SumMode,
}

impl SessionConfig {
    /// Defaults: L decoys per sequence, strict mode, seed 0, symbolic engine,
    /// residue sums.
    pub fn new(d: usize, n: usize, secret_len: usize) -> Self {
        Self {
            d,
            n,
            secret_len,
            decoy_count: secret_len,
            strict: true,
            seed: 0,
            engine: EngineKind::Symbolic,
            sums: SumMode::Residue,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_engine(mut self, engine: EngineKind) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_decoys(mut self, count: usize) -> Self {
        self.decoy_count = count;
        self
    }

    pub fn permissive(mut self) -> Self {
        self.strict = false;
        self
    }

    pub fn with_sums(mut self, sums: SumMode) -> Self {
        self.sums = sums;
        self
    }

    /// With d ≥ n + 1 the residue S_V determines Σv ∈ {0..n} exactly.
    pub fn is_sound(&self) -> bool {
        self.d > self.n
    }

    /// Reason the configuration can't run, if any.
    pub fn rejection(&self) -> Option<String> {
        if self.d < 2 {
            Some(format!("d = {} (need d >= 2)", self.d))
        } else if self.n < 2 {
            Some(format!("n = {} (need n >= 2)", self.n))
        } else if self.secret_len < 1 {
            Some("L = 0 (need L >= 1)".to_string())
        } else if self.strict && !self.is_sound() {
            Some(format!(
                "strict mode needs d >= n + 1, got d = {}, n = {}",
                self.d, self.n
            ))
        } else {
            None
        }
    }
}

/// A party's secret as bits x^1..x^L, least significant first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartySecret {
    bits: Vec<usize>,
}

impl PartySecret {
    pub fn from_value(value: u64, bits: usize) -> Result<Self> {
        if bits < 64 && value >> bits != 0 {
            return Err(ProtocolError::SecretTooLarge { value, bits });
        }
        Ok(Self {
            bits: (0..bits).map(|j| ((value >> j) & 1) as usize).collect(),
        })
    }

    pub fn from_bits(bits: Vec<usize>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(ProtocolError::NotABit(b));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &[usize] {
        &self.bits
    }

    pub fn value(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .map(|(j, &b)| (b as u64) << j)
            .sum()
    }
}

/// One decoy qudit: |value⟩ in V1 or F|value⟩ in V2, at `position` of the
/// protected sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoyPhoton {
    pub basis: Basis,
    pub value: usize,
    pub position: usize,
}

impl DecoyPhoton {
    pub fn prepare(&self, d: usize) -> qudit_state::Result<StateVector> {
        qudit_state::make_eigenstate(d, self.basis, self.value)
    }
}

/// Sender-side record of the decoys in one protected sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoyRecord {
    pub decoys: Vec<DecoyPhoton>,
}

/// A slot of a protected sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot<T> {
    Payload(T),
    /// Index into the sender's [`DecoyRecord`].
    Decoy(usize),
}

/// Inserts `count` decoys at uniformly random positions of the extended
/// sequence; each decoy's basis and value are uniform.
pub fn insert_decoys<T, R: Rng + ?Sized>(
    sequence: Vec<T>,
    count: usize,
    d: usize,
    rng: &mut R,
) -> (Vec<Slot<T>>, DecoyRecord) {
    let total = sequence.len() + count;
    let mut positions = sample(rng, total, count).into_vec();
    positions.sort_unstable();
    let decoys: Vec<DecoyPhoton> = positions
        .iter()
        .map(|&position| DecoyPhoton {
            basis: if rng.gen_bool(0.5) {
                Basis::V2
            } else {
                Basis::V1
            },
            value: rng.gen_range(0..d),
            position,
        })
        .collect();
    let mut payload = sequence.into_iter();
    let mut next_decoy = 0;
    let slots = (0..total)
        .map(|p| {
            if next_decoy < decoys.len() && decoys[next_decoy].position == p {
                next_decoy += 1;
                Slot::Decoy(next_decoy - 1)
            } else {
                Slot::Payload(payload.next().expect("payload count matches"))
            }
        })
        .collect();
    (slots, DecoyRecord { decoys })
}

/// Receiver side: measures each received decoy in its announced basis.
pub fn measure_decoys<R: Rng + ?Sized>(
    record: &DecoyRecord,
    received: &[StateVector],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if received.len() != record.decoys.len() {
        return Err(ProtocolError::DecoyResultCount {
            expected: record.decoys.len(),
            got: received.len(),
        });
    }
    record
        .decoys
        .iter()
        .zip(received)
        .map(|(decoy, state)| Ok(qudit_state::measure_single_qudit(state, 0, decoy.basis, rng)?.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoyCheck {
    pub passed: bool,
    pub mismatches: usize,
}

/// Sender side: compares reported results with the prepared values.
pub fn verify_decoys(record: &DecoyRecord, results: &[usize]) -> Result<DecoyCheck> {
    if results.len() != record.decoys.len() {
        return Err(ProtocolError::DecoyResultCount {
            expected: record.decoys.len(),
            got: results.len(),
        });
    }
    let mismatches = record
        .decoys
        .iter()
        .zip(results)
        .filter(|(decoy, &r)| decoy.value != r)
        .count();
    Ok(DecoyCheck {
        passed: mismatches == 0,
        mismatches,
    })
}

/// Output of TP's preparation: cat labels per j, and each party's sequence
/// of announced labels (u_i^1..u_i^L).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TpPreparation {
    pub cats: Vec<CatLabels>,
    pub party_labels: Vec<Vec<usize>>,
}

impl TpPreparation {
    pub fn u0(&self) -> Vec<usize> {
        self.cats.iter().map(|c| c.phase_label()).collect()
    }
}

/// Draws L cat states with uniform labels (u_0, u_1, …, u_n).
pub fn tp_prepare<R: Rng + ?Sized>(config: &SessionConfig, rng: &mut R) -> Result<TpPreparation> {
    let (d, n) = (config.d, config.n);
    let cats = (0..config.secret_len)
        .map(|_| {
            let labels: Vec<usize> = (0..=n).map(|_| rng.gen_range(0..d)).collect();
            CatLabels::from_labels(d, &labels)
        })
        .collect::<label_algebra::Result<Vec<_>>>()?;
    let party_labels = (1..=n)
        .map(|i| cats.iter().map(|c| c.label(i + 1)).collect())
        .collect();
    Ok(TpPreparation { cats, party_labels })
}

/// The j-th cat state as carried by one of the two engines.
#[derive(Debug, Clone)]
pub enum CatRegister {
    Symbolic(CatLabels),
    /// Qudit 0 is TP's particle, qudit i is party i's.
    Dense(StateVector),
}

impl CatRegister {
    pub fn new(engine: EngineKind, cat: &CatLabels) -> Result<Self> {
        Ok(match engine {
            EngineKind::Symbolic => CatRegister::Symbolic(cat.clone()),
            EngineKind::Oracle => {
                CatRegister::Dense(qudit_state::make_cat(cat.d(), &cat.labels())?)
            }
        })
    }

    fn dense(&mut self) -> Result<&mut StateVector> {
        if let CatRegister::Symbolic(cat) = self {
            // A disturbed cat leaves the label family; continue on the dense engine.
            *self = CatRegister::Dense(qudit_state::make_cat(cat.d(), &cat.labels())?);
        }
        match self {
            CatRegister::Dense(state) => Ok(state),
            CatRegister::Symbolic(_) => unreachable!(),
        }
    }

    /// The channel carries party `party`'s particle past `attack`.
    pub fn transit<R: Rng + ?Sized>(
        &mut self,
        party: usize,
        attack: &AttackStrategy,
        rng: &mut R,
    ) -> Result<()> {
        if !attack.is_active() {
            return Ok(());
        }
        let state = self.dense()?;
        *state = apply_attack(attack, state, party, rng)?;
        Ok(())
    }

    /// Party `party` swaps her Bell state |Ψ(v,v)⟩ into this cat.
    ///
    /// `announced_u` is the label TP told her for this cat; `forced` injects
    /// the branch (k, l) instead of sampling it.
    pub fn swap<R: Rng + ?Sized>(
        &mut self,
        party: usize,
        v: usize,
        announced_u: usize,
        forced: Option<(usize, usize)>,
        rng: &mut R,
    ) -> Result<PartySwap> {
        let (measured, d) = match self {
            CatRegister::Symbolic(cat) => {
                let d = cat.d();
                let bell = BellLabels::new(d, v, v)?;
                let out = match forced {
                    Some((k, l)) => label_algebra::swap(cat, &bell, party + 1, k, l)?,
                    None => label_algebra::swap_sampled(cat, &bell, party + 1, rng)?,
                };
                *cat = out.new_cat;
                (out.measured, d)
            }
            CatRegister::Dense(state) => {
                let d = state.d();
                let n_plus_1 = state.qudits();
                let joint = state.tensor(&encode_bell(d, v)?)?;
                let (s, s_prime) = (n_plus_1, n_plus_1 + 1);
                let outcome = match forced {
                    Some((k, l)) => {
                        let (p, q) = (sub_mod(v, k, d), sub_mod(announced_u, l, d));
                        qudit_state::measure_bell_basis_forced(&joint, s, party, p, q)?
                    }
                    None => qudit_state::measure_bell_basis(&joint, s, party, rng)?,
                };
                let pair = qudit_state::make_bell(d, outcome.u, outcome.v)?;
                let rest = outcome.post_state.reduce(&[s, party], &pair)?;
                // `rest` holds the old cat slots minus `party`, then s'.
                let order: Vec<usize> = (0..n_plus_1)
                    .map(|p| match p.cmp(&party) {
                        std::cmp::Ordering::Less => p,
                        std::cmp::Ordering::Equal => s_prime - 2,
                        std::cmp::Ordering::Greater => p - 1,
                    })
                    .collect();
                *state = rest.permute(&order)?;
                (BellLabels::new(d, outcome.u, outcome.v)?, d)
            }
        };
        let (k, l) = recover_kl(&measured, v, announced_u)?;
        debug_assert!(k < d && l < d);
        Ok(PartySwap { k, l, measured })
    }

    /// TP's cat-basis measurement of all n + 1 particles.
    pub fn tp_measure<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        match self {
            CatRegister::Symbolic(cat) => {
                // An eigenstate measures deterministically; the draw keeps RNG
                // consumption aligned with the dense engine.
                let _: f64 = rng.gen();
                Ok(cat.labels())
            }
            CatRegister::Dense(state) => {
                let qudits: Vec<usize> = (0..state.qudits()).collect();
                Ok(qudit_state::measure_cat_basis(state, &qudits, rng)?.labels)
            }
        }
    }
}

/// |Ψ(v,v)⟩ = (I ⊗ U_{(v,v)})|Ψ(0,0)⟩.
pub fn encode_bell(d: usize, v: usize) -> qudit_state::Result<StateVector> {
    qudit_state::apply_generalized_pauli(&qudit_state::make_bell(d, 0, 0)?, 1, v, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartySwap {
    pub k: usize,
    pub l: usize,
    pub measured: BellLabels,
}

/// Party i encodes bit `v` and swaps with her cat particle (symbolic engine).
pub fn party_encode_and_swap<R: Rng + ?Sized>(
    party: usize,
    v: usize,
    cat: &mut CatRegister,
    announced_u: usize,
    forced: Option<(usize, usize)>,
    rng: &mut R,
) -> Result<PartySwap> {
    if v > 1 {
        return Err(ProtocolError::NotABit(v));
    }
    cat.swap(party, v, announced_u, forced, rng)
}

/// Published S_L and S_K per j.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Announcements {
    pub s_l: Vec<usize>,
    pub s_k: Vec<usize>,
}

/// Sums the parties' (k, l) per j. `reports[i-1][j]` is party i's branch for cat j.
pub fn aggregate_announcements(
    reports: &[Option<Vec<(usize, usize)>>],
    d: usize,
    mode: SumMode,
) -> Result<Announcements> {
    let mut rows = Vec::with_capacity(reports.len());
    for (i, r) in reports.iter().enumerate() {
        rows.push(r.as_ref().ok_or(ProtocolError::MissingParty(i + 1))?);
    }
    let secret_len = rows.first().map_or(0, |r| r.len());
    let reduce = |x: usize| match mode {
        SumMode::Residue => x % d,
        SumMode::Integer => x,
    };
    let (s_l, s_k) = (0..secret_len)
        .map(|j| {
            let l: usize = rows.iter().map(|r| r[j].1).sum();
            let k: usize = rows.iter().map(|r| r[j].0).sum();
            (reduce(l), reduce(k))
        })
        .unzip();
    Ok(Announcements { s_l, s_k })
}

/// TP's final computation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TpComputation {
    /// Per j: (u_0 + Σk, v_1 + l_1, …, v_n + l_n) as measured.
    pub measured_labels: Vec<Vec<usize>>,
    pub s_c: Vec<usize>,
    pub s_v: Vec<usize>,
}

/// S_C = Σ measured labels mod d; S_V = S_C − u_0 − S_L − S_K mod d.
pub fn tp_compute(
    d: usize,
    measured_labels: Vec<Vec<usize>>,
    u0: &[usize],
    ann: &Announcements,
) -> TpComputation {
    let s_c: Vec<usize> = measured_labels
        .iter()
        .map(|ls| ls.iter().sum::<usize>() % d)
        .collect();
    let s_v = s_c
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let deduct = (u0[j] + ann.s_l[j] + ann.s_k[j]) % d;
            sub_mod(c, deduct, d)
        })
        .collect();
    TpComputation {
        measured_labels,
        s_c,
        s_v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    EavesdropperDetected,
    ConfigRejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    AllEqual,
    NotAllEqual,
    Aborted(AbortReason),
}

impl Outcome {
    fn code(self) -> usize {
        match self {
            Outcome::AllEqual => 0,
            Outcome::NotAllEqual => 1,
            Outcome::Aborted(AbortReason::EavesdropperDetected) => 2,
            Outcome::Aborted(AbortReason::ConfigRejected) => 3,
        }
    }
}

/// The comparison result. `sound` is false when d ≤ n, where the residue
/// arithmetic can't distinguish every digit sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub sound: bool,
}

impl Verdict {
    pub fn is_aborted(&self) -> bool {
        matches!(self.outcome, Outcome::Aborted(_))
    }
}

/// AllEqual iff S_V mod n = 0 at every position.
pub fn decide_verdict(tp: &TpComputation, n: usize, sound: bool) -> Verdict {
    let outcome = if tp.s_v.iter().all(|&s| s % n == 0) {
        Outcome::AllEqual
    } else {
        Outcome::NotAllEqual
    };
    Verdict { outcome, sound }
}

/// Forced branches for every swap, `plan[j][i-1] = (k, l)`.
#[derive(Debug, Clone, Default)]
pub enum OutcomePlan {
    #[default]
    Sampled,
    Forced(Vec<Vec<(usize, usize)>>),
}

impl OutcomePlan {
    fn get(&self, j: usize, party: usize) -> Option<(usize, usize)> {
        match self {
            OutcomePlan::Sampled => None,
            OutcomePlan::Forced(plan) => Some(plan[j][party - 1]),
        }
    }

    fn check(&self, config: &SessionConfig) -> Result<()> {
        if let OutcomePlan::Forced(plan) = self {
            let bad = plan.len() != config.secret_len
                || plan.iter().any(|row| {
                    row.len() != config.n
                        || row.iter().any(|&(k, l)| k >= config.d || l >= config.d)
                });
            if bad {
                return Err(ProtocolError::OutcomePlanShape {
                    secret_len: config.secret_len,
                    n: config.n,
                });
            }
        }
        Ok(())
    }
}

/// Particles created during a session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParticleCounts {
    pub cat: usize,
    pub bell: usize,
    pub decoy: usize,
}

impl ParticleCounts {
    /// Particles consumed by the comparison itself (decoys excluded).
    pub fn consumed(&self) -> usize {
        self.cat + self.bell
    }
}

#[derive(Debug, Clone)]
pub struct SessionResult {
    pub transcript: Transcript,
    pub verdict: Verdict,
    pub preparation: Option<TpPreparation>,
    pub announcements: Option<Announcements>,
    pub tp: Option<TpComputation>,
    pub particles: ParticleCounts,
    pub decoys_checked: usize,
    pub detection_events: usize,
    /// Step at which the session aborted, if it did.
    pub aborted_at: Option<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub config: SessionConfig,
    pub verdict: Verdict,
    #[serde(rename = "S_V")]
    pub s_v: Option<Vec<usize>>,
    pub aborted_at: Option<u8>,
    pub detection_events: usize,
    pub decoys_checked: usize,
    pub particles: ParticleCounts,
}

impl SessionResult {
    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            config: self.transcript.header.config.clone(),
            verdict: self.verdict,
            s_v: self.tp.as_ref().map(|t| t.s_v.clone()),
            aborted_at: self.aborted_at,
            detection_events: self.detection_events,
            decoys_checked: self.decoys_checked,
            particles: self.particles,
        }
    }
}

fn check_secrets(config: &SessionConfig, secrets: &[PartySecret]) -> Result<()> {
    if secrets.len() != config.n {
        return Err(ProtocolError::SecretCount {
            expected: config.n,
            got: secrets.len(),
        });
    }
    for (i, s) in secrets.iter().enumerate() {
        if s.bits.len() != config.secret_len {
            return Err(ProtocolError::SecretLength {
                party: i + 1,
                expected: config.secret_len,
                got: s.bits.len(),
            });
        }
    }
    Ok(())
}

/// A sequence in flight together with the sender's decoy record.
struct Transfer {
    sender: Actor,
    party: usize,
    record: DecoyRecord,
    in_flight: Vec<StateVector>,
}

/// Mutable state of a running session.
struct Session<'a> {
    config: &'a SessionConfig,
    attack: &'a AttackStrategy,
    rng: ChaCha8Rng,
    transcript: Transcript,
    particles: ParticleCounts,
    decoys_checked: usize,
    detection_events: usize,
}

impl Session<'_> {
    /// Sends party `party`'s particles (one per cat j) with fresh decoys from
    /// `sender`; the channel attack acts here.
    fn send(
        &mut self,
        step: u8,
        sender: Actor,
        party: usize,
        registers: &mut [CatRegister],
    ) -> Result<Transfer> {
        let d = self.config.d;
        let payload: Vec<usize> = (0..registers.len()).collect();
        let (slots, record) = insert_decoys(payload, self.config.decoy_count, d, &mut self.rng);
        self.particles.decoy += record.decoys.len();
        let to = match sender {
            Actor::Tp => party,
            _ => 0,
        };
        self.transcript.push(
            step,
            sender,
            EventKind::Send,
            payload! {"to" => to, "length" => slots.len()},
        );

        let mut in_flight = record
            .decoys
            .iter()
            .map(|decoy| decoy.prepare(d))
            .collect::<qudit_state::Result<Vec<_>>>()?;
        for slot in &slots {
            match *slot {
                Slot::Decoy(idx) => {
                    if self.attack.is_active() {
                        in_flight[idx] =
                            apply_attack(self.attack, &in_flight[idx], 0, &mut self.rng)?;
                    }
                }
                Slot::Payload(j) => registers[j].transit(party, self.attack, &mut self.rng)?,
            }
        }
        Ok(Transfer {
            sender,
            party,
            record,
            in_flight,
        })
    }

    /// Decoy check of a received transfer. Positions and bases are announced
    /// only now, after receipt. Returns whether it passed.
    fn check(&mut self, step: u8, transfer: Transfer) -> Result<bool> {
        let record = &transfer.record;
        let results = measure_decoys(record, &transfer.in_flight, &mut self.rng)?;
        let check = verify_decoys(record, &results)?;
        self.decoys_checked += record.decoys.len();
        self.detection_events += check.mismatches;
        self.transcript.push(
            step,
            transfer.sender,
            EventKind::DecoyCheck,
            payload! {
                "party" => transfer.party,
                "positions" => record.decoys.iter().map(|x| x.position).collect::<Vec<_>>(),
                "bases" => record.decoys.iter().map(|x| x.basis.code() as usize).collect::<Vec<_>>(),
                "prepared" => record.decoys.iter().map(|x| x.value).collect::<Vec<_>>(),
                "measured" => results,
                "mismatches" => check.mismatches,
                "pass" => check.passed,
            },
        );
        Ok(check.passed)
    }

    /// Sends every party's sequence, then checks each one.
    fn transfer_all(
        &mut self,
        send_step: u8,
        check_step: u8,
        outbound: bool,
        registers: &mut [CatRegister],
    ) -> Result<bool> {
        let n = self.config.n;
        let mut transfers = Vec::with_capacity(n);
        for i in 1..=n {
            let sender = if outbound { Actor::Tp } else { Actor::Party(i) };
            transfers.push(self.send(send_step, sender, i, registers)?);
        }
        let mut passed = true;
        for transfer in transfers {
            passed &= self.check(check_step, transfer)?;
        }
        Ok(passed)
    }

    fn abort(&mut self, step: u8) -> Verdict {
        let verdict = Verdict {
            outcome: Outcome::Aborted(AbortReason::EavesdropperDetected),
            sound: self.config.is_sound(),
        };
        self.transcript.push(
            step,
            Actor::Tp,
            EventKind::Verdict,
            payload! {"outcome" => verdict.outcome.code(), "sound" => verdict.sound},
        );
        verdict
    }
}

/// Runs one complete session: preliminary Bell preparation through the
/// verdict broadcast. Deterministic for a fixed config seed and plan.
pub fn run_session(
    config: &SessionConfig,
    secrets: &[PartySecret],
    attack: &AttackStrategy,
    plan: &OutcomePlan,
) -> Result<SessionResult> {
    check_secrets(config, secrets)?;
    let mut session = Session {
        config,
        attack,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        transcript: Transcript::new(config),
        particles: ParticleCounts::default(),
        decoys_checked: 0,
        detection_events: 0,
    };
    let finish = |s: Session<'_>,
                  verdict: Verdict,
                  preparation: Option<TpPreparation>,
                  announcements: Option<Announcements>,
                  tp: Option<TpComputation>,
                  aborted_at: Option<u8>| SessionResult {
        transcript: s.transcript,
        verdict,
        preparation,
        announcements,
        tp,
        particles: s.particles,
        decoys_checked: s.decoys_checked,
        detection_events: s.detection_events,
        aborted_at,
    };

    if config.rejection().is_some() {
        let verdict = Verdict {
            outcome: Outcome::Aborted(AbortReason::ConfigRejected),
            sound: config.is_sound(),
        };
        return Ok(finish(session, verdict, None, None, None, Some(0)));
    }
    plan.check(config)?;
    let (d, n, secret_len) = (config.d, config.n, config.secret_len);

    // Preliminary: each party prepares L copies of |Ψ(0,0)⟩.
    for i in 1..=n {
        session.particles.bell += 2 * secret_len;
        session.transcript.push(
            0,
            Actor::Party(i),
            EventKind::Prepare,
            payload! {"bell_states" => secret_len},
        );
    }

    // Step 1.
    let prep = tp_prepare(config, &mut session.rng)?;
    session.particles.cat += (n + 1) * secret_len;
    for (j, cat) in prep.cats.iter().enumerate() {
        session.transcript.push(
            1,
            Actor::Tp,
            EventKind::Prepare,
            payload! {"j" => j + 1, "labels" => cat.labels()},
        );
    }
    for i in 1..=n {
        session.transcript.push(
            1,
            Actor::Tp,
            EventKind::AnnounceLabels,
            payload! {"to" => i, "labels" => prep.party_labels[i - 1].clone()},
        );
    }
    let mut registers = prep
        .cats
        .iter()
        .map(|c| CatRegister::new(config.engine, c))
        .collect::<Result<Vec<_>>>()?;

    // Steps 1-2: outbound transfer and decoy check.
    if !session.transfer_all(1, 2, true, &mut registers)? {
        let verdict = session.abort(2);
        return Ok(finish(session, verdict, Some(prep), None, None, Some(2)));
    }

    // Step 3.
    let mut reports: Vec<Option<Vec<(usize, usize)>>> = vec![None; n];
    for i in 1..=n {
        let bits = secrets[i - 1].bits();
        let mut row = Vec::with_capacity(secret_len);
        for (j, register) in registers.iter_mut().enumerate() {
            let u = prep.party_labels[i - 1][j];
            let out =
                party_encode_and_swap(i, bits[j], register, u, plan.get(j, i), &mut session.rng)?;
            session.transcript.push(
                3,
                Actor::Party(i),
                EventKind::Swap,
                payload! {
                    "j" => j + 1,
                    "v" => bits[j],
                    "u" => u,
                    "k" => out.k,
                    "l" => out.l,
                    "measured" => vec![out.measured.u, out.measured.v],
                },
            );
            row.push((out.k, out.l));
        }
        reports[i - 1] = Some(row);
    }

    // Step 4.
    let ann = aggregate_announcements(&reports, d, config.sums)?;
    session.transcript.push(
        4,
        Actor::Aggregator,
        EventKind::AnnounceSums,
        payload! {"S_L" => ann.s_l.clone(), "S_K" => ann.s_k.clone()},
    );

    // Step 5: return transfer, each party protecting her own sequence.
    if !session.transfer_all(5, 5, false, &mut registers)? {
        let verdict = session.abort(5);
        return Ok(finish(
            session,
            verdict,
            Some(prep),
            Some(ann),
            None,
            Some(5),
        ));
    }
    let mut measured = Vec::with_capacity(secret_len);
    for register in &registers {
        measured.push(register.tp_measure(&mut session.rng)?);
    }
    let tp = tp_compute(d, measured, &prep.u0(), &ann);
    for j in 0..secret_len {
        session.transcript.push(
            5,
            Actor::Tp,
            EventKind::TpMeasure,
            payload! {
                "j" => j + 1,
                "labels" => tp.measured_labels[j].clone(),
                "S_C" => tp.s_c[j],
                "S_V" => tp.s_v[j],
            },
        );
    }

    // Step 6.
    let verdict = decide_verdict(&tp, n, config.is_sound());
    session.transcript.push(
        6,
        Actor::Tp,
        EventKind::Verdict,
        payload! {"outcome" => verdict.outcome.code(), "sound" => verdict.sound},
    );
    Ok(finish(
        session,
        verdict,
        Some(prep),
        Some(ann),
        Some(tp),
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qudit_state::{fidelity_up_to_phase, TOL};

    fn secrets(values: &[u64], bits: usize) -> Vec<PartySecret> {
        values
            .iter()
            .map(|&v| PartySecret::from_value(v, bits).unwrap())
            .collect()
    }

    #[test]
    fn secrets_are_lsb_first() {
        let s = PartySecret::from_value(6, 4).unwrap();
        assert_eq!(s.bits(), &[0, 1, 1, 0]);
        assert_eq!(s.value(), 6);
        assert!(PartySecret::from_value(16, 4).is_err());
        assert!(PartySecret::from_bits(vec![0, 2]).is_err());
    }

    #[test]
    fn strict_mode_rejects_small_d() {
        let cfg = SessionConfig::new(3, 3, 1);
        let res = run_session(
            &cfg,
            &secrets(&[0, 0, 0], 1),
            &AttackStrategy::NONE,
            &OutcomePlan::Sampled,
        )
        .unwrap();
        assert_eq!(
            res.verdict.outcome,
            Outcome::Aborted(AbortReason::ConfigRejected)
        );
        assert!(res.transcript.events.is_empty());
        assert!(cfg.permissive().rejection().is_none());
    }

    #[test]
    fn prepare_for_qubit_three_party_instance() {
        let cfg = SessionConfig::new(2, 3, 1).permissive();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prep = tp_prepare(&cfg, &mut rng).unwrap();
        assert_eq!(prep.cats.len(), 1);
        assert_eq!(prep.cats[0].n_particles(), 4);
        assert_eq!(prep.party_labels.len(), 3);
        assert!(prep.party_labels.iter().all(|s| s.len() == 1));
    }

    #[test]
    fn prepared_labels_are_uniform() {
        let d = 4;
        let cfg = SessionConfig::new(d, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let trials = 100_000;
        let mut counts = vec![0usize; d];
        for _ in 0..trials {
            let prep = tp_prepare(&cfg, &mut rng).unwrap();
            counts[prep.cats[0].label(2)] += 1;
        }
        let p = 1.0 / d as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - trials as f64 * p).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn decoy_insertion_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (slots, record) = insert_decoys(vec!['a', 'b', 'c', 'd'], 0, 3, &mut rng);
        assert_eq!(
            slots,
            vec![
                Slot::Payload('a'),
                Slot::Payload('b'),
                Slot::Payload('c'),
                Slot::Payload('d')
            ]
        );
        assert!(record.decoys.is_empty());

        let (slots, record) = insert_decoys(vec![0, 1, 2, 3], 4, 3, &mut rng);
        assert_eq!(slots.len(), 8);
        for (idx, decoy) in record.decoys.iter().enumerate() {
            assert_eq!(slots[decoy.position], Slot::Decoy(idx));
        }
        let payload: Vec<_> = slots
            .iter()
            .filter_map(|s| match s {
                Slot::Payload(x) => Some(*x),
                Slot::Decoy(_) => None,
            })
            .collect();
        assert_eq!(payload, vec![0, 1, 2, 3]);
    }

    #[test]
    fn decoy_draws_are_uniform() {
        let d = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let trials = 100_000;
        let mut bases = [0usize; 2];
        let mut values = vec![0usize; d];
        for _ in 0..trials {
            let (_, record) = insert_decoys(Vec::<()>::new(), 1, d, &mut rng);
            let decoy = record.decoys[0];
            bases[(decoy.basis == Basis::V2) as usize] += 1;
            values[decoy.value] += 1;
        }
        let check = |count: usize, p: f64| {
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!((count as f64 - trials as f64 * p).abs() < 4.0 * sigma);
        };
        bases.iter().for_each(|&c| check(c, 0.5));
        values.iter().for_each(|&c| check(c, 1.0 / d as f64));
    }

    #[test]
    fn untouched_channel_passes_decoy_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [2, 3, 5] {
            let (_, record) = insert_decoys(vec![(); 3], 16, d, &mut rng);
            let received: Vec<_> = record
                .decoys
                .iter()
                .map(|x| x.prepare(d).unwrap())
                .collect();
            let results = measure_decoys(&record, &received, &mut rng).unwrap();
            assert!(verify_decoys(&record, &results).unwrap().passed);
        }
    }

    #[test]
    fn decoy_result_count_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, record) = insert_decoys(vec![(); 2], 2, 3, &mut rng);
        assert!(matches!(
            verify_decoys(&record, &[0]),
            Err(ProtocolError::DecoyResultCount {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn encoding_produces_the_labelled_bell_state() {
        for d in [2, 3, 5] {
            for v in 0..d {
                let f = fidelity_up_to_phase(
                    &encode_bell(d, v).unwrap(),
                    &qudit_state::make_bell(d, v, v).unwrap(),
                )
                .unwrap();
                assert!((f - 1.0).abs() < TOL);
            }
        }
    }

    #[test]
    fn zero_bit_zero_branch() {
        let cat = CatLabels::from_labels(3, &[1, 2, 0]).unwrap();
        let mut reg = CatRegister::Symbolic(cat);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = party_encode_and_swap(1, 0, &mut reg, 2, Some((0, 0)), &mut rng).unwrap();
        assert_eq!((out.k, out.l), (0, 0));
        assert_eq!((out.measured.u, out.measured.v), (0, 2));
        assert!(party_encode_and_swap(1, 2, &mut reg, 2, None, &mut rng).is_err());
    }

    #[test]
    fn forced_branches_are_recovered_on_both_engines() {
        let d = 3;
        let labels = [2, 1, 0];
        let cat = CatLabels::from_labels(d, &labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for engine in [EngineKind::Symbolic, EngineKind::Oracle] {
            for v in 0..2 {
                for k in 0..d {
                    for l in 0..d {
                        let mut reg = CatRegister::new(engine, &cat).unwrap();
                        let out = party_encode_and_swap(
                            2,
                            v,
                            &mut reg,
                            labels[2],
                            Some((k, l)),
                            &mut rng,
                        )
                        .unwrap();
                        assert_eq!((out.k, out.l), (k, l));
                    }
                }
            }
        }
    }

    #[test]
    fn aggregation() {
        let d = 5;
        let zeros = vec![Some(vec![(0, 0)]); 3];
        let ann = aggregate_announcements(&zeros, d, SumMode::Integer).unwrap();
        assert_eq!((ann.s_l[0], ann.s_k[0]), (0, 0));

        let reports = vec![Some(vec![(0, 1)]), Some(vec![(3, 2)]), Some(vec![(4, 4)])];
        let ann = aggregate_announcements(&reports, d, SumMode::Integer).unwrap();
        assert_eq!(ann.s_l, vec![7]);
        assert_eq!(ann.s_k, vec![7]);
        let ann = aggregate_announcements(&reports, d, SumMode::Residue).unwrap();
        assert_eq!(ann.s_l, vec![2]);

        let missing = vec![Some(vec![(0, 0)]), None];
        assert!(matches!(
            aggregate_announcements(&missing, d, SumMode::Integer),
            Err(ProtocolError::MissingParty(2))
        ));
    }

    #[test]
    fn integer_sums_stay_in_bounds() {
        let (d, n) = (4, 3);
        let cfg = SessionConfig::new(d, n, 4).with_sums(SumMode::Integer);
        for seed in 0..50 {
            let res = run_session(
                &cfg.clone().with_seed(seed),
                &secrets(&[3, 5, 9], 4),
                &AttackStrategy::NONE,
                &OutcomePlan::Sampled,
            )
            .unwrap();
            let ann = res.announcements.unwrap();
            assert!(ann.s_l.iter().chain(&ann.s_k).all(|&s| s <= n * (d - 1)));
        }
    }

    #[test]
    fn verdict_rule() {
        let tp = |s_v: Vec<usize>| TpComputation {
            measured_labels: vec![],
            s_c: vec![],
            s_v,
        };
        assert_eq!(
            decide_verdict(&tp(vec![0, 0, 0]), 3, true).outcome,
            Outcome::AllEqual
        );
        for n in 2..7 {
            assert_eq!(
                decide_verdict(&tp(vec![n, 0]), n, true).outcome,
                Outcome::AllEqual
            );
        }
        assert_eq!(
            decide_verdict(&tp(vec![1, 0]), 3, true).outcome,
            Outcome::NotAllEqual
        );
    }

    #[test]
    fn honest_runs_sum_the_bits() {
        let (d, n) = (5, 3);
        let cfg = SessionConfig::new(d, n, 1);
        let all_zero = run_session(
            &cfg,
            &secrets(&[0, 0, 0], 1),
            &AttackStrategy::NONE,
            &OutcomePlan::Sampled,
        )
        .unwrap();
        assert_eq!(all_zero.tp.unwrap().s_v, vec![0]);
        let all_one = run_session(
            &cfg,
            &secrets(&[1, 1, 1], 1),
            &AttackStrategy::NONE,
            &OutcomePlan::Sampled,
        )
        .unwrap();
        assert_eq!(all_one.tp.unwrap().s_v, vec![n]);
        for x in 0..8u64 {
            let bits: Vec<u64> = (0..3).map(|i| (x >> i) & 1).collect();
            for engine in [EngineKind::Symbolic, EngineKind::Oracle] {
                let res = run_session(
                    &cfg.clone().with_engine(engine).with_seed(x),
                    &secrets(&bits, 1),
                    &AttackStrategy::NONE,
                    &OutcomePlan::Sampled,
                )
                .unwrap();
                assert_eq!(
                    res.tp.unwrap().s_v[0],
                    bits.iter().sum::<u64>() as usize % d
                );
            }
        }
    }

    #[test]
    fn equal_and_unequal_secrets() {
        let cfg = SessionConfig::new(4, 3, 8).with_seed(7);
        let eq = run_session(
            &cfg,
            &secrets(&[200, 200, 200], 8),
            &AttackStrategy::NONE,
            &OutcomePlan::Sampled,
        )
        .unwrap();
        assert_eq!(eq.verdict.outcome, Outcome::AllEqual);
        let ne = run_session(
            &cfg,
            &secrets(&[200, 200, 201], 8),
            &AttackStrategy::NONE,
            &OutcomePlan::Sampled,
        )
        .unwrap();
        assert_eq!(ne.verdict.outcome, Outcome::NotAllEqual);
    }

    #[test]
    fn secret_shape_errors() {
        let cfg = SessionConfig::new(4, 3, 2);
        assert!(matches!(
            run_session(
                &cfg,
                &secrets(&[0, 0], 2),
                &AttackStrategy::NONE,
                &OutcomePlan::Sampled
            ),
            Err(ProtocolError::SecretCount {
                expected: 3,
                got: 2
            })
        ));
        assert!(matches!(
            run_session(
                &cfg,
                &secrets(&[0, 0, 0], 3),
                &AttackStrategy::NONE,
                &OutcomePlan::Sampled
            ),
            Err(ProtocolError::SecretLength { .. })
        ));
        let bad_plan = OutcomePlan::Forced(vec![vec![(0, 0); 3]]);
        assert!(matches!(
            run_session(
                &cfg,
                &secrets(&[0, 0, 0], 2),
                &AttackStrategy::NONE,
                &bad_plan
            ),
            Err(ProtocolError::OutcomePlanShape { .. })
        ));
    }

    #[test]
    fn particle_counts() {
        for (n, len) in [(2, 1), (3, 4), (4, 2)] {
            let cfg = SessionConfig::new(n + 1, n, len);
            let res = run_session(
                &cfg,
                &secrets(&vec![0; n], len),
                &AttackStrategy::NONE,
                &OutcomePlan::Sampled,
            )
            .unwrap();
            assert_eq!(res.particles.cat, (n + 1) * len);
            assert_eq!(res.particles.bell, 2 * n * len);
            assert_eq!(res.particles.consumed(), (3 * n + 1) * len);
            assert_eq!(res.particles.decoy, 2 * n * len);
        }
    }
}
