//! Dense state-vector engine for d-level systems.
//!
//! Amplitudes are stored densely and indexed by base-d digit strings with
//! qudit 0 as the most significant digit. This engine is the ground-truth
//! oracle for the symbolic label engine, so it favours clarity over speed and
//! refuses registers larger than [`MAX_AMPLITUDES`].
//!
//! Measurements keep the full register: non-matching amplitudes are projected
//! away and the remainder renormalized, so qudit indices stay stable.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Absolute tolerance used for every numerical comparison in the engine.
pub const TOL: f64 = 1e-9;

/// Largest register the oracle will allocate.
pub const MAX_AMPLITUDES: usize = 10_000_000;

/// Outcomes whose Born probability falls below this are treated as impossible.
const MIN_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("digit {digit} out of range for d = {d}")]
    DigitOutOfRange { digit: usize, d: usize },
    #[error("qudit index {qudit} out of range for a {q}-qudit register")]
    QuditOutOfRange { qudit: usize, q: usize },
    #[error("duplicate qudit index {0}")]
    DuplicateQudit(usize),
    #[error(
        "register of {q} qudits at d = {d} exceeds the oracle limit of {MAX_AMPLITUDES} amplitudes"
    )]
    TooLarge { d: usize, q: usize },
    #[error("a cat state needs at least 2 particles, got {0}")]
    TooFewParticles(usize),
    #[error("expected {expected} amplitudes, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("shape mismatch: ({d_a}, {q_a}) vs ({d_b}, {q_b})")]
    ShapeMismatch {
        d_a: usize,
        q_a: usize,
        d_b: usize,
        q_b: usize,
    },
    #[error("forced outcome has zero probability")]
    ZeroProbability,
}

pub type Result<T> = std::result::Result<T, StateError>;

/// Powers of the primitive root of unity e^{2πi/d}.
#[derive(Debug, Clone)]
pub struct RootsOfUnity {
    table: Vec<Complex64>,
}

impl RootsOfUnity {
    pub fn new(d: usize) -> Self {
        let table = (0..d)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / d as f64))
            .collect();
        Self { table }
    }

    /// ζ^e for any integer exponent.
    pub fn pow(&self, e: i64) -> Complex64 {
        let d = self.table.len() as i64;
        self.table[e.rem_euclid(d) as usize]
    }
}

fn check_dimension(d: usize) -> Result<()> {
    if d < 2 {
        return Err(StateError::InvalidDimension(d));
    }
    Ok(())
}

fn register_len(d: usize, q: usize) -> Result<usize> {
    let mut len: usize = 1;
    for _ in 0..q {
        len = len
            .checked_mul(d)
            .filter(|&l| l <= MAX_AMPLITUDES)
            .ok_or(StateError::TooLarge { d, q })?;
    }
    Ok(len)
}

fn check_digits(d: usize, digits: &[usize]) -> Result<()> {
    match digits.iter().find(|&&x| x >= d) {
        Some(&digit) => Err(StateError::DigitOutOfRange { digit, d }),
        None => Ok(()),
    }
}

/// A pure state of `q` qudits of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    d: usize,
    q: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Wraps raw amplitudes, checking length and normalization.
    pub fn from_amplitudes(d: usize, q: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_dimension(d)?;
        let expected = register_len(d, q)?;
        if amps.len() != expected {
            return Err(StateError::LengthMismatch {
                expected,
                got: amps.len(),
            });
        }
        let state = Self { d, q, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > TOL {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn qudits(&self) -> usize {
        self.q
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Stride of a qudit's digit in the flat index.
    fn stride(&self, qudit: usize) -> usize {
        self.d.pow((self.q - 1 - qudit) as u32)
    }

    fn check_qudit(&self, qudit: usize) -> Result<()> {
        if qudit >= self.q {
            return Err(StateError::QuditOutOfRange { qudit, q: self.q });
        }
        Ok(())
    }

    fn check_subset(&self, qudits: &[usize]) -> Result<()> {
        for (i, &a) in qudits.iter().enumerate() {
            self.check_qudit(a)?;
            if qudits[..i].contains(&a) {
                return Err(StateError::DuplicateQudit(a));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().fold(0, |acc, &x| acc * self.d + x)
    }

    pub fn digits_of(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.q];
        for slot in digits.iter_mut().rev() {
            *slot = index % self.d;
            index /= self.d;
        }
        digits
    }

    pub fn amplitude(&self, digits: &[usize]) -> Complex64 {
        self.amps[self.index_of(digits)]
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.d != other.d || self.q != other.q {
            return Err(self.shape_mismatch(other));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    fn shape_mismatch(&self, other: &StateVector) -> StateError {
        StateError::ShapeMismatch {
            d_a: self.d,
            q_a: self.q,
            d_b: other.d,
            q_b: other.q,
        }
    }

    /// self ⊗ other, with `other`'s qudits appended after ours.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        if self.d != other.d {
            return Err(self.shape_mismatch(other));
        }
        let q = self.q + other.q;
        register_len(self.d, q)?;
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ok(StateVector { d: self.d, q, amps })
    }

    /// Reorders qudits so that qudit `i` of the result is qudit `order[i]` of `self`.
    pub fn permute(&self, order: &[usize]) -> Result<StateVector> {
        if order.len() != self.q {
            return Err(StateError::LengthMismatch {
                expected: self.q,
                got: order.len(),
            });
        }
        self.check_subset(order)?;
        let strides: Vec<usize> = order.iter().map(|&src| self.stride(src)).collect();
        let mut out = StateVector {
            d: self.d,
            q: self.q,
            amps: vec![Complex64::new(0.0, 0.0); self.amps.len()],
        };
        for (idx, slot) in out.amps.iter_mut().enumerate() {
            let mut rem = idx;
            let mut src = 0;
            for &stride in strides.iter().rev() {
                src += (rem % self.d) * stride;
                rem /= self.d;
            }
            *slot = self.amps[src];
        }
        Ok(out)
    }

    /// Applies a single-qudit operator to `qudit`.
    pub fn apply(&self, qudit: usize, op: &QuditOperator) -> Result<StateVector> {
        self.check_qudit(qudit)?;
        if op.d != self.d {
            return Err(StateError::ShapeMismatch {
                d_a: self.d,
                q_a: self.q,
                d_b: op.d,
                q_b: 1,
            });
        }
        let d = self.d;
        let stride = self.stride(qudit);
        let block = stride * d;
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        let mut column = vec![Complex64::new(0.0, 0.0); d];
        for high in (0..self.amps.len()).step_by(block) {
            for low in 0..stride {
                let base = high + low;
                for (c, slot) in column.iter_mut().enumerate() {
                    *slot = self.amps[base + c * stride];
                }
                for r in 0..d {
                    out[base + r * stride] = (0..d).map(|c| op.entry(r, c) * column[c]).sum();
                }
            }
        }
        Ok(StateVector {
            d,
            q: self.q,
            amps: out,
        })
    }

    /// Factors `factor` (a state on `qudits`, in that order) out of a product
    /// state, returning the normalized state on the remaining qudits in their
    /// original relative order.
    pub fn reduce(&self, qudits: &[usize], factor: &StateVector) -> Result<StateVector> {
        self.check_subset(qudits)?;
        if factor.d != self.d || factor.q != qudits.len() {
            return Err(self.shape_mismatch(factor));
        }
        let layout = SubsetLayout::new(self, qudits);
        let mut amps = Vec::with_capacity(layout.rest.len());
        for &rest in &layout.rest {
            let c: Complex64 = layout
                .offsets
                .iter()
                .zip(&factor.amps)
                .map(|(&off, f)| f.conj() * self.amps[rest + off])
                .sum();
            amps.push(c);
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < MIN_PROBABILITY {
            return Err(StateError::ZeroProbability);
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(StateVector {
            d: self.d,
            q: self.q - qudits.len(),
            amps,
        })
    }

    /// Text dump: one line per nonzero amplitude, `digits : re,im`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm() < TOL {
                continue;
            }
            let digits: Vec<String> = self.digits_of(i).iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "{} : {:.12e},{:.12e}", digits.join(""), a.re, a.im);
        }
        out
    }
}

/// Index bookkeeping for a subset of qudits inside a register.
struct SubsetLayout {
    /// Flat-index offset of each subset digit string, in base-d order over the subset.
    offsets: Vec<usize>,
    /// Flat indices with every subset digit zero, in ascending order.
    rest: Vec<usize>,
}

impl SubsetLayout {
    fn new(state: &StateVector, qudits: &[usize]) -> Self {
        let d = state.d;
        let strides: Vec<usize> = qudits.iter().map(|&a| state.stride(a)).collect();
        let sub_len = d.pow(qudits.len() as u32);
        let offsets = (0..sub_len)
            .map(|mut s| {
                let mut off = 0;
                for &stride in strides.iter().rev() {
                    off += (s % d) * stride;
                    s /= d;
                }
                off
            })
            .collect();
        let rest = (0..state.amps.len())
            .filter(|&idx| strides.iter().all(|&s| (idx / s) % d == 0))
            .collect();
        Self { offsets, rest }
    }
}

/// A d×d operator acting on one qudit.
#[derive(Debug, Clone, PartialEq)]
pub struct QuditOperator {
    d: usize,
    matrix: Vec<Complex64>,
}

impl QuditOperator {
    pub fn from_matrix(d: usize, matrix: Vec<Complex64>) -> Result<Self> {
        check_dimension(d)?;
        if matrix.len() != d * d {
            return Err(StateError::LengthMismatch {
                expected: d * d,
                got: matrix.len(),
            });
        }
        Ok(Self { d, matrix })
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::pauli(d, 0, 0)
    }

    /// Discrete Fourier transform F|k⟩ = (1/√d) Σ_r ζ^{kr}|r⟩.
    pub fn fourier(d: usize) -> Result<Self> {
        check_dimension(d)?;
        let zeta = RootsOfUnity::new(d);
        let scale = 1.0 / (d as f64).sqrt();
        let mut matrix = Vec::with_capacity(d * d);
        for r in 0..d {
            for k in 0..d {
                matrix.push(zeta.pow((k * r) as i64) * scale);
            }
        }
        Ok(Self { d, matrix })
    }

    /// Generalized Pauli U_{(u,v)} = Σ_j ζ^{ju}|j+v⟩⟨j|.
    pub fn pauli(d: usize, u: usize, v: usize) -> Result<Self> {
        check_dimension(d)?;
        check_digits(d, &[u, v])?;
        let zeta = RootsOfUnity::new(d);
        let mut matrix = vec![Complex64::new(0.0, 0.0); d * d];
        for j in 0..d {
            matrix[((j + v) % d) * d + j] = zeta.pow((j * u) as i64);
        }
        Ok(Self { d, matrix })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[row * self.d + col]
    }

    pub fn mul(&self, other: &QuditOperator) -> QuditOperator {
        let d = self.d;
        let mut matrix = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                matrix.push((0..d).map(|x| self.entry(r, x) * other.entry(x, c)).sum());
            }
        }
        QuditOperator { d, matrix }
    }

    pub fn adjoint(&self) -> QuditOperator {
        let d = self.d;
        let mut matrix = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                matrix.push(self.entry(c, r).conj());
            }
        }
        QuditOperator { d, matrix }
    }

    /// Max-entry deviation of U†U from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.adjoint().mul(self);
        let mut worst: f64 = 0.0;
        for r in 0..self.d {
            for c in 0..self.d {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((prod.entry(r, c) - target).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_defect() < TOL
    }
}

/// Single-qudit measurement basis: V1 is computational, V2 is Fourier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Basis {
    V1,
    V2,
}

impl Basis {
    pub fn code(self) -> i64 {
        match self {
            Basis::V1 => 1,
            Basis::V2 => 2,
        }
    }
}

/// Result of a generalized Bell measurement.
#[derive(Debug, Clone)]
pub struct BellOutcome {
    pub u: usize,
    pub v: usize,
    pub probability: f64,
    pub post_state: StateVector,
}

/// Result of a projective measurement: outcome labels, Born probability and
/// collapsed register.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub labels: Vec<usize>,
    pub probability: f64,
    pub post_state: StateVector,
}

/// An orthonormal basis of a subset of qudits, each element stored sparsely
/// as (subset index, coefficient) pairs.
struct ProjectiveBasis {
    elements: Vec<(Vec<usize>, SparseVector)>,
}

type SparseVector = Vec<(usize, Complex64)>;

impl ProjectiveBasis {
    fn single(d: usize, basis: Basis) -> Self {
        let zeta = RootsOfUnity::new(d);
        let scale = 1.0 / (d as f64).sqrt();
        let elements = (0..d)
            .map(|k| {
                let coeffs = match basis {
                    Basis::V1 => vec![(k, Complex64::new(1.0, 0.0))],
                    Basis::V2 => (0..d)
                        .map(|r| (r, zeta.pow((k * r) as i64) * scale))
                        .collect(),
                };
                (vec![k], coeffs)
            })
            .collect();
        Self { elements }
    }

    /// Cat basis on m qudits, labels (u_1, u_2, …, u_m) in lexicographic order.
    /// m = 2 is the Bell basis.
    fn cat(d: usize, m: usize) -> Self {
        let zeta = RootsOfUnity::new(d);
        let scale = 1.0 / (d as f64).sqrt();
        let count = d.pow(m as u32);
        let elements = (0..count)
            .map(|idx| {
                let labels = to_digits(idx, d, m);
                let coeffs = (0..d)
                    .map(|j| {
                        let sub = (1..m).fold(j, |acc, p| acc * d + (j + labels[p]) % d);
                        (sub, zeta.pow((j * labels[0]) as i64) * scale)
                    })
                    .collect();
                (labels, coeffs)
            })
            .collect();
        Self { elements }
    }

    fn index_of(&self, labels: &[usize]) -> Option<usize> {
        self.elements.iter().position(|(l, _)| l == labels)
    }
}

fn to_digits(mut idx: usize, d: usize, len: usize) -> Vec<usize> {
    let mut digits = vec![0; len];
    for slot in digits.iter_mut().rev() {
        *slot = idx % d;
        idx /= d;
    }
    digits
}

/// Projection coefficients c_b(rest) = ⟨b|ψ(rest)⟩ for every basis element b.
fn project_all(
    state: &StateVector,
    layout: &SubsetLayout,
    basis: &ProjectiveBasis,
) -> Vec<Vec<Complex64>> {
    basis
        .elements
        .iter()
        .map(|(_, coeffs)| {
            layout
                .rest
                .iter()
                .map(|&rest| {
                    coeffs
                        .iter()
                        .map(|&(sub, c)| c.conj() * state.amps[rest + layout.offsets[sub]])
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn collapse(
    state: &StateVector,
    layout: &SubsetLayout,
    coeffs: &[(usize, Complex64)],
    projection: &[Complex64],
    probability: f64,
) -> StateVector {
    let norm = probability.sqrt();
    let mut amps = vec![Complex64::new(0.0, 0.0); state.amps.len()];
    for (&rest, &p) in layout.rest.iter().zip(projection) {
        for &(sub, c) in coeffs {
            amps[rest + layout.offsets[sub]] = p * c / norm;
        }
    }
    StateVector {
        d: state.d,
        q: state.q,
        amps,
    }
}

/// Chooses an outcome index from one uniform draw over cumulative weights.
pub(crate) fn pick_index(weights: &[f64], r: f64) -> usize {
    let mut acc = 0.0;
    let mut last_possible = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w < MIN_PROBABILITY {
            continue;
        }
        acc += w;
        last_possible = i;
        if r < acc {
            return i;
        }
    }
    last_possible
}

enum Selection<'a> {
    Sampled(f64),
    Forced(&'a [usize]),
}

fn measure(
    state: &StateVector,
    qudits: &[usize],
    basis: &ProjectiveBasis,
    selection: Selection<'_>,
) -> Result<Measurement> {
    state.check_subset(qudits)?;
    let layout = SubsetLayout::new(state, qudits);
    let projections = project_all(state, &layout, basis);
    let probs: Vec<f64> = projections
        .iter()
        .map(|p| p.iter().map(|c| c.norm_sqr()).sum())
        .collect();
    let idx = match selection {
        Selection::Sampled(r) => pick_index(&probs, r),
        Selection::Forced(labels) => {
            let idx = basis.index_of(labels).ok_or(StateError::DigitOutOfRange {
                digit: labels.iter().copied().max().unwrap_or(0),
                d: state.d,
            })?;
            if probs[idx] < MIN_PROBABILITY {
                return Err(StateError::ZeroProbability);
            }
            idx
        }
    };
    let (labels, coeffs) = &basis.elements[idx];
    Ok(Measurement {
        labels: labels.clone(),
        probability: probs[idx],
        post_state: collapse(state, &layout, coeffs, &projections[idx], probs[idx]),
    })
}

fn probabilities(
    state: &StateVector,
    qudits: &[usize],
    basis: &ProjectiveBasis,
) -> Result<Vec<(Vec<usize>, f64)>> {
    state.check_subset(qudits)?;
    let layout = SubsetLayout::new(state, qudits);
    let projections = project_all(state, &layout, basis);
    Ok(basis
        .elements
        .iter()
        .zip(projections)
        .map(|((labels, _), p)| (labels.clone(), p.iter().map(|c| c.norm_sqr()).sum()))
        .collect())
}

/// Computational basis state |digits⟩.
pub fn make_basis_state(d: usize, digits: &[usize]) -> Result<StateVector> {
    check_dimension(d)?;
    check_digits(d, digits)?;
    let len = register_len(d, digits.len())?;
    let mut amps = vec![Complex64::new(0.0, 0.0); len];
    let idx = digits.iter().fold(0, |acc, &x| acc * d + x);
    amps[idx] = Complex64::new(1.0, 0.0);
    Ok(StateVector {
        d,
        q: digits.len(),
        amps,
    })
}

pub fn apply_fourier(state: &StateVector, qudit: usize) -> Result<StateVector> {
    state.apply(qudit, &QuditOperator::fourier(state.d)?)
}

pub fn apply_generalized_pauli(
    state: &StateVector,
    qudit: usize,
    u: usize,
    v: usize,
) -> Result<StateVector> {
    state.apply(qudit, &QuditOperator::pauli(state.d, u, v)?)
}

/// |Ψ(u,v)⟩ = (1/√d) Σ_j ζ^{ju}|j⟩|j+v⟩.
pub fn make_bell(d: usize, u: usize, v: usize) -> Result<StateVector> {
    make_cat(d, &[u, v])
}

/// |Ψ(u_1,…,u_n)⟩ = (1/√d) Σ_j ζ^{j u_1}|j, j+u_2, …, j+u_n⟩.
pub fn make_cat(d: usize, labels: &[usize]) -> Result<StateVector> {
    check_dimension(d)?;
    if labels.len() < 2 {
        return Err(StateError::TooFewParticles(labels.len()));
    }
    check_digits(d, labels)?;
    let q = labels.len();
    let len = register_len(d, q)?;
    let zeta = RootsOfUnity::new(d);
    let scale = 1.0 / (d as f64).sqrt();
    let mut amps = vec![Complex64::new(0.0, 0.0); len];
    for j in 0..d {
        let idx = labels[1..].iter().fold(j, |acc, &u| acc * d + (j + u) % d);
        amps[idx] = zeta.pow((j * labels[0]) as i64) * scale;
    }
    Ok(StateVector { d, q, amps })
}

/// Single-qudit eigenstate |k⟩ (V1) or F|k⟩ (V2).
pub fn make_eigenstate(d: usize, basis: Basis, k: usize) -> Result<StateVector> {
    let ket = make_basis_state(d, &[k])?;
    match basis {
        Basis::V1 => Ok(ket),
        Basis::V2 => apply_fourier(&ket, 0),
    }
}

fn bell_pair(state: &StateVector, a: usize, b: usize) -> Result<()> {
    if a == b {
        return Err(StateError::DuplicateQudit(a));
    }
    state.check_qudit(a)?;
    state.check_qudit(b)
}

fn into_bell(m: Measurement) -> BellOutcome {
    BellOutcome {
        u: m.labels[0],
        v: m.labels[1],
        probability: m.probability,
        post_state: m.post_state,
    }
}

/// Generalized Bell measurement on the ordered pair (a, b), sampled with one
/// uniform draw over outcomes in lexicographic (u, v) order.
pub fn measure_bell_basis<R: Rng + ?Sized>(
    state: &StateVector,
    a: usize,
    b: usize,
    rng: &mut R,
) -> Result<BellOutcome> {
    bell_pair(state, a, b)?;
    let basis = ProjectiveBasis::cat(state.d, 2);
    measure(state, &[a, b], &basis, Selection::Sampled(rng.gen())).map(into_bell)
}

pub fn measure_bell_basis_forced(
    state: &StateVector,
    a: usize,
    b: usize,
    u: usize,
    v: usize,
) -> Result<BellOutcome> {
    bell_pair(state, a, b)?;
    check_digits(state.d, &[u, v])?;
    let basis = ProjectiveBasis::cat(state.d, 2);
    measure(state, &[a, b], &basis, Selection::Forced(&[u, v])).map(into_bell)
}

/// Born probabilities of all d² Bell outcomes on (a, b), keyed by (u, v).
pub fn bell_probabilities(
    state: &StateVector,
    a: usize,
    b: usize,
) -> Result<Vec<((usize, usize), f64)>> {
    bell_pair(state, a, b)?;
    let basis = ProjectiveBasis::cat(state.d, 2);
    Ok(probabilities(state, &[a, b], &basis)?
        .into_iter()
        .map(|(l, p)| ((l[0], l[1]), p))
        .collect())
}

fn cat_subset(state: &StateVector, qudits: &[usize]) -> Result<()> {
    if qudits.len() < 2 {
        return Err(StateError::TooFewParticles(qudits.len()));
    }
    state.check_subset(qudits)
}

/// Cat-basis measurement on `qudits`; returns the labels (u_1, …, u_m).
pub fn measure_cat_basis<R: Rng + ?Sized>(
    state: &StateVector,
    qudits: &[usize],
    rng: &mut R,
) -> Result<Measurement> {
    cat_subset(state, qudits)?;
    let basis = ProjectiveBasis::cat(state.d, qudits.len());
    measure(state, qudits, &basis, Selection::Sampled(rng.gen()))
}

pub fn measure_cat_basis_forced(
    state: &StateVector,
    qudits: &[usize],
    labels: &[usize],
) -> Result<Measurement> {
    cat_subset(state, qudits)?;
    check_digits(state.d, labels)?;
    let basis = ProjectiveBasis::cat(state.d, qudits.len());
    measure(state, qudits, &basis, Selection::Forced(labels))
}

pub fn cat_probabilities(state: &StateVector, qudits: &[usize]) -> Result<Vec<(Vec<usize>, f64)>> {
    cat_subset(state, qudits)?;
    let basis = ProjectiveBasis::cat(state.d, qudits.len());
    probabilities(state, qudits, &basis)
}

/// Measures one qudit in V1 or V2; returns (k, post-state).
pub fn measure_single_qudit<R: Rng + ?Sized>(
    state: &StateVector,
    qudit: usize,
    basis: Basis,
    rng: &mut R,
) -> Result<(usize, StateVector)> {
    let pb = ProjectiveBasis::single(state.d, basis);
    let m = measure(state, &[qudit], &pb, Selection::Sampled(rng.gen()))?;
    Ok((m.labels[0], m.post_state))
}

pub fn measure_single_qudit_forced(
    state: &StateVector,
    qudit: usize,
    basis: Basis,
    k: usize,
) -> Result<Measurement> {
    check_digits(state.d, &[k])?;
    let pb = ProjectiveBasis::single(state.d, basis);
    measure(state, &[qudit], &pb, Selection::Forced(&[k]))
}

pub fn single_qudit_probabilities(
    state: &StateVector,
    qudit: usize,
    basis: Basis,
) -> Result<Vec<f64>> {
    let pb = ProjectiveBasis::single(state.d, basis);
    Ok(probabilities(state, &[qudit], &pb)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

/// |⟨a|b⟩|², insensitive to global phase.
pub fn fidelity_up_to_phase(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}
