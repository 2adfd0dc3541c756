//! Exact density-matrix simulation of the 4-qubit variational classifier.
//!
//! Qubit 0 is the most significant bit of the basis index, so `|1000>` is
//! index 8. The circuit is an amplitude embedding followed by five
//! strongly-entangling layers (per-qubit `RZ·RY·RZ`, then a CNOT ring), with
//! a single-qubit depolarizing channel on every qubit after each ring when
//! the noise strength is positive. Class probabilities are the marginal of
//! the first three qubits.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

pub const N_QUBITS: usize = 4;
pub const DIM: usize = 1 << N_QUBITS;
pub const N_LAYERS: usize = 5;
pub const ROTATIONS_PER_QUBIT: usize = 3;
pub const N_PARAMS: usize = N_LAYERS * N_QUBITS * ROTATIONS_PER_QUBIT;
pub const N_CLASSES: usize = DIM / 2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QsimError {
    #[error("qubit index {0} out of range for a {N_QUBITS}-qubit register")]
    QubitOutOfRange(usize),
    #[error("CNOT control and target are both qubit {0}")]
    Gate(usize),
    #[error("depolarizing strength {0} is outside [0, 1]")]
    Channel(f64),
    #[error("cannot amplitude-embed an all-zero input")]
    Embedding,
    #[error("expected {expected} circuit parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("circuit parameter {0} is not finite")]
    NonFinite(usize),
    #[error("invalid circuit layout: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// What [`amplitude_embed`] does with an all-zero input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroInput {
    Reject,
    /// Substitute the basis state `|0000>` and log a warning.
    BasisFallback,
}

#[inline]
fn qubit_mask(qubit: usize) -> usize {
    1 << (N_QUBITS - 1 - qubit)
}

fn check_qubit(qubit: usize) -> Result<(), QsimError> {
    if qubit < N_QUBITS {
        Ok(())
    } else {
        Err(QsimError::QubitOutOfRange(qubit))
    }
}

/// A 16×16 density operator stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    data: [Complex64; DIM * DIM],
}

impl DensityMatrix {
    /// The projector onto a computational basis state.
    pub fn basis(index: usize) -> Self {
        assert!(index < DIM, "basis index {index} out of range");
        let mut data = [ZERO; DIM * DIM];
        data[index * DIM + index] = Complex64::new(1.0, 0.0);
        Self { data }
    }

    /// `I / 16`.
    pub fn maximally_mixed() -> Self {
        let mut data = [ZERO; DIM * DIM];
        for i in 0..DIM {
            data[i * DIM + i] = Complex64::new(1.0 / DIM as f64, 0.0);
        }
        Self { data }
    }

    /// `|psi><psi|` for an already-normalized complex amplitude vector.
    pub fn from_pure(amplitudes: &[Complex64; DIM]) -> Self {
        let mut data = [ZERO; DIM * DIM];
        for r in 0..DIM {
            for c in 0..DIM {
                data[r * DIM + c] = amplitudes[r] * amplitudes[c].conj();
            }
        }
        Self { data }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * DIM + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..DIM).map(|i| self.data[i * DIM + i]).sum()
    }

    /// `tr(rho^2)`, which for Hermitian rho is the squared Frobenius norm.
    pub fn purity(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `max |rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..DIM {
            for c in r..DIM {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_fn(DIM, DIM, |r, c| {
            // Symmetrize so the Hermitian solver sees exactly Hermitian input.
            (self.get(r, c) + self.get(c, r).conj()) * 0.5
        });
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Reduced density matrix of two qubits, as a row-major 4×4 block.
    pub fn two_qubit_marginal(&self, a: usize, b: usize) -> Result<[Complex64; 16], QsimError> {
        check_qubit(a)?;
        check_qubit(b)?;
        if a == b {
            return Err(QsimError::Gate(a));
        }
        let (ma, mb) = (qubit_mask(a), qubit_mask(b));
        let local = |i: usize| usize::from(i & ma != 0) * 2 + usize::from(i & mb != 0);
        let mut out = [ZERO; 16];
        for r in 0..DIM {
            for c in 0..DIM {
                // Trace out the other qubits: their bits must agree.
                if (r & !(ma | mb)) == (c & !(ma | mb)) {
                    out[local(r) * 4 + local(c)] += self.get(r, c);
                }
            }
        }
        Ok(out)
    }

    /// Reduced density matrix of a single qubit, as `[[r00, r01], [r10, r11]]`.
    pub fn single_qubit_marginal(&self, qubit: usize) -> Result<[[Complex64; 2]; 2], QsimError> {
        check_qubit(qubit)?;
        let m = qubit_mask(qubit);
        let mut out = [[ZERO; 2]; 2];
        for r in 0..DIM {
            for c in 0..DIM {
                if (r & !m) == (c & !m) {
                    out[usize::from(r & m != 0)][usize::from(c & m != 0)] += self.get(r, c);
                }
            }
        }
        Ok(out)
    }

    /// Conjugates by `exp(-i angle/2 P)` on `qubit`.
    pub fn apply_rotation(&mut self, qubit: usize, axis: Axis, angle: f64) -> Result<(), QsimError> {
        check_qubit(qubit)?;
        self.rotate(qubit, axis, angle);
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<(), QsimError> {
        check_qubit(control)?;
        check_qubit(target)?;
        if control == target {
            return Err(QsimError::Gate(control));
        }
        self.cnot(control, target);
        Ok(())
    }

    /// Replaces `qubit` by the maximally mixed state with probability `strength`.
    pub fn apply_depolarizing(&mut self, qubit: usize, strength: f64) -> Result<(), QsimError> {
        check_qubit(qubit)?;
        if !(0.0..=1.0).contains(&strength) {
            return Err(QsimError::Channel(strength));
        }
        self.depolarize(qubit, strength);
        Ok(())
    }

    fn rotate(&mut self, qubit: usize, axis: Axis, angle: f64) {
        let m = qubit_mask(qubit);
        match axis {
            Axis::Z => {
                let down = Complex64::from_polar(1.0, -angle);
                let up = down.conj();
                for r in 0..DIM {
                    let rb = r & m != 0;
                    let row = &mut self.data[r * DIM..(r + 1) * DIM];
                    for (c, z) in row.iter_mut().enumerate() {
                        let cb = c & m != 0;
                        if rb != cb {
                            *z *= if cb { down } else { up };
                        }
                    }
                }
            }
            Axis::Y => {
                let (s, c) = (angle / 2.0).sin_cos();
                // Left: rows (r0, r1) mix as [[c, -s], [s, c]].
                for r0 in (0..DIM).filter(|r| r & m == 0) {
                    let r1 = r0 | m;
                    for col in 0..DIM {
                        let a = self.data[r0 * DIM + col];
                        let b = self.data[r1 * DIM + col];
                        self.data[r0 * DIM + col] = a * c - b * s;
                        self.data[r1 * DIM + col] = a * s + b * c;
                    }
                }
                // Right: multiply by U^T since U is real.
                for row in 0..DIM {
                    let base = row * DIM;
                    for c0 in (0..DIM).filter(|k| k & m == 0) {
                        let c1 = c0 | m;
                        let a = self.data[base + c0];
                        let b = self.data[base + c1];
                        self.data[base + c0] = a * c - b * s;
                        self.data[base + c1] = a * s + b * c;
                    }
                }
            }
            Axis::X => {
                let (s, c) = (angle / 2.0).sin_cos();
                let u = [
                    [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                    [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
                ];
                self.unitary_1q(m, &u);
            }
        }
    }

    fn unitary_1q(&mut self, m: usize, u: &[[Complex64; 2]; 2]) {
        for r0 in (0..DIM).filter(|r| r & m == 0) {
            let r1 = r0 | m;
            for col in 0..DIM {
                let a = self.data[r0 * DIM + col];
                let b = self.data[r1 * DIM + col];
                self.data[r0 * DIM + col] = u[0][0] * a + u[0][1] * b;
                self.data[r1 * DIM + col] = u[1][0] * a + u[1][1] * b;
            }
        }
        let uc = [
            [u[0][0].conj(), u[0][1].conj()],
            [u[1][0].conj(), u[1][1].conj()],
        ];
        for row in 0..DIM {
            let base = row * DIM;
            for c0 in (0..DIM).filter(|k| k & m == 0) {
                let c1 = c0 | m;
                let a = self.data[base + c0];
                let b = self.data[base + c1];
                self.data[base + c0] = a * uc[0][0] + b * uc[0][1];
                self.data[base + c1] = a * uc[1][0] + b * uc[1][1];
            }
        }
    }

    fn cnot(&mut self, control: usize, target: usize) {
        let (mc, mt) = (qubit_mask(control), qubit_mask(target));
        let perm = |i: usize| if i & mc != 0 { i ^ mt } else { i };
        let old = self.data;
        for r in 0..DIM {
            let pr = perm(r);
            for c in 0..DIM {
                self.data[r * DIM + c] = old[pr * DIM + perm(c)];
            }
        }
    }

    fn depolarize(&mut self, qubit: usize, strength: f64) {
        if strength == 0.0 {
            return;
        }
        let m = qubit_mask(qubit);
        let keep = 1.0 - strength;
        for r0 in (0..DIM).filter(|r| r & m == 0) {
            let r1 = r0 | m;
            for c0 in (0..DIM).filter(|c| c & m == 0) {
                let c1 = c0 | m;
                let d00 = self.data[r0 * DIM + c0];
                let d11 = self.data[r1 * DIM + c1];
                let avg = (d00 + d11) * 0.5;
                self.data[r0 * DIM + c0] = d00 * keep + avg * strength;
                self.data[r1 * DIM + c1] = d11 * keep + avg * strength;
                self.data[r0 * DIM + c1] *= keep;
                self.data[r1 * DIM + c0] *= keep;
            }
        }
    }

    /// Marginal distribution of the first three qubits, clamped to be nonnegative.
    pub fn class_probabilities(&self) -> [f64; N_CLASSES] {
        let mut probs = [0.0; N_CLASSES];
        for (class, p) in probs.iter_mut().enumerate() {
            let i0 = class << 1;
            let i1 = i0 | 1;
            *p = (self.get(i0, i0).re + self.get(i1, i1).re).max(0.0);
        }
        probs
    }
}

/// Encodes `input / ||input||` as a pure state.
pub fn amplitude_embed(input: &[f64; DIM], zero: ZeroInput) -> Result<DensityMatrix, QsimError> {
    let norm = input.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return match zero {
            ZeroInput::Reject => Err(QsimError::Embedding),
            ZeroInput::BasisFallback => {
                log::warn!("all-zero embedding input replaced by |0000>");
                Ok(DensityMatrix::basis(0))
            }
        };
    }
    let mut amps = [ZERO; DIM];
    for (a, v) in amps.iter_mut().zip(input) {
        *a = Complex64::new(v / norm, 0.0);
    }
    Ok(DensityMatrix::from_pure(&amps))
}

/// Circuit angles, laid out `[layer][qubit][z1, y, z2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitParams(Vec<f64>);

impl CircuitParams {
    pub fn new(angles: Vec<f64>) -> Result<Self, QsimError> {
        if angles.len() != N_PARAMS {
            return Err(QsimError::ParamCount {
                expected: N_PARAMS,
                got: angles.len(),
            });
        }
        if let Some(i) = angles.iter().position(|a| !a.is_finite()) {
            return Err(QsimError::NonFinite(i));
        }
        Ok(Self(angles))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; N_PARAMS])
    }

    /// Angles drawn uniformly from `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(
            (0..N_PARAMS)
                .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                .collect(),
        )
    }

    pub fn index(layer: usize, qubit: usize, rotation: usize) -> usize {
        (layer * N_QUBITS + qubit) * ROTATIONS_PER_QUBIT + rotation
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Circuit structure and native noise strength.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub entangler_ring: Vec<(usize, usize)>,
    pub noise: f64,
}

impl CircuitSpec {
    pub fn new(noise: f64) -> Result<Self, QsimError> {
        if !(0.0..=1.0).contains(&noise) {
            return Err(QsimError::Channel(noise));
        }
        Ok(Self {
            n_qubits: N_QUBITS,
            n_layers: N_LAYERS,
            entangler_ring: (0..N_QUBITS).map(|i| (i, (i + 1) % N_QUBITS)).collect(),
            noise,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_layers * self.n_qubits * ROTATIONS_PER_QUBIT
    }

    fn validate(&self) -> Result<(), QsimError> {
        if self.n_qubits != N_QUBITS || self.n_layers != N_LAYERS {
            return Err(QsimError::Layout(format!(
                "only {N_QUBITS} qubits × {N_LAYERS} layers are supported"
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(QsimError::Channel(self.noise));
        }
        let mut seen = [false; N_QUBITS];
        for &(c, t) in &self.entangler_ring {
            check_qubit(c)?;
            check_qubit(t)?;
            if c == t {
                return Err(QsimError::Gate(c));
            }
            if seen[c] {
                return Err(QsimError::Layout(format!("qubit {c} used twice as control")));
            }
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(QsimError::Layout("ring must use every qubit as control".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Rot { qubit: usize, axis: Axis, param: usize },
    Cnot { control: usize, target: usize },
    Depolarize { qubit: usize },
}

/// Gate sequence of the default ring layout, indices of rotations within it.
#[derive(Clone)]
struct Layout {
    ops: Vec<Op>,
    rot_positions: Vec<usize>,
}

fn build_layout(ring: &[(usize, usize)]) -> Layout {
    let mut ops = Vec::new();
    let mut rot_positions = vec![0; N_PARAMS];
    const AXES: [Axis; ROTATIONS_PER_QUBIT] = [Axis::Z, Axis::Y, Axis::Z];
    for layer in 0..N_LAYERS {
        for qubit in 0..N_QUBITS {
            for (rot, &axis) in AXES.iter().enumerate() {
                let param = CircuitParams::index(layer, qubit, rot);
                rot_positions[param] = ops.len();
                ops.push(Op::Rot { qubit, axis, param });
            }
        }
        for &(control, target) in ring {
            ops.push(Op::Cnot { control, target });
        }
        for qubit in 0..N_QUBITS {
            ops.push(Op::Depolarize { qubit });
        }
    }
    Layout { ops, rot_positions }
}

fn default_layout() -> &'static Layout {
    static LAYOUT: OnceLock<Layout> = OnceLock::new();
    LAYOUT.get_or_init(|| {
        let ring: Vec<_> = (0..N_QUBITS).map(|i| (i, (i + 1) % N_QUBITS)).collect();
        build_layout(&ring)
    })
}

/// A validated circuit ready for repeated execution.
pub(crate) struct Circuit {
    layout: std::borrow::Cow<'static, Layout>,
    noise: f64,
}

impl Circuit {
    pub(crate) fn new(spec: &CircuitSpec) -> Result<Self, QsimError> {
        spec.validate()?;
        let default = default_layout();
        let is_default = spec
            .entangler_ring
            .iter()
            .enumerate()
            .all(|(i, &(c, t))| c == i && t == (i + 1) % N_QUBITS)
            && spec.entangler_ring.len() == N_QUBITS;
        let layout = if is_default {
            std::borrow::Cow::Borrowed(default)
        } else {
            std::borrow::Cow::Owned(build_layout(&spec.entangler_ring))
        };
        Ok(Circuit {
            layout,
            noise: spec.noise,
        })
    }

    #[inline]
    fn apply(&self, rho: &mut DensityMatrix, op: Op, angles: &[f64]) {
        match op {
            Op::Rot { qubit, axis, param } => rho.rotate(qubit, axis, angles[param]),
            Op::Cnot { control, target } => rho.cnot(control, target),
            Op::Depolarize { qubit } => rho.depolarize(qubit, self.noise),
        }
    }

    fn run_ops(&self, rho: &mut DensityMatrix, from: usize, angles: &[f64]) {
        for &op in &self.layout.ops[from..] {
            self.apply(rho, op, angles);
        }
    }

    pub(crate) fn run(&self, mut rho: DensityMatrix, angles: &[f64]) -> DensityMatrix {
        self.run_ops(&mut rho, 0, angles);
        rho
    }

    /// Runs the circuit, keeping the state just before every rotation gate.
    /// `snapshots[j]` is the input state of the gate carrying parameter `j`.
    pub(crate) fn run_with_snapshots(
        &self,
        mut rho: DensityMatrix,
        angles: &[f64],
    ) -> (DensityMatrix, Vec<DensityMatrix>) {
        let mut by_position = vec![None; self.layout.ops.len()];
        for (pos, &op) in self.layout.ops.iter().enumerate() {
            if let Op::Rot { param, .. } = op {
                by_position[pos] = Some(param);
            }
        }
        let mut snapshots: Vec<Option<DensityMatrix>> = vec![None; N_PARAMS];
        for (pos, &op) in self.layout.ops.iter().enumerate() {
            if let Some(param) = by_position[pos] {
                snapshots[param] = Some(rho.clone());
            }
            self.apply(&mut rho, op, angles);
        }
        let snapshots = snapshots
            .into_iter()
            .map(|s| s.expect("every parameter has a rotation gate"))
            .collect();
        (rho, snapshots)
    }

    /// Output state with parameter `param` shifted by `shift`, resuming from its snapshot.
    pub(crate) fn run_shifted(
        &self,
        snapshot: &DensityMatrix,
        angles: &[f64],
        param: usize,
        shift: f64,
    ) -> DensityMatrix {
        let pos = self.layout.rot_positions[param];
        let mut rho = snapshot.clone();
        let Op::Rot { qubit, axis, .. } = self.layout.ops[pos] else {
            unreachable!("rotation position table is consistent")
        };
        rho.rotate(qubit, axis, angles[param] + shift);
        self.run_ops(&mut rho, pos + 1, angles);
        rho
    }
}

/// Embeds `input` and runs the full layered circuit under `spec`.
pub fn run_circuit(
    params: &CircuitParams,
    input: &[f64; DIM],
    spec: &CircuitSpec,
) -> Result<DensityMatrix, QsimError> {
    let circuit = Circuit::new(spec)?;
    let rho = amplitude_embed(input, ZeroInput::BasisFallback)?;
    Ok(circuit.run(rho, params.as_slice()))
}

/// `P(c) = <c,0|rho|c,0> + <c,1|rho|c,1>`.
pub fn class_probabilities(rho: &DensityMatrix) -> [f64; N_CLASSES] {
    rho.class_probabilities()
}

/// Multinomial draw of `shots` single-shot class outcomes.
pub fn sample_counts<R: Rng + ?Sized>(
    probs: &[f64; N_CLASSES],
    shots: u64,
    rng: &mut R,
) -> [u64; N_CLASSES] {
    let total: f64 = probs.iter().sum();
    let mut cumulative = [0.0; N_CLASSES];
    let mut acc = 0.0;
    for (cum, p) in cumulative.iter_mut().zip(probs) {
        acc += p / total;
        *cum = acc;
    }
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut counts = [0u64; N_CLASSES];
    for _ in 0..shots {
        let u: f64 = rng.random();
        let k = cumulative.iter().position(|&c| u < c).unwrap_or(last);
        counts[k] += 1;
    }
    counts
}

/// Simulated measurement of `shots` copies of `rho`.
pub fn sample_class_counts<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    shots: u64,
    rng: &mut R,
) -> [u64; N_CLASSES] {
    sample_counts(&rho.class_probabilities(), shots, rng)
}
