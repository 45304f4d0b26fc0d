//! Channels and instruments in Kraus form, their Choi operators, Stinespring
//! dilations and complementary channels, and Choi-based distances.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, re, ComplexMatrix, PartyDims, C64, RANK_TOL};

/// Completeness tolerance for a trace-preserving Kraus set.
pub const TP_TOL: f64 = 1e-9;

/// Ordered Kraus operators sharing one d_o × d shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrausSet {
    operators: Vec<ComplexMatrix>,
    input_dims: PartyDims,
    output_dims: PartyDims,
    completeness_defect: f64,
}

impl KrausSet {
    pub fn new(operators: Vec<ComplexMatrix>, input_dims: PartyDims, output_dims: PartyDims) -> Result<Self> {
        let (d, d_o) = (input_dims.total(), output_dims.total());
        if operators.is_empty() {
            return Err(Error::Argument("a Kraus set needs at least one operator".into()));
        }
        if let Some(bad) = operators.iter().find(|k| k.shape() != (d_o, d)) {
            return Err(Error::Dimension(format!(
                "Kraus operator of shape {:?}, expected {d_o}x{d}",
                bad.shape()
            )));
        }
        let completeness_defect = completeness_defect(&operators, d);
        Ok(Self {
            operators,
            input_dims,
            output_dims,
            completeness_defect,
        })
    }

    /// Kraus set on a single party, dimensions taken from the first operator.
    pub fn on_single_system(operators: Vec<ComplexMatrix>) -> Result<Self> {
        let (d_o, d) = operators
            .first()
            .ok_or_else(|| Error::Argument("a Kraus set needs at least one operator".into()))?
            .shape();
        Self::new(operators, PartyDims::single(d), PartyDims::single(d_o))
    }

    /// Kraus set on `parties` qubits, same input and output structure.
    pub fn on_qubits(parties: usize, operators: Vec<ComplexMatrix>) -> Result<Self> {
        let dims = PartyDims::qubits(parties);
        Self::new(operators, dims.clone(), dims)
    }

    pub fn identity(dims: PartyDims) -> Self {
        let d = dims.total();
        Self::new(vec![ComplexMatrix::identity(d)], dims.clone(), dims).expect("identity shape")
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn input_dims(&self) -> &PartyDims {
        &self.input_dims
    }

    pub fn output_dims(&self) -> &PartyDims {
        &self.output_dims
    }

    pub fn d_in(&self) -> usize {
        self.input_dims.total()
    }

    pub fn d_out(&self) -> usize {
        self.output_dims.total()
    }

    /// ‖Σ K†K − I‖ in operator norm.
    pub fn completeness_defect(&self) -> f64 {
        self.completeness_defect
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.completeness_defect <= TP_TOL
    }

    pub fn povm_elements(&self) -> Vec<ComplexMatrix> {
        self.operators.iter().map(|k| &k.adjoint() * k).collect()
    }

    fn require_tp(&self) -> Result<()> {
        if self.is_trace_preserving() {
            Ok(())
        } else {
            Err(Error::NotTracePreserving {
                defect: self.completeness_defect,
            })
        }
    }

    /// Vectorizations v = Σ_i |i⟩ ⊗ K|i⟩, one per operator.
    fn choi_vectors(&self) -> Vec<Vec<C64>> {
        let (d, d_o) = (self.d_in(), self.d_out());
        self.operators
            .iter()
            .map(|k| (0..d * d_o).map(|idx| k[(idx % d_o, idx / d_o)]).collect())
            .collect()
    }
}

fn completeness_defect(ops: &[ComplexMatrix], d: usize) -> f64 {
    let sum: ComplexMatrix = ops.iter().map(|k| &k.adjoint() * k).sum();
    linalg::operator_norm(&(&sum - &ComplexMatrix::identity(d)))
}

/// A Kraus set with its operators grouped into CP maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    kraus: KrausSet,
    partition: Vec<Vec<usize>>,
}

impl Instrument {
    pub fn new(kraus: KrausSet, partition: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; kraus.len()];
        for &j in partition.iter().flatten() {
            match seen.get_mut(j) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(Error::Argument(format!("operator {j} appears in two CP maps"))),
                None => return Err(Error::Argument(format!("operator index {j} out of range"))),
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::Argument(format!("operator {j} belongs to no CP map")));
        }
        if partition.iter().any(|b| b.is_empty()) {
            return Err(Error::Argument("empty CP-map block".into()));
        }
        kraus.require_tp()?;
        Ok(Self { kraus, partition })
    }

    pub fn kraus(&self) -> &KrausSet {
        &self.kraus
    }

    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    pub fn num_maps(&self) -> usize {
        self.partition.len()
    }

    /// Kraus operators of the r-th CP map (not trace preserving on its own).
    pub fn cp_map(&self, r: usize) -> Result<KrausSet> {
        let block = self
            .partition
            .get(r)
            .ok_or_else(|| Error::Argument(format!("no CP map {r}")))?;
        KrausSet::new(
            block.iter().map(|&j| self.kraus.operators[j].clone()).collect(),
            self.kraus.input_dims.clone(),
            self.kraus.output_dims.clone(),
        )
    }

    /// Index of the CP map holding operator j.
    pub fn map_of(&self, j: usize) -> Option<usize> {
        self.partition.iter().position(|b| b.contains(&j))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiNormalization {
    /// Σ|i⟩⟨j| ⊗ E(|i⟩⟨j|) / d, unit trace for channels.
    Normalized,
    /// Σ|i⟩⟨j| ⊗ E(|i⟩⟨j|), trace d for channels.
    Unnormalized,
}

/// Choi operator with the reference system first and the output second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiOperator {
    matrix: ComplexMatrix,
    normalization: ChoiNormalization,
    d_in: usize,
    d_out: usize,
}

impl ChoiOperator {
    pub fn from_matrix(matrix: ComplexMatrix, d_in: usize, d_out: usize, normalization: ChoiNormalization) -> Result<Self> {
        if matrix.shape() != (d_in * d_out, d_in * d_out) {
            return Err(Error::Dimension(format!(
                "Choi matrix of shape {:?} for d_in={d_in}, d_out={d_out}",
                matrix.shape()
            )));
        }
        if !matrix.is_hermitian() {
            return Err(Error::NotHermitian {
                defect: matrix.hermitian_defect(),
            });
        }
        Ok(Self {
            matrix,
            normalization,
            d_in,
            d_out,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn normalization(&self) -> ChoiNormalization {
        self.normalization
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn with_normalization(&self, normalization: ChoiNormalization) -> Self {
        let d = self.d_in as f64;
        let factor = match (self.normalization, normalization) {
            (a, b) if a == b => 1.0,
            (ChoiNormalization::Unnormalized, ChoiNormalization::Normalized) => 1.0 / d,
            _ => d,
        };
        Self {
            matrix: self.matrix.scale_real(factor),
            normalization,
            d_in: self.d_in,
            d_out: self.d_out,
        }
    }

    pub fn normalized(&self) -> Self {
        self.with_normalization(ChoiNormalization::Normalized)
    }

    pub fn rank(&self, tol: f64) -> usize {
        let ev = linalg::eigvalsh(&self.matrix).expect("Choi matrices are Hermitian");
        let max = ev.iter().copied().fold(0.0, f64::max);
        ev.iter().filter(|&&x| x > tol * max).count()
    }

    /// Trace distance between the normalized forms.
    pub fn trace_distance(&self, other: &ChoiOperator) -> Result<f64> {
        if (self.d_in, self.d_out) != (other.d_in, other.d_out) {
            return Err(Error::Dimension(format!(
                "Choi operators on ({}, {}) and ({}, {})",
                self.d_in, self.d_out, other.d_in, other.d_out
            )));
        }
        let a = self.normalized();
        let b = other.normalized();
        Ok(linalg::trace_norm(&(&a.matrix - &b.matrix)))
    }

    /// The same Choi matrix with its rank reduced to `rank` by dropping the
    /// smallest eigencomponents.
    pub fn truncated(&self, rank: usize) -> Self {
        let (vals, vecs) = linalg::eigh(&self.matrix).expect("Choi matrices are Hermitian");
        let n = vals.len();
        let kept: Vec<f64> = vals
            .iter()
            .enumerate()
            .map(|(k, &v)| if k + rank >= n { v } else { 0.0 })
            .collect();
        Self {
            matrix: linalg::spectral_fn(&kept, &vecs, |x| x),
            ..self.clone()
        }
    }

    /// Mass of entries coupling different classical register values, for a
    /// Choi operator whose output ends with a register of dimension `register`.
    pub fn register_cross_mass(&self, register: usize) -> f64 {
        let n = self.matrix.rows();
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i % register != j % register {
                    mass += self.matrix[(i, j)].norm();
                }
            }
        }
        mass
    }
}

/// Choi operator of a Kraus set.
pub fn choi(k: &KrausSet, normalization: ChoiNormalization) -> ChoiOperator {
    let n = k.d_in() * k.d_out();
    let vs = k.choi_vectors();
    let mut m = ComplexMatrix::zeros(n, n);
    for v in &vs {
        for i in 0..n {
            if v[i] == re(0.0) {
                continue;
            }
            for j in 0..n {
                m[(i, j)] += v[i] * v[j].conj();
            }
        }
    }
    let raw = ChoiOperator {
        matrix: m.hermitian_part(),
        normalization: ChoiNormalization::Unnormalized,
        d_in: k.d_in(),
        d_out: k.d_out(),
    };
    raw.with_normalization(normalization)
}

/// Rank of the Choi matrix at a threshold relative to its largest eigenvalue.
pub fn kraus_rank(k: &KrausSet, tol: f64) -> usize {
    choi(k, ChoiNormalization::Unnormalized).rank(tol)
}

/// Minimal Kraus set of the same channel from scaled Choi eigenvectors,
/// largest eigenvalue first. Each operator's largest-magnitude entry is made
/// real positive.
pub fn minimal_kraus(k: &KrausSet, tol: f64) -> KrausSet {
    let omega = choi(k, ChoiNormalization::Unnormalized);
    let (vals, vecs) = linalg::eigh(omega.matrix()).expect("Choi matrices are Hermitian");
    let max = vals.iter().copied().fold(0.0, f64::max);
    let (d, d_o) = (k.d_in(), k.d_out());
    let ops: Vec<ComplexMatrix> = (0..vals.len())
        .rev()
        .filter(|&col| vals[col] > tol * max)
        .map(|col| {
            let scale = vals[col].sqrt();
            let op = ComplexMatrix::from_fn(d_o, d, |o, i| vecs[(i * d_o + o, col)] * scale);
            fix_phase(&op)
        })
        .collect();
    KrausSet::new(ops, k.input_dims.clone(), k.output_dims.clone()).expect("shapes preserved")
}

fn fix_phase(op: &ComplexMatrix) -> ComplexMatrix {
    let mut best = re(0.0);
    for &z in op.data() {
        if z.norm() > best.norm() * (1.0 + 1e-12) {
            best = z;
        }
    }
    if best.norm() == 0.0 {
        return op.clone();
    }
    op.scale(best.conj() / best.norm())
}

/// Least-squares coefficients expressing every operator of `a` in the span
/// of `b`, with per-row residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct IsometryFit {
    pub w: ComplexMatrix,
    pub row_residuals: Vec<f64>,
    /// ‖W†W − I‖ in max-entry norm.
    pub isometry_defect: f64,
}

/// Fits a_j = Σ_m W_jm b_m. Fails when the operators of `b` are linearly
/// dependent or the shapes differ.
pub fn fit_isometry(a: &KrausSet, b: &KrausSet) -> Result<IsometryFit> {
    if (a.d_in(), a.d_out()) != (b.d_in(), b.d_out()) {
        return Err(Error::Dimension("Kraus sets act between different spaces".into()));
    }
    let basis = b.operators();
    let coeffs: Vec<(Vec<C64>, f64)> = a
        .operators()
        .iter()
        .map(|op| span_coefficients(op, basis))
        .collect::<Result<_>>()?;
    let kappa = basis.len();
    let w = ComplexMatrix::from_fn(a.len(), kappa, |j, m| coeffs[j].0[m]);
    let gram = &w.adjoint() * &w;
    let isometry_defect = (&gram - &ComplexMatrix::identity(kappa)).max_abs();
    Ok(IsometryFit {
        w,
        row_residuals: coeffs.into_iter().map(|(_, r)| r).collect(),
        isometry_defect,
    })
}

/// Least-squares expansion of `op` over linearly independent `basis`
/// operators; returns the coefficients and the Frobenius residual.
pub fn span_coefficients(op: &ComplexMatrix, basis: &[ComplexMatrix]) -> Result<(Vec<C64>, f64)> {
    let kappa = basis.len();
    if kappa == 0 {
        return Err(Error::Argument("empty basis".into()));
    }
    let len = op.data().len();
    if basis.iter().any(|b| b.shape() != op.shape()) {
        return Err(Error::Dimension("basis operators differ in shape from the target".into()));
    }
    if kappa > len {
        return Err(Error::Argument(format!(
            "{kappa} operators cannot be linearly independent in dimension {len}"
        )));
    }
    let bm = ComplexMatrix::from_fn(len, kappa, |r, m| basis[m].data()[r]);
    let (u, s, vt) = linalg::svd(&bm);
    if s[kappa - 1] <= RANK_TOL * s[0] {
        return Err(Error::Argument("basis operators are linearly dependent".into()));
    }
    let target = op.data();
    let ut_y: Vec<C64> = (0..kappa)
        .map(|k| (0..len).map(|r| u[(r, k)].conj() * target[r]).sum::<C64>() / s[k])
        .collect();
    let coeffs: Vec<C64> = (0..kappa)
        .map(|m| (0..kappa).map(|k| vt[(k, m)].conj() * ut_y[k]).sum())
        .collect();
    let recon: ComplexMatrix = basis
        .iter()
        .zip(&coeffs)
        .map(|(b, &w)| b.scale(w))
        .sum();
    Ok((coeffs, (&recon - op).frobenius_norm()))
}

/// W with a_j = Σ_m W_jm b_m and W†W = I, if one exists within `tol`.
pub fn isometric_relation(a: &KrausSet, b: &KrausSet, tol: f64) -> Option<ComplexMatrix> {
    let fit = fit_isometry(a, b).ok()?;
    let ok = fit.row_residuals.iter().all(|&r| r <= tol) && fit.isometry_defect <= tol.max(1e-12);
    ok.then_some(fit.w)
}

/// Stinespring isometry V = Σ_j |j⟩_e ⊗ K_j, environment leftmost.
pub fn stinespring(k: &KrausSet) -> Result<ComplexMatrix> {
    k.require_tp()?;
    let (d, d_o) = (k.d_in(), k.d_out());
    Ok(ComplexMatrix::from_fn(k.len() * d_o, d, |r, i| {
        k.operators[r / d_o][(r % d_o, i)]
    }))
}

/// Complementary channel: (Q_l)_{j,i} = (K_j)_{l,i}.
pub fn complementary(k: &KrausSet) -> Result<KrausSet> {
    k.require_tp()?;
    let (d, d_o, d_e) = (k.d_in(), k.d_out(), k.len());
    let ops = (0..d_o)
        .map(|l| ComplexMatrix::from_fn(d_e, d, |j, i| k.operators[j][(l, i)]))
        .collect();
    KrausSet::new(ops, k.input_dims.clone(), PartyDims::single(d_e))
}

/// E(ρ) = Σ K ρ K†.
pub fn apply(k: &KrausSet, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    apply_ops(k.operators(), k.d_in(), k.d_out(), rho)
}

fn apply_ops(ops: &[ComplexMatrix], d: usize, d_o: usize, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if rho.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "state of shape {:?} for input dimension {d}",
            rho.shape()
        )));
    }
    Ok(ops
        .iter()
        .map(|op| &(op * rho) * &op.adjoint())
        .fold(ComplexMatrix::zeros(d_o, d_o), |acc, x| &acc + &x))
}

/// (J_r(ρ), Tr J_r(ρ)) for every CP map.
pub fn apply_instrument(inst: &Instrument, rho: &ComplexMatrix) -> Result<Vec<(ComplexMatrix, f64)>> {
    let k = inst.kraus();
    inst.partition
        .iter()
        .map(|block| {
            let ops: Vec<ComplexMatrix> = block.iter().map(|&j| k.operators[j].clone()).collect();
            let out = apply_ops(&ops, k.d_in(), k.d_out(), rho)?;
            let w = out.trace().re;
            Ok((out, w))
        })
        .collect()
}

/// ‖Φ_a − Φ_b‖₁ on normalized Choi operators, outputs zero-padded to a
/// common dimension. A lower bound on the diamond distance.
pub fn choi_distance(a: &KrausSet, b: &KrausSet) -> Result<f64> {
    if a.d_in() != b.d_in() {
        return Err(Error::Argument(format!(
            "channels with input dimensions {} and {}",
            a.d_in(),
            b.d_in()
        )));
    }
    let d_o = a.d_out().max(b.d_out());
    let pa = pad_outputs(a, d_o);
    let pb = pad_outputs(b, d_o);
    choi(&pa, ChoiNormalization::Normalized).trace_distance(&choi(&pb, ChoiNormalization::Normalized))
}

fn pad_outputs(k: &KrausSet, d_o: usize) -> KrausSet {
    if k.d_out() == d_o {
        return k.clone();
    }
    let ops = k.operators.iter().map(|op| op.pad_to(d_o, k.d_in())).collect();
    KrausSet::new(ops, k.input_dims.clone(), PartyDims::single(d_o)).expect("padded shapes agree")
}

/// Quantum-classical embedding: K_m ⊗ |r(m)⟩ with the register rightmost,
/// where r(m) is the CP map holding operator m.
pub fn qc_embed(inst: &Instrument) -> KrausSet {
    let k = inst.kraus();
    let reg = inst.num_maps();
    let (d, d_o) = (k.d_in(), k.d_out());
    let ops = k
        .operators
        .iter()
        .enumerate()
        .map(|(m, op)| {
            let r = inst.map_of(m).expect("partition is exhaustive");
            ComplexMatrix::from_fn(d_o * reg, d, |row, i| {
                if row % reg == r {
                    op[(row / reg, i)]
                } else {
                    re(0.0)
                }
            })
        })
        .collect();
    KrausSet::new(ops, k.input_dims.clone(), k.output_dims.concat(&PartyDims::single(reg)))
        .expect("register shapes agree")
}

/// Random channel with `rank` Kraus operators from a Haar-like isometry
/// (Gaussian matrix, orthonormalized). Needs rank·d_o ≥ d.
pub fn random_channel<R: Rng + ?Sized>(d: usize, d_o: usize, rank: usize, rng: &mut R) -> KrausSet {
    assert!(rank * d_o >= d, "no isometry from dimension {d} into {rank}x{d_o}");
    let g = ComplexMatrix::from_fn(rank * d_o, d, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let (u, _, vt) = linalg::svd(&g);
    let v = &u * &vt;
    let ops = (0..rank)
        .map(|j| ComplexMatrix::from_fn(d_o, d, |o, i| v[(j * d_o + o, i)]))
        .collect();
    KrausSet::new(ops, PartyDims::single(d), PartyDims::single(d_o)).expect("random channel shape")
}

/// Random density matrix from a Gaussian Ginibre matrix.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let p = &g * &g.adjoint();
    let tr = p.trace().re;
    p.scale_real(1.0 / tr).hermitian_part()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> ComplexMatrix {
        ComplexMatrix::real_diag(v)
    }

    /// The four diagonal operators [11], diag(2/3,0,1,0), diag(2/3,1,0,0),
    /// diag(1/3,0,0,0), written out independently of casework.
    fn hat_set() -> KrausSet {
        KrausSet::on_qubits(
            2,
            vec![
                diag(&[0.0, 0.0, 0.0, 1.0]),
                diag(&[2.0 / 3.0, 0.0, 1.0, 0.0]),
                diag(&[2.0 / 3.0, 1.0, 0.0, 0.0]),
                diag(&[1.0 / 3.0, 0.0, 0.0, 0.0]),
            ],
        )
        .unwrap()
    }

    fn hadamard() -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::from_real_rows(&[&[h, h], &[h, -h]])
    }

    /// Oracle Ω = Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|) by direct Kraus action.
    fn brute_choi(k: &KrausSet) -> ComplexMatrix {
        let (d, d_o) = (k.d_in(), k.d_out());
        let mut m = ComplexMatrix::zeros(d * d_o, d * d_o);
        for i in 0..d {
            for j in 0..d {
                let e = apply(k, &ComplexMatrix::unit(d, d, i, j)).unwrap();
                for a in 0..d_o {
                    for b in 0..d_o {
                        m[(i * d_o + a, j * d_o + b)] += e[(a, b)];
                    }
                }
            }
        }
        m
    }

    #[test]
    fn choi_matches_direct_action() {
        let k = hat_set();
        let om = choi(&k, ChoiNormalization::Unnormalized);
        assert!((om.matrix() - &brute_choi(&k)).max_abs() < 1e-15);
        assert_abs_diff_eq!(om.matrix()[(0, 5)].re, 2.0 / 3.0, epsilon = 1e-15);
        // diagonal block for input |01⟩⟨01| is [01]
        let blk = om.matrix().submatrix(&[4, 5, 6, 7], &[4, 5, 6, 7]);
        assert!((&blk - &ComplexMatrix::projector(4, 1)).max_abs() < 1e-15);
        let phi = choi(&k, ChoiNormalization::Normalized);
        assert_abs_diff_eq!(phi.matrix().trace().re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_channel_choi() {
        let om = choi(&KrausSet::identity(PartyDims::single(2)), ChoiNormalization::Unnormalized);
        assert_abs_diff_eq!(om.matrix().trace().re, 2.0, epsilon = 1e-15);
        assert_eq!(om.rank(1e-8), 1);
        let mut expect = ComplexMatrix::zeros(4, 4);
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            expect[(i, j)] = re(1.0);
        }
        assert!((om.matrix() - &expect).max_abs() < 1e-15);
    }

    #[test]
    fn ranks_and_minimal_sets() {
        let k = hat_set();
        assert_eq!(kraus_rank(&k, 1e-8), 4);
        let u = KrausSet::on_single_system(vec![hadamard()]).unwrap();
        assert_eq!(kraus_rank(&u, 1e-8), 1);
        let min = minimal_kraus(&k, 1e-8);
        assert_eq!(min.len(), 4);
        let c1 = choi(&k, ChoiNormalization::Unnormalized);
        let c2 = choi(&min, ChoiNormalization::Unnormalized);
        assert!((c1.matrix() - c2.matrix()).max_abs() < 1e-12);
        // padding with zero operators leaves the minimal set unchanged in size
        let mut ops = k.operators().to_vec();
        ops.push(ComplexMatrix::zeros(4, 4));
        ops.insert(1, ComplexMatrix::zeros(4, 4));
        let padded = KrausSet::on_qubits(2, ops).unwrap();
        assert_eq!(minimal_kraus(&padded, 1e-8).len(), 4);
    }

    #[test]
    fn minimal_kraus_phase_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_channel(2, 3, 4, &mut rng);
        for op in minimal_kraus(&k, 1e-8).operators() {
            let best = op
                .data()
                .iter()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap();
            assert!(best.im.abs() < 1e-12 && best.re > 0.0);
        }
    }

    #[test]
    fn isometric_relation_examples() {
        let k = hat_set();
        let w = isometric_relation(&k, &k, 1e-10).unwrap();
        assert!((&w - &ComplexMatrix::identity(4)).max_abs() < 1e-12);
        let mut ops = k.operators().to_vec();
        ops.push(k.operators()[0].scale_real(0.5));
        let dependent = KrausSet::on_qubits(2, ops).unwrap();
        assert!(isometric_relation(&k, &dependent, 1e-10).is_none());
        assert!(fit_isometry(&k, &dependent).is_err());
    }

    #[test]
    fn stinespring_and_complement() {
        let u = KrausSet::on_single_system(vec![hadamard()]).unwrap();
        assert_eq!(stinespring(&u).unwrap(), hadamard());
        let q = complementary(&u).unwrap();
        assert_eq!(q.d_out(), 1);
        assert!(q.is_trace_preserving());

        let k = hat_set();
        let v = stinespring(&k).unwrap();
        assert_eq!(v.shape(), (16, 4));
        assert!((&(&v.adjoint() * &v) - &ComplexMatrix::identity(4)).max_abs() < 1e-12);
        let q = complementary(&k).unwrap();
        assert_abs_diff_eq!(q.operators()[0][(1, 0)].re, 2.0 / 3.0, epsilon = 0.0);
        assert!(q.is_trace_preserving());

        let bad = KrausSet::on_single_system(vec![diag(&[1.0, 0.5])]).unwrap();
        assert!(stinespring(&bad).is_err());
        assert!(complementary(&bad).is_err());
    }

    #[test]
    fn stinespring_reproduces_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = hat_set();
        let v = stinespring(&k).unwrap();
        let dims = PartyDims::new(vec![k.len(), k.d_out()]).unwrap();
        for _ in 0..5 {
            let rho = random_density(4, &mut rng);
            let big = &(&v * &rho) * &v.adjoint();
            let out = linalg::partial_trace(&big, &dims, &[1]).unwrap();
            assert!((&out - &apply(&k, &rho).unwrap()).max_abs() < 1e-13);
        }
    }

    #[test]
    fn double_complement_has_same_choi() {
        let k = hat_set();
        let cc = complementary(&complementary(&k).unwrap()).unwrap();
        assert_eq!(cc.d_out(), k.d_out());
        let a = choi(&k, ChoiNormalization::Normalized);
        let b = choi(&cc, ChoiNormalization::Normalized);
        assert!(a.trace_distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn apply_examples() {
        let k = hat_set();
        let out = apply(&k, &ComplexMatrix::projector(4, 0)).unwrap();
        assert!((&out - &ComplexMatrix::projector(4, 0)).max_abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_density(3, &mut rng);
        let id = KrausSet::identity(PartyDims::single(3));
        assert_eq!(apply(&id, &rho).unwrap(), rho);
        assert!(apply(&k, &rho).is_err());
    }

    #[test]
    fn instrument_partition_validation() {
        let k = hat_set();
        assert!(Instrument::new(k.clone(), vec![vec![0], vec![1, 2, 3]]).is_ok());
        assert!(Instrument::new(k.clone(), vec![vec![0], vec![1, 2]]).is_err());
        assert!(Instrument::new(k.clone(), vec![vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(Instrument::new(k.clone(), vec![vec![0, 1, 2, 3, 4]]).is_err());
        let not_tp = KrausSet::on_single_system(vec![diag(&[1.0, 0.5])]).unwrap();
        assert!(matches!(
            Instrument::new(not_tp, vec![vec![0]]),
            Err(Error::NotTracePreserving { .. })
        ));
    }

    #[test]
    fn qc_embed_single_block_is_trivial_register() {
        let k = hat_set();
        let inst = Instrument::new(k.clone(), vec![vec![0, 1, 2, 3]]).unwrap();
        let e = qc_embed(&inst);
        assert_eq!(e.operators(), k.operators());
        assert_eq!(e.output_dims().dims(), &[2, 2, 1]);
    }

    #[test]
    fn qc_embed_blocks() {
        let inst = Instrument::new(hat_set(), vec![vec![0], vec![1, 3], vec![2]]).unwrap();
        let e = qc_embed(&inst);
        assert_eq!(e.len(), 4);
        assert_eq!(e.operators()[0].shape(), (12, 4));
        assert!(e.is_trace_preserving());
        let om = choi(&e, ChoiNormalization::Normalized);
        assert!(om.register_cross_mass(3) < 1e-12);
    }

    #[test]
    fn truncation_is_at_least_smallest_kept_eigenvalue() {
        let k = hat_set();
        let phi = choi(&k, ChoiNormalization::Normalized);
        let ev = linalg::eigvalsh(phi.matrix()).unwrap();
        let sigma4 = ev[ev.len() - 4];
        assert!(sigma4 > 0.0);
        let d = phi.trace_distance(&phi.truncated(3)).unwrap();
        assert!(d >= sigma4 - 1e-12);
    }

    #[test]
    fn choi_distance_pads_outputs() {
        let k = hat_set();
        assert_abs_diff_eq!(choi_distance(&k, &k).unwrap(), 0.0, epsilon = 1e-15);
        let id2 = KrausSet::identity(PartyDims::single(2));
        let wide = KrausSet::on_single_system(vec![ComplexMatrix::identity(2).pad_to(3, 2)]).unwrap();
        assert!(choi_distance(&id2, &wide).unwrap() < 1e-15);
        assert!(choi_distance(&id2, &k).is_err());
    }

    fn seed() -> impl Strategy<Value = u64> {
        any::<u64>()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn tp_choi_trace_is_dimension(s in seed(), rank in 2usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let k = random_channel(3, 2, rank, &mut rng);
            let tr = choi(&k, ChoiNormalization::Unnormalized).matrix().trace().re;
            prop_assert!((tr - 3.0).abs() <= 1e-10);
        }

        #[test]
        fn isometry_preserves_choi(s in seed()) {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let k = random_channel(2, 2, 3, &mut rng);
            let min = minimal_kraus(&k, 1e-8);
            prop_assert_eq!(min.len(), 3);
            let w = isometric_relation(&k, &min, 1e-9);
            prop_assert!(w.is_some());
            let w = w.unwrap();
            let rebuilt: Vec<ComplexMatrix> = (0..w.rows()).map(|j| {
                min.operators().iter().enumerate().map(|(m, b)| b.scale(w[(j, m)])).sum()
            }).collect();
            let rebuilt = KrausSet::on_single_system(rebuilt).unwrap();
            let a = choi(&rebuilt, ChoiNormalization::Unnormalized);
            let b = choi(&min, ChoiNormalization::Unnormalized);
            prop_assert!((a.matrix() - b.matrix()).max_abs() <= 1e-9);
        }

        #[test]
        fn minimal_operators_are_orthogonal(s in seed()) {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let k = random_channel(2, 3, 5, &mut rng);
            let min = minimal_kraus(&k, 1e-8);
            for (a, x) in min.operators().iter().enumerate() {
                for y in &min.operators()[a + 1..] {
                    prop_assert!(x.hs_inner(y).norm() <= 1e-10);
                }
            }
        }

        #[test]
        fn choi_distance_is_a_metric(s in seed()) {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let ks: Vec<KrausSet> = (0..3).map(|_| random_channel(2, 2, 2, &mut rng)).collect();
            let dab = choi_distance(&ks[0], &ks[1]).unwrap();
            let dba = choi_distance(&ks[1], &ks[0]).unwrap();
            let dbc = choi_distance(&ks[1], &ks[2]).unwrap();
            let dac = choi_distance(&ks[0], &ks[2]).unwrap();
            prop_assert!((dab - dba).abs() <= 1e-10);
            prop_assert!(dac <= dab + dbc + 1e-10);
        }

        #[test]
        fn complementary_is_index_transposition(s in seed()) {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let k = random_channel(2, 3, 4, &mut rng);
            let q = complementary(&k).unwrap();
            for (j, kj) in k.operators().iter().enumerate() {
                for (l, ql) in q.operators().iter().enumerate() {
                    for i in 0..2 {
                        prop_assert_eq!(kj[(l, i)], ql[(j, i)]);
                    }
                }
            }
        }

        #[test]
        fn lower_rank_is_far(s in seed()) {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let k = random_channel(2, 2, 4, &mut rng);
            let phi = choi(&k, ChoiNormalization::Normalized);
            let ev = linalg::eigvalsh(phi.matrix()).unwrap();
            let sk = ev[ev.len() - 4];
            let other = random_channel(2, 2, 3, &mut rng);
            let d = choi_distance(&k, &other).unwrap();
            prop_assert!(d >= sk - 1e-9);
        }
    }
}
