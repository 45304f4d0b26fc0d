//! Worked examples: the two-qubit instrument and its limiting measurement,
//! the W-state concurrence argument and the P-qubit generalization.

use serde::{Deserialize, Serialize};

use crate::channels::{self, choi, ChoiNormalization, ChoiOperator, Instrument, KrausSet};
use crate::error::{Error, Result};
use crate::linalg::{self, kron, kron2, re, ComplexMatrix, PartyDims, C64};
use crate::locc::{self, CFamily};
use crate::quadrature::SigmaRule;
use crate::report::{Check, CheckList};
use crate::zonoid::{CoefficientMatrix, ZonoidSpec};

fn p0() -> ComplexMatrix {
    ComplexMatrix::projector(2, 0)
}

fn p1() -> ComplexMatrix {
    ComplexMatrix::projector(2, 1)
}

/// |ab⟩⟨ab| on two qubits.
fn proj2(ab: usize) -> ComplexMatrix {
    ComplexMatrix::projector(4, ab)
}

/// T₁ = I/√3, T₂ = ([0] + 2[1])/√6.
pub fn t_operators() -> [ComplexMatrix; 2] {
    [
        ComplexMatrix::identity(2).scale_real(1.0 / 3f64.sqrt()),
        (&p0() + &p1().scale_real(2.0)).scale_real(1.0 / 6f64.sqrt()),
    ]
}

/// The five product operators of the instrument: [11], T_i ⊗ [0], [0] ⊗ T_i.
pub fn primed_operators() -> Vec<ComplexMatrix> {
    let t = t_operators();
    let mut ops = vec![proj2(3)];
    ops.extend(t.iter().map(|ti| kron2(ti, &p0())));
    ops.extend(t.iter().map(|ti| kron2(&p0(), ti)));
    ops
}

/// Minimal product set ([11], ⅔[00]+[10], ⅔[00]+[01], ⅓[00]).
pub fn hat_operators() -> Vec<ComplexMatrix> {
    vec![
        proj2(3),
        &proj2(0).scale_real(2.0 / 3.0) + &proj2(2),
        &proj2(0).scale_real(2.0 / 3.0) + &proj2(1),
        proj2(0).scale_real(1.0 / 3.0),
    ]
}

/// The 5×4 isometry with K′_j = Σ_l W_jl K̂_l.
pub fn isometry_w() -> ComplexMatrix {
    let (a, b, c) = ((1.0f64 / 3.0).sqrt(), (2.0f64 / 3.0).sqrt(), (1.0f64 / 6.0).sqrt());
    ComplexMatrix::from_real_rows(&[
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, a, 0.0, a],
        &[0.0, b, 0.0, -c],
        &[0.0, 0.0, a, a],
        &[0.0, 0.0, b, -c],
    ])
}

/// CP-map assignment of the primed operators.
pub fn instrument_partition() -> Vec<Vec<usize>> {
    vec![vec![0], vec![1, 2], vec![3, 4]]
}

pub fn hat_spec() -> ZonoidSpec {
    ZonoidSpec::new(hat_operators(), None).expect("independent basis")
}

/// Block zonoid of the instrument: each CP map keeps its own minimal set.
pub fn instrument_spec() -> ZonoidSpec {
    ZonoidSpec::new(primed_operators(), Some(instrument_partition())).expect("independent within blocks")
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoQubitExample {
    pub instrument: Instrument,
    pub minimal: KrausSet,
    pub w_iso: ComplexMatrix,
}

pub fn two_qubit_instrument() -> TwoQubitExample {
    let kraus = KrausSet::on_qubits(2, primed_operators()).expect("complete");
    TwoQubitExample {
        instrument: Instrument::new(kraus, instrument_partition()).expect("valid partition"),
        minimal: KrausSet::on_qubits(2, hat_operators()).expect("complete"),
        w_iso: isometry_w(),
    }
}

fn check_s(s: f64) -> Result<f64> {
    if !(1.0..=4.0).contains(&s) {
        return Err(Error::Range(format!("s = {s} outside [1, 4]")));
    }
    Ok(s.sqrt() - 1.0)
}

/// Limiting POVM at s: E₁ = [11] and the dσ-densities M(s)⊗[0], [0]⊗M(s).
#[derive(Clone, Debug, PartialEq)]
pub struct LimitingPovm {
    pub e1: ComplexMatrix,
    pub e2: ComplexMatrix,
    pub e3: ComplexMatrix,
}

impl LimitingPovm {
    /// Measurement operators K_i = √E_i (per unit √dσ for the densities).
    pub fn kraus(&self) -> [ComplexMatrix; 3] {
        [sqrt_diag(&self.e1), sqrt_diag(&self.e2), sqrt_diag(&self.e3)]
    }
}

fn sqrt_diag(m: &ComplexMatrix) -> ComplexMatrix {
    linalg::sqrt_psd(m).expect("diagonal PSD")
}

pub fn limiting_povm(s: f64) -> Result<LimitingPovm> {
    Ok(limiting_povm_sigma(check_s(s)?))
}

pub fn limiting_povm_sigma(sigma: f64) -> LimitingPovm {
    let m = ComplexMatrix::real_diag(&[sigma, 1.0]);
    LimitingPovm {
        e1: proj2(3),
        e2: kron2(&m, &p0()),
        e3: kron2(&p0(), &m),
    }
}

/// Unnormalized Choi contribution Σ_{ij} |i⟩⟨j| ⊗ K|i⟩⟨j|K† of one operator.
fn choi_term(k: &ComplexMatrix) -> ComplexMatrix {
    let (d_o, d) = k.shape();
    let v: Vec<C64> = (0..d * d_o).map(|r| k[(r % d_o, r / d_o)]).collect();
    ComplexMatrix::outer(&v, &v)
}

/// Ω of the limiting measurement: [11]'s term plus the σ-integrals of the
/// two continuous families.
pub fn limiting_choi_2q() -> ChoiOperator {
    limiting_choi_2q_with(&SigmaRule::default())
}

/// [`limiting_choi_2q`] with a chosen σ-rule.
pub fn limiting_choi_2q_with(rule: &SigmaRule) -> ChoiOperator {
    let k1 = proj2(3);
    let cont = rule.integrate_matrix(|sg| {
        let [_, k2, k3] = limiting_povm_sigma(sg).kraus();
        &choi_term(&k2) + &choi_term(&k3)
    });
    let omega = &choi_term(&k1) + &cont;
    ChoiOperator::from_matrix(omega, 4, 4, ChoiNormalization::Unnormalized).expect("4x4 channel")
}

/// Hat-basis coefficients of K₂ and K₃ per √dσ: (0,1,0,3√σ−2), (0,0,1,3√σ−2).
pub fn hat_rows(sigma: f64) -> [[f64; 4]; 2] {
    let t = 3.0 * sigma.sqrt() - 2.0;
    [[0.0, 1.0, 0.0, t], [0.0, 0.0, 1.0, t]]
}

/// Primed-basis coefficients of K₂ over (K′₂, K′₃) and of K₃ over (K′₄, K′₅).
pub fn primed_rows(sigma: f64) -> [f64; 2] {
    let r = sigma.sqrt();
    [3f64.sqrt() * (2.0 * r - 1.0), 6f64.sqrt() * (1.0 - r)]
}

/// Column normalization and orthogonality of the continuous isometry.
pub fn continuous_isometry_check() -> CheckList {
    let rule = SigmaRule::default();
    let t = |sg: f64| 3.0 * sg.sqrt() - 2.0;
    let mut l = CheckList::new();
    l.push(Check::at_most("last_column_norm", (2.0 * rule.integrate(|sg| t(sg).powi(2)) - 1.0).abs(), 1e-10));
    l.push(Check::at_most("last_column_orthogonal", rule.integrate(t).abs(), 1e-10));
    l.push(Check::at_most("middle_column_norm", (rule.integrate(|_| 1.0) - 1.0).abs(), 1e-10));
    // the rows themselves, fitted against the minimal set
    let hats = hat_operators();
    let mut row_res = 0.0f64;
    let mut row_dev = 0.0f64;
    let mut gram = ComplexMatrix::projector(4, 0);
    for &(sg, w) in rule.points() {
        let povm = limiting_povm_sigma(sg);
        let [_, k2, k3] = povm.kraus();
        for (k, expect) in [k2, k3].iter().zip(hat_rows(sg)) {
            let (c, r) = channels::span_coefficients(k, &hats).expect("independent");
            row_res = row_res.max(r);
            row_dev = row_dev.max(c.iter().zip(expect).map(|(a, b)| (a - re(b)).norm()).fold(0.0, f64::max));
            gram = &gram + &ComplexMatrix::outer(&c, &c).conj().scale_real(w);
        }
    }
    l.push(Check::at_most("row_residual", row_res, 1e-10));
    l.push(Check::at_most("row_coefficients", row_dev, 1e-10));
    l.push(Check::at_most("isometry", (&gram - &ComplexMatrix::identity(4)).max_abs(), 1e-10));
    l
}

/// Block-diagonal relation of the limiting operators to the primed set.
pub fn block_relation_check() -> CheckList {
    let rule = SigmaRule::default();
    let ops = primed_operators();
    let mut res = 0.0f64;
    let mut dev = 0.0f64;
    let mut gram = ComplexMatrix::projector(5, 0);
    for &(sg, w) in rule.points().iter().chain(&[(0.0, 0.0), (0.37, 0.0), (1.0, 0.0)]) {
        let [_, k2, k3] = limiting_povm_sigma(sg).kraus();
        let expect = primed_rows(sg);
        for (k, block) in [(k2, [1usize, 2]), (k3, [3, 4])] {
            let (c, r) = channels::span_coefficients(&k, &[ops[block[0]].clone(), ops[block[1]].clone()]).expect("independent pair");
            res = res.max(r);
            dev = dev.max(c.iter().zip(expect).map(|(a, b)| (a - re(b)).norm()).fold(0.0, f64::max));
            let mut row = vec![re(0.0); 5];
            row[block[0]] = c[0];
            row[block[1]] = c[1];
            gram = &gram + &ComplexMatrix::outer(&row, &row).conj().scale_real(w);
        }
    }
    let mut l = CheckList::new();
    l.push(Check::at_most("row_residual", res, 1e-10));
    l.push(Check::at_most("row_coefficients", dev, 1e-10));
    l.push(Check::at_most("isometry", (&gram - &ComplexMatrix::identity(5)).max_abs(), 1e-10));
    l
}

/// Coarse-graining the K₂ (resp. K₃) outcomes reproduces J₂ (resp. J₃) on
/// every |i⟩⟨j|.
pub fn coarse_grain_check() -> CheckList {
    let ex = two_qubit_instrument();
    let rule = SigmaRule::default();
    let maps = [ex.instrument.cp_map(1).expect("map"), ex.instrument.cp_map(2).expect("map")];
    let mut defects = [0.0f64; 2];
    for i in 0..4 {
        for j in 0..4 {
            let rho = ComplexMatrix::unit(4, 4, i, j);
            for (which, defect) in defects.iter_mut().enumerate() {
                let got = rule.integrate_matrix(|sg| {
                    let k = &limiting_povm_sigma(sg).kraus()[which + 1];
                    &(k * &rho) * &k.adjoint()
                });
                let want = channels::apply(&maps[which], &rho).expect("shape");
                *defect = defect.max((&got - &want).max_abs());
            }
        }
    }
    let mut l = CheckList::new();
    l.push(Check::at_most("coarse_grain_j2", defects[0], 1e-9));
    l.push(Check::at_most("coarse_grain_j3", defects[1], 1e-9));
    l
}

/// Block-diagonal coefficient matrices over the primed basis: the main path
/// C(σ) = e₀e₀† + ∫₀^σ (r₂r₂† ⊕ r₃r₃†), and the side families
/// (1−x)C(σ) + x r r† in the J₂ or J₃ block.
pub fn instrument_c_matrix(name: CFamily, s: f64, x: Option<f64>) -> Result<CoefficientMatrix> {
    let sigma = check_s(s)?;
    let r = sigma.sqrt();
    let a = 6.0 * sigma * sigma - 8.0 * sigma * r + 3.0 * sigma;
    let b = 6.0 * sigma - 8.0 * sigma * r + 3.0 * sigma * sigma;
    let cross = 18f64.sqrt() * (2.0 * sigma * r - sigma * sigma - sigma);
    let mut main = ComplexMatrix::projector(5, 0);
    for off in [1, 3] {
        main[(off, off)] = re(a);
        main[(off + 1, off + 1)] = re(b);
        main[(off, off + 1)] = re(cross);
        main[(off + 1, off)] = re(cross);
    }
    let base = match name {
        CFamily::C1 => main.clone(),
        CFamily::C2 => primed_density(0, sigma),
        CFamily::C3 => primed_density(1, sigma),
    };
    let m = match x {
        None => base,
        Some(x) if (0.0..=1.0).contains(&x) => &main.scale_real(1.0 - x) + &base.scale_real(x),
        Some(x) => return Err(Error::Range(format!("x = {x} outside [0, 1]"))),
    };
    CoefficientMatrix::new(m)
}

/// r r† for the K₂ (0) or K₃ (1) row over the primed basis.
pub fn primed_density(which: usize, sigma: f64) -> ComplexMatrix {
    let [u, v] = primed_rows(sigma);
    let mut w = vec![re(0.0); 5];
    w[1 + 2 * which] = re(u);
    w[2 + 2 * which] = re(v);
    ComplexMatrix::outer(&w, &w)
}

/// Hat-basis density r r† of K₂ (0) or K₃ (1).
pub fn hat_density(which: usize, sigma: f64) -> ComplexMatrix {
    let w: Vec<C64> = hat_rows(sigma)[which].iter().map(|&x| re(x)).collect();
    ComplexMatrix::outer(&w, &w)
}

/// Sample grids shared by the limit-condition checks.
pub fn sigma_grid_s(points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| (1.0 + k as f64 / (points - 1) as f64).powi(2))
        .collect()
}

pub fn x_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| k as f64 / (points - 1) as f64).collect()
}

/// Limit conditions for the limiting family over the minimal basis.
pub fn limit_conditions_minimal(sigma_points: usize, x_points: usize, path_samples: usize) -> Result<locc::TheoremReport> {
    let spec = hat_spec();
    let lp = locc::LimitPath { parties: 2 };
    let c1 = |s: f64, _x: f64| locc::c_matrix_family(CFamily::C1, s, None);
    let c2 = |s: f64, x: f64| locc::c_matrix_family(CFamily::C2, s, Some(x));
    let c3 = |s: f64, x: f64| locc::c_matrix_family(CFamily::C3, s, Some(x));
    let d2 = |sg: f64| hat_density(0, sg);
    let d3 = |sg: f64| hat_density(1, sg);
    let s_grid = sigma_grid_s(sigma_points);
    let paths = [locc::PathCondition {
        name: "main".into(),
        path: &lp,
        samples: (0..path_samples)
            .map(|k| 4.0 - 3.0 * k as f64 / (path_samples - 1).max(1) as f64)
            .collect(),
        endpoint: Some(locc::Endpoint::Kraus(hat_operators()[0].clone())),
        cp_map: None,
    }];
    let fams = [
        locc::FamilyCondition {
            name: "c1".into(),
            coefficients: &c1,
            s_grid: s_grid.clone(),
            x_grid: vec![0.0],
            density: None,
            cp_map: None,
        },
        locc::FamilyCondition {
            name: "c2".into(),
            coefficients: &c2,
            s_grid: s_grid.clone(),
            x_grid: x_grid(x_points),
            density: Some(&d2),
            cp_map: None,
        },
        locc::FamilyCondition {
            name: "c3".into(),
            coefficients: &c3,
            s_grid,
            x_grid: x_grid(x_points),
            density: Some(&d3),
            cp_map: None,
        },
    ];
    locc::verify_theorem_conditions(&spec, &paths, &fams, None, &locc::TheoremOptions::default())
}

/// Limit conditions for the limiting family over the instrument's
/// per-map bases.
pub fn limit_conditions_blocked(sigma_points: usize, x_points: usize, path_samples: usize) -> Result<locc::TheoremReport> {
    let spec = instrument_spec();
    let part = instrument_partition();
    let lp = locc::LimitPath { parties: 2 };
    let c1 = |s: f64, _x: f64| instrument_c_matrix(CFamily::C1, s, None);
    let c2 = |s: f64, x: f64| instrument_c_matrix(CFamily::C2, s, Some(x));
    let c3 = |s: f64, x: f64| instrument_c_matrix(CFamily::C3, s, Some(x));
    let d2 = |sg: f64| primed_density(0, sg);
    let d3 = |sg: f64| primed_density(1, sg);
    let s_grid = sigma_grid_s(sigma_points);
    let paths = [locc::PathCondition {
        name: "main".into(),
        path: &lp,
        samples: (0..path_samples)
            .map(|k| 4.0 - 3.0 * k as f64 / (path_samples - 1).max(1) as f64)
            .collect(),
        endpoint: Some(locc::Endpoint::Kraus(primed_operators()[0].clone())),
        cp_map: Some(0),
    }];
    let fams = [
        locc::FamilyCondition {
            name: "c1".into(),
            coefficients: &c1,
            s_grid: s_grid.clone(),
            x_grid: vec![0.0],
            density: None,
            cp_map: None,
        },
        locc::FamilyCondition {
            name: "c2".into(),
            coefficients: &c2,
            s_grid: s_grid.clone(),
            x_grid: x_grid(x_points),
            density: Some(&d2),
            cp_map: Some(1),
        },
        locc::FamilyCondition {
            name: "c3".into(),
            coefficients: &c3,
            s_grid,
            x_grid: x_grid(x_points),
            density: Some(&d3),
            cp_map: Some(2),
        },
    ];
    locc::verify_theorem_conditions(&spec, &paths, &fams, Some(&part), &locc::TheoremOptions::default())
}

/// Wootters concurrence of a two-qubit density matrix.
pub fn concurrence(rho: &ComplexMatrix) -> Result<f64> {
    if rho.shape() != (4, 4) {
        return Err(Error::Dimension(format!("concurrence needs a 4x4 state, got {:?}", rho.shape())));
    }
    if !rho.is_hermitian() {
        return Err(Error::NotHermitian {
            defect: rho.hermitian_defect(),
        });
    }
    let tr = rho.trace().re;
    if (tr - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("state has trace {tr}")));
    }
    if !linalg::psd_check(rho, 1e-9)?.is_psd {
        return Err(Error::Argument("state is not positive semidefinite".into()));
    }
    let sy = ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => C64::new(0.0, -1.0),
        (1, 0) => C64::new(0.0, 1.0),
        _ => re(0.0),
    });
    let yy = kron2(&sy, &sy);
    let tilde = &(&yy * &rho.conj()) * &yy;
    // eigenvalues of √ρ ρ̃ √ρ are the squares of those of ρρ̃'s roots
    let sq = linalg::sqrt_psd(rho)?;
    let r = (&(&sq * &tilde) * &sq).hermitian_part();
    let mut lam: Vec<f64> = linalg::eigvalsh(&r)?.into_iter().map(|x| x.max(0.0).sqrt()).collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    Ok((lam[0] - lam[1] - lam[2] - lam[3]).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WStateReport {
    /// ‖(K₁ ⊗ I)|W⟩‖
    pub k1_amplitude: f64,
    /// normalized coarse-grained state of the unmeasured pair (BC for the
    /// outcome with [0] on A, AC for [0] on B)
    pub bc_state: ComplexMatrix,
    pub ac_state: ComplexMatrix,
    pub bc_probability: f64,
    pub ac_probability: f64,
    pub bc_concurrence: f64,
    pub ac_concurrence: f64,
}

/// Applies the limiting measurement (with I on a third party) to the W state
/// and coarse-grains each continuous family.
pub fn wstate_analysis() -> Result<WStateReport> {
    let r3 = 1.0 / 3f64.sqrt();
    let mut w = vec![re(0.0); 8];
    for idx in [1, 2, 4] {
        w[idx] = re(r3);
    }
    let wm = ComplexMatrix::outer(&w, &w);
    let id = ComplexMatrix::identity(2);
    let dims = PartyDims::qubits(3);
    let k1 = kron2(&proj2(3), &id);
    let k1_amplitude = k1.apply_vec(&w).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let rule = SigmaRule::default();
    // outcome with [0] on B leaves A and C; with [0] on A leaves B and C
    let outcome = |which: usize, keep: [usize; 2]| -> Result<(ComplexMatrix, f64)> {
        let out = rule.integrate_matrix(|sg| {
            let k = kron2(&limiting_povm_sigma(sg).kraus()[which], &id);
            &(&k * &wm) * &k.adjoint()
        });
        let p = out.trace().re;
        let reduced = linalg::partial_trace(&out, &dims, &keep)?;
        Ok((reduced.scale_real(1.0 / p), p))
    };
    let (ac_state, ac_probability) = outcome(1, [0, 2])?;
    let (bc_state, bc_probability) = outcome(2, [1, 2])?;
    Ok(WStateReport {
        k1_amplitude,
        bc_concurrence: concurrence(&bc_state)?,
        ac_concurrence: concurrence(&ac_state)?,
        bc_state,
        ac_state,
        bc_probability,
        ac_probability,
    })
}

/// Zero-count and joint-zero tables for P qubits, party 0 the most
/// significant bit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PQubitSpec {
    parties: usize,
    l: Vec<u32>,
    m: Vec<Vec<u32>>,
}

impl PQubitSpec {
    pub fn new(parties: usize) -> Result<Self> {
        if !(2..=locc::MAX_PARTIES).contains(&parties) {
            return Err(Error::Range(format!("P = {parties} outside 2..={}", locc::MAX_PARTIES)));
        }
        let n = 1usize << parties;
        let mask = (n - 1) as u32;
        let l = (0..n as u32).map(|i| (!i & mask).count_ones()).collect();
        let m = (0..n as u32)
            .map(|i| (0..n as u32).map(|j| (!(i | j) & mask).count_ones()).collect())
            .collect();
        Ok(Self { parties, l, m })
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn dim(&self) -> usize {
        1 << self.parties
    }

    pub fn l(&self, i: usize) -> u32 {
        self.l[i]
    }

    pub fn m(&self, i: usize, j: usize) -> u32 {
        self.m[i][j]
    }

    /// Factor multiplying ρ_ij in the channel output.
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        let last = self.dim() - 1;
        match (i == last, j == last) {
            (true, true) => 1.0,
            (false, false) => 2.0 * self.m[i][j] as f64 / (self.l[i] + self.l[j]) as f64,
            _ => 0.0,
        }
    }
}

/// Normalized Choi operator 2^{−P} Σ |i⟩⟨j| ⊗ E_P(|i⟩⟨j|) from the closed form.
pub fn pqubit_choi_formula(parties: usize) -> Result<ChoiOperator> {
    let spec = PQubitSpec::new(parties)?;
    let n = spec.dim();
    let norm = 1.0 / n as f64;
    let mut phi = ComplexMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let c = spec.coefficient(i, j);
            if c != 0.0 {
                phi[(i * n + i, j * n + j)] = re(c * norm);
            }
        }
    }
    ChoiOperator::from_matrix(phi, n, n, ChoiNormalization::Normalized)
}

/// E_P(ρ) entrywise.
pub fn pqubit_apply(parties: usize, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    let spec = PQubitSpec::new(parties)?;
    let n = spec.dim();
    if rho.shape() != (n, n) {
        return Err(Error::Dimension(format!("state of shape {:?} for {parties} qubits", rho.shape())));
    }
    Ok(ComplexMatrix::from_fn(n, n, |i, j| rho[(i, j)] * spec.coefficient(i, j)))
}

/// ∫₀¹ σ^{(L−2)/2} dσ by quadrature and in closed form 2/L.
pub fn density_integral(l_sum: u32) -> (f64, f64) {
    let rule = SigmaRule::default();
    let e = (l_sum as f64 - 2.0) / 2.0;
    (rule.integrate(|sg| sg.powf(e)), 2.0 / l_sum as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PQubitLimitReport {
    /// (ν, ‖Φ^ν − Φ_P‖₁) with normalized Choi operators
    pub distances: Vec<(usize, f64)>,
    pub strictly_decreasing: bool,
    /// max over L ∈ 2..=2P of the quadrature error of the density identity
    pub density_identity_defect: f64,
    pub checks: CheckList,
}

/// Largest P for which trees are materialized here.
pub const MAX_LIMIT_PARTIES: usize = 4;

pub fn pqubit_limit_check(parties: usize, nus: &[usize], c: f64) -> Result<PQubitLimitReport> {
    if !(2..=MAX_LIMIT_PARTIES).contains(&parties) {
        return Err(Error::Range(format!("P = {parties} outside 2..={MAX_LIMIT_PARTIES}")));
    }
    let target = pqubit_choi_formula(parties)?;
    let distances = nus
        .iter()
        .map(|&nu| {
            let tree = locc::build_protocol_pq(parties, nu, c)?;
            let k = locc::protocol_channel(&tree)?;
            Ok((nu, choi(&k, ChoiNormalization::Normalized).trace_distance(&target)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let strictly_decreasing = distances.windows(2).all(|w| w[1].1 < w[0].1);
    let density_identity_defect = (2..=2 * parties as u32)
        .map(|l| {
            let (q, exact) = density_integral(l);
            (q - exact).abs()
        })
        .fold(0.0, f64::max);
    let mut checks = CheckList::new();
    checks.push(Check::holds("choi_distance_decreasing", strictly_decreasing));
    checks.push(Check::at_most("density_identity", density_identity_defect, 1e-10));
    Ok(PQubitLimitReport {
        distances,
        strictly_decreasing,
        density_identity_defect,
        checks,
    })
}

/// Relabels basis index bits by `perm` (new position k takes old bit perm[k]).
pub fn permute_bits(i: usize, perm: &[usize]) -> usize {
    let p = perm.len();
    perm.iter().enumerate().fold(0, |acc, (k, &src)| {
        let bit = (i >> (p - 1 - src)) & 1;
        acc | (bit << (p - 1 - k))
    })
}

/// |W⟩ on three qubits followed by |1…1⟩ on the rest.
pub fn w_padded(parties: usize) -> Vec<C64> {
    let n = 1usize << parties;
    let tail = parties - 3;
    let ones = (1usize << tail) - 1;
    let mut v = vec![re(0.0); n];
    for w in [1usize, 2, 4] {
        v[(w << tail) | ones] = re(1.0 / 3f64.sqrt());
    }
    v
}

/// Tensor factor of E₃ on the W state alongside fixed |1…1⟩ parties.
pub fn w_reduction_defect(parties: usize) -> Result<f64> {
    if parties < 3 {
        return Err(Error::Range("the W state needs three parties".into()));
    }
    let v = w_padded(parties);
    let rho = ComplexMatrix::outer(&v, &v);
    let out = pqubit_apply(parties, &rho)?;
    let w3 = w_padded(3);
    let small = pqubit_apply(3, &ComplexMatrix::outer(&w3, &w3))?;
    let tail = 1usize << (parties - 3);
    let expect = kron(&[small, ComplexMatrix::projector(tail, tail - 1)])?;
    Ok((&out - &expect).max_abs())
}
