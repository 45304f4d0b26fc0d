//! LOCC protocol trees, their validation, the operator paths traced by their
//! branches, and the checker for the path conditions of asymptotic LOCC.

use serde::{Deserialize, Serialize};

use crate::channels::KrausSet;
use crate::error::{Error, Result};
use crate::linalg::{self, kron, re, ComplexMatrix, PartyDims, RANK_TOL};
use crate::report::{Check, CheckList};
use crate::zonoid::{self, endpoint_cmatrix, CoefficientMatrix, ZonoidSpec};

/// Tolerance on a node element against the sum of its leaves.
pub const LEAF_SUM_TOL: f64 = 1e-9;
pub const LOCALITY_TOL: f64 = 1e-10;
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Largest party count for generated trees.
pub const MAX_PARTIES: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolNode {
    pub element: ComplexMatrix,
    /// Party measuring at this node; `None` at leaves.
    pub acting_party: Option<usize>,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Local outcome at the parent that produced this node (0 = continue).
    pub outcome: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub nu: usize,
    pub eps: f64,
    pub c: f64,
}

/// Rooted tree stored as an arena; children always come after their parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTree {
    nodes: Vec<ProtocolNode>,
    dims: PartyDims,
    params: Option<ProtocolParams>,
}

impl ProtocolTree {
    /// A tree whose root (element I) is its only leaf.
    pub fn root_only(dims: PartyDims) -> Self {
        let d = dims.total();
        Self {
            nodes: vec![ProtocolNode {
                element: ComplexMatrix::identity(d),
                acting_party: None,
                children: Vec::new(),
                parent: None,
                outcome: None,
            }],
            dims,
            params: None,
        }
    }

    /// Appends a child of `parent` measured by `party`; returns its index.
    pub fn add_child(&mut self, parent: usize, party: usize, element: ComplexMatrix, outcome: usize) -> Result<usize> {
        let d = self.dims.total();
        if element.shape() != (d, d) {
            return Err(Error::Dimension(format!("node element of shape {:?}", element.shape())));
        }
        if party >= self.dims.parties() {
            return Err(Error::Argument(format!("party {party} out of range")));
        }
        let idx = self.nodes.len();
        let p = self
            .nodes
            .get_mut(parent)
            .ok_or_else(|| Error::Argument(format!("no node {parent}")))?;
        match p.acting_party {
            Some(a) if a != party => {
                return Err(Error::Argument(format!("node {parent} is already measured by party {a}")))
            }
            _ => p.acting_party = Some(party),
        }
        p.children.push(idx);
        self.nodes.push(ProtocolNode {
            element,
            acting_party: None,
            children: Vec::new(),
            parent: Some(parent),
            outcome: Some(outcome),
        });
        Ok(idx)
    }

    pub fn nodes(&self) -> &[ProtocolNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Option<&ProtocolNode> {
        self.nodes.get(i)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dims(&self) -> &PartyDims {
        &self.dims
    }

    pub fn params(&self) -> Option<ProtocolParams> {
        self.params
    }

    /// Replaces a node's element, e.g. to inject a fault.
    pub fn set_element(&mut self, i: usize, element: ComplexMatrix) -> Result<()> {
        let d = self.dims.total();
        if element.shape() != (d, d) {
            return Err(Error::Dimension(format!("node element of shape {:?}", element.shape())));
        }
        self.nodes
            .get_mut(i)
            .ok_or_else(|| Error::Argument(format!("no node {i}")))?
            .element = element;
        Ok(())
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].children.is_empty()).collect()
    }

    /// Leaf reached by always taking outcome 0.
    pub fn main_leaf(&self) -> usize {
        let mut cur = 0;
        loop {
            let n = &self.nodes[cur];
            match n.children.iter().find(|&&c| self.nodes[c].outcome == Some(0)) {
                Some(&c) => cur = c,
                None => return n.children.first().map_or(cur, |_| cur),
            }
        }
    }

    /// Node indices from the root to `leaf`.
    pub fn branch(&self, leaf: usize) -> Result<Vec<usize>> {
        if leaf >= self.nodes.len() {
            return Err(Error::Argument(format!("no node {leaf}")));
        }
        if !self.nodes[leaf].children.is_empty() {
            return Err(Error::Argument(format!("node {leaf} is not a leaf")));
        }
        let mut chain = vec![leaf];
        let mut cur = leaf;
        while let Some(p) = self.nodes[cur].parent {
            chain.push(p);
            cur = p;
        }
        if cur != 0 {
            return Err(Error::Argument(format!("leaf {leaf} is not reachable from the root")));
        }
        chain.reverse();
        Ok(chain)
    }
}

fn check_params(parties: usize, nu: usize, c: f64) -> Result<()> {
    if !(2..=MAX_PARTIES).contains(&parties) {
        return Err(Error::Range(format!("P = {parties} outside 2..={MAX_PARTIES}")));
    }
    if nu < 1 {
        return Err(Error::Range("ν must be at least 1".into()));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Range(format!("c = {c} outside (0, 1)")));
    }
    Ok(())
}

/// Two-party protocol: Alice and Bob alternately measure {A₀, A₁} with
/// A₀ = √(1−ε)[0] + [1], A₁ = √ε[0], stopping at the first outcome 1, for ν
/// rounds; ε = ν^{−c}.
pub fn build_protocol_2q(nu: usize, c: f64) -> Result<ProtocolTree> {
    build_protocol_pq(2, nu, c)
}

/// P-party cyclic version: parties 1..P measure {R, I−R} in turn with
/// R = (1−ε)[0] + [1]; any I−R outcome ends the protocol, as do ν full cycles.
pub fn build_protocol_pq(parties: usize, nu: usize, c: f64) -> Result<ProtocolTree> {
    check_params(parties, nu, c)?;
    let eps = (nu as f64).powf(-c);
    let dims = PartyDims::qubits(parties);
    let mut tree = ProtocolTree::root_only(dims);
    tree.params = Some(ProtocolParams { nu, eps, c });
    tree.nodes.reserve(2 * parties * nu);
    // local diagonal factors (weight on |0⟩), weight on |1⟩ is always 1
    let mut zero_weight = vec![1.0f64; parties];
    let element_of = |w: &[f64], one: &[f64]| -> ComplexMatrix {
        let fs: Vec<ComplexMatrix> = w
            .iter()
            .zip(one)
            .map(|(&a, &b)| ComplexMatrix::real_diag(&[a, b]))
            .collect();
        kron(&fs).expect("nonempty factor list")
    };
    let ones = vec![1.0; parties];
    let mut cur = 0;
    for _ in 0..nu {
        for alpha in 0..parties {
            let mut stop = zero_weight.clone();
            stop[alpha] *= eps;
            let mut stop_one = ones.clone();
            stop_one[alpha] = 0.0;
            zero_weight[alpha] *= 1.0 - eps;
            let cont = tree.add_child(cur, alpha, element_of(&zero_weight, &ones), 0)?;
            tree.add_child(cur, alpha, element_of(&stop, &stop_one), 1)?;
            cur = cont;
        }
    }
    Ok(tree)
}

/// Channel implemented by the tree: one Kraus operator √E per leaf.
pub fn protocol_channel(tree: &ProtocolTree) -> Result<KrausSet> {
    let ops = tree
        .leaves()
        .into_iter()
        .map(|i| linalg::sqrt_psd(&tree.nodes[i].element))
        .collect::<Result<Vec<_>>>()?;
    KrausSet::new(ops, tree.dims.clone(), tree.dims.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    /// max over nodes of ‖E_node − Σ leaves below‖
    pub leaf_sum_defect: f64,
    pub leaf_sum_failures: Vec<usize>,
    /// max over edges of the change in non-acting parties' normalized factors
    pub locality_defect: f64,
    pub locality_failures: Vec<(usize, usize)>,
    /// ‖Σ leaves − I‖
    pub completeness_defect: f64,
    pub pass: bool,
}

impl TreeReport {
    pub fn checks(&self) -> CheckList {
        let mut l = CheckList::new();
        l.push(Check::at_most("leaf_sum", self.leaf_sum_defect, LEAF_SUM_TOL));
        l.push(Check::at_most("locality", self.locality_defect, LOCALITY_TOL));
        l.push(Check::at_most("completeness", self.completeness_defect, COMPLETENESS_TOL));
        l
    }
}

/// Normalized local factors, or `None` for a non-product element.
fn local_factors(m: &ComplexMatrix, dims: &PartyDims) -> Option<Vec<ComplexMatrix>> {
    let fs = linalg::product_factor_check(m, dims, RANK_TOL)?;
    Some(fs.iter().map(|f| linalg::normalize_factor(f).0).collect())
}

/// Checks every node against the sum of its leaves, every edge for
/// locality, and the leaves for completeness.
pub fn verify_tree(tree: &ProtocolTree) -> TreeReport {
    let n = tree.nodes.len();
    let d = tree.dims.total();
    let mut sums: Vec<Option<ComplexMatrix>> = vec![None; n];
    let mut leaf_sum_defect = 0.0f64;
    let mut leaf_sum_failures = Vec::new();
    for i in (0..n).rev() {
        let node = &tree.nodes[i];
        let sum = if node.children.is_empty() {
            node.element.clone()
        } else {
            node.children
                .iter()
                .map(|&c| sums[c].take().expect("children follow their parent"))
                .sum()
        };
        let defect = linalg::operator_norm(&(&node.element - &sum));
        if defect > LEAF_SUM_TOL || defect.is_nan() {
            leaf_sum_failures.push(i);
        }
        leaf_sum_defect = leaf_sum_defect.max(defect);
        sums[i] = Some(sum);
    }
    leaf_sum_failures.reverse();
    let total = sums[0].take().unwrap_or_else(|| ComplexMatrix::zeros(d, d));
    let completeness_defect = linalg::operator_norm(&(&total - &ComplexMatrix::identity(d)));

    let mut locality_defect = 0.0f64;
    let mut locality_failures = Vec::new();
    let mut factors: Vec<Option<Option<Vec<ComplexMatrix>>>> = vec![None; n];
    for p in 0..n {
        let node = &tree.nodes[p];
        if node.children.is_empty() {
            continue;
        }
        let parent_f = factors[p]
            .get_or_insert_with(|| local_factors(&node.element, &tree.dims))
            .clone();
        for &ch in &node.children {
            let child_f = factors[ch]
                .get_or_insert_with(|| local_factors(&tree.nodes[ch].element, &tree.dims))
                .clone();
            let defect = match (node.acting_party, &parent_f, &child_f) {
                (Some(a), Some(pf), Some(cf)) => pf
                    .iter()
                    .zip(cf)
                    .enumerate()
                    .filter(|&(beta, _)| beta != a)
                    .map(|(_, (x, y))| (x - y).frobenius_norm())
                    .fold(0.0, f64::max),
                // a non-product element or a measurement without a party
                _ => 2.0,
            };
            if defect > LOCALITY_TOL || defect.is_nan() {
                locality_failures.push((p, ch));
            }
            locality_defect = locality_defect.max(defect);
        }
        if p > 0 {
            // parents are visited in index order, so this factor is no longer needed
            factors[p] = None;
        }
    }

    let pass = leaf_sum_defect <= LEAF_SUM_TOL && locality_defect <= LOCALITY_TOL && completeness_defect <= COMPLETENESS_TOL;
    TreeReport {
        leaf_sum_defect,
        leaf_sum_failures,
        locality_defect,
        locality_failures,
        completeness_defect,
        pass,
    }
}

/// A path of operators parametrized by trace s.
pub trait OperatorPath {
    fn dims(&self) -> PartyDims;
    fn s_max(&self) -> f64;
    fn s_min(&self) -> f64;
    fn at(&self, s: f64) -> Result<ComplexMatrix>;
}

/// Piecewise-linear path through operators of strictly decreasing trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePath {
    dims: PartyDims,
    /// (trace, operator), trace decreasing
    vertices: Vec<(f64, ComplexMatrix)>,
}

impl PiecewisePath {
    pub fn from_vertices(dims: PartyDims, elements: Vec<ComplexMatrix>) -> Result<Self> {
        let mut vertices: Vec<(f64, ComplexMatrix)> = Vec::with_capacity(elements.len());
        for e in elements {
            let s = e.trace().re;
            if let Some((last_s, last)) = vertices.last() {
                if s >= *last_s {
                    if s == *last_s && (&e - last).max_abs() <= 1e-14 {
                        continue;
                    }
                    return Err(Error::Argument(format!(
                        "path trace does not decrease ({last_s} then {s})"
                    )));
                }
            }
            vertices.push((s, e));
        }
        if vertices.is_empty() {
            return Err(Error::Argument("empty path".into()));
        }
        Ok(Self { dims, vertices })
    }

    pub fn vertices(&self) -> &[(f64, ComplexMatrix)] {
        &self.vertices
    }

    /// Traces of the joints, decreasing.
    pub fn joints(&self) -> Vec<f64> {
        self.vertices.iter().map(|(s, _)| *s).collect()
    }

    /// (s_start, s_end, start, end) per segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, &ComplexMatrix, &ComplexMatrix)> {
        self.vertices
            .windows(2)
            .map(|w| (w[0].0, w[1].0, &w[0].1, &w[1].1))
    }

    /// Uniform points at `per_unit` per unit of trace plus every joint,
    /// decreasing.
    pub fn sample_grid(&self, per_unit: usize) -> Vec<f64> {
        let (hi, lo) = (self.s_max(), self.s_min());
        let n = (((hi - lo) * per_unit as f64).ceil() as usize).max(1);
        let mut g: Vec<f64> = (0..=n).map(|k| hi - (hi - lo) * k as f64 / n as f64).collect();
        g.extend(self.joints());
        g.sort_by(|a, b| b.total_cmp(a));
        g.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
        g
    }

    /// Largest |Tr Π(s) − s| over the samples.
    pub fn trace_defect(&self, samples: &[f64]) -> Result<f64> {
        samples.iter().try_fold(0.0f64, |acc, &s| {
            Ok(acc.max((self.at(s)?.trace().re - s).abs()))
        })
    }
}

impl OperatorPath for PiecewisePath {
    fn dims(&self) -> PartyDims {
        self.dims.clone()
    }

    fn s_max(&self) -> f64 {
        self.vertices[0].0
    }

    fn s_min(&self) -> f64 {
        self.vertices[self.vertices.len() - 1].0
    }

    fn at(&self, s: f64) -> Result<ComplexMatrix> {
        let slack = 1e-12 * (1.0 + self.s_max());
        if s > self.s_max() + slack || s < self.s_min() - slack {
            return Err(Error::Range(format!(
                "s = {s} outside [{}, {}]",
                self.s_min(),
                self.s_max()
            )));
        }
        let idx = self.vertices.partition_point(|(sv, _)| *sv > s);
        if idx == 0 {
            return Ok(self.vertices[0].1.clone());
        }
        if idx == self.vertices.len() {
            return Ok(self.vertices[idx - 1].1.clone());
        }
        let (s0, a) = &self.vertices[idx - 1];
        let (s1, b) = &self.vertices[idx];
        let t = (s0 - s) / (s0 - s1);
        Ok(a + &(b - a).scale_real(t))
    }
}

/// Path through the elements of a branch, root to `leaf`.
pub fn branch_path(tree: &ProtocolTree, leaf: usize) -> Result<PiecewisePath> {
    let chain = tree.branch(leaf)?;
    let elements = chain.iter().map(|&i| tree.nodes[i].element.clone()).collect();
    PiecewisePath::from_vertices(tree.dims.clone(), elements)
}

/// M(s) = (s^{1/P} − 1)[0] + [1].
pub fn local_limit_factor(parties: usize, s: f64) -> ComplexMatrix {
    ComplexMatrix::real_diag(&[s.powf(1.0 / parties as f64) - 1.0, 1.0])
}

/// Π_M(s) = M(s)^{⊗P}.
pub fn limit_path(parties: usize, s: f64) -> Result<ComplexMatrix> {
    let hi = 2f64.powi(parties as i32);
    if !(1.0..=hi).contains(&s) {
        return Err(Error::Range(format!("s = {s} outside [1, {hi}]")));
    }
    let m = local_limit_factor(parties, s);
    kron(&vec![m; parties])
}

/// The limiting main-branch path as an [`OperatorPath`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitPath {
    pub parties: usize,
}

impl OperatorPath for LimitPath {
    fn dims(&self) -> PartyDims {
        PartyDims::qubits(self.parties)
    }

    fn s_max(&self) -> f64 {
        2f64.powi(self.parties as i32)
    }

    fn s_min(&self) -> f64 {
        1.0
    }

    fn at(&self, s: f64) -> Result<ComplexMatrix> {
        limit_path(self.parties, s)
    }
}

/// Trace range [t_ν^P, 2^P] of the generated main branch, t_n = (1−ε)ⁿ + 1.
pub fn main_branch_domain(parties: usize, nu: usize, c: f64) -> Result<(f64, f64)> {
    check_params(parties, nu, c)?;
    let eps = (nu as f64).powf(-c);
    let t = (1.0 - eps).powi(nu as i32) + 1.0;
    Ok((t.powi(parties as i32), 2f64.powi(parties as i32)))
}

/// The analytic bound used for ‖Π^ν − Π_M‖₁: √3·ν^{−c} for two parties and
/// P·2^{P/2}·ν^{−c} beyond.
pub fn distance_bound(parties: usize, nu: usize, c: f64) -> f64 {
    let e = (nu as f64).powf(-c);
    if parties == 2 {
        3f64.sqrt() * e
    } else {
        parties as f64 * 2f64.powf(parties as f64 / 2.0) * e
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBound {
    pub observed: f64,
    pub worst_s: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Max over the grid of ‖Π^ν(s) − Π_M(s)‖₁ along the generated main branch.
pub fn path_distance_bound(parties: usize, nu: usize, c: f64, s_grid: &[f64]) -> Result<DistanceBound> {
    let tree = build_protocol_pq(parties, nu, c)?;
    let path = branch_path(&tree, tree.main_leaf())?;
    let mut observed = 0.0f64;
    let mut worst_s = f64::NAN;
    for &s in s_grid {
        let diff = &path.at(s)? - &limit_path(parties, s)?;
        let t = linalg::trace_norm(&diff);
        if t > observed || worst_s.is_nan() {
            observed = observed.max(t);
            worst_s = s;
        }
    }
    let bound = distance_bound(parties, nu, c);
    Ok(DistanceBound {
        observed,
        worst_s,
        bound,
        pass: observed <= bound + 1e-12,
    })
}

/// `n` uniform points across the main-branch domain, decreasing.
pub fn main_branch_grid(parties: usize, nu: usize, c: f64, n: usize) -> Result<Vec<f64>> {
    let (lo, hi) = main_branch_domain(parties, nu, c)?;
    if n < 2 {
        return Ok(vec![hi]);
    }
    Ok((0..n).map(|k| hi - (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

/// Outcome densities of the derivative of Π_M, one per party, with respect
/// to dσ where σ = s^{1/P} − 1: M^{⊗α} ⊗ [0] ⊗ M^{⊗(P−1−α)}.
pub fn derivative_outcomes(parties: usize, s: f64) -> Result<Vec<ComplexMatrix>> {
    limit_path(parties, s)?;
    let sigma = s.powf(1.0 / parties as f64) - 1.0;
    Ok(derivative_outcomes_sigma(parties, sigma))
}

/// [`derivative_outcomes`] indexed directly by σ ∈ [0, 1].
pub fn derivative_outcomes_sigma(parties: usize, sigma: f64) -> Vec<ComplexMatrix> {
    let m = ComplexMatrix::real_diag(&[sigma, 1.0]);
    let p0 = ComplexMatrix::projector(2, 0);
    (0..parties)
        .map(|alpha| {
            let fs: Vec<ComplexMatrix> = (0..parties)
                .map(|b| if b == alpha { p0.clone() } else { m.clone() })
                .collect();
            kron(&fs).expect("nonempty factor list")
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CFamily {
    C1,
    C2,
    C3,
}

/// Coefficient matrices of the two-qubit limiting family in the basis
/// ([11], diag(2/3,0,1,0), diag(2/3,1,0,0), diag(1/3,0,0,0)), σ = √s − 1.
/// C1 carries the main path, C2 and C3 the rank-one outcome densities; with
/// `x` the side-branch interpolation (1−x)C1 + xC_j.
pub fn c_matrix_family(name: CFamily, s: f64, x: Option<f64>) -> Result<CoefficientMatrix> {
    if !(1.0..=4.0).contains(&s) {
        return Err(Error::Range(format!("s = {s} outside [1, 4]")));
    }
    let sigma = s.sqrt() - 1.0;
    let c1 = c1_matrix(sigma);
    let base = match name {
        CFamily::C1 => c1.clone(),
        CFamily::C2 => rank_one_density(1, sigma),
        CFamily::C3 => rank_one_density(2, sigma),
    };
    let m = match x {
        None => base,
        Some(x) if (0.0..=1.0).contains(&x) => &c1.scale_real(1.0 - x) + &base.scale_real(x),
        Some(x) => return Err(Error::Range(format!("x = {x} outside [0, 1]"))),
    };
    CoefficientMatrix::new(m)
}

fn c1_matrix(sigma: f64) -> ComplexMatrix {
    let r = sigma.sqrt();
    let b = 2.0 * (r - 1.0);
    let cc = 9.0 * sigma + 8.0 - 16.0 * r;
    let mut m = ComplexMatrix::from_real_rows(&[
        &[0.0, 0.0, 0.0, 0.0],
        &[0.0, 1.0, 0.0, b],
        &[0.0, 0.0, 1.0, b],
        &[0.0, b, b, cc],
    ])
    .scale_real(sigma);
    m[(0, 0)] = re(1.0);
    m
}

/// w w† with w = e_k + (3√σ − 2) e_3.
fn rank_one_density(k: usize, sigma: f64) -> ComplexMatrix {
    let mut w = vec![re(0.0); 4];
    w[k] = re(1.0);
    w[3] = re(3.0 * sigma.sqrt() - 2.0);
    ComplexMatrix::outer(&w, &w)
}

/// Endpoint of a path: a Kraus operator (its rank-one C is derived) or an
/// explicit coefficient matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum Endpoint {
    Kraus(ComplexMatrix),
    Coefficient(CoefficientMatrix),
}

pub struct PathCondition<'a> {
    pub name: String,
    pub path: &'a dyn OperatorPath,
    pub samples: Vec<f64>,
    pub endpoint: Option<Endpoint>,
    /// CP map receiving this outcome (instrument mode).
    pub cp_map: Option<usize>,
}

pub type FamilyFn<'a> = &'a dyn Fn(f64, f64) -> Result<CoefficientMatrix>;
pub type DensityFn<'a> = &'a dyn Fn(f64) -> ComplexMatrix;

/// A continuous family of coefficient matrices C(s, x), PSD-checked on a
/// grid; its outcome density over σ ∈ [0, 1] enters the resolution of I_κ.
pub struct FamilyCondition<'a> {
    pub name: String,
    pub coefficients: FamilyFn<'a>,
    pub s_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub density: Option<DensityFn<'a>>,
    pub cp_map: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoremOptions {
    pub membership_tol: f64,
    pub psd_tol: f64,
    pub product_tol: f64,
    pub rank_tol: f64,
    pub resolution_tol: f64,
}

impl Default for TheoremOptions {
    fn default() -> Self {
        Self {
            membership_tol: zonoid::MEMBERSHIP_TOL,
            psd_tol: 1e-10,
            product_tol: RANK_TOL,
            rank_tol: RANK_TOL,
            resolution_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremReport {
    pub checks: CheckList,
    /// (path name, s, membership residual) for every sample
    pub memberships: Vec<(String, f64, f64)>,
}

impl TheoremReport {
    pub fn pass(&self) -> bool {
        self.checks.pass()
    }
}

/// Checks given paths and families against the necessary conditions:
/// product samples, decreasing trace, zonoid membership, rank-one endpoints,
/// PSD families and resolution of I_κ (or of each block projector when a
/// partition of the basis into CP maps is given).
pub fn verify_theorem_conditions(
    spec: &ZonoidSpec,
    paths: &[PathCondition],
    families: &[FamilyCondition],
    partition: Option<&[Vec<usize>]>,
    opts: &TheoremOptions,
) -> Result<TheoremReport> {
    let k = spec.kappa();
    let mut checks = CheckList::new();
    let mut memberships = Vec::new();
    let maps = partition.map_or(1, <[Vec<usize>]>::len);
    let mut sums = vec![ComplexMatrix::zeros(k, k); maps];
    let mut unassigned = false;

    let mut add_to = |cp: Option<usize>, c: &ComplexMatrix, unassigned: &mut bool| match (partition, cp) {
        (None, _) => sums[0] = &sums[0] + c,
        (Some(_), Some(r)) if r < maps => sums[r] = &sums[r] + c,
        _ => *unassigned = true,
    };

    for p in paths {
        let dims = p.path.dims();
        let mut samples = p.samples.clone();
        samples.sort_by(|a, b| b.total_cmp(a));
        let mut product = 0.0f64;
        let mut trace_dev = 0.0f64;
        let mut increase = 0.0f64;
        let mut residual = 0.0f64;
        let mut last_trace = f64::INFINITY;
        for &s in &samples {
            let z = p.path.at(s)?;
            product = product.max(linalg::schmidt_defect(&z, &dims));
            let tr = z.trace().re;
            trace_dev = trace_dev.max((tr - s).abs());
            increase = increase.max(tr - last_trace);
            last_trace = tr;
            let rep = zonoid::membership(&z, spec, opts.membership_tol)?;
            residual = residual.max(rep.residual);
            memberships.push((p.name.clone(), s, rep.residual));
        }
        checks.push(Check::at_most(format!("{}.product", p.name), product, opts.product_tol));
        checks.push(Check::at_most(
            format!("{}.monotone_trace", p.name),
            trace_dev.max(increase.max(0.0)),
            1e-12 * (1.0 + p.path.s_max()),
        ));
        checks.push(Check::at_most(format!("{}.membership", p.name), residual, opts.membership_tol));
        if let Some(ep) = &p.endpoint {
            let c = match ep {
                Endpoint::Coefficient(c) => Ok(c.clone()),
                Endpoint::Kraus(kop) => endpoint_cmatrix(kop, spec, 1e-9),
            };
            match c {
                Ok(c) => {
                    checks.push(Check::at_most(format!("{}.endpoint_rank_one", p.name), second_eigen_ratio(&c), opts.rank_tol));
                    checks.push(Check::at_most(format!("{}.endpoint_box", p.name), c.box_defect(), 1e-9));
                    if let (Some(part), Some(r)) = (partition, p.cp_map) {
                        checks.push(Check::at_most(format!("{}.endpoint_block", p.name), outside_block(&c, part.get(r)), 1e-12));
                    }
                    add_to(p.cp_map, c.matrix(), &mut unassigned);
                }
                Err(e) => {
                    let defect = match e {
                        Error::NotInSpan { residual } => residual,
                        Error::BlockMixing { defect } => defect,
                        _ => f64::MAX,
                    };
                    checks.push(Check::at_most(format!("{}.endpoint_in_span", p.name), defect, 1e-9));
                }
            }
        }
    }

    for f in families {
        let mut min_eig = f64::INFINITY;
        let mut block = 0.0f64;
        for &s in &f.s_grid {
            for &x in &f.x_grid {
                let c = (f.coefficients)(s, x)?;
                let ev = linalg::eigvalsh(c.matrix())?;
                min_eig = min_eig.min(ev[0]);
                if let Some(part) = partition {
                    block = block.max(c.block_defect(part));
                }
            }
        }
        checks.push(Check::at_least(format!("{}.psd", f.name), min_eig, -opts.psd_tol));
        if partition.is_some() {
            checks.push(Check::at_most(format!("{}.block_diagonal", f.name), block, 1e-12));
        }
        if let Some(density) = f.density {
            let rule = crate::quadrature::SigmaRule::default();
            let integral = rule.integrate_matrix(density);
            if let (Some(part), Some(r)) = (partition, f.cp_map) {
                let c = CoefficientMatrix::new(integral.clone())?;
                checks.push(Check::at_most(format!("{}.density_block", f.name), outside_block(&c, part.get(r)), 1e-12));
            }
            add_to(f.cp_map, &integral, &mut unassigned);
        }
    }

    match partition {
        None => {
            let defect = (&sums[0] - &ComplexMatrix::identity(k)).frobenius_norm();
            checks.push(Check::at_most("resolution", defect, opts.resolution_tol));
        }
        Some(part) => {
            for (r, block) in part.iter().enumerate() {
                let mut target = ComplexMatrix::zeros(k, k);
                for &m in block {
                    target[(m, m)] = re(1.0);
                }
                let defect = (&sums[r] - &target).frobenius_norm();
                checks.push(Check::at_most(format!("resolution[{r}]"), defect, opts.resolution_tol));
            }
            checks.push(Check::holds("every_outcome_assigned", !unassigned));
        }
    }
    Ok(TheoremReport { checks, memberships })
}

fn second_eigen_ratio(c: &CoefficientMatrix) -> f64 {
    let ev = linalg::eigvalsh(c.matrix()).expect("Hermitian by construction");
    let n = ev.len();
    if n < 2 || ev[n - 1] <= 0.0 {
        return if ev.iter().all(|&x| x.abs() < 1e-15) { 1.0 } else { 0.0 };
    }
    ev[n - 2].abs().max(ev[0].abs()) / ev[n - 1]
}

/// Largest entry of `c` with a row or column outside `block`.
fn outside_block(c: &CoefficientMatrix, block: Option<&Vec<usize>>) -> f64 {
    let Some(block) = block else {
        return f64::MAX;
    };
    let k = c.kappa();
    let mut d = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            if !block.contains(&i) || !block.contains(&j) {
                d = d.max(c.matrix()[(i, j)].norm());
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::minimal_kraus;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> ComplexMatrix {
        ComplexMatrix::real_diag(v)
    }

    fn hat_basis() -> Vec<ComplexMatrix> {
        vec![
            diag(&[0.0, 0.0, 0.0, 1.0]),
            diag(&[2.0 / 3.0, 0.0, 1.0, 0.0]),
            diag(&[2.0 / 3.0, 1.0, 0.0, 0.0]),
            diag(&[1.0 / 3.0, 0.0, 0.0, 0.0]),
        ]
    }

    fn leaf_elements(t: &ProtocolTree) -> Vec<ComplexMatrix> {
        t.leaves().into_iter().map(|i| t.node(i).unwrap().element.clone()).collect()
    }

    #[test]
    fn one_round_leaves() {
        let c = 0.5;
        let t = build_protocol_2q(1, c).unwrap();
        let eps: f64 = 1.0;
        // ν = 1 gives ε = 1: A₀ = [1]
        assert_abs_diff_eq!(t.params().unwrap().eps, eps, epsilon = 0.0);
        let leaves = leaf_elements(&t);
        assert_eq!(leaves.len(), 3);
        let a0 = diag(&[1.0 - eps, 1.0]);
        let a1 = diag(&[eps, 0.0]);
        let expect = [
            linalg::kron2(&a1, &ComplexMatrix::identity(2)),
            linalg::kron2(&a0, &a1),
            linalg::kron2(&a0, &a0),
        ];
        for e in &expect {
            assert!(leaves.iter().any(|l| (l - e).max_abs() < 1e-15));
        }
    }

    #[test]
    fn leaves_sum_to_identity() {
        for nu in [1, 5, 20] {
            let t = build_protocol_2q(nu, 0.5).unwrap();
            let s: ComplexMatrix = leaf_elements(&t).into_iter().sum();
            assert!((&s - &ComplexMatrix::identity(4)).max_abs() < 1e-12);
        }
        let t = build_protocol_pq(3, 5, 0.5).unwrap();
        let s: ComplexMatrix = leaf_elements(&t).into_iter().sum();
        assert!((&s - &ComplexMatrix::identity(8)).max_abs() < 1e-10);
    }

    #[test]
    fn main_branch_end() {
        let t = build_protocol_2q(2, 0.5).unwrap();
        let eps = 2f64.powf(-0.5);
        let x = (1.0 - eps).powi(2);
        let end = &t.node(t.main_leaf()).unwrap().element;
        let expect = linalg::kron2(&diag(&[x, 1.0]), &diag(&[x, 1.0]));
        assert!((end - &expect).max_abs() < 1e-15);
    }

    #[test]
    fn pq_main_branch_traces() {
        let (p, nu, c) = (3, 4, 0.5);
        let t = build_protocol_pq(p, nu, c).unwrap();
        let eps = (nu as f64).powf(-c);
        let tn = |n: i32| (1.0 - eps).powi(n) + 1.0;
        let chain = t.branch(t.main_leaf()).unwrap();
        assert_eq!(chain.len(), p * nu + 1);
        for (step, &i) in chain.iter().enumerate() {
            let (n, l) = ((step / p) as i32, (step % p) as i32);
            let expect = tn(n + 1).powi(l) * tn(n).powi(p as i32 - l);
            assert_abs_diff_eq!(t.node(i).unwrap().element.trace().re, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_party_is_pq_specialization() {
        let a = build_protocol_2q(7, 0.4).unwrap();
        let b = build_protocol_pq(2, 7, 0.4).unwrap();
        assert_eq!(leaf_elements(&a), leaf_elements(&b));
    }

    #[test]
    fn parameter_ranges() {
        assert!(build_protocol_2q(0, 0.5).is_err());
        assert!(build_protocol_2q(3, 1.0).is_err());
        assert!(build_protocol_2q(3, 0.0).is_err());
        assert!(build_protocol_pq(7, 3, 0.5).is_err());
        assert!(build_protocol_pq(1, 3, 0.5).is_err());
    }

    #[test]
    fn generated_trees_verify() {
        let r = verify_tree(&build_protocol_2q(10, 0.5).unwrap());
        assert!(r.pass, "{r:?}");
        let r = verify_tree(&build_protocol_pq(3, 10, 0.5).unwrap());
        assert!(r.pass, "{r:?}");
        assert!(verify_tree(&ProtocolTree::root_only(PartyDims::qubits(2))).pass);
    }

    #[test]
    fn scaled_leaf_is_localized() {
        let mut t = build_protocol_2q(10, 0.5).unwrap();
        let leaf = t.main_leaf();
        let e = t.node(leaf).unwrap().element.scale_real(1.01);
        let expected = linalg::operator_norm(&t.node(leaf).unwrap().element) * 0.01;
        t.set_element(leaf, e).unwrap();
        let r = verify_tree(&t);
        assert!(!r.pass);
        let ancestors: Vec<usize> = t.branch(leaf).unwrap()[..t.branch(leaf).unwrap().len() - 1].to_vec();
        assert_eq!(r.leaf_sum_failures, ancestors);
        assert_abs_diff_eq!(r.leaf_sum_defect, expected, epsilon = 1e-12);
        assert!(r.locality_failures.is_empty());
    }

    #[test]
    fn nonlocal_edge_is_flagged() {
        let mut t = build_protocol_2q(3, 0.5).unwrap();
        // change a child of the root in both parties' factors, then fix the
        // sibling so the leaf sums still match
        let root = t.node(0).unwrap().clone();
        let (a, b) = (root.children[0], root.children[1]);
        let bad = linalg::kron2(&diag(&[0.5, 1.0]), &diag(&[0.9, 1.0]));
        let delta = &t.node(a).unwrap().element - &bad;
        let sib = &t.node(b).unwrap().element + &delta;
        t.set_element(a, bad).unwrap();
        t.set_element(b, sib).unwrap();
        let r = verify_tree(&t);
        assert!(r.locality_failures.contains(&(0, a)));
    }

    #[test]
    fn branch_path_samples() {
        let (nu, c) = (6, 0.5);
        let t = build_protocol_2q(nu, c).unwrap();
        let path = branch_path(&t, t.main_leaf()).unwrap();
        assert!((&path.at(4.0).unwrap() - &ComplexMatrix::identity(4)).max_abs() < 1e-15);
        let eps = (nu as f64).powf(-c);
        for n in 0..=nu as i32 {
            let x = (1.0 - eps).powi(n);
            let s = (x + 1.0).powi(2);
            let expect = linalg::kron2(&diag(&[x, 1.0]), &diag(&[x, 1.0]));
            assert!((&path.at(s).unwrap() - &expect).max_abs() < 1e-12);
        }
        let grid = path.sample_grid(101);
        assert!(path.trace_defect(&grid).unwrap() < 1e-12);
        assert!(path.at(0.5).is_err());
        assert!(branch_path(&t, 0).is_err());
    }

    #[test]
    fn limit_path_examples() {
        assert!((&limit_path(2, 4.0).unwrap() - &ComplexMatrix::identity(4)).max_abs() < 1e-15);
        assert!((&limit_path(2, 1.0).unwrap() - &ComplexMatrix::projector(4, 3)).max_abs() < 1e-15);
        for s in [1.0, 2.3, 5.5, 8.0] {
            assert_abs_diff_eq!(limit_path(3, s).unwrap().trace().re, s, epsilon = 1e-12);
        }
        assert!(limit_path(2, 4.5).is_err());
        assert!(limit_path(2, 0.9).is_err());
    }

    #[test]
    fn distance_bound_examples() {
        assert_abs_diff_eq!(distance_bound(2, 100, 0.5), 0.17320508075688773, epsilon = 1e-15);
        let mut prev = f64::INFINITY;
        for nu in [100, 1000] {
            let g = main_branch_grid(2, nu, 0.5, 101).unwrap();
            let r = path_distance_bound(2, nu, 0.5, &g).unwrap();
            assert!(r.pass, "{r:?}");
            assert!(r.observed < prev);
            prev = r.observed;
        }
    }

    #[test]
    fn derivative_densities() {
        let d = derivative_outcomes(2, 2.25).unwrap();
        let m = diag(&[0.5, 1.0]);
        let p0 = ComplexMatrix::projector(2, 0);
        assert!((&d[0] - &linalg::kron2(&p0, &m)).max_abs() < 1e-15);
        assert!((&d[1] - &linalg::kron2(&m, &p0)).max_abs() < 1e-15);
        for p in 2..=4 {
            let rule = crate::quadrature::SigmaRule::default();
            let dim = 1 << p;
            let mut total = rule.integrate_matrix(|s| derivative_outcomes_sigma(p, s).into_iter().sum());
            total = &total + &ComplexMatrix::projector(dim, dim - 1);
            assert!((&total - &ComplexMatrix::identity(dim)).max_abs() < 1e-9);
            for x in derivative_outcomes(p, 1.7).unwrap() {
                assert!(linalg::product_factor_check(&x, &PartyDims::qubits(p), 1e-8).is_some());
            }
        }
    }

    #[test]
    fn c_family_examples() {
        let c = c_matrix_family(CFamily::C1, 4.0, None).unwrap();
        assert!((c.matrix() - &ComplexMatrix::identity(4)).max_abs() < 1e-15);
        let c = c_matrix_family(CFamily::C1, 1.0, None).unwrap();
        assert!((c.matrix() - &diag(&[1.0, 0.0, 0.0, 0.0])).max_abs() < 1e-15);
        assert_eq!(c.rank(1e-12), 1);
        let spec = ZonoidSpec::new(hat_basis(), None).unwrap();
        for s in [1.0, 1.5, 2.25, 3.0, 3.9, 4.0] {
            let c = c_matrix_family(CFamily::C1, s, None).unwrap();
            let m = local_limit_factor(2, s);
            assert!((&spec.image(c.matrix()) - &linalg::kron2(&m, &m)).max_abs() < 1e-10);
            for f in [CFamily::C2, CFamily::C3] {
                assert_eq!(c_matrix_family(f, s, None).unwrap().rank(1e-12), 1);
            }
        }
        assert!(c_matrix_family(CFamily::C2, 4.5, None).is_err());
        assert!(c_matrix_family(CFamily::C2, 2.0, Some(1.5)).is_err());
    }

    #[test]
    fn active_block_eigenvalue_at_half() {
        // oracle: block σ·[[1,0,b],[0,1,b],[b,b,c]], eigenvalues σ and the
        // roots of (1−λ)(c−λ) = 2b² scaled by σ
        let sigma: f64 = 0.5;
        let c = c_matrix_family(CFamily::C1, (1.0 + sigma).powi(2), None).unwrap();
        let r = linalg::psd_check(c.matrix(), 1e-9).unwrap();
        let b = 2.0 * (sigma.sqrt() - 1.0);
        let cc = 9.0 * sigma + 8.0 - 16.0 * sigma.sqrt();
        let lmin = 0.5 * ((1.0 + cc) - ((1.0 + cc).powi(2) - 4.0 * (cc - 2.0 * b * b)).sqrt());
        assert!(r.is_psd);
        assert_abs_diff_eq!(r.min_eigenvalue, sigma * lmin, epsilon = 1e-12);
        assert_abs_diff_eq!(lmin, 0.2595, epsilon = 1e-4);
    }

    fn limit_conditions(spec: &ZonoidSpec) -> TheoremReport {
        let lp = LimitPath { parties: 2 };
        let c2 = |s: f64, x: f64| c_matrix_family(CFamily::C2, s, Some(x));
        let c3 = |s: f64, x: f64| c_matrix_family(CFamily::C3, s, Some(x));
        let d2 = |sg: f64| rank_one_density(1, sg);
        let d3 = |sg: f64| rank_one_density(2, sg);
        let s_grid: Vec<f64> = (0..=20).map(|k| (1.0 + k as f64 / 20.0).powi(2)).collect();
        let x_grid: Vec<f64> = (0..=4).map(|k| k as f64 / 4.0).collect();
        let paths = [PathCondition {
            name: "main".into(),
            path: &lp,
            samples: vec![4.0, 3.3, 2.25, 1.6, 1.0],
            endpoint: Some(Endpoint::Kraus(hat_basis()[0].clone())),
            cp_map: None,
        }];
        let fams = [
            FamilyCondition {
                name: "c2".into(),
                coefficients: &c2,
                s_grid: s_grid.clone(),
                x_grid: x_grid.clone(),
                density: Some(&d2),
                cp_map: None,
            },
            FamilyCondition {
                name: "c3".into(),
                coefficients: &c3,
                s_grid,
                x_grid,
                density: Some(&d3),
                cp_map: None,
            },
        ];
        verify_theorem_conditions(spec, &paths, &fams, None, &TheoremOptions::default()).unwrap()
    }

    #[test]
    fn limiting_family_satisfies_conditions() {
        let spec = ZonoidSpec::new(hat_basis(), None).unwrap();
        let r = limit_conditions(&spec);
        assert!(r.pass(), "{:?}", r.checks.failures().collect::<Vec<_>>());
    }

    #[test]
    fn lone_path_fails_resolution() {
        let spec = ZonoidSpec::new(hat_basis(), None).unwrap();
        let lp = LimitPath { parties: 2 };
        let paths = [PathCondition {
            name: "main".into(),
            path: &lp,
            samples: vec![4.0, 1.0],
            endpoint: Some(Endpoint::Coefficient(CoefficientMatrix::new(diag(&[1.0, 0.0, 0.0, 0.0])).unwrap())),
            cp_map: None,
        }];
        let r = verify_theorem_conditions(&spec, &paths, &[], None, &TheoremOptions::default()).unwrap();
        assert!(!r.checks.get("resolution").unwrap().pass);
        assert!(r.checks.get("main.membership").unwrap().pass);
    }

    #[test]
    fn two_round_tree_leaves_zonoid() {
        // with ν = 2 the main branch leaves the zonoid of the limiting channel
        let spec = ZonoidSpec::new(hat_basis(), None).unwrap();
        let t = build_protocol_2q(2, 0.5).unwrap();
        let path = branch_path(&t, t.main_leaf()).unwrap();
        let samples = path.sample_grid(10);
        let worst = samples
            .iter()
            .map(|&s| zonoid::membership(&path.at(s).unwrap(), &spec, 1e-7).unwrap().residual)
            .fold(0.0, f64::max);
        assert!(worst > 1e-3, "worst residual {worst}");
    }

    #[test]
    fn leaves_have_rank_one_endpoints() {
        let t = build_protocol_2q(8, 0.5).unwrap();
        let k = protocol_channel(&t).unwrap();
        let min = minimal_kraus(&k, 1e-8);
        let spec = ZonoidSpec::new(min.operators().to_vec(), None).unwrap();
        for op in k.operators() {
            let c = endpoint_cmatrix(op, &spec, 1e-9).unwrap();
            assert_eq!(c.rank(1e-8), 1);
            assert!((&spec.image(c.matrix()) - &(&op.adjoint() * op)).max_abs() < 1e-12);
        }
        // side leaves are product operators inside the zonoid
        for i in t.leaves() {
            let e = &t.node(i).unwrap().element;
            assert!(linalg::product_factor_check(e, t.dims(), 1e-8).is_some());
            let m = zonoid::membership(e, &spec, 1e-7).unwrap();
            assert!(m.feasible, "leaf {i}: residual {}", m.residual);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn generated_edges_are_local(nu in 1usize..30, c in 0.05f64..0.95, p in 2usize..=4) {
            let t = build_protocol_pq(p, nu, c).unwrap();
            let r = verify_tree(&t);
            prop_assert!(r.locality_defect <= 1e-10);
            prop_assert!(r.pass);
        }

        #[test]
        fn main_branch_is_monotone(nu in 1usize..40, c in 0.05f64..0.95) {
            let t = build_protocol_2q(nu, c).unwrap();
            let path = branch_path(&t, t.main_leaf()).unwrap();
            let grid = path.sample_grid(50);
            let mut prev: Option<ComplexMatrix> = None;
            for &s in &grid {
                let z = path.at(s).unwrap();
                prop_assert!((z.trace().re - s).abs() <= 1e-12);
                if let Some(pz) = &prev {
                    // decreasing in the PSD order; diagonal so entrywise
                    for i in 0..4 {
                        prop_assert!(z[(i, i)].re <= pz[(i, i)].re + 1e-10);
                    }
                }
                prev = Some(z);
            }
        }

        #[test]
        fn two_party_bound_holds(nu in 2usize..400, c in 0.1f64..0.9) {
            let g = main_branch_grid(2, nu, c, 81).unwrap();
            let r = path_distance_bound(2, nu, c, &g).unwrap();
            prop_assert!(r.pass, "{:?}", r);
        }

        #[test]
        fn multiparty_bound_holds(nu in 2usize..200, c in 0.1f64..0.9, p in 3usize..=4) {
            let g = main_branch_grid(p, nu, c, 41).unwrap();
            let r = path_distance_bound(p, nu, c, &g).unwrap();
            prop_assert!(r.pass, "{:?}", r);
        }

        #[test]
        fn multiparty_entrywise_gap(nu in 2usize..200, c in 0.1f64..0.9, p in 2usize..=4) {
            let tree = build_protocol_pq(p, nu, c).unwrap();
            let path = branch_path(&tree, tree.main_leaf()).unwrap();
            let eps = (nu as f64).powf(-c);
            for s in main_branch_grid(p, nu, c, 41).unwrap() {
                let diff = &path.at(s).unwrap() - &limit_path(p, s).unwrap();
                let worst = (0..diff.rows()).map(|i| diff[(i, i)].norm()).fold(0.0, f64::max);
                prop_assert!(worst <= p as f64 * eps + 1e-12, "s={} gap={} eps={}", s, worst, eps);
            }
        }
    }
}
