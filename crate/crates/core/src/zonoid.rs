//! Zonoids generated by a minimal Kraus basis: points Σ C_{mm'} K̂_m†K̂_{m'}
//! with 0 ≤ C ≤ I, optionally with C block diagonal. Membership is decided
//! by Dykstra's alternating projections; support functions are closed form.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channels::{span_coefficients, KrausSet};
use crate::error::{Error, Result};
use crate::linalg::{self, re, ComplexMatrix, C64, RANK_TOL};
use crate::quadrature::SigmaRule;

/// Default feasibility tolerance on ‖L(C) − z‖_F.
pub const MEMBERSHIP_TOL: f64 = 1e-7;
pub const MAX_ITERATIONS: usize = 10_000;
pub const STEP_TOL: f64 = 1e-11;
/// Tolerance of [`cmatrix_resolution_check`].
pub const RESOLUTION_TOL: f64 = 1e-7;

/// Minimal Kraus basis with an optional block structure over its indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ZonoidSpec {
    basis: Vec<ComplexMatrix>,
    blocks: Option<Vec<Vec<usize>>>,
    /// products[m][n] = K̂_m† K̂_n
    products: Vec<Vec<ComplexMatrix>>,
}

impl ZonoidSpec {
    pub fn new(basis: Vec<ComplexMatrix>, blocks: Option<Vec<Vec<usize>>>) -> Result<Self> {
        let first = basis
            .first()
            .ok_or_else(|| Error::Argument("empty zonoid basis".into()))?;
        if basis.iter().any(|b| b.shape() != first.shape()) {
            return Err(Error::Dimension("basis operators differ in shape".into()));
        }
        let kappa = basis.len();
        let independent = |idx: &[usize]| -> Result<bool> {
            let gram = ComplexMatrix::from_fn(idx.len(), idx.len(), |i, j| basis[idx[i]].hs_inner(&basis[idx[j]]));
            let ev = linalg::eigvalsh(&gram)?;
            let max = ev.iter().copied().fold(0.0, f64::max);
            Ok(ev.iter().filter(|&&x| x > RANK_TOL * max).count() == idx.len())
        };
        if let Some(bl) = &blocks {
            let mut seen = vec![false; kappa];
            for &m in bl.iter().flatten() {
                if m >= kappa || seen[m] {
                    return Err(Error::Argument(format!("blocks {bl:?} do not partition 0..{kappa}")));
                }
                seen[m] = true;
            }
            if seen.iter().any(|s| !s) || bl.iter().any(|b| b.is_empty()) {
                return Err(Error::Argument(format!("blocks {bl:?} do not partition 0..{kappa}")));
            }
        }
        // with blocks, each CP map brings its own minimal set; operators of
        // different maps may share a span
        let groups: Vec<Vec<usize>> = blocks.clone().unwrap_or_else(|| vec![(0..kappa).collect()]);
        for g in &groups {
            if !independent(g)? {
                return Err(Error::Argument("zonoid basis operators are linearly dependent".into()));
            }
        }
        let products = basis
            .iter()
            .map(|a| basis.iter().map(|b| &a.adjoint() * b).collect())
            .collect();
        Ok(Self {
            basis,
            blocks,
            products,
        })
    }

    pub fn from_kraus(k: &KrausSet) -> Result<Self> {
        Self::new(k.operators().to_vec(), None)
    }

    pub fn basis(&self) -> &[ComplexMatrix] {
        &self.basis
    }

    pub fn blocks(&self) -> Option<&[Vec<usize>]> {
        self.blocks.as_deref()
    }

    pub fn kappa(&self) -> usize {
        self.basis.len()
    }

    /// Dimension of the operators K̂†K̂.
    pub fn dim(&self) -> usize {
        self.basis[0].cols()
    }

    /// Block label of every basis index (all zero without blocks).
    pub fn labels(&self) -> Vec<usize> {
        let mut lab = vec![0; self.kappa()];
        if let Some(bl) = &self.blocks {
            for (r, b) in bl.iter().enumerate() {
                for &m in b {
                    lab[m] = r;
                }
            }
        }
        lab
    }

    /// L(C) = Σ C_{mn} K̂_m†K̂_n.
    pub fn image(&self, c: &ComplexMatrix) -> ComplexMatrix {
        let d = self.dim();
        let mut out = ComplexMatrix::zeros(d, d);
        for (m, row) in self.products.iter().enumerate() {
            for (n, p) in row.iter().enumerate() {
                let w = c[(m, n)];
                if w != re(0.0) {
                    out = &out + &p.scale(w);
                }
            }
        }
        out
    }

    /// A_{nm} = Tr(x K̂_m†K̂_n), so that ⟨x, L(C)⟩ = Tr(C A).
    fn direction_matrix(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let k = self.kappa();
        ComplexMatrix::from_fn(k, k, |n, m| (x * &self.products[m][n]).trace()).hermitian_part()
    }
}

/// Hermitian κ×κ coefficient matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix(ComplexMatrix);

impl CoefficientMatrix {
    pub fn new(c: ComplexMatrix) -> Result<Self> {
        if !c.is_hermitian() {
            return Err(Error::NotHermitian {
                defect: c.hermitian_defect(),
            });
        }
        Ok(Self(c.hermitian_part()))
    }

    pub fn identity(kappa: usize) -> Self {
        Self(ComplexMatrix::identity(kappa))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn kappa(&self) -> usize {
        self.0.rows()
    }

    /// How far the spectrum leaves [0, 1].
    pub fn box_defect(&self) -> f64 {
        let ev = linalg::eigvalsh(&self.0).expect("Hermitian by construction");
        (-ev[0]).max(ev[ev.len() - 1] - 1.0).max(0.0)
    }

    /// Largest entry coupling different blocks.
    pub fn block_defect(&self, blocks: &[Vec<usize>]) -> f64 {
        let mut lab = vec![usize::MAX; self.kappa()];
        for (r, b) in blocks.iter().enumerate() {
            for &m in b {
                lab[m] = r;
            }
        }
        let mut d = 0.0f64;
        for i in 0..self.kappa() {
            for j in 0..self.kappa() {
                if lab[i] != lab[j] {
                    d = d.max(self.0[(i, j)].norm());
                }
            }
        }
        d
    }

    pub fn rank(&self, tol: f64) -> usize {
        let ev = linalg::eigvalsh(&self.0).expect("Hermitian by construction");
        let max = ev.iter().map(|x| x.abs()).fold(0.0, f64::max);
        ev.iter().filter(|&&x| x.abs() > tol * max).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub feasible: bool,
    pub witness: Option<CoefficientMatrix>,
    pub residual: f64,
    pub iterations: usize,
}

/// Feasibility subproblem: C = fixed + U Y U† with Y Hermitian, block
/// diagonal by the labels of U's columns, and 0 ≤ Y ≤ I.
struct Subproblem {
    fixed: ComplexMatrix,
    vecs: ComplexMatrix,
    groups: Vec<Vec<usize>>,
    /// positions (in the full f×f Hermitian coordinates) that are free
    free: Vec<usize>,
    a: Vec<Vec<f64>>,
    pinv: Vec<Vec<f64>>,
    target: Vec<f64>,
}

impl Subproblem {
    fn new(spec: &ZonoidSpec, z: &ComplexMatrix, fixed: ComplexMatrix, vecs: ComplexMatrix, labels: &[usize]) -> Self {
        let f = vecs.cols();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut seen: Vec<usize> = Vec::new();
        for (a, &l) in labels.iter().enumerate() {
            match seen.iter().position(|&x| x == l) {
                Some(g) => groups[g].push(a),
                None => {
                    seen.push(l);
                    groups.push(vec![a]);
                }
            }
        }
        let mut free: Vec<usize> = (0..f).collect();
        let mut k = f;
        for i in 0..f {
            for j in i + 1..f {
                if labels[i] == labels[j] {
                    free.push(k);
                    free.push(k + 1);
                }
                k += 2;
            }
        }
        let full = linalg::hermitian_basis(f);
        let cols: Vec<Vec<f64>> = free
            .iter()
            .map(|&p| {
                let c = &(&vecs * &full[p]) * &vecs.adjoint();
                linalg::hermitian_coords(&spec.image(&c))
            })
            .collect();
        let rows = cols.first().map_or(0, Vec::len);
        let a: Vec<Vec<f64>> = (0..rows).map(|r| cols.iter().map(|col| col[r]).collect()).collect();
        let pinv = pseudo_inverse(&a, free.len());
        let target = linalg::hermitian_coords(&(z - &spec.image(&fixed)));
        Self {
            fixed,
            vecs,
            groups,
            free,
            a,
            pinv,
            target,
        }
    }

    fn dim(&self) -> usize {
        self.vecs.cols()
    }

    fn to_matrix(&self, y: &[f64]) -> ComplexMatrix {
        let f = self.dim();
        let mut full = vec![0.0; f * f];
        for (&p, &v) in self.free.iter().zip(y) {
            full[p] = v;
        }
        linalg::from_hermitian_coords(f, &full)
    }

    fn to_coords(&self, m: &ComplexMatrix) -> Vec<f64> {
        let full = linalg::hermitian_coords(m);
        self.free.iter().map(|&p| full[p]).collect()
    }

    fn coefficient(&self, y: &[f64]) -> ComplexMatrix {
        let ym = self.to_matrix(y);
        (&self.fixed + &(&(&self.vecs * &ym) * &self.vecs.adjoint())).hermitian_part()
    }

    fn residual_vec(&self, y: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.target)
            .map(|(row, t)| row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - t)
            .collect()
    }

    fn residual(&self, y: &[f64]) -> f64 {
        norm(&self.residual_vec(y))
    }

    fn project_affine(&self, y: &[f64]) -> Vec<f64> {
        let r = self.residual_vec(y);
        y.iter()
            .zip(&self.pinv)
            .map(|(v, prow)| v - prow.iter().zip(&r).map(|(p, x)| p * x).sum::<f64>())
            .collect()
    }

    fn project_box(&self, y: &[f64]) -> Vec<f64> {
        let ym = self.to_matrix(y);
        let mut out = ComplexMatrix::zeros(ym.rows(), ym.cols());
        for g in &self.groups {
            let sub = ym.submatrix(g, g).hermitian_part();
            let (vals, vecs) = linalg::eigh(&sub).expect("Hermitian block");
            let clamped = linalg::spectral_fn(&vals, &vecs, |x| x.clamp(0.0, 1.0));
            for (a, &i) in g.iter().enumerate() {
                for (b, &j) in g.iter().enumerate() {
                    out[(i, j)] = clamped[(a, b)];
                }
            }
        }
        self.to_coords(&out)
    }

    /// Dykstra from y0; returns the final box-feasible iterate and the
    /// iteration count.
    fn dykstra(&self, y0: Vec<f64>, tol: f64) -> (Vec<f64>, usize) {
        let n = y0.len();
        let mut x = self.project_box(&y0);
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for it in 1..=MAX_ITERATIONS {
            let xp: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
            let y = self.project_affine(&xp);
            p = xp.iter().zip(&y).map(|(a, b)| a - b).collect();
            let yq: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
            let xn = self.project_box(&yq);
            q = yq.iter().zip(&xn).map(|(a, b)| a - b).collect();
            let step = norm(&xn.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
            x = xn;
            if step < STEP_TOL || (it % 25 == 0 && self.residual(&x) <= 1e-3 * tol) {
                return (x, it);
            }
        }
        (x, MAX_ITERATIONS)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Moore–Penrose pseudoinverse (cols × rows) of a real rows × cols matrix.
fn pseudo_inverse(a: &[Vec<f64>], cols: usize) -> Vec<Vec<f64>> {
    let rows = a.len();
    if rows == 0 || cols == 0 {
        return vec![vec![0.0; rows]; cols];
    }
    let m = ComplexMatrix::from_fn(rows, cols, |i, j| re(a[i][j]));
    let (u, s, vt) = linalg::svd(&m);
    let smax = s.first().copied().unwrap_or(0.0);
    let inv: Vec<f64> = s
        .iter()
        .map(|&x| if x > 1e-10 * smax && x > 0.0 { 1.0 / x } else { 0.0 })
        .collect();
    (0..cols)
        .map(|j| {
            (0..rows)
                .map(|i| {
                    (0..s.len())
                        .map(|k| (vt[(k, j)].conj() * u[(i, k)].conj()).re * inv[k])
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn check_direction(z: &ComplexMatrix, spec: &ZonoidSpec) -> Result<()> {
    let d = spec.dim();
    if z.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "operator of shape {:?} against a zonoid in dimension {d}",
            z.shape()
        )));
    }
    if !z.is_hermitian() {
        return Err(Error::NotHermitian {
            defect: z.hermitian_defect(),
        });
    }
    Ok(())
}

/// Decides z ∈ Z. Dykstra's projections from (Tr z/d)·I come first; when
/// they stall above `tol`, a phase-I barrier method settles the question.
pub fn membership(z: &ComplexMatrix, spec: &ZonoidSpec, tol: f64) -> Result<MembershipReport> {
    check_direction(z, spec)?;
    let k = spec.kappa();
    let tau = (z.trace().re / spec.dim() as f64).clamp(0.0, 1.0);
    solve(z, spec, tol, &ComplexMatrix::identity(k).scale_real(tau))
}

/// As [`membership`], starting from a given coefficient matrix.
pub fn membership_from(z: &ComplexMatrix, spec: &ZonoidSpec, tol: f64, start: &CoefficientMatrix) -> Result<MembershipReport> {
    check_direction(z, spec)?;
    if start.kappa() != spec.kappa() {
        return Err(Error::Dimension("start matrix has the wrong size".into()));
    }
    solve(z, spec, tol, start.matrix())
}

fn solve(z: &ComplexMatrix, spec: &ZonoidSpec, tol: f64, start: &ComplexMatrix) -> Result<MembershipReport> {
    let z = z.hermitian_part();
    let k = spec.kappa();
    let labels = spec.labels();
    let base = Subproblem::new(spec, &z, ComplexMatrix::zeros(k, k), ComplexMatrix::identity(k), &labels);
    let (y, mut iterations) = base.dykstra(base.to_coords(start), tol);
    let mut c = base.coefficient(&y);
    let mut r = base.residual(&y);
    if r > tol {
        let (cb, rb, it) = barrier_phase_one(&base);
        iterations += it;
        if rb < r {
            c = cb;
            r = rb;
        }
    }
    let feasible = r <= tol;
    Ok(MembershipReport {
        feasible,
        witness: feasible.then_some(CoefficientMatrix(c)),
        residual: r,
        iterations,
    })
}

/// Minimizes t subject to L(C) = z and −tI < C < (1+t)I with a log barrier,
/// stopping as soon as t < 0. Returns the box-clamped C, its residual and
/// the Newton step count.
fn barrier_phase_one(base: &Subproblem) -> (ComplexMatrix, f64, usize) {
    let n = base.free.len();
    let y0: Vec<f64> = base
        .pinv
        .iter()
        .map(|row| row.iter().zip(&base.target).map(|(p, t)| p * t).sum())
        .collect();
    let null = null_space(&base.a, n);
    let to_c = |u: &[f64]| -> ComplexMatrix {
        let mut y = y0.clone();
        for (v, &w) in null.iter().zip(u) {
            for (yi, vi) in y.iter_mut().zip(v) {
                *yi += w * vi;
            }
        }
        base.coefficient(&y)
    };
    let finish = |c: &ComplexMatrix, it: usize| -> (ComplexMatrix, f64, usize) {
        let y = base.project_box(&base.to_coords(c));
        (base.coefficient(&y), base.residual(&y), it)
    };
    let c0 = to_c(&[]);
    if null.is_empty() {
        return finish(&c0, 0);
    }
    let kappa = c0.rows();
    let id = ComplexMatrix::identity(kappa);
    let dirs: Vec<ComplexMatrix> = null.iter().map(|v| base.to_matrix(v)).collect();
    let ev0 = linalg::eigvalsh(&c0).expect("Hermitian");
    let mut t = (-ev0[0]).max(ev0[kappa - 1] - 1.0).max(0.0) + 1.0;
    let mut u = vec![0.0; dirs.len()];
    // −log det of a Hermitian matrix, or None outside the PSD cone
    let barrier = |m: &ComplexMatrix| -> Option<(f64, ComplexMatrix)> {
        let (vals, vecs) = linalg::eigh(m).ok()?;
        if vals[0] <= 0.0 {
            return None;
        }
        let inv = linalg::spectral_fn(&vals, &vecs, |x| 1.0 / x);
        Some((-vals.iter().map(|x| x.ln()).sum::<f64>(), inv))
    };
    let value = |u: &[f64], t: f64, weight: f64| -> Option<f64> {
        let c = to_c(u);
        let (b1, _) = barrier(&(&c + &id.scale_real(t)))?;
        let (b2, _) = barrier(&(&id.scale_real(1.0 + t) - &c))?;
        Some(weight * t + b1 + b2)
    };
    let mut steps = 0;
    let mut weight = 1.0;
    while weight < 1e13 {
        for _ in 0..100 {
            let c = to_c(&u);
            let (_, s1) = barrier(&(&c + &id.scale_real(t))).expect("strictly feasible iterate");
            let (_, s2) = barrier(&(&id.scale_real(1.0 + t) - &c)).expect("strictly feasible iterate");
            let p = dirs.len();
            // gradient and Hessian in (u, t)
            let a1: Vec<ComplexMatrix> = dirs.iter().map(|d| &s1 * d).collect();
            let a2: Vec<ComplexMatrix> = dirs.iter().map(|d| &s2 * d).collect();
            let mut g = vec![0.0; p + 1];
            let mut h = vec![vec![0.0; p + 1]; p + 1];
            for i in 0..p {
                g[i] = -a1[i].trace().re + a2[i].trace().re;
                for j in 0..=i {
                    let v = (&a1[i] * &a1[j]).trace().re + (&a2[i] * &a2[j]).trace().re;
                    h[i][j] = v;
                    h[j][i] = v;
                }
                let v = (&a1[i] * &s1).trace().re - (&a2[i] * &s2).trace().re;
                h[i][p] = v;
                h[p][i] = v;
            }
            g[p] = weight - s1.trace().re - s2.trace().re;
            h[p][p] = (&s1 * &s1).trace().re + (&s2 * &s2).trace().re;
            let Some(dx) = solve_spd(&h, &g) else { break };
            let decrement: f64 = dx.iter().zip(&g).map(|(a, b)| a * b).sum();
            steps += 1;
            if decrement / 2.0 <= 1e-12 {
                break;
            }
            let f0 = value(&u, t, weight).expect("strictly feasible iterate");
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-12 {
                let un: Vec<f64> = u.iter().zip(&dx).map(|(a, b)| a - step * b).collect();
                let tn = t - step * dx[p];
                if let Some(f) = value(&un, tn, weight) {
                    if f <= f0 - 0.25 * step * decrement {
                        u = un;
                        t = tn;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved || t < 0.0 {
                break;
            }
        }
        if t < 0.0 {
            break;
        }
        weight *= 10.0;
    }
    finish(&to_c(&u), steps)
}

/// Orthonormal basis of the null space of a real rows × cols matrix.
fn null_space(a: &[Vec<f64>], cols: usize) -> Vec<Vec<f64>> {
    let rows = a.len().max(cols);
    let m = ComplexMatrix::from_fn(rows, cols, |i, j| re(a.get(i).map_or(0.0, |r| r[j])));
    let (_, sv, vt) = linalg::svd(&m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let basis: Vec<Vec<f64>> = (0..sv.len())
        .filter(|&k| sv[k] <= 1e-10 * smax.max(1e-300))
        .map(|k| (0..cols).map(|j| vt[(k, j)].re).collect())
        .collect();
    debug_assert!(basis.iter().all(|v| a.iter().all(|r| r.iter().zip(v).map(|(x, y)| x * y).sum::<f64>().abs() <= 1e-9 * smax.max(1.0))));
    basis
}

/// Solves H x = g for symmetric positive definite H.
fn solve_spd(h: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| h[i][j]);
    let chol = nalgebra::linalg::Cholesky::new(m)?;
    let x = chol.solve(&nalgebra::DVector::from_column_slice(g));
    Some(x.iter().copied().collect())
}

/// h(x) = max over the zonoid of ⟨x, z⟩: the sum of positive eigenvalues of
/// A (per block when blocks are present).
pub fn support_function(x: &ComplexMatrix, spec: &ZonoidSpec) -> Result<f64> {
    check_direction(x, spec)?;
    let a = spec.direction_matrix(x);
    let k = spec.kappa();
    let all = [(0..k).collect::<Vec<_>>()];
    let blocks: &[Vec<usize>] = spec.blocks().unwrap_or(&all);
    blocks
        .iter()
        .map(|b| {
            let ev = linalg::eigvalsh(&a.submatrix(b, b).hermitian_part())?;
            Ok(ev.iter().filter(|&&v| v > 0.0).sum::<f64>())
        })
        .sum()
}

/// Directions used by [`hausdorff_estimate`]: ± the orthonormal Hermitian
/// basis, then `samples` Gaussian unit-Frobenius Hermitian matrices drawn in
/// sequence from a ChaCha stream seeded with `seed`.
pub fn sample_directions(d: usize, samples: usize, seed: u64) -> Vec<ComplexMatrix> {
    let mut dirs: Vec<ComplexMatrix> = linalg::hermitian_basis(d)
        .into_iter()
        .flat_map(|b| {
            let neg = -&b;
            [b, neg]
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let v: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        let v: Vec<f64> = v.iter().map(|x| x / n).collect();
        dirs.push(linalg::from_hermitian_coords(d, &v));
    }
    dirs
}

/// Frobenius-metric Hausdorff distance estimate max_x |h_a(x) − h_b(x)| over
/// [`sample_directions`]. Never exceeds the true distance.
pub fn hausdorff_estimate(a: &ZonoidSpec, b: &ZonoidSpec, samples: usize, seed: u64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension("zonoids live in different dimensions".into()));
    }
    sample_directions(a.dim(), samples, seed)
        .iter()
        .try_fold(0.0f64, |acc, x| {
            Ok(acc.max((support_function(x, a)? - support_function(x, b)?).abs()))
        })
}

/// Looks for x with ⟨x, z⟩ > h(x) + 1e-9; returns the direction and gap.
pub fn separating_direction(z: &ComplexMatrix, spec: &ZonoidSpec, samples: usize, seed: u64) -> Result<Option<(ComplexMatrix, f64)>> {
    check_direction(z, spec)?;
    let mut dirs = vec![z.clone()];
    if let Ok(rep) = membership(z, spec, MEMBERSHIP_TOL) {
        if !rep.feasible {
            // residual direction of the best box-feasible point found
            let k = spec.kappa();
            let labels = spec.labels();
            let base = Subproblem::new(spec, z, ComplexMatrix::zeros(k, k), ComplexMatrix::identity(k), &labels);
            let tau = (z.trace().re / spec.dim() as f64).clamp(0.0, 1.0);
            let (y, _) = base.dykstra(base.to_coords(&ComplexMatrix::identity(k).scale_real(tau)), MEMBERSHIP_TOL);
            dirs.push(z - &spec.image(&base.coefficient(&y)));
        }
    }
    dirs.extend(sample_directions(spec.dim(), samples, seed));
    let mut best: Option<(ComplexMatrix, f64)> = None;
    for x in dirs {
        let n = x.frobenius_norm();
        if n == 0.0 {
            continue;
        }
        let x = x.scale_real(1.0 / n);
        let gap = x.hs_inner(z).re - support_function(&x, spec)?;
        if gap > 1e-9 && best.as_ref().is_none_or(|(_, g)| gap > *g) {
            best = Some((x, gap));
        }
    }
    Ok(best)
}

/// Rank-1 coefficient matrix of a measurement operator K = Σ_m w_m K̂_m,
/// normalized so that L(C) = K†K, i.e. C_{mn} = conj(w_m) w_n.
pub fn endpoint_cmatrix(k_leaf: &ComplexMatrix, spec: &ZonoidSpec, tol: f64) -> Result<CoefficientMatrix> {
    let kappa = spec.kappa();
    let w = match spec.blocks() {
        None => {
            let (w, residual) = span_coefficients(k_leaf, spec.basis())?;
            if residual > tol {
                return Err(Error::NotInSpan { residual });
            }
            w
        }
        Some(blocks) => {
            // the leaf must come from a single CP map
            let mut best: Option<(f64, Vec<C64>)> = None;
            for b in blocks {
                let ops: Vec<ComplexMatrix> = b.iter().map(|&m| spec.basis()[m].clone()).collect();
                let (wb, r) = span_coefficients(k_leaf, &ops)?;
                if best.as_ref().is_none_or(|(br, _)| r < *br) {
                    let mut full = vec![re(0.0); kappa];
                    for (&m, x) in b.iter().zip(wb) {
                        full[m] = x;
                    }
                    best = Some((r, full));
                }
            }
            let (r, w) = best.expect("blocks are non-empty");
            if r > tol {
                let union = lstsq_residual(k_leaf, spec.basis());
                return Err(if union <= tol {
                    Error::BlockMixing { defect: r }
                } else {
                    Error::NotInSpan { residual: union }
                });
            }
            w
        }
    };
    let wc: Vec<C64> = w.iter().map(|x| x.conj()).collect();
    Ok(CoefficientMatrix(ComplexMatrix::outer(&wc, &wc)))
}

/// Least-squares residual of `op` against a possibly dependent set.
fn lstsq_residual(op: &ComplexMatrix, basis: &[ComplexMatrix]) -> f64 {
    let n = op.rows() * op.cols();
    let a = ComplexMatrix::from_fn(n, basis.len(), |i, j| basis[j].data()[i]);
    let (u, s, _) = linalg::svd(&a);
    let smax = s.first().copied().unwrap_or(0.0);
    let mut proj = vec![re(0.0); n];
    for (k, &sk) in s.iter().enumerate() {
        if sk > 1e-10 * smax {
            let coef: C64 = (0..n).map(|i| u[(i, k)].conj() * op.data()[i]).sum();
            for (i, p) in proj.iter_mut().enumerate() {
                *p += u[(i, k)] * coef;
            }
        }
    }
    op.data()
        .iter()
        .zip(&proj)
        .map(|(x, p)| (x - p).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub pass: bool,
    pub defect: f64,
}

/// ‖Σ cs − target‖_F ≤ 1e-7. Continuous families enter through
/// [`integrate_family`].
pub fn cmatrix_resolution_check(cs: &[CoefficientMatrix], target: &CoefficientMatrix) -> Result<ResolutionReport> {
    let k = target.kappa();
    if cs.iter().any(|c| c.kappa() != k) {
        return Err(Error::Dimension("coefficient matrices of different sizes".into()));
    }
    let sum = cs
        .iter()
        .fold(ComplexMatrix::zeros(k, k), |acc, c| &acc + c.matrix());
    let defect = (&sum - target.matrix()).frobenius_norm();
    Ok(ResolutionReport {
        pass: defect <= RESOLUTION_TOL,
        defect,
    })
}

/// ∫₀¹ C(σ) dσ by the σ-measure rule.
pub fn integrate_family(rule: &SigmaRule, family: impl Fn(f64) -> ComplexMatrix) -> Result<CoefficientMatrix> {
    CoefficientMatrix::new(rule.integrate_matrix(family))
}
