//! Kirkwood-Dirac distributions: construction, conditioning, inversion.
//!
//! Three constructors cover the three forms in use:
//!
//! - [`standard_kd`]: Q_{i,j} = ⟨b_j|a_i⟩⟨a_i|ρ|b_j⟩ for two orthonormal
//!   bases;
//! - [`extended_kd`]: the k-basis chain
//!   Q_{i_1,…,i_k} = ⟨a^{(k)}|a^{(k-1)}⟩···⟨a^{(2)}|a^{(1)}⟩⟨a^{(1)}|ρ|a^{(k)}⟩,
//!   equivalently Tr(Π_k···Π_1 ρ); axis 0 of the tensor is the measurement
//!   adjacent to ρ (the convention is fixed here once and relied on by the
//!   circuit simulator and the OTOC code);
//! - [`povm_kd`]: Tr(M^{(k)}···M^{(1)} ρ) for arbitrary POVM chains.
//!
//! On top of these sit the KD symbol of an operator, the overlap formula,
//! state reconstruction from the distribution (the dual frame), Bayes-style
//! conditioning, and Dirac's "A to the left of B" operator ordering.
//!
//! Vanishing basis overlaps ⟨a_i|b_j⟩ = 0 are allowed when *constructing* a
//! distribution (it then carries partial information only), but the symbol
//! and reconstruction maps divide by the overlaps and reject them with a
//! dedicated error. The modulus threshold for "vanishing" is 1e-12.

use nalgebra::DMatrix;

use crate::error::{KdError, Result};
use crate::hilbert::{pairwise_sum, C64, CMatrix, Operator, OrthonormalBasis, Povm};

/// Overlaps with modulus at or below this are treated as vanishing.
pub const OVERLAP_EPS: f64 = 1e-12;

/// A k-index tensor of complex quasi-probabilities.
///
/// Entries are stored flat in row-major order over the index tuple
/// (i_1, …, i_k). `normalizer` records the probability divided out by the
/// most recent conditioning step (1 for unconditioned distributions), so
/// post-selection probabilities remain queryable.
#[derive(Debug, Clone, PartialEq)]
pub struct KdDistribution {
    shape: Vec<usize>,
    values: Vec<C64>,
    normalizer: C64,
}

impl KdDistribution {
    /// Assemble from a shape and row-major values; lengths must agree.
    pub fn from_values(shape: Vec<usize>, values: Vec<C64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.is_empty() || values.len() != expect {
            return Err(KdError::InvalidDimension(format!(
                "shape {shape:?} needs {expect} values, got {}",
                values.len()
            )));
        }
        Ok(Self { shape, values, normalizer: C64::new(1.0, 0.0) })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of indices k.
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Probability divided out by the most recent conditioning (1 if none).
    pub fn normalizer(&self) -> C64 {
        self.normalizer
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (i, (&ix, &n)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < n, "index {ix} out of bounds for axis {i}");
            flat = flat * n + ix;
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.values[self.flat_index(idx)]
    }

    /// Sum of all entries (pairwise summation; 1 for any freshly built
    /// distribution and for conditionals).
    pub fn total(&self) -> C64 {
        pairwise_sum(&self.values)
    }

    /// Iterate over (index tuple, value).
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, C64)> + '_ {
        let shape = self.shape.clone();
        self.values.iter().enumerate().map(move |(flat, &v)| {
            let mut idx = vec![0; shape.len()];
            let mut rem = flat;
            for ax in (0..shape.len()).rev() {
                idx[ax] = rem % shape[ax];
                rem /= shape[ax];
            }
            (idx, v)
        })
    }

    /// Marginal over one axis: sums out every other index and returns the
    /// per-outcome values along `axis`.
    pub fn marginal(&self, axis: usize) -> Result<Vec<C64>> {
        if axis >= self.shape.len() {
            return Err(KdError::InvalidArgument(format!("axis {axis} out of range")));
        }
        let n = self.shape[axis];
        let mut buckets: Vec<Vec<C64>> = vec![Vec::new(); n];
        for (idx, v) in self.iter() {
            buckets[idx[axis]].push(v);
        }
        Ok(buckets.iter().map(|b| pairwise_sum(b)).collect())
    }

    /// Sum out one axis, producing the (k-1)-index distribution.
    pub fn marginalize_out(&self, axis: usize) -> Result<KdDistribution> {
        if self.shape.len() < 2 {
            return Err(KdError::InvalidArgument("cannot marginalize a rank-1 distribution".into()));
        }
        if axis >= self.shape.len() {
            return Err(KdError::InvalidArgument(format!("axis {axis} out of range")));
        }
        let mut new_shape = self.shape.clone();
        new_shape.remove(axis);
        let total: usize = new_shape.iter().product();
        let mut buckets: Vec<Vec<C64>> = vec![Vec::new(); total];
        for (idx, v) in self.iter() {
            let mut reduced = idx.clone();
            reduced.remove(axis);
            let mut flat = 0;
            for (&ix, &n) in reduced.iter().zip(&new_shape) {
                flat = flat * n + ix;
            }
            buckets[flat].push(v);
        }
        let values = buckets.iter().map(|b| pairwise_sum(b)).collect();
        KdDistribution::from_values(new_shape, values)
    }
}

/// Standard two-basis KD distribution Q_{i,j} = ⟨b_j|a_i⟩⟨a_i|ρ|b_j⟩.
///
/// Row sums reproduce the Born probabilities ⟨a_i|ρ|a_i⟩ and column sums
/// reproduce ⟨b_j|ρ|b_j⟩.
pub fn standard_kd(rho: &Operator, a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<KdDistribution> {
    rho.require_density()?;
    if rho.dim() != a.dim() || rho.dim() != b.dim() {
        return Err(KdError::DimensionMismatch(format!(
            "state dim {} vs bases {}x{}",
            rho.dim(),
            a.dim(),
            b.dim()
        )));
    }
    let d = rho.dim();
    let mut values = Vec::with_capacity(d * d);
    for i in 0..d {
        let ai = a.vector(i);
        let rho_cols: Vec<C64> = (0..d).map(|j| rho.sandwich(ai, b.vector(j))).collect();
        for (j, &airb) in rho_cols.iter().enumerate() {
            let bja = b.vector(j).dotc(ai);
            values.push(bja * airb);
        }
    }
    KdDistribution::from_values(vec![d, d], values)
}

/// k-extended KD distribution over an ordered list of bases (k ≥ 2).
///
/// Axis l of the output indexes basis l; basis 0 is adjacent to ρ.
pub fn extended_kd(rho: &Operator, bases: &[&OrthonormalBasis]) -> Result<KdDistribution> {
    if bases.len() < 2 {
        return Err(KdError::InvalidArgument("extended KD needs at least two bases".into()));
    }
    rho.require_density()?;
    let d = rho.dim();
    for b in bases {
        if b.dim() != d {
            return Err(KdError::DimensionMismatch("all bases must match the state dimension".into()));
        }
    }
    let k = bases.len();
    // Precompute neighbour transition overlaps t[l][(i, j)] = <a^{(l+1)}_j | a^{(l)}_i>
    let mut trans: Vec<DMatrix<C64>> = Vec::with_capacity(k - 1);
    for l in 0..k - 1 {
        trans.push(DMatrix::from_fn(d, d, |i, j| bases[l + 1].vector(j).dotc(bases[l].vector(i))));
    }
    // rho_sand[(i, j)] = <a^{(1)}_i | rho | a^{(k)}_j>
    let rho_sand = DMatrix::from_fn(d, d, |i, j| rho.sandwich(bases[0].vector(i), bases[k - 1].vector(j)));

    let shape = vec![d; k];
    let total: usize = shape.iter().product();
    let mut values = Vec::with_capacity(total);
    let mut idx = vec![0usize; k];
    for flat in 0..total {
        let mut rem = flat;
        for ax in (0..k).rev() {
            idx[ax] = rem % d;
            rem /= d;
        }
        // chain = <a^(k)|a^(k-1)>...<a^(2)|a^(1)> <a^(1)|rho|a^(k)>
        let mut chain = rho_sand[(idx[0], idx[k - 1])];
        for l in 0..k - 1 {
            chain *= trans[l][(idx[l], idx[l + 1])];
        }
        values.push(chain);
    }
    KdDistribution::from_values(shape, values)
}

/// Measurement-generalised KD distribution Tr(M^{(k)}···M^{(1)} ρ) over an
/// ordered list of POVMs.
pub fn povm_kd(rho: &Operator, povms: &[&Povm]) -> Result<KdDistribution> {
    if povms.is_empty() {
        return Err(KdError::InvalidArgument("need at least one POVM".into()));
    }
    rho.require_density()?;
    let d = rho.dim();
    for p in povms {
        if p.dim() != d {
            return Err(KdError::DimensionMismatch("all POVMs must match the state dimension".into()));
        }
    }
    let shape: Vec<usize> = povms.iter().map(|p| p.len()).collect();
    let total: usize = shape.iter().product();
    let k = povms.len();
    let mut values = Vec::with_capacity(total);
    let mut idx = vec![0usize; k];
    for flat in 0..total {
        let mut rem = flat;
        for ax in (0..k).rev() {
            idx[ax] = rem % shape[ax];
            rem /= shape[ax];
        }
        // M^{(1)} rho, then left-multiply up the chain, then trace
        let mut acc: CMatrix = povms[0].element(idx[0]).matrix() * rho.matrix();
        for l in 1..k {
            acc = povms[l].element(idx[l]).matrix() * acc;
        }
        values.push(acc.trace());
    }
    KdDistribution::from_values(shape, values)
}

/// KD symbol of an operator: T_{i,j}(C) = ⟨a_i|C|b_j⟩ / ⟨a_i|b_j⟩.
///
/// Together with the standard distribution it realizes the overlap formula
/// Σ_{ij} T*_{ij}(C) Q_{ij}(ρ) = Tr(C†ρ) — see [`KdSymbol::overlap_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct KdSymbol {
    values: DMatrix<C64>,
}

impl KdSymbol {
    pub fn values(&self) -> &DMatrix<C64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.values[(i, j)]
    }

    /// Σ_{ij} T*_{ij} Q_{ij} = Tr(C†ρ) when Q represents ρ over the same
    /// basis pair.
    pub fn overlap_with(&self, q: &KdDistribution) -> Result<C64> {
        let (r, c) = self.values.shape();
        if q.shape() != [r, c] {
            return Err(KdError::DimensionMismatch("symbol and distribution shapes differ".into()));
        }
        let terms: Vec<C64> = (0..r)
            .flat_map(|i| (0..c).map(move |j| (i, j)))
            .map(|(i, j)| self.values[(i, j)].conj() * q.get(&[i, j]))
            .collect();
        Ok(pairwise_sum(&terms))
    }
}

/// KD symbol of `c` with respect to bases A and B; every overlap must be
/// non-vanishing.
pub fn kd_symbol(c: &Operator, a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<KdSymbol> {
    if c.dim() != a.dim() || c.dim() != b.dim() {
        return Err(KdError::DimensionMismatch("operator and bases must share a dimension".into()));
    }
    let d = c.dim();
    let mut values = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let ovl = a.vector(i).dotc(b.vector(j));
            if ovl.norm() <= OVERLAP_EPS {
                return Err(KdError::VanishingOverlap { i, j });
            }
            values[(i, j)] = c.sandwich(a.vector(i), b.vector(j)) / ovl;
        }
    }
    Ok(KdSymbol { values })
}

/// Invert a standard KD distribution back to the state:
/// ρ = Σ_{ij} Q_{ij} |a_i⟩⟨b_j| / ⟨b_j|a_i⟩.
pub fn reconstruct_state(q: &KdDistribution, a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<Operator> {
    let d = a.dim();
    if b.dim() != d || q.shape() != [d, d] {
        return Err(KdError::DimensionMismatch("distribution must be d x d over matching bases".into()));
    }
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let ovl = b.vector(j).dotc(a.vector(i));
            if ovl.norm() <= OVERLAP_EPS {
                return Err(KdError::VanishingOverlap { i, j });
            }
            let dual = a.vector(i) * b.vector(j).adjoint() / ovl;
            m += dual * q.get(&[i, j]);
        }
    }
    Operator::new(m)
}

/// Condition on one outcome: fixes `axis` to `value`, divides by the marginal
/// of that outcome, and drops the axis. The divided-out marginal is stored as
/// the conditional's normalizer.
pub fn condition_on_outcome(q: &KdDistribution, axis: usize, value: usize) -> Result<KdDistribution> {
    if axis >= q.rank() || value >= q.shape()[axis] {
        return Err(KdError::InvalidArgument("axis/value out of range".into()));
    }
    let p = q.marginal(axis)?[value];
    if p.norm() <= 1e-12 {
        return Err(KdError::ZeroProbability(p.norm()));
    }
    let mut new_shape = q.shape().to_vec();
    new_shape.remove(axis);
    if new_shape.is_empty() {
        new_shape.push(1);
    }
    let total: usize = new_shape.iter().product();
    let mut values = vec![C64::new(0.0, 0.0); total];
    for (idx, v) in q.iter() {
        if idx[axis] != value {
            continue;
        }
        let mut reduced = idx.clone();
        reduced.remove(axis);
        let mut flat = 0;
        if reduced.is_empty() {
            flat = 0;
        } else {
            for (&ix, &n) in reduced.iter().zip(&new_shape) {
                flat = flat * n + ix;
            }
        }
        values[flat] = v / p;
    }
    let mut out = KdDistribution::from_values(new_shape, values)?;
    out.normalizer = p;
    Ok(out)
}

/// Condition on the event that `axis` takes a value inside `subset`: entries
/// outside the subset are zeroed, entries inside are divided by the subset
/// probability. Shape is preserved; the subset probability is stored as the
/// normalizer.
pub fn condition_on_subset(q: &KdDistribution, axis: usize, subset: &[usize]) -> Result<KdDistribution> {
    if axis >= q.rank() {
        return Err(KdError::InvalidArgument(format!("axis {axis} out of range")));
    }
    let n = q.shape()[axis];
    let mut member = vec![false; n];
    for &s in subset {
        if s >= n {
            return Err(KdError::InvalidArgument(format!("subset element {s} out of range")));
        }
        member[s] = true;
    }
    let marg = q.marginal(axis)?;
    let p = pairwise_sum(&subset.iter().map(|&s| marg[s]).collect::<Vec<_>>());
    if p.norm() <= 1e-12 {
        return Err(KdError::ZeroProbability(p.norm()));
    }
    let values = q
        .iter()
        .map(|(idx, v)| if member[idx[axis]] { v / p } else { C64::new(0.0, 0.0) })
        .collect();
    let mut out = KdDistribution::from_values(q.shape().to_vec(), values)?;
    out.normalizer = p;
    Ok(out)
}

/// Dirac operator ordering ("A to the left of B"): builds
/// Σ_{ij} h(i,j) Π_{a_i} Π_{b_j} from a per-index-pair coefficient table.
///
/// For a separable table h(i,j) = f(a_i)·g(b_j) the result equals f(Â)g(B̂).
pub fn dirac_quantize(
    h: impl Fn(usize, usize) -> C64,
    a: &OrthonormalBasis,
    b: &OrthonormalBasis,
) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(KdError::DimensionMismatch("bases must share a dimension".into()));
    }
    let d = a.dim();
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            // Pi_a Pi_b = |a_i><a_i|b_j><b_j|
            let ovl = a.vector(i).dotc(b.vector(j));
            m += (a.vector(i) * b.vector(j).adjoint()) * (ovl * h(i, j));
        }
    }
    Operator::new(m)
}
