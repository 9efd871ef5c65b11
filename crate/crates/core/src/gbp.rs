//! General branching processes driven by the block laws: every individual
//! draws a block type `a` and gets `m(a)` children, all born `log ell(a)`
//! after it.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::BlockParam;
use crate::quadrature::adaptive_simpson;
use crate::rng::{categorical, child_key, cumulative, root_key, unit_from_key};
use crate::stats::mean_stderr;

/// Default population cap of one simulated tree.
pub const DEFAULT_POPULATION_CAP: usize = 10_000_000;

/// One atom of an offspring law: with probability `prob`, `children`
/// offspring all born `ln(ell)` after the parent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawAtom {
    pub label: u32,
    pub prob: f64,
    pub children: u32,
    pub ell: u64,
}

impl LawAtom {
    pub fn offset(&self) -> f64 {
        (self.ell as f64).ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LawDoc")]
pub struct OffspringLaw {
    pub atoms: Vec<LawAtom>,
    #[serde(skip)]
    cdf: Vec<f64>,
}

#[derive(Deserialize)]
struct LawDoc {
    atoms: Vec<LawAtom>,
}

impl TryFrom<LawDoc> for OffspringLaw {
    type Error = Error;

    fn try_from(d: LawDoc) -> Result<Self> {
        OffspringLaw::custom(d.atoms)
    }
}

impl OffspringLaw {
    /// Arbitrary atoms; probabilities must sum to 1 and every `ell >= 2`.
    pub fn custom(atoms: Vec<LawAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::param("offspring law has no atoms"));
        }
        if atoms.iter().any(|a| !(a.prob >= 0.0 && a.prob.is_finite())) {
            return Err(Error::param("probabilities must be finite and non-negative"));
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("probabilities sum to {total}, not 1")));
        }
        if atoms.iter().any(|a| a.ell < 2) {
            return Err(Error::param("birth offsets must be positive (ell >= 2)"));
        }
        if atoms.iter().any(|a| a.children == 0 || a.children > 1 << 20) {
            return Err(Error::param("child counts must lie in 1..=2^20"));
        }
        let cdf = cumulative(&atoms.iter().map(|a| a.prob).collect::<Vec<_>>());
        Ok(Self { atoms, cdf })
    }

    /// The law of `(m(a), ell(a))` for `a` drawn from `probs`.
    pub fn blocks(alphabet: &[u32], probs: &[f64]) -> Result<Self> {
        crate::generator::validate_law(alphabet, probs)?;
        let atoms = alphabet
            .iter()
            .zip(probs)
            .map(|(&a, &prob)| {
                let b = BlockParam::new(a)?;
                Ok(LawAtom {
                    label: a,
                    prob,
                    children: b.m,
                    ell: u64::from(b.ell),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::custom(atoms)
    }

    pub fn uniform_blocks(alphabet: &[u32]) -> Result<Self> {
        let p = vec![1.0 / alphabet.len() as f64; alphabet.len()];
        Self::blocks(alphabet, &p)
    }

    /// Atom index drawn by the node with this key.
    #[inline]
    pub fn draw(&self, key: u64) -> usize {
        categorical(&self.cdf, unit_from_key(key))
    }

    pub fn mean_children(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * f64::from(a.children)).sum()
    }

    /// `sum_a p_a m(a) ell(a)^{-g}`.
    pub fn laplace(&self, g: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.prob * f64::from(a.children) * (a.ell as f64).powf(-g))
            .sum()
    }
}

/// `gamma` with `sum_a p_a m(a) ell(a)^{-gamma} = 1`, by bisection.
pub fn malthusian(law: &OffspringLaw) -> Result<f64> {
    if law.mean_children() <= 1.0 {
        return Err(Error::NoRoot(format!(
            "law is not supercritical: mean offspring {}",
            law.mean_children()
        )));
    }
    let max_m = law.atoms.iter().map(|a| f64::from(a.children)).fold(0.0, f64::max);
    let min_l = law.atoms.iter().map(|a| a.ell as f64).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, max_m.ln() / min_l.ln());
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if law.laplace(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// True when two atoms of positive probability have multiplicatively
/// independent `ell` (no `ell_1^p = ell_2^q` with `p, q >= 1`).
pub fn lattice_check(law: &OffspringLaw) -> bool {
    let sigs: Vec<Vec<(u64, u32)>> = law
        .atoms
        .iter()
        .filter(|a| a.prob > 0.0)
        .map(|a| factorize(a.ell))
        .collect();
    for i in 0..sigs.len() {
        for j in i + 1..sigs.len() {
            if !proportional(&sigs[i], &sigs[j]) {
                return true;
            }
        }
    }
    false
}

fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        let mut e = 0;
        while n.is_multiple_of(p) {
            n /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Exponent vectors are positive multiples of each other.
fn proportional(a: &[(u64, u32)], b: &[(u64, u32)]) -> bool {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.0 != y.0) {
        return false;
    }
    let (e0, f0) = (u64::from(a[0].1), u64::from(b[0].1));
    a.iter()
        .zip(b)
        .all(|(x, y)| u64::from(x.1) * f0 == u64::from(y.1) * e0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XlogxReport {
    /// `E[xi_gamma (log xi_gamma)_+]` with `xi_gamma = m(a) ell(a)^{-gamma}`.
    pub value: f64,
    pub finite: bool,
}

pub fn xlogx_check(law: &OffspringLaw) -> Result<XlogxReport> {
    let g = malthusian(law)?;
    let value: f64 = law
        .atoms
        .iter()
        .map(|a| {
            let xi = f64::from(a.children) * (a.ell as f64).powf(-g);
            a.prob * xi * xi.ln().max(0.0)
        })
        .sum();
    Ok(XlogxReport {
        value,
        finite: value.is_finite(),
    })
}

/// One individual of a simulated tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub birth: f64,
    /// Birth time of the parent, `-inf` for the root.
    pub parent_birth: f64,
    pub parent: u32,
    pub slot: u32,
    pub atom: u16,
    pub key: u64,
}

/// All individuals whose parent was born by `t_max`, in birth order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbpTree {
    pub t_max: f64,
    pub root_key: u64,
    pub individuals: Vec<Individual>,
}

pub const NO_PARENT: u32 = u32::MAX;

impl GbpTree {
    fn check_t(&self, t: f64) -> Result<()> {
        if t > self.t_max || t < 0.0 {
            return Err(Error::param(format!(
                "time {t} outside the simulated horizon [0, {}]",
                self.t_max
            )));
        }
        Ok(())
    }

    /// First index with birth time above `t`.
    fn split(&self, t: f64) -> usize {
        self.individuals.partition_point(|x| x.birth <= t)
    }

    /// Individuals born by `t`.
    pub fn born(&self, t: f64) -> Result<usize> {
        self.check_t(t)?;
        Ok(self.split(t))
    }

    /// `Lambda_t = { x : sigma_parent <= t < sigma_x }`.
    pub fn frontier(&self, t: f64) -> Result<impl Iterator<Item = &Individual> + '_> {
        self.check_t(t)?;
        Ok(self.individuals[self.split(t)..]
            .iter()
            .filter(move |x| x.parent_birth <= t))
    }
}

/// Simulates the tree rooted at `root_key(seed, 0)`.
pub fn simulate_tree(law: &OffspringLaw, t_max: f64, seed: u64) -> Result<GbpTree> {
    simulate_tree_from(law, t_max, root_key(seed, 0), DEFAULT_POPULATION_CAP)
}

/// Simulation from an explicit root key. The type of every individual is a
/// function of its key alone, and child keys derive from parent keys.
pub fn simulate_tree_from(law: &OffspringLaw, t_max: f64, key: u64, cap: usize) -> Result<GbpTree> {
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::param(format!("t_max must be finite and >= 0, got {t_max}")));
    }
    let offsets: Vec<f64> = law.atoms.iter().map(LawAtom::offset).collect();
    let root_atom = law.draw(key);
    let mut ind = vec![Individual {
        birth: 0.0,
        parent_birth: f64::NEG_INFINITY,
        parent: NO_PARENT,
        slot: 0,
        atom: root_atom as u16,
        key,
    }];
    // Broods keyed by (birth time bits, parent index); birth times are >= 0
    // so their bit patterns order like the values.
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((offsets[root_atom].to_bits(), 0u32)));
    while let Some(Reverse((bits, p))) = heap.pop() {
        let birth = f64::from_bits(bits);
        let parent = ind[p as usize];
        let n = law.atoms[parent.atom as usize].children;
        if ind.len() + n as usize > cap {
            return Err(Error::PopulationOverflow {
                cap,
                reached_t: birth,
            });
        }
        for slot in 0..n {
            let k = child_key(parent.key, slot);
            let atom = law.draw(k);
            let idx = ind.len() as u32;
            ind.push(Individual {
                birth,
                parent_birth: parent.birth,
                parent: p,
                slot,
                atom: atom as u16,
                key: k,
            });
            if birth <= t_max {
                heap.push(Reverse(((birth + offsets[atom]).to_bits(), idx)));
            }
        }
    }
    Ok(GbpTree {
        t_max,
        root_key: key,
        individuals: ind,
    })
}

/// `M_t = sum_{x in Lambda_t} e^{-gamma sigma_x}`.
pub fn martingale(tree: &GbpTree, t: f64, gamma: f64) -> Result<f64> {
    Ok(tree.frontier(t)?.map(|x| (-gamma * x.birth).exp()).sum())
}

/// A bounded characteristic `phi(age)`, zero for negative ages.
#[derive(Clone)]
pub enum Characteristic {
    Zero,
    /// Indicator of `[lo, hi)`.
    Indicator { lo: f64, hi: f64 },
    /// `f(age)` on `[0, support)`, bounded by `bound` in absolute value.
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        bound: f64,
        support: f64,
    },
}

impl std::fmt::Debug for Characteristic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Characteristic::Zero => write!(f, "Zero"),
            Characteristic::Indicator { lo, hi } => write!(f, "Indicator[{lo}, {hi})"),
            Characteristic::Custom { bound, support, .. } => {
                write!(f, "Custom(|phi| <= {bound} on [0, {support}))")
            }
        }
    }
}

impl Characteristic {
    pub fn indicator(lo: f64, hi: f64) -> Self {
        Characteristic::Indicator { lo, hi }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Characteristic::Zero => Ok(()),
            Characteristic::Indicator { lo, hi } if lo.is_finite() && hi > lo => Ok(()),
            Characteristic::Indicator { .. } => Err(Error::param("indicator needs finite lo < hi")),
            Characteristic::Custom { bound, support, .. }
                if bound.is_finite() && *bound >= 0.0 && *support > 0.0 =>
            {
                Ok(())
            }
            Characteristic::Custom { .. } => {
                Err(Error::param("characteristic must declare a finite bound and support"))
            }
        }
    }

    #[inline]
    pub fn eval(&self, age: f64) -> f64 {
        if age < 0.0 {
            return 0.0;
        }
        match self {
            Characteristic::Zero => 0.0,
            Characteristic::Indicator { lo, hi } => f64::from(u8::from(age >= *lo && age < *hi)),
            Characteristic::Custom { f, bound, support } => {
                if age < *support {
                    f(age).clamp(-bound, *bound)
                } else {
                    0.0
                }
            }
        }
    }

    /// Ages outside `[0, end)` contribute nothing.
    fn end(&self) -> f64 {
        match self {
            Characteristic::Zero => 0.0,
            Characteristic::Indicator { hi, .. } => hi.max(0.0),
            Characteristic::Custom { support, .. } => *support,
        }
    }
}

/// `Z^phi(t) = sum_x phi(t - sigma_x)` over individuals born by `t`.
pub fn characteristic_count(tree: &GbpTree, phi: &Characteristic, t: f64) -> Result<f64> {
    phi.validate()?;
    tree.check_t(t)?;
    let end = tree.split(t);
    let start = tree.individuals.partition_point(|x| x.birth <= t - phi.end());
    Ok(tree.individuals[start.min(end)..end]
        .iter()
        .map(|x| phi.eval(t - x.birth))
        .sum())
}

/// `int_0^inf e^{-gamma s} phi(s) ds / sum_a p_a m(a) ell(a)^{-gamma} log ell(a)`.
pub fn nerman_limit(law: &OffspringLaw, phi: &Characteristic, gamma: f64) -> Result<f64> {
    phi.validate()?;
    let num = match phi {
        Characteristic::Zero => 0.0,
        Characteristic::Indicator { lo, hi } => {
            let (a, b) = (lo.max(0.0), hi.max(0.0));
            ((-gamma * a).exp() - (-gamma * b).exp()) / gamma
        }
        Characteristic::Custom { support, bound, .. } => {
            // Truncate where the discounted bound is negligible.
            let end = support.min((bound.max(1e-300) / 1e-14).ln() / gamma);
            adaptive_simpson(|s| (-gamma * s).exp() * phi.eval(s), 0.0, end, 1e-10)?
        }
    };
    let den: f64 = law
        .atoms
        .iter()
        .map(|a| a.prob * f64::from(a.children) * (a.ell as f64).powf(-gamma) * a.offset())
        .sum();
    Ok(num / den)
}

/// One row of an ensemble report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub t: f64,
    #[serde(rename = "meanM")]
    pub mean_m: f64,
    #[serde(rename = "stderrM")]
    pub stderr_m: f64,
    /// Mean of `e^{-gamma t} Z^phi(t) / M_t`.
    #[serde(rename = "meanZnorm")]
    pub mean_znorm: f64,
    #[serde(rename = "stderrZnorm")]
    pub stderr_znorm: f64,
}

/// `(M_t, Z^phi(t))` for each `t` of `t_grid` on the tree rooted at `key`,
/// by depth-first traversal without storing the tree.
pub fn tree_statistics(
    law: &OffspringLaw,
    key: u64,
    t_grid: &[f64],
    gamma: f64,
    phi: &Characteristic,
) -> Result<Vec<(f64, f64)>> {
    phi.validate()?;
    if t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::param("times must be finite and >= 0"));
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let offsets: Vec<f64> = law.atoms.iter().map(LawAtom::offset).collect();
    let mut acc = vec![(0.0, 0.0); t_grid.len()];
    // (birth, parent birth, key)
    let mut stack = vec![(0.0f64, f64::NEG_INFINITY, key)];
    while let Some((birth, parent_birth, k)) = stack.pop() {
        let w = (-gamma * birth).exp();
        for (a, &t) in acc.iter_mut().zip(t_grid) {
            if parent_birth <= t && t < birth {
                a.0 += w;
            } else if birth <= t {
                a.1 += phi.eval(t - birth);
            }
        }
        if birth <= t_max {
            let atom = &law.atoms[law.draw(k)];
            let child_birth = birth + offsets[law.draw(k)];
            for slot in 0..atom.children {
                stack.push((child_birth, birth, child_key(k, slot)));
            }
        }
    }
    Ok(acc)
}

/// Martingale and normalized counts at each `t`, averaged over seeds.
pub fn ensemble(
    law: &OffspringLaw,
    phi: &Characteristic,
    t_grid: &[f64],
    seeds: &[u64],
) -> Result<Vec<EnsembleRow>> {
    let gamma = malthusian(law)?;
    let per_seed: Vec<Vec<(f64, f64)>> = seeds
        .par_iter()
        .map(|&s| {
            let st = tree_statistics(law, root_key(s, 0), t_grid, gamma, phi)?;
            Ok(st
                .into_iter()
                .zip(t_grid)
                .map(|((m, z), &t)| (m, (-gamma * t).exp() * z / m))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let m: Vec<f64> = per_seed.iter().map(|r| r[i].0).collect();
            let z: Vec<f64> = per_seed.iter().map(|r| r[i].1).collect();
            let (mean_m, stderr_m) = mean_stderr(&m);
            let (mean_znorm, stderr_znorm) = mean_stderr(&z);
            EnsembleRow {
                t,
                mean_m,
                stderr_m,
                mean_znorm,
                stderr_znorm,
            }
        })
        .collect())
}

pub fn ensemble_csv(rows: &[EnsembleRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
        .map_err(|e| Error::Format(e.to_string()))
}
