//! Set-algebraic machinery for random-set predictions.
//!
//! A prediction head emits one belief value per member of a [`FocalFamily`], an
//! ordered collection of nonempty class subsets. This module turns beliefs into
//! masses (Möbius inversion over the family), masses into pignistic
//! probabilities, and masses into per-class credal intervals.
//!
//! Vectors follow the row-vector convention: `mass = bel · M`, `betp = mass · P`
//! with `M` of shape `K×K` and `P` of shape `K×C`.
//!
//! Family order is canonical: ascending cardinality, ties broken
//! lexicographically by sorted member indices. Matrices, serialized families and
//! budget tie-breaks all depend on it.
//!
//! On a budgeted family (not the full power set) the Möbius sum only ranges over
//! family members, so `bel_to_mass` is no longer the true inverse of
//! `mass_to_bel`. Only full power sets round-trip exactly.

use std::cmp::Ordering;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Additive constant inside every logarithm, and the floor below which a mass or
/// probability total is treated as zero.
pub const EPS: f64 = 1e-8;

/// Largest class count for which the full power set may be enumerated.
pub const MAX_POWER_SET_CLASSES: usize = 16;

/// Sets are stored as `u64` bitmasks.
pub const MAX_CLASSES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassUniverse {
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_names: Option<Vec<String>>,
}

impl ClassUniverse {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "a class universe needs at least 2 classes, got {num_classes}"
            )));
        }
        if num_classes > MAX_CLASSES {
            return Err(Error::InvalidArgument(format!(
                "at most {MAX_CLASSES} classes are supported, got {num_classes}"
            )));
        }
        Ok(Self {
            num_classes,
            class_names: None,
        })
    }

    pub fn with_names(names: Vec<String>) -> Result<Self> {
        let mut universe = Self::new(names.len())?;
        universe.class_names = Some(names);
        Ok(universe)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }
}

/// A nonempty subset of class indices, kept both as a sorted list and a bitmask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FocalSet {
    members: Vec<usize>,
    mask: u64,
}

impl FocalSet {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::InvalidArgument("focal sets must be nonempty".into()));
        }
        let mut mask = 0u64;
        for &m in &members {
            if m >= MAX_CLASSES {
                return Err(Error::InvalidArgument(format!(
                    "class index {m} exceeds the supported maximum of {}",
                    MAX_CLASSES - 1
                )));
            }
            mask |= 1 << m;
        }
        Ok(Self { members, mask })
    }

    pub fn singleton(class: usize) -> Result<Self> {
        Self::new([class])
    }

    fn from_mask(mask: u64) -> Self {
        let members = (0..MAX_CLASSES).filter(|i| mask & (1 << i) != 0).collect();
        Self { members, mask }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, class: usize) -> bool {
        class < MAX_CLASSES && self.mask & (1 << class) != 0
    }

    pub fn is_subset_of(&self, other: &FocalSet) -> bool {
        self.mask & !other.mask == 0
    }
}

impl Ord for FocalSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.members
            .len()
            .cmp(&other.members.len())
            .then_with(|| self.members.cmp(&other.members))
    }
}

impl PartialOrd for FocalSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FocalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, m) in self.members.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

/// How the Möbius map is evaluated for a family.
#[derive(Debug, Clone)]
enum Layout {
    /// Complete power set: fast subset transforms over a mask-indexed buffer.
    PowerSet { position_of_mask: Vec<usize> },
    /// Arbitrary family: for every set, the family positions of its subsets
    /// (itself included).
    Sparse { subsets: Vec<Vec<usize>> },
}

/// Ordered collection of focal sets over a class universe.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct FocalFamily {
    universe: ClassUniverse,
    sets: Vec<FocalSet>,
    singleton_position: Vec<usize>,
    layout: Layout,
}

impl PartialEq for FocalFamily {
    fn eq(&self, other: &Self) -> bool {
        self.universe == other.universe && self.sets == other.sets
    }
}

impl FocalFamily {
    /// Builds a family from arbitrary sets. The sets are sorted into canonical
    /// order; every singleton must be present and duplicates are rejected.
    pub fn from_sets(universe: ClassUniverse, mut sets: Vec<FocalSet>) -> Result<Self> {
        let c = universe.num_classes();
        for s in &sets {
            if let Some(&bad) = s.members().iter().find(|&&m| m >= c) {
                return Err(Error::InvalidArgument(format!(
                    "set {s} references class {bad} outside 0..{c}"
                )));
            }
        }
        sets.sort();
        if let Some(w) = sets.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "duplicate focal set {}",
                w[0]
            )));
        }
        let mut singleton_position = vec![usize::MAX; c];
        for (k, s) in sets.iter().enumerate() {
            if s.len() == 1 {
                singleton_position[s.members()[0]] = k;
            }
        }
        if let Some(missing) = singleton_position.iter().position(|&p| p == usize::MAX) {
            return Err(Error::InvalidArgument(format!(
                "focal family is missing the singleton {{{missing}}}"
            )));
        }

        let is_power_set = c <= MAX_POWER_SET_CLASSES && sets.len() == (1usize << c) - 1;
        let layout = if is_power_set {
            let mut position_of_mask = vec![usize::MAX; 1 << c];
            for (k, s) in sets.iter().enumerate() {
                position_of_mask[s.mask() as usize] = k;
            }
            Layout::PowerSet { position_of_mask }
        } else {
            let subsets = sets
                .iter()
                .map(|outer| {
                    sets.iter()
                        .enumerate()
                        .filter(|(_, inner)| inner.is_subset_of(outer))
                        .map(|(j, _)| j)
                        .collect()
                })
                .collect();
            Layout::Sparse { subsets }
        };

        Ok(Self {
            universe,
            sets,
            singleton_position,
            layout,
        })
    }

    /// The `C` singletons only.
    pub fn singletons(universe: ClassUniverse) -> Self {
        let sets = (0..universe.num_classes())
            .map(|i| FocalSet::from_mask(1 << i))
            .collect();
        Self::from_sets(universe, sets).expect("singletons form a valid family")
    }

    /// All `2^C − 1` nonempty subsets.
    pub fn power_set(universe: ClassUniverse) -> Result<Self> {
        let c = universe.num_classes();
        if c > MAX_POWER_SET_CLASSES {
            return Err(Error::InvalidArgument(format!(
                "power set of {c} classes is too large (limit {MAX_POWER_SET_CLASSES})"
            )));
        }
        let sets = (1u64..(1u64 << c)).map(FocalSet::from_mask).collect();
        Self::from_sets(universe, sets)
    }

    /// Singletons plus the `budget` highest-scoring non-singleton sets of
    /// cardinality at most `max_card`.
    ///
    /// A pair `{i, j}` scores `confusion[i][j] + confusion[j][i]`; a larger set
    /// scores the sum over its internal pairs. Ties keep canonical order. The
    /// diagonal of `confusion` is ignored.
    pub fn budgeted(
        universe: ClassUniverse,
        confusion: &Array2<f64>,
        budget: usize,
        max_card: usize,
    ) -> Result<Self> {
        let c = universe.num_classes();
        if confusion.dim() != (c, c) {
            return Err(Error::InvalidArgument(format!(
                "confusion matrix must be {c}x{c}, got {}x{}",
                confusion.nrows(),
                confusion.ncols()
            )));
        }
        if confusion.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "confusion matrix entries must be finite and nonnegative".into(),
            ));
        }
        if max_card < 2 || max_card > c {
            return Err(Error::InvalidArgument(format!(
                "max_card must lie in 2..={c}, got {max_card}"
            )));
        }

        let pair_score = |i: usize, j: usize| confusion[[i, j]] + confusion[[j, i]];
        let mut candidates: Vec<(f64, FocalSet)> = Vec::new();
        for card in 2..=max_card {
            for members in combinations(c, card) {
                let mut score = 0.0;
                for (a, &i) in members.iter().enumerate() {
                    for &j in &members[a + 1..] {
                        score += pair_score(i, j);
                    }
                }
                candidates.push((score, FocalSet::new(members)?));
            }
        }
        // Candidates are generated in canonical order; a stable sort keeps it
        // as the tie-break.
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut sets: Vec<FocalSet> = (0..c).map(|i| FocalSet::from_mask(1 << i)).collect();
        sets.extend(candidates.into_iter().take(budget).map(|(_, s)| s));
        Self::from_sets(universe, sets)
    }

    pub fn universe(&self) -> &ClassUniverse {
        &self.universe
    }

    pub fn num_classes(&self) -> usize {
        self.universe.num_classes()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[FocalSet] {
        &self.sets
    }

    pub fn is_power_set(&self) -> bool {
        matches!(self.layout, Layout::PowerSet { .. })
    }

    /// Position of the singleton `{class}` in the family.
    pub fn singleton_position(&self, class: usize) -> usize {
        self.singleton_position[class]
    }

    /// Dense Möbius matrix: `M[j][k] = (−1)^{|A_k \ A_j|}` when `A_j ⊆ A_k`.
    ///
    /// Materialized on demand; quadratic in the family size.
    pub fn mobius_matrix(&self) -> Array2<f64> {
        let k = self.len();
        Array2::from_shape_fn((k, k), |(j, col)| {
            let (a, b) = (&self.sets[j], &self.sets[col]);
            if a.is_subset_of(b) {
                sign(b.len() - a.len())
            } else {
                0.0
            }
        })
    }

    /// Dense pignistic matrix: `P[k][i] = 1/|A_k|` when `i ∈ A_k`.
    pub fn pignistic_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), self.num_classes()), |(k, i)| {
            let s = &self.sets[k];
            if s.contains(i) {
                1.0 / s.len() as f64
            } else {
                0.0
            }
        })
    }

    /// `out = bel · M`. Slices must have length `K`.
    pub fn bel_to_mass_into(&self, bel: &[f64], out: &mut [f64]) {
        match &self.layout {
            Layout::PowerSet { position_of_mask } => {
                let mut buf = scatter(position_of_mask, bel);
                let c = self.num_classes();
                for bit in 0..c {
                    let b = 1usize << bit;
                    for mask in 0..buf.len() {
                        if mask & b != 0 {
                            buf[mask] -= buf[mask ^ b];
                        }
                    }
                }
                gather(position_of_mask, &buf, out);
            }
            Layout::Sparse { subsets } => {
                for (k, subs) in subsets.iter().enumerate() {
                    let card = self.sets[k].len();
                    out[k] = subs
                        .iter()
                        .map(|&j| sign(card - self.sets[j].len()) * bel[j])
                        .sum();
                }
            }
        }
    }

    /// `out[j] = Σ_{A_k ⊆ A_j} mass[k]`, the family-restricted zeta transform.
    pub fn mass_to_bel_into(&self, mass: &[f64], out: &mut [f64]) {
        match &self.layout {
            Layout::PowerSet { position_of_mask } => {
                let mut buf = scatter(position_of_mask, mass);
                for bit in 0..self.num_classes() {
                    let b = 1usize << bit;
                    for mask in 0..buf.len() {
                        if mask & b != 0 {
                            buf[mask] += buf[mask ^ b];
                        }
                    }
                }
                gather(position_of_mask, &buf, out);
            }
            Layout::Sparse { subsets } => {
                for (j, subs) in subsets.iter().enumerate() {
                    out[j] = subs.iter().map(|&k| mass[k]).sum();
                }
            }
        }
    }

    /// `out = grad · Mᵀ`, pulling a gradient on masses back onto beliefs.
    pub fn mobius_transpose_into(&self, grad: &[f64], out: &mut [f64]) {
        match &self.layout {
            Layout::PowerSet { position_of_mask } => {
                let mut buf = scatter(position_of_mask, grad);
                for bit in 0..self.num_classes() {
                    let b = 1usize << bit;
                    for mask in 0..buf.len() {
                        if mask & b == 0 {
                            buf[mask] -= buf[mask | b];
                        }
                    }
                }
                gather(position_of_mask, &buf, out);
            }
            Layout::Sparse { subsets } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for (k, subs) in subsets.iter().enumerate() {
                    let card = self.sets[k].len();
                    for &j in subs {
                        out[j] += sign(card - self.sets[j].len()) * grad[k];
                    }
                }
            }
        }
    }

    /// Unnormalized `mass · P`.
    pub fn pignistic_raw_into(&self, mass: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (s, &m) in self.sets.iter().zip(mass) {
            let share = m / s.len() as f64;
            for &i in s.members() {
                out[i] += share;
            }
        }
    }

    /// Text form: header `C K`, then one line per set with its sorted members.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.num_classes(), self.len());
        for s in &self.sets {
            let line: Vec<String> = s.members().iter().map(usize::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty focal family file".into()))?;
        let nums = parse_usizes(header)?;
        let [c, k] = nums[..] else {
            return Err(Error::Parse(format!("bad focal family header {header:?}")));
        };
        let sets = lines
            .map(|l| parse_usizes(l).and_then(FocalSet::new))
            .collect::<Result<Vec<_>>>()?;
        check_len("focal family set count", k, sets.len())?;
        Self::from_sets(ClassUniverse::new(c)?, sets)
    }
}

fn parse_usizes(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Error::Parse(format!("{t:?}: {e}")))
        })
        .collect()
}

fn sign(diff: usize) -> f64 {
    if diff.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn scatter(position_of_mask: &[usize], values: &[f64]) -> Vec<f64> {
    position_of_mask
        .iter()
        .map(|&p| if p == usize::MAX { 0.0 } else { values[p] })
        .collect()
}

fn gather(position_of_mask: &[usize], buf: &[f64], out: &mut [f64]) {
    for (mask, &p) in position_of_mask.iter().enumerate() {
        if p != usize::MAX {
            out[p] = buf[mask];
        }
    }
}

/// All `k`-combinations of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(current.clone());
        let Some(i) = (0..k).rev().find(|&i| current[i] < n - k + i) else {
            return out;
        };
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Lower and upper probability of every singleton class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredalInterval {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CredalInterval {
    pub fn width(&self, class: usize) -> f64 {
        self.upper[class] - self.lower[class]
    }
}

pub fn bel_to_mass(bel: &[f64], family: &FocalFamily) -> Result<Vec<f64>> {
    check_len("belief vector", family.len(), bel.len())?;
    let mut out = vec![0.0; family.len()];
    family.bel_to_mass_into(bel, &mut out);
    Ok(out)
}

pub fn mass_to_bel(mass: &[f64], family: &FocalFamily) -> Result<Vec<f64>> {
    check_len("mass vector", family.len(), mass.len())?;
    let mut out = vec![0.0; family.len()];
    family.mass_to_bel_into(mass, &mut out);
    Ok(out)
}

/// Clamps negative entries of a probability-like row to zero and rescales it to
/// sum to one. A row whose clamped total is at most [`EPS`] becomes uniform.
pub fn normalize_row(row: &mut [f64]) {
    row.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = row.iter().sum();
    if total > EPS {
        row.iter_mut().for_each(|v| *v /= total);
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|v| *v = u);
    }
}

/// Pignistic probability: `norm(mass · P)`.
pub fn mass_to_betp(mass: &[f64], family: &FocalFamily) -> Result<Vec<f64>> {
    check_len("mass vector", family.len(), mass.len())?;
    let mut out = vec![0.0; family.num_classes()];
    family.pignistic_raw_into(mass, &mut out);
    normalize_row(&mut out);
    Ok(out)
}

/// Clamps negative masses to zero and rescales to unit total.
///
/// Returns `None` when nothing positive remains.
pub fn sanitize_mass(mass: &[f64]) -> Option<Vec<f64>> {
    let clamped: Vec<f64> = mass.iter().map(|m| m.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    (total > EPS).then(|| clamped.into_iter().map(|m| m / total).collect())
}

/// Singleton lower/upper probabilities of the sanitized mass.
///
/// A mass with no positive entry carries no information and yields the vacuous
/// interval `[0, 1]` for every class.
pub fn credal_bounds(mass: &[f64], family: &FocalFamily) -> Result<CredalInterval> {
    check_len("mass vector", family.len(), mass.len())?;
    let c = family.num_classes();
    let Some(mass) = sanitize_mass(mass) else {
        return Ok(CredalInterval {
            lower: vec![0.0; c],
            upper: vec![1.0; c],
        });
    };
    let lower = (0..c).map(|i| mass[family.singleton_position(i)]).collect();
    let mut upper = vec![0.0; c];
    for (s, &m) in family.sets().iter().zip(&mass) {
        for &i in s.members() {
            upper[i] += m;
        }
    }
    Ok(CredalInterval { lower, upper })
}

pub fn credal_width(interval: &CredalInterval, predicted_class: usize) -> f64 {
    interval.width(predicted_class)
}

/// `−Σ p log(p + ε)`, natural log.
pub fn pignistic_entropy(betp: &[f64]) -> f64 {
    -betp.iter().map(|&p| p * (p + EPS).ln()).sum::<f64>()
}

/// Target belief for a label: 1 on every focal set containing it, 0 elsewhere.
pub fn target_belief(label: usize, family: &FocalFamily) -> Result<Vec<f64>> {
    if label >= family.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "label {label} outside 0..{}",
            family.num_classes()
        )));
    }
    Ok(family
        .sets()
        .iter()
        .map(|s| if s.contains(label) { 1.0 } else { 0.0 })
        .collect())
}
