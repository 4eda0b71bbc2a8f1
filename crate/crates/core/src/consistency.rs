//! Consistency of families indexed by finite sets of times.
//!
//! Classical families of joint distributions are consistent when smaller
//! members are marginals of larger ones. Comb families are consistent when
//! smaller members are restrictions (identity insertion) of larger ones. The
//! two notions meet in [`classical_embed`], which maps a distribution to a
//! diagonal comb, and in [`idle_reduction`], which reads a comb family out
//! with projective measurements in a fixed basis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channels::{projective_instrument, Basis, ChoiChannel};
use crate::combs::{check_causal_order, Comb, SlotDims};
use crate::error::{CombError, Result};
use crate::format::{fmt_g17, Table};
use crate::tensor::{ComplexMatrix, C64, DEFAULT_TOL};
use crate::time::{TimeLabel, TimeSet};

/// Default tolerance for family comparisons (entrywise max norm).
pub const FAMILY_TOL: f64 = 1e-9;

const NEGATIVE_PROB_TOL: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-10;

/// A joint distribution over outcomes at a finite set of times.
///
/// Probabilities are stored densely, indexed by outcome tuples in ascending
/// time order with the earliest time most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct JointDistribution {
    times: TimeSet,
    alphabets: Vec<Vec<String>>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProbEntry {
    outcome: Vec<String>,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    times: TimeSet,
    alphabets: Vec<Vec<String>>,
    probs: Vec<ProbEntry>,
}

impl TryFrom<DistributionRepr> for JointDistribution {
    type Error = CombError;

    fn try_from(r: DistributionRepr) -> Result<Self> {
        let radix: Vec<usize> = r.alphabets.iter().map(Vec::len).collect();
        let n: usize = radix.iter().product();
        let mut probs = vec![0.0; n];
        let mut seen = vec![false; n];
        for entry in &r.probs {
            if entry.outcome.len() != r.alphabets.len() {
                return Err(CombError::InvalidDistribution(format!(
                    "outcome {:?} has {} entries, expected {}",
                    entry.outcome,
                    entry.outcome.len(),
                    r.alphabets.len()
                )));
            }
            let mut idx = 0;
            for (label, alphabet) in entry.outcome.iter().zip(&r.alphabets) {
                let k = alphabet.iter().position(|a| a == label).ok_or_else(|| {
                    CombError::InvalidDistribution(format!("unknown outcome label `{label}`"))
                })?;
                idx = idx * alphabet.len() + k;
            }
            if std::mem::replace(&mut seen[idx], true) {
                return Err(CombError::InvalidDistribution(format!(
                    "outcome {:?} listed twice",
                    entry.outcome
                )));
            }
            probs[idx] = entry.p;
        }
        JointDistribution::new(r.times, r.alphabets, probs)
    }
}

impl From<JointDistribution> for DistributionRepr {
    fn from(d: JointDistribution) -> Self {
        let probs = d
            .outcomes()
            .map(|o| ProbEntry {
                outcome: d.labels_of(&o),
                p: d.prob(&o),
            })
            .collect();
        DistributionRepr {
            times: d.times,
            alphabets: d.alphabets,
            probs,
        }
    }
}

fn decode(mut idx: usize, radix: &[usize], out: &mut [usize]) {
    for k in (0..radix.len()).rev() {
        out[k] = idx % radix[k];
        idx /= radix[k];
    }
}

fn encode(digits: &[usize], radix: &[usize]) -> usize {
    digits.iter().zip(radix).fold(0, |acc, (d, r)| acc * r + d)
}

impl JointDistribution {
    pub fn new(times: TimeSet, alphabets: Vec<Vec<String>>, probs: Vec<f64>) -> Result<Self> {
        if alphabets.len() != times.len() {
            return Err(CombError::InvalidDistribution(format!(
                "{} alphabets for {} times",
                alphabets.len(),
                times.len()
            )));
        }
        for (a, t) in alphabets.iter().zip(times.iter()) {
            if a.is_empty() {
                return Err(CombError::InvalidDistribution(format!(
                    "empty alphabet at {t}"
                )));
            }
            let mut sorted: Vec<&String> = a.iter().collect();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(CombError::InvalidDistribution(format!(
                    "duplicate outcome label at {t}"
                )));
            }
        }
        let n: usize = alphabets.iter().map(Vec::len).product();
        if probs.len() != n {
            return Err(CombError::InvalidDistribution(format!(
                "{} probabilities for {n} outcome tuples",
                probs.len()
            )));
        }
        if let Some(p) = probs
            .iter()
            .find(|p| !p.is_finite() || **p < -NEGATIVE_PROB_TOL)
        {
            return Err(CombError::InvalidDistribution(format!(
                "invalid probability {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(CombError::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(JointDistribution {
            times,
            alphabets,
            probs,
        })
    }

    /// Builds a distribution by evaluating `f` on every outcome tuple.
    pub fn from_fn(
        times: TimeSet,
        alphabets: Vec<Vec<String>>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        let radix: Vec<usize> = alphabets.iter().map(Vec::len).collect();
        let n: usize = radix.iter().product();
        let mut digits = vec![0; radix.len()];
        let probs = (0..n)
            .map(|i| {
                decode(i, &radix, &mut digits);
                f(&digits)
            })
            .collect();
        Self::new(times, alphabets, probs)
    }

    pub fn times(&self) -> &TimeSet {
        &self.times
    }

    pub fn alphabets(&self) -> &[Vec<String>] {
        &self.alphabets
    }

    pub fn alphabet(&self, t: &TimeLabel) -> Option<&[String]> {
        self.times.position(t).map(|i| self.alphabets[i].as_slice())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn radix(&self) -> Vec<usize> {
        self.alphabets.iter().map(Vec::len).collect()
    }

    /// Probability of an outcome tuple given as alphabet indices.
    pub fn prob(&self, outcome: &[usize]) -> f64 {
        self.probs[encode(outcome, &self.radix())]
    }

    /// Probability of an outcome tuple given as labels; `None` for unknown labels.
    pub fn prob_of(&self, labels: &[&str]) -> Option<f64> {
        if labels.len() != self.alphabets.len() {
            return None;
        }
        let idx: Option<Vec<usize>> = labels
            .iter()
            .zip(&self.alphabets)
            .map(|(l, a)| a.iter().position(|x| x == l))
            .collect();
        idx.map(|i| self.prob(&i))
    }

    pub fn labels_of(&self, outcome: &[usize]) -> Vec<String> {
        outcome
            .iter()
            .zip(&self.alphabets)
            .map(|(&k, a)| a[k].clone())
            .collect()
    }

    /// All outcome tuples in storage order.
    pub fn outcomes(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let radix = self.radix();
        (0..self.probs.len()).map(move |i| {
            let mut d = vec![0; radix.len()];
            decode(i, &radix, &mut d);
            d
        })
    }

    /// Sums out every time not in `subset`.
    pub fn marginalize(&self, subset: &TimeSet) -> Result<JointDistribution> {
        if !subset.is_subset_of(&self.times) {
            return Err(CombError::NotContained {
                sub: subset.to_string(),
                sup: self.times.to_string(),
            });
        }
        let keep: Vec<usize> = subset
            .iter()
            .map(|t| self.times.position(t).expect("subset checked"))
            .collect();
        let alphabets: Vec<Vec<String>> = keep.iter().map(|&i| self.alphabets[i].clone()).collect();
        let kept_radix: Vec<usize> = alphabets.iter().map(Vec::len).collect();
        let mut probs = vec![0.0; kept_radix.iter().product()];
        let radix = self.radix();
        let mut digits = vec![0; radix.len()];
        let mut kept = vec![0; keep.len()];
        for (i, &p) in self.probs.iter().enumerate() {
            decode(i, &radix, &mut digits);
            for (k, &j) in keep.iter().enumerate() {
                kept[k] = digits[j];
            }
            probs[encode(&kept, &kept_radix)] += p;
        }
        JointDistribution::new(subset.clone(), alphabets, probs)
    }

    /// Largest absolute difference between matching outcome probabilities,
    /// with the outcome tuple where it occurs.
    fn max_deviation(&self, other: &JointDistribution) -> (f64, Option<Witness>) {
        let devs: Vec<f64> = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .collect();
        let max = devs.iter().copied().fold(0.0, f64::max);
        // ties within rounding go to the earliest outcome
        let Some(i) = devs.iter().position(|&d| d >= max - 1e-14) else {
            return (max, None);
        };
        let mut d = vec![0; self.alphabets.len()];
        decode(i, &self.radix(), &mut d);
        let witness = Witness {
            outcome: self.labels_of(&d),
            sub_value: self.probs[i],
            marginal_value: other.probs[i],
        };
        (max, Some(witness))
    }
}

/// The outcome tuple at which a pair deviates most.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub outcome: Vec<String>,
    /// Value assigned by the smaller member.
    pub sub_value: f64,
    /// Value obtained from the larger member.
    pub marginal_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDeviation {
    pub sub: TimeSet,
    #[serde(rename = "super")]
    pub sup: TimeSet,
    pub deviation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

/// Result of a pairwise family check, sorted by `(sub, super)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub pairs: Vec<PairDeviation>,
    pub pass: bool,
    pub tol: f64,
}

impl ConsistencyReport {
    fn from_pairs(mut pairs: Vec<PairDeviation>, tol: f64) -> Self {
        pairs.sort_by(|a, b| (&a.sub, &a.sup).cmp(&(&b.sub, &b.sup)));
        let pass = pairs.iter().all(|p| p.deviation <= tol);
        ConsistencyReport { pairs, pass, tol }
    }

    pub fn max_deviation(&self) -> f64 {
        self.pairs.iter().map(|p| p.deviation).fold(0.0, f64::max)
    }

    pub fn pair(&self, sub: &TimeSet, sup: &TimeSet) -> Option<&PairDeviation> {
        self.pairs.iter().find(|p| &p.sub == sub && &p.sup == sup)
    }

    /// Pairs whose deviation exceeds the tolerance.
    pub fn failures(&self) -> impl Iterator<Item = &PairDeviation> {
        self.pairs.iter().filter(move |p| p.deviation > self.tol)
    }

    pub fn to_table(&self) -> String {
        let mut t = Table::new(["sub", "super", "deviation", "status", "witness"]);
        for p in &self.pairs {
            let witness = p
                .witness
                .as_ref()
                .filter(|_| p.deviation > self.tol)
                .map(|w| {
                    format!(
                        "({}): {} vs {}",
                        w.outcome.join(","),
                        fmt_g17(w.sub_value),
                        fmt_g17(w.marginal_value)
                    )
                })
                .unwrap_or_default();
            t.push([
                p.sub.to_string(),
                p.sup.to_string(),
                fmt_g17(p.deviation),
                if p.deviation <= self.tol {
                    "ok"
                } else {
                    "FAIL"
                }
                .to_string(),
                witness,
            ]);
        }
        let mut out = t.render();
        out.push_str(&format!(
            "{} pairs, max deviation {}, tol {}: {}\n",
            self.pairs.len(),
            fmt_g17(self.max_deviation()),
            fmt_g17(self.tol),
            if self.pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Members keyed by their time sets, all within a common ground set.
#[derive(Clone, Debug, PartialEq)]
pub struct Family<T> {
    ground: TimeSet,
    members: BTreeMap<TimeSet, T>,
}

pub type DistributionFamily = Family<JointDistribution>;
pub type CombFamily = Family<Comb>;

impl<T> Family<T> {
    pub fn ground(&self) -> &TimeSet {
        &self.ground
    }

    pub fn members(&self) -> &BTreeMap<TimeSet, T> {
        &self.members
    }

    pub fn get(&self, times: &TimeSet) -> Option<&T> {
        self.members.get(times)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Every `(sub, super)` pair of members with `sub ⊊ super`.
    pub fn nested_pairs(&self) -> Vec<(&TimeSet, &TimeSet)> {
        let mut out = Vec::new();
        for sub in self.members.keys() {
            for sup in self.members.keys() {
                if sub != sup && sub.is_subset_of(sup) {
                    out.push((sub, sup));
                }
            }
        }
        out
    }

    fn check_ground<'a>(ground: &TimeSet, keys: impl Iterator<Item = &'a TimeSet>) -> Result<()> {
        for k in keys {
            if !k.is_subset_of(ground) {
                return Err(CombError::InvalidFamily(format!(
                    "member {k} is not within ground set {ground}"
                )));
            }
        }
        Ok(())
    }
}

impl DistributionFamily {
    /// Members must lie within `ground` and agree on alphabets at shared times.
    pub fn new(ground: TimeSet, members: Vec<JointDistribution>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut alphabets: BTreeMap<TimeLabel, Vec<String>> = BTreeMap::new();
        for d in members {
            for (t, a) in d.times.iter().zip(&d.alphabets) {
                match alphabets.get(t) {
                    Some(prev) if prev != a => {
                        return Err(CombError::InvalidFamily(format!(
                            "alphabets disagree at {t}: {prev:?} vs {a:?}"
                        )))
                    }
                    _ => {
                        alphabets.insert(t.clone(), a.clone());
                    }
                }
            }
            let key = d.times.clone();
            if map.insert(key.clone(), d).is_some() {
                return Err(CombError::InvalidFamily(format!(
                    "member {key} listed twice"
                )));
            }
        }
        Self::check_ground(&ground, map.keys())?;
        Ok(Family {
            ground,
            members: map,
        })
    }

    /// The marginals of `joint` on each of `subsets`.
    pub fn marginals_of(joint: &JointDistribution, subsets: &[TimeSet]) -> Result<Self> {
        let members = subsets
            .iter()
            .map(|s| joint.marginalize(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(joint.times.clone(), members)
    }
}

impl CombFamily {
    /// Members must lie within `ground`, agree on slot dimensions at shared
    /// times, and be causally ordered within [`DEFAULT_TOL`].
    pub fn new(ground: TimeSet, members: Vec<Comb>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut dims: BTreeMap<TimeLabel, SlotDims> = BTreeMap::new();
        for c in members {
            for (t, s) in c.times().iter().zip(c.slots()) {
                match dims.get(t) {
                    Some(prev) if prev != s => {
                        return Err(CombError::DimensionMismatch(format!(
                            "slot dimensions disagree at {t}: {}->{} vs {}->{}",
                            prev.dim_in, prev.dim_out, s.dim_in, s.dim_out
                        )))
                    }
                    _ => {
                        dims.insert(t.clone(), *s);
                    }
                }
            }
            let report = check_causal_order(&c, DEFAULT_TOL);
            if !report.causal {
                return Err(CombError::InvalidFamily(format!(
                    "member {} violates causal ordering at {}",
                    c.times(),
                    report
                        .first_violation
                        .map(|t| t.to_string())
                        .unwrap_or_default()
                )));
            }
            let key = c.times().clone();
            if map.insert(key.clone(), c).is_some() {
                return Err(CombError::InvalidFamily(format!(
                    "member {key} listed twice"
                )));
            }
        }
        Self::check_ground(&ground, map.keys())?;
        Ok(Family {
            ground,
            members: map,
        })
    }

    /// The restrictions of `comb` to each of `subsets`.
    pub fn restrictions_of(comb: &Comb, subsets: &[TimeSet]) -> Result<Self> {
        let members = subsets
            .iter()
            .map(|s| comb.restrict(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comb.times().clone(), members)
    }

    /// The restrictions of `comb` to every nonempty subset of its times.
    pub fn all_restrictions(comb: &Comb) -> Result<Self> {
        Self::restrictions_of(comb, &comb.times().nonempty_subsets())
    }
}

/// Wire form `{ground_times, members: [{times, payload}]}`.
#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct FamilyFile<T> {
    pub ground_times: TimeSet,
    pub members: Vec<MemberFile<T>>,
}

#[derive(Serialize, Deserialize)]
pub struct MemberFile<T> {
    pub times: TimeSet,
    pub payload: T,
}

macro_rules! family_serde {
    ($ty:ty, $member:ty, $times:expr) => {
        impl Serialize for Family<$member> {
            fn serialize<S: serde::Serializer>(
                &self,
                s: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                FamilyFile {
                    ground_times: self.ground.clone(),
                    members: self
                        .members
                        .iter()
                        .map(|(t, m)| MemberFile {
                            times: t.clone(),
                            payload: m,
                        })
                        .collect(),
                }
                .serialize(s)
            }
        }

        impl<'de> Deserialize<'de> for Family<$member> {
            fn deserialize<D: serde::Deserializer<'de>>(
                d: D,
            ) -> std::result::Result<Self, D::Error> {
                use serde::de::Error;
                let file = FamilyFile::<$member>::deserialize(d)?;
                let mut members = Vec::with_capacity(file.members.len());
                for m in file.members {
                    let times: &TimeSet = $times(&m.payload);
                    if times != &m.times {
                        return Err(D::Error::custom(format!(
                            "member times {} do not match payload times {}",
                            m.times, times
                        )));
                    }
                    members.push(m.payload);
                }
                <$ty>::new(file.ground_times, members).map_err(D::Error::custom)
            }
        }
    };
}

family_serde!(
    DistributionFamily,
    JointDistribution,
    JointDistribution::times
);
family_serde!(CombFamily, Comb, Comb::times);

fn member_report<T>(
    family: &Family<T>,
    tol: f64,
    mut compare: impl FnMut(&TimeSet, &T, &TimeSet, &T) -> Result<(f64, Option<Witness>)>,
) -> Result<ConsistencyReport> {
    let mut pairs = Vec::new();
    for (sub, sup) in family.nested_pairs() {
        let (deviation, witness) = compare(sub, &family.members[sub], sup, &family.members[sup])?;
        pairs.push(PairDeviation {
            sub: sub.clone(),
            sup: sup.clone(),
            deviation,
            witness,
        });
    }
    Ok(ConsistencyReport::from_pairs(pairs, tol))
}

/// Marginal consistency of a distribution family: for every nested pair,
/// the largest gap between the smaller member and the marginal of the larger.
pub fn check_ket(family: &DistributionFamily, tol: f64) -> ConsistencyReport {
    member_report(family, tol, |sub, small, _, large| {
        let marginal = large.marginalize(sub)?;
        Ok(small.max_deviation(&marginal))
    })
    .expect("family members are nested")
}

/// Restriction consistency of a comb family: for every nested pair, the
/// entrywise max distance between the smaller comb and the restriction of
/// the larger one.
pub fn check_get(family: &CombFamily, tol: f64) -> Result<ConsistencyReport> {
    member_report(family, tol, |sub, small, _, large| {
        let restricted = large.restrict(sub)?;
        Ok((small.choi().max_abs_diff(restricted.choi()), None))
    })
}

/// Checks that `candidate` on the ground set restricts to every member.
pub fn verify_extension(
    candidate: &Comb,
    family: &CombFamily,
    tol: f64,
) -> Result<ConsistencyReport> {
    if candidate.times() != family.ground() {
        return Err(CombError::InvalidFamily(format!(
            "candidate lives on {}, family ground set is {}",
            candidate.times(),
            family.ground()
        )));
    }
    let mut pairs = Vec::new();
    for (times, member) in &family.members {
        let restricted = candidate.restrict(times)?;
        if restricted.slots() != member.slots() {
            return Err(CombError::DimensionMismatch(format!(
                "candidate and member {times} disagree on slot dimensions"
            )));
        }
        pairs.push(PairDeviation {
            sub: times.clone(),
            sup: candidate.times().clone(),
            deviation: member.choi().max_abs_diff(restricted.choi()),
            witness: None,
        });
    }
    Ok(ConsistencyReport::from_pairs(pairs, tol))
}

/// The diagonal comb `Σ P(i_k…i_1) 1_out,k ⊗ |i_k⟩⟨i_k| ⊗ … ⊗ 1_out,1 ⊗ |i_1⟩⟨i_1|`
/// whose slot at each time has the alphabet size as input and output dimension.
pub fn classical_embed(d: &JointDistribution) -> Result<Comb> {
    let radix = d.radix();
    let slots: Vec<SlotDims> = radix.iter().map(|&a| SlotDims::square(a)).collect();
    // leg dims, latest time first: (out_k, in_k, …, out_1, in_1)
    let leg_dims: Vec<usize> = radix.iter().rev().flat_map(|&a| [a, a]).collect();
    let n: usize = leg_dims.iter().product();
    if n.checked_mul(n)
        .is_none_or(|e| e > crate::tensor::dim_cap())
    {
        return Err(CombError::Size {
            entries: n.saturating_mul(n),
            cap: crate::tensor::dim_cap(),
        });
    }
    let k = radix.len();
    let mut diag = vec![C64::new(0.0, 0.0); n];
    let mut digits = vec![0; leg_dims.len()];
    let mut outcome = vec![0; k];
    for (idx, z) in diag.iter_mut().enumerate() {
        decode(idx, &leg_dims, &mut digits);
        for j in 0..k {
            // in-leg of time j sits at position 2(k-1-j)+1
            outcome[j] = digits[2 * (k - 1 - j) + 1];
        }
        *z = C64::new(d.prob(&outcome), 0.0);
    }
    Comb::new(d.times.clone(), slots, ComplexMatrix::diag(&diag))
}

/// Embeds every member of a distribution family.
pub fn classical_embed_family(f: &DistributionFamily) -> Result<CombFamily> {
    let members = f
        .members
        .values()
        .map(classical_embed)
        .collect::<Result<Vec<_>>>()?;
    CombFamily::new(f.ground.clone(), members)
}

/// Per-time reference bases.
pub type Bases = BTreeMap<TimeLabel, Basis>;

/// The same basis at every time of `times`.
pub fn uniform_bases(basis: &Basis, times: &TimeSet) -> Bases {
    times.iter().map(|t| (t.clone(), basis.clone())).collect()
}

fn projectors_for(comb: &Comb, bases: &Bases) -> Result<Vec<(Vec<String>, Vec<ChoiChannel>)>> {
    comb.times()
        .iter()
        .zip(comb.slots())
        .map(|(t, s)| {
            let basis = bases.get(t).ok_or_else(|| {
                CombError::InvalidBasis(format!("no reference basis given for {t}"))
            })?;
            if basis.dim() != s.dim_in || basis.dim() != s.dim_out {
                return Err(CombError::InvalidBasis(format!(
                    "basis at {t} has dimension {}, slot is {}->{}",
                    basis.dim(),
                    s.dim_in,
                    s.dim_out
                )));
            }
            let inst = projective_instrument(basis)?;
            Ok((
                basis.labels().to_vec(),
                inst.outcomes().iter().map(|o| o.channel.clone()).collect(),
            ))
        })
        .collect()
}

/// Outcome statistics of `comb` under projective measurements in `bases`.
pub fn measured_distribution(comb: &Comb, bases: &Bases) -> Result<JointDistribution> {
    let per_slot = projectors_for(comb, bases)?;
    let alphabets: Vec<Vec<String>> = per_slot.iter().map(|(l, _)| l.clone()).collect();
    let mut err = None;
    let mut maps: Vec<ChoiChannel> = per_slot.iter().map(|(_, c)| c[0].clone()).collect();
    let dist = JointDistribution::from_fn(comb.times().clone(), alphabets, |outcome| {
        for (j, &i) in outcome.iter().enumerate() {
            maps[j] = per_slot[j].1[i].clone();
        }
        match comb.contract(&maps) {
            Ok(p) => p,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    dist
}

/// Reads every comb in the family out with projective measurements in the
/// fixed bases, giving a distribution family.
pub fn idle_reduction(family: &CombFamily, bases: &Bases) -> Result<DistributionFamily> {
    let members = family
        .members
        .values()
        .map(|c| measured_distribution(c, bases))
        .collect::<Result<Vec<_>>>()?;
    DistributionFamily::new(family.ground.clone(), members)
}

/// Classicality with respect to fixed bases: fixed-basis statistics of the
/// smaller member must equal the summed statistics of every larger member,
/// per outcome tuple, within `tol` (absolute).
pub fn is_classical(family: &CombFamily, bases: &Bases, tol: f64) -> Result<ConsistencyReport> {
    Ok(check_ket(&idle_reduction(family, bases)?, tol))
}
