//! Multi-time process combs in Choi form.
//!
//! A comb on times `t_1 < … < t_k` is a matrix `Υ` on
//! `⊗_j (H_out,j ⊗ H_in,j)`, where `H_in,j` carries the system into the
//! intervention at `t_j` and `H_out,j` carries it back out. Legs are stored
//! latest time first:
//!
//! ```text
//! out@t_k, in@t_k, out@t_{k-1}, in@t_{k-1}, …, out@t_1, in@t_1
//! ```
//!
//! so that the probability of a map sequence is
//! `tr[(M_kᵀ ⊗ … ⊗ M_1ᵀ) Υ]`. Serialized files list times ascending; the
//! stored Choi keeps the descending layout and records it in `leg_order`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channels::{identity_channel, ChoiChannel};
use crate::error::{CombError, Result};
use crate::tensor::{
    check_density_matrix, contract_trailing, is_psd, is_unitary, kron, kron_all, max_entangled,
    partial_trace, permute_legs, ComplexMatrix, LegStructure, C64, DEFAULT_TOL,
};
use crate::time::{TimeLabel, TimeSet};

/// Imaginary residue allowed in a contraction before it is reported.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDims {
    /// Dimension of the system handed to the intervention.
    pub dim_in: usize,
    /// Dimension of the system returned by the intervention.
    pub dim_out: usize,
}

impl SlotDims {
    pub fn square(d: usize) -> Self {
        SlotDims {
            dim_in: d,
            dim_out: d,
        }
    }

    fn size(&self) -> usize {
        self.dim_in * self.dim_out
    }
}

fn out_label(t: &TimeLabel) -> String {
    format!("out@{t}")
}

fn in_label(t: &TimeLabel) -> String {
    format!("in@{t}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CombRepr", into = "CombRepr")]
pub struct Comb {
    times: TimeSet,
    slots: Vec<SlotDims>,
    choi: ComplexMatrix,
    idle: BTreeMap<TimeLabel, ChoiChannel>,
}

#[derive(Serialize, Deserialize)]
struct SlotRepr {
    time: TimeLabel,
    dim_in: usize,
    dim_out: usize,
}

#[derive(Serialize, Deserialize)]
struct IdleRepr {
    time: TimeLabel,
    channel: ChoiChannel,
}

#[derive(Serialize, Deserialize)]
struct CombRepr {
    times: TimeSet,
    slots: Vec<SlotRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leg_order: Option<String>,
    choi: ComplexMatrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    idle: Vec<IdleRepr>,
}

impl TryFrom<CombRepr> for Comb {
    type Error = CombError;

    fn try_from(r: CombRepr) -> Result<Self> {
        if r.slots.len() != r.times.len()
            || r.slots
                .iter()
                .zip(r.times.iter())
                .any(|(s, t)| &s.time != t)
        {
            return Err(CombError::InvalidTimeSet(
                "slots must list the comb's times in ascending order".into(),
            ));
        }
        let slots = r
            .slots
            .iter()
            .map(|s| SlotDims {
                dim_in: s.dim_in,
                dim_out: s.dim_out,
            })
            .collect();
        let mut comb = Comb::new(r.times, slots, r.choi)?;
        if let Some(order) = r.leg_order {
            if order != comb.leg_order() {
                return Err(CombError::Shape(format!(
                    "leg_order `{order}` does not match the expected `{}`",
                    comb.leg_order()
                )));
            }
        }
        for i in r.idle {
            comb = comb.with_idle(i.time, i.channel)?;
        }
        Ok(comb)
    }
}

impl From<Comb> for CombRepr {
    fn from(c: Comb) -> Self {
        let leg_order = Some(c.leg_order());
        CombRepr {
            slots: c
                .times
                .iter()
                .zip(&c.slots)
                .map(|(t, s)| SlotRepr {
                    time: t.clone(),
                    dim_in: s.dim_in,
                    dim_out: s.dim_out,
                })
                .collect(),
            times: c.times,
            leg_order,
            choi: c.choi,
            idle: c
                .idle
                .into_iter()
                .map(|(time, channel)| IdleRepr { time, channel })
                .collect(),
        }
    }
}

impl Comb {
    /// Builds a comb, checking only that the Choi matrix fits the slot
    /// dimensions. Use [`Comb::validate`] or [`check_causal_order`] for the
    /// physical conditions.
    pub fn new(times: TimeSet, slots: Vec<SlotDims>, choi: ComplexMatrix) -> Result<Self> {
        if slots.len() != times.len() {
            return Err(CombError::DimensionMismatch(format!(
                "{} slot dimensions for {} times",
                slots.len(),
                times.len()
            )));
        }
        if slots.iter().any(|s| s.dim_in == 0 || s.dim_out == 0) {
            return Err(CombError::Shape("slot dimensions must be positive".into()));
        }
        let n: usize = slots.iter().map(SlotDims::size).product();
        if !choi.is_square() || choi.rows() != n {
            return Err(CombError::DimensionMismatch(format!(
                "comb Choi must be {n}x{n}, got {}x{}",
                choi.rows(),
                choi.cols()
            )));
        }
        Ok(Comb {
            times,
            slots,
            choi,
            idle: BTreeMap::new(),
        })
    }

    /// Registers the map that stands in for "do nothing" at `time`.
    /// Required before removing a slot whose input and output dimensions differ.
    pub fn with_idle(mut self, time: impl Into<TimeLabel>, channel: ChoiChannel) -> Result<Self> {
        let time = time.into();
        let idx = self.slot_index(&time)?;
        let s = self.slots[idx];
        if channel.dim_in() != s.dim_in || channel.dim_out() != s.dim_out {
            return Err(CombError::DimensionMismatch(format!(
                "idle map at {time} is {}->{}, slot is {}->{}",
                channel.dim_in(),
                channel.dim_out(),
                s.dim_in,
                s.dim_out
            )));
        }
        if !channel.is_trace_preserving(DEFAULT_TOL) || !channel.is_cp(DEFAULT_TOL) {
            return Err(CombError::InvalidChannel(format!(
                "idle map at {time} is not CPTP"
            )));
        }
        self.idle.insert(time, channel);
        Ok(self)
    }

    pub fn times(&self) -> &TimeSet {
        &self.times
    }

    pub fn slots(&self) -> &[SlotDims] {
        &self.slots
    }

    pub fn slot(&self, time: &TimeLabel) -> Result<SlotDims> {
        Ok(self.slots[self.slot_index(time)?])
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn idle_maps(&self) -> &BTreeMap<TimeLabel, ChoiChannel> {
        &self.idle
    }

    fn slot_index(&self, time: &TimeLabel) -> Result<usize> {
        self.times
            .position(time)
            .ok_or_else(|| CombError::NotContained {
                sub: format!("{{{time}}}"),
                sup: self.times.to_string(),
            })
    }

    /// Leg structure of the stored Choi matrix (latest time first).
    pub fn legs(&self) -> LegStructure {
        let legs = self
            .times
            .iter()
            .zip(&self.slots)
            .rev()
            .flat_map(|(t, s)| [(out_label(t), s.dim_out), (in_label(t), s.dim_in)]);
        LegStructure::new(legs).expect("time labels are distinct")
    }

    pub fn leg_order(&self) -> String {
        self.legs()
            .legs()
            .iter()
            .map(|l| l.label.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// The identity (or registered generalized identity) at slot `idx`.
    fn idle_at(&self, idx: usize) -> Result<ChoiChannel> {
        let t = &self.times.labels()[idx];
        if let Some(c) = self.idle.get(t) {
            return Ok(c.clone());
        }
        let s = self.slots[idx];
        if s.dim_in == s.dim_out {
            identity_channel(s.dim_in)
        } else {
            Err(CombError::MissingIdentity {
                time: t.to_string(),
                dim_in: s.dim_in,
                dim_out: s.dim_out,
            })
        }
    }

    fn check_maps(&self, maps: &[ChoiChannel]) -> Result<()> {
        if maps.len() != self.times.len() {
            return Err(CombError::DimensionMismatch(format!(
                "{} maps for a comb on {} times",
                maps.len(),
                self.times.len()
            )));
        }
        for ((m, s), t) in maps.iter().zip(&self.slots).zip(self.times.iter()) {
            if m.dim_in() != s.dim_in || m.dim_out() != s.dim_out {
                return Err(CombError::DimensionMismatch(format!(
                    "map `{}` at {t} is {}->{}, slot is {}->{}",
                    m.label(),
                    m.dim_in(),
                    m.dim_out(),
                    s.dim_in,
                    s.dim_out
                )));
            }
        }
        Ok(())
    }

    /// `tr[(M_kᵀ ⊗ … ⊗ M_1ᵀ) Υ]` without the realness check.
    pub fn contract_complex(&self, maps: &[ChoiChannel]) -> Result<C64> {
        self.check_maps(maps)?;
        let joint = kron_all(maps.iter().rev().map(ChoiChannel::choi))?;
        Ok(joint.bilinear_pairing(&self.choi))
    }

    /// Probability of the map sequence `maps` (one per time, ascending).
    pub fn contract(&self, maps: &[ChoiChannel]) -> Result<f64> {
        let z = self.contract_complex(maps)?;
        if z.im.abs() > IMAG_RESIDUE_TOL {
            return Err(CombError::NumericalIntegrity {
                residue: z.im.abs(),
                tol: IMAG_RESIDUE_TOL,
            });
        }
        Ok(z.re)
    }

    /// The comb on `subset` obtained by inserting the identity (or the
    /// registered generalized identity) at every removed time.
    pub fn restrict(&self, subset: &TimeSet) -> Result<Comb> {
        if !subset.is_subset_of(&self.times) {
            return Err(CombError::NotContained {
                sub: subset.to_string(),
                sup: self.times.to_string(),
            });
        }
        if subset == &self.times {
            return Ok(self.clone());
        }
        let legs = self.legs();
        let removed: Vec<usize> = (0..self.times.len())
            .rev()
            .filter(|&i| !subset.contains(&self.times.labels()[i]))
            .collect();
        let idle: Vec<ComplexMatrix> = removed
            .iter()
            .map(|&i| self.idle_at(i).map(|c| c.choi().transpose()))
            .collect::<Result<_>>()?;

        // kept legs first (descending), removed legs trailing (descending)
        let mut order: Vec<String> = Vec::new();
        for t in self.times.iter().rev() {
            if subset.contains(t) {
                order.push(out_label(t));
                order.push(in_label(t));
            }
        }
        for &i in &removed {
            let t = &self.times.labels()[i];
            order.push(out_label(t));
            order.push(in_label(t));
        }
        let order_refs: Vec<&str> = order.iter().map(String::as_str).collect();
        let (permuted, _) = permute_legs(&self.choi, &legs, &order_refs)?;
        let choi = contract_trailing(&permuted, &kron_all(&idle)?)?;

        let slots = subset
            .iter()
            .map(|t| self.slot(t))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Comb::new(subset.clone(), slots, choi)?;
        out.idle = self
            .idle
            .iter()
            .filter(|(t, _)| subset.contains(t))
            .map(|(t, c)| (t.clone(), c.clone()))
            .collect();
        Ok(out)
    }

    /// Extends maps given on a subset of the comb's times to all of them by
    /// inserting identities (or registered generalized identities).
    pub fn pad_with_identity(
        &self,
        maps: &BTreeMap<TimeLabel, ChoiChannel>,
    ) -> Result<Vec<ChoiChannel>> {
        for t in maps.keys() {
            self.slot_index(t)?;
        }
        (0..self.times.len())
            .map(|i| match maps.get(&self.times.labels()[i]) {
                Some(m) => Ok(m.clone()),
                None => self.idle_at(i),
            })
            .collect()
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        is_psd(&self.choi, tol).unwrap_or(false)
    }

    /// Positivity and causal ordering.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if !self.is_psd(tol) {
            return Err(CombError::Shape("comb Choi matrix is not positive".into()));
        }
        let report = check_causal_order(self, tol);
        if !report.causal {
            return Err(CombError::Shape(format!(
                "comb violates causal ordering at {}",
                report
                    .first_violation
                    .map(|t| t.to_string())
                    .unwrap_or_default()
            )));
        }
        Ok(())
    }
}

/// Per-slot outcome of the causal-order check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CausalLevel {
    pub time: TimeLabel,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CausalReport {
    pub causal: bool,
    pub tol: f64,
    /// Latest time first, matching the order in which levels are peeled off.
    pub levels: Vec<CausalLevel>,
    pub first_violation: Option<TimeLabel>,
}

/// Checks the recursive trace conditions of a causally ordered comb.
///
/// Peeling off slots from the latest: the returned system at `t_j` must be
/// discarded (`Υ^(j) = 1_out,j ⊗ Y_j`), and tracing the handed-over system
/// must leave the comb on earlier times (`tr_in,j Y_j = Υ^(j-1)`), ending in
/// a unit scalar. Equivalently, no choice of CPTP map at a later time can
/// change the statistics at earlier ones.
pub fn check_causal_order(comb: &Comb, tol: f64) -> CausalReport {
    let mut levels = Vec::new();
    let mut current = comb.choi.clone();
    let mut legs = comb.legs();
    for (t, s) in comb.times.iter().zip(&comb.slots).rev() {
        let out = out_label(t);
        let inn = in_label(t);
        let reduced = partial_trace(&current, &legs, &[&out])
            .expect("legs track the matrix")
            .scale_real(1.0 / s.dim_out as f64);
        let rebuilt = kron(&ComplexMatrix::identity(s.dim_out), &reduced).expect("same size");
        let mut deviation = current.max_abs_diff(&rebuilt);
        let reduced_legs =
            LegStructure::new(legs.legs().iter().skip(1).map(|l| (l.label.clone(), l.dim)))
                .expect("distinct labels");
        current = partial_trace(&reduced, &reduced_legs, &[&inn]).expect("legs track the matrix");
        legs = LegStructure::new(
            reduced_legs
                .legs()
                .iter()
                .skip(1)
                .map(|l| (l.label.clone(), l.dim)),
        )
        .expect("distinct labels");
        if legs.legs().is_empty() {
            deviation = deviation.max((current.trace() - C64::new(1.0, 0.0)).norm());
        }
        levels.push(CausalLevel {
            time: t.clone(),
            deviation,
        });
    }
    if comb.times.is_empty() {
        levels.clear();
    }
    let first_violation = levels
        .iter()
        .find(|l| l.deviation > tol)
        .map(|l| l.time.clone());
    CausalReport {
        causal: first_violation.is_none(),
        tol,
        levels,
        first_violation,
    }
}

/// A system-environment model: initial joint state and one propagator per
/// interval. `unitaries[j]` evolves the joint system from `t_{j-1}` to `t_j`
/// (from preparation to `t_1` for `j = 0`); the environment is discarded
/// after the last time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DilationRepr", into = "DilationRepr")]
pub struct Dilation {
    system_dim: usize,
    env_dim: usize,
    initial_state: ComplexMatrix,
    unitaries: Vec<ComplexMatrix>,
}

#[derive(Serialize, Deserialize)]
struct DilationRepr {
    system_dim: usize,
    env_dim: usize,
    initial_state: ComplexMatrix,
    unitaries: Vec<ComplexMatrix>,
}

impl TryFrom<DilationRepr> for Dilation {
    type Error = CombError;

    fn try_from(r: DilationRepr) -> Result<Self> {
        Dilation::new(r.system_dim, r.env_dim, r.initial_state, r.unitaries)
    }
}

impl From<Dilation> for DilationRepr {
    fn from(d: Dilation) -> Self {
        DilationRepr {
            system_dim: d.system_dim,
            env_dim: d.env_dim,
            initial_state: d.initial_state,
            unitaries: d.unitaries,
        }
    }
}

impl Dilation {
    pub fn new(
        system_dim: usize,
        env_dim: usize,
        initial_state: ComplexMatrix,
        unitaries: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        let n = system_dim * env_dim;
        if n == 0 {
            return Err(CombError::Shape(
                "dilation dimensions must be positive".into(),
            ));
        }
        if initial_state.rows() != n || initial_state.cols() != n {
            return Err(CombError::DimensionMismatch(format!(
                "initial state must be {n}x{n}, got {}x{}",
                initial_state.rows(),
                initial_state.cols()
            )));
        }
        check_density_matrix(&initial_state, DEFAULT_TOL)?;
        for (j, u) in unitaries.iter().enumerate() {
            if u.rows() != n || u.cols() != n {
                return Err(CombError::DimensionMismatch(format!(
                    "propagator {j} must be {n}x{n}, got {}x{}",
                    u.rows(),
                    u.cols()
                )));
            }
            if !is_unitary(u, DEFAULT_TOL) {
                return Err(CombError::InvalidChannel(format!(
                    "propagator {j} is not unitary"
                )));
            }
        }
        Ok(Dilation {
            system_dim,
            env_dim,
            initial_state,
            unitaries,
        })
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    pub fn initial_state(&self) -> &ComplexMatrix {
        &self.initial_state
    }

    pub fn unitaries(&self) -> &[ComplexMatrix] {
        &self.unitaries
    }
}

/// The comb generated by a system-environment dilation.
///
/// The open object is carried as an operator on `S ⊗ E ⊗ (slot legs)`. At
/// each time the propagator acts on `S ⊗ E`, the system leaves on a new
/// `in` leg, and a fresh system enters linked to a new `out` leg through `Φ+`.
pub fn from_dilation(d: &Dilation, times: &TimeSet) -> Result<Comb> {
    if d.unitaries.len() != times.len() {
        return Err(CombError::DimensionMismatch(format!(
            "{} propagators for {} times",
            d.unitaries.len(),
            times.len()
        )));
    }
    let ds = d.system_dim;
    let phi = max_entangled(ds)?;
    let mut open = d.initial_state.clone();
    let mut legs: Vec<(String, usize)> = vec![("S".into(), ds), ("E".into(), d.env_dim)];
    for (t, u) in times.iter().zip(&d.unitaries) {
        open = open.conjugate_leading(u);
        // Φ+ on (S', out@t) ⊗ open with S renamed to in@t
        open = kron(&phi, &open)?;
        let mut joined: Vec<(String, usize)> = vec![("S'".into(), ds), (out_label(t), ds)];
        joined.push((in_label(t), ds));
        joined.extend(legs.iter().skip(1).cloned());
        let structure = LegStructure::new(joined.clone())?;
        let mut order: Vec<String> = vec!["S'".into(), "E".into(), out_label(t), in_label(t)];
        order.extend(joined.iter().skip(4).map(|(l, _)| l.clone()));
        let order_refs: Vec<&str> = order.iter().map(String::as_str).collect();
        let (permuted, new_legs) = permute_legs(&open, &structure, &order_refs)?;
        open = permuted;
        legs = new_legs
            .legs()
            .iter()
            .map(|l| {
                let label = if l.label == "S'" {
                    "S".to_string()
                } else {
                    l.label.clone()
                };
                (label, l.dim)
            })
            .collect();
    }
    let structure = LegStructure::new(legs)?;
    let choi = partial_trace(&open, &structure, &["S", "E"])?;
    Comb::new(times.clone(), vec![SlotDims::square(ds); times.len()], choi)
}

/// The memoryless comb `1_out,k ⊗ C_{k-1} ⊗ … ⊗ C_1 ⊗ ρ_0` of an initial
/// state followed by a chain of CPTP links between consecutive times.
/// `times` must have one more element than `links`; the final slot returns a
/// system of the same dimension it receives.
pub fn from_markov_chain(
    initial: &ComplexMatrix,
    links: &[ChoiChannel],
    times: &TimeSet,
) -> Result<Comb> {
    if times.len() != links.len() + 1 {
        return Err(CombError::DimensionMismatch(format!(
            "{} links need {} times, got {}",
            links.len(),
            links.len() + 1,
            times.len()
        )));
    }
    check_density_matrix(initial, DEFAULT_TOL)?;
    let mut slots = Vec::with_capacity(times.len());
    let mut dim_in = initial.rows();
    for (j, link) in links.iter().enumerate() {
        if !link.is_trace_preserving(DEFAULT_TOL) || !link.is_cp(DEFAULT_TOL) {
            return Err(CombError::InvalidChannel(format!("link {j} is not CPTP")));
        }
        slots.push(SlotDims {
            dim_in,
            dim_out: link.dim_in(),
        });
        dim_in = link.dim_out();
    }
    slots.push(SlotDims::square(dim_in));
    let last_out = ComplexMatrix::identity(dim_in);
    let factors: Vec<&ComplexMatrix> = std::iter::once(&last_out)
        .chain(links.iter().rev().map(ChoiChannel::choi))
        .chain(std::iter::once(initial))
        .collect();
    let choi = kron_all(factors)?;
    Comb::new(times.clone(), slots, choi)
}
