//! CP maps and instruments in Choi form.
//!
//! A map `M: B(H_in) → B(H_out)` is stored as `C = Σ_ij M(|i⟩⟨j|) ⊗ |i⟩⟨j|`,
//! unnormalized, with the output leg first. A CPTP map therefore has
//! `tr C = dim_in` and `tr_out C = 1_in`.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{CombError, Result};
use crate::tensor::{
    check_density_matrix, is_psd, is_unitary, kron, max_entangled, partial_trace, ComplexMatrix,
    LegStructure, C64, DEFAULT_TOL,
};

fn out_in_legs(dim_out: usize, dim_in: usize) -> LegStructure {
    LegStructure::new([("out", dim_out), ("in", dim_in)]).expect("distinct labels")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelRepr", into = "ChannelRepr")]
pub struct ChoiChannel {
    dim_in: usize,
    dim_out: usize,
    choi: ComplexMatrix,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct ChannelRepr {
    dim_in: usize,
    dim_out: usize,
    label: String,
    choi: ComplexMatrix,
}

impl TryFrom<ChannelRepr> for ChoiChannel {
    type Error = CombError;

    fn try_from(r: ChannelRepr) -> Result<Self> {
        ChoiChannel::new(r.dim_in, r.dim_out, r.choi, r.label)
    }
}

impl From<ChoiChannel> for ChannelRepr {
    fn from(c: ChoiChannel) -> Self {
        ChannelRepr {
            dim_in: c.dim_in,
            dim_out: c.dim_out,
            label: c.label,
            choi: c.choi,
        }
    }
}

impl ChoiChannel {
    /// A validated CP, trace non-increasing map.
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        choi: ComplexMatrix,
        label: impl Into<String>,
    ) -> Result<Self> {
        let c = Self::from_raw(dim_in, dim_out, choi, label)?;
        c.validate(DEFAULT_TOL)?;
        Ok(c)
    }

    /// A linear map given by its Choi matrix with only the dimensions checked.
    /// Used for linear combinations and non-CP maps, which `contract` accepts.
    pub fn from_raw(
        dim_in: usize,
        dim_out: usize,
        choi: ComplexMatrix,
        label: impl Into<String>,
    ) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 {
            return Err(CombError::InvalidChannel(
                "dimensions must be positive".into(),
            ));
        }
        let n = dim_in * dim_out;
        if !choi.is_square() || choi.rows() != n {
            return Err(CombError::DimensionMismatch(format!(
                "Choi matrix of a {dim_in}->{dim_out} map must be {n}x{n}, got {}x{}",
                choi.rows(),
                choi.cols()
            )));
        }
        Ok(ChoiChannel {
            dim_in,
            dim_out,
            choi,
            label: label.into(),
        })
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `tr_out C`, an operator on the input space.
    pub fn output_trace(&self) -> ComplexMatrix {
        partial_trace(
            &self.choi,
            &out_in_legs(self.dim_out, self.dim_in),
            &["out"],
        )
        .expect("Choi dimensions validated on construction")
    }

    pub fn is_cp(&self, tol: f64) -> bool {
        is_psd(&self.choi, tol).unwrap_or(false)
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.output_trace()
            .max_abs_diff(&ComplexMatrix::identity(self.dim_in))
            <= tol
    }

    pub fn is_trace_non_increasing(&self, tol: f64) -> bool {
        let slack = &ComplexMatrix::identity(self.dim_in) - &self.output_trace();
        is_psd(&slack, tol).unwrap_or(false)
    }

    /// Complete positivity and trace non-increase.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if !self.is_cp(tol) {
            return Err(CombError::InvalidChannel(format!(
                "`{}` is not completely positive",
                self.label
            )));
        }
        if !self.is_trace_non_increasing(tol) {
            return Err(CombError::InvalidChannel(format!(
                "`{}` increases trace",
                self.label
            )));
        }
        Ok(())
    }

    /// `Σ_k w_k · c_k` over maps of equal shape. The result is unchecked.
    pub fn linear_combination(terms: &[(f64, &ChoiChannel)]) -> Result<ChoiChannel> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| CombError::InvalidChannel("empty linear combination".into()))?;
        let mut acc = ComplexMatrix::zeros(first.choi.rows(), first.choi.cols());
        for (w, c) in terms {
            if (c.dim_in, c.dim_out) != (first.dim_in, first.dim_out) {
                return Err(CombError::DimensionMismatch(
                    "linear combination of maps with different shapes".into(),
                ));
            }
            acc = &acc + &c.choi.scale_real(*w);
        }
        ChoiChannel::from_raw(first.dim_in, first.dim_out, acc, "combination")
    }
}

/// Choi matrix of a linear map given by its action: `Σ_ij f(|i⟩⟨j|) ⊗ |i⟩⟨j|`.
pub fn choi_from_map_action(
    dim_in: usize,
    dim_out: usize,
    action: impl Fn(&ComplexMatrix) -> ComplexMatrix,
) -> Result<ChoiChannel> {
    if dim_in == 0 || dim_out == 0 {
        return Err(CombError::InvalidChannel(
            "dimensions must be positive".into(),
        ));
    }
    let n = dim_in * dim_out;
    let mut choi = ComplexMatrix::zeros(n, n);
    for i in 0..dim_in {
        for j in 0..dim_in {
            let img = action(&ComplexMatrix::unit(dim_in, dim_in, i, j));
            if img.rows() != dim_out || img.cols() != dim_out {
                return Err(CombError::DimensionMismatch(format!(
                    "map action returned {}x{}, expected {dim_out}x{dim_out}",
                    img.rows(),
                    img.cols()
                )));
            }
            for o in 0..dim_out {
                for p in 0..dim_out {
                    choi[(o * dim_in + i, p * dim_in + j)] = img[(o, p)];
                }
            }
        }
    }
    ChoiChannel::from_raw(dim_in, dim_out, choi, "map")
}

/// `ρ ↦ tr_in[(1 ⊗ ρᵀ) C]`.
pub fn apply_channel(c: &ChoiChannel, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if rho.rows() != c.dim_in || rho.cols() != c.dim_in {
        return Err(CombError::DimensionMismatch(format!(
            "channel `{}` takes {}x{} inputs, got {}x{}",
            c.label,
            c.dim_in,
            c.dim_in,
            rho.rows(),
            rho.cols()
        )));
    }
    let (din, dout) = (c.dim_in, c.dim_out);
    let mut out = ComplexMatrix::zeros(dout, dout);
    for o in 0..dout {
        for p in 0..dout {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..din {
                for i in 0..din {
                    acc += rho[(j, i)] * c.choi[(o * din + j, p * din + i)];
                }
            }
            out[(o, p)] = acc;
        }
    }
    Ok(out)
}

/// `Φ2 ∘ Φ1`.
pub fn compose(second: &ChoiChannel, first: &ChoiChannel) -> Result<ChoiChannel> {
    if first.dim_out != second.dim_in {
        return Err(CombError::DimensionMismatch(format!(
            "cannot compose {}->{} after {}->{}",
            second.dim_in, second.dim_out, first.dim_in, first.dim_out
        )));
    }
    let c = choi_from_map_action(first.dim_in, second.dim_out, |x| {
        let mid = apply_channel(first, x).expect("dimension checked");
        apply_channel(second, &mid).expect("dimension checked")
    })?;
    Ok(c.with_label(format!("{}∘{}", second.label, first.label)))
}

pub fn identity_channel(d: usize) -> Result<ChoiChannel> {
    ChoiChannel::from_raw(d, d, max_entangled(d)?, "identity")
}

/// `ρ ↦ U ρ U†`.
pub fn unitary_channel(u: &ComplexMatrix) -> Result<ChoiChannel> {
    if !is_unitary(u, DEFAULT_TOL) {
        return Err(CombError::InvalidChannel("operator is not unitary".into()));
    }
    kraus_channel(std::slice::from_ref(u)).map(|c| c.with_label("unitary"))
}

/// `ρ ↦ Σ_k K_k ρ K_k†`.
pub fn kraus_channel(kraus: &[ComplexMatrix]) -> Result<ChoiChannel> {
    let first = kraus
        .first()
        .ok_or_else(|| CombError::InvalidChannel("no Kraus operators".into()))?;
    let (dout, din) = (first.rows(), first.cols());
    if kraus.iter().any(|k| k.rows() != dout || k.cols() != din) {
        return Err(CombError::DimensionMismatch(
            "Kraus operators differ in shape".into(),
        ));
    }
    let mut choi = ComplexMatrix::zeros(dout * din, dout * din);
    for k in kraus {
        // vec(K) = Σ_i K|i⟩ ⊗ |i⟩
        let v: Vec<C64> = (0..dout * din)
            .map(|idx| k[(idx / din, idx % din)])
            .collect();
        choi = &choi + &ComplexMatrix::projector(&v);
    }
    ChoiChannel::from_raw(din, dout, choi, "kraus")
}

/// Discards the input and prepares `sigma`: Choi `σ ⊗ 1_in`.
pub fn replacement_channel(sigma: &ComplexMatrix, dim_in: usize) -> Result<ChoiChannel> {
    check_density_matrix(sigma, DEFAULT_TOL)?;
    let choi = kron(sigma, &ComplexMatrix::identity(dim_in))?;
    ChoiChannel::from_raw(dim_in, sigma.rows(), choi, "replace")
}

/// `ρ ↦ (1-p) ρ + p tr(ρ) 1/d`.
pub fn depolarizing_channel(d: usize, p: f64) -> Result<ChoiChannel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CombError::InvalidChannel(format!(
            "depolarizing strength {p} outside [0,1]"
        )));
    }
    let id = identity_channel(d)?;
    let mixed = ComplexMatrix::identity(d).scale_real(1.0 / d as f64);
    let full = replacement_channel(&mixed, d)?;
    let c = ChoiChannel::linear_combination(&[(1.0 - p, &id), (p, &full)])?;
    Ok(c.with_label("depolarizing"))
}

/// `ρ ↦ (1-γ) ρ + γ Σ_i P_i ρ P_i` in the given basis.
pub fn dephasing_channel(basis: &Basis, gamma: f64) -> Result<ChoiChannel> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(CombError::InvalidChannel(format!(
            "dephasing strength {gamma} outside [0,1]"
        )));
    }
    let d = basis.dim();
    let id = identity_channel(d)?;
    let full = projective_instrument(basis)?.total_channel();
    let c = ChoiChannel::linear_combination(&[(1.0 - gamma, &id), (gamma, &full)])?;
    Ok(c.with_label("dephasing"))
}

/// Which tensor factor of the joint space `H_in ⊗ H_ancilla` is discarded by
/// [`generalized_identity`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TracedFactor {
    /// Nothing is traced; the output is `ρ ⊗ η`.
    None,
    /// The leading factor of the given dimension is traced.
    Leading(usize),
    /// The trailing factor of the given dimension is traced.
    Trailing(usize),
}

/// `ρ ↦ tr_B(ρ ⊗ η)` for a fixed ancilla `η`.
pub fn generalized_identity(
    dim_in: usize,
    dim_out: usize,
    ancilla: &ComplexMatrix,
    traced: TracedFactor,
) -> Result<ChoiChannel> {
    check_density_matrix(ancilla, DEFAULT_TOL)?;
    let joint = dim_in * ancilla.rows();
    let traced_dim = match traced {
        TracedFactor::None => 1,
        TracedFactor::Leading(k) | TracedFactor::Trailing(k) => k,
    };
    if traced_dim == 0 || !joint.is_multiple_of(traced_dim) || joint / traced_dim != dim_out {
        return Err(CombError::InconsistentFactorization(format!(
            "{dim_in} x {} does not factor as {dim_out} x {traced_dim}",
            ancilla.rows()
        )));
    }
    let structure = match traced {
        TracedFactor::None | TracedFactor::Leading(_) => {
            LegStructure::new([("b", traced_dim), ("keep", dim_out)])?
        }
        TracedFactor::Trailing(_) => LegStructure::new([("keep", dim_out), ("b", traced_dim)])?,
    };
    let c = choi_from_map_action(dim_in, dim_out, |x| {
        let full = kron(x, ancilla).expect("within cap");
        partial_trace(&full, &structure, &["b"]).expect("structure matches")
    })?;
    Ok(c.with_label("generalized-identity"))
}

/// An orthonormal basis with outcome labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr", into = "BasisRepr")]
pub struct Basis {
    vectors: Vec<Vec<C64>>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct BasisRepr {
    labels: Vec<String>,
    vectors: Vec<Vec<[f64; 2]>>,
}

impl TryFrom<BasisRepr> for Basis {
    type Error = CombError;

    fn try_from(r: BasisRepr) -> Result<Self> {
        let vectors = r
            .vectors
            .into_iter()
            .map(|v| v.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        Basis::new(vectors, r.labels)
    }
}

impl From<Basis> for BasisRepr {
    fn from(b: Basis) -> Self {
        BasisRepr {
            labels: b.labels,
            vectors: b
                .vectors
                .iter()
                .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

impl Basis {
    /// A complete orthonormal basis (within 1e-10) with one label per vector.
    pub fn new(vectors: Vec<Vec<C64>>, labels: Vec<String>) -> Result<Self> {
        let d = vectors.len();
        if d == 0 {
            return Err(CombError::InvalidBasis("empty basis".into()));
        }
        if labels.len() != d {
            return Err(CombError::InvalidBasis(format!(
                "{d} vectors but {} labels",
                labels.len()
            )));
        }
        if vectors.iter().any(|v| v.len() != d) {
            return Err(CombError::InvalidBasis(format!(
                "a basis of {d} vectors must live in dimension {d}"
            )));
        }
        for (a, u) in vectors.iter().enumerate() {
            for (b, v) in vectors.iter().enumerate() {
                let ip: C64 = u.iter().zip(v).map(|(x, y)| x.conj() * y).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                if (ip - C64::new(expected, 0.0)).norm() > DEFAULT_TOL {
                    return Err(CombError::InvalidBasis(format!(
                        "vectors {a} and {b} have inner product {ip}"
                    )));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(CombError::InvalidBasis(format!("duplicate label `{dup}`")));
        }
        Ok(Basis { vectors, labels })
    }

    /// `|0⟩, …, |d-1⟩` labelled `"0"`, …
    pub fn computational(d: usize) -> Self {
        let vectors = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                    .collect()
            })
            .collect();
        Basis {
            vectors,
            labels: (0..d).map(|i| i.to_string()).collect(),
        }
    }

    /// Spin-z basis `{|↑⟩, |↓⟩}` labelled `up`, `down`.
    pub fn z() -> Self {
        Basis::computational(2)
            .with_labels(["up", "down"])
            .expect("two labels")
    }

    /// Spin-x basis `{|→⟩, |←⟩} = {(|↑⟩+|↓⟩)/√2, (|↑⟩-|↓⟩)/√2}`.
    pub fn x() -> Self {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        Basis {
            vectors: vec![vec![h, h], vec![h, -h]],
            labels: vec!["right".into(), "left".into()],
        }
    }

    pub fn with_labels<S: Into<String>>(self, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        Basis::new(self.vectors, labels.into_iter().map(Into::into).collect())
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<C64>] {
        &self.vectors
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// The unitary whose columns are the basis vectors.
    pub fn change_of_basis(&self) -> ComplexMatrix {
        let d = self.dim();
        ComplexMatrix::from_fn(d, d, |r, c| self.vectors[c][r])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: String,
    pub channel: ChoiChannel,
}

/// Outcome-labelled CP maps summing to a CPTP map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstrumentRepr", into = "InstrumentRepr")]
pub struct Instrument {
    outcomes: Vec<Outcome>,
}

#[derive(Serialize, Deserialize)]
struct InstrumentRepr {
    outcomes: Vec<Outcome>,
}

impl TryFrom<InstrumentRepr> for Instrument {
    type Error = CombError;

    fn try_from(r: InstrumentRepr) -> Result<Self> {
        Instrument::new(r.outcomes)
    }
}

impl From<Instrument> for InstrumentRepr {
    fn from(i: Instrument) -> Self {
        InstrumentRepr {
            outcomes: i.outcomes,
        }
    }
}

impl Instrument {
    pub fn new(outcomes: Vec<Outcome>) -> Result<Self> {
        let first = outcomes
            .first()
            .ok_or_else(|| CombError::InvalidChannel("instrument has no outcomes".into()))?;
        let (din, dout) = (first.channel.dim_in, first.channel.dim_out);
        if outcomes
            .iter()
            .any(|o| o.channel.dim_in != din || o.channel.dim_out != dout)
        {
            return Err(CombError::DimensionMismatch(
                "instrument outcomes act on different spaces".into(),
            ));
        }
        for o in &outcomes {
            if !o.channel.is_cp(DEFAULT_TOL) {
                return Err(CombError::InvalidChannel(format!(
                    "outcome `{}` is not completely positive",
                    o.label
                )));
            }
        }
        let inst = Instrument { outcomes };
        if !inst.total_channel().is_trace_preserving(DEFAULT_TOL) {
            return Err(CombError::InvalidChannel(
                "instrument outcomes do not sum to a trace-preserving map".into(),
            ));
        }
        Ok(inst)
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn dim_in(&self) -> usize {
        self.outcomes[0].channel.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.outcomes[0].channel.dim_out
    }

    pub fn labels(&self) -> Vec<&str> {
        self.outcomes.iter().map(|o| o.label.as_str()).collect()
    }

    pub fn channel(&self, idx: usize) -> &ChoiChannel {
        &self.outcomes[idx].channel
    }

    /// The averaged map `Σ_i M_i`.
    pub fn total_channel(&self) -> ChoiChannel {
        let terms: Vec<(f64, &ChoiChannel)> =
            self.outcomes.iter().map(|o| (1.0, &o.channel)).collect();
        ChoiChannel::linear_combination(&terms)
            .expect("outcomes share dimensions")
            .with_label("total")
    }
}

/// `M_i[ρ] = ⟨i|ρ|i⟩ |i⟩⟨i|` for each basis vector.
pub fn projective_instrument(basis: &Basis) -> Result<Instrument> {
    let outcomes = basis
        .vectors
        .iter()
        .zip(&basis.labels)
        .map(|(v, label)| {
            let vbar: Vec<C64> = v.iter().map(|z| z.conj()).collect();
            let choi = kron(
                &ComplexMatrix::projector(v),
                &ComplexMatrix::projector(&vbar),
            )?;
            Ok(Outcome {
                label: label.clone(),
                channel: ChoiChannel::from_raw(basis.dim(), basis.dim(), choi, label.clone())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(outcomes)
}

/// `M_i[ρ] = ⟨i|ρ|i⟩ ρ_i`: measure in `basis`, then prepare `replacements[i]`.
pub fn replacement_instrument(basis: &Basis, replacements: &[ComplexMatrix]) -> Result<Instrument> {
    if replacements.len() != basis.dim() {
        return Err(CombError::DimensionMismatch(format!(
            "{} replacement states for a basis of size {}",
            replacements.len(),
            basis.dim()
        )));
    }
    let dout = replacements[0].rows();
    let outcomes = basis
        .vectors
        .iter()
        .zip(&basis.labels)
        .zip(replacements)
        .map(|((v, label), rho)| {
            check_density_matrix(rho, DEFAULT_TOL)?;
            if rho.rows() != dout {
                return Err(CombError::DimensionMismatch(
                    "replacement states differ in dimension".into(),
                ));
            }
            let vbar: Vec<C64> = v.iter().map(|z| z.conj()).collect();
            let choi = kron(rho, &ComplexMatrix::projector(&vbar))?;
            Ok(Outcome {
                label: label.clone(),
                channel: ChoiChannel::from_raw(basis.dim(), dout, choi, label.clone())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn plus_state() -> ComplexMatrix {
        ComplexMatrix::projector(&Basis::x().vectors()[0])
    }

    #[test]
    fn identity_action_gives_max_entangled() {
        let ch = choi_from_map_action(2, 2, |x| x.clone()).unwrap();
        assert_eq!(ch.choi(), &max_entangled(2).unwrap());
        assert!(ch.is_trace_preserving(1e-12));
    }

    #[test]
    fn projector_action_gives_product_choi() {
        let zero = [c(1.0), c(0.0)];
        let p0 = ComplexMatrix::projector(&zero);
        let ch = choi_from_map_action(2, 2, |x| p0.scale(x[(0, 0)])).unwrap();
        assert_eq!(ch.choi(), &kron(&p0, &p0).unwrap());
    }

    #[test]
    fn unitary_x_choi_is_rank_one_with_trace_two() {
        let x = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let ch = choi_from_map_action(2, 2, |r| x.dot(r).dot(&x.adjoint())).unwrap();
        assert!((ch.choi().trace() - c(2.0)).norm() < 1e-14);
        let ev = ch.choi().hermitian_eigenvalues().unwrap();
        assert_eq!(ev.iter().filter(|&&e| e.abs() > 1e-12).count(), 1);
        assert!(ch.choi().max_abs_diff(unitary_channel(&x).unwrap().choi()) < 1e-14);
    }

    #[test]
    fn choi_action_dimension_mismatch() {
        let r = choi_from_map_action(2, 3, |x| x.clone());
        assert!(matches!(r, Err(CombError::DimensionMismatch(_))));
    }

    #[test]
    fn apply_identity() {
        let rho = ComplexMatrix::from_fn(3, 3, |r, col| C64::new(r as f64, col as f64 - 1.0));
        let out = apply_channel(&identity_channel(3).unwrap(), &rho).unwrap();
        assert!(out.max_abs_diff(&rho) < 1e-15);
    }

    #[test]
    fn apply_up_projector_to_plus() {
        let jz = projective_instrument(&Basis::z()).unwrap();
        let out = apply_channel(jz.channel(0), &plus_state()).unwrap();
        let expected = ComplexMatrix::real_diag(&[0.5, 0.0]);
        assert!(out.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn apply_replacement() {
        let sigma = ComplexMatrix::real_diag(&[0.25, 0.75]);
        let ch = replacement_channel(&sigma, 3).unwrap();
        let rho = ComplexMatrix::real_diag(&[0.5, 0.3, 0.1]);
        let out = apply_channel(&ch, &rho).unwrap();
        assert!(out.max_abs_diff(&sigma.scale_real(0.9)) < 1e-15);
    }

    #[test]
    fn apply_dimension_mismatch() {
        let ch = identity_channel(2).unwrap();
        assert!(matches!(
            apply_channel(&ch, &ComplexMatrix::identity(3)),
            Err(CombError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn computational_projective_instrument() {
        let inst = projective_instrument(&Basis::computational(2)).unwrap();
        assert_eq!(inst.len(), 2);
        for (i, o) in inst.outcomes().iter().enumerate() {
            let mut v = vec![c(0.0); 2];
            v[i] = c(1.0);
            let p = ComplexMatrix::projector(&v);
            assert_eq!(o.channel.choi(), &kron(&p, &p).unwrap());
        }
        assert!(inst.total_channel().is_trace_preserving(1e-12));
    }

    #[test]
    fn x_basis_instrument() {
        let jx = projective_instrument(&Basis::x()).unwrap();
        assert_eq!(jx.labels(), vec!["right", "left"]);
        let out = apply_channel(jx.channel(0), &plus_state()).unwrap();
        assert!(out.max_abs_diff(&plus_state()) < 1e-15);
        let out = apply_channel(jx.channel(1), &plus_state()).unwrap();
        assert!(out.max_abs() < 1e-15);
    }

    #[test]
    fn trivial_basis_instrument() {
        let inst = projective_instrument(&Basis::computational(1)).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst.channel(0).choi(), &ComplexMatrix::scalar(c(1.0)));
    }

    #[test]
    fn complex_basis_instrument_matches_action() {
        let s = C64::new(0.0, FRAC_1_SQRT_2);
        let h = c(FRAC_1_SQRT_2);
        let basis = Basis::new(
            vec![vec![h, s], vec![h, -s]],
            vec!["+i".into(), "-i".into()],
        )
        .unwrap();
        let inst = projective_instrument(&basis).unwrap();
        for (k, v) in basis.vectors().iter().enumerate() {
            let p = ComplexMatrix::projector(v);
            let by_action = choi_from_map_action(2, 2, |x| p.scale(p.dot(x).trace())).unwrap();
            assert!(inst.channel(k).choi().max_abs_diff(by_action.choi()) < 1e-15);
        }
    }

    #[test]
    fn non_orthonormal_basis_rejected() {
        let r = Basis::new(
            vec![vec![c(1.0), c(0.0)], vec![c(1.0), c(1.0)]],
            vec!["a".into(), "b".into()],
        );
        assert!(matches!(r, Err(CombError::InvalidBasis(_))));
    }

    #[test]
    fn replacement_with_self_is_projective() {
        let b = Basis::x();
        let states: Vec<ComplexMatrix> = b
            .vectors()
            .iter()
            .map(|v| ComplexMatrix::projector(v))
            .collect();
        let rep = replacement_instrument(&b, &states).unwrap();
        let proj = projective_instrument(&b).unwrap();
        for k in 0..2 {
            assert!(rep.channel(k).choi().max_abs_diff(proj.channel(k).choi()) < 1e-15);
        }
    }

    #[test]
    fn replacement_with_fixed_state_is_measure_and_reset() {
        let sigma = ComplexMatrix::real_diag(&[0.2, 0.8]);
        let rep = replacement_instrument(&Basis::z(), &[sigma.clone(), sigma.clone()]).unwrap();
        let rho = plus_state();
        let total = apply_channel(&rep.total_channel(), &rho).unwrap();
        assert!(total.max_abs_diff(&sigma) < 1e-15);
    }

    #[test]
    fn replacement_permutation_rule() {
        // three-colour register: outcome 1 ("yellow") is replaced by 2 ("green")
        let b = Basis::computational(3)
            .with_labels(["red", "yellow", "green"])
            .unwrap();
        let e = |i: usize| {
            let mut v = vec![c(0.0); 3];
            v[i] = c(1.0);
            ComplexMatrix::projector(&v)
        };
        let inst = replacement_instrument(&b, &[e(0), e(2), e(2)]).unwrap();
        let out = apply_channel(inst.channel(1), &e(1)).unwrap();
        assert!(out.max_abs_diff(&e(2)) < 1e-15);
    }

    #[test]
    fn invalid_replacement_state() {
        let bad = ComplexMatrix::real_diag(&[0.5, 0.2]);
        let r = replacement_instrument(&Basis::z(), &[bad.clone(), bad]);
        assert!(matches!(r, Err(CombError::InvalidState(_))));
    }

    #[test]
    fn generalized_identity_trivial_ancilla() {
        let one = ComplexMatrix::scalar(c(1.0));
        let g = generalized_identity(2, 2, &one, TracedFactor::None).unwrap();
        assert_eq!(g.choi(), &max_entangled(2).unwrap());
    }

    #[test]
    fn generalized_identity_appends_ancilla() {
        let zero = ComplexMatrix::real_diag(&[1.0, 0.0]);
        let g = generalized_identity(2, 4, &zero, TracedFactor::None).unwrap();
        assert!(g.is_trace_preserving(1e-12) && g.is_cp(1e-12));
        let rho =
            ComplexMatrix::from_fn(2, 2, |r, col| C64::new(0.5, 0.1 * (r as f64 - col as f64)));
        let out = apply_channel(&g, &rho).unwrap();
        assert!(out.max_abs_diff(&kron(&rho, &zero).unwrap()) < 1e-15);
    }

    #[test]
    fn generalized_identity_traces_second_qubit() {
        let one = ComplexMatrix::scalar(c(1.0));
        let g = generalized_identity(4, 2, &one, TracedFactor::Trailing(2)).unwrap();
        let rho = ComplexMatrix::from_fn(4, 4, |r, col| {
            C64::new((r + col) as f64, r as f64 - col as f64)
        });
        let legs = LegStructure::new([("a", 2), ("b", 2)]).unwrap();
        let expected = partial_trace(&rho, &legs, &["b"]).unwrap();
        assert!(apply_channel(&g, &rho).unwrap().max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn generalized_identity_bad_factorization() {
        let one = ComplexMatrix::scalar(c(1.0));
        let r = generalized_identity(3, 2, &one, TracedFactor::Trailing(2));
        assert!(matches!(r, Err(CombError::InconsistentFactorization(_))));
    }

    #[test]
    fn projective_instrument_acts_classically_on_diagonal_states() {
        let inst = projective_instrument(&Basis::computational(3)).unwrap();
        let rho = ComplexMatrix::real_diag(&[0.2, 0.5, 0.3]);
        let mut sum = ComplexMatrix::zeros(3, 3);
        for o in inst.outcomes() {
            sum = &sum + &apply_channel(&o.channel, &rho).unwrap();
        }
        assert!(sum.max_abs_diff(&rho) < 1e-15);
        // but not on coherent ones
        let plus = plus_state();
        let jz = projective_instrument(&Basis::z()).unwrap();
        let avg = apply_channel(&jz.total_channel(), &plus).unwrap();
        assert!(avg.max_abs_diff(&plus) > 0.4);
    }

    #[test]
    fn instrument_must_be_complete() {
        let jz = projective_instrument(&Basis::z()).unwrap();
        let partial = Instrument::new(vec![jz.outcomes()[0].clone()]);
        assert!(matches!(partial, Err(CombError::InvalidChannel(_))));
    }

    #[test]
    fn json_shape() {
        let ch = identity_channel(2).unwrap();
        let v = serde_json::to_value(&ch).unwrap();
        assert_eq!(v["dim_in"], 2);
        assert_eq!(v["dim_out"], 2);
        assert_eq!(v["label"], "identity");
        assert_eq!(v["choi"]["rows"], 4);
        assert_eq!(v["choi"]["data"][0], serde_json::json!([1.0, 0.0]));
        let inst = projective_instrument(&Basis::x()).unwrap();
        let text = serde_json::to_string(&inst).unwrap();
        let back: Instrument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, inst);
        let v = serde_json::to_value(&inst).unwrap();
        assert_eq!(v["outcomes"][1]["label"], "left");
    }

    #[test]
    fn json_rejects_non_cp_channel() {
        let text = r#"{"dim_in":1,"dim_out":1,"label":"neg","choi":{"rows":1,"cols":1,"data":[[-1.0,0.0]]}}"#;
        assert!(serde_json::from_str::<ChoiChannel>(text).is_err());
    }
}
