//! Named, reproducible constructions with checked expectations.
//!
//! Each scenario builds one or more comb or distribution families and a list
//! of expectations. Every expectation records where its expected value comes
//! from: a published worked example, a structural fact about the
//! construction, or an independent oracle computed here by a different route
//! than the comb machinery.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channels::{
    apply_channel, dephasing_channel, kraus_channel, projective_instrument, Basis, ChoiChannel,
    Instrument, Outcome,
};
use crate::combs::{check_causal_order, from_dilation, from_markov_chain, Comb, Dilation};
use crate::consistency::{
    check_get, check_ket, classical_embed_family, idle_reduction, is_classical, uniform_bases,
    Bases, CombFamily, DistributionFamily, JointDistribution,
};
use crate::error::{CombError, Result};
use crate::format::{fmt_g17, Table};
use crate::tensor::{dim_cap, kron, ComplexMatrix, C64};
use crate::time::{TimeLabel, TimeSet};

/// Registered scenario names.
pub const SCENARIOS: &[&str] = &[
    "stern-gerlach",
    "urn",
    "random-dilation",
    "dephasing-markov",
];

/// Where an expected value comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    /// A value stated in the published worked example.
    Reference,
    /// Holds by construction.
    Structural,
    /// Computed by an independent oracle.
    Derived { oracle: String },
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Reference => f.write_str("reference"),
            Provenance::Structural => f.write_str("structural"),
            Provenance::Derived { oracle } => write!(f, "derived ({oracle})"),
        }
    }
}

fn derived(oracle: &str) -> Provenance {
    Provenance::Derived {
        oracle: oracle.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub query: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub provenance: Provenance,
}

impl Expectation {
    pub fn deviation(&self) -> f64 {
        (self.actual - self.expected).abs()
    }

    pub fn passes(&self) -> bool {
        self.deviation() <= self.tolerance
    }
}

/// Optional knobs; each scenario reads the ones it uses and falls back to
/// its own defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Basis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urn: Option<UrnConfig>,
}

/// A built scenario: named families plus evaluated expectations.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub params: ScenarioParams,
    pub comb_families: Vec<(String, CombFamily)>,
    pub distribution_families: Vec<(String, DistributionFamily)>,
    pub expectations: Vec<Expectation>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpectationRow {
    pub query: String,
    pub expected: f64,
    pub actual: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub provenance: Provenance,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub params: ScenarioParams,
    pub comb_families: Vec<String>,
    pub distribution_families: Vec<String>,
    pub expectations: Vec<ExpectationRow>,
    pub pass: bool,
}

impl Scenario {
    pub fn passes(&self) -> bool {
        self.expectations.iter().all(Expectation::passes)
    }

    pub fn comb_family(&self, name: &str) -> Option<&CombFamily> {
        self.comb_families
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f)
    }

    pub fn distribution_family(&self, name: &str) -> Option<&DistributionFamily> {
        self.distribution_families
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f)
    }

    pub fn family_names(&self) -> Vec<&str> {
        self.comb_families
            .iter()
            .map(|(n, _)| n.as_str())
            .chain(self.distribution_families.iter().map(|(n, _)| n.as_str()))
            .collect()
    }

    pub fn report(&self) -> ScenarioReport {
        ScenarioReport {
            name: self.name.clone(),
            params: self.params.clone(),
            comb_families: self.comb_families.iter().map(|(n, _)| n.clone()).collect(),
            distribution_families: self
                .distribution_families
                .iter()
                .map(|(n, _)| n.clone())
                .collect(),
            expectations: self
                .expectations
                .iter()
                .map(|e| ExpectationRow {
                    query: e.query.clone(),
                    expected: e.expected,
                    actual: e.actual,
                    deviation: e.deviation(),
                    tolerance: e.tolerance,
                    provenance: e.provenance.clone(),
                    pass: e.passes(),
                })
                .collect(),
            pass: self.passes(),
        }
    }

    pub fn to_table(&self) -> String {
        let mut t = Table::new([
            "query",
            "expected",
            "actual",
            "deviation",
            "tol",
            "source",
            "status",
        ]);
        for e in &self.expectations {
            t.push([
                e.query.clone(),
                fmt_g17(e.expected),
                fmt_g17(e.actual),
                fmt_g17(e.deviation()),
                fmt_g17(e.tolerance),
                e.provenance.to_string(),
                if e.passes() { "ok" } else { "FAIL" }.to_string(),
            ]);
        }
        let mut out = format!("scenario {}\n", self.name);
        out.push_str(&t.render());
        out.push_str(&format!(
            "families: {}\n{} expectations: {}\n",
            self.family_names().join(", "),
            self.expectations.len(),
            if self.passes() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Builds a registered scenario by name.
pub fn build(name: &str, params: &ScenarioParams) -> Result<Scenario> {
    let mut s = match name {
        "stern-gerlach" => stern_gerlach()?,
        "urn" => urn(&params.urn.clone().unwrap_or_default())?,
        "random-dilation" => random_dilation_family(
            params.seed,
            params.system_dim.unwrap_or(2),
            params.env_dim.unwrap_or(2),
            params.steps.unwrap_or(3),
        )?,
        "dephasing-markov" => {
            let basis = match &params.basis {
                Some(b) => b.clone(),
                None => Basis::computational(params.system_dim.unwrap_or(2)),
            };
            dephasing_markov(params.seed, params.steps.unwrap_or(3), &basis)?
        }
        other => {
            return Err(CombError::UnknownScenario(format!(
                "`{other}` (known: {})",
                SCENARIOS.join(", ")
            )))
        }
    };
    s.params = params.clone();
    Ok(s)
}

// ---------------------------------------------------------------------------
// random generators

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// A `rows × cols` isometry (`rows ≥ cols`) from the QR decomposition of a
/// complex Gaussian matrix, with the phases of `R`'s diagonal moved into `Q`
/// so that the square case is Haar distributed.
pub fn random_isometry<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let g = gaussian_matrix(rng, rows, cols);
    let qr = DMatrix::from_fn(rows, cols, |r, c| g[(r, c)]).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases: Vec<C64> = (0..cols)
        .map(|j| {
            let d = r[(j, j)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect();
    ComplexMatrix::from_fn(rows, cols, |i, j| q[(i, j)] * phases[j])
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    random_isometry(rng, d, d)
}

/// `G G† / tr(G G†)` for a complex Gaussian `G`.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    let g = gaussian_matrix(rng, d, d);
    let m = g.dot(&g.adjoint());
    let tr = m.trace().re;
    m.scale_real(1.0 / tr)
}

/// Kraus operators of a random instrument on dimension `d`: `outcomes`
/// outcomes with `rank` Kraus operators each, cut from one random isometry
/// so the total map is trace preserving.
pub fn random_kraus_instrument<R: Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    outcomes: usize,
    rank: usize,
) -> Vec<Vec<ComplexMatrix>> {
    let v = random_isometry(rng, d * outcomes * rank, d);
    (0..outcomes)
        .map(|o| {
            (0..rank)
                .map(|k| {
                    let block = (o * rank + k) * d;
                    ComplexMatrix::from_fn(d, d, |r, c| v[(block + r, c)])
                })
                .collect()
        })
        .collect()
}

/// The instrument whose outcome `i` has Kraus operators `kraus[i]`.
pub fn instrument_from_kraus(kraus: &[Vec<ComplexMatrix>]) -> Result<Instrument> {
    let outcomes = kraus
        .iter()
        .enumerate()
        .map(|(i, ks)| {
            Ok(Outcome {
                label: i.to_string(),
                channel: kraus_channel(ks)?.with_label(i.to_string()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(outcomes)
}

/// A random dilation with a Gaussian-ensemble initial state and Haar
/// propagators.
pub fn random_dilation<R: Rng + ?Sized>(
    rng: &mut R,
    system_dim: usize,
    env_dim: usize,
    steps: usize,
) -> Result<Dilation> {
    let n = system_dim * env_dim;
    let rho = random_state(rng, n);
    let us = (0..steps).map(|_| random_unitary(rng, n)).collect();
    Dilation::new(system_dim, env_dim, rho, us)
}

// ---------------------------------------------------------------------------
// oracles

/// Probability of one outcome sequence computed by propagating the joint
/// system-environment state: at each time apply the propagator, then the
/// Kraus operators of the chosen outcome on the system.
pub fn sequential_dilation_probability(d: &Dilation, kraus: &[&[ComplexMatrix]]) -> Result<f64> {
    if kraus.len() != d.unitaries().len() {
        return Err(CombError::DimensionMismatch(format!(
            "{} interventions for {} times",
            kraus.len(),
            d.unitaries().len()
        )));
    }
    let id_env = ComplexMatrix::identity(d.env_dim());
    let mut rho = d.initial_state().clone();
    for (u, ks) in d.unitaries().iter().zip(kraus) {
        rho = u.dot(&rho).dot(&u.adjoint());
        let mut next = ComplexMatrix::zeros(rho.rows(), rho.cols());
        for k in ks.iter() {
            let big = kron(k, &id_env)?;
            next = &next + &big.dot(&rho).dot(&big.adjoint());
        }
        rho = next;
    }
    Ok(rho.trace().re)
}

/// Fixed-basis statistics of a Markov chain with projective measurements at
/// the times of `subset`, computed by stepping the density matrix.
/// `links[j]` acts between `times[j]` and `times[j+1]`.
pub fn sequential_markov_distribution(
    initial: &ComplexMatrix,
    links: &[ChoiChannel],
    times: &TimeSet,
    bases: &Bases,
    subset: &TimeSet,
) -> Result<JointDistribution> {
    let basis_at = |t: &TimeLabel| {
        bases
            .get(t)
            .ok_or_else(|| CombError::InvalidBasis(format!("no reference basis given for {t}")))
    };
    let alphabets = subset
        .iter()
        .map(|t| basis_at(t).map(|b| b.labels().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut err = None;
    let dist = JointDistribution::from_fn(subset.clone(), alphabets, |outcome| {
        let mut rho = initial.clone();
        let mut k = 0;
        for (j, t) in times.iter().enumerate() {
            if subset.contains(t) {
                let v = &basis_at(t).expect("checked above").vectors()[outcome[k]];
                let p = ComplexMatrix::projector(v);
                rho = p.dot(&rho).dot(&p);
                k += 1;
            }
            if let Some(link) = links.get(j) {
                match apply_channel(link, &rho) {
                    Ok(r) => rho = r,
                    Err(e) => {
                        err.get_or_insert(e);
                    }
                }
            }
        }
        rho.trace().re
    });
    if let Some(e) = err {
        return Err(e);
    }
    dist
}

// ---------------------------------------------------------------------------
// Stern-Gerlach

/// Three consecutive spin measurements on a qubit prepared in `|→⟩`, with
/// trivial environment and no dynamics between measurements.
pub fn stern_gerlach() -> Result<Scenario> {
    let times = TimeSet::standard(3);
    let (z, x) = (Basis::z(), Basis::x());
    let plus = ComplexMatrix::projector(&x.vectors()[0]);
    let id = ComplexMatrix::identity(2);
    let dilation = Dilation::new(2, 1, plus.clone(), vec![id.clone(), id.clone(), id])?;
    let comb = from_dilation(&dilation, &times)?;
    let process = CombFamily::all_restrictions(&comb)?;

    let jz = projective_instrument(&z)?;
    let jx = projective_instrument(&x)?;
    let mut bases = uniform_bases(&z, &times);
    bases.insert(TimeLabel::from("t2"), x.clone());
    let measured = idle_reduction(&process, &bases)?;

    let mut ex = Vec::new();
    let reference = |query: String, expected: f64, actual: f64| Expectation {
        query,
        expected,
        actual,
        tolerance: 1e-10,
        provenance: Provenance::Reference,
    };
    for (a, la) in z.labels().iter().enumerate() {
        for (b, lb) in x.labels().iter().enumerate() {
            for (c, lc) in z.labels().iter().enumerate() {
                let p = comb.contract(&[
                    jz.channel(a).clone(),
                    jx.channel(b).clone(),
                    jz.channel(c).clone(),
                ])?;
                ex.push(reference(format!("P({la},{lb},{lc} | Jz,Jx,Jz)"), 0.125, p));
            }
        }
    }
    let summed: f64 = (0..2)
        .map(|b| {
            comb.contract(&[
                jz.channel(0).clone(),
                jx.channel(b).clone(),
                jz.channel(0).clone(),
            ])
        })
        .sum::<Result<f64>>()?;
    ex.push(reference(
        "sum over t2 of P(up,·,up | Jz,Jx,Jz)".into(),
        0.25,
        summed,
    ));
    let t13 = TimeSet::new(["t1", "t3"])?;
    let restricted = comb.restrict(&t13)?;
    let p13 = restricted.contract(&[jz.channel(0).clone(), jz.channel(0).clone()])?;
    ex.push(reference(
        "P_{t1,t3}(up,up | Jz,Jz) after restriction".into(),
        0.5,
        p13,
    ));

    ex.push(Expectation {
        query: "checkGET max deviation".into(),
        expected: 0.0,
        actual: check_get(&process, 1e-10)?.max_deviation(),
        tolerance: 1e-10,
        provenance: Provenance::Structural,
    });

    // the same experiment stepped directly on the qubit state
    let oracle_members = times
        .nonempty_subsets()
        .iter()
        .map(|s| sequential_markov_distribution(&plus, &[], &times, &bases, s))
        .collect::<Result<Vec<_>>>()?;
    let oracle = DistributionFamily::new(times.clone(), oracle_members)?;
    let oracle_ket = check_ket(&oracle, 1e-9);
    let full = TimeSet::standard(3);
    let classical = is_classical(&process, &bases, 1e-9)?;
    let pair_dev = |r: &crate::consistency::ConsistencyReport| {
        r.pair(&t13, &full).map(|p| p.deviation).unwrap_or(f64::NAN)
    };
    ex.push(Expectation {
        query: "isClassical (z,x,z) deviation at ({t1,t3},{t1,t2,t3})".into(),
        expected: pair_dev(&oracle_ket),
        actual: pair_dev(&classical),
        tolerance: 1e-10,
        provenance: derived("sequential qubit simulation"),
    });
    ex.push(Expectation {
        query: "measured statistics vs sequential simulation".into(),
        expected: 0.0,
        actual: max_member_gap(&measured, &oracle),
        tolerance: 1e-12,
        provenance: derived("sequential qubit simulation"),
    });

    Ok(Scenario {
        name: "stern-gerlach".into(),
        params: ScenarioParams::default(),
        comb_families: vec![("process".into(), process)],
        distribution_families: vec![("measured".into(), measured)],
        expectations: ex,
    })
}

/// Largest entrywise gap between same-time members of two families with
/// identical alphabets; infinite if their member sets differ.
fn max_member_gap(a: &DistributionFamily, b: &DistributionFamily) -> f64 {
    if a.members().keys().ne(b.members().keys()) {
        return f64::INFINITY;
    }
    a.members()
        .iter()
        .map(|(t, m)| {
            let o = &b.members()[t];
            if m.alphabets() != o.alphabets() {
                return f64::INFINITY;
            }
            m.probs()
                .iter()
                .zip(o.probs())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// urn

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrnDrop {
    pub time: TimeLabel,
    pub color: String,
}

/// At `time`, a drawn ball of color `drawn` goes back as `returned`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub time: TimeLabel,
    pub drawn: String,
    pub returned: String,
}

/// Drawing with replacement from an urn.
///
/// At each time the scheduled drops land first; if the experimenter acts at
/// that time a ball is drawn uniformly and put back. In the intervention
/// family the replacement rules of the acting times apply to the returned
/// ball. Times where the experimenter does nothing leave the urn untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrnConfig {
    pub times: TimeSet,
    pub colors: Vec<String>,
    pub initial: BTreeMap<String, u32>,
    #[serde(default)]
    pub drops: Vec<UrnDrop>,
    #[serde(default)]
    pub replacements: Vec<Replacement>,
}

impl Default for UrnConfig {
    /// One yellow, one blue and one red ball; a red ball drops in at `t2`;
    /// yellow is returned as green at `t1`, blue as white at `t2`, red as
    /// blue at `t3`.
    fn default() -> Self {
        let colors: Vec<String> = ["yellow", "blue", "red", "green", "white"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let initial = [("yellow", 1), ("blue", 1), ("red", 1)]
            .iter()
            .map(|(c, n)| (c.to_string(), *n))
            .collect();
        let rule = |t: &str, a: &str, b: &str| Replacement {
            time: t.into(),
            drawn: a.into(),
            returned: b.into(),
        };
        UrnConfig {
            times: TimeSet::standard(3),
            colors,
            initial,
            drops: vec![UrnDrop {
                time: "t2".into(),
                color: "red".into(),
            }],
            replacements: vec![
                rule("t1", "yellow", "green"),
                rule("t2", "blue", "white"),
                rule("t3", "red", "blue"),
            ],
        }
    }
}

/// Urn rules resolved to color indices.
struct UrnRules {
    initial: Vec<u32>,
    drops: Vec<Vec<usize>>,
    replace: Vec<Vec<usize>>,
}

impl UrnConfig {
    fn color(&self, c: &str) -> Result<usize> {
        self.colors
            .iter()
            .position(|x| x == c)
            .ok_or_else(|| CombError::InvalidParameters(format!("unknown urn color `{c}`")))
    }

    fn time(&self, t: &TimeLabel) -> Result<usize> {
        self.times
            .position(t)
            .ok_or_else(|| CombError::InvalidParameters(format!("urn rule at unknown time {t}")))
    }

    fn resolve(&self) -> Result<UrnRules> {
        if self.times.is_empty() {
            return Err(CombError::InvalidParameters(
                "urn needs at least one time".into(),
            ));
        }
        let mut sorted = self.colors.clone();
        sorted.sort();
        if sorted.is_empty() || sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CombError::InvalidParameters(
                "urn colors must be nonempty and distinct".into(),
            ));
        }
        let mut initial = vec![0; self.colors.len()];
        for (c, &n) in &self.initial {
            initial[self.color(c)?] = n;
        }
        let k = self.times.len();
        let mut drops = vec![Vec::new(); k];
        for d in &self.drops {
            drops[self.time(&d.time)?].push(self.color(&d.color)?);
        }
        let mut replace: Vec<Vec<usize>> = vec![(0..self.colors.len()).collect(); k];
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.replacements {
            let (j, a) = (self.time(&r.time)?, self.color(&r.drawn)?);
            if !seen.insert((j, a)) {
                return Err(CombError::InvalidParameters(format!(
                    "two replacement rules for {} at {}",
                    r.drawn, r.time
                )));
            }
            replace[j][a] = self.color(&r.returned)?;
        }
        Ok(UrnRules {
            initial,
            drops,
            replace,
        })
    }
}

/// Sparse outcome distribution of one urn run: color indices, one per
/// acting time.
type Sparse = BTreeMap<Vec<usize>, f64>;

/// Propagates the distribution over (urn contents, outcomes so far).
fn urn_run(cfg: &UrnConfig, rules: &UrnRules, acting: &TimeSet, intervene: bool) -> Result<Sparse> {
    let mut state: BTreeMap<(Vec<u32>, Vec<usize>), f64> = BTreeMap::new();
    state.insert((rules.initial.clone(), Vec::new()), 1.0);
    for (j, t) in cfg.times.iter().enumerate() {
        if !rules.drops[j].is_empty() {
            state = state
                .into_iter()
                .map(|((mut counts, outs), p)| {
                    for &c in &rules.drops[j] {
                        counts[c] += 1;
                    }
                    ((counts, outs), p)
                })
                .collect();
        }
        if !acting.contains(t) {
            continue;
        }
        let mut next = BTreeMap::new();
        for ((counts, outs), p) in state {
            let total: u32 = counts.iter().sum();
            if total == 0 {
                return Err(CombError::InvalidParameters(format!("urn is empty at {t}")));
            }
            for (c, &n) in counts.iter().enumerate() {
                if n == 0 {
                    continue;
                }
                let mut after = counts.clone();
                if intervene {
                    after[c] -= 1;
                    after[rules.replace[j][c]] += 1;
                }
                let mut o = outs.clone();
                o.push(c);
                *next.entry((after, o)).or_insert(0.0) += p * n as f64 / total as f64;
            }
        }
        state = next;
    }
    let mut out = Sparse::new();
    for ((_, outs), p) in state {
        *out.entry(outs).or_insert(0.0) += p;
    }
    Ok(out)
}

/// Builds the family over every nonempty subset of the urn's times, with
/// per-time alphabets made of the colors that can be drawn there.
fn urn_family(cfg: &UrnConfig, rules: &UrnRules, intervene: bool) -> Result<DistributionFamily> {
    let subsets = cfg.times.nonempty_subsets();
    let runs = subsets
        .iter()
        .map(|s| urn_run(cfg, rules, s, intervene))
        .collect::<Result<Vec<_>>>()?;
    let mut reachable = vec![vec![false; cfg.colors.len()]; cfg.times.len()];
    for (s, run) in subsets.iter().zip(&runs) {
        for (outs, &p) in run {
            if p > 0.0 {
                for (t, &c) in s.iter().zip(outs) {
                    reachable[cfg.times.position(t).expect("subset")][c] = true;
                }
            }
        }
    }
    let alphabet_idx: Vec<Vec<usize>> = reachable
        .iter()
        .map(|r| (0..r.len()).filter(|&c| r[c]).collect())
        .collect();
    let members = subsets
        .iter()
        .zip(&runs)
        .map(|(s, run)| {
            let idx: Vec<&Vec<usize>> = s
                .iter()
                .map(|t| &alphabet_idx[cfg.times.position(t).expect("subset")])
                .collect();
            let alphabets = idx
                .iter()
                .map(|a| a.iter().map(|&c| cfg.colors[c].clone()).collect())
                .collect();
            JointDistribution::from_fn(s.clone(), alphabets, |o| {
                let colors: Vec<usize> = o.iter().zip(&idx).map(|(&k, a)| a[k]).collect();
                run.get(&colors).copied().unwrap_or(0.0)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DistributionFamily::new(cfg.times.clone(), members)
}

/// Outcome probabilities by label, keyed by acting time set.
pub type LabelledFamily = BTreeMap<TimeSet, BTreeMap<Vec<String>, f64>>;

/// Enumerates every draw of an individual ball along every trajectory.
pub fn urn_enumeration_oracle(cfg: &UrnConfig, intervene: bool) -> Result<LabelledFamily> {
    let rules = cfg.resolve()?;
    let mut balls = Vec::new();
    for (c, &n) in rules.initial.iter().enumerate() {
        balls.extend(std::iter::repeat_n(c, n as usize));
    }
    let mut fam = LabelledFamily::new();
    for s in cfg.times.nonempty_subsets() {
        let mut dist = BTreeMap::new();
        enumerate_draws(
            cfg,
            &rules,
            &s,
            intervene,
            0,
            balls.clone(),
            Vec::new(),
            1.0,
            &mut dist,
        )?;
        fam.insert(s, dist);
    }
    Ok(fam)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_draws(
    cfg: &UrnConfig,
    rules: &UrnRules,
    acting: &TimeSet,
    intervene: bool,
    j: usize,
    mut balls: Vec<usize>,
    outs: Vec<String>,
    p: f64,
    dist: &mut BTreeMap<Vec<String>, f64>,
) -> Result<()> {
    if j == cfg.times.len() {
        *dist.entry(outs).or_insert(0.0) += p;
        return Ok(());
    }
    balls.extend(rules.drops[j].iter().copied());
    let t = &cfg.times.labels()[j];
    if !acting.contains(t) {
        return enumerate_draws(cfg, rules, acting, intervene, j + 1, balls, outs, p, dist);
    }
    if balls.is_empty() {
        return Err(CombError::InvalidParameters(format!("urn is empty at {t}")));
    }
    let q = p / balls.len() as f64;
    for b in 0..balls.len() {
        let color = balls[b];
        let mut next = balls.clone();
        if intervene {
            next[b] = rules.replace[j][color];
        }
        let mut o = outs.clone();
        o.push(cfg.colors[color].clone());
        enumerate_draws(cfg, rules, acting, intervene, j + 1, next, o, q, dist)?;
    }
    Ok(())
}

/// Largest gap between a family and labelled probabilities, over the union
/// of their supports.
pub fn labelled_gap(f: &DistributionFamily, oracle: &LabelledFamily) -> f64 {
    if f.members().keys().ne(oracle.keys()) {
        return f64::INFINITY;
    }
    let mut gap = 0.0f64;
    for (t, m) in f.members() {
        let o = &oracle[t];
        for outcome in m.outcomes() {
            let labels = m.labels_of(&outcome);
            let q = o.get(&labels).copied().unwrap_or(0.0);
            gap = gap.max((m.prob(&outcome) - q).abs());
        }
        for (labels, &q) in o {
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            if m.prob_of(&refs).is_none() {
                gap = gap.max(q.abs());
            }
        }
    }
    gap
}

/// Largest marginal mismatch within a labelled family, computed directly.
pub fn labelled_ket_deviation(f: &LabelledFamily) -> f64 {
    let mut worst = 0.0f64;
    for (sub, small) in f {
        for (sup, large) in f {
            if sub == sup || !sub.is_subset_of(sup) {
                continue;
            }
            let keep: Vec<usize> = sub
                .iter()
                .map(|t| sup.position(t).expect("subset"))
                .collect();
            let mut marginal: BTreeMap<Vec<String>, f64> = BTreeMap::new();
            for (labels, &p) in large {
                let key = keep.iter().map(|&i| labels[i].clone()).collect();
                *marginal.entry(key).or_insert(0.0) += p;
            }
            for (k, &p) in small {
                worst = worst.max((p - marginal.get(k).copied().unwrap_or(0.0)).abs());
            }
            for (k, &p) in &marginal {
                worst = worst.max((p - small.get(k).copied().unwrap_or(0.0)).abs());
            }
        }
    }
    worst
}

/// The idle and intervention urn families.
pub fn urn_families(cfg: &UrnConfig) -> Result<(DistributionFamily, DistributionFamily)> {
    let rules = cfg.resolve()?;
    Ok((
        urn_family(cfg, &rules, false)?,
        urn_family(cfg, &rules, true)?,
    ))
}

pub fn urn(cfg: &UrnConfig) -> Result<Scenario> {
    let (idle, intervention) = urn_families(cfg)?;
    let idle_oracle = urn_enumeration_oracle(cfg, false)?;
    let int_oracle = urn_enumeration_oracle(cfg, true)?;
    let oracle = "labelled-ball enumeration";
    let mut ex = vec![
        Expectation {
            query: "idle: checkKET max deviation".into(),
            expected: 0.0,
            actual: check_ket(&idle, 1e-12).max_deviation(),
            tolerance: 1e-12,
            provenance: Provenance::Structural,
        },
        Expectation {
            query: "idle: members vs enumeration".into(),
            expected: 0.0,
            actual: labelled_gap(&idle, &idle_oracle),
            tolerance: 1e-12,
            provenance: derived(oracle),
        },
        Expectation {
            query: "intervention: members vs enumeration".into(),
            expected: 0.0,
            actual: labelled_gap(&intervention, &int_oracle),
            tolerance: 1e-12,
            provenance: derived(oracle),
        },
        Expectation {
            query: "intervention: checkKET max deviation".into(),
            expected: labelled_ket_deviation(&int_oracle),
            actual: check_ket(&intervention, 1e-12).max_deviation(),
            tolerance: 1e-12,
            provenance: derived(oracle),
        },
    ];
    let mut combs = Vec::new();
    let max_alphabet = idle
        .members()
        .get(&cfg.times)
        .map(|m| {
            m.alphabets()
                .iter()
                .map(|a| a.len() * a.len())
                .product::<usize>()
        })
        .unwrap_or(usize::MAX);
    if max_alphabet
        .checked_mul(max_alphabet)
        .is_some_and(|n| n <= dim_cap())
    {
        let embedded = classical_embed_family(&idle)?;
        let full = &idle.members()[&cfg.times];
        let bases: Bases = cfg
            .times
            .iter()
            .zip(full.alphabets())
            .map(|(t, a)| {
                Ok((
                    t.clone(),
                    Basis::computational(a.len()).with_labels(a.clone())?,
                ))
            })
            .collect::<Result<_>>()?;
        ex.push(Expectation {
            query: "idle embedded: checkGET max deviation".into(),
            expected: 0.0,
            actual: check_get(&embedded, 1e-10)?.max_deviation(),
            tolerance: 1e-10,
            provenance: Provenance::Structural,
        });
        ex.push(Expectation {
            query: "idle embedded: isClassical max deviation".into(),
            expected: labelled_ket_deviation(&idle_oracle),
            actual: is_classical(&embedded, &bases, 1e-9)?.max_deviation(),
            tolerance: 1e-9,
            provenance: derived(oracle),
        });
        combs.push(("idle-embedded".to_string(), embedded));
    }
    Ok(Scenario {
        name: "urn".into(),
        params: ScenarioParams::default(),
        comb_families: combs,
        distribution_families: vec![("idle".into(), idle), ("intervention".into(), intervention)],
        expectations: ex,
    })
}

// ---------------------------------------------------------------------------
// random dilation

fn check_comb_size(legs_dim: usize, extra: usize) -> Result<()> {
    let side = legs_dim.checked_mul(extra);
    match side.and_then(|s| s.checked_mul(s)) {
        Some(n) if n <= dim_cap() => Ok(()),
        n => Err(CombError::Size {
            entries: n.unwrap_or(usize::MAX),
            cap: dim_cap(),
        }),
    }
}

fn slot_legs_dim(din: usize, dout: usize, steps: usize) -> Option<usize> {
    (din * dout).checked_pow(steps as u32)
}

/// A seeded random dilation and the restrictions of its comb to every
/// nonempty subset of `t1..t_steps`.
pub fn random_dilation_family(
    seed: u64,
    system_dim: usize,
    env_dim: usize,
    steps: usize,
) -> Result<Scenario> {
    if system_dim == 0 || env_dim == 0 || steps == 0 {
        return Err(CombError::InvalidParameters(
            "dimensions and step count must be positive".into(),
        ));
    }
    let legs = slot_legs_dim(system_dim, system_dim, steps).unwrap_or(usize::MAX);
    check_comb_size(legs, system_dim * env_dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dilation = random_dilation(&mut rng, system_dim, env_dim, steps)?;
    let times = TimeSet::standard(steps);
    let comb = from_dilation(&dilation, &times)?;
    let process = CombFamily::all_restrictions(&comb)?;

    let mut ex = vec![
        Expectation {
            query: "checkGET max deviation".into(),
            expected: 0.0,
            actual: check_get(&process, 1e-10)?.max_deviation(),
            tolerance: 1e-10,
            provenance: derived("restrictions of one dilated comb"),
        },
        Expectation {
            query: "causal ordering max deviation".into(),
            expected: 0.0,
            actual: check_causal_order(&comb, 1e-10)
                .levels
                .iter()
                .map(|l| l.deviation)
                .fold(0.0, f64::max),
            tolerance: 1e-10,
            provenance: Provenance::Structural,
        },
    ];
    for r in 0..3 {
        let kraus: Vec<Vec<Vec<ComplexMatrix>>> = (0..steps)
            .map(|_| random_kraus_instrument(&mut rng, system_dim, 2, 1))
            .collect();
        let instruments = kraus
            .iter()
            .map(|k| instrument_from_kraus(k))
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        let mut worst = 0.0f64;
        for idx in 0..(1usize << steps) {
            let choice: Vec<usize> = (0..steps).map(|j| (idx >> (steps - 1 - j)) & 1).collect();
            let maps: Vec<ChoiChannel> = choice
                .iter()
                .zip(&instruments)
                .map(|(&o, i)| i.channel(o).clone())
                .collect();
            let p = comb.contract(&maps)?;
            let ks: Vec<&[ComplexMatrix]> = choice
                .iter()
                .zip(&kraus)
                .map(|(&o, k)| k[o].as_slice())
                .collect();
            let q = sequential_dilation_probability(&dilation, &ks)?;
            total += p;
            worst = worst.max((p - q).abs());
        }
        ex.push(Expectation {
            query: format!("random instruments #{r}: Born normalization"),
            expected: 1.0,
            actual: total,
            tolerance: 1e-9,
            provenance: Provenance::Structural,
        });
        ex.push(Expectation {
            query: format!("random instruments #{r}: max gap to sequential simulation"),
            expected: 0.0,
            actual: worst,
            tolerance: 1e-10,
            provenance: derived("sequential system-environment simulation"),
        });
    }
    Ok(Scenario {
        name: "random-dilation".into(),
        params: ScenarioParams {
            seed,
            steps: Some(steps),
            system_dim: Some(system_dim),
            env_dim: Some(env_dim),
            ..ScenarioParams::default()
        },
        comb_families: vec![("process".into(), process)],
        distribution_families: Vec::new(),
        expectations: ex,
    })
}

// ---------------------------------------------------------------------------
// dephasing Markov chain

/// Random column-stochastic matrix with Dirichlet(1) columns.
fn random_stochastic<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<Vec<f64>> {
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            let w: Vec<f64> = (0..d).map(|_| rng.sample(Exp1)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect();
    (0..d)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect()
}

/// The pieces of a dephasing Markov chain in a fixed basis.
#[derive(Clone, Debug)]
pub struct DephasingChain {
    pub basis: Basis,
    /// Populations of the initial state in the basis.
    pub populations: Vec<f64>,
    /// Transition matrix acting on populations (column stochastic).
    pub transitions: Vec<Vec<f64>>,
    pub initial: ComplexMatrix,
    pub links: Vec<ChoiChannel>,
    /// The same links followed by the basis-relative Fourier unitary.
    pub control_links: Vec<ChoiChannel>,
}

/// Basis-relative discrete Fourier transform; the Hadamard gate for a qubit
/// in the computational basis.
pub fn fourier_in_basis(basis: &Basis) -> ComplexMatrix {
    let d = basis.dim();
    let f = ComplexMatrix::from_fn(d, d, |r, c| {
        let angle = 2.0 * std::f64::consts::PI * (r * c) as f64 / d as f64;
        C64::from_polar(1.0 / (d as f64).sqrt(), angle)
    });
    let b = basis.change_of_basis();
    b.dot(&f).dot(&b.adjoint())
}

/// Seeded chain: diagonal initial state with leading population in
/// `[0.8, 0.95]`, and identical links `(1-γ)·dephase_λ + γ·T` where `T`
/// measures in the basis and resamples with a random stochastic matrix.
pub fn dephasing_chain(seed: u64, steps: usize, basis: &Basis) -> Result<DephasingChain> {
    if steps == 0 {
        return Err(CombError::InvalidParameters(
            "step count must be positive".into(),
        ));
    }
    let d = basis.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p0: f64 = rng.random_range(0.8..0.95);
    let rest: Vec<f64> = (1..d).map(|_| rng.sample(Exp1)).collect();
    let rest_sum: f64 = rest.iter().sum();
    let mut populations = vec![p0];
    populations.extend(rest.iter().map(|w| (1.0 - p0) * w / rest_sum));
    if d == 1 {
        populations = vec![1.0];
    }
    let gamma: f64 = rng.random_range(0.1..0.3);
    let lambda: f64 = rng.random_range(0.3..0.7);
    let t = random_stochastic(&mut rng, d);

    let v = basis.vectors();
    let mut initial = ComplexMatrix::zeros(d, d);
    for (p, vi) in populations.iter().zip(v) {
        initial = &initial + &ComplexMatrix::projector(vi).scale_real(*p);
    }
    let mut kraus = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if t[i][j] > 0.0 {
                kraus.push(ComplexMatrix::ket_bra(&v[i], &v[j]).scale_real(t[i][j].sqrt()));
            }
        }
    }
    let resample = kraus_channel(&kraus)?;
    let dephase = dephasing_channel(basis, lambda)?;
    let link = ChoiChannel::linear_combination(&[(1.0 - gamma, &dephase), (gamma, &resample)])?
        .with_label("dephasing-link");
    let fourier = crate::channels::unitary_channel(&fourier_in_basis(basis))?;
    let control = crate::channels::compose(&fourier, &link)?.with_label("control-link");
    let transitions = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (1.0 - gamma) * if i == j { 1.0 } else { 0.0 } + gamma * t[i][j])
                .collect()
        })
        .collect();
    Ok(DephasingChain {
        basis: basis.clone(),
        populations,
        transitions,
        initial,
        links: vec![link; steps - 1],
        control_links: vec![control; steps - 1],
    })
}

/// Classical Markov chain statistics at the times of `subset`: populations
/// are pushed through the transition matrix between observed times.
pub fn markov_chain_distribution(
    chain: &DephasingChain,
    times: &TimeSet,
    subset: &TimeSet,
) -> Result<JointDistribution> {
    let d = chain.populations.len();
    let step = |p: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|i| (0..d).map(|j| chain.transitions[i][j] * p[j]).sum())
            .collect()
    };
    let positions: Vec<usize> = subset
        .iter()
        .map(|t| {
            times.position(t).ok_or_else(|| CombError::NotContained {
                sub: subset.to_string(),
                sup: times.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let labels = chain.basis.labels().to_vec();
    JointDistribution::from_fn(subset.clone(), vec![labels; subset.len()], |outcome| {
        let mut p = chain.populations.clone();
        let mut now = 0;
        for (&pos, &o) in positions.iter().zip(outcome) {
            for _ in now..pos {
                p = step(&p);
            }
            now = pos;
            // condition on the observed value
            for (i, x) in p.iter_mut().enumerate() {
                if i != o {
                    *x = 0.0;
                }
            }
        }
        p.iter().sum()
    })
}

/// A classical dephasing Markov chain in `basis` and the control with a
/// Fourier unitary inserted after every link.
pub fn dephasing_markov(seed: u64, steps: usize, basis: &Basis) -> Result<Scenario> {
    let d = basis.dim();
    let legs = slot_legs_dim(d, d, steps).unwrap_or(usize::MAX);
    check_comb_size(legs, 1)?;
    let chain = dephasing_chain(seed, steps, basis)?;
    let times = TimeSet::standard(steps);
    let bases = uniform_bases(basis, &times);
    let classical_comb = from_markov_chain(&chain.initial, &chain.links, &times)?;
    let control_comb = from_markov_chain(&chain.initial, &chain.control_links, &times)?;
    let classical = CombFamily::all_restrictions(&classical_comb)?;
    let control = CombFamily::all_restrictions(&control_comb)?;
    let measured = idle_reduction(&classical, &bases)?;
    let control_measured = idle_reduction(&control, &bases)?;

    let subsets = times.nonempty_subsets();
    let chain_oracle = DistributionFamily::new(
        times.clone(),
        subsets
            .iter()
            .map(|s| markov_chain_distribution(&chain, &times, s))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let control_oracle = DistributionFamily::new(
        times.clone(),
        subsets
            .iter()
            .map(|s| {
                sequential_markov_distribution(
                    &chain.initial,
                    &chain.control_links,
                    &times,
                    &bases,
                    s,
                )
            })
            .collect::<Result<Vec<_>>>()?,
    )?;
    let chain_name = "classical Markov chain enumeration";
    let seq_name = "sequential density-matrix simulation";
    let ex = vec![
        Expectation {
            query: "dephasing: measured statistics vs Markov chain".into(),
            expected: 0.0,
            actual: max_member_gap(&measured, &chain_oracle),
            tolerance: 1e-12,
            provenance: derived(chain_name),
        },
        Expectation {
            query: "dephasing: isClassical max deviation".into(),
            expected: check_ket(&chain_oracle, 1e-9).max_deviation(),
            actual: is_classical(&classical, &bases, 1e-9)?.max_deviation(),
            tolerance: 1e-9,
            provenance: derived(chain_name),
        },
        Expectation {
            query: "control: measured statistics vs simulation".into(),
            expected: 0.0,
            actual: max_member_gap(&control_measured, &control_oracle),
            tolerance: 1e-12,
            provenance: derived(seq_name),
        },
        Expectation {
            query: "control: isClassical max deviation".into(),
            expected: check_ket(&control_oracle, 1e-9).max_deviation(),
            actual: is_classical(&control, &bases, 1e-9)?.max_deviation(),
            tolerance: 1e-10,
            provenance: derived(seq_name),
        },
        Expectation {
            query: "dephasing: checkGET max deviation".into(),
            expected: 0.0,
            actual: check_get(&classical, 1e-10)?.max_deviation(),
            tolerance: 1e-10,
            provenance: Provenance::Structural,
        },
        Expectation {
            query: "control: checkGET max deviation".into(),
            expected: 0.0,
            actual: check_get(&control, 1e-10)?.max_deviation(),
            tolerance: 1e-10,
            provenance: Provenance::Structural,
        },
    ];
    Ok(Scenario {
        name: "dephasing-markov".into(),
        params: ScenarioParams {
            seed,
            steps: Some(steps),
            basis: Some(basis.clone()),
            ..ScenarioParams::default()
        },
        comb_families: vec![("dephasing".into(), classical), ("control".into(), control)],
        distribution_families: vec![
            ("dephasing-measured".into(), measured),
            ("control-measured".into(), control_measured),
        ],
        expectations: ex,
    })
}

/// Comb of the dephasing chain over `t1..t_steps`, for callers that only
/// need the full-time object.
pub fn dephasing_comb(chain: &DephasingChain, control: bool) -> Result<Comb> {
    let times = TimeSet::standard(chain.links.len() + 1);
    let links = if control {
        &chain.control_links
    } else {
        &chain.links
    };
    from_markov_chain(&chain.initial, links, &times)
}
