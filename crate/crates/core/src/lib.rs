//! Multi-time stochastic processes with interventions.
//!
//! Process combs and instruments are represented in Choi form. The crate
//! contracts instrument sequences to probabilities, restricts combs to fewer
//! times by inserting identity maps, and checks consistency of comb families,
//! marginal consistency of classical distribution families, and classicality
//! of processes with memory.

pub mod channels;
pub mod combs;
pub mod consistency;
pub mod error;
pub mod format;
pub mod scenarios;
pub mod tensor;
pub mod time;

pub use channels::{
    apply_channel, choi_from_map_action, generalized_identity, projective_instrument,
    replacement_instrument, Basis, ChoiChannel, Instrument, Outcome, TracedFactor,
};
pub use combs::{
    check_causal_order, from_dilation, from_markov_chain, CausalReport, Comb, Dilation, SlotDims,
};
pub use consistency::{
    check_get, check_ket, classical_embed, idle_reduction, is_classical, verify_extension,
    CombFamily, ConsistencyReport, DistributionFamily, JointDistribution, FAMILY_TOL,
};
pub use error::{CombError, Result};
pub use tensor::{ComplexMatrix, LegStructure, C64, DEFAULT_TOL};
pub use time::{TimeLabel, TimeSet};
