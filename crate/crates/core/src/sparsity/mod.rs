//! Group elastic net on layer-0 filters, the cumulative L1 update, and
//! small solvers for the overparameterisation identities.

mod groups;
mod overparam;
mod penalty;

pub use groups::{channel_norms, Group, GroupView};
pub use overparam::{
    closed_form_split, overparam_scalar_identity, overparam_vector_equivalence, sum_of_norms_minimiser,
    OverparamComparison, OverparamOptions, Quadratic, Split,
};
pub use penalty::{cumulative_l1_update, elastic_net_penalty, group_soft_threshold, CumulativePenaltyState};
