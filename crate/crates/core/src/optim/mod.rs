//! Update rules for sparse training: Adam, decay on pruned weights, flip
//! instrumentation and the decay-factor search.

mod adam;
mod decay;
mod flip;
mod lambda;

pub use adam::{adam_step, sgd_step, OptimizerState};
pub use decay::{masked_decay_gradient, srste_weight_decay, DecayConfig, DecayMode};
pub use flip::{block_flip_stats, flip_rate, BlockFlipTracker, BlockStats, FlipTrace};
pub use lambda::{
    decay_factor_search, flip_ratio, is_feasible, sampling_window, FlipProbe, LambdaEntry, LambdaReport,
    DEFAULT_CANDIDATES, EXTENDED_CANDIDATES, FEASIBLE_BAND,
};
