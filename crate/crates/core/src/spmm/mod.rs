//! Compressed 2:4 storage, simulated sparse products and the operand
//! layout planner.
//!
//! The kernels here are correctness simulators: they skip pruned positions
//! but make no performance claim.

mod compressed;
mod kernel;
mod layout;

pub use compressed::{compress, decompress, pack_nibble, unpack_nibble, Compressed24};
pub use kernel::{dense_flops, sparse_flops, spmm, spmm_right};
pub use layout::{layout_plan, LayoutPlan, LayoutQuery, Operand};
