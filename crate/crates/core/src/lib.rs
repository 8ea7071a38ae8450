#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod ambient;
pub mod curvature;
pub mod diagnostics;
pub mod flow;
pub mod geom;
pub mod gradient;
pub mod mesh;
pub mod pqcalc;
pub mod real;
