//! Laboratory for weighted-tree bounds, the perturbative flow hierarchy of a
//! massless quartic scalar, classical BV/BRST algebra and the special
//! functions behind the bound estimates.

pub mod bounds;
pub mod brstbv;
pub mod cli;
pub mod flow;
pub mod kinematics;
pub mod quad;
pub mod specialfns;
pub mod theory;
pub mod tree_inequalities;
pub mod trees;
