//! Independent oracles and generators backing the acceptance suite. Every
//! oracle recomputes its answer with different mechanics than the library
//! (path enumeration vs frontier BFS, flat re-sweeps vs graph worklists,
//! all-pairs scans vs inverted postings, normalized-disagreement alpha vs
//! the closed form) so agreement is evidence, not tautology.

pub mod alpha_oracle;
pub mod depgraph_oracle;
pub mod genprog;
pub mod match_oracle;
pub mod stats_oracle;
pub mod taint_oracle;
