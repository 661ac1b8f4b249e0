pub mod canon;
pub mod certifier;
pub mod cli;
pub mod corpus;
pub mod deriv;
pub mod eval;
pub mod expr;
pub mod interval;
pub mod parser;
pub mod refuter;
pub mod solver;
pub mod suite;
