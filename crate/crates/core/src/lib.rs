pub mod cli;
pub mod corpus;
pub mod detect;
pub mod eval;
pub mod patch;
pub mod mine;
pub mod model;
pub mod rules;
pub mod util;
