//! Text preparation, dataset assembly, report classifiers, self-training and
//! evaluation for gunfire report detection in social media posts.

pub mod classify;
pub mod corpus;
pub mod eval;
mod exec;
pub mod selftrain;
pub mod textprep;

pub use exec::Execution;
