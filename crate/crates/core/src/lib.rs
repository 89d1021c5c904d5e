pub mod abstract_engine;
pub mod cli;
pub mod concurrent;
pub mod corpus;
pub mod goal_engine;
pub mod store;
pub mod syntax;
pub mod term;
pub mod verify;
#[cfg(feature = "pitfalls")]
pub mod pitfalls;
