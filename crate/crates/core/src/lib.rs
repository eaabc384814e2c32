pub mod cell;
pub mod data;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod network;
pub mod numcore;
pub mod seeding;
pub mod training;

pub use error::{Error, Result};
