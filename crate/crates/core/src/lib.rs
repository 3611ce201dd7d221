pub mod bus;
pub mod classifier;
pub mod policy;
pub mod sim;
pub mod signal;
pub mod task;
