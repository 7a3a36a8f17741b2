pub mod cli;
pub mod error;
pub mod glasso;
pub mod graph;
pub mod metrics;
pub mod npn;
pub mod penalty;
pub mod sequential;
pub mod simgen;
pub mod spd;
