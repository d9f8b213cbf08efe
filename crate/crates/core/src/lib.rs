pub mod benchmarks;
pub mod cma;
pub mod engine;
pub mod external;
pub mod protocol;
pub mod rng;
pub mod runlog;
pub mod space;
pub mod kde;
pub mod report;
