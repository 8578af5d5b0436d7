pub mod dependency;
pub mod evm;
pub mod harness;
pub mod ingest;
pub mod pruner;
pub mod symexec;
pub mod verifier;
pub mod word;
