pub mod nn;
pub mod env;
pub mod pareto;
pub mod gflownet;
pub mod oracle;
pub mod seeds;
pub mod trainer;
pub mod surrogate;
pub mod mobo;
