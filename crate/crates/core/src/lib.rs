pub mod baselines;
pub mod experiments;
pub mod learning;
pub mod membership;
pub mod message;
pub mod model;
pub mod protocol;
pub mod sampler;
pub mod simnet;
