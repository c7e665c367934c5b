pub mod adjoint;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod device;
pub mod error;
pub mod generator;
pub mod local_opt;
pub mod optim;
pub mod oracle;
pub mod rcwa;
pub mod records;
pub mod trainer;
pub mod validation;
