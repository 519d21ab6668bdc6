pub mod bessel;
pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod rates;
pub mod readout;
pub mod sweep;
