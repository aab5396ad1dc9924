pub mod analyze;
pub mod compress;
pub mod netsim;
pub mod report;
pub mod sweep;
pub mod train;
