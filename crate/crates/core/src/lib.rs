pub mod basis;
pub mod carleman;
pub mod cli;
pub mod collision;
pub mod error;
pub mod forward;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod lsq;
pub mod picard;
