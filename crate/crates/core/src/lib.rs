pub mod cloud;
pub mod config;
pub mod edge;
pub mod env;
pub mod epoch;
pub mod event;
pub mod fog;
pub mod geo;
pub mod log;
pub mod run;
pub mod scenario;
