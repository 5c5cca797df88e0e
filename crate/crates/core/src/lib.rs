pub mod harness;
pub mod models;
pub mod optim;
pub mod seed;
pub mod sim;
pub mod vecmath;
