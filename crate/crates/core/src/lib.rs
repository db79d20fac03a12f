pub mod fuzz;
pub mod hypercube;
mod index_serde;
pub mod oracle;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod stl;
pub mod synthesis;
pub mod team;
