pub mod audit;
pub mod engine;
pub mod linalg;
pub mod online;
pub mod oracle;
pub mod problem;
pub mod qp;
pub mod report;
pub mod sets;
