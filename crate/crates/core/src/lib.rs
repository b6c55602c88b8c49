pub mod bundle;
pub mod commands;
pub mod crossed;
pub mod error;
pub mod forms;
pub mod graded;
pub mod holonomy;
pub mod poly;
pub mod quadrature;
pub mod random;
pub mod report;
pub mod scenario;
pub mod simplex;
