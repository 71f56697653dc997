pub mod eval;
pub mod gen;
pub mod report;
pub mod tokenize;
pub mod train;
