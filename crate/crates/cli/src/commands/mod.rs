pub mod assemble;
pub mod eval;
pub mod impact;
pub mod prep;
pub mod pseudo;
pub mod serve;
pub mod train;
