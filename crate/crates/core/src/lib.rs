pub mod analysis;
pub mod energy;
pub mod hcir;
pub mod interp;
pub mod ir;
pub mod recsolve;
pub mod report;
