pub mod basis;
pub mod fem;
pub mod gagliardo;
pub mod lift;
pub mod linalg;
pub mod mesh;
pub mod multilinear;
pub mod norms;
pub mod quadrature;
pub mod solvers;
pub mod quasi;
pub mod harness;
