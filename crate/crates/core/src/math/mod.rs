//! Numerical building blocks shared by the models.

pub mod interp;
pub mod lsq;
pub mod normal;
pub mod qp;
pub mod quadrature;
pub mod roots;
