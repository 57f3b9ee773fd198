//! Shared numerical kernels: adaptive Runge-Kutta, Gauss-Legendre panels,
//! bracketed root finding, monotone interpolation, Laplace inversion, and
//! deterministic summation.

pub mod interp;
pub mod laplace;
pub mod ode;
pub mod quadrature;
pub mod roots;
pub mod summation;
