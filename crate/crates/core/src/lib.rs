//! Numerical stochastic calculus by regularization.
//!
//! The crate builds discrete paths of weak Dirichlet processes, evaluates
//! ε-regularized covariations and forward integrals on them, represents
//! stochastic flows through their local characteristics, and checks the
//! Itô-Ventzell decomposition `F(t, X_t) = F(0, X_0) + ∫γ dW + ∫F_x dM + B`
//! term by term over Monte Carlo ensembles.

pub mod ensemble;
pub mod error;
pub mod expr;
pub mod flowkit;
pub mod pathkit;
pub mod proofterms;
pub mod quadrature;
pub mod regint;
pub mod rng;
pub mod sum;
pub mod ucpstats;
pub mod ventzell;

pub use error::{Error, Result};
