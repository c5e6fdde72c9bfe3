pub mod cli;
pub mod corpus;
pub mod docalculus;
pub mod dsl;
pub mod expr;
pub mod graph;
pub mod identify;
pub mod mediation;
pub mod oracle;
pub mod scalar;
pub mod transport;

/// Floating-point model.
pub type Scm = oracle::DiscreteScm<f64>;
/// Exact rational model.
pub type ExactScm = oracle::DiscreteScm<num_rational::BigRational>;

#[cfg(test)]
pub(crate) mod testutil;
