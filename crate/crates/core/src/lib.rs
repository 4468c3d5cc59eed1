//! Variance-reduced stochastic gradient methods for sparse regularized
//! logistic regression: SVRG, SAGA, SAG, GD and hybrid schedules, serial and
//! lock-free asynchronous solvers, linear-rate certificates and an
//! experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod kernel;
pub mod objective;
pub mod schedule;
pub mod solver;
pub mod parallel;
pub mod theory;
pub mod harness;
pub mod cli;
