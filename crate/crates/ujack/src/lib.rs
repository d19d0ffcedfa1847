//! Finite-sample inference for suprema of non-degenerate U-processes via
//! the jackknife multiplier bootstrap.
//!
//! The pipeline: build a leave-one-out jackknife table for a family of
//! localized kernels ([`ustat`]), draw conditional-Gaussian suprema from
//! it ([`jmb`]), and compare the studentized observed supremum against
//! their quantiles ([`stattests`]). A brute-force Hoeffding-projection oracle
//! over discrete distributions ([`hoeffding`]) and a Monte Carlo size
//! harness ([`sim`]) back the numerical claims. The `ujack` binary wires
//! everything behind `test`, `simulate`, `oracle`, and `bootstrap-draws`
//! subcommands ([`cli`]).

pub mod cli;
pub mod hoeffding;
pub mod jmb;
pub mod kernels;
pub mod rng;
pub mod sample;
pub mod sim;
pub mod stattests;
pub mod ustat;
