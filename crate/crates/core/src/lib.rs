//! Executable model of the Algorand BBA* agreement protocol and a small
//! toolkit for analysing its state space: LTS generation, slicing,
//! bisimulation minimization and comparison, deadlock search and an
//! inevitability checker.

pub mod check;
pub mod equiv;
pub mod explore;
pub mod kernel;
pub mod lts;
pub mod model;
