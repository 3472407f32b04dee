//! Linear mode connectivity of small networks trained from a shared
//! initialization under different SGD noise.

pub mod correspondence;
pub mod data;
pub mod harness;
pub mod lmc;
pub mod nn;
pub mod numerics;
pub mod optim;
