//! Exact computations on moduli spaces of rational curves in twistor spaces:
//! splitting of holomorphic cochains, Birkhoff factorization of patching
//! matrices, the induced frames and connections, and Newton-Cartan checks.

pub mod symbolic;
pub mod bundle;
pub mod splitting;
pub mod moduli;
pub mod geometry;
pub mod connection;
pub mod nc;
