//! Time-domain Maxwell solver on simplicial 3-complexes with scalar wave
//! impedance, and the boundary-control machinery built on top of it:
//! admittance maps, interior inner-product recovery from lateral Cauchy
//! data, controllability and slicing tests, travel-time reconstruction,
//! impedance estimation, gauge verification and WKB transport solutions.

pub mod blago;
pub mod control;
pub mod focusing;
pub mod dec;
pub mod dynamics;
pub mod material;
pub mod mesh;
pub mod sparse;

pub use dec::{BcKind, BlockVec, DecOperators, MaxwellSystem};
pub use material::{ImpedanceGeometry, MaterialField};
pub use mesh::SimplicialComplex3;
