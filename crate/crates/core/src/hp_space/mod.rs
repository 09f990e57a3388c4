//! Reference elements, quadrature and the global degree-of-freedom map.

mod dofmap;
mod quadrature;
mod reference;

pub use dofmap::{build_dofmap, DofClass, DofMap, DofRecord, SideTrace, TraceSpan};
pub use quadrature::{gauss_legendre, quadrature, DomainKind, QuadratureRule};
pub use reference::{lagrange_1d, reference_basis, ReferenceElement};
