//! Two-fermion wavefunctions as matrix product states: the pairing normal
//! form and its explicit bond-dimension-three MPS, unfolding-rank
//! diagnostics, and DMRG with orbital optimization over Fock space.

pub mod error;
pub mod fock;
pub mod linalg;
pub mod mps;
pub mod pair;
pub mod rank;
pub mod hamiltonian;
pub mod dmrg;
pub mod fcidump;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fock.md")]
    mod fock {}
    #[doc = include_str!("../../../book/src/explicit-mps.md")]
    mod explicit_mps {}
    #[doc = include_str!("../../../book/src/ranks.md")]
    mod ranks {}
    #[doc = include_str!("../../../book/src/dmrg.md")]
    mod dmrg {}
    #[doc = include_str!("../../../book/src/tail.md")]
    mod tail {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
