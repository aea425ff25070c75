pub mod adaptive;
pub mod algsolver;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod linearize;
pub mod mesh;
pub mod nonlinearity;
pub mod problems;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/meshes.md")]
    mod meshes {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/linearization.md")]
    mod linearization {}
    #[doc = include_str!("../../../book/src/multigrid.md")]
    mod multigrid {}
    #[doc = include_str!("../../../book/src/adaptive_loop.md")]
    mod adaptive_loop {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
