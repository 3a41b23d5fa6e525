pub mod body;
pub mod cvae;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod intention;
pub mod latent_opt;
pub mod nn;
pub mod rollout;
pub mod seed;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/body_model.md")]
    mod body_model {}
    #[doc = include_str!("../../../book/src/intention.md")]
    mod intention {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/rollout.md")]
    mod rollout {}
    #[doc = include_str!("../../../book/src/latent_opt.md")]
    mod latent_opt {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
