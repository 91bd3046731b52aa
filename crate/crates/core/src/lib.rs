//! Anatomy-preserving generation of multi-class brain segmentation masks.
//!
//! The pipeline has two stages. A mask-only variational autoencoder
//! ([`vae`]) learns a latent manifold of plausible label maps; a
//! prompt-conditioned denoising diffusion model ([`diffusion`]) then samples
//! new latent codes for a binary lesion prompt, which the frozen decoder turns
//! back into discrete masks.
//!
//! Supporting modules cover the label space ([`label`]), a synthetic phantom
//! corpus ([`phantom`]), corpus handling and weighted sampling ([`dataset`]),
//! evaluation ([`eval`]), and checkpoint persistence ([`store`]).

pub mod config;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod label;
pub mod nn;
pub mod phantom;
pub mod rng;
pub mod store;
pub mod vae;

pub use error::{Error, Result};
pub use label::{ClassCatalog, ClassId, LabelMap, LogitField, OneHotMask};
