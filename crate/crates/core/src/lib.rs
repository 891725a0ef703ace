pub mod backdoor;
pub mod error;
pub mod nn;
pub mod rng;
pub mod text;
pub mod toy;
pub mod train;

pub use error::{Error, Result};
pub use nn::{EncoderConfig, EncoderParams, ForwardTrace};
pub use text::{TokenSeq, Vocab};
