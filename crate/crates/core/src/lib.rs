//! Preprocessing-and-coding pipeline: a two-pass block-matching 3D
//! collaborative denoiser, a back-propagation network that gates residual
//! coding, and a small intra block codec for measuring rate and distortion.

pub mod block_engine;
pub mod bp_net;
pub mod collab_filter;
pub mod fixtures;
pub mod frame_io;
pub mod pipeline;
pub mod toy_codec;
pub mod transforms;
