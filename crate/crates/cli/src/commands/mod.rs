pub mod bench;
pub mod error;
pub mod figure;
pub mod normalize;
pub mod pipeline;

pub use bench::cmd_bench;
pub use error::cmd_error;
pub use figure::cmd_figure;
pub use normalize::cmd_normalize;
pub use pipeline::cmd_pipeline;
