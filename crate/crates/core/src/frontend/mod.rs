//! Frontend: kernel-language parsing, OpenMP/OpenACC directive parsing, and
//! CUDA chevron-launch recognition.

pub mod directive;
pub mod lexer;
pub mod parser;

pub use directive::{parse_acc_directive, parse_omp_directive, render_directive};
pub use parser::{parse_kernel_source, recognize_cuda_launch};
