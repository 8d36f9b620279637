use std::process::ExitCode;

// BLAS stays single-threaded: parallelism comes from rayon, and a fixed
// BLAS thread count keeps floating-point reductions identical across runs.
extern "C" {
    fn openblas_set_num_threads(n: std::ffi::c_int);
}

fn main() -> ExitCode {
    // SAFETY: plain setter exported by the linked OpenBLAS.
    unsafe { openblas_set_num_threads(1) };
    ExitCode::from(opsize_cli::main_with_args(std::env::args_os()))
}
