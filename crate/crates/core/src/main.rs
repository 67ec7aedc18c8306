use std::io::{self, Write};

fn main() {
    let stdin = io::stdin();
    let (mut out, mut err) = (io::stdout().lock(), io::stderr());
    let code = eem::cli::dispatch(
        std::env::args_os(),
        &mut eem::cli::Io {
            input: &mut stdin.lock(),
            out: &mut out,
            err: &mut err,
        },
    );
    let _ = out.flush();
    std::process::exit(code);
}
