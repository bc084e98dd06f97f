use std::time::{SystemTime, UNIX_EPOCH};

/// Unix time, pinned by `SOURCE_DATE_EPOCH` when set.
fn now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let code =
        ctxground_cli::main_with(&args, &mut std::io::stdout(), &mut std::io::stderr(), &now);
    std::process::exit(code);
}
