use std::process::ExitCode;

const LOG_VAR: &str = "RAMAN_MODES_LOG";

fn init_logging() -> Result<(), String> {
    let level = match std::env::var(LOG_VAR) {
        Ok(v) => match v.trim() {
            "error" => log::LevelFilter::Error,
            "info" => log::LevelFilter::Info,
            "debug" => log::LevelFilter::Debug,
            other => {
                return Err(format!(
                    "{LOG_VAR} must be error, info or debug, got '{other}'"
                ))
            }
        },
        Err(_) => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    Ok(())
}

fn main() -> ExitCode {
    if let Err(msg) = init_logging() {
        eprintln!("raman-modes: {msg}");
        return ExitCode::from(1);
    }
    ExitCode::from(raman_modes::main_with(std::env::args_os()) as u8)
}
