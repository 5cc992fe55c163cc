use std::process::ExitCode;

fn main() -> ExitCode {
    dms_battery_cli::main_with(std::env::args_os())
}
