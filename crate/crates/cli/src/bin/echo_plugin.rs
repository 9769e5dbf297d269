//! Reference plug-in that returns each sample unchanged as its attribution.

use std::path::PathBuf;
use std::process::ExitCode;

use exact_core::dataset::{attribution_file_name, sample_file_name};
use exact_core::explainers::{PluginMeta, META_FILE};
use exact_core::foundation::{read_grid_file, write_grid_file};

fn run(input: PathBuf, output: PathBuf) -> Result<(), String> {
    let meta: PluginMeta = serde_json::from_str(&std::fs::read_to_string(input.join(META_FILE)).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    for i in 0..meta.count {
        let g = read_grid_file(input.join(sample_file_name(i))).map_err(|e| e.to_string())?;
        write_grid_file(&g, output.join(attribution_file_name(i))).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<PathBuf> = std::env::args_os().skip(1).map(PathBuf::from).collect();
    let [_model, input, output] = <[PathBuf; 3]>::try_from(args).unwrap_or_else(|_| {
        eprintln!("usage: exact-echo-plugin MODEL_DIR INPUT_DIR OUTPUT_DIR");
        std::process::exit(2)
    });
    match run(input, output) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("exact-echo-plugin: {e}");
            ExitCode::FAILURE
        }
    }
}
