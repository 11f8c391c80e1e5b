//! Command implementations behind the `mscl` binary. Each `cmd_*` returns
//! the process exit status; the matching `run_*` returns a `Result`.

mod commands;
mod config;

pub use commands::{
    cmd_eval, cmd_gradcheck, cmd_synth, cmd_train, content_hash, exit_code, run_eval, run_gradcheck, run_synth,
    run_train, GradcheckSummary, TrainOutputs, EMBEDDINGS_FILE, EVAL_FILE, GRADCHECK_TOLERANCE, HISTORY_FILE,
    MANIFEST_FILE,
};
pub use config::RunConfig;
