//! Sandboxed execution and verification of model-generated programs.
//!
//! The modules follow the life of a submission: [`extract`] finds the program
//! in a raw response, [`engine`] runs it against its tests under resource
//! limits, [`verify`] turns outcomes into verdicts (exact match, then special
//! judge), and [`pipeline`] ties them together. [`synth`] builds and vets
//! special judges with a language model; [`eval`] scores benchmark runs.

pub mod engine;
pub mod eval;
pub mod extract;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod synth;
pub mod verify;

pub use model::{
    parse_report, parse_submission, serialize_report, ExecStatus, ExecutionOutcome, JudgeProgram, ModelError,
    ResourceLimits, Stage, SubmissionRequest, TestCase, TestReport, TestType, ToleranceSpec, Verdict,
    VerificationReport, SCHEMA_VERSION,
};
