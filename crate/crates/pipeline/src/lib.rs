//! Agents, prompt resources and the optimization loop.

pub mod agents;
pub mod orchestrator;
pub mod prompt;
pub mod sim;

pub use agents::{AgentError, AgentSettings, AgentTemperatures, Agents, SeedEntry, SeedPromptSet, Synthesis, TeacherInput, TeacherOutput};
pub use orchestrator::{
    BatchOutcome, FinalPrompt, FinalPromptProvenance, IterationRecord, LoopConfig, LoopSemantics, OptimizationTrace,
    Orchestrator, OrchestratorError, TerminationReason, TraceDocument,
};
pub use prompt::{AgentPrompt, PromptError, PromptSet};
pub use sim::{register_sim, SimModel, SIM_BACKEND};
