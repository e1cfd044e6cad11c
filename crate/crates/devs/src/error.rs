use crate::model::ModelError;
use crate::time::Time;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StructureError {
    #[error("component name `{0}` is empty or has surrounding whitespace")]
    InvalidName(String),
    #[error("duplicate component `{name}` in `{parent}`")]
    DuplicateComponent { parent: String, name: String },
    #[error("duplicate port `{port}` on `{model}`")]
    DuplicatePort { model: String, port: String },
    #[error("in `{parent}`: coupling `{coupling}` references unknown component `{component}`")]
    UnknownComponent { parent: String, coupling: String, component: String },
    #[error("in `{parent}`: coupling `{coupling}` references unknown port `{port}`")]
    UnknownPort { parent: String, coupling: String, port: String },
    #[error("in `{parent}`: coupling `{coupling}` connects `{component}` to itself")]
    SelfLoop { parent: String, coupling: String, component: String },
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("malformed model: {0}")]
    Structure(#[from] StructureError),
    #[error("transition of `{path}` failed at t={time}: {source}")]
    Transition {
        path: String,
        time: Time,
        #[source]
        source: ModelError,
    },
    #[error("zeno behavior: virtual time stuck at t={time} for {iterations} consecutive cycles")]
    Zeno { time: Time, iterations: u64 },
    #[error("invalid clock: {0}")]
    Clock(String),
    #[error("injection targets unknown root input port `{0}`")]
    UnknownInjectionPort(String),
}
