use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("unknown element `{0}`")]
    UnknownElement(String),

    #[error("cycle in parent map through `{0}`")]
    Cycle(String),

    #[error("operation requires a tree, got a {0}")]
    NotATree(&'static str),

    #[error("operation requires a chain, got a {0}")]
    NotAChain(&'static str),

    #[error("not an initial segment: {0}")]
    NotInitialSegment(String),

    #[error("not a branch: {0}")]
    NotABranch(String),

    #[error("tree has no root")]
    NoRoot,

    #[error("invalid embedding frame: {0}")]
    InvalidFrame(String),

    #[error("graft slot ({node}, {dir}) is occupied")]
    OccupiedSlot { node: String, dir: u8 },

    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),

    #[error("arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("cannot reduce a rank-{rank} theory to depth {depth}")]
    DepthTooLarge { rank: usize, depth: usize },

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("malformed theory encoding: {0}")]
    MalformedTheory(String),

    #[error("enumeration refused: {0}")]
    BoundsExceeded(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("insufficient branching at level {level}: {detail}")]
    InsufficientBranching { level: usize, detail: String },

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
