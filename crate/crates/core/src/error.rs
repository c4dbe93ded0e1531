use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("value {value} does not fit column {column}")]
    TypeMismatch { column: String, value: String },
    #[error("malformed cell encoding for column {0}")]
    MalformedCell(String),
    #[error("bad partition magic")]
    BadMagic,
    #[error("unsupported partition format version {0}")]
    UnsupportedVersion(u16),
    #[error("partition file truncated")]
    Truncated,
    #[error("trailing bytes after partition data")]
    TrailingBytes,
    #[error("partition schema does not match the manifest: {0}")]
    SchemaMismatch(String),
    #[error("partition id must be at least 1")]
    ZeroPartitionId,
    #[error("csv: {0}")]
    Csv(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("column {0} is used in WHERE but not projected")]
    NotProjected(String),
    #[error("operator {op} not allowed on string column {column}")]
    StringOperator { column: String, op: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("disjunctive normal form has {clauses} clauses, above the cap of {cap}; use a larger branching factor or fewer ANDed inequalities")]
    Blowup { clauses: usize, cap: usize },
    #[error("view expands to {values} wildcard values, above the cap of {cap}")]
    ValueBlowup { values: usize, cap: usize },
    #[error("view does not match family: {0}")]
    ViewMismatch(String),
    #[error("wildcard ?{0}: {1}")]
    Binding(String, String),
    #[error("malformed canonical form: {0}")]
    Decode(String),
    #[error("invalid planner parameter: {0}")]
    Param(String),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("family {0} already instantiated in partition")]
    DuplicateFamily(u32),
    #[error("family {0} not instantiated in partition")]
    MissingFamily(u32),
    #[error("family references column index {0} outside the schema")]
    UnknownColumn(usize),
    #[error("corrupted partition: {0}")]
    Corrupted(String),
    #[error("tag length {0} outside 1..=16")]
    TagLength(usize),
    #[error("view keys were minted for tag length {keys}, family uses {family}")]
    TagLengthMismatch { keys: usize, family: usize },
    #[error("key blob: {0}")]
    KeyBlob(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("storage: {0}")]
    Storage(String),
    #[error("{0}")]
    Orchestrator(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
