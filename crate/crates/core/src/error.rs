use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("box too dense: rejection sampling gave up after {attempts} attempts")]
    BoxTooDense { attempts: usize },

    #[error("singular constraint between agents {i} and {j}: coincident positions")]
    SingularConstraint { i: usize, j: usize },

    #[error("constraint normal must be nonzero")]
    ZeroNormal,

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("solver stall after {iterations} iterations")]
    SolverStall { iterations: usize },

    #[error("agent {agent}: {source}")]
    Agent {
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("instance too large for enumeration: {0}")]
    SizeCap(String),

    #[error("jointly infeasible: no coverage pattern admits a feasible input")]
    JointlyInfeasible,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn for_agent(self, agent: usize) -> Self {
        Error::Agent {
            agent,
            source: Box::new(self),
        }
    }
}
