//! Constrained object allocation: constraints, preferences, mechanism
//! families, exhaustive axiom checkers and a brute-force search oracle.

pub mod blocks;
pub mod checks;
pub mod error;
pub mod fixtures;
pub mod mechanism;
pub mod model;
pub mod preferences;
pub mod search;

pub use blocks::BlockDecomposition;
pub use checks::{Axiom, Deviation, Engine, Verdict, Witness};
pub use error::{Error, Result};
pub use mechanism::{tabulate, Mechanism, TabulatedMechanism};
pub use model::{AgentId, Allocation, BuiltinKind, Constraint, ObjectId, Suballocation};
pub use preferences::{Preference, Profile, ProfileSpace};
pub use search::{search, set_equal, AxiomSet, MechanismSet, SearchBudget, SearchSpec};
