//! Graph-based semi-supervised classification with spectral kernels learned
//! from the labels, including a variant with no free parameters.

pub mod dataset;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod model_io;
pub mod oracle;
pub mod rls;
pub mod skl;
pub mod verify;

pub use dataset::{load_dataset, DataFormat, Dataset};
pub use eigen::{eig_sym, EigenSystem};
pub use error::{ErrorKind, Result, SklError};
pub use experiment::{run_experiment, ExperimentConfig, Report};
pub use graph::{normalized_laplacian, similarity_graph, Graph, Laplacian};
pub use skl::{fit_skl, fit_skl_kta, SklModel, TrainingLabels};
