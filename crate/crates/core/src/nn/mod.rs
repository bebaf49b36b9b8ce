//! Actor-critic network with a hand-written backward pass, action
//! distributions with the ensemble averaging rules, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod dist;
pub mod net;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_nets, save_nets, Checkpoint};
pub use dist::{average_gaussian, average_scores, mean_scores, CategoricalDist, GaussianDist};
pub use net::{embed_observation, ActorCriticNet, Architecture, ForwardCache, ParamTensor};
