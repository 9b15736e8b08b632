//! Benchmark environments.

pub mod cartpole;
pub mod confounded;
pub mod offline;
pub mod spurious;

pub use cartpole::{cartpole_accelerations, cartpole_step, make_variant, CartPole, CartPoleParams, CartPoleVariant};
pub use confounded::{ConfoundedBandit, ConfoundedBlackjack, ConfoundedEpisodeState, ConfoundedFrozenLake};
pub use offline::{gen_dataset, reward_fn, true_value, LoggedDataset, LoggedSample, OfflineEnv, OfflineEnvSpec};
pub use spurious::{augment_spurious, SpuriousCartPole, SpuriousConfig, SpuriousMode};

use crate::envcore::{EnvError, Environment};

pub const CONFOUNDED_ENVS: [&str; 4] =
    ["confounded-bandit", "confounded-bandit-hard", "confounded-frozenlake", "confounded-blackjack"];

/// Build an online environment by CLI name. `cartpole-spurious:<variant>`
/// takes its mode from `mode`; the other names ignore it.
pub fn make_env(name: &str, mode: SpuriousMode) -> Result<Box<dyn Environment>, EnvError> {
    if let Some(variant) = name.strip_prefix("cartpole-spurious:") {
        return Ok(Box::new(SpuriousCartPole::new(CartPole::variant(variant)?, SpuriousConfig::new(mode))));
    }
    if let Some(variant) = name.strip_prefix("cartpole:") {
        return Ok(Box::new(CartPole::variant(variant)?));
    }
    Ok(match name {
        "cartpole" => Box::new(CartPole::new(CartPoleParams::default())),
        "confounded-bandit" => Box::new(ConfoundedBandit::new()),
        "confounded-bandit-hard" => Box::new(ConfoundedBandit::hard()),
        "confounded-frozenlake" => Box::new(ConfoundedFrozenLake::new()),
        "confounded-blackjack" => Box::new(ConfoundedBlackjack::new()),
        _ => return Err(EnvError::UnknownEnv(name.to_string())),
    })
}
