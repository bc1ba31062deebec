//! Settings come from, in order of precedence: command-line flags, `PREKMS_*`
//! environment variables, the config file, built-in defaults.
//!
//! The config file is TOML with flat keys:
//!
//! ```toml
//! home = "/home/alice/.prekms"   # base for the defaults below
//! identity = "identity.json"     # sealed keys, relative to home
//! state = "state.json"           # files, grants, policies, contacts
//! store = "store"                # content-addressed envelope store
//! network = "network"            # local network directory
//! endpoint = "http://127.0.0.1:7400"  # remote network; wins over `network`
//! passphrase_file = "/run/secrets/prekms"
//! duration = 86400               # default share duration, seconds
//! fee = 100
//! collateral = 50
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;

pub const ENV_PREFIX: &str = "PREKMS_";
pub const DEFAULT_DURATION_SECS: u64 = 86_400;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub home: Option<PathBuf>,
    pub identity: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub passphrase_file: Option<PathBuf>,
    pub duration: Option<u64>,
    pub fee: Option<u64>,
    pub collateral: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}

/// Flags that may also come from the environment or the config file.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct GlobalArgs {
    /// Config file [default: <home>/config.toml when present]
    #[arg(long, global = true, env = "PREKMS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Base directory for identity, state, store and network
    #[arg(long, global = true, env = "PREKMS_HOME")]
    pub home: Option<PathBuf>,
    #[arg(long, global = true, env = "PREKMS_IDENTITY")]
    pub identity: Option<PathBuf>,
    #[arg(long, global = true, env = "PREKMS_STATE")]
    pub state: Option<PathBuf>,
    /// Envelope store directory
    #[arg(long, global = true, env = "PREKMS_STORE")]
    pub store: Option<PathBuf>,
    /// Local network directory, as created by `node init`
    #[arg(long, global = true, env = "PREKMS_NETWORK")]
    pub network: Option<PathBuf>,
    /// URL of a network served by `node serve`
    #[arg(long, global = true, env = "PREKMS_ENDPOINT")]
    pub endpoint: Option<String>,
    /// File whose first line is the identity passphrase
    #[arg(long, global = true, env = "PREKMS_PASSPHRASE_FILE")]
    pub passphrase_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    Dir(PathBuf),
    Http(String),
}

#[derive(Clone, Debug)]
pub struct Settings {
    pub identity: PathBuf,
    pub state: PathBuf,
    pub store: PathBuf,
    pub backend: Backend,
    pub passphrase_file: Option<PathBuf>,
    pub duration: u64,
    pub fee: u64,
    pub collateral: u64,
}

fn env_u64(key: &str) -> Result<Option<u64>, CliError> {
    match std::env::var(format!("{ENV_PREFIX}{key}")) {
        Ok(v) => {
            v.trim().parse().map(Some).map_err(|_| CliError::usage(format!("{ENV_PREFIX}{key}: not a number: {v:?}")))
        }
        Err(_) => Ok(None),
    }
}

fn default_home() -> PathBuf {
    std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")).join(".prekms")
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self, CliError> {
        let home_hint = args.home.clone().unwrap_or_else(default_home);
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => {
                let p = home_hint.join("config.toml");
                if p.exists() {
                    FileConfig::load(&p)?
                } else {
                    FileConfig::default()
                }
            }
        };
        let home = args.home.clone().or(file.home).unwrap_or(home_hint);
        let under = |p: PathBuf| if p.is_absolute() { p } else { home.join(p) };
        let pick = |flag: &Option<PathBuf>, from_file: Option<PathBuf>, default: &str| {
            flag.clone().unwrap_or_else(|| under(from_file.unwrap_or_else(|| default.into())))
        };
        let backend = match args.endpoint.clone().or(file.endpoint) {
            Some(url) => Backend::Http(url.trim_end_matches('/').to_string()),
            None => Backend::Dir(pick(&args.network, file.network, "network")),
        };
        Ok(Settings {
            identity: pick(&args.identity, file.identity, "identity.json"),
            state: pick(&args.state, file.state, "state.json"),
            store: pick(&args.store, file.store, "store"),
            backend,
            passphrase_file: args.passphrase_file.clone().or(file.passphrase_file.map(&under)),
            duration: env_u64("DURATION")?.or(file.duration).unwrap_or(DEFAULT_DURATION_SECS),
            fee: env_u64("FEE")?.or(file.fee).unwrap_or(100),
            collateral: env_u64("COLLATERAL")?.or(file.collateral).unwrap_or(50),
        })
    }

    /// The passphrase file, `PREKMS_PASSPHRASE`, or a terminal prompt.
    pub fn passphrase(&self, confirm: bool) -> Result<String, CliError> {
        if let Some(path) = &self.passphrase_file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("passphrase file: {e}")))?;
            return Ok(text.lines().next().unwrap_or("").to_string());
        }
        if let Ok(p) = std::env::var(format!("{ENV_PREFIX}PASSPHRASE")) {
            return Ok(p);
        }
        let first = rpassword::prompt_password("passphrase: ")
            .map_err(|_| CliError::usage(format!("no passphrase: set {ENV_PREFIX}PASSPHRASE or --passphrase-file")))?;
        if confirm && rpassword::prompt_password("again: ").map_err(|e| CliError::usage(e.to_string()))? != first {
            return Err(CliError::usage("passphrases differ"));
        }
        Ok(first)
    }
}
