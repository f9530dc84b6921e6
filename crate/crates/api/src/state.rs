use std::path::{Path, PathBuf};
use std::sync::RwLock;

use sensorchain_core::ledger::{
    append, create_block, create_genesis, load_path, persist_path, read_blocks, validate_chain,
    AuthorityKeys, AuthoritySet, BlockContent, ChainState, LedgerError, PredictionBlock,
};
use sensorchain_core::peer::{broadcast, spawn_network_from, DeliveryReport, PeerNode};
use sensorchain_core::SavedModel;
use tokio::sync::Mutex;

/// Service settings. Paths are read once at startup except `metrics_path`, which
/// is re-read on every request so a later `evaluate` run shows up without a restart.
#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub chain_path: PathBuf,
    pub model_path: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    /// Secret authority key file. Created with a fresh key when missing.
    pub authority_key: PathBuf,
    /// Bearer token for block creation. `None` disables `POST /api/blocks`.
    pub admin_token: Option<String>,
    pub peers: usize,
    /// Allowed CORS origins; empty allows any origin.
    pub cors_origins: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
    #[error("model {path}: {source}")]
    Model {
        path: PathBuf,
        source: sensorchain_core::model_file::ModelFileError,
    },
    #[error("admin token must not be empty")]
    EmptyToken,
}

/// Result of validating the stored chain at startup.
#[derive(Debug, Clone, PartialEq)]
pub struct Tamper {
    pub index: u64,
    pub reason: String,
}

/// Everything behind the single write path.
pub(crate) struct Writer {
    pub keys: AuthorityKeys,
    pub peers: Vec<PeerNode>,
    pub peer_count: usize,
}

pub struct AppState {
    snapshot: RwLock<ChainState>,
    pub(crate) writer: Mutex<Writer>,
    pub authorities: AuthoritySet,
    pub model: Option<SavedModel>,
    pub metrics_path: Option<PathBuf>,
    pub admin_token: Option<String>,
    chain_path: Option<PathBuf>,
    /// Set when the stored chain failed validation; writes are refused.
    pub startup_tamper: Option<Tamper>,
}

#[derive(Debug)]
pub(crate) enum CommitError {
    Ledger(LedgerError),
    Rejected(DeliveryReport),
    Persist(LedgerError),
}

fn now_unix() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs() as i64)
}

fn load_or_create_keys(path: &Path) -> Result<AuthorityKeys, LedgerError> {
    if path.exists() {
        return AuthorityKeys::load(path);
    }
    let keys = AuthorityKeys::generate("authority");
    keys.save(path, &public_key_path(path))?;
    tracing::info!(path = %path.display(), "generated a new authority key");
    Ok(keys)
}

/// `authority.key.json` → `authority.pub.json`; otherwise `<path>.pub.json`.
pub fn public_key_path(secret: &Path) -> PathBuf {
    let name = secret.file_name().and_then(|n| n.to_str()).unwrap_or("authority");
    let stem = name
        .strip_suffix(".key.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(name);
    secret.with_file_name(format!("{stem}.pub.json"))
}

impl AppState {
    /// Loads the key, chain and model named in `cfg`. A missing chain file starts a
    /// new chain; a chain that fails validation is still served, flagged as invalid.
    pub fn open(cfg: &ApiConfig) -> Result<AppState, StartupError> {
        if cfg.admin_token.as_deref() == Some("") {
            return Err(StartupError::EmptyToken);
        }
        let keys = load_or_create_keys(&cfg.authority_key)?;
        let authorities = keys.authority_set();
        let (chain, tamper) = if cfg.chain_path.exists() {
            match load_path(&cfg.chain_path, &authorities) {
                Ok(chain) => (chain, None),
                Err(LedgerError::CorruptChainFile { index, reason }) => {
                    tracing::error!(index, %reason, "stored chain failed validation; serving read-only");
                    let blocks = read_blocks(std::fs::File::open(&cfg.chain_path).map_err(|e| LedgerError::Io(e.to_string()))?)
                        .unwrap_or_default();
                    (ChainState::from_blocks_unchecked(blocks), Some(Tamper { index, reason }))
                }
                Err(e) => return Err(e.into()),
            }
        } else {
            let chain = ChainState::new(create_genesis(&keys, now_unix()), &authorities)?;
            persist_path(&chain, &cfg.chain_path)?;
            tracing::info!(path = %cfg.chain_path.display(), "started a new chain");
            (chain, None)
        };
        let model = match &cfg.model_path {
            Some(path) => Some(SavedModel::load(path).map_err(|source| StartupError::Model {
                path: path.clone(),
                source,
            })?),
            None => None,
        };
        let mut state = AppState::new(chain, keys, cfg.peers, model, cfg.admin_token.clone());
        state.chain_path = Some(cfg.chain_path.clone());
        state.metrics_path = cfg.metrics_path.clone();
        state.startup_tamper = tamper;
        Ok(state)
    }

    /// In-memory state with no backing files.
    pub fn new(
        chain: ChainState,
        keys: AuthorityKeys,
        peers: usize,
        model: Option<SavedModel>,
        admin_token: Option<String>,
    ) -> AppState {
        let authorities = keys.authority_set();
        AppState {
            writer: Mutex::new(Writer {
                peers: spawn_network_from(peers, authorities.clone(), &chain),
                peer_count: peers,
                keys,
            }),
            snapshot: RwLock::new(chain),
            authorities,
            model,
            metrics_path: None,
            admin_token,
            chain_path: None,
            startup_tamper: None,
        }
    }

    pub fn with_metrics_path(mut self, path: PathBuf) -> AppState {
        self.metrics_path = Some(path);
        self
    }

    /// The last published chain. Cheap: blocks are shared, not copied.
    pub fn chain(&self) -> ChainState {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    pub fn chain_status(&self) -> Result<(), LedgerError> {
        validate_chain(&self.chain(), &self.authorities)
    }

    /// Create, broadcast, append, persist, publish. Callers hold no lock; the writer
    /// mutex serializes commits so indices never collide.
    pub(crate) async fn commit(&self, content: &BlockContent) -> Result<PredictionBlock, CommitError> {
        let mut writer = self.writer.lock().await;
        let chain = self.chain();
        let block = create_block(content, &chain, &writer.keys, &self.authorities, now_unix())
            .map_err(CommitError::Ledger)?;
        let report = broadcast(&mut writer.peers, "api", &block);
        let result = if report.unanimous() {
            append(&chain, block.clone(), &self.authorities).map_err(CommitError::Ledger)
        } else {
            Err(CommitError::Rejected(report))
        };
        let next = match result {
            Ok(next) => next,
            Err(e) => {
                writer.peers = spawn_network_from(writer.peer_count, self.authorities.clone(), &chain);
                return Err(e);
            }
        };
        if let Some(path) = &self.chain_path {
            if let Err(e) = persist_path(&next, path) {
                writer.peers = spawn_network_from(writer.peer_count, self.authorities.clone(), &chain);
                return Err(CommitError::Persist(e));
            }
        }
        *self.snapshot.write().expect("snapshot lock poisoned") = next;
        Ok(block)
    }

    /// Writes the current chain back to disk unless it was loaded in a tampered state.
    pub async fn flush(&self) -> Result<(), LedgerError> {
        let _writer = self.writer.lock().await;
        match (&self.chain_path, &self.startup_tamper) {
            (Some(path), None) => persist_path(&self.chain(), path),
            _ => Ok(()),
        }
    }
}
