//! Backend selection: the deterministic mock or the HTTP clients configured
//! from the environment.

use std::path::Path;
use std::sync::Arc;

use pcib_backends::{BackendConfig, LanguageModel, MockBackend, NliModel, RemoteLlm, RemoteNli};
use pcib_core::signals::{HedgeLexicon, SignalConfig, SignalExtractor};

use crate::cache::config_digest;
use crate::error::{AppError, AppResult, Context};

pub struct Backends {
    pub llm: Arc<dyn LanguageModel>,
    pub nli: Arc<dyn NliModel>,
    /// Model identity folded into cache keys.
    pub model_id: String,
}

impl Backends {
    pub fn mock(seed: u64) -> Self {
        let mock = Arc::new(MockBackend::new(seed));
        let model_id = format!("{}:seed={seed}", mock.model_name());
        Self { llm: mock.clone(), nli: mock, model_id }
    }

    /// `PCIB_BACKEND_*` and `PCIB_NLI_*` environment settings.
    pub fn from_env(max_in_flight: Option<usize>) -> AppResult<Self> {
        let apply = |mut cfg: BackendConfig| {
            if let Some(n) = max_in_flight {
                cfg.max_in_flight = n;
            }
            cfg
        };
        let fail = |e: pcib_backends::BackendError| {
            AppError::backend(format!("backend configuration: {e} (or pass --mock)"))
        };
        let llm = RemoteLlm::new(apply(BackendConfig::llm_from_env().map_err(fail)?)).map_err(fail)?;
        let nli = RemoteNli::new(apply(BackendConfig::nli_from_env().map_err(fail)?)).map_err(fail)?;
        let model_id = llm.model_name().to_string();
        Ok(Self { llm: Arc::new(llm), nli: Arc::new(nli), model_id })
    }

    pub fn select(mock: bool, seed: u64, max_in_flight: Option<usize>) -> AppResult<Self> {
        if mock {
            Ok(Self::mock(seed))
        } else {
            Self::from_env(max_in_flight)
        }
    }
}

/// Signal config and lexicon from optional files, validated.
pub fn load_extractor(config: Option<&Path>, lexicon: Option<&Path>) -> AppResult<(SignalExtractor, String)> {
    let cfg: SignalConfig = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).context(format!("reading {}", p.display()))?;
            serde_json::from_str(&text).context(format!("parsing signal config {}", p.display()))?
        }
        None => SignalConfig::default(),
    };
    let lex = match lexicon {
        Some(p) => HedgeLexicon::load(p).context("loading lexicon")?,
        None => HedgeLexicon::default(),
    };
    let digest = config_digest(&cfg, &lex);
    let extractor = SignalExtractor::new(cfg, lex).context("invalid signal config")?;
    Ok((extractor, digest))
}
