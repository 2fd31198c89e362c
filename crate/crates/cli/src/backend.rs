use stylemt::llm::{load_fixtures, Backend, CopyBestDemo, EchoSource, HttpBackend, Playback};
use stylemt::prompting::{LanguagePair, PromptTemplate};

use crate::config::{BackendConfig, BackendKind};
use crate::CliError;

/// Builds the configured backend. The HTTP backend reads its key from the
/// environment variable named in the config, so a missing key fails here,
/// before any request.
pub fn make_backend(
    cfg: &BackendConfig,
    template: &PromptTemplate,
    langs: &LanguagePair,
) -> Result<Box<dyn Backend>, CliError> {
    Ok(match cfg.kind {
        BackendKind::Echo => Box::new(EchoSource {
            template: template.clone(),
            langs: langs.clone(),
        }),
        BackendKind::Copy => Box::new(CopyBestDemo {
            template: template.clone(),
            langs: langs.clone(),
        }),
        BackendKind::Playback => {
            let path = cfg.fixtures.as_ref().ok_or_else(|| {
                CliError::Config("playback backend needs backend.fixtures".into())
            })?;
            let fixtures = load_fixtures(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Box::new(Playback::new(fixtures))
        }
        BackendKind::Http => Box::new(HttpBackend::from_env(
            cfg.endpoint.clone(),
            &cfg.api_key_env,
            cfg.retry.clone(),
        )?),
    })
}
