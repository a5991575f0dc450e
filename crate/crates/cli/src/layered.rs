use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{usage, Failure, Run};

/// The `--config` file: one TOML table per subcommand.
pub(crate) struct ConfigFile {
    tables: toml::Table,
    origin: Option<String>,
}

impl ConfigFile {
    pub(crate) fn load(path: Option<&Path>, run: &mut Run) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self {
                tables: toml::Table::new(),
                origin: None,
            });
        };
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        let tables: toml::Table = text
            .parse()
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        run.config_file(path);
        Ok(Self {
            tables,
            origin: Some(path.display().to_string()),
        })
    }

    /// Fills every setting the command line left unset from the command's
    /// table. Unknown keys in the table are usage errors.
    pub(crate) fn merge<T: Serialize + DeserializeOwned>(&self, command: &str, args: T) -> Result<T, Failure> {
        let origin = self.origin.as_deref().unwrap_or("config");
        let section = match self.tables.get(command) {
            None => return Ok(args),
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(usage(format!("{origin}: [{command}] must be a table"))),
        };
        let mut merged =
            toml::Table::try_from(&args).map_err(|e| usage(format!("{command} settings: {e}")))?;
        for (k, v) in section {
            merged.entry(k.clone()).or_insert_with(|| v.clone());
        }
        merged
            .try_into()
            .map_err(|e| usage(format!("{origin} [{command}]: {e}")))
    }
}

pub(crate) fn is_false(b: &bool) -> bool {
    !*b
}
