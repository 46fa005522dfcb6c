use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Builds a directory under a temporary sibling name and renames it into place
/// once `fill` succeeds, so `target` never holds a partial result. `target`
/// must not exist (an empty directory is accepted and replaced).
pub fn create_dir_atomically<T>(target: &Path, fill: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    if target.exists() {
        let empty = target.is_dir() && std::fs::read_dir(target)?.next().is_none();
        if !empty {
            bail!("output directory {} already exists", target.display());
        }
        std::fs::remove_dir(target)?;
    }
    let name = target
        .file_name()
        .with_context(|| format!("output directory {} has no name", target.display()))?;
    let parent = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
    let staging = parent.join(format!(".{}.partial-{}", name.to_string_lossy(), std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir(&staging).with_context(|| format!("creating {}", staging.display()))?;
    match fill(&staging) {
        Ok(v) => {
            std::fs::rename(&staging, target)
                .with_context(|| format!("moving results to {}", target.display()))?;
            Ok(v)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

/// Writes `contents`, creating parent directories.
/// Creates the parent directory of `path` if it is missing.
pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display())),
        _ => Ok(()),
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commits_only_on_success() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        let err = create_dir_atomically(&target, |p| -> Result<()> {
            std::fs::write(p.join("a"), "x")?;
            bail!("boom")
        });
        assert!(err.is_err());
        assert!(!target.exists());
        create_dir_atomically(&target, |p| write_file(&p.join("sub/a"), "x")).unwrap();
        assert_eq!(std::fs::read_to_string(target.join("sub/a")).unwrap(), "x");
        assert!(create_dir_atomically(&target, |_| Ok(())).is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
