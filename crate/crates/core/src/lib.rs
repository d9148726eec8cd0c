//! Learned image codec with separate luminance and chrominance branches.
//!
//! The crate bundles everything the codec needs: a small reverse-mode tensor
//! engine ([`tensor`]), colour conversions and quality metrics ([`color`]),
//! the analysis/synthesis model and its rate-distortion loss ([`model`]),
//! likelihood models plus a range coder ([`entropy`]), a training loop
//! ([`train`]) and the per-channel impulse-response tool ([`impulse`]).

pub mod color;
pub mod entropy;
mod error;
pub mod impulse;
pub mod model;
pub mod par;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

/// Writes `bytes` to a temporary sibling of `path` and renames it into place,
/// so a failed write never leaves a partial file behind.
pub fn write_atomic(path: impl AsRef<std::path::Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}
