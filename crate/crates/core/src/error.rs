use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("malformed stream: {0}")]
    Stream(#[from] StreamError),

    #[error("malformed model file: {0}")]
    ModelFile(#[from] ModelFileError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

/// Failures while parsing an `.smoe` bitstream or a coded block.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported stream version {0}")]
    UnsupportedVersion(u8),
    #[error("stream truncated: {0}")]
    Truncated(&'static str),
    #[error("invalid header field: {0}")]
    InvalidHeader(String),
    #[error("code {code} does not fit in {bits} bits")]
    CodeOutOfRange { code: u32, bits: u8 },
    #[error("coded block does not match header: {0}")]
    BlockMismatch(String),
}

/// Failures while reading `.smae` model files or `.smbk` block packs.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelFileError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported file version {0}")]
    UnsupportedVersion(u8),
    #[error("file length mismatch: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("invalid layer table: {0}")]
    InvalidLayer(String),
}
