//! Lossless federated singular value decomposition.
//!
//! Users holding column blocks `Xᵢ` of a matrix `X = [X₁, …, X_k]` mask their
//! data as `P·Xᵢ·Qᵢ` with random orthogonal `P` and `Q`. A computation
//! server factorizes the securely aggregated sum, and each user unmasks the
//! result to obtain the shared `U`, `Σ` and its private block `Vᵢᵀ`.

pub mod apps;
pub mod attacks;
pub mod linalg;
pub mod masks;
pub mod protocol;
pub mod secagg;
pub mod storage;
pub mod transport;
