//! Matrix values and the Frobenius-space block operations used throughout.

mod dense;
mod gram;

pub use dense::{DenseMatrix, LuFactors};
pub use gram::{
    diamond_product, frobenius_inner, global_qr, project, BlockFamily, GlobalQrResult, RANK_TOL,
};
