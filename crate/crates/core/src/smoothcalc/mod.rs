//! Charts, expressions, and smooth maps with exact forward-mode derivatives.

pub mod chart;
pub mod expr;
pub mod map;
pub mod randexpr;
pub mod scalar;

pub use chart::{Chart, ChartError, SampleRng};
pub use expr::{parse_expr, Expr, ParseError};
pub use map::{jacobian_t, EvalError, MapError, SmoothFn, SmoothMap};
pub use scalar::{Dual, Real, D1, D2, D3};
