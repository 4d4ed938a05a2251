//! Dispersion expressions: `const:c`, `affine:a,b`, `file:<csv>` and
//! `prior-draw:<seed>`. Constants and affine functions are laid out on the
//! prior's knot grid and checked against its class.

use std::path::PathBuf;
use std::str::FromStr;

use voltrace::prior::{sample_prior, PriorSpec};
use voltrace::DispersionFn;

use crate::error::{usage, CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub enum DispersionExpr {
    Const(f64),
    Affine(f64, f64),
    File(PathBuf),
    PriorDraw(u64),
}

fn number(s: &str, whole: &str) -> CliResult<f64> {
    match s.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => usage(format!("bad number `{s}` in dispersion spec `{whole}`")),
    }
}

impl FromStr for DispersionExpr {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let Some((kind, arg)) = s.split_once(':') else {
            return usage(format!(
                "dispersion spec `{s}` must be const:c, affine:a,b, file:<csv> or prior-draw:<seed>"
            ));
        };
        match kind {
            "const" => Ok(Self::Const(number(arg, s)?)),
            "affine" => match arg.split_once(',') {
                Some((a, b)) => Ok(Self::Affine(number(a, s)?, number(b, s)?)),
                None => usage(format!("affine spec `{s}` needs two numbers a,b")),
            },
            "file" if !arg.is_empty() => Ok(Self::File(PathBuf::from(arg))),
            "prior-draw" => arg
                .trim()
                .parse()
                .map(Self::PriorDraw)
                .map_err(|_| CliError::Usage(format!("bad seed in `{s}`"))),
            _ => usage(format!("unknown dispersion spec `{s}`")),
        }
    }
}

impl DispersionExpr {
    pub fn resolve(&self, prior: &PriorSpec) -> CliResult<DispersionFn> {
        let p = prior.params;
        Ok(match self {
            Self::Const(c) => DispersionFn::constant(*c, prior.m, p)?,
            Self::Affine(a, b) => DispersionFn::affine(*a, *b, prior.m, p)?,
            Self::File(path) => voltrace::io::read_dispersion(path, p)?,
            Self::PriorDraw(seed) => sample_prior(prior, *seed)?,
        })
    }
}

pub fn resolve(spec: &str, prior: &PriorSpec) -> CliResult<DispersionFn> {
    spec.parse::<DispersionExpr>()?.resolve(prior)
}
