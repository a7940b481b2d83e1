use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two objects that must agree on node count do not.
    DimensionMismatch { expected: usize, found: usize },
    /// A parameter lies outside its admissible range.
    OutOfRange { name: &'static str, value: f64 },
    /// `p` or `zeta` sits on a boundary where the likelihood is singular.
    SingularParameter { name: &'static str, value: f64 },
    /// A label entry other than -1 or +1.
    InvalidLabel { index: usize, value: i64 },
    /// A graph entry outside {-1, 0, +1} or a self loop.
    InvalidEdge { i: usize, j: usize, value: i64 },
    /// Exhaustive routines refuse inputs beyond this many nodes.
    TooLarge { n: usize, max: usize },
    /// An operation that needs at least one graph got none.
    EmptyInput,
    /// The inputs make the requested quantity undefined.
    Infeasible(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected} nodes, found {found}")
            }
            Error::OutOfRange { name, value } => write!(f, "parameter {name} = {value} is out of range"),
            Error::SingularParameter { name, value } => {
                write!(f, "parameter {name} = {value} makes the likelihood singular")
            }
            Error::InvalidLabel { index, value } => {
                write!(f, "label {index} is {value}, expected -1 or +1")
            }
            Error::InvalidEdge { i, j, value } => {
                write!(f, "edge ({i}, {j}) has value {value}, expected -1, 0 or +1 off the diagonal")
            }
            Error::TooLarge { n, max } => write!(f, "n = {n} exceeds the exhaustive limit of {max}"),
            Error::EmptyInput => f.write_str("empty input"),
            Error::Infeasible(why) => write!(f, "infeasible: {why}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_range(name: &'static str, value: f64, ok: bool) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value })
    }
}
